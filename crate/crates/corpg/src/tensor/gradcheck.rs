//! Central finite-difference gradient checking for arbitrary scalar computations.

use super::{Tape, TensorRef};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub entries_checked: usize,
    /// Parameter name and flat index of the worst entry.
    pub worst: Option<(String, usize)>,
    pub tol: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_err < self.tol
    }
}

/// Compare analytic gradients of a scalar computation against central finite
/// differences over every entry of every parameter.
///
/// `build` must be deterministic: it is re-run once per perturbed entry. The
/// relative error uses an absolute floor of 1, so near-zero gradients are
/// compared absolutely.
pub fn grad_check<F>(
    build: F,
    params: &[(String, Vec<f64>, Vec<usize>)],
    step: f64,
    tol: f64,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[TensorRef]) -> Result<TensorRef>,
{
    if !(1e-6..=1e-3).contains(&step) {
        return Err(Error::contract(format!(
            "grad_check step must be in [1e-6, 1e-3], got {step}"
        )));
    }

    // Analytic pass.
    let mut tape = Tape::new();
    let refs: Vec<TensorRef> = params
        .iter()
        .map(|(name, data, shape)| tape.leaf_named(name, data.clone(), shape.clone(), true))
        .collect::<Result<_>>()?;
    let loss = build(&mut tape, &refs)?;
    let loss_val = tape.scalar(loss)?;
    if !loss_val.is_finite() {
        return Err(Error::numeric(format!("grad_check objective is {loss_val}")));
    }
    tape.backward(loss)?;
    let analytic: Vec<Vec<f64>> = refs
        .iter()
        .zip(params)
        .map(|(r, (_, data, _))| {
            tape.grad(*r).map(|g| g.to_vec()).unwrap_or_else(|| vec![0.0; data.len()])
        })
        .collect();

    let eval = |perturbed: &[(String, Vec<f64>, Vec<usize>)]| -> Result<f64> {
        let mut t = Tape::new();
        let rs: Vec<TensorRef> = perturbed
            .iter()
            .map(|(name, data, shape)| t.leaf_named(name, data.clone(), shape.clone(), false))
            .collect::<Result<_>>()?;
        let y = build(&mut t, &rs)?;
        let v = t.scalar(y)?;
        if !v.is_finite() {
            return Err(Error::numeric(format!("grad_check objective is {v}")));
        }
        Ok(v)
    };

    let mut work: Vec<(String, Vec<f64>, Vec<usize>)> = params.to_vec();
    let mut max_rel_err: f64 = 0.0;
    let mut worst = None;
    let mut entries = 0;
    for (pi, (name, data, _)) in params.iter().enumerate() {
        for i in 0..data.len() {
            let orig = data[i];
            work[pi].1[i] = orig + step;
            let f_plus = eval(&work)?;
            work[pi].1[i] = orig - step;
            let f_minus = eval(&work)?;
            work[pi].1[i] = orig;

            let numeric = (f_plus - f_minus) / (2.0 * step);
            let a = analytic[pi][i];
            let rel = (a - numeric).abs() / 1.0_f64.max(a.abs()).max(numeric.abs());
            if rel > max_rel_err {
                max_rel_err = rel;
                worst = Some((name.clone(), i));
            }
            entries += 1;
        }
    }

    Ok(GradCheckReport {
        max_rel_err,
        entries_checked: entries,
        worst,
        tol,
    })
}
