//! The canned gradient-check suite: every differentiable tensor operation
//! against central finite differences, then the full model loss end to end.
//! Used by the `gradcheck` CLI command and the acceptance tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::coherence::CoherenceGraph;
use crate::error::Result;
use crate::model::{
    build_target_sequence, forward_teacher_forced, init_params, Bound, GraphModule, ModelConfig,
};
use crate::tensor::{grad_check, Activation, GradCheckReport, Tape, TensorRef};
use crate::text::{Document, ParallelDoc, TokenId};

pub const OP_TOLERANCE: f64 = 1e-6;
pub const MODEL_TOLERANCE: f64 = 1e-4;
const STEP: f64 = 1e-5;

fn uniform(seed: u64, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.gen_range(lo..hi)).collect()
}

type Entry = (String, Vec<f64>, Vec<usize>);

fn named(name: &str, data: Vec<f64>, shape: Vec<usize>) -> Entry {
    (name.to_string(), data, shape)
}

fn check<F>(name: &str, params: Vec<Entry>, tol: f64, build: F) -> Result<(String, GradCheckReport)>
where
    F: Fn(&mut Tape, &[TensorRef]) -> Result<TensorRef>,
{
    let report = grad_check(build, &params, STEP, tol)?;
    Ok((name.to_string(), report))
}

fn op_checks() -> Result<Vec<(String, GradCheckReport)>> {
    let mut out = Vec::new();

    out.push(check(
        "matmul",
        vec![
            named("a", uniform(1, 12, -2.0, 2.0), vec![3, 4]),
            named("b", uniform(2, 8, -2.0, 2.0), vec![4, 2]),
        ],
        OP_TOLERANCE,
        |t, p| {
            let c = t.matmul(p[0], p[1])?;
            t.sum_all(c)
        },
    )?);

    out.push(check(
        "matmul_nt",
        vec![
            named("a", uniform(3, 12, -2.0, 2.0), vec![3, 4]),
            named("b", uniform(4, 8, -2.0, 2.0), vec![2, 4]),
        ],
        OP_TOLERANCE,
        |t, p| {
            let c = t.matmul_nt(p[0], p[1])?;
            t.sum_all(c)
        },
    )?);

    out.push(check(
        "elementwise_add_mul_sub",
        vec![
            named("a", uniform(5, 9, -2.0, 2.0), vec![3, 3]),
            named("b", uniform(6, 9, -2.0, 2.0), vec![3, 3]),
        ],
        OP_TOLERANCE,
        |t, p| {
            let s = t.add(p[0], p[1])?;
            let m = t.mul(s, p[0])?;
            let d = t.sub(m, p[1])?;
            t.sum_all(d)
        },
    )?);

    for (label, kind) in [
        ("sigmoid", Activation::Sigmoid),
        ("tanh", Activation::Tanh),
        ("relu", Activation::Relu),
    ] {
        // weighted so the objective is not linear in the activation output
        out.push(check(
            &format!("activation_{label}"),
            vec![named("x", uniform(7, 16, -2.0, 2.0), vec![4, 4])],
            OP_TOLERANCE,
            move |t, p| {
                let y = t.activation(p[0], kind)?;
                let w = t.constant(uniform(8, 16, -2.0, 2.0), vec![4, 4])?;
                let z = t.mul(y, w)?;
                t.sum_all(z)
            },
        )?);
    }

    out.push(check(
        "softmax_rows_masked",
        vec![named("x", uniform(9, 12, -2.0, 2.0), vec![3, 4])],
        OP_TOLERANCE,
        |t, p| {
            let mask = [
                true, true, false, true, //
                false, false, false, false, // fully masked row
                true, true, true, true,
            ];
            let y = t.softmax_rows(p[0], Some(&mask))?;
            let w = t.constant(uniform(10, 12, -2.0, 2.0), vec![3, 4])?;
            let z = t.mul(y, w)?;
            t.sum_all(z)
        },
    )?);

    out.push(check(
        "layer_norm",
        vec![
            named("x", uniform(11, 16, -2.0, 2.0), vec![2, 8]),
            named("g", uniform(12, 8, 0.5, 1.5), vec![1, 8]),
            named("b", uniform(13, 8, -0.5, 0.5), vec![1, 8]),
        ],
        OP_TOLERANCE,
        |t, p| {
            let y = t.layer_norm(p[0], p[1], p[2], 1e-5)?;
            let w = t.constant(uniform(14, 16, -2.0, 2.0), vec![2, 8])?;
            let z = t.mul(y, w)?;
            t.sum_all(z)
        },
    )?);

    out.push(check(
        "embedding_lookup",
        vec![named("table", uniform(15, 12, -2.0, 2.0), vec![6, 2])],
        OP_TOLERANCE,
        |t, p| {
            let e = t.embedding(p[0], &[0, 3, 3, 5, 0])?;
            let w = t.constant(uniform(16, 10, -2.0, 2.0), vec![5, 2])?;
            let z = t.mul(e, w)?;
            t.sum_all(z)
        },
    )?);

    out.push(check(
        "concat_shape_ops",
        vec![
            named("x", uniform(17, 12, -2.0, 2.0), vec![3, 4]),
            named("row", uniform(18, 4, -2.0, 2.0), vec![1, 4]),
            named("col", uniform(19, 3, -2.0, 2.0), vec![3, 1]),
        ],
        OP_TOLERANCE,
        |t, p| {
            let a = t.add_row(p[0], p[1])?;
            let b = t.row_scale(a, p[2])?;
            let c = t.concat_cols(a, b)?;
            let m = t.mean_rows(c)?;
            let r = t.repeat_row(m, 2)?;
            let s = t.slice_rows(c, 0, 2)?;
            let cat = t.concat_rows(&[r, s])?;
            let sc = t.scale(cat, 0.7)?;
            t.sum_all(sc)
        },
    )?);

    out.push(check(
        "dropout_train_mode",
        vec![named("x", uniform(20, 12, -2.0, 2.0), vec![3, 4])],
        OP_TOLERANCE,
        |t, p| {
            let y = t.dropout(p[0], 0.4, 99, true)?;
            t.sum_all(y)
        },
    )?);

    out.push(check(
        "nll_weighted",
        vec![named("dist", vec![0.2, 0.3, 0.5, 0.25, 0.55, 0.2], vec![2, 3])],
        OP_TOLERANCE,
        |t, p| t.nll_weighted(p[0], &[2, 1], &[1.0, 2.5]),
    )?);

    out.push(check(
        "bce_with_logits",
        vec![named("s", uniform(21, 4, -2.0, 2.0), vec![4, 1])],
        OP_TOLERANCE,
        |t, p| t.bce_with_logits(p[0], &[1.0, 0.0, 0.0, 1.0]),
    )?);

    Ok(out)
}

fn toy_parallel_doc() -> ParallelDoc {
    let doc = Document {
        id: "gradcheck".to_string(),
        sentences: vec![vec![6, 7, 8], vec![9, 10, 11]],
    };
    let mut graph = CoherenceGraph::empty(2);
    graph.set_edge(0, 1).unwrap();
    ParallelDoc { source: doc.clone(), target: doc, graph }
}

/// Finite-difference check of the whole training loss (encoder, graph GRU,
/// fusion, copy decoder, weighted NLL) with respect to every parameter.
pub fn full_model_check() -> Result<(String, GradCheckReport)> {
    let cfg = ModelConfig {
        vocab_size: 12,
        d_model: 8,
        heads: 2,
        l_enc: 1,
        l_dec: 1,
        d_ff: 16,
        dropout: 0.0,
        n_max: 8,
        max_sentences: 4,
        graph_module: GraphModule::GraphGru,
        sentence_position: false,
        copy: true,
    };
    let params = init_params(&cfg, 12345)?;
    let entries: Vec<Entry> =
        params.entries().map(|e| (e.name.clone(), e.data.clone(), e.shape.clone())).collect();
    let pdoc = toy_parallel_doc();
    let sep: TokenId = 5;
    let names: Vec<String> = entries.iter().map(|(n, _, _)| n.clone()).collect();

    let report = grad_check(
        move |tape, refs| {
            let bound = Bound::from_pairs(names.iter().cloned().zip(refs.iter().copied()));
            let fwd = forward_teacher_forced(tape, &pdoc, &bound, &cfg, sep, false, 0)?;
            let seq = build_target_sequence(&pdoc.target, sep);
            let targets: Vec<usize> = seq.output.iter().map(|&x| x as usize).collect();
            let weights = vec![1.0; targets.len()];
            tape.nll_weighted(fwd.dist, &targets, &weights)
        },
        &entries,
        STEP,
        MODEL_TOLERANCE,
    )?;
    Ok(("full_model_loss".to_string(), report))
}

/// Every op check plus the end-to-end model check.
pub fn gradient_suite() -> Result<Vec<(String, GradCheckReport)>> {
    let mut all = op_checks()?;
    all.push(full_model_check()?);
    Ok(all)
}
