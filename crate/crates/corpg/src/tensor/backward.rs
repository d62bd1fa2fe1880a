//! Reverse rules: one vector-Jacobian product per recorded op.

use super::raw;
use super::{Activation, Op, Tape, NLL_FLOOR};

impl Tape {
    pub(crate) fn apply_reverse(&mut self, op: &Op) {
        match op {
            Op::MatMul { a, b, out } => {
                let Some(d_out) = self.out_grad(*out) else { return };
                let (m, k) = (self.shape(*a)[0], self.shape(*a)[1]);
                let n = self.shape(*b)[1];
                if self.requires_grad(*a) {
                    // dA = dC · Bᵀ
                    let d_a = raw::matmul_nt(&d_out, self.value(*b), m, n, k);
                    self.accumulate(*a, &d_a);
                }
                if self.requires_grad(*b) {
                    // dB = Aᵀ · dC
                    let d_b = raw::matmul_tn(self.value(*a), &d_out, m, k, n);
                    self.accumulate(*b, &d_b);
                }
            }
            Op::MatMulNT { a, b, out } => {
                let Some(d_out) = self.out_grad(*out) else { return };
                let (m, k) = (self.shape(*a)[0], self.shape(*a)[1]);
                let n = self.shape(*b)[0];
                if self.requires_grad(*a) {
                    // dA = dC · B
                    let d_a = raw::matmul(&d_out, self.value(*b), m, n, k);
                    self.accumulate(*a, &d_a);
                }
                if self.requires_grad(*b) {
                    // dB = dCᵀ · A
                    let d_b = raw::matmul_tn(&d_out, self.value(*a), m, n, k);
                    self.accumulate(*b, &d_b);
                }
            }
            Op::Add { a, b, out } => {
                let Some(d_out) = self.out_grad(*out) else { return };
                self.accumulate(*a, &d_out);
                self.accumulate(*b, &d_out);
            }
            Op::Sub { a, b, out } => {
                let Some(d_out) = self.out_grad(*out) else { return };
                self.accumulate(*a, &d_out);
                let neg: Vec<f64> = d_out.iter().map(|v| -v).collect();
                self.accumulate(*b, &neg);
            }
            Op::Mul { a, b, out } => {
                let Some(d_out) = self.out_grad(*out) else { return };
                if self.requires_grad(*a) {
                    let d_a: Vec<f64> = d_out.iter().zip(self.value(*b)).map(|(d, v)| d * v).collect();
                    self.accumulate(*a, &d_a);
                }
                if self.requires_grad(*b) {
                    let d_b: Vec<f64> = d_out.iter().zip(self.value(*a)).map(|(d, v)| d * v).collect();
                    self.accumulate(*b, &d_b);
                }
            }
            Op::AddRow { a, row, out } => {
                let Some(d_out) = self.out_grad(*out) else { return };
                self.accumulate(*a, &d_out);
                if self.requires_grad(*row) {
                    let d = self.shape(*row)[1];
                    let m = self.shape(*a)[0];
                    let mut d_row = vec![0.0; d];
                    for i in 0..m {
                        for j in 0..d {
                            d_row[j] += d_out[i * d + j];
                        }
                    }
                    self.accumulate(*row, &d_row);
                }
            }
            Op::Scale { x, c, out } => {
                let Some(d_out) = self.out_grad(*out) else { return };
                let d_x: Vec<f64> = d_out.iter().map(|v| v * c).collect();
                self.accumulate(*x, &d_x);
            }
            Op::RowScale { x, col, out } => {
                let Some(d_out) = self.out_grad(*out) else { return };
                let (m, n) = (self.shape(*x)[0], self.shape(*x)[1]);
                if self.requires_grad(*x) {
                    let cv = self.value(*col);
                    let mut d_x = vec![0.0; m * n];
                    for i in 0..m {
                        for j in 0..n {
                            d_x[i * n + j] = d_out[i * n + j] * cv[i];
                        }
                    }
                    self.accumulate(*x, &d_x);
                }
                if self.requires_grad(*col) {
                    let xv = self.value(*x);
                    let mut d_col = vec![0.0; m];
                    for i in 0..m {
                        for j in 0..n {
                            d_col[i] += d_out[i * n + j] * xv[i * n + j];
                        }
                    }
                    self.accumulate(*col, &d_col);
                }
            }
            Op::Activation { x, out, kind } => {
                let Some(d_out) = self.out_grad(*out) else { return };
                let d_x: Vec<f64> = match kind {
                    // σ' = σ(1-σ), tanh' = 1-tanh², relu' = 1{x>0} (0 at x=0)
                    Activation::Sigmoid => d_out
                        .iter()
                        .zip(self.value(*out))
                        .map(|(d, s)| d * s * (1.0 - s))
                        .collect(),
                    Activation::Tanh => d_out
                        .iter()
                        .zip(self.value(*out))
                        .map(|(d, t)| d * (1.0 - t * t))
                        .collect(),
                    Activation::Relu => d_out
                        .iter()
                        .zip(self.value(*x))
                        .map(|(d, v)| if *v > 0.0 { *d } else { 0.0 })
                        .collect(),
                };
                self.accumulate(*x, &d_x);
            }
            Op::SoftmaxRows { x, out, mask } => {
                let Some(d_out) = self.out_grad(*out) else { return };
                let (m, n) = (self.shape(*x)[0], self.shape(*x)[1]);
                let p = self.value(*out);
                let mut d_x = vec![0.0; m * n];
                for i in 0..m {
                    let keep = |j: usize| mask.as_ref().map_or(true, |mk| mk[i * n + j]);
                    let mut dot = 0.0;
                    for j in 0..n {
                        if keep(j) {
                            dot += d_out[i * n + j] * p[i * n + j];
                        }
                    }
                    for j in 0..n {
                        if keep(j) {
                            d_x[i * n + j] = p[i * n + j] * (d_out[i * n + j] - dot);
                        }
                    }
                }
                self.accumulate(*x, &d_x);
            }
            Op::LayerNorm { x, gain, bias, out, eps } => {
                let Some(d_out) = self.out_grad(*out) else { return };
                let (m, d) = (self.shape(*x)[0], self.shape(*x)[1]);
                let xv = self.value(*x).to_vec();
                let g = self.value(*gain).to_vec();
                let mut d_x = vec![0.0; m * d];
                let mut d_g = vec![0.0; d];
                let mut d_b = vec![0.0; d];
                for i in 0..m {
                    let row = &xv[i * d..(i + 1) * d];
                    let mean = row.iter().sum::<f64>() / d as f64;
                    let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
                    let inv = 1.0 / (var + eps).sqrt();
                    let xhat: Vec<f64> = row.iter().map(|v| (v - mean) * inv).collect();
                    let dy = &d_out[i * d..(i + 1) * d];
                    let mut sum_dxhat = 0.0;
                    let mut sum_dxhat_xhat = 0.0;
                    for j in 0..d {
                        d_g[j] += dy[j] * xhat[j];
                        d_b[j] += dy[j];
                        let dxh = dy[j] * g[j];
                        sum_dxhat += dxh;
                        sum_dxhat_xhat += dxh * xhat[j];
                    }
                    let dn = d as f64;
                    for j in 0..d {
                        let dxh = dy[j] * g[j];
                        d_x[i * d + j] = inv * (dxh - sum_dxhat / dn - xhat[j] * sum_dxhat_xhat / dn);
                    }
                }
                self.accumulate(*x, &d_x);
                self.accumulate(*gain, &d_g);
                self.accumulate(*bias, &d_b);
            }
            Op::Embedding { table, out, ids } => {
                let Some(d_out) = self.out_grad(*out) else { return };
                if !self.requires_grad(*table) {
                    return;
                }
                let (v, d) = (self.shape(*table)[0], self.shape(*table)[1]);
                let mut d_t = vec![0.0; v * d];
                for (r, &id) in ids.iter().enumerate() {
                    for j in 0..d {
                        d_t[id * d + j] += d_out[r * d + j];
                    }
                }
                self.accumulate(*table, &d_t);
            }
            Op::ConcatCols { a, b, out } => {
                let Some(d_out) = self.out_grad(*out) else { return };
                let (m, d1) = (self.shape(*a)[0], self.shape(*a)[1]);
                let d2 = self.shape(*b)[1];
                let w = d1 + d2;
                let mut d_a = vec![0.0; m * d1];
                let mut d_b = vec![0.0; m * d2];
                for i in 0..m {
                    d_a[i * d1..(i + 1) * d1].copy_from_slice(&d_out[i * w..i * w + d1]);
                    d_b[i * d2..(i + 1) * d2].copy_from_slice(&d_out[i * w + d1..(i + 1) * w]);
                }
                self.accumulate(*a, &d_a);
                self.accumulate(*b, &d_b);
            }
            Op::ConcatRows { parts, out } => {
                let Some(d_out) = self.out_grad(*out) else { return };
                let d = self.shape(*out)[1];
                let mut offset = 0;
                for &p in parts {
                    let rows = self.shape(p)[0];
                    let slice = d_out[offset..offset + rows * d].to_vec();
                    self.accumulate(p, &slice);
                    offset += rows * d;
                }
            }
            Op::MeanRows { x, out } => {
                let Some(d_out) = self.out_grad(*out) else { return };
                let (m, d) = (self.shape(*x)[0], self.shape(*x)[1]);
                let mut d_x = vec![0.0; m * d];
                for i in 0..m {
                    for j in 0..d {
                        d_x[i * d + j] = d_out[j] / m as f64;
                    }
                }
                self.accumulate(*x, &d_x);
            }
            Op::RepeatRow { x, out, n } => {
                let Some(d_out) = self.out_grad(*out) else { return };
                let d = self.shape(*x)[1];
                let mut d_x = vec![0.0; d];
                for i in 0..*n {
                    for j in 0..d {
                        d_x[j] += d_out[i * d + j];
                    }
                }
                self.accumulate(*x, &d_x);
            }
            Op::SliceRows { x, out, start } => {
                let Some(d_out) = self.out_grad(*out) else { return };
                let (m, d) = (self.shape(*x)[0], self.shape(*x)[1]);
                let len = self.shape(*out)[0];
                let mut d_x = vec![0.0; m * d];
                d_x[start * d..(start + len) * d].copy_from_slice(&d_out);
                self.accumulate(*x, &d_x);
            }
            Op::Dropout { x, out, mask } => {
                let Some(d_out) = self.out_grad(*out) else { return };
                let d_x: Vec<f64> = d_out.iter().zip(mask).map(|(d, m)| d * m).collect();
                self.accumulate(*x, &d_x);
            }
            Op::SumAll { x, out } => {
                let Some(d_out) = self.out_grad(*out) else { return };
                let d_x = vec![d_out[0]; self.nodes[x.0].numel()];
                self.accumulate(*x, &d_x);
            }
            Op::NllWeighted { dist, out, targets, weights } => {
                let Some(d_out) = self.out_grad(*out) else { return };
                let (m, v) = (self.shape(*dist)[0], self.shape(*dist)[1]);
                let dv = self.value(*dist);
                let mut d_d = vec![0.0; m * v];
                for t in 0..m {
                    let p = dv[t * v + targets[t]];
                    if p > NLL_FLOOR {
                        d_d[t * v + targets[t]] = d_out[0] * weights[t] * (-1.0 / p) / m as f64;
                    }
                }
                self.accumulate(*dist, &d_d);
            }
            Op::BceWithLogits { logits, out, labels } => {
                let Some(d_out) = self.out_grad(*out) else { return };
                let m = labels.len();
                let lv = self.value(*logits);
                let d_l: Vec<f64> = lv
                    .iter()
                    .zip(labels)
                    .map(|(s, y)| d_out[0] * (raw::sigmoid(*s) - y) / m as f64)
                    .collect();
                self.accumulate(*logits, &d_l);
            }
        }
    }
}
