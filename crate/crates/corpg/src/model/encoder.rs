//! Per-sentence transformer encoder. Sentences are encoded independently with
//! intra-sentence sinusoidal positions only; nothing encodes where a sentence
//! sits in the document.

use crate::error::Result;
use crate::model::{Bound, DropoutSeq, ModelConfig};
use crate::tensor::{Tape, TensorRef};
use crate::text::TokenId;

/// Standard sinusoidal position table, rows 0..n.
pub fn sinusoid_table(n: usize, d: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * d];
    for pos in 0..n {
        for i in 0..d {
            let exponent = (2 * (i / 2)) as f64 / d as f64;
            let angle = pos as f64 / 10000f64.powf(exponent);
            out[pos * d + i] = if i % 2 == 0 { angle.sin() } else { angle.cos() };
        }
    }
    out
}

/// Multi-head scaled dot-product attention with per-head projection matrices
/// under `prefix`. Returns the projected output and each head's attention
/// probabilities.
pub(crate) fn multi_head_attention(
    tape: &mut Tape,
    queries: TensorRef,
    keys_values: TensorRef,
    mask: Option<&[bool]>,
    prefix: &str,
    params: &Bound,
    cfg: &ModelConfig,
) -> Result<(TensorRef, Vec<TensorRef>)> {
    let inv_sqrt = 1.0 / (cfg.d_u() as f64).sqrt();
    let mut heads = Vec::with_capacity(cfg.heads);
    let mut probs = Vec::with_capacity(cfg.heads);
    for h in 0..cfg.heads {
        let wq = params.get(&format!("{prefix}.h{h}.wq"))?;
        let wk = params.get(&format!("{prefix}.h{h}.wk"))?;
        let wv = params.get(&format!("{prefix}.h{h}.wv"))?;
        let q = tape.matmul(queries, wq)?;
        let k = tape.matmul(keys_values, wk)?;
        let v = tape.matmul(keys_values, wv)?;
        let scores = tape.matmul_nt(q, k)?;
        let scaled = tape.scale(scores, inv_sqrt)?;
        let attn = tape.softmax_rows(scaled, mask)?;
        let ctx = tape.matmul(attn, v)?;
        heads.push(ctx);
        probs.push(attn);
    }
    let mut cat = heads[0];
    for &h in &heads[1..] {
        cat = tape.concat_cols(cat, h)?;
    }
    let out = tape.matmul(cat, params.get(&format!("{prefix}.wo"))?)?;
    Ok((out, probs))
}

/// Residual + layer-norm transformer sublayer wiring shared by encoder and
/// decoder: x = LN(x + dropout(sublayer_out)).
pub(crate) fn residual_norm(
    tape: &mut Tape,
    x: TensorRef,
    sub: TensorRef,
    ln_prefix: &str,
    params: &Bound,
    drop: &mut DropoutSeq,
) -> Result<TensorRef> {
    let dropped = drop.apply(tape, sub)?;
    let sum = tape.add(x, dropped)?;
    tape.layer_norm(
        sum,
        params.get(&format!("{ln_prefix}.g"))?,
        params.get(&format!("{ln_prefix}.b"))?,
        1e-5,
    )
}

pub(crate) fn feed_forward(
    tape: &mut Tape,
    x: TensorRef,
    prefix: &str,
    params: &Bound,
) -> Result<TensorRef> {
    let h = tape.matmul(x, params.get(&format!("{prefix}.w1"))?)?;
    let h = tape.add_row(h, params.get(&format!("{prefix}.b1"))?)?;
    let h = tape.relu(h)?;
    let h = tape.matmul(h, params.get(&format!("{prefix}.w2"))?)?;
    tape.add_row(h, params.get(&format!("{prefix}.b2"))?)
}

/// Token matrices and mean-pooled sentence vectors for one document.
pub struct SentenceEncodings {
    /// Per sentence: n_i × d_model token representations.
    pub token_mats: Vec<TensorRef>,
    /// N × d_model matrix of mean-pooled sentence vectors.
    pub sent_vecs: TensorRef,
    pub lengths: Vec<usize>,
}

/// Encode each sentence independently: embed, scale by sqrt(d_model), add
/// intra-sentence sinusoidal positions, then l_enc self-attention layers.
pub fn encode_sentences(
    tape: &mut Tape,
    sentences: &[Vec<TokenId>],
    params: &Bound,
    cfg: &ModelConfig,
    drop: &mut DropoutSeq,
) -> Result<SentenceEncodings> {
    let d = cfg.d_model;
    let embed = params.get("embed.tok")?;
    let mut token_mats = Vec::with_capacity(sentences.len());
    let mut lengths = Vec::with_capacity(sentences.len());
    let mut means = Vec::with_capacity(sentences.len());
    for sent in sentences {
        let n = sent.len();
        let ids: Vec<usize> = sent.iter().map(|&t| t as usize).collect();
        let mut x = tape.embedding(embed, &ids)?;
        x = tape.scale(x, (d as f64).sqrt())?;
        let pos = tape.constant(sinusoid_table(n, d), vec![n, d])?;
        x = tape.add(x, pos)?;
        x = drop.apply(tape, x)?;
        for l in 0..cfg.l_enc {
            let attn_prefix = format!("enc{l}.attn");
            let (attn, _) = multi_head_attention(tape, x, x, None, &attn_prefix, params, cfg)?;
            x = residual_norm(tape, x, attn, &format!("{attn_prefix}.ln"), params, drop)?;
            let ff_prefix = format!("enc{l}.ff");
            let ff = feed_forward(tape, x, &ff_prefix, params)?;
            x = residual_norm(tape, x, ff, &format!("{ff_prefix}.ln"), params, drop)?;
        }
        means.push(tape.mean_rows(x)?);
        token_mats.push(x);
        lengths.push(n);
    }
    let sent_vecs = tape.concat_rows(&means)?;
    Ok(SentenceEncodings { token_mats, sent_vecs, lengths })
}
