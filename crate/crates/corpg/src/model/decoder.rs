//! Transformer decoder with a copy mechanism. The copy distribution comes
//! from the last layer's cross-attention averaged over heads; a learned
//! scalar gate mixes it with the vocabulary softmax.

use crate::error::{Error, Result};
use crate::model::encoder::{feed_forward, multi_head_attention, residual_norm, sinusoid_table};
use crate::model::{Bound, DropoutSeq, ModelConfig};
use crate::tensor::{Tape, TensorRef};
use crate::text::{TokenId, BOS_ID};

/// Full-sequence decoder output.
pub struct DecoderRun {
    /// T×V final distributions (rows sum to 1).
    pub dist: TensorRef,
    /// T×S cross-attention averaged over heads (last decoder layer).
    pub attn_avg: TensorRef,
    /// T×1 generation gate, present when the copy mechanism is on.
    pub p_gen: Option<TensorRef>,
}

fn causal_mask(t: usize) -> Vec<bool> {
    let mut mask = vec![false; t * t];
    for i in 0..t {
        for j in 0..=i {
            mask[i * t + j] = true;
        }
    }
    mask
}

/// One-hot scatter matrix mapping memory rows to vocabulary columns:
/// row p has a single 1 at column src_ids[p].
fn copy_scatter(tape: &mut Tape, src_ids: &[TokenId], vocab_size: usize) -> Result<TensorRef> {
    let mut data = vec![0.0; src_ids.len() * vocab_size];
    for (p, &id) in src_ids.iter().enumerate() {
        let id = id as usize;
        if id >= vocab_size {
            return Err(Error::Index { what: "source token", index: id, size: vocab_size });
        }
        data[p * vocab_size + id] = 1.0;
    }
    tape.constant(data, vec![src_ids.len(), vocab_size])
}

/// Run the decoder over a full input sequence (teacher-forced prefix or a
/// decode-time prefix). `vocab_mask`, when given, hides vocabulary entries
/// (false = hidden) from the softmax in every row.
pub fn decode_sequence(
    tape: &mut Tape,
    memory: TensorRef,
    src_ids: &[TokenId],
    input_ids: &[TokenId],
    params: &Bound,
    cfg: &ModelConfig,
    drop: &mut DropoutSeq,
    vocab_mask: Option<&[bool]>,
) -> Result<DecoderRun> {
    if input_ids.first() != Some(&BOS_ID) {
        return Err(Error::contract("decoder prefix must start with BOS".to_string()));
    }
    let rows = tape.shape(memory)[0];
    if rows == 0 {
        return Err(Error::contract("decoder memory is empty".to_string()));
    }
    if rows != src_ids.len() {
        return Err(Error::Dim { op: "decode", lhs: vec![rows], rhs: vec![src_ids.len()] });
    }
    let d = cfg.d_model;
    let t = input_ids.len();

    let ids: Vec<usize> = input_ids.iter().map(|&x| x as usize).collect();
    let mut x = tape.embedding(params.get("embed.tok")?, &ids)?;
    x = tape.scale(x, (d as f64).sqrt())?;
    let pos = tape.constant(sinusoid_table(t, d), vec![t, d])?;
    x = tape.add(x, pos)?;
    x = drop.apply(tape, x)?;

    let causal = causal_mask(t);
    let mut last_cross: Vec<TensorRef> = Vec::new();
    for l in 0..cfg.l_dec {
        let self_prefix = format!("dec{l}.self");
        let (sa, _) = multi_head_attention(tape, x, x, Some(&causal), &self_prefix, params, cfg)?;
        x = residual_norm(tape, x, sa, &format!("{self_prefix}.ln"), params, drop)?;

        let cross_prefix = format!("dec{l}.cross");
        let (ca, probs) = multi_head_attention(tape, x, memory, None, &cross_prefix, params, cfg)?;
        if l == cfg.l_dec - 1 {
            last_cross = probs;
        }
        x = residual_norm(tape, x, ca, &format!("{cross_prefix}.ln"), params, drop)?;

        let ff_prefix = format!("dec{l}.ff");
        let ff = feed_forward(tape, x, &ff_prefix, params)?;
        x = residual_norm(tape, x, ff, &format!("{ff_prefix}.ln"), params, drop)?;
    }

    // average cross-attention over heads
    let mut sum = last_cross[0];
    for &p in &last_cross[1..] {
        sum = tape.add(sum, p)?;
    }
    let attn_avg = tape.scale(sum, 1.0 / cfg.heads as f64)?;

    let logits = tape.matmul(x, params.get("out.w")?)?;
    let logits = tape.add_row(logits, params.get("out.b")?)?;
    let expanded_mask: Option<Vec<bool>> = vocab_mask.map(|m| {
        let mut full = Vec::with_capacity(t * m.len());
        for _ in 0..t {
            full.extend_from_slice(m);
        }
        full
    });
    let p_vocab = tape.softmax_rows(logits, expanded_mask.as_deref())?;

    if !cfg.copy {
        return Ok(DecoderRun { dist: p_vocab, attn_avg, p_gen: None });
    }

    let scatter = copy_scatter(tape, src_ids, cfg.vocab_size)?;
    let p_copy = tape.matmul(attn_avg, scatter)?;
    let context = tape.matmul(attn_avg, memory)?;
    let gate_in = tape.concat_cols(x, context)?;
    let gate = tape.matmul(gate_in, params.get("copy.wg")?)?;
    let gate = tape.add_row(gate, params.get("copy.bg")?)?;
    let p_gen = tape.sigmoid(gate)?;
    let ones = tape.constant(vec![1.0; t], vec![t, 1])?;
    let p_copy_w = tape.sub(ones, p_gen)?;
    let gen_part = tape.row_scale(p_vocab, p_gen)?;
    let copy_part = tape.row_scale(p_copy, p_copy_w)?;
    let dist = tape.add(gen_part, copy_part)?;
    Ok(DecoderRun { dist, attn_avg, p_gen: Some(p_gen) })
}

/// The final-position outputs of a single decode step.
#[derive(Debug, Clone)]
pub struct StepOutput {
    pub dist: Vec<f64>,
    pub attn: Vec<f64>,
    pub p_gen: Option<f64>,
}

/// Run the decoder over `prefix` and return the last position's distribution,
/// averaged cross-attention row, and generation gate.
pub fn decode_step(
    tape: &mut Tape,
    memory: TensorRef,
    src_ids: &[TokenId],
    prefix: &[TokenId],
    params: &Bound,
    cfg: &ModelConfig,
    drop: &mut DropoutSeq,
    vocab_mask: Option<&[bool]>,
) -> Result<StepOutput> {
    let run = decode_sequence(tape, memory, src_ids, prefix, params, cfg, drop, vocab_mask)?;
    let t = prefix.len();
    let dist = tape.slice_rows(run.dist, t - 1, 1)?;
    let attn = tape.slice_rows(run.attn_avg, t - 1, 1)?;
    let p_gen = match run.p_gen {
        Some(g) => Some(tape.value(g)[t - 1]),
        None => None,
    };
    Ok(StepOutput {
        dist: tape.value(dist).to_vec(),
        attn: tape.value(attn).to_vec(),
        p_gen,
    })
}
