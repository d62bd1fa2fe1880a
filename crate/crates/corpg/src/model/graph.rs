//! Graph attention over the coherence graph and the graph GRU built on it.
//!
//! Node i attends over its successors {j : adj(i,j) = 1}; queries come from
//! the sentence vectors, keys and values from the previous layer's node
//! states. Sink nodes (no successors) get exactly-zero attention rows. The
//! layer count is not fixed: one layer per sentence, all layers sharing one
//! parameter set per direction.

use crate::coherence::CoherenceGraph;
use crate::error::Result;
use crate::model::{Bound, GraphModule, ModelConfig};
use crate::tensor::{Tape, TensorRef};

fn adjacency_mask(adj: &CoherenceGraph) -> Vec<bool> {
    let n = adj.len();
    let mut mask = vec![false; n * n];
    for i in 0..n {
        for j in 0..n {
            mask[i * n + j] = adj.get(i, j);
        }
    }
    mask
}

/// Single-head graph attention: scores s_ij = (r_i Wq)(g_j Wk)^T over edges,
/// output row i = sum_j alpha_ij (g_j Wv). No scaling; masked softmax zeroes
/// sink rows bitwise.
pub(crate) fn graph_attention_head(
    tape: &mut Tape,
    queries: TensorRef,
    node_states: TensorRef,
    mask: &[bool],
    wq: TensorRef,
    wk: TensorRef,
    wv: TensorRef,
) -> Result<TensorRef> {
    let q = tape.matmul(queries, wq)?;
    let k = tape.matmul(node_states, wk)?;
    let v = tape.matmul(node_states, wv)?;
    let scores = tape.matmul_nt(q, k)?;
    let attn = tape.softmax_rows(scores, Some(mask))?;
    tape.matmul(attn, v)
}

/// Multi-head graph attention: per-head outputs column-concatenated then
/// projected by Wo. All-sink graphs give the zero matrix.
pub fn multi_head_gat(
    tape: &mut Tape,
    queries: TensorRef,
    node_states: TensorRef,
    adj: &CoherenceGraph,
    prefix: &str,
    params: &Bound,
    cfg: &ModelConfig,
) -> Result<TensorRef> {
    let mask = adjacency_mask(adj);
    let mut heads = Vec::with_capacity(cfg.heads);
    for h in 0..cfg.heads {
        let wq = params.get(&format!("{prefix}.h{h}.wq"))?;
        let wk = params.get(&format!("{prefix}.h{h}.wk"))?;
        let wv = params.get(&format!("{prefix}.h{h}.wv"))?;
        heads.push(graph_attention_head(tape, queries, node_states, &mask, wq, wk, wv)?);
    }
    let mut cat = heads[0];
    for &h in &heads[1..] {
        cat = tape.concat_cols(cat, h)?;
    }
    tape.matmul(cat, params.get(&format!("{prefix}.wo"))?)
}

fn graph_gru_layer(
    tape: &mut Tape,
    sent_vecs: TensorRef,
    g_prev: TensorRef,
    adj: &CoherenceGraph,
    prefix: &str,
    params: &Bound,
    cfg: &ModelConfig,
) -> Result<TensorRef> {
    let n = adj.len();
    let d = cfg.d_model;
    let gbar = multi_head_gat(tape, sent_vecs, g_prev, adj, prefix, params, cfg)?;
    let cat = tape.concat_cols(gbar, sent_vecs)?;
    let z = tape.matmul(cat, params.get(&format!("{prefix}.wz"))?)?;
    let z = tape.sigmoid(z)?;
    let r = tape.matmul(cat, params.get(&format!("{prefix}.wr"))?)?;
    let r = tape.sigmoid(r)?;
    let gated = tape.mul(r, gbar)?;
    let cat2 = tape.concat_cols(gated, sent_vecs)?;
    let candidate = tape.matmul(cat2, params.get(&format!("{prefix}.wm"))?)?;
    let candidate = tape.tanh(candidate)?;
    let ones = tape.constant(vec![1.0; n * d], vec![n, d])?;
    let keep = tape.sub(ones, z)?;
    let kept = tape.mul(keep, gbar)?;
    let updated = tape.mul(z, candidate)?;
    let ghat = tape.add(kept, updated)?;
    tape.layer_norm(
        ghat,
        params.get(&format!("{prefix}.ln.g"))?,
        params.get(&format!("{prefix}.ln.b"))?,
        1e-5,
    )
}

/// One directional run plus its instrumented layer count.
pub struct GraphRun {
    pub out: TensorRef,
    pub layers: usize,
}

/// N stacked graph-GRU layers with shared parameters; layer 1 reads a zero
/// hidden state, each later layer the previous layer's output.
pub fn run_graph_gru(
    tape: &mut Tape,
    sent_vecs: TensorRef,
    adj: &CoherenceGraph,
    prefix: &str,
    params: &Bound,
    cfg: &ModelConfig,
) -> Result<GraphRun> {
    let n = adj.len();
    let mut g = tape.zeros(n, cfg.d_model)?;
    let mut layers = 0;
    for _ in 0..n {
        g = graph_gru_layer(tape, sent_vecs, g, adj, prefix, params, cfg)?;
        layers += 1;
    }
    Ok(GraphRun { out: g, layers })
}

/// Ablation stack: the same multi-head graph attention with the GRU cell
/// removed. Layer l attends with queries, keys, and values all drawn from the
/// previous layer's states (layer 1 from the sentence vectors), then
/// layer-norms. Same depth and parameter sharing as the graph GRU.
pub fn run_gat_stack(
    tape: &mut Tape,
    sent_vecs: TensorRef,
    adj: &CoherenceGraph,
    prefix: &str,
    params: &Bound,
    cfg: &ModelConfig,
) -> Result<GraphRun> {
    let n = adj.len();
    let mut x = sent_vecs;
    let mut layers = 0;
    for _ in 0..n {
        let attn = multi_head_gat(tape, x, x, adj, prefix, params, cfg)?;
        x = tape.layer_norm(
            attn,
            params.get(&format!("{prefix}.ln.g"))?,
            params.get(&format!("{prefix}.ln.b"))?,
            1e-5,
        )?;
        layers += 1;
    }
    Ok(GraphRun { out: x, layers })
}

/// Bidirectional output plus both directions' layer counts.
pub struct BigraphRun {
    pub out: TensorRef,
    pub fwd_layers: usize,
    pub bwd_layers: usize,
}

/// Sum of a forward run over the graph and a backward run over its transpose,
/// with disjoint parameters.
pub fn bigraph(
    tape: &mut Tape,
    sent_vecs: TensorRef,
    adj: &CoherenceGraph,
    params: &Bound,
    cfg: &ModelConfig,
) -> Result<BigraphRun> {
    let run = |tape: &mut Tape, adj: &CoherenceGraph, prefix: &str| -> Result<GraphRun> {
        match cfg.graph_module {
            GraphModule::GraphGru => run_graph_gru(tape, sent_vecs, adj, prefix, params, cfg),
            GraphModule::Gat => run_gat_stack(tape, sent_vecs, adj, prefix, params, cfg),
            GraphModule::None => unreachable!("bigraph called with graph module disabled"),
        }
    };
    let fwd = run(tape, adj, "graph.fwd")?;
    let transposed = adj.transposed();
    let bwd = run(tape, &transposed, "graph.bwd")?;
    let out = tape.add(fwd.out, bwd.out)?;
    Ok(BigraphRun { out, fwd_layers: fwd.layers, bwd_layers: bwd.layers })
}
