//! End-to-end forward passes: source encoding (encoder + graph module +
//! fusion) and teacher-forced decoding.

use log::warn;

use crate::coherence::CoherenceGraph;
use crate::error::{Error, Result};
use crate::model::encoder::{encode_sentences, SentenceEncodings};
use crate::model::graph::bigraph;
use crate::model::{decode_sequence, Bound, DecoderRun, DropoutSeq, GraphModule, ModelConfig, ParamSet};
use crate::tensor::{Tape, TensorRef};
use crate::text::{Document, ParallelDoc, TokenId, BOS_ID, EOS_ID};

/// Teacher-forcing layout for a target document: sentences joined by the
/// boundary token, EOS-terminated. `input` is BOS plus all but the last
/// output token, so each input position predicts the matching output token.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TargetSequence {
    pub input: Vec<TokenId>,
    pub output: Vec<TokenId>,
}

pub fn build_target_sequence(target: &Document, sep: TokenId) -> TargetSequence {
    let mut output = Vec::new();
    for (i, sent) in target.sentences.iter().enumerate() {
        if i > 0 {
            output.push(sep);
        }
        output.extend_from_slice(sent);
    }
    output.push(EOS_ID);
    let mut input = Vec::with_capacity(output.len());
    input.push(BOS_ID);
    input.extend_from_slice(&output[..output.len() - 1]);
    TargetSequence { input, output }
}

/// Concatenate each sentence's token rows with that sentence's slot vector,
/// stack all sentences, then linear + ReLU + layer-norm + dropout.
fn fuse(
    tape: &mut Tape,
    enc: &SentenceEncodings,
    slot_rows: &[TensorRef],
    params: &Bound,
    drop: &mut DropoutSeq,
) -> Result<TensorRef> {
    let mut parts = Vec::with_capacity(enc.token_mats.len());
    for (i, &mat) in enc.token_mats.iter().enumerate() {
        let rep = tape.repeat_row(slot_rows[i], enc.lengths[i])?;
        parts.push(tape.concat_cols(mat, rep)?);
    }
    let stacked = tape.concat_rows(&parts)?;
    let lin = tape.matmul(stacked, params.get("fuse.wc")?)?;
    let lin = tape.add_row(lin, params.get("fuse.bc")?)?;
    let act = tape.relu(lin)?;
    let normed = tape.layer_norm(act, params.get("fuse.ln.g")?, params.get("fuse.ln.b")?, 1e-5)?;
    drop.apply(tape, normed)
}

/// Encoder-side result: the decoder memory plus the source ids aligned to its
/// rows and the instrumented graph layer counts.
pub struct EncodedSource {
    pub memory: TensorRef,
    pub src_ids: Vec<TokenId>,
    /// (forward, backward) graph layer counts when the graph module ran.
    pub graph_layers: Option<(usize, usize)>,
}

/// Run encoder + per-config sentence-slot signal + fusion over one source
/// document. Over-long sentences are truncated to `n_max` with a warning.
pub fn encode_source(
    tape: &mut Tape,
    source: &Document,
    graph: &CoherenceGraph,
    params: &Bound,
    cfg: &ModelConfig,
    drop: &mut DropoutSeq,
) -> Result<EncodedSource> {
    let n = source.len();
    if n == 0 || n > cfg.max_sentences {
        return Err(Error::contract(format!(
            "document {:?} has {n} sentences, limit is 1..={}",
            source.id, cfg.max_sentences
        )));
    }
    if graph.len() != n {
        return Err(Error::Dim { op: "encode_source", lhs: vec![n], rhs: vec![graph.len()] });
    }
    let mut sentences: Vec<Vec<TokenId>> = Vec::with_capacity(n);
    for sent in &source.sentences {
        if sent.is_empty() {
            return Err(Error::contract(format!("document {:?} has an empty sentence", source.id)));
        }
        if sent.len() > cfg.n_max {
            warn!(
                "truncating a {}-token sentence in document {:?} to n_max={}",
                sent.len(),
                source.id,
                cfg.n_max
            );
            sentences.push(sent[..cfg.n_max].to_vec());
        } else {
            sentences.push(sent.clone());
        }
    }

    let enc = encode_sentences(tape, &sentences, params, cfg, drop)?;

    let mut graph_layers = None;
    let slot_rows: Vec<TensorRef> = if cfg.sentence_position {
        let table = params.get("sentpos.table")?;
        let ids: Vec<usize> = (0..n).collect();
        let pos = tape.embedding(table, &ids)?;
        (0..n).map(|i| tape.slice_rows(pos, i, 1)).collect::<Result<_>>()?
    } else if cfg.graph_module != GraphModule::None {
        let run = bigraph(tape, enc.sent_vecs, graph, params, cfg)?;
        graph_layers = Some((run.fwd_layers, run.bwd_layers));
        (0..n).map(|i| tape.slice_rows(run.out, i, 1)).collect::<Result<_>>()?
    } else {
        (0..n).map(|_| tape.zeros(1, cfg.d_model)).collect::<Result<_>>()?
    };

    let memory = fuse(tape, &enc, &slot_rows, params, drop)?;
    let src_ids: Vec<TokenId> = sentences.into_iter().flatten().collect();
    Ok(EncodedSource { memory, src_ids, graph_layers })
}

/// Teacher-forced forward pass output.
pub struct ForwardOutput {
    /// T×V distributions, one row per target position.
    pub dist: TensorRef,
    pub target: TargetSequence,
    pub graph_layers: Option<(usize, usize)>,
}

/// Encode the source and decode the full gold target with teacher forcing.
pub fn forward_teacher_forced(
    tape: &mut Tape,
    pdoc: &ParallelDoc,
    params: &Bound,
    cfg: &ModelConfig,
    sep: TokenId,
    train: bool,
    dropout_seed: u64,
) -> Result<ForwardOutput> {
    if pdoc.source.len() != pdoc.target.len() {
        return Err(Error::contract(format!(
            "parallel doc {:?}: source has {} sentences, target {}",
            pdoc.source.id,
            pdoc.source.len(),
            pdoc.target.len()
        )));
    }
    let mut drop = DropoutSeq::new(dropout_seed, cfg.dropout, train);
    let enc = encode_source(tape, &pdoc.source, &pdoc.graph, params, cfg, &mut drop)?;
    let target = build_target_sequence(&pdoc.target, sep);
    let run: DecoderRun = decode_sequence(
        tape,
        enc.memory,
        &enc.src_ids,
        &target.input,
        params,
        cfg,
        &mut drop,
        None,
    )?;
    Ok(ForwardOutput { dist: run.dist, target, graph_layers: enc.graph_layers })
}

/// Source encoding with raw values copied off the tape, for decoding where
/// many short decoder tapes reuse one encoded source.
pub struct SourceEncoding {
    pub memory: Vec<f64>,
    pub rows: usize,
    pub d_model: usize,
    pub src_ids: Vec<TokenId>,
    pub graph_layers: Option<(usize, usize)>,
}

pub fn source_encoding_values(
    source: &Document,
    graph: &CoherenceGraph,
    params: &ParamSet,
    cfg: &ModelConfig,
) -> Result<SourceEncoding> {
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape, false)?;
    let mut drop = DropoutSeq::disabled();
    let enc = encode_source(&mut tape, source, graph, &bound, cfg, &mut drop)?;
    let shape = tape.shape(enc.memory).to_vec();
    Ok(SourceEncoding {
        memory: tape.value(enc.memory).to_vec(),
        rows: shape[0],
        d_model: shape[1],
        src_ids: enc.src_ids,
        graph_layers: enc.graph_layers,
    })
}
