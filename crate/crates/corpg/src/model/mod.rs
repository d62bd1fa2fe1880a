//! The paraphrase model: per-sentence transformer encoder, bidirectional
//! graph GRU over the coherence graph, fusion, and a copy-mechanism
//! transformer decoder.

mod checkpoint;
mod decoder;
mod encoder;
mod forward;
mod graph;

pub use checkpoint::{
    checkpoint_bytes, load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, MAGIC,
};
pub use decoder::{decode_sequence, decode_step, DecoderRun, StepOutput};
pub use encoder::{encode_sentences, sinusoid_table, SentenceEncodings};
pub use forward::{
    build_target_sequence, encode_source, forward_teacher_forced, source_encoding_values,
    EncodedSource, ForwardOutput, SourceEncoding, TargetSequence,
};
pub use graph::{bigraph, multi_head_gat, run_gat_stack, run_graph_gru, BigraphRun, GraphRun};

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::{Tape, TensorRef};

/// Which module turns sentence vectors into the fused per-sentence signal.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GraphModule {
    GraphGru,
    Gat,
    None,
}

impl fmt::Display for GraphModule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GraphModule::GraphGru => "graph_gru",
            GraphModule::Gat => "gat",
            GraphModule::None => "none",
        })
    }
}

impl FromStr for GraphModule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "graph_gru" => Ok(GraphModule::GraphGru),
            "gat" => Ok(GraphModule::Gat),
            "none" => Ok(GraphModule::None),
            other => Err(Error::data(format!(
                "unknown graph module {other:?} (expected graph_gru, gat, or none)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub d_model: usize,
    pub heads: usize,
    pub l_enc: usize,
    pub l_dec: usize,
    pub d_ff: usize,
    pub dropout: f64,
    /// Maximum tokens per sentence; longer sentences are truncated.
    pub n_max: usize,
    /// Maximum sentences per document.
    pub max_sentences: usize,
    pub graph_module: GraphModule,
    pub sentence_position: bool,
    pub copy: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            vocab_size: 0,
            d_model: 64,
            heads: 4,
            l_enc: 2,
            l_dec: 2,
            d_ff: 256,
            dropout: 0.1,
            n_max: 64,
            max_sentences: 8,
            graph_module: GraphModule::GraphGru,
            sentence_position: false,
            copy: true,
        }
    }
}

impl ModelConfig {
    pub fn d_u(&self) -> usize {
        self.d_model / self.heads
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("vocab_size", self.vocab_size),
            ("d_model", self.d_model),
            ("heads", self.heads),
            ("l_enc", self.l_enc),
            ("l_dec", self.l_dec),
            ("d_ff", self.d_ff),
            ("n_max", self.n_max),
            ("max_sentences", self.max_sentences),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::contract(format!("{name} must be positive")));
            }
        }
        if self.d_model % self.heads != 0 {
            return Err(Error::contract(format!(
                "d_model {} not divisible by heads {}",
                self.d_model, self.heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::contract(format!("dropout must be in [0,1), got {}", self.dropout)));
        }
        Ok(())
    }
}

// ── named parameter store ────────────────────────────────────────────

#[derive(Debug, Clone)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

/// Ordered, name-indexed parameter tensors. Iteration order is insertion
/// order, which fixes checkpoint layout and gradient-application order.
#[derive(Debug, Clone, Default)]
pub struct ParamSet {
    entries: Vec<ParamEntry>,
    index: HashMap<String, usize>,
}

impl ParamSet {
    pub fn new() -> Self {
        ParamSet::default()
    }

    pub fn insert(&mut self, name: &str, shape: Vec<usize>, data: Vec<f64>) -> Result<()> {
        if self.index.contains_key(name) {
            return Err(Error::contract(format!("duplicate parameter {name:?}")));
        }
        if shape.iter().product::<usize>() != data.len() {
            return Err(Error::Dim { op: "param-insert", lhs: shape, rhs: vec![data.len()] });
        }
        self.index.insert(name.to_string(), self.entries.len());
        self.entries.push(ParamEntry { name: name.to_string(), shape, data });
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&ParamEntry> {
        self.index.get(name).map(|&i| &self.entries[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut ParamEntry> {
        self.index.get(name).map(|&i| &mut self.entries[i])
    }

    pub fn entries(&self) -> impl Iterator<Item = &ParamEntry> {
        self.entries.iter()
    }

    pub fn entries_mut(&mut self) -> impl Iterator<Item = &mut ParamEntry> {
        self.entries.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total_values(&self) -> usize {
        self.entries.iter().map(|e| e.data.len()).sum()
    }

    /// Register every parameter on a tape. With `trainable`, gradients are
    /// collected for all of them.
    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> Result<Bound> {
        let mut map = HashMap::with_capacity(self.entries.len());
        for e in &self.entries {
            let r = tape.leaf_named(&e.name, e.data.clone(), e.shape.clone(), trainable)?;
            map.insert(e.name.clone(), r);
        }
        Ok(Bound { map })
    }
}

/// Tape handles for a bound [`ParamSet`].
pub struct Bound {
    map: HashMap<String, TensorRef>,
}

impl Bound {
    pub fn get(&self, name: &str) -> Result<TensorRef> {
        self.map
            .get(name)
            .copied()
            .ok_or_else(|| Error::contract(format!("unbound parameter {name:?}")))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.map.keys().map(|s| s.as_str())
    }

    /// Assemble a binding from externally created tape leaves, e.g. for
    /// gradient-checking the whole model against caller-owned tensors.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (String, TensorRef)>) -> Self {
        Bound { map: pairs.into_iter().collect() }
    }
}

/// Sequential dropout-site seeding: each call gets a distinct derived seed so
/// a single (seed, train) pair drives every dropout in a forward pass.
pub struct DropoutSeq {
    seed: u64,
    counter: u64,
    p: f64,
    train: bool,
}

impl DropoutSeq {
    pub fn new(seed: u64, p: f64, train: bool) -> Self {
        DropoutSeq { seed, counter: 0, p, train }
    }

    pub fn disabled() -> Self {
        DropoutSeq { seed: 0, counter: 0, p: 0.0, train: false }
    }

    pub fn apply(&mut self, tape: &mut Tape, x: TensorRef) -> Result<TensorRef> {
        let site = self.counter;
        self.counter += 1;
        let derived = self.seed.wrapping_add(site.wrapping_mul(0x9E37_79B9_7F4A_7C15));
        tape.dropout(x, self.p, derived, self.train)
    }
}

// ── initialization ───────────────────────────────────────────────────

fn xavier(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Vec<f64> {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    (0..rows * cols).map(|_| rng.gen_range(-bound..bound)).collect()
}

fn insert_matrix(p: &mut ParamSet, rng: &mut ChaCha8Rng, name: &str, rows: usize, cols: usize) -> Result<()> {
    p.insert(name, vec![rows, cols], xavier(rng, rows, cols))
}

fn insert_layer_norm(p: &mut ParamSet, name: &str, d: usize) -> Result<()> {
    p.insert(&format!("{name}.g"), vec![1, d], vec![1.0; d])?;
    p.insert(&format!("{name}.b"), vec![1, d], vec![0.0; d])
}

fn insert_attention(
    p: &mut ParamSet,
    rng: &mut ChaCha8Rng,
    prefix: &str,
    cfg: &ModelConfig,
) -> Result<()> {
    let (d, du) = (cfg.d_model, cfg.d_u());
    for h in 0..cfg.heads {
        insert_matrix(p, rng, &format!("{prefix}.h{h}.wq"), d, du)?;
        insert_matrix(p, rng, &format!("{prefix}.h{h}.wk"), d, du)?;
        insert_matrix(p, rng, &format!("{prefix}.h{h}.wv"), d, du)?;
    }
    insert_matrix(p, rng, &format!("{prefix}.wo"), cfg.heads * du, d)
}

fn insert_feed_forward(p: &mut ParamSet, rng: &mut ChaCha8Rng, prefix: &str, cfg: &ModelConfig) -> Result<()> {
    insert_matrix(p, rng, &format!("{prefix}.w1"), cfg.d_model, cfg.d_ff)?;
    p.insert(&format!("{prefix}.b1"), vec![1, cfg.d_ff], vec![0.0; cfg.d_ff])?;
    insert_matrix(p, rng, &format!("{prefix}.w2"), cfg.d_ff, cfg.d_model)?;
    p.insert(&format!("{prefix}.b2"), vec![1, cfg.d_model], vec![0.0; cfg.d_model])
}

/// Scaled-uniform initialization of every parameter the configuration calls
/// for: gains 1, biases 0, matrices in ±sqrt(6/(fan_in+fan_out)).
pub fn init_params(cfg: &ModelConfig, seed: u64) -> Result<ParamSet> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = ParamSet::new();
    let d = cfg.d_model;

    insert_matrix(&mut p, &mut rng, "embed.tok", cfg.vocab_size, d)?;

    for i in 0..cfg.l_enc {
        insert_attention(&mut p, &mut rng, &format!("enc{i}.attn"), cfg)?;
        insert_layer_norm(&mut p, &format!("enc{i}.attn.ln"), d)?;
        insert_feed_forward(&mut p, &mut rng, &format!("enc{i}.ff"), cfg)?;
        insert_layer_norm(&mut p, &format!("enc{i}.ff.ln"), d)?;
    }

    if cfg.graph_module != GraphModule::None {
        for dir in ["fwd", "bwd"] {
            let prefix = format!("graph.{dir}");
            insert_attention(&mut p, &mut rng, &prefix, cfg)?;
            if cfg.graph_module == GraphModule::GraphGru {
                insert_matrix(&mut p, &mut rng, &format!("{prefix}.wz"), 2 * d, d)?;
                insert_matrix(&mut p, &mut rng, &format!("{prefix}.wr"), 2 * d, d)?;
                insert_matrix(&mut p, &mut rng, &format!("{prefix}.wm"), 2 * d, d)?;
            }
            insert_layer_norm(&mut p, &format!("{prefix}.ln"), d)?;
        }
    }

    if cfg.sentence_position {
        insert_matrix(&mut p, &mut rng, "sentpos.table", cfg.max_sentences, d)?;
    }

    insert_matrix(&mut p, &mut rng, "fuse.wc", 2 * d, d)?;
    p.insert("fuse.bc", vec![1, d], vec![0.0; d])?;
    insert_layer_norm(&mut p, "fuse.ln", d)?;

    for i in 0..cfg.l_dec {
        insert_attention(&mut p, &mut rng, &format!("dec{i}.self"), cfg)?;
        insert_layer_norm(&mut p, &format!("dec{i}.self.ln"), d)?;
        insert_attention(&mut p, &mut rng, &format!("dec{i}.cross"), cfg)?;
        insert_layer_norm(&mut p, &format!("dec{i}.cross.ln"), d)?;
        insert_feed_forward(&mut p, &mut rng, &format!("dec{i}.ff"), cfg)?;
        insert_layer_norm(&mut p, &format!("dec{i}.ff.ln"), d)?;
    }

    insert_matrix(&mut p, &mut rng, "out.w", d, cfg.vocab_size)?;
    p.insert("out.b", vec![1, cfg.vocab_size], vec![0.0; cfg.vocab_size])?;

    if cfg.copy {
        insert_matrix(&mut p, &mut rng, "copy.wg", 2 * d, 1)?;
        p.insert("copy.bg", vec![1, 1], vec![0.0])?;
    }

    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg() -> ModelConfig {
        ModelConfig {
            vocab_size: 20,
            d_model: 8,
            heads: 2,
            l_enc: 1,
            l_dec: 1,
            d_ff: 16,
            dropout: 0.1,
            n_max: 16,
            max_sentences: 4,
            ..ModelConfig::default()
        }
    }

    #[test]
    fn config_validation() {
        assert!(small_cfg().validate().is_ok());
        let mut bad = small_cfg();
        bad.heads = 3; // 8 % 3 != 0
        assert!(bad.validate().is_err());
        let mut bad = small_cfg();
        bad.vocab_size = 0;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn init_is_deterministic_and_complete() {
        let cfg = small_cfg();
        let a = init_params(&cfg, 7).unwrap();
        let b = init_params(&cfg, 7).unwrap();
        assert_eq!(a.len(), b.len());
        for (x, y) in a.entries().zip(b.entries()) {
            assert_eq!(x.name, y.name);
            assert!(x.data.iter().zip(&y.data).all(|(u, v)| u.to_bits() == v.to_bits()));
        }
        assert!(a.get("embed.tok").is_some());
        assert!(a.get("graph.fwd.wz").is_some());
        assert!(a.get("graph.bwd.wz").is_some());
        assert!(a.get("copy.wg").is_some());
        assert!(a.get("sentpos.table").is_none());
    }

    #[test]
    fn ablation_configs_change_parameter_inventory() {
        let mut cfg = small_cfg();
        cfg.graph_module = GraphModule::None;
        cfg.sentence_position = true;
        cfg.copy = false;
        let p = init_params(&cfg, 0).unwrap();
        assert!(p.get("graph.fwd.h0.wq").is_none());
        assert!(p.get("sentpos.table").is_some());
        assert!(p.get("copy.wg").is_none());

        let mut cfg = small_cfg();
        cfg.graph_module = GraphModule::Gat;
        let p = init_params(&cfg, 0).unwrap();
        assert!(p.get("graph.fwd.h0.wq").is_some());
        assert!(p.get("graph.fwd.wz").is_none()); // no GRU cell in the GAT stack
    }

    #[test]
    fn graph_module_string_roundtrip() {
        for g in [GraphModule::GraphGru, GraphModule::Gat, GraphModule::None] {
            assert_eq!(g.to_string().parse::<GraphModule>().unwrap(), g);
        }
        assert!("bogus".parse::<GraphModule>().is_err());
    }

    #[test]
    fn duplicate_parameter_rejected() {
        let mut p = ParamSet::new();
        p.insert("w", vec![1, 1], vec![0.0]).unwrap();
        assert!(p.insert("w", vec![1, 1], vec![0.0]).is_err());
    }
}
