//! Sentence-order scoring, coherence graphs, coherence metrics, and the
//! shuffle baseline.
//!
//! The scoring interface is [`CoherenceOracle`]: the probability that
//! sentence `a` coherently precedes sentence `b`. The trainable
//! [`OrderScorer`] is the default implementation; [`FileOracle`] injects
//! externally precomputed pair scores bit-exactly.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tape;
use crate::text::{atomic_write, Document, ScoreMatrix, TokenId};

/// Scores sentence pairs: `score(a, b)` is the probability in [0,1] that `a`
/// coherently precedes `b`. Implementations must be deterministic for a fixed
/// trained state.
pub trait CoherenceOracle: Sync {
    fn score(&self, a: &[TokenId], b: &[TokenId]) -> Result<f64>;
}

/// Fixed-score oracle, mostly for tests and baselines.
#[derive(Debug, Clone, Copy)]
pub struct ConstantOracle(pub f64);

impl CoherenceOracle for ConstantOracle {
    fn score(&self, _a: &[TokenId], _b: &[TokenId]) -> Result<f64> {
        Ok(self.0)
    }
}

// ── coherence graph ──────────────────────────────────────────────────

/// Directed binary adjacency over a document's sentences; edge (i,j) means
/// sentence i can coherently precede sentence j. The diagonal is always zero.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoherenceGraph {
    n: usize,
    adj: Vec<u8>,
}

impl CoherenceGraph {
    pub fn empty(n: usize) -> Self {
        CoherenceGraph { n, adj: vec![0; n * n] }
    }

    pub fn from_rows(rows: &[Vec<u8>]) -> Result<Self> {
        let n = rows.len();
        let mut g = CoherenceGraph::empty(n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::data(format!(
                    "graph row {i} has {} entries, expected {n}",
                    row.len()
                )));
            }
            for (j, &v) in row.iter().enumerate() {
                match (v, i == j) {
                    (0, _) => {}
                    (1, false) => g.adj[i * n + j] = 1,
                    (1, true) => {
                        return Err(Error::data(format!("graph diagonal ({i},{i}) must be 0")))
                    }
                    _ => return Err(Error::data(format!("graph entry ({i},{j}) = {v}, not 0/1"))),
                }
            }
        }
        Ok(g)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.adj[i * self.n + j] == 1
    }

    pub fn set_edge(&mut self, i: usize, j: usize) -> Result<()> {
        if i == j {
            return Err(Error::contract(format!("graph diagonal ({i},{i}) must stay 0")));
        }
        self.adj[i * self.n + j] = 1;
        Ok(())
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().map(|&v| v as usize).sum()
    }

    pub fn out_degree(&self, i: usize) -> usize {
        self.adj[i * self.n..(i + 1) * self.n].iter().map(|&v| v as usize).sum()
    }

    /// A sink has no outgoing edges; its attention rows are zeroed downstream.
    pub fn is_sink(&self, i: usize) -> bool {
        self.out_degree(i) == 0
    }

    /// Nodes with neither incoming nor outgoing edges.
    pub fn isolated_count(&self) -> usize {
        (0..self.n)
            .filter(|&i| (0..self.n).all(|j| !self.get(i, j) && !self.get(j, i)))
            .count()
    }

    pub fn transposed(&self) -> Self {
        let mut t = CoherenceGraph::empty(self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                t.adj[j * self.n + i] = self.adj[i * self.n + j];
            }
        }
        t
    }

    /// Relabel nodes so that node i of the result corresponds to node
    /// `perm[i]` of self, matching a document whose sentence i is the
    /// original sentence `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut g = CoherenceGraph::empty(self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                g.adj[i * self.n + j] = self.adj[perm[i] * self.n + perm[j]];
            }
        }
        g
    }

    pub fn rows(&self) -> Vec<Vec<u8>> {
        (0..self.n)
            .map(|i| self.adj[i * self.n..(i + 1) * self.n].to_vec())
            .collect()
    }
}

/// Threshold oracle scores into a coherence graph: edge (i,j) iff i != j and
/// score(Si, Sj) >= epsilon.
pub fn build_graph(doc: &Document, oracle: &dyn CoherenceOracle, epsilon: f64) -> Result<CoherenceGraph> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::contract(format!("epsilon must be in (0,1), got {epsilon}")));
    }
    let n = doc.len();
    let mut g = CoherenceGraph::empty(n);
    for i in 0..n {
        for j in 0..n {
            if i != j && oracle.score(&doc.sentences[i], &doc.sentences[j])? >= epsilon {
                g.set_edge(i, j)?;
            }
        }
    }
    Ok(g)
}

// ── coherence metrics ────────────────────────────────────────────────

/// COH = fraction of adjacent pairs scoring >= 0.5; COH-p = mean adjacent
/// score. Undefined for single-sentence documents.
pub fn coh_metrics(doc: &Document, oracle: &dyn CoherenceOracle) -> Result<(f64, f64)> {
    let n = doc.len();
    if n < 2 {
        return Err(Error::Metric(format!(
            "coherence needs >= 2 sentences, document {:?} has {n}",
            doc.id
        )));
    }
    let mut hits = 0usize;
    let mut total = 0.0;
    for i in 0..n - 1 {
        let s = oracle.score(&doc.sentences[i], &doc.sentences[i + 1])?;
        if s >= 0.5 {
            hits += 1;
        }
        total += s;
    }
    let pairs = (n - 1) as f64;
    Ok((hits as f64 / pairs, total / pairs))
}

/// Outcome of the shuffle baseline: the best permutation seen, how many
/// shuffles ran, and that permutation's COH (NaN for single-sentence docs).
#[derive(Debug, Clone)]
pub struct ShuffleResult {
    pub doc: Document,
    pub tries: usize,
    pub best_coh: f64,
}

/// Random sentence permutations until COH >= 0.5 or `max_tries` is exhausted;
/// keeps the best-COH permutation seen.
pub fn shuffle_paraphrase(
    doc: &Document,
    oracle: &dyn CoherenceOracle,
    max_tries: usize,
    seed: u64,
) -> Result<ShuffleResult> {
    if max_tries < 1 {
        return Err(Error::contract("max_tries must be >= 1".to_string()));
    }
    if doc.len() < 2 {
        return Ok(ShuffleResult { doc: doc.clone(), tries: 0, best_coh: f64::NAN });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(Document, f64)> = None;
    let mut tries = 0;
    for _ in 0..max_tries {
        tries += 1;
        let mut perm: Vec<usize> = (0..doc.len()).collect();
        perm.shuffle(&mut rng);
        let shuffled = Document {
            id: doc.id.clone(),
            sentences: perm.iter().map(|&i| doc.sentences[i].clone()).collect(),
        };
        let (coh, _) = coh_metrics(&shuffled, oracle)?;
        let improved = best.as_ref().map_or(true, |(_, b)| coh > *b);
        if improved {
            best = Some((shuffled, coh));
        }
        if coh >= 0.5 {
            break;
        }
    }
    let (doc, best_coh) = best.expect("max_tries >= 1 guarantees one candidate");
    Ok(ShuffleResult { doc, tries, best_coh })
}

// ── trainable order scorer ───────────────────────────────────────────

/// Bilinear sentence-order scorer:
/// `score(a,b) = sigmoid(mean_embed(a) · B · mean_embed(b)^T + bias)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OrderScorer {
    pub vocab_size: usize,
    pub dim: usize,
    pub embed: Vec<f64>,   // vocab_size × dim
    pub bilinear: Vec<f64>, // dim × dim
    pub bias: f64,
}

impl OrderScorer {
    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        atomic_write(path, |w| {
            serde_json::to_writer(w, self).map_err(|e| Error::data(e.to_string()))
        })
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        let scorer: OrderScorer = serde_json::from_reader(std::io::BufReader::new(file))
            .map_err(|e| Error::data(format!("bad order-scorer file: {e}")))?;
        if scorer.embed.len() != scorer.vocab_size * scorer.dim
            || scorer.bilinear.len() != scorer.dim * scorer.dim
        {
            return Err(Error::data("order-scorer tensor sizes are inconsistent".to_string()));
        }
        Ok(scorer)
    }
}

/// A trained scorer plus its final accuracy on the training pairs.
#[derive(Debug, Clone)]
pub struct TrainedOrderScorer {
    pub scorer: OrderScorer,
    pub train_accuracy: f64,
}

impl OrderScorer {
    fn mean_embed(&self, sent: &[TokenId]) -> Result<Vec<f64>> {
        if sent.is_empty() {
            return Err(Error::contract("cannot score an empty sentence".to_string()));
        }
        let d = self.dim;
        let mut u = vec![0.0; d];
        for &t in sent {
            let t = t as usize;
            if t >= self.vocab_size {
                return Err(Error::Index { what: "order-scorer token", index: t, size: self.vocab_size });
            }
            for j in 0..d {
                u[j] += self.embed[t * d + j];
            }
        }
        for v in &mut u {
            *v /= sent.len() as f64;
        }
        Ok(u)
    }

    fn logit(&self, a: &[TokenId], b: &[TokenId]) -> Result<f64> {
        let u = self.mean_embed(a)?;
        let v = self.mean_embed(b)?;
        let d = self.dim;
        let mut s = self.bias;
        for i in 0..d {
            if u[i] == 0.0 {
                continue;
            }
            for j in 0..d {
                s += u[i] * self.bilinear[i * d + j] * v[j];
            }
        }
        Ok(s)
    }
}

impl CoherenceOracle for OrderScorer {
    fn score(&self, a: &[TokenId], b: &[TokenId]) -> Result<f64> {
        let s = self.logit(a, b)?;
        Ok(1.0 / (1.0 + (-s).exp()))
    }
}

/// Extract training pairs: each adjacent (Si, Si+1) yields a positive
/// (in-order) and a negative (swapped) example.
fn order_pairs(corpus: &[Document]) -> Vec<(Vec<TokenId>, Vec<TokenId>, f64)> {
    let mut pairs = Vec::new();
    for doc in corpus {
        for w in doc.sentences.windows(2) {
            pairs.push((w[0].clone(), w[1].clone(), 1.0));
            pairs.push((w[1].clone(), w[0].clone(), 0.0));
        }
    }
    pairs
}

/// Fit the bilinear scorer by minibatch gradient descent on binary
/// cross-entropy over in-order/swapped adjacent sentence pairs.
pub fn train_order_scorer(
    corpus: &[Document],
    vocab_size: usize,
    dim: usize,
    epochs: usize,
    lr: f64,
    seed: u64,
) -> Result<TrainedOrderScorer> {
    let pairs = order_pairs(corpus);
    if pairs.is_empty() {
        return Err(Error::InsufficientData(
            "order scorer needs at least one document with >= 2 sentences".to_string(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut embed: Vec<f64> = (0..vocab_size * dim).map(|_| rng.gen_range(-0.1..0.1)).collect();
    let xav = (6.0 / (2.0 * dim as f64)).sqrt();
    let mut bilinear: Vec<f64> = (0..dim * dim).map(|_| rng.gen_range(-xav..xav)).collect();
    let mut bias = 0.0f64;

    let batch = 32;
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    for _ in 0..epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(batch) {
            let mut tape = Tape::new();
            let e = tape.leaf(embed.clone(), vec![vocab_size, dim], true)?;
            let b = tape.leaf(bilinear.clone(), vec![dim, dim], true)?;
            let c = tape.leaf(vec![bias], vec![1, 1], true)?;
            let mut logits = Vec::with_capacity(chunk.len());
            let mut labels = Vec::with_capacity(chunk.len());
            for &pi in chunk {
                let (ref sa, ref sb, y) = pairs[pi];
                let ids_a: Vec<usize> = sa.iter().map(|&t| t as usize).collect();
                let ids_b: Vec<usize> = sb.iter().map(|&t| t as usize).collect();
                let ua = tape.embedding(e, &ids_a)?;
                let ua = tape.mean_rows(ua)?;
                let ub = tape.embedding(e, &ids_b)?;
                let ub = tape.mean_rows(ub)?;
                let ub_proj = tape.matmul(ua, b)?;
                let s = tape.matmul_nt(ub_proj, ub)?;
                let s = tape.add(s, c)?;
                logits.push(s);
                labels.push(y);
            }
            let all = tape.concat_rows(&logits)?;
            let loss = tape.bce_with_logits(all, &labels)?;
            tape.backward(loss)?;

            for (param, r) in [(&mut embed, e), (&mut bilinear, b)] {
                if let Some(g) = tape.grad(r) {
                    for (p, gi) in param.iter_mut().zip(g) {
                        *p -= lr * gi;
                    }
                }
            }
            if let Some(g) = tape.grad(c) {
                bias -= lr * g[0];
            }
        }
    }

    let scorer = OrderScorer { vocab_size, dim, embed, bilinear, bias };
    let mut correct = 0usize;
    for (a, b, y) in &pairs {
        let s = scorer.score(a, b)?;
        if (s >= 0.5) == (*y > 0.5) {
            correct += 1;
        }
    }
    Ok(TrainedOrderScorer { scorer, train_accuracy: correct as f64 / pairs.len() as f64 })
}

// ── file-backed oracle ───────────────────────────────────────────────

/// Oracle backed by precomputed score matrices, joined against a document
/// corpus so scores are keyed by sentence content. Duplicate sentence pairs
/// take the last score seen.
pub struct FileOracle {
    scores: HashMap<(Vec<TokenId>, Vec<TokenId>), f64>,
}

impl FileOracle {
    pub fn from_matrices(matrices: &[ScoreMatrix], docs: &[Document]) -> Result<Self> {
        let by_id: HashMap<&str, &Document> = docs.iter().map(|d| (d.id.as_str(), d)).collect();
        let mut scores = HashMap::new();
        for m in matrices {
            let doc = by_id.get(m.id.as_str()).ok_or_else(|| {
                Error::data(format!("score matrix {:?} has no matching document", m.id))
            })?;
            let n = doc.len();
            if m.scores.len() != n {
                return Err(Error::data(format!(
                    "score matrix {:?} is {}x{} but document has {} sentences",
                    m.id,
                    m.scores.len(),
                    m.scores.len(),
                    n
                )));
            }
            for i in 0..n {
                for j in 0..n {
                    scores.insert(
                        (doc.sentences[i].clone(), doc.sentences[j].clone()),
                        m.scores[i][j],
                    );
                }
            }
        }
        Ok(FileOracle { scores })
    }
}

impl CoherenceOracle for FileOracle {
    fn score(&self, a: &[TokenId], b: &[TokenId]) -> Result<f64> {
        self.scores
            .get(&(a.to_vec(), b.to_vec()))
            .copied()
            .ok_or_else(|| Error::data("no precomputed score for sentence pair".to_string()))
    }
}
