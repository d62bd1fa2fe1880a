//! Document segmentation and pseudo parallel-corpus construction.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::coherence::{build_graph, CoherenceOracle};
use crate::error::{Error, Result};
use crate::text::{Document, ParallelDoc, TokenId};

/// Split an article's sentences into consecutive non-overlapping chunks of
/// `window`. A trailing chunk keeps >= 2 sentences; a 1-sentence remainder is
/// dropped.
pub fn segment_documents<T: Clone>(sentences: &[T], window: usize) -> Result<Vec<Vec<T>>> {
    if window < 2 {
        return Err(Error::contract(format!("segment window must be >= 2, got {window}")));
    }
    let mut out = Vec::new();
    for chunk in sentences.chunks(window) {
        if chunk.len() >= 2 {
            out.push(chunk.to_vec());
        }
    }
    Ok(out)
}

/// A sentence-to-sentence rewrite used to synthesize pseudo paraphrases. Any
/// transform fits behind this; the default is the rule-based [`RuleNoiser`].
/// Noisers are read-only during use, so they are shareable across threads.
pub trait SentenceNoiser: Sync {
    fn noise(&self, sentence: &[TokenId], rng: &mut ChaCha8Rng) -> Vec<TokenId>;
}

/// Rule-based noiser: synonym substitution from a lexicon, token dropout that
/// never shrinks a sentence below 3 tokens, and adjacent-token swaps.
#[derive(Debug, Clone, Default)]
pub struct RuleNoiser {
    pub p_syn: f64,
    pub p_drop: f64,
    pub p_swap: f64,
    pub lexicon: HashMap<TokenId, TokenId>,
}

impl RuleNoiser {
    pub fn new(p_syn: f64, p_drop: f64, p_swap: f64, lexicon: HashMap<TokenId, TokenId>) -> Result<Self> {
        for (label, p) in [("p_syn", p_syn), ("p_drop", p_drop), ("p_swap", p_swap)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::contract(format!("{label} must be in [0,1], got {p}")));
            }
        }
        Ok(RuleNoiser { p_syn, p_drop, p_swap, lexicon })
    }

    /// The no-op configuration: output always equals input.
    pub fn identity() -> Self {
        RuleNoiser::default()
    }
}

impl SentenceNoiser for RuleNoiser {
    fn noise(&self, sentence: &[TokenId], rng: &mut ChaCha8Rng) -> Vec<TokenId> {
        // 1) synonym substitution per eligible token
        let mut toks: Vec<TokenId> = sentence
            .iter()
            .map(|&t| {
                let fire = rng.gen::<f64>() < self.p_syn;
                match self.lexicon.get(&t) {
                    Some(&syn) if fire => syn,
                    _ => t,
                }
            })
            .collect();

        // 2) token dropout, never below 3 tokens
        let n = toks.len();
        let mut kept: Vec<TokenId> = Vec::with_capacity(n);
        for (idx, &t) in toks.iter().enumerate() {
            let remaining = n - idx;
            let fire = rng.gen::<f64>() < self.p_drop;
            let can_drop = kept.len() + remaining - 1 >= 3;
            if fire && can_drop {
                continue;
            }
            kept.push(t);
        }
        toks = kept;

        // 3) adjacent swaps, left to right
        if toks.len() >= 2 {
            for i in 0..toks.len() - 1 {
                if rng.gen::<f64>() < self.p_swap {
                    toks.swap(i, i + 1);
                }
            }
        }
        toks
    }
}

/// Noise every sentence of a document; sentence count and order are unchanged
/// and the result is deterministic given the seed.
pub fn pseudo_paraphrase(doc: &Document, noiser: &dyn SentenceNoiser, seed: u64) -> Document {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Document {
        id: doc.id.clone(),
        sentences: doc.sentences.iter().map(|s| noiser.noise(s, &mut rng)).collect(),
    }
}

/// Build the training corpus: per document, source = noised copy, target =
/// original, graph = coherence graph over the source sentences. Per-document
/// seeds are derived as seed + index.
pub fn make_parallel_corpus(
    docs: &[Document],
    noiser: &dyn SentenceNoiser,
    oracle: &dyn CoherenceOracle,
    epsilon: f64,
    seed: u64,
) -> Result<Vec<ParallelDoc>> {
    docs.iter()
        .enumerate()
        .map(|(i, doc)| {
            let source = pseudo_paraphrase(doc, noiser, seed.wrapping_add(i as u64));
            let graph = build_graph(&source, oracle, epsilon)?;
            Ok(ParallelDoc { source, target: doc.clone(), graph })
        })
        .collect()
}

/// Same result as [`make_parallel_corpus`] for any `jobs` value: per-document
/// seeds depend only on the document index, so chunked workers produce the
/// identical corpus.
pub fn make_parallel_corpus_parallel(
    docs: &[Document],
    noiser: &dyn SentenceNoiser,
    oracle: &dyn CoherenceOracle,
    epsilon: f64,
    seed: u64,
    jobs: usize,
) -> Result<Vec<ParallelDoc>> {
    if jobs <= 1 || docs.len() <= 1 {
        return make_parallel_corpus(docs, noiser, oracle, epsilon, seed);
    }
    let chunk_size = docs.len().div_ceil(jobs);
    let chunk_results: Vec<Result<Vec<ParallelDoc>>> = std::thread::scope(|scope| {
        let handles: Vec<_> = docs
            .chunks(chunk_size)
            .enumerate()
            .map(|(chunk_idx, chunk)| {
                let base = chunk_idx * chunk_size;
                scope.spawn(move || {
                    chunk
                        .iter()
                        .enumerate()
                        .map(|(i, doc)| {
                            let doc_seed = seed.wrapping_add((base + i) as u64);
                            let source = pseudo_paraphrase(doc, noiser, doc_seed);
                            let graph = build_graph(&source, oracle, epsilon)?;
                            Ok(ParallelDoc { source, target: doc.clone(), graph })
                        })
                        .collect::<Result<Vec<_>>>()
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("noiser worker panicked")).collect()
    });
    let mut out = Vec::with_capacity(docs.len());
    for chunk in chunk_results {
        out.extend(chunk?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coherence::ConstantOracle;
    use proptest::prelude::*;

    fn doc(id: &str, sents: &[&[TokenId]]) -> Document {
        Document {
            id: id.to_string(),
            sentences: sents.iter().map(|s| s.to_vec()).collect(),
        }
    }

    #[test]
    fn segment_sizes() {
        let sents: Vec<u32> = (0..12).collect();
        let chunks = segment_documents(&sents, 5).unwrap();
        let sizes: Vec<usize> = chunks.iter().map(|c| c.len()).collect();
        assert_eq!(sizes, vec![5, 5, 2]);

        let sents: Vec<u32> = (0..5).collect();
        assert_eq!(segment_documents(&sents, 5).unwrap().len(), 1);

        let sents: Vec<u32> = (0..6).collect();
        let chunks = segment_documents(&sents, 5).unwrap();
        assert_eq!(chunks.len(), 1); // 1-sentence remainder dropped
        assert_eq!(chunks[0].len(), 5);
    }

    #[test]
    fn segment_rejects_window_below_two() {
        assert!(segment_documents(&[1, 2, 3], 1).is_err());
    }

    proptest! {
        #[test]
        fn segment_preserves_sentences_minus_at_most_one(len in 0usize..40, window in 2usize..8) {
            let sents: Vec<usize> = (0..len).collect();
            let chunks = segment_documents(&sents, window).unwrap();
            let kept: Vec<usize> = chunks.into_iter().flatten().collect();
            prop_assert!(len - kept.len() <= 1);
            prop_assert_eq!(&sents[..kept.len()], &kept[..]);
        }
    }

    #[test]
    fn zero_probability_noiser_is_identity() {
        let d = doc("d", &[&[4, 5, 6, 7], &[8, 9, 10]]);
        let out = pseudo_paraphrase(&d, &RuleNoiser::identity(), 7);
        assert_eq!(out, d);
    }

    #[test]
    fn synonym_substitution_forced() {
        let lexicon: HashMap<TokenId, TokenId> = [(5, 99)].into_iter().collect();
        let noiser = RuleNoiser::new(1.0, 0.0, 0.0, lexicon).unwrap();
        let d = doc("d", &[&[4, 5, 6]]); // "the cat sat" with cat -> feline
        let out = pseudo_paraphrase(&d, &noiser, 0);
        assert_eq!(out.sentences[0], vec![4, 99, 6]);
    }

    #[test]
    fn same_seed_gives_identical_output() {
        let lexicon: HashMap<TokenId, TokenId> = [(5, 99), (6, 98)].into_iter().collect();
        let noiser = RuleNoiser::new(0.5, 0.3, 0.4, lexicon).unwrap();
        let d = doc("d", &[&[4, 5, 6, 7, 8, 9], &[5, 6, 7, 8]]);
        let a = pseudo_paraphrase(&d, &noiser, 42);
        let b = pseudo_paraphrase(&d, &noiser, 42);
        assert_eq!(a, b);
    }

    #[test]
    fn dropout_never_goes_below_three_tokens() {
        let noiser = RuleNoiser::new(0.0, 1.0, 0.0, HashMap::new()).unwrap();
        let d = doc("d", &[&[4, 5, 6, 7, 8, 9, 10], &[4, 5], &[4]]);
        let out = pseudo_paraphrase(&d, &noiser, 3);
        assert_eq!(out.sentences[0].len(), 3);
        assert_eq!(out.sentences[1], vec![4, 5]); // already below 3: untouched
        assert_eq!(out.sentences[2], vec![4]);
        assert_eq!(out.len(), d.len());
    }

    proptest! {
        #[test]
        fn noiser_preserves_sentence_count_and_nonemptiness(
            seed in 0u64..500,
            p_syn in 0.0f64..1.0,
            p_drop in 0.0f64..1.0,
            p_swap in 0.0f64..1.0,
        ) {
            let noiser = RuleNoiser::new(p_syn, p_drop, p_swap,
                [(4, 20), (5, 21)].into_iter().collect()).unwrap();
            let d = doc("d", &[&[4, 5, 6, 7, 8], &[9, 10], &[4], &[5, 6, 7, 8, 9, 10, 11]]);
            let out = pseudo_paraphrase(&d, &noiser, seed);
            prop_assert_eq!(out.len(), d.len());
            prop_assert!(out.sentences.iter().all(|s| !s.is_empty()));
        }
    }

    #[test]
    fn parallel_corpus_identity_noiser() {
        let docs = vec![doc("a", &[&[4, 5, 6], &[7, 8, 9]]), doc("b", &[&[5, 6, 7], &[8, 9, 10]])];
        let oracle = ConstantOracle(1.0);
        let corpus =
            make_parallel_corpus(&docs, &RuleNoiser::identity(), &oracle, 0.5, 0).unwrap();
        assert_eq!(corpus.len(), docs.len());
        for (pd, d) in corpus.iter().zip(&docs) {
            assert_eq!(pd.source, *d);
            assert_eq!(pd.target, *d);
            // all-coherent oracle at eps 0.5: every off-diagonal edge present
            let n = pd.graph.len();
            for i in 0..n {
                for j in 0..n {
                    assert_eq!(pd.graph.get(i, j), i != j);
                }
            }
        }
    }
}
