//! Tokenization, vocabulary, document segmentation, and pseudo parallel-corpus
//! construction.

mod corpus;
mod jsonl;
mod tokenize;
mod vocab;

pub use corpus::{
    make_parallel_corpus, make_parallel_corpus_parallel, pseudo_paraphrase, segment_documents,
    RuleNoiser, SentenceNoiser,
};
pub use jsonl::{
    atomic_write, parse_document_line, parse_output_line, parse_parallel_line, parse_scores_line,
    read_documents, read_outputs, read_parallel, read_score_matrices, write_documents,
    write_outputs, write_parallel, OutputLine, ScoreMatrix,
};
pub use tokenize::{detokenize, split_sentences, tokenize};
pub use vocab::{Vocab, BOS_ID, EOS_ID, PAD_ID, UNK_ID};

use crate::coherence::CoherenceGraph;

pub type TokenId = u32;

/// A tokenized document before any vocabulary is applied.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawDocument {
    pub id: String,
    /// Token strings per sentence; every sentence is non-empty.
    pub sentences: Vec<Vec<String>>,
}

/// An ordered list of tokenized sentences under an active vocabulary.
/// Sentences carry no BOS/EOS; consumers add them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub id: String,
    pub sentences: Vec<Vec<TokenId>>,
}

impl Document {
    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    /// All tokens in sentence order, without boundary markers.
    pub fn flatten(&self) -> Vec<TokenId> {
        self.sentences.iter().flatten().copied().collect()
    }
}

impl RawDocument {
    pub fn encode(&self, vocab: &Vocab) -> Document {
        Document {
            id: self.id.clone(),
            sentences: self
                .sentences
                .iter()
                .map(|s| s.iter().map(|t| vocab.encode(t)).collect())
                .collect(),
        }
    }
}

/// A (pseudo-source, original-target) training pair plus the coherence graph
/// over the source sentences. Source and target have equal sentence counts.
#[derive(Debug, Clone)]
pub struct ParallelDoc {
    pub source: Document,
    pub target: Document,
    pub graph: CoherenceGraph,
}
