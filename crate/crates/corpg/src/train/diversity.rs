//! Per-token diversity coefficients: a target token's loss is multiplied by
//! 1 + lambda_N for the smallest n-gram order N at which every target n-gram
//! containing that token is absent from the source's n-gram set. Each token
//! is penalized at most once.
//!
//! N-gram sets are built within sentences; nothing spans a sentence join.

use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::text::{Document, TokenId};

/// Penalty weights per n-gram order; `lambdas[k]` applies to (k+1)-grams.
/// An empty list disables the coefficient (every multiplier is exactly 1).
#[derive(Debug, Clone, PartialEq)]
pub struct DiversityConfig {
    pub lambdas: Vec<f64>,
}

impl DiversityConfig {
    /// The standard setting: lambda_1 = 2, lambda_2 = 1.
    pub fn standard() -> Self {
        DiversityConfig { lambdas: vec![2.0, 1.0] }
    }

    pub fn disabled() -> Self {
        DiversityConfig { lambdas: Vec::new() }
    }

    pub fn max_order(&self) -> usize {
        self.lambdas.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.lambdas.iter().any(|&l| l < 0.0 || !l.is_finite()) {
            return Err(Error::contract(format!(
                "diversity weights must be finite and >= 0, got {:?}",
                self.lambdas
            )));
        }
        Ok(())
    }
}

fn source_ngrams(source: &Document, n: usize) -> HashSet<&[TokenId]> {
    let mut set = HashSet::new();
    for sent in &source.sentences {
        if sent.len() >= n {
            for w in sent.windows(n) {
                set.insert(w);
            }
        }
    }
    set
}

/// All target n-grams (within the token's sentence) that contain the token at
/// `offset` are absent from `grams`? Vacuously true when the sentence is too
/// short to form any such n-gram.
fn all_containing_ngrams_novel(sent: &[TokenId], offset: usize, n: usize, grams: &HashSet<&[TokenId]>) -> bool {
    let lo = (offset + 1).saturating_sub(n);
    let hi = offset.min(sent.len().saturating_sub(n));
    if sent.len() < n {
        return true;
    }
    for start in lo..=hi {
        if grams.contains(&sent[start..start + n]) {
            return false;
        }
    }
    true
}

fn multiplier_for(
    sent: &[TokenId],
    offset: usize,
    sets: &[HashSet<&[TokenId]>],
    cfg: &DiversityConfig,
) -> f64 {
    for (idx, lambda) in cfg.lambdas.iter().enumerate() {
        let n = idx + 1;
        if all_containing_ngrams_novel(sent, offset, n, &sets[idx]) {
            // penalize once: the smallest novel order wins
            return 1.0 + lambda;
        }
    }
    1.0
}

/// Multiplier for the target token at flat position `pos` (counting document
/// tokens only, no boundary markers).
pub fn diversity_multiplier(
    source: &Document,
    target: &Document,
    pos: usize,
    cfg: &DiversityConfig,
) -> Result<f64> {
    cfg.validate()?;
    let mut remaining = pos;
    for sent in &target.sentences {
        if remaining < sent.len() {
            let sets: Vec<HashSet<&[TokenId]>> =
                (1..=cfg.max_order()).map(|n| source_ngrams(source, n)).collect();
            return Ok(multiplier_for(sent, remaining, &sets, cfg));
        }
        remaining -= sent.len();
    }
    Err(Error::Index {
        what: "target position",
        index: pos,
        size: target.flatten().len(),
    })
}

/// Multipliers for every flattened target token, sharing one n-gram set
/// build.
pub fn document_multipliers(source: &Document, target: &Document, cfg: &DiversityConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    let sets: Vec<HashSet<&[TokenId]>> =
        (1..=cfg.max_order()).map(|n| source_ngrams(source, n)).collect();
    let mut out = Vec::new();
    for sent in &target.sentences {
        for offset in 0..sent.len() {
            out.push(multiplier_for(sent, offset, &sets, cfg));
        }
    }
    Ok(out)
}

/// Multipliers aligned to the teacher-forcing output layout: document tokens
/// carry their diversity multiplier, boundary and EOS steps carry 1.
pub fn sequence_multipliers(source: &Document, target: &Document, cfg: &DiversityConfig) -> Result<Vec<f64>> {
    let doc_mults = document_multipliers(source, target, cfg)?;
    let mut out = Vec::with_capacity(doc_mults.len() + target.len());
    let mut it = doc_mults.into_iter();
    for (i, sent) in target.sentences.iter().enumerate() {
        if i > 0 {
            out.push(1.0);
        }
        for _ in 0..sent.len() {
            out.push(it.next().expect("multiplier count matches token count"));
        }
    }
    out.push(1.0); // EOS
    Ok(out)
}
