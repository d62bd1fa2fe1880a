//! Document-level diversity metrics: self-BLEU, self-WER, self-TER, plus the
//! per-corpus evaluation report. Coherence columns come from the
//! [`crate::coherence`] oracle.
//!
//! All self-* metrics compare the flattened token streams of a document and
//! its paraphrase; sentence boundaries contribute no n-grams or edits.

use std::collections::HashMap;
use std::io::Write;

use crate::coherence::{coh_metrics, CoherenceOracle};
use crate::error::{Error, Result};
use crate::text::{Document, TokenId};

const BLEU_MAX_N: usize = 4;

fn ngram_counts(tokens: &[TokenId], n: usize) -> HashMap<&[TokenId], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

/// BLEU in [0,100]: geometric mean of clipped 1..4-gram precisions times the
/// brevity penalty. Any zero precision gives 0 (no smoothing).
pub fn bleu(candidate: &[TokenId], reference: &[TokenId]) -> Result<f64> {
    if reference.is_empty() {
        return Err(Error::Metric("bleu needs a non-empty reference".to_string()));
    }
    if candidate.is_empty() {
        return Ok(0.0);
    }
    let mut log_sum = 0.0;
    for n in 1..=BLEU_MAX_N {
        let cand = ngram_counts(candidate, n);
        let total: usize = cand.values().sum();
        if total == 0 {
            return Ok(0.0);
        }
        let refc = ngram_counts(reference, n);
        let matched: usize = cand
            .iter()
            .map(|(gram, &c)| c.min(refc.get(gram).copied().unwrap_or(0)))
            .sum();
        if matched == 0 {
            return Ok(0.0);
        }
        log_sum += (matched as f64 / total as f64).ln() / BLEU_MAX_N as f64;
    }
    let c = candidate.len() as f64;
    let r = reference.len() as f64;
    let bp = if c > r { 1.0 } else { (1.0 - r / c).exp() };
    Ok(100.0 * bp * log_sum.exp())
}

/// Word-level Levenshtein distance with unit substitution/insertion/deletion
/// costs.
pub fn levenshtein(a: &[TokenId], b: &[TokenId]) -> usize {
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }
    let n = b.len();
    let mut prev: Vec<usize> = (0..=n).collect();
    let mut curr = vec![0usize; n + 1];
    for (i, &ai) in a.iter().enumerate() {
        curr[0] = i + 1;
        for (j, &bj) in b.iter().enumerate() {
            let cost = usize::from(ai != bj);
            curr[j + 1] = (prev[j] + cost).min(prev[j + 1] + 1).min(curr[j] + 1);
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    prev[n]
}

/// Levenshtein distance divided by the reference length.
pub fn wer(hypothesis: &[TokenId], reference: &[TokenId]) -> Result<f64> {
    if reference.is_empty() {
        return Err(Error::Metric("wer needs a non-empty reference".to_string()));
    }
    Ok(levenshtein(hypothesis, reference) as f64 / reference.len() as f64)
}

/// Move the block `[start, start+len)` of `seq` to insertion index `dest` in
/// the block-free remainder.
fn apply_shift(seq: &[TokenId], start: usize, len: usize, dest: usize) -> Vec<TokenId> {
    let mut rest: Vec<TokenId> = Vec::with_capacity(seq.len() - len);
    rest.extend_from_slice(&seq[..start]);
    rest.extend_from_slice(&seq[start + len..]);
    let mut out = Vec::with_capacity(seq.len());
    out.extend_from_slice(&rest[..dest]);
    out.extend_from_slice(&seq[start..start + len]);
    out.extend_from_slice(&rest[dest..]);
    out
}

/// The single block shift that most reduces Levenshtein distance, or None if
/// no shift reduces it. Ties go to the leftmost then shortest block, then the
/// smallest destination.
fn best_shift(hyp: &[TokenId], reference: &[TokenId], base: usize) -> Option<(Vec<TokenId>, usize)> {
    let n = hyp.len();
    let mut best: Option<(usize, Vec<TokenId>)> = None;
    for start in 0..n {
        for len in 1..=n - start {
            for dest in 0..=n - len {
                if dest == start {
                    continue;
                }
                let shifted = apply_shift(hyp, start, len, dest);
                let d = levenshtein(&shifted, reference);
                if d < base && best.as_ref().map_or(true, |(bd, _)| d < *bd) {
                    best = Some((d, shifted));
                }
            }
        }
    }
    best.map(|(d, seq)| (seq, d))
}

/// Translation edit rate: greedy block shifts (cost 1 each) while they reduce
/// Levenshtein distance, then residual edits, divided by reference length.
pub fn ter(hypothesis: &[TokenId], reference: &[TokenId]) -> Result<f64> {
    if reference.is_empty() {
        return Err(Error::Metric("ter needs a non-empty reference".to_string()));
    }
    let mut hyp = hypothesis.to_vec();
    let mut edits = levenshtein(&hyp, reference);
    let mut shifts = 0usize;
    while edits > 0 {
        match best_shift(&hyp, reference, edits) {
            Some((shifted, d)) => {
                hyp = shifted;
                edits = d;
                shifts += 1;
            }
            None => break,
        }
    }
    Ok((shifts + edits) as f64 / reference.len() as f64)
}

// ── corpus report ────────────────────────────────────────────────────

/// Per-document evaluation row. Edit-rate and coherence columns are in
/// percent; `coh`/`coh_p` are None for generated documents with < 2 sentences.
#[derive(Debug, Clone)]
pub struct DocEval {
    pub id: String,
    pub self_bleu: f64,
    pub self_ter: f64,
    pub self_wer: f64,
    pub coh: Option<f64>,
    pub coh_p: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct EvalReport {
    pub rows: Vec<DocEval>,
    pub self_bleu: f64,
    pub self_ter: f64,
    pub self_wer: f64,
    /// Aggregated over documents with >= 2 generated sentences.
    pub coh: f64,
    pub coh_p: f64,
    /// Documents skipped in the coherence columns.
    pub coh_skipped: usize,
}

/// Evaluate one (original, generated) pair.
pub fn eval_pair(
    original: &Document,
    generated: &Document,
    oracle: &dyn CoherenceOracle,
) -> Result<DocEval> {
    let orig = original.flatten();
    let gen = generated.flatten();
    let (coh, coh_p) = if generated.len() >= 2 {
        let (c, p) = coh_metrics(generated, oracle)?;
        (Some(100.0 * c), Some(100.0 * p))
    } else {
        (None, None)
    };
    Ok(DocEval {
        id: original.id.clone(),
        self_bleu: bleu(&gen, &orig)?,
        self_ter: 100.0 * ter(&gen, &orig)?,
        self_wer: 100.0 * wer(&gen, &orig)?,
        coh,
        coh_p,
    })
}

fn aggregate(rows: Vec<DocEval>) -> EvalReport {
    let mean = |f: &dyn Fn(&DocEval) -> f64| -> f64 {
        rows.iter().map(|r| f(r)).sum::<f64>() / rows.len() as f64
    };
    let coh_rows: Vec<&DocEval> = rows.iter().filter(|r| r.coh.is_some()).collect();
    let coh_mean = |f: &dyn Fn(&DocEval) -> f64| -> f64 {
        if coh_rows.is_empty() {
            0.0
        } else {
            coh_rows.iter().map(|r| f(r)).sum::<f64>() / coh_rows.len() as f64
        }
    };
    EvalReport {
        self_bleu: mean(&|r| r.self_bleu),
        self_ter: mean(&|r| r.self_ter),
        self_wer: mean(&|r| r.self_wer),
        coh: coh_mean(&|r| r.coh.unwrap()),
        coh_p: coh_mean(&|r| r.coh_p.unwrap()),
        coh_skipped: rows.len() - coh_rows.len(),
        rows,
    }
}

/// Evaluate (original, generated) pairs: self-BLEU / self-TER / self-WER on
/// flattened token streams and COH / COH-p of each generated document.
/// Macro-averaged; edit rates and coherence are scaled by 100.
pub fn corpus_report(
    pairs: &[(Document, Document)],
    oracle: &dyn CoherenceOracle,
) -> Result<EvalReport> {
    if pairs.is_empty() {
        return Err(Error::Metric("corpus report needs at least one pair".to_string()));
    }
    let rows = pairs
        .iter()
        .map(|(o, g)| eval_pair(o, g, oracle))
        .collect::<Result<Vec<_>>>()?;
    Ok(aggregate(rows))
}

/// Same result as [`corpus_report`] for any `jobs` value: documents are
/// scored on worker threads in contiguous chunks and rows are merged back in
/// input order.
pub fn corpus_report_parallel(
    pairs: &[(Document, Document)],
    oracle: &dyn CoherenceOracle,
    jobs: usize,
) -> Result<EvalReport> {
    if jobs <= 1 || pairs.len() <= 1 {
        return corpus_report(pairs, oracle);
    }
    if pairs.is_empty() {
        return Err(Error::Metric("corpus report needs at least one pair".to_string()));
    }
    let chunk_size = pairs.len().div_ceil(jobs);
    let chunk_rows: Vec<Result<Vec<DocEval>>> = std::thread::scope(|scope| {
        let handles: Vec<_> = pairs
            .chunks(chunk_size)
            .map(|chunk| {
                scope.spawn(move || {
                    chunk
                        .iter()
                        .map(|(o, g)| eval_pair(o, g, oracle))
                        .collect::<Result<Vec<_>>>()
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("eval worker panicked")).collect()
    });
    let mut rows = Vec::with_capacity(pairs.len());
    for chunk in chunk_rows {
        rows.extend(chunk?);
    }
    Ok(aggregate(rows))
}

/// CSV with one row per document and a final AGGREGATE row.
pub fn write_report_csv<W: Write>(report: &EvalReport, w: &mut W) -> Result<()> {
    writeln!(w, "id,self_bleu,self_ter,self_wer,coh,coh_p")?;
    let cell = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_default();
    for r in &report.rows {
        writeln!(
            w,
            "{},{:.4},{:.4},{:.4},{},{}",
            r.id,
            r.self_bleu,
            r.self_ter,
            r.self_wer,
            cell(r.coh),
            cell(r.coh_p)
        )?;
    }
    writeln!(
        w,
        "AGGREGATE,{:.4},{:.4},{:.4},{:.4},{:.4}",
        report.self_bleu, report.self_ter, report.self_wer, report.coh, report.coh_p
    )?;
    Ok(())
}
