//! Decoding strategies over a trained model: greedy, beam search with length
//! normalization, and top-k sampling. The source document is encoded once;
//! each decoder step runs on a fresh short-lived tape against the cached
//! memory. PAD and BOS are masked out of every decode distribution.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{decode_step, DropoutSeq, ModelConfig, ParamSet, SourceEncoding};
use crate::tensor::Tape;
use crate::text::{TokenId, BOS_ID, EOS_ID, PAD_ID};

/// A decoded sequence (terminating EOS removed) plus the smallest
/// top-1-vs-top-2 probability margin seen, for deciding whether an argmax
/// path was numerically unambiguous.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodeOutcome {
    pub ids: Vec<TokenId>,
    pub min_margin: f64,
}

type StepFn<'a> = dyn Fn(&[TokenId]) -> Result<Vec<f64>> + 'a;

fn model_step<'a>(
    params: &'a ParamSet,
    cfg: &'a ModelConfig,
    src: &'a SourceEncoding,
) -> impl Fn(&[TokenId]) -> Result<Vec<f64>> + 'a {
    let mut mask = vec![true; cfg.vocab_size];
    mask[PAD_ID as usize] = false;
    mask[BOS_ID as usize] = false;
    move |prefix: &[TokenId]| -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let bound = params.bind(&mut tape, false)?;
        let memory = tape.constant(src.memory.clone(), vec![src.rows, src.d_model])?;
        let mut drop = DropoutSeq::disabled();
        let out = decode_step(&mut tape, memory, &src.src_ids, prefix, &bound, cfg, &mut drop, Some(&mask))?;
        Ok(out.dist)
    }
}

/// Argmax index with ties broken by the smallest token id, plus the margin to
/// the runner-up.
fn argmax_with_margin(dist: &[f64]) -> (usize, f64) {
    let mut best = 0usize;
    for (j, &p) in dist.iter().enumerate() {
        if p > dist[best] {
            best = j;
        }
    }
    let mut second = f64::NEG_INFINITY;
    for (j, &p) in dist.iter().enumerate() {
        if j != best && p > second {
            second = p;
        }
    }
    (best, dist[best] - second)
}

fn greedy_core(step: &StepFn, max_len: usize) -> Result<DecodeOutcome> {
    if max_len < 1 {
        return Err(Error::contract("max_len must be >= 1".to_string()));
    }
    let mut prefix = vec![BOS_ID];
    let mut out = Vec::new();
    let mut min_margin = f64::INFINITY;
    for _ in 0..max_len {
        let dist = step(&prefix)?;
        let (tok, margin) = argmax_with_margin(&dist);
        min_margin = min_margin.min(margin);
        if tok as TokenId == EOS_ID {
            break;
        }
        out.push(tok as TokenId);
        prefix.push(tok as TokenId);
    }
    Ok(DecodeOutcome { ids: out, min_margin })
}

#[derive(Clone)]
struct Hypothesis {
    ids: Vec<TokenId>, // generated tokens, no BOS, no EOS
    log_prob: f64,
}

fn length_penalty(len: usize, alpha: f64) -> f64 {
    ((5.0 + len as f64) / 6.0).powf(alpha)
}

fn beam_core(step: &StepFn, beam: usize, max_len: usize, alpha: f64) -> Result<Vec<TokenId>> {
    if beam < 1 {
        return Err(Error::contract("beam width must be >= 1".to_string()));
    }
    if max_len < 1 {
        return Err(Error::contract("max_len must be >= 1".to_string()));
    }
    let mut live = vec![Hypothesis { ids: Vec::new(), log_prob: 0.0 }];
    let mut finished: Vec<(f64, Vec<TokenId>)> = Vec::new();
    for _ in 0..max_len {
        // pool every extension of every live hypothesis; only the top `beam`
        // survive, and an EOS extension finishes its hypothesis only when it
        // ranks inside the beam (B=1 therefore reproduces greedy exactly)
        let mut pooled: Vec<(f64, bool, Vec<TokenId>)> = Vec::new();
        for hyp in &live {
            let mut prefix = Vec::with_capacity(hyp.ids.len() + 1);
            prefix.push(BOS_ID);
            prefix.extend_from_slice(&hyp.ids);
            let dist = step(&prefix)?;
            for (tok, &p) in dist.iter().enumerate() {
                if p <= 0.0 {
                    continue;
                }
                let log_prob = hyp.log_prob + p.ln();
                if tok as TokenId == EOS_ID {
                    pooled.push((log_prob, true, hyp.ids.clone()));
                } else {
                    let mut ids = hyp.ids.clone();
                    ids.push(tok as TokenId);
                    pooled.push((log_prob, false, ids));
                }
            }
        }
        pooled.sort_by(|a, b| {
            b.0.partial_cmp(&a.0)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| a.2.cmp(&b.2))
        });
        let mut next_live = Vec::with_capacity(beam);
        for (log_prob, is_eos, ids) in pooled.into_iter().take(beam) {
            if is_eos {
                finished.push((log_prob / length_penalty(ids.len(), alpha), ids));
            } else {
                next_live.push(Hypothesis { ids, log_prob });
            }
        }
        live = next_live;
        if live.is_empty() {
            break;
        }
    }
    for hyp in live {
        finished.push((hyp.log_prob / length_penalty(hyp.ids.len(), alpha), hyp.ids));
    }
    finished.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.1.cmp(&b.1))
    });
    finished
        .into_iter()
        .next()
        .map(|(_, ids)| ids)
        .ok_or_else(|| Error::contract("beam search produced no hypotheses".to_string()))
}

fn top_k_core(step: &StepFn, k: usize, temperature: f64, max_len: usize, seed: u64) -> Result<Vec<TokenId>> {
    if k < 1 {
        return Err(Error::contract("k must be >= 1".to_string()));
    }
    if temperature <= 0.0 {
        return Err(Error::contract("temperature must be > 0".to_string()));
    }
    if max_len < 1 {
        return Err(Error::contract("max_len must be >= 1".to_string()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut prefix = vec![BOS_ID];
    let mut out = Vec::new();
    for _ in 0..max_len {
        let dist = step(&prefix)?;
        let mut idx: Vec<usize> = (0..dist.len()).collect();
        idx.sort_by(|&a, &b| {
            dist[b].partial_cmp(&dist[a]).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b))
        });
        idx.truncate(k);
        let weights: Vec<f64> = idx.iter().map(|&i| dist[i].powf(1.0 / temperature)).collect();
        let total: f64 = weights.iter().sum();
        if !(total.is_finite() && total > 0.0) {
            return Err(Error::numeric(format!("degenerate top-k weights (sum {total})")));
        }
        let mut u = rng.gen::<f64>() * total;
        let mut chosen = idx[idx.len() - 1];
        for (i, &w) in idx.iter().zip(&weights) {
            if u < w {
                chosen = *i;
                break;
            }
            u -= w;
        }
        if chosen as TokenId == EOS_ID {
            break;
        }
        out.push(chosen as TokenId);
        prefix.push(chosen as TokenId);
    }
    Ok(out)
}

pub fn greedy_decode(
    params: &ParamSet,
    cfg: &ModelConfig,
    src: &SourceEncoding,
    max_len: usize,
) -> Result<DecodeOutcome> {
    let step = model_step(params, cfg, src);
    greedy_core(&step, max_len)
}

pub fn beam_search(
    params: &ParamSet,
    cfg: &ModelConfig,
    src: &SourceEncoding,
    beam: usize,
    max_len: usize,
    length_alpha: f64,
) -> Result<Vec<TokenId>> {
    let step = model_step(params, cfg, src);
    beam_core(&step, beam, max_len, length_alpha)
}

pub fn top_k_sample(
    params: &ParamSet,
    cfg: &ModelConfig,
    src: &SourceEncoding,
    k: usize,
    temperature: f64,
    max_len: usize,
    seed: u64,
) -> Result<Vec<TokenId>> {
    let step = model_step(params, cfg, src);
    top_k_core(&step, k, temperature, max_len, seed)
}

/// Split a decoded token stream into sentences at the boundary marker,
/// dropping empty segments.
pub fn split_at_boundaries(ids: &[TokenId], sep: TokenId) -> Vec<Vec<TokenId>> {
    ids.split(|&t| t == sep)
        .filter(|seg| !seg.is_empty())
        .map(|seg| seg.to_vec())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Fixed per-position distributions; after the table runs out, all mass
    /// goes to EOS.
    fn table_step(table: Vec<Vec<f64>>) -> impl Fn(&[TokenId]) -> Result<Vec<f64>> {
        move |prefix: &[TokenId]| {
            let t = prefix.len() - 1;
            if t < table.len() {
                Ok(table[t].clone())
            } else {
                let v = table[0].len();
                let mut dist = vec![0.0; v];
                dist[EOS_ID as usize] = 1.0;
                Ok(dist)
            }
        }
    }

    /// Exhaustively enumerate all sequences up to `max_len` and return the
    /// highest-probability one (alpha = 0 semantics; ties lexicographic).
    fn enumerate_best(step: &StepFn, vocab: usize, max_len: usize) -> Vec<TokenId> {
        fn go(
            step: &StepFn,
            vocab: usize,
            prefix: &mut Vec<TokenId>,
            log_p: f64,
            left: usize,
            best: &mut (f64, Vec<TokenId>),
        ) {
            let dist = step(prefix).unwrap();
            for tok in 0..vocab {
                let p = dist[tok];
                if p <= 0.0 {
                    continue;
                }
                let lp = log_p + p.ln();
                if tok as TokenId == EOS_ID {
                    let ids = prefix[1..].to_vec();
                    if lp > best.0 || (lp == best.0 && ids < best.1) {
                        *best = (lp, ids);
                    }
                } else if left > 1 {
                    prefix.push(tok as TokenId);
                    go(step, vocab, prefix, lp, left - 1, best);
                    prefix.pop();
                } else {
                    // ran out of budget: unfinished sequence scored as-is
                    let ids = {
                        let mut v = prefix[1..].to_vec();
                        v.push(tok as TokenId);
                        v
                    };
                    if lp > best.0 || (lp == best.0 && ids < best.1) {
                        *best = (lp, ids);
                    }
                }
            }
        }
        let mut best = (f64::NEG_INFINITY, Vec::new());
        let mut prefix = vec![BOS_ID];
        go(step, vocab, &mut prefix, 0.0, max_len, &mut best);
        best.1
    }

    #[test]
    fn greedy_stops_at_eos_and_is_deterministic() {
        // vocab: 0=PAD 1=BOS 2=EOS 3 4 5
        let step = table_step(vec![
            vec![0.0, 0.0, 0.1, 0.2, 0.6, 0.1],
            vec![0.0, 0.0, 0.1, 0.5, 0.3, 0.1],
            vec![0.0, 0.0, 0.9, 0.0, 0.05, 0.05],
        ]);
        let a = greedy_core(&step, 10).unwrap();
        let b = greedy_core(&step, 10).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.ids, vec![4, 3]);
        assert!(a.min_margin > 0.0);
    }

    #[test]
    fn greedy_ties_break_to_smallest_token_id() {
        let step = table_step(vec![vec![0.0, 0.0, 0.0, 0.5, 0.5, 0.0]]);
        let out = greedy_core(&step, 1).unwrap();
        assert_eq!(out.ids, vec![3]);
        assert_eq!(out.min_margin, 0.0);
    }

    #[test]
    fn beam_one_equals_greedy_on_random_tables() {
        use rand::{Rng, SeedableRng};
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let vocab = 6;
            let steps = rng.gen_range(1..4);
            let mut table = Vec::new();
            for _ in 0..steps {
                let mut row: Vec<f64> = (0..vocab).map(|_| rng.gen::<f64>()).collect();
                row[PAD_ID as usize] = 0.0;
                row[BOS_ID as usize] = 0.0;
                let s: f64 = row.iter().sum();
                for v in &mut row {
                    *v /= s;
                }
                table.push(row);
            }
            let step = table_step(table);
            let greedy = greedy_core(&step, 5).unwrap();
            let beam = beam_core(&step, 1, 5, 0.0).unwrap();
            assert_eq!(greedy.ids, beam);
        }
    }

    #[test]
    fn beam_two_finds_the_true_maximum_of_a_two_step_model() {
        // 3 usable tokens (2=EOS, 3, 4): greedy takes 4 first (0.5) but the
        // best full sequence starts with 3.
        let step = table_step(vec![
            vec![0.0, 0.0, 0.05, 0.45, 0.5],
            vec![0.0, 0.0, 0.9, 0.05, 0.05],
        ]);
        let best = enumerate_best(&step, 5, 2);
        let beam = beam_core(&step, 2, 2, 0.0).unwrap();
        assert_eq!(beam, best);
    }

    #[test]
    fn wider_beams_never_return_lower_scores() {
        use rand::{Rng, SeedableRng};
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let score_of = |step: &StepFn, ids: &[TokenId]| -> f64 {
            // replay the sequence and accumulate its log probability,
            // including the EOS step when the sequence ended before max_len
            let mut prefix = vec![BOS_ID];
            let mut lp = 0.0;
            for &t in ids {
                let dist = step(&prefix).unwrap();
                lp += dist[t as usize].ln();
                prefix.push(t);
            }
            if ids.len() < 3 {
                let dist = step(&prefix).unwrap();
                lp += dist[EOS_ID as usize].ln();
            }
            lp
        };
        for _ in 0..60 {
            let vocab = 5;
            let mut table = Vec::new();
            for _ in 0..3 {
                let mut row: Vec<f64> = (0..vocab).map(|_| rng.gen::<f64>()).collect();
                row[0] = 0.0;
                row[1] = 0.0;
                let s: f64 = row.iter().sum();
                for v in &mut row {
                    *v /= s;
                }
                table.push(row);
            }
            let step = table_step(table);
            let mut last = f64::NEG_INFINITY;
            for beam in 1..=4 {
                let ids = beam_core(&step, beam, 3, 0.0).unwrap();
                let s = score_of(&step, &ids);
                assert!(s >= last - 1e-12, "beam {beam} scored {s} < {last}");
                last = s;
            }
        }
    }

    #[test]
    fn top_k_one_equals_greedy() {
        let step = table_step(vec![
            vec![0.0, 0.0, 0.1, 0.2, 0.6, 0.1],
            vec![0.0, 0.0, 0.8, 0.1, 0.05, 0.05],
        ]);
        let greedy = greedy_core(&step, 5).unwrap();
        let sampled = top_k_core(&step, 1, 1.0, 5, 123).unwrap();
        assert_eq!(greedy.ids, sampled);
    }

    #[test]
    fn top_k_same_seed_same_output_and_support_respected() {
        let step = table_step(vec![
            vec![0.0, 0.0, 0.05, 0.3, 0.3, 0.35],
            vec![0.0, 0.0, 0.2, 0.4, 0.2, 0.2],
            vec![0.0, 0.0, 0.6, 0.2, 0.1, 0.1],
        ]);
        let a = top_k_core(&step, 2, 1.0, 6, 7).unwrap();
        let b = top_k_core(&step, 2, 1.0, 6, 7).unwrap();
        assert_eq!(a, b);

        // with k=2 at step 0 the support is {5, 3} (0.35, 0.3): token 4 never appears first
        for seed in 0..50 {
            let ids = top_k_core(&step, 2, 1.0, 6, seed).unwrap();
            if let Some(&first) = ids.first() {
                assert!(first == 5 || first == 3, "token {first} outside top-2 support");
            }
        }
    }

    #[test]
    fn every_decode_terminates_within_max_len() {
        // EOS never gets mass: decoding must cap at max_len
        let step = table_step(vec![vec![0.0, 0.0, 0.0, 1.0, 0.0]; 100]);
        let g = greedy_core(&step, 7).unwrap();
        assert_eq!(g.ids.len(), 7);
        let s = top_k_core(&step, 3, 1.0, 7, 0).unwrap();
        assert_eq!(s.len(), 7);
    }

    #[test]
    fn boundary_splitting() {
        let sep = 5;
        assert_eq!(
            split_at_boundaries(&[10, 11, 5, 12, 5, 13], sep),
            vec![vec![10, 11], vec![12], vec![13]]
        );
        assert_eq!(split_at_boundaries(&[5, 5, 10], sep), vec![vec![10]]);
        assert!(split_at_boundaries(&[], sep).is_empty());
    }
}
