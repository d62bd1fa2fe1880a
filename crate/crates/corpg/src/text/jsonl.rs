//! JSON Lines corpus formats and atomic file writing.
//!
//! On disk every sentence is a single string of space-joined tokens; in
//! memory sentences are token vectors. All readers validate structure and
//! report the offending line number.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::coherence::CoherenceGraph;
use crate::error::{Error, Result};
use crate::text::{Document, ParallelDoc, RawDocument, Vocab};

/// Write to `<path>.tmp` then rename over the destination.
pub fn atomic_write<F>(path: &Path, write: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<File>) -> Result<()>,
{
    let tmp = path.with_extension(match path.extension() {
        Some(ext) => format!("{}.tmp", ext.to_string_lossy()),
        None => "tmp".to_string(),
    });
    {
        let mut w = BufWriter::new(File::create(&tmp)?);
        write(&mut w)?;
        w.flush()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct DocLine {
    id: String,
    sentences: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct ParallelLine {
    id: String,
    source: Vec<String>,
    target: Vec<String>,
    graph: Vec<Vec<u8>>,
}

#[derive(Serialize, Deserialize)]
struct ScoresLine {
    id: String,
    scores: Vec<Vec<f64>>,
}

/// A generated-output record: one sentence string per entry.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OutputLine {
    pub id: String,
    pub output: Vec<String>,
}

/// A precomputed pair-score matrix for one document: scores[i][j] is the
/// probability that sentence i coherently precedes sentence j.
#[derive(Debug, Clone)]
pub struct ScoreMatrix {
    pub id: String,
    pub scores: Vec<Vec<f64>>,
}

fn split_sentence_tokens(s: &str) -> Result<Vec<String>> {
    let toks: Vec<String> = s.split_whitespace().map(|t| t.to_string()).collect();
    if toks.is_empty() {
        return Err(Error::data("empty sentence".to_string()));
    }
    Ok(toks)
}

pub fn parse_document_line(line: &str) -> Result<RawDocument> {
    let parsed: DocLine =
        serde_json::from_str(line).map_err(|e| Error::data(format!("bad document line: {e}")))?;
    if parsed.sentences.is_empty() {
        return Err(Error::data(format!("document {:?} has no sentences", parsed.id)));
    }
    let sentences = parsed
        .sentences
        .iter()
        .map(|s| split_sentence_tokens(s))
        .collect::<Result<Vec<_>>>()?;
    Ok(RawDocument { id: parsed.id, sentences })
}

pub fn read_documents(path: &Path) -> Result<Vec<RawDocument>> {
    let file = File::open(path)?;
    let mut docs = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let doc = parse_document_line(&line)
            .map_err(|e| Error::data(format!("{}:{}: {e}", path.display(), lineno + 1)))?;
        docs.push(doc);
    }
    Ok(docs)
}

pub fn write_documents(path: &Path, docs: &[RawDocument]) -> Result<()> {
    atomic_write(path, |w| {
        for doc in docs {
            let line = DocLine {
                id: doc.id.clone(),
                sentences: doc.sentences.iter().map(|s| s.join(" ")).collect(),
            };
            serde_json::to_writer(&mut *w, &line).map_err(|e| Error::data(e.to_string()))?;
            writeln!(w)?;
        }
        Ok(())
    })
}

/// A parallel record in token-string form, before vocabulary encoding.
#[derive(Debug, Clone)]
pub struct ParallelRecord {
    pub id: String,
    pub source: Vec<Vec<String>>,
    pub target: Vec<Vec<String>>,
    pub graph: CoherenceGraph,
}

pub fn parse_parallel_line(line: &str) -> Result<ParallelRecord> {
    let parsed: ParallelLine =
        serde_json::from_str(line).map_err(|e| Error::data(format!("bad parallel line: {e}")))?;
    let n = parsed.source.len();
    if n == 0 {
        return Err(Error::data(format!("parallel doc {:?} has no sentences", parsed.id)));
    }
    if parsed.target.len() != n {
        return Err(Error::data(format!(
            "parallel doc {:?}: source has {} sentences, target has {}",
            parsed.id,
            n,
            parsed.target.len()
        )));
    }
    let graph = CoherenceGraph::from_rows(&parsed.graph)?;
    if graph.len() != n {
        return Err(Error::data(format!(
            "parallel doc {:?}: graph is {}x{} but document has {} sentences",
            parsed.id,
            graph.len(),
            graph.len(),
            n
        )));
    }
    let source = parsed.source.iter().map(|s| split_sentence_tokens(s)).collect::<Result<Vec<_>>>()?;
    let target = parsed.target.iter().map(|s| split_sentence_tokens(s)).collect::<Result<Vec<_>>>()?;
    Ok(ParallelRecord { id: parsed.id, source, target, graph })
}

pub fn read_parallel(path: &Path, vocab: &Vocab) -> Result<Vec<ParallelDoc>> {
    let file = File::open(path)?;
    let mut out = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = parse_parallel_line(&line)
            .map_err(|e| Error::data(format!("{}:{}: {e}", path.display(), lineno + 1)))?;
        let encode = |sents: &[Vec<String>]| -> Vec<Vec<_>> {
            sents.iter().map(|s| vocab.encode_sentence(s)).collect()
        };
        out.push(ParallelDoc {
            source: Document { id: rec.id.clone(), sentences: encode(&rec.source) },
            target: Document { id: rec.id.clone(), sentences: encode(&rec.target) },
            graph: rec.graph,
        });
    }
    Ok(out)
}

pub fn write_parallel(path: &Path, docs: &[ParallelDoc], vocab: &Vocab) -> Result<()> {
    atomic_write(path, |w| {
        for doc in docs {
            let render = |sents: &[Vec<u32>]| -> Result<Vec<String>> {
                sents
                    .iter()
                    .map(|s| Ok(vocab.decode_sentence(s)?.join(" ")))
                    .collect()
            };
            let line = ParallelLine {
                id: doc.source.id.clone(),
                source: render(&doc.source.sentences)?,
                target: render(&doc.target.sentences)?,
                graph: doc.graph.rows(),
            };
            serde_json::to_writer(&mut *w, &line).map_err(|e| Error::data(e.to_string()))?;
            writeln!(w)?;
        }
        Ok(())
    })
}

pub fn parse_scores_line(line: &str) -> Result<ScoreMatrix> {
    let parsed: ScoresLine =
        serde_json::from_str(line).map_err(|e| Error::data(format!("bad scores line: {e}")))?;
    let n = parsed.scores.len();
    for row in &parsed.scores {
        if row.len() != n {
            return Err(Error::data(format!("scores matrix for {:?} is not square", parsed.id)));
        }
        for &v in row {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::data(format!(
                    "score {v} for {:?} outside [0,1]",
                    parsed.id
                )));
            }
        }
    }
    Ok(ScoreMatrix { id: parsed.id, scores: parsed.scores })
}

pub fn read_score_matrices(path: &Path) -> Result<Vec<ScoreMatrix>> {
    let file = File::open(path)?;
    let mut out = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let m = parse_scores_line(&line)
            .map_err(|e| Error::data(format!("{}:{}: {e}", path.display(), lineno + 1)))?;
        out.push(m);
    }
    Ok(out)
}

pub fn parse_output_line(line: &str) -> Result<OutputLine> {
    let parsed: OutputLine =
        serde_json::from_str(line).map_err(|e| Error::data(format!("bad output line: {e}")))?;
    Ok(parsed)
}

pub fn read_outputs(path: &Path) -> Result<Vec<OutputLine>> {
    let file = File::open(path)?;
    let mut out = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = parse_output_line(&line)
            .map_err(|e| Error::data(format!("{}:{}: {e}", path.display(), lineno + 1)))?;
        out.push(rec);
    }
    Ok(out)
}

pub fn write_outputs(path: &Path, outputs: &[OutputLine]) -> Result<()> {
    atomic_write(path, |w| {
        for o in outputs {
            serde_json::to_writer(&mut *w, o).map_err(|e| Error::data(e.to_string()))?;
            writeln!(w)?;
        }
        Ok(())
    })
}
