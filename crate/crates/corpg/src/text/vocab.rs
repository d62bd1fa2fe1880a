use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::text::{RawDocument, TokenId};

pub const PAD_ID: TokenId = 0;
pub const BOS_ID: TokenId = 1;
pub const EOS_ID: TokenId = 2;
pub const UNK_ID: TokenId = 3;

const RESERVED: [&str; 4] = ["<pad>", "<bos>", "<eos>", "<unk>"];

/// Bijective token <-> id map with four fixed reserved ids. Regular ids are
/// assigned contiguously from 4 in descending corpus frequency, ties broken
/// lexicographically, so builds are reproducible.
#[derive(Debug, Clone)]
pub struct Vocab {
    token_to_id: HashMap<String, TokenId>,
    id_to_token: Vec<String>,
    pub min_count: usize,
}

impl Vocab {
    fn with_reserved(min_count: usize) -> Self {
        let id_to_token: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
        let token_to_id = id_to_token
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as TokenId))
            .collect();
        Vocab { token_to_id, id_to_token, min_count }
    }

    /// Build from a tokenized corpus, keeping tokens with frequency >= min_count.
    pub fn build(docs: &[RawDocument], min_count: usize) -> Result<Self> {
        if min_count == 0 {
            return Err(Error::contract("min_count must be >= 1".to_string()));
        }
        if docs.is_empty() {
            return Err(Error::EmptyVocab);
        }
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for doc in docs {
            for sent in &doc.sentences {
                for tok in sent {
                    *counts.entry(tok.as_str()).or_insert(0) += 1;
                }
            }
        }
        let mut kept: Vec<(&str, usize)> = counts
            .into_iter()
            .filter(|&(tok, c)| c >= min_count && !RESERVED.contains(&tok))
            .collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));

        let mut vocab = Vocab::with_reserved(min_count);
        for (tok, _) in kept {
            vocab.push_token(tok.to_string());
        }
        Ok(vocab)
    }

    fn push_token(&mut self, tok: String) -> TokenId {
        let id = self.id_to_token.len() as TokenId;
        self.token_to_id.insert(tok.clone(), id);
        self.id_to_token.push(tok);
        id
    }

    /// Append a token (e.g. a special marker) after the regular vocabulary.
    /// Returns the existing id if the token is already present.
    pub fn add_token(&mut self, tok: &str) -> TokenId {
        if let Some(&id) = self.token_to_id.get(tok) {
            return id;
        }
        self.push_token(tok.to_string())
    }

    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        false // reserved ids are always present
    }

    pub fn encode(&self, tok: &str) -> TokenId {
        self.token_to_id.get(tok).copied().unwrap_or(UNK_ID)
    }

    pub fn contains(&self, tok: &str) -> bool {
        self.token_to_id.contains_key(tok)
    }

    pub fn decode(&self, id: TokenId) -> Result<&str> {
        self.id_to_token
            .get(id as usize)
            .map(|s| s.as_str())
            .ok_or(Error::Index {
                what: "vocab id",
                index: id as usize,
                size: self.id_to_token.len(),
            })
    }

    pub fn encode_sentence(&self, tokens: &[String]) -> Vec<TokenId> {
        tokens.iter().map(|t| self.encode(t)).collect()
    }

    pub fn decode_sentence(&self, ids: &[TokenId]) -> Result<Vec<String>> {
        ids.iter().map(|&i| self.decode(i).map(|s| s.to_string())).collect()
    }

    /// One non-reserved token per line; line number = id - 4.
    pub fn save(&self, path: &Path) -> Result<()> {
        super::jsonl::atomic_write(path, |w| {
            for tok in &self.id_to_token[RESERVED.len()..] {
                writeln!(w, "{tok}")?;
            }
            Ok(())
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        let mut vocab = Vocab::with_reserved(1);
        for (lineno, line) in BufReader::new(file).lines().enumerate() {
            let tok = line?;
            if tok.is_empty() || tok.chars().any(|c| c.is_whitespace()) {
                return Err(Error::data(format!(
                    "vocab line {}: token must be non-empty and whitespace-free",
                    lineno + 1
                )));
            }
            if vocab.token_to_id.contains_key(&tok) {
                return Err(Error::data(format!("vocab line {}: duplicate token {tok:?}", lineno + 1)));
            }
            vocab.push_token(tok);
        }
        Ok(vocab)
    }
}
