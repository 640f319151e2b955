//! Token → word matching: a token matches every store word that contains
//! its normalized form as a contiguous substring.
//!
//! Candidate words come from a character n-gram inverted index (n ≤ 3) and
//! are verified with a plain substring test, so the result is exactly the
//! naive double loop's.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use unicode_normalization::UnicodeNormalization;

use crate::corpus_io::{Vocabulary, WordVectorStore};
use crate::error::{Error, Result};

pub const DEFAULT_MAX_MATCHES: usize = 256;
const GRAM: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum MarkerStrip {
    #[default]
    None,
    /// SentencePiece word-boundary marker `▁`.
    Sp,
    /// Byte-level BPE space marker `Ġ`.
    Bpe,
}

impl MarkerStrip {
    fn marker(self) -> Option<char> {
        match self {
            MarkerStrip::None => None,
            MarkerStrip::Sp => Some('▁'),
            MarkerStrip::Bpe => Some('Ġ'),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct MatchConfig {
    pub strip_marker: MarkerStrip,
    pub lowercase: bool,
    pub nfc: bool,
    pub max_matches: usize,
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self {
            strip_marker: MarkerStrip::None,
            lowercase: false,
            nfc: false,
            max_matches: DEFAULT_MAX_MATCHES,
        }
    }
}

pub fn normalize_token(token: &str, cfg: &MatchConfig) -> String {
    let stripped = match cfg.strip_marker.marker() {
        Some(m) => token.strip_prefix(m).unwrap_or(token),
        None => token,
    };
    normalize_text(stripped, cfg)
}

/// Words get the same Unicode treatment as tokens, without marker removal.
pub fn normalize_word(word: &str, cfg: &MatchConfig) -> String {
    normalize_text(word, cfg)
}

fn normalize_text(s: &str, cfg: &MatchConfig) -> String {
    let s: String = if cfg.nfc { s.nfc().collect() } else { s.to_string() };
    if cfg.lowercase {
        s.to_lowercase()
    } else {
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchTable {
    /// Raw token strings, indexed by token ID.
    pub tokens: Vec<String>,
    /// Matched word IDs per token, ascending.
    pub entries: Vec<Vec<usize>>,
    /// Number of words in the store the IDs refer to.
    pub store_size: usize,
    pub vocab_fingerprint: String,
    pub store_fingerprint: String,
    /// `None` when the table was loaded from CSV.
    pub config: Option<MatchConfig>,
}

impl MatchTable {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn matches(&self, token_id: usize) -> &[usize] {
        &self.entries[token_id]
    }

    /// Token string → token ID within this table.
    pub fn index_by_token(&self) -> HashMap<&str, usize> {
        self.tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.as_str(), i))
            .collect()
    }
}

pub(crate) fn fingerprint<'a>(items: impl IntoIterator<Item = &'a String>) -> String {
    let mut h = Sha256::new();
    for s in items {
        h.update((s.len() as u64).to_le_bytes());
        h.update(s.as_bytes());
    }
    hex::encode(&h.finalize()[..8])
}

struct NgramIndex {
    words: Vec<String>,
    postings: HashMap<String, Vec<u32>>,
}

impl NgramIndex {
    fn build(words: Vec<String>) -> Self {
        let mut postings: HashMap<String, Vec<u32>> = HashMap::new();
        for (id, w) in words.iter().enumerate() {
            let bounds: Vec<usize> = w
                .char_indices()
                .map(|(i, _)| i)
                .chain(std::iter::once(w.len()))
                .collect();
            let nchars = bounds.len() - 1;
            for n in 1..=GRAM {
                for start in 0..nchars.saturating_sub(n - 1) {
                    let gram = &w[bounds[start]..bounds[start + n]];
                    let list = postings.entry(gram.to_string()).or_default();
                    // Posting lists stay sorted and unique since IDs ascend.
                    if list.last() != Some(&(id as u32)) {
                        list.push(id as u32);
                    }
                }
            }
        }
        Self { words, postings }
    }

    fn lookup(&self, needle: &str) -> Vec<usize> {
        if needle.is_empty() {
            return Vec::new();
        }
        let bounds: Vec<usize> = needle
            .char_indices()
            .map(|(i, _)| i)
            .chain(std::iter::once(needle.len()))
            .collect();
        let nchars = bounds.len() - 1;
        let n = nchars.min(GRAM);
        let mut shortest: Option<&Vec<u32>> = None;
        for start in 0..=nchars - n {
            match self.postings.get(&needle[bounds[start]..bounds[start + n]]) {
                None => return Vec::new(),
                Some(list) => {
                    if shortest.is_none_or(|s| list.len() < s.len()) {
                        shortest = Some(list);
                    }
                }
            }
        }
        shortest
            .into_iter()
            .flatten()
            .map(|&id| id as usize)
            .filter(|&id| n == nchars || self.words[id].contains(needle))
            .collect()
    }
}

/// Keeps the `cap` lexicographically smallest words, returned in ID order.
pub(crate) fn apply_cap(mut ids: Vec<usize>, store: &WordVectorStore, cap: usize) -> Vec<usize> {
    if ids.len() > cap {
        ids.sort_by(|&a, &b| store.word(a).cmp(store.word(b)).then(a.cmp(&b)));
        ids.truncate(cap);
    }
    ids.sort_unstable();
    ids
}

pub fn build_match_table(
    vocab: &Vocabulary,
    store: &WordVectorStore,
    cfg: &MatchConfig,
) -> MatchTable {
    let normalized: Vec<String> = store.words().iter().map(|w| normalize_word(w, cfg)).collect();
    let index = NgramIndex::build(normalized);
    let entries: Vec<Vec<usize>> = vocab
        .tokens()
        .par_iter()
        .map(|tok| {
            let needle = normalize_token(tok, cfg);
            apply_cap(index.lookup(&needle), store, cfg.max_matches)
        })
        .collect();
    let table = MatchTable {
        tokens: vocab.tokens().to_vec(),
        entries,
        store_size: store.len(),
        vocab_fingerprint: fingerprint(vocab.tokens()),
        store_fingerprint: fingerprint(store.words()),
        config: Some(cfg.clone()),
    };
    let stats = match_stats(&table);
    if stats.unmatched > 0 {
        log::warn!(
            "{} of {} tokens matched no word",
            stats.unmatched,
            stats.matched + stats.unmatched
        );
    }
    table
}

/// The O(|V|·|W|·len) double loop; reference for [`build_match_table`].
pub fn naive_match_table(
    vocab: &Vocabulary,
    store: &WordVectorStore,
    cfg: &MatchConfig,
) -> MatchTable {
    let words: Vec<String> = store.words().iter().map(|w| normalize_word(w, cfg)).collect();
    let entries = vocab
        .tokens()
        .iter()
        .map(|tok| {
            let needle = normalize_token(tok, cfg);
            let hits = if needle.is_empty() {
                Vec::new()
            } else {
                (0..words.len()).filter(|&w| words[w].contains(&needle)).collect()
            };
            apply_cap(hits, store, cfg.max_matches)
        })
        .collect();
    MatchTable {
        tokens: vocab.tokens().to_vec(),
        entries,
        store_size: store.len(),
        vocab_fingerprint: fingerprint(vocab.tokens()),
        store_fingerprint: fingerprint(store.words()),
        config: Some(cfg.clone()),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MatchStats {
    pub matched: usize,
    pub unmatched: usize,
    /// Match-set size → number of tokens with that size.
    pub histogram: BTreeMap<usize, usize>,
}

pub fn match_stats(table: &MatchTable) -> MatchStats {
    let mut histogram = BTreeMap::new();
    for e in &table.entries {
        *histogram.entry(e.len()).or_insert(0) += 1;
    }
    let unmatched = histogram.get(&0).copied().unwrap_or(0);
    MatchStats {
        matched: table.entries.len() - unmatched,
        unmatched,
        histogram,
    }
}

#[derive(Serialize, Deserialize)]
struct MatchRow {
    token_id: usize,
    token: String,
    word_ids: String,
}

pub fn save_match_table(table: &MatchTable, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    for (i, (tok, ids)) in table.tokens.iter().zip(&table.entries).enumerate() {
        let word_ids = ids
            .iter()
            .map(|id| id.to_string())
            .collect::<Vec<_>>()
            .join(";");
        w.serialize(MatchRow {
            token_id: i,
            token: tok.clone(),
            word_ids,
        })
        .map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Loads a table and checks every word ID against `store`.
pub fn load_match_table(path: impl AsRef<Path>, store: &WordVectorStore) -> Result<MatchTable> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    let mut tokens = Vec::new();
    let mut entries = Vec::new();
    for (i, row) in r.deserialize::<MatchRow>().enumerate() {
        let row = row.map_err(|e| Error::csv(path, e))?;
        let line = i + 2;
        let bad = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        if row.token_id != i {
            return Err(bad(format!("token_id {} out of order", row.token_id)));
        }
        let mut ids = Vec::new();
        for part in row.word_ids.split(';').filter(|p| !p.is_empty()) {
            let id: usize = part
                .parse()
                .map_err(|e| bad(format!("bad word id {part:?}: {e}")))?;
            if id >= store.len() {
                return Err(bad(format!(
                    "word id {id} out of range for a store of {} words",
                    store.len()
                )));
            }
            ids.push(id);
        }
        ids.sort_unstable();
        ids.dedup();
        tokens.push(row.token);
        entries.push(ids);
    }
    Ok(MatchTable {
        vocab_fingerprint: fingerprint(&tokens),
        store_fingerprint: fingerprint(store.words()),
        tokens,
        entries,
        store_size: store.len(),
        config: None,
    })
}
