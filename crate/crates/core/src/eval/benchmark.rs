//! Synthetic benchmark whose target function is known: coordinates are a
//! fixed map of each token's mean matched word vector, plus noise.

use std::collections::HashSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::corpus_io::{
    load_matrix, load_vocab, load_word_vectors, save_matrix, save_vocab, save_word_vectors, Vocabulary,
    WordVectorStore,
};
use crate::error::{Error, Result};
use crate::linalg::{dot, mean_of_rows, Matrix};
use crate::matching::{apply_cap, build_match_table, MatchConfig, MatchTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Generator {
    /// `c = A·m`
    Linear,
    /// `c = tanh(g·A·m)`, elementwise
    Nonlinear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchmarkConfig {
    pub seed: u64,
    /// Noise standard deviation relative to the RMS of the clean coordinates.
    pub noise: f64,
    pub generator: Generator,
    pub source_tokens: usize,
    /// Target-only tokens with matches; the held-out set.
    pub target_tokens: usize,
    /// Source tokens also present in the target vocabulary.
    pub overlap_tokens: usize,
    /// Target-only tokens that match no word.
    pub unmatched_tokens: usize,
    /// Words generated per token, each the token glued to a random partner.
    pub words_per_token: usize,
    pub word_dim: usize,
    pub coord_dim: usize,
    pub embed_dim: usize,
    pub sentences: usize,
    pub sentence_len: usize,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            noise: 0.05,
            generator: Generator::Linear,
            source_tokens: 512,
            target_tokens: 64,
            overlap_tokens: 32,
            unmatched_tokens: 8,
            words_per_token: 3,
            word_dim: 24,
            coord_dim: 32,
            embed_dim: 48,
            sentences: 64,
            sentence_len: 4,
        }
    }
}

impl BenchmarkConfig {
    fn check(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Infeasible(m));
        if self.source_tokens < 32 || self.coord_dim < 8 {
            return bad("need at least 32 source tokens and coordinate dimension 8".into());
        }
        if self.coord_dim > self.embed_dim || self.coord_dim > self.source_tokens {
            return bad(format!(
                "coordinate dimension {} exceeds embedding dimension {} or source vocabulary {}",
                self.coord_dim, self.embed_dim, self.source_tokens
            ));
        }
        if self.overlap_tokens > self.source_tokens {
            return bad("more overlap tokens than source tokens".into());
        }
        // distinct a-z strings of length 4 to 6
        let space: usize = (4..=6).map(|l| 26usize.pow(l)).sum();
        if self.source_tokens + self.target_tokens + self.unmatched_tokens > space / 2 {
            return bad("more tokens than constructible strings".into());
        }
        if self.words_per_token == 0 || self.word_dim == 0 {
            return bad("words_per_token and word_dim must be positive".into());
        }
        if self.sentences > 0 && (self.sentence_len == 0 || self.target_tokens == 0) {
            return bad("sentences need a positive length and held-out tokens".into());
        }
        if !(self.noise >= 0.0) {
            return bad(format!("noise {} must be non-negative", self.noise));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentencePair {
    /// IDs in the source vocabulary.
    pub source: Vec<usize>,
    /// IDs in the target vocabulary.
    pub target: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct SyntheticBenchmark {
    pub config: BenchmarkConfig,
    pub source_vocab: Vocabulary,
    pub target_vocab: Vocabulary,
    pub store: WordVectorStore,
    /// `E^s`, `|V^s| × D`
    pub source_embeddings: Matrix,
    /// True `E^t`, `|V^t| × D`; rows of unmatched tokens are zero.
    pub target_truth: Matrix,
    /// Over source tokens followed by target-only tokens.
    pub match_table: MatchTable,
    /// Target IDs of the target-only matched tokens.
    pub heldout: Vec<usize>,
    pub sentences: Vec<SentencePair>,
}

fn random_token(rng: &mut impl Rng, digit: bool) -> String {
    let len = rng.random_range(4..=6);
    let mut s: Vec<char> = (0..len).map(|_| rng.random_range(b'a'..=b'z') as char).collect();
    if digit {
        let at = rng.random_range(0..len);
        s[at] = rng.random_range(b'0'..=b'9') as char;
    }
    s.into_iter().collect()
}

fn gaussian_matrix(rng: &mut impl Rng, rows: usize, cols: usize, scale: f64) -> Matrix {
    let data = (0..rows * cols)
        .map(|_| scale * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut *rng))
        .collect();
    Matrix::from_vec(rows, cols, data).expect("sized buffer")
}

/// Random `r × n` matrix with orthonormal rows.
fn orthonormal_rows(rng: &mut impl Rng, r: usize, n: usize) -> Matrix {
    let mut q = gaussian_matrix(rng, r, n, 1.0);
    for i in 0..r {
        for _ in 0..2 {
            for j in 0..i {
                let proj = dot(q.row(i), q.row(j));
                let prev = q.row(j).to_vec();
                crate::linalg::axpy(-proj, &prev, q.row_mut(i));
            }
        }
        let nrm = crate::linalg::norm(q.row(i));
        q.row_mut(i).iter_mut().for_each(|v| *v /= nrm);
    }
    q
}

pub fn generate_benchmark(cfg: &BenchmarkConfig) -> Result<SyntheticBenchmark> {
    cfg.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n_src = cfg.source_tokens;
    let n_matched = n_src + cfg.target_tokens;

    let mut used = HashSet::new();
    let mut fresh = |rng: &mut ChaCha8Rng, digit: bool| loop {
        let t = random_token(rng, digit);
        if used.insert(t.clone()) {
            break t;
        }
    };
    let matched: Vec<String> = (0..n_matched).map(|_| fresh(&mut rng, false)).collect();
    let unmatched: Vec<String> = (0..cfg.unmatched_tokens).map(|_| fresh(&mut rng, true)).collect();

    let mut words = Vec::new();
    let mut seen_words = HashSet::new();
    for tok in &matched {
        for _ in 0..cfg.words_per_token {
            let partner = &matched[rng.random_range(0..n_matched)];
            let w = if rng.random_bool(0.5) {
                format!("{tok}{partner}")
            } else {
                format!("{partner}{tok}")
            };
            if seen_words.insert(w.clone()) {
                words.push(w);
            }
        }
    }
    let vectors = gaussian_matrix(&mut rng, words.len(), cfg.word_dim, 1.0);
    let store = WordVectorStore::new(words, vectors)?;

    let union = Vocabulary::new(matched.clone())?;
    let match_cfg = MatchConfig::default();
    let table = build_match_table(&union, &store, &match_cfg);
    if let Some(i) = (0..n_matched).find(|&i| table.matches(i).is_empty()) {
        return Err(Error::Infeasible(format!("token {:?} has no matched word", matched[i])));
    }

    // Ground truth over every matched token.
    let a = gaussian_matrix(&mut rng, cfg.coord_dim, cfg.word_dim, 1.0 / (cfg.word_dim as f64).sqrt());
    let means: Vec<Vec<f64>> = (0..n_matched)
        .map(|i| {
            let ids = apply_cap(table.matches(i).to_vec(), &store, match_cfg.max_matches);
            mean_of_rows(ids.iter().map(|&w| store.vector(w)), cfg.word_dim)
        })
        .collect();
    let mut clean = Matrix::zeros(n_matched, cfg.coord_dim);
    for (i, m) in means.iter().enumerate() {
        for d in 0..cfg.coord_dim {
            clean[(i, d)] = dot(a.row(d), m);
        }
    }
    if cfg.generator == Generator::Nonlinear {
        let rms = (clean.as_slice().iter().map(|v| v * v).sum::<f64>() / clean.as_slice().len() as f64).sqrt();
        // gain puts typical pre-activations at ±2, well into the curved part
        let gain = 2.0 / rms.max(1e-12);
        clean.as_mut_slice().iter_mut().for_each(|v| *v = (gain * *v).tanh());
    }
    let rms = (clean.as_slice().iter().map(|v| v * v).sum::<f64>() / clean.as_slice().len() as f64).sqrt();
    let mut coords = clean;
    if cfg.noise > 0.0 {
        for v in coords.as_mut_slice() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v += cfg.noise * rms * z;
        }
    }
    let q = orthonormal_rows(&mut rng, cfg.coord_dim, cfg.embed_dim);
    let embeddings = coords.matmul(&q)?;

    let source_vocab = Vocabulary::new(matched[..n_src].to_vec())?;
    let source_embeddings = embeddings.select_rows(&(0..n_src).collect::<Vec<_>>());

    let mut overlap: Vec<usize> = (0..n_src).collect();
    overlap.shuffle(&mut rng);
    overlap.truncate(cfg.overlap_tokens);
    overlap.sort_unstable();
    // (token, union row or None for unmatched)
    let mut target: Vec<(String, Option<usize>)> = overlap
        .iter()
        .map(|&i| (matched[i].clone(), Some(i)))
        .chain((n_src..n_matched).map(|i| (matched[i].clone(), Some(i))))
        .chain(unmatched.into_iter().map(|t| (t, None)))
        .collect();
    target.shuffle(&mut rng);
    let target_vocab = Vocabulary::new(target.iter().map(|(t, _)| t.clone()).collect())?;
    let mut target_truth = Matrix::zeros(target.len(), cfg.embed_dim);
    let mut heldout = Vec::new();
    for (j, (_, row)) in target.iter().enumerate() {
        if let Some(r) = *row {
            target_truth.row_mut(j).copy_from_slice(embeddings.row(r));
            if r >= n_src {
                heldout.push(j);
            }
        }
    }

    // Each held-out token's translation is its nearest source token by
    // true coordinates.
    let translation = |j: usize| -> usize {
        let t = target_truth.row(j);
        (0..n_src)
            .max_by(|&x, &y| {
                crate::linalg::cosine(t, source_embeddings.row(x))
                    .total_cmp(&crate::linalg::cosine(t, source_embeddings.row(y)))
                    .then(y.cmp(&x))
            })
            .expect("source vocabulary non-empty")
    };
    let sentences = (0..cfg.sentences)
        .map(|_| {
            let target: Vec<usize> = (0..cfg.sentence_len)
                .map(|_| heldout[rng.random_range(0..heldout.len())])
                .collect();
            let source = target.iter().map(|&j| translation(j)).collect();
            SentencePair { source, target }
        })
        .collect();

    Ok(SyntheticBenchmark {
        config: cfg.clone(),
        source_vocab,
        target_vocab,
        store,
        source_embeddings,
        target_truth,
        match_table: table,
        heldout,
        sentences,
    })
}

#[derive(Serialize, Deserialize)]
struct Meta {
    config: BenchmarkConfig,
    heldout: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct SentenceRow {
    pair: usize,
    source_ids: String,
    target_ids: String,
}

fn join(ids: &[usize]) -> String {
    ids.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(";")
}

pub const BENCHMARK_FILES: [&str; 7] = [
    "source_vocab.txt",
    "target_vocab.txt",
    "vectors.txt",
    "source_embeddings.bin",
    "target_truth.bin",
    "sentences.csv",
    "benchmark.json",
];

impl SyntheticBenchmark {
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        save_vocab(&self.source_vocab, dir.join("source_vocab.txt"))?;
        save_vocab(&self.target_vocab, dir.join("target_vocab.txt"))?;
        save_word_vectors(&self.store, dir.join("vectors.txt"))?;
        save_matrix(&self.source_embeddings, dir.join("source_embeddings.bin"))?;
        save_matrix(&self.target_truth, dir.join("target_truth.bin"))?;
        let path = dir.join("sentences.csv");
        let mut w = csv::Writer::from_path(&path).map_err(|e| Error::csv(&path, e))?;
        for (i, s) in self.sentences.iter().enumerate() {
            w.serialize(SentenceRow {
                pair: i,
                source_ids: join(&s.source),
                target_ids: join(&s.target),
            })
            .map_err(|e| Error::csv(&path, e))?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
        let meta = Meta {
            config: self.config.clone(),
            heldout: self.heldout.clone(),
        };
        let path = dir.join("benchmark.json");
        let text = serde_json::to_string_pretty(&meta).map_err(|e| Error::Serde(e.to_string()))?;
        std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
    }

    pub fn read(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let path = dir.join("benchmark.json");
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let meta: Meta = serde_json::from_str(&text).map_err(|e| Error::Serde(format!("{}: {e}", path.display())))?;
        let source_vocab = load_vocab(dir.join("source_vocab.txt"))?;
        let target_vocab = load_vocab(dir.join("target_vocab.txt"))?;
        let store = load_word_vectors(dir.join("vectors.txt"))?;
        let source_embeddings = load_matrix(dir.join("source_embeddings.bin"))?;
        let target_truth = load_matrix(dir.join("target_truth.bin"))?;
        let path = dir.join("sentences.csv");
        let mut r = csv::Reader::from_path(&path).map_err(|e| Error::csv(&path, e))?;
        let parse = |s: &str| -> Result<Vec<usize>> {
            s.split(';')
                .filter(|x| !x.is_empty())
                .map(|x| {
                    x.parse().map_err(|_| Error::Parse {
                        path: path.clone(),
                        line: 0,
                        message: format!("bad token ID {x:?}"),
                    })
                })
                .collect()
        };
        let mut sentences = Vec::new();
        for row in r.deserialize::<SentenceRow>() {
            let row = row.map_err(|e| Error::csv(&path, e))?;
            sentences.push(SentencePair {
                source: parse(&row.source_ids)?,
                target: parse(&row.target_ids)?,
            });
        }
        let mut union: Vec<String> = source_vocab.tokens().to_vec();
        union.extend(meta.heldout.iter().map(|&j| target_vocab.token(j).to_string()));
        let match_table = build_match_table(&Vocabulary::new(union)?, &store, &MatchConfig::default());
        Ok(Self {
            config: meta.config,
            source_vocab,
            target_vocab,
            store,
            source_embeddings,
            target_truth,
            match_table,
            heldout: meta.heldout,
            sentences,
        })
    }

    /// Mean matched word vector per token of the match table.
    pub fn mean_vectors(&self) -> Vec<Vec<f64>> {
        (0..self.match_table.len())
            .map(|i| {
                let ids = apply_cap(self.match_table.matches(i).to_vec(), &self.store, 256);
                mean_of_rows(ids.iter().map(|&w| self.store.vector(w)), self.store.dim())
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(seed: u64, noise: f64) -> BenchmarkConfig {
        BenchmarkConfig {
            seed,
            noise,
            source_tokens: 64,
            target_tokens: 16,
            overlap_tokens: 8,
            unmatched_tokens: 2,
            word_dim: 6,
            coord_dim: 8,
            embed_dim: 12,
            sentences: 10,
            ..Default::default()
        }
    }

    #[test]
    fn invariants_hold() {
        let b = generate_benchmark(&small(1, 0.05)).unwrap();
        assert_eq!(b.source_vocab.len(), 64);
        assert_eq!(b.target_vocab.len(), 8 + 16 + 2);
        assert_eq!(b.heldout.len(), 16);
        assert!((0..b.match_table.len()).all(|i| !b.match_table.matches(i).is_empty()));
        assert!(b.sentences.iter().all(|s| s.source.len() == s.target.len()));
        let digits = b.target_vocab.tokens().iter().filter(|t| t.chars().any(|c| c.is_ascii_digit())).count();
        assert_eq!(digits, 2);
    }

    #[test]
    fn rejects_infeasible_sizes() {
        let c = BenchmarkConfig { source_tokens: 16, ..small(0, 0.0) };
        assert!(matches!(generate_benchmark(&c), Err(Error::Infeasible(_))));
        let c = BenchmarkConfig { coord_dim: 4, ..small(0, 0.0) };
        assert!(matches!(generate_benchmark(&c), Err(Error::Infeasible(_))));
    }

    #[test]
    fn files_are_byte_identical_per_seed() {
        let dir = tempfile::tempdir().unwrap();
        let (a, b) = (dir.path().join("a"), dir.path().join("b"));
        generate_benchmark(&small(5, 0.1)).unwrap().write(&a).unwrap();
        generate_benchmark(&small(5, 0.1)).unwrap().write(&b).unwrap();
        for f in BENCHMARK_FILES {
            assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
        }
        let back = SyntheticBenchmark::read(&a).unwrap();
        let orig = generate_benchmark(&small(5, 0.1)).unwrap();
        assert_eq!(back.source_embeddings, orig.source_embeddings);
        // same match set per token; held-out tokens may come back in another order
        let by_token = |t: &MatchTable| -> std::collections::BTreeMap<String, Vec<usize>> {
            t.tokens.iter().cloned().zip(t.entries.iter().cloned()).collect()
        };
        assert_eq!(by_token(&back.match_table), by_token(&orig.match_table));
        assert_eq!(back.sentences, orig.sentences);
    }

    #[test]
    fn noiseless_truth_is_exactly_linear_in_mean_vectors() {
        // least-squares oracle: fit E = [m, 1]·B over the union tokens
        let b = generate_benchmark(&small(2, 0.0)).unwrap();
        let means = b.mean_vectors();
        let n_src = b.source_vocab.len();
        let truth_of = |i: usize| -> Vec<f64> {
            if i < n_src {
                b.source_embeddings.row(i).to_vec()
            } else {
                let tok = &b.match_table.tokens[i];
                b.target_truth.row(b.target_vocab.id_of(tok).unwrap()).to_vec()
            }
        };
        let n = means.len();
        let d_w = b.store.dim();
        let x = nalgebra::DMatrix::from_fn(n, d_w, |r, c| means[r][c]);
        let y = nalgebra::DMatrix::from_fn(n, b.config.embed_dim, |r, c| truth_of(r)[c]);
        let svd = x.clone().svd(true, true);
        let coef = svd.solve(&y, 1e-12).unwrap();
        let resid = (&x * coef - &y).norm();
        assert!(resid < 1e-8, "residual {resid}");
    }
}
