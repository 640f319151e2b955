use std::collections::BTreeMap;

use serde::Serialize;

use crate::corpus_io::WordVectorStore;
use crate::error::{Error, Result};
use crate::hypernet::{forward, HypernetParams, Mode, TrainingExample};
use crate::linalg::{cosine, mean_of_rows, Matrix};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalResult {
    pub metric: String,
    pub value: f64,
    pub per_item: Vec<f64>,
    pub config: BTreeMap<String, String>,
}

impl EvalResult {
    fn new(metric: &str, per_item: Vec<f64>) -> Self {
        let value = if per_item.is_empty() {
            f64::NAN
        } else {
            per_item.iter().sum::<f64>() / per_item.len() as f64
        };
        Self {
            metric: metric.to_string(),
            value,
            per_item,
            config: BTreeMap::new(),
        }
    }

    pub fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.config.insert(key.to_string(), value.to_string());
        self
    }
}

/// Mean cosine between eval-mode predictions and the true coordinates.
pub fn heldout_cosine_eval(
    params: &HypernetParams,
    examples: &[TrainingExample],
    store: &WordVectorStore,
) -> Result<EvalResult> {
    let inputs: Vec<Vec<&[f64]>> = examples
        .iter()
        .map(|e| e.words.iter().map(|&w| store.vector(w)).collect())
        .collect();
    let preds = forward(params, &inputs, Mode::Eval)?;
    let targets: Vec<&[f64]> = examples.iter().map(|e| e.target.as_slice()).collect();
    Ok(cosine_eval(&preds, &targets).with("examples", examples.len()))
}

/// Mean row-wise cosine between two aligned lists of vectors.
pub fn cosine_eval<A: AsRef<[f64]>, B: AsRef<[f64]>>(preds: &[A], truth: &[B]) -> EvalResult {
    let per_item = preds
        .iter()
        .zip(truth)
        .map(|(p, t)| cosine(p.as_ref(), t.as_ref()))
        .collect();
    EvalResult::new("heldout_cosine", per_item)
}

/// Mean cosine between selected rows of two matrices.
pub fn row_cosine_eval(pred: &Matrix, truth: &Matrix, rows: &[usize]) -> EvalResult {
    let p: Vec<&[f64]> = rows.iter().map(|&r| pred.row(r)).collect();
    let t: Vec<&[f64]> = rows.iter().map(|&r| truth.row(r)).collect();
    cosine_eval(&p, &t)
}

/// Fraction of queries whose gold candidate is among the `k` most
/// cosine-similar candidates. Ties rank the lower candidate index first.
pub fn topk_retrieval_accuracy<A: AsRef<[f64]> + Sync, B: AsRef<[f64]> + Sync>(
    queries: &[A],
    candidates: &[B],
    gold: &[usize],
    k: usize,
) -> Result<EvalResult> {
    use rayon::prelude::*;
    if k > candidates.len() || k == 0 {
        return Err(Error::KTooLarge {
            k,
            candidates: candidates.len(),
        });
    }
    if queries.len() != gold.len() || queries.len() != candidates.len() {
        return Err(Error::Shape(format!(
            "{} queries, {} candidates, {} gold entries",
            queries.len(),
            candidates.len(),
            gold.len()
        )));
    }
    let mut seen = vec![false; candidates.len()];
    for &g in gold {
        if g >= candidates.len() || std::mem::replace(&mut seen[g], true) {
            return Err(Error::Config("gold map is not a bijection".into()));
        }
    }
    let per_item = queries
        .par_iter()
        .zip(gold.par_iter())
        .map(|(q, &g)| {
            let q = q.as_ref();
            let gold_sim = cosine(q, candidates[g].as_ref());
            let ahead = candidates
                .iter()
                .enumerate()
                .filter(|&(c, cand)| {
                    let s = cosine(q, cand.as_ref());
                    s > gold_sim || (s == gold_sim && c < g)
                })
                .count();
            if ahead < k { 1.0 } else { 0.0 }
        })
        .collect();
    Ok(EvalResult::new(&format!("top{k}_accuracy"), per_item).with("k", k))
}

/// Sentence representation: mean of the token rows ("static-mean").
pub fn sentence_reps(embeddings: &Matrix, sentences: &[Vec<usize>]) -> Vec<Vec<f64>> {
    sentences
        .iter()
        .map(|s| mean_of_rows(s.iter().map(|&t| embeddings.row(t)), embeddings.cols()))
        .collect()
}
