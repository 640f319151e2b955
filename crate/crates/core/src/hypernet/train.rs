use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::Adam;
use super::augment::augment_batch;
use super::loss::combined_loss;
use super::network::{forward, loss_and_gradients, Mode};
use super::params::HypernetParams;
use super::TrainingConfig;
use crate::corpus_io::WordVectorStore;
use crate::error::{Error, Result};
use crate::linalg::{cosine, norm, Matrix};
use crate::matching::{apply_cap, MatchTable};

/// One `(matched words, target coordinates)` pair.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingExample {
    pub token_id: usize,
    /// Word IDs into the store, at most `max_context` of them.
    pub words: Vec<usize>,
    pub target: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_cosine: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    /// Best-validation parameters, or the final ones without a validation set.
    pub params: HypernetParams,
    pub curve: Vec<CurveRow>,
    pub best_epoch: Option<usize>,
    pub stopped_early: bool,
}

pub(crate) fn mix_seed(parts: &[u64]) -> u64 {
    // splitmix64 folded over the parts
    let mut z = 0x9E37_79B9_7F4A_7C15u64;
    for &p in parts {
        z = z.wrapping_add(p).wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
    }
    z
}

fn check_store(table: &MatchTable, store: &WordVectorStore) -> Result<()> {
    if table.store_size != store.len() {
        return Err(Error::Shape(format!(
            "match table refers to a store of {} words, got {}",
            table.store_size,
            store.len()
        )));
    }
    Ok(())
}

/// Pairs row `i` of `coords` with the match set of token `i`. Tokens without
/// matches are skipped; the table may hold extra tokens past `coords.rows()`.
pub fn build_dataset(
    table: &MatchTable,
    coords: &Matrix,
    store: &WordVectorStore,
    max_context: usize,
) -> Result<Vec<TrainingExample>> {
    check_store(table, store)?;
    if table.len() < coords.rows() {
        return Err(Error::Shape(format!(
            "{} coordinate rows but only {} tokens in the match table",
            coords.rows(),
            table.len()
        )));
    }
    let data: Vec<TrainingExample> = (0..coords.rows())
        .filter(|&i| !table.matches(i).is_empty())
        .map(|i| TrainingExample {
            token_id: i,
            words: apply_cap(table.matches(i).to_vec(), store, max_context),
            target: coords.row(i).to_vec(),
        })
        .collect();
    log::info!(
        "dataset: {} of {} source tokens have matches",
        data.len(),
        coords.rows()
    );
    Ok(data)
}

/// Seeded shuffle of `0..n`, split into (train, validation) index lists.
pub fn split_dataset(n: usize, val_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(mix_seed(&[seed, 0x5917])));
    let mut n_val = ((n as f64) * val_fraction).round() as usize;
    if n_val == 1 {
        // a single validation example cannot score the contrastive term
        n_val = if n >= 4 { 2 } else { 0 };
    }
    n_val = n_val.min(n.saturating_sub(1));
    let val = idx.split_off(n - n_val);
    (idx, val)
}

/// `lr₀ · decay^⌊epoch / every⌋`, epochs counted from 0.
pub fn learning_rate(cfg: &TrainingConfig, epoch: usize) -> f64 {
    cfg.learning_rate * cfg.lr_decay.powi((epoch / cfg.lr_decay_every) as i32)
}

fn vectors<'a>(store: &'a WordVectorStore, words: &[usize]) -> Vec<&'a [f64]> {
    words.iter().map(|&w| store.vector(w)).collect()
}

/// Splits `n` items into batches, folding a trailing singleton into the
/// previous batch when the contrastive term needs pairs.
fn batch_bounds(n: usize, size: usize, needs_pairs: bool) -> Vec<(usize, usize)> {
    let mut out: Vec<(usize, usize)> = (0..n).step_by(size).map(|s| (s, (s + size).min(n))).collect();
    if needs_pairs && out.len() > 1 && out.last().is_some_and(|&(s, e)| e - s == 1) {
        let (_, e) = out.pop().unwrap();
        out.last_mut().unwrap().1 = e;
    }
    out
}

pub fn train(
    dataset: &[TrainingExample],
    store: &WordVectorStore,
    cfg: &TrainingConfig,
) -> Result<TrainOutput> {
    let (tr, va) = split_dataset(dataset.len(), cfg.val_fraction, cfg.seed);
    let pick = |idx: &[usize]| idx.iter().map(|&i| dataset[i].clone()).collect::<Vec<_>>();
    train_with_validation(&pick(&tr), &pick(&va), store, cfg)
}

/// Mean validation loss and cosine under eval mode.
fn validate(
    params: &HypernetParams,
    val: &[TrainingExample],
    store: &WordVectorStore,
    cfg: &TrainingConfig,
) -> Result<(f64, f64)> {
    let inputs: Vec<Vec<&[f64]>> = val.iter().map(|e| vectors(store, &e.words)).collect();
    let preds = forward(params, &inputs, Mode::Eval)?;
    let targets: Vec<Vec<f64>> = val.iter().map(|e| e.target.clone()).collect();
    let loss = combined_loss(&targets, &preds, &cfg.loss())?;
    let cos = preds.iter().zip(&targets).map(|(p, t)| cosine(p, t)).sum::<f64>() / val.len() as f64;
    let mean_norm = preds.iter().map(|p| norm(p)).sum::<f64>() / val.len() as f64;
    log::debug!("validation prediction norm {mean_norm:.4}");
    Ok((loss, cos))
}

pub fn train_with_validation(
    train_set: &[TrainingExample],
    val_set: &[TrainingExample],
    store: &WordVectorStore,
    cfg: &TrainingConfig,
) -> Result<TrainOutput> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::Config("empty training set".into()));
    }
    if cfg.lambda > 0.0 && (train_set.len() == 1 || val_set.len() == 1) {
        return Err(Error::Config(
            "the contrastive term needs at least two examples per split".into(),
        ));
    }
    if let Some(e) = train_set.iter().chain(val_set).find(|e| e.words.is_empty()) {
        return Err(Error::NoMatches { token_id: e.token_id });
    }
    let out_dim = train_set[0].target.len();
    let arch = cfg.architecture(store.dim(), out_dim);
    let mut params = HypernetParams::init(arch, mix_seed(&[cfg.seed, 0x1417]))?;
    log::info!(
        "hypernetwork: {} parameters, {} train / {} validation examples",
        params.param_count(),
        train_set.len(),
        val_set.len()
    );
    let mut adam = Adam::new(&params);
    let loss_cfg = cfg.loss();
    let mut curve = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, HypernetParams)> = None;
    let mut since_best = 0usize;
    let mut stopped_early = false;
    let mut last_good = params.clone();

    for epoch in 0..cfg.epochs {
        let lr = learning_rate(cfg, epoch);
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(mix_seed(&[cfg.seed, 1, epoch as u64])));
        let lists: Vec<Vec<usize>> = order.iter().map(|&i| train_set[i].words.clone()).collect();
        let lists = augment_batch(&lists, cfg.augmentation, mix_seed(&[cfg.seed, 2, epoch as u64]));

        let mut total = 0.0;
        for (b, (s, e)) in batch_bounds(order.len(), cfg.batch_size, cfg.lambda > 0.0)
            .into_iter()
            .enumerate()
        {
            let inputs: Vec<Vec<&[f64]>> = lists[s..e].iter().map(|w| vectors(store, w)).collect();
            let targets: Vec<Vec<f64>> = order[s..e].iter().map(|&i| train_set[i].target.clone()).collect();
            let mode = Mode::Train {
                seed: mix_seed(&[cfg.seed, 3, epoch as u64, b as u64]),
            };
            let diverged = |loss: f64| Error::Diverged {
                epoch,
                loss,
                last_good: Box::new(last_good.clone()),
            };
            let (loss, grads) = match loss_and_gradients(&params, &inputs, &targets, &loss_cfg, mode) {
                Err(Error::NonFiniteGradient { tensor }) => {
                    log::error!("non-finite gradient in {tensor} at epoch {epoch}, batch {b}");
                    return Err(diverged(f64::NAN));
                }
                r => r?,
            };
            if !loss.is_finite() {
                return Err(diverged(loss));
            }
            adam.step(&mut params, &grads, lr);
            if !params.is_finite() {
                return Err(diverged(loss));
            }
            total += loss * (e - s) as f64;
        }
        let train_loss = total / train_set.len() as f64;
        last_good.clone_from(&params);

        let (val_loss, val_cosine) = if val_set.is_empty() {
            (f64::NAN, f64::NAN)
        } else {
            validate(&params, val_set, store, cfg)?
        };
        curve.push(CurveRow {
            epoch: epoch + 1,
            train_loss,
            val_loss,
            val_cosine,
        });
        log::debug!(
            "epoch {:>4} lr {lr:.3e} train {train_loss:.6} val {val_loss:.6} cos {val_cosine:.4}",
            epoch + 1
        );

        if !val_set.is_empty() {
            let improved = best.as_ref().is_none_or(|(b, _, _)| val_loss < b - cfg.min_delta);
            if improved {
                best = Some((val_loss, epoch + 1, params.clone()));
                since_best = 0;
            } else {
                since_best += 1;
                if cfg.patience > 0 && since_best >= cfg.patience {
                    log::info!("early stop after epoch {}", epoch + 1);
                    stopped_early = true;
                    break;
                }
            }
        }
    }

    Ok(match best {
        Some((_, epoch, p)) => TrainOutput {
            params: p,
            curve,
            best_epoch: Some(epoch),
            stopped_early,
        },
        None => TrainOutput {
            params,
            curve,
            best_epoch: None,
            stopped_early,
        },
    })
}

/// Eval-mode predictions keyed by token ID. Match sets longer than
/// `max_context` are capped the same way as during training.
pub fn predict(
    params: &HypernetParams,
    table: &MatchTable,
    store: &WordVectorStore,
    token_ids: &[usize],
    max_context: usize,
) -> Result<BTreeMap<usize, Vec<f64>>> {
    check_store(table, store)?;
    let mut words = Vec::with_capacity(token_ids.len());
    for &id in token_ids {
        if id >= table.len() {
            return Err(Error::Shape(format!("token ID {id} outside the match table")));
        }
        if table.matches(id).is_empty() {
            return Err(Error::NoMatches { token_id: id });
        }
        words.push(apply_cap(table.matches(id).to_vec(), store, max_context));
    }
    let inputs: Vec<Vec<&[f64]>> = words.iter().map(|w| vectors(store, w)).collect();
    let preds = forward(params, &inputs, Mode::Eval)?;
    Ok(token_ids.iter().copied().zip(preds).collect())
}

pub fn save_curve(rows: &[CurveRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_curve(path: impl AsRef<Path>) -> Result<Vec<CurveRow>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    r.deserialize()
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::csv(path, e))
}
