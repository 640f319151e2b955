//! Target coordinate initialization: copy overlapping tokens, predict
//! matched tokens (hypernetwork or OFA-style convex combination), and sample
//! the rest from a per-dimension Gaussian fitted to the source coordinates.

use std::collections::{BTreeMap, HashMap};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus_io::{InitReport, Provenance, Vocabulary, WordVectorStore};
use crate::error::{Error, Result};
use crate::hypernet::{predict, HypernetParams};
use crate::linalg::{axpy, cosine, mean_of_rows, Matrix};
use crate::matching::{normalize_token, MarkerStrip, MatchConfig, MatchTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Hyper,
    Ofa,
    Random,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Hyper => "hyper",
            Strategy::Ofa => "ofa",
            Strategy::Random => "random",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InitConfig {
    pub strategy: Strategy,
    /// OFA neighbour count.
    pub k: usize,
    /// OFA softmax temperature.
    pub temperature: f64,
    /// Marker stripped from both sides before comparing tokens for overlap;
    /// `none` compares raw strings.
    pub overlap_marker: MarkerStrip,
    pub max_context: usize,
    pub seed: u64,
}

impl Default for InitConfig {
    fn default() -> Self {
        Self {
            strategy: Strategy::Hyper,
            k: 10,
            temperature: 0.1,
            overlap_marker: MarkerStrip::None,
            max_context: 256,
            seed: 0,
        }
    }
}

/// Which step initializes each target row.
#[derive(Debug, Clone, PartialEq)]
pub struct InitPlan {
    pub strategy: Strategy,
    pub target_tokens: Vec<String>,
    /// `(target ID, source ID)` pairs, ascending by target ID.
    pub overlap: Vec<(usize, usize)>,
    pub predicted: Vec<usize>,
    pub random: Vec<usize>,
    /// Target ID → row of the match table holding the same token string.
    pub match_row: Vec<Option<usize>>,
}

impl InitPlan {
    pub fn len(&self) -> usize {
        self.target_tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.target_tokens.is_empty()
    }
}

fn overlap_key(token: &str, marker: MarkerStrip) -> String {
    let cfg = MatchConfig {
        strip_marker: marker,
        ..Default::default()
    };
    normalize_token(token, &cfg)
}

pub fn plan_init(
    source: &Vocabulary,
    target: &Vocabulary,
    table: &MatchTable,
    strategy: Strategy,
    overlap_marker: MarkerStrip,
) -> InitPlan {
    let mut source_ids: HashMap<String, usize> = HashMap::with_capacity(source.len());
    for (i, t) in source.tokens().iter().enumerate() {
        source_ids.entry(overlap_key(t, overlap_marker)).or_insert(i);
    }
    let rows = table.index_by_token();
    let mut plan = InitPlan {
        strategy,
        target_tokens: target.tokens().to_vec(),
        overlap: Vec::new(),
        predicted: Vec::new(),
        random: Vec::new(),
        match_row: Vec::with_capacity(target.len()),
    };
    let mut missing = 0usize;
    for (j, tok) in target.tokens().iter().enumerate() {
        let row = rows.get(tok.as_str()).copied();
        missing += usize::from(row.is_none());
        plan.match_row.push(row);
        if let Some(&s) = source_ids.get(&overlap_key(tok, overlap_marker)) {
            plan.overlap.push((j, s));
        } else if strategy != Strategy::Random && row.is_some_and(|r| !table.matches(r).is_empty()) {
            plan.predicted.push(j);
        } else {
            plan.random.push(j);
        }
    }
    if missing > 0 {
        log::warn!("{missing} target tokens are absent from the match table");
    }
    plan
}

/// Step 1: overlap rows are copied bit for bit.
pub fn copy_overlap(plan: &InitPlan, source_coords: &Matrix) -> BTreeMap<usize, Vec<f64>> {
    plan.overlap
        .iter()
        .map(|&(t, s)| (t, source_coords.row(s).to_vec()))
        .collect()
}

/// Mean of a token's matched word vectors.
pub fn token_representation(table: &MatchTable, row: usize, store: &WordVectorStore) -> Option<Vec<f64>> {
    let ids = table.matches(row);
    if ids.is_empty() {
        return None;
    }
    Some(mean_of_rows(ids.iter().map(|&w| store.vector(w)), store.dim()))
}

/// Convex weights over `k` neighbours: softmax of `cos / temp` over the
/// `k` largest cosines. Ties keep the lower index.
pub fn ofa_weights(cosines: &[f64], k: usize, temp: f64) -> Vec<(usize, f64)> {
    let mut order: Vec<usize> = (0..cosines.len()).collect();
    order.sort_by(|&a, &b| cosines[b].total_cmp(&cosines[a]).then(a.cmp(&b)));
    order.truncate(k);
    let max = order.first().map_or(0.0, |&i| cosines[i] / temp);
    let exps: Vec<f64> = order.iter().map(|&i| (cosines[i] / temp - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    order.into_iter().zip(exps).map(|(i, e)| (i, e / z)).collect()
}

/// OFA-style baseline for the predicted set: each row is a softmax-weighted
/// convex combination of the `k` source rows whose word-vector
/// representations are most cosine-similar.
pub fn ofa_init(
    plan: &InitPlan,
    source: &Vocabulary,
    source_coords: &Matrix,
    table: &MatchTable,
    store: &WordVectorStore,
    k: usize,
    temp: f64,
) -> Result<BTreeMap<usize, Vec<f64>>> {
    if k == 0 || !(temp > 0.0) {
        return Err(Error::Config(format!("OFA needs k ≥ 1 and temp > 0 (k={k}, temp={temp})")));
    }
    let rows = table.index_by_token();
    let candidates: Vec<(usize, Vec<f64>)> = source
        .tokens()
        .iter()
        .enumerate()
        .filter_map(|(s, tok)| {
            let r = *rows.get(tok.as_str())?;
            token_representation(table, r, store).map(|rep| (s, rep))
        })
        .collect();
    if candidates.is_empty() && !plan.predicted.is_empty() {
        return Err(Error::Config("no source token has matched words".into()));
    }
    if k > candidates.len() {
        log::warn!("OFA k={k} exceeds the {} usable source tokens", candidates.len());
    }
    plan.predicted
        .par_iter()
        .map(|&j| {
            let rep = plan.match_row[j]
                .and_then(|r| token_representation(table, r, store))
                .ok_or(Error::NoMatches { token_id: j })?;
            let cos: Vec<f64> = candidates.iter().map(|(_, c)| cosine(&rep, c)).collect();
            let mut row = vec![0.0; source_coords.cols()];
            for (i, w) in ofa_weights(&cos, k, temp) {
                axpy(w, source_coords.row(candidates[i].0), &mut row);
            }
            Ok((j, row))
        })
        .collect()
}

/// Step 2 with the hypernetwork.
pub fn hyper_init(
    plan: &InitPlan,
    params: &HypernetParams,
    table: &MatchTable,
    store: &WordVectorStore,
    max_context: usize,
) -> Result<BTreeMap<usize, Vec<f64>>> {
    let rows: Vec<usize> = plan
        .predicted
        .iter()
        .map(|&j| plan.match_row[j].ok_or(Error::NoMatches { token_id: j }))
        .collect::<Result<_>>()?;
    let preds = predict(params, table, store, &rows, max_context)?;
    Ok(plan
        .predicted
        .iter()
        .zip(&rows)
        .map(|(&j, r)| (j, preds[r].clone()))
        .collect())
}

/// Per-dimension mean and sample variance.
#[derive(Debug, Clone, PartialEq)]
pub struct Gaussian {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
}

impl Gaussian {
    pub fn fit(m: &Matrix) -> Result<Self> {
        let n = m.rows();
        if n == 0 {
            return Err(Error::Shape("cannot fit a Gaussian to an empty matrix".into()));
        }
        let first = m.row(0).to_vec();
        let mut shift = vec![0.0; m.cols()];
        for r in m.iter_rows() {
            for ((s, x), f) in shift.iter_mut().zip(r).zip(&first) {
                *s += x - f;
            }
        }
        // Shifted by the first row so that a constant column is exact.
        let mean: Vec<f64> = first.iter().zip(&shift).map(|(f, s)| f + s / n as f64).collect();
        let mut variance = vec![0.0; m.cols()];
        if n > 1 {
            for r in m.iter_rows() {
                for ((v, x), mu) in variance.iter_mut().zip(r).zip(&mean) {
                    *v += (x - mu) * (x - mu);
                }
            }
            variance.iter_mut().for_each(|v| *v /= (n - 1) as f64);
        }
        Ok(Self { mean, variance })
    }

    /// Row for target position `id`; depends only on `(seed, id)`.
    pub fn sample(&self, seed: u64, id: usize) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(id as u64);
        self.mean
            .iter()
            .zip(&self.variance)
            .map(|(mu, var)| {
                let z: f64 = StandardNormal.sample(&mut rng);
                mu + var.sqrt() * z
            })
            .collect()
    }
}

/// Step 3: Gaussian rows for the random set.
pub fn random_init(plan: &InitPlan, source_coords: &Matrix, seed: u64) -> Result<BTreeMap<usize, Vec<f64>>> {
    let g = Gaussian::fit(source_coords)?;
    Ok(plan.random.iter().map(|&j| (j, g.sample(seed, j))).collect())
}

#[derive(Debug, Clone)]
pub struct Assembled {
    pub coords: Matrix,
    pub full: Option<Matrix>,
    pub report: InitReport,
}

/// Writes every target row exactly once and optionally restores
/// `E^t = F^t · P`.
pub fn assemble(
    plan: &InitPlan,
    copied: &BTreeMap<usize, Vec<f64>>,
    predicted: &BTreeMap<usize, Vec<f64>>,
    random: &BTreeMap<usize, Vec<f64>>,
    dim: usize,
    primitive: Option<&Matrix>,
) -> Result<Assembled> {
    let n = plan.len();
    let expect = |part: &BTreeMap<usize, Vec<f64>>, ids: &mut dyn Iterator<Item = usize>, name: &str| -> Result<()> {
        if !part.keys().copied().eq(ids) {
            return Err(Error::Coverage(format!("{name} rows do not match the plan")));
        }
        Ok(())
    };
    expect(copied, &mut plan.overlap.iter().map(|&(t, _)| t), "copied")?;
    expect(predicted, &mut plan.predicted.iter().copied(), "predicted")?;
    expect(random, &mut plan.random.iter().copied(), "random")?;

    let mut coords = Matrix::zeros(n, dim);
    let mut provenance: Vec<Option<Provenance>> = vec![None; n];
    for (part, tag) in [
        (copied, Provenance::Copied),
        (predicted, Provenance::Predicted),
        (random, Provenance::Random),
    ] {
        for (&j, row) in part {
            if j >= n {
                return Err(Error::Coverage(format!("row {j} outside a target vocabulary of {n}")));
            }
            if row.len() != dim {
                return Err(Error::Shape(format!("row {j} has dimension {}, expected {dim}", row.len())));
            }
            if let Some(prev) = provenance[j] {
                return Err(Error::Coverage(format!(
                    "row {j} written as both {} and {}",
                    prev.as_str(),
                    tag.as_str()
                )));
            }
            provenance[j] = Some(tag);
            coords.row_mut(j).copy_from_slice(row);
        }
    }
    let provenance: Vec<Provenance> = provenance
        .into_iter()
        .enumerate()
        .map(|(j, p)| p.ok_or_else(|| Error::Coverage(format!("row {j} never written"))))
        .collect::<Result<_>>()?;
    let full = primitive.map(|p| coords.matmul(p)).transpose()?;
    Ok(Assembled {
        coords,
        full,
        report: InitReport::from_provenance(plan.target_tokens.clone(), provenance),
    })
}

/// Inputs shared by every strategy.
pub struct InitInputs<'a> {
    pub source: &'a Vocabulary,
    pub target: &'a Vocabulary,
    pub table: &'a MatchTable,
    pub store: &'a WordVectorStore,
    pub source_coords: &'a Matrix,
    pub primitive: Option<&'a Matrix>,
    pub hypernet: Option<&'a HypernetParams>,
}

/// Plans and runs all three steps. Without hypernetwork parameters the
/// `hyper` strategy sends its predicted set to random init.
pub fn initialize(inputs: &InitInputs<'_>, cfg: &InitConfig) -> Result<(InitPlan, Assembled)> {
    let mut strategy = cfg.strategy;
    if strategy == Strategy::Hyper && inputs.hypernet.is_none() {
        log::warn!("no hypernetwork parameters; matched tokens fall back to random init");
        strategy = Strategy::Random;
    }
    if inputs.source_coords.rows() != inputs.source.len() {
        return Err(Error::Shape(format!(
            "{} source coordinate rows for {} source tokens",
            inputs.source_coords.rows(),
            inputs.source.len()
        )));
    }
    let plan = plan_init(inputs.source, inputs.target, inputs.table, strategy, cfg.overlap_marker);
    let copied = copy_overlap(&plan, inputs.source_coords);
    let predicted = match (strategy, inputs.hypernet) {
        (Strategy::Hyper, Some(p)) => hyper_init(&plan, p, inputs.table, inputs.store, cfg.max_context)?,
        (Strategy::Ofa, _) => ofa_init(
            &plan,
            inputs.source,
            inputs.source_coords,
            inputs.table,
            inputs.store,
            cfg.k,
            cfg.temperature,
        )?,
        _ => BTreeMap::new(),
    };
    let random = random_init(&plan, inputs.source_coords, cfg.seed)?;
    let out = assemble(
        &plan,
        &copied,
        &predicted,
        &random,
        inputs.source_coords.cols(),
        inputs.primitive,
    )?;
    log::info!(
        "init ({}): copied {}, predicted {}, random {}, total {}",
        cfg.strategy.as_str(),
        out.report.copied,
        out.report.predicted,
        out.report.random,
        out.report.total
    );
    Ok((plan, out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hypernet::Architecture;
    use crate::matching::build_match_table;
    use rand::Rng;

    fn vocab(tokens: &[&str]) -> Vocabulary {
        Vocabulary::new(tokens.iter().map(|s| s.to_string()).collect()).unwrap()
    }

    fn store(words: &[&str], vecs: &[[f64; 2]]) -> WordVectorStore {
        WordVectorStore::new(words.iter().map(|s| s.to_string()).collect(), Matrix::from_rows(vecs)).unwrap()
    }

    /// source {a, b}, target {b, c, d}; c matches w1, d matches nothing.
    fn toy() -> (Vocabulary, Vocabulary, WordVectorStore, MatchTable) {
        let src = vocab(&["a", "b"]);
        let tgt = vocab(&["b", "c", "d"]);
        let st = store(&["xax", "ycy", "bbb"], &[[1.0, 0.0], [0.0, 1.0], [0.5, 0.5]]);
        let union = vocab(&["a", "b", "c", "d"]);
        let table = build_match_table(&union, &st, &MatchConfig::default());
        (src, tgt, st, table)
    }

    #[test]
    fn three_token_plan() {
        let (src, tgt, _, table) = toy();
        let plan = plan_init(&src, &tgt, &table, Strategy::Hyper, MarkerStrip::None);
        assert_eq!(plan.overlap, vec![(0, 1)]);
        assert_eq!(plan.predicted, vec![1]);
        assert_eq!(plan.random, vec![2]);
        let r = plan_init(&src, &tgt, &table, Strategy::Random, MarkerStrip::None);
        assert_eq!((r.predicted.len(), r.random), (0, vec![1, 2]));
    }

    #[test]
    fn overlap_is_raw_unless_marker_normalized() {
        let src = vocab(&["▁b", "a"]);
        let tgt = vocab(&["b", "▁a"]);
        let table = build_match_table(&vocab(&["x"]), &store(&["y"], &[[1.0, 0.0]]), &MatchConfig::default());
        assert!(plan_init(&src, &tgt, &table, Strategy::Hyper, MarkerStrip::None).overlap.is_empty());
        let p = plan_init(&src, &tgt, &table, Strategy::Hyper, MarkerStrip::Sp);
        assert_eq!(p.overlap, vec![(0, 0), (1, 1)]);
    }

    #[test]
    fn copy_is_bit_exact_and_report_counts() {
        let (src, tgt, st, table) = toy();
        let fs = Matrix::from_rows(&[[0.1, 0.2], [0.5, -0.5]]);
        let params = HypernetParams::init(
            Architecture { input_dim: 2, hidden_dim: 3, num_layers: 1, output_dim: 2, dropout: 0.4 },
            1,
        )
        .unwrap();
        let inputs = InitInputs {
            source: &src,
            target: &tgt,
            table: &table,
            store: &st,
            source_coords: &fs,
            primitive: None,
            hypernet: Some(&params),
        };
        let (plan, out) = initialize(&inputs, &InitConfig::default()).unwrap();
        assert_eq!(out.coords.row(0), &[0.5, -0.5]);
        assert_eq!((out.report.copied, out.report.predicted, out.report.random), (1, 1, 1));
        // predicted row delegates to predict on c's match set
        let c_row = table.index_by_token()["c"];
        let direct = predict(&params, &table, &st, &[c_row], 256).unwrap();
        assert_eq!(out.coords.row(1), direct[&c_row].as_slice());
        let disjoint = plan_init(&src, &vocab(&["zz"]), &table, Strategy::Hyper, MarkerStrip::None);
        assert!(copy_overlap(&disjoint, &fs).is_empty());

        // hyper → random re-tags only the predicted row
        let cfg = InitConfig { strategy: Strategy::Random, ..Default::default() };
        let (_, r) = initialize(&inputs, &cfg).unwrap();
        assert_eq!(r.coords.row(0), out.coords.row(0));
        assert_eq!(r.coords.row(2), out.coords.row(2));
        assert_eq!(r.report.provenance[1], Provenance::Random);
        assert_eq!(plan.strategy, Strategy::Hyper);
    }

    #[test]
    fn hyper_without_params_falls_back_to_random() {
        let (src, tgt, st, table) = toy();
        let fs = Matrix::from_rows(&[[0.1, 0.2], [0.5, -0.5]]);
        let inputs = InitInputs {
            source: &src,
            target: &tgt,
            table: &table,
            store: &st,
            source_coords: &fs,
            primitive: None,
            hypernet: None,
        };
        let (_, out) = initialize(&inputs, &InitConfig::default()).unwrap();
        assert_eq!((out.report.copied, out.report.predicted, out.report.random), (1, 0, 2));
    }

    #[test]
    fn full_overlap_copies_everything() {
        let src = vocab(&["p", "q", "r"]);
        let fs = Matrix::from_rows(&[[1.5, -2.0], [0.0, 3.25], [7.0, 1e-9]]);
        let st = store(&["pq"], &[[1.0, 1.0]]);
        let table = build_match_table(&src, &st, &MatchConfig::default());
        for strategy in [Strategy::Hyper, Strategy::Ofa, Strategy::Random] {
            let inputs = InitInputs {
                source: &src,
                target: &src,
                table: &table,
                store: &st,
                source_coords: &fs,
                primitive: None,
                hypernet: None,
            };
            let cfg = InitConfig { strategy, ..Default::default() };
            assert_eq!(initialize(&inputs, &cfg).unwrap().1.coords, fs);
        }
    }

    #[test]
    fn ofa_weights_examples() {
        let w = ofa_weights(&[0.3, 0.3], 2, 0.1);
        assert_eq!(w.len(), 2);
        assert!((w[0].1 - 0.5).abs() < 1e-15 && (w[1].1 - 0.5).abs() < 1e-15);
        let w = ofa_weights(&[0.1, 0.9, 0.4], 1, 0.1);
        assert_eq!(w, vec![(1, 1.0)]);
    }

    #[test]
    fn ofa_matches_brute_force_on_toy_store() {
        // five source tokens, each matching a single word
        let words = ["aa1", "bb2", "cc3", "dd4", "ee5", "aabb", "ccdd"];
        let vecs = [
            [1.0, 0.0],
            [0.8, 0.6],
            [0.0, 1.0],
            [-0.6, 0.8],
            [-1.0, 0.1],
            [0.9, 0.2],
            [-0.2, 1.0],
        ];
        let st = store(&words, &vecs);
        let src = vocab(&["aa1", "bb2", "cc3", "dd4", "ee5"]);
        let tgt = vocab(&["aab", "cdd"]);
        let union = vocab(&["aa1", "bb2", "cc3", "dd4", "ee5", "aab", "cdd"]);
        let table = build_match_table(&union, &st, &MatchConfig::default());
        let fs = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0], [2.0, 2.0], [-1.0, 0.5], [0.3, -0.3]]);
        let plan = plan_init(&src, &tgt, &table, Strategy::Ofa, MarkerStrip::None);
        assert_eq!(plan.predicted, vec![0, 1]);
        let got = ofa_init(&plan, &src, &fs, &table, &st, 3, 0.1).unwrap();

        for (j, rep) in [(0usize, vecs[5]), (1, vecs[6])] {
            // brute force: score all sources, sort, softmax over the top three
            let mut scored: Vec<(f64, usize)> = (0..5)
                .map(|s| {
                    let v = vecs[s];
                    let c = (rep[0] * v[0] + rep[1] * v[1])
                        / ((rep[0].powi(2) + rep[1].powi(2)).sqrt() * (v[0].powi(2) + v[1].powi(2)).sqrt());
                    (c, s)
                })
                .collect();
            scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
            let top = &scored[..3];
            let z: f64 = top.iter().map(|(c, _)| (c / 0.1).exp()).sum();
            let mut row = [0.0, 0.0];
            let mut wsum = 0.0;
            for &(c, s) in top {
                let w = (c / 0.1).exp() / z;
                assert!(w >= 0.0);
                wsum += w;
                row[0] += w * fs[(s, 0)];
                row[1] += w * fs[(s, 1)];
            }
            assert!((wsum - 1.0).abs() < 1e-12);
            assert!((got[&j][0] - row[0]).abs() < 1e-12 && (got[&j][1] - row[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn gaussian_constant_column_is_exact() {
        let fs = Matrix::from_rows(&[[0.1, 3.0], [0.7, 3.0], [-0.4, 3.0]]);
        let g = Gaussian::fit(&fs).unwrap();
        assert_eq!(g.variance[1], 0.0);
        for j in 0..20 {
            assert_eq!(g.sample(4, j)[1], 3.0);
        }
    }

    #[test]
    fn gaussian_sample_mean_within_clt_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let fs = Matrix::from_rows(
            &(0..50)
                .map(|_| [rng.random_range(-2.0..3.0), rng.random_range(5.0..6.0)])
                .collect::<Vec<_>>(),
        );
        let g = Gaussian::fit(&fs).unwrap();
        let n = 10_000;
        let mut sum = [0.0, 0.0];
        for j in 0..n {
            let r = g.sample(9, j);
            sum[0] += r[0];
            sum[1] += r[1];
        }
        for d in 0..2 {
            let bound = 4.0 * g.variance[d].sqrt() / (n as f64).sqrt();
            assert!((sum[d] / n as f64 - g.mean[d]).abs() < bound);
        }
    }

    #[test]
    fn random_rows_are_seeded() {
        let (src, tgt, _, table) = toy();
        let fs = Matrix::from_rows(&[[0.1, 0.2], [0.5, -0.5]]);
        let plan = plan_init(&src, &tgt, &table, Strategy::Random, MarkerStrip::None);
        let a = random_init(&plan, &fs, 1).unwrap();
        assert_eq!(a, random_init(&plan, &fs, 1).unwrap());
        assert_ne!(a, random_init(&plan, &fs, 2).unwrap());
    }

    #[test]
    fn assemble_rejects_bad_coverage() {
        let (src, tgt, _, table) = toy();
        let fs = Matrix::from_rows(&[[0.1, 0.2], [0.5, -0.5]]);
        let plan = plan_init(&src, &tgt, &table, Strategy::Random, MarkerStrip::None);
        let copied = copy_overlap(&plan, &fs);
        let random = random_init(&plan, &fs, 0).unwrap();
        assert!(assemble(&plan, &copied, &BTreeMap::new(), &random, 2, None).is_ok());
        let mut missing = random.clone();
        missing.remove(&2);
        assert!(matches!(
            assemble(&plan, &copied, &BTreeMap::new(), &missing, 2, None),
            Err(Error::Coverage(_))
        ));
        let mut dup = BTreeMap::new();
        dup.insert(0usize, vec![0.0, 0.0]);
        assert!(matches!(assemble(&plan, &copied, &dup, &random, 2, None), Err(Error::Coverage(_))));
    }

    #[test]
    fn emit_full_recovers_copied_embeddings() {
        use crate::factorization::{truncated_svd, SvdConfig};
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let es = Matrix::from_vec(4, 3, (0..12).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let f = truncated_svd(&es, 3, &SvdConfig::default()).unwrap();
        let src = vocab(&["a", "b", "c", "d"]);
        let tgt = vocab(&["z", "c", "a"]);
        let st = store(&["q"], &[[1.0, 0.0]]);
        let table = build_match_table(&tgt, &st, &MatchConfig::default());
        let inputs = InitInputs {
            source: &src,
            target: &tgt,
            table: &table,
            store: &st,
            source_coords: &f.coords,
            primitive: Some(&f.primitive),
            hypernet: None,
        };
        let (_, out) = initialize(&inputs, &InitConfig::default()).unwrap();
        let full = out.full.unwrap();
        assert_eq!(full.shape(), (3, 3));
        for (t, s) in [(1usize, 2usize), (2, 0)] {
            for d in 0..3 {
                assert!((full[(t, d)] - es[(s, d)]).abs() < 1e-8);
            }
        }
    }
}
