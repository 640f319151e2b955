//! factorize → match → train → init → evaluate, with a hashed manifest.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::benchmark::{BenchmarkConfig, SyntheticBenchmark};
use super::metrics::{heldout_cosine_eval, row_cosine_eval, sentence_reps, topk_retrieval_accuracy};
use crate::corpus_io::{save_matrix, save_report, InitReport, Vocabulary};
use crate::error::{Error, Result};
use crate::factorization::{truncated_svd, Factorization, SvdConfig};
use crate::hypernet::{
    build_dataset, save_curve, train, HypernetParams, TrainingConfig, TrainingExample,
};
use crate::initializer::{initialize, InitConfig, InitInputs, Strategy};
use crate::linalg::Matrix;
use crate::matching::{apply_cap, build_match_table, save_match_table, MatchConfig, MatchTable};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Overrides the seeds of the factorization, training and init stages.
    pub seed: u64,
    pub benchmark: BenchmarkConfig,
    pub svd: SvdConfig,
    pub matching: MatchConfig,
    pub training: TrainingConfig,
    pub init: InitConfig,
    pub retrieval_k: usize,
    /// Strategies evaluated by `compare`.
    pub strategies: Vec<Strategy>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            benchmark: BenchmarkConfig::default(),
            svd: SvdConfig::default(),
            matching: MatchConfig::default(),
            training: TrainingConfig::default(),
            init: InitConfig::default(),
            retrieval_k: 10,
            strategies: vec![Strategy::Hyper, Strategy::Ofa, Strategy::Random],
        }
    }
}

impl PipelineConfig {
    /// Reads TOML, or JSON when the extension is `.json`.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        load_config(path.as_ref())
    }

    /// Copy with the top-level seed pushed into every stage.
    pub fn resolved(&self) -> Self {
        let mut c = self.clone();
        c.svd.seed = self.seed;
        c.training.seed = self.seed;
        c.init.seed = self.seed;
        c
    }

    /// sha256 of the canonical JSON form of the resolved config.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(&self.resolved()).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

pub fn load_config<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let parsed = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).map_err(|e| e.to_string())
    } else {
        toml::from_str(&text).map_err(|e| e.to_string())
    };
    parsed.map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    pub name: String,
    /// Relative to the output directory.
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub benchmark_seed: u64,
    pub config_hash: String,
    pub threads: usize,
    pub artifacts: Vec<Artifact>,
}

impl Manifest {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::Serde(e.to_string()))?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Serde(format!("{}: {e}", path.display())))
    }
}

pub const MANIFEST_FILE: &str = "manifest.json";

fn file_sha256(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub strategy: String,
    pub metric: String,
    pub value: f64,
    pub items: usize,
    pub representation: String,
    pub config_hash: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub strategy: String,
    pub heldout_cosine: f64,
    pub topk_accuracy: f64,
    pub k: usize,
    pub copied: usize,
    pub predicted: usize,
    pub random: usize,
    pub config_hash: String,
    pub benchmark_seed: u64,
}

fn write_csv<T: Serialize>(rows: &[T], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

struct Run<'a> {
    out: PathBuf,
    manifest: Manifest,
    cfg: PipelineConfig,
    bench: &'a SyntheticBenchmark,
}

impl Run<'_> {
    fn new<'a>(cfg: &PipelineConfig, bench: &'a SyntheticBenchmark, out: &Path) -> Result<Run<'a>> {
        std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
        let cfg = cfg.resolved();
        Ok(Run {
            out: out.to_path_buf(),
            manifest: Manifest {
                seed: cfg.seed,
                benchmark_seed: bench.config.seed,
                config_hash: cfg.hash(),
                threads: rayon::current_num_threads(),
                artifacts: Vec::new(),
            },
            cfg,
            bench,
        })
    }

    fn record(&mut self, name: &str, file: &str) -> Result<()> {
        let sha256 = file_sha256(&self.out.join(file))?;
        self.manifest.artifacts.push(Artifact {
            name: name.to_string(),
            path: file.to_string(),
            sha256,
        });
        Ok(())
    }

    /// Runs `f`, recording `files` on success and wrapping any error with
    /// the stage name and the manifest so far.
    fn stage<T>(
        &mut self,
        stage: &'static str,
        files: &[(&str, &str)],
        f: impl FnOnce(&Path) -> Result<T>,
    ) -> Result<T> {
        log::info!("stage {stage}");
        let r = f(&self.out).and_then(|v| {
            for (name, file) in files {
                self.record(name, file)?;
            }
            Ok(v)
        });
        r.map_err(|e| Error::Stage {
            stage,
            source: Box::new(e),
            partial_manifest: Box::new(self.manifest.clone()),
        })
    }

    fn finish(self) -> Result<Manifest> {
        self.manifest.save(self.out.join(MANIFEST_FILE))?;
        Ok(self.manifest)
    }
}

/// Everything shared by the init strategies.
struct Trained {
    factorization: Factorization,
    table: MatchTable,
    params: HypernetParams,
}

/// Source tokens first, then target tokens absent from the source, so that
/// the first `|V^s|` rows line up with the source coordinates.
pub fn union_vocab(source: &Vocabulary, target: &Vocabulary) -> Result<Vocabulary> {
    let mut tokens = source.tokens().to_vec();
    tokens.extend(target.tokens().iter().filter(|t| source.id_of(t).is_none()).cloned());
    Vocabulary::new(tokens)
}

fn prepare(run: &mut Run<'_>) -> Result<Trained> {
    let bench = run.bench;
    let cfg = run.cfg.clone();
    let factorization = run.stage(
        "factorize",
        &[("F", "source_coords.bin"), ("P", "primitive.bin")],
        |out| {
            let f = truncated_svd(&bench.source_embeddings, bench.config.coord_dim, &cfg.svd)?;
            save_matrix(&f.coords, out.join("source_coords.bin"))?;
            save_matrix(&f.primitive, out.join("primitive.bin"))?;
            Ok(f)
        },
    )?;
    let table = run.stage("match", &[("matches", "matches.csv")], |out| {
        let union = union_vocab(&bench.source_vocab, &bench.target_vocab)?;
        let table = build_match_table(&union, &bench.store, &cfg.matching);
        save_match_table(&table, out.join("matches.csv"))?;
        Ok(table)
    })?;
    let params = run.stage(
        "train",
        &[("params", "hypernet.bin"), ("curve", "curve.csv")],
        |out| {
            let data = build_dataset(&table, &factorization.coords, &bench.store, cfg.training.max_context)?;
            let trained = train(&data, &bench.store, &cfg.training)?;
            trained.params.save(out.join("hypernet.bin"))?;
            save_curve(&trained.curve, out.join("curve.csv"))?;
            Ok(trained.params)
        },
    )?;
    Ok(Trained {
        factorization,
        table,
        params,
    })
}

pub struct StrategyOutcome {
    pub strategy: Strategy,
    pub coords: Matrix,
    pub report: InitReport,
    pub heldout_cosine: f64,
    pub topk_accuracy: f64,
}

/// Held-out target tokens as hypernetwork examples whose targets are the
/// true coordinates in the learned basis.
pub fn heldout_examples(
    bench: &SyntheticBenchmark,
    table: &MatchTable,
    primitive: &Matrix,
    max_context: usize,
) -> Result<Vec<TrainingExample>> {
    let rows = table.index_by_token();
    bench
        .heldout
        .iter()
        .map(|&j| {
            let tok = bench.target_vocab.token(j);
            let r = *rows.get(tok).ok_or(Error::NoMatches { token_id: j })?;
            let target = (0..primitive.rows())
                .map(|d| crate::linalg::dot(bench.target_truth.row(j), primitive.row(d)))
                .collect();
            Ok(TrainingExample {
                token_id: j,
                words: apply_cap(table.matches(r).to_vec(), &bench.store, max_context),
                target,
            })
        })
        .collect()
}

fn init_and_score(
    cfg: &PipelineConfig,
    bench: &SyntheticBenchmark,
    trained: &Trained,
    strategy: Strategy,
) -> Result<StrategyOutcome> {
    let inputs = InitInputs {
        source: &bench.source_vocab,
        target: &bench.target_vocab,
        table: &trained.table,
        store: &bench.store,
        source_coords: &trained.factorization.coords,
        primitive: Some(&trained.factorization.primitive),
        hypernet: Some(&trained.params),
    };
    let init_cfg = InitConfig {
        strategy,
        ..cfg.init.clone()
    };
    let (_, out) = initialize(&inputs, &init_cfg)?;
    let full = out.full.as_ref().expect("primitive supplied");
    let heldout_cosine = row_cosine_eval(full, &bench.target_truth, &bench.heldout).value;
    let topk_accuracy = if bench.sentences.is_empty() {
        f64::NAN
    } else {
        let src: Vec<Vec<usize>> = bench.sentences.iter().map(|s| s.source.clone()).collect();
        let tgt: Vec<Vec<usize>> = bench.sentences.iter().map(|s| s.target.clone()).collect();
        let queries = sentence_reps(full, &tgt);
        let candidates = sentence_reps(&bench.source_embeddings, &src);
        let gold: Vec<usize> = (0..queries.len()).collect();
        let k = cfg.retrieval_k.min(candidates.len());
        topk_retrieval_accuracy(&queries, &candidates, &gold, k)?.value
    };
    Ok(StrategyOutcome {
        strategy,
        coords: out.coords,
        report: out.report,
        heldout_cosine,
        topk_accuracy,
    })
}

pub struct PipelineOutput {
    pub manifest: Manifest,
    pub eval: Vec<EvalRow>,
}

/// One full pass with `cfg.init.strategy`. Writes exactly eight artifacts
/// plus `manifest.json` into `out`.
pub fn run_pipeline(cfg: &PipelineConfig, bench: &SyntheticBenchmark, out: &Path) -> Result<PipelineOutput> {
    let mut run = Run::new(cfg, bench, out)?;
    let trained = prepare(&mut run)?;
    let cfg = run.cfg.clone();
    let hash = run.manifest.config_hash.clone();
    let strategy = cfg.init.strategy;
    let outcome = run.stage(
        "init",
        &[("F_t", "target_coords.bin"), ("report", "init_report.csv")],
        |out| {
            let o = init_and_score(&cfg, bench, &trained, strategy)?;
            save_matrix(&o.coords, out.join("target_coords.bin"))?;
            save_report(&o.report, out.join("init_report.csv"))?;
            Ok(o)
        },
    )?;
    let eval = run.stage("evaluate", &[("eval", "eval.csv")], |out| {
        let examples = heldout_examples(
            bench,
            &trained.table,
            &trained.factorization.primitive,
            cfg.training.max_context,
        )?;
        let hn = heldout_cosine_eval(&trained.params, &examples, &bench.store)?;
        let row = |metric: &str, value: f64, items: usize, rep: &str| EvalRow {
            strategy: strategy.as_str().to_string(),
            metric: metric.to_string(),
            value,
            items,
            representation: rep.to_string(),
            config_hash: hash.clone(),
            seed: cfg.seed,
        };
        let rows = vec![
            row("heldout_cosine", outcome.heldout_cosine, bench.heldout.len(), "embedding-row"),
            row(
                &format!("top{}_accuracy", cfg.retrieval_k),
                outcome.topk_accuracy,
                bench.sentences.len(),
                "static-mean",
            ),
            row("hypernet_heldout_cosine", hn.value, examples.len(), "coordinate"),
        ];
        write_csv(&rows, &out.join("eval.csv"))?;
        Ok(rows)
    })?;
    Ok(PipelineOutput {
        manifest: run.finish()?,
        eval,
    })
}

pub struct CompareOutput {
    pub manifest: Manifest,
    pub rows: Vec<CompareRow>,
}

/// Shares factorization, matching and training, then initializes and
/// scores once per strategy in `cfg.strategies`.
pub fn compare(cfg: &PipelineConfig, bench: &SyntheticBenchmark, out: &Path) -> Result<CompareOutput> {
    let mut run = Run::new(cfg, bench, out)?;
    let trained = prepare(&mut run)?;
    let cfg = run.cfg.clone();
    let hash = run.manifest.config_hash.clone();
    let mut rows = Vec::new();
    for &strategy in &cfg.strategies {
        let s = strategy.as_str();
        let coords_file = format!("target_coords_{s}.bin");
        let report_file = format!("init_report_{s}.csv");
        let names = [
            (format!("F_t_{s}"), coords_file.clone()),
            (format!("report_{s}"), report_file.clone()),
        ];
        let files: Vec<(&str, &str)> = names.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
        let o = run.stage("init", &files, |out| {
            let o = init_and_score(&cfg, bench, &trained, strategy)?;
            save_matrix(&o.coords, out.join(&coords_file))?;
            save_report(&o.report, out.join(&report_file))?;
            Ok(o)
        })?;
        rows.push(CompareRow {
            strategy: s.to_string(),
            heldout_cosine: o.heldout_cosine,
            topk_accuracy: o.topk_accuracy,
            k: cfg.retrieval_k,
            copied: o.report.copied,
            predicted: o.report.predicted,
            random: o.report.random,
            config_hash: hash.clone(),
            benchmark_seed: bench.config.seed,
        });
    }
    run.stage("evaluate", &[("compare", "compare.csv")], |out| {
        write_csv(&rows, &out.join("compare.csv"))
    })?;
    Ok(CompareOutput {
        manifest: run.finish()?,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::generate_benchmark;

    fn tiny() -> PipelineConfig {
        PipelineConfig {
            seed: 3,
            benchmark: BenchmarkConfig {
                source_tokens: 40,
                target_tokens: 8,
                overlap_tokens: 4,
                unmatched_tokens: 2,
                word_dim: 4,
                coord_dim: 8,
                embed_dim: 10,
                sentences: 12,
                ..Default::default()
            },
            training: TrainingConfig {
                hidden_dim: 4,
                num_layers: 1,
                epochs: 2,
                batch_size: 8,
                ..Default::default()
            },
            ..Default::default()
        }
    }

    #[test]
    fn run_writes_eight_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny();
        let bench = generate_benchmark(&cfg.benchmark).unwrap();
        let out = run_pipeline(&cfg, &bench, dir.path()).unwrap();
        let names: Vec<&str> = out.manifest.artifacts.iter().map(|a| a.name.as_str()).collect();
        assert_eq!(names, ["F", "P", "matches", "params", "curve", "F_t", "report", "eval"]);
        assert!(dir.path().join(MANIFEST_FILE).exists());
        assert_eq!(Manifest::load(dir.path().join(MANIFEST_FILE)).unwrap(), out.manifest);
        assert_eq!(out.eval.len(), 3);
    }

    #[test]
    fn compare_emits_one_row_per_strategy() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny();
        let bench = generate_benchmark(&cfg.benchmark).unwrap();
        let out = compare(&cfg, &bench, dir.path()).unwrap();
        let s: Vec<&str> = out.rows.iter().map(|r| r.strategy.as_str()).collect();
        assert_eq!(s, ["hyper", "ofa", "random"]);
        assert!(out.rows.iter().all(|r| r.benchmark_seed == cfg.benchmark.seed));
        assert!(out.rows.iter().all(|r| r.copied == 4 && r.copied + r.predicted + r.random == 14));
    }

    #[test]
    fn stage_failure_names_the_stage() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny();
        cfg.training.lambda = 2.0;
        let bench = generate_benchmark(&cfg.benchmark).unwrap();
        match run_pipeline(&cfg, &bench, dir.path()) {
            Err(Error::Stage { stage, partial_manifest, .. }) => {
                assert_eq!(stage, "train");
                assert_eq!(partial_manifest.artifacts.len(), 3);
            }
            other => panic!("expected a stage error, got {:?}", other.err()),
        }
    }

    #[test]
    fn config_hash_tracks_resolved_seed() {
        let a = tiny();
        let mut b = tiny();
        b.training.seed = 99;
        assert_eq!(a.hash(), b.hash());
        b.seed = 4;
        assert_ne!(a.hash(), b.hash());
    }
}
