use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use vocab_expand::corpus_io::{
    load_matrix, load_vocab, load_word_vectors, save_matrix, save_report, EmbeddingMatrix,
};
use vocab_expand::error::{Error, Result};
use vocab_expand::eval::{
    compare, generate_benchmark, load_config, run_pipeline, PipelineConfig, SyntheticBenchmark,
};
use vocab_expand::factorization::{orthonormality_error, reconstruct, truncated_svd, SvdConfig};
use vocab_expand::hypernet::{build_dataset, save_curve, train, HypernetParams, TrainingConfig};
use vocab_expand::initializer::{initialize, InitConfig, InitInputs, Strategy};
use vocab_expand::matching::{
    build_match_table, load_match_table, match_stats, save_match_table, MarkerStrip, MatchConfig,
    DEFAULT_MAX_MATCHES,
};

#[derive(Parser)]
#[command(name = "vocab-expand", version, about = "Embedding initialization for expanded vocabularies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Truncated SVD of an embedding matrix into coordinates F and primitives P.
    Factorize {
        /// Binary matrix file, or word2vec text.
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        rank: usize,
        #[arg(long)]
        out_f: PathBuf,
        #[arg(long)]
        out_p: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Match vocabulary tokens to the words containing them.
    Match {
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        vectors: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = MarkerStrip::None)]
        strip_marker: MarkerStrip,
        #[arg(long)]
        lowercase: bool,
        #[arg(long)]
        nfc: bool,
        #[arg(long, default_value_t = DEFAULT_MAX_MATCHES)]
        max_matches: usize,
    },
    /// Train the hypernetwork on source tokens.
    Train {
        #[arg(long)]
        matches: PathBuf,
        #[arg(long)]
        vectors: PathBuf,
        #[arg(long)]
        coords: PathBuf,
        /// TOML or JSON training config; omitted keys take defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out_params: PathBuf,
        #[arg(long)]
        curve: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Initialize target coordinates.
    Init(InitArgs),
    /// Synthetic benchmark and pipeline runs.
    Bench {
        #[command(subcommand)]
        action: BenchAction,
    },
}

#[derive(Args)]
struct InitArgs {
    #[arg(long, value_enum)]
    strategy: Strategy,
    #[arg(long)]
    source_vocab: PathBuf,
    #[arg(long)]
    target_vocab: PathBuf,
    #[arg(long)]
    coords: PathBuf,
    #[arg(long)]
    primitive: PathBuf,
    /// Match table covering the target tokens (and source tokens for ofa).
    #[arg(long)]
    matches: PathBuf,
    #[arg(long)]
    vectors: PathBuf,
    #[arg(long)]
    hypernet_params: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[arg(long, default_value_t = 0.1)]
    temp: f64,
    #[arg(long, value_enum, default_value_t = MarkerStrip::None)]
    overlap_marker: MarkerStrip,
    #[arg(long, default_value_t = 256)]
    max_context: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out_coords: PathBuf,
    #[arg(long)]
    out_report: PathBuf,
    /// Also write E^t = F^t · P here.
    #[arg(long)]
    emit_full: Option<PathBuf>,
}

#[derive(Subcommand)]
enum BenchAction {
    /// Write a synthetic benchmark to `--out`.
    Generate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// One pipeline pass with the configured strategy.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Benchmark directory from `bench generate`; generated in memory when absent.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Every configured strategy on one shared benchmark.
    Compare {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
    },
}

fn load_embeddings(path: &Path) -> Result<EmbeddingMatrix> {
    match load_matrix(path) {
        Err(Error::BadMagic { .. }) => Ok(load_word_vectors(path)?.vectors().clone()),
        r => r,
    }
}

fn benchmark(cfg: &PipelineConfig, data: Option<&Path>) -> Result<SyntheticBenchmark> {
    match data {
        Some(dir) => SyntheticBenchmark::read(dir),
        None => generate_benchmark(&cfg.benchmark),
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Factorize {
            embeddings,
            rank,
            out_f,
            out_p,
            seed,
        } => {
            let e = load_embeddings(&embeddings)?;
            let cfg = SvdConfig {
                seed,
                ..Default::default()
            };
            let f = truncated_svd(&e, rank, &cfg)?;
            let err = e.sub(&reconstruct(&f)?)?.frobenius_norm();
            log::info!(
                "rank {rank}: ‖E − FP‖_F = {err:.6e}, orthonormality error {:.3e}",
                orthonormality_error(&f.primitive)
            );
            save_matrix(&f.coords, out_f)?;
            save_matrix(&f.primitive, out_p)
        }
        Command::Match {
            vocab,
            vectors,
            out,
            strip_marker,
            lowercase,
            nfc,
            max_matches,
        } => {
            let vocab = load_vocab(&vocab)?;
            let store = load_word_vectors(&vectors)?;
            let cfg = MatchConfig {
                strip_marker,
                lowercase,
                nfc,
                max_matches,
            };
            let table = build_match_table(&vocab, &store, &cfg);
            let stats = match_stats(&table);
            log::info!("{} matched, {} unmatched", stats.matched, stats.unmatched);
            save_match_table(&table, out)
        }
        Command::Train {
            matches,
            vectors,
            coords,
            config,
            out_params,
            curve,
            seed,
        } => {
            let mut cfg: TrainingConfig = match config {
                Some(p) => load_config(&p)?,
                None => TrainingConfig::default(),
            };
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let store = load_word_vectors(&vectors)?;
            let table = load_match_table(&matches, &store)?;
            let coords = load_matrix(&coords)?;
            let data = build_dataset(&table, &coords, &store, cfg.max_context)?;
            let out = train(&data, &store, &cfg)?;
            if let Some(last) = out.curve.last() {
                log::info!(
                    "{} epochs, final train loss {:.6}, val cosine {:.4}",
                    last.epoch,
                    last.train_loss,
                    last.val_cosine
                );
            }
            out.params.save(out_params)?;
            save_curve(&out.curve, curve)
        }
        Command::Init(a) => {
            let source = load_vocab(&a.source_vocab)?;
            let target = load_vocab(&a.target_vocab)?;
            let coords = load_matrix(&a.coords)?;
            let primitive = load_matrix(&a.primitive)?;
            let store = load_word_vectors(&a.vectors)?;
            let table = load_match_table(&a.matches, &store)?;
            let params = a.hypernet_params.as_ref().map(HypernetParams::load).transpose()?;
            let inputs = InitInputs {
                source: &source,
                target: &target,
                table: &table,
                store: &store,
                source_coords: &coords,
                primitive: a.emit_full.as_ref().map(|_| &primitive),
                hypernet: params.as_ref(),
            };
            let cfg = InitConfig {
                strategy: a.strategy,
                k: a.k,
                temperature: a.temp,
                overlap_marker: a.overlap_marker,
                max_context: a.max_context,
                seed: a.seed,
            };
            let (_, out) = initialize(&inputs, &cfg)?;
            save_matrix(&out.coords, &a.out_coords)?;
            save_report(&out.report, &a.out_report)?;
            if let (Some(path), Some(full)) = (a.emit_full, out.full) {
                save_matrix(&full, path)?;
            }
            Ok(())
        }
        Command::Bench { action } => match action {
            BenchAction::Generate { config, out } => {
                let cfg = PipelineConfig::load(&config)?;
                generate_benchmark(&cfg.benchmark)?.write(out)
            }
            BenchAction::Run { config, out, data } => {
                let cfg = PipelineConfig::load(&config)?;
                let bench = benchmark(&cfg, data.as_deref())?;
                let r = run_pipeline(&cfg, &bench, &out)?;
                for row in &r.eval {
                    println!("{}\t{}\t{:.6}", row.strategy, row.metric, row.value);
                }
                Ok(())
            }
            BenchAction::Compare { config, out, data } => {
                let cfg = PipelineConfig::load(&config)?;
                let bench = benchmark(&cfg, data.as_deref())?;
                let r = compare(&cfg, &bench, &out)?;
                println!("strategy\theldout_cosine\ttop{}_accuracy", cfg.retrieval_k);
                for row in &r.rows {
                    println!("{}\t{:.6}\t{:.6}", row.strategy, row.heldout_cosine, row.topk_accuracy);
                }
                Ok(())
            }
        },
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if let Error::Stage { partial_manifest, .. } = &e {
                for a in &partial_manifest.artifacts {
                    eprintln!("  completed artifact {} ({})", a.name, a.path);
                }
            }
            ExitCode::FAILURE
        }
    }
}
