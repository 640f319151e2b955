//! Desk-scale evaluation: metrics, synthetic benchmark, pipeline runner.

mod benchmark;
mod metrics;
mod pipeline;

pub use benchmark::{
    generate_benchmark, BenchmarkConfig, Generator, SentencePair, SyntheticBenchmark, BENCHMARK_FILES,
};
pub use metrics::{
    cosine_eval, heldout_cosine_eval, row_cosine_eval, sentence_reps, topk_retrieval_accuracy, EvalResult,
};
pub use pipeline::{
    compare, heldout_examples, load_config, run_pipeline, union_vocab, Artifact, CompareOutput, CompareRow,
    EvalRow, Manifest, PipelineConfig, PipelineOutput, StrategyOutcome, MANIFEST_FILE,
};
