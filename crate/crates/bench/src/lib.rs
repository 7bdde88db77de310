//! Dataset ingestion, ground truth and benchmarking for the PageANN engine.

pub mod config;
pub mod groundtruth;
pub mod harness;
pub mod ingest;
pub mod sweep;
pub mod synth;

pub use config::{ConfigError, RunConfig};
pub use groundtruth::{ground_truth, read_ground_truth, write_ground_truth};
pub use harness::{mean_recall, run_queries, summarize, BenchRow, QueryRecord, RowMeta, RunResult};
pub use ingest::{read_dataset, read_dataset_as, read_ids, write_dataset, write_ids, AnyDataset, IngestError, VectorFormat};
pub use synth::{synthesize, SynthSpec};
