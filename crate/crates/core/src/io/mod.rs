//! Persistence: PNG images, weight checkpoints, run configs, reports, traces.

mod config;
mod png;
mod report;
mod trace;
mod weights;

pub use config::{RunConfig, CONFIG_KEYS, DEFAULT_SUITE};
pub use png::{confine, list_pngs, load_image, save_image};
pub use report::{
    bench_markdown, metric_markdown, write_bench_csv, write_metric_csv, write_train_log,
};
pub use trace::write_trace;
pub use weights::{
    decode_tensors, encode_weights, infer_config, load_weights, load_weights_inferred,
    save_weights, weights_from_tensors, WEIGHT_MAGIC, WEIGHT_VERSION,
};
