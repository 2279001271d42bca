//! Windowing, the A–E dataset bundle, normalization, persistence and
//! mini-batch sampling.

pub mod bundle;
pub mod normalize;
pub mod sampler;
pub mod store;
pub mod window;

pub use bundle::{
    build_bundle, load_bundle, save_bundle, BundleConfig, BundleManifest, DatasetBundle, Scale,
    SealedTestSet, SplitCounts, TrainingSets,
};
pub use normalize::{normalize, row_means, NormalizationStats};
pub use sampler::{sample_distinct_pairs, sample_indices};
pub use store::{
    load_dataset, save_dataset, Batch, DatasetManifest, EpisodeRun, LabeledDataset, Role,
    NUM_CLASSES,
};
pub use window::{window_count, window_episode, Sample, NUM_ROWS};
