//! Masking evaluation, significance testing and topic inspection.

pub mod masking;
pub mod stats;
pub mod topics;

pub use masking::{
    apply_mask, keep_size, mask_distance, render_table, run_mask_eval, select_keep_set, term_frequencies,
    DistanceMetric, KeepContext, KeepSet, MaskEvalConfig, MaskEvalReport, MaskMethod, TermStats, TestPairing,
};
pub use stats::{paired_t_test, TTest};
pub use topics::{most_populated_code, topic_report, word_cloud_svg, TopicMode, TopicReport, WordWeight};
