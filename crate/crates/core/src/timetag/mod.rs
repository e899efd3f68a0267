//! Time-tagged detector streams: synthetic generation, trigger-referenced
//! sifting with temporal filters, and source characterization.

mod generate;
mod sift;
mod stats;
mod stream;

pub use generate::{
    generate_stream, generate_stream_with, trigger_period_ps, ApparatusProfile, DetectionMode,
    GeneratorConfig, PhotonStatistics,
};
pub use sift::{
    default_filter_grids, grid, sift, sweep_filters, FilterSweepResult, FilterWindow, SiftCounts,
    SiftedStats,
};
pub use stats::{
    fit_lifetime, fit_lifetime_with, g2_histogram, G2Histogram, LifetimeFit, LifetimeFitOptions,
};
pub use stream::{
    channel_for_bit, AlicePattern, Record, TagStream, Triggers, CH_APD1, CH_APD2, CH_TRIGGER,
    QTT1_MAGIC,
};
