//! Statistical analysis of frame stacks.

mod accum;
mod brightness;
mod coincidence;
mod correlation;
mod detect;
mod drift;
mod fit;
mod gn;
mod pipeline;
mod region;

pub use accum::{FrameAccumulator, RegionCounts};
pub use brightness::{
    brightness, brightness_from_counts, brightness_group, group_by_brightness, Brightness,
    DEFAULT_GROUP_BOUNDARIES,
};
pub use coincidence::{
    build_coincidence_histogram, coincidence_histogram_from_stack, CoincidenceHistogram,
    NormalizedBin,
};
pub use correlation::{
    background_correct, correlation_from_counts, estimate_g2_zero, estimate_stderr,
    CorrelationEstimate,
};
pub use detect::{
    accumulate_map, connected_components, detect_regions, detection_level, regions_around,
};
pub use drift::register_drift;
pub use fit::{fit_decay_model, fit_normalized, FitResult};
pub use gn::{gn_from_histogram, GnEstimate};
pub use pipeline::{
    binarize, default_thresholds, estimate_gn, occupancy, snr_optimal, stderr_optimal,
    DriftCorrection, ScanPlan, ThresholdPoint,
};
pub use region::{ObjectRegion, RegionSet};
