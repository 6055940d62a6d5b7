//! Peak-based FOD metrics, tensor scalars, WM masks, and curve fits.

mod arctan;
mod peaks;
mod report;
mod tensor;

pub use arctan::{fit_arctan, ArctanFit};
pub use peaks::{
    extract_peaks, match_peaks, Peak, PeakSet, MATCH_GATE_DEG, MIN_SEPARATION_DEG, PEAK_THRESHOLD,
    REFINE_ITERS,
};
pub use report::{
    afd, afd_error, agreement_rate, angular_error, compute_report, extract_volume_peaks,
    markdown_table, ClassMetrics, MetricsReport, CSV_HEADER,
};
pub use tensor::{fa_md_maps, mean_wm_fa, tensor_fit, wm_mask, SitePreset};
