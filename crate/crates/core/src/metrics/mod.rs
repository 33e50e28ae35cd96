//! Image-quality metrics, the relative boost statistic and
//! uncertainty-versus-error diagnostics.

mod diagnostics;
mod quality;

pub use diagnostics::{
    histogram, modes, pearson, prominence, prominent_modes, ranks, smooth, spearman, uncertainty_diagnostics,
    UncertaintyDiagnostics, HISTOGRAM_BINS, MODE_MIN_PROMINENCE,
};
pub use quality::{error_map, mae, mse, pboost, psnr, psnr_from_mse, ssim, MetricReport, SSIM_SIGMA, SSIM_WINDOW};
