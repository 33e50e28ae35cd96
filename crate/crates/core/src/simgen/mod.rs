//! Statistical image models: random-phase power-law spectra, wavelet-marginal
//! textures and palette color histograms, sampled hierarchically from priors.

mod color;
mod dataset;
mod fourier;
mod params;
mod slope;
mod spectrum;
mod special;
mod wmm;

pub use color::{apply_color, palette_bins};
pub use dataset::{gen_combined, gen_dataset, gen_pairs, regenerate_pair};
pub use params::{
    max_wmm_scales, sample_params, BandLaw, ColorHistParams, GeneratorConfig, ModelChoice,
    SpectrumParams, WMMParams,
};
pub use slope::estimate_power_spectrum_slope;
pub use spectrum::{gen_spectrum_image, spectrum_field};
pub use special::generalized_laplacian_quantile;
pub use wmm::{gen_wmm_image, gen_wmm_image_with_bands, MatchedBand};
