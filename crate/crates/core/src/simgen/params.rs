use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Exp1};

use crate::error::{Error, Result};

/// Exponents of the spectral magnitude law `1 / (|f_x|^a + |f_y|^b)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpectrumParams {
    pub a: f64,
    pub b: f64,
}

impl SpectrumParams {
    pub const PRIOR: std::ops::Range<f64> = 0.5..3.5;

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| (0.5..=3.5).contains(&v);
        if ok(self.a) && ok(self.b) {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("spectrum exponents ({}, {}) outside [0.5, 3.5]", self.a, self.b)))
        }
    }
}

/// Generalized Laplacian law `p(x) ∝ exp(-|x / scale|^exponent)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BandLaw {
    pub scale: f64,
    pub exponent: f64,
}

/// Wavelet-marginal model: pyramid depth and one law per detail band.
///
/// `bands` holds `3 * num_scales` laws ordered finest level first, then
/// horizontal, vertical, diagonal detail within a level.
#[derive(Clone, Debug, PartialEq)]
pub struct WMMParams {
    pub num_scales: usize,
    pub bands: Vec<BandLaw>,
}

impl WMMParams {
    pub fn validate(&self, size: (usize, usize)) -> Result<()> {
        let max = max_wmm_scales(size);
        if self.num_scales == 0 || self.num_scales > max {
            return Err(Error::InvalidArgument(format!(
                "{} wavelet scales invalid for {}x{} (max {max})",
                self.num_scales, size.0, size.1
            )));
        }
        if self.bands.len() != 3 * self.num_scales {
            return Err(Error::InvalidArgument(format!(
                "{} band laws for {} scales",
                self.bands.len(),
                self.num_scales
            )));
        }
        for b in &self.bands {
            if !(b.scale > 0.0 && b.scale.is_finite()) || !(b.exponent > 0.3 && b.exponent <= 2.0) {
                return Err(Error::InvalidArgument(format!("bad band law {b:?}")));
            }
        }
        Ok(())
    }
}

/// Deepest pyramid admitted by an image size: at most `log2(min side) - 2`
/// levels, and every level must halve both sides exactly.
pub fn max_wmm_scales((h, w): (usize, usize)) -> usize {
    let side = h.min(w);
    if side < 8 {
        return 0;
    }
    let by_size = side.ilog2() as usize - 2;
    let by_parity = h.trailing_zeros().min(w.trailing_zeros()) as usize;
    by_size.min(by_parity)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ColorHistParams {
    pub palette: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
    pub jitter: f64,
}

impl ColorHistParams {
    pub fn validate(&self) -> Result<()> {
        if self.palette.is_empty() {
            return Err(Error::InvalidArgument("empty palette".into()));
        }
        if self.palette.len() > 64 || self.weights.len() != self.palette.len() {
            return Err(Error::InvalidArgument(format!(
                "palette of {} colors with {} weights",
                self.palette.len(),
                self.weights.len()
            )));
        }
        let total: f64 = self.weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 || self.weights.iter().any(|w| *w < 0.0) {
            return Err(Error::InvalidArgument(format!("palette weights sum to {total}")));
        }
        if self.palette.iter().flatten().any(|v| !(0.0..=1.0).contains(v)) || self.jitter.is_nan() || self.jitter < 0.0 {
            return Err(Error::InvalidArgument("palette colors or jitter out of range".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ModelChoice {
    Spectrum,
    Wmm,
    Combined,
}

impl fmt::Display for ModelChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelChoice::Spectrum => "spectrum",
            ModelChoice::Wmm => "wmm",
            ModelChoice::Combined => "combined",
        })
    }
}

impl FromStr for ModelChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "spectrum" => Ok(ModelChoice::Spectrum),
            "wmm" => Ok(ModelChoice::Wmm),
            "combined" => Ok(ModelChoice::Combined),
            other => Err(Error::InvalidArgument(format!("unknown model {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorConfig {
    /// Probabilities of spectrum, wmm and combined images.
    pub model_mix: [f64; 3],
    pub image_size: (usize, usize),
    pub seed: u64,
}

impl GeneratorConfig {
    pub fn new(model_mix: [f64; 3], image_size: (usize, usize), seed: u64) -> Result<Self> {
        let cfg = Self {
            model_mix,
            image_size,
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let (h, w) = self.image_size;
        if h % 4 != 0 || w % 4 != 0 || h < 16 || w < 16 {
            return Err(Error::InvalidArgument(format!("image size {h}x{w} must be >= 16 and divisible by 4")));
        }
        let total: f64 = self.model_mix.iter().sum();
        if (total - 1.0).abs() > 1e-9 || self.model_mix.iter().any(|p| *p < 0.0) {
            return Err(Error::InvalidArgument(format!("model mix sums to {total}")));
        }
        Ok(())
    }

    pub(crate) fn draw_choice(&self, rng: &mut impl Rng) -> ModelChoice {
        let u: f64 = rng.random();
        let [ps, pw, _] = self.model_mix;
        if u < ps {
            ModelChoice::Spectrum
        } else if u < ps + pw {
            ModelChoice::Wmm
        } else {
            ModelChoice::Combined
        }
    }
}

/// Draws one parameter triple from the model priors.
///
/// Spectrum exponents are U(0.5, 3.5). Band scales grow geometrically with
/// pyramid level; exponents are U(0.5, 1.2). Palettes have 2..=16 colors
/// uniform in RGB with Dirichlet(1) weights and jitter U(0, 0.05).
pub fn sample_params(
    rng: &mut impl Rng,
    image_size: (usize, usize),
) -> (SpectrumParams, WMMParams, ColorHistParams) {
    let spectrum = SpectrumParams {
        a: rng.random_range(SpectrumParams::PRIOR),
        b: rng.random_range(SpectrumParams::PRIOR),
    };

    let max_scales = max_wmm_scales(image_size).max(1);
    let num_scales = rng.random_range(1..=max_scales);
    let growth = rng.random_range(0.5..1.5);
    let bands = (0..num_scales)
        .flat_map(|level| [level; 3])
        .map(|level| BandLaw {
            scale: rng.random_range(0.5..1.5) * 2f64.powf(level as f64 * growth),
            exponent: rng.random_range(0.5..1.2),
        })
        .collect();
    let wmm = WMMParams { num_scales, bands };

    let n = rng.random_range(2..=16);
    let palette: Vec<[f64; 3]> = (0..n).map(|_| [rng.random(), rng.random(), rng.random()]).collect();
    let raw: Vec<f64> = (0..n).map(|_| Exp1.sample(rng)).collect::<Vec<f64>>();
    let total: f64 = raw.iter().sum();
    let mut weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
    // absorb rounding so the weights sum to one
    let partial: f64 = weights[..n - 1].iter().sum();
    weights[n - 1] = (1.0 - partial).max(0.0);
    let color = ColorHistParams {
        palette,
        weights,
        jitter: rng.random_range(0.0..0.05),
    };
    (spectrum, wmm, color)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn deterministic_per_seed() {
        let a = sample_params(&mut rng::stream(7), (64, 64));
        let b = sample_params(&mut rng::stream(7), (64, 64));
        assert_eq!(a, b);
    }

    #[test]
    fn draws_respect_invariants() {
        let mut r = rng::stream(11);
        let (mut lo, mut hi) = (f64::MAX, f64::MIN);
        for _ in 0..10_000 {
            let (s, w, c) = sample_params(&mut r, (64, 64));
            s.validate().unwrap();
            w.validate((64, 64)).unwrap();
            c.validate().unwrap();
            assert!((c.weights.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            lo = lo.min(s.a);
            hi = hi.max(s.a);
        }
        assert!(lo >= 0.5 && hi <= 3.5);
    }

    #[test]
    fn scale_limits() {
        assert_eq!(max_wmm_scales((64, 64)), 4);
        assert_eq!(max_wmm_scales((16, 16)), 2);
        assert_eq!(max_wmm_scales((36, 64)), 2);
        assert!(GeneratorConfig::new([1.0, 0.0, 0.0], (63, 64), 0).is_err());
        assert!(GeneratorConfig::new([0.5, 0.0, 0.0], (64, 64), 0).is_err());
    }
}
