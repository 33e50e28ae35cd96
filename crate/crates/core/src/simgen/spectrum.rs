use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex;

use super::fourier::{fft2, freq_index};
use super::SpectrumParams;
use crate::data::ImageTensor;
use crate::error::{Error, Result};

/// Random-phase field with Fourier magnitude `1 / (|f_x|^a + |f_y|^b)` and a
/// zeroed DC term, before rescaling.
///
/// Phases come from the transform of real white noise, so they are uniform
/// and Hermitian-symmetric and the inverse transform is real. Frequencies are
/// in cycles per pixel.
pub fn spectrum_field(p: &SpectrumParams, (h, w): (usize, usize), rng: &mut impl Rng) -> Result<Vec<f64>> {
    if h < 16 || w < 16 {
        return Err(Error::InvalidArgument(format!("spectrum image {h}x{w} is smaller than 16x16")));
    }
    p.validate()?;
    let mut grid: Vec<Complex<f64>> = (0..h * w)
        .map(|_| Complex::new(StandardNormal.sample(rng), 0.0))
        .collect();
    fft2(&mut grid, h, w, false);
    for y in 0..h {
        let fy = freq_index(y, h).abs() / h as f64;
        for x in 0..w {
            let fx = freq_index(x, w).abs() / w as f64;
            let c = &mut grid[y * w + x];
            if x == 0 && y == 0 {
                *c = Complex::default();
                continue;
            }
            let magnitude = 1.0 / (fx.powf(p.a) + fy.powf(p.b));
            let norm = c.norm();
            *c = if norm > 0.0 { *c * (magnitude / norm) } else { Complex::new(magnitude, 0.0) };
        }
    }
    fft2(&mut grid, h, w, true);
    Ok(grid.iter().map(|c| c.re).collect())
}

/// One-channel spectrum-model image, min-max rescaled to [0, 1].
pub fn gen_spectrum_image(p: &SpectrumParams, size: (usize, usize), rng: &mut impl Rng) -> Result<ImageTensor> {
    let field = spectrum_field(p, size, rng)?;
    ImageTensor::from_field_rescaled(size.0, size.1, &field)
}
