use rustfft::num_complex::Complex;

use super::fourier::{fft2, freq_index};
use crate::data::ImageTensor;
use crate::error::{Error, Result};

/// Least-squares slope of log radially-averaged power against log frequency.
///
/// Works on the channel-mean plane. Radii are in cycles per image along the
/// shorter side and binned to the nearest integer; bins 2 through
/// `min(H, W) / 2 - 1` enter the fit.
pub fn estimate_power_spectrum_slope(img: &ImageTensor) -> Result<f64> {
    let (h, w) = (img.height(), img.width());
    if h.min(w) < 16 {
        return Err(Error::InvalidArgument(format!("{h}x{w} image is too small for a slope fit")));
    }
    let gray = img.gray();
    let mean = gray.iter().sum::<f64>() / gray.len() as f64;
    let var = gray.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / gray.len() as f64;
    if var <= 1e-20 {
        return Err(Error::ZeroVariance);
    }
    let mut grid: Vec<Complex<f64>> = gray.iter().map(|v| Complex::new(v - mean, 0.0)).collect();
    fft2(&mut grid, h, w, false);

    let side = h.min(w);
    let max_bin = side / 2 - 1;
    let mut sums = vec![0.0f64; max_bin + 1];
    let mut counts = vec![0usize; max_bin + 1];
    for y in 0..h {
        let fy = freq_index(y, h) * side as f64 / h as f64;
        for x in 0..w {
            let fx = freq_index(x, w) * side as f64 / w as f64;
            let bin = fx.hypot(fy).round() as usize;
            if (2..=max_bin).contains(&bin) {
                sums[bin] += grid[y * w + x].norm_sqr();
                counts[bin] += 1;
            }
        }
    }
    let points: Vec<(f64, f64)> = (2..=max_bin)
        .filter(|&b| counts[b] > 0 && sums[b] > 0.0)
        .map(|b| ((b as f64).ln(), (sums[b] / counts[b] as f64).ln()))
        .collect();
    if points.len() < 2 {
        return Err(Error::ZeroVariance);
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Ok(sxy / sxx)
}
