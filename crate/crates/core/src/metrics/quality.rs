use crate::data::ImageTensor;
use crate::error::{Error, Result};

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;

fn check_shapes(a: &ImageTensor, b: &ImageTensor) -> Result<()> {
    if !a.same_shape(b) {
        return Err(Error::Shape(format!(
            "{}x{}x{} vs {}x{}x{}",
            a.height(),
            a.width(),
            a.channels(),
            b.height(),
            b.width(),
            b.channels()
        )));
    }
    Ok(())
}

/// Mean squared difference over pixels and channels.
pub fn mse(a: &ImageTensor, b: &ImageTensor) -> Result<f64> {
    check_shapes(a, b)?;
    let s: f64 = a.data().iter().zip(b.data()).map(|(&x, &y)| (x as f64 - y as f64).powi(2)).sum();
    Ok(s / a.data().len() as f64)
}

/// Mean absolute difference over pixels and channels.
pub fn mae(a: &ImageTensor, b: &ImageTensor) -> Result<f64> {
    check_shapes(a, b)?;
    let s: f64 = a.data().iter().zip(b.data()).map(|(&x, &y)| (x as f64 - y as f64).abs()).sum();
    Ok(s / a.data().len() as f64)
}

/// PSNR in dB for a given mean squared error.
pub fn psnr_from_mse(mse: f64, max_val: f64) -> Result<f64> {
    if mse == 0.0 {
        return Err(Error::Undefined("infinite PSNR".into()));
    }
    if !(mse > 0.0 && mse.is_finite()) {
        return Err(Error::InvalidArgument(format!("mse must be positive, got {mse}")));
    }
    Ok(10.0 * (max_val * max_val / mse).log10())
}

pub fn psnr(a: &ImageTensor, b: &ImageTensor, max_val: f64) -> Result<f64> {
    psnr_from_mse(mse(a, b)?, max_val)
}

/// Normalized 1-D Gaussian taps.
fn gaussian_taps() -> [f64; SSIM_WINDOW] {
    let mut taps = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    for (i, t) in taps.iter_mut().enumerate() {
        *t = (-((i as f64 - c).powi(2)) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = taps.iter().sum();
    taps.map(|t| t / s)
}

/// Separable Gaussian filter over valid window positions.
fn filter_valid(plane: &[f64], h: usize, w: usize, taps: &[f64]) -> Vec<f64> {
    let k = taps.len();
    let (oh, ow) = (h - k + 1, w - k + 1);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = taps.iter().enumerate().map(|(i, t)| t * plane[y * w + x + i]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = taps.iter().enumerate().map(|(i, t)| t * rows[(y + i) * ow + x]).sum();
        }
    }
    out
}

/// Mean structural similarity on the channel-mean images, using an 11x11
/// Gaussian window (sigma 1.5) at every fully contained position and unit
/// dynamic range.
pub fn ssim(a: &ImageTensor, b: &ImageTensor) -> Result<f64> {
    check_shapes(a, b)?;
    let (h, w) = (a.height(), a.width());
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::Shape(format!("SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {h}x{w}")));
    }
    let (c1, c2) = (0.01f64.powi(2), 0.03f64.powi(2));
    let (x, y) = (a.gray(), b.gray());
    let taps = gaussian_taps();
    let prod = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(u, v)| u * v).collect::<Vec<_>>();
    let mx = filter_valid(&x, h, w, &taps);
    let my = filter_valid(&y, h, w, &taps);
    let mxx = filter_valid(&prod(&x, &x), h, w, &taps);
    let myy = filter_valid(&prod(&y, &y), h, w, &taps);
    let mxy = filter_valid(&prod(&x, &y), h, w, &taps);
    let mut acc = 0.0;
    for i in 0..mx.len() {
        let (ux, uy) = (mx[i], my[i]);
        let vx = mxx[i] - ux * ux;
        let vy = myy[i] - uy * uy;
        let cxy = mxy[i] - ux * uy;
        acc += ((2.0 * ux * uy + c1) * (2.0 * cxy + c2)) / ((ux * ux + uy * uy + c1) * (vx + vy + c2));
    }
    Ok(acc / mx.len() as f64)
}

/// Per-pixel absolute error averaged over channels, as a 1-channel image.
pub fn error_map(pred: &ImageTensor, y: &ImageTensor) -> Result<ImageTensor> {
    check_shapes(pred, y)?;
    let c = pred.channels();
    let data = pred
        .data()
        .chunks_exact(c)
        .zip(y.data().chunks_exact(c))
        .map(|(p, q)| (p.iter().zip(q).map(|(&u, &v)| (u as f64 - v as f64).abs()).sum::<f64>() / c as f64) as f32)
        .collect();
    ImageTensor::from_clamped(pred.height(), pred.width(), 1, data)
}

/// Relative PSNR boost of uncertainty selection over random selection, in
/// percent of the gain random selection achieves over no fine-tuning.
pub fn pboost(psnr_usim: f64, psnr_simrand: f64, psnr_sim: f64) -> Result<f64> {
    let denom = psnr_simrand - psnr_sim;
    if denom == 0.0 {
        return Err(Error::Undefined("SIM+Random equals SIM baseline".into()));
    }
    Ok((psnr_usim - psnr_simrand) * 100.0 / denom)
}

/// Metrics averaged over an evaluation set.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricReport {
    pub mse: f64,
    pub mae: f64,
    pub psnr: f64,
    pub ssim: f64,
}

impl MetricReport {
    /// Averages per-image metrics over `(prediction, target)` pairs.
    pub fn average<'a>(pairs: impl IntoIterator<Item = (&'a ImageTensor, &'a ImageTensor)>) -> Result<Self> {
        let mut sum = [0.0; 4];
        let mut n = 0usize;
        for (p, y) in pairs {
            let e = mse(p, y)?;
            sum[0] += e;
            sum[1] += mae(p, y)?;
            sum[2] += psnr_from_mse(e, 1.0)?;
            sum[3] += ssim(p, y)?;
            n += 1;
        }
        if n == 0 {
            return Err(Error::InvalidArgument("empty evaluation set".into()));
        }
        let k = n as f64;
        Ok(Self {
            mse: sum[0] / k,
            mae: sum[1] / k,
            psnr: sum[2] / k,
            ssim: sum[3] / k,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng;

    fn random(seed: u64, side: usize, c: usize) -> ImageTensor {
        let mut r = rng::stream(seed);
        ImageTensor::new(side, side, c, (0..side * side * c).map(|_| r.random()).collect()).unwrap()
    }

    #[test]
    fn constant_fields() {
        let a = ImageTensor::filled(16, 16, 3, 0.0).unwrap();
        let b = ImageTensor::filled(16, 16, 3, 0.5).unwrap();
        assert_eq!(mse(&a, &a).unwrap(), 0.0);
        assert_eq!(mae(&a, &a).unwrap(), 0.0);
        assert_eq!(mse(&a, &b).unwrap(), 0.25);
        assert_eq!(mae(&a, &b).unwrap(), 0.5);
        assert!(matches!(psnr(&a, &a, 1.0), Err(Error::Undefined(_))));
    }

    #[test]
    fn psnr_values() {
        assert_eq!(psnr_from_mse(0.01, 1.0).unwrap(), 20.0);
        assert_eq!(psnr_from_mse(1.0, 1.0).unwrap(), 0.0);
        let mut last = f64::INFINITY;
        for k in 1..50 {
            let p = psnr_from_mse(k as f64 * 0.01, 1.0).unwrap();
            assert!(p < last);
            last = p;
        }
    }

    #[test]
    fn ssim_identity_symmetry_and_constants() {
        let x = random(1, 32, 3);
        let y = random(2, 32, 3);
        assert!((ssim(&x, &x).unwrap() - 1.0).abs() < 1e-6);
        assert!((ssim(&x, &y).unwrap() - ssim(&y, &x).unwrap()).abs() < 1e-9);
        let zero = ImageTensor::filled(16, 16, 1, 0.0).unwrap();
        let one = ImageTensor::filled(16, 16, 1, 1.0).unwrap();
        // zero variances leave (c1 / (1 + c1)) * (c2 / c2)
        let want = 1e-4 / (1.0 + 1e-4);
        assert!((ssim(&zero, &one).unwrap() - want).abs() < 1e-9);
        assert!(ssim(&random(3, 10, 1), &random(4, 10, 1)).is_err());
    }

    #[test]
    fn error_map_single_pixel() {
        let a = ImageTensor::filled(4, 4, 3, 0.5).unwrap();
        assert!(error_map(&a, &a).unwrap().data().iter().all(|&v| v == 0.0));
        let mut d = a.data().to_vec();
        for c in 0..3 {
            d[(2 * 4 + 1) * 3 + c] = 0.75;
        }
        let b = ImageTensor::new(4, 4, 3, d).unwrap();
        let m = error_map(&b, &a).unwrap();
        for (i, &v) in m.data().iter().enumerate() {
            assert_eq!(v, if i == 9 { 0.25 } else { 0.0 });
        }
    }

    #[test]
    fn pboost_values() {
        assert!((pboost(25.174, 25.007, 24.805).unwrap() - 82.67).abs() < 0.05);
        assert_eq!(pboost(25.0, 25.0, 24.0).unwrap(), 0.0);
        assert!(pboost(27.0, 25.0, 24.0).unwrap() > 100.0);
        assert!(matches!(pboost(25.0, 24.0, 24.0), Err(Error::Undefined(_))));
    }
}
