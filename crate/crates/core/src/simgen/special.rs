use statrs::function::gamma::{gamma_lr, ln_gamma};

use super::BandLaw;

/// Inverse of the regularized lower incomplete gamma function `P(a, x) = t`.
fn inverse_gamma_lr(a: f64, t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    let t = t.min(1.0 - 1e-16);
    let mut lo = 0.0;
    let mut hi = a.max(1.0);
    while gamma_lr(a, hi) < t {
        lo = hi;
        hi *= 2.0;
    }
    let log_norm = ln_gamma(a);
    let mut x = 0.5 * (lo + hi);
    for _ in 0..200 {
        let f = gamma_lr(a, x) - t;
        if f.abs() < 1e-15 {
            break;
        }
        if f < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let density = ((a - 1.0) * x.ln() - x - log_norm).exp();
        let newton = x - f / density;
        x = if density > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if hi - lo < 1e-14 * hi.max(1e-300) {
            break;
        }
    }
    x
}

/// Quantile function of `p(x) ∝ exp(-|x / scale|^exponent)` at `q` in (0, 1).
///
/// `|x| / scale` raised to `exponent` is Gamma(1 / exponent, 1) distributed.
pub fn generalized_laplacian_quantile(q: f64, law: BandLaw) -> f64 {
    let centered = 2.0 * q - 1.0;
    let g = inverse_gamma_lr(1.0 / law.exponent, centered.abs());
    centered.signum() * law.scale * g.powf(1.0 / law.exponent)
}
