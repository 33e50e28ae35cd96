use rand::Rng;
use statrs::distribution::{ContinuousCDF, Gamma};
use usimdal::rng;
use usimdal::simgen::{estimate_power_spectrum_slope, gen_spectrum_image, gen_wmm_image_with_bands, sample_params, BandLaw, SpectrumParams};

/// Reference draws from the generalized Laplacian by inverting the gamma CDF.
fn reference_sample(law: BandLaw, n: usize, seed: u64) -> Vec<f64> {
    let g = Gamma::new(1.0 / law.exponent, 1.0).unwrap();
    let mut r = rng::stream(seed);
    let mut out: Vec<f64> = (0..n)
        .map(|_| {
            let u: f64 = r.random();
            let sign = if r.random::<bool>() { 1.0 } else { -1.0 };
            sign * law.scale * g.inverse_cdf(u).powf(1.0 / law.exponent)
        })
        .collect();
    out.sort_by(f64::total_cmp);
    out
}

fn ks_two_sample(a: &mut [f64], b: &[f64]) -> f64 {
    a.sort_by(f64::total_cmp);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    d
}

#[test]
fn wmm_bands_follow_generalized_laplacian() {
    for seed in 0..3u64 {
        let (_, wp, _) = sample_params(&mut rng::stream(seed), (64, 64));
        let (_, bands) = gen_wmm_image_with_bands(&wp, (64, 64), &mut rng::stream(seed + 100)).unwrap();
        assert_eq!(bands.len(), 3 * wp.num_scales);
        for (k, band) in bands.iter().enumerate() {
            let reference = reference_sample(band.law, 20_000, seed * 1000 + k as u64);
            let d = ks_two_sample(&mut band.coefficients.clone(), &reference);
            assert!(d < 0.05, "seed {seed} band {k}: KS {d}");
        }
    }
}

#[test]
fn spectrum_slope_near_minus_two() {
    let p = SpectrumParams { a: 1.0, b: 1.0 };
    let slopes: Vec<f64> = (0..5)
        .map(|s| estimate_power_spectrum_slope(&gen_spectrum_image(&p, (64, 64), &mut rng::stream(s)).unwrap()).unwrap())
        .collect();
    for s in &slopes {
        assert!((-2.6..=-1.4).contains(s), "{slopes:?}");
    }
}
