use super::network::{HeadNodes, PredictiveOutput};
use crate::error::{Error, Result};
use crate::numerics::{NodeId, Scalar, Tape, Tensor};

/// Records the Gaussian negative log-likelihood on `tape`.
///
/// Per pixel `0.5 * r2 / var + 0.5 * ln var`, where `r2` is the channel mean
/// of squared residuals, averaged over pixels and batch.
pub fn nll_graph<T: Scalar>(tape: &mut Tape<T>, heads: HeadNodes, target: NodeId) -> Result<NodeId> {
    let d = tape.sub(heads.mean, target)?;
    let d2 = tape.mul(d, d)?;
    let r2 = tape.mean_channels(d2)?;
    let q = tape.div(r2, heads.variance)?;
    let l = tape.log(heads.variance)?;
    let s = tape.add(q, l)?;
    let s = tape.mul_scalar(s, T::of_f64(0.5));
    Ok(tape.mean(s))
}

/// Channel mean of squared residuals, N x 1 x H x W.
pub fn residual_power(mean: &Tensor, target: &Tensor) -> Result<Tensor> {
    mean.sub(target)?.map(|d| d * d).mean_channels()
}

/// Elementwise square: the variance that minimizes the loss for a fixed
/// residual.
pub fn optimal_sigma(residual: &Tensor) -> Tensor {
    residual.map(|r| r * r)
}

/// Loss value for a finished prediction, accumulated in f64.
pub fn nll_loss(pred: &PredictiveOutput, target: &Tensor) -> Result<f64> {
    let r2 = residual_power(&pred.mean, target)?;
    if r2.dims() != pred.variance.dims() {
        return Err(Error::Shape(format!(
            "variance {:?} does not match residual map {:?}",
            pred.variance.dims(),
            r2.dims()
        )));
    }
    let mut acc = 0.0;
    for (&r, &v) in r2.values().iter().zip(pred.variance.values()) {
        if v.is_nan() || v <= 0.0 {
            return Err(Error::InvalidArgument(format!("variance {v} is not positive")));
        }
        let v = v as f64;
        acc += 0.5 * r as f64 / v + 0.5 * v.ln();
    }
    Ok(acc / r2.numel() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pred(mean: Vec<f32>, var: Vec<f32>, side: usize) -> PredictiveOutput {
        PredictiveOutput {
            mean: Tensor::new(vec![1, 3, side, side], mean).unwrap(),
            variance: Tensor::new(vec![1, 1, side, side], var).unwrap(),
        }
    }

    #[test]
    fn hand_values() {
        let y = Tensor::full(&[1, 3, 2, 2], 0.3);
        assert_eq!(nll_loss(&pred(vec![0.3; 12], vec![1.0; 4], 2), &y).unwrap(), 0.0);
        let c = 0.37f32;
        let l = nll_loss(&pred(vec![0.3; 12], vec![c; 4], 2), &y).unwrap();
        assert!((l - 0.5 * (c as f64).ln()).abs() < 1e-7);
        let y1 = Tensor::full(&[1, 3, 1, 1], 0.0);
        let l = nll_loss(&pred(vec![0.5; 3], vec![0.25], 1), &y1).unwrap();
        assert!((l - (0.5 + 0.25f64.ln() / 2.0)).abs() < 1e-5);
        assert!((l + 0.19315).abs() < 1e-5);
    }

    #[test]
    fn graph_matches_scalar_loop() {
        use rand::Rng;
        let mut r = crate::rng::stream(9);
        let n = 2 * 3 * 4 * 4;
        let m: Vec<f32> = (0..n).map(|_| r.random()).collect();
        let y: Vec<f32> = (0..n).map(|_| r.random()).collect();
        let v: Vec<f32> = (0..n / 3).map(|_| r.random_range(0.01..1.0)).collect();
        let mut tape = Tape::new();
        let mean = tape.param(Tensor::new(vec![2, 3, 4, 4], m.clone()).unwrap());
        let variance = tape.param(Tensor::new(vec![2, 1, 4, 4], v.clone()).unwrap());
        let target = tape.constant(Tensor::new(vec![2, 3, 4, 4], y.clone()).unwrap());
        let loss = nll_graph(&mut tape, HeadNodes { mean, variance }, target).unwrap();
        // oracle: explicit loops over batch, pixel and channel
        let mut acc = 0.0f64;
        for b in 0..2 {
            for p in 0..16 {
                let mut r2 = 0.0;
                for c in 0..3 {
                    let i = b * 48 + c * 16 + p;
                    r2 += ((m[i] - y[i]) as f64).powi(2) / 3.0;
                }
                let s = v[b * 16 + p] as f64;
                acc += 0.5 * r2 / s + 0.5 * s.ln();
            }
        }
        acc /= 32.0;
        assert!((tape.value(loss).values()[0] as f64 - acc).abs() < 1e-6);
    }

    #[test]
    fn stationary_point_is_squared_residual() {
        let r = 0.7f64;
        let f = |s: f64| 0.5 * r * r / s + 0.5 * s.ln();
        // golden-section search oracle
        let (mut a, mut b) = (1e-4, 5.0);
        let g = (5f64.sqrt() - 1.0) / 2.0;
        for _ in 0..200 {
            let c = b - g * (b - a);
            let d = a + g * (b - a);
            if f(c) < f(d) {
                b = d;
            } else {
                a = c;
            }
        }
        let s = 0.5 * (a + b);
        assert!((s - 0.49).abs() < 1e-4);
        let t = optimal_sigma(&Tensor::new(vec![3], vec![0.7f32, 0.5, 0.0]).unwrap());
        assert!((t.values()[0] as f64 - s).abs() < 1e-4);
        assert_eq!(&t.values()[1..], &[0.25, 0.0]);
    }
}
