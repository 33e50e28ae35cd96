use proptest::prelude::{prop_assert, proptest, ProptestConfig};
use rand::Rng;
use usimdal::model::{
    decode_checkpoint, encode_checkpoint, forward_batch, forward_graph, nll_graph, nll_loss, optimal_sigma,
    residual_power, train, ArchDescriptor, NetworkParams, PredictiveOutput, TrainConfig,
};
use usimdal::numerics::{backward, Tape, Tensor};
use usimdal::rng;
use usimdal::simgen::{gen_pairs, GeneratorConfig};

fn two_layer() -> ArchDescriptor {
    ArchDescriptor { width: 6, body_layers: 2, ..ArchDescriptor::default() }
}

fn loss_at(arch: &ArchDescriptor, params: &[Tensor<f64>], x: &Tensor<f64>, y: &Tensor<f64>) -> f64 {
    let mut tape = Tape::<f64>::new();
    let nodes: Vec<_> = params.iter().map(|p| tape.constant(p.clone())).collect();
    let (xn, yn) = (tape.constant(x.clone()), tape.constant(y.clone()));
    let heads = forward_graph(&mut tape, arch, &nodes, xn).unwrap();
    let loss = nll_graph(&mut tape, heads, yn).unwrap();
    tape.value(loss).values()[0]
}

#[test]
fn two_layer_net_gradient_matches_finite_differences() {
    let arch = two_layer();
    let params: Vec<Tensor<f64>> = NetworkParams::init(arch, 2).unwrap().ordered().into_iter().map(|t| t.cast()).collect();
    let mut r = rng::stream(8);
    let x = Tensor::new(vec![2, 3, 8, 8], (0..384).map(|_| r.random::<f64>()).collect()).unwrap();
    let y = Tensor::new(vec![2, 3, 32, 32], (0..6144).map(|_| r.random::<f64>()).collect()).unwrap();
    let mut tape = Tape::<f64>::new();
    let nodes: Vec<_> = params.iter().map(|p| tape.param(p.clone())).collect();
    let (xn, yn) = (tape.constant(x.clone()), tape.constant(y.clone()));
    let heads = forward_graph(&mut tape, &arch, &nodes, xn).unwrap();
    let loss = nll_graph(&mut tape, heads, yn).unwrap();
    let grads = backward(&tape, loss).unwrap();

    // small step keeps leaky-relu kinks out of reach
    let h = 1e-6;
    let mut p = params.clone();
    for t in 0..params.len() {
        for _ in 0..8 {
            let i = r.random_range(0..params[t].numel());
            let orig = params[t].values()[i];
            p[t].values_mut()[i] = orig + h;
            let up = loss_at(&arch, &p, &x, &y);
            p[t].values_mut()[i] = orig - h;
            let down = loss_at(&arch, &p, &x, &y);
            p[t].values_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * h);
            let analytic = grads.get(nodes[t]).unwrap().values()[i];
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-7);
            assert!(rel < 1e-4, "tensor {t} index {i}: {analytic} vs {numeric}");
        }
    }
}

#[test]
fn checkpoint_preserves_predictions() {
    let g = GeneratorConfig::new([0.3, 0.3, 0.4], (32, 32), 6).unwrap();
    let pairs: Vec<_> = gen_pairs(&g, 6).unwrap().into_iter().map(|p| p.2).collect();
    let cfg = TrainConfig { epochs: 2, batch_size: 3, ..TrainConfig::pretrain_default() };
    let report = train(&pairs, &cfg, None, two_layer()).unwrap();
    let restored = decode_checkpoint(&encode_checkpoint(&report.params), "mem".as_ref()).unwrap();
    let x = usimdal::data::ImageTensor::batch(&pairs.iter().map(|p| &p.lr).collect::<Vec<_>>()).unwrap();
    assert_eq!(forward_batch(&report.params, &x).unwrap(), forward_batch(&restored, &x).unwrap());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    /// For a fixed mean, the loss is minimized by the residual power.
    #[test]
    fn squared_residual_minimizes_loss(seed in 0u64..1000, scale in 0.5f32..2.0) {
        let mut r = rng::stream(seed);
        let dims = [1, 3, 8, 8];
        let mean = Tensor::new(dims.to_vec(), (0..192).map(|_| r.random::<f32>()).collect()).unwrap();
        let target = Tensor::new(dims.to_vec(), (0..192).map(|_| r.random::<f32>()).collect()).unwrap();
        let best = residual_power(&mean, &target).unwrap().map(|v| v.max(1e-6));
        let at = |variance: Tensor| nll_loss(&PredictiveOutput { mean: mean.clone(), variance }, &target).unwrap();
        let optimum = at(best.clone());
        prop_assert!(optimum <= at(best.map(|v| v * scale)) + 1e-9);
    }

    /// With one channel the residual power is the elementwise square.
    #[test]
    fn single_channel_power_is_square(seed in 0u64..1000) {
        let mut r = rng::stream(seed);
        let a = Tensor::new(vec![1, 1, 4, 4], (0..16).map(|_| r.random::<f32>()).collect()).unwrap();
        let b = Tensor::new(vec![1, 1, 4, 4], (0..16).map(|_| r.random::<f32>()).collect()).unwrap();
        prop_assert!(residual_power(&a, &b).unwrap() == optimal_sigma(&a.sub(&b).unwrap()));
    }
}
