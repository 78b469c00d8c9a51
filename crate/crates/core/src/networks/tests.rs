use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::tensor_engine::{AdamConfig, ParamId};

fn rand_tensor(dims: [usize; 4], seed: u64) -> Tensor<f32> {
    Tensor::random_uniform(dims, 0.0, 1.0, &mut ChaCha8Rng::seed_from_u64(seed))
}

fn tiny_srr() -> Network<f32> {
    build_srr(SrrSpec { depth: 4, width: 8 }, 1).unwrap()
}

fn tiny_djrhr() -> Network<f32> {
    build_djrhr(
        DjrhrSpec {
            blocks: 1,
            growth: 4,
            layers_per_block: 4,
        },
        1,
    )
    .unwrap()
}

/// Makes the zero-initialized last layer nonzero so `f` is not trivially zero.
fn perturb_last_layer(net: &mut Network<f32>, seed: u64) {
    let n = net.params().len();
    let id = ParamId(n - 2);
    let dims = net.params().get(id).dims();
    *net.params_mut().get_mut(id) = Tensor::random_uniform(dims, -0.05, 0.05, &mut ChaCha8Rng::seed_from_u64(seed));
}

#[test]
fn srr_default_parameter_count() {
    let net: Network<f32> = build_srr(SrrSpec::default(), 0).unwrap();
    let weights = 12 * 64 * 9 + 18 * (64 * 64 * 9) + 64 * 12 * 9;
    let biases = 19 * 64 + 12;
    assert_eq!(net.params().numel(), weights + biases);
    assert_eq!(net.params().len(), 40);
}

fn djrhr_count(k: usize, l: usize, per_block: usize) -> usize {
    let conv = |cin: usize, cout: usize, ksz: usize| cin * cout * ksz * ksz + cout;
    let mut total = conv(13, 2 * k, 3);
    for b in 0..l {
        for j in 0..per_block {
            total += conv(2 * k + j * k, k, 3);
        }
        let width = 2 * k + per_block * k;
        total += if b + 1 < l {
            conv(width, 2 * k, 1)
        } else {
            conv(width, 13, 1)
        };
    }
    total
}

#[test]
fn djrhr_parameter_counts() {
    let full: Network<f32> = build_djrhr(DjrhrSpec::default(), 0).unwrap();
    assert_eq!(full.params().numel(), djrhr_count(12, 3, 4));
    let small: Network<f32> = build_djrhr(
        DjrhrSpec {
            blocks: 1,
            growth: 8,
            layers_per_block: 4,
        },
        0,
    )
    .unwrap();
    assert_eq!(small.params().numel(), djrhr_count(8, 1, 4));
    assert!(small.params().numel() < full.params().numel());
}

#[test]
fn invalid_specs_rejected() {
    assert!(build_srr::<f32>(SrrSpec { depth: 1, width: 64 }, 0).is_err());
    assert!(build_srr::<f32>(SrrSpec { depth: 4, width: 0 }, 0).is_err());
    for (blocks, growth) in [(0, 12), (3, 0)] {
        let spec = DjrhrSpec {
            blocks,
            growth,
            layers_per_block: 4,
        };
        assert!(build_djrhr::<f32>(spec, 0).is_err());
    }
}

#[test]
fn seeds_control_initialization() {
    let a: Network<f32> = build_djrhr(DjrhrSpec::default(), 3).unwrap();
    let b: Network<f32> = build_djrhr(DjrhrSpec::default(), 3).unwrap();
    let c: Network<f32> = build_djrhr(DjrhrSpec::default(), 4).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn zero_final_layer_gives_zero_correction_and_identity() {
    for net in [tiny_srr(), tiny_djrhr()] {
        let image = rand_tensor([1, 3, 14, 18], 2);
        let x = net.pack(&image).unwrap();
        let fx = net.correction(&x).unwrap();
        assert!(fx.data().iter().all(|&v| v == 0.0));
        let out = net.infer(&image).unwrap();
        assert!(out.max_abs_diff(&image).unwrap() <= 1e-6);
    }
}

#[test]
fn recorded_and_eager_forward_agree() {
    for mut net in [tiny_srr(), tiny_djrhr()] {
        perturb_last_layer(&mut net, 5);
        let x = rand_tensor([2, net.channels(), 6, 5], 3);
        let mut g = Graph::new();
        let xn = g.leaf(x.clone()).unwrap();
        let fx = net.forward(&mut g, xn).unwrap();
        assert_eq!(g.value(fx), &net.correction(&x).unwrap());
    }
}

#[test]
fn odd_sizes_are_preserved() {
    for mut net in [tiny_srr(), tiny_djrhr()] {
        perturb_last_layer(&mut net, 9);
        for (h, w) in [(2, 2), (5, 7), (9, 4), (3, 3)] {
            let image = rand_tensor([1, 3, h, w], (h * 10 + w) as u64);
            let out = net.infer(&image).unwrap();
            assert_eq!(out.dims(), [1, 3, h, w]);
            assert!(out.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }
}

#[test]
fn infer_checks_network_kind() {
    let image = rand_tensor([1, 3, 4, 4], 0);
    assert!(infer_srr(&tiny_djrhr(), &image).is_err());
    assert!(infer_djrhr(&tiny_srr(), &image).is_err());
    assert!(infer_srr(&tiny_srr(), &image).is_ok());
}

#[test]
fn srr_loss_examples() {
    let net = tiny_srr();
    let x = rand_tensor([2, 12, 4, 4], 1);
    let mut g = Graph::new();
    assert_eq!(srr_loss(&mut g, &net, &x, &x).unwrap().total, 0.0);

    // dyadic values keep x + c exact in f32
    let x = x.map(|v| (v * 64.0).round() / 64.0);
    let c = 0.25f32;
    let y = x.map(|v| v + c);
    let mut g = Graph::new();
    let loss = srr_loss(&mut g, &net, &x, &y).unwrap();
    let want = (c as f64).powi(2) * x.item_len() as f64;
    assert_eq!(loss.total, want);
}

#[test]
fn srr_loss_matches_loop_oracle() {
    let mut net = tiny_srr();
    perturb_last_layer(&mut net, 11);
    let x = rand_tensor([3, 12, 5, 4], 7);
    let y = rand_tensor([3, 12, 5, 4], 8);
    let fx = net.correction(&x).unwrap();
    let mut oracle = 0.0f64;
    for i in 0..x.len() {
        let r = y.data()[i] as f64 - x.data()[i] as f64 - fx.data()[i] as f64;
        oracle += r * r;
    }
    oracle /= 3.0;
    let mut g = Graph::new();
    let loss = srr_loss(&mut g, &net, &x, &y).unwrap();
    assert!((loss.total - oracle).abs() <= 1e-6 * oracle);
}

#[test]
fn djrhr_loss_examples() {
    let net = tiny_djrhr();
    let x = rand_tensor([1, 13, 2, 2], 4);
    let mut g = Graph::new();
    let l = djrhr_loss(&mut g, &net, &x, &x, LossWeights::default()).unwrap();
    assert_eq!((l.total, l.l1, l.l2), (0.0, 0.0, 0.0));

    // subband residual sums to 2, dark residual to 4
    let x = Tensor::zeros([1, 13, 2, 2]);
    let mut y = x.clone();
    y.set(0, 0, 0, 0, 1.0);
    y.set(0, 5, 1, 1, 1.0);
    y.plane_mut(0, 12).fill(1.0);
    let mut g = Graph::new();
    let l = djrhr_loss(&mut g, &net, &x, &y, LossWeights { alpha: 0.5 }).unwrap();
    assert_eq!((l.l1, l.l2, l.total), (2.0, 4.0, 4.0));

    let mut g = Graph::new();
    let l = djrhr_loss(&mut g, &net, &x, &y, LossWeights { alpha: 0.0 }).unwrap();
    assert_eq!(l.total, l.l1);

    let mut g = Graph::new();
    assert!(djrhr_loss(&mut g, &net, &x, &y, LossWeights { alpha: -1.0 }).is_err());
}

#[test]
fn loss_rejects_mismatched_inputs() {
    let mut g = Graph::new();
    let x = rand_tensor([1, 12, 4, 4], 0);
    assert!(srr_loss(&mut g, &tiny_srr(), &x, &rand_tensor([1, 12, 4, 2], 0)).is_err());
    assert!(djrhr_loss(&mut g, &tiny_djrhr(), &x, &x, LossWeights::default()).is_err());
    assert!(srr_loss(
        &mut g,
        &tiny_srr(),
        &rand_tensor([1, 13, 4, 4], 0),
        &rand_tensor([1, 13, 4, 4], 0)
    )
    .is_err());
}

#[test]
fn dark_channel_prediction_is_discarded() {
    let mut net = tiny_djrhr();
    perturb_last_layer(&mut net, 21);
    let image = rand_tensor([1, 3, 11, 10], 6);
    let pack = crate::features::pack_djrhr(&image).unwrap();
    let y = net.predict(&pack.to_tensor()).unwrap();
    let base = unpack_to_image(&FeaturePack::from_tensor(&y, pack.original).unwrap()).unwrap();
    for fill in [-5.0f32, 0.0, 0.5, 100.0] {
        let mut mutated = y.clone();
        mutated.plane_mut(0, 12).fill(fill);
        let out = unpack_to_image(&FeaturePack::from_tensor(&mutated, pack.original).unwrap()).unwrap();
        assert_eq!(out.max_abs_diff(&base), Some(0.0));
    }
}

#[test]
fn checkpoint_round_trip_rebuilds_network() {
    for mut net in [tiny_srr(), tiny_djrhr()] {
        perturb_last_layer(&mut net, 2);
        let adam = AdamState::new(AdamConfig::default(), net.params());
        let ckpt = net.to_checkpoint(Some(&adam), &[("epoch", 3)]);
        let bytes = crate::tensor_engine::checkpoint::encode(&ckpt).unwrap();
        let back = crate::tensor_engine::checkpoint::decode(&bytes).unwrap();
        assert_eq!(back.header_field("epoch"), Some(3));
        assert_eq!(Network::from_checkpoint(&back).unwrap(), net);
    }
}

#[test]
fn checkpoint_with_wrong_parameters_is_rejected() {
    let srr = tiny_srr();
    let mut ckpt = srr.to_checkpoint(None, &[]);
    ckpt.header = tiny_djrhr().spec().header();
    assert!(Network::from_checkpoint(&ckpt).is_err());
    let mut ckpt = srr.to_checkpoint(None, &[]);
    ckpt.header.retain(|(k, _)| k != "kind");
    assert!(Network::from_checkpoint(&ckpt).is_err());
}

#[test]
fn train_step_on_a_constant_offset_reduces_loss() {
    let mut net = tiny_djrhr();
    let mut adam = AdamState::new(AdamConfig::default(), net.params());
    let x = rand_tensor([2, 13, 4, 4], 1);
    let y = x.map(|v| v + 0.1);
    let first = net.train_step(&mut adam, &x, &y, LossWeights::default()).unwrap();
    let mut last = first;
    for _ in 0..20 {
        last = net.train_step(&mut adam, &x, &y, LossWeights::default()).unwrap();
    }
    assert!(last.total < first.total);
    assert_eq!(adam.step, 21);
}
