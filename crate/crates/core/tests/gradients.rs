//! Reverse-mode gradients against 64-bit central finite differences.

use derain_core::networks::{loss_from_prediction, DjrhrSpec, LossWeights, Network, NetworkSpec, SrrSpec};
use derain_core::tensor_engine::gradcheck::{check_gradients, GradCheckOptions};
use derain_core::tensor_engine::{Graph, NodeId, ParamId};
use derain_core::{Result, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-4;

/// Values bounded away from zero so ReLU kinks stay outside the FD stencil.
fn input(dims: [usize; 4], seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = dims.iter().product();
    let data = (0..n)
        .map(|_| {
            let v: f64 = rng.random_range(0.1..1.0);
            if rng.random_bool(0.5) {
                v
            } else {
                -v
            }
        })
        .collect();
    Tensor::from_vec(dims, data).unwrap()
}

fn check<F>(name: &str, inputs: &[Tensor<f64>], build: F)
where
    F: Fn(&mut Graph<f64>, &[NodeId]) -> Result<NodeId>,
{
    let report = check_gradients(inputs, build, GradCheckOptions::default()).unwrap();
    assert!(
        report.max_rel_error < TOL,
        "{name}: max relative error {:e} at {:?}",
        report.max_rel_error,
        report.worst
    );
}

/// Squared distance to a random target, so output elements get distinct upstream gradients.
fn weighted(g: &mut Graph<f64>, x: NodeId, seed: u64) -> Result<NodeId> {
    let w = input(g.value(x).dims(), seed);
    let wn = g.leaf(w)?;
    g.frobenius_sq(x, wn)
}

#[test]
fn conv2d_variants() {
    for (k, stride, pad, bias) in [(3, 1, 1, true), (3, 2, 0, false), (1, 1, 0, true), (2, 2, 1, true)] {
        let mut inputs = vec![input([2, 3, 8, 8], 1), input([4, 3, k, k], 2)];
        if bias {
            inputs.push(input([1, 4, 1, 1], 3));
        }
        check(&format!("conv k{k} s{stride} p{pad}"), &inputs, |g, ids| {
            let y = g.conv2d(ids[0], ids[1], ids.get(2).copied(), stride, pad)?;
            weighted(g, y, 9)
        });
    }
}

#[test]
fn relu() {
    check("relu", &[input([2, 2, 8, 8], 4)], |g, ids| {
        let y = g.relu(ids[0])?;
        weighted(g, y, 5)
    });
}

#[test]
fn concat_and_slice() {
    let inputs = [input([2, 2, 8, 8], 6), input([2, 3, 8, 8], 7)];
    check("concat", &inputs, |g, ids| {
        let y = g.concat(&[ids[0], ids[1], ids[0]])?;
        weighted(g, y, 8)
    });
    check("slice", &inputs[1..], |g, ids| {
        let y = g.slice_channels(ids[0], 1, 2)?;
        weighted(g, y, 10)
    });
}

#[test]
fn elementwise_and_reductions() {
    let inputs = [input([2, 2, 8, 8], 11), input([2, 2, 8, 8], 12)];
    check("add", &inputs, |g, ids| {
        let y = g.add(ids[0], ids[1])?;
        weighted(g, y, 13)
    });
    check("sub", &inputs, |g, ids| {
        let y = g.sub(ids[0], ids[1])?;
        weighted(g, y, 14)
    });
    check("scale", &inputs[..1], |g, ids| {
        let y = g.scale(ids[0], -1.7)?;
        weighted(g, y, 15)
    });
    check("sum", &inputs[..1], |g, ids| {
        let y = g.relu(ids[0])?;
        g.sum(y)
    });
    check("frobenius", &inputs, |g, ids| g.frobenius_sq(ids[0], ids[1]));
}

fn network_check(spec: NetworkSpec, seed: u64) {
    let mut net: Network<f64> = Network::build(spec, seed).unwrap();
    // a nonzero head lets gradients reach every layer
    let head = ParamId(net.params().len() - 2);
    let dims = net.params().get(head).dims();
    *net.params_mut().get_mut(head) = input(dims, seed + 100).map(|v| v * 0.3);

    let c = net.channels();
    let x = input([2, c, 4, 4], seed + 1);
    let y = input([2, c, 4, 4], seed + 2);
    let mut inputs: Vec<Tensor<f64>> = net.params().values().to_vec();
    inputs.push(x);
    inputs.push(y);
    let n = net.params().len();
    let kind = spec.kind();
    check(&format!("{} network", kind.as_str()), &inputs, |g, ids| {
        let fx = net.forward_nodes(g, &ids[..n], ids[n])?;
        Ok(loss_from_prediction(g, kind, fx, ids[n], ids[n + 1], LossWeights::default())?.node)
    });
}

#[test]
fn tiny_srr_network() {
    network_check(NetworkSpec::Srr(SrrSpec { depth: 4, width: 8 }), 20);
}

#[test]
fn tiny_djrhr_network() {
    network_check(
        NetworkSpec::Djrhr(DjrhrSpec {
            blocks: 1,
            growth: 4,
            layers_per_block: 4,
        }),
        30,
    );
}
