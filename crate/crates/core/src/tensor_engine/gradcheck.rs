//! Central finite-difference verification of [`Graph::backward`].
//!
//! Only forward evaluation is used to form the numeric estimate, so the check
//! stays independent of the reverse-mode code it audits.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Graph, NodeId, Tensor};
use crate::error::Result;

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
    /// `(input index, element index)` of the worst entry.
    pub worst: (usize, usize),
}

#[derive(Clone, Copy, Debug)]
pub struct GradCheckOptions {
    pub step: f64,
    /// Denominator floor: `|a - n| / max(|a|, |n|, floor)`.
    pub floor: f64,
    /// Elements sampled per input; `None` checks every element.
    pub max_per_input: Option<usize>,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            step: 1e-5,
            floor: 1e-4,
            max_per_input: None,
            seed: 0,
        }
    }
}

/// `build` receives leaf ids for `inputs` (in order) and returns a scalar loss node.
pub fn check_gradients<F>(inputs: &[Tensor<f64>], build: F, opts: GradCheckOptions) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph<f64>, &[NodeId]) -> Result<NodeId>,
{
    let eval = |values: &[Tensor<f64>]| -> Result<f64> {
        let mut g = Graph::new();
        let ids = values.iter().map(|v| g.leaf(v.clone())).collect::<Result<Vec<_>>>()?;
        let loss = build(&mut g, &ids)?;
        Ok(g.scalar_f64(loss))
    };

    let mut g = Graph::new();
    let ids = inputs.iter().map(|v| g.leaf(v.clone())).collect::<Result<Vec<_>>>()?;
    let loss = build(&mut g, &ids)?;
    let grads = g.backward(loss)?;

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        checked: 0,
        worst: (0, 0),
    };
    let mut work: Vec<Tensor<f64>> = inputs.to_vec();
    for (k, input) in inputs.iter().enumerate() {
        let zeros = Tensor::zeros(input.dims());
        let analytic = grads.node(ids[k]).unwrap_or(&zeros);
        let picks: Vec<usize> = match opts.max_per_input {
            Some(cap) if cap < input.len() => {
                let mut v = sample(&mut rng, input.len(), cap).into_vec();
                v.sort_unstable();
                v
            }
            _ => (0..input.len()).collect(),
        };
        for i in picks {
            let orig = input.data()[i];
            work[k].data_mut()[i] = orig + opts.step;
            let plus = eval(&work)?;
            work[k].data_mut()[i] = orig - opts.step;
            let minus = eval(&work)?;
            work[k].data_mut()[i] = orig;

            let numeric = (plus - minus) / (2.0 * opts.step);
            let a = analytic.data()[i];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(opts.floor);
            report.checked += 1;
            if rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst = (k, i);
            }
        }
    }
    Ok(report)
}
