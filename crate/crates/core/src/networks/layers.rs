//! One layer schedule, two executors: recorded on a [`Graph`] for training,
//! or evaluated eagerly so intermediates are freed as soon as possible.

use super::spec::NetworkSpec;
use crate::error::Result;
use crate::tensor_engine::{concat_channels, conv2d_forward, Graph, NodeId, ParamStore, Scalar, Tensor};

pub(crate) trait Exec {
    type V: Clone;

    /// Convolution `index` in parameter order, "same" padding.
    fn conv(&mut self, index: usize, x: &Self::V, kernel: usize) -> Result<Self::V>;
    fn relu(&mut self, x: &Self::V) -> Result<Self::V>;
    fn concat(&mut self, parts: &[Self::V]) -> Result<Self::V>;
}

pub(crate) struct Recorded<'a, T> {
    pub graph: &'a mut Graph<T>,
    pub params: &'a [NodeId],
}

impl<T: Scalar> Exec for Recorded<'_, T> {
    type V = NodeId;

    fn conv(&mut self, index: usize, x: &NodeId, kernel: usize) -> Result<NodeId> {
        let (w, b) = (self.params[2 * index], self.params[2 * index + 1]);
        self.graph.conv2d(*x, w, Some(b), 1, kernel / 2)
    }

    fn relu(&mut self, x: &NodeId) -> Result<NodeId> {
        self.graph.relu(*x)
    }

    fn concat(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        self.graph.concat(parts)
    }
}

pub(crate) struct Eager<'a, T> {
    pub params: &'a ParamStore<T>,
}

impl<T: Scalar> Exec for Eager<'_, T> {
    type V = Tensor<T>;

    fn conv(&mut self, index: usize, x: &Tensor<T>, kernel: usize) -> Result<Tensor<T>> {
        let values = self.params.values();
        conv2d_forward(x, &values[2 * index], Some(&values[2 * index + 1]), 1, kernel / 2)
    }

    fn relu(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(x.map(|v| if v > T::zero() { v } else { T::zero() }))
    }

    fn concat(&mut self, parts: &[Tensor<T>]) -> Result<Tensor<T>> {
        concat_channels(&parts.iter().collect::<Vec<_>>())
    }
}

/// Evaluates `f(x)` for `spec`; convolution indices follow `spec.conv_layers()`.
pub(crate) fn run<E: Exec>(spec: &NetworkSpec, exec: &mut E, x: E::V) -> Result<E::V> {
    match *spec {
        NetworkSpec::Srr(s) => {
            let mut h = x;
            for i in 0..s.depth {
                h = exec.conv(i, &h, 3)?;
                if i + 1 < s.depth {
                    h = exec.relu(&h)?;
                }
            }
            Ok(h)
        }
        NetworkSpec::Djrhr(s) => {
            let mut index = 0;
            let mut features = exec.conv(index, &x, 3)?;
            index += 1;
            for _ in 0..s.blocks {
                let mut parts = vec![features];
                for _ in 0..s.layers_per_block {
                    let running = if parts.len() == 1 {
                        parts[0].clone()
                    } else {
                        exec.concat(&parts)?
                    };
                    let a = exec.relu(&running)?;
                    parts.push(exec.conv(index, &a, 3)?);
                    index += 1;
                }
                let all = exec.concat(&parts)?;
                let a = exec.relu(&all)?;
                // transition between blocks, 1x1 head after the last
                features = exec.conv(index, &a, 1)?;
                index += 1;
            }
            Ok(features)
        }
    }
}
