//! SRR-net and DJRHR-net: residual predictors over packed wavelet features.
//!
//! Both networks compute a correction `f(X)` only; callers add the input
//! back (`Y = f(X) + X`) so one forward path serves training and inference.

mod layers;
mod loss;
mod spec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use loss::{djrhr_loss, loss_from_prediction, srr_loss, LossValues, LossWeights};
pub use spec::{DjrhrSpec, NetworkKind, NetworkSpec, SrrSpec};

use crate::error::{CheckpointError, Result};
use crate::features::{pack_djrhr, pack_srr, unpack_to_image, FeaturePack};
use crate::tensor_engine::{AdamState, Checkpoint, Graph, NodeId, ParamStore, Scalar, Tensor};
use layers::{Eager, Recorded};

/// A network description plus its parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Network<T = f32> {
    spec: NetworkSpec,
    params: ParamStore<T>,
}

pub fn build_srr<T: Scalar>(spec: SrrSpec, seed: u64) -> Result<Network<T>> {
    Network::build(NetworkSpec::Srr(spec), seed)
}

pub fn build_djrhr<T: Scalar>(spec: DjrhrSpec, seed: u64) -> Result<Network<T>> {
    Network::build(NetworkSpec::Djrhr(spec), seed)
}

impl<T: Scalar> Network<T> {
    /// Kaiming-uniform hidden weights, zero biases, zero final layer.
    pub fn build(spec: NetworkSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        for layer in spec.conv_layers() {
            let dims = [layer.out_channels, layer.in_channels, layer.kernel, layer.kernel];
            let weight = if layer.zero_init {
                Tensor::zeros(dims)
            } else {
                ParamStore::kaiming_uniform(dims, &mut rng)
            };
            params.register(format!("{}.weight", layer.name), weight);
            params.register(
                format!("{}.bias", layer.name),
                Tensor::zeros([1, layer.out_channels, 1, 1]),
            );
        }
        Ok(Network { spec, params })
    }

    pub fn spec(&self) -> NetworkSpec {
        self.spec
    }

    pub fn channels(&self) -> usize {
        self.spec.channels()
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    pub fn cast<U: Scalar>(&self) -> Network<U> {
        Network {
            spec: self.spec,
            params: self.params.cast(),
        }
    }

    /// Records `f(x)` on `g`, registering the parameters as graph nodes.
    pub fn forward(&self, g: &mut Graph<T>, x: NodeId) -> Result<NodeId> {
        let nodes: Vec<NodeId> = self.params.ids().map(|id| g.param(&self.params, id)).collect();
        self.forward_nodes(g, &nodes, x)
    }

    /// Records `f(x)` with parameters supplied as existing nodes, in store order.
    pub fn forward_nodes(&self, g: &mut Graph<T>, params: &[NodeId], x: NodeId) -> Result<NodeId> {
        let mut exec = Recorded { graph: g, params };
        layers::run(&self.spec, &mut exec, x)
    }

    /// `f(x)` without recording intermediates.
    pub fn correction(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut exec = Eager { params: &self.params };
        layers::run(&self.spec, &mut exec, x.clone())
    }

    /// `Y = f(X) + X` on a packed feature tensor.
    pub fn predict(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut y = self.correction(x)?;
        y.add_assign(x);
        Ok(y)
    }

    /// Restores a (1, 3, H, W) image: pack, residual forward, unpack.
    pub fn infer(&self, image: &Tensor<T>) -> Result<Tensor<T>> {
        let pack = match self.spec.kind() {
            NetworkKind::Srr => pack_srr(image)?,
            NetworkKind::Djrhr => pack_djrhr(image)?,
        };
        let y = self.predict(&pack.to_tensor())?;
        unpack_to_image(&FeaturePack::from_tensor(&y, pack.original)?)
    }

    /// One optimizer step on a packed batch; returns the pre-step loss.
    pub fn train_step(
        &mut self,
        adam: &mut AdamState<T>,
        x: &Tensor<T>,
        y: &Tensor<T>,
        weights: LossWeights,
    ) -> Result<LossValues> {
        let mut g = Graph::new();
        let loss = match self.spec.kind() {
            NetworkKind::Srr => srr_loss(&mut g, self, x, y)?,
            NetworkKind::Djrhr => djrhr_loss(&mut g, self, x, y, weights)?,
        };
        let grads = g.backward(loss.node)?.for_params(&self.params);
        adam.step(&mut self.params, &grads)?;
        Ok(loss)
    }

    /// Packs an image the way this network expects.
    pub fn pack(&self, image: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(match self.spec.kind() {
            NetworkKind::Srr => pack_srr(image)?,
            NetworkKind::Djrhr => pack_djrhr(image)?,
        }
        .to_tensor())
    }
}

pub fn infer_srr(net: &Network<f32>, image: &Tensor<f32>) -> Result<Tensor<f32>> {
    expect_kind(net, NetworkKind::Srr)?;
    net.infer(image)
}

pub fn infer_djrhr(net: &Network<f32>, image: &Tensor<f32>) -> Result<Tensor<f32>> {
    expect_kind(net, NetworkKind::Djrhr)?;
    net.infer(image)
}

fn expect_kind<T: Scalar>(net: &Network<T>, kind: NetworkKind) -> Result<()> {
    if net.spec.kind() != kind {
        return Err(crate::Error::invalid(
            "infer",
            format!("network is {}, expected {}", net.spec.kind().as_str(), kind.as_str()),
        ));
    }
    Ok(())
}

impl Network<f32> {
    /// Bundles parameters, optimizer state and extra integer header fields.
    pub fn to_checkpoint(&self, adam: Option<&AdamState<f32>>, extra: &[(&str, i64)]) -> Checkpoint {
        let mut header = self.spec.header();
        header.extend(extra.iter().map(|&(k, v)| (k.to_string(), v)));
        Checkpoint {
            header,
            params: self.params.clone(),
            adam: adam.cloned(),
        }
    }

    /// Rebuilds the network described by the checkpoint header and checks
    /// that the stored parameters match it name for name and shape for shape.
    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let spec = NetworkSpec::from_header(|name| ckpt.header_field(name))?;
        let template = Network::<f32>::build(spec, 0)?;
        let expected: Vec<(&str, [usize; 4])> = template.params.iter().map(|(n, t)| (n, t.dims())).collect();
        let found: Vec<(&str, [usize; 4])> = ckpt.params.iter().map(|(n, t)| (n, t.dims())).collect();
        if expected != found {
            return Err(CheckpointError::ShapeTable(format!(
                "parameters do not match a {} network ({} expected, {} stored)",
                spec.kind().as_str(),
                expected.len(),
                found.len()
            ))
            .into());
        }
        Ok(Network {
            spec,
            params: ckpt.params.clone(),
        })
    }
}

#[cfg(test)]
mod tests;
