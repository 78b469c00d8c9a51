use serde::{Deserialize, Serialize};

use super::{Network, NetworkKind};
use crate::error::{Error, Result};
use crate::features::{JOINT_CHANNELS, SUBBAND_CHANNELS};
use crate::tensor_engine::{Graph, NodeId, Scalar, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    /// Weight of the dark-channel term.
    pub alpha: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { alpha: 0.5 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::invalid(
                "loss weights",
                format!("alpha {} must be >= 0", self.alpha),
            ));
        }
        Ok(())
    }
}

/// A recorded loss and its 64-bit components. For SRR `l1 == total` and `l2 == 0`.
#[derive(Clone, Copy, Debug)]
pub struct LossValues {
    pub node: NodeId,
    pub total: f64,
    pub l1: f64,
    pub l2: f64,
}

/// Loss for a recorded correction `fx`: the prediction is `fx + x`, compared
/// with `y` by squared Frobenius distance per batch item. The joint variant
/// splits subband channels from the dark channel and weights the latter.
pub fn loss_from_prediction<T: Scalar>(
    g: &mut Graph<T>,
    kind: NetworkKind,
    fx: NodeId,
    x: NodeId,
    y: NodeId,
    weights: LossWeights,
) -> Result<LossValues> {
    weights.validate()?;
    let y_hat = g.add(fx, x)?;
    match kind {
        NetworkKind::Srr => {
            let node = g.frobenius_sq(y_hat, y)?;
            let l1 = g.scalar_f64(node);
            Ok(LossValues {
                node,
                total: l1,
                l1,
                l2: 0.0,
            })
        }
        NetworkKind::Djrhr => {
            let sub_hat = g.slice_channels(y_hat, 0, SUBBAND_CHANNELS)?;
            let sub_ref = g.slice_channels(y, 0, SUBBAND_CHANNELS)?;
            let dark_hat = g.slice_channels(y_hat, SUBBAND_CHANNELS, 1)?;
            let dark_ref = g.slice_channels(y, SUBBAND_CHANNELS, 1)?;
            let l1 = g.frobenius_sq(sub_hat, sub_ref)?;
            let l2 = g.frobenius_sq(dark_hat, dark_ref)?;
            let weighted = g.scale(l2, weights.alpha)?;
            let node = g.add(l1, weighted)?;
            Ok(LossValues {
                node,
                total: g.scalar_f64(node),
                l1: g.scalar_f64(l1),
                l2: g.scalar_f64(l2),
            })
        }
    }
}

fn check_inputs<T: Scalar>(net: &Network<T>, kind: NetworkKind, x: &Tensor<T>, y: &Tensor<T>) -> Result<()> {
    if net.spec().kind() != kind {
        return Err(Error::invalid(
            "loss",
            format!("{} loss on a {} network", kind.as_str(), net.spec().kind().as_str()),
        ));
    }
    let channels = match kind {
        NetworkKind::Srr => SUBBAND_CHANNELS,
        NetworkKind::Djrhr => JOINT_CHANNELS,
    };
    if x.channels() != channels {
        return Err(Error::invalid(
            "loss",
            format!(
                "{} network needs {channels} input channels, got {}",
                kind.as_str(),
                x.channels()
            ),
        ));
    }
    x.expect_dims("loss", y.dims())
}

/// `(1/N) sum ||Y - X - f(X)||_F^2` over the 12 subband channels.
pub fn srr_loss<T: Scalar>(g: &mut Graph<T>, net: &Network<T>, x: &Tensor<T>, y: &Tensor<T>) -> Result<LossValues> {
    check_inputs(net, NetworkKind::Srr, x, y)?;
    let xn = g.leaf(x.clone())?;
    let yn = g.leaf(y.clone())?;
    let fx = net.forward(g, xn)?;
    loss_from_prediction(g, NetworkKind::Srr, fx, xn, yn, LossWeights::default())
}

/// Subband loss plus `alpha` times the dark-channel loss.
pub fn djrhr_loss<T: Scalar>(
    g: &mut Graph<T>,
    net: &Network<T>,
    x: &Tensor<T>,
    y: &Tensor<T>,
    weights: LossWeights,
) -> Result<LossValues> {
    check_inputs(net, NetworkKind::Djrhr, x, y)?;
    let xn = g.leaf(x.clone())?;
    let yn = g.leaf(y.clone())?;
    let fx = net.forward(g, xn)?;
    loss_from_prediction(g, NetworkKind::Djrhr, fx, xn, yn, weights)
}
