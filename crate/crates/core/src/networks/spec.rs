use serde::{Deserialize, Serialize};

use crate::error::{CheckpointError, Error, Result};
use crate::features::{JOINT_CHANNELS, SUBBAND_CHANNELS};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NetworkKind {
    Srr,
    Djrhr,
}

impl NetworkKind {
    pub fn as_str(self) -> &'static str {
        match self {
            NetworkKind::Srr => "srr",
            NetworkKind::Djrhr => "djrhr",
        }
    }
}

impl std::str::FromStr for NetworkKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "srr" => Ok(NetworkKind::Srr),
            "djrhr" => Ok(NetworkKind::Djrhr),
            other => Err(Error::invalid(
                "model",
                format!("unknown model {other:?}, expected srr or djrhr"),
            )),
        }
    }
}

/// Plain stack of `depth` 3x3 convolutions, ReLU after all but the last.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SrrSpec {
    pub depth: usize,
    pub width: usize,
}

impl Default for SrrSpec {
    fn default() -> Self {
        SrrSpec { depth: 20, width: 64 }
    }
}

/// Dense network: a 3x3 stem to `2 * growth` channels, `blocks` dense blocks
/// of `layers_per_block` (ReLU, 3x3 conv to `growth`) layers whose outputs are
/// concatenated onto the running features, ReLU + 1x1 transitions back to
/// `2 * growth` channels between blocks, and a ReLU + 1x1 head.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DjrhrSpec {
    pub blocks: usize,
    pub growth: usize,
    pub layers_per_block: usize,
}

impl Default for DjrhrSpec {
    fn default() -> Self {
        DjrhrSpec {
            blocks: 3,
            growth: 12,
            layers_per_block: 4,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NetworkSpec {
    Srr(SrrSpec),
    Djrhr(DjrhrSpec),
}

/// One convolution in parameter order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub(crate) struct ConvLayer {
    pub name: String,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub zero_init: bool,
}

fn conv(name: String, in_channels: usize, out_channels: usize, kernel: usize) -> ConvLayer {
    ConvLayer {
        name,
        in_channels,
        out_channels,
        kernel,
        zero_init: false,
    }
}

const KIND_SRR: i64 = 0;
const KIND_DJRHR: i64 = 1;

impl NetworkSpec {
    pub fn kind(&self) -> NetworkKind {
        match self {
            NetworkSpec::Srr(_) => NetworkKind::Srr,
            NetworkSpec::Djrhr(_) => NetworkKind::Djrhr,
        }
    }

    /// Input and output channel count.
    pub fn channels(&self) -> usize {
        match self {
            NetworkSpec::Srr(_) => SUBBAND_CHANNELS,
            NetworkSpec::Djrhr(_) => JOINT_CHANNELS,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            NetworkSpec::Srr(s) => {
                if s.depth < 2 {
                    return Err(Error::invalid("srr spec", format!("depth {} is below 2", s.depth)));
                }
                if s.width == 0 {
                    return Err(Error::invalid("srr spec", "width must be positive"));
                }
            }
            NetworkSpec::Djrhr(s) => {
                if s.blocks == 0 || s.growth == 0 || s.layers_per_block == 0 {
                    return Err(Error::invalid(
                        "djrhr spec",
                        format!(
                            "blocks {}, growth {} and layers per block {} must all be positive",
                            s.blocks, s.growth, s.layers_per_block
                        ),
                    ));
                }
            }
        }
        Ok(())
    }

    pub(crate) fn conv_layers(&self) -> Vec<ConvLayer> {
        let mut out = Vec::new();
        match *self {
            NetworkSpec::Srr(s) => {
                for i in 0..s.depth {
                    let cin = if i == 0 { SUBBAND_CHANNELS } else { s.width };
                    let cout = if i + 1 == s.depth { SUBBAND_CHANNELS } else { s.width };
                    out.push(conv(format!("conv{i:02}"), cin, cout, 3));
                }
            }
            NetworkSpec::Djrhr(s) => {
                let base = 2 * s.growth;
                out.push(conv("stem".into(), JOINT_CHANNELS, base, 3));
                for b in 0..s.blocks {
                    for l in 0..s.layers_per_block {
                        out.push(conv(format!("block{b}.layer{l}"), base + l * s.growth, s.growth, 3));
                    }
                    let width = base + s.layers_per_block * s.growth;
                    if b + 1 < s.blocks {
                        out.push(conv(format!("transition{b}"), width, base, 1));
                    } else {
                        out.push(conv("head".into(), width, JOINT_CHANNELS, 1));
                    }
                }
            }
        }
        if let Some(last) = out.last_mut() {
            last.zero_init = true;
        }
        out
    }

    /// Integer header fields for the checkpoint.
    pub fn header(&self) -> Vec<(String, i64)> {
        let fields: Vec<(&str, usize)> = match *self {
            NetworkSpec::Srr(s) => vec![("depth", s.depth), ("width", s.width)],
            NetworkSpec::Djrhr(s) => vec![
                ("blocks", s.blocks),
                ("growth", s.growth),
                ("layers_per_block", s.layers_per_block),
            ],
        };
        let kind = match self {
            NetworkSpec::Srr(_) => KIND_SRR,
            NetworkSpec::Djrhr(_) => KIND_DJRHR,
        };
        std::iter::once(("kind".to_string(), kind))
            .chain(fields.into_iter().map(|(k, v)| (k.to_string(), v as i64)))
            .collect()
    }

    pub fn from_header(field: impl Fn(&str) -> Option<i64>) -> Result<Self> {
        let get = |name: &str| -> Result<usize> {
            let v = field(name).ok_or_else(|| CheckpointError::Header(format!("missing spec.{name}")))?;
            usize::try_from(v).map_err(|_| CheckpointError::Header(format!("spec.{name} = {v} is negative")).into())
        };
        let spec = match field("kind") {
            Some(KIND_SRR) => NetworkSpec::Srr(SrrSpec {
                depth: get("depth")?,
                width: get("width")?,
            }),
            Some(KIND_DJRHR) => NetworkSpec::Djrhr(DjrhrSpec {
                blocks: get("blocks")?,
                growth: get("growth")?,
                layers_per_block: get("layers_per_block")?,
            }),
            Some(other) => return Err(CheckpointError::Header(format!("unknown spec.kind {other}")).into()),
            None => return Err(CheckpointError::Header("missing spec.kind".into()).into()),
        };
        spec.validate()?;
        Ok(spec)
    }
}
