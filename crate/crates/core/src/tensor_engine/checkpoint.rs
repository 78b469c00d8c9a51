//! Binary checkpoint format (little-endian):
//!
//! ```text
//! magic "DJRH" | version u32 | entry count u32
//! entry: name_len u16 | name utf-8 | ndim u8 | dims u32 * ndim | f32 * prod(dims)
//! ```
//!
//! Entry names partition the file: `spec.*` are integer header fields
//! describing the network, `adam.*` hold optimizer state
//! (`adam.m.<param>`, `adam.v.<param>`, `adam.t` and the hyperparameters),
//! everything else is a parameter.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use super::{AdamConfig, AdamState, ParamStore, Tensor};
use crate::error::{CheckpointError, Error, Result};

pub const MAGIC: [u8; 4] = *b"DJRH";
pub const FORMAT_VERSION: u32 = 1;

const SPEC_PREFIX: &str = "spec.";
const ADAM_M: &str = "adam.m.";
const ADAM_V: &str = "adam.v.";
const ADAM_T: &str = "adam.t";
const ADAM_HYPER: [&str; 6] = [
    "adam.lr",
    "adam.beta1",
    "adam.beta2",
    "adam.eps",
    "adam.weight_decay",
    "adam.lr_decay",
];

/// Largest integer an f32 holds exactly.
const MAX_EXACT_INT: i64 = 1 << 24;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    /// Named integer header fields, written as `spec.<name>`.
    pub header: Vec<(String, i64)>,
    pub params: ParamStore<f32>,
    pub adam: Option<AdamState<f32>>,
}

impl Checkpoint {
    pub fn header_field(&self, name: &str) -> Option<i64> {
        self.header.iter().find(|(n, _)| n == name).map(|&(_, v)| v)
    }
}

pub fn save_checkpoint(path: impl AsRef<Path>, ckpt: &Checkpoint) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode(ckpt)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(decode(&bytes)?)
}

struct Writer {
    buf: Vec<u8>,
    count: u32,
}

impl Writer {
    fn entry(&mut self, name: &str, dims: &[usize], data: &[f32]) -> Result<(), CheckpointError> {
        let name_len =
            u16::try_from(name.len()).map_err(|_| CheckpointError::Header(format!("entry name too long: {name}")))?;
        self.buf.extend_from_slice(&name_len.to_le_bytes());
        self.buf.extend_from_slice(name.as_bytes());
        self.buf.push(dims.len() as u8);
        for &d in dims {
            let d = u32::try_from(d).map_err(|_| CheckpointError::Header(format!("dimension too large in {name}")))?;
            self.buf.extend_from_slice(&d.to_le_bytes());
        }
        for &v in data {
            self.buf.extend_from_slice(&v.to_bits().to_le_bytes());
        }
        self.count += 1;
        Ok(())
    }

    fn tensor(&mut self, name: &str, t: &Tensor<f32>) -> Result<(), CheckpointError> {
        self.entry(name, &t.dims(), t.data())
    }

    fn scalar(&mut self, name: &str, v: f32) -> Result<(), CheckpointError> {
        self.entry(name, &[], &[v])
    }
}

pub fn encode(ckpt: &Checkpoint) -> Result<Vec<u8>, CheckpointError> {
    let mut w = Writer {
        buf: Vec::new(),
        count: 0,
    };
    for (name, value) in &ckpt.header {
        if value.abs() > MAX_EXACT_INT {
            return Err(CheckpointError::Header(format!(
                "header field {name} = {value} not representable"
            )));
        }
        w.scalar(&format!("{SPEC_PREFIX}{name}"), *value as f32)?;
    }
    for (name, t) in ckpt.params.iter() {
        if name.starts_with(SPEC_PREFIX) || name.starts_with("adam.") {
            return Err(CheckpointError::Header(format!(
                "parameter name {name} uses a reserved prefix"
            )));
        }
        w.tensor(name, t)?;
    }
    if let Some(adam) = &ckpt.adam {
        if adam.m.len() != ckpt.params.len() || adam.v.len() != ckpt.params.len() {
            return Err(CheckpointError::ShapeTable(
                "optimizer moments do not cover every parameter".into(),
            ));
        }
        for ((name, _), m) in ckpt.params.iter().zip(&adam.m) {
            w.tensor(&format!("{ADAM_M}{name}"), m)?;
        }
        for ((name, _), v) in ckpt.params.iter().zip(&adam.v) {
            w.tensor(&format!("{ADAM_V}{name}"), v)?;
        }
        let c = &adam.config;
        let hyper = [c.lr, c.beta1, c.beta2, c.eps, c.weight_decay, c.lr_decay];
        for (name, v) in ADAM_HYPER.iter().zip(hyper) {
            w.scalar(name, v)?;
        }
        if adam.step as i64 > MAX_EXACT_INT {
            return Err(CheckpointError::Header("adam step counter overflow".into()));
        }
        w.scalar(ADAM_T, adam.step as f32)?;
    }

    let mut out = Vec::with_capacity(12 + w.buf.len());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&w.count.to_le_bytes());
    out.extend_from_slice(&w.buf);
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8], CheckpointError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or(CheckpointError::Truncated(what))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &'static str) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

struct RawEntry {
    name: String,
    dims: Vec<usize>,
    data: Vec<f32>,
}

fn to_tensor(e: RawEntry) -> Result<Tensor<f32>, CheckpointError> {
    if e.dims.len() > 4 {
        return Err(CheckpointError::ShapeTable(format!(
            "{} has rank {}, at most 4 supported",
            e.name,
            e.dims.len()
        )));
    }
    let mut dims = [1usize; 4];
    dims[4 - e.dims.len()..].copy_from_slice(&e.dims);
    Ok(Tensor::from_vec(dims, e.data).expect("entry length checked while reading"))
}

fn scalar_of(e: &RawEntry) -> Result<f32, CheckpointError> {
    match e.data.as_slice() {
        [v] => Ok(*v),
        _ => Err(CheckpointError::ShapeTable(format!(
            "{} should be a scalar, has {} values",
            e.name,
            e.data.len()
        ))),
    }
}

pub fn decode(bytes: &[u8]) -> Result<Checkpoint, CheckpointError> {
    let mut r = Reader { bytes, pos: 0 };
    let magic: [u8; 4] = r.take(4, "magic")?.try_into().unwrap();
    if magic != MAGIC {
        return Err(CheckpointError::BadMagic(magic));
    }
    let version = r.u32("version")?;
    if version == 0 || version > FORMAT_VERSION {
        return Err(CheckpointError::UnsupportedVersion {
            found: version,
            supported: FORMAT_VERSION,
        });
    }
    let count = r.u32("entry count")?;

    let mut entries = Vec::new();
    for _ in 0..count {
        let name_len = u16::from_le_bytes(r.take(2, "entry name length")?.try_into().unwrap());
        let name = std::str::from_utf8(r.take(name_len as usize, "entry name")?)
            .map_err(|_| CheckpointError::BadName)?
            .to_owned();
        let ndim = r.take(1, "entry rank")?[0] as usize;
        let mut dims = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            dims.push(r.u32("entry dims")? as usize);
        }
        let len = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| CheckpointError::ShapeTable(format!("{name}: dims overflow")))?;
        let raw = r.take(
            len.checked_mul(4).ok_or(CheckpointError::Truncated("entry data"))?,
            "entry data",
        )?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_bits(u32::from_le_bytes(c.try_into().unwrap())))
            .collect();
        entries.push(RawEntry { name, dims, data });
    }
    if r.pos != bytes.len() {
        return Err(CheckpointError::Header(format!(
            "{} trailing bytes after {count} entries",
            bytes.len() - r.pos
        )));
    }

    let mut header = Vec::new();
    let mut params = ParamStore::new();
    let mut m = HashMap::new();
    let mut v = HashMap::new();
    let mut hyper: HashMap<&str, f32> = HashMap::new();
    let mut step = None;
    for e in entries {
        if let Some(field) = e.name.strip_prefix(SPEC_PREFIX) {
            let value = scalar_of(&e)?;
            if value.fract() != 0.0 {
                return Err(CheckpointError::Header(format!(
                    "header field {field} is not an integer"
                )));
            }
            header.push((field.to_owned(), value as i64));
        } else if let Some(p) = e.name.strip_prefix(ADAM_M) {
            m.insert(p.to_owned(), to_tensor(e)?);
        } else if let Some(p) = e.name.strip_prefix(ADAM_V) {
            v.insert(p.to_owned(), to_tensor(e)?);
        } else if e.name == ADAM_T {
            step = Some(scalar_of(&e)?);
        } else if let Some(h) = ADAM_HYPER.iter().find(|&&h| h == e.name) {
            hyper.insert(h, scalar_of(&e)?);
        } else if e.name.starts_with("adam.") {
            return Err(CheckpointError::Header(format!("unknown optimizer entry {}", e.name)));
        } else {
            if params.find(&e.name).is_some() {
                return Err(CheckpointError::ShapeTable(format!("duplicate parameter {}", e.name)));
            }
            let name = e.name.clone();
            params.register(name, to_tensor(e)?);
        }
    }

    let has_adam = step.is_some() || !m.is_empty() || !v.is_empty() || !hyper.is_empty();
    let adam = if has_adam {
        let step = step.ok_or_else(|| CheckpointError::Header("missing adam.t".into()))?;
        let h = |name: &str| {
            hyper
                .get(name)
                .copied()
                .ok_or_else(|| CheckpointError::Header(format!("missing {name}")))
        };
        let config = AdamConfig {
            lr: h("adam.lr")?,
            beta1: h("adam.beta1")?,
            beta2: h("adam.beta2")?,
            eps: h("adam.eps")?,
            weight_decay: h("adam.weight_decay")?,
            lr_decay: h("adam.lr_decay")?,
        };
        let mut ms = Vec::with_capacity(params.len());
        let mut vs = Vec::with_capacity(params.len());
        for (name, p) in params.iter() {
            for (table, out, kind) in [(&mut m, &mut ms, "m"), (&mut v, &mut vs, "v")] {
                let t = table
                    .remove(name)
                    .ok_or_else(|| CheckpointError::ShapeTable(format!("no adam.{kind} entry for {name}")))?;
                if t.dims() != p.dims() {
                    return Err(CheckpointError::ShapeTable(format!(
                        "adam.{kind}.{name} has dims {:?}, parameter has {:?}",
                        t.dims(),
                        p.dims()
                    )));
                }
                out.push(t);
            }
        }
        if let Some(orphan) = m.keys().chain(v.keys()).next() {
            return Err(CheckpointError::ShapeTable(format!(
                "optimizer state for unknown parameter {orphan}"
            )));
        }
        Some(AdamState {
            config,
            step: step as u32,
            m: ms,
            v: vs,
        })
    } else {
        None
    };

    Ok(Checkpoint { header, params, adam })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        let mut params = ParamStore::new();
        params.register(
            "conv0.weight",
            Tensor::from_vec([2, 1, 1, 2], vec![1.5, -2.0, f32::MIN_POSITIVE, 3.25]).unwrap(),
        );
        params.register("conv0.bias", Tensor::from_vec([1, 2, 1, 1], vec![0.1, -0.0]).unwrap());
        let mut adam = AdamState::new(AdamConfig::default(), &params);
        adam.step = 7;
        adam.m[0].data_mut()[1] = 0.123;
        adam.v[1].data_mut()[0] = 4e-9;
        adam.decay_lr();
        Checkpoint {
            header: vec![("kind".into(), 1), ("growth".into(), 12)],
            params,
            adam: Some(adam),
        }
    }

    #[test]
    fn round_trip_is_bitwise() {
        let ckpt = sample();
        let bytes = encode(&ckpt).unwrap();
        let back = decode(&bytes).unwrap();
        assert_eq!(encode(&back).unwrap(), bytes);
        assert_eq!(back.header_field("growth"), Some(12));
        let (a, b) = (ckpt.params.values(), back.params.values());
        for (x, y) in a.iter().zip(b) {
            let xb: Vec<u32> = x.data().iter().map(|v| v.to_bits()).collect();
            let yb: Vec<u32> = y.data().iter().map(|v| v.to_bits()).collect();
            assert_eq!(xb, yb);
        }
        assert_eq!(back.adam.as_ref().unwrap().step, 7);
        assert_eq!(back.adam.unwrap().config.lr.to_bits(), (1e-3f32 * 0.95).to_bits());
    }

    #[test]
    fn layout_starts_with_magic_version_count() {
        let bytes = encode(&sample()).unwrap();
        assert_eq!(&bytes[0..4], b"DJRH");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        // 2 header + 2 params + 2 m + 2 v + 6 hyper + t
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 15);
        // first entry: "spec.kind", scalar
        assert_eq!(u16::from_le_bytes(bytes[12..14].try_into().unwrap()), 9);
        assert_eq!(&bytes[14..23], b"spec.kind");
        assert_eq!(bytes[23], 0);
        assert_eq!(f32::from_le_bytes(bytes[24..28].try_into().unwrap()), 1.0);
    }

    #[test]
    fn corrupted_magic_is_format_error() {
        let mut bytes = encode(&sample()).unwrap();
        bytes[0] = b'X';
        assert!(matches!(decode(&bytes), Err(CheckpointError::BadMagic(_))));
    }

    #[test]
    fn future_version_is_version_error() {
        let mut bytes = encode(&sample()).unwrap();
        bytes[4..8].copy_from_slice(&(FORMAT_VERSION + 1).to_le_bytes());
        assert!(matches!(
            decode(&bytes),
            Err(CheckpointError::UnsupportedVersion { found: 2, .. })
        ));
    }

    #[test]
    fn truncation_is_detected_at_every_cut() {
        let bytes = encode(&sample()).unwrap();
        for cut in [0, 3, 7, 11, 13, 30, bytes.len() - 1] {
            assert!(
                matches!(decode(&bytes[..cut]), Err(CheckpointError::Truncated(_))),
                "cut at {cut}"
            );
        }
    }

    #[test]
    fn moment_shape_disagreement_is_shape_table_error() {
        let mut ckpt = sample();
        ckpt.adam.as_mut().unwrap().m[0] = Tensor::zeros([1, 1, 1, 4]);
        let bytes = encode(&ckpt).unwrap();
        assert!(matches!(decode(&bytes), Err(CheckpointError::ShapeTable(_))));
    }

    #[test]
    fn parameters_without_optimizer_state() {
        let mut ckpt = sample();
        ckpt.adam = None;
        let back = decode(&encode(&ckpt).unwrap()).unwrap();
        assert!(back.adam.is_none());
        assert_eq!(back.params, ckpt.params);
    }
}
