//! Binary named-tensor checkpoints.
//!
//! Layout: the line `TAPSAMPLE-CKPT v1\n`, a `u32` tensor count, then per
//! tensor a `u32` name length, the UTF-8 name, a `u32` rank, `rank` `u32`
//! dimensions and the `f32` values in row-major order. All integers and
//! floats are little-endian.

use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::{Activation, Dense, Mlp};

pub const MAGIC_PREFIX: &str = "TAPSAMPLE-CKPT v";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub dims: Vec<u32>,
    pub values: Vec<f32>,
}

impl Tensor {
    pub fn scalar(name: impl Into<String>, value: f32) -> Self {
        Tensor {
            name: name.into(),
            dims: vec![],
            values: vec![value],
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Checkpoint {
    tensors: Vec<Tensor>,
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn push(&mut self, tensor: Tensor) {
        self.tensors.push(tensor);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn scalar(&self, name: &str) -> Option<f32> {
        self.get(name).and_then(|t| t.values.first().copied())
    }

    pub fn put_mlp(&mut self, prefix: &str, net: &Mlp) {
        self.push(Tensor::scalar(
            format!("{prefix}activation"),
            net.activation().code() as f32,
        ));
        for (j, layer) in net.layers().iter().enumerate() {
            self.push(Tensor {
                name: format!("{prefix}{j}.weight"),
                dims: vec![layer.outputs as u32, layer.inputs as u32],
                values: layer.weights.iter().map(|&v| v as f32).collect(),
            });
            self.push(Tensor {
                name: format!("{prefix}{j}.bias"),
                dims: vec![layer.outputs as u32],
                values: layer.bias.iter().map(|&v| v as f32).collect(),
            });
        }
    }

    pub fn get_mlp(&self, prefix: &str) -> std::result::Result<Mlp, String> {
        let code = self
            .scalar(&format!("{prefix}activation"))
            .ok_or_else(|| format!("missing tensor {prefix}activation"))?;
        let activation = Activation::from_code(code as u32)
            .ok_or_else(|| format!("unknown activation code {code}"))?;
        let mut layers = Vec::new();
        while let Some(w) = self.get(&format!("{prefix}{}.weight", layers.len())) {
            let j = layers.len();
            let b = self
                .get(&format!("{prefix}{j}.bias"))
                .ok_or_else(|| format!("missing tensor {prefix}{j}.bias"))?;
            if w.dims.len() != 2 || b.dims.len() != 1 || b.dims[0] != w.dims[0] {
                return Err(format!("bad shapes for {prefix}{j}"));
            }
            layers.push(Dense {
                outputs: w.dims[0] as usize,
                inputs: w.dims[1] as usize,
                weights: w.values.iter().map(|&v| v as f64).collect(),
                bias: b.values.iter().map(|&v| v as f64).collect(),
            });
        }
        Mlp::from_layers(layers, activation).map_err(|e| format!("{prefix}: {e}"))
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = format!("{MAGIC_PREFIX}{VERSION}\n").into_bytes();
        out.extend((self.tensors.len() as u32).to_le_bytes());
        for t in &self.tensors {
            out.extend((t.name.len() as u32).to_le_bytes());
            out.extend(t.name.as_bytes());
            out.extend((t.dims.len() as u32).to_le_bytes());
            for d in &t.dims {
                out.extend(d.to_le_bytes());
            }
            for v in &t.values {
                out.extend(v.to_le_bytes());
            }
        }
        out
    }

    pub fn decode(bytes: &[u8], path: &Path) -> Result<Self> {
        let bad = |msg: &str| Error::Checkpoint {
            path: path.to_path_buf(),
            msg: msg.to_string(),
        };
        let newline = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| bad("missing header line"))?;
        let header = String::from_utf8_lossy(&bytes[..newline]).into_owned();
        match header.strip_prefix(MAGIC_PREFIX) {
            Some(v) if v == VERSION.to_string() => {}
            Some(_) => {
                return Err(Error::Version {
                    path: path.to_path_buf(),
                    found: header,
                })
            }
            None => return Err(bad("not a checkpoint file")),
        }
        let mut r = Reader {
            bytes,
            pos: newline + 1,
        };
        let count = r.u32().ok_or_else(|| bad("truncated tensor count"))?;
        let mut ckpt = Checkpoint::new();
        for _ in 0..count {
            let len = r.u32().ok_or_else(|| bad("truncated name length"))? as usize;
            let name = r.take(len).ok_or_else(|| bad("truncated name"))?;
            let name = String::from_utf8(name.to_vec()).map_err(|_| bad("name is not UTF-8"))?;
            let rank = r.u32().ok_or_else(|| bad("truncated rank"))?;
            let dims = (0..rank)
                .map(|_| r.u32())
                .collect::<Option<Vec<_>>>()
                .ok_or_else(|| bad("truncated dimensions"))?;
            let n: usize = dims.iter().map(|&d| d as usize).product();
            let raw = r
                .take(n * 4)
                .ok_or_else(|| bad(&format!("truncated values for {name}")))?;
            let values = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            ckpt.push(Tensor { name, dims, values });
        }
        if r.pos != bytes.len() {
            return Err(bad("trailing bytes after last tensor"));
        }
        Ok(ckpt)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.encode()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes, path)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let end = self.pos.checked_add(n)?;
        let out = self.bytes.get(self.pos..end)?;
        self.pos = end;
        Some(out)
    }

    fn u32(&mut self) -> Option<u32> {
        self.take(4).map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}
