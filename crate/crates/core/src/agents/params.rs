//! Versioned flat binary file for agent parameters.
//!
//! Layout (all integers little-endian `u32`):
//!
//! ```text
//! magic      8 bytes  "SAGINMLP"
//! version    u32      1
//! net_count  u32
//! per net:
//!   size_count u32, then size_count layer sizes (u32)
//!   activation u8 (0 identity, 1 relu, 2 tanh) of the output layer
//!   parameters: f64 little-endian; per layer the [fan_in][fan_out]
//!   row-major weights followed by the bias
//! ```

use std::fs;
use std::path::Path;

use super::nn::{Activation, Mlp};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"SAGINMLP";
pub const VERSION: u32 = 1;

pub fn encode(nets: &[&Mlp]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(nets.len() as u32).to_le_bytes());
    for net in nets {
        out.extend_from_slice(&(net.sizes().len() as u32).to_le_bytes());
        for &s in net.sizes() {
            out.extend_from_slice(&(s as u32).to_le_bytes());
        }
        out.push(net.output_activation().code());
        for p in net.params() {
            out.extend_from_slice(&p.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let s = self.bytes.get(self.pos..self.pos + n)?;
        self.pos += n;
        Some(s)
    }

    fn u32(&mut self) -> Option<u32> {
        self.take(4).map(|b| u32::from_le_bytes(b.try_into().unwrap()))
    }
}

/// Decodes a parameter file into nets whose shapes must match `expected`
/// exactly (layer sizes and output activation).
pub fn decode_into(bytes: &[u8], expected: &mut [&mut Mlp], path: &Path) -> Result<()> {
    let bad = |reason: String| Error::ParamFormat {
        path: path.to_path_buf(),
        reason,
    };
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8) != Some(MAGIC.as_slice()) {
        return Err(bad("bad magic bytes".into()));
    }
    let version = r.u32().ok_or_else(|| bad("truncated header".into()))?;
    if version != VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let count = r.u32().ok_or_else(|| bad("truncated header".into()))? as usize;
    if count != expected.len() {
        return Err(bad(format!("expected {} nets, file has {count}", expected.len())));
    }
    for (i, net) in expected.iter_mut().enumerate() {
        let n_sizes = r.u32().ok_or_else(|| bad("truncated header".into()))? as usize;
        let mut sizes = Vec::with_capacity(n_sizes);
        for _ in 0..n_sizes {
            sizes.push(r.u32().ok_or_else(|| bad("truncated header".into()))? as usize);
        }
        if sizes != net.sizes() {
            return Err(bad(format!(
                "net {i}: layer sizes {sizes:?} do not match expected {:?}",
                net.sizes()
            )));
        }
        let act = r
            .take(1)
            .and_then(|b| Activation::from_code(b[0]))
            .ok_or_else(|| bad(format!("net {i}: bad activation code")))?;
        if act != net.output_activation() {
            return Err(bad(format!("net {i}: output activation mismatch")));
        }
        let n = net.param_count();
        let raw = r
            .take(n * 8)
            .ok_or_else(|| bad(format!("net {i}: truncated parameters")))?;
        let params: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        **net = Mlp::from_params(&sizes, act, params)?;
    }
    if r.pos != bytes.len() {
        return Err(bad("trailing bytes".into()));
    }
    Ok(())
}

pub fn save(path: &Path, nets: &[&Mlp]) -> Result<()> {
    fs::write(path, encode(nets)).map_err(|e| Error::io(path, e))
}

pub fn load_into(path: &Path, expected: &mut [&mut Mlp]) -> Result<()> {
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_into(&bytes, expected, path)
}
