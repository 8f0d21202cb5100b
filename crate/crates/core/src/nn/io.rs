//! Network container: an 8-byte magic, a little-endian `u64` header length,
//! a JSON header listing the layer specs, then every weighted layer's
//! weights (row-major) followed by its bias, as little-endian `f64`.

use std::io::Write;
use std::path::Path;

use super::{Layer, LayerSpec, LayerWeights, Network};
use crate::error::{Result, SnrError};
use crate::tensor::Matrix;

pub const NETWORK_MAGIC: &[u8; 8] = b"SNRNET01";

pub fn write_network(net: &Network, mut out: impl Write) -> Result<()> {
    let header = serde_json::to_vec(&net.specs()).map_err(|e| SnrError::Serialization(e.to_string()))?;
    let mut buf = Vec::with_capacity(16 + header.len() + net.parameter_count() * 8);
    buf.extend_from_slice(NETWORK_MAGIC);
    buf.extend_from_slice(&(header.len() as u64).to_le_bytes());
    buf.extend_from_slice(&header);
    for p in net.layers().iter().filter_map(|l| l.params.as_ref()) {
        for v in p.weights.data().iter().chain(&p.bias) {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    out.write_all(&buf)
        .map_err(|e| SnrError::Serialization(e.to_string()))
}

pub fn save_network(net: &Network, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    write_network(net, &mut buf)?;
    std::fs::write(path, buf).map_err(|e| SnrError::io(path, e))
}

pub fn load_network(path: impl AsRef<Path>) -> Result<Network> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| SnrError::io(path, e))?;
    read_network(&bytes)
}

pub fn read_network(bytes: &[u8]) -> Result<Network> {
    if bytes.len() < 16 || &bytes[..8] != NETWORK_MAGIC {
        return Err(SnrError::Format("not a network container".into()));
    }
    let header_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let header = bytes.get(16..16 + header_len).ok_or(SnrError::Truncated {
        expected: 16 + header_len,
        found: bytes.len(),
    })?;
    let specs: Vec<LayerSpec> =
        serde_json::from_slice(header).map_err(|e| SnrError::Serialization(e.to_string()))?;
    let mut values = bytes[16 + header_len..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
    let expected: usize = specs
        .iter()
        .filter_map(|s| s.weight_shape())
        .map(|(fi, fo)| fi * fo + fo)
        .sum();
    let found = bytes.len() - 16 - header_len;
    if found != expected * 8 {
        return Err(SnrError::Truncated {
            expected: 16 + header_len + expected * 8,
            found: bytes.len(),
        });
    }
    let mut layers = Vec::with_capacity(specs.len());
    for spec in specs {
        let params = match spec.weight_shape() {
            None => None,
            Some((fi, fo)) => {
                let w: Vec<f64> = values.by_ref().take(fi * fo).collect();
                let bias: Vec<f64> = values.by_ref().take(fo).collect();
                Some(LayerWeights {
                    weights: Matrix::new(fi, fo, w)?,
                    bias,
                })
            }
        };
        layers.push(Layer { spec, params });
    }
    Network::new(layers)
}
