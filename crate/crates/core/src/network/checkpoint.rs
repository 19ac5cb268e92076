//! Binary checkpoint: an 8-byte magic, then little-endian `u64` fields
//! `depth, width, seed, activation (0 = sine, 1 = tanh), count`, then
//! `count` little-endian `f64` parameters in flat order.

use std::fs;
use std::path::Path;

use super::{Activation, Mlp};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"KDVSPNN1";
const HEADER_LEN: usize = 8 + 5 * 8;

pub fn save_checkpoint(net: &Mlp, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut bytes = Vec::with_capacity(HEADER_LEN + 8 * net.num_params());
    bytes.extend_from_slice(MAGIC);
    let activation = match net.activation() {
        Activation::Sine => 0u64,
        Activation::Tanh => 1u64,
    };
    for field in [
        net.depth() as u64,
        net.width() as u64,
        net.seed(),
        activation,
        net.num_params() as u64,
    ] {
        bytes.extend_from_slice(&field.to_le_bytes());
    }
    for p in net.flatten() {
        bytes.extend_from_slice(&p.to_le_bytes());
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Mlp> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = |message: &str| Error::Artifact {
        path: path.to_path_buf(),
        message: message.to_string(),
    };
    if bytes.len() < HEADER_LEN || &bytes[..8] != MAGIC {
        return Err(bad("not a checkpoint file"));
    }
    let field = |i: usize| {
        let start = 8 + 8 * i;
        u64::from_le_bytes(bytes[start..start + 8].try_into().expect("8 bytes"))
    };
    let (depth, width, seed, activation, count) =
        (field(0), field(1), field(2), field(3), field(4) as usize);
    let activation = match activation {
        0 => Activation::Sine,
        1 => Activation::Tanh,
        _ => return Err(bad("unknown activation code")),
    };
    if bytes.len() != HEADER_LEN + 8 * count {
        return Err(bad("parameter count does not match file length"));
    }
    let params: Vec<f64> = bytes[HEADER_LEN..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    if params.iter().any(|p| !p.is_finite()) {
        return Err(bad("non-finite parameter"));
    }
    Mlp::from_params(depth as usize, width as usize, activation, seed, params)
        .map_err(|e| bad(&e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.bin");
        let net = Mlp::init_with(42, 3, 7, Activation::Tanh).unwrap();
        save_checkpoint(&net, &path).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(back, net);
        assert_eq!(
            std::fs::metadata(&path).unwrap().len() as usize,
            HEADER_LEN + 8 * net.num_params()
        );
    }

    #[test]
    fn rejects_truncated_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.bin");
        let net = Mlp::init(1, 1, 3).unwrap();
        save_checkpoint(&net, &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes.pop();
        std::fs::write(&path, bytes).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::Artifact { .. })));
    }
}
