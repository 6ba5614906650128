//! Binary checkpoints: an opaque configuration blob plus every named
//! parameter tensor, bit-exact. Format:
//!
//! ```text
//! magic   "DDIM1"                          (5 bytes)
//! config  u64 LE length + UTF-8 bytes
//! count   u64 LE number of parameters
//! per parameter:
//!   name  u64 LE length + UTF-8 bytes
//!   rank  u64 LE, then rank dims (u64 LE)
//!   data  product(dims) f64 LE values
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::params::ParamSet;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

const MAGIC: &[u8; 5] = b"DDIM1";

/// Write a checkpoint. `config_text` travels as an opaque blob so the
/// file layer stays independent of the configuration syntax.
pub fn save(path: &Path, config_text: &str, params: &ParamSet) -> Result<()> {
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    w.write_all(MAGIC)?;
    write_bytes(&mut w, config_text.as_bytes())?;
    w.write_all(&(params.len() as u64).to_le_bytes())?;
    for (name, tensor) in params.iter() {
        write_bytes(&mut w, name.as_bytes())?;
        let shape = tensor.shape();
        w.write_all(&(shape.len() as u64).to_le_bytes())?;
        for &d in shape {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        for &v in tensor.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Read a checkpoint back: the configuration text and the parameters,
/// bit-for-bit as saved. Loaded tensors require gradients.
pub fn load(path: &Path) -> Result<(String, ParamSet)> {
    let file = File::open(path)?;
    let mut r = BufReader::new(file);
    let mut magic = [0u8; 5];
    r.read_exact(&mut magic)
        .map_err(|_| Error::InvalidData(format!("{}: truncated checkpoint header", path.display())))?;
    if &magic != MAGIC {
        return Err(Error::InvalidData(format!(
            "{}: not a checkpoint (bad magic {:?})",
            path.display(),
            magic
        )));
    }
    let config_bytes = read_bytes(&mut r, "config")?;
    let config_text = String::from_utf8(config_bytes)
        .map_err(|_| Error::InvalidData("checkpoint config is not UTF-8".to_string()))?;
    let n = read_u64(&mut r, "parameter count")? as usize;
    let mut params = ParamSet::new();
    for i in 0..n {
        let name_bytes = read_bytes(&mut r, "parameter name")?;
        let name = String::from_utf8(name_bytes)
            .map_err(|_| Error::InvalidData(format!("parameter {} name is not UTF-8", i)))?;
        let rank = read_u64(&mut r, "rank")? as usize;
        if rank == 0 || rank > 3 {
            return Err(Error::InvalidData(format!(
                "parameter `{}` has unsupported rank {}",
                name, rank
            )));
        }
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(read_u64(&mut r, "dimension")? as usize);
        }
        let len: usize = shape.iter().product();
        let mut data = Vec::with_capacity(len);
        let mut buf = [0u8; 8];
        for _ in 0..len {
            r.read_exact(&mut buf).map_err(|_| {
                Error::InvalidData(format!("parameter `{}`: truncated tensor data", name))
            })?;
            data.push(f64::from_le_bytes(buf));
        }
        params.push(name, Tensor::from_vec(&shape, data)?.with_grad());
    }
    // Trailing garbage means the file is not what we wrote.
    let mut probe = [0u8; 1];
    match r.read(&mut probe) {
        Ok(0) => {}
        Ok(_) => {
            return Err(Error::InvalidData(format!(
                "{}: trailing bytes after checkpoint payload",
                path.display()
            )))
        }
        Err(e) => return Err(Error::Io(e)),
    }
    Ok((config_text, params))
}

fn write_bytes<W: Write>(w: &mut W, bytes: &[u8]) -> Result<()> {
    w.write_all(&(bytes.len() as u64).to_le_bytes())?;
    w.write_all(bytes)?;
    Ok(())
}

fn read_u64<R: Read>(r: &mut R, what: &str) -> Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)
        .map_err(|_| Error::InvalidData(format!("truncated checkpoint: missing {}", what)))?;
    Ok(u64::from_le_bytes(buf))
}

fn read_bytes<R: Read>(r: &mut R, what: &str) -> Result<Vec<u8>> {
    let len = read_u64(r, what)? as usize;
    if len > 1 << 30 {
        return Err(Error::InvalidData(format!("implausible {} length {}", what, len)));
    }
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)
        .map_err(|_| Error::InvalidData(format!("truncated checkpoint: short {}", what)))?;
    Ok(buf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::config::ModelConfig;
    use crate::model::params::init_params;
    use crate::rng;

    #[test]
    fn roundtrip_is_bit_exact() {
        let config = ModelConfig::toy(16, 16);
        let params = init_params(&config, &mut rng::seeded(11));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save(&path, "task.kind=copy\nseed=11\n", &params).unwrap();
        let (text, loaded) = load(&path).unwrap();
        assert_eq!(text, "task.kind=copy\nseed=11\n");
        assert_eq!(loaded.len(), params.len());
        for i in 0..params.len() {
            let (name_a, a) = params.at(i);
            let (name_b, b) = loaded.at(i);
            assert_eq!(name_a, name_b);
            assert_eq!(a.shape(), b.shape());
            let bits_a: Vec<u64> = a.data().iter().map(|v| v.to_bits()).collect();
            let bits_b: Vec<u64> = b.data().iter().map(|v| v.to_bits()).collect();
            assert_eq!(bits_a, bits_b, "tensor `{}` changed across roundtrip", name_a);
        }
        assert!(loaded.at(0).1.requires_grad);
    }

    #[test]
    fn rejects_foreign_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("not.ckpt");
        std::fs::write(&path, b"hello world, definitely not a checkpoint").unwrap();
        let err = load(&path).unwrap_err();
        assert!(err.to_string().contains("magic"), "{}", err);
    }

    #[test]
    fn rejects_truncation() {
        let config = ModelConfig::toy(16, 16);
        let params = init_params(&config, &mut rng::seeded(5));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save(&path, "x=1\n", &params).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(load(&path).is_err());
    }
}
