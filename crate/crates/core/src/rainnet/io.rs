//! Model file layout, little-endian:
//!
//! ```text
//! magic     8 bytes "RAINNET\0"
//! version   u32     1
//! k         u32     histogram bins per metric
//! in_dim    u32
//! hidden    u32
//! classes   u32     r
//! sigma_e   f64     edge bandwidth, km
//! params    f64 x count: conv1 W (in_dim x hidden, row-major), conv1 b,
//!           conv2 W, b, conv3 W, b, head W (hidden x r), head b
//! ```

use std::path::Path;

use super::model::{ModelDims, Params, RainNetModel};
use crate::codec::{put_u32, ByteReader};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"RAINNET\0";
const VERSION: u32 = 1;

pub fn encode_model(model: &RainNetModel) -> Result<Vec<u8>> {
    let dims = model.dims();
    let mut buf = Vec::with_capacity(40 + 8 * model.params.count());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    put_u32(&mut buf, model.k, "k")?;
    put_u32(&mut buf, dims.in_dim, "in_dim")?;
    put_u32(&mut buf, dims.hidden, "hidden")?;
    put_u32(&mut buf, dims.classes, "classes")?;
    buf.extend_from_slice(&model.sigma_e_km.to_le_bytes());
    for t in model.params.tensors() {
        for v in t {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(buf)
}

pub fn decode_model(bytes: &[u8]) -> Result<RainNetModel> {
    let mut rd = ByteReader::new(bytes);
    if rd.take(8)? != MAGIC {
        return Err(Error::Format("not a model file (bad magic)".into()));
    }
    let version = rd.u32()? as u32;
    if version != VERSION {
        return Err(Error::Format(format!("model version {version}, expected {VERSION}")));
    }
    let k = rd.u32()?;
    let dims = ModelDims {
        in_dim: rd.u32()?,
        hidden: rd.u32()?,
        classes: rd.u32()?,
    };
    dims.validate().map_err(|e| Error::Format(e.to_string()))?;
    let sigma_e_km = rd.f64()?;
    if !(sigma_e_km > 0.0 && sigma_e_km.is_finite()) {
        return Err(Error::Format(format!("edge bandwidth {sigma_e_km} in model file")));
    }
    let mut params = Params::zeros(dims);
    let want: usize = params.count() * 8;
    if rd.remaining() != want {
        return Err(Error::Format(format!(
            "model payload is {} bytes, dims {dims:?} need {want}",
            rd.remaining()
        )));
    }
    for t in params.tensors_mut() {
        let len = t.len();
        t.copy_from_slice(&rd.f64s(len)?);
    }
    Ok(RainNetModel { k, sigma_e_km, params })
}

pub fn save_model(path: &Path, model: &RainNetModel) -> Result<()> {
    std::fs::write(path, encode_model(model)?).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<RainNetModel> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_model(&bytes)
}

/// Load and require the given input width and class count.
pub fn load_model_checked(path: &Path, in_dim: usize, classes: usize) -> Result<RainNetModel> {
    let m = load_model(path)?;
    let dims = m.dims();
    if dims.classes != classes {
        return Err(Error::DimensionMismatch {
            context: format!("class count of model {}", path.display()),
            expected: classes,
            found: dims.classes,
        });
    }
    if dims.in_dim != in_dim {
        return Err(Error::DimensionMismatch {
            context: format!("input features of model {}", path.display()),
            expected: in_dim,
            found: dims.in_dim,
        });
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn save_load_save_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.bin");
        let dims = ModelDims { in_dim: 16, hidden: 64, classes: 10 };
        let m = RainNetModel::init(5, dims, 3.25, 11).unwrap();
        save_model(&path, &m).unwrap();
        let size = std::fs::metadata(&path).unwrap().len();
        assert!(size < 200 * 1024, "{size} bytes");
        let back = load_model(&path).unwrap();
        assert_eq!(back, m);
        assert_eq!(encode_model(&back).unwrap(), std::fs::read(&path).unwrap());
    }

    #[test]
    fn wrong_classes_named_in_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.bin");
        let dims = ModelDims { in_dim: 4, hidden: 3, classes: 5 };
        save_model(&path, &RainNetModel::init(1, dims, 1.0, 0).unwrap()).unwrap();
        let err = load_model_checked(&path, 4, 10).unwrap_err();
        match err {
            Error::DimensionMismatch { expected, found, .. } => assert_eq!((expected, found), (10, 5)),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn truncated_and_wrong_version_rejected() {
        let dims = ModelDims { in_dim: 4, hidden: 3, classes: 5 };
        let bytes = encode_model(&RainNetModel::init(1, dims, 1.0, 0).unwrap()).unwrap();
        assert!(matches!(decode_model(&bytes[..bytes.len() - 1]), Err(Error::Format(_))));
        assert!(matches!(decode_model(&bytes[..10]), Err(Error::Format(_))));
        let mut v2 = bytes.clone();
        v2[8] = 2;
        let err = decode_model(&v2).unwrap_err();
        assert!(err.to_string().contains("version"), "{err}");
    }
}
