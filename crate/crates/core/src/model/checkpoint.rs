//! `MQTM` checkpoints: the JSON model config as header, then every named
//! parameter tensor as an f32 record.

use std::path::Path;

use super::config::ModelConfig;
use super::network::MultiQt;
use crate::error::{Error, Result};
use crate::records::{Container, Record};

pub const MAGIC: [u8; 4] = *b"MQTM";
pub const VERSION: u32 = 1;

pub fn to_bytes(model: &MultiQt<f32>) -> Result<Vec<u8>> {
    let header = serde_json::to_string(model.config()).map_err(|e| Error::format("MQTM", e.to_string()))?;
    let records = model
        .params()
        .into_iter()
        .map(|(name, t, _)| Record::f32(name, t.clone()))
        .collect();
    Ok(Container {
        magic: MAGIC,
        version: VERSION,
        header,
        records,
    }
    .encode())
}

pub fn from_bytes(bytes: &[u8]) -> Result<MultiQt<f32>> {
    let c = Container::decode(bytes, MAGIC, &[VERSION])?;
    let config: ModelConfig =
        serde_json::from_str(&c.header).map_err(|e| Error::format("MQTM", format!("bad config header: {e}")))?;
    let mut model = MultiQt::<f32>::new(config)?;
    let expected = model.params().len();
    if c.records.len() != expected {
        return Err(Error::format(
            "MQTM",
            format!("expected {expected} tensors for this config, found {}", c.records.len()),
        ));
    }
    for (name, dst, _) in model.params_mut() {
        let src = c.f32(&name)?;
        if src.shape() != dst.shape() {
            return Err(Error::format(
                "MQTM",
                format!("tensor {name} has shape {:?}, config implies {:?}", src.shape(), dst.shape()),
            ));
        }
        *dst = src.clone();
    }
    model.check_finite()?;
    Ok(model)
}

pub fn save(model: &MultiQt<f32>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, to_bytes(model)?).map_err(|e| Error::io(path, e))
}

pub fn load(path: impl AsRef<Path>) -> Result<MultiQt<f32>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes)
}

/// Load and require a given number of output classes.
pub fn load_expecting(path: impl AsRef<Path>, classes: usize) -> Result<MultiQt<f32>> {
    let m = load(path)?;
    if m.classes() != classes {
        return Err(Error::Config(format!(
            "checkpoint has {} classes, evaluator expects {classes}",
            m.classes()
        )));
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn save_load_save_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let m = MultiQt::<f32>::new(ModelConfig::tiny().with_multitask(true).with_seed(9)).unwrap();
        let p = dir.path().join("a.mqtm");
        save(&m, &p).unwrap();
        let back = load(&p).unwrap();
        assert_eq!(back, m);
        assert_eq!(to_bytes(&back).unwrap(), std::fs::read(&p).unwrap());
    }

    #[test]
    fn wrong_magic_and_class_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let m = MultiQt::<f32>::new(ModelConfig::tiny()).unwrap();
        let p = dir.path().join("a.mqtm");
        save(&m, &p).unwrap();
        assert!(load_expecting(&p, 6).is_ok());
        assert!(matches!(load_expecting(&p, 4), Err(Error::Config(_))));
        let mut bytes = std::fs::read(&p).unwrap();
        bytes[0] = b'X';
        assert!(from_bytes(&bytes).is_err());
        assert!(from_bytes(&to_bytes(&m).unwrap()[..40]).is_err());
    }
}
