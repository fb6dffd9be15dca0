use std::path::Path;

use serde::{Deserialize, Serialize};

use super::field::{FieldConfig, StyleField};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "temo-stylefield";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
pub(crate) struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl NamedTensor {
    pub(crate) fn new(name: &str, t: &Tensor) -> Self {
        NamedTensor {
            name: name.to_string(),
            shape: t.shape().to_vec(),
            data: t.data().to_vec(),
        }
    }

    pub(crate) fn into_pair(self) -> Result<(String, Tensor)> {
        Ok((self.name, Tensor::new(self.shape, self.data)?))
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct FieldFile {
    format: String,
    version: u32,
    config: FieldConfig,
    tensors: Vec<NamedTensor>,
}

pub(crate) fn field_to_json(field: &StyleField) -> serde_json::Value {
    let file = FieldFile {
        format: CHECKPOINT_FORMAT.to_string(),
        version: CHECKPOINT_VERSION,
        config: field.config.clone(),
        tensors: field
            .names()
            .iter()
            .zip(field.values())
            .map(|(n, t)| NamedTensor::new(n, t))
            .collect(),
    };
    serde_json::to_value(file).expect("plain data serializes")
}

pub(crate) fn field_from_json(v: serde_json::Value) -> Result<StyleField> {
    let file: FieldFile = serde_json::from_value(v)?;
    if file.format != CHECKPOINT_FORMAT || file.version != CHECKPOINT_VERSION {
        return Err(Error::InvalidArgument(format!(
            "unsupported checkpoint {} v{}",
            file.format, file.version
        )));
    }
    let named = file.tensors.into_iter().map(NamedTensor::into_pair).collect::<Result<_>>()?;
    StyleField::from_named(file.config, named)
}

/// JSON checkpoint: format tag, version, field config, named tensors.
pub fn save_field(field: &StyleField, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string(&field_to_json(field))?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_field(path: impl AsRef<Path>) -> Result<StyleField> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    field_from_json(serde_json::from_str(&text)?)
}
