//! Neural style field over the fixed mesh: a normal-offset branch and a
//! reflectance branch, each steered by decoupled graph attention to the
//! prompt words of its object.

mod checkpoint;
mod dga;
mod field;
mod fourier;

pub use checkpoint::{load_field, save_field, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub(crate) use checkpoint::{field_from_json, field_to_json, NamedTensor};
pub use dga::{dga_attend, DgaMode, DgaParams, DgaVars};
pub use field::{FieldConfig, FieldInputs, FieldOutputs, FieldVars, StyleField};
pub use fourier::fourier_encode;
