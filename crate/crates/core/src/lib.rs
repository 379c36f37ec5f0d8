//! Hierarchical network dissection: pairs the units of a face-model layer
//! with global concepts (gender, age, color scheme), facial regions and local
//! concepts inside those regions.

pub mod activations;
pub mod baseline;
pub mod dictionary;
pub mod error;
pub mod global;
pub mod local;
pub mod par;
pub mod parts;
pub mod pipeline;
pub mod raster;
pub mod report;
pub mod synthetic;

pub use error::{Error, ErrorClass, Result};
pub use pipeline::{dissect_layer, DissectConfig};
