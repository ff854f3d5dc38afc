//! Learn pixel-aligned character prototypes from transcribed line images
//! and compare them across documents.

pub mod analysis;
pub mod cli;
pub mod error;
pub mod filter;
pub mod image;
pub mod io;
pub mod model;
pub mod synth;
pub mod typesetter;

pub use error::{Error, ErrorKind, Result};
pub use image::{normalize_line, ColorImage, GrayImage, Rgb};
pub use model::{
    validate_model, LineSample, ModelState, ParentInfo, Placement, Prototype, Provenance, Violation,
};
