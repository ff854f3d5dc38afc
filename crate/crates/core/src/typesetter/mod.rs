//! The generative line model: prototypes composited onto a background, with
//! forced alignment and closed-form prototype estimation around it.

mod align;
mod composite;
mod train;
mod update;

pub use align::{
    align_line, align_with_bank, estimate_background, AlignParams, Alignment, KernelBank,
    DEFAULT_SCALES,
};
pub use composite::{composite_line, render_line, RenderedLine};
pub use train::{
    centroid_offset, finetune_prototypes, initial_prototypes, reconstruction_error,
    train_reference, TrainConfig, TrainOutcome,
};
pub use update::{update_prototypes, UpdateOutcome};
