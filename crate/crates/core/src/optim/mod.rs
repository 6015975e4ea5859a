//! Base optimizers (SGD, RMSProp, Adam, AdamW) and the update-masking
//! wrappers: unbiased scaled masking, alignment-damped masking (Magma),
//! damping only, and the cautious sign-agreement baseline.

mod base;
mod config;
mod masking;
mod wrapper;

pub use base::{base_step, MomentState};
pub use config::{BaseKind, BaseOptimizerConfig, Granularity, MaskMode, MaskWrapperConfig};
pub use masking::{cautious_mask, draw_masks, draw_uniforms, magma_score, skip_update, MaskUnits};
pub use wrapper::{MaskDraw, MaskedOptimizer, StepRecord, WrapperState, INITIAL_SCALE};
