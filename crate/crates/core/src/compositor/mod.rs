//! CPU rendering of slide viewports.
//!
//! Each output pixel is mapped back to a slide coordinate, looked up in the
//! topmost covering tile at the active mip level, normalized per channel
//! through its contrast window, gamma corrected, gated by the status vector
//! and mixed to RGB.

mod image;
mod math;
mod mip;
mod pipeline;
mod render;
mod zoom;

pub use image::RgbImage;
pub use math::{
    apply_gamma, mix, mix_corrected, normalize, quantize, ContrastWindow, MixerMatrix,
    RenderOverrides, RenderParams, StatusVector, ViewportRect, RAW_PIPELINE,
};
pub use mip::mignify;
pub use pipeline::{Invert, Pipeline, PipelineRegistry, Raw, Threshold};
pub use render::{display_scale, load_level, render_viewport, Compositor, TileSource};
pub use zoom::{ZoomDirection, ZoomPolicy};
