//! Storage, indexing and rendering primitives for gigapixel microscope slides.
//!
//! A virtual slide is a mosaic of multi-colour 16-bit fields of view together
//! with a header describing the acquisition. This crate provides:
//!
//! - [`model`]: domain types and the coordinate / index arithmetic of the
//!   storage layouts,
//! - [`codec`]: the bit-shuffle + DEFLATE chunk filter pipeline,
//! - [`container`]: the chunked `VSF1` container file (writer, reader, mip
//!   levels, layout benchmarks),
//! - [`spatial`]: an R-tree over tile rectangles for viewport queries,
//! - [`compositor`]: the CPU rendering path (viewport transform, contrast
//!   windows, status/mixer colour mixing, mipmaps, zoom policy, pipelines),
//! - [`cache`]: byte-budgeted LRU caches with request coalescing and
//!   read-ahead.
//!
//! Data-parallel loops go through [`exec::Execution`]; with the `parallel`
//! feature disabled every loop runs sequentially.

pub mod cache;
pub mod codec;
pub mod compositor;
pub mod container;
mod error;
pub mod exec;
pub mod model;
pub mod plane;
pub mod spatial;

pub use error::{Error, Result};
pub use exec::Execution;
pub use plane::Plane;
