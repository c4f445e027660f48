//! Remote access to virtual slides.
//!
//! The tile dealer serves slides over a small framed TCP protocol (`VSP1`):
//! [`Server`] answers requests from a [`SlideCatalog`], [`Client`] speaks the
//! protocol and [`RemoteSlide`] plugs a remote slide into the compositor as a
//! [`vslide_core::compositor::TileSource`]. [`Gateway`] exposes the same data
//! to browsers as rendered PNGs over HTTP.

pub mod client;
pub mod gateway;
pub mod protocol;
pub mod server;

pub use client::{parse_slide_url, Client, RemoteSlide};
pub use gateway::{Gateway, GatewayConfig, GatewayHandle};
pub use protocol::{ErrorBody, Frame, ProtocolError, SlabRequest, TilePayload, TileRequest};
pub use server::{ReaderPool, ScanHandler, Server, ServerConfig, ServerHandle, SlideCatalog, StaticCatalog};
