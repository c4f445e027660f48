//! Acquisition pipeline. A scanner (here [`scan_sim`]) produces fields of
//! view faster than they can be compressed; the slide proxy ([`proxy`])
//! buffers them for the slide writer, which may finish after the scan ends.
//! The [`SlideManager`] runs one such session per `START_SCAN` request and
//! records every slide in the [`Catalog`].

mod catalog;
mod error;
mod manager;
mod plan;
mod proxy;
mod scan;
mod session;
pub mod synth;

pub use catalog::{unix_millis, Catalog, CatalogEntry, SlideStatus};
pub use error::IngestError;
pub use manager::{manager_serve, SlideManager};
pub use plan::ScanPlan;
pub use proxy::{proxy, Acquired, ProxyReceiver, ProxySender};
pub use scan::{scan_sim, ScanReport};
pub use session::{run_session, Session, SessionOptions, SessionReport, Timeline};
