use std::sync::mpsc::{sync_channel, Receiver, SyncSender};

use vslide_core::model::FieldOfView;
use vslide_core::Plane;

use crate::error::IngestError;

/// One field of view as it leaves the scanner.
#[derive(Debug, Clone, PartialEq)]
pub struct Acquired {
    pub fov: FieldOfView,
    pub planes: Vec<Plane>,
}

/// Producer end of the slide proxy.
pub struct ProxySender(SyncSender<Acquired>);

/// Consumer end of the slide proxy.
pub struct ProxyReceiver(Receiver<Acquired>);

/// The slide proxy: a FIFO holding at most `capacity` tiles. A full proxy
/// blocks the scanner; nothing is ever dropped.
pub fn proxy(capacity: usize) -> Result<(ProxySender, ProxyReceiver), IngestError> {
    if capacity == 0 {
        return Err(IngestError::Plan("proxy capacity must be at least 1".into()));
    }
    let (tx, rx) = sync_channel(capacity);
    Ok((ProxySender(tx), ProxyReceiver(rx)))
}

impl ProxySender {
    /// Blocks while the proxy is full. Gives the tile back if the writer
    /// has gone away.
    pub fn send(&self, tile: Acquired) -> Result<(), Acquired> {
        self.0.send(tile).map_err(|e| e.0)
    }
}

impl ProxyReceiver {
    /// Next tile; `None` once the scanner is done and the proxy drained.
    pub fn recv(&self) -> Option<Acquired> {
        self.0.recv().ok()
    }
}

impl Iterator for ProxyReceiver {
    type Item = Acquired;

    fn next(&mut self) -> Option<Acquired> {
        self.recv()
    }
}
