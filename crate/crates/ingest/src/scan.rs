use std::fmt::Display;
use std::time::{Duration, Instant};

use crate::error::IngestError;
use crate::plan::ScanPlan;
use crate::proxy::Acquired;
use crate::synth::tile_planes;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanReport {
    pub emitted: usize,
    pub elapsed: Duration,
}

/// Simulated scanner: emits every field of view of `plan` in row-major
/// order. With a non-zero rate each tile takes `1/rate` s to acquire.
/// A failing sink aborts the scan.
pub fn scan_sim<E: Display>(
    plan: &ScanPlan,
    mut sink: impl FnMut(Acquired) -> Result<(), E>,
) -> Result<ScanReport, IngestError> {
    let header = plan.header()?;
    let start = Instant::now();
    let period = (plan.rate > 0.0).then(|| Duration::from_secs_f64(1.0 / plan.rate));
    for (k, fov) in header.fovs.iter().enumerate() {
        let planes = tile_planes(plan, &header.tile, fov);
        if let Some(p) = period {
            let due = start + p * (k as u32 + 1);
            let now = Instant::now();
            if due > now {
                std::thread::sleep(due - now);
            }
        }
        sink(Acquired { fov: *fov, planes }).map_err(|e| IngestError::ScanAborted {
            emitted: k,
            reason: e.to_string(),
        })?;
    }
    Ok(ScanReport {
        emitted: header.fovs.len(),
        elapsed: start.elapsed(),
    })
}
