//! Detection-layer pipelines: pure per-tile transforms selected by id, and
//! optionally specialised per mip level.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use super::math::{ContrastWindow, RenderParams, RAW_PIPELINE};
use crate::error::{Error, Result};
use crate::plane::Plane;

pub trait Pipeline: Send + Sync {
    fn apply(&self, plane: &Plane) -> Plane;

    /// Render parameters this pipeline wants instead of the caller's.
    fn params_override(&self, _base: &RenderParams) -> Option<RenderParams> {
        None
    }
}

pub struct Raw;

impl Pipeline for Raw {
    fn apply(&self, plane: &Plane) -> Plane {
        plane.clone()
    }
}

pub struct Invert;

impl Pipeline for Invert {
    fn apply(&self, plane: &Plane) -> Plane {
        let mut out = plane.clone();
        out.samples_mut()
            .iter_mut()
            .for_each(|v| *v = u16::MAX - *v);
        out
    }
}

/// Binary mask: full scale where the sample is at least `t`.
pub struct Threshold(pub u16);

impl Pipeline for Threshold {
    fn apply(&self, plane: &Plane) -> Plane {
        let mut out = plane.clone();
        out.samples_mut()
            .iter_mut()
            .for_each(|v| *v = if *v >= self.0 { u16::MAX } else { 0 });
        out
    }

    /// A mask only makes sense with the full contrast window.
    fn params_override(&self, base: &RenderParams) -> Option<RenderParams> {
        let mut p = base.clone();
        p.contrast
            .iter_mut()
            .for_each(|w| *w = ContrastWindow::FULL);
        Some(p)
    }
}

/// Pipelines by `(id, level)`. A `None` level applies to every level
/// without a specific registration. Ids of the form `threshold:<t>` resolve
/// without registration.
#[derive(Clone)]
pub struct PipelineRegistry {
    map: HashMap<(String, Option<u32>), Arc<dyn Pipeline>>,
}

impl fmt::Debug for PipelineRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut keys: Vec<_> = self.map.keys().collect();
        keys.sort();
        f.debug_struct("PipelineRegistry")
            .field("keys", &keys)
            .finish()
    }
}

impl Default for PipelineRegistry {
    fn default() -> Self {
        Self::with_builtins()
    }
}

impl PipelineRegistry {
    pub fn empty() -> Self {
        PipelineRegistry {
            map: HashMap::new(),
        }
    }

    /// `raw` and `invert` on every level.
    pub fn with_builtins() -> Self {
        let mut r = Self::empty();
        r.register(RAW_PIPELINE, None, Arc::new(Raw));
        r.register("invert", None, Arc::new(Invert));
        r
    }

    pub fn register(
        &mut self,
        id: impl Into<String>,
        level: Option<u32>,
        pipeline: Arc<dyn Pipeline>,
    ) {
        self.map.insert((id.into(), level), pipeline);
    }

    pub fn resolve(&self, id: &str, level: u32) -> Result<Arc<dyn Pipeline>> {
        if let Some(p) = self
            .map
            .get(&(id.to_string(), Some(level)))
            .or_else(|| self.map.get(&(id.to_string(), None)))
        {
            return Ok(p.clone());
        }
        if let Some(t) = id.strip_prefix("threshold:") {
            let t = t
                .parse::<u16>()
                .map_err(|_| Error::UnknownPipeline(id.to_string()))?;
            return Ok(Arc::new(Threshold(t)));
        }
        Err(Error::UnknownPipeline(id.to_string()))
    }

    pub fn apply(&self, id: &str, level: u32, plane: &Plane) -> Result<Plane> {
        Ok(self.resolve(id, level)?.apply(plane))
    }
}
