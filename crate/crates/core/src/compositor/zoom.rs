use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::validate_mip_levels;

/// Direction of the zoom gesture. Zooming in increases the scale
/// (display pixels per slide pixel).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ZoomDirection {
    #[default]
    In,
    Out,
}

/// Legal zoom range and the mip levels it may use.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZoomPolicy {
    levels: Vec<u32>,
    /// Open intervals of forbidden scales, sorted and disjoint.
    excluded: Vec<(f64, f64)>,
    min_scale: f64,
    max_scale: f64,
}

impl ZoomPolicy {
    pub fn new(
        mut levels: Vec<u32>,
        mut excluded: Vec<(f64, f64)>,
        min_scale: f64,
        max_scale: f64,
    ) -> Result<Self> {
        levels.sort_unstable();
        levels.dedup();
        if levels.first() != Some(&1) {
            levels.insert(0, 1);
        }
        validate_mip_levels(&levels)?;
        if !(min_scale.is_finite()
            && max_scale.is_finite()
            && 0.0 < min_scale
            && min_scale <= max_scale)
        {
            return Err(Error::config(format!(
                "zoom range [{min_scale}, {max_scale}] must satisfy 0 < min <= max"
            )));
        }
        excluded.sort_by(|a, b| a.0.total_cmp(&b.0));
        for (i, &(lo, hi)) in excluded.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::config(format!(
                    "excluded zoom range ({lo}, {hi}) is empty"
                )));
            }
            if i > 0 && excluded[i - 1].1 > lo {
                return Err(Error::config("excluded zoom ranges overlap"));
            }
        }
        Ok(ZoomPolicy {
            levels,
            excluded,
            min_scale,
            max_scale,
        })
    }

    /// Levels `levels` with an unrestricted zoom range.
    pub fn with_levels(levels: Vec<u32>) -> Result<Self> {
        ZoomPolicy::new(levels, Vec::new(), f64::MIN_POSITIVE, f64::MAX)
    }

    pub fn levels(&self) -> &[u32] {
        &self.levels
    }

    fn excluded_at(&self, scale: f64) -> Option<(f64, f64)> {
        self.excluded
            .iter()
            .copied()
            .find(|&(lo, hi)| lo < scale && scale < hi)
    }

    fn snap(&self, scale: f64, dir: ZoomDirection) -> f64 {
        // Adjacent intervals may share an endpoint, which is itself legal,
        // so one snap is always enough.
        match (self.excluded_at(scale), dir) {
            (Some((_, hi)), ZoomDirection::In) => hi,
            (Some((lo, _)), ZoomDirection::Out) => lo,
            (None, _) => scale,
        }
    }

    /// Clamps `scale` into the legal range and moves it out of any excluded
    /// interval toward the zoom direction. When that would leave the legal
    /// range the opposite edge of the interval is used.
    pub fn constrain(&self, scale: f64, dir: ZoomDirection) -> f64 {
        let clamped = scale.clamp(self.min_scale, self.max_scale);
        let snapped = self.snap(clamped, dir);
        if (self.min_scale..=self.max_scale).contains(&snapped) {
            return snapped;
        }
        let back = match dir {
            ZoomDirection::In => ZoomDirection::Out,
            ZoomDirection::Out => ZoomDirection::In,
        };
        let other = self.snap(clamped, back);
        if (self.min_scale..=self.max_scale).contains(&other) {
            other
        } else {
            clamped
        }
    }

    /// Largest available level `L` with `L <= 1/scale` after constraining
    /// the scale; level 1 when none qualifies.
    pub fn choose_level(&self, scale: f64, dir: ZoomDirection) -> u32 {
        let s = self.constrain(scale, dir);
        self.levels
            .iter()
            .rev()
            .copied()
            .find(|&l| l as f64 * s <= 1.0)
            .unwrap_or(1)
    }
}
