//! Per-pixel rendering math: viewport to normalized device coordinates,
//! contrast windows, gamma, status gating and the channel mixer.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spatial::Rect;

/// Visible region of the slide, in real-valued slide pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViewportRect {
    pub x_inf: f64,
    pub x_sup: f64,
    pub y_inf: f64,
    pub y_sup: f64,
}

impl ViewportRect {
    pub fn new(x_inf: f64, x_sup: f64, y_inf: f64, y_sup: f64) -> Result<Self> {
        let v = ViewportRect {
            x_inf,
            x_sup,
            y_inf,
            y_sup,
        };
        v.validate()?;
        Ok(v)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.x_inf, self.x_sup, self.y_inf, self.y_sup]
            .iter()
            .all(|v| v.is_finite());
        if !finite || self.x_inf >= self.x_sup || self.y_inf >= self.y_sup {
            return Err(Error::domain(format!("invalid viewport {self:?}")));
        }
        Ok(())
    }

    pub fn from_rect(r: &Rect) -> Result<Self> {
        ViewportRect::new(r.x0 as f64, r.x1 as f64, r.y0 as f64, r.y1 as f64)
    }

    pub fn width(&self) -> f64 {
        self.x_sup - self.x_inf
    }

    pub fn height(&self) -> f64 {
        self.y_sup - self.y_inf
    }

    /// Smallest integer rectangle containing the viewport.
    pub fn covering_rect(&self) -> Rect {
        let x0 = self.x_inf.floor() as i64;
        let y0 = self.y_inf.floor() as i64;
        let x1 = (self.x_sup.ceil() as i64).max(x0 + 1);
        let y1 = (self.y_sup.ceil() as i64).max(y0 + 1);
        Rect::new(x0, y0, x1, y1)
    }

    /// Maps a slide point to normalized device coordinates. Written as
    /// `2(x - x_inf)/width - 1` so the corners land on ±1 exactly even for
    /// small viewports far from the origin.
    pub fn ndc_map(&self, x_s: f64, y_s: f64) -> (f64, f64) {
        (
            2.0 * (x_s - self.x_inf) / (self.x_sup - self.x_inf) - 1.0,
            2.0 * (y_s - self.y_inf) / (self.y_sup - self.y_inf) - 1.0,
        )
    }

    pub fn is_visible(&self, x_s: f64, y_s: f64) -> bool {
        let (x, y) = self.ndc_map(x_s, y_s);
        (-1.0..=1.0).contains(&x) && (-1.0..=1.0).contains(&y)
    }
}

/// Raw intensity range mapped onto `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContrastWindow {
    pub i_inf: u16,
    pub i_sup: u16,
}

impl ContrastWindow {
    pub const FULL: ContrastWindow = ContrastWindow {
        i_inf: 0,
        i_sup: u16::MAX,
    };

    pub fn new(i_inf: u16, i_sup: u16) -> Result<Self> {
        let w = ContrastWindow { i_inf, i_sup };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        if self.i_inf >= self.i_sup {
            return Err(Error::domain(format!(
                "contrast window needs i_inf < i_sup, got ({}, {})",
                self.i_inf, self.i_sup
            )));
        }
        Ok(())
    }
}

impl Default for ContrastWindow {
    fn default() -> Self {
        ContrastWindow::FULL
    }
}

/// Normalized luminance, clamped to `[0, 1]`.
pub fn normalize(l: u16, win: ContrastWindow) -> f64 {
    let v = (l as f64 - win.i_inf as f64) / (win.i_sup as f64 - win.i_inf as f64);
    v.clamp(0.0, 1.0)
}

/// Per-channel on/off gates. Serialized as an array of 0/1.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<u8>", into = "Vec<u8>")]
pub struct StatusVector(Vec<bool>);

impl StatusVector {
    pub fn new(gates: Vec<bool>) -> Self {
        StatusVector(gates)
    }

    pub fn all_on(n: usize) -> Self {
        StatusVector(vec![true; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, i: usize) -> bool {
        self.0[i]
    }

    pub fn set(&mut self, i: usize, on: bool) {
        self.0[i] = on;
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.0
    }
}

impl TryFrom<Vec<u8>> for StatusVector {
    type Error = String;

    fn try_from(v: Vec<u8>) -> std::result::Result<Self, String> {
        v.iter()
            .map(|&b| match b {
                0 => Ok(false),
                1 => Ok(true),
                other => Err(format!("status entries must be 0 or 1, got {other}")),
            })
            .collect::<std::result::Result<Vec<_>, _>>()
            .map(StatusVector)
    }
}

impl From<StatusVector> for Vec<u8> {
    fn from(s: StatusVector) -> Self {
        s.0.into_iter().map(u8::from).collect()
    }
}

/// 3×Nw matrix taking gated channel values to RGB. Serialized as three rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct MixerMatrix {
    rows: [Vec<f64>; 3],
}

impl MixerMatrix {
    pub fn new(rows: [Vec<f64>; 3]) -> Result<Self> {
        let nw = rows[0].len();
        if nw == 0 || rows.iter().any(|r| r.len() != nw) {
            return Err(Error::domain(
                "mixer rows must have the same non-zero length",
            ));
        }
        if rows.iter().flatten().any(|m| !m.is_finite() || *m < 0.0) {
            return Err(Error::domain(
                "mixer coefficients must be finite and non-negative",
            ));
        }
        Ok(MixerMatrix { rows })
    }

    pub fn identity() -> Self {
        Self::default_for(3)
    }

    /// Default colour assignment for `nw` channels: one channel is grey,
    /// two or three go to red, green, blue in order, a fourth is spread over
    /// all primaries with weight 1/3, and further channels cycle through
    /// the primaries.
    pub fn default_for(nw: usize) -> Self {
        let mut rows = [vec![0.0; nw], vec![0.0; nw], vec![0.0; nw]];
        if nw == 1 {
            for row in &mut rows {
                row[0] = 1.0;
            }
            return MixerMatrix { rows };
        }
        for i in 0..nw {
            if nw == 4 && i == 3 {
                for row in &mut rows {
                    row[3] = 1.0 / 3.0;
                }
            } else {
                rows[i % 3][i] = 1.0;
            }
        }
        MixerMatrix { rows }
    }

    pub fn channels(&self) -> usize {
        self.rows[0].len()
    }

    pub fn get(&self, primary: usize, channel: usize) -> f64 {
        self.rows[primary][channel]
    }
}

impl TryFrom<Vec<Vec<f64>>> for MixerMatrix {
    type Error = String;

    fn try_from(v: Vec<Vec<f64>>) -> std::result::Result<Self, String> {
        let rows: [Vec<f64>; 3] = v
            .try_into()
            .map_err(|v: Vec<Vec<f64>>| format!("mixer needs 3 rows, got {}", v.len()))?;
        MixerMatrix::new(rows).map_err(|e| e.to_string())
    }
}

impl From<MixerMatrix> for Vec<Vec<f64>> {
    fn from(m: MixerMatrix) -> Self {
        m.rows.into()
    }
}

pub const RAW_PIPELINE: &str = "raw";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderParams {
    pub contrast: Vec<ContrastWindow>,
    pub status: StatusVector,
    pub mixer: MixerMatrix,
    pub gamma: f64,
    pub level: u32,
    pub pipeline: String,
}

impl RenderParams {
    /// Full contrast windows, every channel on, default mixer, gamma 1,
    /// level 1, raw pipeline.
    pub fn defaults(nw: usize) -> Self {
        RenderParams {
            contrast: vec![ContrastWindow::FULL; nw],
            status: StatusVector::all_on(nw),
            mixer: MixerMatrix::default_for(nw),
            gamma: 1.0,
            level: 1,
            pipeline: RAW_PIPELINE.to_string(),
        }
    }

    pub fn channels(&self) -> usize {
        self.contrast.len()
    }

    /// Checks internal consistency and that the parameters fit `nw`
    /// channels.
    pub fn validate(&self, nw: usize) -> Result<()> {
        if self.contrast.len() != nw || self.status.len() != nw || self.mixer.channels() != nw {
            return Err(Error::domain(format!(
                "render parameters sized for {}/{}/{} channels, slide has {nw}",
                self.contrast.len(),
                self.status.len(),
                self.mixer.channels()
            )));
        }
        for w in &self.contrast {
            w.validate()?;
        }
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return Err(Error::domain(format!(
                "gamma must be > 0, got {}",
                self.gamma
            )));
        }
        if !self.level.is_power_of_two() {
            return Err(Error::config(format!(
                "level {} is not a power of two",
                self.level
            )));
        }
        Ok(())
    }
}

/// Partial [`RenderParams`] as accepted from users: every field is
/// optional and replaces the corresponding default.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderOverrides {
    pub contrast: Option<Vec<ContrastWindow>>,
    pub status: Option<StatusVector>,
    pub mixer: Option<MixerMatrix>,
    pub gamma: Option<f64>,
    pub level: Option<u32>,
    pub pipeline: Option<String>,
}

impl RenderOverrides {
    pub fn apply(self, mut base: RenderParams) -> RenderParams {
        if let Some(v) = self.contrast {
            base.contrast = v;
        }
        if let Some(v) = self.status {
            base.status = v;
        }
        if let Some(v) = self.mixer {
            base.mixer = v;
        }
        if let Some(v) = self.gamma {
            base.gamma = v;
        }
        if let Some(v) = self.level {
            base.level = v;
        }
        if let Some(v) = self.pipeline {
            base.pipeline = v;
        }
        base
    }
}

/// `v^(1/gamma)`; exact identity for gamma 1.
pub fn apply_gamma(v: f64, gamma: f64) -> f64 {
    if gamma == 1.0 {
        v
    } else {
        v.powf(1.0 / gamma)
    }
}

/// Mixes already gamma-corrected channel values.
pub fn mix_corrected(params: &RenderParams, corrected: &[f64]) -> [f64; 3] {
    let mut out = [0.0; 3];
    for (p, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (i, &v) in corrected.iter().enumerate() {
            if params.status.get(i) {
                acc += params.mixer.get(p, i) * v;
            }
        }
        *o = acc.clamp(0.0, 1.0);
    }
    out
}

/// RGB for one pixel from its normalized channel values.
pub fn mix(params: &RenderParams, lhat: &[f64]) -> [f64; 3] {
    let corrected: Vec<f64> = lhat.iter().map(|&v| apply_gamma(v, params.gamma)).collect();
    mix_corrected(params, &corrected)
}

/// `round(v·255)` half away from zero, after clamping to `[0, 1]`.
pub fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}
