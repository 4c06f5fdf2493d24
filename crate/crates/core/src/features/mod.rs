//! Point-cloud dimension reduction and gesture capture.
//!
//! Each frame's cloud is collapsed onto four axes (range, Doppler, azimuth
//! sine, elevation sine) as amplitude-weighted histograms. Stacking columns
//! over time gives the RTA/DTA/ATA/ETA time spectra; a velocity trigger
//! decides when a gesture has been performed and cuts a 30-frame window.

pub mod capture;
pub mod window;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::config::RadarConfig;
use crate::dsp::PointCloud;
use crate::error::{Error, Result};

pub use capture::{CaptureState, TriggerStats};
pub use window::{normalize, write_pgm, FeatureWindow, RawWindow, WindowMeta};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AxisKind {
    Range,
    Doppler,
    Azimuth,
    Elevation,
}

impl AxisKind {
    pub const ALL: [AxisKind; 4] = [AxisKind::Range, AxisKind::Doppler, AxisKind::Azimuth, AxisKind::Elevation];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Feature-image tag: rta, dta, ata or eta.
    pub fn tag(self) -> &'static str {
        match self {
            AxisKind::Range => "rta",
            AxisKind::Doppler => "dta",
            AxisKind::Azimuth => "ata",
            AxisKind::Elevation => "eta",
        }
    }
}

impl fmt::Display for AxisKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for AxisKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "range" | "rta" => Ok(AxisKind::Range),
            "doppler" | "dta" => Ok(AxisKind::Doppler),
            "azimuth" | "ata" => Ok(AxisKind::Azimuth),
            "elevation" | "eta" => Ok(AxisKind::Elevation),
            _ => Err(Error::invalid(format!("unknown feature axis {s:?}"))),
        }
    }
}

/// Binning, normalization and trigger settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureParams {
    pub bins: usize,
    pub window_frames: usize,
    pub dynamic_range_db: f64,
    /// A frame is active when its max |v| exceeds this (m/s).
    pub velocity_threshold: f64,
    /// A burst must contain more than this many active frames.
    pub min_active_frames: usize,
    /// Consecutive inactive frames that end a burst.
    pub hangover: usize,
    /// CNN input channels, in order.
    pub channels: Vec<AxisKind>,
}

impl Default for FeatureParams {
    fn default() -> Self {
        Self {
            bins: 64,
            window_frames: 30,
            dynamic_range_db: 40.0,
            velocity_threshold: 0.3,
            min_active_frames: 5,
            hangover: 2,
            channels: vec![AxisKind::Doppler, AxisKind::Azimuth, AxisKind::Elevation],
        }
    }
}

impl FeatureParams {
    pub fn validate(&self) -> Result<()> {
        if self.bins == 0 || self.window_frames == 0 {
            return Err(Error::config("features: bins and window_frames must be at least 1"));
        }
        if !(self.dynamic_range_db > 0.0 && self.dynamic_range_db.is_finite()) {
            return Err(Error::config("features: dynamic_range_db must be positive"));
        }
        if !(self.velocity_threshold >= 0.0 && self.velocity_threshold.is_finite()) {
            return Err(Error::config("features: velocity_threshold must be non-negative"));
        }
        if self.hangover == 0 {
            return Err(Error::config("features: hangover must be at least 1"));
        }
        if self.channels.is_empty() {
            return Err(Error::config("features: at least one channel is required"));
        }
        let mut seen = self.channels.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.channels.len() {
            return Err(Error::config("features: duplicate channel"));
        }
        Ok(())
    }
}

/// Half-open interval split into equal bins.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub bins: usize,
}

impl Axis {
    /// Bin containing `x`; values outside the interval clamp to the edges.
    /// The small nudge keeps exact bin-edge values (e.g. `k·ΔR`) in bin k.
    pub fn bin_of(&self, x: f64) -> usize {
        let t = (x - self.lo) / (self.hi - self.lo) * self.bins as f64 + 1e-9;
        if t.is_nan() || t < 0.0 {
            0
        } else {
            (t.floor() as usize).min(self.bins - 1)
        }
    }

    pub fn center(&self, bin: usize) -> f64 {
        self.lo + (bin as f64 + 0.5) * (self.hi - self.lo) / self.bins as f64
    }
}

/// Axis extents for every kind.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureAxes {
    axes: [Axis; 4],
}

impl FeatureAxes {
    /// Range covers the first `bins` range bins; Doppler spans ±v_max;
    /// direction sines span [−1, 1).
    pub fn new(cfg: &RadarConfig, bins: usize) -> Self {
        let vmax = cfg.max_velocity();
        let mk = |lo, hi| Axis { lo, hi, bins };
        Self {
            axes: [
                mk(0.0, bins as f64 * cfg.range_resolution()),
                mk(-vmax, vmax),
                mk(-1.0, 1.0),
                mk(-1.0, 1.0),
            ],
        }
    }

    pub fn axis(&self, kind: AxisKind) -> Axis {
        self.axes[kind.index()]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureColumn {
    pub kind: AxisKind,
    pub frame: u64,
    pub bins: Vec<f64>,
}

/// Amplitude-weighted histogram of one cloud along one axis.
pub fn reduce_axis(pc: &PointCloud, kind: AxisKind, axes: &FeatureAxes) -> FeatureColumn {
    let axis = axes.axis(kind);
    let mut bins = vec![0.0; axis.bins];
    for p in &pc.points {
        let (u, w) = p.direction_sines();
        let x = match kind {
            AxisKind::Range => p.range,
            AxisKind::Doppler => p.velocity,
            AxisKind::Azimuth => u,
            AxisKind::Elevation => w,
        };
        bins[axis.bin_of(x)] += p.amplitude;
    }
    FeatureColumn {
        kind,
        frame: pc.frame,
        bins,
    }
}
