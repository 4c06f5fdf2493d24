//! Captured windows, normalization and PGM export.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{AxisKind, FeatureParams, TriggerStats};
use crate::sim::GestureClass;

/// Un-normalized capture: all four axis kinds, shaped (kind, bin, frame).
#[derive(Debug, Clone, PartialEq)]
pub struct RawWindow {
    pub bins: usize,
    pub frames: usize,
    pub data: Vec<f64>,
    /// Source frame id per window column; `None` where zero-padded.
    pub source_frames: Vec<Option<u64>>,
    pub stats: TriggerStats,
}

impl RawWindow {
    pub fn get(&self, kind: usize, bin: usize, frame: usize) -> f64 {
        self.data[(kind * self.bins + bin) * self.frames + frame]
    }

    pub fn channel(&self, kind: AxisKind) -> &[f64] {
        let n = self.bins * self.frames;
        &self.data[kind.index() * n..(kind.index() + 1) * n]
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct WindowMeta {
    pub source_frames: Vec<Option<u64>>,
    pub trigger: Option<TriggerStats>,
    pub label: Option<GestureClass>,
}

/// Normalized CNN input, values in [0, 1], shaped (channel, bin, frame).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureWindow {
    pub channels: Vec<AxisKind>,
    pub bins: usize,
    pub frames: usize,
    pub data: Vec<f32>,
    pub meta: WindowMeta,
}

impl FeatureWindow {
    pub fn new(channels: Vec<AxisKind>, bins: usize, frames: usize, data: Vec<f32>, meta: WindowMeta) -> Result<Self> {
        if data.len() != channels.len() * bins * frames {
            return Err(Error::invalid("feature window data does not match its shape"));
        }
        if data.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::invalid("feature window values must lie in [0, 1]"));
        }
        Ok(Self {
            channels,
            bins,
            frames,
            data,
            meta,
        })
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.channels.len(), self.bins, self.frames]
    }

    pub fn get(&self, channel: usize, bin: usize, frame: usize) -> f32 {
        self.data[(channel * self.bins + bin) * self.frames + frame]
    }

    pub fn channel(&self, c: usize) -> &[f32] {
        let n = self.bins * self.frames;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|&v| v as f64).collect()
    }
}

/// Per-channel log compression to the top `dynamic_range_db`, mapped to
/// [0, 1]. Values are divided by the channel peak before the 1e-6 floor is
/// added, so the result does not change under positive scaling.
pub fn normalize(raw: &RawWindow, params: &FeatureParams) -> FeatureWindow {
    let range = params.dynamic_range_db;
    let mut data = Vec::with_capacity(params.channels.len() * raw.bins * raw.frames);
    for &kind in &params.channels {
        let ch = raw.channel(kind);
        let peak = ch.iter().copied().fold(0.0, f64::max);
        if peak <= 0.0 {
            data.extend(std::iter::repeat_n(0.0f32, ch.len()));
            continue;
        }
        let top = 20.0 * (1.0 + 1e-6f64).log10();
        data.extend(ch.iter().map(|&x| {
            let db = 20.0 * (x.max(0.0) / peak + 1e-6).log10();
            (((db - top + range) / range).clamp(0.0, 1.0)) as f32
        }));
    }
    FeatureWindow {
        channels: params.channels.clone(),
        bins: raw.bins,
        frames: raw.frames,
        data,
        meta: WindowMeta {
            source_frames: raw.source_frames.clone(),
            trigger: Some(raw.stats.clone()),
            label: None,
        },
    }
}

/// Binary PGM of one channel: one row per frame, one column per bin.
pub fn encode_pgm(win: &FeatureWindow, channel: usize) -> Vec<u8> {
    let kind = win.channels[channel];
    let mut out = format!(
        "P5\n# {} time spectrum: rows are frames, columns are bins (transposed from bin-major storage)\n{} {}\n255\n",
        kind.tag(),
        win.bins,
        win.frames
    )
    .into_bytes();
    for t in 0..win.frames {
        for b in 0..win.bins {
            out.push((255.0 * win.get(channel, b, t)).round() as u8);
        }
    }
    out
}

/// Writes `<id>_<tag>.pgm` for every channel; returns the paths.
pub fn write_pgm(win: &FeatureWindow, dir: &Path, id: &str) -> Result<Vec<PathBuf>> {
    let mut paths = Vec::new();
    for (c, kind) in win.channels.iter().enumerate() {
        let path = dir.join(format!("{id}_{}.pgm", kind.tag()));
        let file = File::create(&path).map_err(|e| Error::io(path.display(), e))?;
        let mut w = BufWriter::new(file);
        w.write_all(&encode_pgm(win, c))
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path.display(), e))?;
        paths.push(path);
    }
    Ok(paths)
}
