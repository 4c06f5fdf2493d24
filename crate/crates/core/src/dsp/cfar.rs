//! Two-dimensional cell-averaging CFAR with 3×3 local-maximum gating.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dsp::{PowerMap, RangeDopplerCube};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CfarParams {
    /// Guard cells on each side of the cell under test, per axis.
    pub guard: usize,
    /// Training cells beyond the guard band, per side and axis.
    pub train: usize,
    pub pfa: f64,
}

impl Default for CfarParams {
    fn default() -> Self {
        Self {
            guard: 2,
            train: 4,
            pfa: 1e-4,
        }
    }
}

impl CfarParams {
    pub fn validate(&self) -> Result<()> {
        if self.train == 0 {
            return Err(Error::config("cfar: train must be at least 1"));
        }
        if !(self.pfa > 0.0 && self.pfa < 1.0) {
            return Err(Error::config("cfar: pfa must lie in (0, 1)"));
        }
        Ok(())
    }

    /// Smallest map extent the detector accepts on either axis.
    pub fn min_extent(&self) -> usize {
        2 * (self.guard + self.train) + 1
    }
}

/// CA-CFAR scale for `n_train` exponential training cells.
pub fn threshold_factor(n_train: usize, pfa: f64) -> f64 {
    let n = n_train as f64;
    n * (pfa.powf(-1.0 / n) - 1.0)
}

/// A thresholded local maximum of the power map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CfarHit {
    /// Row of the map (Doppler bin).
    pub row: usize,
    /// Column of the map (range bin).
    pub col: usize,
    pub power: f64,
    /// Mean of the training ring.
    pub noise: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionCell {
    pub range_bin: usize,
    pub doppler_bin: usize,
    pub power: f64,
    pub noise: f64,
    /// One complex value per virtual channel, `tx * n_rx + rx`.
    pub snapshot: Vec<Complex64>,
}

/// Summed-area table with a zero border row and column.
struct Integral {
    cols: usize,
    s: Vec<f64>,
}

impl Integral {
    fn new(map: &PowerMap) -> Self {
        let cols = map.cols + 1;
        let mut s = vec![0.0; (map.rows + 1) * cols];
        for r in 0..map.rows {
            let mut run = 0.0;
            for c in 0..map.cols {
                run += map.get(r, c);
                s[(r + 1) * cols + c + 1] = s[r * cols + c + 1] + run;
            }
        }
        Self { cols, s }
    }

    /// Sum over rows r0..r1 and cols c0..c1 (half-open).
    fn sum(&self, r0: usize, r1: usize, c0: usize, c1: usize) -> f64 {
        let at = |r: usize, c: usize| self.s[r * self.cols + c];
        at(r1, c1) - at(r0, c1) - at(r1, c0) + at(r0, c0)
    }
}

fn window(center: usize, half: usize, len: usize) -> (usize, usize) {
    (center.saturating_sub(half), (center + half + 1).min(len))
}

fn is_local_max(map: &PowerMap, r: usize, c: usize) -> bool {
    let v = map.get(r, c);
    for dr in -1i64..=1 {
        for dc in -1i64..=1 {
            if dr == 0 && dc == 0 {
                continue;
            }
            let (rr, cc) = (r as i64 + dr, c as i64 + dc);
            if rr < 0 || cc < 0 || rr >= map.rows as i64 || cc >= map.cols as i64 {
                continue;
            }
            let n = map.get(rr as usize, cc as usize);
            // Plateaus keep only their first cell in row-major order.
            let earlier = (dr, dc) < (0, 0);
            if n > v || (earlier && n == v) {
                return false;
            }
        }
    }
    true
}

/// CA-CFAR over a power map. Windows are clipped at the edges and the
/// threshold factor is recomputed for the remaining training count.
pub fn cfar_cells(map: &PowerMap, params: &CfarParams) -> Result<Vec<CfarHit>> {
    params.validate()?;
    let need = params.min_extent();
    if map.rows < need || map.cols < need {
        return Err(Error::config(format!(
            "cfar: map {}x{} smaller than the {need}x{need} detector window",
            map.rows, map.cols
        )));
    }
    let table = Integral::new(map);
    let outer = params.guard + params.train;
    let mut alpha_cache = std::collections::HashMap::new();
    let mut hits = Vec::new();
    for r in 0..map.rows {
        for c in 0..map.cols {
            let power = map.get(r, c);
            if power <= 0.0 {
                continue;
            }
            let (or0, or1) = window(r, outer, map.rows);
            let (oc0, oc1) = window(c, outer, map.cols);
            let (gr0, gr1) = window(r, params.guard, map.rows);
            let (gc0, gc1) = window(c, params.guard, map.cols);
            let n_train = (or1 - or0) * (oc1 - oc0) - (gr1 - gr0) * (gc1 - gc0);
            let ring = table.sum(or0, or1, oc0, oc1) - table.sum(gr0, gr1, gc0, gc1);
            let noise = ring.max(0.0) / n_train as f64;
            let alpha = *alpha_cache
                .entry(n_train)
                .or_insert_with(|| threshold_factor(n_train, params.pfa));
            if power > alpha * noise && is_local_max(map, r, c) {
                hits.push(CfarHit {
                    row: r,
                    col: c,
                    power,
                    noise,
                });
            }
        }
    }
    Ok(hits)
}

/// [`cfar_cells`] on the integrated map, with channel snapshots attached.
pub fn cfar_detect(map: &PowerMap, rd: &RangeDopplerCube, params: &CfarParams) -> Result<Vec<DetectionCell>> {
    if map.rows != rd.n_doppler || map.cols != rd.n_range {
        return Err(Error::invalid("power map and range-Doppler cube disagree in shape"));
    }
    Ok(cfar_cells(map, params)?
        .into_iter()
        .map(|h| DetectionCell {
            range_bin: h.col,
            doppler_bin: h.row,
            power: h.power,
            noise: h.noise,
            snapshot: rd.snapshot(h.row, h.col),
        })
        .collect())
}
