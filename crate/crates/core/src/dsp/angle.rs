//! TDM Doppler-phase compensation and 2D FFT angle estimation.

use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::config::RadarConfig;
use crate::dsp::DetectionCell;
use crate::error::{Error, Result};

/// Zero-padded FFT size along each array axis.
pub const ANGLE_FFT_SIZE: usize = 64;

/// Virtual-array snapshot, `values[tx * n_rx + rx]`. TX index runs along
/// elevation, RX index along azimuth.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub n_tx: usize,
    pub n_rx: usize,
    pub values: Vec<Complex64>,
}

impl Snapshot {
    pub fn new(n_tx: usize, n_rx: usize, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != n_tx * n_rx {
            return Err(Error::invalid(format!(
                "snapshot has {} values, array has {}",
                values.len(),
                n_tx * n_rx
            )));
        }
        Ok(Self { n_tx, n_rx, values })
    }

    pub fn get(&self, tx: usize, rx: usize) -> Complex64 {
        self.values[tx * self.n_rx + rx]
    }

    /// Ideal plane-wave response for direction sines (u, w).
    pub fn steering(cfg: &RadarConfig, u: f64, w: f64) -> Self {
        let values = (0..cfg.n_tx)
            .flat_map(|tx| {
                (0..cfg.n_rx).map(move |rx| {
                    let ph = 2.0 * PI * (cfg.rx_spacing * u * rx as f64 + cfg.tx_spacing * w * tx as f64);
                    Complex64::from_polar(1.0, ph)
                })
            })
            .collect();
        Self {
            n_tx: cfg.n_tx,
            n_rx: cfg.n_rx,
            values,
        }
    }
}

fn tdm_phasors(doppler_bin: usize, cfg: &RadarConfig) -> Vec<Complex64> {
    let zero = (cfg.chirps_per_tx() / 2) as f64;
    let f_d = (doppler_bin as f64 - zero) * cfg.doppler_bin_hz();
    (0..cfg.n_tx)
        .map(|m| Complex64::from_polar(1.0, -2.0 * PI * f_d * m as f64 * cfg.chirp_slot()))
        .collect()
}

fn apply(cell: &DetectionCell, cfg: &RadarConfig, conj: bool) -> Result<Snapshot> {
    let mut snap = Snapshot::new(cfg.n_tx, cfg.n_rx, cell.snapshot.clone())?;
    for (m, p) in tdm_phasors(cell.doppler_bin, cfg).into_iter().enumerate() {
        let p = if conj { p.conj() } else { p };
        for v in &mut snap.values[m * cfg.n_rx..(m + 1) * cfg.n_rx] {
            *v *= p;
        }
    }
    Ok(snap)
}

/// Removes the Doppler phase a moving target accrues across TX slots.
pub fn compensate_tdm(cell: &DetectionCell, cfg: &RadarConfig) -> Result<Snapshot> {
    apply(cell, cfg, false)
}

/// Inverse of [`compensate_tdm`].
pub fn uncompensate_tdm(cell: &DetectionCell, cfg: &RadarConfig) -> Result<Snapshot> {
    apply(cell, cfg, true)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AngleEstimate {
    /// Azimuth (rad).
    pub azimuth: f64,
    /// Elevation (rad).
    pub elevation: f64,
    /// Peak magnitude divided by the element count.
    pub amplitude: f64,
    pub u: f64,
    pub w: f64,
}

/// Builds a one-off FFT plan; prefer `Processor::estimate_angles` in loops.
pub fn estimate_angles(snap: &Snapshot, cfg: &RadarConfig) -> Result<AngleEstimate> {
    let fft = FftPlanner::new().plan_fft_forward(ANGLE_FFT_SIZE);
    estimate_angles_with(snap, cfg, fft.as_ref())
}

fn signed(k: usize, n: usize) -> f64 {
    if k >= n / 2 {
        k as f64 - n as f64
    } else {
        k as f64
    }
}

/// Parabolic vertex offset through three magnitudes, in (−½, ½).
fn vertex(left: f64, mid: f64, right: f64) -> f64 {
    let den = left - 2.0 * mid + right;
    if den < 0.0 {
        (0.5 * (left - right) / den).clamp(-0.5, 0.5)
    } else {
        0.0
    }
}

pub(crate) fn estimate_angles_with(snap: &Snapshot, cfg: &RadarConfig, fft: &dyn Fft<f64>) -> Result<AngleEstimate> {
    let n = ANGLE_FFT_SIZE;
    if snap.n_tx > n || snap.n_rx > n || snap.n_tx * snap.n_rx != snap.values.len() {
        return Err(Error::invalid("snapshot does not fit the angle FFT grid"));
    }
    if snap.values.iter().all(|z| z.norm_sqr() == 0.0) {
        return Err(Error::Degenerate("all-zero snapshot".into()));
    }
    // grid[el][az]; only the first n_tx rows are nonzero before the column pass.
    let mut grid = vec![Complex64::new(0.0, 0.0); n * n];
    for tx in 0..snap.n_tx {
        for rx in 0..snap.n_rx {
            grid[tx * n + rx] = snap.get(tx, rx);
        }
    }
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    fft.process_with_scratch(&mut grid[..snap.n_tx * n], &mut scratch);
    let mut col = vec![Complex64::new(0.0, 0.0); n];
    for a in 0..n {
        for e in 0..n {
            col[e] = grid[e * n + a];
        }
        fft.process_with_scratch(&mut col, &mut scratch);
        for e in 0..n {
            grid[e * n + a] = col[e];
        }
    }
    let mag: Vec<f64> = grid.iter().map(|z| z.norm()).collect();
    let best = mag
        .iter()
        .enumerate()
        .fold(0, |b, (i, &m)| if m > mag[b] { i } else { b });
    let (ke, ka) = (best / n, best % n);
    let at = |e: usize, a: usize| mag[(e % n) * n + (a % n)];
    let da = vertex(at(ke, ka + n - 1), mag[best], at(ke, ka + 1));
    let de = vertex(at(ke + n - 1, ka), mag[best], at(ke + 1, ka));

    let u = ((signed(ka, n) + da) / (n as f64 * cfg.rx_spacing)).clamp(-1.0, 1.0);
    let w = ((signed(ke, n) + de) / (n as f64 * cfg.tx_spacing)).clamp(-1.0, 1.0);
    let elevation = w.asin();
    let cos_el = elevation.cos();
    let azimuth = if cos_el > 0.0 {
        (u / cos_el).clamp(-1.0, 1.0).asin()
    } else {
        0.0
    };
    Ok(AngleEstimate {
        azimuth,
        elevation,
        amplitude: mag[best] / snap.values.len() as f64,
        u,
        w,
    })
}
