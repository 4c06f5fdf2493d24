//! Point-cloud recovery from raw frames.
//!
//! ```text
//! FrameCube ─ range FFT ─ per-TX Doppler FFT ─ |·|² over channels ─ CA-CFAR
//!                                   │                                  │
//!                                   └──── 16-channel snapshot ◄────────┘
//!                                               │
//!                             TDM phase compensation ─ 2D angle FFT ─ PointCloud
//! ```
//!
//! Both FFT stages use a periodic Hann taper and orthonormal scaling, so each
//! stage preserves the energy of its windowed input.

pub mod angle;
pub mod cfar;
pub mod cloud;

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::config::RadarConfig;
use crate::error::{Error, Result};
use crate::sim::FrameCube;

pub use angle::{compensate_tdm, estimate_angles, uncompensate_tdm, AngleEstimate, Snapshot, ANGLE_FFT_SIZE};
pub use cfar::{cfar_cells, cfar_detect, threshold_factor, CfarHit, CfarParams, DetectionCell};
pub use cloud::{Point, PointCloud};

/// Periodic Hann window of length `n`.
pub fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 * (1.0 - (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos()))
        .collect()
}

/// Range-compressed frame, shaped (channel, chirp per TX, range bin).
#[derive(Debug, Clone, PartialEq)]
pub struct RangeCube {
    pub n_channels: usize,
    pub n_chirps: usize,
    pub n_range: usize,
    pub data: Vec<Complex64>,
}

impl RangeCube {
    pub fn row(&self, channel: usize, chirp: usize) -> &[Complex64] {
        let start = (channel * self.n_chirps + chirp) * self.n_range;
        &self.data[start..start + self.n_range]
    }
}

/// Complex range-Doppler maps per virtual channel, shaped
/// (channel, Doppler bin, range bin). Doppler is FFT-shifted so zero
/// velocity sits at `zero_doppler_bin`.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeDopplerCube {
    pub n_channels: usize,
    pub n_doppler: usize,
    pub n_range: usize,
    pub data: Vec<Complex64>,
    /// Metres per range bin.
    pub range_bin: f64,
    /// m/s per Doppler bin.
    pub velocity_bin: f64,
    pub zero_doppler_bin: usize,
}

impl RangeDopplerCube {
    pub fn get(&self, channel: usize, doppler: usize, range: usize) -> Complex64 {
        self.data[(channel * self.n_doppler + doppler) * self.n_range + range]
    }

    pub fn snapshot(&self, doppler: usize, range: usize) -> Vec<Complex64> {
        (0..self.n_channels).map(|c| self.get(c, doppler, range)).collect()
    }

    pub fn velocity_of(&self, doppler_bin: usize) -> f64 {
        (doppler_bin as f64 - self.zero_doppler_bin as f64) * self.velocity_bin
    }

    pub fn range_of(&self, range_bin: usize) -> f64 {
        range_bin as f64 * self.range_bin
    }
}

/// Dense row-major real map (rows × cols).
#[derive(Debug, Clone, PartialEq)]
pub struct PowerMap {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl PowerMap {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(Error::invalid("power map data length does not match its shape"));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    pub fn set(&mut self, row: usize, col: usize, v: f64) {
        self.data[row * self.cols + col] = v;
    }
}

/// Reusable per-configuration processing state: FFT plans and windows.
pub struct Processor {
    cfg: RadarConfig,
    range_fft: Arc<dyn Fft<f64>>,
    doppler_fft: Arc<dyn Fft<f64>>,
    angle_fft: Arc<dyn Fft<f64>>,
    range_window: Vec<f64>,
    doppler_window: Vec<f64>,
}

impl std::fmt::Debug for Processor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Processor").field("cfg", &self.cfg).finish_non_exhaustive()
    }
}

impl Processor {
    pub fn new(cfg: &RadarConfig) -> Result<Self> {
        cfg.validate()?;
        let mut planner = FftPlanner::new();
        Ok(Self {
            cfg: cfg.clone(),
            range_fft: planner.plan_fft_forward(cfg.samples_per_chirp),
            doppler_fft: planner.plan_fft_forward(cfg.chirps_per_tx()),
            angle_fft: planner.plan_fft_forward(ANGLE_FFT_SIZE),
            range_window: hann(cfg.samples_per_chirp),
            doppler_window: hann(cfg.chirps_per_tx()),
        })
    }

    pub fn config(&self) -> &RadarConfig {
        &self.cfg
    }

    /// Amplitude gain of a unit tone through both windowed FFT stages.
    pub fn coherent_gain(&self) -> f64 {
        let g = |w: &[f64]| w.iter().sum::<f64>() / (w.len() as f64).sqrt();
        g(&self.range_window) * g(&self.doppler_window)
    }

    /// Hann-windowed, orthonormal fast-time FFT of every (channel, chirp) row.
    pub fn range_fft(&self, cube: &FrameCube) -> Result<RangeCube> {
        if !cube.matches(&self.cfg) {
            return Err(Error::invalid(format!(
                "frame shape {:?} does not match the radar configuration",
                cube.shape()
            )));
        }
        let [n_channels, n_chirps, n] = cube.shape();
        let scale = 1.0 / (n as f64).sqrt();
        let mut data: Vec<Complex64> = cube
            .data()
            .chunks_exact(n)
            .flat_map(|row| row.iter().zip(&self.range_window).map(|(z, w)| z * (w * scale)))
            .collect();
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.range_fft.get_inplace_scratch_len()];
        self.range_fft.process_with_scratch(&mut data, &mut scratch);
        Ok(RangeCube {
            n_channels,
            n_chirps,
            n_range: n,
            data,
        })
    }

    /// Hann-windowed, orthonormal, FFT-shifted slow-time FFT per
    /// (channel, range bin) over the chirps of each transmitter.
    pub fn doppler_fft(&self, rc: &RangeCube) -> Result<RangeDopplerCube> {
        let n_doppler = rc.n_chirps;
        if n_doppler != self.cfg.chirps_per_tx() {
            return Err(Error::invalid("range cube chirp count does not match the configuration"));
        }
        let scale = 1.0 / (n_doppler as f64).sqrt();
        let half = n_doppler / 2;
        let mut out = vec![Complex64::new(0.0, 0.0); rc.data.len()];
        let mut column = vec![Complex64::new(0.0, 0.0); n_doppler];
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.doppler_fft.get_inplace_scratch_len()];
        for ch in 0..rc.n_channels {
            let base = ch * n_doppler * rc.n_range;
            for r in 0..rc.n_range {
                for (k, v) in column.iter_mut().enumerate() {
                    *v = rc.data[base + k * rc.n_range + r] * (self.doppler_window[k] * scale);
                }
                self.doppler_fft.process_with_scratch(&mut column, &mut scratch);
                for (k, v) in column.iter().enumerate() {
                    let shifted = (k + half) % n_doppler;
                    out[base + shifted * rc.n_range + r] = *v;
                }
            }
        }
        Ok(RangeDopplerCube {
            n_channels: rc.n_channels,
            n_doppler,
            n_range: rc.n_range,
            data: out,
            range_bin: self.cfg.range_resolution(),
            velocity_bin: self.cfg.velocity_resolution(),
            zero_doppler_bin: half,
        })
    }

    /// Range-Doppler cube and its noncoherently integrated power map.
    pub fn range_doppler(&self, cube: &FrameCube) -> Result<(RangeDopplerCube, PowerMap)> {
        let rd = self.doppler_fft(&self.range_fft(cube)?)?;
        let power = integrate(&rd);
        Ok((rd, power))
    }

    /// Full chain: detections, TDM compensation and angle estimation.
    pub fn extract_point_cloud(&self, cube: &FrameCube, params: &CfarParams) -> Result<PointCloud> {
        let (rd, power) = self.range_doppler(cube)?;
        let cells = cfar_detect(&power, &rd, params)?;
        let gain = self.coherent_gain();
        let mut points = Vec::with_capacity(cells.len());
        for cell in &cells {
            let snap = compensate_tdm(cell, &self.cfg)?;
            let est = self.estimate_angles(&snap)?;
            points.push(Point {
                range: rd.range_of(cell.range_bin),
                velocity: rd.velocity_of(cell.doppler_bin),
                azimuth: est.azimuth,
                elevation: est.elevation,
                amplitude: est.amplitude / gain,
            });
        }
        Ok(PointCloud {
            frame: cube.frame_index,
            points,
        })
    }

    pub fn estimate_angles(&self, snap: &Snapshot) -> Result<AngleEstimate> {
        angle::estimate_angles_with(snap, &self.cfg, self.angle_fft.as_ref())
    }
}

/// Noncoherent sum of |·|² across virtual channels.
pub fn integrate(rd: &RangeDopplerCube) -> PowerMap {
    let cells = rd.n_doppler * rd.n_range;
    let mut data = vec![0.0; cells];
    for ch in rd.data.chunks_exact(cells) {
        for (acc, z) in data.iter_mut().zip(ch) {
            *acc += z.norm_sqr();
        }
    }
    PowerMap {
        rows: rd.n_doppler,
        cols: rd.n_range,
        data,
    }
}

/// Convenience wrapper building a [`Processor`] for a single frame.
pub fn extract_point_cloud(cube: &FrameCube, cfg: &RadarConfig, params: &CfarParams) -> Result<PointCloud> {
    Processor::new(cfg)?.extract_point_cloud(cube, params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{synthesize_frame, FrameScene, ScattererState};

    fn quiet() -> RadarConfig {
        RadarConfig {
            noise_std: 0.0,
            ..Default::default()
        }
    }

    fn frame(states: Vec<ScattererState>, cfg: &RadarConfig) -> FrameCube {
        synthesize_frame(&FrameScene::Linear(states), 0, cfg, 1).unwrap().cube
    }

    fn unit(range: f64, v: f64) -> ScattererState {
        ScattererState::new(range, 0.0, 0.0, v, Complex64::new(1.0, 0.0))
    }

    fn argmax(xs: impl Iterator<Item = f64>) -> usize {
        xs.enumerate().max_by(|a, b| a.1.total_cmp(&b.1)).unwrap().0
    }

    #[test]
    fn zero_frame_stays_zero() {
        let cfg = quiet();
        let p = Processor::new(&cfg).unwrap();
        let cube = FrameCube::zeros(&cfg, 0);
        let rc = p.range_fft(&cube).unwrap();
        assert!(rc.data.iter().all(|z| z.norm() == 0.0));
        let rd = p.doppler_fft(&rc).unwrap();
        assert!(integrate(&rd).data.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn range_peak_at_bin_23_in_every_channel() {
        let cfg = quiet();
        let p = Processor::new(&cfg).unwrap();
        let rc = p.range_fft(&frame(vec![unit(1.0, 0.0)], &cfg)).unwrap();
        for ch in 0..cfg.n_virtual() {
            for chirp in [0, 31, 63] {
                let row = rc.row(ch, chirp);
                assert_eq!(argmax(row.iter().map(|z| z.norm())), 23);
            }
        }
    }

    #[test]
    fn range_fft_preserves_windowed_energy() {
        let cfg = RadarConfig::default();
        let p = Processor::new(&cfg).unwrap();
        let cube = frame(vec![unit(1.3, 0.2)], &cfg);
        let rc = p.range_fft(&cube).unwrap();
        let w = hann(cfg.samples_per_chirp);
        for (ch, chirp) in [(0, 0), (7, 13), (15, 63)] {
            let e_in: f64 = cube.row(ch, chirp).iter().zip(&w).map(|(z, w)| (z * w).norm_sqr()).sum();
            let e_out: f64 = rc.row(ch, chirp).iter().map(|z| z.norm_sqr()).sum();
            assert!((e_in - e_out).abs() <= 1e-9 * e_in);
        }
    }

    #[test]
    fn doppler_fft_preserves_windowed_energy() {
        let cfg = RadarConfig::default();
        let p = Processor::new(&cfg).unwrap();
        let rc = p.range_fft(&frame(vec![unit(0.9, -0.7)], &cfg)).unwrap();
        let rd = p.doppler_fft(&rc).unwrap();
        let w = hann(cfg.chirps_per_tx());
        for (ch, r) in [(0, 21), (9, 100)] {
            let e_in: f64 = (0..rc.n_chirps)
                .map(|k| (rc.row(ch, k)[r] * w[k]).norm_sqr())
                .sum();
            let e_out: f64 = (0..rd.n_doppler).map(|d| rd.get(ch, d, r).norm_sqr()).sum();
            assert!((e_in - e_out).abs() <= 1e-9 * e_in);
        }
    }

    fn doppler_peak(v: f64) -> usize {
        let cfg = quiet();
        let p = Processor::new(&cfg).unwrap();
        let (_, power) = p.range_doppler(&frame(vec![unit(1.0, v)], &cfg)).unwrap();
        argmax(power.data.iter().copied()) / power.cols
    }

    #[test]
    fn doppler_bins_follow_velocity() {
        let cfg = quiet();
        let vres = cfg.velocity_resolution();
        assert_eq!(doppler_peak(0.0), 32);
        // Oracle: 32 + round(v / v_res).
        assert_eq!(32 + (0.5 / vres).round() as usize, 42);
        assert_eq!(doppler_peak(0.5), 42);
        assert_eq!(doppler_peak(-0.5), 22);
        // 1.60 m/s aliases by 2·v_max.
        let aliased = 32 + ((1.60 - 2.0 * cfg.max_velocity()) / vres).round() as i64;
        assert_eq!(aliased, 1);
        assert_eq!(doppler_peak(1.60), 1);
    }

    #[test]
    fn integrate_sums_channel_powers() {
        let mk = |vals: Vec<Complex64>| RangeDopplerCube {
            n_channels: 16,
            n_doppler: 2,
            n_range: 3,
            data: vals,
            range_bin: 1.0,
            velocity_bin: 1.0,
            zero_doppler_bin: 1,
        };
        let mut one = vec![Complex64::new(0.0, 0.0); 16 * 6];
        for (i, z) in one[5 * 6..6 * 6].iter_mut().enumerate() {
            *z = Complex64::new(i as f64, -1.0);
        }
        let m = integrate(&mk(one.clone()));
        for i in 0..6 {
            assert_eq!(m.data[i], one[5 * 6 + i].norm_sqr());
        }
        let units = vec![Complex64::from_polar(1.0, 0.3); 16 * 6];
        let m = integrate(&mk(units));
        assert!(m.data.iter().all(|&x| (x - 16.0).abs() < 1e-12));
        // Per-channel phase rotation leaves the map unchanged.
        let rotated: Vec<_> = one
            .iter()
            .enumerate()
            .map(|(i, z)| z * Complex64::from_polar(1.0, 0.7 * (i / 6) as f64))
            .collect();
        let m2 = integrate(&mk(rotated));
        for (a, b) in integrate(&mk(one)).data.iter().zip(&m2.data) {
            assert!((a - b).abs() <= 1e-12 * a.max(1.0));
        }
    }

    #[test]
    fn shape_mismatch_rejected() {
        let p = Processor::new(&RadarConfig::default()).unwrap();
        let other = RadarConfig {
            samples_per_chirp: 128,
            ..Default::default()
        };
        assert!(p.range_fft(&FrameCube::zeros(&other, 0)).is_err());
    }
}
