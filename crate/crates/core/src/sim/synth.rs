//! Dechirped FMCW beat-signal rendering for a TDM-MIMO virtual array.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::config::{RadarConfig, SPEED_OF_LIGHT};
use crate::error::{Error, Result};
use crate::rng::{mix_seed, rng_for};
use crate::sim::gesture::GestureTrajectory;

/// One point scatterer at a single instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScattererState {
    pub index: usize,
    /// Range (m).
    pub range: f64,
    /// Azimuth (rad), positive to the right.
    pub azimuth: f64,
    /// Elevation (rad), positive up.
    pub elevation: f64,
    /// Radial velocity (m/s), positive receding.
    pub velocity: f64,
    /// Complex scattering amplitude.
    pub amplitude: Complex64,
}

impl ScattererState {
    pub fn new(range: f64, azimuth: f64, elevation: f64, velocity: f64, amplitude: Complex64) -> Self {
        Self {
            index: 0,
            range,
            azimuth,
            elevation,
            velocity,
            amplitude,
        }
    }

    /// Direction sines `(u, w) = (sinθ cosφ, sinφ)`.
    pub fn direction_sines(&self) -> (f64, f64) {
        (
            self.azimuth.sin() * self.elevation.cos(),
            self.elevation.sin(),
        )
    }

    pub fn validate(&self) -> Result<()> {
        let half_pi = PI / 2.0;
        if !(self.range > 0.0 && self.range.is_finite()) {
            return Err(Error::invalid(format!("scatterer {}: range must be positive", self.index)));
        }
        if !(self.azimuth.abs() < half_pi && self.elevation.abs() < half_pi) {
            return Err(Error::invalid(format!(
                "scatterer {}: angles must lie strictly within ±90°",
                self.index
            )));
        }
        if !self.velocity.is_finite() || !self.amplitude.re.is_finite() || !self.amplitude.im.is_finite() {
            return Err(Error::invalid(format!("scatterer {}: non-finite state", self.index)));
        }
        Ok(())
    }
}

/// Scatterer states for one frame.
#[derive(Debug, Clone, PartialEq)]
pub enum FrameScene {
    /// States at frame start; range advances by `velocity · t` for each
    /// chirp slot.
    Linear(Vec<ScattererState>),
    /// Explicit states for every chirp slot of the frame.
    PerSlot(Vec<Vec<ScattererState>>),
}

impl FrameScene {
    pub fn empty() -> Self {
        FrameScene::Linear(Vec::new())
    }

    fn validate(&self, cfg: &RadarConfig) -> Result<()> {
        match self {
            FrameScene::Linear(states) => states.iter().try_for_each(ScattererState::validate),
            FrameScene::PerSlot(slots) => {
                if slots.len() != cfg.chirps_per_frame {
                    return Err(Error::invalid(format!(
                        "scene has {} chirp slots, frame needs {}",
                        slots.len(),
                        cfg.chirps_per_frame
                    )));
                }
                slots.iter().flatten().try_for_each(ScattererState::validate)
            }
        }
    }
}

/// Raw complex samples of one frame, shaped (virtual channel, chirp per TX,
/// fast-time sample). Virtual channel `tx * n_rx + rx`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameCube {
    pub frame_index: u64,
    pub config_hash: String,
    n_channels: usize,
    n_chirps: usize,
    n_samples: usize,
    data: Vec<Complex64>,
}

impl FrameCube {
    pub fn zeros(cfg: &RadarConfig, frame_index: u64) -> Self {
        let (c, k, n) = (cfg.n_virtual(), cfg.chirps_per_tx(), cfg.samples_per_chirp);
        Self {
            frame_index,
            config_hash: cfg.config_hash(),
            n_channels: c,
            n_chirps: k,
            n_samples: n,
            data: vec![Complex64::new(0.0, 0.0); c * k * n],
        }
    }

    /// Wraps existing samples; `data.len()` must equal the shape product.
    pub fn from_parts(
        frame_index: u64,
        config_hash: String,
        shape: [usize; 3],
        data: Vec<Complex64>,
    ) -> Result<Self> {
        if shape.iter().product::<usize>() != data.len() {
            return Err(Error::invalid("frame data length does not match its shape"));
        }
        Ok(Self {
            frame_index,
            config_hash,
            n_channels: shape[0],
            n_chirps: shape[1],
            n_samples: shape[2],
            data,
        })
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.n_channels, self.n_chirps, self.n_samples]
    }

    pub fn matches(&self, cfg: &RadarConfig) -> bool {
        self.shape() == [cfg.n_virtual(), cfg.chirps_per_tx(), cfg.samples_per_chirp]
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn get(&self, channel: usize, chirp: usize, sample: usize) -> Complex64 {
        self.data[(channel * self.n_chirps + chirp) * self.n_samples + sample]
    }

    /// Fast-time samples of one (channel, chirp) pair.
    pub fn row(&self, channel: usize, chirp: usize) -> &[Complex64] {
        let start = (channel * self.n_chirps + chirp) * self.n_samples;
        &self.data[start..start + self.n_samples]
    }

    fn row_mut(&mut self, channel: usize, chirp: usize) -> &mut [Complex64] {
        let start = (channel * self.n_chirps + chirp) * self.n_samples;
        &mut self.data[start..start + self.n_samples]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Rounds every sample through binary32, the precision of the raw file.
    pub fn quantized_f32(&self) -> Self {
        let mut out = self.clone();
        for z in &mut out.data {
            *z = Complex64::new(z.re as f32 as f64, z.im as f32 as f64);
        }
        out
    }
}

/// Non-fatal conditions found while rendering.
#[derive(Debug, Clone, PartialEq)]
pub enum SynthWarning {
    /// Beat frequency beyond the sampled band; the return wraps in range.
    BeyondMaxRange { frame: u64, index: usize, range: f64 },
    /// Radial velocity beyond the unambiguous interval; Doppler aliases.
    AliasedVelocity { frame: u64, index: usize, velocity: f64 },
}

#[derive(Debug, Clone)]
pub struct RenderedFrame {
    pub cube: FrameCube,
    pub warnings: Vec<SynthWarning>,
}

/// Renders one frame of dechirped samples for `scene`.
///
/// Sample `n` of the chirp in slot `k` (transmitter `k mod n_tx`) on
/// receiver `rx` is
/// `Σ_p Ã_p · e^{j2π f_b t_n} · e^{j4π r_p(k)/λ} · e^{j2π d_rx u_p rx} · e^{j2π d_tx w_p tx}`
/// with `f_b = 2 S r_p(k) / c` and `t_n = (n − N/2) / f_s`, plus circular Gaussian noise of RMS
/// `cfg.noise_std` drawn from a stream keyed by `(noise_seed, frame_index)`.
pub fn synthesize_frame(
    scene: &FrameScene,
    frame_index: u64,
    cfg: &RadarConfig,
    noise_seed: u64,
) -> Result<RenderedFrame> {
    cfg.validate()?;
    scene.validate(cfg)?;

    let mut cube = FrameCube::zeros(cfg, frame_index);
    let mut warnings = Vec::new();
    let n_samples = cfg.samples_per_chirp;
    let n_rx = cfg.n_rx;
    let slot = cfg.chirp_slot();
    let wavelength = cfg.wavelength();
    let fs = cfg.sample_rate();
    let beat_per_metre = 2.0 * cfg.slope() / SPEED_OF_LIGHT;
    let max_range = cfg.max_range();
    let max_velocity = cfg.max_velocity();

    let mut check = |s: &ScattererState, range: f64| {
        if range > max_range {
            warnings.push(SynthWarning::BeyondMaxRange {
                frame: frame_index,
                index: s.index,
                range,
            });
        }
        if s.velocity.abs() > max_velocity {
            warnings.push(SynthWarning::AliasedVelocity {
                frame: frame_index,
                index: s.index,
                velocity: s.velocity,
            });
        }
    };
    match scene {
        FrameScene::Linear(states) => {
            let last = (cfg.chirps_per_frame - 1) as f64 * slot;
            for s in states {
                check(s, s.range.max(s.range + s.velocity * last));
            }
        }
        FrameScene::PerSlot(slots) => {
            // One warning per scatterer index is enough.
            let mut seen = std::collections::BTreeMap::new();
            for s in slots.iter().flatten() {
                let e = seen.entry(s.index).or_insert(*s);
                if s.range > e.range || s.velocity.abs() > e.velocity.abs() {
                    *e = *s;
                }
            }
            for s in seen.values() {
                check(s, s.range);
            }
        }
    }

    let mut fast_time = vec![Complex64::new(0.0, 0.0); n_samples];
    let mut rx_coef = vec![Complex64::new(0.0, 0.0); n_rx];
    for k in 0..cfg.chirps_per_frame {
        let tx = k % cfg.n_tx;
        let chirp = k / cfg.n_tx;
        let t_slot = k as f64 * slot;
        let states: &[ScattererState] = match scene {
            FrameScene::Linear(states) => states,
            FrameScene::PerSlot(slots) => &slots[k],
        };
        for s in states {
            let range = match scene {
                FrameScene::Linear(_) => s.range + s.velocity * t_slot,
                FrameScene::PerSlot(_) => s.range,
            };
            let (u, w) = s.direction_sines();
            let carrier = Complex64::from_polar(1.0, 4.0 * PI * range / wavelength);
            let elev = Complex64::from_polar(1.0, 2.0 * PI * cfg.tx_spacing * w * tx as f64);
            let base = s.amplitude * carrier * elev;
            for (rx, c) in rx_coef.iter_mut().enumerate() {
                *c = base * Complex64::from_polar(1.0, 2.0 * PI * cfg.rx_spacing * u * rx as f64);
            }
            let beat = 2.0 * PI * beat_per_metre * range / fs;
            let step = Complex64::from_polar(1.0, beat);
            // Fast time is measured from the centre of the sampling window,
            // where the instantaneous frequency equals the carrier of λ.
            let mut z = Complex64::from_polar(1.0, -beat * (n_samples / 2) as f64);
            for v in fast_time.iter_mut() {
                *v = z;
                z *= step;
            }
            for (rx, &c) in rx_coef.iter().enumerate() {
                let row = cube.row_mut(tx * n_rx + rx, chirp);
                for (out, &e) in row.iter_mut().zip(&fast_time) {
                    *out += c * e;
                }
            }
        }
    }

    if cfg.noise_std > 0.0 {
        let mut rng = rng_for(noise_seed, frame_index);
        let sigma = cfg.noise_std / std::f64::consts::SQRT_2;
        for z in cube.data_mut() {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            *z += Complex64::new(sigma * re, sigma * im);
        }
    }

    Ok(RenderedFrame { cube, warnings })
}

/// Idle padding and static environment for [`render_gesture`].
#[derive(Debug, Clone, PartialEq)]
pub struct RenderOptions {
    pub lead_in: usize,
    pub lead_out: usize,
    /// Static scatterers present in every frame.
    pub clutter: Vec<ScattererState>,
}

impl Default for RenderOptions {
    fn default() -> Self {
        Self {
            lead_in: 5,
            lead_out: 5,
            clutter: Vec::new(),
        }
    }
}

/// Frame-by-frame renderer for one gesture performance.
#[derive(Debug, Clone)]
pub struct GestureRenderer<'a> {
    traj: &'a GestureTrajectory,
    cfg: &'a RadarConfig,
    opts: &'a RenderOptions,
    seed: u64,
    motion_frames: usize,
}

impl<'a> GestureRenderer<'a> {
    pub fn new(traj: &'a GestureTrajectory, cfg: &'a RadarConfig, seed: u64, opts: &'a RenderOptions) -> Result<Self> {
        cfg.validate()?;
        if traj.is_empty() || !(traj.sample_rate > 0.0) {
            return Err(Error::invalid("trajectory has no samples"));
        }
        let motion_frames = ((traj.duration * cfg.frame_rate) - 1e-9).ceil().max(1.0) as usize;
        Ok(Self {
            traj,
            cfg,
            opts,
            seed,
            motion_frames,
        })
    }

    pub fn frame_count(&self) -> usize {
        self.opts.lead_in + self.motion_frames + self.opts.lead_out
    }

    pub fn motion_frames(&self) -> usize {
        self.motion_frames
    }

    /// Scatterers of frame `f`: clutter, plus the hand during motion frames.
    pub fn scene(&self, f: usize) -> FrameScene {
        let mut states = self.opts.clutter.clone();
        if f >= self.opts.lead_in && f < self.opts.lead_in + self.motion_frames {
            let t = (f - self.opts.lead_in) as f64 / self.cfg.frame_rate;
            let idx = ((t * self.traj.sample_rate + 1e-9).floor() as usize).min(self.traj.len() - 1);
            let dt = t - idx as f64 / self.traj.sample_rate;
            let offset = states.len();
            states.extend(self.traj.samples[idx].iter().map(|s| ScattererState {
                index: offset + s.index,
                range: s.range + s.velocity * dt,
                ..*s
            }));
        }
        FrameScene::Linear(states)
    }

    pub fn render_frame(&self, f: usize) -> Result<RenderedFrame> {
        synthesize_frame(&self.scene(f), f as u64, self.cfg, mix_seed(self.seed, 0x6e6f_6973))
    }
}

/// Renders all frames of a performance, idle padding included.
pub fn render_gesture(
    traj: &GestureTrajectory,
    cfg: &RadarConfig,
    seed: u64,
    opts: &RenderOptions,
) -> Result<Vec<FrameCube>> {
    let renderer = GestureRenderer::new(traj, cfg, seed, opts)?;
    (0..renderer.frame_count())
        .map(|f| renderer.render_frame(f).map(|r| r.cube))
        .collect()
}
