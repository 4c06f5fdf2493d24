//! Gesture trajectories as a small rigid cluster of moving scattering centers.
//!
//! Each class is a velocity profile for the hand centroid over normalized
//! stroke time `s ∈ [0, 1]`, in a local Cartesian frame (x right, y along
//! boresight away from the radar, z up). Positions come from integrating the
//! profile, and every scatterer rides on the centroid with a fixed offset.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::rng_for;
use crate::sim::synth::ScattererState;

/// The ten gesture classes, in label order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum GestureClass {
    WaveUp,
    WaveDown,
    WaveLeft,
    WaveRight,
    Push,
    Pull,
    CircleClockwise,
    CircleAnticlockwise,
    DoubleClick,
    DoublePush,
}

impl GestureClass {
    pub const ALL: [GestureClass; 10] = [
        GestureClass::WaveUp,
        GestureClass::WaveDown,
        GestureClass::WaveLeft,
        GestureClass::WaveRight,
        GestureClass::Push,
        GestureClass::Pull,
        GestureClass::CircleClockwise,
        GestureClass::CircleAnticlockwise,
        GestureClass::DoubleClick,
        GestureClass::DoublePush,
    ];

    pub const COUNT: usize = 10;

    pub fn name(self) -> &'static str {
        match self {
            GestureClass::WaveUp => "wave up",
            GestureClass::WaveDown => "wave down",
            GestureClass::WaveLeft => "wave left",
            GestureClass::WaveRight => "wave right",
            GestureClass::Push => "push",
            GestureClass::Pull => "pull",
            GestureClass::CircleClockwise => "circle clockwise",
            GestureClass::CircleAnticlockwise => "circle anticlockwise",
            GestureClass::DoubleClick => "double-click",
            GestureClass::DoublePush => "double-push",
        }
    }

    /// File-name friendly form, e.g. `wave-up`.
    pub fn slug(self) -> String {
        self.name().replace(' ', "-")
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }
}

impl fmt::Display for GestureClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GestureClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s
            .trim()
            .to_ascii_lowercase()
            .chars()
            .map(|c| if c == '_' || c == ' ' { '-' } else { c })
            .collect();
        Self::ALL
            .iter()
            .copied()
            .find(|c| c.slug() == key)
            .ok_or_else(|| Error::invalid(format!("unknown gesture class {s:?}")))
    }
}

impl TryFrom<String> for GestureClass {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<GestureClass> for String {
    fn from(c: GestureClass) -> String {
        c.name().to_string()
    }
}

/// Randomization bounds for [`make_trajectory`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrajectoryParams {
    /// Centroid start range bounds (m).
    pub range: [f64; 2],
    /// Centroid start azimuth bounds (degrees).
    pub azimuth_deg: [f64; 2],
    /// Centroid start elevation bounds (degrees).
    pub elevation_deg: [f64; 2],
    /// Displacement multiplier.
    pub scale: f64,
    /// Tempo multiplier; durations shrink and velocities grow with it.
    pub speed: f64,
    /// Mean scatterer magnitude |Ã_p|.
    pub amplitude: f64,
    /// Fractional spread of per-scatterer magnitudes (uniform ±).
    pub amplitude_spread: f64,
    /// Per-sample magnitude jitter, uniform in ±dB.
    pub amplitude_jitter_db: f64,
    /// Inclusive scatterer count bounds.
    pub scatterers: [usize; 2],
    /// Radius of the ball holding scatterer offsets around the centroid (m).
    pub hand_radius: f64,
    /// Trajectory sampling rate (Hz); the renderer holds each sample and
    /// propagates range linearly between samples.
    pub sample_rate: f64,
}

impl Default for TrajectoryParams {
    fn default() -> Self {
        Self {
            range: [0.8, 1.2],
            azimuth_deg: [-10.0, 10.0],
            elevation_deg: [-10.0, 10.0],
            scale: 1.0,
            speed: 1.0,
            amplitude: 0.05,
            amplitude_spread: 0.3,
            amplitude_jitter_db: 3.0,
            scatterers: [3, 5],
            hand_radius: 0.04,
            sample_rate: 20.0,
        }
    }
}

impl TrajectoryParams {
    pub fn validate(&self) -> Result<()> {
        let ordered = |b: [f64; 2], what: &str| {
            if b[0].is_finite() && b[1].is_finite() && b[0] <= b[1] {
                Ok(())
            } else {
                Err(Error::config(format!("trajectory: {what} bounds must be finite and ordered")))
            }
        };
        ordered(self.range, "range")?;
        ordered(self.azimuth_deg, "azimuth")?;
        ordered(self.elevation_deg, "elevation")?;
        if self.range[0] <= 0.0 {
            return Err(Error::config("trajectory: start range must be positive"));
        }
        if self.azimuth_deg[0].abs().max(self.azimuth_deg[1].abs()) >= 60.0
            || self.elevation_deg[0].abs().max(self.elevation_deg[1].abs()) >= 60.0
        {
            return Err(Error::config("trajectory: start angles must stay within ±60°"));
        }
        if !(self.scale > 0.0 && self.speed > 0.0 && self.sample_rate > 0.0) {
            return Err(Error::config("trajectory: scale, speed and sample_rate must be positive"));
        }
        if !(self.amplitude > 0.0) || !(0.0..1.0).contains(&self.amplitude_spread) {
            return Err(Error::config("trajectory: amplitude must be positive, spread in [0, 1)"));
        }
        if !(self.amplitude_jitter_db >= 0.0) || !(self.hand_radius >= 0.0) {
            return Err(Error::config("trajectory: jitter and hand radius must be non-negative"));
        }
        if self.scatterers[0] == 0 || self.scatterers[0] > self.scatterers[1] {
            return Err(Error::config("trajectory: scatterer count bounds must satisfy 1 <= min <= max"));
        }
        Ok(())
    }
}

/// Centroid kinematics sampled at the trajectory rate, plus the scatterer
/// states rendered from them.
#[derive(Debug, Clone, PartialEq)]
pub struct GestureTrajectory {
    pub class: GestureClass,
    pub seed: u64,
    /// Stroke duration (s).
    pub duration: f64,
    pub sample_rate: f64,
    /// Hand centroid per sample (index 0, amplitude zero).
    pub centroid: Vec<ScattererState>,
    /// Scatterer states per sample.
    pub samples: Vec<Vec<ScattererState>>,
}

impl GestureTrajectory {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

pub const MIN_DURATION: f64 = 0.5;
pub const MAX_DURATION: f64 = 1.2;

/// Sharpened sinusoid: keeps the sign of `x ∈ [-1, 1]` but makes the zero
/// crossings brief.
fn sharp(x: f64) -> f64 {
    sharp_k(x, 4.0)
}

fn sharp_k(x: f64, k: f64) -> f64 {
    (k * x).tanh() / k.tanh()
}

/// Tukey taper with raised-cosine edges occupying `edge` of each end.
fn taper(s: f64, edge: f64) -> f64 {
    if !(0.0..=1.0).contains(&s) {
        0.0
    } else if s < edge {
        0.5 * (1.0 - (PI * s / edge).cos())
    } else if s > 1.0 - edge {
        0.5 * (1.0 - (PI * (1.0 - s) / edge).cos())
    } else {
        1.0
    }
}

/// Per-performance motion parameters drawn from the class ranges.
#[derive(Debug, Clone, Copy)]
struct Stroke {
    class: GestureClass,
    duration: f64,
    /// Peak radial speed (m/s).
    radial: f64,
    /// Peak lateral speed (m/s); circles use it as the tangential speed.
    lateral: f64,
}

impl Stroke {
    fn draw<R: Rng>(class: GestureClass, params: &TrajectoryParams, rng: &mut R) -> Self {
        use GestureClass::*;
        let (dur, radial, lateral) = match class {
            Push | Pull => ((0.55, 0.8), (0.65, 0.95), (0.0, 0.0)),
            WaveUp | WaveDown | WaveLeft | WaveRight => ((0.55, 0.8), (0.75, 1.0), (0.6, 0.9)),
            CircleClockwise | CircleAnticlockwise => ((0.8, 1.1), (0.6, 0.85), (0.10, 0.14)),
            DoubleClick => ((0.5, 0.65), (0.85, 1.1), (0.0, 0.0)),
            DoublePush => ((0.9, 1.15), (0.6, 0.85), (0.0, 0.0)),
        };
        let uniform = |rng: &mut R, (lo, hi): (f64, f64)| lo + (hi - lo) * rng.random::<f64>();
        let base_duration = uniform(rng, dur);
        let duration = (base_duration / params.speed).clamp(MIN_DURATION, MAX_DURATION);
        // Velocities scale so the displacement is the drawn one times `scale`,
        // even when the duration was clamped.
        let tempo = params.scale * base_duration / duration;
        let radial = uniform(rng, radial) * tempo;
        let lateral = if matches!(class, CircleClockwise | CircleAnticlockwise) {
            // Drawn value is the circle radius; one revolution per stroke.
            2.0 * PI * uniform(rng, lateral) * params.scale / duration
        } else {
            uniform(rng, lateral) * tempo
        };
        Stroke {
            class,
            duration,
            radial,
            lateral,
        }
    }

    /// Centroid velocity (m/s) at normalized stroke time `s`.
    fn velocity(&self, s: f64) -> [f64; 3] {
        use GestureClass::*;
        if !(0.0..=1.0).contains(&s) {
            return [0.0; 3];
        }
        let env = taper(s, 0.12);
        let r = self.radial;
        let l = self.lateral;
        // Waves bulge toward the radar: approach, then recede. The reversal
        // is quick so the lateral sweep's own radial component cannot hold
        // the hand below the trigger speed for long.
        let wave_radial = -r * env * sharp_k((PI * s).cos(), 10.0);
        match self.class {
            Push => [0.0, -r * env, 0.0],
            Pull => [0.0, r * env, 0.0],
            WaveLeft => [-l * env, wave_radial, 0.0],
            WaveRight => [l * env, wave_radial, 0.0],
            WaveUp => [0.0, wave_radial, l * env],
            WaveDown => [0.0, wave_radial, -l * env],
            CircleClockwise | CircleAnticlockwise => {
                let phase = 2.0 * PI * s;
                let orient = if self.class == CircleClockwise { 1.0 } else { -1.0 };
                [
                    orient * l * env * phase.cos(),
                    r * env * sharp(phase.sin()),
                    -l * env * phase.sin(),
                ]
            }
            DoubleClick => {
                // Two taps: a quick approach over 35% of each half, then a
                // slower return covering the same distance.
                let half = (2.0 * s).fract();
                let half = if s >= 1.0 { 1.0 } else { half };
                const TAP: f64 = 0.35;
                let v = if half < TAP {
                    -r * sharp((PI * half / TAP).sin())
                } else {
                    r * (TAP / (1.0 - TAP)) * sharp((PI * (half - TAP) / (1.0 - TAP)).sin())
                };
                [0.0, v * taper(s, 0.04), 0.0]
            }
            DoublePush => [0.0, -r * env * sharp((4.0 * PI * s).sin()), 0.0],
        }
    }
}

fn to_cartesian(range: f64, azimuth: f64, elevation: f64) -> [f64; 3] {
    [
        range * elevation.cos() * azimuth.sin(),
        range * elevation.cos() * azimuth.cos(),
        range * elevation.sin(),
    ]
}

/// Converts a Cartesian position/velocity pair into a scatterer state.
fn state_from(index: usize, pos: [f64; 3], vel: [f64; 3], amplitude: Complex64) -> ScattererState {
    let range = (pos[0] * pos[0] + pos[1] * pos[1] + pos[2] * pos[2]).sqrt();
    let velocity = (pos[0] * vel[0] + pos[1] * vel[1] + pos[2] * vel[2]) / range;
    ScattererState {
        index,
        range,
        azimuth: pos[0].atan2(pos[1]),
        elevation: (pos[2] / range).asin(),
        velocity,
        amplitude,
    }
}

/// Generates a deterministic trajectory for `class` from `seed`.
pub fn make_trajectory(class: GestureClass, seed: u64, params: &TrajectoryParams) -> Result<GestureTrajectory> {
    params.validate()?;
    let mut rng = rng_for(seed, 0x7261_6a65);
    let uniform = |rng: &mut rand_chacha::ChaCha8Rng, b: [f64; 2]| b[0] + (b[1] - b[0]) * rng.random::<f64>();

    let r0 = uniform(&mut rng, params.range);
    let az0 = uniform(&mut rng, params.azimuth_deg).to_radians();
    let el0 = uniform(&mut rng, params.elevation_deg).to_radians();
    let stroke = Stroke::draw(class, params, &mut rng);

    let n_scatterers = rng.random_range(params.scatterers[0]..=params.scatterers[1]);
    let mut offsets = Vec::with_capacity(n_scatterers);
    let mut base_amps = Vec::with_capacity(n_scatterers);
    for _ in 0..n_scatterers {
        let offset = loop {
            let o = [
                2.0 * rng.random::<f64>() - 1.0,
                2.0 * rng.random::<f64>() - 1.0,
                2.0 * rng.random::<f64>() - 1.0,
            ];
            if o.iter().map(|c| c * c).sum::<f64>() <= 1.0 {
                break o.map(|c| c * params.hand_radius);
            }
        };
        offsets.push(offset);
        let mag = params.amplitude * (1.0 + params.amplitude_spread * (2.0 * rng.random::<f64>() - 1.0));
        let phase = 2.0 * PI * rng.random::<f64>();
        base_amps.push(Complex64::from_polar(mag, phase));
    }

    let n_samples = ((stroke.duration * params.sample_rate) - 1e-9).ceil().max(1.0) as usize;
    const SUBSTEPS: usize = 64;
    let dt = 1.0 / (params.sample_rate * SUBSTEPS as f64);
    let mut pos = to_cartesian(r0, az0, el0);
    let mut t = 0.0;

    let mut centroid = Vec::with_capacity(n_samples);
    let mut samples = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        let vel = stroke.velocity(t / stroke.duration);
        centroid.push(state_from(0, pos, vel, Complex64::new(0.0, 0.0)));
        let states = offsets
            .iter()
            .zip(&base_amps)
            .enumerate()
            .map(|(p, (off, amp))| {
                let jitter_db = params.amplitude_jitter_db * (2.0 * rng.random::<f64>() - 1.0);
                let gain = 10f64.powf(jitter_db / 20.0);
                let sp = [pos[0] + off[0], pos[1] + off[1], pos[2] + off[2]];
                state_from(p, sp, vel, amp * gain)
            })
            .collect();
        samples.push(states);

        // Midpoint integration up to the next sample time.
        for _ in 0..SUBSTEPS {
            let v = stroke.velocity((t + 0.5 * dt) / stroke.duration);
            for (p, vc) in pos.iter_mut().zip(v) {
                *p += vc * dt;
            }
            t += dt;
        }
    }

    Ok(GestureTrajectory {
        class,
        seed,
        duration: stroke.duration,
        sample_rate: params.sample_rate,
        centroid,
        samples,
    })
}
