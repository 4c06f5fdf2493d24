//! Radar waveform, timing and array geometry.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Speed of light in vacuum (m/s).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// FMCW TDM-MIMO radar parameters.
///
/// Defaults describe a 60.5–64 GHz sweep at 20 frames/s with 256 chirps of
/// 256 samples per frame, shared round-robin between 4 transmitters, and 4
/// receivers. TX elements are stacked along elevation and RX elements along
/// azimuth, forming a 4×4 uniform rectangular virtual array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RadarConfig {
    /// Sweep start frequency (Hz).
    pub f_start: f64,
    /// Sweep stop frequency (Hz).
    pub f_stop: f64,
    /// Frames per second.
    pub frame_rate: f64,
    /// Chirps per frame, counted across all transmitters.
    pub chirps_per_frame: usize,
    pub samples_per_chirp: usize,
    pub n_tx: usize,
    pub n_rx: usize,
    /// Sampled portion of each chirp (s).
    pub active_chirp_time: f64,
    /// TX element spacing along elevation, in wavelengths.
    pub tx_spacing: f64,
    /// RX element spacing along azimuth, in wavelengths.
    pub rx_spacing: f64,
    /// RMS magnitude of the complex receiver noise, E|n|² = noise_std².
    pub noise_std: f64,
}

impl Default for RadarConfig {
    fn default() -> Self {
        Self {
            f_start: 60.5e9,
            f_stop: 64.0e9,
            frame_rate: 20.0,
            chirps_per_frame: 256,
            samples_per_chirp: 256,
            n_tx: 4,
            n_rx: 4,
            active_chirp_time: 160e-6,
            tx_spacing: 0.5,
            rx_spacing: 0.5,
            noise_std: 0.01,
        }
    }
}

impl RadarConfig {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.f_start,
            self.f_stop,
            self.frame_rate,
            self.active_chirp_time,
            self.tx_spacing,
            self.rx_spacing,
            self.noise_std,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(Error::config("radar parameters must be finite"));
        }
        if self.f_start <= 0.0 || self.f_stop <= self.f_start {
            return Err(Error::config("radar: need 0 < f_start < f_stop"));
        }
        if self.frame_rate <= 0.0 {
            return Err(Error::config("radar: frame_rate must be positive"));
        }
        if self.chirps_per_frame == 0
            || self.samples_per_chirp == 0
            || self.n_tx == 0
            || self.n_rx == 0
        {
            return Err(Error::config("radar: all counts must be at least 1"));
        }
        if !self.chirps_per_frame.is_multiple_of(self.n_tx) {
            return Err(Error::config(format!(
                "radar: chirps_per_frame ({}) must be divisible by n_tx ({})",
                self.chirps_per_frame, self.n_tx
            )));
        }
        if self.active_chirp_time <= 0.0 || self.active_chirp_time >= self.chirp_slot() {
            return Err(Error::config(format!(
                "radar: active_chirp_time must lie in (0, {:.6e}) s",
                self.chirp_slot()
            )));
        }
        if self.tx_spacing <= 0.0 || self.rx_spacing <= 0.0 {
            return Err(Error::config("radar: element spacings must be positive"));
        }
        if self.noise_std < 0.0 {
            return Err(Error::config("radar: noise_std must be non-negative"));
        }
        Ok(())
    }

    pub fn bandwidth(&self) -> f64 {
        self.f_stop - self.f_start
    }

    pub fn center_frequency(&self) -> f64 {
        0.5 * (self.f_start + self.f_stop)
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.center_frequency()
    }

    /// Time between consecutive chirps of any transmitter (s).
    pub fn chirp_slot(&self) -> f64 {
        1.0 / (self.frame_rate * self.chirps_per_frame as f64)
    }

    /// Slow-time sampling interval seen by one transmitter (s).
    pub fn tx_period(&self) -> f64 {
        self.n_tx as f64 * self.chirp_slot()
    }

    pub fn chirps_per_tx(&self) -> usize {
        self.chirps_per_frame / self.n_tx
    }

    pub fn n_virtual(&self) -> usize {
        self.n_tx * self.n_rx
    }

    /// Chirp slope (Hz/s).
    pub fn slope(&self) -> f64 {
        self.bandwidth() / self.active_chirp_time
    }

    /// Complex baseband sample rate (Hz).
    pub fn sample_rate(&self) -> f64 {
        self.samples_per_chirp as f64 / self.active_chirp_time
    }

    pub fn range_resolution(&self) -> f64 {
        SPEED_OF_LIGHT / (2.0 * self.bandwidth())
    }

    /// Largest unaliased range with complex sampling (m).
    pub fn max_range(&self) -> f64 {
        self.sample_rate() * SPEED_OF_LIGHT / (2.0 * self.slope())
    }

    /// Doppler frequency spacing of one per-TX Doppler bin (Hz).
    pub fn doppler_bin_hz(&self) -> f64 {
        1.0 / (self.chirps_per_tx() as f64 * self.tx_period())
    }

    pub fn velocity_resolution(&self) -> f64 {
        self.wavelength() * self.doppler_bin_hz() / 2.0
    }

    /// Unambiguous radial velocity (m/s); the Doppler axis spans ±this value.
    pub fn max_velocity(&self) -> f64 {
        self.wavelength() / (4.0 * self.tx_period())
    }

    /// Radial velocity to Doppler frequency (Hz).
    pub fn doppler_frequency(&self, velocity: f64) -> f64 {
        2.0 * velocity / self.wavelength()
    }

    pub fn frame_period(&self) -> f64 {
        1.0 / self.frame_rate
    }

    /// Short stable fingerprint of the configuration (hex SHA-256 prefix of
    /// its canonical JSON encoding).
    pub fn config_hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        let digest = Sha256::digest(&json);
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}
