//! Per-frame point clouds and their NDJSON encoding.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, FormatError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    /// Range (m).
    pub range: f64,
    /// Radial velocity (m/s), positive receding.
    pub velocity: f64,
    /// Azimuth (rad).
    pub azimuth: f64,
    /// Elevation (rad).
    pub elevation: f64,
    /// Scattering amplitude estimate (linear).
    pub amplitude: f64,
}

impl Point {
    pub fn direction_sines(&self) -> (f64, f64) {
        (self.azimuth.sin() * self.elevation.cos(), self.elevation.sin())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    pub frame: u64,
    pub points: Vec<Point>,
}

impl PointCloud {
    pub fn empty(frame: u64) -> Self {
        Self {
            frame,
            points: Vec::new(),
        }
    }

    /// Largest |v| over the points, 0 for an empty cloud.
    pub fn max_abs_velocity(&self) -> f64 {
        self.points.iter().map(|p| p.velocity.abs()).fold(0.0, f64::max)
    }

    pub fn to_ndjson_line(&self) -> String {
        serde_json::to_string(&CloudRecord::from(self)).expect("point cloud serializes")
    }

    pub fn from_ndjson_line(line: &str) -> Result<Self> {
        let rec: CloudRecord =
            serde_json::from_str(line).map_err(|e| FormatError::Header(format!("point cloud line: {e}")))?;
        Ok(rec.into())
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PointRecord {
    r: f64,
    v: f64,
    az_deg: f64,
    el_deg: f64,
    amp: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CloudRecord {
    frame: u64,
    points: Vec<PointRecord>,
}

impl From<&PointCloud> for CloudRecord {
    fn from(pc: &PointCloud) -> Self {
        Self {
            frame: pc.frame,
            points: pc
                .points
                .iter()
                .map(|p| PointRecord {
                    r: p.range,
                    v: p.velocity,
                    az_deg: p.azimuth.to_degrees(),
                    el_deg: p.elevation.to_degrees(),
                    amp: p.amplitude,
                })
                .collect(),
        }
    }
}

impl From<CloudRecord> for PointCloud {
    fn from(rec: CloudRecord) -> Self {
        Self {
            frame: rec.frame,
            points: rec
                .points
                .into_iter()
                .map(|p| Point {
                    range: p.r,
                    velocity: p.v,
                    azimuth: p.az_deg.to_radians(),
                    elevation: p.el_deg.to_radians(),
                    amplitude: p.amp,
                })
                .collect(),
        }
    }
}

pub fn write_ndjson<W: Write>(mut out: W, clouds: &[PointCloud]) -> Result<()> {
    for pc in clouds {
        writeln!(out, "{}", pc.to_ndjson_line()).map_err(|e| Error::io("point cloud stream", e))?;
    }
    Ok(())
}

pub fn read_ndjson<R: BufRead>(input: R) -> Result<Vec<PointCloud>> {
    let mut clouds = Vec::new();
    for line in input.lines() {
        let line = line.map_err(|e| Error::io("point cloud stream", e))?;
        if !line.trim().is_empty() {
            clouds.push(PointCloud::from_ndjson_line(&line)?);
        }
    }
    Ok(clouds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::RadarConfig;
    use crate::dsp::{CfarParams, Processor};
    use crate::rng::rng_for;
    use crate::sim::{synthesize_frame, FrameScene, ScattererState};
    use num_complex::Complex64;
    use rand::Rng;

    const SNR_AMP: f64 = 0.1;

    #[test]
    fn ndjson_round_trip() {
        let pc = PointCloud {
            frame: 7,
            points: vec![Point {
                range: 1.0,
                velocity: -0.5,
                azimuth: 0.1,
                elevation: -0.2,
                amplitude: 0.3,
            }],
        };
        let mut buf = Vec::new();
        write_ndjson(&mut buf, &[pc.clone(), PointCloud::empty(8)]).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("{\"frame\":7,\"points\":[{\"r\":1.0,\"v\":-0.5,\"az_deg\""));
        let back = read_ndjson(&buf[..]).unwrap();
        assert_eq!(back.len(), 2);
        let p = back[0].points[0];
        assert!((p.azimuth - 0.1).abs() < 1e-12 && (p.elevation + 0.2).abs() < 1e-12);
        assert!(PointCloud::from_ndjson_line("{\"frame\":1}").is_err());
    }

    fn dominant(pc: &PointCloud) -> Point {
        *pc.points
            .iter()
            .max_by(|a, b| a.amplitude.total_cmp(&b.amplitude))
            .unwrap()
    }

    /// Noise std giving 20 dB per-sample SNR for amplitude `SNR_AMP`.
    fn cfg_20db() -> RadarConfig {
        RadarConfig {
            noise_std: SNR_AMP / 10.0,
            ..Default::default()
        }
    }

    #[test]
    fn single_scatterer_recovered() {
        let cfg = cfg_20db();
        let p = Processor::new(&cfg).unwrap();
        let (az, el) = (10f64.to_radians(), (-5f64).to_radians());
        let s = ScattererState::new(1.0, az, el, 0.5, Complex64::new(SNR_AMP, 0.0));
        let cube = synthesize_frame(&FrameScene::Linear(vec![s]), 3, &cfg, 9).unwrap().cube;
        let pc = p.extract_point_cloud(&cube, &CfarParams::default()).unwrap();
        assert_eq!(pc.frame, 3);
        let d = dominant(&pc);
        let r_mid = 1.0 + 0.5 * 0.5 * cfg.frame_period();
        assert!((d.range - r_mid).abs() <= cfg.range_resolution() / 2.0);
        assert!((d.velocity - 0.5).abs() <= cfg.velocity_resolution() / 2.0);
        assert!((d.azimuth - az).to_degrees().abs() <= 3.0);
        assert!((d.elevation - el).to_degrees().abs() <= 3.0);
        // Calibrated amplitude sits near |Ã| (scalloping loss stays below 1.5 dB).
        assert!(d.amplitude > 0.08 && d.amplitude < 0.11, "{}", d.amplitude);
        // Everything else is sidelobe or noise well below the target.
        for q in &pc.points {
            if q != &d {
                assert!(q.amplitude < 0.2 * d.amplitude);
            }
        }
    }

    #[test]
    fn two_scatterers_three_bins_apart() {
        let cfg = cfg_20db();
        let p = Processor::new(&cfg).unwrap();
        let dr = cfg.range_resolution();
        let a = ScattererState::new(30.0 * dr, 0.0, 0.0, 0.0, Complex64::new(SNR_AMP, 0.0));
        let b = ScattererState::new(33.0 * dr, 0.0, 0.0, 0.0, Complex64::new(0.0, SNR_AMP));
        let cube = synthesize_frame(&FrameScene::Linear(vec![a, b]), 0, &cfg, 4).unwrap().cube;
        let pc = p.extract_point_cloud(&cube, &CfarParams::default()).unwrap();
        let mut strong: Vec<_> = pc.points.iter().filter(|q| q.amplitude > 0.05).collect();
        strong.sort_by(|x, y| x.range.total_cmp(&y.range));
        assert_eq!(strong.len(), 2, "{:?}", pc.points);
        assert!((strong[0].range - 30.0 * dr).abs() < 1e-9);
        assert!((strong[1].range - 33.0 * dr).abs() < 1e-9);
    }

    #[test]
    fn noise_only_frames_have_few_points() {
        let cfg = RadarConfig::default();
        let p = Processor::new(&cfg).unwrap();
        for f in 0..3 {
            let cube = synthesize_frame(&FrameScene::empty(), f, &cfg, 21).unwrap().cube;
            let pc = p.extract_point_cloud(&cube, &CfarParams::default()).unwrap();
            assert!(pc.points.len() <= 5, "{}", pc.points.len());
        }
    }

    #[test]
    fn random_scatterers_round_trip() {
        let cfg = cfg_20db();
        let p = Processor::new(&cfg).unwrap();
        let mut rng = rng_for(3, 3);
        let mut ok = 0;
        let trials = 12;
        for f in 0..trials {
            let r = rng.random_range(0.5..2.5);
            let v = rng.random_range(-1.4..1.4);
            let az = rng.random_range(-40f64..40.0).to_radians();
            let el = rng.random_range(-40f64..40.0).to_radians();
            let s = ScattererState::new(r, az, el, v, Complex64::from_polar(SNR_AMP, rng.random_range(0.0..std::f64::consts::TAU)));
            let cube = synthesize_frame(&FrameScene::Linear(vec![s]), f, &cfg, 77).unwrap().cube;
            let pc = p.extract_point_cloud(&cube, &CfarParams::default()).unwrap();
            let d = dominant(&pc);
            // The target moves during the frame; compare against mid-frame range.
            let r_mid = r + v * 0.5 * cfg.frame_period();
            if (d.range - r_mid).abs() <= 0.022
                && (d.velocity - v).abs() <= 0.025
                && (d.azimuth - az).to_degrees().abs() <= 3.0
                && (d.elevation - el).to_degrees().abs() <= 3.0
            {
                ok += 1;
            }
        }
        assert!(ok >= trials - 1, "{ok}/{trials}");
    }
}
