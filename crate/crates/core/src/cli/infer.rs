//! Streaming classification.
//!
//! Three stages connected by bounded channels, so a slow consumer throttles
//! the source:
//!
//! ```text
//! source (read / synthesize) ─▶ dsp (point cloud) ─▶ features + predict + output
//! ```
//!
//! Channels are FIFO and each stage is a single thread, so output order is
//! frame order.

use std::io::Write;
use std::path::PathBuf;
use std::sync::mpsc::{sync_channel, Receiver, SyncSender};
use std::time::{Duration, Instant};

use serde_json::json;

use crate::cnn::{Classifier, CnnModel};
use crate::config::RadarConfig;
use crate::dsp::{CfarParams, PointCloud, Processor};
use crate::error::{Error, FormatError, Result};
use crate::features::{normalize, CaptureState, FeatureParams};
use crate::sim::rawfile::open_raw_file;
use crate::sim::{synthesize_frame, FrameCube, FrameScene, GestureRenderer, GestureTrajectory, RenderOptions};

const QUEUE_DEPTH: usize = 4;

pub enum FrameSource {
    File(PathBuf),
    Gesture {
        trajectory: GestureTrajectory,
        radar: RadarConfig,
        opts: RenderOptions,
        seed: u64,
    },
    Idle {
        frames: usize,
        radar: RadarConfig,
        opts: RenderOptions,
        seed: u64,
    },
}

#[derive(Debug, Clone)]
pub struct InferOptions {
    pub cfar: CfarParams,
    pub features: FeatureParams,
    pub realtime: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InferSummary {
    pub frames: usize,
    /// (frame index, predicted class) per captured window.
    pub classifications: Vec<(u64, usize)>,
    pub mean_latency_ms: f64,
    pub max_latency_ms: f64,
}

type CubeIter = Box<dyn Iterator<Item = Result<FrameCube>> + Send>;

/// Opens the source and returns its radar configuration with a frame iterator.
fn open(source: FrameSource) -> Result<(RadarConfig, CubeIter)> {
    match source {
        FrameSource::File(path) => {
            let mut reader = open_raw_file(&path)?;
            let radar = reader.meta().config.clone();
            let mut done = false;
            let iter = std::iter::from_fn(move || {
                if done {
                    return None;
                }
                match reader.next_frame() {
                    Ok(Some(cube)) => Some(Ok(cube)),
                    Ok(None) => {
                        done = true;
                        reader.expect_end().err().map(Err)
                    }
                    Err(e) => {
                        done = true;
                        Some(Err(e))
                    }
                }
            });
            Ok((radar, Box::new(iter)))
        }
        FrameSource::Gesture {
            trajectory,
            radar,
            opts,
            seed,
        } => {
            let n = GestureRenderer::new(&trajectory, &radar, seed, &opts)?.frame_count();
            let r = radar.clone();
            let iter = (0..n).map(move |f| {
                GestureRenderer::new(&trajectory, &r, seed, &opts)?
                    .render_frame(f)
                    .map(|rf| rf.cube)
            });
            Ok((radar, Box::new(iter)))
        }
        FrameSource::Idle {
            frames,
            radar,
            opts,
            seed,
        } => {
            radar.validate()?;
            let r = radar.clone();
            let iter = (0..frames).map(move |f| {
                let scene = FrameScene::Linear(opts.clutter.clone());
                synthesize_frame(&scene, f as u64, &r, seed).map(|rf| rf.cube)
            });
            Ok((radar, Box::new(iter)))
        }
    }
}

fn source_stage(frames: CubeIter, period: Option<Duration>, tx: SyncSender<Result<FrameCube>>) {
    let start = Instant::now();
    for (i, item) in frames.enumerate() {
        if let Some(p) = period {
            let due = start + p * i as u32;
            if let Some(wait) = due.checked_duration_since(Instant::now()) {
                std::thread::sleep(wait);
            }
        }
        let stop = item.is_err();
        if tx.send(item).is_err() || stop {
            return;
        }
    }
}

fn dsp_stage(
    dsp: Processor,
    cfar: CfarParams,
    rx: Receiver<Result<FrameCube>>,
    tx: SyncSender<Result<(PointCloud, Duration)>>,
) {
    for item in rx {
        let out = item.and_then(|cube| {
            let t0 = Instant::now();
            let pc = dsp.extract_point_cloud(&cube, &cfar)?;
            Ok((pc, t0.elapsed()))
        });
        let stop = out.is_err();
        if tx.send(out).is_err() || stop {
            return;
        }
    }
}

fn emit<W: Write>(out: &mut W, v: serde_json::Value) -> Result<()> {
    writeln!(out, "{v}").map_err(|e| Error::io("output", e))
}

/// Runs the staged chain, writing NDJSON heartbeat and classification lines
/// followed by one summary line.
pub fn run_infer<W: Write>(model: &CnnModel, source: FrameSource, opts: &InferOptions, out: &mut W) -> Result<InferSummary> {
    let f = &opts.features;
    let expected = [f.channels.len(), f.bins, f.window_frames];
    if model.arch.input != expected {
        return Err(FormatError::ArchitectureMismatch(format!(
            "model input {:?}, feature settings produce {expected:?}",
            model.arch.input
        ))
        .into());
    }
    opts.cfar.validate()?;
    let (radar, frames) = open(source)?;
    let dsp = Processor::new(&radar)?;
    let mut capture = CaptureState::new(&radar, f)?;
    let period = opts.realtime.then(|| Duration::from_secs_f64(radar.frame_period()));

    std::thread::scope(|scope| {
        let (cube_tx, cube_rx) = sync_channel(QUEUE_DEPTH);
        let (pc_tx, pc_rx) = sync_channel(QUEUE_DEPTH);
        scope.spawn(move || source_stage(frames, period, cube_tx));
        let cfar = opts.cfar;
        scope.spawn(move || dsp_stage(dsp, cfar, cube_rx, pc_tx));

        let mut summary = InferSummary {
            frames: 0,
            classifications: Vec::new(),
            mean_latency_ms: 0.0,
            max_latency_ms: 0.0,
        };
        let mut total_ms = 0.0;
        for item in pc_rx {
            let (cloud, dsp_time) = item?;
            let t0 = Instant::now();
            let active = capture.push_frame(&cloud);
            let window = capture.try_capture().map(|raw| normalize(&raw, f));
            let latency_ms = (dsp_time + t0.elapsed()).as_secs_f64() * 1e3;
            let t = cloud.frame as f64 * radar.frame_period();
            emit(
                out,
                json!({
                    "type": "heartbeat",
                    "frame": cloud.frame,
                    "t": t,
                    "points": cloud.points.len(),
                    "active": active,
                    "latency_ms": latency_ms,
                }),
            )?;
            if let Some(w) = window {
                let p = model.predict(&w.to_f64())?;
                let class = crate::sim::GestureClass::from_index(p.class).map(|c| c.name().to_string());
                emit(
                    out,
                    json!({
                        "type": "classification",
                        "frame": cloud.frame,
                        "t": t,
                        "class": class,
                        "class_index": p.class,
                        "probs": p.probs,
                        "trigger_stats": w.meta.trigger,
                    }),
                )?;
                summary.classifications.push((cloud.frame, p.class));
            }
            summary.frames += 1;
            total_ms += latency_ms;
            summary.max_latency_ms = summary.max_latency_ms.max(latency_ms);
        }
        if summary.frames > 0 {
            summary.mean_latency_ms = total_ms / summary.frames as f64;
        }
        emit(
            out,
            json!({
                "type": "summary",
                "frames": summary.frames,
                "windows": summary.classifications.len(),
                "mean_latency_ms": summary.mean_latency_ms,
                "max_latency_ms": summary.max_latency_ms,
            }),
        )?;
        Ok(summary)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cnn::ArchSpec;
    use crate::sim::{make_trajectory, GestureClass, TrajectoryParams};

    fn opts() -> InferOptions {
        InferOptions {
            cfar: CfarParams::default(),
            features: FeatureParams::default(),
            realtime: false,
        }
    }

    fn lines(buf: &[u8]) -> Vec<serde_json::Value> {
        std::str::from_utf8(buf)
            .unwrap()
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect()
    }

    #[test]
    fn idle_source_only_heartbeats() {
        let model = CnnModel::zeros(ArchSpec::default()).unwrap();
        let src = FrameSource::Idle {
            frames: 12,
            radar: RadarConfig::default(),
            opts: RenderOptions::default(),
            seed: 1,
        };
        let mut buf = Vec::new();
        let s = run_infer(&model, src, &opts(), &mut buf).unwrap();
        assert_eq!(s.frames, 12);
        assert!(s.classifications.is_empty());
        let v = lines(&buf);
        assert_eq!(v.len(), 13);
        for (i, h) in v[..12].iter().enumerate() {
            assert_eq!(h["type"], "heartbeat");
            assert_eq!(h["frame"], i as u64);
            assert!(h["latency_ms"].as_f64().unwrap() > 0.0);
        }
        assert_eq!(v[12]["type"], "summary");
    }

    #[test]
    fn gesture_source_yields_one_classification() {
        let model = CnnModel::new(ArchSpec::default(), 2).unwrap();
        let traj = make_trajectory(GestureClass::Pull, 3, &TrajectoryParams::default()).unwrap();
        let src = FrameSource::Gesture {
            trajectory: traj,
            radar: RadarConfig::default(),
            opts: RenderOptions::default(),
            seed: 4,
        };
        let mut buf = Vec::new();
        let s = run_infer(&model, src, &opts(), &mut buf).unwrap();
        assert_eq!(s.classifications.len(), 1);
        let v = lines(&buf);
        let frames: Vec<u64> = v.iter().filter(|l| l["type"] == "heartbeat").map(|l| l["frame"].as_u64().unwrap()).collect();
        assert_eq!(frames, (0..s.frames as u64).collect::<Vec<_>>());
        let c = v.iter().find(|l| l["type"] == "classification").unwrap();
        assert_eq!(c["probs"].as_array().unwrap().len(), 10);
        assert!(c["trigger_stats"]["active_frames"].as_u64().unwrap() > 5);
    }

    #[test]
    fn architecture_mismatch() {
        let model = CnnModel::zeros(ArchSpec::with_input([4, 64, 30])).unwrap();
        let src = FrameSource::Idle {
            frames: 1,
            radar: RadarConfig::default(),
            opts: RenderOptions::default(),
            seed: 1,
        };
        let r = run_infer(&model, src, &opts(), &mut Vec::new());
        assert!(matches!(r, Err(Error::Format(FormatError::ArchitectureMismatch(_)))));
    }
}
