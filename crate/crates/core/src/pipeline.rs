//! Per-frame streaming chain: point cloud, trigger, normalized window.

use crate::config::RadarConfig;
use crate::dsp::{CfarParams, PointCloud, Processor};
use crate::error::Result;
use crate::features::{normalize, CaptureState, FeatureParams, FeatureWindow, TriggerStats};
use crate::sim::{GestureRenderer, GestureTrajectory, RenderOptions};

#[derive(Debug, Clone)]
pub struct FrameOutcome {
    pub cloud: PointCloud,
    pub active: bool,
    pub captured: Option<FeatureWindow>,
}

/// Stateful frame consumer for one radar stream.
#[derive(Debug)]
pub struct FrameProcessor {
    dsp: Processor,
    cfar: CfarParams,
    capture: CaptureState,
}

impl FrameProcessor {
    pub fn new(cfg: &RadarConfig, cfar: &CfarParams, features: &FeatureParams) -> Result<Self> {
        cfar.validate()?;
        Ok(Self {
            dsp: Processor::new(cfg)?,
            cfar: *cfar,
            capture: CaptureState::new(cfg, features)?,
        })
    }

    pub fn point_cloud(&self, cube: &crate::sim::FrameCube) -> Result<PointCloud> {
        self.dsp.extract_point_cloud(cube, &self.cfar)
    }

    /// Feeds an already extracted cloud to the trigger.
    pub fn push_cloud(&mut self, cloud: PointCloud) -> FrameOutcome {
        let active = self.capture.push_frame(&cloud);
        let captured = self
            .capture
            .try_capture()
            .map(|raw| normalize(&raw, self.capture.params()));
        FrameOutcome {
            cloud,
            active,
            captured,
        }
    }

    pub fn process(&mut self, cube: &crate::sim::FrameCube) -> Result<FrameOutcome> {
        let cloud = self.point_cloud(cube)?;
        Ok(self.push_cloud(cloud))
    }

    pub fn capture_state(&self) -> &CaptureState {
        &self.capture
    }
}

/// Result of rendering and processing one performance.
#[derive(Debug, Clone)]
pub struct Performance {
    pub windows: Vec<FeatureWindow>,
    pub frames: usize,
    pub active_frames: usize,
}

impl Performance {
    pub fn trigger_stats(&self) -> Vec<&TriggerStats> {
        self.windows.iter().filter_map(|w| w.meta.trigger.as_ref()).collect()
    }
}

/// Renders a trajectory and runs every frame through a fresh processor.
pub fn perform(
    traj: &GestureTrajectory,
    cfg: &RadarConfig,
    seed: u64,
    opts: &RenderOptions,
    cfar: &CfarParams,
    features: &FeatureParams,
) -> Result<Performance> {
    let renderer = GestureRenderer::new(traj, cfg, seed, opts)?;
    let mut fp = FrameProcessor::new(cfg, cfar, features)?;
    let mut windows = Vec::new();
    let mut active_frames = 0;
    for f in 0..renderer.frame_count() {
        let out = fp.process(&renderer.render_frame(f)?.cube)?;
        active_frames += out.active as usize;
        windows.extend(out.captured);
    }
    Ok(Performance {
        windows,
        frames: renderer.frame_count(),
        active_frames,
    })
}
