//! Sliding-window velocity trigger.
//!
//! A frame is active when its fastest point exceeds the velocity threshold.
//! Active frames separated by fewer than `hangover` inactive frames belong
//! to one burst. When a burst ends with more than `min_active_frames`
//! active frames, the buffered window centred on the burst midpoint is
//! queued for [`CaptureState::try_capture`].

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::config::RadarConfig;
use crate::dsp::PointCloud;
use crate::error::Result;
use crate::features::window::RawWindow;
use crate::features::{reduce_axis, AxisKind, FeatureAxes, FeatureParams};

/// Burst bookkeeping attached to a captured window. Positions count pushed
/// frames from 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriggerStats {
    pub burst_start: u64,
    pub burst_end: u64,
    pub active_frames: usize,
    pub peak_velocity: f64,
    /// Position of the first window frame (may precede the stream).
    pub window_start: i64,
}

#[derive(Debug, Clone)]
struct Slot {
    pos: u64,
    frame: u64,
    /// One column per [`AxisKind`], indexed by `AxisKind::index`.
    columns: [Vec<f64>; 4],
}

#[derive(Debug, Clone, Copy)]
struct Burst {
    start: u64,
    last_active: u64,
    active_frames: usize,
    peak: f64,
}

#[derive(Debug, Clone)]
pub struct CaptureState {
    params: FeatureParams,
    axes: FeatureAxes,
    buffer: VecDeque<Slot>,
    velocities: VecDeque<f64>,
    pos: u64,
    burst: Option<Burst>,
    inactive_run: usize,
    ready: VecDeque<RawWindow>,
}

impl CaptureState {
    pub fn new(cfg: &RadarConfig, params: &FeatureParams) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            params: params.clone(),
            axes: FeatureAxes::new(cfg, params.bins),
            buffer: VecDeque::with_capacity(params.window_frames + 1),
            velocities: VecDeque::with_capacity(params.window_frames + 1),
            pos: 0,
            burst: None,
            inactive_run: 0,
            ready: VecDeque::new(),
        })
    }

    pub fn params(&self) -> &FeatureParams {
        &self.params
    }

    pub fn axes(&self) -> &FeatureAxes {
        &self.axes
    }

    /// Frame ids currently buffered, oldest first.
    pub fn buffered_frames(&self) -> Vec<u64> {
        self.buffer.iter().map(|s| s.frame).collect()
    }

    /// Max |v| of the buffered frames, oldest first.
    pub fn velocity_history(&self) -> Vec<f64> {
        self.velocities.iter().copied().collect()
    }

    pub fn frames_pushed(&self) -> u64 {
        self.pos
    }

    pub fn in_burst(&self) -> bool {
        self.burst.is_some()
    }

    /// Length of the current burst's active count (0 outside a burst).
    pub fn active_run(&self) -> usize {
        self.burst.map_or(0, |b| b.active_frames)
    }

    pub fn inactive_run(&self) -> usize {
        self.inactive_run
    }

    /// Adds one frame; returns whether it was active.
    pub fn push_frame(&mut self, pc: &PointCloud) -> bool {
        let columns = AxisKind::ALL.map(|k| reduce_axis(pc, k, &self.axes).bins);
        let vmax = pc.max_abs_velocity();
        self.push_columns(pc.frame, columns, vmax)
    }

    fn push_columns(&mut self, frame: u64, columns: [Vec<f64>; 4], vmax: f64) -> bool {
        let pos = self.pos;
        self.pos += 1;
        self.buffer.push_back(Slot { pos, frame, columns });
        self.velocities.push_back(vmax);
        while self.buffer.len() > self.params.window_frames {
            self.buffer.pop_front();
            self.velocities.pop_front();
        }

        let active = vmax > self.params.velocity_threshold;
        if active {
            self.inactive_run = 0;
            let b = self.burst.get_or_insert(Burst {
                start: pos,
                last_active: pos,
                active_frames: 0,
                peak: 0.0,
            });
            b.last_active = pos;
            b.active_frames += 1;
            b.peak = b.peak.max(vmax);
        } else if let Some(b) = self.burst {
            self.inactive_run += 1;
            if self.inactive_run >= self.params.hangover {
                if b.active_frames > self.params.min_active_frames {
                    let w = self.cut(b);
                    self.ready.push_back(w);
                }
                self.burst = None;
                self.inactive_run = 0;
            }
        }
        active
    }

    fn cut(&self, b: Burst) -> RawWindow {
        let n = self.params.window_frames;
        let bins = self.params.bins;
        let len = b.last_active - b.start + 1;
        let center = (b.start + len / 2) as i64;
        let first = center - (n / 2) as i64;
        let mut data = vec![0.0; 4 * bins * n];
        let mut source = vec![None; n];
        for slot in &self.buffer {
            let t = slot.pos as i64 - first;
            if !(0..n as i64).contains(&t) {
                continue;
            }
            let t = t as usize;
            source[t] = Some(slot.frame);
            for (k, col) in slot.columns.iter().enumerate() {
                for (bin, &v) in col.iter().enumerate() {
                    data[(k * bins + bin) * n + t] = v;
                }
            }
        }
        RawWindow {
            bins,
            frames: n,
            data,
            source_frames: source,
            stats: TriggerStats {
                burst_start: b.start,
                burst_end: b.last_active,
                active_frames: b.active_frames,
                peak_velocity: b.peak,
                window_start: first,
            },
        }
    }

    /// Oldest captured window not yet taken.
    pub fn try_capture(&mut self) -> Option<RawWindow> {
        self.ready.pop_front()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::Point;
    use proptest::prelude::*;

    fn cloud(frame: u64, v: f64) -> PointCloud {
        PointCloud {
            frame,
            points: vec![Point {
                range: 1.0,
                velocity: v,
                azimuth: 0.0,
                elevation: 0.0,
                amplitude: 1.0,
            }],
        }
    }

    fn state() -> CaptureState {
        CaptureState::new(&RadarConfig::default(), &FeatureParams::default()).unwrap()
    }

    fn run(velocities: &[f64]) -> Vec<RawWindow> {
        let mut st = state();
        let mut out = Vec::new();
        for (i, &v) in velocities.iter().enumerate() {
            st.push_frame(&if v == 0.0 { PointCloud::empty(i as u64) } else { cloud(i as u64, v) });
            out.extend(st.try_capture());
        }
        out
    }

    #[test]
    fn ring_keeps_last_thirty() {
        let mut st = state();
        for f in 1..=31 {
            st.push_frame(&PointCloud::empty(f));
        }
        assert_eq!(st.buffered_frames(), (2..=31).collect::<Vec<_>>());
        assert_eq!(st.velocity_history().len(), 30);
    }

    #[test]
    fn threshold_is_strict() {
        let mut st = state();
        assert!(st.push_frame(&cloud(0, 0.31)));
        assert!(!st.push_frame(&cloud(1, 0.29)));
        assert!(!st.push_frame(&cloud(2, -0.3)));
        assert!(st.push_frame(&cloud(3, -0.31)));
        assert!(!st.push_frame(&PointCloud::empty(4)));
        assert_eq!(*st.velocity_history().last().unwrap(), 0.0);
    }

    #[test]
    fn inactive_stream_never_fires() {
        assert!(run(&[0.0; 30]).is_empty());
        assert!(run(&[0.2; 60]).is_empty());
    }

    #[test]
    fn ten_active_then_two_inactive_fires_once() {
        let mut seq = vec![0.5; 10];
        seq.extend([0.0, 0.0]);
        let mut st = state();
        for (i, &v) in seq.iter().enumerate() {
            st.push_frame(&if v == 0.0 { PointCloud::empty(i as u64) } else { cloud(i as u64, v) });
            if i < seq.len() - 1 {
                assert!(st.try_capture().is_none(), "early capture at {i}");
            }
        }
        let w = st.try_capture().expect("window after hangover");
        assert!(st.try_capture().is_none());
        assert_eq!(w.stats.active_frames, 10);
        assert_eq!((w.stats.burst_start, w.stats.burst_end), (0, 9));
        // Centre 0 + 10/2 = 5, so the window covers positions −10..20.
        assert_eq!(w.stats.window_start, -10);
        assert_eq!(w.source_frames[10], Some(0));
        assert_eq!(w.source_frames[21], Some(11));
        assert!(w.source_frames[..10].iter().all(Option::is_none));
        assert!(w.source_frames[22..].iter().all(Option::is_none));
        assert!(!st.in_burst());
    }

    #[test]
    fn short_bursts_are_ignored() {
        let mut seq = vec![0.5; 4];
        seq.extend([0.0; 5]);
        assert!(run(&seq).is_empty());
        let mut seq = vec![0.5; 5];
        seq.extend([0.0; 5]);
        assert!(run(&seq).is_empty());
        let mut seq = vec![0.5; 6];
        seq.extend([0.0; 5]);
        assert_eq!(run(&seq).len(), 1);
    }

    #[test]
    fn single_dip_does_not_split_a_burst() {
        let mut seq = vec![0.5; 4];
        seq.push(0.0);
        seq.extend([0.6; 4]);
        seq.extend([0.0; 3]);
        let w = run(&seq);
        assert_eq!(w.len(), 1);
        assert_eq!(w[0].stats.active_frames, 8);
        assert_eq!(w[0].stats.peak_velocity, 0.6);
    }

    #[test]
    fn window_columns_are_placed_by_time() {
        let mut seq = vec![0.0; 20];
        seq.extend([0.8; 8]);
        seq.extend([0.0; 2]);
        let w = run(&seq).pop().unwrap();
        // Burst 20..=27, centre 24, window 9..39; frame 20 sits at t = 11.
        assert_eq!(w.stats.window_start, 9);
        let dta = AxisKind::Doppler.index();
        let bin = FeatureAxes::new(&RadarConfig::default(), 64)
            .axis(AxisKind::Doppler)
            .bin_of(0.8);
        assert_eq!(w.get(dta, bin, 11), 1.0);
        assert_eq!(w.get(dta, bin, 10), 0.0);
        assert_eq!(w.get(dta, 32, 10), 0.0);
    }

    proptest! {
        #[test]
        fn decisions_depend_only_on_max_velocity(
            vs in prop::collection::vec(prop_oneof![Just(0.0), 0.0f64..0.6], 0..80),
            seed in any::<u64>(),
        ) {
            // Shuffled multi-point clouds with the same max |v| trigger identically.
            let mut a = state();
            let mut b = state();
            let mut rng = crate::rng::rng_for(seed, 0);
            for (i, &v) in vs.iter().enumerate() {
                let i = i as u64;
                let mut pc = cloud(i, v);
                for _ in 0..3 {
                    let slow: f64 = rand::Rng::random_range(&mut rng, 0.0..=v.abs());
                    pc.points.push(Point { velocity: -slow, ..pc.points[0] });
                }
                let mut shuffled = pc.clone();
                shuffled.points.reverse();
                prop_assert_eq!(a.push_frame(&pc), b.push_frame(&shuffled));
                let (wa, wb) = (a.try_capture(), b.try_capture());
                prop_assert_eq!(wa.map(|w| w.stats), wb.map(|w| w.stats));
            }
        }
    }
}
