//! Labeled synthetic datasets: generation, manifests, splits, evaluation.
//!
//! A dataset is a directory holding `manifest.json` and one sample file per
//! captured window under `samples/`. Synthetic users are trajectory-parameter
//! distributions and scenes are (noise, static clutter) profiles; together
//! they give the (scene × user) grid that evaluation reports are keyed by.

pub mod eval;
pub mod sample;

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use num_complex::Complex64;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::cnn::Labeled;
use crate::config::RadarConfig;
use crate::dsp::CfarParams;
use crate::error::{Error, FormatError, Result};
use crate::features::FeatureParams;
use crate::pipeline::perform;
use crate::rng::{mix_seed, rng_for};
use crate::sim::{make_trajectory, GestureClass, RenderOptions, ScattererState, TrajectoryParams};

pub use eval::{
    evaluate, leave_one_user_out, load_eval_samples, ClassStat, EvalReport, EvalSample, GroupKey, GroupStat,
    LouoOutcome, SampleOutcome,
};
pub use sample::{decode_sample, encode_sample, load_sample, save_sample, Sample, SampleHeader};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const SAMPLES_DIR: &str = "samples";
pub const MANIFEST_VERSION: u32 = 1;

/// A synthetic performer: multipliers and offsets applied to the base
/// trajectory randomization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserProfile {
    pub id: String,
    pub scale: f64,
    pub speed: f64,
    /// Shift of the start-range bounds (m).
    pub range_bias: f64,
    pub azimuth_bias_deg: f64,
    pub elevation_bias_deg: f64,
    /// Multiplier on the mean scatterer magnitude.
    pub amplitude: f64,
    pub amplitude_spread: f64,
}

impl UserProfile {
    pub fn validate(&self) -> Result<()> {
        if self.id.is_empty() {
            return Err(Error::config("user profile id must not be empty"));
        }
        if !(self.scale > 0.0 && self.speed > 0.0 && self.amplitude > 0.0) {
            return Err(Error::config(format!("user {}: multipliers must be positive", self.id)));
        }
        Ok(())
    }

    pub fn apply(&self, base: &TrajectoryParams) -> TrajectoryParams {
        let shift = |b: [f64; 2], d: f64| [b[0] + d, b[1] + d];
        TrajectoryParams {
            range: shift(base.range, self.range_bias),
            azimuth_deg: shift(base.azimuth_deg, self.azimuth_bias_deg),
            elevation_deg: shift(base.elevation_deg, self.elevation_bias_deg),
            scale: base.scale * self.scale,
            speed: base.speed * self.speed,
            amplitude: base.amplitude * self.amplitude,
            amplitude_spread: self.amplitude_spread,
            ..base.clone()
        }
    }

    /// Users B, C, D (training) and E (held out).
    pub fn defaults() -> Vec<UserProfile> {
        let u = |id: &str, scale, speed, range_bias, az, el, amplitude, amplitude_spread| UserProfile {
            id: id.into(),
            scale,
            speed,
            range_bias,
            azimuth_bias_deg: az,
            elevation_bias_deg: el,
            amplitude,
            amplitude_spread,
        };
        vec![
            u("B", 1.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.3),
            u("C", 1.15, 0.9, 0.1, -5.0, 3.0, 1.2, 0.25),
            u("D", 0.9, 1.1, -0.1, 5.0, -3.0, 0.9, 0.35),
            u("E", 1.05, 0.95, 0.05, 3.0, 4.0, 1.1, 0.3),
        ]
    }
}

/// Static reflector in a scene.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClutterPoint {
    pub range: f64,
    pub azimuth_deg: f64,
    pub elevation_deg: f64,
    pub amplitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneProfile {
    pub id: String,
    pub noise_std: f64,
    pub clutter: Vec<ClutterPoint>,
}

impl SceneProfile {
    pub fn validate(&self) -> Result<()> {
        if self.id.is_empty() {
            return Err(Error::config("scene profile id must not be empty"));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(Error::config(format!("scene {}: noise_std must be non-negative", self.id)));
        }
        for c in &self.clutter {
            let s = self.clutter_state(c);
            s.validate().map_err(|e| Error::config(format!("scene {}: {e}", self.id)))?;
        }
        Ok(())
    }

    fn clutter_state(&self, c: &ClutterPoint) -> ScattererState {
        ScattererState::new(
            c.range,
            c.azimuth_deg.to_radians(),
            c.elevation_deg.to_radians(),
            0.0,
            Complex64::new(c.amplitude, 0.0),
        )
    }

    pub fn render_options(&self) -> RenderOptions {
        RenderOptions {
            clutter: self
                .clutter
                .iter()
                .enumerate()
                .map(|(i, c)| ScattererState {
                    index: i,
                    ..self.clutter_state(c)
                })
                .collect(),
            ..RenderOptions::default()
        }
    }

    pub fn radar(&self, base: &RadarConfig) -> RadarConfig {
        RadarConfig {
            noise_std: self.noise_std,
            ..base.clone()
        }
    }

    pub fn defaults() -> Vec<SceneProfile> {
        let c = |range, azimuth_deg, elevation_deg, amplitude| ClutterPoint {
            range,
            azimuth_deg,
            elevation_deg,
            amplitude,
        };
        vec![
            SceneProfile {
                id: "living-room".into(),
                noise_std: 0.01,
                clutter: vec![c(1.9, -25.0, -10.0, 0.03), c(2.4, 20.0, 5.0, 0.02)],
            },
            SceneProfile {
                id: "conference-room".into(),
                noise_std: 0.015,
                clutter: vec![c(1.7, 30.0, -5.0, 0.025), c(2.2, -15.0, 15.0, 0.03), c(2.6, 5.0, -20.0, 0.02)],
            },
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSpec {
    /// Class names; any spelling accepted by [`GestureClass`]'s parser.
    pub classes: Vec<String>,
    /// Samples per class, dealt round-robin over the (user, scene) grid.
    pub per_class: usize,
    pub users: Vec<UserProfile>,
    pub scenes: Vec<SceneProfile>,
    /// Regeneration attempts after the first when the trigger does not
    /// produce exactly one window.
    pub max_retries: usize,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            classes: GestureClass::ALL.iter().map(|c| c.name().to_string()).collect(),
            per_class: 60,
            users: UserProfile::defaults(),
            scenes: SceneProfile::defaults(),
            max_retries: 10,
        }
    }
}

impl DatasetSpec {
    pub fn parsed_classes(&self) -> Result<Vec<GestureClass>> {
        let classes = self
            .classes
            .iter()
            .map(|s| s.parse::<GestureClass>())
            .collect::<Result<Vec<_>>>()?;
        if classes.is_empty() {
            return Err(Error::config("dataset: at least one class is required"));
        }
        if classes.iter().collect::<BTreeSet<_>>().len() != classes.len() {
            return Err(Error::config("dataset: duplicate class"));
        }
        Ok(classes)
    }

    pub fn validate(&self) -> Result<()> {
        self.parsed_classes()?;
        if self.per_class == 0 {
            return Err(Error::config("dataset: per_class must be at least 1"));
        }
        if self.users.is_empty() || self.scenes.is_empty() {
            return Err(Error::config("dataset: need at least one user and one scene"));
        }
        self.users.iter().try_for_each(UserProfile::validate)?;
        self.scenes.iter().try_for_each(SceneProfile::validate)?;
        let unique = |ids: Vec<&str>| ids.iter().collect::<BTreeSet<_>>().len() == ids.len();
        if !unique(self.users.iter().map(|u| u.id.as_str()).collect())
            || !unique(self.scenes.iter().map(|s| s.id.as_str()).collect())
        {
            return Err(Error::config("dataset: user and scene ids must be unique"));
        }
        Ok(())
    }
}

/// Everything that determines a dataset besides its seed.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerationConfig {
    pub dataset: DatasetSpec,
    pub radar: RadarConfig,
    pub cfar: CfarParams,
    pub features: FeatureParams,
    pub trajectory: TrajectoryParams,
}

impl GenerationConfig {
    pub fn validate(&self) -> Result<()> {
        self.dataset.validate()?;
        self.radar.validate()?;
        self.cfar.validate()?;
        self.features.validate()?;
        self.trajectory.validate()?;
        for u in &self.dataset.users {
            u.apply(&self.trajectory)
                .validate()
                .map_err(|e| Error::config(format!("user {}: {e}", u.id)))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleRecord {
    pub id: String,
    pub label: GestureClass,
    pub user: String,
    pub scene: String,
    /// Base seed of the sample; attempt `a > 0` uses `mix_seed(seed, a)`.
    pub seed: u64,
    pub attempts: usize,
    /// Path relative to the dataset directory.
    pub file: String,
    /// Fingerprint of the effective radar configuration.
    pub config_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub version: u32,
    pub seed: u64,
    pub config: GenerationConfig,
    /// Total attempts beyond the first, over all samples.
    pub regenerations: usize,
    pub samples: Vec<SampleRecord>,
}

impl DatasetManifest {
    pub fn save(&self, dir: &Path) -> Result<()> {
        let path = dir.join(MANIFEST_FILE);
        let mut json = serde_json::to_vec_pretty(self).expect("manifest serializes");
        json.push(b'\n');
        std::fs::write(&path, json).map_err(|e| Error::io(path.display(), e))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let bytes = std::fs::read(&path).map_err(|e| Error::io(path.display(), e))?;
        let m: Self =
            serde_json::from_slice(&bytes).map_err(|e| FormatError::Header(format!("{}: {e}", path.display())))?;
        if m.version != MANIFEST_VERSION {
            return Err(FormatError::UnsupportedVersion(m.version).into());
        }
        Ok(m)
    }

    pub fn path_of(&self, dir: &Path, record: &SampleRecord) -> PathBuf {
        dir.join(&record.file)
    }

    pub fn record(&self, id: &str) -> Option<&SampleRecord> {
        self.samples.iter().find(|r| r.id == id)
    }

    /// Checks id uniqueness and that every file loads and agrees with its
    /// record.
    pub fn verify(&self, dir: &Path) -> Result<()> {
        let mut seen = BTreeSet::new();
        for r in &self.samples {
            if !seen.insert(r.id.as_str()) {
                return Err(Error::invalid(format!("duplicate sample id {}", r.id)));
            }
            let s = load_sample(&self.path_of(dir, r))?;
            let h = &s.header;
            if h.id != r.id || h.label != r.label || h.user != r.user || h.scene != r.scene {
                return Err(FormatError::Header(format!("sample file {} disagrees with manifest", r.file)).into());
            }
        }
        Ok(())
    }

    /// Loads the given ids as training pairs (label = class index).
    pub fn load_labeled(&self, dir: &Path, ids: &[String]) -> Result<Vec<Labeled>> {
        ids.iter()
            .map(|id| {
                let r = self
                    .record(id)
                    .ok_or_else(|| Error::invalid(format!("unknown sample id {id}")))?;
                let s = load_sample(&self.path_of(dir, r))?;
                Ok(Labeled {
                    input: s.window.to_f64(),
                    label: r.label.index(),
                })
            })
            .collect()
    }
}

/// (user, scene) assignment of the `k`-th sample of a class.
fn combo(k: usize, n_users: usize, n_scenes: usize) -> (usize, usize) {
    (k % n_users, (k / n_users) % n_scenes)
}

pub fn sample_seed(seed: u64, class: GestureClass, k: usize) -> u64 {
    mix_seed(mix_seed(seed, class.index() as u64), k as u64)
}

pub fn attempt_seed(base: u64, attempt: usize) -> u64 {
    if attempt == 0 {
        base
    } else {
        mix_seed(base, attempt as u64)
    }
}

struct Job {
    class: GestureClass,
    k: usize,
    user: usize,
    scene: usize,
}

/// Runs the full pipeline for one job, retrying until exactly one window is
/// captured.
fn generate_one(cfg: &GenerationConfig, seed: u64, job: &Job, dir: &Path) -> Result<SampleRecord> {
    let spec = &cfg.dataset;
    let user = &spec.users[job.user];
    let scene = &spec.scenes[job.scene];
    let traj_params = user.apply(&cfg.trajectory);
    let radar = scene.radar(&cfg.radar);
    let opts = scene.render_options();
    let base = sample_seed(seed, job.class, job.k);
    let id = format!("{}-{:03}", job.class.slug(), job.k);
    for attempt in 0..=spec.max_retries {
        let s = attempt_seed(base, attempt);
        let traj = make_trajectory(job.class, s, &traj_params)?;
        let mut perf = perform(&traj, &radar, mix_seed(s, 1), &opts, &cfg.cfar, &cfg.features)?;
        if perf.windows.len() != 1 {
            continue;
        }
        let mut window = perf.windows.remove(0);
        window.meta.label = Some(job.class);
        let file = format!("{SAMPLES_DIR}/{id}.qgfw");
        let sample = Sample::new(id.clone(), job.class, user.id.clone(), scene.id.clone(), s, window);
        save_sample(&dir.join(&file), &sample)?;
        return Ok(SampleRecord {
            id,
            label: job.class,
            user: user.id.clone(),
            scene: scene.id.clone(),
            seed: base,
            attempts: attempt + 1,
            file,
            config_hash: radar.config_hash(),
        });
    }
    Err(Error::Generation {
        class: job.class.name().to_string(),
        user: user.id.clone(),
        scene: scene.id.clone(),
        attempts: spec.max_retries + 1,
    })
}

/// Generates every sample of `cfg` into `dir` and writes the manifest.
///
/// Samples are independent, so they are spread over the available cores;
/// records are assembled in job order regardless.
pub fn generate_dataset(cfg: &GenerationConfig, seed: u64, dir: &Path) -> Result<DatasetManifest> {
    cfg.validate()?;
    let spec = &cfg.dataset;
    let classes = spec.parsed_classes()?;
    let jobs: Vec<Job> = classes
        .iter()
        .flat_map(|&class| {
            (0..spec.per_class).map(move |k| {
                let (user, scene) = combo(k, spec.users.len(), spec.scenes.len());
                Job { class, k, user, scene }
            })
        })
        .collect();
    let samples_dir = dir.join(SAMPLES_DIR);
    std::fs::create_dir_all(&samples_dir).map_err(|e| Error::io(samples_dir.display(), e))?;

    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(jobs.len());
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<SampleRecord>>>> = Mutex::new((0..jobs.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= jobs.len() {
                    break;
                }
                let r = generate_one(cfg, seed, &jobs[i], dir);
                let failed = r.is_err();
                results.lock().unwrap()[i] = Some(r);
                if failed {
                    // Let the other workers drain quickly.
                    next.store(jobs.len(), Ordering::Relaxed);
                }
            });
        }
    });
    let mut samples = Vec::with_capacity(jobs.len());
    for r in results.into_inner().unwrap().into_iter().flatten() {
        samples.push(r?);
    }
    if samples.len() != jobs.len() {
        return Err(Error::invalid("dataset generation stopped early"));
    }
    let manifest = DatasetManifest {
        version: MANIFEST_VERSION,
        seed,
        config: cfg.clone(),
        regenerations: samples.iter().map(|s| s.attempts - 1).sum(),
        samples,
    };
    manifest.save(dir)?;
    Ok(manifest)
}

/// Disjoint training and validation id lists.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<String>,
    pub val: Vec<String>,
}

/// Per-class seeded shuffle, then the first `floor(n · train_fraction)` ids of
/// each class go to training.
pub fn split(records: &[SampleRecord], train_fraction: f64, seed: u64) -> Result<Split> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::config("split: train fraction must lie in (0, 1)"));
    }
    let mut by_class: BTreeMap<GestureClass, Vec<&str>> = BTreeMap::new();
    for r in records {
        by_class.entry(r.label).or_default().push(&r.id);
    }
    if by_class.is_empty() {
        return Err(Error::invalid("split: no samples"));
    }
    let mut out = Split {
        train: Vec::new(),
        val: Vec::new(),
    };
    for (class, mut ids) in by_class {
        if ids.len() < 2 {
            return Err(Error::invalid(format!("split: class {class} has fewer than 2 samples")));
        }
        ids.sort_unstable();
        ids.shuffle(&mut rng_for(seed, class.index() as u64));
        let n_train = ((ids.len() as f64 * train_fraction + 1e-9).floor() as usize).clamp(1, ids.len() - 1);
        out.train.extend(ids[..n_train].iter().map(|s| s.to_string()));
        out.val.extend(ids[n_train..].iter().map(|s| s.to_string()));
    }
    Ok(out)
}
