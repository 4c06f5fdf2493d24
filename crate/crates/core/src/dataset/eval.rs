//! Accuracy reports and the leave-one-user-out harness.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cnn::{train, ArchSpec, Classifier, Labeled, TrainConfig, TrainOutcome};
use crate::dataset::{load_sample, split, DatasetManifest, Split};
use crate::error::{Error, Result};
use crate::sim::GestureClass;

/// One sample ready for evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalSample {
    pub id: String,
    pub label: GestureClass,
    pub user: String,
    pub scene: String,
    pub input: Vec<f64>,
}

impl EvalSample {
    pub fn labeled(&self) -> Labeled {
        Labeled {
            input: self.input.clone(),
            label: self.label.index(),
        }
    }
}

/// Loads the given ids, in order.
pub fn load_eval_samples(manifest: &DatasetManifest, dir: &Path, ids: &[String]) -> Result<Vec<EvalSample>> {
    ids.iter()
        .map(|id| {
            let r = manifest
                .record(id)
                .ok_or_else(|| Error::invalid(format!("unknown sample id {id}")))?;
            let s = load_sample(&manifest.path_of(dir, r))?;
            Ok(EvalSample {
                id: r.id.clone(),
                label: r.label,
                user: r.user.clone(),
                scene: r.scene.clone(),
                input: s.window.to_f64(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleOutcome {
    pub id: String,
    pub label: GestureClass,
    pub predicted: usize,
    pub user: String,
    pub scene: String,
}

impl SampleOutcome {
    pub fn correct(&self) -> bool {
        self.predicted == self.label.index()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassStat {
    pub class: GestureClass,
    pub count: usize,
    pub correct: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupStat {
    pub scene: String,
    pub user: String,
    pub count: usize,
    pub correct: usize,
    pub accuracy: f64,
}

/// Grouping keys for [`EvalReport::grouped_csv`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupKey {
    Scene,
    User,
    Class,
}

impl std::str::FromStr for GroupKey {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "scene" => Ok(GroupKey::Scene),
            "user" => Ok(GroupKey::User),
            "class" => Ok(GroupKey::Class),
            other => Err(Error::invalid(format!("unknown group key {other:?} (scene, user, class)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub count: usize,
    pub correct: usize,
    pub accuracy: f64,
    pub per_class: Vec<ClassStat>,
    /// `confusion[true][predicted]` over the model's classes.
    pub confusion: Vec<Vec<usize>>,
    /// Keyed by (scene, user), sorted.
    pub groups: Vec<GroupStat>,
    pub outcomes: Vec<SampleOutcome>,
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

pub fn evaluate<C: Classifier + ?Sized>(model: &C, samples: &[EvalSample]) -> Result<EvalReport> {
    if samples.is_empty() {
        return Err(Error::invalid("evaluation needs at least one sample"));
    }
    let k = model.classes();
    let mut confusion = vec![vec![0usize; k]; k];
    let mut outcomes = Vec::with_capacity(samples.len());
    for s in samples {
        let li = s.label.index();
        if li >= k {
            return Err(Error::invalid(format!("sample {} has label {li} but the model has {k} classes", s.id)));
        }
        let p = model.predict(&s.input)?;
        confusion[li][p.class] += 1;
        outcomes.push(SampleOutcome {
            id: s.id.clone(),
            label: s.label,
            predicted: p.class,
            user: s.user.clone(),
            scene: s.scene.clone(),
        });
    }
    let correct = outcomes.iter().filter(|o| o.correct()).count();
    let per_class = (0..k)
        .filter_map(GestureClass::from_index)
        .map(|class| {
            let row = &confusion[class.index()];
            let count = row.iter().sum();
            let correct = row[class.index()];
            ClassStat {
                class,
                count,
                correct,
                accuracy: ratio(correct, count),
            }
        })
        .collect();
    let mut grouped: BTreeMap<(String, String), (usize, usize)> = BTreeMap::new();
    for o in &outcomes {
        let e = grouped.entry((o.scene.clone(), o.user.clone())).or_default();
        e.0 += 1;
        e.1 += o.correct() as usize;
    }
    let groups = grouped
        .into_iter()
        .map(|((scene, user), (count, correct))| GroupStat {
            scene,
            user,
            count,
            correct,
            accuracy: ratio(correct, count),
        })
        .collect();
    Ok(EvalReport {
        count: samples.len(),
        correct,
        accuracy: ratio(correct, samples.len()),
        per_class,
        confusion,
        groups,
        outcomes,
    })
}

impl EvalReport {
    /// One row per distinct key tuple: keys..., count, correct, accuracy.
    pub fn grouped_csv(&self, keys: &[GroupKey]) -> String {
        let mut header: Vec<&str> = keys
            .iter()
            .map(|k| match k {
                GroupKey::Scene => "scene",
                GroupKey::User => "user",
                GroupKey::Class => "class",
            })
            .collect();
        header.extend(["count", "correct", "accuracy"]);
        let mut rows: BTreeMap<Vec<String>, (usize, usize)> = BTreeMap::new();
        for o in &self.outcomes {
            let key = keys
                .iter()
                .map(|k| match k {
                    GroupKey::Scene => o.scene.clone(),
                    GroupKey::User => o.user.clone(),
                    GroupKey::Class => o.label.slug(),
                })
                .collect();
            let e = rows.entry(key).or_default();
            e.0 += 1;
            e.1 += o.correct() as usize;
        }
        let mut out = header.join(",") + "\n";
        for (key, (n, c)) in rows {
            for k in key {
                out.push_str(&k);
                out.push(',');
            }
            let _ = writeln!(out, "{n},{c},{:.6}", ratio(c, n));
        }
        out
    }

    pub fn confusion_csv(&self) -> String {
        let names: Vec<String> = (0..self.confusion.len())
            .map(|i| GestureClass::from_index(i).map_or(format!("class{i}"), |c| c.slug()))
            .collect();
        let mut out = format!("true\\predicted,{}\n", names.join(","));
        for (name, row) in names.iter().zip(&self.confusion) {
            let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            let _ = writeln!(out, "{name},{}", cells.join(","));
        }
        out
    }

    /// Scenes down, users across, average accuracy in each cell.
    pub fn table(&self) -> String {
        let scenes: BTreeSet<&str> = self.groups.iter().map(|g| g.scene.as_str()).collect();
        let users: BTreeSet<&str> = self.groups.iter().map(|g| g.user.as_str()).collect();
        let width = scenes.iter().map(|s| s.len()).max().unwrap_or(0).max(5);
        let mut out = format!("{:<width$}", "Scene");
        for u in &users {
            let _ = write!(out, "  {:>8}", format!("User {u}"));
        }
        out.push('\n');
        for s in &scenes {
            let _ = write!(out, "{s:<width$}");
            for u in &users {
                match self.groups.iter().find(|g| g.scene == *s && g.user == *u) {
                    Some(g) => {
                        let _ = write!(out, "  {:>7.1}%", 100.0 * g.accuracy);
                    }
                    None => {
                        let _ = write!(out, "  {:>8}", "-");
                    }
                }
            }
            out.push('\n');
        }
        let _ = writeln!(out, "overall {:.1}% ({}/{})", 100.0 * self.accuracy, self.correct, self.count);
        out
    }
}

#[derive(Debug, Clone)]
pub struct LouoOutcome {
    pub held_out: String,
    pub split: Split,
    /// Every id whose sample was loaded during training.
    pub touched: Vec<String>,
    pub training: TrainOutcome,
    /// Final model on the training users' validation split.
    pub train_users: EvalReport,
    /// Final model on every sample of the held-out user.
    pub held_out_report: EvalReport,
}

impl LouoOutcome {
    /// Training-user accuracy minus held-out accuracy.
    pub fn gap(&self) -> f64 {
        self.train_users.accuracy - self.held_out_report.accuracy
    }
}

/// Trains on every user except `held_out` (split by `train_fraction`) and
/// evaluates on the held-out user.
pub fn leave_one_user_out(
    manifest: &DatasetManifest,
    dir: &Path,
    held_out: &str,
    arch: &ArchSpec,
    cfg: &TrainConfig,
    train_fraction: f64,
    split_seed: u64,
) -> Result<LouoOutcome> {
    let (kept, held): (Vec<_>, Vec<_>) = manifest.samples.iter().cloned().partition(|r| r.user != held_out);
    if held.is_empty() {
        return Err(Error::invalid(format!("no samples for user {held_out}")));
    }
    let split = split(&kept, train_fraction, split_seed)?;
    let touched: Vec<String> = split.train.iter().chain(&split.val).cloned().collect();
    // Audit before any sample is loaded.
    let held_ids: BTreeSet<&str> = held.iter().map(|r| r.id.as_str()).collect();
    if let Some(leak) = touched.iter().find(|id| held_ids.contains(id.as_str())) {
        return Err(Error::invalid(format!("held-out sample {leak} reached the training set")));
    }
    let train_set = load_eval_samples(manifest, dir, &split.train)?;
    let val_set = load_eval_samples(manifest, dir, &split.val)?;
    let training = train(
        arch,
        &train_set.iter().map(EvalSample::labeled).collect::<Vec<_>>(),
        &val_set.iter().map(EvalSample::labeled).collect::<Vec<_>>(),
        cfg,
    )?;
    let train_users = evaluate(&training.model, &val_set)?;
    let held_ids: Vec<String> = held.iter().map(|r| r.id.clone()).collect();
    let held_out_report = evaluate(&training.model, &load_eval_samples(manifest, dir, &held_ids)?)?;
    Ok(LouoOutcome {
        held_out: held_out.to_string(),
        split,
        touched,
        training,
        train_users,
        held_out_report,
    })
}
