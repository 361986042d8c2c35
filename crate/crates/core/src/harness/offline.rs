//! Training and prediction on stored trajectory files, without a
//! simulator in the loop.

use super::store::ingest_external;
use crate::error::{Error, Result};
use crate::reservoir::{reservoir_output, stack_segments, train_readout, ReadoutWeights, StateMatrix, TargetSignal};
use crate::tasks::{check_rate, Protocol};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// The sidecar next to a trajectory CSV: same stem, `.json`.
pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

/// One training recording and the constant target values it stands for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingItem {
    pub trajectory: PathBuf,
    pub targets: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingSet {
    /// One name per target column.
    pub labels: Vec<String>,
    pub items: Vec<TrainingItem>,
    #[serde(default)]
    pub protocol: Protocol,
    #[serde(default = "default_rate")]
    pub sample_rate_hz: f64,
}

fn default_rate() -> f64 {
    25.0
}

impl TrainingSet {
    /// Relative trajectory paths resolve against `base`.
    pub fn load(path: &Path) -> Result<Self> {
        let mut set: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for item in &mut set.items {
            if item.trajectory.is_relative() {
                item.trajectory = base.join(&item.trajectory);
            }
        }
        Ok(set)
    }
}

fn states(path: &Path, protocol: &Protocol, rate: f64) -> Result<StateMatrix> {
    let traj = ingest_external(path, &sidecar_path(path))?;
    check_rate(&traj, rate)?;
    protocol.states(&traj)
}

/// Stacks the washed windows of every item and fits one readout column
/// per label.
pub fn train_on_files(set: &TrainingSet) -> Result<ReadoutWeights> {
    if set.items.is_empty() || set.labels.is_empty() {
        return Err(Error::InvalidParameter("a training set needs labels and recordings".into()));
    }
    let mats: Vec<StateMatrix> =
        set.items.iter().map(|i| states(&i.trajectory, &set.protocol, set.sample_rate_hz)).collect::<Result<_>>()?;
    let s = stack_segments(&mats)?;
    let mut columns = Vec::with_capacity(set.labels.len());
    for (j, label) in set.labels.iter().enumerate() {
        let pieces: Vec<(f64, usize)> = set
            .items
            .iter()
            .zip(&mats)
            .map(|(i, m)| {
                i.targets.get(j).map(|&v| (v, m.rows())).ok_or_else(|| {
                    Error::DimensionMismatch(format!(
                        "{} has {} targets for {} labels",
                        i.trajectory.display(),
                        i.targets.len(),
                        set.labels.len()
                    ))
                })
            })
            .collect::<Result<_>>()?;
        columns.push(TargetSignal::steps(label, &pieces));
    }
    train_readout(&s, &TargetSignal::hstack(&columns)?, set.protocol.lambda)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilePrediction {
    pub trajectory_id: String,
    pub labels: Vec<String>,
    /// Mean output per column over the washed window.
    pub mean: Vec<f64>,
    pub times: Vec<f64>,
    /// `outputs[column][frame]`.
    pub outputs: Vec<Vec<f64>>,
}

pub fn predict_file(w: &ReadoutWeights, path: &Path, protocol: &Protocol, rate: f64) -> Result<FilePrediction> {
    let traj = ingest_external(path, &sidecar_path(path))?;
    check_rate(&traj, rate)?;
    let s = protocol.states(&traj)?;
    let out = reservoir_output(&s, w)?;
    let first = s.origin().first().map_or(0, |seg| seg.start);
    Ok(FilePrediction {
        trajectory_id: traj.id().to_string(),
        labels: w.tasks.clone(),
        mean: (0..out.ncols()).map(|c| out.column(c).mean()).collect(),
        times: traj.times[first..first + s.rows()].to_vec(),
        outputs: (0..out.ncols()).map(|c| out.column(c).iter().copied().collect()).collect(),
    })
}
