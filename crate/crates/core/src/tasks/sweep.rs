use super::pattern::{run_pattern_task, PatternTaskSpec};
use super::source::TrajectorySource;
use super::stats::{mean, std_dev};
use super::weight::{run_weight_task, WeightTaskSpec};
use crate::error::{Error, Result};
use crate::reservoir::ChannelSelection;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepTask {
    Weight(WeightTaskSpec),
    Pattern(PatternTaskSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    pub task: SweepTask,
    pub counts: Vec<usize>,
    pub trials: usize,
    pub seed: u64,
    /// Channels available to draw from.
    pub nodes: usize,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            task: SweepTask::Weight(WeightTaskSpec::default()),
            counts: vec![4, 8, 12, 16, 20, 24, 28],
            trials: 5,
            seed: 11,
            nodes: 28,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub count: usize,
    pub subsets: Vec<Vec<usize>>,
    pub rmse: Vec<f64>,
    pub mean_rmse: f64,
    pub std_rmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub task: String,
    pub points: Vec<SweepPoint>,
}

impl SweepResult {
    pub fn mean_at(&self, count: usize) -> Option<f64> {
        self.points.iter().find(|p| p.count == count).map(|p| p.mean_rmse)
    }
}

fn trial_seed(seed: u64, count: usize, trial: usize) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update((count as u64).to_le_bytes());
    h.update((trial as u64).to_le_bytes());
    u64::from_le_bytes(h.finalize()[..8].try_into().expect("8 bytes"))
}

/// Test RMSE of the task using random channel subsets of each size. The
/// full set is a single trial since every draw is identical.
pub fn dimensionality_sweep(spec: &SweepSpec, source: &dyn TrajectorySource) -> Result<SweepResult> {
    if spec.trials == 0 {
        return Err(Error::InvalidParameter("a sweep needs at least one trial".into()));
    }
    if spec.counts.iter().any(|&c| c == 0 || c > spec.nodes) {
        return Err(Error::InvalidParameter(format!("channel counts must lie in 1..={}", spec.nodes)));
    }
    let all: Vec<usize> = (0..spec.nodes).collect();
    let mut points = Vec::with_capacity(spec.counts.len());
    for &count in &spec.counts {
        let trials = if count == spec.nodes { 1 } else { spec.trials };
        let mut subsets = Vec::with_capacity(trials);
        let mut rmse = Vec::with_capacity(trials);
        for trial in 0..trials {
            let sel = ChannelSelection::Random { count, seed: trial_seed(spec.seed, count, trial) };
            let ids = crate::reservoir::resolve_selection(&all, &sel)?;
            let selection = Some(ChannelSelection::Ids(ids.clone()));
            let r = match &spec.task {
                SweepTask::Weight(w) => {
                    let mut w = w.clone();
                    w.protocol.channels = selection;
                    run_weight_task(&w, source)?
                }
                SweepTask::Pattern(p) => {
                    let mut p = p.clone();
                    p.protocol.channels = selection;
                    run_pattern_task(&p, source)?
                }
            };
            subsets.push(ids);
            rmse.push(r.metric("rmse").expect("tasks report rmse"));
        }
        points.push(SweepPoint {
            count,
            mean_rmse: mean(&rmse),
            std_rmse: std_dev(&rmse),
            subsets,
            rmse,
        });
    }
    Ok(SweepResult {
        task: match spec.task {
            SweepTask::Weight(_) => "weight".into(),
            SweepTask::Pattern(_) => "pattern".into(),
        },
        points,
    })
}
