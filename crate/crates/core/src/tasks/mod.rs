//! The perception experiments: payload weight, payload position, input
//! pattern recognition, multitasking and channel-count ablation.

mod multitask;
mod pattern;
mod position;
mod source;
mod stats;
mod sweep;
mod weight;

pub use multitask::{run_multitask, train_multitask, MultitaskSpec, Quantity, Setting};
pub use pattern::{
    baseline_bottom_nodes, pattern_target, recognize_pattern, run_pattern_task, test_sequence,
    PatternMode, PatternTaskSpec, TestSequenceSpec, WindowEstimate,
};
pub use position::{classify_position, position_target, run_position_task, side_of, PositionTaskSpec, Side};
pub use source::{check_rate, Condition, SimulatedSource, TrajectorySource};
pub use stats::{mean, spearman, std_dev};
pub use sweep::{dimensionality_sweep, SweepPoint, SweepResult, SweepSpec, SweepTask};
pub use weight::{
    estimate_weight, run_weight_task, weight_matrix_experiment, weight_target, WeightMatrix,
    WeightMatrixSpec, WeightTaskSpec,
};

use crate::dynamics::Trajectory;
use crate::error::{Error, Result};
use crate::reservoir::{select_channels, trim_washout, ChannelSelection, ReadoutWeights, StateMatrix};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Run length, washout and readout settings shared by every task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Protocol {
    pub run_duration_s: f64,
    pub washout_head_s: f64,
    pub washout_tail_s: f64,
    /// Ridge parameter; 0 selects the pseudo-inverse.
    pub lambda: f64,
    /// `None` uses every node.
    pub channels: Option<ChannelSelection>,
}

impl Default for Protocol {
    fn default() -> Self {
        Self {
            run_duration_s: 15.0,
            washout_head_s: 5.0,
            washout_tail_s: 5.0,
            lambda: 0.0,
            channels: None,
        }
    }
}

impl Protocol {
    pub fn window_s(&self) -> f64 {
        self.run_duration_s - self.washout_head_s - self.washout_tail_s
    }

    /// The washed window of `traj`, restricted to the protocol's channels.
    pub fn states(&self, traj: &Trajectory) -> Result<StateMatrix> {
        let s = trim_washout(traj, self.washout_head_s, self.washout_tail_s)?;
        self.select(s)
    }

    pub fn select(&self, s: StateMatrix) -> Result<StateMatrix> {
        match &self.channels {
            Some(sel) => select_channels(&s, sel),
            None => Ok(s),
        }
    }
}

/// Shaker amplitude levels in mm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmplitudeLevels(pub BTreeMap<u32, f64>);

impl Default for AmplitudeLevels {
    fn default() -> Self {
        Self(BTreeMap::from([(1, 2.0), (2, 4.0), (4, 8.0)]))
    }
}

impl AmplitudeLevels {
    pub fn mm(&self, level: u32) -> Result<f64> {
        self.0
            .get(&level)
            .copied()
            .ok_or_else(|| Error::InvalidParameter(format!("no amplitude defined for level {level}")))
    }
}

/// Prediction for one test (or training) condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionOutcome {
    pub label: String,
    pub trajectory_id: String,
    /// One entry per task column.
    pub truth: Vec<f64>,
    pub prediction: Vec<f64>,
    /// Relative error for weights, absolute error otherwise.
    pub error: Vec<f64>,
    pub correct: Option<bool>,
}

/// Frame-by-frame output for plotting, with the reference overlaid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputSeries {
    pub label: String,
    pub times: Vec<f64>,
    /// `outputs[task][frame]`.
    pub outputs: Vec<Vec<f64>>,
    pub targets: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskResult {
    pub task: String,
    pub spec: serde_json::Value,
    pub training: Vec<ConditionOutcome>,
    pub conditions: Vec<ConditionOutcome>,
    pub metrics: BTreeMap<String, f64>,
    pub weights: ReadoutWeights,
    pub series: Vec<OutputSeries>,
}

impl TaskResult {
    pub fn metric(&self, name: &str) -> Option<f64> {
        self.metrics.get(name).copied()
    }
}

/// Column means of a readout output matrix.
pub(crate) fn column_means(out: &nalgebra::DMatrix<f64>) -> Vec<f64> {
    (0..out.ncols()).map(|c| out.column(c).mean()).collect()
}

/// Times of the frames a state matrix was cut from, for plotting.
pub(crate) fn frame_times(traj: &Trajectory, s: &StateMatrix) -> Vec<f64> {
    s.origin().iter().flat_map(|seg| traj.times[seg.start..seg.end].iter().copied()).collect()
}

pub(crate) fn columns(out: &nalgebra::DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..out.ncols()).map(|c| out.column(c).iter().copied().collect()).collect()
}
