use super::source::{Condition, TrajectorySource};
use super::{column_means, columns, frame_times, ConditionOutcome, OutputSeries, Protocol, TaskResult};
use crate::dynamics::{station_coordinate, STATION_LABELS};
use crate::error::{Error, Result};
use crate::reservoir::{reservoir_output, stack_segments, train_readout, ReadoutWeights, StateMatrix, TargetSignal};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn sign(self) -> f64 {
        match self {
            Side::Left => -1.0,
            Side::Right => 1.0,
        }
    }
}

/// Which half of the top edge a station lies on, split at the midpoint.
pub fn side_of(label: char, cols: usize) -> Result<Side> {
    let mid = (cols - 1) as f64 / 2.0;
    let x = station_coordinate(label, cols)?;
    if x == mid {
        return Err(Error::InvalidPosition(format!("{label} sits on the midline")));
    }
    Ok(if x < mid { Side::Left } else { Side::Right })
}

/// `-1` for `seg` seconds (left training station) then `+1`.
pub fn position_target(seg: f64, sample_rate: f64) -> Result<TargetSignal> {
    if !(seg > 0.0) {
        return Err(Error::InvalidParameter(format!("segment length must be positive, got {seg}")));
    }
    let n = (seg * sample_rate).round() as usize;
    Ok(TargetSignal::steps("side", &[(-1.0, n), (1.0, n)]))
}

/// Left when the mean output is negative; an exact zero counts as Right.
pub fn classify_position(test: &StateMatrix, w: &ReadoutWeights) -> Result<(Side, f64)> {
    let m = column_means(&reservoir_output(test, w)?)[0];
    Ok((if m < 0.0 { Side::Left } else { Side::Right }, m))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PositionTaskSpec {
    pub payload_mass_g: f64,
    pub frequency_hz: f64,
    pub amplitude_mm: f64,
    pub train_positions: (char, char),
    pub test_positions: Vec<char>,
    /// Vertex columns of the sheet, for the left/right ground truth.
    pub cols: usize,
    pub protocol: Protocol,
}

impl Default for PositionTaskSpec {
    fn default() -> Self {
        Self {
            payload_mass_g: 16.0,
            frequency_hz: 3.0,
            amplitude_mm: 4.0,
            train_positions: ('a', 'h'),
            test_positions: STATION_LABELS[1..7].to_vec(),
            cols: 7,
            protocol: Protocol::default(),
        }
    }
}

impl PositionTaskSpec {
    fn condition(&self, position: char) -> Condition {
        Condition::sine(
            self.payload_mass_g,
            position,
            self.amplitude_mm,
            self.frequency_hz,
            self.protocol.run_duration_s,
        )
    }
}

/// Trains on the two extreme stations and classifies every test station.
/// Metrics: `accuracy` over test stations and the frame-wise `train_rmse`.
pub fn run_position_task(spec: &PositionTaskSpec, source: &dyn TrajectorySource) -> Result<TaskResult> {
    let (left, right) = spec.train_positions;
    if side_of(left, spec.cols)? != Side::Left || side_of(right, spec.cols)? != Side::Right {
        return Err(Error::InvalidParameter(format!(
            "training stations {left}, {right} must lie left and right of the midline"
        )));
    }
    let mut conds = vec![spec.condition(left), spec.condition(right)];
    conds.extend(spec.test_positions.iter().map(|&p| spec.condition(p)));
    let trajs = source.trajectories(&conds)?;

    let train: Vec<StateMatrix> = trajs[..2].iter().map(|t| spec.protocol.states(t)).collect::<Result<_>>()?;
    let s = stack_segments(&train)?;
    let y = TargetSignal::steps("side", &[(-1.0, train[0].rows()), (1.0, train[1].rows())]);
    let w = train_readout(&s, &y, spec.protocol.lambda)?;

    let mut training = Vec::new();
    let mut conditions = Vec::new();
    let mut series = Vec::new();
    let (mut sq, mut n) = (0.0, 0usize);
    for (i, (cond, traj)) in conds.iter().zip(&trajs).enumerate() {
        let st = spec.protocol.states(traj)?;
        let out = reservoir_output(&st, &w)?;
        let m = column_means(&out)[0];
        let side = if m < 0.0 { Side::Left } else { Side::Right };
        let truth = side_of(cond.payload.position, spec.cols)?.sign();
        if i < 2 {
            sq += out.column(0).iter().map(|v| (v - truth) * (v - truth)).sum::<f64>();
            n += st.rows();
        }
        let outcome = ConditionOutcome {
            label: cond.label(),
            trajectory_id: traj.id().to_string(),
            truth: vec![truth],
            prediction: vec![m],
            error: vec![(m - truth).abs()],
            correct: Some(side.sign() == truth),
        };
        series.push(OutputSeries {
            label: cond.label(),
            times: frame_times(traj, &st),
            outputs: columns(&out),
            targets: vec![vec![truth; st.rows()]],
        });
        if i < 2 {
            training.push(outcome);
        } else {
            conditions.push(outcome);
        }
    }
    let mut metrics = BTreeMap::new();
    metrics.insert("train_rmse".into(), (sq / n as f64).sqrt());
    if !conditions.is_empty() {
        let ok = conditions.iter().filter(|c| c.correct == Some(true)).count();
        metrics.insert("correct".into(), ok as f64);
        metrics.insert("accuracy".into(), ok as f64 / conditions.len() as f64);
    }
    Ok(TaskResult {
        task: "position".into(),
        spec: serde_json::to_value(spec)?,
        training,
        conditions,
        metrics,
        weights: w,
        series,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ground_truth_sides() {
        for (l, s) in [('a', Side::Left), ('b', Side::Left), ('c', Side::Left), ('d', Side::Left)] {
            assert_eq!(side_of(l, 7).unwrap(), s);
        }
        for l in ['e', 'f', 'g', 'h'] {
            assert_eq!(side_of(l, 7).unwrap(), Side::Right);
        }
    }

    #[test]
    fn target_is_balanced() {
        let y = position_target(5.0, 25.0).unwrap();
        let v = y.column(0);
        assert_eq!(v.len(), 250);
        assert_eq!(v[0], -1.0);
        assert_eq!(v[249], 1.0);
        assert_eq!(v.iter().sum::<f64>(), 0.0);
    }
}
