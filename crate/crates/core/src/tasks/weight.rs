use super::source::{Condition, TrajectorySource};
use super::{column_means, columns, frame_times, ConditionOutcome, OutputSeries, Protocol, TaskResult};
use crate::error::{Error, Result};
use crate::reservoir::{reservoir_output, rmse, stack_segments, train_readout, ReadoutWeights, StateMatrix, TargetSignal};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Step target: `m1` for the first `seg` seconds, `mn` for the next.
pub fn weight_target(m1: f64, mn: f64, seg: f64, sample_rate: f64) -> Result<TargetSignal> {
    if !(seg > 0.0) {
        return Err(Error::InvalidParameter(format!("segment length must be positive, got {seg}")));
    }
    if m1 == mn {
        return Err(Error::InvalidParameter("the two training masses must differ".into()));
    }
    let n = (seg * sample_rate).round() as usize;
    Ok(TargetSignal::steps("mass_g", &[(m1, n), (mn, n)]))
}

/// Mean readout output over a single-condition window, in grams.
pub fn estimate_weight(test: &StateMatrix, w: &ReadoutWeights) -> Result<f64> {
    Ok(column_means(&reservoir_output(test, w)?)[0])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeightTaskSpec {
    pub train_masses: (f64, f64),
    pub train_position: char,
    pub frequency_hz: f64,
    pub amplitude_mm: f64,
    pub test_masses: Vec<f64>,
    /// Relative error below which an estimate counts as a success.
    pub success_threshold: f64,
    pub protocol: Protocol,
}

impl Default for WeightTaskSpec {
    fn default() -> Self {
        Self {
            train_masses: (3.0, 16.0),
            train_position: 'a',
            frequency_hz: 3.0,
            amplitude_mm: 4.0,
            test_masses: (4..=15).map(f64::from).collect(),
            success_threshold: 0.30,
            protocol: Protocol::default(),
        }
    }
}

impl WeightTaskSpec {
    pub fn validate(&self) -> Result<()> {
        if self.train_masses.0 == self.train_masses.1 {
            return Err(Error::InvalidParameter("the two training masses must differ".into()));
        }
        if !(self.success_threshold > 0.0 && self.success_threshold < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "success threshold must lie in (0, 1), got {}",
                self.success_threshold
            )));
        }
        Ok(())
    }

    fn condition(&self, mass: f64) -> Condition {
        Condition::sine(mass, self.train_position, self.amplitude_mm, self.frequency_hz, self.protocol.run_duration_s)
    }
}

fn relative_error(estimate: f64, truth: f64) -> f64 {
    (estimate - truth).abs() / truth.abs()
}

/// Trains on the two masses and estimates every test mass.
///
/// Metrics: `rmse` is the frame-wise error over all test windows,
/// `train_rmse` the same over the training windows, `successes` the count
/// of test masses estimated within the threshold.
pub fn run_weight_task(spec: &WeightTaskSpec, source: &dyn TrajectorySource) -> Result<TaskResult> {
    spec.validate()?;
    let (m1, mn) = spec.train_masses;
    let mut conds = vec![spec.condition(m1), spec.condition(mn)];
    conds.extend(spec.test_masses.iter().map(|&m| spec.condition(m)));
    let trajs = source.trajectories(&conds)?;

    let train: Vec<StateMatrix> = trajs[..2].iter().map(|t| spec.protocol.states(t)).collect::<Result<_>>()?;
    let s = stack_segments(&train)?;
    let y = TargetSignal::steps("mass_g", &[(m1, train[0].rows()), (mn, train[1].rows())]);
    let w = train_readout(&s, &y, spec.protocol.lambda)?;

    let mut training = Vec::new();
    let mut train_frames = (Vec::new(), Vec::new());
    let mut conditions = Vec::new();
    let mut test_frames = (Vec::new(), Vec::new());
    let mut series = Vec::new();
    for (i, (cond, traj)) in conds.iter().zip(&trajs).enumerate() {
        let st = spec.protocol.states(traj)?;
        let out = reservoir_output(&st, &w)?;
        let truth = cond.payload.mass_g;
        let est = column_means(&out)[0];
        let err = relative_error(est, truth);
        let frames = if i < 2 { &mut train_frames } else { &mut test_frames };
        frames.0.extend(std::iter::repeat_n(truth, st.rows()));
        frames.1.extend(out.column(0).iter().copied());
        let outcome = ConditionOutcome {
            label: cond.label(),
            trajectory_id: traj.id().to_string(),
            truth: vec![truth],
            prediction: vec![est],
            error: vec![err],
            correct: Some(err < spec.success_threshold),
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
    metrics.insert("train_rmse".into(), rmse(&train_frames.0, &train_frames.1)?);
    if !conditions.is_empty() {
        metrics.insert("rmse".into(), rmse(&test_frames.0, &test_frames.1)?);
        let ok = conditions.iter().filter(|c| c.correct == Some(true)).count();
        metrics.insert("successes".into(), ok as f64);
        metrics.insert("success_rate".into(), ok as f64 / conditions.len() as f64);
    }
    Ok(TaskResult {
        task: "weight".into(),
        spec: serde_json::to_value(spec)?,
        training,
        conditions,
        metrics,
        weights: w,
        series,
    })
}

/// Grid of training pairs `(first_mass, m)` for every `m` in
/// `second_masses`, each tested on every mass in `test_masses`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeightMatrixSpec {
    pub first_mass: f64,
    pub second_masses: Vec<f64>,
    pub test_masses: Vec<f64>,
    pub position: char,
    pub frequency_hz: f64,
    pub amplitude_mm: f64,
    pub success_threshold: f64,
    pub protocol: Protocol,
}

impl Default for WeightMatrixSpec {
    fn default() -> Self {
        Self {
            first_mass: 3.0,
            second_masses: (4..=18).map(f64::from).collect(),
            test_masses: (3..=18).map(f64::from).collect(),
            position: 'a',
            frequency_hz: 3.0,
            amplitude_mm: 4.0,
            success_threshold: 0.30,
            protocol: Protocol::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightMatrix {
    pub first_mass: f64,
    pub second_masses: Vec<f64>,
    pub test_masses: Vec<f64>,
    /// `estimates[row][col]`: row per second training mass, column per test mass.
    pub estimates: Vec<Vec<f64>>,
    pub success: Vec<Vec<bool>>,
    /// Success rate over test masses strictly between the training pair.
    pub interpolation_rate: f64,
    /// Success rate over test masses outside the training pair.
    pub extrapolation_rate: f64,
}

impl WeightMatrix {
    /// Number of successful test masses in the row trained with `second`.
    pub fn row_successes(&self, second: f64) -> Option<usize> {
        let r = self.second_masses.iter().position(|&m| m == second)?;
        Some(self.success[r].iter().filter(|&&s| s).count())
    }
}

pub fn weight_matrix_experiment(spec: &WeightMatrixSpec, source: &dyn TrajectorySource) -> Result<WeightMatrix> {
    if spec.second_masses.is_empty() || spec.test_masses.is_empty() {
        return Err(Error::InvalidParameter("weight matrix needs training and test masses".into()));
    }
    let mut all: Vec<f64> = vec![spec.first_mass];
    all.extend(&spec.second_masses);
    all.extend(&spec.test_masses);
    let conds: Vec<Condition> = all
        .iter()
        .map(|&m| Condition::sine(m, spec.position, spec.amplitude_mm, spec.frequency_hz, spec.protocol.run_duration_s))
        .collect();
    source.trajectories(&conds)?;

    let (mut interp, mut extrap) = ((0usize, 0usize), (0usize, 0usize));
    let mut estimates = Vec::new();
    let mut success = Vec::new();
    for &second in &spec.second_masses {
        let task = WeightTaskSpec {
            train_masses: (spec.first_mass, second),
            train_position: spec.position,
            frequency_hz: spec.frequency_hz,
            amplitude_mm: spec.amplitude_mm,
            test_masses: spec.test_masses.clone(),
            success_threshold: spec.success_threshold,
            protocol: spec.protocol.clone(),
        };
        let r = run_weight_task(&task, source)?;
        let (lo, hi) = (spec.first_mass.min(second), spec.first_mass.max(second));
        let mut row_est = Vec::new();
        let mut row_ok = Vec::new();
        for c in &r.conditions {
            let (m, ok) = (c.truth[0], c.correct == Some(true));
            if m > lo && m < hi {
                interp.0 += ok as usize;
                interp.1 += 1;
            } else if m < lo || m > hi {
                extrap.0 += ok as usize;
                extrap.1 += 1;
            }
            row_est.push(c.prediction[0]);
            row_ok.push(ok);
        }
        estimates.push(row_est);
        success.push(row_ok);
    }
    let rate = |(ok, n): (usize, usize)| if n == 0 { 0.0 } else { ok as f64 / n as f64 };
    Ok(WeightMatrix {
        first_mass: spec.first_mass,
        second_masses: spec.second_masses.clone(),
        test_masses: spec.test_masses.clone(),
        estimates,
        success,
        interpolation_rate: rate(interp),
        extrapolation_rate: rate(extrap),
    })
}
