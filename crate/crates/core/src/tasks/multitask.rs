use super::position::side_of;
use super::source::{Condition, TrajectorySource};
use super::{column_means, columns, frame_times, ConditionOutcome, OutputSeries, Protocol, TaskResult};
use crate::error::{Error, Result};
use crate::reservoir::{reservoir_output, stack_segments, train_readout, ReadoutWeights, StateMatrix, TargetSignal};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// A quantity one readout column is trained to report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    /// Payload mass in grams.
    Mass,
    /// -1 left of the midline, +1 right of it.
    Side,
    /// Excitation frequency in Hz.
    Frequency,
}

impl Quantity {
    fn label(self) -> &'static str {
        match self {
            Quantity::Mass => "mass_g",
            Quantity::Side => "side",
            Quantity::Frequency => "frequency_hz",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Setting {
    pub mass_g: f64,
    pub position: char,
    pub frequency_hz: f64,
}

impl Setting {
    pub fn new(mass_g: f64, position: char, frequency_hz: f64) -> Self {
        Self { mass_g, position, frequency_hz }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MultitaskSpec {
    pub targets: Vec<Quantity>,
    pub train: Vec<Setting>,
    pub test: Vec<Setting>,
    pub amplitude_mm: f64,
    /// Relative mass error accepted as a correct weight estimate.
    pub mass_tolerance: f64,
    pub cols: usize,
    pub protocol: Protocol,
}

impl Default for MultitaskSpec {
    fn default() -> Self {
        Self::weight_position()
    }
}

impl MultitaskSpec {
    /// 8 g and 17 g, each at stations a and h.
    pub fn weight_position() -> Self {
        let f = 3.0;
        Self {
            targets: vec![Quantity::Mass, Quantity::Side],
            train: vec![
                Setting::new(8.0, 'a', f),
                Setting::new(17.0, 'a', f),
                Setting::new(8.0, 'h', f),
                Setting::new(17.0, 'h', f),
            ],
            test: vec![
                Setting::new(16.0, 'b', f),
                Setting::new(9.0, 'g', f),
                Setting::new(9.0, 'b', f),
                Setting::new(11.0, 'c', f),
            ],
            amplitude_mm: 4.0,
            mass_tolerance: 0.10,
            cols: 7,
            protocol: Protocol::default(),
        }
    }

    /// 15 g then 3 g at station a, each driven at 4, 2 and 6 Hz.
    pub fn weight_frequency() -> Self {
        let train = [15.0, 3.0]
            .iter()
            .flat_map(|&m| [4.0, 2.0, 6.0].map(|f| Setting::new(m, 'a', f)))
            .collect();
        Self {
            targets: vec![Quantity::Mass, Quantity::Frequency],
            train,
            test: vec![
                Setting::new(6.0, 'a', 2.0),
                Setting::new(6.0, 'a', 6.0),
                Setting::new(9.0, 'a', 4.0),
                Setting::new(9.0, 'a', 6.0),
            ],
            ..Self::weight_position()
        }
    }

    fn condition(&self, s: &Setting) -> Condition {
        Condition::sine(s.mass_g, s.position, self.amplitude_mm, s.frequency_hz, self.protocol.run_duration_s)
    }

    fn value(&self, q: Quantity, s: &Setting) -> Result<f64> {
        Ok(match q {
            Quantity::Mass => s.mass_g,
            Quantity::Side => side_of(s.position, self.cols)?.sign(),
            Quantity::Frequency => s.frequency_hz,
        })
    }
}

/// Joint least-squares readout with one column per target.
pub fn train_multitask(s: &StateMatrix, y: &TargetSignal, lambda: f64) -> Result<ReadoutWeights> {
    train_readout(s, y, lambda)
}

fn nearest(values: &[f64], x: f64) -> f64 {
    values
        .iter()
        .copied()
        .min_by(|a, b| (a - x).abs().total_cmp(&(b - x).abs()))
        .expect("non-empty")
}

/// Trains every target jointly on the stacked training settings and reads
/// all of them out for each test setting.
///
/// A test setting counts as correct when every target is: mass within the
/// relative tolerance, side by sign, frequency by nearest trained value.
/// Metrics `<target>_correct` count each target separately and
/// `<target>_rmse` is frame-wise over the test windows.
pub fn run_multitask(spec: &MultitaskSpec, source: &dyn TrajectorySource) -> Result<TaskResult> {
    if spec.targets.is_empty() || spec.train.is_empty() {
        return Err(Error::InvalidParameter("multitask needs targets and training settings".into()));
    }
    let mut conds: Vec<Condition> = spec.train.iter().map(|s| spec.condition(s)).collect();
    conds.extend(spec.test.iter().map(|s| spec.condition(s)));
    let trajs = source.trajectories(&conds)?;
    let n_train = spec.train.len();

    let train: Vec<StateMatrix> = trajs[..n_train].iter().map(|t| spec.protocol.states(t)).collect::<Result<_>>()?;
    let s = stack_segments(&train)?;
    let parts: Vec<TargetSignal> = spec
        .targets
        .iter()
        .map(|&q| {
            let pieces: Vec<(f64, usize)> = spec
                .train
                .iter()
                .zip(&train)
                .map(|(set, m)| Ok((spec.value(q, set)?, m.rows())))
                .collect::<Result<_>>()?;
            Ok(TargetSignal::steps(q.label(), &pieces))
        })
        .collect::<Result<_>>()?;
    let y = TargetSignal::hstack(&parts)?;
    let w = train_multitask(&s, &y, spec.protocol.lambda)?;

    let trained_freqs: Vec<f64> = spec.train.iter().map(|s| s.frequency_hz).collect();
    let k = spec.targets.len();
    let mut correct_per = vec![0usize; k];
    let mut sq = vec![0.0; k];
    let mut frames = 0usize;
    let mut training = Vec::new();
    let mut conditions = Vec::new();
    let mut series = Vec::new();
    for (i, ((cond, traj), set)) in conds.iter().zip(&trajs).zip(spec.train.iter().chain(&spec.test)).enumerate() {
        let st = spec.protocol.states(traj)?;
        let out = reservoir_output(&st, &w)?;
        let pred = column_means(&out);
        let truth: Vec<f64> = spec.targets.iter().map(|&q| spec.value(q, set)).collect::<Result<_>>()?;
        let mut error = Vec::with_capacity(k);
        let mut ok_all = true;
        for (j, &q) in spec.targets.iter().enumerate() {
            let (e, ok) = match q {
                Quantity::Mass => {
                    let e = (pred[j] - truth[j]).abs() / truth[j];
                    (e, e < spec.mass_tolerance)
                }
                Quantity::Side => ((pred[j] - truth[j]).abs(), (pred[j] < 0.0) == (truth[j] < 0.0)),
                Quantity::Frequency => ((pred[j] - truth[j]).abs(), nearest(&trained_freqs, pred[j]) == truth[j]),
            };
            error.push(e);
            ok_all &= ok;
            if i >= n_train {
                correct_per[j] += ok as usize;
                sq[j] += out.column(j).iter().map(|v| (v - truth[j]).powi(2)).sum::<f64>();
            }
        }
        if i >= n_train {
            frames += st.rows();
        }
        series.push(OutputSeries {
            label: cond.label(),
            times: frame_times(traj, &st),
            outputs: columns(&out),
            targets: truth.iter().map(|&v| vec![v; st.rows()]).collect(),
        });
        let outcome = ConditionOutcome {
            label: cond.label(),
            trajectory_id: traj.id().to_string(),
            truth,
            prediction: pred,
            error,
            correct: Some(ok_all),
        };
        if i < n_train {
            training.push(outcome);
        } else {
            conditions.push(outcome);
        }
    }

    let mut metrics = BTreeMap::new();
    if !conditions.is_empty() {
        for (j, q) in spec.targets.iter().enumerate() {
            metrics.insert(format!("{}_correct", q.label()), correct_per[j] as f64);
            metrics.insert(format!("{}_rmse", q.label()), (sq[j] / frames as f64).sqrt());
        }
        let all = conditions.iter().filter(|c| c.correct == Some(true)).count();
        metrics.insert("all_correct".into(), all as f64);
    }
    Ok(TaskResult {
        task: "multitask".into(),
        spec: serde_json::to_value(spec)?,
        training,
        conditions,
        metrics,
        weights: w,
        series,
    })
}
