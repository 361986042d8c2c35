use super::source::{Condition, TrajectorySource};
use super::{columns, frame_times, AmplitudeLevels, ConditionOutcome, OutputSeries, Protocol, TaskResult};
use crate::dynamics::{ExcitationSegment, ExcitationSpec, PayloadSpec};
use crate::error::{Error, Result};
use crate::reservoir::{
    reservoir_output, stack_segments, train_readout, ChannelSelection, ReadoutWeights, StateMatrix, TargetSignal,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatternMode {
    /// Patterns differ in frequency (Hz) at a fixed amplitude level.
    Frequency,
    /// Patterns differ in amplitude level at a fixed frequency.
    Amplitude,
}

/// Random test sequence: symbols uniform over the trained patterns,
/// durations uniform in `[min_s, max_s]`.
///
/// With `whole_cycles` every duration is rounded to a common period of all
/// pattern frequencies, so the table is back at its rest position whenever
/// the generator is reprogrammed; otherwise durations are rounded to whole
/// frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TestSequenceSpec {
    pub segments: usize,
    pub min_s: f64,
    pub max_s: f64,
    /// Unscored run-in on the first symbol so the sheet reaches steady state.
    pub lead_in_s: f64,
    pub seed: u64,
    pub whole_cycles: bool,
}

impl Default for TestSequenceSpec {
    fn default() -> Self {
        Self { segments: 12, min_s: 1.0, max_s: 4.0, lead_in_s: 5.0, seed: 2024, whole_cycles: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PatternTaskSpec {
    pub mode: PatternMode,
    /// Pattern values in training order: Hz or level numbers.
    pub patterns: Vec<f64>,
    /// Level used by every pattern in frequency mode.
    pub fixed_level: u32,
    /// Frequency used by every pattern in amplitude mode.
    pub fixed_frequency_hz: f64,
    pub levels: AmplitudeLevels,
    pub payload: PayloadSpec,
    pub window_s: f64,
    pub test: TestSequenceSpec,
    pub protocol: Protocol,
}

impl Default for PatternTaskSpec {
    fn default() -> Self {
        Self {
            mode: PatternMode::Frequency,
            patterns: vec![4.0, 2.0, 6.0],
            fixed_level: 2,
            fixed_frequency_hz: 4.0,
            levels: AmplitudeLevels::default(),
            payload: PayloadSpec::new(6.0, 'a'),
            window_s: 0.2,
            test: TestSequenceSpec::default(),
            protocol: Protocol::default(),
        }
    }
}

impl PatternTaskSpec {
    pub fn amplitude_preset() -> Self {
        Self {
            mode: PatternMode::Amplitude,
            patterns: vec![2.0, 1.0, 4.0],
            ..Self::default()
        }
    }

    fn segment(&self, value: f64, duration_s: f64) -> Result<ExcitationSegment> {
        let (amplitude_mm, frequency_hz) = match self.mode {
            PatternMode::Frequency => (self.levels.mm(self.fixed_level)?, value),
            PatternMode::Amplitude => {
                if value.fract() != 0.0 || value < 0.0 {
                    return Err(Error::InvalidParameter(format!("amplitude level {value} is not a level number")));
                }
                (self.levels.mm(value as u32)?, self.fixed_frequency_hz)
            }
        };
        Ok(ExcitationSegment { amplitude_mm, frequency_hz, duration_s })
    }

    fn training_condition(&self, value: f64) -> Result<Condition> {
        Ok(Condition {
            payload: self.payload,
            excitation: ExcitationSpec { segments: vec![self.segment(value, self.protocol.run_duration_s)?] },
        })
    }

    fn validate(&self) -> Result<()> {
        if self.patterns.is_empty() {
            return Err(Error::InvalidParameter("no patterns to train".into()));
        }
        if !(self.window_s > 0.0) {
            return Err(Error::InvalidParameter(format!("window must be positive, got {}", self.window_s)));
        }
        let t = &self.test;
        if t.segments == 0 || !(t.min_s > 0.0 && t.max_s >= t.min_s) || !(t.lead_in_s >= 0.0) {
            return Err(Error::InvalidParameter("invalid test sequence".into()));
        }
        Ok(())
    }
}

/// Piecewise-constant target: each pattern value held for `frames` rows.
pub fn pattern_target(spec: &PatternTaskSpec, frames: usize) -> TargetSignal {
    let label = match spec.mode {
        PatternMode::Frequency => "frequency_hz",
        PatternMode::Amplitude => "level",
    };
    let pieces: Vec<(f64, usize)> = spec.patterns.iter().map(|&v| (v, frames)).collect();
    TargetSignal::steps(label, &pieces)
}

/// Shortest duration holding a whole number of cycles of every
/// frequency, if one exists below `limit`.
fn common_period(freqs: &[f64], limit: f64) -> Option<f64> {
    let base = freqs.iter().copied().fold(f64::INFINITY, f64::min);
    (1..=(limit * base).ceil() as usize + 1)
        .map(|k| k as f64 / base)
        .take_while(|&t| t <= limit)
        .find(|&t| freqs.iter().all(|f| ((t * f) - (t * f).round()).abs() < 1e-9))
}

/// The test run and the symbol carried by each of its frames. The first
/// symbol is extended by the lead-in, whose frames are labelled but not
/// scored.
pub fn test_sequence(spec: &PatternTaskSpec, sample_rate: f64) -> Result<(Condition, Vec<f64>)> {
    spec.validate()?;
    let t = &spec.test;
    let freqs: Vec<f64> = spec
        .patterns
        .iter()
        .map(|&v| spec.segment(v, 1.0).map(|s| s.frequency_hz))
        .collect::<Result<_>>()?;
    let quantum = if t.whole_cycles {
        common_period(&freqs, t.min_s).unwrap_or(1.0 / sample_rate)
    } else {
        1.0 / sample_rate
    };
    let mut rng = ChaCha8Rng::seed_from_u64(t.seed);
    let mut segments = Vec::with_capacity(t.segments);
    for k in 0..t.segments {
        let value = spec.patterns[rng.random_range(0..spec.patterns.len())];
        let drawn = rng.random_range(t.min_s..=t.max_s);
        let mut duration = ((drawn / quantum).round() * quantum).max(quantum);
        if k == 0 {
            duration += ((t.lead_in_s / quantum).round() * quantum).max(0.0);
        }
        segments.push((value, spec.segment(value, duration)?));
    }
    let excitation = ExcitationSpec { segments: segments.iter().map(|s| s.1).collect() };
    let frames = (excitation.total_duration() * sample_rate).round() as usize;
    let labels = (0..frames)
        .map(|k| {
            let i = excitation.segment_at(k as f64 / sample_rate).map_or(segments.len() - 1, |(i, _)| i);
            segments[i].0
        })
        .collect();
    Ok((Condition { payload: spec.payload, excitation }, labels))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowEstimate {
    /// First row of the window within the state matrix.
    pub start: usize,
    pub frames: usize,
    /// Window centre in seconds from the first row.
    pub center_s: f64,
    pub estimate: f64,
    /// Trained value nearest to the estimate.
    pub class: f64,
}

fn nearest(values: &[f64], x: f64) -> f64 {
    values
        .iter()
        .copied()
        .min_by(|a, b| (a - x).abs().total_cmp(&(b - x).abs()))
        .expect("non-empty")
}

/// Averages the readout over consecutive windows and snaps each average to
/// the nearest trained value. A trailing partial window is dropped.
pub fn recognize_pattern(
    test: &StateMatrix,
    w: &ReadoutWeights,
    window_s: f64,
    sample_rate: f64,
    trained: &[f64],
) -> Result<Vec<WindowEstimate>> {
    let exact = window_s * sample_rate;
    let frames = exact.round() as usize;
    if (exact - frames as f64).abs() > 1e-9 * exact.max(1.0) {
        return Err(Error::InvalidParameter(format!(
            "window {window_s} s is not a whole number of {sample_rate} Hz frames"
        )));
    }
    if frames == 0 || test.rows() < frames {
        return Err(Error::InsufficientSamples(format!(
            "{} rows cannot fill a {frames}-frame window",
            test.rows()
        )));
    }
    if trained.is_empty() {
        return Err(Error::InvalidParameter("no trained values to classify against".into()));
    }
    let out = reservoir_output(test, w)?;
    let col = out.column(0);
    Ok((0..test.rows() / frames)
        .map(|k| {
            let start = k * frames;
            let estimate = col.rows(start, frames).mean();
            WindowEstimate {
                start,
                frames,
                center_s: (start as f64 + frames as f64 / 2.0) / sample_rate,
                estimate,
                class: nearest(trained, estimate),
            }
        })
        .collect())
}

/// Symbol filling most of `labels`; ties go to the earlier symbol.
fn majority(labels: &[f64]) -> (f64, bool) {
    let mut counts: Vec<(f64, usize)> = Vec::new();
    for &l in labels {
        match counts.iter_mut().find(|(v, _)| *v == l) {
            Some(c) => c.1 += 1,
            None => counts.push((l, 1)),
        }
    }
    let best = counts.iter().copied().fold((f64::NAN, 0), |a, c| if c.1 > a.1 { c } else { a });
    (best.0, counts.len() > 1)
}

/// Trains on separate runs of each pattern, then classifies a random test
/// sequence window by window.
///
/// Metrics: `accuracy` over windows lying inside one symbol,
/// `accuracy_all` with straddling windows scored by majority, `rmse` of
/// the window estimates over the same inside windows, `rmse_all` over
/// every test window and `train_rmse` of window estimates on the training
/// runs.
pub fn run_pattern_task(spec: &PatternTaskSpec, source: &dyn TrajectorySource) -> Result<TaskResult> {
    spec.validate()?;
    let rate = source.sample_rate();
    let train_conds: Vec<Condition> = spec.patterns.iter().map(|&v| spec.training_condition(v)).collect::<Result<_>>()?;
    let (test_cond, labels) = test_sequence(spec, rate)?;
    let mut all = train_conds.clone();
    all.push(test_cond.clone());
    let trajs = source.trajectories(&all)?;

    let train: Vec<StateMatrix> = trajs[..train_conds.len()].iter().map(|t| spec.protocol.states(t)).collect::<Result<_>>()?;
    let s = stack_segments(&train)?;
    let pieces: Vec<(f64, usize)> = spec.patterns.iter().zip(&train).map(|(&v, m)| (v, m.rows())).collect();
    let y = TargetSignal::steps(pattern_target(spec, 0).labels()[0].as_str(), &pieces);
    let w = train_readout(&s, &y, spec.protocol.lambda)?;

    let mut series = Vec::new();
    let mut training = Vec::new();
    let (mut sq, mut nwin) = (0.0, 0usize);
    for ((cond, traj), (&value, st)) in train_conds.iter().zip(&trajs).zip(spec.patterns.iter().zip(&train)) {
        let est = recognize_pattern(st, &w, spec.window_s, rate, &spec.patterns)?;
        sq += est.iter().map(|e| (e.estimate - value).powi(2)).sum::<f64>();
        nwin += est.len();
        let mean = est.iter().map(|e| e.estimate).sum::<f64>() / est.len() as f64;
        let ok = est.iter().filter(|e| e.class == value).count();
        training.push(ConditionOutcome {
            label: cond.label(),
            trajectory_id: traj.id().to_string(),
            truth: vec![value],
            prediction: vec![mean],
            error: vec![(mean - value).abs()],
            correct: Some(ok == est.len()),
        });
        series.push(OutputSeries {
            label: cond.label(),
            times: frame_times(traj, st),
            outputs: columns(&reservoir_output(st, &w)?),
            targets: vec![vec![value; st.rows()]],
        });
    }
    let train_rmse = (sq / nwin as f64).sqrt();

    let test_traj = &trajs[train_conds.len()];
    let lead = (spec.test.lead_in_s * rate).round() as usize;
    let test_states = spec.protocol.select(StateMatrix::from_frames(test_traj, lead, test_traj.samples())?)?;
    let test_labels = &labels[lead..];
    let windows = recognize_pattern(&test_states, &w, spec.window_s, rate, &spec.patterns)?;

    let mut conditions = Vec::with_capacity(windows.len());
    let (mut inside, mut inside_ok, mut all_ok, mut sq, mut sq_inside) = (0usize, 0usize, 0usize, 0.0, 0.0);
    for (k, win) in windows.iter().enumerate() {
        let (truth, straddles) = majority(&test_labels[win.start..win.start + win.frames]);
        let ok = win.class == truth;
        all_ok += ok as usize;
        if !straddles {
            inside += 1;
            inside_ok += ok as usize;
            sq_inside += (win.estimate - truth).powi(2);
        }
        sq += (win.estimate - truth).powi(2);
        conditions.push(ConditionOutcome {
            label: format!("window {k} at {:.2} s{}", win.center_s, if straddles { " (boundary)" } else { "" }),
            trajectory_id: test_traj.id().to_string(),
            truth: vec![truth],
            prediction: vec![win.estimate],
            error: vec![(win.estimate - truth).abs()],
            correct: Some(ok),
        });
    }
    series.push(OutputSeries {
        label: test_cond.label(),
        times: frame_times(test_traj, &test_states),
        outputs: columns(&reservoir_output(&test_states, &w)?),
        targets: vec![test_labels.to_vec()],
    });

    let mut metrics = BTreeMap::new();
    metrics.insert("train_rmse".into(), train_rmse);
    let per_inside = |v: f64| if inside == 0 { f64::NAN } else { v / inside as f64 };
    metrics.insert("rmse".into(), per_inside(sq_inside).sqrt());
    metrics.insert("rmse_all".into(), (sq / windows.len() as f64).sqrt());
    metrics.insert("accuracy".into(), if inside == 0 { 0.0 } else { inside_ok as f64 / inside as f64 });
    metrics.insert("accuracy_all".into(), all_ok as f64 / windows.len() as f64);
    metrics.insert("windows".into(), windows.len() as f64);
    metrics.insert("boundary_windows".into(), (windows.len() - inside) as f64);
    Ok(TaskResult {
        task: match spec.mode {
            PatternMode::Frequency => "pattern_frequency".into(),
            PatternMode::Amplitude => "pattern_amplitude".into(),
        },
        spec: serde_json::to_value(spec)?,
        training,
        conditions,
        metrics,
        weights: w,
        series,
    })
}

/// The same protocol read out from the four bottom-row nodes next to the
/// clamp, which mostly replay the base motion.
pub fn baseline_bottom_nodes(spec: &PatternTaskSpec, source: &dyn TrajectorySource) -> Result<TaskResult> {
    let probe = source.trajectory(&spec.training_condition(spec.patterns[0])?)?;
    let ids: Vec<usize> = (0..4.min(probe.meta.cols)).collect();
    let mut base = spec.clone();
    base.protocol.channels = Some(ChannelSelection::Ids(ids));
    let mut r = run_pattern_task(&base, source)?;
    r.task.push_str("_baseline");
    Ok(r)
}
