//! State matrices, target signals and linear readouts.

mod readout;

pub use readout::{reservoir_output, rmse, train_readout, ReadoutWeights, PINV_CUTOFF};

use crate::dynamics::Trajectory;
use crate::error::{Error, Result};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;

/// Frames `start..end` of one trajectory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub trajectory: String,
    pub start: usize,
    pub end: usize,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }
}

/// Reservoir states, one row per frame and one column per node channel.
#[derive(Debug, Clone, PartialEq)]
pub struct StateMatrix {
    values: DMatrix<f64>,
    channel_map: Vec<usize>,
    origin: Vec<Segment>,
}

impl StateMatrix {
    pub fn new(values: DMatrix<f64>, channel_map: Vec<usize>, origin: Vec<Segment>) -> Result<Self> {
        if values.ncols() != channel_map.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} columns but {} channel ids",
                values.ncols(),
                channel_map.len()
            )));
        }
        let mut seen = HashSet::new();
        if let Some(dup) = channel_map.iter().find(|c| !seen.insert(**c)) {
            return Err(Error::InvalidParameter(format!("channel {dup} listed twice")));
        }
        let covered: usize = origin.iter().map(Segment::len).sum();
        if covered != values.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "segments cover {covered} rows of {}",
                values.nrows()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("state matrix holds non-finite values".into()));
        }
        Ok(Self { values, channel_map, origin })
    }

    /// All frames and channels of `traj`.
    pub fn from_trajectory(traj: &Trajectory) -> Result<Self> {
        Self::from_frames(traj, 0, traj.samples())
    }

    /// Frames `start..end` of `traj`, all channels.
    pub fn from_frames(traj: &Trajectory, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > traj.samples() {
            return Err(Error::InsufficientSamples(format!(
                "frame range {start}..{end} outside 0..{}",
                traj.samples()
            )));
        }
        Self::new(
            traj.states.rows(start, end - start).into_owned(),
            (0..traj.node_count()).collect(),
            vec![Segment { trajectory: traj.id().to_string(), start, end }],
        )
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn channel_map(&self) -> &[usize] {
        &self.channel_map
    }

    pub fn origin(&self) -> &[Segment] {
        &self.origin
    }

    pub fn rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn channels(&self) -> usize {
        self.values.ncols()
    }
}

/// Keeps the frames between the first `head` and last `tail` seconds.
/// Values are left in the lab frame; the readout bias absorbs offsets.
pub fn trim_washout(traj: &Trajectory, head: f64, tail: f64) -> Result<StateMatrix> {
    if !(head >= 0.0 && tail >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "washout must be non-negative, got head {head} s, tail {tail} s"
        )));
    }
    let rate = traj.sample_rate();
    let n = traj.samples();
    let start = (head * rate).round() as usize;
    let drop = (tail * rate).round() as usize;
    if start + drop >= n {
        return Err(Error::InsufficientSamples(format!(
            "washout of {head} s + {tail} s leaves nothing of a {:.3} s run",
            n as f64 / rate
        )));
    }
    StateMatrix::from_frames(traj, start, n - drop)
}

/// Row-wise concatenation.
pub fn stack_segments(parts: &[StateMatrix]) -> Result<StateMatrix> {
    let first = parts
        .first()
        .ok_or_else(|| Error::InsufficientSamples("nothing to stack".into()))?;
    for (i, p) in parts.iter().enumerate().skip(1) {
        if p.channel_map != first.channel_map {
            return Err(Error::ChannelMismatch(format!(
                "part {i} has channels {:?}, expected {:?}",
                p.channel_map, first.channel_map
            )));
        }
    }
    let rows: usize = parts.iter().map(StateMatrix::rows).sum();
    let mut values = DMatrix::zeros(rows, first.channels());
    let mut r = 0;
    for p in parts {
        values.rows_mut(r, p.rows()).copy_from(&p.values);
        r += p.rows();
    }
    let origin = parts.iter().flat_map(|p| p.origin.iter().cloned()).collect();
    StateMatrix::new(values, first.channel_map.clone(), origin)
}

/// Which channels [`select_channels`] keeps.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelSelection {
    Ids(Vec<usize>),
    /// `count` channels drawn uniformly without replacement.
    Random { count: usize, seed: u64 },
}

/// Channel ids picked by `selection` from `available`, in the order they
/// will appear as columns. Random draws come back sorted.
pub fn resolve_selection(available: &[usize], selection: &ChannelSelection) -> Result<Vec<usize>> {
    match selection {
        ChannelSelection::Ids(ids) => {
            if ids.is_empty() {
                return Err(Error::InvalidParameter("empty channel selection".into()));
            }
            let mut seen = HashSet::new();
            for &id in ids {
                if !available.contains(&id) {
                    return Err(Error::UnknownChannel(id));
                }
                if !seen.insert(id) {
                    return Err(Error::InvalidParameter(format!("channel {id} selected twice")));
                }
            }
            Ok(ids.clone())
        }
        &ChannelSelection::Random { count, seed } => {
            if count == 0 || count > available.len() {
                return Err(Error::InvalidParameter(format!(
                    "cannot draw {count} of {} channels",
                    available.len()
                )));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut ids: Vec<usize> = rand::seq::index::sample(&mut rng, available.len(), count)
                .into_iter()
                .map(|i| available[i])
                .collect();
            ids.sort_unstable();
            Ok(ids)
        }
    }
}

pub fn select_channels(s: &StateMatrix, selection: &ChannelSelection) -> Result<StateMatrix> {
    let ids = resolve_selection(&s.channel_map, selection)?;
    let cols: Vec<usize> = ids
        .iter()
        .map(|id| s.channel_map.iter().position(|c| c == id).expect("resolved id"))
        .collect();
    let values = s.values.select_columns(&cols);
    StateMatrix::new(values, ids, s.origin.clone())
}

/// Reference outputs, one column per task, aligned row for row with a
/// [`StateMatrix`].
#[derive(Debug, Clone, PartialEq)]
pub struct TargetSignal {
    values: DMatrix<f64>,
    labels: Vec<String>,
}

impl TargetSignal {
    pub fn new(values: DMatrix<f64>, labels: Vec<String>) -> Result<Self> {
        if values.ncols() != labels.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} target columns but {} labels",
                values.ncols(),
                labels.len()
            )));
        }
        if values.ncols() == 0 {
            return Err(Error::InvalidParameter("target has no columns".into()));
        }
        Ok(Self { values, labels })
    }

    pub fn single(label: &str, values: Vec<f64>) -> Self {
        let n = values.len();
        Self {
            values: DMatrix::from_vec(n, 1, values),
            labels: vec![label.to_string()],
        }
    }

    /// Piecewise-constant column: `value` repeated `frames` times per piece.
    pub fn steps(label: &str, pieces: &[(f64, usize)]) -> Self {
        let values = pieces.iter().flat_map(|&(v, n)| std::iter::repeat_n(v, n)).collect();
        Self::single(label, values)
    }

    /// Side-by-side columns of targets with equal row counts.
    pub fn hstack(parts: &[TargetSignal]) -> Result<Self> {
        let rows = parts.first().map_or(0, TargetSignal::rows);
        if parts.iter().any(|p| p.rows() != rows) {
            return Err(Error::DimensionMismatch("targets differ in length".into()));
        }
        let cols: usize = parts.iter().map(|p| p.values.ncols()).sum();
        let mut values = DMatrix::zeros(rows, cols);
        let mut c = 0;
        for p in parts {
            values.columns_mut(c, p.values.ncols()).copy_from(&p.values);
            c += p.values.ncols();
        }
        Self::new(values, parts.iter().flat_map(|p| p.labels.clone()).collect())
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.values.column(j).iter().copied().collect()
    }
}
