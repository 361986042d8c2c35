use super::{StateMatrix, TargetSignal};
use crate::error::{Error, Result};
use nalgebra::{DMatrix, SVD};
use serde::{Deserialize, Serialize};

/// Singular values below this fraction of the largest are treated as zero
/// by the pseudo-inverse.
pub const PINV_CUTOFF: f64 = 1e-10;

/// Linear readout `y = w0 + sum_i w_i s_i`, one column per task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReadoutWeights {
    pub tasks: Vec<String>,
    pub bias: Vec<f64>,
    /// `weights[task][k]` multiplies channel `channel_map[k]`.
    pub weights: Vec<Vec<f64>>,
    pub channel_map: Vec<usize>,
    pub lambda: f64,
}

impl ReadoutWeights {
    pub fn task_count(&self) -> usize {
        self.tasks.len()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let w: Self = serde_json::from_str(text)?;
        if w.bias.len() != w.tasks.len() || w.weights.len() != w.tasks.len() {
            return Err(Error::DimensionMismatch("readout has ragged task arrays".into()));
        }
        if w.weights.iter().any(|col| col.len() != w.channel_map.len()) {
            return Err(Error::DimensionMismatch(
                "weight count differs from channel count".into(),
            ));
        }
        Ok(w)
    }
}

/// Least-squares fit of `y` on `[1 S]`.
///
/// `lambda == 0` uses the SVD pseudo-inverse; `lambda > 0` solves the ridge
/// normal equations with the bias left unpenalized.
pub fn train_readout(s: &StateMatrix, y: &TargetSignal, lambda: f64) -> Result<ReadoutWeights> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidParameter(format!("ridge parameter must be >= 0, got {lambda}")));
    }
    if s.rows() != y.rows() {
        return Err(Error::DimensionMismatch(format!(
            "{} state rows but {} target rows",
            s.rows(),
            y.rows()
        )));
    }
    if s.rows() == 0 {
        return Err(Error::InsufficientSamples("no training rows".into()));
    }
    let n = s.channels();
    let mut a = DMatrix::from_element(s.rows(), n + 1, 1.0);
    a.columns_mut(1, n).copy_from(s.values());

    let w = if lambda == 0.0 {
        let svd = SVD::new(a, true, true);
        let cutoff = PINV_CUTOFF * svd.singular_values.max();
        svd.solve(y.values(), cutoff)
            .map_err(|e| Error::SingularSystem(e.to_string()))?
    } else {
        let mut g = a.transpose() * &a;
        for i in 1..=n {
            g[(i, i)] += lambda;
        }
        let rhs = a.transpose() * y.values();
        g.cholesky()
            .ok_or_else(|| Error::SingularSystem("ridge normal matrix is not positive definite".into()))?
            .solve(&rhs)
    };

    let tasks = y.labels().to_vec();
    Ok(ReadoutWeights {
        bias: (0..tasks.len()).map(|t| w[(0, t)]).collect(),
        weights: (0..tasks.len()).map(|t| w.column(t).rows(1, n).iter().copied().collect()).collect(),
        channel_map: s.channel_map().to_vec(),
        tasks,
        lambda,
    })
}

/// Readout applied to every row; one output column per task.
///
/// `s` may hold the trained channels in any column order. Terms are summed
/// in ascending channel id so the result does not depend on that order.
pub fn reservoir_output(s: &StateMatrix, w: &ReadoutWeights) -> Result<DMatrix<f64>> {
    let mut pairs: Vec<(usize, usize, usize)> = Vec::with_capacity(w.channel_map.len());
    if s.channels() != w.channel_map.len() {
        return Err(Error::ChannelMismatch(format!(
            "states have {} channels, readout expects {}",
            s.channels(),
            w.channel_map.len()
        )));
    }
    for (k, &id) in w.channel_map.iter().enumerate() {
        let col = s.channel_map().iter().position(|&c| c == id).ok_or_else(|| {
            Error::ChannelMismatch(format!("readout channel {id} missing from states"))
        })?;
        pairs.push((id, col, k));
    }
    pairs.sort_unstable();
    let v = s.values();
    let mut out = DMatrix::zeros(s.rows(), w.task_count());
    for t in 0..w.task_count() {
        let wt = &w.weights[t];
        for r in 0..s.rows() {
            let mut acc = w.bias[t];
            for &(_, col, k) in &pairs {
                acc += wt[k] * v[(r, col)];
            }
            out[(r, t)] = acc;
        }
    }
    Ok(out)
}

pub fn rmse(y: &[f64], yhat: &[f64]) -> Result<f64> {
    if y.len() != yhat.len() {
        return Err(Error::DimensionMismatch(format!(
            "series of length {} and {}",
            y.len(),
            yhat.len()
        )));
    }
    if y.is_empty() {
        return Err(Error::InsufficientSamples("empty series".into()));
    }
    let sq: f64 = y.iter().zip(yhat).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((sq / y.len() as f64).sqrt())
}
