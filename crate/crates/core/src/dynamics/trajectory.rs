use super::excitation::ExcitationSpec;
use super::model::PayloadSpec;
use crate::error::{Error, Result};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Everything needed to reproduce or identify a recorded run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    pub id: String,
    pub sample_rate: f64,
    pub rows: usize,
    pub cols: usize,
    pub samples: usize,
    pub payload: Option<PayloadSpec>,
    pub excitation: ExcitationSpec,
    pub seed: u64,
    pub model_hash: String,
    /// Standard deviation of the tracking noise added after recording, mm.
    #[serde(default)]
    pub measurement_noise_mm: f64,
}

impl TrajectoryMeta {
    /// Short content hash over every field except `id`.
    pub fn compute_id(&self) -> String {
        let mut m = self.clone();
        m.id = String::new();
        let json = serde_json::to_vec(&m).expect("metadata serializes");
        hex::encode(&Sha256::digest(&json)[..8])
    }
}

/// Vertical displacement (mm, lab frame, relative to the rest mesh) of
/// every vertex, sampled at a fixed rate. One column per node, row-major
/// node order.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub meta: TrajectoryMeta,
    pub times: Vec<f64>,
    pub states: DMatrix<f64>,
}

/// CSV column name of a node: `node_<row><col>`.
pub fn channel_name(cols: usize, node: usize) -> String {
    format!("node_{}{}", node / cols, node % cols)
}

impl Trajectory {
    pub fn samples(&self) -> usize {
        self.states.nrows()
    }

    pub fn node_count(&self) -> usize {
        self.states.ncols()
    }

    pub fn sample_rate(&self) -> f64 {
        self.meta.sample_rate
    }

    pub fn id(&self) -> &str {
        &self.meta.id
    }

    pub fn column(&self, node: usize) -> Vec<f64> {
        self.states.column(node).iter().copied().collect()
    }

    pub fn channel_names(&self) -> Vec<String> {
        (0..self.node_count()).map(|n| channel_name(self.meta.cols, n)).collect()
    }

    /// Frames `start..end`, keeping metadata and absolute times.
    pub fn slice(&self, start: usize, end: usize) -> Result<Trajectory> {
        if start >= end || end > self.samples() {
            return Err(Error::InsufficientSamples(format!(
                "frame range {start}..{end} outside 0..{}",
                self.samples()
            )));
        }
        Ok(Trajectory {
            meta: self.meta.clone(),
            times: self.times[start..end].to_vec(),
            states: self.states.rows(start, end - start).into_owned(),
        })
    }

    /// Adds seeded zero-mean Gaussian noise of `sigma_mm` to every sample,
    /// emulating marker tracking error, and refreshes the id.
    pub fn add_measurement_noise(&mut self, sigma_mm: f64, seed: u64) -> Result<()> {
        if !(sigma_mm >= 0.0 && sigma_mm.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "measurement noise must be non-negative, got {sigma_mm}"
            )));
        }
        if sigma_mm == 0.0 {
            return Ok(());
        }
        let normal = Normal::new(0.0, sigma_mm).expect("valid sigma");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1);
        for v in self.states.iter_mut() {
            *v += normal.sample(&mut rng);
        }
        self.meta.measurement_noise_mm += sigma_mm;
        self.meta.id = self.meta.compute_id();
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.times.len() != self.states.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "{} timestamps for {} samples",
                self.times.len(),
                self.states.nrows()
            )));
        }
        if self.states.ncols() != self.meta.rows * self.meta.cols {
            return Err(Error::DimensionMismatch(format!(
                "{} channels for a {}x{} sheet",
                self.states.ncols(),
                self.meta.rows,
                self.meta.cols
            )));
        }
        if let Some((i, _)) = self.states.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            let n = self.states.nrows();
            return Err(Error::InvalidParameter(format!(
                "non-finite displacement at sample {}, node {}",
                i % n,
                i / n
            )));
        }
        Ok(())
    }
}
