//! Where task protocols get their trajectories from.

use crate::dynamics::{attach_payload, simulate, ExcitationSpec, PayloadSpec, ReservoirModel, Trajectory};
use crate::error::{Error, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::HashMap;
use std::sync::Mutex;

/// One experimental run: a payload on the sheet and the base motion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub payload: PayloadSpec,
    pub excitation: ExcitationSpec,
}

impl Condition {
    pub fn sine(mass_g: f64, position: char, amplitude_mm: f64, frequency_hz: f64, duration_s: f64) -> Self {
        Self {
            payload: PayloadSpec::new(mass_g, position),
            excitation: ExcitationSpec::sine(amplitude_mm, frequency_hz, duration_s),
        }
    }

    pub fn duration(&self) -> f64 {
        self.excitation.total_duration()
    }

    /// Canonical text form; equal conditions have equal keys.
    pub fn key(&self) -> String {
        serde_json::to_string(self).expect("condition serializes")
    }

    /// Hex SHA-256 of [`Condition::key`].
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.key().as_bytes()))
    }

    /// Seed for this condition within a campaign, independent of the order
    /// conditions are run in.
    pub fn seed(&self, campaign_seed: u64) -> u64 {
        let mut h = Sha256::new();
        h.update(campaign_seed.to_le_bytes());
        h.update(self.key().as_bytes());
        let d = h.finalize();
        u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
    }

    pub fn label(&self) -> String {
        let segs: Vec<String> = self
            .excitation
            .segments
            .iter()
            .map(|s| format!("{}Hz/{}mm/{}s", s.frequency_hz, s.amplitude_mm, s.duration_s))
            .collect();
        format!("{}g@{} {}", self.payload.mass_g, self.payload.position, segs.join("+"))
    }
}

/// Supplies the trajectory recorded for a condition, simulated or measured.
pub trait TrajectorySource: Sync {
    fn sample_rate(&self) -> f64;

    fn trajectory(&self, condition: &Condition) -> Result<Trajectory>;

    /// Trajectories for several conditions, in order.
    fn trajectories(&self, conditions: &[Condition]) -> Result<Vec<Trajectory>> {
        conditions.iter().map(|c| self.trajectory(c)).collect()
    }
}

/// Simulates on demand and memoizes by condition.
pub struct SimulatedSource {
    model: ReservoirModel,
    sample_rate: f64,
    campaign_seed: u64,
    measurement_noise_mm: f64,
    cache: Mutex<HashMap<String, Trajectory>>,
}

impl SimulatedSource {
    pub fn new(model: ReservoirModel, sample_rate: f64, campaign_seed: u64) -> Self {
        Self {
            model: model.unloaded(),
            sample_rate,
            campaign_seed,
            measurement_noise_mm: 0.0,
            cache: Mutex::new(HashMap::new()),
        }
    }

    /// Tracking noise (standard deviation, mm) added to every recording.
    pub fn with_measurement_noise(mut self, sigma_mm: f64) -> Self {
        self.measurement_noise_mm = sigma_mm;
        self
    }

    pub fn model(&self) -> &ReservoirModel {
        &self.model
    }

    pub fn campaign_seed(&self) -> u64 {
        self.campaign_seed
    }

    pub fn measurement_noise_mm(&self) -> f64 {
        self.measurement_noise_mm
    }

    /// Simulates `condition` afresh, bypassing the cache.
    pub fn record(&self, condition: &Condition) -> Result<Trajectory> {
        let model = attach_payload(&self.model, condition.payload)?;
        let seed = condition.seed(self.campaign_seed);
        let mut t = simulate(&model, &condition.excitation, condition.duration(), self.sample_rate, seed)?;
        t.add_measurement_noise(self.measurement_noise_mm, seed)?;
        Ok(t)
    }

    fn cached(&self, key: &str) -> Option<Trajectory> {
        self.cache.lock().expect("cache lock").get(key).cloned()
    }
}

impl TrajectorySource for SimulatedSource {
    fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    fn trajectory(&self, condition: &Condition) -> Result<Trajectory> {
        let key = condition.key();
        if let Some(t) = self.cached(&key) {
            return Ok(t);
        }
        let t = self.record(condition)?;
        self.cache.lock().expect("cache lock").insert(key, t.clone());
        Ok(t)
    }

    /// Missing runs are simulated in parallel; results do not depend on
    /// scheduling because every run has its own seed.
    fn trajectories(&self, conditions: &[Condition]) -> Result<Vec<Trajectory>> {
        let mut missing: Vec<&Condition> = Vec::new();
        for c in conditions {
            if self.cached(&c.key()).is_none() && !missing.iter().any(|m| *m == c) {
                missing.push(c);
            }
        }
        let fresh: Vec<(String, Result<Trajectory>)> =
            missing.par_iter().map(|c| (c.key(), self.record(c))).collect();
        {
            let mut cache = self.cache.lock().expect("cache lock");
            for (key, t) in fresh {
                cache.insert(key, t?);
            }
        }
        conditions.iter().map(|c| self.trajectory(c)).collect()
    }
}

/// Fails unless `traj` was recorded at `expected` Hz.
pub fn check_rate(traj: &Trajectory, expected: f64) -> Result<()> {
    if (traj.sample_rate() - expected).abs() > 1e-9 * expected {
        return Err(Error::RateMismatch { expected, found: traj.sample_rate() });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds_depend_on_condition_and_campaign() {
        let a = Condition::sine(3.0, 'a', 4.0, 3.0, 15.0);
        let b = Condition::sine(3.0, 'b', 4.0, 3.0, 15.0);
        assert_eq!(a.seed(1), a.clone().seed(1));
        assert_ne!(a.seed(1), b.seed(1));
        assert_ne!(a.seed(1), a.seed(2));
        assert_eq!(a.hash().len(), 64);
    }
}
