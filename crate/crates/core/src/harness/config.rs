use crate::dynamics::{station_index, ModelParams, ReservoirModel, STATION_LABELS};
use crate::error::{Error, Result};
use crate::tasks::{
    AmplitudeLevels, Condition, MultitaskSpec, PatternTaskSpec, PositionTaskSpec, Protocol, SimulatedSource,
    SweepSpec, SweepTask, WeightMatrixSpec, WeightTaskSpec,
};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::path::{Path, PathBuf};

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

/// Conditions simulated by a campaign: every mass at every position and
/// frequency, one sine run each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub masses_g: Vec<f64>,
    pub positions: Vec<char>,
    pub frequencies_hz: Vec<f64>,
    pub amplitude_level: u32,
    pub duration_s: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self::desk()
    }
}

impl GridSpec {
    /// 6 masses × 4 positions × 3 frequencies: small enough to simulate in
    /// a minute or two on one core.
    pub fn desk() -> Self {
        Self {
            masses_g: vec![3.0, 6.0, 9.0, 12.0, 15.0, 18.0],
            positions: vec!['a', 'c', 'f', 'h'],
            frequencies_hz: vec![1.0, 3.0, 5.0],
            amplitude_level: 2,
            duration_s: 15.0,
        }
    }

    /// 16 masses × 8 positions × 7 frequencies.
    pub fn full() -> Self {
        Self {
            masses_g: (3..=18).map(f64::from).collect(),
            positions: STATION_LABELS.to_vec(),
            frequencies_hz: vec![1.0, 1.5, 2.0, 3.5, 4.0, 5.5, 6.0],
            ..Self::desk()
        }
    }

    pub fn len(&self) -> usize {
        self.masses_g.len() * self.positions.len() * self.frequencies_hz.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Mass-major, then position, then frequency.
    pub fn conditions(&self, levels: &AmplitudeLevels) -> Result<Vec<Condition>> {
        let amp = levels.mm(self.amplitude_level)?;
        let mut out = Vec::with_capacity(self.len());
        for &m in &self.masses_g {
            for &p in &self.positions {
                for &f in &self.frequencies_hz {
                    out.push(Condition::sine(m, p, amp, f, self.duration_s));
                }
            }
        }
        Ok(out)
    }

    pub fn max_frequency(&self) -> Option<f64> {
        self.frequencies_hz.iter().copied().reduce(f64::max)
    }
}

/// Specs for every task the harness can run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaskSuite {
    pub weight: WeightTaskSpec,
    pub weight_matrix: WeightMatrixSpec,
    /// Template for position runs; the survey replaces mass and frequency.
    pub position: PositionTaskSpec,
    pub pattern: PatternTaskSpec,
    pub pattern_amplitude: PatternTaskSpec,
    pub multitask: MultitaskSpec,
    pub multitask_frequency: MultitaskSpec,
    pub sweep_weight: SweepSpec,
    pub sweep_pattern: SweepSpec,
}

/// Ridge used by the shipped task defaults. Noise-free simulated states
/// are far better conditioned than camera data, and the plain
/// pseudo-inverse fits simulator round-off.
pub const DEFAULT_LAMBDA: f64 = 1e-4;
/// The weight × position readout is fitted to four runs; it needs a
/// stronger ridge to generalise across stations.
pub const DEFAULT_MULTITASK_LAMBDA: f64 = 1e-2;

impl Default for TaskSuite {
    fn default() -> Self {
        let p = Protocol { lambda: DEFAULT_LAMBDA, ..Protocol::default() };
        let pm = Protocol { lambda: DEFAULT_MULTITASK_LAMBDA, ..Protocol::default() };
        let weight = WeightTaskSpec { protocol: p.clone(), ..Default::default() };
        let pattern = PatternTaskSpec { protocol: p.clone(), ..Default::default() };
        Self {
            weight_matrix: WeightMatrixSpec { protocol: p.clone(), ..Default::default() },
            position: PositionTaskSpec { protocol: p.clone(), ..Default::default() },
            pattern_amplitude: PatternTaskSpec { protocol: p.clone(), ..PatternTaskSpec::amplitude_preset() },
            multitask: MultitaskSpec { protocol: pm.clone(), ..MultitaskSpec::weight_position() },
            multitask_frequency: MultitaskSpec { protocol: pm, ..MultitaskSpec::weight_frequency() },
            sweep_weight: SweepSpec { task: SweepTask::Weight(weight.clone()), ..Default::default() },
            sweep_pattern: SweepSpec { task: SweepTask::Pattern(pattern.clone()), ..Default::default() },
            weight,
            pattern,
        }
    }
}

/// Everything needed to reproduce an experiment, stored as one versioned
/// JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub model: ModelParams,
    pub levels: AmplitudeLevels,
    pub sample_rate_hz: f64,
    pub campaign_seed: u64,
    /// Tracking noise added to every recording, mm.
    pub measurement_noise_mm: f64,
    pub grid: GridSpec,
    pub tasks: TaskSuite,
    pub output_dir: PathBuf,
    /// Worker threads; `None` uses every available core.
    pub parallelism: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            schema_version: CONFIG_SCHEMA_VERSION,
            model: ModelParams::default(),
            levels: AmplitudeLevels::default(),
            sample_rate_hz: 25.0,
            campaign_seed: 1,
            measurement_noise_mm: 0.0,
            grid: GridSpec::desk(),
            tasks: TaskSuite::default(),
            output_dir: PathBuf::from("out"),
            parallelism: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let raw: Value = serde_json::from_str(text)?;
        match raw.get("schema_version").and_then(Value::as_u64) {
            Some(v) if v == CONFIG_SCHEMA_VERSION as u64 => {}
            Some(v) => {
                return Err(Error::InvalidParameter(format!(
                    "config schema version {v} is not supported (expected {CONFIG_SCHEMA_VERSION})"
                )))
            }
            None => return Err(Error::InvalidParameter("config has no schema_version".into())),
        }
        let c: Self = serde_json::from_value(raw)?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json() + "\n")?;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(Error::InvalidParameter(format!("unsupported schema version {}", self.schema_version)));
        }
        self.model.validate()?;
        if !(self.sample_rate_hz > 0.0) {
            return Err(Error::InvalidParameter(format!("sample rate must be positive, got {}", self.sample_rate_hz)));
        }
        if !(self.measurement_noise_mm >= 0.0) {
            return Err(Error::InvalidParameter("measurement noise must be non-negative".into()));
        }
        if self.parallelism == Some(0) {
            return Err(Error::InvalidParameter("parallelism must be at least 1".into()));
        }
        let g = &self.grid;
        if g.is_empty() {
            return Err(Error::InvalidParameter("the run grid is empty".into()));
        }
        for &p in &g.positions {
            station_index(p)?;
        }
        if let Some(f) = g.frequencies_hz.iter().find(|f| !(**f > 0.0 && **f < 0.5 * self.sample_rate_hz)) {
            return Err(Error::InvalidParameter(format!("grid frequency {f} Hz is not below Nyquist")));
        }
        if let Some(m) = g.masses_g.iter().find(|m| !(**m >= 0.0)) {
            return Err(Error::InvalidParameter(format!("grid mass {m} g is negative")));
        }
        if !(g.duration_s > 0.0) {
            return Err(Error::InvalidParameter("grid run duration must be positive".into()));
        }
        self.levels.mm(g.amplitude_level)?;
        Ok(())
    }

    /// Sets the field at a dotted path (`model.rayleigh_alpha`,
    /// `grid.frequencies_hz.0`) from text. Text that parses as JSON is used
    /// as such; anything else is taken as a string.
    pub fn set_field(&mut self, path: &str, text: &str) -> Result<()> {
        let mut root = serde_json::to_value(&*self)?;
        let mut slot = &mut root;
        for part in path.split('.') {
            slot = match slot {
                Value::Object(map) => map.get_mut(part),
                Value::Array(items) => part.parse::<usize>().ok().and_then(|i| items.get_mut(i)),
                _ => None,
            }
            .ok_or_else(|| Error::InvalidParameter(format!("no config field `{path}`")))?;
        }
        *slot = serde_json::from_str(text).unwrap_or_else(|_| Value::String(text.to_string()));
        let updated: Self = serde_json::from_value(root)
            .map_err(|e| Error::InvalidParameter(format!("cannot set `{path}` to `{text}`: {e}")))?;
        updated.validate()?;
        *self = updated;
        Ok(())
    }

    pub fn model(&self) -> Result<ReservoirModel> {
        ReservoirModel::from_params(&self.model)
    }

    /// An in-memory source for this configuration.
    pub fn simulated_source(&self) -> Result<SimulatedSource> {
        Ok(SimulatedSource::new(self.model()?, self.sample_rate_hz, self.campaign_seed)
            .with_measurement_noise(self.measurement_noise_mm))
    }

    pub fn threads(&self) -> usize {
        self.parallelism
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
    }
}
