use super::config::ExperimentConfig;
use crate::dynamics::{channel_name, ExcitationSpec, PayloadSpec, Trajectory, TrajectoryMeta};
use crate::error::{Error, Result};
use crate::tasks::{Condition, SimulatedSource, TrajectorySource};
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

fn sha256_file(path: &Path) -> Result<String> {
    Ok(hex::encode(Sha256::digest(std::fs::read(path)?)))
}

/// Writes via a temporary sibling and a rename, so readers never see a
/// half-written file.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// The trajectory as CSV (`t,node_00,…`, seconds and mm) plus its metadata
/// sidecar JSON.
pub fn write_trajectory(traj: &Trajectory, csv_path: &Path, meta_path: &Path) -> Result<()> {
    traj.validate()?;
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["t".to_string()];
    header.extend(traj.channel_names());
    w.write_record(&header)?;
    let mut row = Vec::with_capacity(header.len());
    for (k, t) in traj.times.iter().enumerate() {
        row.clear();
        row.push(t.to_string());
        row.extend(traj.states.row(k).iter().map(f64::to_string));
        w.write_record(&row)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    write_atomic(csv_path, &bytes)?;
    write_atomic(meta_path, (serde_json::to_string_pretty(&traj.meta)? + "\n").as_bytes())?;
    Ok(())
}

/// Sidecar fields; only the sample rate is required of external data.
#[derive(Debug, Deserialize)]
struct Sidecar {
    sample_rate: f64,
    #[serde(default = "default_rows")]
    rows: usize,
    #[serde(default = "default_cols")]
    cols: usize,
    #[serde(default)]
    id: Option<String>,
    #[serde(default)]
    samples: Option<usize>,
    #[serde(default)]
    payload: Option<PayloadSpec>,
    #[serde(default)]
    excitation: Option<ExcitationSpec>,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    model_hash: Option<String>,
    #[serde(default)]
    measurement_noise_mm: f64,
}

fn default_rows() -> usize {
    4
}

fn default_cols() -> usize {
    7
}

/// Reads a trajectory in the CSV + sidecar format, whether written by
/// [`write_trajectory`] or produced from video tracking.
///
/// Columns may come in any order. Timestamps must be evenly spaced at the
/// sidecar's sample rate. A sidecar without an `id` gets one derived from
/// the metadata and the CSV bytes.
pub fn ingest_external(csv_path: &Path, meta_path: &Path) -> Result<Trajectory> {
    let side: Sidecar = serde_json::from_str(&std::fs::read_to_string(meta_path)?)?;
    if !(side.sample_rate > 0.0) {
        return Err(Error::InvalidParameter(format!("sample rate must be positive, got {}", side.sample_rate)));
    }
    let bytes = std::fs::read(csv_path)?;
    let nodes = side.rows * side.cols;
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(bytes.as_slice());
    let header = rdr.headers()?.clone();
    let find = |name: &str| {
        header
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::Format { line: 1, message: format!("missing column `{name}`") })
    };
    let t_col = find("t")?;
    let names: Vec<String> = (0..nodes).map(|n| channel_name(side.cols, n)).collect();
    let node_cols: Vec<usize> = names.iter().map(|n| find(n)).collect::<Result<_>>()?;
    if header.len() != nodes + 1 {
        let known: Vec<&str> = std::iter::once("t").chain(names.iter().map(String::as_str)).collect();
        let extra = header.iter().find(|h| !known.contains(&h.trim())).unwrap_or("?");
        return Err(Error::Format { line: 1, message: format!("unexpected column `{extra}`") });
    }

    let mut times = Vec::new();
    let mut values = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != header.len() {
            return Err(Error::Format {
                line,
                message: format!("{} fields where the header has {}", rec.len(), header.len()),
            });
        }
        let cell = |c: usize| -> Result<f64> {
            let name = header.get(c).unwrap_or("?").trim();
            let raw = rec.get(c).unwrap_or("").trim();
            let v: f64 = raw
                .parse()
                .map_err(|_| Error::Format { line, message: format!("column `{name}`: cannot parse `{raw}`") })?;
            if !v.is_finite() {
                return Err(Error::Format { line, message: format!("column `{name}`: non-finite value `{raw}`") });
            }
            Ok(v)
        };
        times.push(cell(t_col)?);
        for &c in &node_cols {
            values.push(cell(c)?);
        }
    }
    let samples = times.len();
    if samples == 0 {
        return Err(Error::Format { line: 2, message: "no samples".into() });
    }
    if let Some(n) = side.samples.filter(|&n| n != samples) {
        return Err(Error::Format { line: samples + 1, message: format!("sidecar declares {n} samples, file has {samples}") });
    }
    let dt = 1.0 / side.sample_rate;
    for (k, t) in times.iter().enumerate() {
        if ((t - times[0]) - k as f64 * dt).abs() > 1e-3 * dt {
            let found = if samples > 1 { (samples - 1) as f64 / (times[samples - 1] - times[0]) } else { f64::NAN };
            return Err(Error::RateMismatch { expected: side.sample_rate, found });
        }
    }

    let mut meta = TrajectoryMeta {
        id: String::new(),
        sample_rate: side.sample_rate,
        rows: side.rows,
        cols: side.cols,
        samples,
        payload: side.payload,
        excitation: side.excitation.unwrap_or(ExcitationSpec { segments: Vec::new() }),
        seed: side.seed,
        model_hash: side.model_hash.unwrap_or_else(|| "external".into()),
        measurement_noise_mm: side.measurement_noise_mm,
    };
    meta.id = match side.id {
        Some(id) => id,
        None => {
            let mut h = Sha256::new();
            h.update(meta.compute_id().as_bytes());
            h.update(&bytes);
            hex::encode(&h.finalize()[..8])
        }
    };
    let traj = Trajectory { meta, times, states: DMatrix::from_row_slice(samples, nodes, &values) };
    traj.validate()?;
    Ok(traj)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum RunStatus {
    Done,
    Failed { kind: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub condition: Condition,
    /// Paths relative to the campaign directory.
    pub trajectory_file: String,
    pub metadata_file: String,
    pub trajectory_sha256: String,
    pub metadata_sha256: String,
    pub status: RunStatus,
}

/// Index of a campaign directory, keyed by condition hash.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub campaign_seed: u64,
    pub model_hash: String,
    pub sample_rate_hz: f64,
    pub measurement_noise_mm: f64,
    pub entries: BTreeMap<String, ManifestEntry>,
}

impl RunManifest {
    pub fn completed(&self) -> usize {
        self.entries.values().filter(|e| e.status == RunStatus::Done).count()
    }

    pub fn failed(&self) -> usize {
        self.entries.len() - self.completed()
    }

    fn same_campaign(&self, other: &RunManifest) -> bool {
        self.campaign_seed == other.campaign_seed
            && self.model_hash == other.model_hash
            && self.sample_rate_hz == other.sample_rate_hz
            && self.measurement_noise_mm == other.measurement_noise_mm
    }
}

pub const MANIFEST_FILE: &str = "manifest.json";
const TRAJECTORY_DIR: &str = "trajectories";

/// A campaign directory used as a trajectory source: stored runs are read
/// back after their hashes are checked, missing ones are simulated and
/// stored. The manifest is rewritten after every batch.
pub struct CampaignStore {
    dir: PathBuf,
    source: SimulatedSource,
    pool: rayon::ThreadPool,
    manifest: Mutex<RunManifest>,
}

impl CampaignStore {
    /// Opens (or creates) the campaign in `config.output_dir`. An existing
    /// manifest must belong to the same model, seed, rate and noise level.
    pub fn open(config: &ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let source = config.simulated_source()?;
        let dir = config.output_dir.clone();
        std::fs::create_dir_all(dir.join(TRAJECTORY_DIR))?;
        let fresh = RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").into(),
            campaign_seed: config.campaign_seed,
            model_hash: source.model().model_hash().to_string(),
            sample_rate_hz: config.sample_rate_hz,
            measurement_noise_mm: config.measurement_noise_mm,
            entries: BTreeMap::new(),
        };
        let path = dir.join(MANIFEST_FILE);
        let manifest = if path.exists() {
            let old: RunManifest = serde_json::from_str(&std::fs::read_to_string(&path)?)?;
            if !old.same_campaign(&fresh) {
                return Err(Error::InvalidParameter(format!(
                    "{} holds a campaign for a different model, seed, rate or noise level",
                    dir.display()
                )));
            }
            old
        } else {
            fresh
        };
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.threads())
            .build()
            .map_err(|e| Error::InvalidParameter(format!("cannot start worker pool: {e}")))?;
        Ok(Self { dir, source, pool, manifest: Mutex::new(manifest) })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn manifest(&self) -> RunManifest {
        self.manifest.lock().expect("manifest lock").clone()
    }

    fn entry(&self, hash: &str) -> Option<ManifestEntry> {
        self.manifest.lock().expect("manifest lock").entries.get(hash).cloned()
    }

    fn save_manifest(&self) -> Result<()> {
        let text = serde_json::to_string_pretty(&*self.manifest.lock().expect("manifest lock"))? + "\n";
        write_atomic(&self.dir.join(MANIFEST_FILE), text.as_bytes())
    }

    /// Reads a completed entry, failing on any hash mismatch.
    fn load(&self, e: &ManifestEntry) -> Result<Trajectory> {
        let csv = self.dir.join(&e.trajectory_file);
        let meta = self.dir.join(&e.metadata_file);
        for (path, expected) in [(&csv, &e.trajectory_sha256), (&meta, &e.metadata_sha256)] {
            let found = sha256_file(path)?;
            if &found != expected {
                return Err(Error::HashMismatch {
                    path: path.display().to_string(),
                    expected: expected.clone(),
                    found,
                });
            }
        }
        ingest_external(&csv, &meta)
    }

    /// Whether `e` is done and its files still match their hashes.
    fn intact(&self, e: &ManifestEntry) -> bool {
        e.status == RunStatus::Done
            && [(&e.trajectory_file, &e.trajectory_sha256), (&e.metadata_file, &e.metadata_sha256)]
                .iter()
                .all(|(f, h)| sha256_file(&self.dir.join(f)).is_ok_and(|found| &found == *h))
    }

    /// Simulates and writes one condition; simulation failures become a
    /// failed entry, I/O failures are returned.
    fn produce(&self, c: &Condition) -> Result<ManifestEntry> {
        let hash = c.hash();
        let trajectory_file = format!("{TRAJECTORY_DIR}/{hash}.csv");
        let metadata_file = format!("{TRAJECTORY_DIR}/{hash}.json");
        let (status, sums) = match self.source.record(c) {
            Ok(t) => {
                let csv = self.dir.join(&trajectory_file);
                let meta = self.dir.join(&metadata_file);
                write_trajectory(&t, &csv, &meta)?;
                (RunStatus::Done, (sha256_file(&csv)?, sha256_file(&meta)?))
            }
            Err(e @ (Error::Io(_) | Error::Csv(_) | Error::Json(_))) => return Err(e),
            Err(e) => {
                log::warn!("condition {} failed: {e}", c.label());
                (RunStatus::Failed { kind: e.kind().into(), message: e.to_string() }, Default::default())
            }
        };
        Ok(ManifestEntry {
            condition: c.clone(),
            trajectory_file,
            metadata_file,
            trajectory_sha256: sums.0,
            metadata_sha256: sums.1,
            status,
        })
    }

    /// Simulates every condition without an intact stored run, in
    /// parallel, and records the outcomes. Returns how many were simulated.
    pub fn ensure(&self, conditions: &[Condition]) -> Result<usize> {
        let mut missing: Vec<&Condition> = Vec::new();
        for c in conditions {
            let h = c.hash();
            let stored = self.entry(&h).is_some_and(|e| self.intact(&e));
            if !stored && !missing.iter().any(|m| m.hash() == h) {
                missing.push(c);
            }
        }
        if missing.is_empty() {
            return Ok(0);
        }
        log::info!("simulating {} of {} conditions", missing.len(), conditions.len());
        let produced: Vec<Result<ManifestEntry>> = self.pool.install(|| missing.par_iter().map(|c| self.produce(c)).collect());
        {
            let mut m = self.manifest.lock().expect("manifest lock");
            for (c, e) in missing.iter().zip(produced) {
                m.entries.insert(c.hash(), e?);
            }
        }
        self.save_manifest()?;
        Ok(missing.len())
    }
}

impl TrajectorySource for CampaignStore {
    fn sample_rate(&self) -> f64 {
        self.source.sample_rate()
    }

    fn trajectory(&self, condition: &Condition) -> Result<Trajectory> {
        self.trajectories(std::slice::from_ref(condition)).map(|mut v| v.remove(0))
    }

    fn trajectories(&self, conditions: &[Condition]) -> Result<Vec<Trajectory>> {
        let mut unseen: Vec<Condition> = Vec::new();
        for c in conditions {
            if self.entry(&c.hash()).is_none() {
                unseen.push(c.clone());
            }
        }
        self.ensure(&unseen)?;
        conditions
            .iter()
            .map(|c| {
                let e = self.entry(&c.hash()).expect("ensured above");
                match &e.status {
                    RunStatus::Done => self.load(&e),
                    RunStatus::Failed { kind, message } => Err(Error::InvalidParameter(format!(
                        "condition {} failed earlier ({kind}): {message}",
                        c.label()
                    ))),
                }
            })
            .collect()
    }
}

/// Simulates the configured grid into `config.output_dir`, skipping runs
/// already stored intact. Failed conditions are recorded and do not stop
/// the campaign.
pub fn run_campaign(config: &ExperimentConfig) -> Result<RunManifest> {
    let store = CampaignStore::open(config)?;
    let conditions = config.grid.conditions(&config.levels)?;
    store.ensure(&conditions)?;
    if !store.dir().join(MANIFEST_FILE).exists() {
        store.save_manifest()?;
    }
    Ok(store.manifest())
}
