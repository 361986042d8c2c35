//! Configuration, campaign storage, file formats and reports.

mod config;
mod offline;
mod report;
mod store;

pub use config::{
    ExperimentConfig, GridSpec, TaskSuite, CONFIG_SCHEMA_VERSION, DEFAULT_LAMBDA, DEFAULT_MULTITASK_LAMBDA,
};
pub use offline::{predict_file, sidecar_path, train_on_files, FilePrediction, TrainingItem, TrainingSet};
pub use report::{report, Artifact};
pub use store::{
    ingest_external, run_campaign, write_trajectory, CampaignStore, ManifestEntry, RunManifest, RunStatus,
    MANIFEST_FILE,
};

use crate::error::{Error, Result};
use crate::tasks::{run_position_task, PositionTaskSpec, TaskResult, TrajectorySource};

/// Payloads at least this many times the sheet mass count as heavy.
pub const HEAVY_PAYLOAD_RATIO: f64 = 2.0;

/// The position task for every heavy grid mass at the highest grid
/// frequency, using the configured position spec as a template.
pub fn position_survey(config: &ExperimentConfig, source: &dyn TrajectorySource) -> Result<Vec<TaskResult>> {
    let f = config
        .grid
        .max_frequency()
        .ok_or_else(|| Error::InvalidParameter("the grid has no frequencies".into()))?;
    let heavy = HEAVY_PAYLOAD_RATIO * config.model.sheet_mass_g;
    let masses: Vec<f64> = config.grid.masses_g.iter().copied().filter(|&m| m >= heavy).collect();
    if masses.is_empty() {
        return Err(Error::InvalidParameter(format!("no grid mass reaches {heavy} g")));
    }
    masses
        .into_iter()
        .map(|m| {
            let spec = PositionTaskSpec { payload_mass_g: m, frequency_hz: f, ..config.tasks.position.clone() };
            run_position_task(&spec, source)
        })
        .collect()
}
