use crate::error::{Error, Result};
use crate::tasks::{SweepResult, TaskResult, WeightMatrix};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use std::path::{Path, PathBuf};

/// Anything the report can render.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "result", rename_all = "snake_case")]
pub enum Artifact {
    Task(TaskResult),
    WeightMatrix(WeightMatrix),
    Sweep(SweepResult),
}

fn write_rows(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

fn slug(text: &str) -> String {
    text.chars().map(|c| if c.is_ascii_alphanumeric() { c } else { '_' }).collect()
}

/// Second training mass down the rows, test mass across the columns.
fn weight_matrix_files(m: &WeightMatrix, dir: &Path, stem: &str) -> Result<Vec<PathBuf>> {
    let mut header = vec!["second_mass_g".to_string()];
    header.extend(m.test_masses.iter().map(|t| t.to_string()));
    let grid = |cell: &dyn Fn(usize, usize) -> String| -> Vec<Vec<String>> {
        m.second_masses
            .iter()
            .enumerate()
            .map(|(r, s)| std::iter::once(s.to_string()).chain((0..m.test_masses.len()).map(|c| cell(r, c))).collect())
            .collect()
    };
    let success = dir.join(format!("{stem}_success.csv"));
    write_rows(&success, &header, &grid(&|r, c| u8::from(m.success[r][c]).to_string()))?;
    let estimates = dir.join(format!("{stem}_estimates.csv"));
    write_rows(&estimates, &header, &grid(&|r, c| m.estimates[r][c].to_string()))?;
    Ok(vec![success, estimates])
}

/// One row per position run: mean output at each test station.
fn position_map(results: &[&TaskResult], path: &Path) -> Result<()> {
    let stations: Vec<String> = results[0].spec["test_positions"]
        .as_array()
        .map(|a| a.iter().filter_map(|v| v.as_str().map(String::from)).collect())
        .unwrap_or_default();
    let mut header = vec!["mass_g".to_string(), "frequency_hz".to_string()];
    header.extend(stations.iter().cloned());
    header.push("accuracy".into());
    let rows: Vec<Vec<String>> = results
        .iter()
        .map(|r| {
            let mut row = vec![r.spec["payload_mass_g"].to_string(), r.spec["frequency_hz"].to_string()];
            row.extend(r.conditions.iter().map(|c| c.prediction[0].to_string()));
            row.resize(stations.len() + 2, String::new());
            row.push(r.metric("accuracy").map_or(String::new(), |a| a.to_string()));
            row
        })
        .collect();
    write_rows(path, &header, &rows)
}

/// Frame-wise RMSE of a series against its own targets over every column.
fn series_rmse(s: &crate::tasks::OutputSeries) -> f64 {
    let (mut sq, mut n) = (0.0, 0usize);
    for (o, t) in s.outputs.iter().zip(&s.targets) {
        sq += o.iter().zip(t).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        n += o.len();
    }
    if n == 0 {
        f64::NAN
    } else {
        (sq / n as f64).sqrt()
    }
}

fn series_file(r: &TaskResult, k: usize, path: &Path) -> Result<()> {
    let s = &r.series[k];
    let mut header = vec!["t".to_string()];
    header.extend(r.weights.tasks.iter().map(|t| format!("y_{t}")));
    header.extend(r.weights.tasks.iter().map(|t| format!("target_{t}")));
    let rows: Vec<Vec<String>> = (0..s.times.len())
        .map(|f| {
            std::iter::once(s.times[f].to_string())
                .chain(s.outputs.iter().map(|o| o[f].to_string()))
                .chain(s.targets.iter().map(|t| t[f].to_string()))
                .collect()
        })
        .collect();
    write_rows(path, &header, &rows)
}

fn sweep_file(s: &SweepResult, path: &Path) -> Result<()> {
    let trials = s.points.iter().map(|p| p.rmse.len()).max().unwrap_or(0);
    let mut header: Vec<String> = ["count", "mean_rmse", "std_rmse"].map(String::from).to_vec();
    header.extend((0..trials).map(|t| format!("trial_{t}")));
    let rows: Vec<Vec<String>> = s
        .points
        .iter()
        .map(|p| {
            let mut row = vec![p.count.to_string(), p.mean_rmse.to_string(), p.std_rmse.to_string()];
            row.extend(p.rmse.iter().map(f64::to_string));
            row.resize(header.len(), String::new());
            row
        })
        .collect();
    write_rows(path, &header, &rows)
}

/// Writes plot-ready CSVs and `summary.json` into `dir` and returns the
/// paths written, summary last.
///
/// Weight matrices give `weight_matrix_<k>_{success,estimates}.csv`,
/// position runs one `position_map.csv`, every task its output series
/// under `series/`, sweeps `sweep_<k>_<task>.csv`. The summary holds every
/// aggregate metric and, per task, the RMSE of each condition's series.
pub fn report(artifacts: &[Artifact], dir: &Path) -> Result<Vec<PathBuf>> {
    if artifacts.is_empty() {
        return Err(Error::InvalidParameter("nothing to report".into()));
    }
    std::fs::create_dir_all(dir.join("series"))?;
    let mut written = Vec::new();
    let mut tasks = Vec::new();
    let mut matrices = Vec::new();
    let mut sweeps = Vec::new();
    let mut positions = Vec::new();

    for (k, a) in artifacts.iter().enumerate() {
        match a {
            Artifact::Task(r) => {
                if r.task == "position" {
                    positions.push(r);
                }
                let mut files = Vec::new();
                let mut by_condition = Map::new();
                for (j, s) in r.series.iter().enumerate() {
                    let path = dir.join("series").join(format!("{k:02}_{}_{j:02}.csv", slug(&r.task)));
                    series_file(r, j, &path)?;
                    by_condition.insert(s.label.clone(), json!(series_rmse(s)));
                    files.push(path.strip_prefix(dir).unwrap_or(&path).display().to_string());
                    written.push(path);
                }
                tasks.push(json!({
                    "task": r.task,
                    "metrics": r.metrics,
                    "rmse_by_condition": by_condition,
                    "series": files,
                }));
            }
            Artifact::WeightMatrix(m) => {
                let files = weight_matrix_files(m, dir, &format!("weight_matrix_{k:02}"))?;
                matrices.push(json!({
                    "first_mass_g": m.first_mass,
                    "interpolation_rate": m.interpolation_rate,
                    "extrapolation_rate": m.extrapolation_rate,
                    "files": files.iter().map(|p| p.strip_prefix(dir).unwrap_or(p).display().to_string()).collect::<Vec<_>>(),
                }));
                written.extend(files);
            }
            Artifact::Sweep(s) => {
                let path = dir.join(format!("sweep_{k:02}_{}.csv", slug(&s.task)));
                sweep_file(s, &path)?;
                sweeps.push(json!({
                    "task": s.task,
                    "file": path.strip_prefix(dir).unwrap_or(&path).display().to_string(),
                    "mean_rmse": s.points.iter().map(|p| (p.count.to_string(), json!(p.mean_rmse))).collect::<Map<String, Value>>(),
                }));
                written.push(path);
            }
        }
    }
    if !positions.is_empty() {
        let path = dir.join("position_map.csv");
        position_map(&positions, &path)?;
        written.push(path);
    }
    let summary = json!({ "tasks": tasks, "weight_matrices": matrices, "sweeps": sweeps });
    let path = dir.join("summary.json");
    std::fs::write(&path, serde_json::to_string_pretty(&summary)? + "\n")?;
    written.push(path);
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix() -> WeightMatrix {
        let seconds: Vec<f64> = (4..=18).map(f64::from).collect();
        let tests: Vec<f64> = (3..=18).map(f64::from).collect();
        WeightMatrix {
            first_mass: 3.0,
            estimates: vec![vec![1.0; tests.len()]; seconds.len()],
            success: vec![vec![true; tests.len()]; seconds.len()],
            second_masses: seconds,
            test_masses: tests,
            interpolation_rate: 1.0,
            extrapolation_rate: 0.5,
        }
    }

    #[test]
    fn empty_report_is_an_error_and_writes_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("r");
        assert!(report(&[], &out).is_err());
        assert!(!out.exists());
    }

    #[test]
    fn success_matrix_shape() {
        let dir = tempfile::tempdir().unwrap();
        let files = report(&[Artifact::WeightMatrix(matrix())], dir.path()).unwrap();
        let text = std::fs::read_to_string(&files[0]).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 16);
        assert!(lines[1..].iter().all(|l| l.split(',').count() == 17));
        assert!(files.last().unwrap().ends_with("summary.json"));
    }
}
