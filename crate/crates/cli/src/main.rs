//! `miura-rc`: simulate the Miura-ori reservoir, run the perception tasks
//! and render their results.
//!
//! Every command prints one JSON document on stdout. Failures print
//! `{"error": {"kind": …, "message": …}}` on stderr and exit nonzero.

use clap::{Args, Parser, Subcommand};
use miura_rc::dynamics::{calibrate_crease_stiffness, PayloadSpec, ReservoirModel};
use miura_rc::harness::{
    self, ingest_external, position_survey, predict_file, report, run_campaign, sidecar_path, train_on_files,
    write_trajectory, Artifact, CampaignStore, ExperimentConfig, TrainingSet,
};
use miura_rc::reservoir::ReadoutWeights;
use miura_rc::tasks::{
    baseline_bottom_nodes, check_rate, dimensionality_sweep, run_multitask, run_pattern_task, run_weight_task,
    weight_matrix_experiment, Condition, TrajectorySource,
};
use serde_json::{json, Value};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(name = "miura-rc", version, about = "Miura-ori physical reservoir computing workbench")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Experiment config (JSON); built-in defaults when omitted
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Override any config field by dotted path, e.g. model.rayleigh_alpha=20
    #[arg(long = "set", global = true, value_name = "PATH=VALUE")]
    set: Vec<String>,

    /// Campaign seed
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[arg(long, global = true, value_name = "DIR")]
    output_dir: Option<PathBuf>,

    /// Worker threads for simulation
    #[arg(long, global = true)]
    parallelism: Option<usize>,

    /// Tracking noise added to every simulated recording, mm
    #[arg(long, global = true)]
    noise_mm: Option<f64>,

    /// Readout ridge parameter for every task (0 = pseudo-inverse)
    #[arg(long, global = true)]
    lambda: Option<f64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Print the effective configuration
    Config,
    /// Emit the folded mesh as JSON
    Pattern {
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Tune the crease stiffness to a loaded fundamental frequency
    Calibrate {
        #[arg(long, default_value_t = 3.0)]
        target_hz: f64,
        #[arg(long, default_value_t = 10.0)]
        mass_g: f64,
        #[arg(long, default_value_t = 'a')]
        position: char,
    },
    /// Simulate one sine condition and write its CSV and sidecar
    Simulate {
        #[arg(long)]
        mass_g: f64,
        #[arg(long, default_value_t = 'a')]
        position: char,
        #[arg(long)]
        frequency_hz: f64,
        /// Shaker level; the grid level when omitted
        #[arg(long)]
        amplitude_level: Option<u32>,
        #[arg(long, default_value_t = 15.0)]
        duration_s: f64,
        /// CSV path; the sidecar goes next to it with a .json extension
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
    /// Simulate the configured grid into the output directory (resumable)
    Campaign,
    /// Fit a readout to stored recordings described by a training-set JSON
    Train {
        training_set: PathBuf,
        #[arg(long, value_name = "FILE")]
        out: PathBuf,
    },
    /// Apply a trained readout to a stored recording
    Predict {
        #[arg(long, value_name = "FILE")]
        weights: PathBuf,
        trajectory: PathBuf,
        /// Also write the frame-by-frame output as CSV
        #[arg(long, value_name = "FILE")]
        series: Option<PathBuf>,
        /// Washout at the start of the recording, s; the weight task's when omitted
        #[arg(long)]
        head_s: Option<f64>,
        /// Washout at the end of the recording, s
        #[arg(long)]
        tail_s: Option<f64>,
    },
    /// Run a perception task against the campaign store
    Task {
        #[command(subcommand)]
        task: TaskCommand,
    },
    /// Validate an externally measured trajectory
    Ingest {
        csv: PathBuf,
        /// Sidecar JSON; next to the CSV when omitted
        #[arg(long, value_name = "FILE")]
        meta: Option<PathBuf>,
    },
    /// Render task result files into plot-ready CSV and a summary JSON
    Report {
        #[arg(required = true)]
        results: Vec<PathBuf>,
        /// Defaults to <output_dir>/report
        #[arg(long, value_name = "DIR")]
        out_dir: Option<PathBuf>,
    },
}

#[derive(Subcommand, Debug)]
enum TaskCommand {
    Weight {
        /// Run the full training-pair matrix instead
        #[arg(long)]
        matrix: bool,
    },
    Position {
        /// Every heavy grid mass at the highest grid frequency
        #[arg(long)]
        survey: bool,
    },
    Pattern {
        /// Amplitude levels instead of frequencies
        #[arg(long)]
        amplitude: bool,
        /// Also run the bottom-row baseline
        #[arg(long)]
        baseline: bool,
    },
    Multitask {
        /// Weight and frequency instead of weight and position
        #[arg(long)]
        frequency: bool,
    },
    Sweep {
        /// Sweep the pattern task instead of the weight task
        #[arg(long)]
        pattern: bool,
    },
}

#[derive(Debug)]
struct Failure {
    kind: String,
    message: String,
}

impl From<miura_rc::Error> for Failure {
    fn from(e: miura_rc::Error) -> Self {
        Self { kind: e.kind().into(), message: e.to_string() }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        miura_rc::Error::from(e).into()
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        miura_rc::Error::from(e).into()
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn usage(message: impl Into<String>) -> Failure {
    Failure { kind: "UsageError".into(), message: message.into() }
}

fn load_config(c: &Common) -> CliResult<ExperimentConfig> {
    let mut cfg = match &c.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    for s in &c.set {
        let (path, value) = s.split_once('=').ok_or_else(|| usage(format!("--set expects PATH=VALUE, got `{s}`")))?;
        cfg.set_field(path.trim(), value.trim())?;
    }
    if let Some(seed) = c.seed {
        cfg.campaign_seed = seed;
    }
    if let Some(d) = &c.output_dir {
        cfg.output_dir = d.clone();
    }
    if let Some(n) = c.parallelism {
        cfg.parallelism = Some(n);
    }
    if let Some(n) = c.noise_mm {
        cfg.measurement_noise_mm = n;
    }
    if let Some(l) = c.lambda {
        let t = &mut cfg.tasks;
        for p in [
            &mut t.weight.protocol,
            &mut t.weight_matrix.protocol,
            &mut t.position.protocol,
            &mut t.pattern.protocol,
            &mut t.pattern_amplitude.protocol,
            &mut t.multitask.protocol,
            &mut t.multitask_frequency.protocol,
        ] {
            p.lambda = l;
        }
        for s in [&mut t.sweep_weight, &mut t.sweep_pattern] {
            match &mut s.task {
                miura_rc::tasks::SweepTask::Weight(w) => w.protocol.lambda = l,
                miura_rc::tasks::SweepTask::Pattern(p) => p.protocol.lambda = l,
            }
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> CliResult<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

/// Saves the artifacts under `<output_dir>/results/<name>.json` and
/// summarises them for stdout.
fn save_results(cfg: &ExperimentConfig, name: &str, artifacts: Vec<Artifact>) -> CliResult<Value> {
    let path = cfg.output_dir.join("results").join(format!("{name}.json"));
    write_json(&path, &artifacts)?;
    let summary: Vec<Value> = artifacts
        .iter()
        .map(|a| match a {
            Artifact::Task(r) => json!({ "task": r.task, "metrics": r.metrics }),
            Artifact::WeightMatrix(m) => json!({
                "task": "weight_matrix",
                "interpolation_rate": m.interpolation_rate,
                "extrapolation_rate": m.extrapolation_rate,
            }),
            Artifact::Sweep(s) => json!({
                "task": format!("sweep_{}", s.task),
                "mean_rmse": s.points.iter().map(|p| json!([p.count, p.mean_rmse])).collect::<Vec<_>>(),
            }),
        })
        .collect();
    Ok(json!({ "results": path, "summary": summary }))
}

fn run_task(cfg: &ExperimentConfig, task: &TaskCommand) -> CliResult<Value> {
    let store = CampaignStore::open(cfg)?;
    let src: &dyn TrajectorySource = &store;
    let t = &cfg.tasks;
    let (name, artifacts) = match task {
        TaskCommand::Weight { matrix: false } => ("weight", vec![Artifact::Task(run_weight_task(&t.weight, src)?)]),
        TaskCommand::Weight { matrix: true } => {
            ("weight_matrix", vec![Artifact::WeightMatrix(weight_matrix_experiment(&t.weight_matrix, src)?)])
        }
        TaskCommand::Position { survey: false } => {
            ("position", vec![Artifact::Task(miura_rc::tasks::run_position_task(&t.position, src)?)])
        }
        TaskCommand::Position { survey: true } => {
            ("position_survey", position_survey(cfg, src)?.into_iter().map(Artifact::Task).collect())
        }
        TaskCommand::Pattern { amplitude, baseline } => {
            let spec = if *amplitude { &t.pattern_amplitude } else { &t.pattern };
            let mut out = vec![Artifact::Task(run_pattern_task(spec, src)?)];
            if *baseline {
                out.push(Artifact::Task(baseline_bottom_nodes(spec, src)?));
            }
            (if *amplitude { "pattern_amplitude" } else { "pattern" }, out)
        }
        TaskCommand::Multitask { frequency } => {
            let spec = if *frequency { &t.multitask_frequency } else { &t.multitask };
            let name = if *frequency { "multitask_frequency" } else { "multitask" };
            (name, vec![Artifact::Task(run_multitask(spec, src)?)])
        }
        TaskCommand::Sweep { pattern } => {
            let spec = if *pattern { &t.sweep_pattern } else { &t.sweep_weight };
            let name = if *pattern { "sweep_pattern" } else { "sweep_weight" };
            (name, vec![Artifact::Sweep(dimensionality_sweep(spec, src)?)])
        }
    };
    save_results(cfg, name, artifacts)
}

/// Result files hold either one artifact or a list of them.
fn read_artifacts(path: &Path) -> CliResult<Vec<Artifact>> {
    let v: Value = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    Ok(if v.is_array() { serde_json::from_value(v)? } else { vec![serde_json::from_value(v)?] })
}

fn execute(cli: &Cli) -> CliResult<Value> {
    let cfg = load_config(&cli.common)?;
    match &cli.command {
        Command::Config => Ok(serde_json::to_value(&cfg)?),
        Command::Pattern { out } => {
            let mesh = ReservoirModel::from_params(&cfg.model)?.mesh.export();
            match out {
                Some(p) => {
                    write_json(p, &mesh)?;
                    Ok(json!({ "mesh": p, "nodes": mesh.nodes.len(), "bars": mesh.bars.len(), "hinges": mesh.hinges.len() }))
                }
                None => Ok(serde_json::to_value(&mesh)?),
            }
        }
        Command::Calibrate { target_hz, mass_g, position } => {
            let c = calibrate_crease_stiffness(&cfg.model, PayloadSpec::new(*mass_g, *position), *target_hz)?;
            Ok(serde_json::to_value(c)?)
        }
        Command::Simulate { mass_g, position, frequency_hz, amplitude_level, duration_s, out } => {
            let amp = cfg.levels.mm(amplitude_level.unwrap_or(cfg.grid.amplitude_level))?;
            let cond = Condition::sine(*mass_g, *position, amp, *frequency_hz, *duration_s);
            let traj = cfg.simulated_source()?.record(&cond)?;
            if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
                std::fs::create_dir_all(parent)?;
            }
            let meta = sidecar_path(out);
            write_trajectory(&traj, out, &meta)?;
            Ok(json!({ "trajectory": out, "metadata": meta, "id": traj.id(), "samples": traj.samples() }))
        }
        Command::Campaign => {
            let m = run_campaign(&cfg)?;
            Ok(json!({
                "manifest": cfg.output_dir.join(harness::MANIFEST_FILE),
                "entries": m.entries.len(),
                "completed": m.completed(),
                "failed": m.failed(),
            }))
        }
        Command::Train { training_set, out } => {
            let set = TrainingSet::load(training_set)?;
            let w = train_on_files(&set)?;
            std::fs::write(out, w.to_json()? + "\n")?;
            Ok(json!({ "weights": out, "tasks": w.tasks, "channels": w.channel_map.len(), "lambda": w.lambda }))
        }
        Command::Predict { weights, trajectory, series, head_s, tail_s } => {
            let w = ReadoutWeights::from_json(&std::fs::read_to_string(weights)?)?;
            let mut protocol = cfg.tasks.weight.protocol.clone();
            protocol.washout_head_s = head_s.unwrap_or(protocol.washout_head_s);
            protocol.washout_tail_s = tail_s.unwrap_or(protocol.washout_tail_s);
            let p = predict_file(&w, trajectory, &protocol, cfg.sample_rate_hz)?;
            if let Some(path) = series {
                let mut text = String::from("t");
                for l in &p.labels {
                    text.push_str(&format!(",y_{l}"));
                }
                text.push('\n');
                for (k, t) in p.times.iter().enumerate() {
                    text.push_str(&t.to_string());
                    for o in &p.outputs {
                        text.push_str(&format!(",{}", o[k]));
                    }
                    text.push('\n');
                }
                std::fs::write(path, text)?;
            }
            Ok(json!({ "trajectory_id": p.trajectory_id, "labels": p.labels, "mean": p.mean }))
        }
        Command::Task { task } => run_task(&cfg, task),
        Command::Ingest { csv, meta } => {
            let meta = meta.clone().unwrap_or_else(|| sidecar_path(csv));
            let t = ingest_external(csv, &meta)?;
            check_rate(&t, cfg.sample_rate_hz)?;
            Ok(json!({ "id": t.id(), "samples": t.samples(), "channels": t.node_count(), "sample_rate": t.sample_rate() }))
        }
        Command::Report { results, out_dir } => {
            let mut all = Vec::new();
            for r in results {
                all.extend(read_artifacts(r)?);
            }
            let dir = out_dir.clone().unwrap_or_else(|| cfg.output_dir.join("report"));
            let files = report(&all, &dir)?;
            Ok(json!({ "files": files }))
        }
    }
}

fn fail(f: &Failure, code: u8) -> ExitCode {
    eprintln!("{}", json!({ "error": { "kind": f.kind, "message": f.message } }));
    ExitCode::from(code)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail(&usage(e.to_string().trim().to_string()), 2),
    };
    match execute(&cli) {
        Ok(v) => {
            // A closed pipe (`| head`) is not a failure of the command.
            let _ = writeln!(std::io::stdout().lock(), "{}", serde_json::to_string_pretty(&v).expect("output serializes"));
            ExitCode::SUCCESS
        }
        Err(f) => fail(&f, 1),
    }
}
