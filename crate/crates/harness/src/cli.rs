//! The `mrio` command line: `simulate`, `run` and `eval`.
//!
//! Exit status 0 on success, 1 for an invalid command line or configuration,
//! 2 for unreadable, malformed or inconsistent data.

use std::ffi::OsString;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use log::info;
use mrio_core::pipeline::{EpochStatus, PipelineOutput, Stage1TraceRow};
use mrio_core::{run_pipeline, FusionMode};
use mrio_sim::simulate;
use serde::Serialize;
use thiserror::Error;

use crate::config::Config;
use crate::dataset::{load_dataset, save_dataset};
use crate::metrics::{evaluate, DEFAULT_MAX_DT};
use crate::tum::{load_tum, save_tum, TumPose};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
        }
    }
}

fn data<E: std::fmt::Display>(context: &str) -> impl FnOnce(E) -> CliError + '_ {
    move |e| CliError::Data(format!("{context}: {e}"))
}

#[derive(Debug, Parser)]
#[command(name = "mrio", version, about = "Multi-radar inertial odometry with accelerometer offset estimation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Baseline {
    /// Drive the pose filter with the raw forward accelerometer reading.
    NoStage1,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset and its ground truth.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// JSON-lines dataset to write.
        #[arg(long)]
        out: PathBuf,
        /// TUM ground-truth trajectory to write.
        #[arg(long)]
        gt: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run the estimator over a dataset.
    Run {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_traj: PathBuf,
        #[arg(long)]
        out_map: PathBuf,
        /// CSV of the offset filter after each radar update.
        #[arg(long)]
        stage1_trace: Option<PathBuf>,
        /// JSON run summary.
        #[arg(long)]
        summary: Option<PathBuf>,
        #[arg(long, value_enum)]
        baseline: Option<Baseline>,
    },
    /// Score an estimated trajectory against ground truth.
    Eval {
        #[arg(long)]
        est: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long, default_value_t = DEFAULT_MAX_DT)]
        max_dt: f64,
        #[arg(long)]
        report: PathBuf,
    },
}

/// Parses `args` (program name first) and runs the command. Returns the
/// process exit status; diagnostics go to stderr.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    match execute(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cmd: &Command) -> Result<(), CliError> {
    match cmd {
        Command::Simulate { config, out, gt, seed } => cmd_simulate(config, out, gt, *seed),
        Command::Run {
            dataset,
            config,
            out_traj,
            out_map,
            stage1_trace,
            summary,
            baseline,
        } => {
            let mut cfg = Config::load(config).map_err(CliError::Usage)?;
            if baseline == &Some(Baseline::NoStage1) {
                cfg.mode = FusionMode::NoStage1;
            }
            cmd_run(
                dataset,
                &cfg,
                out_traj,
                out_map,
                stage1_trace.as_deref(),
                summary.as_deref(),
            )
        }
        Command::Eval {
            est,
            gt,
            max_dt,
            report,
        } => cmd_eval(est, gt, *max_dt, report),
    }
}

fn cmd_simulate(config: &Path, out: &Path, gt: &Path, seed: u64) -> Result<(), CliError> {
    let cfg = Config::load(config).map_err(CliError::Usage)?;
    let sc = simulate(&cfg.sim, &cfg.extrinsics(), seed).map_err(CliError::Usage)?;
    save_dataset(&sc.events(), out).map_err(data(&out.display().to_string()))?;
    let truth: Vec<TumPose> = sc.truth.iter().map(TumPose::from).collect();
    save_tum(&truth, gt).map_err(data(&gt.display().to_string()))?;
    info!(
        "simulated {:.1} s: {} IMU samples, {} radar scans",
        sc.truth.last().map_or(0.0, |s| s.t),
        sc.imu.len(),
        sc.scans.len()
    );
    Ok(())
}

/// Runs the estimator with an already loaded configuration.
pub fn cmd_run(
    dataset: &Path,
    cfg: &Config,
    out_traj: &Path,
    out_map: &Path,
    stage1_trace: Option<&Path>,
    summary: Option<&Path>,
) -> Result<(), CliError> {
    let rig = cfg.rig().map_err(|e| CliError::Usage(e.to_string()))?;
    let events = load_dataset(dataset).map_err(data(&dataset.display().to_string()))?;
    let started = Instant::now();
    let out = run_pipeline(events, &rig, &cfg.pipeline()).map_err(data(&dataset.display().to_string()))?;
    info!(
        "processed {} IMU samples and {} radar scans in {:.2?}",
        out.diagnostics.imu_samples,
        out.diagnostics.radar_scans,
        started.elapsed()
    );

    let poses: Vec<TumPose> = out.trajectory.iter().map(TumPose::from).collect();
    save_tum(&poses, out_traj).map_err(data(&out_traj.display().to_string()))?;
    write_bytes(out_map, |w| out.map.write_ply(w))?;
    if let Some(path) = stage1_trace {
        write_bytes(path, |w| write_stage1_csv(&out.stage1_trace, w))?;
    }
    if let Some(path) = summary {
        let json = serde_json::to_string_pretty(&RunSummary::from_output(&out, cfg.mode))
            .expect("summary is serializable");
        fs::write(path, json + "\n").map_err(data(&path.display().to_string()))?;
    }
    Ok(())
}

fn cmd_eval(est: &Path, gt: &Path, max_dt: f64, report: &Path) -> Result<(), CliError> {
    if !(max_dt >= 0.0) {
        return Err(CliError::Usage(format!("--max-dt must be non-negative, got {max_dt}")));
    }
    let est_poses = load_tum(est).map_err(CliError::Data)?;
    let gt_poses = load_tum(gt).map_err(CliError::Data)?;
    let r = evaluate(&est_poses, &gt_poses, max_dt).map_err(data("eval"))?;
    let json = serde_json::to_string_pretty(&r).expect("report is serializable");
    fs::write(report, json + "\n").map_err(data(&report.display().to_string()))?;
    println!(
        "2D RMSE {:.3} m, yaw RMSE {:.3} deg, relative translation error {:.4} m/m over {} poses",
        r.rmse_2d, r.rmse_yaw, r.rel_trans_err, r.n_matched_poses
    );
    Ok(())
}

fn write_bytes(path: &Path, f: impl FnOnce(&mut Vec<u8>) -> io::Result<()>) -> Result<(), CliError> {
    let mut buf = Vec::new();
    f(&mut buf).map_err(data(&path.display().to_string()))?;
    fs::write(path, buf).map_err(data(&path.display().to_string()))
}

pub fn write_stage1_csv<W: Write>(rows: &[Stage1TraceRow], mut w: W) -> io::Result<()> {
    writeln!(w, "stamp,v,b,var_v,var_b,a_cc")?;
    for r in rows {
        let s = &r.state;
        writeln!(
            w,
            "{},{},{},{},{},{}",
            r.stamp.secs(),
            s.v,
            s.b,
            s.cov[(0, 0)],
            s.cov[(1, 1)],
            r.a_cc
        )?;
    }
    w.flush()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunSummary {
    pub mode: FusionMode,
    pub imu_samples: usize,
    pub radar_scans: usize,
    pub radar_epochs: usize,
    pub epochs_used: usize,
    pub epochs_insufficient_targets: usize,
    pub epochs_degenerate: usize,
    pub epochs_singular_innovation: usize,
    pub zero_velocity_updates: usize,
    pub imu_gaps: usize,
    pub map_points: usize,
    pub mean_nis: Option<f64>,
    pub final_offset: Option<f64>,
    pub final_pose: Option<[f64; 4]>,
}

impl RunSummary {
    pub fn from_output(out: &PipelineOutput, mode: FusionMode) -> Self {
        let d = &out.diagnostics;
        let nis: Vec<f64> = d.innovations.iter().map(|r| r.nis).collect();
        Self {
            mode,
            imu_samples: d.imu_samples,
            radar_scans: d.radar_scans,
            radar_epochs: d.epochs.len(),
            epochs_used: d.epochs_with(EpochStatus::Used),
            epochs_insufficient_targets: d.epochs_with(EpochStatus::InsufficientTargets),
            epochs_degenerate: d.epochs_with(EpochStatus::DegenerateGeometry),
            epochs_singular_innovation: d.epochs_with(EpochStatus::SingularInnovation),
            zero_velocity_updates: d.zero_velocity_updates,
            imu_gaps: d.imu_gaps,
            map_points: out.map.len(),
            mean_nis: (!nis.is_empty()).then(|| nis.iter().sum::<f64>() / nis.len() as f64),
            final_offset: out.stage1_trace.last().map(|r| r.state.b),
            final_pose: out.trajectory.last().map(|p| [p.stamp.secs(), p.x, p.y, p.theta]),
        }
    }
}
