//! The `run` and `trace` commands.
//!
//! `run` writes, for each simulated mode,
//!
//! ```text
//! <out>/<mode>/iter_NNN/metrics.csv    t,min_h,wct_s,max_alter
//! <out>/<mode>/iter_NNN/summary.json
//! <out>/<mode>/summary.json            pooled over iterations
//! <out>/<mode>/constraints0.csv        first-step rows of iteration 0
//! <out>/compare.json                   mode = both only
//! ```
//!
//! Everything is written to a staging directory next to `<out>` and moved into
//! place only once every run has succeeded.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use robust_cbf::barrier::ConstraintSet;
use robust_cbf::sim::{repeat_experiment, run_scenario, summarize, FilterMode, RunMetrics, RunSummary, ScenarioConfig};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Worst recorded `min h` a robust run may reach before `--check` fails.
pub const ROBUST_MIN_H_FLOOR: f64 = -1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Mode {
    Robust,
    NonRobust,
    Both,
}

impl Mode {
    fn filter_modes(self) -> Vec<FilterMode> {
        match self {
            Mode::Robust => vec![FilterMode::Robust],
            Mode::NonRobust => vec![FilterMode::NonRobust],
            Mode::Both => vec![FilterMode::Robust, FilterMode::NonRobust],
        }
    }
}

pub fn mode_dir(mode: FilterMode) -> &'static str {
    match mode {
        FilterMode::Robust => "robust",
        FilterMode::NonRobust => "non-robust",
    }
}

/// Contents of every `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryJson {
    pub avg_wct_ms: f64,
    pub var_wct_ms2: f64,
    pub avg_freq_hz: f64,
    pub violation_time_s: f64,
    pub goal_completion: f64,
    /// Absent when no pair was ever recorded.
    pub worst_min_h: Option<f64>,
    pub dt: f64,
    pub iterations: usize,
    pub steps: usize,
    pub fallback_steps: usize,
}

impl SummaryJson {
    fn new(runs: &[RunMetrics], dt: f64) -> Self {
        let s: RunSummary = summarize(runs);
        Self {
            avg_wct_ms: s.avg_wct_ms,
            var_wct_ms2: s.var_wct_ms2,
            avg_freq_hz: s.avg_freq_hz,
            violation_time_s: s.violation_time_s,
            goal_completion: s.goal_completion,
            worst_min_h: s.worst_min_h.is_finite().then_some(s.worst_min_h),
            dt,
            iterations: runs.len(),
            steps: runs.iter().map(RunMetrics::steps).sum(),
            fallback_steps: runs.iter().map(|r| r.fallback_steps).sum(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareJson {
    pub robust: SummaryJson,
    pub non_robust: SummaryJson,
    /// Non-robust minus robust.
    pub violation_time_delta_s: f64,
    /// Non-robust minus robust.
    pub avg_wct_delta_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub mode: Mode,
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub check: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            mode: Mode::Both,
            seed: None,
            jobs: None,
            check: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub summaries: Vec<(FilterMode, SummaryJson)>,
    pub out_dir: PathBuf,
}

pub fn metrics_csv(m: &RunMetrics) -> String {
    let mut s = String::from("t,min_h,wct_s,max_alter\n");
    for (k, t) in m.times().enumerate() {
        let _ = writeln!(s, "{t},{},{},{}", m.min_h[k], m.wall_clock[k], m.max_alter[k]);
    }
    s
}

pub fn trace_csv(m: &RunMetrics) -> String {
    let mut s = String::from("t,min_h\n");
    for (t, h) in m.times().zip(&m.min_h) {
        let _ = writeln!(s, "{t},{h}");
    }
    s
}

pub fn constraints_csv(cs: &ConstraintSet) -> String {
    let mut s = String::from("i,j,hull,h,a_i_right,a_i_left,a_j_right,a_j_left,margin,b\n");
    for (r, row) in cs.rows.iter().enumerate() {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{}",
            row.i, row.j, row.hull, row.h, row.a_i[0], row.a_i[1], row.a_j[0], row.a_j[1], row.margin, cs.b[r]
        );
    }
    s
}

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::io(format!("writing {}", path.display()), e))
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("summary is serializable");
    s.push('\n');
    s
}

fn with_pool<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, CliError> {
    match jobs {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::Pool(e.to_string()))?;
            Ok(pool.install(f))
        }
    }
}

/// Directory that staging and the final output share, so the final move is a rename.
fn output_parent(out: &Path) -> Result<PathBuf, CliError> {
    if out.exists() && !out.is_dir() {
        return Err(CliError::io(
            format!("output path {}", out.display()),
            std::io::Error::new(std::io::ErrorKind::AlreadyExists, "exists and is not a directory"),
        ));
    }
    let parent = match out.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    if !parent.is_dir() {
        return Err(CliError::io(
            format!("output path {}", out.display()),
            std::io::Error::new(std::io::ErrorKind::NotFound, "parent directory does not exist"),
        ));
    }
    Ok(parent)
}

fn commit(staging: &Path, out: &Path) -> Result<(), CliError> {
    fs::create_dir_all(out).map_err(|e| CliError::io(format!("creating {}", out.display()), e))?;
    let entries = fs::read_dir(staging).map_err(|e| CliError::io("reading staging directory", e))?;
    for entry in entries {
        let entry = entry.map_err(|e| CliError::io("reading staging directory", e))?;
        let target = out.join(entry.file_name());
        if target.is_dir() {
            fs::remove_dir_all(&target).map_err(|e| CliError::io(format!("replacing {}", target.display()), e))?;
        } else if target.exists() {
            fs::remove_file(&target).map_err(|e| CliError::io(format!("replacing {}", target.display()), e))?;
        }
        fs::rename(entry.path(), &target).map_err(|e| CliError::io(format!("moving into {}", target.display()), e))?;
    }
    Ok(())
}

/// Runs the configured iterations in each requested mode and exports the
/// metrics under `out`. With `check`, a robust run whose worst `min h` falls
/// below [`ROBUST_MIN_H_FLOOR`], or a `both` comparison in which the
/// non-robust filter never violates, is reported as [`CliError::Check`]
/// after the outputs are written.
pub fn run_command(cfg: &ScenarioConfig, out: &Path, opts: &RunOptions) -> Result<RunReport, CliError> {
    let mut cfg = cfg.clone();
    if let Some(seed) = opts.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    let parent = output_parent(out)?;
    let staging = tempfile::Builder::new()
        .prefix(".robust-cbf-")
        .tempdir_in(&parent)
        .map_err(|e| CliError::io(format!("creating staging directory in {}", parent.display()), e))?;

    let mut summaries = Vec::new();
    for mode in opts.mode.filter_modes() {
        let run_cfg = ScenarioConfig {
            filter_mode: mode,
            ..cfg.clone()
        };
        log::info!("running {} x{} ({} steps each)", mode_dir(mode), cfg.iterations, cfg.step_count());
        let runs = with_pool(opts.jobs, || repeat_experiment(&run_cfg))??;

        let dir = staging.path().join(mode_dir(mode));
        for (k, m) in runs.iter().enumerate() {
            let iter_dir = dir.join(format!("iter_{k:03}"));
            fs::create_dir_all(&iter_dir).map_err(|e| CliError::io(format!("creating {}", iter_dir.display()), e))?;
            write(&iter_dir.join("metrics.csv"), &metrics_csv(m))?;
            write(
                &iter_dir.join("summary.json"),
                &to_json(&SummaryJson::new(std::slice::from_ref(m), cfg.dt)),
            )?;
        }
        if let Some(cs) = runs.first().and_then(|m| m.initial_constraints.as_ref()) {
            write(&dir.join("constraints0.csv"), &constraints_csv(cs))?;
        }
        let summary = SummaryJson::new(&runs, cfg.dt);
        write(&dir.join("summary.json"), &to_json(&summary))?;
        summaries.push((mode, summary));
    }

    if let [(_, robust), (_, non_robust)] = summaries.as_slice() {
        let cmp = CompareJson {
            robust: robust.clone(),
            non_robust: non_robust.clone(),
            violation_time_delta_s: non_robust.violation_time_s - robust.violation_time_s,
            avg_wct_delta_ms: non_robust.avg_wct_ms - robust.avg_wct_ms,
        };
        write(&staging.path().join("compare.json"), &to_json(&cmp))?;
    }

    commit(staging.path(), out)?;

    if opts.check {
        let mut breaches = Vec::new();
        for (mode, s) in &summaries {
            if *mode == FilterMode::Robust {
                if let Some(w) = s.worst_min_h.filter(|w| *w < ROBUST_MIN_H_FLOOR) {
                    breaches.push(format!("robust worst min h {w:e} below {ROBUST_MIN_H_FLOOR:e}"));
                }
            }
        }
        if opts.mode == Mode::Both {
            if let Some((_, s)) = summaries.iter().find(|(m, _)| *m == FilterMode::NonRobust) {
                if s.violation_time_s <= 0.0 {
                    breaches.push("non-robust filter never violated".into());
                }
            }
        }
        if !breaches.is_empty() {
            return Err(CliError::Check(breaches.join("; ")));
        }
    }

    Ok(RunReport {
        summaries,
        out_dir: out.to_path_buf(),
    })
}

/// Simulates iteration 0 in `mode` and writes its `t,min_h` series to `out`.
pub fn trace_command(cfg: &ScenarioConfig, out: &Path, mode: FilterMode) -> Result<RunMetrics, CliError> {
    let run_cfg = ScenarioConfig {
        filter_mode: mode,
        ..cfg.clone()
    };
    run_cfg.validate()?;
    if out.is_dir() {
        return Err(CliError::io(
            format!("output path {}", out.display()),
            std::io::Error::new(std::io::ErrorKind::AlreadyExists, "is a directory"),
        ));
    }
    let parent = output_parent(out)?;
    let metrics = run_scenario(&run_cfg)?;
    let mut file = tempfile::NamedTempFile::new_in(&parent)
        .map_err(|e| CliError::io(format!("creating temporary file in {}", parent.display()), e))?;
    file.write_all(trace_csv(&metrics).as_bytes())
        .map_err(|e| CliError::io(format!("writing {}", out.display()), e))?;
    file.persist(out)
        .map_err(|e| CliError::io(format!("writing {}", out.display()), e.error))?;
    Ok(metrics)
}
