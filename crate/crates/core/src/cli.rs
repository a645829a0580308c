//! Batch command-line front end.
//!
//! Every command reads a scenario file, applies command-line overrides and
//! writes plain-text artifacts into an output directory. The manifest is
//! written last. Exit codes: 0 success, 2 finished without solver
//! convergence, 1 error.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::baseline::{self, plan_boustrophedon, BaselineOptions, LawnmowerPlan, Spacing, AUTO_OVERLAP};
use crate::config::ScenarioFile;
use crate::dynamics::Trajectory;
use crate::error::{Error, Result};
use crate::io::{self, RunManifest};
use crate::risk::grid::coverage_grid;
use crate::risk::{qmc, residual_risk, residual_risk_by_shift, QmcPointSet, RiskEvaluator, Track};
use crate::scenario::{RiskMode, Scenario, ValidatedScenario};
use crate::solver::{self, DecisionVector, OuterRecord, SolveResult, TranscriptionConfig, Violations};

/// Cells per axis of the exported coverage grid.
pub const COVERAGE_CELLS: usize = 40;

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_NOT_CONVERGED: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "mcmplan", version, about = "Minimum-time survey planning under a residual mine-risk constraint")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Values that shadow the scenario file.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// Seed of the qMC shifts and of random initial guesses.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Residual-risk threshold.
    #[arg(long)]
    pub risk: Option<f64>,
    /// Fleet size; extra vehicles share the first start.
    #[arg(long)]
    pub vehicles: Option<usize>,
    /// Risk combination across vehicles: paper-sum or joint.
    #[arg(long = "risk-mode")]
    pub risk_mode: Option<RiskMode>,
    /// Rudder nodes per vehicle.
    #[arg(long)]
    pub nodes: Option<usize>,
}

impl Overrides {
    fn apply(&self, s: &mut Scenario, cfg: &mut TranscriptionConfig) -> Vec<String> {
        let mut log = Vec::new();
        if let Some(seed) = self.seed {
            s.qmc.seed = seed;
            cfg.seed = seed;
            log.push(format!("seed={seed}"));
        }
        if let Some(r) = self.risk {
            s.risk_threshold = r;
            log.push(format!("risk={r}"));
        }
        if let Some(k) = self.vehicles {
            if let Some(&first) = s.starts.first() {
                s.starts.resize(k, first);
            }
            log.push(format!("vehicles={k}"));
        }
        if let Some(m) = self.risk_mode {
            s.risk_mode = m;
            log.push(format!("risk-mode={}", m.label()));
        }
        if let Some(n) = self.nodes {
            cfg.n_nodes = n;
            log.push(format!("nodes={n}"));
        }
        log
    }
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Scenario file (TOML).
    #[arg(long)]
    pub scenario: PathBuf,
    /// Output directory; created when missing.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the minimum-time problem and export the plan.
    Plan {
        #[command(flatten)]
        common: Common,
    },
    /// Plan the boustrophedon baseline (single vehicle).
    Baseline {
        #[command(flatten)]
        common: Common,
        /// Track separation in m, or `auto` for twice the swath half-width less overlap.
        #[arg(long, default_value = "auto", allow_hyphen_values = true)]
        spacing: Spacing,
    },
    /// Run the baseline and the solver and tabulate both.
    Compare {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "auto", allow_hyphen_values = true)]
        spacing: Spacing,
    },
    /// Solve for fleets of 1..=k-max vehicles sharing the first start.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long = "k-max", default_value_t = 3)]
        k_max: usize,
    },
    /// Evaluate the residual risk of an exported trajectory table.
    Evaluate {
        /// Trajectory table in the export format.
        #[arg(long)]
        trajectory: PathBuf,
        #[arg(long)]
        scenario: PathBuf,
        /// Optional directory for a summary and manifest.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Plan { .. } => "plan",
            Command::Baseline { .. } => "baseline",
            Command::Compare { .. } => "compare",
            Command::Sweep { .. } => "sweep",
            Command::Evaluate { .. } => "evaluate",
        }
    }
}

/// qMC metadata recorded with every risk value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QmcMetadata {
    pub points: usize,
    pub shifts: usize,
    pub seed: u64,
    pub construction: String,
    pub generator: [u64; 2],
    pub risk_mode: RiskMode,
}

impl QmcMetadata {
    fn new(pts: &QmcPointSet, mode: RiskMode) -> Self {
        Self {
            points: pts.points,
            shifts: pts.shifts,
            seed: pts.seed,
            construction: qmc::CONSTRUCTION.to_string(),
            generator: pts.generator,
            risk_mode: mode,
        }
    }
}

/// Residual risk of the exported trajectories.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskReport {
    /// Value in the scenario's mode.
    pub value: f64,
    pub paper_sum: f64,
    pub joint: f64,
    /// One estimate per random shift (scenario mode).
    pub shift_estimates: Vec<f64>,
    /// Standard error of the shift average.
    pub standard_error: f64,
    /// Share of coverage cells inside the domain whose detection probability
    /// reaches the baseline pass threshold.
    pub coverage_seen_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub final_time_s: f64,
    pub converged: bool,
    pub violations: Violations,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    pub init: String,
    pub starts_tried: usize,
    pub steps: usize,
    pub dt_s: f64,
    pub history: Vec<OuterRecord>,
    pub decision: DecisionVector,
}

impl SolveReport {
    fn new(r: &SolveResult) -> Self {
        Self {
            final_time_s: r.final_time,
            converged: r.converged,
            violations: r.violations.clone(),
            outer_iterations: r.outer_iterations,
            inner_iterations: r.inner_iterations,
            init: r.init.clone(),
            starts_tried: r.starts_tried,
            steps: r.steps,
            dt_s: r.dt,
            history: r.history.clone(),
            decision: r.decision.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineReport {
    pub path_time_s: f64,
    pub length_m: f64,
    pub legs: usize,
    pub spacing_m: f64,
    pub effective_spacing_m: f64,
    pub swath_halfwidth_m: f64,
    /// Overlap applied to automatic spacing (absent for a fixed spacing).
    pub overlap: Option<f64>,
    pub pass_threshold: f64,
    pub turn_radius_m: f64,
    pub run_in_m: f64,
    pub end_turns: usize,
    /// End-turn samples found inside the domain (0: all turns outside).
    pub turn_samples_inside: usize,
    pub end_to_start_m: f64,
}

impl BaselineReport {
    fn new(plan: &LawnmowerPlan, s: &Scenario, opts: &BaselineOptions) -> Self {
        Self {
            path_time_s: plan.path_time,
            length_m: plan.length,
            legs: plan.legs.len(),
            spacing_m: plan.spacing,
            effective_spacing_m: plan.effective_spacing,
            swath_halfwidth_m: plan.swath_halfwidth,
            overlap: matches!(opts.spacing, Spacing::Auto).then_some(1.0 - AUTO_OVERLAP),
            pass_threshold: opts.pass_threshold,
            turn_radius_m: plan.turn_radius,
            run_in_m: plan.run_in,
            end_turns: plan.turns().count(),
            turn_samples_inside: baseline::turn_samples_inside(plan, &s.domain, 0.1, 1e-6),
            end_to_start_m: plan.end.position().dist(plan.start.position()),
        }
    }
}

/// The run summary document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub command: String,
    /// SHA-256 of the effective scenario document (after overrides).
    pub scenario_sha256: String,
    pub scenario: ScenarioFile,
    pub seed: u64,
    pub qmc: QmcMetadata,
    pub risk: RiskReport,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub solve: Option<SolveReport>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub baseline: Option<BaselineReport>,
}

/// One row of the sweep table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub k: usize,
    pub final_time_s: f64,
    pub risk: f64,
    pub risk_paper_sum: f64,
    pub risk_joint: f64,
    pub converged: bool,
}

/// One row of the comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub planner: String,
    pub path_time_s: f64,
    pub risk: f64,
    pub risk_paper_sum: f64,
    pub risk_joint: f64,
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ERROR
        }
    }
}

/// Loaded scenario with overrides applied.
struct Loaded {
    scenario: ValidatedScenario,
    config: TranscriptionConfig,
    overrides: Vec<String>,
    file: ScenarioFile,
}

fn load(path: &Path, ov: &Overrides) -> Result<Loaded> {
    let (mut s, mut cfg) = ScenarioFile::load(path)?.build()?;
    let overrides = ov.apply(&mut s, &mut cfg);
    cfg.validate()?;
    let file = ScenarioFile::from_parts(&s, &cfg);
    Ok(Loaded { scenario: s.validate()?, config: cfg, overrides, file })
}

fn point_set(s: &Scenario) -> Result<QmcPointSet> {
    QmcPointSet::generate(s.qmc.points, s.qmc.shifts, s.qmc.seed, &s.domain)
}

/// Writes trajectories and coverage of `trajs` into `dir` and returns the
/// risk report plus the artifact names.
fn export(dir: &Path, trajs: &[Trajectory], s: &Scenario, pts: &QmcPointSet) -> Result<(RiskReport, Vec<String>)> {
    std::fs::create_dir_all(dir)?;
    io::write_trajectories(&dir.join("trajectories.csv"), trajs)?;
    let grid = coverage_grid(trajs, &s.domain, COVERAGE_CELLS, COVERAGE_CELLS, &s.sensor, baseline::DEFAULT_PASS_THRESHOLD)?;
    io::write_coverage(&dir.join("coverage.csv"), &grid)?;
    let report = risk_report(trajs, s, pts, grid.seen_fraction())?;
    Ok((report, vec!["trajectories.csv".into(), "coverage.csv".into()]))
}

fn risk_report(trajs: &[Trajectory], s: &Scenario, pts: &QmcPointSet, seen: f64) -> Result<RiskReport> {
    let shift_estimates = residual_risk_by_shift(trajs, pts, &s.sensor, s.risk_mode)?;
    let r = shift_estimates.len() as f64;
    let mean = shift_estimates.iter().sum::<f64>() / r;
    let standard_error = if shift_estimates.len() > 1 {
        (shift_estimates.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (r - 1.0) / r).sqrt()
    } else {
        0.0
    };
    Ok(RiskReport {
        value: residual_risk(trajs, pts, &s.sensor, s.risk_mode)?,
        paper_sum: residual_risk(trajs, pts, &s.sensor, RiskMode::PaperSum)?,
        joint: residual_risk(trajs, pts, &s.sensor, RiskMode::Joint)?,
        shift_estimates,
        standard_error,
        coverage_seen_fraction: seen,
    })
}

fn summary(command: &str, l: &Loaded, pts: &QmcPointSet, risk: RiskReport) -> RunSummary {
    RunSummary {
        command: command.to_string(),
        scenario_sha256: io::sha256_hex(l.file.to_toml().as_bytes()),
        scenario: l.file.clone(),
        seed: l.scenario.qmc.seed,
        qmc: QmcMetadata::new(pts, l.scenario.risk_mode),
        risk,
        solve: None,
        baseline: None,
    }
}

fn run_plan(dir: &Path, l: &Loaded, pts: &QmcPointSet) -> Result<(RunSummary, Vec<String>)> {
    let result = solver::solve_with(&l.scenario, &l.config, pts)?;
    let (risk, mut artifacts) = export(dir, &result.trajectories, &l.scenario, pts)?;
    let mut sum = summary("plan", l, pts, risk);
    sum.solve = Some(SolveReport::new(&result));
    io::write_json(&dir.join("summary.json"), &sum)?;
    artifacts.push("summary.json".into());
    Ok((sum, artifacts))
}

fn run_baseline(dir: &Path, l: &Loaded, pts: &QmcPointSet, spacing: Spacing) -> Result<(RunSummary, Vec<String>)> {
    let opts = BaselineOptions { spacing, ..Default::default() };
    let (plan, traj) = plan_boustrophedon(&l.scenario, pts, &opts)?;
    let (risk, mut artifacts) = export(dir, std::slice::from_ref(&traj), &l.scenario, pts)?;
    let mut sum = summary("baseline", l, pts, risk);
    sum.baseline = Some(BaselineReport::new(&plan, &l.scenario, &opts));
    io::write_json(&dir.join("summary.json"), &sum)?;
    artifacts.push("summary.json".into());
    Ok((sum, artifacts))
}

fn prefixed(prefix: &str, names: Vec<String>) -> Vec<String> {
    names.into_iter().map(|n| format!("{prefix}/{n}")).collect()
}

fn write_table<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Format { path: path.display().to_string(), message: e.to_string() })?;
    for r in rows {
        w.serialize(r).map_err(|e| Error::Format { path: path.display().to_string(), message: e.to_string() })?;
    }
    w.flush()?;
    Ok(())
}

fn execute(cmd: &Command) -> Result<i32> {
    let started = chrono::Utc::now();
    let clock = Instant::now();
    let (out_dir, scenario_path, overrides, seed, artifacts, code) = match cmd {
        Command::Plan { common } => {
            let l = load(&common.scenario, &common.overrides)?;
            let pts = point_set(&l.scenario)?;
            std::fs::create_dir_all(&common.out)?;
            let (sum, artifacts) = run_plan(&common.out, &l, &pts)?;
            let solve = sum.solve.as_ref().expect("plan summary has a solve section");
            println!(
                "plan: T_F = {:.3} s, risk = {:.6} ({}), converged = {}",
                solve.final_time_s,
                sum.risk.value,
                l.scenario.risk_mode.label(),
                solve.converged
            );
            let code = if solve.converged { EXIT_OK } else { EXIT_NOT_CONVERGED };
            (common.out.clone(), Some(common.scenario.clone()), l.overrides, l.scenario.qmc.seed, artifacts, code)
        }
        Command::Baseline { common, spacing } => {
            let l = load(&common.scenario, &common.overrides)?;
            let pts = point_set(&l.scenario)?;
            std::fs::create_dir_all(&common.out)?;
            let (sum, artifacts) = run_baseline(&common.out, &l, &pts, *spacing)?;
            let b = sum.baseline.as_ref().expect("baseline summary has a baseline section");
            println!(
                "baseline: path time = {:.3} s, legs = {}, spacing = {:.3} m (swath half-width {:.3} m), risk = {:.6}",
                b.path_time_s, b.legs, b.spacing_m, b.swath_halfwidth_m, sum.risk.value
            );
            (common.out.clone(), Some(common.scenario.clone()), l.overrides, l.scenario.qmc.seed, artifacts, EXIT_OK)
        }
        Command::Compare { common, spacing } => {
            let l = load(&common.scenario, &common.overrides)?;
            let pts = point_set(&l.scenario)?;
            std::fs::create_dir_all(&common.out)?;
            let (bsum, bart) = run_baseline(&common.out.join("baseline"), &l, &pts, *spacing)?;
            let (psum, part) = run_plan(&common.out.join("plan"), &l, &pts)?;
            let b = bsum.baseline.as_ref().expect("baseline section");
            let p = psum.solve.as_ref().expect("solve section");
            let rows = vec![
                ComparisonRow {
                    planner: "boustrophedon".into(),
                    path_time_s: b.path_time_s,
                    risk: bsum.risk.value,
                    risk_paper_sum: bsum.risk.paper_sum,
                    risk_joint: bsum.risk.joint,
                },
                ComparisonRow {
                    planner: "optimal-control".into(),
                    path_time_s: p.final_time_s,
                    risk: psum.risk.value,
                    risk_paper_sum: psum.risk.paper_sum,
                    risk_joint: psum.risk.joint,
                },
            ];
            write_table(&common.out.join("comparison.csv"), &rows)?;
            let speedup = b.path_time_s / p.final_time_s;
            println!("planner          path_time_s   risk");
            for r in &rows {
                println!("{:<16} {:>11.3}   {:.6}", r.planner, r.path_time_s, r.risk);
            }
            println!("speedup: {speedup:.3}");
            let mut artifacts = prefixed("baseline", bart);
            artifacts.extend(prefixed("plan", part));
            artifacts.push("comparison.csv".into());
            let code = if p.converged { EXIT_OK } else { EXIT_NOT_CONVERGED };
            (common.out.clone(), Some(common.scenario.clone()), l.overrides, l.scenario.qmc.seed, artifacts, code)
        }
        Command::Sweep { common, k_max } => {
            if *k_max == 0 {
                return Err(Error::InvalidArgument("k-max must be at least 1".into()));
            }
            let l = load(&common.scenario, &common.overrides)?;
            let pts = point_set(&l.scenario)?;
            std::fs::create_dir_all(&common.out)?;
            let ks: Vec<usize> = (1..=*k_max).collect();
            let results = solver::sweep_vehicles(&l.scenario, &l.config, &ks)?;
            let mut artifacts = Vec::new();
            let mut rows = Vec::new();
            for r in &results {
                let k = r.decision.vehicles();
                let sk = l.scenario.with_shared_start(k).validate()?;
                let lk = Loaded {
                    file: ScenarioFile::from_parts(&sk, &l.config),
                    scenario: sk,
                    config: l.config.clone(),
                    overrides: l.overrides.clone(),
                };
                let dir = common.out.join(format!("k{k}"));
                let (risk, names) = export(&dir, &r.trajectories, &lk.scenario, &pts)?;
                let mut sum = summary("sweep", &lk, &pts, risk);
                sum.solve = Some(SolveReport::new(r));
                io::write_json(&dir.join("summary.json"), &sum)?;
                artifacts.extend(prefixed(&format!("k{k}"), names));
                artifacts.push(format!("k{k}/summary.json"));
                rows.push(SweepRow {
                    k,
                    final_time_s: r.final_time,
                    risk: sum.risk.value,
                    risk_paper_sum: sum.risk.paper_sum,
                    risk_joint: sum.risk.joint,
                    converged: r.converged,
                });
            }
            write_table(&common.out.join("sweep.csv"), &rows)?;
            artifacts.push("sweep.csv".into());
            println!("k   T_F [s]      risk");
            for r in &rows {
                println!("{:<3} {:>10.3}   {:.6}{}", r.k, r.final_time_s, r.risk, if r.converged { "" } else { "  (not converged)" });
            }
            let code = if rows.iter().all(|r| r.converged) { EXIT_OK } else { EXIT_NOT_CONVERGED };
            (common.out.clone(), Some(common.scenario.clone()), l.overrides, l.scenario.qmc.seed, artifacts, code)
        }
        Command::Evaluate { trajectory, scenario, out, overrides } => {
            let l = load(scenario, overrides)?;
            let trajs = io::read_trajectories(trajectory)?;
            if trajs.len() != l.scenario.vehicle_count() {
                eprintln!(
                    "note: trajectory file has {} vehicles, scenario lists {}; evaluating the file as given",
                    trajs.len(),
                    l.scenario.vehicle_count()
                );
            }
            let pts = point_set(&l.scenario)?;
            let grid = coverage_grid(&trajs, &l.scenario.domain, COVERAGE_CELLS, COVERAGE_CELLS, &l.scenario.sensor, baseline::DEFAULT_PASS_THRESHOLD)?;
            let report = risk_report(&trajs, &l.scenario, &pts, grid.seen_fraction())?;
            let tracks: Vec<Track> = trajs.iter().map(Track::from_trajectory).collect();
            let table = RiskEvaluator::new(&l.scenario.sensor, &pts).exposures(&tracks);
            let totals: Vec<f64> = (0..table.points).map(|i| table.total(i)).collect();
            let min = totals.iter().copied().fold(f64::INFINITY, f64::min);
            let max = totals.iter().copied().fold(0.0, f64::max);
            let mean = totals.iter().sum::<f64>() / totals.len() as f64;
            println!("risk ({}): {:.12e}", l.scenario.risk_mode.label(), report.value);
            println!("risk (paper-sum): {:.12e}", report.paper_sum);
            println!("risk (joint): {:.12e}", report.joint);
            println!("exposure: min {min:.6e}  mean {mean:.6e}  max {max:.6e}");
            println!("coverage seen fraction: {:.4}", report.coverage_seen_fraction);
            let mut artifacts = Vec::new();
            if let Some(dir) = out {
                std::fs::create_dir_all(dir)?;
                let sum = summary("evaluate", &l, &pts, report);
                io::write_json(&dir.join("summary.json"), &sum)?;
                artifacts.push("summary.json".into());
            }
            match out {
                Some(dir) => (dir.clone(), Some(scenario.clone()), l.overrides, l.scenario.qmc.seed, artifacts, EXIT_OK),
                None => return Ok(EXIT_OK),
            }
        }
    };
    let finished = chrono::Utc::now();
    let manifest = RunManifest {
        command: cmd.name().to_string(),
        scenario: scenario_path,
        output_dir: out_dir.clone(),
        seed,
        overrides,
        started: started.to_rfc3339(),
        finished: finished.to_rfc3339(),
        wall_time_s: clock.elapsed().as_secs_f64(),
        exit_code: code,
        artifacts,
    };
    io::write_json(&out_dir.join("manifest.json"), &manifest)?;
    Ok(code)
}
