//! Python bindings for the survey planner.
//!
//! Trajectories cross the boundary as one list per vehicle of rows
//! `[t, x, y, psi, r, rudder]`, the same columns as the exported table.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use mcmplan::baseline::{plan_boustrophedon, BaselineOptions, Spacing};
use mcmplan::config::ScenarioFile;
use mcmplan::dynamics::{Trajectory, VehicleState};
use mcmplan::risk::{residual_risk as risk_of, QmcPointSet};
use mcmplan::scenario::{RiskMode, ValidatedScenario};
use mcmplan::solver::{self, TranscriptionConfig};

type Rows = Vec<Vec<[f64; 6]>>;

fn err(e: mcmplan::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_rows(trajs: &[Trajectory]) -> Rows {
    trajs
        .iter()
        .map(|t| {
            t.states
                .iter()
                .enumerate()
                .map(|(i, s)| [i as f64 * t.dt, s.x, s.y, s.psi, s.r, t.rudder.get(i).copied().unwrap_or(0.0)])
                .collect()
        })
        .collect()
}

fn from_rows(rows: &Rows) -> PyResult<Vec<Trajectory>> {
    rows.iter()
        .enumerate()
        .map(|(v, r)| {
            if r.is_empty() {
                return Err(PyValueError::new_err(format!("vehicle {v} has no samples")));
            }
            let n = r.len();
            let dt = if n > 1 { r[n - 1][0] / (n - 1) as f64 } else { 0.0 };
            Ok(Trajectory {
                dt,
                states: r.iter().map(|q| VehicleState::new(q[1], q[2], q[3], q[4])).collect(),
                rudder: r.iter().map(|q| q[5]).collect(),
            })
        })
        .collect()
}

/// A survey scenario together with its solver settings.
#[pyclass(name = "Scenario", module = "mcmplan_py", skip_from_py_object)]
#[derive(Clone)]
pub struct PyScenario {
    file: ScenarioFile,
}

impl PyScenario {
    fn build(&self) -> PyResult<(ValidatedScenario, TranscriptionConfig, QmcPointSet)> {
        let (s, cfg) = self.file.build().map_err(err)?;
        cfg.validate().map_err(err)?;
        let s = s.validate().map_err(err)?;
        let pts = QmcPointSet::generate(s.qmc.points, s.qmc.shifts, s.qmc.seed, &s.domain).map_err(err)?;
        Ok((s, cfg, pts))
    }
}

#[pymethods]
impl PyScenario {
    /// The reference square survey with default solver settings.
    #[staticmethod]
    fn reference() -> Self {
        let s = mcmplan::scenario::Scenario::reference();
        Self { file: ScenarioFile::from_parts(&s, &TranscriptionConfig::default()) }
    }

    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        Ok(Self { file: ScenarioFile::parse(text, "<string>").map_err(err)? })
    }

    #[staticmethod]
    fn load(path: std::path::PathBuf) -> PyResult<Self> {
        Ok(Self { file: ScenarioFile::load(&path).map_err(err)? })
    }

    fn to_toml(&self) -> String {
        self.file.to_toml()
    }

    #[getter]
    fn risk_threshold(&self) -> f64 {
        self.file.mission.risk_threshold
    }

    #[setter]
    fn set_risk_threshold(&mut self, v: f64) {
        self.file.mission.risk_threshold = v;
    }

    #[getter]
    fn risk_mode(&self) -> &'static str {
        self.file.mission.risk_mode.label()
    }

    #[setter]
    fn set_risk_mode(&mut self, v: &str) -> PyResult<()> {
        self.file.mission.risk_mode = v.parse::<RiskMode>().map_err(err)?;
        Ok(())
    }

    #[getter]
    fn vehicles(&self) -> usize {
        self.file.mission.vehicles.unwrap_or(self.file.mission.starts.len())
    }

    /// Sets the fleet size; extra vehicles share the first start.
    #[setter]
    fn set_vehicles(&mut self, k: usize) {
        self.file.mission.vehicles = Some(k);
    }

    /// Sets the quasi-Monte Carlo point count, shift count and seed.
    fn set_qmc(&mut self, points: usize, shifts: usize, seed: u64) {
        self.file.qmc.points = points;
        self.file.qmc.shifts = shifts;
        self.file.qmc.seed = seed;
    }

    /// Sets the rudder node count and the inner/start iteration budgets.
    #[pyo3(signature = (nodes=None, max_inner=None, max_outer=None, n_starts=None))]
    fn set_solver(&mut self, nodes: Option<usize>, max_inner: Option<usize>, max_outer: Option<usize>, n_starts: Option<usize>) {
        let s = &mut self.file.solver;
        s.nodes = nodes.unwrap_or(s.nodes);
        s.max_inner = max_inner.unwrap_or(s.max_inner);
        s.max_outer = max_outer.unwrap_or(s.max_outer);
        s.n_starts = n_starts.unwrap_or(s.n_starts);
    }

    fn __repr__(&self) -> String {
        format!(
            "Scenario(vehicles={}, risk_threshold={}, risk_mode='{}')",
            self.vehicles(),
            self.risk_threshold(),
            self.risk_mode()
        )
    }
}

/// Outcome of a minimum-time solve.
#[pyclass(name = "SolveResult", module = "mcmplan_py", skip_from_py_object, get_all)]
#[derive(Clone)]
pub struct PySolveResult {
    final_time: f64,
    risk: f64,
    risk_paper_sum: f64,
    risk_joint: f64,
    converged: bool,
    feasible: bool,
    max_terminal: f64,
    init: String,
    outer_iterations: usize,
    inner_iterations: usize,
    /// Rudder nodes, one list per vehicle.
    rudder: Vec<Vec<f64>>,
    trajectories: Rows,
}

impl PySolveResult {
    fn new(r: &solver::SolveResult, cfg: &TranscriptionConfig) -> Self {
        Self {
            final_time: r.final_time,
            risk: r.risk,
            risk_paper_sum: r.risk_paper_sum,
            risk_joint: r.risk_joint,
            converged: r.converged,
            feasible: r.feasible(cfg),
            max_terminal: r.violations.max_terminal(),
            init: r.init.clone(),
            outer_iterations: r.outer_iterations,
            inner_iterations: r.inner_iterations,
            rudder: r.decision.rudder.clone(),
            trajectories: to_rows(&r.trajectories),
        }
    }
}

#[pymethods]
impl PySolveResult {
    fn __repr__(&self) -> String {
        format!("SolveResult(final_time={:.3}, risk={:.6}, converged={})", self.final_time, self.risk, self.converged)
    }
}

/// Boustrophedon baseline plan.
#[pyclass(name = "BaselinePlan", module = "mcmplan_py", skip_from_py_object, get_all)]
#[derive(Clone)]
pub struct PyBaselinePlan {
    path_time: f64,
    length: f64,
    legs: usize,
    spacing: f64,
    swath_halfwidth: f64,
    risk: f64,
    trajectory: Vec<[f64; 6]>,
}

#[pymethods]
impl PyBaselinePlan {
    fn __repr__(&self) -> String {
        format!("BaselinePlan(path_time={:.3}, legs={}, spacing={:.3})", self.path_time, self.legs, self.spacing)
    }
}

/// Solves the minimum-time problem.
#[pyfunction]
fn solve(py: Python<'_>, scenario: &PyScenario) -> PyResult<PySolveResult> {
    let (s, cfg, pts) = scenario.build()?;
    let r = py.detach(|| solver::solve_with(&s, &cfg, &pts)).map_err(err)?;
    Ok(PySolveResult::new(&r, &cfg))
}

/// Solves for fleets of 1..=k_max vehicles sharing the first start.
#[pyfunction]
fn sweep(py: Python<'_>, scenario: &PyScenario, k_max: usize) -> PyResult<Vec<PySolveResult>> {
    if k_max == 0 {
        return Err(PyValueError::new_err("k_max must be at least 1"));
    }
    let (s, cfg, _) = scenario.build()?;
    let ks: Vec<usize> = (1..=k_max).collect();
    let results = py.detach(|| solver::sweep_vehicles(&s, &cfg, &ks)).map_err(err)?;
    Ok(results.iter().map(|r| PySolveResult::new(r, &cfg)).collect())
}

/// Plans the boustrophedon baseline; `spacing` in metres, automatic when omitted.
#[pyfunction]
#[pyo3(signature = (scenario, spacing=None))]
fn baseline(py: Python<'_>, scenario: &PyScenario, spacing: Option<f64>) -> PyResult<PyBaselinePlan> {
    let (s, _, pts) = scenario.build()?;
    let opts = BaselineOptions { spacing: spacing.map_or(Spacing::Auto, Spacing::Fixed), ..Default::default() };
    let (plan, traj) = py.detach(|| plan_boustrophedon(&s, &pts, &opts)).map_err(err)?;
    let risk = risk_of(std::slice::from_ref(&traj), &pts, &s.sensor, s.risk_mode).map_err(err)?;
    Ok(PyBaselinePlan {
        path_time: plan.path_time,
        length: plan.length,
        legs: plan.legs.len(),
        spacing: plan.spacing,
        swath_halfwidth: plan.swath_halfwidth,
        risk,
        trajectory: to_rows(std::slice::from_ref(&traj)).remove(0),
    })
}

/// Residual risk of trajectories given as rows `[t, x, y, psi, r, rudder]`.
#[pyfunction]
#[pyo3(signature = (scenario, trajectories, mode=None))]
fn residual_risk(scenario: &PyScenario, trajectories: Rows, mode: Option<&str>) -> PyResult<f64> {
    let (s, _, pts) = scenario.build()?;
    let mode = match mode {
        Some(m) => m.parse::<RiskMode>().map_err(err)?,
        None => s.risk_mode,
    };
    let trajs = from_rows(&trajectories)?;
    risk_of(&trajs, &pts, &s.sensor, mode).map_err(err)
}

#[pymodule]
pub fn mcmplan_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyScenario>()?;
    m.add_class::<PySolveResult>()?;
    m.add_class::<PyBaselinePlan>()?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(sweep, m)?)?;
    m.add_function(wrap_pyfunction!(baseline, m)?)?;
    m.add_function(wrap_pyfunction!(residual_risk, m)?)?;
    Ok(())
}
