//! Minimum-time optimal control of the survey fleet.
//!
//! The mission time `T_F` and the rudder nodes of every vehicle are chosen to
//! minimise `T_F` subject to the residual-risk constraint and the
//! return-to-start conditions. Constraints enter through an augmented
//! Lagrangian whose inner problem is solved by projected L-BFGS with rudder
//! and time bounds; several initial guesses may be tried in turn.

pub mod config;
pub mod init;
pub mod lbfgs;
pub mod merit;
pub mod transcription;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{ControlSchedule, Trajectory};
use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::risk::{QmcPointSet, RiskEvaluator, Track};
use crate::scenario::{RiskMode, Scenario, ValidatedScenario};

pub use config::{Containment, GradientMethod, InitStrategy, TranscriptionConfig};
pub use transcription::{mesh_steps, transcribe, transcribe_steps, DecisionVector};

use lbfgs::{LbfgsOptions, Termination};
use merit::{AlState, Problem};

/// Largest penalty parameter the outer loop will use.
const MAX_PENALTY: f64 = 1e9;

/// Constraint violations of a candidate plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violations {
    /// `max(0, risk - beta)`.
    pub risk: f64,
    /// Distance from end to start per vehicle, m.
    pub terminal: Vec<f64>,
    /// Integral of squared distance outside the domain, m² s (0 when containment is off).
    pub containment: f64,
}

impl Violations {
    pub fn max_terminal(&self) -> f64 {
        self.terminal.iter().copied().fold(0.0, f64::max)
    }

    /// True when risk and terminal violations are within the configured tolerances.
    pub fn within(&self, cfg: &TranscriptionConfig) -> bool {
        self.risk <= cfg.risk_tol && self.max_terminal() <= cfg.pos_tol
    }

    /// Largest violation relative to its tolerance.
    fn normalized(&self, cfg: &TranscriptionConfig) -> f64 {
        (self.risk / cfg.risk_tol).max(self.max_terminal() / cfg.pos_tol)
    }
}

/// One outer iteration of the augmented-Lagrangian loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OuterRecord {
    pub outer: usize,
    pub final_time: f64,
    pub risk: f64,
    pub max_terminal: f64,
    pub penalty: f64,
    pub merit: f64,
    pub inner_iterations: usize,
    pub projected_gradient: f64,
}

/// Outcome of a solve.
#[derive(Debug, Clone, Serialize)]
pub struct SolveResult {
    /// Mission time, s.
    pub final_time: f64,
    pub decision: DecisionVector,
    pub schedules: Vec<ControlSchedule>,
    pub trajectories: Vec<Trajectory>,
    /// Residual risk in the scenario's mode.
    pub risk: f64,
    pub risk_paper_sum: f64,
    pub risk_joint: f64,
    pub risk_mode: RiskMode,
    pub violations: Violations,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    pub converged: bool,
    /// Outer-loop history of the start that produced this result.
    pub history: Vec<OuterRecord>,
    /// Initial guess of the start that produced this result: a strategy label
    /// or `warm-start`.
    pub init: String,
    /// Index of that start among the attempted ones.
    pub start_index: usize,
    pub starts_tried: usize,
    /// Integration steps and step length of the reported trajectories.
    pub steps: usize,
    pub dt: f64,
}

impl SolveResult {
    pub fn feasible(&self, cfg: &TranscriptionConfig) -> bool {
        self.violations.within(cfg)
    }

    /// Feasible results beat infeasible ones; among feasible results the
    /// shorter mission wins, among infeasible ones the smaller violation.
    pub fn better_than(&self, other: &SolveResult, cfg: &TranscriptionConfig) -> bool {
        match (self.feasible(cfg), other.feasible(cfg)) {
            (true, false) => true,
            (false, true) => false,
            (true, true) => self.final_time < other.final_time,
            (false, false) => self.violations.normalized(cfg) < other.violations.normalized(cfg),
        }
    }
}

/// Rudder bound actually used by the solver.
fn rudder_bound(s: &Scenario, cfg: &TranscriptionConfig) -> f64 {
    cfg.d_max.map_or(s.vehicle.rudder_limit, |d| d.min(s.vehicle.rudder_limit))
}

fn point_set(s: &Scenario) -> Result<QmcPointSet> {
    QmcPointSet::generate(s.qmc.points, s.qmc.shifts, s.qmc.seed, &s.domain)
}

/// Plan quality of `dv` on its canonical mesh (see [`mesh_steps`]).
struct Assessment {
    trajectories: Vec<Trajectory>,
    risk: f64,
    violations: Violations,
    steps: usize,
}

fn assess(dv: &DecisionVector, s: &Scenario, cfg: &TranscriptionConfig, evaluator: &RiskEvaluator) -> Result<Assessment> {
    let steps = mesh_steps(dv.final_time, cfg.dt_sim, dv.n_nodes());
    let trajectories = transcribe_steps(dv, &s.starts, &s.vehicle, steps)?;
    let tracks: Vec<Track> = trajectories.iter().map(Track::from_trajectory).collect();
    let (risk, _) = evaluator.risk(&tracks, s.risk_mode);
    let terminal = trajectories
        .iter()
        .zip(&s.starts)
        .map(|(t, p)| Point::new(t.last().x - p.x, t.last().y - p.y).norm())
        .collect();
    let containment = if cfg.containment == Containment::Off { 0.0 } else { containment_integral(&trajectories, s) };
    let violations = Violations { risk: (risk - s.risk_threshold).max(0.0), terminal, containment };
    Ok(Assessment { trajectories, risk, violations, steps })
}

fn containment_integral(trajs: &[Trajectory], s: &Scenario) -> f64 {
    let mut total = 0.0;
    for t in trajs {
        let n = t.states.len();
        for (i, st) in t.states.iter().enumerate() {
            let p = Point::new(st.x, st.y);
            if let Some(q) = s.domain.nearest_if_outside(p) {
                let w = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
                total += w * t.dt * (p - q).dot(p - q);
            }
        }
    }
    total
}

/// Constraint violations of `dv`, using the scenario's point set and the
/// configured integration step.
pub fn evaluate_constraints(dv: &DecisionVector, s: &ValidatedScenario, cfg: &TranscriptionConfig) -> Result<Violations> {
    let evaluator = RiskEvaluator::new(&s.sensor, &point_set(s)?);
    evaluate_constraints_with(dv, s, cfg, &evaluator)
}

/// As [`evaluate_constraints`] with a prepared evaluator.
pub fn evaluate_constraints_with(
    dv: &DecisionVector,
    s: &ValidatedScenario,
    cfg: &TranscriptionConfig,
    evaluator: &RiskEvaluator,
) -> Result<Violations> {
    if dv.vehicles() != s.vehicle_count() {
        return Err(Error::InvalidArgument(format!(
            "decision vector has {} vehicles, scenario has {}",
            dv.vehicles(),
            s.vehicle_count()
        )));
    }
    Ok(assess(dv, s, cfg, evaluator)?.violations)
}

/// A finished single-start run.
struct Attempt {
    dv: DecisionVector,
    assessment: Assessment,
    feasible: bool,
    converged: bool,
    outer: usize,
    inner: usize,
    history: Vec<OuterRecord>,
}

impl Attempt {
    /// Ordering key: feasible runs by time, then infeasible runs by violation.
    fn better_than(&self, other: &Attempt, cfg: &TranscriptionConfig) -> bool {
        match (self.feasible, other.feasible) {
            (true, false) => true,
            (false, true) => false,
            (true, true) => self.dv.final_time < other.dv.final_time,
            (false, false) => self.assessment.violations.normalized(cfg) < other.assessment.violations.normalized(cfg),
        }
    }
}

/// Runs the augmented-Lagrangian loop from one initial guess.
fn solve_single(s: &Scenario, cfg: &TranscriptionConfig, evaluator: &RiskEvaluator, init: DecisionVector) -> Result<Attempt> {
    let d_max = rudder_bound(s, cfg);
    let k = s.vehicle_count();
    let n = cfg.n_nodes;
    let mut dv = init;
    dv.final_time = dv.final_time.clamp(cfg.t_min, cfg.t_max);
    for r in dv.rudder.iter_mut().flatten() {
        *r = r.clamp(-d_max, d_max);
    }
    let t_ref = dv.final_time.max(10.0 * cfg.t_min).max(1.0);
    let lo: Vec<f64> = std::iter::once(cfg.t_min / t_ref).chain(std::iter::repeat_n(-1.0, k * n)).collect();
    let hi: Vec<f64> = std::iter::once(cfg.t_max / t_ref).chain(std::iter::repeat_n(1.0, k * n)).collect();
    let mut al = AlState { mu: 0.0, lambda: vec![0.0; 2 * k], rho: cfg.penalty_init };

    let start_assessment = assess(&dv, s, cfg, evaluator)?;
    let mut best: Option<(DecisionVector, Assessment)> = None;
    if start_assessment.violations.within(cfg) {
        best = Some((dv.clone(), start_assessment));
    }
    let mut history = Vec::new();
    let mut total_inner = 0;
    let mut prev_violation = f64::INFINITY;
    let mut prev_tf = f64::NAN;
    let mut converged = false;
    let mut outer = 0;
    while outer < cfg.max_outer {
        outer += 1;
        let problem = Problem {
            evaluator,
            domain: &s.domain,
            vehicle: s.vehicle,
            starts: &s.starts,
            mode: s.risk_mode,
            beta: s.risk_threshold,
            d_max,
            t_ref,
            terminal_scale: 10.0 * cfg.pos_tol,
            containment_weight: cfg.containment.weight(),
            steps: mesh_steps(dv.final_time, cfg.dt_sim, n),
            n_nodes: n,
            gradient: cfg.gradient,
        };
        let z0 = problem.scale(&dv);
        let opts = LbfgsOptions { max_iter: cfg.max_inner, pg_tol: cfg.stationarity_tol, ..Default::default() };
        let out = lbfgs::minimize(&z0, &lo, &hi, &opts, |z, want_grad| {
            if want_grad {
                let (e, g) = problem.evaluate_with_gradient(z, &al, &lo, &hi)?;
                Ok::<_, Error>((e.merit, (e.risk, e.terminal), Some(g)))
            } else {
                let e = problem.evaluate(z, &al)?;
                Ok((e.merit, (e.risk, e.terminal), None))
            }
        })?;
        total_inner += out.iterations;
        dv = problem.unscale(&out.x);
        let (risk, terminal) = &out.extra;

        // multiplier update from the inner solution
        let g = (risk - s.risk_threshold) / s.risk_threshold;
        al.mu = (al.mu + al.rho * g).max(0.0);
        for (v, e) in terminal.iter().enumerate() {
            al.lambda[2 * v] += al.rho * e.x / problem.terminal_scale;
            al.lambda[2 * v + 1] += al.rho * e.y / problem.terminal_scale;
        }

        let a = assess(&dv, s, cfg, evaluator)?;
        let violation = a.violations.normalized(cfg);
        history.push(OuterRecord {
            outer,
            final_time: dv.final_time,
            risk: a.risk,
            max_terminal: a.violations.max_terminal(),
            penalty: al.rho,
            merit: out.value,
            inner_iterations: out.iterations,
            projected_gradient: out.projected_gradient,
        });
        let feasible = a.violations.within(cfg);
        let stationary = out.termination == Termination::Stationary;
        let stable = (dv.final_time - prev_tf).abs() <= 1e-3 * dv.final_time;
        prev_tf = dv.final_time;
        if feasible && best.as_ref().is_none_or(|(b, _)| dv.final_time < b.final_time) {
            best = Some((dv.clone(), a));
        }
        if feasible && (stationary || stable) {
            converged = true;
            break;
        }
        if violation > 0.25 * prev_violation || violation > 1.0 && out.termination == Termination::LineSearchFailed {
            al.rho = (al.rho * cfg.penalty_growth).min(MAX_PENALTY);
        }
        prev_violation = violation;
    }
    let (dv, assessment, feasible) = match best {
        Some((b, a)) => (b, a, true),
        None => {
            let a = assess(&dv, s, cfg, evaluator)?;
            (dv, a, false)
        }
    };
    Ok(Attempt { dv, assessment, feasible, converged: converged && feasible, outer, inner: total_inner, history })
}

fn finish(
    s: &Scenario,
    cfg: &TranscriptionConfig,
    evaluator: &RiskEvaluator,
    a: Attempt,
    init: &str,
    start_index: usize,
    starts_tried: usize,
) -> Result<SolveResult> {
    let d_max = rudder_bound(s, cfg);
    let tracks: Vec<Track> = a.assessment.trajectories.iter().map(Track::from_trajectory).collect();
    let (risk_paper_sum, _) = evaluator.risk(&tracks, RiskMode::PaperSum);
    let (risk_joint, _) = evaluator.risk(&tracks, RiskMode::Joint);
    let steps = a.assessment.steps;
    Ok(SolveResult {
        final_time: a.dv.final_time,
        schedules: a.dv.schedules(d_max)?,
        decision: a.dv,
        dt: a.assessment.trajectories[0].dt,
        trajectories: a.assessment.trajectories,
        risk: a.assessment.risk,
        risk_paper_sum,
        risk_joint,
        risk_mode: s.risk_mode,
        violations: a.assessment.violations,
        outer_iterations: a.outer,
        inner_iterations: a.inner,
        converged: a.converged,
        history: a.history,
        init: init.to_string(),
        start_index,
        starts_tried,
        steps,
    })
}

/// Solves the scenario with the point set of its qMC settings.
pub fn solve(s: &ValidatedScenario, cfg: &TranscriptionConfig) -> Result<SolveResult> {
    solve_with(s, cfg, &point_set(s)?)
}

/// Solves the scenario on a given point set.
///
/// The configured initial strategy is tried first, then the lawnmower guess
/// (unless it was the first), then seeded random guesses, until a run converges or `n_starts` runs have been made. The best
/// feasible run (shortest mission) is returned, or the least infeasible one.
pub fn solve_with(s: &ValidatedScenario, cfg: &TranscriptionConfig, pts: &QmcPointSet) -> Result<SolveResult> {
    cfg.validate()?;
    let evaluator = RiskEvaluator::new(&s.sensor, pts);
    let d_max = rudder_bound(s, cfg);
    // Every plan lasts at least `t_min`, so a feasible floor plan is optimal.
    let floor = DecisionVector::new(cfg.t_min, vec![vec![0.0; cfg.n_nodes]; s.vehicle_count()])?;
    let floor_assessment = assess(&floor, s, cfg, &evaluator)?;
    if floor_assessment.violations.within(cfg) {
        let attempt = Attempt {
            dv: floor,
            assessment: floor_assessment,
            feasible: true,
            converged: true,
            outer: 0,
            inner: 0,
            history: Vec::new(),
        };
        return finish(s, cfg, &evaluator, attempt, "floor", 0, 0);
    }
    let mut best: Option<(Attempt, InitStrategy, usize)> = None;
    let mut tried = 0;
    for i in 0..cfg.n_starts {
        let strategy = match i {
            0 => cfg.init_strategy,
            1 if cfg.init_strategy != InitStrategy::Lawnmower => InitStrategy::Lawnmower,
            _ => InitStrategy::Random,
        };
        let seed = cfg.seed.wrapping_add(i as u64);
        let (init, used) = init::initial_guess(strategy, s, pts, cfg.n_nodes, d_max, cfg.dt_sim, seed)?;
        let attempt = solve_single(s, cfg, &evaluator, init)?;
        tried += 1;
        let done = attempt.converged;
        if best.as_ref().is_none_or(|(b, _, _)| attempt.better_than(b, cfg)) {
            best = Some((attempt, used, i));
        }
        if done {
            break;
        }
    }
    let (attempt, init, index) = best.expect("at least one start");
    finish(s, cfg, &evaluator, attempt, init.label(), index, tried)
}

/// Solves from a caller-supplied initial decision vector (single start).
pub fn solve_from(
    s: &ValidatedScenario,
    cfg: &TranscriptionConfig,
    pts: &QmcPointSet,
    init: DecisionVector,
    label: &str,
) -> Result<SolveResult> {
    cfg.validate()?;
    if init.vehicles() != s.vehicle_count() || init.n_nodes() != cfg.n_nodes {
        return Err(Error::InvalidArgument(format!(
            "initial guess is {}x{}, problem needs {}x{}",
            init.vehicles(),
            init.n_nodes(),
            s.vehicle_count(),
            cfg.n_nodes
        )));
    }
    let evaluator = RiskEvaluator::new(&s.sensor, pts);
    let attempt = solve_single(s, cfg, &evaluator, init)?;
    finish(s, cfg, &evaluator, attempt, label, 0, 1)
}

/// Solves the scenario for each fleet size in `k_list`, all vehicles sharing
/// the first start pose.
///
/// The first entry is an ordinary [`solve`]. Each later entry is solved
/// twice, once from the configured initial guess and once from the previous
/// solution with the extra vehicles flying mirrored copies of the existing
/// schedules (slightly perturbed when a copy would repeat an existing vehicle
/// exactly), and the better of the two is kept.
pub fn sweep_vehicles(s: &ValidatedScenario, cfg: &TranscriptionConfig, k_list: &[usize]) -> Result<Vec<SolveResult>> {
    if k_list.is_empty() || k_list.contains(&0) {
        return Err(Error::InvalidArgument("vehicle counts must be at least 1".into()));
    }
    let pts = point_set(s)?;
    let mut out: Vec<SolveResult> = Vec::with_capacity(k_list.len());
    let d_max = rudder_bound(s, cfg);
    for &k in k_list {
        let sk = s.with_shared_start(k).validate()?;
        let fresh = solve_with(&sk, cfg, &pts)?;
        let result = match out.last() {
            Some(prev) if prev.decision.vehicles() < k && prev.decision.n_nodes() == cfg.n_nodes => {
                let mut dv = init::extend_fleet(&prev.decision, k);
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ (k as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
                for v in prev.decision.vehicles()..k {
                    if (0..v).any(|w| dv.rudder[w] == dv.rudder[v]) {
                        for u in dv.rudder[v].iter_mut() {
                            *u = (*u + 0.05 * d_max * rng.random_range(-1.0..1.0)).clamp(-d_max, d_max);
                        }
                    }
                }
                let warm = solve_from(&sk, cfg, &pts, dv, "warm-start")?;
                if warm.better_than(&fresh, cfg) {
                    warm
                } else {
                    fresh
                }
            }
            _ => fresh,
        };
        out.push(result);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> (ValidatedScenario, TranscriptionConfig) {
        let mut s = Scenario::reference();
        s.qmc.points = 256;
        s.qmc.shifts = 1;
        let cfg = TranscriptionConfig { n_nodes: 8, max_outer: 4, max_inner: 40, n_starts: 1, ..Default::default() };
        (s.validate().unwrap(), cfg)
    }

    #[test]
    fn vacuous_threshold_stays_at_floor() {
        let (s, cfg) = tiny();
        let mut s = s.into_inner();
        s.risk_threshold = 1.0;
        let s = s.validate().unwrap();
        let r = solve(&s, &cfg).unwrap();
        assert!(r.converged);
        assert_eq!(r.final_time, cfg.t_min);
        assert_eq!(r.violations.risk, 0.0);
        assert!(r.violations.max_terminal() <= cfg.pos_tol);
    }

    #[test]
    fn floor_has_full_risk_violation() {
        let (s, cfg) = tiny();
        let dv = DecisionVector::new(cfg.t_min, vec![vec![0.0; 8]]).unwrap();
        let v = evaluate_constraints(&dv, &s, &cfg).unwrap();
        assert!((v.risk - 0.95).abs() < 1e-9, "{v:?}");
    }

    #[test]
    fn reported_risk_matches_independent_evaluation() {
        let (s, cfg) = tiny();
        let r = solve(&s, &cfg).unwrap();
        let pts = point_set(&s).unwrap();
        let again = crate::risk::residual_risk(&r.trajectories, &pts, &s.sensor, s.risk_mode).unwrap();
        assert!((again - r.risk).abs() <= 1e-10, "{again} vs {}", r.risk);
    }
}
