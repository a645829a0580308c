//! Solver configuration.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the initial rudder schedule is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitStrategy {
    /// Fit the headings of a trimmed boustrophedon plan.
    Lawnmower,
    /// Out-and-back runs fanned around the start, length chosen to meet the threshold.
    #[default]
    Sortie,
    /// Outward spiral with decreasing curvature.
    Spiral,
    /// Seeded random schedule.
    Random,
}

impl InitStrategy {
    pub fn label(self) -> &'static str {
        match self {
            InitStrategy::Lawnmower => "lawnmower",
            InitStrategy::Sortie => "sortie",
            InitStrategy::Spiral => "spiral",
            InitStrategy::Random => "random",
        }
    }
}

impl std::str::FromStr for InitStrategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lawnmower" => Ok(InitStrategy::Lawnmower),
            "sortie" => Ok(InitStrategy::Sortie),
            "spiral" => Ok(InitStrategy::Spiral),
            "random" => Ok(InitStrategy::Random),
            other => Err(Error::InvalidArgument(format!("unknown init strategy '{other}'"))),
        }
    }
}

/// Soft domain containment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "mode")]
pub enum Containment {
    Off,
    /// Adds `weight * integral(distance outside domain)^2 dt` to the merit, in
    /// seconds of mission time per m^2 s.
    Penalty { weight: f64 },
}

impl Default for Containment {
    fn default() -> Self {
        Containment::Penalty { weight: 0.0 }
    }
}

impl Containment {
    pub fn weight(self) -> f64 {
        match self {
            Containment::Off => 0.0,
            Containment::Penalty { weight } => weight,
        }
    }
}

/// How the merit gradient is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GradientMethod {
    /// Forward sensitivities through the integrator and the risk quadrature.
    #[default]
    Analytic,
    /// One-sided differences with per-coordinate steps.
    ForwardDifference,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TranscriptionConfig {
    /// Control nodes per vehicle on the normalised time grid.
    pub n_nodes: usize,
    /// Target integration step, s. The actual step is `T_F / M`, with `M`
    /// from [`mesh_steps`](super::mesh_steps), fixed for each inner solve.
    pub dt_sim: f64,
    /// Rudder limit override, rad; the vehicle's limit is used when absent.
    pub d_max: Option<f64>,
    /// Allowed residual-risk excess over the threshold.
    pub risk_tol: f64,
    /// Allowed end-to-start distance, m.
    pub pos_tol: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    pub penalty_init: f64,
    pub penalty_growth: f64,
    pub init_strategy: InitStrategy,
    pub n_starts: usize,
    pub containment: Containment,
    pub gradient: GradientMethod,
    /// Lower bound on the mission time, s.
    pub t_min: f64,
    /// Upper bound on the mission time, s.
    pub t_max: f64,
    /// Projected-gradient tolerance of the inner problem (scaled variables).
    pub stationarity_tol: f64,
    /// Seed for random initial schedules.
    pub seed: u64,
}

impl Default for TranscriptionConfig {
    fn default() -> Self {
        Self {
            n_nodes: 60,
            dt_sim: 0.1,
            d_max: None,
            risk_tol: 1e-3,
            pos_tol: 0.5,
            max_outer: 12,
            max_inner: 120,
            penalty_init: 10.0,
            penalty_growth: 10.0,
            init_strategy: InitStrategy::Sortie,
            n_starts: 3,
            containment: Containment::default(),
            gradient: GradientMethod::Analytic,
            t_min: 0.1,
            t_max: 7200.0,
            stationarity_tol: 1e-4,
            seed: 1,
        }
    }
}

impl TranscriptionConfig {
    pub fn diagnose(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.n_nodes < 4 {
            out.push(format!("solver: n_nodes must be at least 4, got {}", self.n_nodes));
        }
        for (name, v) in [
            ("dt_sim", self.dt_sim),
            ("risk_tol", self.risk_tol),
            ("pos_tol", self.pos_tol),
            ("penalty_init", self.penalty_init),
            ("t_min", self.t_min),
            ("stationarity_tol", self.stationarity_tol),
        ] {
            if !(v.is_finite() && v > 0.0) {
                out.push(format!("solver: {name} must be positive and finite, got {v}"));
            }
        }
        if !(self.penalty_growth > 1.0) {
            out.push(format!("solver: penalty_growth must exceed 1, got {}", self.penalty_growth));
        }
        if !(self.t_max > self.t_min) {
            out.push(format!("solver: t_max ({}) must exceed t_min ({})", self.t_max, self.t_min));
        }
        if let Some(d) = self.d_max {
            if !(d > 0.0 && d <= std::f64::consts::FRAC_PI_2) {
                out.push(format!("solver: d_max must lie in (0, 90] degrees, got {}", d.to_degrees()));
            }
        }
        if self.max_outer == 0 || self.max_inner == 0 {
            out.push("solver: iteration limits must be positive".into());
        }
        if self.n_starts == 0 {
            out.push("solver: n_starts must be at least 1".into());
        }
        if self.containment.weight() < 0.0 || !self.containment.weight().is_finite() {
            out.push("solver: containment weight must be non-negative".into());
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.diagnose();
        if d.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidArgument(d.join("; ")))
        }
    }
}
