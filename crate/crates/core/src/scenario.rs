//! Scenario definition and validation.
//!
//! Everything in a [`Scenario`] is in internal units (meters, seconds,
//! radians). Degree-based configuration files are converted in
//! [`crate::config`].

use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::dynamics::VehicleState;
pub use crate::geometry::{Domain, Point};
use crate::error::{Error, Result};
use crate::sensor::SensorParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleParams {
    /// Forward speed, m/s.
    pub speed: f64,
    /// Nomoto gain, 1/s.
    pub gain: f64,
    /// Nomoto time constant, s.
    pub time_constant: f64,
    /// Rudder deflection limit, rad.
    pub rudder_limit: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self { speed: 2.5, gain: 5.0, time_constant: 0.5, rudder_limit: 35f64.to_radians() }
    }
}

impl VehicleParams {
    /// Radius of a steady turn at full rudder, `V / (K d_max)`.
    pub fn min_turn_radius(&self) -> f64 {
        self.speed / (self.gain * self.rudder_limit)
    }

    pub fn diagnose(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (name, v) in [("speed", self.speed), ("gain", self.gain), ("time_constant", self.time_constant)] {
            if !(v.is_finite() && v > 0.0) {
                out.push(format!("vehicle: {name} must be positive and finite, got {v}"));
            }
        }
        if !(self.rudder_limit > 0.0 && self.rudder_limit <= std::f64::consts::FRAC_PI_2) {
            out.push(format!(
                "vehicle: rudder_limit must lie in (0, 90] degrees, got {}",
                self.rudder_limit.to_degrees()
            ));
        }
        out
    }
}

/// Start position and heading (rad).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub psi: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, psi: f64) -> Self {
        Self { x, y, psi }
    }

    pub fn position(&self) -> Point {
        Point::new(self.x, self.y)
    }

    /// Initial state; vehicles start with zero turn rate.
    pub fn state(&self) -> VehicleState {
        VehicleState::new(self.x, self.y, self.psi, 0.0)
    }
}

/// How per-vehicle non-detection is combined across a fleet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RiskMode {
    /// Sum over vehicles of each vehicle's expected non-detection; equals k at time zero.
    #[default]
    PaperSum,
    /// Expected joint non-detection, `E[exp(-sum of exposures)]`; equals 1 at time zero.
    Joint,
}

impl RiskMode {
    pub fn label(self) -> &'static str {
        match self {
            RiskMode::PaperSum => "paper-sum",
            RiskMode::Joint => "joint",
        }
    }
}

impl std::str::FromStr for RiskMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper-sum" | "paper_sum" | "sum" => Ok(RiskMode::PaperSum),
            "joint" | "joint-exposure" => Ok(RiskMode::Joint),
            other => Err(Error::InvalidArgument(format!("unknown risk mode '{other}' (paper-sum | joint)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QmcSettings {
    /// Points per shift.
    pub points: usize,
    /// Number of random shifts.
    pub shifts: usize,
    pub seed: u64,
}

impl Default for QmcSettings {
    fn default() -> Self {
        Self { points: 4096, shifts: 8, seed: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub domain: Domain,
    pub sensor: SensorParams,
    pub vehicle: VehicleParams,
    /// Residual-risk threshold.
    pub risk_threshold: f64,
    /// One start pose per vehicle; the vehicle count is `starts.len()`.
    pub starts: Vec<Pose>,
    pub qmc: QmcSettings,
    pub risk_mode: RiskMode,
}

impl Scenario {
    /// Reference setup: square [5, 25]² m, reference sonar and vehicle, one vehicle at (5.1, 5.1).
    pub fn reference() -> Self {
        Self {
            domain: Domain::rectangle(5.0, 5.0, 25.0, 25.0).expect("square is valid"),
            sensor: SensorParams::default(),
            vehicle: VehicleParams::default(),
            risk_threshold: 0.05,
            starts: vec![Pose::new(5.1, 5.1, 0.0)],
            qmc: QmcSettings::default(),
            risk_mode: RiskMode::PaperSum,
        }
    }

    pub fn vehicle_count(&self) -> usize {
        self.starts.len()
    }

    /// Same scenario with `k` vehicles all starting at the first start pose.
    pub fn with_shared_start(&self, k: usize) -> Scenario {
        let start = self.starts.first().copied().unwrap_or_default();
        Scenario { starts: vec![start; k], ..self.clone() }
    }

    pub fn diagnose(&self) -> Vec<String> {
        let mut out = Vec::new();
        out.extend(self.sensor.diagnose());
        out.extend(self.vehicle.diagnose());
        if self.starts.is_empty() {
            out.push("mission: at least one vehicle is required".into());
        }
        for (i, s) in self.starts.iter().enumerate() {
            if !(s.x.is_finite() && s.y.is_finite() && s.psi.is_finite()) {
                out.push(format!("mission: start {i} is not finite"));
            } else if !self.domain.contains(s.position()) {
                out.push(format!("mission: start {i} at ({}, {}) lies outside the domain", s.x, s.y));
            }
        }
        if !(self.risk_threshold > 0.0 && self.risk_threshold <= 1.0) {
            out.push(format!(
                "mission: risk threshold must lie in (0, 1], got {} (zero is not attainable)",
                self.risk_threshold
            ));
        }
        if self.qmc.points < 16 {
            out.push(format!("qmc: at least 16 points per shift are required, got {}", self.qmc.points));
        }
        if self.qmc.shifts < 1 {
            out.push("qmc: at least one shift is required".into());
        }
        out
    }

    /// Checks every invariant and returns the scenario wrapped as validated.
    pub fn validate(self) -> Result<ValidatedScenario> {
        let diags = self.diagnose();
        if diags.is_empty() {
            Ok(ValidatedScenario(self))
        } else {
            Err(Error::InvalidScenario(diags))
        }
    }
}

/// A scenario that passed [`Scenario::validate`]. Immutable.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidatedScenario(Scenario);

impl ValidatedScenario {
    pub fn into_inner(self) -> Scenario {
        self.0
    }
}

impl Deref for ValidatedScenario {
    type Target = Scenario;
    fn deref(&self) -> &Scenario {
        &self.0
    }
}
