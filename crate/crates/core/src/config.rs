//! Scenario files.
//!
//! A scenario file is a TOML document with the sections `domain`, `sensor`,
//! `vehicle`, `mission` (all required) and `qmc`, `solver` (optional).
//! Angles are given in degrees, everything else in meters and seconds.
//! Missing fields inside a section take the reference values; unknown keys
//! are rejected.
//!
//! ```toml
//! [domain]
//! rectangle = [5.0, 5.0, 25.0, 25.0]   # x_min, y_min, x_max, y_max
//!
//! [sensor]
//! figure_of_merit = 72.0
//!
//! [vehicle]
//! speed = 2.5
//!
//! [mission]
//! vehicles = 1
//! risk_threshold = 0.05
//! starts = [[5.1, 5.1, 0.0]]           # x, y, heading_deg
//! risk_mode = "paper-sum"
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Domain, Point};
use crate::scenario::{Pose, QmcSettings, RiskMode, Scenario, VehicleParams};
use crate::sensor::SensorParams;
use crate::solver::{Containment, GradientMethod, InitStrategy, TranscriptionConfig};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSection {
    /// Axis-aligned rectangle `[x_min, y_min, x_max, y_max]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rectangle: Option<[f64; 4]>,
    /// Four vertices of a convex quadrilateral, counter-clockwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vertices: Option<[[f64; 2]; 4]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensorSection {
    /// Scan rate, 1/s.
    pub scan_rate: f64,
    /// Figure of merit, dB.
    pub figure_of_merit: f64,
    /// Absorption, dB/km.
    pub attenuation: f64,
    /// Signal-excess standard deviation, dB.
    pub spread: f64,
    pub horizontal_fov_deg: f64,
    pub vertical_fov_deg: f64,
    pub depression_deg: f64,
    /// Horizontal gate slope, 1/rad.
    pub horizontal_slope: f64,
    /// Vertical gate slope, 1/rad.
    pub vertical_slope: f64,
    /// Altitude above the seabed, m.
    pub height: f64,
    pub min_range: f64,
}

impl Default for SensorSection {
    fn default() -> Self {
        Self::from(&SensorParams::default())
    }
}

impl From<&SensorParams> for SensorSection {
    fn from(p: &SensorParams) -> Self {
        Self {
            scan_rate: p.scan_rate,
            figure_of_merit: p.figure_of_merit,
            attenuation: p.attenuation,
            spread: p.spread,
            horizontal_fov_deg: p.horizontal_fov.to_degrees(),
            vertical_fov_deg: p.vertical_fov.to_degrees(),
            depression_deg: p.depression_center.to_degrees(),
            horizontal_slope: p.horizontal_slope,
            vertical_slope: p.vertical_slope,
            height: p.height,
            min_range: p.min_range,
        }
    }
}

impl SensorSection {
    pub fn params(&self) -> SensorParams {
        SensorParams {
            scan_rate: self.scan_rate,
            figure_of_merit: self.figure_of_merit,
            attenuation: self.attenuation,
            spread: self.spread,
            horizontal_fov: self.horizontal_fov_deg.to_radians(),
            vertical_fov: self.vertical_fov_deg.to_radians(),
            depression_center: self.depression_deg.to_radians(),
            horizontal_slope: self.horizontal_slope,
            vertical_slope: self.vertical_slope,
            height: self.height,
            min_range: self.min_range,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VehicleSection {
    /// m/s.
    pub speed: f64,
    /// Nomoto gain, 1/s.
    pub gain: f64,
    /// Nomoto time constant, s.
    pub time_constant: f64,
    pub rudder_limit_deg: f64,
}

impl Default for VehicleSection {
    fn default() -> Self {
        let v = VehicleParams::default();
        Self { speed: v.speed, gain: v.gain, time_constant: v.time_constant, rudder_limit_deg: v.rudder_limit.to_degrees() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MissionSection {
    /// Fleet size; when larger than the number of starts, the extra vehicles
    /// share the first start.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vehicles: Option<usize>,
    pub risk_threshold: f64,
    /// `[x, y, heading_deg]` per vehicle.
    pub starts: Vec<[f64; 3]>,
    #[serde(default = "default_mode")]
    pub risk_mode: RiskMode,
}

fn default_mode() -> RiskMode {
    RiskMode::PaperSum
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QmcSection {
    pub points: usize,
    pub shifts: usize,
    pub seed: u64,
}

impl Default for QmcSection {
    fn default() -> Self {
        let q = QmcSettings::default();
        Self { points: q.points, shifts: q.shifts, seed: q.seed }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub nodes: usize,
    pub dt_sim: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d_max_deg: Option<f64>,
    pub risk_tol: f64,
    pub pos_tol: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    pub penalty_init: f64,
    pub penalty_growth: f64,
    pub init: InitStrategy,
    pub n_starts: usize,
    /// Containment weight; `0` keeps the penalty inactive.
    pub containment_weight: f64,
    pub gradient: GradientMethod,
    pub t_min: f64,
    pub t_max: f64,
    pub stationarity_tol: f64,
    pub seed: u64,
}

impl Default for SolverSection {
    fn default() -> Self {
        Self::from(&TranscriptionConfig::default())
    }
}

impl From<&TranscriptionConfig> for SolverSection {
    fn from(c: &TranscriptionConfig) -> Self {
        Self {
            nodes: c.n_nodes,
            dt_sim: c.dt_sim,
            d_max_deg: c.d_max.map(f64::to_degrees),
            risk_tol: c.risk_tol,
            pos_tol: c.pos_tol,
            max_outer: c.max_outer,
            max_inner: c.max_inner,
            penalty_init: c.penalty_init,
            penalty_growth: c.penalty_growth,
            init: c.init_strategy,
            n_starts: c.n_starts,
            containment_weight: c.containment.weight(),
            gradient: c.gradient,
            t_min: c.t_min,
            t_max: c.t_max,
            stationarity_tol: c.stationarity_tol,
            seed: c.seed,
        }
    }
}

impl SolverSection {
    pub fn config(&self) -> TranscriptionConfig {
        TranscriptionConfig {
            n_nodes: self.nodes,
            dt_sim: self.dt_sim,
            d_max: self.d_max_deg.map(f64::to_radians),
            risk_tol: self.risk_tol,
            pos_tol: self.pos_tol,
            max_outer: self.max_outer,
            max_inner: self.max_inner,
            penalty_init: self.penalty_init,
            penalty_growth: self.penalty_growth,
            init_strategy: self.init,
            n_starts: self.n_starts,
            containment: Containment::Penalty { weight: self.containment_weight },
            gradient: self.gradient,
            t_min: self.t_min,
            t_max: self.t_max,
            stationarity_tol: self.stationarity_tol,
            seed: self.seed,
        }
    }
}

/// The document as written on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub domain: DomainSection,
    pub sensor: SensorSection,
    pub vehicle: VehicleSection,
    pub mission: MissionSection,
    #[serde(default)]
    pub qmc: QmcSection,
    #[serde(default)]
    pub solver: SolverSection,
}

impl ScenarioFile {
    /// Parses a document. `origin` names the source in error messages.
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Format { path: origin.to_string(), message: e.to_string() })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Serialises back to TOML.
    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("scenario files always serialise")
    }

    /// File describing `s` with solver settings `cfg`.
    pub fn from_parts(s: &Scenario, cfg: &TranscriptionConfig) -> Self {
        let vertices = s.domain.vertices().map(|p| [p.x, p.y]);
        let domain = match s.domain.as_rectangle() {
            Some(bb) => DomainSection { rectangle: Some([bb.min.x, bb.min.y, bb.max.x, bb.max.y]), vertices: None },
            None => DomainSection { rectangle: None, vertices: Some(vertices) },
        };
        Self {
            domain,
            sensor: SensorSection::from(&s.sensor),
            vehicle: VehicleSection {
                speed: s.vehicle.speed,
                gain: s.vehicle.gain,
                time_constant: s.vehicle.time_constant,
                rudder_limit_deg: s.vehicle.rudder_limit.to_degrees(),
            },
            mission: MissionSection {
                vehicles: Some(s.vehicle_count()),
                risk_threshold: s.risk_threshold,
                starts: s.starts.iter().map(|p| [p.x, p.y, p.psi.to_degrees()]).collect(),
                risk_mode: s.risk_mode,
            },
            qmc: QmcSection { points: s.qmc.points, shifts: s.qmc.shifts, seed: s.qmc.seed },
            solver: SolverSection::from(cfg),
        }
    }

    /// Builds the (unvalidated) scenario and solver configuration.
    pub fn build(&self) -> Result<(Scenario, TranscriptionConfig)> {
        let domain = match (&self.domain.rectangle, &self.domain.vertices) {
            (Some(r), None) => Domain::rectangle(r[0], r[1], r[2], r[3])?,
            (None, Some(v)) => Domain::new(v.map(|[x, y]| Point::new(x, y)))?,
            _ => {
                return Err(Error::InvalidScenario(vec!["domain: give exactly one of `rectangle` or `vertices`".into()]));
            }
        };
        let mut starts: Vec<Pose> = self.mission.starts.iter().map(|&[x, y, h]| Pose::new(x, y, h.to_radians())).collect();
        if let Some(k) = self.mission.vehicles {
            if k == 0 {
                return Err(Error::InvalidScenario(vec!["mission: vehicles must be at least 1".into()]));
            }
            if starts.len() > k {
                return Err(Error::InvalidScenario(vec![format!(
                    "mission: {} starts given for {k} vehicles",
                    starts.len()
                )]));
            }
            if let Some(&first) = starts.first() {
                starts.resize(k, first);
            }
        }
        let v = &self.vehicle;
        let scenario = Scenario {
            domain,
            sensor: self.sensor.params(),
            vehicle: VehicleParams {
                speed: v.speed,
                gain: v.gain,
                time_constant: v.time_constant,
                rudder_limit: v.rudder_limit_deg.to_radians(),
            },
            risk_threshold: self.mission.risk_threshold,
            starts,
            qmc: QmcSettings { points: self.qmc.points, shifts: self.qmc.shifts, seed: self.qmc.seed },
            risk_mode: self.mission.risk_mode,
        };
        Ok((scenario, self.solver.config()))
    }
}
