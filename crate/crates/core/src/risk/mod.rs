//! Residual mine risk: the expected probability that a uniformly placed
//! target survives the mission undetected.
//!
//! For one vehicle the risk is `E_omega[exp(-exposure(omega))]`, where the
//! exposure is the time integral of the detection rate. The spatial
//! expectation is estimated with shifted lattice rules ([`qmc`]) and
//! cross-checked against a dense midpoint grid ([`grid`]).

pub mod grid;
pub mod qmc;

use rayon::prelude::*;

use crate::dynamics::Trajectory;
use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::scenario::RiskMode;
use crate::sensor::{detection_rate, SensorModel, SensorParams};

pub use grid::{coverage_grid, risk_oracle_grid, CoverageCell, CoverageGrid};
pub use qmc::QmcPointSet;

/// Exposure at which accumulation stops inside risk sums; `exp(-50)` is
/// below 2e-22 and cannot change any reported risk.
pub const EXPOSURE_SATURATION: f64 = 50.0;

const GRADIENT_CHUNKS: usize = 16;

/// Exact trapezoidal exposure of one target along one trajectory.
pub fn exposure(traj: &Trajectory, omega: Point, sp: &SensorParams) -> f64 {
    let n = traj.states.len();
    if n < 2 {
        return 0.0;
    }
    let mut sum = 0.0;
    for (i, s) in traj.states.iter().enumerate() {
        let w = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
        sum += w * detection_rate(s, omega, sp);
    }
    sum * traj.dt
}

/// Sampled positions and heading directions of one trajectory, in the layout
/// the quadrature loops want.
#[derive(Debug, Clone, Default)]
pub struct Track {
    pub dt: f64,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub cos: Vec<f64>,
    pub sin: Vec<f64>,
}

impl Track {
    pub fn new(dt: f64, x: Vec<f64>, y: Vec<f64>, psi: &[f64]) -> Self {
        let (sin, cos) = psi.iter().map(|p| p.sin_cos()).unzip();
        Self { dt, x, y, cos, sin }
    }

    pub fn from_trajectory(t: &Trajectory) -> Self {
        let x = t.states.iter().map(|s| s.x).collect();
        let y = t.states.iter().map(|s| s.y).collect();
        let psi: Vec<f64> = t.states.iter().map(|s| s.psi).collect();
        Self::new(t.dt, x, y, &psi)
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn final_time(&self) -> f64 {
        self.dt * self.len().saturating_sub(1) as f64
    }
}

/// Exposure of a set of targets to a set of vehicles.
///
/// Layout: `values[point * vehicles + vehicle]`, points in shift-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct ExposureTable {
    pub points: usize,
    pub vehicles: usize,
    pub values: Vec<f64>,
}

impl ExposureTable {
    pub fn get(&self, point: usize, vehicle: usize) -> f64 {
        self.values[point * self.vehicles + vehicle]
    }

    /// Joint exposure of one point summed over vehicles.
    pub fn total(&self, point: usize) -> f64 {
        self.values[point * self.vehicles..(point + 1) * self.vehicles].iter().sum()
    }

    fn combine(&self, mode: RiskMode) -> f64 {
        let k = self.vehicles;
        let sum: f64 = self
            .values
            .chunks(k)
            .map(|e| match mode {
                RiskMode::PaperSum => e.iter().map(|v| (-v).exp()).sum::<f64>(),
                RiskMode::Joint => (-e.iter().sum::<f64>()).exp(),
            })
            .sum();
        sum / self.points as f64
    }
}

/// Gradient of the residual risk with respect to one vehicle's samples.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrackGradient {
    pub d_x: Vec<f64>,
    pub d_y: Vec<f64>,
    pub d_psi: Vec<f64>,
    /// Derivative with respect to the sample spacing `dt` (positions held fixed).
    pub d_dt: f64,
}

/// Culled, saturating risk evaluator over a fixed set of target points.
#[derive(Debug, Clone)]
pub struct RiskEvaluator {
    model: SensorModel,
    points: Vec<Point>,
    /// Centre and radius of a disc holding every point.
    hull_centre: Point,
    hull_radius: f64,
}

/// Half-open index ranges of samples that can see at least one point.
type Spans = Vec<(usize, usize)>;

impl RiskEvaluator {
    pub fn new(sp: &SensorParams, points: &QmcPointSet) -> Self {
        Self::from_points(sp, points.domain_points.clone())
    }

    /// Equal-weight evaluator over arbitrary points.
    pub fn from_points(sp: &SensorParams, points: Vec<Point>) -> Self {
        let (lo, hi) = points.iter().fold(
            (Point::new(f64::INFINITY, f64::INFINITY), Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY)),
            |(lo, hi), p| (Point::new(lo.x.min(p.x), lo.y.min(p.y)), Point::new(hi.x.max(p.x), hi.y.max(p.y))),
        );
        let hull_centre = if points.is_empty() { Point::default() } else { (lo + hi).scale(0.5) };
        let hull_radius = points.iter().map(|p| p.dist(hull_centre)).fold(0.0, f64::max);
        Self { model: SensorModel::new(sp), points, hull_centre, hull_radius }
    }

    pub fn model(&self) -> &SensorModel {
        &self.model
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    /// Whether any point can receive a non-culled rate from this sample.
    fn sample_active(&self, x: f64, y: f64, c: f64, s: f64) -> bool {
        let (near, far) = self.model.support();
        let dx = self.hull_centre.x - x;
        let dy = self.hull_centre.y - y;
        let d = dx.hypot(dy);
        let r = self.hull_radius * (1.0 + 1e-12) + 1e-9;
        if d + r < near || d - r > far {
            return false;
        }
        if d <= r {
            return true;
        }
        let off_bow = (-dx * s + dy * c).atan2(dx * c + dy * s).abs();
        off_bow - (r / d).asin() <= self.model.max_bearing()
    }

    fn spans(&self, track: &Track) -> Spans {
        let mut out = Vec::new();
        let mut open = None;
        for i in 0..track.len() {
            let active = self.sample_active(track.x[i], track.y[i], track.cos[i], track.sin[i]);
            match (active, open) {
                (true, None) => open = Some(i),
                (false, Some(a)) => {
                    out.push((a, i));
                    open = None;
                }
                _ => {}
            }
        }
        if let Some(a) = open {
            out.push((a, track.len()));
        }
        out
    }

    fn accumulate(&self, track: &Track, spans: &Spans, omega: Point, cap: f64) -> f64 {
        let n = track.len();
        if n < 2 {
            return 0.0;
        }
        let limit = cap / track.dt;
        let m = &self.model;
        let mut sum = 0.0;
        'spans: for &(a, b) in spans {
            for i in a..b {
                let g = m.rate(track.x[i], track.y[i], track.cos[i], track.sin[i], omega);
                sum += if i == 0 || i == n - 1 { 0.5 * g } else { g };
                if sum >= limit {
                    break 'spans;
                }
            }
        }
        sum * track.dt
    }

    fn table(&self, tracks: &[Track], cap: f64) -> ExposureTable {
        let k = tracks.len();
        let spans: Vec<Spans> = tracks.iter().map(|t| self.spans(t)).collect();
        let values: Vec<f64> = self
            .points
            .par_iter()
            .flat_map_iter(|&omega| {
                tracks.iter().zip(&spans).map(move |(t, sp)| self.accumulate(t, sp, omega, cap))
            })
            .collect();
        ExposureTable { points: self.points.len(), vehicles: k, values }
    }

    /// Full (unsaturated) exposure table.
    pub fn exposures(&self, tracks: &[Track]) -> ExposureTable {
        self.table(tracks, f64::INFINITY)
    }

    /// Residual risk together with the saturated exposure table it was computed from.
    pub fn risk(&self, tracks: &[Track], mode: RiskMode) -> (f64, ExposureTable) {
        let table = self.table(tracks, EXPOSURE_SATURATION);
        (table.combine(mode), table)
    }

    /// Gradient of the risk returned by [`RiskEvaluator::risk`] with respect to
    /// every sampled vehicle position, heading and the sample spacing.
    pub fn risk_gradient(&self, tracks: &[Track], mode: RiskMode, table: &ExposureTable) -> Vec<TrackGradient> {
        let k = tracks.len();
        let n_pts = self.points.len();
        let norm = 1.0 / n_pts as f64;
        let chunk = n_pts.div_ceil(GRADIENT_CHUNKS).max(1);
        let spans: Vec<Spans> = tracks.iter().map(|t| self.spans(t)).collect();
        let partials: Vec<Vec<TrackGradient>> = (0..n_pts)
            .collect::<Vec<_>>()
            .par_chunks(chunk)
            .map(|idx| {
                let mut acc: Vec<TrackGradient> = tracks
                    .iter()
                    .map(|t| TrackGradient {
                        d_x: vec![0.0; t.len()],
                        d_y: vec![0.0; t.len()],
                        d_psi: vec![0.0; t.len()],
                        d_dt: 0.0,
                    })
                    .collect();
                for &p in idx {
                    let exps = &table.values[p * k..(p + 1) * k];
                    let total: f64 = exps.iter().sum();
                    for (v, track) in tracks.iter().enumerate() {
                        let e = match mode {
                            RiskMode::PaperSum => exps[v],
                            RiskMode::Joint => total,
                        };
                        // saturated exposures were truncated, so the risk does not depend on them
                        if exps[v] >= EXPOSURE_SATURATION || e >= EXPOSURE_SATURATION || track.len() < 2 {
                            continue;
                        }
                        // d risk / d exposure of this (point, vehicle)
                        let coef = -norm * (-e).exp();
                        let g = &mut acc[v];
                        g.d_dt += coef * exps[v] / track.dt;
                        let omega = self.points[p];
                        let last = track.len() - 1;
                        for &(a, b) in &spans[v] {
                            for i in a..b {
                                if let Some(rg) = self.model.rate_gradient(
                                    track.x[i],
                                    track.y[i],
                                    track.cos[i],
                                    track.sin[i],
                                    omega,
                                ) {
                                    let w = if i == 0 || i == last { 0.5 } else { 1.0 };
                                    let c = coef * w * track.dt;
                                    g.d_x[i] += c * rg.d_x;
                                    g.d_y[i] += c * rg.d_y;
                                    g.d_psi[i] += c * rg.d_psi;
                                }
                            }
                        }
                    }
                }
                acc
            })
            .collect();
        let mut out = partials.into_iter();
        let mut total = out.next().unwrap_or_default();
        for part in out {
            for (a, b) in total.iter_mut().zip(part) {
                a.d_dt += b.d_dt;
                for i in 0..a.d_x.len() {
                    a.d_x[i] += b.d_x[i];
                    a.d_y[i] += b.d_y[i];
                    a.d_psi[i] += b.d_psi[i];
                }
            }
        }
        total
    }
}

/// Checks that every trajectory shares one final time and returns it.
pub fn common_final_time(trajs: &[Trajectory]) -> Result<f64> {
    let first = trajs.first().ok_or_else(|| Error::InvalidArgument("no trajectories".into()))?.final_time();
    for t in &trajs[1..] {
        let tf = t.final_time();
        if (tf - first).abs() > 1e-9 * first.abs().max(1.0) {
            return Err(Error::MismatchedFinalTime(first, tf));
        }
    }
    Ok(first)
}

/// Shifted-lattice estimate of the residual risk of a fleet.
///
/// `PaperSum` returns a value in `(0, k]`, `Joint` a value in `(0, 1]`; they
/// coincide for a single vehicle.
pub fn residual_risk(trajs: &[Trajectory], pts: &QmcPointSet, sp: &SensorParams, mode: RiskMode) -> Result<f64> {
    common_final_time(trajs)?;
    let tracks: Vec<Track> = trajs.iter().map(Track::from_trajectory).collect();
    Ok(RiskEvaluator::new(sp, pts).risk(&tracks, mode).0)
}

/// Per-shift risk estimates, for error bars.
pub fn residual_risk_by_shift(
    trajs: &[Trajectory],
    pts: &QmcPointSet,
    sp: &SensorParams,
    mode: RiskMode,
) -> Result<Vec<f64>> {
    common_final_time(trajs)?;
    let tracks: Vec<Track> = trajs.iter().map(Track::from_trajectory).collect();
    let (_, table) = RiskEvaluator::new(sp, pts).risk(&tracks, mode);
    let k = tracks.len();
    Ok(table
        .values
        .chunks(pts.points * k)
        .map(|shift| {
            let sub = ExposureTable { points: pts.points, vehicles: k, values: shift.to_vec() };
            sub.combine(mode)
        })
        .collect())
}
