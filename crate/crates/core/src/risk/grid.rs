//! Deterministic midpoint-grid quadrature and coverage maps.

use rayon::prelude::*;
use serde::Serialize;

use super::{common_final_time, exposure};
use crate::dynamics::Trajectory;
use crate::error::{Error, Result};
use crate::geometry::{Domain, Point};
use crate::scenario::RiskMode;
use crate::sensor::SensorParams;

/// Residual risk by a `resolution x resolution` midpoint rule over the
/// bounding box, with cells clipped to the domain and weighted by the clipped
/// area. Slow but independent of the lattice machinery; used as a reference.
pub fn risk_oracle_grid(
    trajs: &[Trajectory],
    domain: &Domain,
    resolution: usize,
    sp: &SensorParams,
    mode: RiskMode,
) -> Result<f64> {
    if resolution == 0 {
        return Err(Error::InvalidArgument("grid resolution must be positive".into()));
    }
    common_final_time(trajs)?;
    let bb = domain.bounding_box();
    let hx = bb.width() / resolution as f64;
    let hy = bb.height() / resolution as f64;
    let area = domain.area();
    let cells: Vec<(usize, usize)> = (0..resolution).flat_map(|j| (0..resolution).map(move |i| (i, j))).collect();
    let terms: Vec<f64> = cells
        .par_iter()
        .map(|&(i, j)| {
            let min = Point::new(bb.min.x + i as f64 * hx, bb.min.y + j as f64 * hy);
            let max = Point::new(min.x + hx, min.y + hy);
            let (a, centroid) = domain.clip_box(min, max);
            if a <= 0.0 {
                return 0.0;
            }
            let e: Vec<f64> = trajs.iter().map(|t| exposure(t, centroid, sp)).collect();
            let survive = match mode {
                RiskMode::PaperSum => e.iter().map(|v| (-v).exp()).sum(),
                RiskMode::Joint => (-e.iter().sum::<f64>()).exp(),
            };
            survive * a / area
        })
        .collect();
    Ok(terms.iter().sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoverageCell {
    pub x: f64,
    pub y: f64,
    /// Joint exposure summed over vehicles.
    pub exposure: f64,
    /// Cumulative detection probability `1 - exp(-exposure)` reached the threshold.
    pub seen: bool,
    /// Cell centre lies inside the domain.
    pub valid: bool,
}

/// Exposure map over cell centres of a regular grid on the bounding box.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageGrid {
    pub nx: usize,
    pub ny: usize,
    pub seen_threshold: f64,
    /// Row-major from the lower-left cell.
    pub cells: Vec<CoverageCell>,
}

impl CoverageGrid {
    /// Fraction of valid cells that were seen.
    pub fn seen_fraction(&self) -> f64 {
        let valid = self.cells.iter().filter(|c| c.valid).count();
        if valid == 0 {
            return 0.0;
        }
        self.cells.iter().filter(|c| c.valid && c.seen).count() as f64 / valid as f64
    }
}

pub fn coverage_grid(
    trajs: &[Trajectory],
    domain: &Domain,
    nx: usize,
    ny: usize,
    sp: &SensorParams,
    seen_threshold: f64,
) -> Result<CoverageGrid> {
    if nx == 0 || ny == 0 {
        return Err(Error::InvalidArgument("coverage grid needs at least one cell per axis".into()));
    }
    if !(seen_threshold > 0.0 && seen_threshold < 1.0) {
        return Err(Error::InvalidArgument(format!("seen threshold must lie in (0, 1), got {seen_threshold}")));
    }
    let bb = domain.bounding_box();
    let hx = bb.width() / nx as f64;
    let hy = bb.height() / ny as f64;
    let cells = (0..nx * ny)
        .into_par_iter()
        .map(|idx| {
            let (i, j) = (idx % nx, idx / nx);
            let p = Point::new(bb.min.x + (i as f64 + 0.5) * hx, bb.min.y + (j as f64 + 0.5) * hy);
            let e: f64 = trajs.iter().map(|t| exposure(t, p, sp)).sum();
            CoverageCell { x: p.x, y: p.y, exposure: e, seen: -(-e).exp_m1() >= seen_threshold, valid: domain.contains(p) }
        })
        .collect();
    Ok(CoverageGrid { nx, ny, seen_threshold, cells })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::VehicleState;

    #[test]
    fn stationary_grid_risk_is_one() {
        let d = Domain::new([Point::new(0.0, 0.0), Point::new(10.0, 1.0), Point::new(9.0, 8.0), Point::new(-1.0, 6.0)])
            .unwrap();
        let t = Trajectory::stationary(VehicleState::default());
        let r = risk_oracle_grid(&[t], &d, 17, &SensorParams::default(), RiskMode::Joint).unwrap();
        assert!((r - 1.0).abs() < 1e-12, "{r}");
    }

    #[test]
    fn coverage_of_idle_vehicle_is_empty() {
        let d = Domain::rectangle(5.0, 5.0, 25.0, 25.0).unwrap();
        let t = Trajectory::stationary(VehicleState::default());
        let g = coverage_grid(&[t], &d, 4, 5, &SensorParams::default(), 0.9).unwrap();
        assert_eq!(g.cells.len(), 20);
        assert!(g.cells.iter().all(|c| c.valid && !c.seen));
        assert_eq!(g.seen_fraction(), 0.0);
    }
}
