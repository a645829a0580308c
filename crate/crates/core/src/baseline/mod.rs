//! Boustrophedon (lawnmower) baseline planner.
//!
//! Legs run parallel to the x-axis, alternate direction and are extended
//! beyond the domain so that the forward-looking sonar has seen the domain
//! edge before the vehicle reaches it and every end turn happens outside the
//! survey area. Legs are appended until the residual risk of the path so far
//! drops below the threshold, then the vehicle returns to its start.

pub mod path;

use serde::Serialize;

use crate::dynamics::{Trajectory, VehicleState};
use crate::error::{Error, Result};
use crate::geometry::{Aabb, Domain, Point};
use crate::risk::{residual_risk, QmcPointSet};
use crate::scenario::{Pose, ValidatedScenario, VehicleParams};
use crate::sensor::{detection_rate, SensorModel, SensorParams};

pub use path::{Segment, SegmentKind};

/// Overlap factor applied to twice the swath half-width for automatic spacing.
pub const AUTO_OVERLAP: f64 = 0.85;
/// Single-pass detection probability defining the swath.
pub const DEFAULT_PASS_THRESHOLD: f64 = 0.9;

/// Track spacing request.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Spacing {
    /// `2 * W * AUTO_OVERLAP` with `W` the effective swath half-width.
    Auto,
    /// Fixed spacing in metres.
    Fixed(f64),
}

impl std::str::FromStr for Spacing {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(Spacing::Auto);
        }
        s.parse::<f64>()
            .map(Spacing::Fixed)
            .map_err(|_| Error::InvalidArgument(format!("spacing must be a number or 'auto', got '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaselineOptions {
    pub spacing: Spacing,
    pub pass_threshold: f64,
    /// Sampling step of the output trajectory, s.
    pub dt: f64,
    /// Give up once this many legs have not reached the risk threshold.
    pub max_legs: usize,
    /// Distance each leg extends past the domain, m. When absent the sensor's
    /// forward run-in is used, so that the sonar sweeps every row end.
    pub run_in: Option<f64>,
}

impl Default for BaselineOptions {
    fn default() -> Self {
        Self { spacing: Spacing::Auto, pass_threshold: DEFAULT_PASS_THRESHOLD, dt: 0.05, max_legs: 200, run_in: None }
    }
}

/// One straight survey leg.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Leg {
    pub from: Point,
    pub to: Point,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LawnmowerPlan {
    /// Requested track separation, m.
    pub spacing: f64,
    /// Separation actually used so that legs fill the domain evenly, m.
    pub effective_spacing: f64,
    /// Swath half-width at the pass threshold, m.
    pub swath_halfwidth: f64,
    /// Radius of the end turns, m.
    pub turn_radius: f64,
    /// Radius used for the transit and return connectors, m.
    pub min_turn_radius: f64,
    /// Distance legs extend beyond the domain on each side, m.
    pub run_in: f64,
    pub legs: Vec<Leg>,
    /// Every piece of the path, in order.
    pub segments: Vec<Segment>,
    pub start: Pose,
    pub end: Pose,
    pub length: f64,
    pub path_time: f64,
    pub achieved_risk: f64,
}

impl LawnmowerPlan {
    pub fn turns(&self) -> impl Iterator<Item = &Segment> {
        self.segments.iter().filter(|s| s.kind == SegmentKind::Turn)
    }

    /// Poses every `step` metres along the segments of one kind.
    pub fn sample_kind(&self, kind: SegmentKind, step: f64) -> Vec<Pose> {
        let mut out = Vec::new();
        for seg in self.segments.iter().filter(|s| s.kind == kind) {
            let n = (seg.length / step).ceil().max(1.0) as usize;
            out.extend((0..=n).map(|i| seg.pose_at(seg.length * i as f64 / n as f64)));
        }
        out
    }
}

/// Number of end-turn samples (every `step` m) lying inside the domain by
/// more than `eps`. Zero means every turn is flown outside the survey area.
pub fn turn_samples_inside(plan: &LawnmowerPlan, domain: &Domain, step: f64, eps: f64) -> usize {
    plan.sample_kind(SegmentKind::Turn, step)
        .iter()
        .filter(|p| {
            let c = p.position();
            [(eps, 0.0), (-eps, 0.0), (0.0, eps), (0.0, -eps)]
                .iter()
                .all(|&(dx, dy)| domain.contains(Point::new(c.x + dx, c.y + dy)))
        })
        .count()
}

/// Total path length divided by the speed.
pub fn path_time(plan: &LawnmowerPlan, vehicle: &VehicleParams) -> f64 {
    plan.length / vehicle.speed
}

/// Exposure of a target at lateral offset `offset` from an infinite straight pass.
pub fn single_pass_exposure(offset: f64, sp: &SensorParams, vp: &VehicleParams) -> f64 {
    let (_, far) = SensorModel::new(sp).support();
    single_pass_exposure_with(offset, sp, vp, far)
}

fn single_pass_exposure_with(offset: f64, sp: &SensorParams, vp: &VehicleParams, far: f64) -> f64 {
    const STEP: f64 = 0.25;
    let target = Point::new(0.0, offset);
    let half = far + 1.0;
    let n = (2.0 * half / STEP).ceil() as usize;
    let h = 2.0 * half / n as f64;
    let mut sum = 0.0;
    for i in 0..=n {
        let x = -half + i as f64 * h;
        let w = if i == 0 || i == n { 0.5 } else { 1.0 };
        sum += w * detection_rate(&VehicleState::new(x, 0.0, 0.0, 0.0), target, sp);
    }
    sum * h / vp.speed
}

/// Largest lateral offset at which one straight pass reaches detection
/// probability `pass_threshold`.
pub fn effective_swath_halfwidth(sp: &SensorParams, vp: &VehicleParams, pass_threshold: f64) -> Result<f64> {
    if !(pass_threshold > 0.0 && pass_threshold < 1.0) {
        return Err(Error::InvalidArgument(format!("pass threshold must lie in (0, 1), got {pass_threshold}")));
    }
    let (_, far) = SensorModel::new(sp).support();
    let needed = -(-pass_threshold).ln_1p();
    let ok = |d: f64| single_pass_exposure_with(d, sp, vp, far) >= needed;
    // coarse scan downward from the edge of the sensor footprint
    let step = (far / 400.0).max(1e-3);
    let mut hi = far;
    let mut lo = None;
    while hi > 0.0 {
        let d = (hi - step).max(0.0);
        if ok(d) {
            lo = Some(d);
            break;
        }
        hi = d;
    }
    let mut lo = lo.ok_or(Error::SensorTooWeak(pass_threshold))?;
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if ok(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-9 * far {
            break;
        }
    }
    Ok(lo)
}

/// Furthest dead-ahead range at which the detection rate still exceeds
/// `1e-3` of the scan rate; legs are extended by this much.
pub fn forward_run_in(sp: &SensorParams) -> f64 {
    let (_, far) = SensorModel::new(sp).support();
    let origin = VehicleState::default();
    let n = 20_000;
    (0..=n)
        .rev()
        .map(|i| far * i as f64 / n as f64)
        .find(|&r| detection_rate(&origin, Point::new(r, 0.0), sp) >= 1e-3 * sp.scan_rate)
        .unwrap_or(0.0)
}

/// Samples the path at a step that divides its duration evenly.
pub fn sample_path(segments: &[Segment], start: Pose, vp: &VehicleParams, dt: f64) -> Trajectory {
    let length = path::total_length(segments);
    let total = length / vp.speed;
    if total <= 0.0 {
        return Trajectory::stationary(start.state());
    }
    let steps = (total / dt).ceil().max(1.0) as usize;
    let dt_eff = total / steps as f64;
    let mut states = Vec::with_capacity(steps + 1);
    let mut rudder = Vec::with_capacity(steps + 1);
    let mut seg_idx = 0;
    let mut seg_start = 0.0;
    for i in 0..=steps {
        let s = (i as f64 * dt_eff * vp.speed).min(length);
        while seg_idx + 1 < segments.len() && s > seg_start + segments[seg_idx].length {
            seg_start += segments[seg_idx].length;
            seg_idx += 1;
        }
        let seg = &segments[seg_idx];
        let pose = seg.pose_at((s - seg_start).min(seg.length));
        let r = vp.speed * seg.curvature;
        states.push(VehicleState::new(pose.x, pose.y, pose.psi, r));
        rudder.push(r / vp.gain);
    }
    Trajectory { dt: dt_eff, states, rudder }
}

struct Layout {
    rows: Vec<f64>,
    x_lo: f64,
    x_hi: f64,
}

impl Layout {
    /// Leg `i` of the bouncing row sequence, starting in direction `first_east`.
    fn leg(&self, i: usize, first_east: bool) -> (Pose, Pose) {
        let n = self.rows.len();
        let row = if n == 1 {
            0
        } else {
            let period = 2 * (n - 1);
            let k = i % period;
            if k < n {
                k
            } else {
                period - k
            }
        };
        let y = self.rows[row];
        let east = (i % 2 == 0) == first_east;
        if east {
            (Pose::new(self.x_lo, y, 0.0), Pose::new(self.x_hi, y, 0.0))
        } else {
            (Pose::new(self.x_hi, y, std::f64::consts::PI), Pose::new(self.x_lo, y, std::f64::consts::PI))
        }
    }
}

fn build(
    start: Pose,
    layout: &Layout,
    legs: usize,
    first_east: bool,
    turn_radius: f64,
    min_radius: f64,
    with_return: bool,
) -> (Vec<Segment>, Vec<Leg>) {
    let mut segs = Vec::new();
    let mut leg_list = Vec::new();
    let mut pose = start;
    for i in 0..legs {
        let (a, b) = layout.leg(i, first_east);
        let (rho, kind) = if i == 0 { (min_radius, SegmentKind::Transit) } else { (turn_radius, SegmentKind::Turn) };
        let connector = path::chain(pose, &path::dubins_csc(pose, a, rho), kind);
        pose = connector.last().map(|s| s.end()).unwrap_or(pose);
        segs.extend(connector);
        // start the straight leg exactly where it was designed to start
        let leg_len = a.position().dist(b.position());
        let seg = Segment { start: Pose { psi: pose.psi, ..a }, length: leg_len, curvature: 0.0, kind: SegmentKind::Leg };
        pose = seg.end();
        segs.push(seg);
        leg_list.push(Leg { from: a.position(), to: b.position() });
    }
    if with_return {
        let back = path::chain(pose, &path::turn_and_go(pose, start.position(), min_radius), SegmentKind::Return);
        segs.extend(back);
    }
    (segs, leg_list)
}

/// Plans a boustrophedon survey for a single vehicle over a rectangular domain.
pub fn plan_boustrophedon(
    s: &ValidatedScenario,
    pts: &QmcPointSet,
    opts: &BaselineOptions,
) -> Result<(LawnmowerPlan, Trajectory)> {
    if s.vehicle_count() != 1 {
        return Err(Error::InvalidArgument(format!(
            "the boustrophedon baseline is single-vehicle, got {} vehicles",
            s.vehicle_count()
        )));
    }
    let bb: Aabb = s
        .domain
        .as_rectangle()
        .ok_or_else(|| Error::InvalidArgument("the boustrophedon baseline needs an axis-aligned rectangular domain".into()))?;
    if !(opts.dt > 0.0) {
        return Err(Error::InvalidArgument(format!("sampling step must be positive, got {}", opts.dt)));
    }
    let vp = s.vehicle;
    let swath = effective_swath_halfwidth(&s.sensor, &vp, opts.pass_threshold)?;
    let spacing = match opts.spacing {
        Spacing::Auto => 2.0 * swath * AUTO_OVERLAP,
        Spacing::Fixed(v) if v > 0.0 && v.is_finite() => v,
        Spacing::Fixed(v) => return Err(Error::InvalidArgument(format!("spacing must be positive, got {v}"))),
    };
    let rows_n = (bb.height() / spacing).ceil().max(1.0) as usize;
    let eff = bb.height() / rows_n as f64;
    let start = s.starts[0];
    let mut rows: Vec<f64> = (0..rows_n).map(|i| bb.min.y + (i as f64 + 0.5) * eff).collect();
    if (start.y - bb.min.y).abs() > (start.y - bb.max.y).abs() {
        rows.reverse();
    }
    let min_radius = vp.min_turn_radius();
    let turn_radius = min_radius.max(0.5 * eff);
    let run_in = match opts.run_in {
        Some(v) if v >= 0.0 && v.is_finite() => v.max(2.0 * turn_radius),
        Some(v) => return Err(Error::InvalidArgument(format!("run-in must be non-negative, got {v}"))),
        None => forward_run_in(&s.sensor).max(2.0 * turn_radius),
    };
    let layout = Layout { rows, x_lo: bb.min.x - run_in, x_hi: bb.max.x + run_in };
    // pick the first leg direction with the shorter transit
    let transit_len = |east: bool| {
        let (a, _) = layout.leg(0, east);
        path::dubins_csc(start, a, min_radius).iter().map(|p| p.0).sum::<f64>()
    };
    let first_east = transit_len(true) <= transit_len(false);

    let risk_of = |segs: &[Segment]| -> Result<f64> {
        let traj = sample_path(segs, start, &vp, opts.dt);
        residual_risk(&[traj], pts, &s.sensor, s.risk_mode)
    };

    let mut legs = 0;
    let mut risk = 1.0;
    if s.risk_threshold >= 1.0 {
        risk = risk_of(&[])?;
    }
    while risk > s.risk_threshold {
        if legs == opts.max_legs {
            return Err(Error::RiskUnreachable { target: s.risk_threshold, achieved: risk, legs });
        }
        legs += 1;
        let (segs, _) = build(start, &layout, legs, first_east, turn_radius, min_radius, false);
        risk = risk_of(&segs)?;
    }
    let (segments, leg_list) = if legs == 0 {
        (Vec::new(), Vec::new())
    } else {
        build(start, &layout, legs, first_east, turn_radius, min_radius, true)
    };
    let traj = sample_path(&segments, start, &vp, opts.dt);
    let achieved_risk = residual_risk(std::slice::from_ref(&traj), pts, &s.sensor, s.risk_mode)?;
    let length = path::total_length(&segments);
    let end = segments.last().map(|g| g.end()).unwrap_or(start);
    let plan = LawnmowerPlan {
        spacing,
        effective_spacing: eff,
        swath_halfwidth: swath,
        turn_radius,
        min_turn_radius: min_radius,
        run_in,
        legs: leg_list,
        segments,
        start,
        end,
        length,
        path_time: length / vp.speed,
        achieved_risk,
    };
    Ok((plan, traj))
}
