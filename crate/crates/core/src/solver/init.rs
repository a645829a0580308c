//! Initial decision vectors.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use std::f64::consts::{PI, TAU};

use crate::baseline::path::{self, Segment, SegmentKind};
use crate::baseline::{forward_run_in, plan_boustrophedon, sample_path, BaselineOptions};
use crate::dynamics::Trajectory;
use crate::error::Result;
use crate::geometry::{Domain, Point};
use crate::risk::{QmcPointSet, RiskEvaluator, Track};
use crate::scenario::{Pose, RiskMode, Scenario, ValidatedScenario, VehicleParams};
use crate::sensor::SensorModel;

use super::config::InitStrategy;
use super::transcription::{hat, mesh_steps, DecisionVector};

/// Rough out-and-back mission time: reach the middle of the sensor footprint
/// beyond the domain and come back.
pub fn nominal_final_time(s: &Scenario) -> f64 {
    let (near, far) = SensorModel::new(&s.sensor).support();
    let bb = s.domain.bounding_box();
    let diameter = bb.width().hypot(bb.height());
    let reach = if far > near { near.max(0.5 * (near + far).min(near + 200.0)) } else { 0.0 };
    2.0 * (reach + diameter) / s.vehicle.speed
}

/// Heading response at the sample times to a unit value at each node, for a
/// vehicle starting with zero turn rate.
fn heading_basis(tf: f64, n: usize, vp: &VehicleParams, dt_sim: f64, rows: &[usize], steps: usize) -> DMatrix<f64> {
    let mut a = DMatrix::zeros(rows.len(), n);
    let dt = tf / steps as f64;
    let k = vp.gain;
    let tc = vp.time_constant;
    let _ = dt_sim;
    for j in 0..n {
        let u = |sigma: f64| {
            let (jj, w) = hat(sigma, n);
            if jj == j {
                1.0 - w
            } else if jj + 1 == j {
                w
            } else {
                0.0
            }
        };
        let (mut psi, mut r) = (0.0, 0.0);
        let mut row = 0;
        for i in 0..=steps {
            if row < rows.len() && rows[row] == i {
                a[(row, j)] = psi;
                row += 1;
            }
            if i == steps {
                break;
            }
            // RK4 on the linear heading subsystem
            let s0 = i as f64 / steps as f64;
            let sm = (i as f64 + 0.5) / steps as f64;
            let s1 = (i + 1) as f64 / steps as f64;
            let f = |r: f64, uu: f64| (r, (k * uu - r) / tc);
            let (p1, r1) = f(r, u(s0));
            let (p2, r2) = f(r + 0.5 * dt * r1, u(sm));
            let (p3, r3) = f(r + 0.5 * dt * r2, u(sm));
            let (p4, r4) = f(r + dt * r3, u(s1));
            psi += dt / 6.0 * (p1 + 2.0 * p2 + 2.0 * p3 + p4);
            r += dt / 6.0 * (r1 + 2.0 * r2 + 2.0 * r3 + r4);
        }
    }
    a
}

/// Least-squares rudder nodes whose heading response follows `reference`.
pub fn fit_heading(reference: &Trajectory, start_psi: f64, n: usize, vp: &VehicleParams, d_max: f64, dt_sim: f64) -> Vec<f64> {
    let tf = reference.final_time();
    if tf <= 0.0 {
        return vec![0.0; n];
    }
    let steps = mesh_steps(tf, dt_sim, n);
    let stride = (steps / (20 * n)).max(1);
    let rows: Vec<usize> = (0..=steps).step_by(stride).collect();
    let a = heading_basis(tf, n, vp, dt_sim, &rows, steps);
    let target = DVector::from_iterator(
        rows.len(),
        rows.iter().map(|&i| {
            let t = i as f64 / steps as f64 * tf;
            let idx = ((t / reference.dt).round() as usize).min(reference.states.len() - 1);
            reference.states[idx].psi - start_psi
        }),
    );
    // small ridge term keeps the fit well posed when nodes barely matter
    let ridge = 1e-6 * a.norm_squared() / n as f64;
    let ata = a.transpose() * &a + DMatrix::identity(n, n) * ridge;
    let atb = a.transpose() * target;
    let sol = ata.lu().solve(&atb).unwrap_or_else(|| DVector::zeros(n));
    sol.iter().map(|u| u.clamp(-d_max, d_max)).collect()
}

/// Number of leg extensions tried by [`coarse_lawnmower`].
const RUN_IN_CANDIDATES: usize = 10;

/// Bisection steps refining the best extension.
const RUN_IN_BISECTIONS: usize = 8;

/// The quickest boustrophedon that meets the risk threshold when the legs
/// extend a variable distance past the domain (the survey baseline always
/// uses the full forward run-in, which is conservative).
fn coarse_lawnmower(s: &ValidatedScenario, pts: &QmcPointSet) -> Option<Trajectory> {
    let full = forward_run_in(&s.sensor).max(1.0);
    let lowest = (4.0 * s.vehicle.min_turn_radius()).min(full);
    let plan = |run_in: f64| {
        let opts = BaselineOptions { run_in: Some(run_in), max_legs: 8, ..Default::default() };
        plan_boustrophedon(s, pts, &opts).ok()
    };
    let candidates: Vec<f64> = (0..RUN_IN_CANDIDATES)
        .map(|i| full * (lowest / full).powf(i as f64 / (RUN_IN_CANDIDATES - 1) as f64))
        .collect();
    let mut best: Option<(usize, f64, Trajectory, usize)> = None;
    for (i, &run_in) in candidates.iter().enumerate() {
        if let Some((p, t)) = plan(run_in) {
            if best.as_ref().is_none_or(|(_, time, _, _)| p.path_time < *time) {
                best = Some((i, p.path_time, t, p.legs.len()));
            }
        }
    }
    let (i, mut time, mut traj, legs) = best?;
    // shorten the extension further while the same leg count still suffices
    if let Some(&shorter) = candidates.get(i + 1) {
        let (mut ok, mut bad) = (candidates[i], shorter);
        for _ in 0..RUN_IN_BISECTIONS {
            let mid = 0.5 * (ok + bad);
            match plan(mid) {
                Some((p, t)) if p.legs.len() <= legs => {
                    ok = mid;
                    if p.path_time < time {
                        time = p.path_time;
                        traj = t;
                    }
                }
                _ => bad = mid,
            }
        }
    }
    Some(traj)
}

/// Rotates `traj` about its first position by `angle`.
fn rotate_about_start(traj: &Trajectory, angle: f64) -> Trajectory {
    let (sin, cos) = angle.sin_cos();
    let o = traj.states[0];
    let mut out = traj.clone();
    for st in out.states.iter_mut() {
        let (dx, dy) = (st.x - o.x, st.y - o.y);
        st.x = o.x + cos * dx - sin * dy;
        st.y = o.y + sin * dx + cos * dy;
        st.psi += angle;
    }
    out
}

/// Mean direction of a trajectory as seen from its first position.
fn mean_direction(traj: &Trajectory) -> f64 {
    let o = traj.states[0];
    let n = traj.states.len() as f64;
    let (sx, sy) = traj.states.iter().fold((0.0, 0.0), |(a, b), st| (a + st.x - o.x, b + st.y - o.y));
    (sy / n).atan2(sx / n)
}

fn lawnmower(s: &ValidatedScenario, pts: &QmcPointSet, n: usize, d_max: f64, dt_sim: f64) -> Option<DecisionVector> {
    let bb = s.domain.bounding_box();
    let rect = Domain::rectangle(bb.min.x, bb.min.y, bb.max.x, bb.max.y).ok()?;
    let centre = Point::new(0.5 * (bb.min.x + bb.max.x), 0.5 * (bb.min.y + bb.max.y));
    let k = s.vehicle_count();
    let mut rudder = Vec::with_capacity(k);
    let mut final_time: f64 = 0.0;
    let mut base: Vec<(Pose, Trajectory)> = Vec::new();
    // each vehicle starts with a plan that carries its share of the risk budget:
    // exposures add in the joint reading, per-vehicle risks add in the summed one
    let share = match s.risk_mode {
        RiskMode::Joint => s.risk_threshold.powf(1.0 / k as f64),
        RiskMode::PaperSum => s.risk_threshold / k as f64,
    };
    for (v, start) in s.starts.iter().enumerate() {
        let traj = match base.iter().find(|(p, _)| p == start) {
            Some((_, t)) => t.clone(),
            None => {
                let single = Scenario {
                    domain: rect.clone(),
                    starts: vec![*start],
                    risk_threshold: share,
                    risk_mode: RiskMode::PaperSum,
                    ..(**s).clone()
                };
                let t = coarse_lawnmower(&single.validate().ok()?, pts)?;
                base.push((*start, t.clone()));
                t
            }
        };
        // vehicles sharing a start fan out over a quarter turn centred on the domain
        let twins: Vec<usize> = (0..k).filter(|&w| s.starts[w] == *start).collect();
        let reference = if twins.len() > 1 && traj.states.len() > 1 {
            let rank = twins.iter().position(|&w| w == v).unwrap_or(0) as f64;
            let to_centre = centre - start.position();
            let aim = if to_centre.norm() > 1e-9 * bb.width().max(bb.height()) {
                to_centre.y.atan2(to_centre.x) + std::f64::consts::FRAC_PI_2 * (rank / (twins.len() - 1) as f64 - 0.5)
            } else {
                std::f64::consts::TAU * rank / twins.len() as f64
            };
            rotate_about_start(&traj, aim - mean_direction(&traj))
        } else {
            traj
        };
        final_time = final_time.max(reference.final_time());
        rudder.push(fit_heading(&reference, start.psi, n, &s.vehicle, d_max, dt_sim));
    }
    Some(DecisionVector { final_time, rudder })
}

/// Out-and-back sortie: turn towards `heading`, run out `length` m from the
/// start, then turn and come straight back.
fn sortie(start: Pose, heading: f64, length: f64, vp: &VehicleParams) -> Vec<Segment> {
    let rho = vp.min_turn_radius();
    let far = Point::new(start.x + length * heading.cos(), start.y + length * heading.sin());
    let mut segs = path::chain(start, &path::turn_and_go(start, far, rho), SegmentKind::Transit);
    let end = segs.last().map_or(start, |g| g.end());
    segs.extend(path::chain(end, &path::turn_and_go(end, start.position(), rho), SegmentKind::Return));
    segs
}

/// Directions scanned for the sortie fan.
const SORTIE_DIRECTIONS: usize = 16;
/// Bisection steps on the sortie length.
const SORTIE_BISECTIONS: usize = 14;
/// Sampling step used while searching, s.
const SORTIE_DT: f64 = 0.2;

/// Shortest fan of equal-length sorties, one per vehicle, that meets the risk
/// threshold. Vehicles fly at evenly spaced headings around a common axis; the
/// axis, the fan width and the sortie length are searched.
fn sortie_fan(s: &ValidatedScenario, pts: &QmcPointSet) -> Option<Vec<Trajectory>> {
    let k = s.vehicle_count();
    let vp = s.vehicle;
    // search on the first shift only, then confirm on the full set
    let coarse = RiskEvaluator::from_points(&s.sensor, pts.domain_points[..pts.points].to_vec());
    let full = RiskEvaluator::new(&s.sensor, pts);
    let bb = s.domain.bounding_box();
    let (_, reach) = SensorModel::new(&s.sensor).support();
    let hi = reach.min(4.0 * forward_run_in(&s.sensor)) + bb.width().hypot(bb.height());
    let build = |axis: f64, width: f64, length: f64, dt: f64| -> Vec<Trajectory> {
        (0..k)
            .map(|v| {
                let offset = if k == 1 { 0.0 } else { width * (v as f64 / (k - 1) as f64 - 0.5) };
                let segs = sortie(s.starts[v], axis + offset, length, &vp);
                sample_path(&segs, s.starts[v], &vp, dt)
            })
            .collect()
    };
    let risk = |ev: &RiskEvaluator, trajs: &[Trajectory]| {
        let tracks: Vec<Track> = trajs.iter().map(Track::from_trajectory).collect();
        ev.risk(&tracks, s.risk_mode).0
    };
    let widths: &[f64] = if k == 1 { &[0.0] } else { &[0.25 * PI, 0.5 * PI, PI] };
    let mut best: Option<(f64, f64, f64, f64)> = None;
    for d in 0..SORTIE_DIRECTIONS {
        let axis = TAU * d as f64 / SORTIE_DIRECTIONS as f64;
        for &width in widths {
            if risk(&coarse, &build(axis, width, hi, SORTIE_DT)) > s.risk_threshold {
                continue;
            }
            let (mut lo, mut up) = (0.0, hi);
            for _ in 0..SORTIE_BISECTIONS {
                let mid = 0.5 * (lo + up);
                if risk(&coarse, &build(axis, width, mid, SORTIE_DT)) <= s.risk_threshold {
                    up = mid;
                } else {
                    lo = mid;
                }
            }
            let time = build(axis, width, up, SORTIE_DT).iter().map(Trajectory::final_time).fold(0.0, f64::max);
            if best.is_none_or(|b| time < b.0) {
                best = Some((time, axis, width, up));
            }
        }
    }
    let (_, axis, width, mut length) = best?;
    // lengthen until the full point set agrees
    for _ in 0..20 {
        let trajs = build(axis, width, length, 0.05);
        if risk(&full, &trajs) <= s.risk_threshold {
            return Some(trajs);
        }
        length *= 1.03;
    }
    None
}

fn sorties(s: &ValidatedScenario, pts: &QmcPointSet, n: usize, d_max: f64, dt_sim: f64) -> Option<DecisionVector> {
    let trajs = sortie_fan(s, pts)?;
    let final_time = trajs.iter().map(Trajectory::final_time).fold(0.0, f64::max);
    let rudder = trajs.iter().zip(&s.starts).map(|(t, p)| fit_heading(t, p.psi, n, &s.vehicle, d_max, dt_sim)).collect();
    Some(DecisionVector { final_time, rudder })
}

fn spiral(s: &Scenario, n: usize, d_max: f64) -> DecisionVector {
    let tf = nominal_final_time(s);
    let nodes: Vec<f64> = (0..n)
        .map(|j| {
            let sigma = j as f64 / (n - 1) as f64;
            0.3 * d_max / (1.0 + 20.0 * sigma)
        })
        .collect();
    let rudder = (0..s.vehicle_count()).map(|v| if v % 2 == 0 { nodes.clone() } else { nodes.iter().map(|u| -u).collect() }).collect();
    DecisionVector { final_time: tf, rudder }
}

fn random(s: &Scenario, n: usize, d_max: f64, seed: u64) -> DecisionVector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tf = nominal_final_time(s) * rng.random_range(0.75..1.5);
    let rudder = (0..s.vehicle_count()).map(|_| (0..n).map(|_| rng.random_range(-0.5..0.5) * d_max).collect()).collect();
    DecisionVector { final_time: tf, rudder }
}

/// Builds the initial decision vector for one start. Falls back to a spiral
/// when no boustrophedon plan is available.
pub fn initial_guess(
    strategy: InitStrategy,
    s: &ValidatedScenario,
    pts: &QmcPointSet,
    n: usize,
    d_max: f64,
    dt_sim: f64,
    seed: u64,
) -> Result<(DecisionVector, InitStrategy)> {
    Ok(match strategy {
        InitStrategy::Lawnmower => match lawnmower(s, pts, n, d_max, dt_sim) {
            Some(dv) => (dv, InitStrategy::Lawnmower),
            None => (spiral(s, n, d_max), InitStrategy::Spiral),
        },
        InitStrategy::Sortie => match sorties(s, pts, n, d_max, dt_sim) {
            Some(dv) => (dv, InitStrategy::Sortie),
            None => (spiral(s, n, d_max), InitStrategy::Spiral),
        },
        InitStrategy::Spiral => (spiral(s, n, d_max), InitStrategy::Spiral),
        InitStrategy::Random => (random(s, n, d_max, seed), InitStrategy::Random),
    })
}

/// Adds vehicles to a solution: new vehicle `v` copies vehicle `v - k_prev`
/// with the rudder mirrored, so that it sweeps the other side of the start line.
pub fn extend_fleet(dv: &DecisionVector, k: usize) -> DecisionVector {
    let prev = dv.vehicles();
    let mut rudder = dv.rudder.clone();
    for v in prev..k {
        let src = &rudder[v - prev];
        rudder.push(src.iter().map(|u| -u).collect());
    }
    rudder.truncate(k);
    DecisionVector { final_time: dv.final_time, rudder }
}
