//! Direct transcription on a normalised time grid.
//!
//! Time is written as `t = sigma * T_F` with `sigma` in `[0, 1]`, so the
//! rudder nodes sit at fixed `sigma_j = j / (n - 1)` whatever the mission
//! length. The state equations become `dX/dsigma = T_F f(X, u(sigma))` and
//! are integrated with `M` classical Runge–Kutta steps; the same pass can
//! propagate forward sensitivities of the states with respect to `T_F` and
//! every rudder node.

use serde::{Deserialize, Serialize};

use crate::dynamics::{ControlSchedule, Trajectory, VehicleState};
use crate::error::{Error, Result};
use crate::scenario::{Pose, ValidatedScenario, VehicleParams};

use super::config::TranscriptionConfig;

/// Mission time and the stacked rudder nodes of every vehicle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionVector {
    /// Free final time, s.
    pub final_time: f64,
    /// `rudder[v][j]`: node `j` of vehicle `v`, rad.
    pub rudder: Vec<Vec<f64>>,
}

impl DecisionVector {
    pub fn new(final_time: f64, rudder: Vec<Vec<f64>>) -> Result<Self> {
        if !(final_time.is_finite() && final_time > 0.0) {
            return Err(Error::InvalidArgument(format!("final time must be positive, got {final_time}")));
        }
        let n = rudder.first().map_or(0, Vec::len);
        if rudder.is_empty() || n < 2 || rudder.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidArgument("every vehicle needs the same number (>= 2) of rudder nodes".into()));
        }
        if rudder.iter().flatten().any(|d| !d.is_finite()) {
            return Err(Error::InvalidArgument("rudder nodes must be finite".into()));
        }
        Ok(Self { final_time, rudder })
    }

    pub fn vehicles(&self) -> usize {
        self.rudder.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.rudder[0].len()
    }

    /// Per-vehicle schedules in physical time.
    pub fn schedules(&self, rudder_limit: f64) -> Result<Vec<ControlSchedule>> {
        self.rudder.iter().map(|r| ControlSchedule::uniform(self.final_time, r.clone(), rudder_limit)).collect()
    }

    /// Checks bounds.
    pub fn check_bounds(&self, t_min: f64, t_max: f64, d_max: f64) -> Result<()> {
        if self.final_time < t_min - 1e-12 || self.final_time > t_max + 1e-12 {
            return Err(Error::InvalidArgument(format!(
                "final time {} s outside [{t_min}, {t_max}]",
                self.final_time
            )));
        }
        if self.rudder.iter().flatten().any(|d| d.abs() > d_max + 1e-12) {
            return Err(Error::InvalidArgument(format!("rudder node beyond limit {d_max} rad")));
        }
        Ok(())
    }
}

/// Number of integration steps for mission time `tf`, target step `dt_sim`
/// and `n_nodes` rudder nodes.
///
/// The count is `ceil(tf / dt_sim)` rounded up to a multiple of the node
/// intervals, so every kink of the piecewise-linear rudder falls on a step
/// boundary and RK4 keeps its fourth-order accuracy.
pub fn mesh_steps(tf: f64, dt_sim: f64, n_nodes: usize) -> usize {
    let intervals = n_nodes.saturating_sub(1).max(1);
    let m = ((tf / dt_sim).ceil() as usize).max(1);
    m.div_ceil(intervals) * intervals
}

/// Node index and weight of the hat-function interpolation at `sigma`.
#[inline]
pub(crate) fn hat(sigma: f64, n: usize) -> (usize, f64) {
    let pos = (sigma.clamp(0.0, 1.0)) * (n - 1) as f64;
    let j = (pos.floor() as usize).min(n - 2);
    (j, pos - j as f64)
}

#[inline]
fn rudder_at(nodes: &[f64], sigma: f64) -> (usize, f64, f64) {
    let (j, w) = hat(sigma, nodes.len());
    (j, w, nodes[j] + w * (nodes[j + 1] - nodes[j]))
}

/// State sensitivities with respect to `(T_F, u_0, ..., u_{n-1})` at every sample.
#[derive(Debug, Clone, Default)]
pub(crate) struct Sensitivity {
    /// Parameters per vehicle, `n + 1`.
    pub params: usize,
    /// Row `i` holds `d x_i / d p`.
    pub dx: Vec<f64>,
    pub dy: Vec<f64>,
    pub dpsi: Vec<f64>,
}

impl Sensitivity {
    pub fn row(v: &[f64], i: usize, params: usize) -> &[f64] {
        &v[i * params..(i + 1) * params]
    }
}

/// Tangent of one stage derivative: `dF/dp` given state tangent rows.
struct Tangent {
    x: Vec<f64>,
    y: Vec<f64>,
    psi: Vec<f64>,
    r: Vec<f64>,
}

impl Tangent {
    fn zeros(p: usize) -> Self {
        Self { x: vec![0.0; p], y: vec![0.0; p], psi: vec![0.0; p], r: vec![0.0; p] }
    }

    fn set_axpy(&mut self, base: &Tangent, h: f64, k: &Tangent) {
        for (dst, (a, b)) in [
            (&mut self.x, (&base.x, &k.x)),
            (&mut self.y, (&base.y, &k.y)),
            (&mut self.psi, (&base.psi, &k.psi)),
            (&mut self.r, (&base.r, &k.r)),
        ] {
            for ((d, a), b) in dst.iter_mut().zip(a).zip(b) {
                *d = a + h * b;
            }
        }
    }
}

/// Derivative of the scaled right-hand side and, optionally, its tangent.
#[allow(clippy::too_many_arguments)]
fn stage(
    s: &VehicleState,
    nodes: &[f64],
    sigma: f64,
    tf: f64,
    vp: &VehicleParams,
    tan_in: Option<&Tangent>,
    tan_out: Option<&mut Tangent>,
) -> VehicleState {
    let (j, w, u) = rudder_at(nodes, sigma);
    let (sin, cos) = s.psi.sin_cos();
    let f = VehicleState {
        x: vp.speed * cos,
        y: vp.speed * sin,
        psi: s.r,
        r: (vp.gain * u - s.r) / vp.time_constant,
    };
    if let (Some(ti), Some(to)) = (tan_in, tan_out) {
        let ax = -tf * vp.speed * sin;
        let ay = tf * vp.speed * cos;
        let ar = -tf / vp.time_constant;
        for q in 0..ti.x.len() {
            to.x[q] = ax * ti.psi[q];
            to.y[q] = ay * ti.psi[q];
            to.psi[q] = tf * ti.r[q];
            to.r[q] = ar * ti.r[q];
        }
        to.x[0] += f.x;
        to.y[0] += f.y;
        to.psi[0] += f.psi;
        to.r[0] += f.r;
        let b = tf * vp.gain / vp.time_constant;
        to.r[1 + j] += b * (1.0 - w);
        to.r[2 + j] += b * w;
    }
    VehicleState { x: tf * f.x, y: tf * f.y, psi: tf * f.psi, r: tf * f.r }
}

fn axpy(s: &VehicleState, h: f64, k: &VehicleState) -> VehicleState {
    VehicleState::new(s.x + h * k.x, s.y + h * k.y, s.psi + h * k.psi, s.r + h * k.r)
}

/// Integrates one vehicle; fills `sens` when given.
pub(crate) fn integrate_vehicle(
    nodes: &[f64],
    tf: f64,
    start: Pose,
    vp: &VehicleParams,
    steps: usize,
    mut sens: Option<&mut Sensitivity>,
) -> Result<Trajectory> {
    let ds = 1.0 / steps as f64;
    let mut s = start.state();
    let mut states = Vec::with_capacity(steps + 1);
    let mut rudder = Vec::with_capacity(steps + 1);
    states.push(s);
    rudder.push(rudder_at(nodes, 0.0).2);
    let p = nodes.len() + 1;
    let mut tangents = sens.as_ref().map(|_| {
        (Tangent::zeros(p), Tangent::zeros(p), Tangent::zeros(p), Tangent::zeros(p), Tangent::zeros(p), Tangent::zeros(p))
    });
    if let Some(out) = sens.as_deref_mut() {
        out.params = p;
        out.dx = vec![0.0; (steps + 1) * p];
        out.dy = vec![0.0; (steps + 1) * p];
        out.dpsi = vec![0.0; (steps + 1) * p];
    }
    for i in 0..steps {
        let sigma = i as f64 * ds;
        let mid = sigma + 0.5 * ds;
        let end = (i + 1) as f64 * ds;
        let next = match tangents.as_mut() {
            None => {
                let k1 = stage(&s, nodes, sigma, tf, vp, None, None);
                let k2 = stage(&axpy(&s, 0.5 * ds, &k1), nodes, mid, tf, vp, None, None);
                let k3 = stage(&axpy(&s, 0.5 * ds, &k2), nodes, mid, tf, vp, None, None);
                let k4 = stage(&axpy(&s, ds, &k3), nodes, end, tf, vp, None, None);
                combine(&s, ds, &k1, &k2, &k3, &k4)
            }
            Some((cur, t1, t2, t3, t4, tmp)) => {
                let k1 = stage(&s, nodes, sigma, tf, vp, Some(cur), Some(t1));
                tmp.set_axpy(cur, 0.5 * ds, t1);
                let k2 = stage(&axpy(&s, 0.5 * ds, &k1), nodes, mid, tf, vp, Some(tmp), Some(t2));
                tmp.set_axpy(cur, 0.5 * ds, t2);
                let k3 = stage(&axpy(&s, 0.5 * ds, &k2), nodes, mid, tf, vp, Some(tmp), Some(t3));
                tmp.set_axpy(cur, ds, t3);
                let k4 = stage(&axpy(&s, ds, &k3), nodes, end, tf, vp, Some(tmp), Some(t4));
                let h = ds / 6.0;
                for (c, (a, (b, (d, e)))) in [
                    (&mut cur.x, (&t1.x, (&t2.x, (&t3.x, &t4.x)))),
                    (&mut cur.y, (&t1.y, (&t2.y, (&t3.y, &t4.y)))),
                    (&mut cur.psi, (&t1.psi, (&t2.psi, (&t3.psi, &t4.psi)))),
                    (&mut cur.r, (&t1.r, (&t2.r, (&t3.r, &t4.r)))),
                ] {
                    for q in 0..p {
                        c[q] += h * (a[q] + 2.0 * b[q] + 2.0 * d[q] + e[q]);
                    }
                }
                if let Some(out) = sens.as_deref_mut() {
                    let row = (i + 1) * p;
                    out.dx[row..row + p].copy_from_slice(&cur.x);
                    out.dy[row..row + p].copy_from_slice(&cur.y);
                    out.dpsi[row..row + p].copy_from_slice(&cur.psi);
                }
                combine(&s, ds, &k1, &k2, &k3, &k4)
            }
        };
        if !next.is_finite() {
            return Err(Error::NonFiniteState);
        }
        s = next;
        states.push(s);
        rudder.push(rudder_at(nodes, end).2);
    }
    Ok(Trajectory { dt: tf / steps as f64, states, rudder })
}

fn combine(
    s: &VehicleState,
    ds: f64,
    k1: &VehicleState,
    k2: &VehicleState,
    k3: &VehicleState,
    k4: &VehicleState,
) -> VehicleState {
    let h = ds / 6.0;
    VehicleState::new(
        s.x + h * (k1.x + 2.0 * k2.x + 2.0 * k3.x + k4.x),
        s.y + h * (k1.y + 2.0 * k2.y + 2.0 * k3.y + k4.y),
        s.psi + h * (k1.psi + 2.0 * k2.psi + 2.0 * k3.psi + k4.psi),
        s.r + h * (k1.r + 2.0 * k2.r + 2.0 * k3.r + k4.r),
    )
}

/// Simulates every vehicle with a fixed number of steps.
pub fn transcribe_steps(dv: &DecisionVector, starts: &[Pose], vp: &VehicleParams, steps: usize) -> Result<Vec<Trajectory>> {
    if starts.len() != dv.vehicles() {
        return Err(Error::InvalidArgument(format!(
            "{} start poses for {} vehicles",
            starts.len(),
            dv.vehicles()
        )));
    }
    dv.rudder
        .iter()
        .zip(starts)
        .map(|(nodes, &start)| integrate_vehicle(nodes, dv.final_time, start, vp, steps, None))
        .collect()
}

/// Simulates every vehicle of the scenario over `[0, T_F]` with the
/// configured target step.
pub fn transcribe(dv: &DecisionVector, s: &ValidatedScenario, cfg: &TranscriptionConfig) -> Result<Vec<Trajectory>> {
    transcribe_steps(dv, &s.starts, &s.vehicle, mesh_steps(dv.final_time, cfg.dt_sim, dv.n_nodes()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::simulate;
    use approx::assert_abs_diff_eq;

    #[test]
    fn zero_rudder_is_straight() {
        let vp = VehicleParams::default();
        let dv = DecisionVector::new(40.0, vec![vec![0.0; 6]]).unwrap();
        let t = transcribe_steps(&dv, &[Pose::new(1.0, 2.0, 0.5)], &vp, 400).unwrap();
        let end = t[0].last();
        assert_abs_diff_eq!(end.x, 1.0 + 100.0 * 0.5f64.cos(), epsilon = 1e-9);
        assert_abs_diff_eq!(end.y, 2.0 + 100.0 * 0.5f64.sin(), epsilon = 1e-9);
        assert_abs_diff_eq!(t[0].final_time(), 40.0, epsilon = 1e-12);
    }

    #[test]
    fn matches_unscaled_simulation() {
        let vp = VehicleParams::default();
        let nodes = vec![0.1, -0.3, 0.5, 0.0, -0.2, 0.6];
        let tf = 37.0;
        let dv = DecisionVector::new(tf, vec![nodes.clone()]).unwrap();
        let steps = 740;
        let scaled = &transcribe_steps(&dv, &[Pose::default()], &vp, steps).unwrap()[0];
        let sched = ControlSchedule::uniform(tf, nodes, vp.rudder_limit).unwrap();
        let direct = simulate(VehicleState::default(), &sched, tf / steps as f64, &vp).unwrap();
        for (a, b) in scaled.states.iter().zip(&direct.states) {
            assert_abs_diff_eq!(a.x, b.x, epsilon = 1e-9);
            assert_abs_diff_eq!(a.y, b.y, epsilon = 1e-9);
            assert_abs_diff_eq!(a.psi, b.psi, epsilon = 1e-11);
        }
    }

    #[test]
    fn identical_schedules_identical_paths() {
        let vp = VehicleParams::default();
        let nodes = vec![0.2, -0.1, 0.3, 0.3];
        let dv = DecisionVector::new(20.0, vec![nodes.clone(), nodes]).unwrap();
        let t = transcribe_steps(&dv, &[Pose::default(); 2], &vp, 200).unwrap();
        assert_eq!(t[0], t[1]);
    }

    #[test]
    fn sensitivities_match_finite_differences() {
        let vp = VehicleParams::default();
        let nodes = vec![0.1, -0.3, 0.5, 0.0, -0.2];
        let tf = 23.0;
        let steps = 230;
        let start = Pose::new(3.0, -1.0, 0.4);
        let mut sens = Sensitivity::default();
        let base = integrate_vehicle(&nodes, tf, start, &vp, steps, Some(&mut sens)).unwrap();
        let plain = integrate_vehicle(&nodes, tf, start, &vp, steps, None).unwrap();
        assert_eq!(base, plain);
        let h = 1e-6;
        let p = sens.params;
        for q in 0..p {
            let (mut np, mut nm) = (nodes.clone(), nodes.clone());
            let (mut tp, mut tm) = (tf, tf);
            if q == 0 {
                tp += h;
                tm -= h;
            } else {
                np[q - 1] += h;
                nm[q - 1] -= h;
            }
            let a = integrate_vehicle(&np, tp, start, &vp, steps, None).unwrap();
            let b = integrate_vehicle(&nm, tm, start, &vp, steps, None).unwrap();
            for i in [1, 57, 120, steps] {
                let fx = (a.states[i].x - b.states[i].x) / (2.0 * h);
                let fy = (a.states[i].y - b.states[i].y) / (2.0 * h);
                let fp = (a.states[i].psi - b.states[i].psi) / (2.0 * h);
                assert_abs_diff_eq!(Sensitivity::row(&sens.dx, i, p)[q], fx, epsilon = 1e-6 * (1.0 + fx.abs()));
                assert_abs_diff_eq!(Sensitivity::row(&sens.dy, i, p)[q], fy, epsilon = 1e-6 * (1.0 + fy.abs()));
                assert_abs_diff_eq!(Sensitivity::row(&sens.dpsi, i, p)[q], fp, epsilon = 1e-6 * (1.0 + fp.abs()));
            }
        }
    }

    #[test]
    fn mesh_is_aligned_with_rudder_nodes() {
        assert_eq!(mesh_steps(100.0, 0.1, 60), 1003);
        assert_eq!(mesh_steps(0.1, 0.1, 60), 59);
        assert_eq!(mesh_steps(2.0, 0.1, 5), 20);
        for (tf, n) in [(37.3, 12), (101.7, 60), (5.0, 4)] {
            let m = mesh_steps(tf, 0.1, n);
            assert_eq!(m % (n - 1), 0);
            assert!(m as f64 >= tf / 0.1);
        }
    }

    #[test]
    fn rejects_bad_vectors() {
        assert!(DecisionVector::new(0.0, vec![vec![0.0; 4]]).is_err());
        assert!(DecisionVector::new(5.0, vec![vec![0.0; 4], vec![0.0; 3]]).is_err());
        let dv = DecisionVector::new(5.0, vec![vec![0.0, 0.7, 0.0, 0.0]]).unwrap();
        assert!(dv.check_bounds(1.0, 10.0, 0.6).is_err());
        assert!(dv.check_bounds(1.0, 10.0, 0.7).is_ok());
    }
}
