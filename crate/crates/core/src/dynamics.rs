//! Constant-speed kinematics with first-order Nomoto steering.
//!
//! ```text
//! x' = V cos(psi)    y' = V sin(psi)    psi' = r    r' = (K d - r) / T
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenario::VehicleParams;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VehicleState {
    pub x: f64,
    pub y: f64,
    /// Heading, rad, measured counter-clockwise from +x. Unwrapped while integrating.
    pub psi: f64,
    /// Turn rate, rad/s.
    pub r: f64,
}

impl VehicleState {
    pub fn new(x: f64, y: f64, psi: f64, r: f64) -> Self {
        Self { x, y, psi, r }
    }

    fn axpy(self, h: f64, k: VehicleState) -> VehicleState {
        VehicleState {
            x: self.x + h * k.x,
            y: self.y + h * k.y,
            psi: self.psi + h * k.psi,
            r: self.r + h * k.r,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.psi.is_finite() && self.r.is_finite()
    }

    /// Same state with the heading wrapped to (-pi, pi].
    pub fn wrapped(self) -> VehicleState {
        VehicleState { psi: wrap_angle(self.psi), ..self }
    }
}

/// Wraps an angle to (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    use std::f64::consts::{PI, TAU};
    let w = a - TAU * (a / TAU).round();
    if w <= -PI {
        w + TAU
    } else if w > PI {
        w - TAU
    } else {
        w
    }
}

/// Time derivative of the state for rudder angle `rudder` (rad).
pub fn state_derivative(s: &VehicleState, rudder: f64, p: &VehicleParams) -> VehicleState {
    let (sin, cos) = s.psi.sin_cos();
    VehicleState {
        x: p.speed * cos,
        y: p.speed * sin,
        psi: s.r,
        r: (p.gain * rudder - s.r) / p.time_constant,
    }
}

/// One classical fourth-order Runge–Kutta step from `t` to `t + dt`.
pub fn rk4_step(
    s: &VehicleState,
    rudder: impl Fn(f64) -> f64,
    t: f64,
    dt: f64,
    p: &VehicleParams,
) -> VehicleState {
    let d_mid = rudder(t + 0.5 * dt);
    let k1 = state_derivative(s, rudder(t), p);
    let k2 = state_derivative(&s.axpy(0.5 * dt, k1), d_mid, p);
    let k3 = state_derivative(&s.axpy(0.5 * dt, k2), d_mid, p);
    let k4 = state_derivative(&s.axpy(dt, k3), rudder(t + dt), p);
    VehicleState {
        x: s.x + dt / 6.0 * (k1.x + 2.0 * k2.x + 2.0 * k3.x + k4.x),
        y: s.y + dt / 6.0 * (k1.y + 2.0 * k2.y + 2.0 * k3.y + k4.y),
        psi: s.psi + dt / 6.0 * (k1.psi + 2.0 * k2.psi + 2.0 * k3.psi + k4.psi),
        r: s.r + dt / 6.0 * (k1.r + 2.0 * k2.r + 2.0 * k3.r + k4.r),
    }
}

/// Piecewise-linear rudder schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlSchedule {
    node_times: Vec<f64>,
    rudder: Vec<f64>,
}

impl ControlSchedule {
    pub fn new(node_times: Vec<f64>, rudder: Vec<f64>, rudder_limit: f64) -> Result<Self> {
        if node_times.len() != rudder.len() {
            return Err(Error::InvalidSchedule(format!(
                "{} node times but {} rudder values",
                node_times.len(),
                rudder.len()
            )));
        }
        if node_times.len() < 2 {
            return Err(Error::InvalidSchedule("at least two nodes are required".into()));
        }
        if node_times[0] != 0.0 {
            return Err(Error::InvalidSchedule("first node must be at t = 0".into()));
        }
        if node_times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidSchedule("node times must be strictly increasing".into()));
        }
        if let Some(d) = rudder.iter().find(|d| !(d.abs() <= rudder_limit + 1e-12)) {
            return Err(Error::InvalidSchedule(format!("rudder {d} rad exceeds limit {rudder_limit} rad")));
        }
        Ok(Self { node_times, rudder })
    }

    /// Nodes evenly spaced over `[0, final_time]`.
    pub fn uniform(final_time: f64, rudder: Vec<f64>, rudder_limit: f64) -> Result<Self> {
        let n = rudder.len();
        if n < 2 {
            return Err(Error::InvalidSchedule("at least two nodes are required".into()));
        }
        let times = (0..n).map(|j| final_time * j as f64 / (n - 1) as f64).collect();
        Self::new(times, rudder, rudder_limit)
    }

    pub fn constant(final_time: f64, rudder: f64, rudder_limit: f64) -> Result<Self> {
        Self::uniform(final_time, vec![rudder, rudder], rudder_limit)
    }

    pub fn node_times(&self) -> &[f64] {
        &self.node_times
    }

    pub fn rudder(&self) -> &[f64] {
        &self.rudder
    }

    pub fn final_time(&self) -> f64 {
        *self.node_times.last().expect("schedule has nodes")
    }

    /// Linear interpolation, held constant outside the node range.
    pub fn value_at(&self, t: f64) -> f64 {
        let nt = &self.node_times;
        if t <= nt[0] {
            return self.rudder[0];
        }
        if t >= nt[nt.len() - 1] {
            return self.rudder[nt.len() - 1];
        }
        let j = nt.partition_point(|&x| x <= t) - 1;
        let w = (t - nt[j]) / (nt[j + 1] - nt[j]);
        self.rudder[j] + w * (self.rudder[j + 1] - self.rudder[j])
    }
}

/// Uniformly sampled vehicle history; `states[i]` is at time `i * dt`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub dt: f64,
    pub states: Vec<VehicleState>,
    /// Rudder angle applied at each sample, rad.
    pub rudder: Vec<f64>,
}

impl Trajectory {
    /// A zero-duration trajectory holding a single state.
    pub fn stationary(state: VehicleState) -> Self {
        Self { dt: 0.0, states: vec![state], rudder: vec![0.0] }
    }

    pub fn final_time(&self) -> f64 {
        self.dt * (self.states.len().saturating_sub(1)) as f64
    }

    pub fn last(&self) -> &VehicleState {
        self.states.last().expect("trajectory is never empty")
    }

    /// Sum of straight-line distances between consecutive samples.
    pub fn sampled_length(&self) -> f64 {
        self.states
            .windows(2)
            .map(|w| (w[1].x - w[0].x).hypot(w[1].y - w[0].y))
            .sum()
    }
}

/// Integrates `schedule` from `start` with fixed step `dt`.
pub fn simulate(start: VehicleState, schedule: &ControlSchedule, dt: f64, p: &VehicleParams) -> Result<Trajectory> {
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("time step must be positive, got {dt}")));
    }
    let tf = schedule.final_time();
    let ratio = tf / dt;
    let steps = (ratio + 1e-9).floor();
    if (ratio - steps).abs() > 1e-6 * ratio.max(1.0) {
        return Err(Error::InvalidArgument(format!("time step {dt} s does not divide final time {tf} s")));
    }
    let steps = steps as usize;
    let mut states = Vec::with_capacity(steps + 1);
    let mut rudder = Vec::with_capacity(steps + 1);
    let mut s = start;
    states.push(s);
    rudder.push(schedule.value_at(0.0));
    for i in 0..steps {
        let t = i as f64 * dt;
        s = rk4_step(&s, |t| schedule.value_at(t), t, dt, p);
        if !s.is_finite() {
            return Err(Error::NonFiniteState);
        }
        states.push(s);
        rudder.push(schedule.value_at((i + 1) as f64 * dt));
    }
    Ok(Trajectory { dt, states, rudder })
}

/// Closed-form turn rate under constant rudder `d0` from `r(0) = 0`.
pub fn analytic_turn_rate(t: f64, d0: f64, p: &VehicleParams) -> f64 {
    p.gain * d0 * -(-t / p.time_constant).exp_m1()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn params() -> VehicleParams {
        VehicleParams::default()
    }

    #[test]
    fn derivative_examples() {
        let p = params();
        let d = state_derivative(&VehicleState::default(), 0.0, &p);
        assert_eq!(d, VehicleState::new(p.speed, 0.0, 0.0, 0.0));
        let s = VehicleState::new(0.0, 0.0, 0.0, p.gain * 0.1);
        assert_eq!(state_derivative(&s, 0.1, &p).r, 0.0);
        let s = VehicleState::new(0.0, 0.0, std::f64::consts::FRAC_PI_2, 0.0);
        let d = state_derivative(&s, 0.0, &p);
        assert_abs_diff_eq!(d.x, 0.0, epsilon = 1e-15);
        assert_eq!(d.y, p.speed);
    }

    #[test]
    fn straight_step_is_exact() {
        let p = params();
        let s = VehicleState::new(1.0, 2.0, 0.7, 0.0);
        let n = rk4_step(&s, |_| 0.0, 0.0, 0.37, &p);
        assert_abs_diff_eq!(n.x, 1.0 + p.speed * 0.37 * 0.7f64.cos(), epsilon = 1e-14);
        assert_abs_diff_eq!(n.y, 2.0 + p.speed * 0.37 * 0.7f64.sin(), epsilon = 1e-14);
        assert_eq!(n.psi, 0.7);
        assert_eq!(n.r, 0.0);
    }

    #[test]
    fn turn_rate_tracks_analytic_solution() {
        let p = params();
        let d0 = 0.2;
        let dt = p.time_constant / 100.0;
        let sched = ControlSchedule::constant(5.0, d0, p.rudder_limit).unwrap();
        let traj = simulate(VehicleState::default(), &sched, dt, &p).unwrap();
        for (i, s) in traj.states.iter().enumerate() {
            assert_abs_diff_eq!(s.r, analytic_turn_rate(i as f64 * dt, d0, &p), epsilon = 1e-8);
        }
    }

    #[test]
    fn rk4_error_shrinks_fourth_order() {
        let p = params();
        let d0 = 0.3;
        let err = |dt: f64| {
            let sched = ControlSchedule::constant(4.0, d0, p.rudder_limit).unwrap();
            let traj = simulate(VehicleState::default(), &sched, dt, &p).unwrap();
            traj.states
                .iter()
                .enumerate()
                .map(|(i, s)| (s.r - analytic_turn_rate(i as f64 * dt, d0, &p)).abs())
                .fold(0.0, f64::max)
        };
        let ratio = err(0.1) / err(0.05);
        assert!(ratio > 13.0 && ratio < 19.0, "{ratio}");
    }

    #[test]
    fn analytic_turn_rate_examples() {
        let p = params();
        assert_eq!(analytic_turn_rate(0.0, 0.2, &p), 0.0);
        assert_abs_diff_eq!(analytic_turn_rate(1e3, 0.2, &p), p.gain * 0.2, epsilon = 1e-12);
        assert_abs_diff_eq!(
            analytic_turn_rate(p.time_constant, 0.2, &p),
            0.632_120_558_828_557_7 * p.gain * 0.2,
            epsilon = 1e-12
        );
    }

    #[test]
    fn straight_line_endpoint() {
        let p = params();
        let sched = ControlSchedule::constant(10.0, 0.0, p.rudder_limit).unwrap();
        let traj = simulate(VehicleState::default(), &sched, 0.05, &p).unwrap();
        assert_eq!(traj.states.len(), 201);
        assert_abs_diff_eq!(traj.last().x, 25.0, epsilon = 1e-10);
        assert_abs_diff_eq!(traj.last().y, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn steady_turn_radius() {
        let p = params();
        let d0 = 0.05;
        let sched = ControlSchedule::constant(40.0, d0, p.rudder_limit).unwrap();
        let traj = simulate(VehicleState::default(), &sched, 0.01, &p).unwrap();
        // curvature from three late samples
        let n = traj.states.len();
        let a = traj.states[n - 201];
        let b = traj.states[n - 101];
        let c = traj.states[n - 1];
        let ab = (b.x - a.x).hypot(b.y - a.y);
        let bc = (c.x - b.x).hypot(c.y - b.y);
        let ca = (a.x - c.x).hypot(a.y - c.y);
        let area2 = ((b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)).abs();
        let radius = ab * bc * ca / (2.0 * area2);
        assert_abs_diff_eq!(radius, p.speed / (p.gain * d0), epsilon = 1e-6);
    }

    #[test]
    fn split_simulation_matches_whole() {
        let p = params();
        let dt = 0.05;
        let full = ControlSchedule::new(vec![0.0, 5.0, 10.0], vec![0.1, -0.2, 0.05], p.rudder_limit).unwrap();
        let whole = simulate(VehicleState::default(), &full, dt, &p).unwrap();
        let first = ControlSchedule::new(vec![0.0, 5.0], vec![0.1, -0.2], p.rudder_limit).unwrap();
        let second = ControlSchedule::new(vec![0.0, 5.0], vec![-0.2, 0.05], p.rudder_limit).unwrap();
        let a = simulate(VehicleState::default(), &first, dt, &p).unwrap();
        let b = simulate(*a.last(), &second, dt, &p).unwrap();
        let end = b.last();
        let w = whole.last();
        assert_abs_diff_eq!(end.x, w.x, epsilon = 1e-9);
        assert_abs_diff_eq!(end.y, w.y, epsilon = 1e-9);
        assert_abs_diff_eq!(end.psi, w.psi, epsilon = 1e-9);
        assert_abs_diff_eq!(end.r, w.r, epsilon = 1e-9);
    }

    #[test]
    fn heading_is_integral_of_turn_rate() {
        let p = params();
        let sched = ControlSchedule::uniform(30.0, vec![0.1, -0.3, 0.2, 0.0, 0.25], p.rudder_limit).unwrap();
        let dt = 0.01;
        let traj = simulate(VehicleState::default(), &sched, dt, &p).unwrap();
        let mut integral = 0.0;
        for w in traj.states.windows(2) {
            integral += 0.5 * dt * (w[0].r + w[1].r);
        }
        assert_abs_diff_eq!(traj.last().psi, integral, epsilon = 1e-4);
    }

    #[test]
    fn schedule_validation() {
        let lim = 0.6;
        assert!(ControlSchedule::new(vec![0.0], vec![0.0], lim).is_err());
        assert!(ControlSchedule::new(vec![0.0, 1.0], vec![0.0], lim).is_err());
        assert!(ControlSchedule::new(vec![0.5, 1.0], vec![0.0, 0.0], lim).is_err());
        assert!(ControlSchedule::new(vec![0.0, 1.0, 1.0], vec![0.0, 0.0, 0.0], lim).is_err());
        assert!(ControlSchedule::new(vec![0.0, 1.0], vec![0.0, 0.7], lim).is_err());
        let s = ControlSchedule::new(vec![0.0, 1.0, 3.0], vec![0.0, 0.4, -0.2], lim).unwrap();
        assert_abs_diff_eq!(s.value_at(0.5), 0.2, epsilon = 1e-15);
        assert_abs_diff_eq!(s.value_at(2.0), 0.1, epsilon = 1e-15);
        assert_eq!(s.value_at(5.0), -0.2);
    }

    #[test]
    fn simulate_rejects_bad_steps() {
        let p = params();
        let s = ControlSchedule::constant(10.0, 0.0, p.rudder_limit).unwrap();
        assert!(simulate(VehicleState::default(), &s, 0.0, &p).is_err());
        assert!(simulate(VehicleState::default(), &s, 0.3, &p).is_err());
    }

    #[test]
    fn wrap_angle_range() {
        use std::f64::consts::PI;
        assert_abs_diff_eq!(wrap_angle(3.0 * PI), PI, epsilon = 1e-12);
        assert_abs_diff_eq!(wrap_angle(-PI), PI, epsilon = 1e-12);
        assert_abs_diff_eq!(wrap_angle(7.0), 7.0 - 2.0 * PI, epsilon = 1e-12);
    }
}
