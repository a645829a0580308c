//! Augmented-Lagrangian merit function on scaled decision variables.
//!
//! Variables are `z = (T_F / T_ref, u / d_max)`. The merit is
//!
//! ```text
//! z_0 + rho/2 [max(0, g + mu/rho)^2 - (mu/rho)^2]
//!     + sum_c (lambda_c e_c + rho/2 e_c^2) + w_c C / T_ref
//! ```
//!
//! with `g = (risk - beta) / beta` the scaled risk constraint, `e_c` the
//! end-minus-start coordinates divided by a length scale, and `C` the
//! containment integral.

use crate::dynamics::Trajectory;
use crate::error::Result;
use crate::geometry::{Domain, Point};
use crate::risk::{RiskEvaluator, Track};
use crate::scenario::{Pose, RiskMode, VehicleParams};

use super::config::GradientMethod;
use super::transcription::{integrate_vehicle, DecisionVector, Sensitivity};

/// Multipliers and penalty parameter of the augmented Lagrangian.
#[derive(Debug, Clone, PartialEq)]
pub struct AlState {
    pub mu: f64,
    /// Two entries (x, y) per vehicle.
    pub lambda: Vec<f64>,
    pub rho: f64,
}

/// Everything the merit depends on apart from the decision vector.
#[derive(Debug, Clone)]
pub struct Problem<'a> {
    pub evaluator: &'a RiskEvaluator,
    pub domain: &'a Domain,
    pub vehicle: VehicleParams,
    pub starts: &'a [Pose],
    pub mode: RiskMode,
    pub beta: f64,
    pub d_max: f64,
    pub t_ref: f64,
    /// Length scale of the terminal constraint, m.
    pub terminal_scale: f64,
    pub containment_weight: f64,
    pub steps: usize,
    pub n_nodes: usize,
    pub gradient: GradientMethod,
}

/// Constraint values at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub final_time: f64,
    pub risk: f64,
    /// End position minus start position per vehicle.
    pub terminal: Vec<Point>,
    pub containment: f64,
    pub merit: f64,
    pub trajectories: Vec<Trajectory>,
}

impl Evaluation {
    /// Scaled risk constraint `(risk - beta) / beta`.
    pub fn risk_residual(&self, beta: f64) -> f64 {
        (self.risk - beta) / beta
    }

    pub fn terminal_distances(&self) -> Vec<f64> {
        self.terminal.iter().map(|p| p.norm()).collect()
    }
}

impl<'a> Problem<'a> {
    pub fn vehicles(&self) -> usize {
        self.starts.len()
    }

    pub fn dim(&self) -> usize {
        1 + self.vehicles() * self.n_nodes
    }

    pub fn scale(&self, dv: &DecisionVector) -> Vec<f64> {
        let mut z = Vec::with_capacity(self.dim());
        z.push(dv.final_time / self.t_ref);
        z.extend(dv.rudder.iter().flatten().map(|u| u / self.d_max));
        z
    }

    pub fn unscale(&self, z: &[f64]) -> DecisionVector {
        let rudder = z[1..].chunks(self.n_nodes).map(|c| c.iter().map(|v| v * self.d_max).collect()).collect();
        DecisionVector { final_time: z[0] * self.t_ref, rudder }
    }

    fn simulate(&self, z: &[f64], sens: Option<&mut Vec<Sensitivity>>) -> Result<Vec<Trajectory>> {
        let tf = z[0] * self.t_ref;
        let mut out = Vec::with_capacity(self.vehicles());
        let mut sens = sens;
        if let Some(s) = sens.as_deref_mut() {
            s.clear();
        }
        for (v, start) in self.starts.iter().enumerate() {
            let nodes: Vec<f64> = z[1 + v * self.n_nodes..1 + (v + 1) * self.n_nodes].iter().map(|x| x * self.d_max).collect();
            match sens.as_deref_mut() {
                Some(list) => {
                    let mut s = Sensitivity::default();
                    out.push(integrate_vehicle(&nodes, tf, *start, &self.vehicle, self.steps, Some(&mut s))?);
                    list.push(s);
                }
                None => out.push(integrate_vehicle(&nodes, tf, *start, &self.vehicle, self.steps, None)?),
            }
        }
        Ok(out)
    }

    fn containment(&self, trajs: &[Trajectory]) -> f64 {
        if self.containment_weight == 0.0 {
            return 0.0;
        }
        let mut total = 0.0;
        for t in trajs {
            let n = t.states.len();
            for (i, s) in t.states.iter().enumerate() {
                let p = Point::new(s.x, s.y);
                if let Some(q) = self.domain.nearest_if_outside(p) {
                    let w = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
                    total += w * t.dt * (p - q).dot(p - q);
                }
            }
        }
        total
    }

    fn assemble(&self, z: &[f64], al: &AlState, trajs: Vec<Trajectory>, risk: f64) -> Evaluation {
        let terminal: Vec<Point> = trajs
            .iter()
            .zip(self.starts)
            .map(|(t, s)| Point::new(t.last().x - s.x, t.last().y - s.y))
            .collect();
        let containment = self.containment(&trajs);
        let g = (risk - self.beta) / self.beta;
        let shifted = (g + al.mu / al.rho).max(0.0);
        let mut merit = z[0] + 0.5 * al.rho * (shifted * shifted - (al.mu / al.rho).powi(2));
        for (v, e) in terminal.iter().enumerate() {
            for (c, val) in [e.x, e.y].into_iter().enumerate() {
                let ec = val / self.terminal_scale;
                merit += al.lambda[2 * v + c] * ec + 0.5 * al.rho * ec * ec;
            }
        }
        merit += self.containment_weight * containment / self.t_ref;
        Evaluation { final_time: z[0] * self.t_ref, risk, terminal, containment, merit, trajectories: trajs }
    }

    /// Merit and constraint values at `z`.
    pub fn evaluate(&self, z: &[f64], al: &AlState) -> Result<Evaluation> {
        let trajs = self.simulate(z, None)?;
        let tracks: Vec<Track> = trajs.iter().map(Track::from_trajectory).collect();
        let (risk, _) = self.evaluator.risk(&tracks, self.mode);
        Ok(self.assemble(z, al, trajs, risk))
    }

    /// Merit, its gradient with respect to `z`, and the constraint values.
    pub fn evaluate_with_gradient(&self, z: &[f64], al: &AlState, lo: &[f64], hi: &[f64]) -> Result<(Evaluation, Vec<f64>)> {
        match self.gradient {
            GradientMethod::Analytic => self.analytic_gradient(z, al),
            GradientMethod::ForwardDifference => {
                let base = self.evaluate(z, al)?;
                let mut grad = vec![0.0; z.len()];
                for i in 0..z.len() {
                    let mut h = 1e-6 * z[i].abs().max(1.0);
                    if z[i] + h > hi[i] && z[i] - h >= lo[i] {
                        h = -h;
                    }
                    let mut zp = z.to_vec();
                    zp[i] += h;
                    grad[i] = (self.evaluate(&zp, al)?.merit - base.merit) / h;
                }
                Ok((base, grad))
            }
        }
    }

    fn analytic_gradient(&self, z: &[f64], al: &AlState) -> Result<(Evaluation, Vec<f64>)> {
        let mut sens = Vec::new();
        let trajs = self.simulate(z, Some(&mut sens))?;
        let tracks: Vec<Track> = trajs.iter().map(Track::from_trajectory).collect();
        let (risk, table) = self.evaluator.risk(&tracks, self.mode);
        let eval = self.assemble(z, al, trajs, risk);
        let tf = z[0] * self.t_ref;
        let g = (risk - self.beta) / self.beta;
        // d merit / d risk
        let a_risk = al.rho * (g + al.mu / al.rho).max(0.0) / self.beta;
        let risk_grad = if a_risk != 0.0 { Some(self.evaluator.risk_gradient(&tracks, self.mode, &table)) } else { None };

        let n = self.n_nodes;
        let mut grad = vec![0.0; z.len()];
        // d merit / d T_F in physical units, accumulated before scaling
        let mut d_tf = 1.0 / self.t_ref;
        let wc = self.containment_weight / self.t_ref;
        for (v, traj) in eval.trajectories.iter().enumerate() {
            let s = &sens[v];
            let p = s.params;
            let m = traj.states.len();
            let mut gx = vec![0.0; m];
            let mut gy = vec![0.0; m];
            let mut gpsi = vec![0.0; m];
            if let Some(rg) = &risk_grad {
                let r = &rg[v];
                for i in 0..m {
                    gx[i] = a_risk * r.d_x[i];
                    gy[i] = a_risk * r.d_y[i];
                    gpsi[i] = a_risk * r.d_psi[i];
                }
                d_tf += a_risk * r.d_dt / self.steps as f64;
            }
            if wc != 0.0 {
                let mut c_v = 0.0;
                for (i, st) in traj.states.iter().enumerate() {
                    let pt = Point::new(st.x, st.y);
                    if let Some(q) = self.domain.nearest_if_outside(pt) {
                        let w = if i == 0 || i == m - 1 { 0.5 } else { 1.0 };
                        let d = pt - q;
                        gx[i] += wc * w * traj.dt * 2.0 * d.x;
                        gy[i] += wc * w * traj.dt * 2.0 * d.y;
                        c_v += w * traj.dt * d.dot(d);
                    }
                }
                if tf > 0.0 {
                    d_tf += wc * c_v / tf;
                }
            }
            let e = eval.terminal[v];
            let ls = self.terminal_scale;
            gx[m - 1] += (al.lambda[2 * v] + al.rho * e.x / ls) / ls;
            gy[m - 1] += (al.lambda[2 * v + 1] + al.rho * e.y / ls) / ls;

            let mut gp = vec![0.0; p];
            for i in 0..m {
                if gx[i] == 0.0 && gy[i] == 0.0 && gpsi[i] == 0.0 {
                    continue;
                }
                let (sx, sy, sp) = (
                    Sensitivity::row(&s.dx, i, p),
                    Sensitivity::row(&s.dy, i, p),
                    Sensitivity::row(&s.dpsi, i, p),
                );
                for q in 0..p {
                    gp[q] += gx[i] * sx[q] + gy[i] * sy[q] + gpsi[i] * sp[q];
                }
            }
            d_tf += gp[0];
            for j in 0..n {
                grad[1 + v * n + j] = gp[1 + j] * self.d_max;
            }
        }
        grad[0] = d_tf * self.t_ref;
        Ok((eval, grad))
    }
}
