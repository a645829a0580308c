//! Bound-constrained limited-memory BFGS with projected Armijo backtracking.

use std::collections::VecDeque;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LbfgsOptions {
    pub memory: usize,
    pub max_iter: usize,
    /// Stop when the infinity norm of the projected gradient drops below this.
    pub pg_tol: f64,
    /// Stop when the relative merit decrease stays below this for `patience` iterations.
    pub f_tol: f64,
    pub patience: usize,
    pub armijo: f64,
    pub max_backtracks: usize,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        Self { memory: 10, max_iter: 100, pg_tol: 1e-5, f_tol: 1e-9, patience: 3, armijo: 1e-4, max_backtracks: 30 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Stationary,
    SmallProgress,
    LineSearchFailed,
    MaxIterations,
}

#[derive(Debug, Clone)]
pub struct LbfgsOutcome<E> {
    pub x: Vec<f64>,
    pub value: f64,
    pub extra: E,
    pub iterations: usize,
    pub evaluations: usize,
    pub projected_gradient: f64,
    pub termination: Termination,
}

fn project(x: &mut [f64], lo: &[f64], hi: &[f64]) {
    for ((v, l), h) in x.iter_mut().zip(lo).zip(hi) {
        *v = v.clamp(*l, *h);
    }
}

fn projected_gradient_norm(x: &[f64], g: &[f64], lo: &[f64], hi: &[f64]) -> f64 {
    x.iter()
        .zip(g)
        .zip(lo.iter().zip(hi))
        .map(|((&xi, &gi), (&l, &h))| ((xi - gi).clamp(l, h) - xi).abs())
        .fold(0.0, f64::max)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimises `f` over the box `[lo, hi]`.
///
/// `f(x, true)` returns the value, an extra payload and the gradient;
/// `f(x, false)` may skip the gradient. Evaluation errors are treated as an
/// infinite value during the line search.
pub fn minimize<E: Clone, Err>(
    x0: &[f64],
    lo: &[f64],
    hi: &[f64],
    opts: &LbfgsOptions,
    mut f: impl FnMut(&[f64], bool) -> Result<(f64, E, Option<Vec<f64>>), Err>,
) -> Result<LbfgsOutcome<E>, Err> {
    let n = x0.len();
    let mut x = x0.to_vec();
    project(&mut x, lo, hi);
    let (mut fx, mut extra, g) = f(&x, true)?;
    let mut g = g.expect("gradient requested");
    let mut evaluations = 1;
    let mut mem: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let mut stall = 0;
    let mut iterations = 0;
    let mut termination = Termination::MaxIterations;
    while iterations < opts.max_iter {
        let pg = projected_gradient_norm(&x, &g, lo, hi);
        if pg <= opts.pg_tol {
            termination = Termination::Stationary;
            break;
        }
        // variables held at a bound by the gradient are frozen this iteration
        let free: Vec<bool> = (0..n)
            .map(|i| !((x[i] <= lo[i] && g[i] > 0.0) || (x[i] >= hi[i] && g[i] < 0.0)))
            .collect();
        let mut q: Vec<f64> = (0..n).map(|i| if free[i] { g[i] } else { 0.0 }).collect();
        let mut alphas = Vec::with_capacity(mem.len());
        for (s, y, rho) in mem.iter().rev() {
            let a = rho * dot(s, &q);
            for i in 0..n {
                q[i] -= a * y[i];
            }
            alphas.push(a);
        }
        if let Some((s, y, _)) = mem.back() {
            let gamma = dot(s, y) / dot(y, y);
            for v in q.iter_mut() {
                *v *= gamma;
            }
        }
        for ((s, y, rho), a) in mem.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &q);
            for i in 0..n {
                q[i] += s[i] * (a - b);
            }
        }
        let mut d: Vec<f64> = (0..n).map(|i| if free[i] { -q[i] } else { 0.0 }).collect();
        if dot(&d, &g) >= 0.0 {
            mem.clear();
            d = (0..n).map(|i| if free[i] { -g[i] } else { 0.0 }).collect();
        }
        let mut step = if mem.is_empty() {
            let dn = d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if dn > 0.0 { (0.1 / dn).min(1.0) } else { 1.0 }
        } else {
            1.0
        };
        // the first trial also computes the gradient, since it is usually accepted
        let mut accepted = None;
        for attempt in 0..opts.max_backtracks {
            let mut xn: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + step * b).collect();
            project(&mut xn, lo, hi);
            let decrease: f64 = g.iter().zip(xn.iter().zip(&x)).map(|(gi, (a, b))| gi * (a - b)).sum();
            evaluations += 1;
            if let Ok((fn_, en, gn)) = f(&xn, attempt == 0) {
                if fn_.is_finite() && fn_ <= fx + opts.armijo * decrease {
                    accepted = Some((xn, fn_, en, gn));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((xn, fn_, en, gn)) = accepted else {
            if mem.is_empty() {
                termination = Termination::LineSearchFailed;
                break;
            }
            mem.clear();
            iterations += 1;
            continue;
        };
        let (fn_, en, gn) = match gn {
            Some(gn) => (fn_, en, gn),
            None => {
                evaluations += 1;
                let (v, e, gn) = f(&xn, true)?;
                (v, e, gn.expect("gradient requested"))
            }
        };
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() && sy > 0.0 {
            mem.push_back((s, y, 1.0 / sy));
            if mem.len() > opts.memory {
                mem.pop_front();
            }
        }
        let rel = (fx - fn_) / fx.abs().max(1.0);
        x = xn;
        fx = fn_;
        extra = en;
        g = gn;
        iterations += 1;
        if rel < opts.f_tol {
            stall += 1;
            if stall >= opts.patience {
                termination = Termination::SmallProgress;
                break;
            }
        } else {
            stall = 0;
        }
    }
    let projected_gradient = projected_gradient_norm(&x, &g, lo, hi);
    if projected_gradient <= opts.pg_tol {
        termination = Termination::Stationary;
    }
    Ok(LbfgsOutcome { x, value: fx, extra, iterations, evaluations, projected_gradient, termination })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosen(x: &[f64]) -> (f64, Vec<f64>) {
        let (a, b) = (x[0], x[1]);
        let f = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
        (f, vec![-2.0 * (1.0 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)])
    }

    #[test]
    fn unconstrained_rosenbrock() {
        let opts = LbfgsOptions { max_iter: 500, pg_tol: 1e-8, ..Default::default() };
        let out = minimize::<(), ()>(&[-1.2, 1.0], &[-5.0; 2], &[5.0; 2], &opts, |x, _| {
            let (f, g) = rosen(x);
            Ok((f, (), Some(g)))
        })
        .unwrap();
        assert!((out.x[0] - 1.0).abs() < 1e-5 && (out.x[1] - 1.0).abs() < 1e-5, "{:?}", out.x);
    }

    #[test]
    fn active_bound_is_respected() {
        // minimum of the quadratic at (2, -3) lies outside the box
        let opts = LbfgsOptions { max_iter: 200, pg_tol: 1e-10, ..Default::default() };
        let out = minimize::<(), ()>(&[0.0, 0.0], &[-1.0; 2], &[1.0; 2], &opts, |x, _| {
            let f = (x[0] - 2.0).powi(2) + 3.0 * (x[1] + 3.0).powi(2) + x[0] * x[1];
            Ok((f, (), Some(vec![2.0 * (x[0] - 2.0) + x[1], 6.0 * (x[1] + 3.0) + x[0]])))
        })
        .unwrap();
        assert_eq!(out.x, vec![1.0, -1.0]);
        assert_eq!(out.termination, Termination::Stationary);
    }
}
