//! Forward-looking sonar detection-rate model.
//!
//! The detection rate for a target at `omega` seen from vehicle state `x` is
//!
//! ```text
//! gamma = lambda * p(range) * F_alpha(bearing) * F_eps(depression)
//! ```
//!
//! where `p` is the sonar-equation detection probability and the two gates
//! are smooth (logistic) horizontal and vertical field-of-view windows.
//! Angles are radians throughout; configuration files carry degrees and are
//! converted on load.

use serde::{Deserialize, Serialize};

use crate::dynamics::VehicleState;
use crate::error::{Error, Result};
use crate::geometry::Point;

/// Gate and radial factors below `CULL_LEVEL` are treated as zero by [`SensorModel`].
///
/// Over a mission of `T` seconds this changes any exposure by at most
/// `2 * lambda * CULL_LEVEL * T`, i.e. 2e-5 for a 500 s mission with the
/// reference scan rate.
pub const CULL_LEVEL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorParams {
    /// Poisson scan rate, 1/s.
    pub scan_rate: f64,
    /// Figure of merit, dB.
    pub figure_of_merit: f64,
    /// Absorption, dB/km.
    pub attenuation: f64,
    /// Standard deviation of the signal excess, dB.
    pub spread: f64,
    /// Full horizontal field of view, rad.
    pub horizontal_fov: f64,
    /// Full vertical field of view, rad.
    pub vertical_fov: f64,
    /// Depression of the vertical beam axis, rad (negative is below horizontal).
    pub depression_center: f64,
    /// Logistic slope of the horizontal gate, 1/rad.
    pub horizontal_slope: f64,
    /// Logistic slope of the vertical gate, 1/rad.
    pub vertical_slope: f64,
    /// Sensor height above the seabed, m.
    pub height: f64,
    /// Ranges are clamped to at least this value, m.
    pub min_range: f64,
}

impl Default for SensorParams {
    /// The reference sonar: 120° x 5° beam tilted 6° down, 20 m altitude.
    fn default() -> Self {
        Self {
            scan_rate: 20.0,
            figure_of_merit: 72.0,
            attenuation: 5.2,
            spread: 9.0,
            horizontal_fov: 120f64.to_radians(),
            vertical_fov: 5f64.to_radians(),
            depression_center: (-6f64).to_radians(),
            horizontal_slope: 25.0,
            vertical_slope: 400.0,
            height: 20.0,
            min_range: 0.1,
        }
    }
}

impl SensorParams {
    pub fn diagnose(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut positive = |name: &str, v: f64| {
            if !(v.is_finite() && v > 0.0) {
                out.push(format!("sensor: {name} must be positive and finite, got {v}"));
            }
        };
        positive("scan_rate", self.scan_rate);
        positive("spread", self.spread);
        positive("vertical_fov", self.vertical_fov);
        positive("horizontal_slope", self.horizontal_slope);
        positive("vertical_slope", self.vertical_slope);
        positive("height", self.height);
        positive("min_range", self.min_range);
        if !(self.horizontal_fov > 0.0 && self.horizontal_fov < std::f64::consts::TAU) {
            out.push(format!(
                "sensor: horizontal_fov must lie in (0, 360) degrees, got {}",
                self.horizontal_fov.to_degrees()
            ));
        }
        if !self.figure_of_merit.is_finite() {
            out.push("sensor: figure_of_merit must be finite".into());
        }
        if !(self.attenuation.is_finite() && self.attenuation >= 0.0) {
            out.push("sensor: attenuation must be finite and non-negative".into());
        }
        if !self.depression_center.is_finite() {
            out.push("sensor: depression_center must be finite".into());
        }
        out
    }
}

/// Numerically stable logistic function.
pub fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Spreading plus absorption loss: `20 log10(r) + a r / 1000`, in dB.
pub fn transmission_loss(range: f64, p: &SensorParams) -> Result<f64> {
    if !(range > 0.0) {
        return Err(Error::NonPositiveRange(range));
    }
    Ok(20.0 * range.log10() + p.attenuation * range / 1000.0)
}

fn tl_unchecked(range: f64, p: &SensorParams) -> f64 {
    20.0 * range.log10() + p.attenuation * range / 1000.0
}

/// `Phi((FOM - TL(r)) / sigma)` with the range clamped to `min_range`.
pub fn detection_probability(range: f64, p: &SensorParams) -> f64 {
    let r = range.max(p.min_range);
    normal_cdf((p.figure_of_merit - tl_unchecked(r, p)) / p.spread)
}

/// Target offset rotated into the body frame: (forward, lateral), lateral positive to port.
pub fn body_frame_offsets(state: &VehicleState, omega: Point) -> (f64, f64) {
    let dx = omega.x - state.x;
    let dy = omega.y - state.y;
    let (s, c) = state.psi.sin_cos();
    (dx * c + dy * s, -dx * s + dy * c)
}

/// Bearing of the target relative to the bow; 0 dead ahead, positive to port.
pub fn bearing(state: &VehicleState, omega: Point) -> f64 {
    let (fwd, lat) = body_frame_offsets(state, omega);
    if fwd == 0.0 && lat == 0.0 {
        0.0
    } else {
        lat.atan2(fwd)
    }
}

/// `L(k(c/2 + x)) + L(k(c/2 - x)) - 1` evaluated as `(1 - e^{-kc}) L(..) L(..)`,
/// which is algebraically identical and strictly positive.
fn window(x: f64, width: f64, slope: f64) -> f64 {
    let a = slope * (0.5 * width + x);
    let b = slope * (0.5 * width - x);
    -(-(slope * width)).exp_m1() * logistic(a) * logistic(b)
}

/// Window value and its derivative with respect to `x`.
fn window_with_slope(x: f64, width: f64, slope: f64) -> (f64, f64) {
    let la = logistic(slope * (0.5 * width + x));
    let lb = logistic(slope * (0.5 * width - x));
    let g = -(-(slope * width)).exp_m1() * la * lb;
    (g, g * slope * (lb - la))
}

/// Horizontal field-of-view gate, even in the bearing and peaked at 0.
pub fn horizontal_gate(bearing: f64, p: &SensorParams) -> f64 {
    window(bearing, p.horizontal_fov, p.horizontal_slope)
}

/// Depression angle of the seabed target, `atan(-h / range)`.
pub fn depression_at_range(range: f64, p: &SensorParams) -> f64 {
    (-p.height / range.max(p.min_range)).atan()
}

pub fn depression(state: &VehicleState, omega: Point, p: &SensorParams) -> f64 {
    depression_at_range(Point::new(state.x, state.y).dist(omega), p)
}

/// Vertical gate centred on the beam depression.
pub fn vertical_gate(depression: f64, p: &SensorParams) -> f64 {
    window(depression - p.depression_center, p.vertical_fov, p.vertical_slope)
}

/// Detection rate in 1/s. Exact evaluation with no culling.
pub fn detection_rate(state: &VehicleState, omega: Point, p: &SensorParams) -> f64 {
    let range = Point::new(state.x, state.y).dist(omega).max(p.min_range);
    p.scan_rate
        * detection_probability(range, p)
        * horizontal_gate(bearing(state, omega), p)
        * vertical_gate(depression_at_range(range, p), p)
}

/// Detection rate and its partial derivatives with respect to vehicle x, y and heading.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RateGradient {
    pub rate: f64,
    pub d_x: f64,
    pub d_y: f64,
    pub d_psi: f64,
}

/// Table spacing of the radial factor, m.
const RADIAL_STEP: f64 = 0.05;

/// Precomputed evaluator used in the quadrature hot loops.
///
/// Pairs whose range lies outside `[near, far]` or whose bearing is beyond
/// `max_bearing` contribute less than `lambda * CULL_LEVEL` and are skipped.
/// Both factors are lowered by `CULL_LEVEL` and clamped at zero so the culled
/// rate stays continuous across the support boundary.
/// Inside that support the range-dependent factor `p(r) * F_eps(r)` is read
/// from a cubic Hermite table built from exact values and slopes, which
/// agrees with [`detection_rate`] to about 1e-9 relative.
#[derive(Debug, Clone)]
pub struct SensorModel {
    params: SensorParams,
    near_sq: f64,
    far_sq: f64,
    max_bearing: f64,
    cos_max_bearing: f64,
    tl_slope_abs: f64,
    /// First tabulated range, m.
    table_start: f64,
    /// `(value, slope)` of the radial factor every `RADIAL_STEP` metres.
    table: Vec<(f64, f64)>,
    /// `exp(-k c / 2)` and `1 - exp(-k c)` of the horizontal window.
    h_half: f64,
    h_scale: f64,
}

impl SensorModel {
    pub fn new(params: &SensorParams) -> Self {
        let (near, far) = radial_support(params, CULL_LEVEL);
        let excess = (1.0 / CULL_LEVEL).ln() / params.horizontal_slope;
        let max_bearing = 0.5 * params.horizontal_fov + excess;
        let cos_max_bearing = if max_bearing >= std::f64::consts::PI { -2.0 } else { max_bearing.cos() };
        let kc = params.horizontal_slope * params.horizontal_fov;
        let mut model = Self {
            params: *params,
            near_sq: near * near,
            far_sq: far * far,
            max_bearing,
            cos_max_bearing,
            tl_slope_abs: params.attenuation / 1000.0,
            table_start: near.max(params.min_range),
            table: Vec::new(),
            h_half: (-0.5 * kc).exp(),
            h_scale: -(-kc).exp_m1(),
        };
        if far > model.table_start {
            let n = ((far - model.table_start) / RADIAL_STEP).ceil() as usize + 2;
            model.table = (0..n).map(|i| model.radial_exact(model.table_start + i as f64 * RADIAL_STEP)).collect();
        }
        model
    }

    pub fn params(&self) -> &SensorParams {
        &self.params
    }

    /// Range interval outside which the radial factor is negligible.
    pub fn support(&self) -> (f64, f64) {
        (self.near_sq.sqrt(), self.far_sq.sqrt())
    }

    /// Bearing magnitude beyond which the horizontal gate is negligible, rad.
    pub fn max_bearing(&self) -> f64 {
        self.max_bearing
    }

    /// Radial factor and its range derivative, evaluated exactly.
    fn radial_exact(&self, range: f64) -> (f64, f64) {
        let p = &self.params;
        let (r, clamped) = if range < p.min_range { (p.min_range, true) } else { (range, false) };
        let z = (p.figure_of_merit - tl_unchecked(r, p)) / p.spread;
        let prob = normal_cdf(z);
        let eps = (-p.height / r).atan();
        let (gate, gate_slope) = window_with_slope(eps - p.depression_center, p.vertical_fov, p.vertical_slope);
        if clamped {
            return (prob * gate, 0.0);
        }
        let tl_rate = 20.0 / (r * std::f64::consts::LN_10) + self.tl_slope_abs;
        let dprob = -normal_pdf(z) * tl_rate / p.spread;
        let deps = p.height / (r * r + p.height * p.height);
        (prob * gate, dprob * gate + prob * gate_slope * deps)
    }

    #[inline]
    fn radial(&self, range: f64) -> (f64, f64) {
        let t = (range - self.table_start) / RADIAL_STEP;
        if !(t >= 0.0) || t as usize + 1 >= self.table.len() {
            return self.radial_exact(range);
        }
        let i = t as usize;
        let u = t - i as f64;
        let (y0, m0) = self.table[i];
        let (y1, m1) = self.table[i + 1];
        let (m0, m1) = (m0 * RADIAL_STEP, m1 * RADIAL_STEP);
        let u2 = u * u;
        let u3 = u2 * u;
        let value = (2.0 * u3 - 3.0 * u2 + 1.0) * y0
            + (u3 - 2.0 * u2 + u) * m0
            + (-2.0 * u3 + 3.0 * u2) * y1
            + (u3 - u2) * m1;
        let slope = (6.0 * u2 - 6.0 * u) * y0
            + (3.0 * u2 - 4.0 * u + 1.0) * m0
            + (-6.0 * u2 + 6.0 * u) * y1
            + (3.0 * u2 - 2.0 * u) * m1;
        (value, slope / RADIAL_STEP)
    }

    /// Horizontal window and its derivative, using one exponential.
    #[inline]
    fn horizontal(&self, alpha: f64) -> (f64, f64) {
        let k = self.params.horizontal_slope;
        let e = (k * alpha.abs()).exp();
        // with x = |alpha|: e^{-a} = h_half / e, e^{-b} = h_half * e
        let ea = self.h_half / e;
        let eb = self.h_half * e;
        let la = 1.0 / (1.0 + ea);
        let lb = 1.0 / (1.0 + eb);
        let g = self.h_scale * la * lb;
        let slope = g * k * (lb - la);
        (g, if alpha < 0.0 { -slope } else { slope })
    }

    /// Culled detection rate for a vehicle at (x, y) with heading cosine/sine `c`, `s`.
    #[inline]
    pub fn rate(&self, x: f64, y: f64, c: f64, s: f64, omega: Point) -> f64 {
        let dx = omega.x - x;
        let dy = omega.y - y;
        let r2 = dx * dx + dy * dy;
        if r2 < self.near_sq || r2 > self.far_sq {
            return 0.0;
        }
        let fwd = dx * c + dy * s;
        let range = r2.sqrt();
        if fwd < self.cos_max_bearing * range {
            return 0.0;
        }
        let lat = -dx * s + dy * c;
        let alpha = if range == 0.0 { 0.0 } else { lat.atan2(fwd) };
        let g = self.radial(range).0 - CULL_LEVEL;
        if g <= 0.0 {
            return 0.0;
        }
        let h = self.horizontal(alpha).0 - CULL_LEVEL;
        if h <= 0.0 {
            return 0.0;
        }
        self.params.scan_rate * g * h
    }

    /// Culled detection rate with derivatives with respect to the vehicle pose.
    #[inline]
    pub fn rate_gradient(&self, x: f64, y: f64, c: f64, s: f64, omega: Point) -> Option<RateGradient> {
        let dx = omega.x - x;
        let dy = omega.y - y;
        let r2 = dx * dx + dy * dy;
        if r2 < self.near_sq || r2 > self.far_sq || r2 == 0.0 {
            return None;
        }
        let fwd = dx * c + dy * s;
        let range = r2.sqrt();
        if fwd < self.cos_max_bearing * range {
            return None;
        }
        let lat = -dx * s + dy * c;
        let alpha = lat.atan2(fwd);
        let (h_gate, h_slope) = self.horizontal(alpha);
        let (g, g_slope) = self.radial(range);
        let (h_gate, g) = (h_gate - CULL_LEVEL, g - CULL_LEVEL);
        if h_gate <= 0.0 || g <= 0.0 {
            return None;
        }
        let lam = self.params.scan_rate;
        // d(range)/d(vehicle) = -(dx, dy)/range; d(alpha)/d(vehicle) = (dy, -dx)/r2; d(alpha)/d(psi) = -1
        let radial_term = lam * g_slope * h_gate / range;
        let angular_term = lam * g * h_slope / r2;
        Some(RateGradient {
            rate: lam * g * h_gate,
            d_x: -radial_term * dx + angular_term * dy,
            d_y: -radial_term * dy - angular_term * dx,
            d_psi: -lam * g * h_slope,
        })
    }
}

/// Smallest interval of ranges outside which `p(r) * F_eps(r) < level`.
fn radial_support(p: &SensorParams, level: f64) -> (f64, f64) {
    let radial = |r: f64| detection_probability(r, p) * vertical_gate(depression_at_range(r, p), p);
    // grow the search horizon until the detection probability alone is negligible
    let mut horizon = 100.0_f64.max(10.0 * p.height);
    while detection_probability(horizon, p) >= level && horizon < 1e7 {
        horizon *= 2.0;
    }
    const SAMPLES: usize = 200_000;
    let step = horizon / SAMPLES as f64;
    let mut first = None;
    let mut last = None;
    for i in 0..=SAMPLES {
        let r = i as f64 * step;
        if radial(r) >= level {
            first.get_or_insert(i);
            last = Some(i);
        }
    }
    match (first, last) {
        (Some(a), Some(b)) => ((a as f64 - 2.0).max(0.0) * step, (b as f64 + 2.0) * step),
        _ => (f64::INFINITY, 0.0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn state(x: f64, y: f64, psi: f64) -> VehicleState {
        VehicleState { x, y, psi, r: 0.0 }
    }

    #[test]
    fn transmission_loss_values() {
        let mut p = SensorParams::default();
        assert_abs_diff_eq!(transmission_loss(1.0, &p).unwrap(), 0.0052, epsilon = 1e-15);
        assert_abs_diff_eq!(transmission_loss(1000.0, &p).unwrap(), 65.2, epsilon = 1e-12);
        p.attenuation = 0.0;
        assert_abs_diff_eq!(transmission_loss(10.0, &p).unwrap(), 20.0, epsilon = 1e-12);
        assert!(transmission_loss(0.0, &p).is_err());
        assert!(transmission_loss(-3.0, &p).is_err());
    }

    #[test]
    fn transmission_loss_increasing() {
        let p = SensorParams::default();
        let mut prev = transmission_loss(1.0, &p).unwrap();
        for i in 1..2000 {
            let tl = transmission_loss(1.0 + i as f64 * 0.7, &p).unwrap();
            assert!(tl > prev);
            prev = tl;
        }
    }

    #[test]
    fn detection_probability_at_figure_of_merit() {
        let p = SensorParams::default();
        // bisection on TL(r) = FOM
        let (mut lo, mut hi) = (1.0, 1e5);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if transmission_loss(mid, &p).unwrap() < p.figure_of_merit {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let r_star = 0.5 * (lo + hi);
        assert_abs_diff_eq!(detection_probability(r_star, &p), 0.5, epsilon = 1e-9);

        let (mut lo, mut hi) = (1.0, 1e5);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if transmission_loss(mid, &p).unwrap() < p.figure_of_merit - p.spread {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert_abs_diff_eq!(detection_probability(0.5 * (lo + hi), &p), 0.841_344_746_068_542_9, epsilon = 1e-9);
    }

    #[test]
    fn body_frame_examples() {
        assert_eq!(body_frame_offsets(&state(0.0, 0.0, 0.0), Point::new(3.0, 0.0)), (3.0, 0.0));
        let (f, l) = body_frame_offsets(&state(0.0, 0.0, std::f64::consts::FRAC_PI_2), Point::new(0.0, 5.0));
        assert_abs_diff_eq!(f, 5.0, epsilon = 1e-12);
        assert_abs_diff_eq!(l, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn bearing_conventions() {
        let s = state(1.0, 2.0, 0.3);
        let ahead = Point::new(1.0 + 10.0 * 0.3f64.cos(), 2.0 + 10.0 * 0.3f64.sin());
        assert_abs_diff_eq!(bearing(&s, ahead), 0.0, epsilon = 1e-12);
        let port = Point::new(1.0 - 10.0 * 0.3f64.sin(), 2.0 + 10.0 * 0.3f64.cos());
        assert_abs_diff_eq!(bearing(&s, port), std::f64::consts::FRAC_PI_2, epsilon = 1e-12);
        assert_eq!(bearing(&s, Point::new(1.0, 2.0)), 0.0);
    }

    #[test]
    fn horizontal_gate_values() {
        let p = SensorParams::default();
        let expected = 1.0 - 2.0 * (-(p.horizontal_slope * p.horizontal_fov / 2.0)).exp();
        assert_abs_diff_eq!(horizontal_gate(0.0, &p), expected, epsilon = 1e-10);
        assert_abs_diff_eq!(horizontal_gate(0.0, &p), 1.0, epsilon = 1e-10);
        let edge = horizontal_gate(p.horizontal_fov / 2.0, &p);
        assert_abs_diff_eq!(edge, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(horizontal_gate(-p.horizontal_fov / 2.0, &p), edge, epsilon = 1e-15);
    }

    #[test]
    fn vertical_gate_values() {
        let p = SensorParams::default();
        let peak = vertical_gate(p.depression_center, &p);
        let k = p.vertical_slope * p.vertical_fov;
        let expected = -(-k).exp_m1() * logistic(0.5 * k).powi(2);
        assert_abs_diff_eq!(peak, expected, epsilon = 1e-15);
        assert_abs_diff_eq!(peak, 1.0, epsilon = 1e-6);
        let half = vertical_gate(p.depression_center + p.vertical_fov / 2.0, &p);
        assert_abs_diff_eq!(half, 0.5, epsilon = 1e-10);
        for x in [1e-3, 0.01, 0.05, 0.2] {
            assert_abs_diff_eq!(
                vertical_gate(p.depression_center + x, &p),
                vertical_gate(p.depression_center - x, &p),
                epsilon = 1e-15
            );
            assert!(vertical_gate(p.depression_center + x, &p) < peak);
        }
    }

    #[test]
    fn depression_examples() {
        let p = SensorParams::default();
        assert_abs_diff_eq!(depression_at_range(20.0, &p), -std::f64::consts::FRAC_PI_4, epsilon = 1e-15);
        let center_range = 20.0 / 6f64.to_radians().tan();
        assert_abs_diff_eq!(center_range, 190.2873, epsilon = 1e-4);
        assert_abs_diff_eq!(depression_at_range(center_range, &p), p.depression_center, epsilon = 1e-14);
        let far = depression_at_range(1e9, &p);
        assert!(far < 0.0 && far > -1e-7);
    }

    #[test]
    fn rate_factorises() {
        let p = SensorParams::default();
        let r = 20.0 / 6f64.to_radians().tan();
        let s = state(0.0, 0.0, 0.0);
        let g = detection_rate(&s, Point::new(r, 0.0), &p);
        // both gates sit at their peaks, which are within 1e-6 of one
        assert_abs_diff_eq!(g, p.scan_rate * detection_probability(r, &p), epsilon = 1e-6 * p.scan_rate);
        let behind = detection_rate(&s, Point::new(-r, 0.0), &p);
        assert!(behind < p.scan_rate * 1e-6);
        for range in [5.0, 50.0, 150.0, 500.0] {
            assert!(detection_rate(&s, Point::new(-range, 0.0), &p) < p.scan_rate * 1e-6);
        }
    }

    #[test]
    fn culled_model_agrees_with_exact_rate() {
        let p = SensorParams::default();
        let model = SensorModel::new(&p);
        let (near, far) = model.support();
        assert!(near > 80.0 && near < 134.0, "{near}");
        assert!(far > 327.0 && far < 2500.0, "{far}");
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20_000 {
            let s = state(rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0), rng.random_range(-4.0..4.0));
            let omega = Point::new(rng.random_range(-600.0..600.0), rng.random_range(-600.0..600.0));
            let exact = detection_rate(&s, omega, &p);
            let culled = model.rate(s.x, s.y, s.psi.cos(), s.psi.sin(), omega);
            assert!((exact - culled).abs() <= 2.0 * p.scan_rate * CULL_LEVEL + 1e-8 * exact, "{exact} {culled}");
        }
    }

    #[test]
    fn rate_gradient_matches_central_differences() {
        let p = SensorParams::default();
        let model = SensorModel::new(&p);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut checked = 0;
        while checked < 300 {
            let s = state(0.0, 0.0, rng.random_range(-3.0..3.0));
            let range = rng.random_range(120.0..340.0);
            let ang = s.psi + rng.random_range(-1.4..1.4);
            let omega = Point::new(range * ang.cos(), range * ang.sin());
            let Some(g) = model.rate_gradient(s.x, s.y, s.psi.cos(), s.psi.sin(), omega) else { continue };
            if g.rate < 1e-3 {
                continue;
            }
            let f = |x: f64, y: f64, psi: f64| model.rate(x, y, psi.cos(), psi.sin(), omega);
            let h = 1e-5;
            let fx = (f(h, 0.0, s.psi) - f(-h, 0.0, s.psi)) / (2.0 * h);
            let fy = (f(0.0, h, s.psi) - f(0.0, -h, s.psi)) / (2.0 * h);
            let fp = (f(0.0, 0.0, s.psi + h) - f(0.0, 0.0, s.psi - h)) / (2.0 * h);
            let scale = 1e-5 * (1.0 + fx.abs() + fy.abs() + fp.abs());
            assert_abs_diff_eq!(g.d_x, fx, epsilon = scale);
            assert_abs_diff_eq!(g.d_y, fy, epsilon = scale);
            assert_abs_diff_eq!(g.d_psi, fp, epsilon = scale);
            checked += 1;
        }
    }
}
