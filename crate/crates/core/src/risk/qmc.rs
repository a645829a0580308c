//! Randomly shifted rank-1 lattice rules in two dimensions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{Domain, Point};

/// Description recorded in run summaries.
pub const CONSTRUCTION: &str = "rank-1 lattice, generating vector (1, z) minimising P2, uniform random shifts mod 1 (ChaCha8)";

/// `R` independently shifted copies of an `N`-point lattice, mapped into a domain.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QmcPointSet {
    pub points: usize,
    pub shifts: usize,
    pub seed: u64,
    /// Lattice generating vector.
    pub generator: [u64; 2],
    pub shift_vectors: Vec<[f64; 2]>,
    /// Shift-major: point `i` of shift `r` is at index `r * points + i`.
    #[serde(skip)]
    pub unit_points: Vec<[f64; 2]>,
    #[serde(skip)]
    pub domain_points: Vec<Point>,
}

impl QmcPointSet {
    pub fn generate(points: usize, shifts: usize, seed: u64, domain: &Domain) -> Result<Self> {
        if points < 16 {
            return Err(Error::InvalidArgument(format!("need at least 16 lattice points, got {points}")));
        }
        if shifts < 1 {
            return Err(Error::InvalidArgument("need at least one shift".into()));
        }
        let z = lattice_generator(points as u64);
        let generator = [1, z];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shift_vectors: Vec<[f64; 2]> = (0..shifts).map(|_| [rng.random::<f64>(), rng.random::<f64>()]).collect();
        let n = points as u64;
        let mut unit_points = Vec::with_capacity(points * shifts);
        for shift in &shift_vectors {
            for k in 0..n {
                let mut u = [0.0; 2];
                for (j, g) in generator.iter().enumerate() {
                    let base = ((k * g) % n) as f64 / points as f64;
                    let v = base + shift[j];
                    u[j] = if v >= 1.0 { v - 1.0 } else { v };
                }
                unit_points.push(u);
            }
        }
        let domain_points = unit_points.iter().map(|&u| domain.map_unit_square(u)).collect();
        Ok(Self { points, shifts, seed, generator, shift_vectors, unit_points, domain_points })
    }

    pub fn len(&self) -> usize {
        self.domain_points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.domain_points.is_empty()
    }

    /// Equal-weight average of `f` over every point of every shift.
    pub fn integrate(&self, mut f: impl FnMut(Point) -> f64) -> f64 {
        self.domain_points.iter().map(|&p| f(p)).sum::<f64>() / self.len() as f64
    }

    /// One estimate per shift.
    pub fn shift_estimates(&self, mut f: impl FnMut(Point) -> f64) -> Vec<f64> {
        self.domain_points
            .chunks(self.points)
            .map(|c| c.iter().map(|&p| f(p)).sum::<f64>() / self.points as f64)
            .collect()
    }
}

fn bernoulli2(x: f64) -> f64 {
    x * x - x + 1.0 / 6.0
}

/// Worst-case error criterion of the lattice (1, z) in the unweighted
/// Korobov space with smoothness 2.
pub fn p2_criterion(n: u64, z: u64) -> f64 {
    let c = 2.0 * std::f64::consts::PI * std::f64::consts::PI;
    let mut sum = 0.0;
    for k in 0..n {
        let x1 = k as f64 / n as f64;
        let x2 = ((k * z) % n) as f64 / n as f64;
        sum += (1.0 + c * bernoulli2(x1)) * (1.0 + c * bernoulli2(x2));
    }
    sum / n as f64 - 1.0
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Second component of the generating vector. Exhaustive over `z <= n/2`
/// for small `n`, otherwise a window around the golden-ratio multiplier.
pub fn lattice_generator(n: u64) -> u64 {
    if n <= 3 {
        return 1;
    }
    let candidates: Vec<u64> = if n <= 8192 {
        (1..=n / 2).collect()
    } else {
        let centre = (n as f64 * 0.381_966_011_250_105_1).round() as u64;
        (centre.saturating_sub(256)..=centre + 256).filter(|&z| z >= 1 && z < n).collect()
    };
    let mut best = (f64::INFINITY, 1);
    for z in candidates {
        if gcd(z, n) != 1 {
            continue;
        }
        let p = p2_criterion(n, z);
        if p < best.0 {
            best = (p, z);
        }
    }
    best.1
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn constant_integrand_is_exact() {
        let d = Domain::new([
            Point::new(0.0, 0.0),
            Point::new(7.0, 1.0),
            Point::new(8.0, 6.0),
            Point::new(1.0, 5.0),
        ])
        .unwrap();
        for (n, r, seed) in [(16, 1, 0), (1000, 3, 9), (4096, 8, 42)] {
            let q = QmcPointSet::generate(n, r, seed, &d).unwrap();
            assert_eq!(q.integrate(|_| 1.0), 1.0);
        }
    }

    #[test]
    fn linear_mean() {
        let d = Domain::rectangle(0.0, 0.0, 1.0, 1.0).unwrap();
        let q = QmcPointSet::generate(1024, 8, 5, &d).unwrap();
        assert_abs_diff_eq!(q.integrate(|p| p.x), 0.5, epsilon = 1e-3);
        assert!(q.unit_points.iter().all(|u| (0.0..1.0).contains(&u[0]) && (0.0..1.0).contains(&u[1])));
    }

    #[test]
    fn deterministic_for_seed() {
        let d = Domain::rectangle(5.0, 5.0, 25.0, 25.0).unwrap();
        let a = QmcPointSet::generate(512, 4, 77, &d).unwrap();
        let b = QmcPointSet::generate(512, 4, 77, &d).unwrap();
        assert_eq!(a, b);
        let c = QmcPointSet::generate(512, 4, 78, &d).unwrap();
        assert_ne!(a.unit_points, c.unit_points);
    }

    #[test]
    fn fibonacci_size_finds_fibonacci_lattice() {
        // For Fibonacci n the optimal generator is the previous Fibonacci number (or n minus it).
        let z = lattice_generator(987);
        assert!(z == 377 || z == 610 || z == 233, "{z}");
    }

    #[test]
    fn smooth_integrand_converges_fast() {
        let d = Domain::rectangle(0.0, 0.0, 1.0, 1.0).unwrap();
        let f = |p: Point| (p.x * 3.0).sin() * (1.0 + p.y * p.y);
        let exact = (1.0 - 3f64.cos()) / 3.0 * (4.0 / 3.0);
        // the integrand is not periodic, so expect roughly 1/N rather than spectral accuracy
        let q = QmcPointSet::generate(4096, 8, 3, &d).unwrap();
        assert_abs_diff_eq!(q.integrate(f), exact, epsilon = 1e-4);
    }

    #[test]
    fn rejects_tiny_sets() {
        let d = Domain::rectangle(0.0, 0.0, 1.0, 1.0).unwrap();
        assert!(QmcPointSet::generate(8, 1, 0, &d).is_err());
        assert!(QmcPointSet::generate(64, 0, 0, &d).is_err());
    }
}
