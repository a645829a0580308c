//! Planar geometry for the survey area: points and convex quadrilateral domains.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dist(self, other: Point) -> f64 {
        (self - other).norm()
    }

    pub fn dot(self, other: Point) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// z-component of the 3-D cross product.
    pub fn cross(self, other: Point) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn scale(self, s: f64) -> Point {
        Point::new(self.x * s, self.y * s)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl std::ops::Add for Point {
    type Output = Point;
    fn add(self, rhs: Point) -> Point {
        Point::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl std::ops::Sub for Point {
    type Output = Point;
    fn sub(self, rhs: Point) -> Point {
        Point::new(self.x - rhs.x, self.y - rhs.y)
    }
}

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Point,
    pub max: Point,
}

impl Aabb {
    pub fn width(&self) -> f64 {
        self.max.x - self.min.x
    }

    pub fn height(&self) -> f64 {
        self.max.y - self.min.y
    }
}

/// A convex, counter-clockwise quadrilateral survey area, in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[Point; 4]", into = "[Point; 4]")]
pub struct Domain {
    vertices: [Point; 4],
}

impl TryFrom<[Point; 4]> for Domain {
    type Error = Error;
    fn try_from(v: [Point; 4]) -> Result<Self> {
        Domain::new(v)
    }
}

impl From<Domain> for [Point; 4] {
    fn from(d: Domain) -> Self {
        d.vertices
    }
}

impl Domain {
    /// Checks finiteness, non-degeneracy, strict convexity and counter-clockwise order.
    pub fn new(vertices: [Point; 4]) -> Result<Self> {
        let diags = Self::diagnose(&vertices);
        if diags.is_empty() {
            Ok(Self { vertices })
        } else {
            Err(Error::InvalidScenario(diags))
        }
    }

    pub fn rectangle(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self> {
        Self::new([
            Point::new(x_min, y_min),
            Point::new(x_max, y_min),
            Point::new(x_max, y_max),
            Point::new(x_min, y_max),
        ])
    }

    fn diagnose(v: &[Point; 4]) -> Vec<String> {
        let mut out = Vec::new();
        if v.iter().any(|p| !p.is_finite()) {
            out.push("domain: vertices must be finite".to_string());
            return out;
        }
        let scale = v
            .iter()
            .flat_map(|p| [p.x.abs(), p.y.abs()])
            .fold(0.0_f64, f64::max)
            .max(1.0);
        let eps = 1e-12 * scale;
        for i in 0..4 {
            if v[i].dist(v[(i + 1) % 4]) <= eps {
                out.push(format!("domain: degenerate (vertices {i} and {} coincide)", (i + 1) % 4));
                return out;
            }
        }
        if shoelace(v) <= eps * eps {
            out.push("domain: degenerate or clockwise (non-positive signed area)".to_string());
            return out;
        }
        for i in 0..4 {
            let a = v[(i + 3) % 4];
            let b = v[i];
            let c = v[(i + 1) % 4];
            if (b - a).cross(c - b) <= eps * eps {
                out.push(format!("domain: not strictly convex at vertex {i}"));
            }
        }
        out
    }

    pub fn vertices(&self) -> &[Point; 4] {
        &self.vertices
    }

    /// Shoelace area in m².
    pub fn area(&self) -> f64 {
        shoelace(&self.vertices)
    }

    pub fn bounding_box(&self) -> Aabb {
        let mut min = self.vertices[0];
        let mut max = self.vertices[0];
        for p in &self.vertices[1..] {
            min.x = min.x.min(p.x);
            min.y = min.y.min(p.y);
            max.x = max.x.max(p.x);
            max.y = max.y.max(p.y);
        }
        Aabb { min, max }
    }

    /// Closed-set membership with a small absolute tolerance.
    pub fn contains(&self, p: Point) -> bool {
        let tol = 1e-9 * self.bounding_box().width().max(self.bounding_box().height()).max(1.0);
        (0..4).all(|i| {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % 4];
            let edge = b - a;
            edge.cross(p - a) >= -tol * edge.norm()
        })
    }

    /// Returns the bounds when the domain is an axis-aligned rectangle.
    pub fn as_rectangle(&self) -> Option<Aabb> {
        let bb = self.bounding_box();
        let tol = 1e-9 * bb.width().max(bb.height());
        let on_corner = |p: &Point| {
            ((p.x - bb.min.x).abs() <= tol || (p.x - bb.max.x).abs() <= tol)
                && ((p.y - bb.min.y).abs() <= tol || (p.y - bb.max.y).abs() <= tol)
        };
        self.vertices.iter().all(on_corner).then_some(bb)
    }

    fn is_parallelogram(&self) -> bool {
        let v = &self.vertices;
        let d = (v[0] + v[2]) - (v[1] + v[3]);
        let bb = self.bounding_box();
        d.norm() <= 1e-12 * bb.width().max(bb.height())
    }

    /// Measure-preserving map from the unit square onto the domain.
    ///
    /// Parallelograms (and therefore rectangles) use the affine map, which is the
    /// per-axis inverse uniform CDF for axis-aligned rectangles. Other convex
    /// quadrilaterals are split along the v0–v2 diagonal; `u.0` selects the
    /// triangle in proportion to its area and the remainder goes through the
    /// square-to-triangle map.
    pub fn map_unit_square(&self, u: [f64; 2]) -> Point {
        let v = &self.vertices;
        if self.is_parallelogram() {
            return v[0] + (v[1] - v[0]).scale(u[0]) + (v[3] - v[0]).scale(u[1]);
        }
        let area_a = 0.5 * (v[1] - v[0]).cross(v[2] - v[0]);
        let area_b = 0.5 * (v[2] - v[0]).cross(v[3] - v[0]);
        let share = area_a / (area_a + area_b);
        let (tri, s) = if u[0] < share {
            ([v[0], v[1], v[2]], u[0] / share)
        } else {
            ([v[0], v[2], v[3]], ((u[0] - share) / (1.0 - share)).min(1.0))
        };
        let rs = s.sqrt();
        tri[0].scale(1.0 - rs) + tri[1].scale(rs * (1.0 - u[1])) + tri[2].scale(rs * u[1])
    }

    /// Area and centroid of the intersection with an axis-aligned box.
    pub fn clip_box(&self, min: Point, max: Point) -> (f64, Point) {
        let mut poly = vec![
            Point::new(min.x, min.y),
            Point::new(max.x, min.y),
            Point::new(max.x, max.y),
            Point::new(min.x, max.y),
        ];
        for i in 0..4 {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % 4];
            poly = clip_half_plane(&poly, a, b);
            if poly.is_empty() {
                return (0.0, Point::default());
            }
        }
        polygon_area_centroid(&poly)
    }

    /// Nearest boundary point when `p` lies strictly outside, else `None`.
    pub fn nearest_if_outside(&self, p: Point) -> Option<Point> {
        let mut outside = false;
        for i in 0..4 {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % 4];
            if (b - a).cross(p - a) < 0.0 {
                outside = true;
                break;
            }
        }
        if !outside {
            return None;
        }
        let mut best = self.vertices[0];
        let mut best_d2 = f64::INFINITY;
        for i in 0..4 {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % 4];
            let ab = b - a;
            let t = ((p - a).dot(ab) / ab.dot(ab)).clamp(0.0, 1.0);
            let q = a + ab.scale(t);
            let d2 = (p - q).dot(p - q);
            if d2 < best_d2 {
                best_d2 = d2;
                best = q;
            }
        }
        Some(best)
    }
}

fn shoelace(v: &[Point]) -> f64 {
    let n = v.len();
    0.5 * (0..n).map(|i| v[i].cross(v[(i + 1) % n])).sum::<f64>()
}

fn polygon_area_centroid(poly: &[Point]) -> (f64, Point) {
    let n = poly.len();
    let mut a2 = 0.0;
    let mut cx = 0.0;
    let mut cy = 0.0;
    for i in 0..n {
        let p = poly[i];
        let q = poly[(i + 1) % n];
        let c = p.cross(q);
        a2 += c;
        cx += (p.x + q.x) * c;
        cy += (p.y + q.y) * c;
    }
    if a2.abs() < f64::MIN_POSITIVE {
        return (0.0, poly[0]);
    }
    (0.5 * a2, Point::new(cx / (3.0 * a2), cy / (3.0 * a2)))
}

/// Sutherland–Hodgman step keeping the left side of the directed edge a→b.
fn clip_half_plane(poly: &[Point], a: Point, b: Point) -> Vec<Point> {
    let edge = b - a;
    let side = |p: Point| edge.cross(p - a);
    let mut out = Vec::with_capacity(poly.len() + 1);
    for i in 0..poly.len() {
        let cur = poly[i];
        let next = poly[(i + 1) % poly.len()];
        let sc = side(cur);
        let sn = side(next);
        if sc >= 0.0 {
            out.push(cur);
        }
        if (sc >= 0.0) != (sn >= 0.0) {
            let t = sc / (sc - sn);
            out.push(cur + (next - cur).scale(t));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn quad() -> Domain {
        Domain::new([
            Point::new(0.0, 0.0),
            Point::new(10.0, 1.0),
            Point::new(12.0, 9.0),
            Point::new(-1.0, 6.0),
        ])
        .unwrap()
    }

    #[test]
    fn square_area() {
        assert_eq!(Domain::rectangle(5.0, 5.0, 25.0, 25.0).unwrap().area(), 400.0);
        assert_eq!(Domain::rectangle(0.0, 0.0, 1.0, 1.0).unwrap().area(), 1.0);
    }

    #[test]
    fn scaled_area() {
        let d = quad();
        let c = 3.5;
        let v = d.vertices().map(|p| p.scale(c));
        let scaled = Domain::new(v).unwrap();
        assert_abs_diff_eq!(scaled.area(), d.area() * c * c, epsilon = 1e-9);
    }

    #[test]
    fn rejects_bad_shapes() {
        let p = Point::new;
        assert!(Domain::new([p(0., 0.), p(0., 0.), p(1., 1.), p(0., 1.)]).is_err());
        // clockwise
        assert!(Domain::new([p(0., 0.), p(0., 1.), p(1., 1.), p(1., 0.)]).is_err());
        // concave dart
        assert!(Domain::new([p(0., 0.), p(4., 0.), p(1., 1.), p(0., 4.)]).is_err());
        assert!(Domain::new([p(0., 0.), p(f64::NAN, 0.), p(1., 1.), p(0., 1.)]).is_err());
    }

    #[test]
    fn unit_square_map_on_rectangle() {
        let d = Domain::rectangle(5.0, 5.0, 25.0, 25.0).unwrap();
        assert_eq!(d.map_unit_square([0.5, 0.5]), Point::new(15.0, 15.0));
        assert_eq!(d.map_unit_square([0.0, 0.0]), Point::new(5.0, 5.0));
        assert_eq!(d.map_unit_square([0.25, 0.75]), Point::new(10.0, 20.0));
    }

    #[test]
    fn unit_square_map_stays_inside_general_quad() {
        let d = quad();
        assert_eq!(d.map_unit_square([0.0, 0.0]), d.vertices()[0]);
        for i in 0..50 {
            for j in 0..50 {
                let p = d.map_unit_square([i as f64 / 50.0, j as f64 / 50.0]);
                assert!(d.contains(p), "{p:?}");
            }
        }
    }

    #[test]
    fn clip_box_matches_area() {
        let d = quad();
        let bb = d.bounding_box();
        let (a, _) = d.clip_box(bb.min, bb.max);
        assert_abs_diff_eq!(a, d.area(), epsilon = 1e-9);
        let (a, c) = d.clip_box(Point::new(1.0, 2.0), Point::new(3.0, 4.0));
        assert_abs_diff_eq!(a, 4.0, epsilon = 1e-12);
        assert_abs_diff_eq!(c.x, 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(c.y, 3.0, epsilon = 1e-12);
    }

    #[test]
    fn nearest_outside_point() {
        let d = Domain::rectangle(0.0, 0.0, 10.0, 10.0).unwrap();
        assert_eq!(d.nearest_if_outside(Point::new(5.0, 5.0)), None);
        assert_eq!(d.nearest_if_outside(Point::new(12.0, 5.0)), Some(Point::new(10.0, 5.0)));
        assert_eq!(d.nearest_if_outside(Point::new(-3.0, -4.0)), Some(Point::new(0.0, 0.0)));
    }
}
