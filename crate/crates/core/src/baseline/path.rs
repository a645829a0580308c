//! Constant-speed planar paths built from straight lines and circular arcs,
//! and shortest connectors between poses (Dubins curves of CSC type).

use std::f64::consts::TAU;

use serde::Serialize;

use crate::geometry::Point;
use crate::scenario::Pose;

/// Role of a segment within a lawnmower plan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SegmentKind {
    Transit,
    Leg,
    Turn,
    Return,
}

/// A line (`curvature == 0`) or circular arc traversed from `start`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Segment {
    pub start: Pose,
    /// Arc length, m.
    pub length: f64,
    /// Signed curvature, 1/m; positive turns to port (counter-clockwise).
    pub curvature: f64,
    pub kind: SegmentKind,
}

impl Segment {
    /// Pose after travelling `s` metres along the segment.
    pub fn pose_at(&self, s: f64) -> Pose {
        let Pose { x, y, psi } = self.start;
        let k = self.curvature;
        if k == 0.0 {
            return Pose::new(x + s * psi.cos(), y + s * psi.sin(), psi);
        }
        let end = psi + k * s;
        Pose::new(x + (end.sin() - psi.sin()) / k, y - (end.cos() - psi.cos()) / k, end)
    }

    pub fn end(&self) -> Pose {
        self.pose_at(self.length)
    }
}

/// Chains `(length, curvature)` pieces from `start`, dropping empty pieces.
pub fn chain(start: Pose, pieces: &[(f64, f64)], kind: SegmentKind) -> Vec<Segment> {
    let mut out = Vec::new();
    let mut pose = start;
    for &(length, curvature) in pieces {
        if length <= 1e-12 {
            continue;
        }
        let seg = Segment { start: pose, length, curvature, kind };
        pose = seg.end();
        out.push(seg);
    }
    out
}

pub fn total_length(segments: &[Segment]) -> f64 {
    // Folding from +0 keeps an empty path at +0 rather than -0.
    segments.iter().fold(0.0, |acc, s| acc + s.length)
}

fn mod_tau(a: f64) -> f64 {
    let r = a.rem_euclid(TAU);
    if TAU - r < 1e-12 {
        0.0
    } else {
        r
    }
}

fn left_center(p: Pose, rho: f64) -> Point {
    Point::new(p.x - rho * p.psi.sin(), p.y + rho * p.psi.cos())
}

fn right_center(p: Pose, rho: f64) -> Point {
    Point::new(p.x + rho * p.psi.sin(), p.y - rho * p.psi.cos())
}

/// Shortest of the four curve-straight-curve connectors between two poses.
/// Returns `(length, curvature)` pieces.
pub fn dubins_csc(from: Pose, to: Pose, rho: f64) -> Vec<(f64, f64)> {
    let k = 1.0 / rho;
    let mut best: Option<(f64, Vec<(f64, f64)>)> = None;
    let mut consider = |pieces: Vec<(f64, f64)>| {
        let len: f64 = pieces.iter().map(|p| p.0).sum();
        if best.as_ref().is_none_or(|b| len < b.0) {
            best = Some((len, pieces));
        }
    };
    // LSL and RSR: outer tangents
    for left in [true, false] {
        let (c1, c2) = if left {
            (left_center(from, rho), left_center(to, rho))
        } else {
            (right_center(from, rho), right_center(to, rho))
        };
        let d = c2 - c1;
        let theta = if d.norm() < 1e-12 { from.psi } else { d.y.atan2(d.x) };
        let (a1, a2) = if left {
            (mod_tau(theta - from.psi), mod_tau(to.psi - theta))
        } else {
            (mod_tau(from.psi - theta), mod_tau(theta - to.psi))
        };
        let kk = if left { k } else { -k };
        consider(vec![(rho * a1, kk), (d.norm(), 0.0), (rho * a2, kk)]);
    }
    // LSR and RSL: inner tangents
    for left_first in [true, false] {
        let (c1, c2) = if left_first {
            (left_center(from, rho), right_center(to, rho))
        } else {
            (right_center(from, rho), left_center(to, rho))
        };
        let d = c2 - c1;
        let dist = d.norm();
        if dist < 2.0 * rho {
            continue;
        }
        let straight = (dist * dist - 4.0 * rho * rho).sqrt();
        let phi = d.y.atan2(d.x);
        let offset = (2.0 * rho).atan2(straight);
        if left_first {
            let theta = phi + offset;
            consider(vec![
                (rho * mod_tau(theta - from.psi), k),
                (straight, 0.0),
                (rho * mod_tau(theta - to.psi), -k),
            ]);
        } else {
            let theta = phi - offset;
            consider(vec![
                (rho * mod_tau(from.psi - theta), -k),
                (straight, 0.0),
                (rho * mod_tau(to.psi - theta), k),
            ]);
        }
    }
    best.map(|b| b.1).unwrap_or_default()
}

/// Shortest turn-then-straight path from a pose to a point (final heading free).
pub fn turn_and_go(from: Pose, to: Point, rho: f64) -> Vec<(f64, f64)> {
    let k = 1.0 / rho;
    let mut best: Option<(f64, Vec<(f64, f64)>)> = None;
    for left in [true, false] {
        let c = if left { left_center(from, rho) } else { right_center(from, rho) };
        let d = to - c;
        let dist = d.norm();
        if dist < rho {
            continue;
        }
        let straight = (dist * dist - rho * rho).sqrt();
        let phi = d.y.atan2(d.x);
        let offset = rho.atan2(straight);
        // tangent heading leaving the circle toward the target
        let arc = if left { mod_tau(phi + offset - from.psi) } else { mod_tau(from.psi - (phi - offset)) };
        let pieces = vec![(rho * arc, if left { k } else { -k }), (straight, 0.0)];
        let len = rho * arc + straight;
        if best.as_ref().is_none_or(|b| len < b.0) {
            best = Some((len, pieces));
        }
    }
    best.map(|b| b.1).unwrap_or_else(|| {
        // target inside both turning circles: go straight past it and come back around
        let away = Pose::new(from.x + 4.0 * rho * from.psi.cos(), from.y + 4.0 * rho * from.psi.sin(), from.psi);
        let mut p = vec![(4.0 * rho, 0.0)];
        p.extend(turn_and_go(away, to, rho));
        p
    })
}
