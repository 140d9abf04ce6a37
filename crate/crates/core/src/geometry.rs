//! Convex boundaries, chords through the domain and ray casting.
//!
//! Points and directions are complex numbers `x + iy`. A boundary is sampled
//! at `n` uniformly spaced parameter values on `[0, 2π)` and traced
//! counterclockwise, so the outward normal is the tangent rotated by `-π/2`.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point = Complex64;

/// Minimum node count accepted by [`ConvexBoundary::new`].
pub const MIN_NODES: usize = 16;

/// Smallest curvature accepted as "strictly convex".
pub const MIN_CURVATURE: f64 = 1e-8;

/// Band `|n·θ| <= TANGENT_TOL` counts as tangential.
pub const TANGENT_TOL: f64 = 1e-9;

const BISECTION_STEPS: usize = 60;

#[derive(Clone, Debug, PartialEq)]
pub enum BoundaryKind {
    UnitDisk,
    Ellipse { a: f64, b: f64 },
    /// Closed curve through the given points, interpolated by a periodic cubic spline.
    Table { points: Vec<Point> },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundaryNode {
    pub param: f64,
    pub position: Point,
    /// Unit tangent, counterclockwise.
    pub tangent: Complex64,
    /// Unit outward normal.
    pub normal: Complex64,
    pub curvature: f64,
    /// `|w'(t)|`, length per parameter unit.
    pub speed: f64,
}

impl BoundaryNode {
    /// Derivative of the position with respect to the parameter.
    pub fn velocity(&self) -> Complex64 {
        self.tangent * self.speed
    }
}

/// Serializable summary used to match files against a boundary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryDescriptor {
    pub kind: String,
    pub n_nodes: usize,
    pub a: f64,
    pub b: f64,
    /// Hex digest of the table points for `kind = "table"`, empty otherwise.
    pub table_digest: String,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Chord {
    pub base: Point,
    pub direction: Complex64,
    pub tau_plus: f64,
    pub tau_minus: f64,
    pub end_plus: Point,
    pub end_minus: Point,
}

impl Chord {
    pub fn length(&self) -> f64 {
        self.tau_plus + self.tau_minus
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Orientation {
    Incoming,
    Outgoing,
    Tangential,
}

#[derive(Clone, Debug)]
pub struct ConvexBoundary {
    kind: BoundaryKind,
    nodes: Vec<BoundaryNode>,
    spline: Option<PeriodicSpline>,
    min_curvature: f64,
    contain_tol: f64,
    radius: f64,
}

impl ConvexBoundary {
    /// Samples the boundary at `n_nodes` parameter values and validates convexity.
    pub fn new(kind: BoundaryKind, n_nodes: usize) -> Result<Self> {
        if n_nodes < MIN_NODES {
            return Err(Error::TooFewNodes { got: n_nodes, min: MIN_NODES });
        }
        let (kind, spline) = match kind {
            BoundaryKind::Ellipse { a, b } => {
                if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
                    return Err(Error::InvalidBoundary(format!("semi-axes must be positive, got ({a}, {b})")));
                }
                (BoundaryKind::Ellipse { a, b }, None)
            }
            BoundaryKind::Table { mut points } => {
                if points.len() < 8 {
                    return Err(Error::InvalidBoundary(format!("table needs at least 8 points, got {}", points.len())));
                }
                if signed_area(&points) < 0.0 {
                    points.reverse();
                }
                let spline = PeriodicSpline::new(&points);
                (BoundaryKind::Table { points }, Some(spline))
            }
            BoundaryKind::UnitDisk => (BoundaryKind::UnitDisk, None),
        };

        let mut boundary = ConvexBoundary {
            kind,
            nodes: Vec::with_capacity(n_nodes),
            spline,
            min_curvature: f64::INFINITY,
            contain_tol: 0.0,
            radius: 0.0,
        };
        let step = 2.0 * PI / n_nodes as f64;
        for k in 0..n_nodes {
            let t = k as f64 * step;
            let node = boundary.node_at(t);
            boundary.nodes.push(node);
        }

        for (k, node) in boundary.nodes.iter().enumerate() {
            if !(node.curvature >= MIN_CURVATURE) {
                return Err(Error::NonConvex { node: k, curvature: node.curvature });
            }
        }
        for k in 0..n_nodes {
            let p0 = boundary.nodes[k].position;
            let p1 = boundary.nodes[(k + 1) % n_nodes].position;
            let p2 = boundary.nodes[(k + 2) % n_nodes].position;
            if cross(p1 - p0, p2 - p1) <= 0.0 {
                return Err(Error::NonConvex { node: (k + 1) % n_nodes, curvature: boundary.nodes[(k + 1) % n_nodes].curvature });
            }
        }
        let turning: f64 = (0..n_nodes)
            .map(|k| {
                let p0 = boundary.nodes[k].position;
                let p1 = boundary.nodes[(k + 1) % n_nodes].position;
                let p2 = boundary.nodes[(k + 2) % n_nodes].position;
                ((p2 - p1) / (p1 - p0)).arg()
            })
            .sum();
        if (turning - 2.0 * PI).abs() > 1e-6 {
            return Err(Error::NonConvex { node: 0, curvature: boundary.nodes[0].curvature });
        }

        boundary.min_curvature = boundary.nodes.iter().map(|n| n.curvature).fold(f64::INFINITY, f64::min);
        boundary.radius = boundary.nodes.iter().map(|n| n.position.norm()).fold(0.0, f64::max);
        boundary.contain_tol = match boundary.kind {
            BoundaryKind::Table { .. } => {
                let mut sag: f64 = 0.0;
                for k in 0..n_nodes {
                    let e = (boundary.nodes[(k + 1) % n_nodes].position - boundary.nodes[k].position).norm();
                    let kap = boundary.nodes[k].curvature.max(boundary.nodes[(k + 1) % n_nodes].curvature);
                    sag = sag.max(e * e * kap / 8.0);
                }
                2.0 * sag + 1e-10
            }
            _ => 1e-10,
        };
        Ok(boundary)
    }

    pub fn kind(&self) -> &BoundaryKind {
        &self.kind
    }

    pub fn nodes(&self) -> &[BoundaryNode] {
        &self.nodes
    }

    pub fn node(&self, k: usize) -> &BoundaryNode {
        &self.nodes[k]
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// Parameter spacing `2π/n`.
    pub fn step(&self) -> f64 {
        2.0 * PI / self.nodes.len() as f64
    }

    pub fn min_curvature(&self) -> f64 {
        self.min_curvature
    }

    /// Largest distance from the origin to a boundary node.
    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn into_shared(self) -> Arc<Self> {
        Arc::new(self)
    }

    pub fn descriptor(&self) -> BoundaryDescriptor {
        let (kind, a, b, digest) = match &self.kind {
            BoundaryKind::UnitDisk => ("disk", 1.0, 1.0, String::new()),
            BoundaryKind::Ellipse { a, b } => ("ellipse", *a, *b, String::new()),
            BoundaryKind::Table { points } => {
                use sha2::{Digest, Sha256};
                let mut hasher = Sha256::new();
                for p in points {
                    hasher.update(p.re.to_le_bytes());
                    hasher.update(p.im.to_le_bytes());
                }
                ("table", 0.0, 0.0, hex::encode(hasher.finalize()))
            }
        };
        BoundaryDescriptor { kind: kind.to_string(), n_nodes: self.n_nodes(), a, b, table_digest: digest }
    }

    /// Geometry of the curve at parameter `t`.
    pub fn node_at(&self, t: f64) -> BoundaryNode {
        let (p, d1, d2) = match (&self.kind, &self.spline) {
            (BoundaryKind::UnitDisk, _) => {
                let e = Complex64::from_polar(1.0, t);
                (e, e * Complex64::i(), -e)
            }
            (BoundaryKind::Ellipse { a, b }, _) => {
                let (s, c) = t.sin_cos();
                (Complex64::new(a * c, b * s), Complex64::new(-a * s, b * c), Complex64::new(-a * c, -b * s))
            }
            (BoundaryKind::Table { .. }, Some(sp)) => sp.eval(t),
            (BoundaryKind::Table { .. }, None) => unreachable!("table boundary without spline"),
        };
        let speed = d1.norm();
        let tangent = d1 / speed;
        let curvature = match self.kind {
            BoundaryKind::UnitDisk => 1.0,
            _ => cross(d1, d2) / speed.powi(3),
        };
        BoundaryNode { param: t, position: p, tangent, normal: -Complex64::i() * tangent, curvature, speed }
    }

    pub fn position_at(&self, t: f64) -> Point {
        match (&self.kind, &self.spline) {
            (BoundaryKind::UnitDisk, _) => Complex64::from_polar(1.0, t),
            (BoundaryKind::Ellipse { a, b }, _) => Complex64::new(a * t.cos(), b * t.sin()),
            (_, Some(sp)) => sp.eval(t).0,
            _ => unreachable!("table boundary without spline"),
        }
    }

    /// Closed-domain membership test.
    pub fn contains(&self, x: Point) -> bool {
        match &self.kind {
            BoundaryKind::UnitDisk => x.norm_sqr() <= 1.0 + self.contain_tol,
            BoundaryKind::Ellipse { a, b } => (x.re / a).powi(2) + (x.im / b).powi(2) <= 1.0 + self.contain_tol,
            BoundaryKind::Table { .. } => {
                let n = self.nodes.len();
                (0..n).all(|k| {
                    let p0 = self.nodes[k].position;
                    let p1 = self.nodes[(k + 1) % n].position;
                    let e = p1 - p0;
                    cross(e, x - p0) / e.norm() >= -self.contain_tol
                })
            }
        }
    }

    /// Distance from `x` to the nearest boundary node.
    pub fn node_distance(&self, x: Point) -> f64 {
        self.nodes.iter().map(|n| (n.position - x).norm()).fold(f64::INFINITY, f64::min)
    }

    /// Chord through `x` along `theta`. `theta` is normalized internally.
    pub fn cast_chord(&self, x: Point, theta: Complex64) -> Result<Chord> {
        if !x.re.is_finite() || !x.im.is_finite() || !self.contains(x) {
            return Err(Error::OutsideDomain { x: x.re, y: x.im });
        }
        let theta = theta / theta.norm();
        let (tp, tm) = match &self.kind {
            BoundaryKind::UnitDisk => quadratic_hits(x, theta, 1.0, 1.0),
            BoundaryKind::Ellipse { a, b } => quadratic_hits(x, theta, *a, *b),
            BoundaryKind::Table { .. } => self.bisection_hits(x, theta)?,
        };
        let tau_plus = tp.max(0.0);
        let tau_minus = tm.max(0.0);
        Ok(Chord {
            base: x,
            direction: theta,
            tau_plus,
            tau_minus,
            end_plus: x + theta * tau_plus,
            end_minus: x - theta * tau_minus,
        })
    }

    /// Forward and backward hit distances found by bisection on the boundary parameter.
    pub(crate) fn bisection_hits(&self, x: Point, theta: Complex64) -> Result<(f64, f64)> {
        let side = |t: f64| cross(theta, self.position_at(t) - x);
        let n = self.nodes.len();
        let h = self.step();
        let mut hits: Vec<f64> = Vec::with_capacity(4);
        for k in 0..n {
            let t0 = k as f64 * h;
            let t1 = t0 + h;
            let (mut lo, mut hi) = (t0, t1);
            let (mut flo, fhi) = (side(lo), side(hi));
            if flo == 0.0 {
                hits.push(dot(theta, self.position_at(lo) - x));
                continue;
            }
            if flo * fhi > 0.0 || fhi == 0.0 {
                continue;
            }
            for _ in 0..BISECTION_STEPS {
                let mid = 0.5 * (lo + hi);
                let fm = side(mid);
                if fm == 0.0 {
                    lo = mid;
                    hi = mid;
                    break;
                }
                if (fm > 0.0) == (flo > 0.0) {
                    lo = mid;
                    flo = fm;
                } else {
                    hi = mid;
                }
            }
            hits.push(dot(theta, self.position_at(0.5 * (lo + hi)) - x));
        }
        if hits.is_empty() {
            return Err(Error::NoIntersection { x: x.re, y: x.im });
        }
        let fwd = hits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let back = hits.iter().cloned().fold(f64::INFINITY, f64::min);
        Ok((fwd, -back))
    }

    /// Boundary point hit by the ray `xi + l e^{i phi}`, `l >= 0`.
    pub fn radial_parametrization(&self, xi: Point, phi: f64) -> Result<(f64, Point)> {
        let chord = self.cast_chord(xi, Complex64::from_polar(1.0, phi))?;
        if !chord.tau_plus.is_finite() {
            return Err(Error::NoIntersection { x: xi.re, y: xi.im });
        }
        Ok((chord.tau_plus, chord.end_plus))
    }

    /// Jump of the angular derivative of the chord length at a boundary node
    /// across the tangential direction, by one-sided differences of step `h_phi`.
    pub fn tau_angular_jump(&self, node: usize, h_phi: f64) -> Result<f64> {
        let z0 = self.nodes[node].position;
        let phi0 = self.nodes[node].tangent.arg();
        let tau = |phi: f64| -> Result<f64> { Ok(self.cast_chord(z0, Complex64::from_polar(1.0, phi))?.length()) };
        let right = tau(phi0 + h_phi)?;
        let left = tau(phi0 - h_phi)?;
        let center = tau(phi0)?;
        Ok((right - center) / h_phi - (center - left) / h_phi)
    }

    pub fn classify(&self, node: usize, theta: Complex64, tol: f64) -> Orientation {
        let d = dot(self.nodes[node].normal, theta);
        if d > tol {
            Orientation::Outgoing
        } else if d < -tol {
            Orientation::Incoming
        } else {
            Orientation::Tangential
        }
    }

    /// Parameter of a point lying on the boundary.
    pub fn parameter_of(&self, p: Point) -> f64 {
        let wrap = |t: f64| t.rem_euclid(2.0 * PI);
        match &self.kind {
            BoundaryKind::UnitDisk => wrap(p.arg()),
            BoundaryKind::Ellipse { a, b } => wrap((p.im / b).atan2(p.re / a)),
            BoundaryKind::Table { .. } => {
                let k = (0..self.nodes.len())
                    .min_by(|&i, &j| {
                        let di = (self.nodes[i].position - p).norm_sqr();
                        let dj = (self.nodes[j].position - p).norm_sqr();
                        di.partial_cmp(&dj).unwrap()
                    })
                    .unwrap_or(0);
                let mut t = self.nodes[k].param;
                for _ in 0..20 {
                    let nd = self.node_at(t);
                    let r = nd.position - p;
                    let v = nd.velocity();
                    let step = dot(v, r) / v.norm_sqr();
                    t -= step;
                    if step.abs() < 1e-15 {
                        break;
                    }
                }
                wrap(t)
            }
        }
    }
}

/// Real dot product of two plane vectors.
pub fn dot(a: Complex64, b: Complex64) -> f64 {
    a.re * b.re + a.im * b.im
}

/// z-component of the cross product `a × b`.
pub fn cross(a: Complex64, b: Complex64) -> f64 {
    a.re * b.im - a.im * b.re
}

/// Signed distance `x · θ^⊥` with `θ^⊥ = iθ`.
pub fn signed_distance(x: Point, theta: Complex64) -> f64 {
    dot(x, Complex64::i() * theta)
}

fn signed_area(points: &[Point]) -> f64 {
    let n = points.len();
    0.5 * (0..n).map(|k| cross(points[k], points[(k + 1) % n])).sum::<f64>()
}

/// Roots of `|x + tθ|` on the ellipse, as (forward, backward) distances.
fn quadratic_hits(x: Point, theta: Complex64, a: f64, b: f64) -> (f64, f64) {
    let (ia2, ib2) = (1.0 / (a * a), 1.0 / (b * b));
    let qa = theta.re * theta.re * ia2 + theta.im * theta.im * ib2;
    let qb = 2.0 * (x.re * theta.re * ia2 + x.im * theta.im * ib2);
    let qc = x.re * x.re * ia2 + x.im * x.im * ib2 - 1.0;
    let disc = (qb * qb - 4.0 * qa * qc).max(0.0);
    let q = -0.5 * (qb + qb.signum() * disc.sqrt());
    let (r1, r2) = if q == 0.0 {
        let r = (-qc / qa).max(0.0).sqrt();
        (r, -r)
    } else {
        (q / qa, qc / q)
    };
    (r1.max(r2), -r1.min(r2))
}

/// Periodic cubic spline through uniformly parametrized points on `[0, 2π)`.
#[derive(Clone, Debug)]
struct PeriodicSpline {
    points: Vec<Point>,
    second: Vec<Complex64>,
    h: f64,
}

impl PeriodicSpline {
    fn new(points: &[Point]) -> Self {
        let m = points.len();
        let h = 2.0 * PI / m as f64;
        let mut rhs: Vec<Complex64> = (0..m)
            .map(|j| (points[(j + 1) % m] - 2.0 * points[j] + points[(j + m - 1) % m]) * (6.0 / (h * h)))
            .collect();
        // circulant system M[j-1] + 4 M[j] + M[j+1] = rhs[j]
        let mut planner = FftPlanner::new();
        planner.plan_fft_forward(m).process(&mut rhs);
        for (k, v) in rhs.iter_mut().enumerate() {
            *v /= 4.0 + 2.0 * (2.0 * PI * k as f64 / m as f64).cos();
        }
        planner.plan_fft_inverse(m).process(&mut rhs);
        let second = rhs.into_iter().map(|v| v / m as f64).collect();
        PeriodicSpline { points: points.to_vec(), second, h }
    }

    /// Position, first and second derivative at `t`.
    fn eval(&self, t: f64) -> (Complex64, Complex64, Complex64) {
        let m = self.points.len();
        let s = t.rem_euclid(2.0 * PI) / self.h;
        let j = (s.floor() as usize).min(m - 1);
        let u = s - j as f64;
        let (p0, p1) = (self.points[j], self.points[(j + 1) % m]);
        let (m0, m1) = (self.second[j], self.second[(j + 1) % m]);
        let h = self.h;
        let v = 1.0 - u;
        let pos = p0 * v + p1 * u + (m0 * (v * v * v - v) + m1 * (u * u * u - u)) * (h * h / 6.0);
        let d1 = (p1 - p0) / h + (m1 * (3.0 * u * u - 1.0) - m0 * (3.0 * v * v - 1.0)) * (h / 6.0);
        let d2 = m0 * v + m1 * u;
        (pos, d1, d2)
    }
}
