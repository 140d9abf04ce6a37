//! Forward modeling: phantoms, beam and line integrals, boundary sinograms.

use std::num::NonZeroUsize;
use std::str::FromStr;
use std::sync::Arc;

use gauss_quad::GaussLegendre;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{dot, ConvexBoundary, Point, TANGENT_TOL};
use crate::harmonics::{fourier_coefficients, AngularGrid};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PhantomKind {
    PolyBump,
    ShiftedPolyBump,
    GaussianTruncated,
    Zero,
}

impl PhantomKind {
    pub fn name(&self) -> &'static str {
        match self {
            PhantomKind::PolyBump => "poly-bump",
            PhantomKind::ShiftedPolyBump => "shifted-poly-bump",
            PhantomKind::GaussianTruncated => "gaussian-truncated",
            PhantomKind::Zero => "zero",
        }
    }

    fn default_support(&self) -> (Point, f64) {
        match self {
            PhantomKind::ShiftedPolyBump => (Complex64::new(0.3, 0.1), 0.5),
            _ => (Complex64::new(0.0, 0.0), 1.0),
        }
    }
}

impl FromStr for PhantomKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "poly-bump" => Ok(PhantomKind::PolyBump),
            "shifted-poly-bump" => Ok(PhantomKind::ShiftedPolyBump),
            "gaussian-truncated" => Ok(PhantomKind::GaussianTruncated),
            "zero" => Ok(PhantomKind::Zero),
            other => Err(Error::UnknownPhantom(other.to_string())),
        }
    }
}

/// Named phantom with optional overrides; the form phantoms take in config files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub name: String,
    #[serde(default = "one")]
    pub amplitude: f64,
    #[serde(default)]
    pub center: Option<[f64; 2]>,
    #[serde(default)]
    pub radius: Option<f64>,
}

fn one() -> f64 {
    1.0
}

impl PhantomSpec {
    pub fn named(name: &str) -> Self {
        PhantomSpec { name: name.to_string(), amplitude: 1.0, center: None, radius: None }
    }

    pub fn scaled(name: &str, amplitude: f64) -> Self {
        PhantomSpec { amplitude, ..Self::named(name) }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Phantom {
    pub kind: PhantomKind,
    pub amplitude: f64,
    pub center: Point,
    pub radius: f64,
}

impl Phantom {
    pub fn eval(&self, x: Point) -> f64 {
        if self.kind == PhantomKind::Zero {
            return 0.0;
        }
        let q = (x - self.center).norm_sqr() / (self.radius * self.radius);
        if q >= 1.0 {
            return 0.0;
        }
        let taper = (1.0 - q) * (1.0 - q);
        match self.kind {
            PhantomKind::GaussianTruncated => self.amplitude * (-4.5 * q).exp() * taper,
            _ => self.amplitude * taper,
        }
    }
}

/// Regular Cartesian samples with bilinear interpolation, zero outside the domain.
#[derive(Clone, Debug)]
pub struct GridField {
    pub origin: Point,
    pub hx: f64,
    pub hy: f64,
    pub nx: usize,
    pub ny: usize,
    /// Row-major, `values[iy * nx + ix]`.
    pub values: Vec<f64>,
    domain: Arc<ConvexBoundary>,
}

impl GridField {
    fn eval(&self, x: Point) -> f64 {
        if !self.domain.contains(x) {
            return 0.0;
        }
        let u = (x.re - self.origin.re) / self.hx;
        let v = (x.im - self.origin.im) / self.hy;
        if u < 0.0 || v < 0.0 || u > (self.nx - 1) as f64 || v > (self.ny - 1) as f64 {
            return 0.0;
        }
        let ix = (u.floor() as usize).min(self.nx - 2);
        let iy = (v.floor() as usize).min(self.ny - 2);
        let (fu, fv) = (u - ix as f64, v - iy as f64);
        let at = |i: usize, j: usize| self.values[j * self.nx + i];
        (1.0 - fu) * (1.0 - fv) * at(ix, iy)
            + fu * (1.0 - fv) * at(ix + 1, iy)
            + (1.0 - fu) * fv * at(ix, iy + 1)
            + fu * fv * at(ix + 1, iy + 1)
    }
}

#[derive(Clone, Debug)]
pub enum FieldBackend {
    Analytic(Phantom),
    Grid(GridField),
}

/// Real function on the closed domain, extended by zero outside.
#[derive(Clone, Debug)]
pub struct ScalarField {
    backend: FieldBackend,
    compact_support: bool,
    pub smoothness_note: String,
}

impl ScalarField {
    pub fn zero() -> Self {
        ScalarField {
            backend: FieldBackend::Analytic(Phantom {
                kind: PhantomKind::Zero,
                amplitude: 0.0,
                center: Complex64::new(0.0, 0.0),
                radius: 1.0,
            }),
            compact_support: true,
            smoothness_note: "identically zero".into(),
        }
    }

    /// Builds a named phantom and checks that its support stays in the domain.
    pub fn phantom(spec: &PhantomSpec, domain: &ConvexBoundary) -> Result<Self> {
        let kind: PhantomKind = spec.name.parse()?;
        let (c0, r0) = kind.default_support();
        let center = spec.center.map_or(c0, |c| Complex64::new(c[0], c[1]));
        let radius = spec.radius.unwrap_or(r0);
        if !(radius > 0.0) || !spec.amplitude.is_finite() {
            return Err(Error::InvalidArgument(format!("phantom '{}' needs a positive radius and finite amplitude", spec.name)));
        }
        let p = Phantom { kind, amplitude: spec.amplitude, center, radius };
        if kind != PhantomKind::Zero {
            for k in 0..256 {
                let q = center + Complex64::from_polar(radius, 2.0 * std::f64::consts::PI * k as f64 / 256.0);
                if !domain.contains(q) {
                    return Err(Error::SupportViolation { x: q.re, y: q.im });
                }
            }
        }
        let note = match kind {
            PhantomKind::Zero => "identically zero",
            PhantomKind::GaussianTruncated => "smooth inside, C^{1,1} at the support edge",
            _ => "C^{1,1}, vanishing with its gradient at the support edge",
        };
        Ok(ScalarField { backend: FieldBackend::Analytic(p), compact_support: true, smoothness_note: note.into() })
    }

    pub fn from_grid(
        origin: Point,
        (hx, hy): (f64, f64),
        (nx, ny): (usize, usize),
        values: Vec<f64>,
        domain: Arc<ConvexBoundary>,
    ) -> Result<Self> {
        if nx < 2 || ny < 2 || values.len() != nx * ny || !(hx > 0.0 && hy > 0.0) {
            return Err(Error::InvalidArgument(format!("grid field needs {nx}x{ny} values and positive spacing")));
        }
        let grid = GridField { origin, hx, hy, nx, ny, values, domain: domain.clone() };
        let vanishes = domain.nodes().iter().all(|nd| grid.eval(nd.position).abs() <= 1e-12);
        Ok(ScalarField {
            backend: FieldBackend::Grid(grid),
            compact_support: vanishes,
            smoothness_note: "bilinear samples".into(),
        })
    }

    pub fn backend(&self) -> &FieldBackend {
        &self.backend
    }

    pub fn is_compactly_supported(&self) -> bool {
        self.compact_support
    }

    pub fn is_zero(&self) -> bool {
        matches!(&self.backend, FieldBackend::Analytic(p) if p.kind == PhantomKind::Zero || p.amplitude == 0.0)
    }

    pub fn name(&self) -> String {
        match &self.backend {
            FieldBackend::Analytic(p) => {
                if p.kind == PhantomKind::Zero {
                    "zero".into()
                } else {
                    format!("{}(amp={}, c=({}, {}), r={})", p.kind.name(), p.amplitude, p.center.re, p.center.im, p.radius)
                }
            }
            FieldBackend::Grid(g) => format!("grid({}x{})", g.nx, g.ny),
        }
    }

    pub fn eval(&self, x: Point) -> f64 {
        match &self.backend {
            FieldBackend::Analytic(p) => p.eval(x),
            FieldBackend::Grid(g) => g.eval(x),
        }
    }

    /// Parameter interval of the line `p + tθ` outside which the field vanishes,
    /// or `None` when the line misses the support. Grid fields report their bounding box.
    pub fn support_segment(&self, p: Point, theta: Complex64) -> Option<(f64, f64)> {
        let (c, r) = match &self.backend {
            FieldBackend::Analytic(ph) => {
                if ph.kind == PhantomKind::Zero || ph.amplitude == 0.0 {
                    return None;
                }
                (ph.center, ph.radius)
            }
            FieldBackend::Grid(g) => {
                let lo = g.origin;
                let hi = g.origin + Complex64::new(g.hx * (g.nx - 1) as f64, g.hy * (g.ny - 1) as f64);
                ((lo + hi) * 0.5, (hi - lo).norm() * 0.5)
            }
        };
        let d = p - c;
        let b = dot(d, theta);
        let disc = b * b - (d.norm_sqr() - r * r);
        if disc <= 0.0 {
            return None;
        }
        let s = disc.sqrt();
        Some((-b - s, -b + s))
    }
}

/// Composite Gauss-Legendre settings along chords.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuadSettings {
    pub panels: usize,
    pub points: usize,
}

impl Default for QuadSettings {
    fn default() -> Self {
        QuadSettings { panels: 8, points: 8 }
    }
}

/// Composite Gauss-Legendre rule.
#[derive(Clone, Debug)]
pub struct QuadRule {
    settings: QuadSettings,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl QuadRule {
    pub fn new(settings: QuadSettings) -> Result<Self> {
        let points = NonZeroUsize::new(settings.points)
            .ok_or_else(|| Error::InvalidArgument("quadrature needs at least one point".into()))?;
        if settings.panels == 0 {
            return Err(Error::InvalidArgument("quadrature needs at least one panel".into()));
        }
        let gl = GaussLegendre::new(points);
        let (nodes, weights) = gl.as_node_weight_pairs().iter().cloned().unzip();
        Ok(QuadRule { settings, nodes, weights })
    }

    pub fn settings(&self) -> QuadSettings {
        self.settings
    }

    pub fn integrate(&self, a: f64, b: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
        if !(b > a) {
            return 0.0;
        }
        let width = (b - a) / self.settings.panels as f64;
        let half = 0.5 * width;
        let mut total = 0.0;
        for p in 0..self.settings.panels {
            let mid = a + (p as f64 + 0.5) * width;
            let mut acc = 0.0;
            for (x, w) in self.nodes.iter().zip(&self.weights) {
                acc += w * f(mid + half * x);
            }
            total += acc * half;
        }
        total
    }
}

fn clip(seg: Option<(f64, f64)>, lo: f64, hi: f64) -> Option<(f64, f64)> {
    seg.map(|(a, b)| (a.max(lo), b.min(hi))).filter(|(a, b)| b > a)
}

/// `∫_s^{hi} a(z + uθ) du`.
fn beam_from(a: &ScalarField, z: Point, theta: Complex64, s: f64, hi: f64, rule: &QuadRule) -> f64 {
    match clip(a.support_segment(z, theta), s, hi) {
        Some((lo, up)) => rule.integrate(lo, up, |u| a.eval(z + theta * u)),
        None => 0.0,
    }
}

/// `Da(x, θ) = ∫_0^{τ₊(x,θ)} a(x + tθ) dt`.
pub fn divergence_beam(a: &ScalarField, boundary: &ConvexBoundary, x: Point, theta: Complex64, rule: &QuadRule) -> Result<f64> {
    let chord = boundary.cast_chord(x, theta)?;
    if a.is_zero() {
        return Ok(0.0);
    }
    Ok(beam_from(a, x, chord.direction, 0.0, chord.tau_plus, rule))
}

/// `Ra(s, θ) = ∫ a(sθ^⊥ + tθ) dt` with `θ^⊥ = iθ`.
pub fn radon_full_line(a: &ScalarField, s: f64, theta: Complex64, rule: &QuadRule) -> f64 {
    let theta = theta / theta.norm();
    let p = Complex64::i() * theta * s;
    match a.support_segment(p, theta) {
        Some((lo, hi)) => rule.integrate(lo, hi, |t| a.eval(p + theta * t)),
        None => 0.0,
    }
}

/// `∫_{lo}^{hi} f(z + sθ) e^{-∫_s^{hi} a(z + uθ) du} ds`: attenuated integral over a chord
/// segment whose upper end `hi` lies on the boundary.
pub fn attenuated_ray(f: &ScalarField, a: &ScalarField, z: Point, theta: Complex64, lo: f64, hi: f64, rule: &QuadRule) -> f64 {
    let Some((s0, s1)) = clip(f.support_segment(z, theta), lo, hi) else {
        return 0.0;
    };
    if a.is_zero() {
        return rule.integrate(s0, s1, |s| f.eval(z + theta * s));
    }
    rule.integrate(s0, s1, |s| {
        let fv = f.eval(z + theta * s);
        if fv == 0.0 {
            0.0
        } else {
            fv * (-beam_from(a, z, theta, s, hi, rule)).exp()
        }
    })
}

/// Provenance of a sinogram.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SinogramMeta {
    pub source: String,
    pub attenuation: String,
    pub panels: usize,
    pub points: usize,
    /// Which of the admissible data sets was produced.
    pub convention: String,
}

/// Boundary data `g(z_i, θ_j)`, stored node-major.
#[derive(Clone, Debug)]
pub struct Sinogram {
    boundary: Arc<ConvexBoundary>,
    angular: AngularGrid,
    data: Vec<f64>,
    attenuated: bool,
    pub meta: SinogramMeta,
}

impl Sinogram {
    pub fn new(boundary: Arc<ConvexBoundary>, angular: AngularGrid, data: Vec<f64>, attenuated: bool, meta: SinogramMeta) -> Result<Self> {
        let need = boundary.n_nodes() * angular.n_angles();
        if data.len() != need {
            return Err(Error::GridMismatch(format!("sinogram has {} samples, grids need {need}", data.len())));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("sinogram has non-finite samples".into()));
        }
        Ok(Sinogram { boundary, angular, data, attenuated, meta })
    }

    pub fn boundary(&self) -> &Arc<ConvexBoundary> {
        &self.boundary
    }

    pub fn angular(&self) -> AngularGrid {
        self.angular
    }

    pub fn is_attenuated(&self) -> bool {
        self.attenuated
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Samples over all directions at node `i`.
    pub fn node_samples(&self, i: usize) -> &[f64] {
        let m = self.angular.n_angles();
        &self.data[i * m..(i + 1) * m]
    }

    pub fn value(&self, node: usize, angle: usize) -> f64 {
        self.data[node * self.angular.n_angles() + angle]
    }

    pub fn map_nodes(&self, f: impl Fn(usize, f64) -> f64) -> Sinogram {
        let m = self.angular.n_angles();
        let data = self.data.iter().enumerate().map(|(idx, &v)| f(idx / m, v)).collect();
        Sinogram { data, ..self.clone() }
    }
}

/// Canonical boundary data: the attenuated integral along the chord ending at an
/// outgoing pair, zero on incoming and tangential pairs.
pub fn forward_sinogram(
    f: &ScalarField,
    a: &ScalarField,
    boundary: &Arc<ConvexBoundary>,
    angular: AngularGrid,
    rule: &QuadRule,
) -> Result<Sinogram> {
    let m = angular.n_angles();
    let rows: Vec<Result<Vec<f64>>> = (0..boundary.n_nodes())
        .into_par_iter()
        .map(|i| {
            let node = boundary.node(i);
            (0..m)
                .map(|j| {
                    let theta = angular.direction(j);
                    if dot(node.normal, theta) <= TANGENT_TOL {
                        return Ok(0.0);
                    }
                    let chord = boundary.cast_chord(node.position, theta)?;
                    Ok(attenuated_ray(f, a, node.position, theta, -chord.tau_minus, chord.tau_plus, rule))
                })
                .collect()
        })
        .collect();
    let mut data = Vec::with_capacity(boundary.n_nodes() * m);
    for r in rows {
        data.extend(r?);
    }
    let s = rule.settings();
    let meta = SinogramMeta {
        source: f.name(),
        attenuation: a.name(),
        panels: s.panels,
        points: s.points,
        convention: "zero on incoming and tangential pairs".into(),
    };
    Sinogram::new(boundary.clone(), angular, data, !a.is_zero(), meta)
}

/// Adds `c · Re(z)` at every node and direction.
pub fn perturb_linear(g: &Sinogram, c: f64) -> Sinogram {
    let b = g.boundary().clone();
    g.map_nodes(|i, v| v + c * b.node(i).position.re)
}

/// Trigonometric interpolant of periodic samples on a uniform grid over `[0, 2π)`.
#[derive(Clone, Debug)]
pub struct TrigInterpolant {
    coeffs: Vec<Complex64>,
}

impl TrigInterpolant {
    pub fn new(samples: &[f64]) -> Self {
        let c: Vec<Complex64> = samples.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        TrigInterpolant { coeffs: fourier_coefficients(&c) }
    }

    pub fn eval(&self, t: f64) -> f64 {
        let n = self.coeffs.len();
        let mut acc = self.coeffs[0].re;
        for k in 1..n.div_ceil(2) {
            acc += 2.0 * (self.coeffs[k] * Complex64::from_polar(1.0, k as f64 * t)).re;
        }
        if n.is_multiple_of(2) {
            acc += (self.coeffs[n / 2] * (n as f64 / 2.0 * t).cos()).re;
        }
        acc
    }
}

/// Largest violation of `g(x⁺) - e^{-Da(x⁻)} g(x⁻) = ∫ f e^{-Da}` over probe chords.
///
/// Each probe is an interior point and a direction index; `g_at(z, j)` evaluates the
/// data at a boundary point `z` and direction `j`. The chord integral uses a finer
/// rule than the forward model.
pub fn radon_identity_defect(
    g_at: impl Fn(Point, usize) -> f64 + Sync,
    f: &ScalarField,
    a: &ScalarField,
    boundary: &ConvexBoundary,
    angular: AngularGrid,
    probes: &[(Point, usize)],
) -> Result<f64> {
    let fine = QuadRule::new(QuadSettings { panels: 12, points: 10 })?;
    let defects: Vec<Result<f64>> = probes
        .par_iter()
        .map(|&(x, j)| {
            let theta = angular.direction(j);
            let chord = boundary.cast_chord(x, theta)?;
            let through = beam_from(a, x, theta, -chord.tau_minus, chord.tau_plus, &fine);
            let integral = attenuated_ray(f, a, x, theta, -chord.tau_minus, chord.tau_plus, &fine);
            let lhs = g_at(chord.end_plus, j) - (-through).exp() * g_at(chord.end_minus, j);
            Ok((lhs - integral).abs())
        })
        .collect();
    let mut worst: f64 = 0.0;
    for d in defects {
        worst = worst.max(d?);
    }
    Ok(worst)
}

/// Random interior probes: points drawn uniformly from the domain's bounding disk
/// (kept if inside) and random grid directions.
pub fn interior_probes(boundary: &ConvexBoundary, angular: AngularGrid, n_probes: usize, seed: u64) -> Vec<(Point, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = boundary.radius();
    let mut out = Vec::with_capacity(n_probes);
    while out.len() < n_probes {
        let x = Complex64::new(rng.gen_range(-r..r), rng.gen_range(-r..r));
        if boundary.contains(x) && boundary.node_distance(x) > 1e-3 * r {
            out.push((x, rng.gen_range(0..angular.n_angles())));
        }
    }
    out
}

/// Checks a sinogram against the chord identity at random probes, interpolating
/// the data along the boundary in each probe direction.
pub fn verify_radon_identity(g: &Sinogram, f: &ScalarField, a: &ScalarField, n_probes: usize, seed: u64) -> Result<f64> {
    let b = g.boundary().clone();
    let m = g.angular().n_angles();
    let columns: Vec<TrigInterpolant> = (0..m)
        .map(|j| TrigInterpolant::new(&(0..b.n_nodes()).map(|i| g.value(i, j)).collect::<Vec<_>>()))
        .collect();
    let probes = interior_probes(&b, g.angular(), n_probes, seed);
    let g_at = |z: Point, j: usize| columns[j].eval(b.parameter_of(z));
    radon_identity_defect(g_at, f, a, &b, g.angular(), &probes)
}
