//! Attenuated machinery: the integrating factor `h = Da - ½(I - iH)Ra`, the Fourier
//! factors of `e^{∓h}`, the attenuated Hilbert transform and range residual, and
//! recovery of the source from attenuated data.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::bukhgeim::{
    cauchy_derivatives, cauchy_point, hilbert_h0, op_g_boundary, op_s, range_residual_0, reconstruct_f0, RangeResidual, Reconstruction,
};
use crate::error::{Error, Result};
use crate::geometry::{signed_distance, ConvexBoundary, Point};
use crate::harmonics::{convolve, convolve_seq, convolve_trace, negative_mode_max, project_plus, AngularGrid, ModeSeq, ModeTrace};
use crate::xray::{divergence_beam, radon_full_line, QuadRule, QuadSettings, ScalarField};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

/// Step of the centered differences used for `∂β`.
const FACTOR_FD_STEP: f64 = 1e-3;

/// `(1/π) p.v. ∫ f(t)/(s - t) dt` on a uniform grid, with samples outside the grid taken as zero.
///
/// The singularity is cancelled by pairing `t = s ± u`; the `u = 0` end of the trapezoid
/// rule contributes the central difference.
pub fn finite_hilbert(samples: &[f64]) -> Result<Vec<f64>> {
    FiniteHilbert::new(samples.len()).apply(samples)
}

struct FiniteHilbert {
    n: usize,
    len: usize,
    kernel: Vec<Complex64>,
}

impl FiniteHilbert {
    fn new(n: usize) -> Self {
        let len = (2 * n).next_power_of_two().max(2);
        let mut kernel = vec![ZERO; len];
        for k in 1..n {
            let c = if k == 1 { 1.5 } else { 1.0 / k as f64 } / PI;
            kernel[k] = Complex64::new(c, 0.0);
            kernel[len - k] = Complex64::new(-c, 0.0);
        }
        FftPlanner::new().plan_fft_forward(len).process(&mut kernel);
        FiniteHilbert { n, len, kernel }
    }

    fn apply(&self, samples: &[f64]) -> Result<Vec<f64>> {
        let n = self.n;
        if samples.len() != n {
            return Err(Error::GridMismatch(format!("{} samples for a {n}-point transform", samples.len())));
        }
        if n == 0 {
            return Ok(Vec::new());
        }
        if samples[0] != 0.0 || samples[n - 1] != 0.0 {
            return Err(Error::SupportTouchesEdge { left: samples[0], right: samples[n - 1] });
        }
        let mut planner = FftPlanner::new();
        let mut buf: Vec<Complex64> = samples.iter().map(|&v| Complex64::new(v, 0.0)).chain(std::iter::repeat(ZERO)).take(self.len).collect();
        planner.plan_fft_forward(self.len).process(&mut buf);
        buf.iter_mut().zip(&self.kernel).for_each(|(b, k)| *b *= k);
        planner.plan_fft_inverse(self.len).process(&mut buf);
        Ok(buf[..n].iter().map(|v| v.re / self.len as f64).collect())
    }
}

/// Parameters for building the integrating factor.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FactorSettings {
    /// Samples of the `s`-grid for the finite Hilbert transform.
    pub s_points: usize,
    /// Half-width of the `s`-grid as a multiple of the domain radius.
    pub extent: f64,
    /// Largest admissible negative Fourier mode of `e^{±h}`.
    pub tol_neg: f64,
    pub quad: QuadSettings,
}

impl Default for FactorSettings {
    fn default() -> Self {
        FactorSettings { s_points: 2048, extent: 1.2, tol_neg: 1e-6, quad: QuadSettings::default() }
    }
}

/// `Ra(·, θ)` and `HRa(·, θ)` on the uniform grid `s0 + k·ds` for one direction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineTable {
    pub s0: f64,
    pub ds: f64,
    pub ra: Vec<f64>,
    pub hra: Vec<f64>,
}

impl LineTable {
    /// Four-point Lagrange interpolation of `HRa` at `s`.
    pub fn hilbert_at(&self, s: f64) -> f64 {
        let n = self.hra.len();
        let x = (s - self.s0) / self.ds;
        let base = (x.floor() as isize - 1).clamp(0, n as isize - 4) as usize;
        let t = x - base as f64;
        let mut acc = 0.0;
        for j in 0..4 {
            let mut w = 1.0;
            for m in 0..4 {
                if m != j {
                    w *= (t - m as f64) / (j as f64 - m as f64);
                }
            }
            acc += w * self.hra[base + j];
        }
        acc
    }
}

/// `h` on angular samples at one point, with the modes of `e^{-h}` and `e^{h}`.
#[derive(Clone, Debug, PartialEq)]
pub struct PointFactors {
    pub h: Vec<Complex64>,
    pub alpha: ModeSeq,
    pub beta: ModeSeq,
    /// Largest negative mode of `e^{-h}` and `e^{h}`.
    pub negative_max: f64,
}

/// Integrating factor on the boundary nodes, plus what is needed to evaluate it inside.
#[derive(Clone, Debug)]
pub struct IntegratingFactor {
    boundary: Arc<ConvexBoundary>,
    angular: AngularGrid,
    n_modes: usize,
    settings: FactorSettings,
    lines: Vec<LineTable>,
    h_values: Vec<Vec<Complex64>>,
    alpha: Vec<ModeSeq>,
    beta: Vec<ModeSeq>,
    identity: bool,
}

impl IntegratingFactor {
    /// Factor of a vanishing attenuation: `h ≡ 0`, `α = β = ⟨1, 0, …⟩`.
    pub fn identity(boundary: Arc<ConvexBoundary>, angular: AngularGrid, n_modes: usize, settings: FactorSettings) -> Self {
        let n = boundary.n_nodes();
        IntegratingFactor {
            boundary,
            angular,
            n_modes,
            settings,
            lines: Vec::new(),
            h_values: vec![vec![ZERO; angular.n_angles()]; n],
            alpha: vec![ModeSeq::identity(n_modes); n],
            beta: vec![ModeSeq::identity(n_modes); n],
            identity: true,
        }
    }

    /// Reassembles a factor from stored parts, rechecking shapes.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        boundary: Arc<ConvexBoundary>,
        angular: AngularGrid,
        n_modes: usize,
        settings: FactorSettings,
        lines: Vec<LineTable>,
        h_values: Vec<Vec<Complex64>>,
        alpha: Vec<ModeSeq>,
        beta: Vec<ModeSeq>,
        identity: bool,
    ) -> Result<Self> {
        let n = boundary.n_nodes();
        let m = angular.n_angles();
        let ok = h_values.len() == n
            && h_values.iter().all(|r| r.len() == m)
            && alpha.len() == n
            && beta.len() == n
            && alpha.iter().chain(&beta).all(|s| s.coeffs.len() == n_modes + 1)
            && (identity || lines.len() == m);
        if !ok {
            return Err(Error::GridMismatch("integrating factor parts do not match the grids".into()));
        }
        Ok(IntegratingFactor { boundary, angular, n_modes, settings, lines, h_values, alpha, beta, identity })
    }

    pub fn boundary(&self) -> &Arc<ConvexBoundary> {
        &self.boundary
    }

    pub fn angular(&self) -> AngularGrid {
        self.angular
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn settings(&self) -> FactorSettings {
        self.settings
    }

    pub fn lines(&self) -> &[LineTable] {
        &self.lines
    }

    /// `h(w_i, φ_j)`, node-major.
    pub fn h_values(&self) -> &[Vec<Complex64>] {
        &self.h_values
    }

    pub fn alpha(&self) -> &[ModeSeq] {
        &self.alpha
    }

    pub fn beta(&self) -> &[ModeSeq] {
        &self.beta
    }

    pub fn is_identity(&self) -> bool {
        self.identity
    }

    /// `max_i ‖α ∗ β - ⟨1, 0, …⟩‖_∞` over boundary nodes.
    pub fn product_deviation(&self) -> f64 {
        self.alpha
            .iter()
            .zip(&self.beta)
            .map(|(a, b)| {
                convolve_seq(&a.coeffs, &b.coeffs)
                    .iter()
                    .enumerate()
                    .map(|(k, v)| if k == 0 { (v - 1.0).norm() } else { v.norm() })
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max)
    }

    /// `h(z, φ_j)` for every grid direction.
    pub fn h_at(&self, a: &ScalarField, z: Point) -> Result<Vec<Complex64>> {
        if self.identity {
            return Ok(vec![ZERO; self.angular.n_angles()]);
        }
        let rule = QuadRule::new(self.settings.quad)?;
        (0..self.angular.n_angles())
            .map(|j| {
                let theta = self.angular.direction(j);
                let s = signed_distance(z, theta);
                let da = divergence_beam(a, &self.boundary, z, theta, &rule)?;
                let ra = radon_full_line(a, s, theta, &rule);
                Ok(Complex64::new(da - 0.5 * ra, 0.5 * self.lines[j].hilbert_at(s)))
            })
            .collect()
    }

    /// Factors at an arbitrary point of the closed domain.
    pub fn at_point(&self, a: &ScalarField, z: Point) -> Result<PointFactors> {
        factors_from_h(self.h_at(a, z)?, self.n_modes)
    }
}

fn factors_from_h(h: Vec<Complex64>, n_modes: usize) -> Result<PointFactors> {
    let minus: Vec<Complex64> = h.iter().map(|v| (-v).exp()).collect();
    let plus: Vec<Complex64> = h.iter().map(|v| v.exp()).collect();
    let negative_max = negative_mode_max(&minus, n_modes).max(negative_mode_max(&plus, n_modes));
    Ok(PointFactors { alpha: project_plus(&minus, n_modes)?, beta: project_plus(&plus, n_modes)?, negative_max, h })
}

/// Builds `h` on boundary nodes × directions and the modes of `e^{∓h}`.
pub fn build_h(
    a: &ScalarField,
    boundary: &Arc<ConvexBoundary>,
    angular: AngularGrid,
    n_modes: usize,
    settings: FactorSettings,
) -> Result<IntegratingFactor> {
    angular.check_resolution(n_modes)?;
    if a.is_zero() {
        return Ok(IntegratingFactor::identity(boundary.clone(), angular, n_modes, settings));
    }
    if settings.s_points < 8 || settings.extent <= 1.0 {
        return Err(Error::InvalidArgument("s-grid needs at least 8 points and extent above 1".into()));
    }
    let rule = QuadRule::new(settings.quad)?;
    let half = settings.extent * boundary.radius();
    let ds = 2.0 * half / (settings.s_points - 1) as f64;
    let hilbert = FiniteHilbert::new(settings.s_points);
    let lines = (0..angular.n_angles())
        .into_par_iter()
        .map(|j| {
            let theta = angular.direction(j);
            let ra: Vec<f64> = (0..settings.s_points).map(|k| radon_full_line(a, -half + k as f64 * ds, theta, &rule)).collect();
            let hra = hilbert.apply(&ra)?;
            Ok(LineTable { s0: -half, ds, ra, hra })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut factor = IntegratingFactor {
        boundary: boundary.clone(),
        angular,
        n_modes,
        settings,
        lines,
        h_values: Vec::new(),
        alpha: Vec::new(),
        beta: Vec::new(),
        identity: false,
    };
    let per_node = boundary
        .nodes()
        .par_iter()
        .map(|nd| factor.at_point(a, nd.position))
        .collect::<Result<Vec<_>>>()?;
    let worst = per_node.iter().map(|p| p.negative_max).fold(0.0, f64::max);
    log::debug!("integrating factor: largest negative mode {worst:.3e}");
    if worst > settings.tol_neg {
        return Err(Error::NonAnalyticFactor { max: worst, tol: settings.tol_neg });
    }
    for p in per_node {
        factor.h_values.push(p.h);
        factor.alpha.push(p.alpha);
        factor.beta.push(p.beta);
    }
    Ok(factor)
}

fn check_grid(g: &ModeTrace, factors: &IntegratingFactor) -> Result<()> {
    let same = Arc::ptr_eq(g.boundary(), factors.boundary())
        || (g.boundary().descriptor() == factors.boundary().descriptor() && g.n_nodes() == factors.boundary().n_nodes());
    if !same {
        return Err(Error::GridMismatch("trace and factors live on different boundaries".into()));
    }
    if g.n_modes() != factors.n_modes() {
        return Err(Error::GridMismatch(format!("trace has {} modes, factors {}", g.n_modes(), factors.n_modes())));
    }
    Ok(())
}

/// `H_a g = β ∗ H0(α ∗ g)`.
pub fn hilbert_ha(g: &ModeTrace, factors: &IntegratingFactor) -> Result<ModeTrace> {
    check_grid(g, factors)?;
    if factors.is_identity() {
        return Ok(hilbert_h0(g));
    }
    let inner = hilbert_h0(&convolve_trace(factors.alpha(), g)?);
    convolve_trace(factors.beta(), &inner)
}

/// Attenuated range residual and the gap between its two equivalent evaluations.
#[derive(Clone, Debug)]
pub struct AttenuatedResidual {
    pub residual: RangeResidual,
    /// `‖(g + iH_a g) - β ∗ (I - S - G)(α ∗ g)‖_{l1} / ‖g‖_{l1}`.
    pub route_gap: f64,
}

/// Residual tolerance between the two residual routes.
pub const ROUTE_TOL: f64 = 1e-8;

/// `(I + iH_a) g`, cross-checked against `β ∗ (I + iH0)(α ∗ g)`.
pub fn range_residual_a(g: &ModeTrace, factors: &IntegratingFactor) -> Result<AttenuatedResidual> {
    check_grid(g, factors)?;
    if factors.is_identity() {
        return Ok(AttenuatedResidual { residual: range_residual_0(g), route_gap: 0.0 });
    }
    let weighted = convolve_trace(factors.alpha(), g)?;
    let s = op_s(&weighted);
    let q = op_g_boundary(&weighted);
    let h0 = combine3(&weighted, &s, &q, |_, s, q| I * (s + q));
    let route_one = combine3(g, &convolve_trace(factors.beta(), &h0)?, g, |g, h, _| g + I * h);
    let inner = combine3(&weighted, &s, &q, |w, s, q| w - s - q);
    let route_two = convolve_trace(factors.beta(), &inner)?;
    let gap = route_one.axpy(Complex64::new(-1.0, 0.0), &route_two).norms().l1 / g.norms().l1.max(f64::MIN_POSITIVE);
    if gap > ROUTE_TOL {
        log::warn!("attenuated residual routes differ by {gap:.3e}");
    }
    let input = g.norms();
    Ok(AttenuatedResidual { residual: RangeResidual::from_parts(route_one, input), route_gap: gap })
}

fn combine3(a: &ModeTrace, b: &ModeTrace, c: &ModeTrace, f: impl Fn(Complex64, Complex64, Complex64) -> Complex64) -> ModeTrace {
    let rows = (0..=a.n_modes())
        .map(|k| (0..a.n_nodes()).map(|i| f(a.row(k)[i], b.row(k)[i], c.row(k)[i])).collect())
        .collect();
    ModeTrace::new(a.boundary().clone(), rows).expect("shapes agree")
}

/// `f = 2 Re ∂u_{-1} + a·u_0` with `u = β ∗ v` and `v` the Cauchy-built map of `α ∗ g`.
pub fn reconstruct_f_attenuated(
    g: &ModeTrace,
    factors: &IntegratingFactor,
    a: &ScalarField,
    points: &[Point],
    margin: f64,
    gate: f64,
) -> Result<Reconstruction> {
    check_grid(g, factors)?;
    if factors.is_identity() {
        return reconstruct_f0(g, points, margin, gate);
    }
    let residual = range_residual_a(g, factors)?.residual;
    let consistent = residual.is_consistent(gate);
    if !consistent {
        log::warn!("input fails the attenuated range test: relative residual {:.3e} above gate {gate:.3e}", residual.relative);
    }
    let n = factors.n_modes();
    let weighted = convolve_trace(factors.alpha(), g)?;
    let values = points
        .par_iter()
        .map(|&xi| {
            let v = cauchy_point(&weighted, xi, margin)?;
            let dv = cauchy_derivatives(&weighted, xi, n, margin)?;
            let beta = factors.at_point(a, xi)?.beta.coeffs;
            let shifted = |p: Point| factors.at_point(a, p).map(|f| f.beta.coeffs);
            let step = FACTOR_FD_STEP;
            let (xp, xm) = (shifted(xi + step)?, shifted(xi - step)?);
            let (yp, ym) = (shifted(xi + I * step)?, shifted(xi - I * step)?);
            let d_beta: Vec<Complex64> =
                (0..=n).map(|k| 0.5 * ((xp[k] - xm[k]) / (2.0 * step) - I * (yp[k] - ym[k]) / (2.0 * step))).collect();
            let mut du = ZERO;
            for k in 0..n {
                du += d_beta[k] * v[1 + k] + beta[k] * dv[1 + k];
            }
            let u0 = convolve(&beta, &v)[0];
            Ok(2.0 * du.re + a.eval(xi) * u0.re)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(Reconstruction { points: points.to_vec(), values, residual_relative: residual.relative, consistent })
}
