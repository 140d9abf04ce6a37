//! Cauchy-type operators on mode traces, the Hilbert transform `H0 = i(S + G)`,
//! the non-attenuated range residual and reconstruction of the source.
//!
//! All boundary integrals use the trapezoid rule on the uniform boundary
//! parameter. The principal value in `S` is taken by subtracting the density at
//! the singular node and using the spectral derivative of the density on the
//! diagonal.

use std::f64::consts::PI;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{ConvexBoundary, Point};
use crate::harmonics::{spectral_derivative, weighted_norms, ModeTrace, Norms};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

/// Default interior margin: three node spacings in the boundary parameter.
pub fn default_margin(n_nodes: usize) -> f64 {
    2.0 * PI * 3.0 / n_nodes as f64
}

/// Default relative-residual gate for treating data as consistent.
pub const DEFAULT_GATE: f64 = 0.05;

fn transpose(cols: Vec<Vec<Complex64>>, n_rows: usize) -> Vec<Vec<Complex64>> {
    (0..n_rows).map(|k| cols.iter().map(|c| c[k]).collect()).collect()
}

/// Nearest boundary node and its distance, with the margin check.
fn check_interior(boundary: &ConvexBoundary, xi: Point, margin: f64) -> Result<usize> {
    let (best, dist) = boundary
        .nodes()
        .iter()
        .enumerate()
        .map(|(k, nd)| (k, (nd.position - xi).norm()))
        .fold((0, f64::INFINITY), |acc, v| if v.1 < acc.1 { v } else { acc });
    if !boundary.contains(xi) || dist < margin {
        return Err(Error::TooCloseToBoundary { x: xi.re, y: xi.im, distance: dist, margin });
    }
    Ok(best)
}

/// `(Cg)_n(ξ) = (1/2πi) ∮ g_n(w)/(w - ξ) dw` at an interior point, per mode.
pub fn op_c(g: &ModeTrace, xi: Point, margin: f64) -> Result<Vec<Complex64>> {
    let b = g.boundary();
    let near = check_interior(b, xi, margin)?;
    let h = b.step();
    let kernel: Vec<Complex64> = b.nodes().iter().map(|nd| nd.velocity() / (nd.position - xi) * h / (2.0 * PI * I)).collect();
    Ok(g.rows()
        .iter()
        .map(|row| {
            let g0 = row[near];
            row.iter().zip(&kernel).map(|(v, c)| (v - g0) * c).sum::<Complex64>() + g0
        })
        .collect())
}

/// `(Sg)_n(ξ₀) = (1/πi) p.v. ∮ g_n(w)/(w - ξ₀) dw` at every boundary node.
pub fn op_s(g: &ModeTrace) -> ModeTrace {
    let b = g.boundary();
    let n = b.n_nodes();
    let h = b.step();
    let scale = h / (PI * I);
    let derivs: Vec<Vec<Complex64>> = g.rows().iter().map(|r| spectral_derivative(r)).collect();
    let cols: Vec<Vec<Complex64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let wi = b.node(i).position;
            let kernel: Vec<Complex64> = b
                .nodes()
                .iter()
                .enumerate()
                .map(|(k, nd)| if k == i { ZERO } else { nd.velocity() / (nd.position - wi) })
                .collect();
            g.rows()
                .iter()
                .zip(&derivs)
                .map(|(row, d)| {
                    let gi = row[i];
                    let mut acc = d[i];
                    for k in 0..n {
                        if k != i {
                            acc += (row[k] - gi) * kernel[k];
                        }
                    }
                    acc * scale + gi
                })
                .collect()
        })
        .collect();
    ModeTrace::from_rows_unchecked(b.clone(), transpose(cols, g.n_modes() + 1))
}

/// `Σ_k K_k Σ_{j≥1} g_{-(m+2j)}(w_k) r_k^j` for every stored `m`.
fn g_sum(g: &ModeTrace, weights: &[f64], ratios: &[Complex64]) -> Vec<Complex64> {
    let n_modes = g.n_modes();
    let mut out = vec![ZERO; n_modes + 1];
    let mut acc = vec![ZERO; n_modes + 3];
    for (k, (&wk, &r)) in weights.iter().zip(ratios).enumerate() {
        if wk == 0.0 {
            continue;
        }
        acc[n_modes + 1] = ZERO;
        acc[n_modes + 2] = ZERO;
        for m in (0..=n_modes).rev() {
            let next = if m + 2 <= n_modes { g.row(m + 2)[k] } else { ZERO };
            acc[m] = r * (next + acc[m + 2]);
            out[m] += acc[m] * wk;
        }
    }
    out
}

/// `(Gg)_n(ξ)` at a point of the closed domain. At a boundary node the kernel takes
/// its diagonal limit `κ|w'|/2`.
pub fn op_g(g: &ModeTrace, xi: Point) -> Vec<Complex64> {
    let b = g.boundary();
    if let Some(i) = b.nodes().iter().position(|nd| (nd.position - xi).norm() <= 1e-14 * (1.0 + xi.norm())) {
        return op_g_at_node(g, i);
    }
    let h = b.step();
    let (weights, ratios): (Vec<f64>, Vec<Complex64>) = b
        .nodes()
        .iter()
        .map(|nd| {
            let d = nd.position - xi;
            (2.0 / PI * (nd.velocity() / d).im * h, d.conj() / d)
        })
        .unzip();
    g_sum(g, &weights, &ratios)
}

fn op_g_at_node(g: &ModeTrace, i: usize) -> Vec<Complex64> {
    let b = g.boundary();
    let h = b.step();
    let ni = b.node(i);
    let (weights, ratios): (Vec<f64>, Vec<Complex64>) = b
        .nodes()
        .iter()
        .enumerate()
        .map(|(k, nd)| {
            if k == i {
                let v = nd.velocity();
                (2.0 / PI * (ni.curvature * ni.speed / 2.0) * h, v.conj() / v)
            } else {
                let d = nd.position - ni.position;
                (2.0 / PI * (nd.velocity() / d).im * h, d.conj() / d)
            }
        })
        .unzip();
    g_sum(g, &weights, &ratios)
}

/// `G` evaluated at every boundary node.
pub fn op_g_boundary(g: &ModeTrace) -> ModeTrace {
    let cols: Vec<Vec<Complex64>> = (0..g.n_nodes()).into_par_iter().map(|i| op_g_at_node(g, i)).collect();
    ModeTrace::from_rows_unchecked(g.boundary().clone(), transpose(cols, g.n_modes() + 1))
}

fn combine(a: &ModeTrace, b: &ModeTrace, f: impl Fn(Complex64, Complex64) -> Complex64) -> ModeTrace {
    let rows = a.rows().iter().zip(b.rows()).map(|(x, y)| x.iter().zip(y).map(|(&p, &q)| f(p, q)).collect()).collect();
    ModeTrace::from_rows_unchecked(a.boundary().clone(), rows)
}

/// `H0 g = i(Sg + Gg)`.
pub fn hilbert_h0(g: &ModeTrace) -> ModeTrace {
    combine(&op_s(g), &op_g_boundary(g), |s, q| I * (s + q))
}

/// Residual of the range condition and its norms.
#[derive(Clone, Debug)]
pub struct RangeResidual {
    pub residual: ModeTrace,
    pub norm_l1: f64,
    pub norm_l11: f64,
    /// `norm_l1(residual) / max(norm_l1(input), floor)`.
    pub relative: f64,
    pub per_mode_max: Vec<f64>,
}

/// Serializable summary of a [`RangeResidual`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub norm_l1: f64,
    pub norm_l11: f64,
    pub relative: f64,
    pub per_mode_max: Vec<f64>,
}

impl RangeResidual {
    pub(crate) fn from_parts(residual: ModeTrace, input: Norms) -> Self {
        let norms = weighted_norms(residual.rows());
        let per_mode_max = residual.rows().iter().map(|r| r.iter().map(|v| v.norm()).fold(0.0, f64::max)).collect();
        RangeResidual {
            norm_l1: norms.l1,
            norm_l11: norms.l11,
            relative: norms.l1 / input.l1.max(f64::MIN_POSITIVE),
            per_mode_max,
            residual,
        }
    }

    pub fn report(&self) -> ResidualReport {
        ResidualReport {
            norm_l1: self.norm_l1,
            norm_l11: self.norm_l11,
            relative: self.relative,
            per_mode_max: self.per_mode_max.clone(),
        }
    }

    pub fn is_consistent(&self, gate: f64) -> bool {
        self.relative <= gate
    }
}

/// `(I + iH0) g = (I - S - G) g`.
pub fn range_residual_0(g: &ModeTrace) -> RangeResidual {
    let s = op_s(g);
    let q = op_g_boundary(g);
    let rows = g
        .rows()
        .iter()
        .zip(s.rows())
        .zip(q.rows())
        .map(|((x, y), z)| x.iter().zip(y).zip(z).map(|((a, b), c)| a - b - c).collect())
        .collect();
    RangeResidual::from_parts(ModeTrace::from_rows_unchecked(g.boundary().clone(), rows), g.norms())
}

/// Modes `v_0, v_{-1}, …, v_{-N}` at interior points.
#[derive(Clone, Debug)]
pub struct ModeField {
    points: Vec<Point>,
    rows: Vec<Vec<Complex64>>,
}

impl ModeField {
    pub fn new(points: Vec<Point>, rows: Vec<Vec<Complex64>>) -> Result<Self> {
        if rows.is_empty() || rows.iter().any(|r| r.len() != points.len()) {
            return Err(Error::GridMismatch("mode field rows must match the point count".into()));
        }
        Ok(ModeField { points, rows })
    }

    pub fn from_fn(points: Vec<Point>, n_modes: usize, f: impl Fn(usize, Point) -> Complex64) -> Self {
        let rows = (0..=n_modes).map(|k| points.iter().map(|&p| f(k, p)).collect()).collect();
        ModeField { points, rows }
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn n_modes(&self) -> usize {
        self.rows.len() - 1
    }

    pub fn rows(&self) -> &[Vec<Complex64>] {
        &self.rows
    }

    pub fn row(&self, k: usize) -> &[Complex64] {
        &self.rows[k]
    }
}

/// `v_n(ξ) = ½(Gg)_n(ξ) + (Cg)_n(ξ)` at a single interior point.
pub fn cauchy_point(g: &ModeTrace, xi: Point, margin: f64) -> Result<Vec<Complex64>> {
    let c = op_c(g, xi, margin)?;
    let q = op_g(g, xi);
    Ok(c.iter().zip(&q).map(|(c, q)| c + 0.5 * q).collect())
}

/// The A-analytic map with boundary data `g`, evaluated at interior points.
pub fn cauchy_build(g: &ModeTrace, points: &[Point], margin: f64) -> Result<ModeField> {
    let cols: Vec<Result<Vec<Complex64>>> = points.par_iter().map(|&xi| cauchy_point(g, xi, margin)).collect();
    let cols = cols.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(ModeField { points: points.to_vec(), rows: transpose(cols, g.n_modes() + 1) })
}

/// Boundary values of the Cauchy-built map: `½Gg + ½(S + I)g`.
pub fn trace_plus(g: &ModeTrace) -> ModeTrace {
    let s = op_s(g);
    let q = op_g_boundary(g);
    let rows = g
        .rows()
        .iter()
        .zip(s.rows())
        .zip(q.rows())
        .map(|((x, y), z)| x.iter().zip(y).zip(z).map(|((a, b), c)| 0.5 * (c + b + a)).collect())
        .collect();
    ModeTrace::from_rows_unchecked(g.boundary().clone(), rows)
}

/// Regular grid `origin + (ix·h, iy·h)`, row-major in `iy`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CartesianPatch {
    pub origin: [f64; 2],
    pub h: f64,
    pub nx: usize,
    pub ny: usize,
}

impl CartesianPatch {
    pub fn points(&self) -> Vec<Point> {
        (0..self.ny)
            .flat_map(|iy| (0..self.nx).map(move |ix| Complex64::new(self.origin[0] + ix as f64 * self.h, self.origin[1] + iy as f64 * self.h)))
            .collect()
    }
}

/// `max |∂̄v_n + ∂v_{n-2}|` over the patch interior, by centered differences.
pub fn a_analyticity_defect(v: &ModeField, patch: &CartesianPatch) -> Result<f64> {
    let (nx, ny, h) = (patch.nx, patch.ny, patch.h);
    if v.points().len() != nx * ny || nx < 3 || ny < 3 {
        return Err(Error::GridMismatch(format!("field has {} points, patch {}x{}", v.points().len(), nx, ny)));
    }
    let n_modes = v.n_modes();
    let mut worst: f64 = 0.0;
    for m in 0..n_modes.saturating_sub(1) {
        let (a, b) = (v.row(m), v.row(m + 2));
        for iy in 1..ny - 1 {
            for ix in 1..nx - 1 {
                let at = |r: &[Complex64], dx: isize, dy: isize| r[(iy as isize + dy) as usize * nx + (ix as isize + dx) as usize];
                let ax = (at(a, 1, 0) - at(a, -1, 0)) / (2.0 * h);
                let ay = (at(a, 0, 1) - at(a, 0, -1)) / (2.0 * h);
                let bx = (at(b, 1, 0) - at(b, -1, 0)) / (2.0 * h);
                let by = (at(b, 0, 1) - at(b, 0, -1)) / (2.0 * h);
                let dbar_a = 0.5 * (ax + I * ay);
                let d_b = 0.5 * (bx - I * by);
                worst = worst.max((dbar_a + d_b).norm());
            }
        }
    }
    Ok(worst)
}

/// `∂v_{-m}(ξ)` for `m = 1..=m_max` by the differentiated Cauchy formula; entry 0 is unused.
pub fn cauchy_derivatives(g: &ModeTrace, xi: Point, m_max: usize, margin: f64) -> Result<Vec<Complex64>> {
    let b = g.boundary();
    check_interior(b, xi, margin)?;
    let n_modes = g.n_modes();
    let m_max = m_max.min(n_modes);
    let h = b.step();
    let j_max = n_modes / 2 + 1;
    let mut out = vec![ZERO; m_max + 1];
    let mut c = vec![ZERO; j_max + 1];
    let mut q_pow = vec![ZERO; j_max + 1];
    for (k, nd) in b.nodes().iter().enumerate() {
        let d = nd.position - xi;
        let q = d.conj() / d;
        let base = h / (d * d);
        let v = nd.velocity();
        q_pow[0] = Complex64::new(1.0, 0.0);
        for j in 1..=j_max {
            q_pow[j] = q_pow[j - 1] * q;
        }
        c[1] = v * base;
        for j in 2..=j_max {
            c[j] = (q_pow[j - 1] * v * j as f64 - q_pow[j - 2] * v.conj() * (j - 1) as f64) * base;
        }
        for (m, slot) in out.iter_mut().enumerate().skip(1) {
            let mut acc = ZERO;
            let mut j = 1;
            while m + 2 * j - 2 <= n_modes {
                acc += c[j] * g.row(m + 2 * j - 2)[k];
                j += 1;
            }
            *slot += acc;
        }
    }
    let scale = 1.0 / (2.0 * PI * I);
    out.iter_mut().skip(1).for_each(|v| *v *= scale);
    Ok(out)
}

/// Reconstructed source on a set of points with the consistency verdict of its input.
#[derive(Clone, Debug)]
pub struct Reconstruction {
    pub points: Vec<Point>,
    pub values: Vec<f64>,
    pub residual_relative: f64,
    pub consistent: bool,
}

impl Reconstruction {
    /// Relative L² error against `truth` over points with `|ξ| <= radius`.
    pub fn relative_l2_error(&self, truth: impl Fn(Point) -> f64, radius: f64) -> f64 {
        let (mut num, mut den) = (0.0, 0.0);
        for (p, v) in self.points.iter().zip(&self.values) {
            if p.norm() <= radius {
                let t = truth(*p);
                num += (v - t) * (v - t);
                den += t * t;
            }
        }
        (num / den.max(f64::MIN_POSITIVE)).sqrt()
    }
}

/// `f = 2 Re ∂v_{-1}` for non-attenuated data. Inputs above `gate` are reconstructed
/// anyway and flagged.
pub fn reconstruct_f0(g: &ModeTrace, points: &[Point], margin: f64, gate: f64) -> Result<Reconstruction> {
    let residual = range_residual_0(g);
    let consistent = residual.is_consistent(gate);
    if !consistent {
        log::warn!("input fails the range test: relative residual {:.3e} above gate {gate:.3e}", residual.relative);
    }
    let values: Vec<Result<f64>> = points.par_iter().map(|&xi| Ok(2.0 * cauchy_derivatives(g, xi, 1, margin)?[1].re)).collect();
    Ok(Reconstruction {
        points: points.to_vec(),
        values: values.into_iter().collect::<Result<_>>()?,
        residual_relative: residual.relative,
        consistent,
    })
}

/// `‖C g(ξ₀ - ε n(ξ₀)) - ½ g(ξ₀) - ½ (Sg)(ξ₀)‖_{l1}` at boundary node `node`.
pub fn plemelj_defect(g: &ModeTrace, s: &ModeTrace, node: usize, eps: f64, margin: f64) -> Result<f64> {
    let nd = g.boundary().node(node);
    let c = op_c(g, nd.position - nd.normal * eps, margin)?;
    Ok((0..=g.n_modes()).map(|k| (c[k] - 0.5 * g.row(k)[node] - 0.5 * s.row(k)[node]).norm()).sum())
}
