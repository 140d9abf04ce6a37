//! Angular Fourier analysis of boundary data.
//!
//! A mode trace stores the non-positive angular modes of a function on
//! `Γ × S¹`: row `k` holds `g_{-k}`, the coefficient of `e^{-ikφ}`, at every
//! boundary node.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::ConvexBoundary;
use crate::xray::Sinogram;

/// Uniform directions `φ_j = 2πj/M`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AngularGrid {
    n_angles: usize,
}

impl AngularGrid {
    pub fn new(n_angles: usize) -> Result<Self> {
        if n_angles < 4 {
            return Err(Error::InvalidArgument(format!("need at least 4 directions, got {n_angles}")));
        }
        Ok(AngularGrid { n_angles })
    }

    pub fn n_angles(&self) -> usize {
        self.n_angles
    }

    pub fn angle(&self, j: usize) -> f64 {
        2.0 * PI * j as f64 / self.n_angles as f64
    }

    /// Unit direction `e^{iφ_j}`.
    pub fn direction(&self, j: usize) -> Complex64 {
        Complex64::from_polar(1.0, self.angle(j))
    }

    /// Errors unless `M >= 2N + 2`.
    pub fn check_resolution(&self, n_modes: usize) -> Result<()> {
        let need = 2 * n_modes + 2;
        if self.n_angles < need {
            return Err(Error::GridTooCoarse { angles: self.n_angles, modes: n_modes, need });
        }
        Ok(())
    }
}

/// Non-negative index sequence `⟨c_0, c_1, …, c_N⟩` at one point.
#[derive(Clone, Debug, PartialEq)]
pub struct ModeSeq {
    pub coeffs: Vec<Complex64>,
}

impl ModeSeq {
    pub fn new(coeffs: Vec<Complex64>) -> Self {
        ModeSeq { coeffs }
    }

    /// `⟨1, 0, …, 0⟩` of length `n_modes + 1`.
    pub fn identity(n_modes: usize) -> Self {
        let mut coeffs = vec![Complex64::new(0.0, 0.0); n_modes + 1];
        coeffs[0] = Complex64::new(1.0, 0.0);
        ModeSeq { coeffs }
    }

    pub fn n_modes(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }
}

/// Modes `g_0, g_{-1}, …, g_{-N}` at every node of a boundary.
#[derive(Clone, Debug)]
pub struct ModeTrace {
    boundary: Arc<ConvexBoundary>,
    rows: Vec<Vec<Complex64>>,
}

impl ModeTrace {
    pub fn new(boundary: Arc<ConvexBoundary>, rows: Vec<Vec<Complex64>>) -> Result<Self> {
        if rows.len() < 2 {
            return Err(Error::InvalidArgument(format!("a mode trace needs at least 2 rows, got {}", rows.len())));
        }
        let n = boundary.n_nodes();
        for (k, r) in rows.iter().enumerate() {
            if r.len() != n {
                return Err(Error::GridMismatch(format!("row {k} has {} entries, boundary has {n} nodes", r.len())));
            }
            if r.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
                return Err(Error::InvalidArgument(format!("row {k} has non-finite entries")));
            }
        }
        Ok(ModeTrace { boundary, rows })
    }

    pub fn zeros(boundary: Arc<ConvexBoundary>, n_modes: usize) -> Self {
        let n = boundary.n_nodes();
        ModeTrace { boundary, rows: vec![vec![Complex64::new(0.0, 0.0); n]; n_modes + 1] }
    }

    /// Trace with `rows[k][i] = f(k, node i)`.
    pub fn from_fn(
        boundary: Arc<ConvexBoundary>,
        n_modes: usize,
        f: impl Fn(usize, &crate::geometry::BoundaryNode) -> Complex64,
    ) -> Self {
        let rows = (0..=n_modes).map(|k| boundary.nodes().iter().map(|nd| f(k, nd)).collect()).collect();
        ModeTrace { boundary, rows }
    }

    pub(crate) fn from_rows_unchecked(boundary: Arc<ConvexBoundary>, rows: Vec<Vec<Complex64>>) -> Self {
        ModeTrace { boundary, rows }
    }

    pub fn boundary(&self) -> &Arc<ConvexBoundary> {
        &self.boundary
    }

    pub fn n_modes(&self) -> usize {
        self.rows.len() - 1
    }

    pub fn n_nodes(&self) -> usize {
        self.boundary.n_nodes()
    }

    pub fn rows(&self) -> &[Vec<Complex64>] {
        &self.rows
    }

    /// Row `k` holds `g_{-k}`.
    pub fn row(&self, k: usize) -> &[Complex64] {
        &self.rows[k]
    }

    pub fn row_mut(&mut self, k: usize) -> &mut [Complex64] {
        &mut self.rows[k]
    }

    pub fn column(&self, node: usize) -> Vec<Complex64> {
        self.rows.iter().map(|r| r[node]).collect()
    }

    pub fn into_rows(self) -> Vec<Vec<Complex64>> {
        self.rows
    }

    pub fn norms(&self) -> Norms {
        weighted_norms(&self.rows)
    }

    /// `self + c·other`, on the same boundary.
    pub fn axpy(&self, c: Complex64, other: &ModeTrace) -> ModeTrace {
        let rows = self
            .rows
            .iter()
            .zip(&other.rows)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + c * y).collect())
            .collect();
        ModeTrace { boundary: self.boundary.clone(), rows }
    }

    pub fn scale(&self, c: Complex64) -> ModeTrace {
        let rows = self.rows.iter().map(|r| r.iter().map(|x| x * c).collect()).collect();
        ModeTrace { boundary: self.boundary.clone(), rows }
    }

    pub fn same_grid(&self, other: &ModeTrace) -> bool {
        self.n_modes() == other.n_modes()
            && (Arc::ptr_eq(&self.boundary, &other.boundary) || self.boundary.descriptor() == other.boundary.descriptor())
    }
}

/// Truncated weighted norms of a mode array (rows = modes, columns = points).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Norms {
    pub l1: f64,
    pub l11: f64,
    pub l12: f64,
}

/// `sup_points Σ_k k^p |v_{-k}|` for `p = 0, 1, 2`.
pub fn weighted_norms(rows: &[Vec<Complex64>]) -> Norms {
    let n = rows.first().map_or(0, |r| r.len());
    let mut out = Norms { l1: 0.0, l11: 0.0, l12: 0.0 };
    for i in 0..n {
        let (mut s0, mut s1, mut s2) = (0.0, 0.0, 0.0);
        for (k, r) in rows.iter().enumerate() {
            let a = r[i].norm();
            let kf = k as f64;
            s0 += a;
            s1 += kf * a;
            s2 += kf * kf * a;
        }
        out.l1 = out.l1.max(s0);
        out.l11 = out.l11.max(s1);
        out.l12 = out.l12.max(s2);
    }
    out
}

fn forward_plan(len: usize) -> Arc<dyn Fft<f64>> {
    FftPlanner::new().plan_fft_forward(len)
}

/// All discrete Fourier coefficients: entry `k` multiplies `e^{ikφ}` (indices mod M).
pub fn fourier_coefficients(samples: &[Complex64]) -> Vec<Complex64> {
    let m = samples.len();
    let mut buf = samples.to_vec();
    forward_plan(m).process(&mut buf);
    let scale = 1.0 / m as f64;
    buf.iter_mut().for_each(|v| *v *= scale);
    buf
}

/// `P⁻` of a sinogram: row `k` gets the coefficient of `e^{-ikφ}` at each node.
pub fn project_minus(g: &Sinogram, n_modes: usize) -> Result<ModeTrace> {
    let m = g.angular().n_angles();
    g.angular().check_resolution(n_modes)?;
    let fft = forward_plan(m);
    let n = g.boundary().n_nodes();
    let cols: Vec<Vec<Complex64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut buf: Vec<Complex64> = g.node_samples(i).iter().map(|&v| Complex64::new(v, 0.0)).collect();
            fft.process(&mut buf);
            (0..=n_modes).map(|k| buf[(m - k) % m] / m as f64).collect()
        })
        .collect();
    let rows = (0..=n_modes).map(|k| cols.iter().map(|c| c[k]).collect()).collect();
    ModeTrace::new(g.boundary().clone(), rows)
}

/// `P⁺` of angular samples at one point: coefficients of `e^{ikφ}`, `k = 0..N`.
pub fn project_plus(samples: &[Complex64], n_modes: usize) -> Result<ModeSeq> {
    AngularGrid::new(samples.len())?.check_resolution(n_modes)?;
    let c = fourier_coefficients(samples);
    Ok(ModeSeq::new(c[..=n_modes].to_vec()))
}

/// Largest `|c_{-k}|`, `k = 1..N`, of angular samples.
pub fn negative_mode_max(samples: &[Complex64], n_modes: usize) -> f64 {
    let m = samples.len();
    let c = fourier_coefficients(samples);
    (1..=n_modes.min(m / 2)).map(|k| c[m - k].norm()).fold(0.0, f64::max)
}

/// `g_0 + 2 Re Σ_{n≥1} g_{-n} e^{-inφ}`.
pub fn assemble_real(modes: &[Complex64], phi: f64) -> f64 {
    let mut acc = modes.first().map_or(0.0, |g| g.re);
    for (n, g) in modes.iter().enumerate().skip(1) {
        acc += 2.0 * (g * Complex64::from_polar(1.0, -(n as f64) * phi)).re;
    }
    acc
}

/// `(a ∗ g)_{-m} = Σ_k a_k g_{-(m+k)}` over stored indices; `g` holds `g_0, g_{-1}, …`.
pub fn convolve(a: &[Complex64], g: &[Complex64]) -> Vec<Complex64> {
    let n = g.len();
    (0..n)
        .map(|m| {
            let mut acc = Complex64::new(0.0, 0.0);
            for (k, ak) in a.iter().enumerate().take(n - m) {
                acc += ak * g[m + k];
            }
            acc
        })
        .collect()
}

/// Product of two non-negative index sequences, truncated to the shorter length.
pub fn convolve_seq(a: &[Complex64], b: &[Complex64]) -> Vec<Complex64> {
    let n = a.len().min(b.len());
    (0..n)
        .map(|m| {
            let mut acc = Complex64::new(0.0, 0.0);
            for k in 0..=m {
                acc += a[k] * b[m - k];
            }
            acc
        })
        .collect()
}

/// Applies a per-node sequence to a trace by [`convolve`].
pub fn convolve_trace(factors: &[ModeSeq], g: &ModeTrace) -> Result<ModeTrace> {
    if factors.len() != g.n_nodes() {
        return Err(Error::GridMismatch(format!("{} factor sequences for {} nodes", factors.len(), g.n_nodes())));
    }
    let cols: Vec<Vec<Complex64>> =
        (0..g.n_nodes()).into_par_iter().map(|i| convolve(&factors[i].coeffs, &g.column(i))).collect();
    let rows = (0..=g.n_modes()).map(|k| cols.iter().map(|c| c[k]).collect()).collect();
    Ok(ModeTrace::from_rows_unchecked(g.boundary().clone(), rows))
}

/// Derivative with respect to the uniform parameter on `[0, 2π)` of periodic samples.
pub fn spectral_derivative(values: &[Complex64]) -> Vec<Complex64> {
    let n = values.len();
    let mut planner = FftPlanner::new();
    let mut buf = values.to_vec();
    planner.plan_fft_forward(n).process(&mut buf);
    for (k, v) in buf.iter_mut().enumerate() {
        let freq = if 2 * k < n {
            k as f64
        } else if 2 * k == n {
            0.0
        } else {
            k as f64 - n as f64
        };
        *v *= Complex64::new(0.0, freq / n as f64);
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    buf
}

/// Both sides of the two index-shift summation identities for a sequence `c_1, c_2, …`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummationIdentities {
    /// `Σ_{k≥1} Σ_{n≥0} k c_{k+n}`
    pub lhs_i: f64,
    /// `Σ_j j(j+1)/2 c_j`
    pub rhs_i: f64,
    /// `Σ_{k≥1} Σ_{n≥0} c_{k+n}`
    pub lhs_ii: f64,
    /// `Σ_j j c_j`
    pub rhs_ii: f64,
}

/// `c[i]` is `c_{i+1}`. Left sides by double loop, right sides by a weighted single loop.
pub fn summation_identities(c: &[f64]) -> Result<SummationIdentities> {
    if let Some((index, &value)) = c.iter().enumerate().find(|(_, v)| !(**v >= 0.0)) {
        return Err(Error::NegativeEntry { index, value });
    }
    let len = c.len();
    let at = |j: usize| c[j - 1];
    let (mut lhs_i, mut lhs_ii) = (0.0, 0.0);
    for k in 1..=len {
        for n in 0..=(len - k) {
            lhs_i += k as f64 * at(k + n);
            lhs_ii += at(k + n);
        }
    }
    let (mut rhs_i, mut rhs_ii) = (0.0, 0.0);
    for j in 1..=len {
        let jf = j as f64;
        rhs_i += jf * (jf + 1.0) / 2.0 * at(j);
        rhs_ii += jf * at(j);
    }
    Ok(SummationIdentities { lhs_i, rhs_i, lhs_ii, rhs_ii })
}

/// Share of `Σ k^p |g_{-k}|` carried by the upper half of the stored modes, worst node.
///
/// Values near 1 mean the truncation at `N` cuts into significant content.
pub fn truncation_tail_ratio(g: &ModeTrace, order: i32) -> f64 {
    let n_modes = g.n_modes();
    let half = n_modes / 2;
    (0..g.n_nodes())
        .map(|i| {
            let (mut total, mut tail) = (0.0, 0.0);
            for k in 1..=n_modes {
                let v = (k as f64).powi(order) * g.row(k)[i].norm();
                total += v;
                if k > half {
                    tail += v;
                }
            }
            if total > 0.0 {
                tail / total
            } else {
                0.0
            }
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::BoundaryKind;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn disk(n: usize) -> Arc<ConvexBoundary> {
        Arc::new(ConvexBoundary::new(BoundaryKind::UnitDisk, n).unwrap())
    }

    fn sino(f: impl Fn(f64) -> f64, m: usize) -> Sinogram {
        let b = disk(16);
        let ang = AngularGrid::new(m).unwrap();
        let data = (0..16).flat_map(|_| (0..m).map(|j| f(ang.angle(j))).collect::<Vec<_>>()).collect();
        Sinogram::new(b, ang, data, false, Default::default()).unwrap()
    }

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn project_minus_examples() {
        let t = project_minus(&sino(|p| p.cos(), 16), 4).unwrap();
        for i in 0..16 {
            assert!(t.row(0)[i].norm() < 1e-15);
            assert!((t.row(1)[i] - c(0.5, 0.0)).norm() < 1e-15);
            for k in 2..=4 {
                assert!(t.row(k)[i].norm() < 1e-15);
            }
        }
        let t = project_minus(&sino(|_| 1.0, 16), 4).unwrap();
        assert!((t.row(0)[3] - c(1.0, 0.0)).norm() < 1e-15);
        assert!((1..=4).all(|k| t.row(k)[3].norm() < 1e-15));
        let t = project_minus(&sino(|p| (2.0 * p).sin(), 16), 4).unwrap();
        assert!((t.row(2)[5] - c(0.0, 0.5)).norm() < 1e-15);
        assert!([0, 1, 3, 4].iter().all(|&k| t.row(k)[5].norm() < 1e-15));
        assert!(matches!(project_minus(&sino(|_| 1.0, 16), 8), Err(Error::GridTooCoarse { .. })));
    }

    #[test]
    fn project_plus_examples() {
        let m = 16;
        let e: Vec<Complex64> = (0..m).map(|j| Complex64::from_polar(1.0, 2.0 * PI * j as f64 / m as f64)).collect();
        let s = project_plus(&e, 4).unwrap();
        assert!((s.coeffs[1] - c(1.0, 0.0)).norm() < 1e-15);
        assert!([0, 2, 3, 4].iter().all(|&k| s.coeffs[k].norm() < 1e-15));
        let s = project_plus(&vec![c(1.0, 0.0); m], 4).unwrap();
        assert_eq!(s.coeffs[0], c(1.0, 0.0));
    }

    #[test]
    fn assemble_examples() {
        assert_eq!(assemble_real(&[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)], 0.4), 1.0);
        for phi in [0.0, 0.3, 2.0, 5.5] {
            assert!((assemble_real(&[c(0.0, 0.0), c(0.5, 0.0)], phi) - phi.cos()).abs() < 1e-15);
        }
    }

    #[test]
    fn round_trip_band_limited() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n_modes = 6;
        let m = 32;
        let modes: Vec<Vec<Complex64>> =
            (0..16).map(|_| (0..=n_modes).map(|k| if k == 0 { c(rng.gen(), 0.0) } else { c(rng.gen(), rng.gen()) }).collect()).collect();
        let ang = AngularGrid::new(m).unwrap();
        let data = modes.iter().flat_map(|md| (0..m).map(|j| assemble_real(md, ang.angle(j))).collect::<Vec<_>>()).collect();
        let s = Sinogram::new(disk(16), ang, data, false, Default::default()).unwrap();
        let t = project_minus(&s, n_modes).unwrap();
        for i in 0..16 {
            for k in 0..=n_modes {
                assert!((t.row(k)[i] - modes[i][k]).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn convolution_examples() {
        let g: Vec<Complex64> = (0..5).map(|k| c(k as f64 + 1.0, -(k as f64))).collect();
        assert_eq!(convolve(&ModeSeq::identity(4).coeffs, &g), g);
        let shift = vec![c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)];
        let out = convolve(&shift, &g);
        assert_eq!(&out[..4], &g[1..]);
        assert_eq!(out[4], c(0.0, 0.0));
    }

    #[test]
    fn norm_examples() {
        let mut rows = vec![vec![c(0.0, 0.0); 3]; 5];
        for v in rows[3].iter_mut() {
            *v = c(2.0, 0.0);
        }
        let n = weighted_norms(&rows);
        assert_eq!((n.l1, n.l11, n.l12), (2.0, 6.0, 18.0));
        let z = weighted_norms(&vec![vec![c(0.0, 0.0); 3]; 5]);
        assert_eq!((z.l1, z.l11, z.l12), (0.0, 0.0, 0.0));

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rows: Vec<Vec<Complex64>> = (0..7).map(|_| (0..9).map(|_| c(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)).collect()).collect();
        let n = weighted_norms(&rows);
        let mut best = [0.0f64; 3];
        for i in 0..9 {
            let mut s = [0.0; 3];
            for k in 0..7 {
                for p in 0..3 {
                    s[p] += (k as f64).powi(p as i32) * rows[k][i].norm();
                }
            }
            for p in 0..3 {
                best[p] = best[p].max(s[p]);
            }
        }
        assert_eq!([n.l1, n.l11, n.l12], best);
    }

    #[test]
    fn summation_examples() {
        let s = summation_identities(&[1.0]).unwrap();
        assert_eq!((s.lhs_i, s.rhs_i, s.lhs_ii, s.rhs_ii), (1.0, 1.0, 1.0, 1.0));
        let s = summation_identities(&[1.0, 1.0, 1.0]).unwrap();
        assert_eq!((s.lhs_i, s.rhs_i, s.lhs_ii, s.rhs_ii), (10.0, 10.0, 6.0, 6.0));
        let s = summation_identities(&[0.0; 6]).unwrap();
        assert_eq!((s.lhs_i, s.rhs_i, s.lhs_ii, s.rhs_ii), (0.0, 0.0, 0.0, 0.0));
        assert!(matches!(summation_identities(&[1.0, -0.5]), Err(Error::NegativeEntry { index: 1, .. })));
    }

    #[test]
    fn spectral_derivative_of_trig() {
        let n = 32;
        let v: Vec<Complex64> = (0..n).map(|k| Complex64::from_polar(1.0, 3.0 * 2.0 * PI * k as f64 / n as f64)).collect();
        let d = spectral_derivative(&v);
        for k in 0..n {
            assert!((d[k] - c(0.0, 3.0) * v[k]).norm() < 1e-13);
        }
    }

    fn seq() -> impl Strategy<Value = Vec<Complex64>> {
        prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0).prop_map(|(a, b)| c(a, b)), 6)
    }

    proptest! {
        #[test]
        fn seq_product_commutes_and_associates(a in seq(), b in seq(), d in seq()) {
            let ab = convolve_seq(&a, &b);
            let ba = convolve_seq(&b, &a);
            for k in 0..6 { prop_assert!((ab[k] - ba[k]).norm() < 1e-14); }
            let l = convolve_seq(&ab, &d);
            let r = convolve_seq(&a, &convolve_seq(&b, &d));
            for k in 0..6 { prop_assert!((l[k] - r[k]).norm() < 1e-13); }
        }

        #[test]
        fn trace_convolution_composes(a in seq(), b in seq(), g in seq()) {
            let l = convolve(&a, &convolve(&b, &g));
            let r = convolve(&convolve_seq(&a, &b), &g);
            for k in 0..6 { prop_assert!((l[k] - r[k]).norm() < 1e-13); }
        }

        #[test]
        fn summation_identities_hold(c in prop::collection::vec(0.0f64..10.0, 1..50)) {
            let s = summation_identities(&c).unwrap();
            prop_assert!((s.lhs_i - s.rhs_i).abs() <= 1e-12 * s.rhs_i.max(1.0));
            prop_assert!((s.lhs_ii - s.rhs_ii).abs() <= 1e-12 * s.rhs_ii.max(1.0));
        }

        #[test]
        fn norms_monotone(v in prop::collection::vec(-1.0f64..1.0, 12), scale in prop::collection::vec(0.0f64..1.0, 12)) {
            let big: Vec<Vec<Complex64>> = v.chunks(3).map(|r| r.iter().map(|&x| c(x, 0.0)).collect()).collect();
            let small: Vec<Vec<Complex64>> = v.chunks(3).zip(scale.chunks(3))
                .map(|(r, s)| r.iter().zip(s).map(|(&x, &f)| c(x * f, 0.0)).collect()).collect();
            let (nb, ns) = (weighted_norms(&big), weighted_norms(&small));
            prop_assert!(ns.l1 <= nb.l1 && ns.l11 <= nb.l11 && ns.l12 <= nb.l12);
        }
    }
}
