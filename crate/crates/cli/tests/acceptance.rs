//! Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

use std::process::Command;
use std::sync::Arc;

use aradon::attenuation::{build_h, finite_hilbert, range_residual_a, reconstruct_f_attenuated, FactorSettings, IntegratingFactor};
use aradon::bukhgeim::{default_margin, op_s, plemelj_defect, range_residual_0, reconstruct_f0, DEFAULT_GATE};
use aradon::geometry::{signed_distance, BoundaryKind, ConvexBoundary, Point};
use aradon::harmonics::{convolve_seq, negative_mode_max, project_minus, summation_identities, AngularGrid, ModeTrace};
use aradon::io::write_sinogram;
use aradon::xray::{forward_sinogram, perturb_linear, PhantomSpec, QuadRule, QuadSettings, ScalarField, Sinogram};
use aradon::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn report(n: u32, pass: bool, detail: String) {
    println!("criterion {n}: {} {detail}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "criterion {n} failed: {detail}");
}

fn boundary(kind: BoundaryKind, n: usize) -> Arc<ConvexBoundary> {
    Arc::new(ConvexBoundary::new(kind, n).unwrap())
}

fn phantom(name: &str, amplitude: f64, b: &ConvexBoundary) -> ScalarField {
    ScalarField::phantom(&PhantomSpec::scaled(name, amplitude), b).unwrap()
}

fn sinogram(b: &Arc<ConvexBoundary>, m: usize, f: &ScalarField, a: &ScalarField) -> Sinogram {
    forward_sinogram(f, a, b, AngularGrid::new(m).unwrap(), &QuadRule::new(QuadSettings::default()).unwrap()).unwrap()
}

fn bump_trace(n: usize, m: usize, n_modes: usize) -> ModeTrace {
    let b = boundary(BoundaryKind::UnitDisk, n);
    let f = phantom("poly-bump", 1.0, &b);
    project_minus(&sinogram(&b, m, &f, &ScalarField::zero()), n_modes).unwrap()
}

/// Cell-centred `k × k` grid over `[-1, 1]²` restricted to `|ξ| <= radius`.
fn disk_grid(k: usize, radius: f64) -> Vec<Point> {
    (0..k)
        .flat_map(|iy| (0..k).map(move |ix| Complex64::new(-1.0 + 2.0 * (ix as f64 + 0.5) / k as f64, -1.0 + 2.0 * (iy as f64 + 0.5) / k as f64)))
        .filter(|p| p.norm() <= radius)
        .collect()
}

fn bump(p: Point) -> f64 {
    (1.0 - p.norm_sqr()).powi(2)
}

#[test]
fn criterion_01_forward_oracle() {
    let b = boundary(BoundaryKind::UnitDisk, 128);
    let g = sinogram(&b, 64, &phantom("poly-bump", 1.0, &b), &ScalarField::zero());
    let ang = g.angular();
    let mut worst: f64 = 0.0;
    for (i, nd) in b.nodes().iter().enumerate() {
        for j in 0..ang.n_angles() {
            let theta = ang.direction(j);
            let outgoing = aradon::geometry::dot(nd.normal, theta) > aradon::geometry::TANGENT_TOL;
            let s = signed_distance(nd.position, theta);
            let exact = if outgoing { 16.0 / 15.0 * (1.0 - s * s).max(0.0).powf(2.5) } else { 0.0 };
            worst = worst.max((g.value(i, j) - exact).abs());
        }
    }
    report(1, worst <= 1e-6, format!("max abs error {worst:.2e} (<= 1e-6)"));
}

#[test]
fn criterion_02_necessity() {
    let coarse = range_residual_0(&bump_trace(512, 128, 32)).relative;
    let fine = range_residual_0(&bump_trace(1024, 256, 32)).relative;
    let ratio = coarse / fine;
    report(2, coarse <= 1e-3 && ratio >= 3.0, format!("relative residual {coarse:.2e} (<= 1e-3), refinement ratio {ratio:.1} (>= 3)"));
}

#[test]
fn criterion_03_discrimination() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = d.join("config.json");
    std::fs::write(&cfg, r#"{"boundary": {"n_nodes": 512}, "modes": {"n": 32, "angles": 128}}"#).unwrap();
    let run = |args: &[&str]| {
        let out = Command::new(env!("CARGO_BIN_EXE_aradon")).arg("--config").arg(&cfg).arg("--out").arg(d).args(args).output().unwrap();
        out.status.code().unwrap()
    };
    assert_eq!(run(&["forward"]), 0);
    let sino = d.join("sinogram.bin");
    let clean_code = run(&["check", sino.to_str().unwrap()]);
    let (g, hash) = aradon::io::read_sinogram(&sino).unwrap();
    let trace = project_minus(&g, 32).unwrap();
    let re_max = g.boundary().nodes().iter().map(|nd| nd.position.re.abs()).fold(0.0, f64::max);
    let bad = perturb_linear(&g, 0.1 * trace.norms().l1 / re_max);
    let bad_path = d.join("perturbed.bin");
    write_sinogram(&bad_path, &bad, &hash).unwrap();
    let bad_code = run(&["check", bad_path.to_str().unwrap()]);
    let relative = range_residual_0(&project_minus(&bad, 32).unwrap()).relative;

    // library-level conj(w) perturbation of row 0
    let sup = g.boundary().nodes().iter().map(|nd| nd.position.norm()).fold(0.0, f64::max);
    let eps = 0.1 * trace.norms().l1 / sup;
    let mut conj = trace.clone();
    for (v, nd) in conj.row_mut(0).iter_mut().zip(g.boundary().nodes()) {
        *v += eps * nd.position.conj();
    }
    let conj_rel = range_residual_0(&conj).relative;
    report(
        3,
        clean_code == 0 && bad_code == 1 && relative >= 0.05 && conj_rel >= 0.05,
        format!("exit codes {clean_code} -> {bad_code}, perturbed relative {relative:.3} and conj(w) mode {conj_rel:.3} (>= 0.05)"),
    );
}

#[test]
fn criterion_04_exact_traces() {
    let mut worst: f64 = 0.0;
    for b in [boundary(BoundaryKind::UnitDisk, 128), boundary(BoundaryKind::Ellipse { a: 1.5, b: 1.0 }, 256)] {
        for (row, power) in [(0, 1), (1, 1), (0, 2)] {
            let g = ModeTrace::from_fn(b.clone(), 8, |k, nd| if k == row { nd.position.powi(power) } else { Complex64::new(0.0, 0.0) });
            let r = range_residual_0(&g);
            worst = worst.max(r.per_mode_max.iter().copied().fold(0.0, f64::max));
        }
    }
    let b = boundary(BoundaryKind::UnitDisk, 128);
    let g = ModeTrace::from_fn(b.clone(), 8, |k, nd| if k == 0 { nd.position.conj() } else { Complex64::new(0.0, 0.0) });
    let r = range_residual_0(&g);
    let conj_err = b.nodes().iter().zip(r.residual.row(0)).map(|(nd, v)| (v - 2.0 * nd.position.conj()).norm()).fold(0.0, f64::max);
    report(4, worst <= 1e-8 && conj_err <= 1e-8, format!("analytic families max residual {worst:.1e}, conj(w) row-0 error {conj_err:.1e} (<= 1e-8)"));
}

#[test]
fn criterion_05_plemelj_order() {
    let n = 1024;
    let b = boundary(BoundaryKind::UnitDisk, n);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let eps = [0.1, 0.05, 0.025];
    let mut worst_order = f64::INFINITY;
    let mut best_order = f64::NEG_INFINITY;
    let mut monotone = true;
    for _ in 0..4 {
        let coeffs: Vec<Vec<Complex64>> =
            (0..=4).map(|_| (0..17).map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect()).collect();
        let g = ModeTrace::from_fn(b.clone(), 4, |k, nd| {
            coeffs[k].iter().enumerate().map(|(p, c)| c * Complex64::from_polar(1.0, (p as f64 - 8.0) * nd.param)).sum()
        });
        let s = op_s(&g);
        for node in [0, 300, 777] {
            let d: Vec<f64> = eps.iter().map(|&e| plemelj_defect(&g, &s, node, e, default_margin(n)).unwrap()).collect();
            monotone &= d.windows(2).all(|w| w[1] < w[0]);
            for k in 0..2 {
                let order = (d[k] / d[k + 1]).log2();
                worst_order = worst_order.min(order);
                best_order = best_order.max(order);
            }
        }
    }
    report(5, monotone && worst_order >= 1.0, format!("defect decreasing: {monotone}, empirical orders {worst_order:.3}..{best_order:.3} (>= 1)"));
}

#[test]
fn criterion_06_reconstruction() {
    let pts = disk_grid(64, 0.9);
    let margin = default_margin(512);
    let err_at = |n_modes: usize| {
        let r = reconstruct_f0(&bump_trace(512, 128, n_modes), &pts, margin, DEFAULT_GATE).unwrap();
        r.relative_l2_error(bump, 0.9)
    };
    let ladder: Vec<f64> = [4, 8, 16, 32].iter().map(|&n| err_at(n)).collect();
    let main = ladder[3];
    // increases below 1e-12 are rounding noise once the error has converged
    let non_increasing = ladder.windows(2).all(|w| w[1] <= w[0] + 1e-12);
    report(6, main <= 0.05 && non_increasing, format!("relative L2 error {main:.2e} (<= 0.05), N = 4, 8, 16, 32 errors [{}]", ladder.iter().map(|e| format!("{e:.2e}")).collect::<Vec<_>>().join(", ")));
}

fn attenuated_setup(f_name: &str) -> (ModeTrace, IntegratingFactor, ScalarField) {
    let b = boundary(BoundaryKind::UnitDisk, 512);
    let a = phantom("poly-bump", 0.3, &b);
    let f = phantom(f_name, 1.0, &b);
    let ang = AngularGrid::new(128).unwrap();
    let g = project_minus(&sinogram(&b, 128, &f, &a), 32).unwrap();
    let factors = build_h(&a, &b, ang, 32, FactorSettings::default()).unwrap();
    (g, factors, a)
}

#[test]
fn criterion_07_integrating_factor() {
    let b = boundary(BoundaryKind::UnitDisk, 512);
    let a = phantom("poly-bump", 0.3, &b);
    let f = build_h(&a, &b, AngularGrid::new(128).unwrap(), 32, FactorSettings::default()).unwrap();
    let deviation = f.product_deviation();
    let negative = f
        .h_values()
        .iter()
        .map(|h| {
            let minus: Vec<Complex64> = h.iter().map(|v| (-v).exp()).collect();
            let plus: Vec<Complex64> = h.iter().map(|v| v.exp()).collect();
            negative_mode_max(&minus, 32).max(negative_mode_max(&plus, 32))
        })
        .fold(0.0, f64::max);
    let interior = f.at_point(&a, Complex64::new(0.2, -0.35)).unwrap();
    let inner = convolve_seq(&interior.alpha.coeffs, &interior.beta.coeffs);
    let inner_dev = inner.iter().enumerate().map(|(k, v)| if k == 0 { (v - 1.0).norm() } else { v.norm() }).fold(0.0, f64::max);
    report(
        7,
        deviation <= 1e-8 && inner_dev <= 1e-8 && negative <= 1e-6,
        format!("alpha*beta deviation {deviation:.1e} on the boundary, {inner_dev:.1e} inside (<= 1e-8), negative modes {negative:.1e} (<= 1e-6)"),
    );
}

#[test]
fn criterion_08_attenuated_cycle() {
    let (g, factors, a) = attenuated_setup("poly-bump");
    let residual = range_residual_a(&g, &factors).unwrap();
    let pts = disk_grid(64, 0.85);
    let margin = default_margin(512);
    let recon = reconstruct_f_attenuated(&g, &factors, &a, &pts, margin, DEFAULT_GATE).unwrap();
    let err = recon.relative_l2_error(bump, 0.85);

    let plain = bump_trace(512, 128, 32);
    let identity = build_h(&ScalarField::zero(), plain.boundary(), AngularGrid::new(128).unwrap(), 32, FactorSettings::default()).unwrap();
    let via_a = reconstruct_f_attenuated(&plain, &identity, &ScalarField::zero(), &pts, margin, DEFAULT_GATE).unwrap();
    let via_0 = reconstruct_f0(&plain, &pts, margin, DEFAULT_GATE).unwrap();
    let reduce = via_a.values.iter().zip(&via_0.values).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    report(
        8,
        residual.residual.relative <= 5e-3 && err <= 0.08 && reduce <= 1e-6,
        format!(
            "attenuated residual {:.1e} (<= 5e-3, route gap {:.1e}), reconstruction error {err:.2e} (<= 0.08), a = 0 reduction {reduce:.1e} (<= 1e-6)",
            residual.residual.relative, residual.route_gap
        ),
    );
}

#[test]
fn criterion_09_finite_hilbert() {
    let n = 2048;
    let ds = 2.4 / (n - 1) as f64;
    let s: Vec<f64> = (0..n).map(|k| -1.2 + k as f64 * ds).collect();
    let semi: Vec<f64> = s.iter().map(|t| (1.0 - t * t).max(0.0).sqrt()).collect();
    let out = finite_hilbert(&semi).unwrap();
    let err = |r: f64| s.iter().zip(&out).filter(|(t, _)| t.abs() <= r).map(|(t, v)| (v - t).abs()).fold(0.0, f64::max);
    let (inner, outer) = (err(0.95), err(0.99));
    report(9, inner <= 1e-4, format!("max error {inner:.1e} on |s| <= 0.95 (<= 1e-4); {outer:.1e} on |s| <= 0.99"));
}

#[test]
fn criterion_10_identities_and_jump() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let len = rng.gen_range(1..60);
        let c: Vec<f64> = (0..len).map(|_| rng.gen_range(0.0..5.0)).collect();
        let s = summation_identities(&c).unwrap();
        worst = worst.max((s.lhs_i - s.rhs_i).abs() / s.rhs_i.max(1.0)).max((s.lhs_ii - s.rhs_ii).abs() / s.rhs_ii.max(1.0));
    }
    let mut jump_err: f64 = 0.0;
    for (kind, r0) in [(BoundaryKind::UnitDisk, 1.0), (BoundaryKind::Ellipse { a: 2.0, b: 2.0 }, 2.0)] {
        let b = boundary(kind, 64);
        for node in [0, 11, 37] {
            let j = b.tau_angular_jump(node, 1e-4).unwrap();
            jump_err = jump_err.max((j - 4.0 * r0).abs() / (4.0 * r0));
        }
    }
    report(10, worst <= 1e-12 && jump_err <= 0.02, format!("identity defect {worst:.1e} (<= 1e-12), jump relative error {jump_err:.1e} (<= 0.02)"));
}
