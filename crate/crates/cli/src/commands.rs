use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use aradon::attenuation::{build_h, range_residual_a, reconstruct_f_attenuated, IntegratingFactor};
use aradon::bukhgeim::{range_residual_0, reconstruct_f0, ResidualReport};
use aradon::harmonics::{project_minus, ModeTrace};
use aradon::io::{read_factors, read_sinogram, write_factors, write_field_csv, write_sinogram, write_sinogram_csv};
use aradon::xray::{forward_sinogram, ScalarField, Sinogram};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{RunConfig, Setup};
use crate::{CliError, SweepAxis};

pub struct Options {
    pub out: PathBuf,
    pub factors_cache: Option<PathBuf>,
    pub attenuated: bool,
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::numeric(e.to_string()))?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

fn archive_config(setup: &Setup, opts: &Options) -> Result<(), CliError> {
    write_json(&opts.out.join("config.json"), &setup.config)
}

fn attenuation<'a>(setup: &'a Setup, opts: &Options) -> Option<&'a ScalarField> {
    opts.attenuated.then_some(&setup.a)
}

pub fn phantom(setup: &Setup, opts: &Options) -> Result<u8, CliError> {
    archive_config(setup, opts)?;
    let pts = setup.grid_points();
    for (name, field) in [("f", &setup.f), ("a", &setup.a)] {
        let values: Vec<f64> = pts.iter().map(|&p| field.eval(p)).collect();
        write_field_csv(&opts.out.join(format!("phantom_{name}.csv")), &pts, &values, &setup.hash)?;
    }
    println!("wrote {} grid samples of f ({}) and a ({})", pts.len(), setup.f.name(), setup.a.name());
    Ok(0)
}

#[derive(Serialize)]
struct ForwardSummary<'a> {
    config_hash: &'a str,
    attenuated: bool,
    n_nodes: usize,
    n_angles: usize,
    min: f64,
    max: f64,
    /// Largest value on incoming or tangential pairs; zero for canonical data.
    incoming_max: f64,
}

fn simulate(setup: &Setup, opts: &Options) -> Result<Sinogram, CliError> {
    let zero = ScalarField::zero();
    let a = attenuation(setup, opts).unwrap_or(&zero);
    Ok(forward_sinogram(&setup.f, a, &setup.boundary, setup.angular, &setup.rule)?)
}

pub fn forward(setup: &Setup, opts: &Options) -> Result<u8, CliError> {
    archive_config(setup, opts)?;
    let g = simulate(setup, opts)?;
    write_sinogram(&opts.out.join("sinogram.bin"), &g, &setup.hash)?;
    write_sinogram_csv(&opts.out.join("sinogram.csv"), &g, &setup.hash)?;
    let mut incoming_max: f64 = 0.0;
    for (i, nd) in g.boundary().nodes().iter().enumerate() {
        for j in 0..g.angular().n_angles() {
            if aradon::geometry::dot(nd.normal, g.angular().direction(j)) <= aradon::geometry::TANGENT_TOL {
                incoming_max = incoming_max.max(g.value(i, j).abs());
            }
        }
    }
    let summary = ForwardSummary {
        config_hash: &setup.hash,
        attenuated: g.is_attenuated(),
        n_nodes: g.boundary().n_nodes(),
        n_angles: g.angular().n_angles(),
        min: g.data().iter().copied().fold(f64::INFINITY, f64::min),
        max: g.data().iter().copied().fold(f64::NEG_INFINITY, f64::max),
        incoming_max,
    };
    write_json(&opts.out.join("forward.json"), &summary)?;
    println!("{}", serde_json::to_string(&summary).expect("summary serializes"));
    Ok(0)
}

/// Reads a sinogram and checks it against the configured grids.
fn load_trace(setup: &Setup, path: &Path) -> Result<(Sinogram, ModeTrace), CliError> {
    let (g, _) = read_sinogram(path).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    if g.boundary().descriptor() != setup.boundary.descriptor() || g.angular() != setup.angular {
        return Err(CliError::usage(format!(
            "{}: sinogram grids ({} nodes, {} angles) do not match the config ({} nodes, {} angles)",
            path.display(),
            g.boundary().n_nodes(),
            g.angular().n_angles(),
            setup.boundary.n_nodes(),
            setup.angular.n_angles()
        )));
    }
    let trace = project_minus(&g, setup.config.modes.n)?;
    Ok((g, trace))
}

/// Hash of the config parts that determine the integrating factor.
fn factor_key(config: &RunConfig) -> String {
    let key = serde_json::json!({
        "boundary": config.boundary,
        "modes": config.modes,
        "a": config.a,
        "settings": config.factor_settings(),
    });
    hex::encode(Sha256::digest(serde_json::to_vec(&key).expect("key serializes")))
}

fn load_or_build_factors(setup: &Setup, opts: &Options) -> Result<IntegratingFactor, CliError> {
    let key = factor_key(&setup.config);
    if let Some(path) = &opts.factors_cache {
        if path.exists() {
            let (f, stored) = read_factors(path).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
            if stored == key {
                log::info!("reusing integrating factor from {}", path.display());
                return Ok(f);
            }
            log::warn!("factor cache {} was built for a different configuration; rebuilding", path.display());
        }
    }
    let f = build_h(&setup.a, &setup.boundary, setup.angular, setup.config.modes.n, setup.config.factor_settings())?;
    if let Some(path) = &opts.factors_cache {
        write_factors(path, &f, &key)?;
    }
    Ok(f)
}

#[derive(Serialize)]
struct CheckReport<'a> {
    config_hash: &'a str,
    attenuated: bool,
    n_modes: usize,
    #[serde(flatten)]
    residual: ResidualReport,
    gate: f64,
    verdict: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    route_gap: Option<f64>,
}

pub fn check(setup: &Setup, opts: &Options, sinogram: &Path) -> Result<u8, CliError> {
    archive_config(setup, opts)?;
    let (g, trace) = load_trace(setup, sinogram)?;
    let attenuated = opts.attenuated || g.is_attenuated();
    let (residual, route_gap) = if attenuated {
        let factors = load_or_build_factors(setup, opts)?;
        let r = range_residual_a(&trace, &factors)?;
        (r.residual, Some(r.route_gap))
    } else {
        (range_residual_0(&trace), None)
    };
    let gate = setup.config.tolerances.residual_gate;
    let consistent = residual.is_consistent(gate);
    let report = CheckReport {
        config_hash: &setup.hash,
        attenuated,
        n_modes: trace.n_modes(),
        residual: residual.report(),
        gate,
        verdict: if consistent { "consistent" } else { "inconsistent" },
        route_gap,
    };
    write_json(&opts.out.join("residual.json"), &report)?;
    println!("relative residual {:.3e} (gate {gate:.1e}): {}", residual.relative, report.verdict);
    Ok(if consistent { 0 } else { 1 })
}

#[derive(Serialize)]
struct ReconReport<'a> {
    config_hash: &'a str,
    attenuated: bool,
    points: usize,
    residual_relative: f64,
    consistency_flag: u8,
    #[serde(skip_serializing_if = "Option::is_none")]
    warning: Option<String>,
    truth: String,
    eval_radius: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    relative_l2: Option<f64>,
}

pub fn reconstruct(setup: &Setup, opts: &Options, sinogram: &Path) -> Result<u8, CliError> {
    archive_config(setup, opts)?;
    let (g, trace) = load_trace(setup, sinogram)?;
    let attenuated = opts.attenuated || g.is_attenuated();
    let pts = setup.grid_points();
    let gate = setup.config.tolerances.residual_gate;
    let recon = if attenuated {
        let factors = load_or_build_factors(setup, opts)?;
        reconstruct_f_attenuated(&trace, &factors, &setup.a, &pts, setup.margin(), gate)?
    } else {
        reconstruct_f0(&trace, &pts, setup.margin(), gate)?
    };
    write_field_csv(&opts.out.join("field.csv"), &recon.points, &recon.values, &setup.hash)?;
    let radius = setup.config.grid.eval_radius;
    let relative_l2 = (!setup.f.is_zero()).then(|| recon.relative_l2_error(|p| setup.f.eval(p), radius));
    let report = ReconReport {
        config_hash: &setup.hash,
        attenuated,
        points: recon.points.len(),
        residual_relative: recon.residual_relative,
        consistency_flag: u8::from(!recon.consistent),
        warning: (!recon.consistent).then(|| format!("input fails the range test: relative residual {:.3e} above gate {gate:.1e}", recon.residual_relative)),
        truth: setup.f.name(),
        eval_radius: radius,
        relative_l2,
    };
    write_json(&opts.out.join("report.json"), &report)?;
    match relative_l2 {
        Some(e) => println!("reconstructed {} points, relative L2 error {e:.3e} on |x| <= {radius}", recon.points.len()),
        None => println!("reconstructed {} points", recon.points.len()),
    }
    Ok(0)
}

#[derive(Serialize)]
struct FactorReport<'a> {
    config_hash: &'a str,
    factor_key: String,
    identity: bool,
    product_deviation: f64,
    n_nodes: usize,
    n_angles: usize,
    n_modes: usize,
}

pub fn factors(setup: &Setup, opts: &Options) -> Result<u8, CliError> {
    archive_config(setup, opts)?;
    let f = load_or_build_factors(setup, opts)?;
    let key = factor_key(&setup.config);
    if opts.factors_cache.is_none() {
        write_factors(&opts.out.join("factors.bin"), &f, &key)?;
    }
    let report = FactorReport {
        config_hash: &setup.hash,
        factor_key: key,
        identity: f.is_identity(),
        product_deviation: f.product_deviation(),
        n_nodes: setup.boundary.n_nodes(),
        n_angles: setup.angular.n_angles(),
        n_modes: f.n_modes(),
    };
    write_json(&opts.out.join("factors.json"), &report)?;
    println!("integrating factor for a = {}: alpha*beta deviation {:.3e}", setup.a.name(), report.product_deviation);
    Ok(0)
}

struct RungResult {
    residual: f64,
    recon_error: f64,
}

fn run_rung(config: RunConfig, opts: &Options) -> Result<RungResult, CliError> {
    let setup = config.setup()?;
    let g = simulate(&setup, opts)?;
    let trace = project_minus(&g, setup.config.modes.n)?;
    let pts = setup.grid_points();
    let gate = setup.config.tolerances.residual_gate;
    let (residual, recon) = if opts.attenuated {
        let factors = build_h(&setup.a, &setup.boundary, setup.angular, setup.config.modes.n, setup.config.factor_settings())?;
        let r = range_residual_a(&trace, &factors)?.residual.relative;
        (r, reconstruct_f_attenuated(&trace, &factors, &setup.a, &pts, setup.margin(), gate)?)
    } else {
        (range_residual_0(&trace).relative, reconstruct_f0(&trace, &pts, setup.margin(), gate)?)
    };
    let recon_error = recon.relative_l2_error(|p| setup.f.eval(p), setup.config.grid.eval_radius);
    Ok(RungResult { residual, recon_error })
}

pub fn sweep(setup: &Setup, opts: &Options, axis: SweepAxis) -> Result<u8, CliError> {
    archive_config(setup, opts)?;
    let ladder = &setup.config.sweep.ladder;
    if ladder.is_empty() {
        return Err(CliError::usage("sweep.ladder is empty"));
    }
    let name = format!("sweep_{}.csv", format!("{axis:?}").to_lowercase());
    let mut out = BufWriter::new(File::create(opts.out.join(&name))?);
    writeln!(out, "# config_hash={}", setup.hash)?;
    writeln!(out, "resolution,residual,recon_error,runtime,status")?;
    out.flush()?;
    let mut failed = 0;
    for &res in ladder {
        let mut config = setup.config.clone();
        match axis {
            SweepAxis::Nodes => config.boundary.n_nodes = res,
            SweepAxis::Modes => config.modes.n = res,
            SweepAxis::Angles => config.modes.angles = res,
            SweepAxis::Quad => config.quad.panels = res,
        }
        let start = Instant::now();
        let result = run_rung(config, opts);
        let runtime = start.elapsed().as_secs_f64();
        match result {
            Ok(r) => writeln!(out, "{res},{:e},{:e},{runtime:.3},ok", r.residual, r.recon_error)?,
            Err(e) => {
                failed += 1;
                log::error!("rung {res} failed: {e}");
                writeln!(out, "{res},NaN,NaN,{runtime:.3},\"{}\"", e.to_string().replace('"', "'"))?;
            }
        }
        out.flush()?;
    }
    println!("wrote {} rungs to {}", ladder.len(), opts.out.join(name).display());
    if failed > 0 {
        return Err(CliError::numeric(format!("{failed} of {} rungs failed", ladder.len())));
    }
    Ok(0)
}
