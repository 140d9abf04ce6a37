//! Run configuration: one JSON document, fully defaulted, validated before any compute.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use aradon::attenuation::FactorSettings;
use aradon::bukhgeim::{default_margin, DEFAULT_GATE};
use aradon::geometry::{BoundaryKind, ConvexBoundary, Point, MIN_NODES};
use aradon::harmonics::AngularGrid;
use aradon::xray::{PhantomSpec, QuadRule, QuadSettings, ScalarField};
use aradon::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundaryConfig {
    /// `disk`, `ellipse` or `table`.
    pub kind: String,
    pub n_nodes: usize,
    pub a: f64,
    pub b: f64,
    /// CSV of `x,y` rows; the curve is closed implicitly.
    pub table_path: Option<PathBuf>,
}

impl Default for BoundaryConfig {
    fn default() -> Self {
        BoundaryConfig { kind: "disk".into(), n_nodes: 256, a: 1.0, b: 1.0, table_path: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModesConfig {
    pub n: usize,
    pub angles: usize,
}

impl Default for ModesConfig {
    fn default() -> Self {
        ModesConfig { n: 32, angles: 128 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub nx: usize,
    pub ny: usize,
    /// Minimum distance of evaluation points from the boundary nodes; three node
    /// spacings when absent.
    pub margin: Option<f64>,
    /// Error reports use points with `|ξ| <= eval_radius`.
    pub eval_radius: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig { nx: 64, ny: 64, margin: None, eval_radius: 0.85 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub residual_gate: f64,
    pub tol_neg: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { residual_gate: DEFAULT_GATE, tol_neg: 1e-6 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HilbertConfig {
    pub s_points: usize,
    pub extent: f64,
}

impl Default for HilbertConfig {
    fn default() -> Self {
        let d = FactorSettings::default();
        HilbertConfig { s_points: d.s_points, extent: d.extent }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    /// Resolutions visited along the chosen axis.
    pub ladder: Vec<usize>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig { ladder: vec![128, 256, 512] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub boundary: BoundaryConfig,
    pub modes: ModesConfig,
    pub quad: QuadSettings,
    pub grid: GridConfig,
    pub f: PhantomSpec,
    pub a: PhantomSpec,
    pub tolerances: Tolerances,
    pub hilbert: HilbertConfig,
    pub sweep: SweepConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            boundary: BoundaryConfig::default(),
            modes: ModesConfig::default(),
            quad: QuadSettings::default(),
            grid: GridConfig::default(),
            f: PhantomSpec::named("poly-bump"),
            a: PhantomSpec::named("zero"),
            tolerances: Tolerances::default(),
            hilbert: HilbertConfig::default(),
            sweep: SweepConfig::default(),
        }
    }
}

/// Everything a command needs, built from a validated config.
pub struct Setup {
    pub config: RunConfig,
    pub hash: String,
    pub boundary: Arc<ConvexBoundary>,
    pub angular: AngularGrid,
    pub rule: QuadRule,
    pub f: ScalarField,
    pub a: ScalarField,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::usage(format!("invalid config {}: {e}", path.display())))
    }

    /// Hex SHA-256 of the canonical JSON form of the resolved config.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(bytes))
    }

    pub fn factor_settings(&self) -> FactorSettings {
        FactorSettings {
            s_points: self.hilbert.s_points,
            extent: self.hilbert.extent,
            tol_neg: self.tolerances.tol_neg,
            quad: self.quad,
        }
    }

    fn boundary_kind(&self) -> Result<BoundaryKind, CliError> {
        let b = &self.boundary;
        match b.kind.as_str() {
            "disk" => Ok(BoundaryKind::UnitDisk),
            "ellipse" => Ok(BoundaryKind::Ellipse { a: b.a, b: b.b }),
            "table" => {
                let path = b.table_path.as_ref().ok_or_else(|| CliError::usage("boundary.table_path is required for a table boundary"))?;
                Ok(BoundaryKind::Table { points: read_table(path)? })
            }
            other => Err(CliError::usage(format!("boundary.kind must be disk, ellipse or table, got {other:?}"))),
        }
    }

    /// Checks every precondition and builds the shared objects.
    pub fn setup(self) -> Result<Setup, CliError> {
        if self.boundary.n_nodes < MIN_NODES {
            return Err(CliError::usage(format!("boundary.n_nodes must be at least {MIN_NODES}")));
        }
        let boundary = ConvexBoundary::new(self.boundary_kind()?, self.boundary.n_nodes)
            .map_err(|e| CliError::usage(format!("boundary: {e}")))?
            .into_shared();
        let angular = AngularGrid::new(self.modes.angles).map_err(|e| CliError::usage(format!("modes.angles: {e}")))?;
        angular.check_resolution(self.modes.n).map_err(|e| CliError::usage(format!("modes.n: {e}")))?;
        let rule = QuadRule::new(self.quad).map_err(|e| CliError::usage(format!("quad: {e}")))?;
        let f = ScalarField::phantom(&self.f, &boundary).map_err(|e| CliError::usage(format!("f: {e}")))?;
        let a = ScalarField::phantom(&self.a, &boundary).map_err(|e| CliError::usage(format!("a: {e}")))?;
        if self.grid.nx < 2 || self.grid.ny < 2 {
            return Err(CliError::usage("grid.nx and grid.ny must be at least 2"));
        }
        if self.grid.margin.is_some_and(|m| !(m >= 0.0)) || !(self.grid.eval_radius > 0.0) {
            return Err(CliError::usage("grid.margin must be non-negative and grid.eval_radius positive"));
        }
        if !(self.tolerances.residual_gate > 0.0) || !(self.tolerances.tol_neg > 0.0) {
            return Err(CliError::usage("tolerances must be positive"));
        }
        if self.hilbert.s_points < 8 || !(self.hilbert.extent > 1.0) {
            return Err(CliError::usage("hilbert.s_points must be at least 8 and hilbert.extent above 1"));
        }
        let hash = self.hash();
        Ok(Setup { config: self, hash, boundary, angular, rule, f, a })
    }
}

impl Setup {
    pub fn margin(&self) -> f64 {
        self.config.grid.margin.unwrap_or_else(|| default_margin(self.boundary.n_nodes()) * self.boundary.radius())
    }

    /// Grid points over the bounding box that lie inside the domain, clear of the boundary.
    pub fn grid_points(&self) -> Vec<Point> {
        let (nx, ny) = (self.config.grid.nx, self.config.grid.ny);
        let nodes = self.boundary.nodes();
        let (mut lo, mut hi) = (Complex64::new(f64::INFINITY, f64::INFINITY), Complex64::new(f64::NEG_INFINITY, f64::NEG_INFINITY));
        for nd in nodes {
            lo = Complex64::new(lo.re.min(nd.position.re), lo.im.min(nd.position.im));
            hi = Complex64::new(hi.re.max(nd.position.re), hi.im.max(nd.position.im));
        }
        let margin = self.margin();
        (0..ny)
            .flat_map(|iy| {
                (0..nx).map(move |ix| {
                    Complex64::new(
                        lo.re + (hi.re - lo.re) * (ix as f64 + 0.5) / nx as f64,
                        lo.im + (hi.im - lo.im) * (iy as f64 + 0.5) / ny as f64,
                    )
                })
            })
            .filter(|&p| self.boundary.contains(p) && self.boundary.node_distance(p) >= margin)
            .collect()
    }
}

fn read_table(path: &Path) -> Result<Vec<Point>, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::usage(format!("boundary.table_path {}: {e}", path.display())))?;
    let mut points = Vec::new();
    for (line, record) in reader.deserialize::<(f64, f64)>().enumerate() {
        let (x, y) = record.map_err(|e| CliError::usage(format!("boundary.table_path row {}: {e}", line + 1)))?;
        points.push(Complex64::new(x, y));
    }
    Ok(points)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_and_hash_is_stable() {
        let c = RunConfig::default();
        let text = serde_json::to_string(&c).unwrap();
        let back: RunConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash(), c.hash());
        let partial: RunConfig = serde_json::from_str(r#"{"modes": {"n": 8}}"#).unwrap();
        assert_eq!(partial.modes.angles, 128);
        assert_ne!(partial.hash(), c.hash());
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"mode": {}}"#).is_err());
    }

    #[test]
    fn validation_names_the_field() {
        let mut c = RunConfig::default();
        c.boundary.kind = "table".into();
        let err = c.setup().err().unwrap();
        assert!(err.to_string().contains("boundary.table_path"));
        let mut c = RunConfig::default();
        c.modes.angles = 32;
        assert!(c.setup().err().unwrap().to_string().contains("modes.n"));
    }

    #[test]
    fn grid_points_stay_clear_of_the_boundary() {
        let s = RunConfig::default().setup().unwrap();
        let pts = s.grid_points();
        assert!(!pts.is_empty());
        assert!(pts.iter().all(|p| s.boundary.node_distance(*p) >= s.margin()));
    }
}
