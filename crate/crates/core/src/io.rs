//! Binary containers and CSV exports.
//!
//! A container is a little-endian `u64` header length, a JSON header, then the
//! payload as little-endian `f64`. Complex values are stored as `(re, im)` pairs.
//! The header carries the SHA-256 of the payload and the hash of the run
//! configuration that produced it.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::attenuation::{FactorSettings, IntegratingFactor, LineTable};
use crate::bukhgeim::ModeField;
use crate::error::{Error, Result};
use crate::geometry::{BoundaryDescriptor, BoundaryKind, ConvexBoundary, Point};
use crate::harmonics::{AngularGrid, ModeSeq, ModeTrace};
use crate::xray::{Sinogram, SinogramMeta};

const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileHeader {
    pub kind: String,
    pub version: u32,
    pub config_hash: String,
    /// Hex SHA-256 of the payload bytes.
    pub checksum: String,
    /// Number of `f64` values in the payload.
    pub values: usize,
    pub body: serde_json::Value,
}

/// Boundary as stored in headers; table points are kept so the curve can be rebuilt.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct StoredBoundary {
    descriptor: BoundaryDescriptor,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    table: Option<Vec<[f64; 2]>>,
}

impl StoredBoundary {
    fn from(b: &ConvexBoundary) -> Self {
        let table = match b.kind() {
            BoundaryKind::Table { points } => Some(points.iter().map(|p| [p.re, p.im]).collect()),
            _ => None,
        };
        StoredBoundary { descriptor: b.descriptor(), table }
    }

    fn rebuild(&self) -> Result<Arc<ConvexBoundary>> {
        let d = &self.descriptor;
        let kind = match (d.kind.as_str(), &self.table) {
            ("disk", _) => BoundaryKind::UnitDisk,
            ("ellipse", _) => BoundaryKind::Ellipse { a: d.a, b: d.b },
            ("table", Some(pts)) => BoundaryKind::Table { points: pts.iter().map(|p| Complex64::new(p[0], p[1])).collect() },
            (other, _) => return Err(Error::Format(format!("cannot rebuild boundary of kind {other:?}"))),
        };
        let b = ConvexBoundary::new(kind, d.n_nodes)?;
        if b.descriptor() != *d {
            return Err(Error::Format("stored boundary does not match its descriptor".into()));
        }
        Ok(Arc::new(b))
    }
}

fn digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn payload_bytes(payload: &[f64]) -> Vec<u8> {
    payload.iter().flat_map(|v| v.to_le_bytes()).collect()
}

/// Writes a container of the given kind.
pub fn write_container(path: &Path, kind: &str, config_hash: &str, body: &impl Serialize, payload: &[f64]) -> Result<()> {
    let bytes = payload_bytes(payload);
    let header = FileHeader {
        kind: kind.to_string(),
        version: VERSION,
        config_hash: config_hash.to_string(),
        checksum: digest(&bytes),
        values: payload.len(),
        body: serde_json::to_value(body)?,
    };
    let json = serde_json::to_vec(&header)?;
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(&(json.len() as u64).to_le_bytes())?;
    out.write_all(&json)?;
    out.write_all(&bytes)?;
    out.flush()?;
    Ok(())
}

/// Reads a container, checking its kind and payload checksum.
pub fn read_container(path: &Path, kind: &str) -> Result<(FileHeader, Vec<f64>)> {
    let mut raw = Vec::new();
    File::open(path)?.read_to_end(&mut raw)?;
    if raw.len() < 8 {
        return Err(Error::Format("file too short for a header".into()));
    }
    let len = u64::from_le_bytes(raw[..8].try_into().expect("8 bytes")) as usize;
    let rest = &raw[8..];
    if len > rest.len() {
        return Err(Error::Format("header length exceeds file size".into()));
    }
    let header: FileHeader = serde_json::from_slice(&rest[..len]).map_err(|e| Error::Format(format!("bad header: {e}")))?;
    if header.kind != kind {
        return Err(Error::Format(format!("expected a {kind} file, found {}", header.kind)));
    }
    if header.version != VERSION {
        return Err(Error::Format(format!("unsupported version {}", header.version)));
    }
    let bytes = &rest[len..];
    if bytes.len() != 8 * header.values {
        return Err(Error::Format(format!("payload has {} bytes, header declares {} values", bytes.len(), header.values)));
    }
    if digest(bytes) != header.checksum {
        return Err(Error::Format("payload checksum mismatch".into()));
    }
    let payload = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    Ok((header, payload))
}

fn body<T: DeserializeOwned>(header: &FileHeader) -> Result<T> {
    serde_json::from_value(header.body.clone()).map_err(|e| Error::Format(format!("bad header body: {e}")))
}

fn push_complex(out: &mut Vec<f64>, values: &[Complex64]) {
    for v in values {
        out.push(v.re);
        out.push(v.im);
    }
}

/// Splits `n` complex values off the front of a payload cursor.
fn take_complex(data: &mut &[f64], n: usize) -> Result<Vec<Complex64>> {
    if data.len() < 2 * n {
        return Err(Error::Format("payload shorter than its declared shape".into()));
    }
    let (head, tail) = data.split_at(2 * n);
    *data = tail;
    Ok(head.chunks_exact(2).map(|c| Complex64::new(c[0], c[1])).collect())
}

fn take_real(data: &mut &[f64], n: usize) -> Result<Vec<f64>> {
    if data.len() < n {
        return Err(Error::Format("payload shorter than its declared shape".into()));
    }
    let (head, tail) = data.split_at(n);
    *data = tail;
    Ok(head.to_vec())
}

#[derive(Serialize, Deserialize)]
struct SinogramBody {
    n_nodes: usize,
    n_angles: usize,
    boundary: StoredBoundary,
    attenuated: bool,
    meta: SinogramMeta,
}

pub fn write_sinogram(path: &Path, g: &Sinogram, config_hash: &str) -> Result<()> {
    let body = SinogramBody {
        n_nodes: g.boundary().n_nodes(),
        n_angles: g.angular().n_angles(),
        boundary: StoredBoundary::from(g.boundary()),
        attenuated: g.is_attenuated(),
        meta: g.meta.clone(),
    };
    write_container(path, "sinogram", config_hash, &body, g.data())
}

/// Returns the sinogram and the config hash recorded with it.
pub fn read_sinogram(path: &Path) -> Result<(Sinogram, String)> {
    let (header, payload) = read_container(path, "sinogram")?;
    let b: SinogramBody = body(&header)?;
    let boundary = b.boundary.rebuild()?;
    let g = Sinogram::new(boundary, AngularGrid::new(b.n_angles)?, payload, b.attenuated, b.meta)?;
    Ok((g, header.config_hash))
}

#[derive(Serialize, Deserialize)]
struct TraceBody {
    n_modes: usize,
    n_nodes: usize,
    boundary: StoredBoundary,
}

pub fn write_mode_trace(path: &Path, g: &ModeTrace, config_hash: &str) -> Result<()> {
    let body = TraceBody { n_modes: g.n_modes(), n_nodes: g.n_nodes(), boundary: StoredBoundary::from(g.boundary()) };
    let mut payload = Vec::with_capacity(2 * (g.n_modes() + 1) * g.n_nodes());
    g.rows().iter().for_each(|r| push_complex(&mut payload, r));
    write_container(path, "mode_trace", config_hash, &body, &payload)
}

pub fn read_mode_trace(path: &Path) -> Result<(ModeTrace, String)> {
    let (header, payload) = read_container(path, "mode_trace")?;
    let b: TraceBody = body(&header)?;
    let boundary = b.boundary.rebuild()?;
    let mut cursor = payload.as_slice();
    let rows = (0..=b.n_modes).map(|_| take_complex(&mut cursor, b.n_nodes)).collect::<Result<Vec<_>>>()?;
    Ok((ModeTrace::new(boundary, rows)?, header.config_hash))
}

#[derive(Serialize, Deserialize)]
struct FieldBody {
    n_modes: usize,
    points: Vec<[f64; 2]>,
}

pub fn write_mode_field(path: &Path, v: &ModeField, config_hash: &str) -> Result<()> {
    let body = FieldBody { n_modes: v.n_modes(), points: v.points().iter().map(|p| [p.re, p.im]).collect() };
    let mut payload = Vec::new();
    v.rows().iter().for_each(|r| push_complex(&mut payload, r));
    write_container(path, "mode_field", config_hash, &body, &payload)
}

pub fn read_mode_field(path: &Path) -> Result<(ModeField, String)> {
    let (header, payload) = read_container(path, "mode_field")?;
    let b: FieldBody = body(&header)?;
    let points: Vec<Point> = b.points.iter().map(|p| Complex64::new(p[0], p[1])).collect();
    let mut cursor = payload.as_slice();
    let rows = (0..=b.n_modes).map(|_| take_complex(&mut cursor, points.len())).collect::<Result<Vec<_>>>()?;
    Ok((ModeField::new(points, rows)?, header.config_hash))
}

#[derive(Serialize, Deserialize)]
struct FactorsBody {
    boundary: StoredBoundary,
    n_angles: usize,
    n_modes: usize,
    settings: FactorSettings,
    identity: bool,
    /// `(s0, ds, samples)` per direction; samples of `Ra` then `HRa` follow in the payload.
    lines: Vec<(f64, f64, usize)>,
}

pub fn write_factors(path: &Path, f: &IntegratingFactor, config_hash: &str) -> Result<()> {
    let body = FactorsBody {
        boundary: StoredBoundary::from(f.boundary()),
        n_angles: f.angular().n_angles(),
        n_modes: f.n_modes(),
        settings: f.settings(),
        identity: f.is_identity(),
        lines: f.lines().iter().map(|l| (l.s0, l.ds, l.ra.len())).collect(),
    };
    let mut payload = Vec::new();
    f.h_values().iter().for_each(|r| push_complex(&mut payload, r));
    f.alpha().iter().for_each(|s| push_complex(&mut payload, &s.coeffs));
    f.beta().iter().for_each(|s| push_complex(&mut payload, &s.coeffs));
    for l in f.lines() {
        payload.extend_from_slice(&l.ra);
        payload.extend_from_slice(&l.hra);
    }
    write_container(path, "factors", config_hash, &body, &payload)
}

pub fn read_factors(path: &Path) -> Result<(IntegratingFactor, String)> {
    let (header, payload) = read_container(path, "factors")?;
    let b: FactorsBody = body(&header)?;
    let boundary = b.boundary.rebuild()?;
    let n = boundary.n_nodes();
    let mut cursor = payload.as_slice();
    let h = (0..n).map(|_| take_complex(&mut cursor, b.n_angles)).collect::<Result<Vec<_>>>()?;
    let mut seqs = |count| (0..count).map(|_| take_complex(&mut cursor, b.n_modes + 1).map(ModeSeq::new)).collect::<Result<Vec<_>>>();
    let alpha = seqs(n)?;
    let beta = seqs(n)?;
    let lines = b
        .lines
        .iter()
        .map(|&(s0, ds, len)| Ok(LineTable { s0, ds, ra: take_real(&mut cursor, len)?, hra: take_real(&mut cursor, len)? }))
        .collect::<Result<Vec<_>>>()?;
    if !cursor.is_empty() {
        return Err(Error::Format("trailing payload in factors file".into()));
    }
    let f = IntegratingFactor::from_parts(boundary, AngularGrid::new(b.n_angles)?, b.n_modes, b.settings, lines, h, alpha, beta, b.identity)?;
    Ok((f, header.config_hash))
}

/// `node_index, angle_index, z_x, z_y, phi, value` rows.
pub fn write_sinogram_csv(path: &Path, g: &Sinogram, config_hash: &str) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "# config_hash={config_hash}")?;
    writeln!(out, "node_index,angle_index,z_x,z_y,phi,value")?;
    let ang = g.angular();
    for (i, nd) in g.boundary().nodes().iter().enumerate() {
        for j in 0..ang.n_angles() {
            writeln!(out, "{i},{j},{:e},{:e},{:e},{:e}", nd.position.re, nd.position.im, ang.angle(j), g.value(i, j))?;
        }
    }
    out.flush()?;
    Ok(())
}

/// `x, y, value` rows.
pub fn write_field_csv(path: &Path, points: &[Point], values: &[f64], config_hash: &str) -> Result<()> {
    if points.len() != values.len() {
        return Err(Error::GridMismatch(format!("{} points for {} values", points.len(), values.len())));
    }
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "# config_hash={config_hash}")?;
    writeln!(out, "x,y,value")?;
    for (p, v) in points.iter().zip(values) {
        writeln!(out, "{:e},{:e},{:e}", p.re, p.im, v)?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attenuation::build_h;
    use crate::harmonics::project_minus;
    use crate::xray::{forward_sinogram, PhantomSpec, QuadRule, QuadSettings, ScalarField};

    fn sinogram(kind: BoundaryKind) -> Sinogram {
        let b = Arc::new(ConvexBoundary::new(kind, 32).unwrap());
        let f = ScalarField::phantom(&PhantomSpec { radius: Some(0.5), ..PhantomSpec::named("poly-bump") }, &b).unwrap();
        forward_sinogram(&f, &ScalarField::zero(), &b, AngularGrid::new(16).unwrap(), &QuadRule::new(QuadSettings::default()).unwrap()).unwrap()
    }

    #[test]
    fn sinogram_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let table: Vec<Point> = (0..40).map(|k| Complex64::from_polar(1.0, 0.1 * std::f64::consts::PI * k as f64 / 2.0)).collect();
        for kind in [BoundaryKind::UnitDisk, BoundaryKind::Ellipse { a: 1.3, b: 0.8 }, BoundaryKind::Table { points: table }] {
            let g = sinogram(kind);
            let path = dir.path().join("g.bin");
            write_sinogram(&path, &g, "abc").unwrap();
            let (back, hash) = read_sinogram(&path).unwrap();
            assert_eq!(hash, "abc");
            assert_eq!(back.data(), g.data());
            assert_eq!(back.meta, g.meta);
            assert_eq!(back.boundary().descriptor(), g.boundary().descriptor());
        }
    }

    #[test]
    fn corruption_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.bin");
        write_sinogram(&path, &sinogram(BoundaryKind::UnitDisk), "h").unwrap();
        let mut raw = std::fs::read(&path).unwrap();
        let last = raw.len() - 3;
        raw[last] ^= 0x40;
        std::fs::write(&path, &raw).unwrap();
        assert!(matches!(read_sinogram(&path), Err(Error::Format(_))));
        assert!(matches!(read_mode_trace(&path), Err(Error::Format(_))));
        std::fs::write(&path, [1u8, 2]).unwrap();
        assert!(matches!(read_sinogram(&path), Err(Error::Format(_))));
    }

    #[test]
    fn trace_field_and_factors_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let g = project_minus(&sinogram(BoundaryKind::UnitDisk), 6).unwrap();
        let path = dir.path().join("t.bin");
        write_mode_trace(&path, &g, "x").unwrap();
        assert_eq!(read_mode_trace(&path).unwrap().0.rows(), g.rows());

        let pts = vec![Complex64::new(0.1, 0.0), Complex64::new(0.0, -0.3)];
        let v = ModeField::from_fn(pts, 3, |k, p| p * k as f64);
        write_mode_field(&path, &v, "x").unwrap();
        let back = read_mode_field(&path).unwrap().0;
        assert_eq!(back.rows(), v.rows());
        assert_eq!(back.points(), v.points());

        let b = g.boundary().clone();
        let a = ScalarField::phantom(&PhantomSpec::scaled("poly-bump", 0.3), &b).unwrap();
        let settings = FactorSettings { s_points: 256, ..Default::default() };
        let f = build_h(&a, &b, AngularGrid::new(64).unwrap(), 6, settings).unwrap();
        write_factors(&path, &f, "y").unwrap();
        let (back, hash) = read_factors(&path).unwrap();
        assert_eq!(hash, "y");
        assert_eq!(back.h_values(), f.h_values());
        assert_eq!(back.alpha(), f.alpha());
        assert_eq!(back.beta(), f.beta());
        assert_eq!(back.lines(), f.lines());
        assert_eq!(back.settings(), f.settings());
    }

    #[test]
    fn writing_is_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let g = sinogram(BoundaryKind::UnitDisk);
        let (p, q) = (dir.path().join("a"), dir.path().join("b"));
        write_sinogram(&p, &g, "h").unwrap();
        write_sinogram(&q, &g, "h").unwrap();
        assert_eq!(std::fs::read(p).unwrap(), std::fs::read(q).unwrap());
    }
}
