//! Attenuated Radon transform on convex planar domains.
//!
//! The crate builds boundary data for the attenuated X-ray transform, tests
//! whether a given data set lies in the range of the transform through the
//! A-analytic Hilbert transforms `H0` and `Ha`, and reconstructs the source
//! from consistent data with an explicit Cauchy integral formula.
//!
//! Module map:
//! - [`geometry`]: convex boundaries, chords, ray casting.
//! - [`harmonics`]: angular Fourier modes, sequence convolution, norms.
//! - [`xray`]: phantoms, beam integrals, forward sinograms.
//! - [`bukhgeim`]: Cauchy operators, `H0`, range residual, reconstruction.
//! - [`attenuation`]: integrating factor, `Ha`, attenuated range test.
//! - [`io`]: binary and CSV persistence.

pub mod attenuation;
pub mod bukhgeim;
pub mod error;
pub mod geometry;
pub mod harmonics;
pub mod io;
pub mod xray;

pub use error::{Error, Result};
pub use num_complex::Complex64;
