//! Barrier certificates for interconnected switched impulsive systems,
//! synthesised one subsystem at a time with sum-of-squares programs and
//! composed into a certificate for the whole network.
//!
//! The pieces, bottom up:
//!
//! - [`polynomial`]: sparse multivariate polynomials over named variables.
//! - [`sdp`]: a homogeneous self-dual interior-point solver for block SDPs.
//! - [`sos`]: SOS programs and the local and global certificate programs.
//! - [`system`]: switched impulsive dynamics, sets, sampling and simulation.
//! - [`compose`]: gain matrices, Perron vectors and sum/max composition.
//! - [`synth`]: the local and global synthesis pipelines and the ring benchmark.
//! - [`verify`]: sampling-based checks of certificates and trajectories.
//! - [`config`], [`certificate`], [`cli`]: TOML instances, JSON certificates
//!   and the command-line front end.
//!
//! [`sir`] builds the multi-patch SIR epidemic used by the examples.

pub mod certificate;
pub mod cli;
pub mod compose;
pub mod config;
pub mod polynomial;
pub mod sdp;
pub mod sir;
pub mod sos;
pub mod synth;
pub mod system;
pub mod verify;

/// Reads `null` (how JSON writes NaN) back as NaN.
pub(crate) fn nullable_f64<'de, D: serde::Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    use serde::Deserialize;
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
}
