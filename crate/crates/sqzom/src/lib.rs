//! Simulation and analysis toolkit for a microwave cavity optomechanical
//! system driven by displaced squeezed thermal states.
//!
//! The crate computes, with no free parameters:
//! - measurement noise budgets (imprecision, backaction, added and total
//!   noise in phonon units) and their cooperativity sweeps ([`budget`]);
//! - homodyne/heterodyne output noise spectra of the linearized input–output
//!   model, including squeezing-induced Fano lineshapes, plus lineshape
//!   fitting back to physical quantities ([`spectra`]);
//! - mechanically-mediated tomography of the squeezed drive: phase sweeps of
//!   the integrated sideband power, squeezing-parameter fits, and the
//!   optomechanical detection efficiency ([`tomography`]);
//! - an independent time-domain Langevin oracle cross-validating the analytic
//!   spectra ([`montecarlo`]);
//! - optimal squeezing/drive settings under bounds ([`optimizer`]).
//!
//! The shared physical model (parameters, drive covariance, cooperativity
//! algebra) lives in [`model`]. The `sqzom` binary exposes everything as CLI
//! subcommands; see [`cli`].

pub mod budget;
pub mod cli;
pub mod error;
pub mod model;
pub mod montecarlo;
pub(crate) mod numeric;
pub mod optimizer;
pub mod spectra;
pub mod tomography;

pub use error::{Error, Result};
