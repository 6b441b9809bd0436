//! Simulation, maximum-likelihood process tomography, Kraus diagnosis and
//! repair prediction for a post-selected two-photon singlet-state filter
//! (Hong-Ou-Mandel interference at a beamsplitter).
//!
//! The crate is organized bottom-up:
//!
//! - [`polarization`]: single-photon kets, two-photon density matrices, the
//!   Bell basis, the tomographic state set and the real 16-vector encoding.
//! - [`superop`]: process superoperators as a real 16×16 matrix, a Choi
//!   matrix or a Kraus list, with conversions and the phase-shifter repair.
//! - [`hom_sim`]: the physical filter model and Poisson count synthesis.
//! - [`tomography`]: linear inversion, Cholesky-parameterized maximum
//!   likelihood for states and processes, and bootstrap ensembles.
//! - [`metrics`]: concurrence, linear entropy, fidelity and the repaired
//!   filter report.
//! - [`pipeline`]: the diagnose / repair / predict chain shared by the CLI.

pub mod error;
pub mod hom_sim;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod optimize;
pub mod pipeline;
pub mod polarization;
pub mod superop;
pub mod tomography;

pub use error::{Error, Result};
pub use hom_sim::{CountRecord, FilterModel, Preset};
pub use metrics::FilterReport;
pub use polarization::{Basis, BellState, PolLabel, ProductLabel, RhoVector, TomographicSet, TwoPhotonState};
pub use superop::{ChoiMatrix, KrausSet, SuperMatrix};
pub use tomography::{BootstrapEnsemble, MleOptions, ProcessTomoResult, StateTomoResult};
