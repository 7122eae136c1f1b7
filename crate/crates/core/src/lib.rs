//! Log Gaussian Cox process (LGCP) classification.
//!
//! Each class is modelled as an independent Cox process whose log intensity is
//! a stationary Gaussian process. Conditioned on the observed covariates the
//! labels follow a fully connected Potts model, which gives:
//!
//! - [`classify`]: closed-form supervised prediction, linear in the number of
//!   training points, and the kernel density classifier it agrees with;
//! - [`mrf`]: the explicit Potts energies for semi-supervised labelling,
//!   together with exhaustive oracles for small instances;
//! - [`mincut`] and [`expansion`]: exact binary MAP by min-cut and multiclass
//!   MAP by alpha-expansion;
//! - [`simulate`]: Gaussian process fields, Poisson sampling and thinning;
//! - [`data`], [`cv`] and [`bench`]: datasets, hyperparameter selection and
//!   timing harnesses.
//!
//! Class labels are zero-based everywhere inside the library. The CSV layer in
//! [`data`] converts to and from the one-based labels used on disk.

pub mod bench;
pub mod classify;
pub mod cv;
pub mod data;
pub mod error;
pub mod expansion;
pub mod kernels;
pub mod mincut;
pub mod mrf;
pub mod rng;
pub mod simulate;

pub use classify::{ClassModel, PredictiveDistribution};
pub use data::Dataset;
pub use error::{Error, Result};
pub use expansion::{ssl_solve, SslSolution};
pub use kernels::{Kernel, KernelFamily};
pub use mrf::{EnergyGraph, Labeling};
