//! Tobit (left-censored at zero) regression with classical and
//! bootstrap-based model-selection criteria.
//!
//! The crate is organised bottom-up:
//!
//! - [`normal`] and [`rng`] hold the numerical primitives (standard normal
//!   functions and the splittable random stream).
//! - [`tobit`] fits the censored regression model by maximum likelihood.
//! - [`bootstrap`] generates nonparametric, parametric and hybrid training
//!   samples.
//! - [`criteria`] scores a fitted candidate with AIC/AICc/BIC/HQ, the five
//!   EIC bias corrections, BCV/CV632 and BQCV/632QCV.
//! - [`selection`] scans nested families or enumerates best subsets.
//! - [`simulation`] runs the identification-frequency experiments.
//! - [`cli`] wires everything to CSV/TSV files and the command line.

pub mod bootstrap;
pub mod cli;
pub mod criteria;
pub mod error;
pub mod normal;
pub mod rng;
pub mod selection;
pub mod simulation;
pub mod tobit;

pub use bootstrap::{BootstrapReplicate, BootstrapSpec, Mechanism};
pub use criteria::{BiasConstantMode, CriterionId, CriterionKind, CriterionScore};
pub use error::{Error, Result};
pub use selection::{CandidateFamily, SelectionResult, Specification};
pub use simulation::{IdentificationTable, SimulationConfig};
pub use tobit::{CensoredDataset, FitOptions, TobitFit, TobitParams};
