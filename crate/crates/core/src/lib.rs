//! Bounds on the average treatment effect for a real-world population,
//! obtained by fusing a randomized trial with an observational study.
//!
//! The trial-eligible part of the observational population gets a point
//! estimate transported from the trial; only the ineligible remainder is
//! subjected to a sensitivity analysis. The two pieces are recombined with
//! the sample proportions.

pub mod bootstrap;
pub mod cli;
pub mod dataset;
pub mod epsen;
pub mod error;
pub mod generalize;
pub mod linalg;
pub mod ovb;
pub mod par;
pub mod regress;
pub mod rng;
pub mod sim;
pub mod svg;
pub mod synthesis;

pub use dataset::{EligibilityCriteria, FusedDataset, Rule, Sample, SchemaConfig, UnitRecord};
pub use error::{Error, Result};
pub use synthesis::{BoundResult, SynthesisResult};
