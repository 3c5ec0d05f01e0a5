//! Adapted post-hoc explanations for tabular classifiers.
//!
//! The pipeline finds the closest counterfactual with growing fields, asks a
//! linearity oracle whether the decision boundary around it is simple enough
//! for a linear surrogate, and otherwise falls back to rules plus one
//! counterfactual per enemy cluster.

pub mod ape;
pub mod counterfactual;
pub mod error;
pub mod evalharness;
pub mod fieldgen;
pub mod geometry;
pub mod kmeans;
pub mod models;
pub mod oracle;
pub mod rng;
pub mod rules;
pub mod stats;
pub mod surrogates;
pub mod tabular;

pub use error::{Error, Result};
pub use models::Classifier;
pub use tabular::{Dataset, FeatureKind, FeatureSpec, Instance};
