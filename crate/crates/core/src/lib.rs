//! Relatedness between discrete word senses, measured two ways: from the
//! geometry of contextual token embeddings and from human spatial-arrangement
//! judgments, plus the statistics that compare them.
//!
//! The crate is organised by pipeline stage:
//!
//! * [`corpus`] reads a sense-annotated token file, builds per-lemma sense
//!   distributions and selects stimuli by sense entropy.
//! * [`embeddings`] loads token vectors and derives sense-centroid
//!   relatedness matrices.
//! * [`classifier`] trains L1-regularised multinomial logistic regression
//!   per word type, cross-validates it and turns confusions into relatedness.
//! * [`human`] normalises placements, screens participants and aggregates.
//! * [`stats`] holds rank correlation, Mann-Whitney U, OLS and the matrix
//!   comparison helpers.
//! * [`viz`] produces t-SNE projections, single-linkage dendrograms, density
//!   tables and SVG exports.
//! * [`pipeline`] wires everything into a reproducible run with a report.

pub mod classifier;
pub mod corpus;
pub mod embeddings;
pub mod error;
pub mod fixture;
pub mod human;
pub mod pipeline;
pub mod relatedness;
pub mod seed;
pub mod stats;
pub mod viz;

pub use error::{Error, ErrorKind, Result};
