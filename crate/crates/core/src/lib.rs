//! Context-aware temporal event forecasting.
//!
//! Events are `(subject, relation, object, time, context)` quintuples. Each
//! snapshot is split by context label and encoded by an independent recurrent
//! relational graph encoder per context ([`encoder`]); the per-context
//! embeddings of every entity and relation are then mixed across contexts by a
//! parameter-free hypergraph propagation ([`collab`]); a per-context
//! convolutional head ([`decoder`]) scores candidate objects.
//!
//! The crate also ships the surrounding tooling: dataset I/O ([`event`]),
//! a small reverse-mode autodiff engine and optimizer ([`numerics`]), the
//! training loop and checkpoints ([`train`], [`checkpoint`]), ranking
//! evaluation and ablations ([`eval`]), TF-IDF/K-means context labelling
//! ([`contexts`]) and planted-context synthetic datasets ([`synthetic`]).

pub mod checkpoint;
pub mod collab;
pub mod config;
pub mod contexts;
pub mod decoder;
pub mod encoder;
mod error;
pub mod eval;
pub mod event;
pub mod model;
pub mod numerics;
pub mod synthetic;
pub mod train;

pub use error::{Error, Result};
