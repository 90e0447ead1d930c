//! Algorithmic core of the recipe knowledge-graph recommender.
//!
//! Everything in this crate is `no_std` with `alloc`: graph data model and
//! split protocols, dense-network kernels, rotation-based knowledge-graph
//! embeddings trained with self-adversarial negative sampling, ranking
//! metrics, clustering, embedding alignment, review retrieval and the
//! KGE-guided variational autoencoder. File formats, logging and the command
//! line live in the `recipekg` companion crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod align;
pub mod cluster;
pub mod embed;
mod error;
pub mod eval;
pub mod kg;
pub mod kge;
pub mod kgvae;
pub mod math;
pub mod nn;
pub mod rng;
pub mod rrs;
pub mod split;
pub mod synth;

pub use error::{Error, Result};
pub use kg::{EntityId, EntityKind, KnowledgeGraph, NamedTriple, RelationId, Triple};
pub use split::DataSplit;
