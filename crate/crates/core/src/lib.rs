//! Synthetic knowledge-graph testbed for studying when a model trained on a
//! crowd of simulated experts outperforms every one of them.
//!
//! The pipeline runs graph generation ([`graph_gen`]) → edge clustering
//! ([`clustering`]) → expert construction ([`experts`]) → corpus emission
//! ([`corpus`]), and the exact tabular learners in [`mixture`] and
//! [`gen_learner`] stand in for neural training. [`eval`] holds the shortcut
//! baselines, sweeps and CSV reports.

pub mod clustering;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod experts;
pub mod gen_learner;
pub mod graph_gen;
pub mod kg;
pub mod mixture;
pub mod seed;

pub use error::{Error, Result};
pub use kg::{Entity, EntityId, Fact, FactId, KnowledgeGraph, QueryKey, Relation, RelationId, TwoHopFact};
