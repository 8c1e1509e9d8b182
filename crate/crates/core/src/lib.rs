//! Rule-based verbalization of RDF triples.
//!
//! A [`model::RuleBase`] holds rules written in the [`ruledsl`] language;
//! the [`selector`] runs them at inference time. The [`trainer`] asks a chat
//! model (through [`llm`]) to write and repair those rules against reference
//! texts, and [`cluster`] proposes predicate combinations for synthetic
//! augmentation. [`evalx`] scores the result.

pub mod cluster;
pub mod evalx;
pub mod llm;
pub mod model;
pub mod prompt;
pub mod ruledsl;
pub mod selector;
pub mod trainer;
