//! Heap snapshots to static-analysis facts.
//!
//! The pipeline: [`hprof`] decodes the dump, [`heap`] resolves it into an
//! object graph, [`code`] describes allocation sites of the program,
//! [`abstraction`] maps objects onto sites, [`context`] recovers call edges
//! and context tuples, and [`facts`] writes the relations out. [`synth`]
//! builds dumps for tests and [`recall`] compares edge sets.

pub mod abstraction;
pub mod code;
pub mod context;
pub mod facts;
pub mod heap;
pub mod hprof;
pub mod jvm;
pub mod pipeline;
pub mod recall;
pub mod enricher;
pub mod synth;
