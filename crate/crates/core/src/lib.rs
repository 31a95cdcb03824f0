//! Core of the lexflow legal document curation platform.
//!
//! The crate holds the document store (which doubles as a triple graph),
//! vocabularies, the annotation services, retrieval, the workflow engine,
//! shared memory and the worker runtime. Networking lives in `lexflow-cli`.

pub mod annotators;
pub mod clock;
pub mod corpus;
pub mod engine;
pub mod knowledge;
pub mod memory;
pub mod model;
pub mod persist;
pub mod resources;
pub mod retrieval;
pub mod store;
pub mod text;
pub mod workers;

pub use model::{Annotation, AnnotationKind, Collection, Document, Object, Triple};
pub use store::{LkgStore, StoreError};
