//! Diachronic semantic shift detection over contextual token embeddings.
//!
//! The pipeline runs in stages that communicate only through files:
//!
//! 1. [`corpus`] loads time-stamped documents and bins them into periods.
//! 2. [`tokenizer`] splits documents into WordPiece sequences that fit the encoder.
//! 3. An external encoder turns sequences into a CTE1 stream ([`embedding_io`]).
//! 4. [`aggregate`] averages usage vectors into per-period and global word representations.
//! 5. [`shift`] scores cosine distance, neighbors, meaning change and trajectories.
//! 6. [`eval`] correlates shift scores with a human gold standard and generates
//!    synthetic streams with planted shifts.

pub mod aggregate;
pub mod corpus;
pub mod embedding_io;
pub mod eval;
pub mod rng;
pub mod shift;
pub mod tokenizer;

pub use aggregate::{
    build_representations, MeanAccumulator, Representation, RepresentationStore, Scope,
    ScopeSelection, StoreSet, GLOBAL_SCOPE,
};
pub use corpus::{Document, PeriodConfig, PeriodSet, PreprocessRules};
pub use embedding_io::{SequenceBlock, StreamHeader, TokenRecord};
pub use tokenizer::{TokenizedSequence, Vocab};
