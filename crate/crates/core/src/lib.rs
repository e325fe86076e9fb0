//! Contextual semantic-space document classification.
//!
//! Two weakly-labeled corpora (documents that carry a base string and a
//! relevant code, versus documents that carry neither) are turned into a
//! semantic space: the terms whose mean TF-IDF is high in the positive corpus
//! but not in the negative one, each paired with its nearest neighbours in a
//! skip-gram embedding. Documents are then mapped into that space by summing,
//! for every feature occurrence, the cosine similarity of each context word
//! found in a window around it, scaled by the feature's mean TF-IDF. A small
//! feed-forward network trained on the mapped vectors yields a probability
//! for the unseen target class.
//!
//! The crate is `no_std` (it needs `alloc`). File formats, configuration and
//! the command-line tool live in the `zsl` crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod baseline;
pub mod embedding;
mod error;
pub mod eval;
pub mod math;
pub mod mlp;
pub mod space;
pub mod synth;
pub mod text;
pub mod tfidf;

pub use error::{Error, Result};
pub use text::{Corpus, Document, Label};
