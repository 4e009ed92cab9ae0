//! Semantic-role-aware text representations.
//!
//! Sentences are read twice: a wordpiece tokenizer feeds a small
//! transformer encoder (the text view), and per-predicate role annotations
//! feed a label embedder (the semantics view). A convolution aligns
//! subwords back to words, the two views are concatenated per word, and
//! task heads consume the joint representation. Everything runs on an
//! f64 tape with reverse-mode gradients that are verified against central
//! differences.

pub mod config;
pub mod data;
pub mod embedder;
pub mod encoder;
pub mod error;
pub mod fusion;
pub mod gradcheck;
pub mod heads;
pub mod metrics;
pub mod model;
pub mod ops;
pub mod optim;
pub mod params;
pub mod rng;
pub mod srl;
pub mod synth;
pub mod tape;
pub mod tensor;
pub mod tokenizer;
pub mod train;

pub use error::{Error, Result};
pub use rng::Rng;
pub use tape::{NodeId, Tape};
pub use tensor::Tensor;
