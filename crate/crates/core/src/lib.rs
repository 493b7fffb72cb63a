//! Few-shot video object recognition with prototypical networks.
//!
//! The pipeline has two stages. Personalization turns a user's clean videos
//! into one prototype per object: clips are drawn with a uniform chunked
//! sampler, clips whose frames are mostly empty (low Sobel edge density) are
//! dropped, clip embeddings are averaged per class and the resulting prototype
//! set is refined by a single transformer encoder block. Recognition
//! classifies every frame of a cluttered video by building one causal clip
//! per frame and comparing its embedding to the prototypes by cosine
//! similarity.
//!
//! Alongside the pipeline the crate ships a binary PNM codec, a synthetic
//! dataset generator, and a multi-threaded frame loader with a
//! latency-injection benchmark.

pub mod adaptation;
pub mod clip_sampling;
pub mod commands;
pub mod config;
pub mod embedding;
mod error;
pub mod frame_validity;
mod jsonio;
pub mod media_io;
pub mod numerics;
pub mod pipeline;
pub mod protonet;
pub mod rng;

pub use error::{Error, ErrorKind, Result};
