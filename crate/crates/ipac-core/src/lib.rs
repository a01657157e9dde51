//! Cross-lingual phonemic representation learning, from scratch.
//!
//! The crate is organised around a small dense-tensor engine with reverse-mode
//! differentiation (`numerics`), a transformer encoder over phoneme ids
//! (`encoder`) with optional low-rank adapters (`lora`), the symmetric
//! in-batch contrastive objective (`contrastive`), BIO tagging data handling
//! (`data`), a deterministic two-phase trainer (`trainer`/`optim`), and span
//! and cosine evaluation (`eval`).
//!
//! Everything here is `no_std`-compatible (with `alloc`); file formats, the
//! CLI, and checkpoint IO live in the companion `ipac` crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod contrastive;
pub mod data;
pub mod encoder;
pub mod eval;
pub mod hash;
pub mod lora;
pub mod math;
pub mod numerics;
pub mod optim;
pub mod phoneme;
pub mod rng;
pub mod trainer;
pub mod verify;
