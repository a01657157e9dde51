//! IO, file formats, checkpointing, synthetic corpora, and the command-line
//! surface for the `ipac-core` engine.

pub mod checkpoint;
pub mod cli;
pub mod dataio;
pub mod error;
pub mod flags;
pub mod manifest;
pub mod pipeline;
pub mod report;
pub mod runcfg;
pub mod synth;
