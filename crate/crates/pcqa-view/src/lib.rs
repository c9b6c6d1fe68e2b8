//! Files, command-line stages and the annotation server around
//! `pcqa-view-core`.

pub mod config;
pub mod imaging;
pub mod manifest;
pub mod mos;
pub mod pipeline;
pub mod ply;
pub mod serve;
pub mod store;

pub use pcqa_view_core;
