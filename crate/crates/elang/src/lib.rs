//! File formats, command line and HTTP gateway around [`elang_core`].

pub mod cli;
pub mod config;
pub mod format;
pub mod gateway;

pub use elang_core as core;
