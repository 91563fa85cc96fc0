//! HTTP service, session persistence and command-line pipeline for the
//! agent trainer.

pub mod api;
pub mod artifacts;
pub mod cli;
pub mod config;
pub mod demo;
pub mod generator;
pub mod store;
