//! Std companion to `recipekg-core`: file formats, seeded pipelines and the
//! `recipekg` command line.

pub mod cli;
pub mod commands;
pub mod error;
pub mod formats;
pub mod report;

pub use error::{Error, Result};
