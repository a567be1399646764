//! Coarse geometry of SOL, Diestel-Leader graphs and lamplighter groups.

pub mod bfs;
pub mod cli;
pub mod coarse;
pub mod dl;
pub mod error;
pub mod hplane;
pub mod lamplighter;
pub mod qgen;
pub mod qilab;
pub mod sol;
pub mod trace;

pub use error::{Error, Result};
