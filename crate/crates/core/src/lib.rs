//! Thermally actuated bilayer plates: heat diffusion on the flat parametric
//! domain coupled one way to an isometry-constrained Kirchhoff plate with
//! obstacle penalization.

pub mod api;
pub mod config;
pub mod dkq;
pub mod error;
pub mod heat;
pub mod mesh;
pub mod output;
pub mod plate;
pub mod quadrature;
pub mod scenarios;
pub mod simulation;
pub mod sparse;
pub mod sweep;
pub mod verify;

pub use error::{Error, Result};
