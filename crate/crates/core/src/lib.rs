//! Physical reservoir computing with a simulated Miura-ori sheet.
//!
//! The crate is split along the processing chain: [`geometry`] builds the
//! folded bar-and-hinge mesh, [`dynamics`] shakes it and samples vertex
//! displacements, [`reservoir`] trains and evaluates linear readouts,
//! [`tasks`] implements the perception experiments and [`harness`] wires
//! configuration, campaigns, file formats and reports together.

pub mod error;
pub mod dynamics;
pub mod geometry;
pub mod reservoir;
pub mod tasks;
pub mod harness;

pub use error::{Error, Result};
