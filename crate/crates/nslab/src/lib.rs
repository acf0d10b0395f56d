//! Numerical laboratory for fixed-energy inverse scattering.
//!
//! The crate implements a forward fixed-energy scattering solver (phase
//! shifts and Jost magnitudes at k = 1), the Newton-Sabatier kernel
//! machinery (basic integral equation, potential extraction, transformation
//! functions) with per-radius solvability diagnostics, and a set of scripted
//! experiments probing when the inversion pipeline can and cannot be carried
//! through.
//!
//! All radii are in units of 1/k with the energy fixed at k = 1.

pub mod bessel;
pub mod cli;
pub mod experiments;
pub mod forward;
pub mod ns;
pub mod numerics;
pub mod potential;
