//! Finite-volume solvers and analysis tools for aggregation-diffusion
//! equations and their multi-species systems.

pub mod energetics;
pub mod mesh;
pub mod solver;
pub mod stationary;
pub mod transport;
pub mod workbench;
