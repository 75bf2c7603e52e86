//! Detection and measurement of fractal basin boundaries in the phase space
//! of ODE systems.

pub mod boundary;
pub mod ensemble;
pub mod fractal;
pub mod integrate;
pub mod regression;
pub mod store;
pub mod sysdsl;
pub mod workflow;
