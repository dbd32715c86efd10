//! Dissipative tunneling of a Gaussian wave packet through smoothly joined
//! parabolic potentials, described by Lindblad equations of motion for the
//! first and second moments.

pub mod cli;
pub mod config;
pub mod dynamics;
pub mod experiment;
pub mod observables;
pub mod potential;
pub mod special;
pub mod units;
pub mod validation;
