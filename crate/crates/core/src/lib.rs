//! Degenerate cross-diffusion systems on the periodic box: changes of variables
//! to hyperbolic-parabolic normal form, their symmetrisers, free energies, and
//! solvers in both the original and the normal-form variables.

pub mod model;
pub mod spectral_structure;
pub mod transforms;
pub mod normal_form;
pub mod entropy;
pub mod grid;
pub mod solver;
