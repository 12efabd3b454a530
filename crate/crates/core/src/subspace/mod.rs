//! Fixed-S open Dicke dynamics: operators, steady states, photon Wigner function.

mod operators;
mod solver;
mod wigner;

pub use operators::{build_hamiltonian, OperatorSet, ProductBasis, DEFAULT_DIM_CAP};
pub use solver::{
    evolve, generator_residual, moments_of, steady_state, steady_state_at_cutoff, DensityMatrix,
    FockPolicy, SteadyMethod, SteadyOptions, SubspaceMoments, DIRECT_CAP,
};
pub use wigner::{wigner_of_photon, wigner_photon, WignerGrid, WignerSpec};
