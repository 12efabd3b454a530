pub mod error;
pub mod linalg;
pub mod model;
pub mod ode;

pub use error::{Error, Result};
pub use model::{
    critical_coupling, critical_spin, degeneracy, enumerate_subspaces, ModelParams,
    PerturbationSpec, SpinSubspace,
};
pub mod subspace;
pub mod meanfield;
pub mod dpt;
pub mod oracle;
pub mod analysis;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/model.md")]
    mod chapter1 {}
    #[doc = include_str!("../../../book/src/subspaces.md")]
    mod chapter2 {}
    #[doc = include_str!("../../../book/src/mean-field.md")]
    mod chapter3 {}
    #[doc = include_str!("../../../book/src/dpt.md")]
    mod chapter4 {}
    #[doc = include_str!("../../../book/src/oracle.md")]
    mod chapter5 {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod chapter6 {}
}
