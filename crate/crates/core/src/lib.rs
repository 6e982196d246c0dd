//! Frame-invariant constitutive relations embedded in a coupled Stokes and
//! damage finite-element model, with discrete-adjoint training.

pub mod adjoint;
pub mod config;
pub mod error;
pub mod fem;
pub mod models;
pub mod neural;
pub mod observe;
pub mod optim;
pub mod rate;
pub mod tensor;
pub mod workflow;

pub use error::{Error, Result};
