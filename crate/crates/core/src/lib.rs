//! A numerical laboratory for the Burgers equation perturbed by a Bessel
//! potential,
//!
//! ```text
//! u_t + u^p u_x - K_s u_x = 0,     K_s = (1 - d_xx)^{-s/2} = G_s *
//! ```
//!
//! The crate evaluates the kernel `G_s` and its envelopes, integrates the
//! equation pseudospectrally on a periodic box, tracks characteristics up to
//! gradient blow-up, evaluates the blow-up hypothesis sets and time windows,
//! measures linear dispersive decay, computes solitary waves, and runs a
//! finite-volume entropy solver past the breaking time.
//!
//! All numerical code is generic over [`Scalar`] (`f32` or `f64`); the `*64`
//! aliases below are what the CLI and the acceptance suite use.

// `!(a < b)` is used deliberately so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod characteristics;
pub mod entropy;
pub mod error;
pub mod evolve;
pub mod io;
pub mod kernel;
pub mod lineardisp;
pub mod quad;
pub mod scalar;
pub mod soliton;
pub mod spectral;
pub mod stats;
pub mod theorems;

pub use error::{Error, Result};
pub use kernel::{KernelMethod, KernelSpec, KernelTable};
pub use scalar::Scalar;
pub use spectral::{Grid, GridField};

pub type KernelSpec64 = KernelSpec<f64>;
pub type KernelSpec32 = KernelSpec<f32>;
pub type Grid64 = Grid<f64>;
pub type Grid32 = Grid<f32>;
pub type GridField64 = GridField<f64>;
pub type GridField32 = GridField<f32>;
pub type EvolveConfig64 = evolve::EvolveConfig<f64>;
pub type SimState64 = evolve::SimState<f64>;
pub type CharacteristicBundle64 = characteristics::CharacteristicBundle<f64>;
pub type SolitonProfile64 = soliton::SolitonProfile<f64>;
pub type FvConfig64 = entropy::FvConfig<f64>;
pub type FvState64 = entropy::FvState<f64>;
