//! Forward model and inverse fitting for the relaxation dynamics of a pulsed
//! double-quantum-dot charge qubit.
//!
//! All quantities use meV, ns, nm and K; rates are in 1/ns unless a name says
//! otherwise.

// `!(x < y)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dotgeom;
pub mod dynamics;
pub mod error;
pub mod inference;
pub mod interp;
pub mod io;
pub mod quad;
pub mod qubit;
pub mod rate;
pub mod special;
pub mod spectral;
pub mod units;

pub use error::{DataError, DynamicsError, GeometryError, InferenceError, ParamError, SpectralError};
pub use qubit::{EigenGeometry, QubitParams};
