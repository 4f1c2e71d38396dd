//! Forward and inverse seismic-type Radon transforms (parabolic, signed-power
//! and hyperbolic families) on `R^n x R`, with the quadrature, phantom and
//! backprojection machinery they need.
//!
//! The main entry points are [`seismic::forward_sinogram`],
//! [`seismic::du_n_filter`] and [`inversion::invert`]; [`inversion::roundtrip_report`]
//! chains them for a certified [`phantom::Phantom`].

// `!(a > b)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod inversion;
pub mod io;
pub mod phantom;
pub mod quadrature;
pub mod seismic;
pub mod source;
pub mod standard_radon;
pub mod types;

pub use error::{RadonError, Result};
pub use inversion::{
    invert, invert_p, invert_q, invert_r, roundtrip_report, ReconRequest, RoundtripSetup,
    STruncation,
};
pub use phantom::{make_phantom, FunctionSpace, Phantom, PhantomWidths};
pub use quadrature::{QuadScheme, QuadratureRule};
pub use seismic::{du_n_filter, forward_sinogram, SweepOptions};
pub use source::Source;
pub use types::*;
