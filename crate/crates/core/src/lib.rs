//! Simulator for continuous-variable teleportation with three protocol
//! families: the standard two-mode-squeezed scheme, a photon-subtracted
//! variant, and a scheme built on a cubic phase gate and a CZ coupling.
//!
//! Quadratures follow `x = (a + a^dag)/2`, `y = (a - a^dag)/(2i)`, so the
//! vacuum has `<x^2> = <y^2> = 1/4` and its wavefunction is proportional to
//! `exp(-x^2)`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod metrics;
pub mod numerics;
pub mod protocols;
pub mod resources;
pub mod specfun;
pub mod states;

pub use error::{Error, Result};
pub use metrics::{Surface, SurfaceKind};
pub use protocols::{ConditionalOutput, E1Kind, Outcome};
pub use resources::{ResourceCoeffs, ResourceSpec};
pub use states::{FockVector, Grid, GridWavefunction};
