//! Robust integral model-predictive control for piecewise-affine (PWA)
//! friction-dominated motion plants.
//!
//! The crate covers the whole pipeline: the PWA plant and an optional
//! nonlinear-friction plant, integral state augmentation, terminal
//! ingredient synthesis (LQR and H∞ gains, Lyapunov terminal costs,
//! maximal positively invariant terminal sets), the receding-horizon
//! controller with its explicit lookup-table export, a relay-tuned PID
//! baseline and a deterministic closed-loop simulation harness.
//!
//! Units are fixed everywhere: mm, mm/s, V and s.

pub mod augment;
pub mod baseline;
pub mod config;
pub mod error;
pub mod io;
pub mod mpc;
pub mod numerics;
pub mod plant;
pub mod polytope;
pub mod sim;
pub mod synthesis;

pub use error::{Error, Result};
pub use numerics::{Matrix, Vector};
