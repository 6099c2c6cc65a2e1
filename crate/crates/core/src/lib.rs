//! Simulation library for dual state/variable dynamics.
//!
//! A measurement process can be described twice over: statistical states
//! (probability measures over hidden states) evolve forward in time, while
//! physical variables (functions of the hidden state) evolve backward from
//! the readout time. The two descriptions are conjugate: averaging the
//! backward-evolved variable in the initial state equals averaging the final
//! variable in the forward-evolved state. This crate provides
//!
//! * gridded state spaces, measures and variables ([`statespace`]),
//! * forward (Fokker-Planck) and backward Kolmogorov solvers for diffusions,
//!   plus path simulation and the conjugation diagnostic ([`kolmogorov`]),
//! * adaptive measurement models whose dynamics depend on the chosen setting,
//!   with classical vs observational average reports, range and spectrum
//!   checks ([`chameleon`]),
//! * two singlet-correlation models reproducing `E(a,b) = -cos(a-b)` and a
//!   CHSH value of `2 sqrt(2)` ([`eprbohm`]),
//! * detection/post-selection experiments around the fair-sampling assumption
//!   and the detection loophole ([`sampling`]),
//! * the config-driven scenario runner behind the `chamsim` CLI
//!   ([`scenario`]).
//!
//! All randomness flows through seedable, splittable generators ([`rng`]);
//! identical configs and seeds reproduce identical bytes.

pub mod chameleon;
pub mod eprbohm;
pub mod error;
pub mod kolmogorov;
pub mod rng;
pub mod sampling;
pub mod scenario;
pub mod statespace;

pub use error::{Error, Result};
