//! Doppler-recooling analysis toolkit for trapped Yb⁺ ions.
//!
//! The crate bundles
//! - an analytic recooling model (oscillation-averaged scatter rates,
//!   energy trajectories, expected fluorescence curves),
//! - a photon-by-photon Monte Carlo simulator that serves as the model's
//!   independent oracle and as a synthetic-data generator,
//! - fitting machinery to extract initial energies, heating rates, the
//!   frequency scaling law and the electric-field noise density,
//! - auxiliary instrument math (helical-resonator relations, Mathieu
//!   estimates, transfer-cavity ratio locking), and
//! - file-format and CLI plumbing for reproducible pipelines.

pub mod config;
pub mod fit;
pub mod io;
pub mod lock;
pub mod mc;
pub mod model;
pub mod physics;
pub mod quad;
pub mod transitions;
pub mod trap;
