//! Dynamical stochastic higher spin vertex models.
//!
//! Modules, bottom to top: [`specfun`] (Pochhammer symbols, theta, hypergeometric
//! series), [`weights`] (unfused, fused and stochastic vertex weights),
//! [`symfun`] (elliptic weight functions as partition functions), [`models`]
//! (seeded samplers and exact laws), [`observables`] (moment identities by Monte
//! Carlo, enumeration and contour quadrature), [`asymptotics`] (limit shapes and
//! desk-scale experiments) and [`cli`] (command-line orchestration).

pub mod error;
pub mod specfun;
pub mod weights;
pub mod report;
pub mod symfun;
pub mod models;
pub mod observables;
pub mod asymptotics;
pub mod cli;

pub use error::{Error, Result};
pub use specfun::C64;
