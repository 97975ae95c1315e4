//! Sparse harmonic signal reconstruction from zero and level crossings.
//!
//! Signals are cosine series `x(t) = sum_n a_n cos(n w0 t)` with few nonzero
//! coefficients. A crossing-based converter only reveals on which side of each
//! reference level the signal lies at every sampling instant; this crate
//! rebuilds the coefficients from those signs.
//!
//! - [`signal`]: signal model, random sparse instances, SNR metric
//! - [`sampling`]: measurement matrices, sign measurements, event streams
//! - [`onebit`]: zero-crossing solvers (BSL0, BIHT) and shared kernels
//! - [`lc`]: level-crossing solvers (modified BIHT and BSL0)
//! - [`omp`]: conventional compressive-sensing baseline
//! - [`experiment`]: seeded Monte Carlo sweeps
//! - [`report`]: result CSV files and SVG plots

pub mod error;
pub mod experiment;
pub mod lc;
pub mod omp;
pub mod onebit;
pub mod operator;
pub mod report;
pub mod sampling;
pub mod signal;

pub use error::{Error, Result};
