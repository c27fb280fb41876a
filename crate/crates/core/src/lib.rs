//! Weak-probe absorption spectra of multi-level media driven by a strong
//! periodic coupling field, via the harmonic expansion of the Lindblad
//! equation and the dressed states of a non-Hermitian Floquet Hamiltonian.

pub mod error;
pub mod io;
pub mod linalg;
pub mod liouvillian;
pub mod model;
pub mod propagation;
pub mod spectrum;
pub mod weakprobe;

pub use error::{Error, Result};
pub use num_complex::Complex64;
