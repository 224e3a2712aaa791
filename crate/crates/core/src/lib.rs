//! Truncated mixed q-Gaussian and q-Araki–Woods Fock-space models.

pub mod arakiwoods;
pub mod cache;
pub mod check;
pub mod convlemma;
pub mod error;
pub mod fock;
pub mod model;
pub mod ops;
pub mod qgram;
pub mod wick;

pub use error::{QfockError, Result};
pub use fock::{FockBasis, FockVector, Word, C64};
pub use qgram::{GramBlock, GramMode, QMatrix};
