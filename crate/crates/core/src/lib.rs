//! Moments, conjugate variables and free Fisher information for semicircular
//! families evolving under a modular flow.
//!
//! The model class is a finite family of free semicircular generators whose
//! two-point functions come from atomic spectral measures in detailed
//! balance. Everything is computed from the free Wick formula on formal words.

pub mod acceptance;
pub mod algebra;
pub mod brownian;
pub mod conjugate;
pub mod core_cp;
pub mod derivation;
pub mod error;
pub mod linalg;
pub mod model;
pub mod moments;

pub use algebra::{Family, GenId, Letter, NcPoly, TimeTag, Word};
pub use error::{Error, Result};
pub use model::{GeneratorSpec, ModelSpec, SpectralAtom};
