//! Verification toolkit for the Dirac–Yang–Mills system on flat charts and
//! flat tori: Clifford and exterior algebra, compact gauge algebras, the Dirac
//! current, finite-difference field calculus, truncated spectral analysis of
//! twisted Dirac operators, exact index arithmetic and the BPST construction.

pub mod cli;
pub mod clifford;
pub mod construct;
pub mod current;
pub mod error;
pub mod exterior;
pub mod fieldcalc;
pub mod gauge;
pub mod index;
pub mod linalg;
pub mod par;
pub mod spectral;
pub mod tol;

pub use error::{Error, Result};
