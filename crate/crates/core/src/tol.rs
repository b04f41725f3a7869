//! Tolerance table shared by the identity checks and the property suites.

/// Pointwise algebraic identities (Clifford, Hodge, pairing).
pub const IDENTITY: f64 = 1e-12;
/// Exactness checks that only involve a handful of floating operations.
pub const ROUNDING: f64 = 1e-13;
/// Imaginary parts of bilinears that must be real.
pub const REALITY: f64 = 1e-13;
/// Lie-algebra homomorphism and Killing residuals.
pub const LIE: f64 = 1e-12;
/// Spectral symmetry and free-spectrum comparisons.
pub const SPECTRAL: f64 = 1e-10;
/// Relative threshold for the numerical kernel of a truncated operator.
pub const KERNEL_RELATIVE: f64 = 1e-8;
/// Minimum eigenvector overlap accepted by the branch matcher.
pub const BRANCH_OVERLAP: f64 = 0.9;
/// Default finite-difference step.
pub const FD_STEP: f64 = 1e-2;
