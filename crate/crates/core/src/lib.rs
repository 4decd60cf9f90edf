//! Higher-order large-deviation expansions for weakly dependent sequences.
//!
//! A model supplies an analytic family of operators `z -> L(z)` with
//! `E exp(z S_N) = ell(L(z)^N v)`. From the Perron eigenvalue `lambda(z)`
//! and the amplitude `Z(z) = ell(Pi_z v)` the engine computes the saddle
//! point `theta_a`, the rate `I(a)` and the coefficients `D_k(a)` of
//!
//! ```text
//! P(S_N - N mean >= a N) e^{I(a) N} ~ sum_k D_k(a) / N^{k + 1/2}
//! ```
//!
//! The [`oracle`] module provides exact and Monte Carlo tail estimates used
//! to validate the expansions.
//!
//! The polynomial algebra ([`series`]) and quadrature ([`quad`]) are generic
//! over the scalar; the spectral and model layers work in `f64`.

pub mod engine;
pub mod error;
pub mod models;
pub mod oracle;
pub mod quad;
pub mod scalar;
pub mod series;
pub mod spectral;

use num_complex::Complex64;

pub use engine::{
    assemble_p, build_graded, evaluate_expansion, expand, expand_model, first_order, smooth_step, solve_tilt,
    strong_coefficients, weak_coefficients, EngineOptions, ExpansionDiagnostics, ExpansionResult, SmoothStep,
    TiltData, WeakCoefficient,
};
pub use error::{Error, ErrorClass, Result};
pub use models::{AnalyticFamily, Model, ModelSpec};
pub use oracle::{OracleEstimate, OracleMethod};
pub use spectral::{OperatorTriple, PerronData, TaylorData};

/// Complex-coefficient polynomial in `s`.
pub type PolynomialC = series::Polynomial<Complex64>;
/// Real-coefficient polynomial in `s`.
pub type PolynomialR = series::Polynomial<f64>;
/// Truncated series in `eps` and `s` with complex coefficients.
pub type GradedSeries = series::GradedSeries<Complex64>;
