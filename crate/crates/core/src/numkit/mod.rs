//! Numerics core: flat parameter vectors, reverse-mode differentiation,
//! Hessian-vector products and eigenvalue extraction.

mod eigen;
mod hessian;
mod params;
pub mod tape;

use std::sync::LazyLock;

pub use eigen::{max_eigenvalue, EigenEstimate};
pub use hessian::{
    central_difference_gradient, dense_lambda_max, full_hessian, hvp, FullHessian, HessianOperator,
    HvpResult, LinearOperator, Objective, QuadraticProbe, FULL_HESSIAN_LIMIT, RICHARDSON_TOLERANCE,
};
pub use params::{axpy, dot, hash_f64s, norm, Layout, LayoutBuilder, ParamVector, Slot};
pub use tape::{sigmoid, Tape, Var};

use crate::vhw::VirtualHardwareProfile;

static REFERENCE: LazyLock<VirtualHardwareProfile> = LazyLock::new(VirtualHardwareProfile::reference);

/// How forward passes and cross-sample sums are evaluated.
#[derive(Debug, Clone, Copy)]
pub enum EvalMode<'a> {
    /// Binary64, sequential, dataset order. Used by every diagnostic.
    Reference,
    Profiled(&'a VirtualHardwareProfile),
}

impl<'a> EvalMode<'a> {
    pub fn profile(&self) -> &'a VirtualHardwareProfile {
        match self {
            EvalMode::Reference => &REFERENCE,
            EvalMode::Profiled(p) => p,
        }
    }
}

/// Lower clamp for probabilities entering a logarithm; the upper clamp is `1 − PROB_CLAMP`.
pub const PROB_CLAMP: f64 = 1e-12;

#[inline]
pub fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}
