//! Algebraic-maximum eigenvalue of a symmetric operator by shifted power
//! iteration.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::hessian::LinearOperator;
use super::params::{dot, norm};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EigenEstimate {
    pub lambda_max: f64,
    /// Total operator applications over both phases.
    pub iters: usize,
    pub converged: bool,
    /// Spectral-radius estimate used as the shift.
    pub spectral_radius: f64,
}

fn random_unit(dim: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
    let n = norm(&v);
    v.iter_mut().for_each(|x| *x /= n);
    v
}

/// Largest (algebraic) eigenvalue of a symmetric operator.
///
/// Phase one estimates the spectral radius `r` as the limit of `‖A v‖` under
/// power iteration. Phase two runs power iteration on `A + r·I`, whose
/// spectrum is shifted to be non-negative, and reports the Rayleigh quotient
/// minus `r`. Both phases stop on relative change below `tol`; running out of
/// `max_iters` in either phase returns the last estimate with
/// `converged = false`.
pub fn max_eigenvalue(
    op: &dyn LinearOperator,
    seed: u64,
    tol: f64,
    max_iters: usize,
) -> Result<EigenEstimate> {
    if !(tol > 0.0) {
        return Err(Error::Config(format!("tolerance must be positive, got {tol}")));
    }
    let dim = op.dim();
    if dim == 0 {
        return Ok(EigenEstimate {
            lambda_max: 0.0,
            iters: 0,
            converged: true,
            spectral_radius: 0.0,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut iters = 0;

    // Phase one: spectral radius.
    let mut v = random_unit(dim, &mut rng);
    let mut radius = 0.0;
    let mut radius_converged = false;
    for _ in 0..max_iters {
        let w = op.apply(&v)?;
        iters += 1;
        let next = norm(&w);
        if !next.is_finite() {
            return Err(Error::NumericalOverflow {
                layer: "power iteration".into(),
            });
        }
        if next == 0.0 {
            // A random direction in the kernel: the operator is zero.
            return Ok(EigenEstimate {
                lambda_max: 0.0,
                iters,
                converged: true,
                spectral_radius: 0.0,
            });
        }
        let change = (next - radius).abs();
        radius = next;
        v = w.into_iter().map(|x| x / next).collect();
        if change <= tol * next {
            radius_converged = true;
            break;
        }
    }

    // Phase two: power iteration on A + rI.
    let mut v = random_unit(dim, &mut rng);
    let mut mu = f64::NAN;
    let mut shifted_converged = false;
    for _ in 0..max_iters {
        let av = op.apply(&v)?;
        iters += 1;
        let w: Vec<f64> = av.iter().zip(&v).map(|(a, x)| a + radius * x).collect();
        let next_mu = dot(&v, &w);
        let wn = norm(&w);
        if !wn.is_finite() {
            return Err(Error::NumericalOverflow {
                layer: "power iteration".into(),
            });
        }
        let change = (next_mu - mu).abs();
        mu = next_mu;
        if wn == 0.0 {
            shifted_converged = true;
            break;
        }
        v = w.into_iter().map(|x| x / wn).collect();
        if change <= tol * mu.abs().max(f64::MIN_POSITIVE) {
            shifted_converged = true;
            break;
        }
    }

    Ok(EigenEstimate {
        lambda_max: mu - radius,
        iters,
        converged: radius_converged && shifted_converged,
        spectral_radius: radius,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn diag(d: &[f64]) -> DMatrix<f64> {
        DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(d))
    }

    #[test]
    fn diagonal_spectra() {
        let e = max_eigenvalue(&diag(&[3.0, 1.0]), 1, 1e-12, 10_000).unwrap();
        assert!(e.converged);
        assert!((e.lambda_max - 3.0).abs() < 1e-9);

        let e = max_eigenvalue(&diag(&[-5.0, 2.0]), 1, 1e-12, 10_000).unwrap();
        assert!((e.lambda_max - 2.0).abs() < 1e-9, "{e:?}");
        assert!((e.spectral_radius - 5.0).abs() < 1e-9);
    }

    #[test]
    fn opposite_pair_radius() {
        let e = max_eigenvalue(&diag(&[-4.0, 4.0, 1.0]), 3, 1e-12, 10_000).unwrap();
        assert!((e.lambda_max - 4.0).abs() < 1e-8, "{e:?}");
    }

    #[test]
    fn zero_operator() {
        let e = max_eigenvalue(&DMatrix::<f64>::zeros(4, 4), 0, 1e-8, 100).unwrap();
        assert_eq!(e.lambda_max, 0.0);
        assert!(e.converged);
    }

    #[test]
    fn non_convergence_is_reported() {
        let m = diag(&[1.0, 0.999_999, 0.5]);
        let e = max_eigenvalue(&m, 0, 1e-15, 3).unwrap();
        assert!(!e.converged);
        assert!(e.lambda_max.is_finite());
    }

    #[test]
    fn deterministic_given_seed() {
        let m = DMatrix::from_row_slice(3, 3, &[2.0, 1.0, 0.0, 1.0, -1.0, 0.5, 0.0, 0.5, 0.3]);
        let a = max_eigenvalue(&m, 11, 1e-10, 1000).unwrap();
        let b = max_eigenvalue(&m, 11, 1e-10, 1000).unwrap();
        assert_eq!(a.lambda_max.to_bits(), b.lambda_max.to_bits());
        assert_eq!(a.iters, b.iters);
    }

    #[test]
    fn rejects_bad_tolerance() {
        assert!(max_eigenvalue(&diag(&[1.0]), 0, 0.0, 10).is_err());
    }
}
