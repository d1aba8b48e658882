//! Curvature as an operator: finite-difference Hessian-vector products, the
//! dense Hessian oracle, and the objectives they act on.

use std::sync::atomic::{AtomicUsize, Ordering};

use nalgebra::DMatrix;

use super::params::norm;
use crate::error::{Error, Result};

/// Relative disagreement allowed between the `h` and `h/2` HVP estimates.
pub const RICHARDSON_TOLERANCE: f64 = 1e-4;

/// Largest parameter count accepted by [`full_hessian`].
pub const FULL_HESSIAN_LIMIT: usize = 512;

/// A scalar function of θ with a reverse-mode gradient, evaluated in
/// reference mode.
pub trait Objective: Sync {
    fn dim(&self) -> usize;
    fn loss(&self, theta: &[f64]) -> Result<f64>;
    fn gradient(&self, theta: &[f64]) -> Result<Vec<f64>>;
}

impl<T: Objective + ?Sized> Objective for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn loss(&self, theta: &[f64]) -> Result<f64> {
        (**self).loss(theta)
    }
    fn gradient(&self, theta: &[f64]) -> Result<Vec<f64>> {
        (**self).gradient(theta)
    }
}

/// `½ θᵀAθ`: gradient `Aθ`, Hessian `A`.
#[derive(Debug, Clone)]
pub struct QuadraticProbe {
    a: DMatrix<f64>,
}

impl QuadraticProbe {
    /// `a` is symmetrized on construction.
    pub fn new(a: DMatrix<f64>) -> Self {
        assert!(a.is_square(), "quadratic probe needs a square matrix");
        let sym = (&a + a.transpose()) * 0.5;
        Self { a: sym }
    }

    pub fn identity(k: usize) -> Self {
        Self::new(DMatrix::identity(k, k))
    }

    pub fn diagonal(d: &[f64]) -> Self {
        Self::new(DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(d)))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }
}

impl Objective for QuadraticProbe {
    fn dim(&self) -> usize {
        self.a.nrows()
    }

    fn loss(&self, theta: &[f64]) -> Result<f64> {
        let g = self.gradient(theta)?;
        Ok(0.5 * super::params::dot(theta, &g))
    }

    fn gradient(&self, theta: &[f64]) -> Result<Vec<f64>> {
        if theta.len() != self.dim() {
            return Err(Error::ShapeError {
                expected: self.dim(),
                actual: theta.len(),
            });
        }
        let t = nalgebra::DVector::from_column_slice(theta);
        Ok((&self.a * t).as_slice().to_vec())
    }
}

/// Central-difference gradient with per-coordinate step `h_j = step·(1 + |θ_j|)`.
pub fn central_difference_gradient(obj: &dyn Objective, theta: &[f64], step: f64) -> Result<Vec<f64>> {
    let mut probe = theta.to_vec();
    let mut out = Vec::with_capacity(theta.len());
    for j in 0..theta.len() {
        let h = step * (1.0 + theta[j].abs());
        probe[j] = theta[j] + h;
        let up = obj.loss(&probe)?;
        probe[j] = theta[j] - h;
        let down = obj.loss(&probe)?;
        probe[j] = theta[j];
        out.push((up - down) / (2.0 * h));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct HvpResult {
    pub value: Vec<f64>,
    /// ‖D(h) − D(h/2)‖ / max(‖D(h)‖, ‖D(h/2)‖).
    pub richardson_rel: f64,
    /// Set when `richardson_rel` exceeds [`RICHARDSON_TOLERANCE`].
    pub ill_conditioned: bool,
}

fn central_hvp(obj: &dyn Objective, theta: &[f64], v: &[f64], h: f64) -> Result<Vec<f64>> {
    let plus: Vec<f64> = theta.iter().zip(v).map(|(t, d)| t + h * d).collect();
    let minus: Vec<f64> = theta.iter().zip(v).map(|(t, d)| t - h * d).collect();
    let gp = obj.gradient(&plus)?;
    let gm = obj.gradient(&minus)?;
    Ok(gp.iter().zip(&gm).map(|(a, b)| (a - b) / (2.0 * h)).collect())
}

/// `H(θ)·v` from central differences of the gradient.
///
/// Step `h = ε^{1/3}·(1 + ‖θ‖)/max(‖v‖, 1)`; a second estimate at `h/2`
/// flags the result when the two disagree by more than
/// [`RICHARDSON_TOLERANCE`] relative.
pub fn hvp(obj: &dyn Objective, theta: &[f64], v: &[f64]) -> Result<HvpResult> {
    if v.len() != theta.len() {
        return Err(Error::ShapeError {
            expected: theta.len(),
            actual: v.len(),
        });
    }
    let vn = norm(v);
    if vn == 0.0 {
        return Err(Error::ZeroDirection);
    }
    let h = f64::EPSILON.cbrt() * (1.0 + norm(theta)) / vn.max(1.0);
    let full = central_hvp(obj, theta, v, h)?;
    let half = central_hvp(obj, theta, v, 0.5 * h)?;
    let diff: Vec<f64> = full.iter().zip(&half).map(|(a, b)| a - b).collect();
    let scale = norm(&full).max(norm(&half));
    let richardson_rel = if scale == 0.0 { 0.0 } else { norm(&diff) / scale };
    if full.iter().any(|x| !x.is_finite()) {
        return Err(Error::NumericalOverflow {
            layer: "hvp".into(),
        });
    }
    Ok(HvpResult {
        value: full,
        richardson_rel,
        ill_conditioned: richardson_rel > RICHARDSON_TOLERANCE,
    })
}

/// A symmetric linear map applied without materializing its matrix.
pub trait LinearOperator: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, v: &[f64]) -> Result<Vec<f64>>;
}

impl LinearOperator for DMatrix<f64> {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.ncols() {
            return Err(Error::ShapeError {
                expected: self.ncols(),
                actual: v.len(),
            });
        }
        let x = nalgebra::DVector::from_column_slice(v);
        Ok((self * x).as_slice().to_vec())
    }
}

/// The Hessian of an objective at a fixed θ, exposed through [`hvp`].
pub struct HessianOperator<'a> {
    objective: &'a dyn Objective,
    theta: Vec<f64>,
    ill_conditioned: AtomicUsize,
    applications: AtomicUsize,
}

impl<'a> HessianOperator<'a> {
    pub fn new(objective: &'a dyn Objective, theta: &[f64]) -> Self {
        Self {
            objective,
            theta: theta.to_vec(),
            ill_conditioned: AtomicUsize::new(0),
            applications: AtomicUsize::new(0),
        }
    }

    /// Number of applications whose Richardson check failed.
    pub fn ill_conditioned_count(&self) -> usize {
        self.ill_conditioned.load(Ordering::Relaxed)
    }

    pub fn applications(&self) -> usize {
        self.applications.load(Ordering::Relaxed)
    }
}

impl LinearOperator for HessianOperator<'_> {
    fn dim(&self) -> usize {
        self.theta.len()
    }

    fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.applications.fetch_add(1, Ordering::Relaxed);
        match hvp(self.objective, &self.theta, v) {
            Ok(r) => {
                if r.ill_conditioned {
                    self.ill_conditioned.fetch_add(1, Ordering::Relaxed);
                }
                Ok(r.value)
            }
            Err(Error::ZeroDirection) => Ok(vec![0.0; v.len()]),
            Err(e) => Err(e),
        }
    }
}

#[derive(Debug, Clone)]
pub struct FullHessian {
    /// Symmetrized `(M + Mᵀ)/2`.
    pub matrix: DMatrix<f64>,
    /// `‖M − Mᵀ‖_F / ‖M‖_F` before symmetrization (0 for the zero matrix).
    pub asymmetry: f64,
}

/// Dense Hessian assembled column by column from [`hvp`] on basis vectors.
pub fn full_hessian(obj: &dyn Objective, theta: &[f64]) -> Result<FullHessian> {
    let k = theta.len();
    if k > FULL_HESSIAN_LIMIT {
        return Err(Error::OracleTooLarge {
            limit: FULL_HESSIAN_LIMIT,
            actual: k,
        });
    }
    let mut m = DMatrix::<f64>::zeros(k, k);
    let mut e = vec![0.0; k];
    for j in 0..k {
        e[j] = 1.0;
        let col = hvp(obj, theta, &e)?.value;
        e[j] = 0.0;
        for (i, c) in col.into_iter().enumerate() {
            m[(i, j)] = c;
        }
    }
    let fro = m.norm();
    let asymmetry = if fro == 0.0 {
        0.0
    } else {
        (&m - m.transpose()).norm() / fro
    };
    let matrix = (&m + m.transpose()) * 0.5;
    Ok(FullHessian { matrix, asymmetry })
}

/// Largest eigenvalue of a dense symmetric matrix via a direct eigensolver.
pub fn dense_lambda_max(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    let eig = nalgebra::SymmetricEigen::new(m.clone());
    eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_probe_gradient_and_hvp() {
        let identity = QuadraticProbe::identity(2);
        assert_eq!(identity.gradient(&[1.0, -2.0]).unwrap(), vec![1.0, -2.0]);

        let q = QuadraticProbe::diagonal(&[3.0, 1.0]);
        let r = hvp(&q, &[0.3, -0.7], &[1.0, 1.0]).unwrap();
        assert!((r.value[0] - 3.0).abs() < 1e-8);
        assert!((r.value[1] - 1.0).abs() < 1e-8);
        assert!(!r.ill_conditioned);
    }

    #[test]
    fn zero_direction_is_rejected() {
        let q = QuadraticProbe::identity(3);
        assert!(matches!(hvp(&q, &[1.0; 3], &[0.0; 3]), Err(Error::ZeroDirection)));
    }

    #[test]
    fn full_hessian_of_quadratic_is_its_matrix() {
        let a = DMatrix::from_row_slice(3, 3, &[2.0, 0.5, 0.0, 0.5, 1.0, -0.3, 0.0, -0.3, 4.0]);
        let q = QuadraticProbe::new(a.clone());
        let h = full_hessian(&q, &[0.1, 0.2, -0.4]).unwrap();
        assert!((&h.matrix - &a).norm() / a.norm() < 1e-8);
        assert!(h.asymmetry <= 1e-5);
    }

    #[test]
    fn oracle_guard() {
        let q = QuadraticProbe::identity(FULL_HESSIAN_LIMIT + 1);
        let theta = vec![0.0; FULL_HESSIAN_LIMIT + 1];
        assert!(matches!(
            full_hessian(&q, &theta),
            Err(Error::OracleTooLarge { .. })
        ));
    }

    #[test]
    fn central_difference_on_quadratic() {
        let q = QuadraticProbe::diagonal(&[3.0, 1.0]);
        let g = central_difference_gradient(&q, &[1.0, -2.0], 1e-5).unwrap();
        assert!((g[0] - 3.0).abs() < 1e-8);
        assert!((g[1] + 2.0).abs() < 1e-8);
    }
}
