//! Numerical kernels against independent oracles: a cyclic Jacobi
//! eigensolver, plain finite differences, and closed-form Hessians.

use hwfair::data::{gen_synthetic, imbalance_margin_spec};
use hwfair::harness::acceptance::{model_zoo, rel_err, symmetric_suite, zoo_dataset};
use hwfair::models::{init_model, ArchSpec, ModelObjective};
use hwfair::numkit::{dense_lambda_max, full_hessian, hvp, max_eigenvalue, sigmoid, HessianOperator, Objective, QuadraticProbe};
use nalgebra::DMatrix;

/// All eigenvalues of a symmetric matrix by cyclic Jacobi rotations.
fn jacobi_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let n = m.nrows();
    let mut a = m.clone();
    for _sweep in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[(i, j)].powi(2)).sum();
        if off.sqrt() < 1e-14 * a.norm().max(1e-300) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[(p, q)].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * a[(p, q)]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[(k, p)], a[(k, q)]);
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[(p, k)], a[(q, k)]);
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..n).map(|i| a[(i, i)]).collect()
}

fn jacobi_max(m: &DMatrix<f64>) -> f64 {
    jacobi_eigenvalues(m).into_iter().fold(f64::NEG_INFINITY, f64::max)
}

#[test]
fn jacobi_oracle_on_known_spectrum() {
    let m = DMatrix::from_row_slice(3, 3, &[2.0, 1.0, 0.0, 1.0, 2.0, 0.0, 0.0, 0.0, -4.0]);
    let mut ev = jacobi_eigenvalues(&m);
    ev.sort_by(f64::total_cmp);
    for (a, b) in ev.iter().zip([-4.0, 1.0, 3.0]) {
        assert!((a - b).abs() < 1e-12, "{ev:?}");
    }
}

#[test]
fn dense_and_power_eigenvalues_match_jacobi() {
    for (i, m) in symmetric_suite(12, 8, 5).iter().enumerate() {
        let oracle = jacobi_max(m);
        let dense = dense_lambda_max(m);
        assert!((dense - oracle).abs() < 1e-10 * oracle.abs().max(1.0), "matrix {i}: {dense} vs {oracle}");
        let est = max_eigenvalue(m, i as u64, 1e-13, 200_000).unwrap();
        assert!((est.lambda_max - oracle).abs() < 1e-6 * oracle.abs().max(1.0), "matrix {i}: {} vs {oracle}", est.lambda_max);
    }
}

#[test]
fn negative_dominant_spectrum_gives_algebraic_max() {
    let m = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(&[-10.0, -3.0, 0.5]));
    let est = max_eigenvalue(&m, 0, 1e-12, 100_000).unwrap();
    assert!((est.lambda_max - 0.5).abs() < 1e-8, "{}", est.lambda_max);
}

fn simple_fd(obj: &dyn Objective, theta: &[f64]) -> Vec<f64> {
    let h = 1e-6;
    (0..theta.len())
        .map(|i| {
            let mut p = theta.to_vec();
            let mut m = theta.to_vec();
            p[i] += h;
            m[i] -= h;
            (obj.loss(&p).unwrap() - obj.loss(&m).unwrap()) / (2.0 * h)
        })
        .collect()
}

#[test]
fn zoo_gradients_match_finite_differences() {
    let ds = zoo_dataset(1).unwrap();
    for (name, spec) in model_zoo(ds.dim()) {
        let ds = if spec.num_classes() < ds.num_classes() {
            // Binary heads see labels folded to {0, 1}.
            let labels: Vec<usize> = ds.labels().iter().map(|l| l % 2).collect();
            hwfair::data::GroupedDataset::new(ds.dim(), ds.features().to_vec(), ds.groups().to_vec(), labels, ds.group_names().to_vec(), vec!["0".into(), "1".into()]).unwrap()
        } else {
            ds.clone()
        };
        let m = init_model(&spec, 4).unwrap();
        let obj = ModelObjective::new(&spec, ds.view());
        let g = obj.gradient(m.theta()).unwrap();
        let fd = simple_fd(&obj, m.theta());
        assert!(rel_err(&g, &fd) < 1e-6, "{name}: {}", rel_err(&g, &fd));
    }
}

#[test]
fn hvp_is_symmetric_and_linear() {
    let ds = gen_synthetic(&imbalance_margin_spec(2)).unwrap();
    let spec = ArchSpec::mlp(2, &[4], hwfair::models::Activation::Tanh, hwfair::models::Head::Sigmoid);
    let m = init_model(&spec, 1).unwrap();
    let obj = ModelObjective::new(&spec, ds.view());
    let k = spec.param_count();
    let u: Vec<f64> = (0..k).map(|i| (i as f64 * 1.3).cos()).collect();
    let v: Vec<f64> = (0..k).map(|i| (i as f64 * 0.4).sin() + 0.1).collect();
    let hu = hvp(&obj, m.theta(), &u).unwrap().value;
    let hv = hvp(&obj, m.theta(), &v).unwrap().value;
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let (vhu, uhv) = (dot(&v, &hu), dot(&u, &hv));
    assert!((vhu - uhv).abs() < 1e-6 * vhu.abs().max(uhv.abs()), "{vhu} vs {uhv}");

    let w: Vec<f64> = u.iter().zip(&v).map(|(a, b)| 2.0 * a - 3.0 * b).collect();
    let hw = hvp(&obj, m.theta(), &w).unwrap().value;
    let combo: Vec<f64> = hu.iter().zip(&hv).map(|(a, b)| 2.0 * a - 3.0 * b).collect();
    assert!(rel_err(&hw, &combo) < 1e-6, "{}", rel_err(&hw, &combo));
}

#[test]
fn quadratic_probe_hessian_is_exact() {
    let a = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, 0.0, 0.5, 0.0, 1.0]);
    let probe = QuadraticProbe::new(a.clone());
    let h = full_hessian(&probe, &[0.3, -0.2, 1.0]).unwrap();
    assert!((&h.matrix - &a).norm() < 1e-8);
    let op = HessianOperator::new(&probe, &[0.0; 3]);
    let est = max_eigenvalue(&op, 0, 1e-12, 100_000).unwrap();
    assert!((est.lambda_max - jacobi_max(&a)).abs() < 1e-6);
}

/// For logistic regression the Hessian is `mean f(1−f) x̃x̃ᵀ` with `x̃ = (x, 1)`.
#[test]
fn logistic_hessian_matches_closed_form() {
    let ds = gen_synthetic(&imbalance_margin_spec(3)).unwrap();
    let spec = ArchSpec::logistic(2);
    let m = init_model(&spec, 0).unwrap();
    let theta = m.theta();
    let mut closed = DMatrix::<f64>::zeros(3, 3);
    let mut bound = 0.0;
    for i in 0..ds.len() {
        let x = ds.row(i);
        let xt = [x[0], x[1], 1.0];
        let f = sigmoid(theta[0] * x[0] + theta[1] * x[1] + theta[2]);
        let w = f * (1.0 - f);
        for r in 0..3 {
            for c in 0..3 {
                closed[(r, c)] += w * xt[r] * xt[c];
            }
        }
        bound += w * xt.iter().map(|v| v * v).sum::<f64>();
    }
    closed /= ds.len() as f64;
    bound /= ds.len() as f64;

    let obj = ModelObjective::new(&spec, ds.view());
    let h = full_hessian(&obj, theta).unwrap();
    assert!((&h.matrix - &closed).norm() < 1e-7 * closed.norm(), "{}", (&h.matrix - &closed).norm());
    let lmax = jacobi_max(&closed);
    assert!(lmax <= bound + 1e-12, "{lmax} > {bound}");
    assert!((dense_lambda_max(&h.matrix) - lmax).abs() < 1e-7);
}
