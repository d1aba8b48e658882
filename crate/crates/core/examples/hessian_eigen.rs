//! Gradient, Hessian-vector product and top Hessian eigenvalue of a small
//! tanh network, each checked against a dense or finite-difference oracle.

use hwfair::data::{gen_synthetic, imbalance_margin_spec};
use hwfair::models::{init_model, ArchSpec, Activation, Head, ModelObjective};
use hwfair::numkit::{central_difference_gradient, dense_lambda_max, full_hessian, hvp, max_eigenvalue, HessianOperator, Objective};

fn main() -> hwfair::Result<()> {
    let ds = gen_synthetic(&imbalance_margin_spec(0))?;
    let spec = ArchSpec::mlp(2, &[6], Activation::Tanh, Head::Sigmoid);
    let model = init_model(&spec, 3)?;
    let obj = ModelObjective::new(&spec, ds.view());
    let theta = model.theta();
    println!("{} parameters, {} samples", theta.len(), ds.len());

    let g = obj.gradient(theta)?;
    let fd = central_difference_gradient(&obj, theta, 1e-5)?;
    let gerr = g.iter().zip(&fd).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    println!("max |analytic − finite difference| gradient entry: {gerr:.2e}");

    let v: Vec<f64> = (0..theta.len()).map(|i| ((i as f64) * 0.7).sin()).collect();
    let hv = hvp(&obj, theta, &v)?;
    println!("H·v Richardson disagreement {:.2e} (ill-conditioned: {})", hv.richardson_rel, hv.ill_conditioned);

    let op = HessianOperator::new(&obj, theta);
    let est = max_eigenvalue(&op, 0, 1e-10, 5000)?;
    let dense = full_hessian(&obj, theta)?;
    let exact = dense_lambda_max(&dense.matrix);
    println!(
        "λ_max: power iteration {:.10} ({} H·v, converged {}), dense {:.10}, asymmetry {:.1e}",
        est.lambda_max, est.iters, est.converged, exact, dense.asymmetry
    );
    Ok(())
}
