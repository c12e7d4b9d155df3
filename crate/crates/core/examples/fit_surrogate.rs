//! Fits the constrained surrogate on a hand-made sample of `y = x^2` and
//! compares it with the exact manifold of Example 2.

use cmsurrogate::kernels::KernelSpec;
use cmsurrogate::regression::{fit, objective_value, RegressionProblem, WeightMode};

fn main() -> cmsurrogate::Result<()> {
    let centers: Vec<Vec<f64>> = [-0.1, -0.07, -0.03, 0.02, 0.05, 0.08, 0.1].iter().map(|v| vec![*v]).collect();
    let targets: Vec<Vec<f64>> = centers.iter().map(|x| vec![x[0] * x[0]]).collect();
    for spec in [KernelSpec::polynomial_k1(), KernelSpec::gaussian_k2()] {
        for mode in [WeightMode::DiagJitter, WeightMode::Literal] {
            let problem = RegressionProblem::new(centers.clone(), targets.clone(), spec, mode, 1e-10, 1, 1)?;
            let s = fit(&problem)?;
            let report = s.fit_report.as_ref().expect("fit report");
            let worst = (0..=200)
                .map(|i| -0.1 + 0.001 * i as f64)
                .map(|x| (s.eval(&[x]).unwrap()[0] - x * x).abs())
                .fold(0.0, f64::max);
            println!(
                "{spec} {mode:?}: max |s - x^2| = {worst:.2e}, |s(0)| = {:.1e}, |Ds(0)| = {:.1e}, J = {:.3e}, cond {:.1e}",
                report.origin_value_norm,
                report.origin_jacobian_norm,
                objective_value(&s, &problem)?,
                report.condition_estimate
            );
        }
    }
    Ok(())
}
