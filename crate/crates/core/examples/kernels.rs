//! Kernel values and closed-form derivatives, checked against central
//! differences at a random-looking point.

use cmsurrogate::kernels::KernelSpec;

fn main() -> cmsurrogate::Result<()> {
    let x = [0.3, -0.7];
    let y = [-0.2, 0.45];
    for spec in [KernelSpec::polynomial_k1(), KernelSpec::gaussian_k2()] {
        let k = spec.eval(&x, &y)?;
        let g = spec.grad_second(&x, &y)?;
        let h = spec.mixed_hessian(&x, &y)?;
        let step = 1e-6;
        let mut fd = [0.0; 2];
        for (j, out) in fd.iter_mut().enumerate() {
            let (mut yp, mut ym) = (y, y);
            yp[j] += step;
            ym[j] -= step;
            *out = (spec.eval(&x, &yp)? - spec.eval(&x, &ym)?) / (2.0 * step);
        }
        println!("{spec}  (json {})", serde_json::to_string(&spec).unwrap());
        println!("  k(x, y)           = {k:.12}");
        println!("  d/dy k analytic   = {:.9?}", g);
        println!("  d/dy k difference = {:.9?}", fd);
        println!("  d2/dxdy k         = {:.9?}", h.as_slice());
    }
    Ok(())
}
