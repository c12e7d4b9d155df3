//! Taylor coefficients of the center manifolds of the built-in systems and
//! how the invariance residual of the truncated series scales with radius.

use cmsurrogate::analysis::{residual_grid, taylor_center_manifold, GridAxis, TensorGrid};
use cmsurrogate::dynamics::SplitSystem;
use cmsurrogate::polynomial::FieldTerm;

fn main() -> cmsurrogate::Result<()> {
    for name in ["example1", "example2", "example3"] {
        let system = SplitSystem::builtin(name).expect("built-in");
        let h = taylor_center_manifold(&system, 4)?;
        println!("{name}:");
        for table in h.to_file().tables {
            for FieldTerm { exponents, coefficients } in table.terms {
                println!("  x^{exponents:?}: {coefficients:?}");
            }
        }
        for k in 2..=4 {
            let hk = taylor_center_manifold(&system, k)?;
            let at = |rho: f64| {
                let grid = TensorGrid::uniform(system.center_dim(), GridAxis { lo: -rho, hi: rho, n: 41 });
                residual_grid(&hk, &system, &grid).map(|r| r.max_norm)
            };
            let (a, b) = (at(0.025)?, at(0.05)?);
            println!("  degree {k}: residual {a:.2e} -> {b:.2e}, log-log slope {:.2}", (b / a).log2());
        }
    }
    Ok(())
}
