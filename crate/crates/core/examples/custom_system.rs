//! A user-defined system loaded from its JSON description:
//! `x' = -x y`, `y' = -2 y + x^2`, whose manifold is `y = x^2 / 2 + ...`.

use cmsurrogate::analysis::{residual_grid, taylor_center_manifold, TensorGrid};
use cmsurrogate::dynamics::{SplitSystem, SystemDescription};
use cmsurrogate::pipeline::default_grid;

const SYSTEM: &str = r#"{
  "name": "custom",
  "d": 1,
  "m": 1,
  "f1": [{"exponents": [1, 1], "coefficients": [-1.0]}],
  "f2": [{"exponents": [0, 1], "coefficients": [-2.0]},
         {"exponents": [2, 0], "coefficients": [1.0]}]
}"#;

fn main() -> cmsurrogate::Result<()> {
    let desc: SystemDescription = serde_json::from_str(SYSTEM).expect("valid JSON");
    let system = SplitSystem::from_description(&desc)?;
    let h = taylor_center_manifold(&system, 6)?;
    println!("h_2 = {:?}, h_4 = {:?}, h_6 = {:?}", h.coefficient(&[2]), h.coefficient(&[4]), h.coefficient(&[6]));
    let report = residual_grid(&h, &system, &TensorGrid::uniform(1, default_grid(1)))?;
    println!("max residual on [-0.1, 0.1]: {:.2e}", report.max_norm);
    Ok(())
}
