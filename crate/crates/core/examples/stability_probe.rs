//! Reduced dynamics `x' = f1(x, h(x))` on the Taylor model: the origin of
//! Example 1 repels, those of Examples 2 and 3 attract.

use cmsurrogate::analysis::{stability_probe, taylor_center_manifold};
use cmsurrogate::dynamics::{IntegrationSettings, SplitSystem};

fn main() -> cmsurrogate::Result<()> {
    let settings = IntegrationSettings {
        t_end: 200.0,
        ..Default::default()
    };
    for name in ["example1", "example2", "example3"] {
        let system = SplitSystem::builtin(name).expect("built-in");
        let h = taylor_center_manifold(&system, 4)?;
        let mut x0 = vec![0.0; system.center_dim()];
        x0[0] = 0.05;
        let (verdict, traj) = stability_probe(&h, &system, &x0, &settings)?;
        println!("{name}: {verdict:?}, x(T) = {:.6?}", traj.states.last().unwrap());
    }
    Ok(())
}
