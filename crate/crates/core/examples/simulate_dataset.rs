//! Integrates the sign grid of each built-in system with implicit Euler and
//! reports how many states land in the box `[-0.1, 0.1]^d`.

use std::time::Instant;

use cmsurrogate::dynamics::{build_dataset, sign_grid, DomainBox, IntegrationSettings, SplitSystem};

fn main() -> cmsurrogate::Result<()> {
    let settings = IntegrationSettings::default();
    for name in ["example1", "example2", "example3"] {
        let system = SplitSystem::builtin(name).expect("built-in");
        let start = Instant::now();
        let ds = build_dataset(
            &system,
            &sign_grid(system.state_dim(), 0.8),
            &settings,
            &DomainBox::symmetric(system.center_dim(), 0.1),
        )?;
        let p = ds.provenance.as_ref().expect("provenance");
        let failed: Vec<usize> = p.nonconverged_steps.iter().map(Vec::len).collect();
        println!(
            "{name}: {} of {} states retained, non-converged steps per trajectory {failed:?}, {:.2?}",
            ds.len(),
            p.raw_count,
            start.elapsed()
        );
    }
    Ok(())
}
