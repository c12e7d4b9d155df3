//! P-greedy on the Example 2 trajectory data under both tolerance readings.

use cmsurrogate::dynamics::{build_dataset, sign_grid, DomainBox, IntegrationSettings, SplitSystem};
use cmsurrogate::greedy::{deduplicate_candidates, p_greedy_select, TolMode};
use cmsurrogate::kernels::KernelSpec;

fn main() -> cmsurrogate::Result<()> {
    let system = SplitSystem::example2();
    let ds = build_dataset(
        &system,
        &sign_grid(2, 0.8),
        &IntegrationSettings::default(),
        &DomainBox::symmetric(1, 0.1),
    )?;
    let (candidates, _) = deduplicate_candidates(&ds.x_points);
    println!("{} candidates", candidates.len());
    for spec in [KernelSpec::polynomial_k1(), KernelSpec::gaussian_k2()] {
        for mode in [TolMode::PowerSquared, TolMode::Power] {
            let sel = p_greedy_select(&candidates, &spec, 1e-15, mode, 1000)?;
            let mut points: Vec<f64> = sel.selected_indices.iter().map(|&i| candidates[i][0]).collect();
            points.sort_by(f64::total_cmp);
            println!("{spec} {mode:?}: {} centers, final power {:.3e}", points.len(), sel.final_max_power);
            println!("  centers {points:.4?}");
        }
    }
    Ok(())
}
