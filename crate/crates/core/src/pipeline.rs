//! The file-based pipeline: simulate, select, fit, evaluate, and the
//! end-to-end reproduction of the three reference experiments.
//!
//! Each stage reads the artifacts of the previous one from disk and writes
//! its own, so stages can be rerun independently. Selection files carry the
//! hash of the dataset they came from and model files the hash of their
//! selection, which lets a later stage detect stale inputs.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::{residual_grid, taylor_center_manifold, GridAxis, ManifoldModel, TensorGrid, ZeroModel};
use crate::artifacts::{
    dataset_csv, eval_csv, file_sha256, load_system, read_dataset, read_json, sha256_hex, write_atomic, write_json,
    write_taylor, DatasetSidecar, ModelFile, SelectionFile,
};
use crate::dynamics::{build_dataset, sign_grid, DomainBox, IntegrationSettings};
use crate::error::{check_dim, Error, Result};
use crate::greedy::{deduplicate_candidates, p_greedy_select, TolMode};
use crate::kernels::KernelSpec;
use crate::regression::{fit_with_dims, FitReport, RegressionProblem, WeightMode};

/// Center-coordinate box: `[-h, h]` or `[lo, hi]` on every axis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxSpec {
    pub lo: f64,
    pub hi: f64,
}

impl BoxSpec {
    pub fn symmetric(half_width: f64) -> Self {
        BoxSpec {
            lo: -half_width,
            hi: half_width,
        }
    }

    pub fn domain(&self, d: usize) -> DomainBox {
        DomainBox {
            lower: vec![self.lo; d],
            upper: vec![self.hi; d],
        }
    }
}

impl std::str::FromStr for BoxSpec {
    type Err = Error;

    /// `H` or `LO:HI`. `LO > HI` is an empty box.
    fn from_str(s: &str) -> Result<Self> {
        let num = |t: &str| {
            t.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| !v.is_nan())
                .ok_or_else(|| Error::Parse(format!("box {s:?}: bad number {t:?}")))
        };
        match s.split_once(':') {
            Some((lo, hi)) => Ok(BoxSpec { lo: num(lo)?, hi: num(hi)? }),
            None => {
                let h = num(s)?;
                if h < 0.0 {
                    return Err(Error::Parse(format!("box {s:?}: half-width must be non-negative")));
                }
                Ok(BoxSpec::symmetric(h))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Built-in system name or path to a system file.
    pub system: String,
    pub integration: IntegrationSettings,
    /// Initial states are all sign patterns of this magnitude.
    pub init_mag: f64,
    pub domain: BoxSpec,
    pub kernel: KernelSpec,
    pub eps_tol: f64,
    pub tol_mode: TolMode,
    pub max_points: usize,
    pub lambda: f64,
    pub weight_mode: WeightMode,
    /// Axis of the evaluation grid; `None` picks a size from the dimension.
    pub grid: Option<GridAxis>,
    pub taylor_degree: usize,
}

/// Default selection tolerance for a system: `1e-10` for the
/// three-dimensional reference example, `1e-15` otherwise.
pub fn default_eps(system: &str) -> f64 {
    if system == "example3" {
        1e-10
    } else {
        1e-15
    }
}

/// `[-0.1, 0.1]` per axis: 401 nodes in 1D, 101 in 2D, 21 beyond.
pub fn default_grid(d: usize) -> GridAxis {
    let n = match d {
        1 => 401,
        2 => 101,
        _ => 21,
    };
    GridAxis { lo: -0.1, hi: 0.1, n }
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            system: "example1".into(),
            integration: IntegrationSettings::default(),
            init_mag: 0.8,
            domain: BoxSpec::symmetric(0.1),
            kernel: KernelSpec::polynomial_k1(),
            eps_tol: default_eps("example1"),
            tol_mode: TolMode::default(),
            max_points: 1000,
            lambda: 1e-10,
            weight_mode: WeightMode::default(),
            grid: None,
            taylor_degree: 4,
        }
    }
}

/// `data.csv` -> `data.provenance.json`
pub fn sidecar_path(dataset: &Path) -> PathBuf {
    dataset.with_extension("provenance.json")
}

/// `eval.csv` -> `eval.taylor.json`
pub fn taylor_path(eval: &Path) -> PathBuf {
    eval.with_extension("taylor.json")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulateSummary {
    pub raw_count: usize,
    pub retained_count: usize,
    /// Total Newton steps that did not converge, over all trajectories.
    pub nonconverged_steps: usize,
    pub dataset_sha256: String,
}

/// Simulates the initial grid, writes the dataset CSV and its sidecar.
pub fn run_simulate(cfg: &PipelineConfig, out: &Path) -> Result<SimulateSummary> {
    let system = load_system(&cfg.system)?;
    let grid = sign_grid(system.state_dim(), cfg.init_mag);
    let domain = cfg.domain.domain(system.center_dim());
    let ds = build_dataset(&system, &grid, &cfg.integration, &domain)?;
    let bytes = dataset_csv(&ds)?;
    let hash = sha256_hex(&bytes);
    let provenance = ds.provenance.expect("build_dataset records provenance");
    let summary = SimulateSummary {
        raw_count: provenance.raw_count,
        retained_count: provenance.retained_count,
        nonconverged_steps: provenance.nonconverged_steps.iter().map(Vec::len).sum(),
        dataset_sha256: hash.clone(),
    };
    write_atomic(out, &bytes)?;
    write_json(
        &sidecar_path(out),
        &DatasetSidecar {
            dataset_sha256: hash,
            domain_box: domain,
            provenance,
        },
    )?;
    Ok(summary)
}

/// Deduplicates the dataset's x-points, runs P-greedy and writes the selection.
pub fn run_greedy(cfg: &PipelineConfig, dataset: &Path, out: &Path) -> Result<SelectionFile> {
    let selection = select(cfg, dataset, cfg.tol_mode)?;
    write_json(out, &selection)?;
    Ok(selection)
}

fn select(cfg: &PipelineConfig, dataset: &Path, tol_mode: TolMode) -> Result<SelectionFile> {
    let ds = read_dataset(dataset)?;
    if ds.is_empty() {
        return Err(Error::EmptyDataset(format!("{} has no rows", dataset.display())));
    }
    let (candidates, rows) = deduplicate_candidates(&ds.x_points);
    if candidates.is_empty() {
        return Err(Error::EmptyDataset(format!(
            "{} contains only the origin",
            dataset.display()
        )));
    }
    let sel = p_greedy_select(&candidates, &cfg.kernel, cfg.eps_tol, tol_mode, cfg.max_points)?;
    Ok(SelectionFile::new(
        file_sha256(dataset)?,
        cfg.kernel,
        cfg.max_points,
        &candidates,
        &rows,
        &sel,
    ))
}

/// Fits the selected pairs with the selection's kernel and writes the model.
pub fn run_fit(cfg: &PipelineConfig, dataset: &Path, selection: &Path, out: &Path) -> Result<ModelFile> {
    let model = fit_model(cfg, dataset, selection)?;
    write_json(out, &model)?;
    Ok(model)
}

fn fit_model(cfg: &PipelineConfig, dataset: &Path, selection: &Path) -> Result<ModelFile> {
    let sel: SelectionFile = read_json(selection)?;
    if sel.dataset_sha256 != file_sha256(dataset)? {
        return Err(Error::invalid(format!(
            "{} was not selected from {}; rerun greedy",
            selection.display(),
            dataset.display()
        )));
    }
    let ds = read_dataset(dataset)?;
    let mut centers = Vec::with_capacity(sel.dataset_rows.len());
    let mut targets = Vec::with_capacity(sel.dataset_rows.len());
    for (&row, point) in sel.dataset_rows.iter().zip(&sel.selected_points) {
        let x = ds
            .x_points
            .get(row)
            .ok_or_else(|| Error::invalid(format!("selection row {row} is outside the dataset")))?;
        if x != point {
            return Err(Error::invalid(format!("selection row {row} does not match its stored point")));
        }
        centers.push(x.clone());
        targets.push(ds.y_points[row].clone());
    }
    let problem = RegressionProblem::new(centers, targets, sel.kernel, cfg.weight_mode, cfg.lambda, ds.d, ds.m)?;
    let s = fit_with_dims(&problem, ds.d, ds.m)?;
    Ok(ModelFile::new(&s, cfg.lambda, cfg.weight_mode, file_sha256(selection)?))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub rows: usize,
    pub taylor_degree: usize,
    pub max_abs_taylor_diff: f64,
    pub max_residual: f64,
    pub mean_residual: f64,
    /// Residual of `h = 0` on the same grid, for scale.
    pub zero_model_max_residual: f64,
}

/// Evaluates a model file against the Taylor oracle on the grid, writes the
/// evaluation CSV and the oracle coefficients next to it.
pub fn run_eval(cfg: &PipelineConfig, model: &Path, out: &Path) -> Result<EvalSummary> {
    let system = load_system(&cfg.system)?;
    let file: ModelFile = read_json(model)?;
    check_dim("model center dimension", file.d, system.center_dim())?;
    check_dim("model stable dimension", file.m, system.stable_dim())?;
    let s = file.surrogate()?;
    let taylor = taylor_center_manifold(&system, cfg.taylor_degree)?;
    let d = system.center_dim();
    let grid = TensorGrid::uniform(d, cfg.grid.unwrap_or_else(|| default_grid(d)));
    let report = residual_grid(&s, &system, &grid)?;
    let zero = residual_grid(&ZeroModel { d, m: system.stable_dim() }, &system, &grid)?;
    let mut max_diff: f64 = 0.0;
    for x in &report.points {
        for (a, b) in s.value(x)?.iter().zip(taylor.value(x)?) {
            max_diff = max_diff.max((a - b).abs());
        }
    }
    let bytes = eval_csv(&report, &s, &taylor)?;
    write_taylor(&taylor_path(out), &taylor)?;
    write_atomic(out, &bytes)?;
    Ok(EvalSummary {
        rows: report.points.len(),
        taylor_degree: cfg.taylor_degree,
        max_abs_taylor_diff: max_diff,
        max_residual: report.max_norm,
        mean_residual: report.mean_norm,
        zero_model_max_residual: zero.max_norm,
    })
}

/// Figures quoted for one reference experiment.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceFigures {
    pub example: u8,
    /// Retained pairs, where quoted.
    pub dataset_count: Option<usize>,
    /// Selection sizes for the polynomial and the Gaussian kernel.
    pub greedy_sizes: [usize; 2],
    pub eps_tol: f64,
}

pub fn reference_figures(example: u8) -> Result<ReferenceFigures> {
    let (dataset_count, greedy_sizes, eps_tol) = match example {
        1 => (Some(38248), [14, 6], 1e-15),
        2 => (None, [12, 6], 1e-15),
        3 => (Some(78796), [21, 25], 1e-10),
        _ => return Err(Error::invalid(format!("example {example}: expected 1, 2 or 3"))),
    };
    Ok(ReferenceFigures {
        example,
        dataset_count,
        greedy_sizes,
        eps_tol,
    })
}

/// `k1` (polynomial) or `k2` (Gaussian).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelChoice {
    K1,
    K2,
}

impl KernelChoice {
    pub fn spec(self) -> KernelSpec {
        match self {
            KernelChoice::K1 => KernelSpec::polynomial_k1(),
            KernelChoice::K2 => KernelSpec::gaussian_k2(),
        }
    }

    fn slot(self) -> usize {
        match self {
            KernelChoice::K1 => 0,
            KernelChoice::K2 => 1,
        }
    }
}

impl std::str::FromStr for KernelChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "k1" | "1" => Ok(KernelChoice::K1),
            "k2" | "2" => Ok(KernelChoice::K2),
            _ => Err(Error::Parse(format!("kernel {s:?}: expected k1 or k2"))),
        }
    }
}

impl PipelineConfig {
    /// Reference settings of one experiment with the chosen kernel.
    pub fn reference(example: u8, kernel: KernelChoice) -> Result<Self> {
        let reference = reference_figures(example)?;
        Ok(PipelineConfig {
            system: format!("example{example}"),
            kernel: kernel.spec(),
            eps_tol: reference.eps_tol,
            ..Default::default()
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetComparison {
    pub quoted: Option<usize>,
    pub reproduced: usize,
    pub raw: usize,
    pub nonconverged_steps: usize,
    pub boundary: String,
    pub initial_state_included: bool,
}

/// Outcome of the selection under one tolerance reading.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeResult {
    pub tol_mode: TolMode,
    pub size: Option<usize>,
    pub final_max_power: Option<f64>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GreedyComparison {
    pub quoted: usize,
    pub tol_mode: TolMode,
    pub reproduced: usize,
    pub by_mode: Vec<ModeResult>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReproductionReport {
    pub example: u8,
    pub kernel: KernelSpec,
    pub config: PipelineConfig,
    pub dataset: DatasetComparison,
    pub greedy: Option<GreedyComparison>,
    pub fit: Option<FitReport>,
    pub eval: Option<EvalSummary>,
    /// The stage error that ended the run, if any.
    pub failure: Option<String>,
}

/// File names used by [`reproduce`] inside its output directory.
pub mod names {
    pub const DATASET: &str = "dataset.csv";
    pub const SELECTION: &str = "selection.json";
    pub const MODEL: &str = "model.json";
    pub const EVAL: &str = "eval.csv";
    pub const REPORT: &str = "report.json";
}

/// Runs all four stages with `cfg` in `outdir` and writes `report.json`.
/// A stage failure is recorded in the report, which is still written, and
/// then returned.
pub fn reproduce(example: u8, cfg: &PipelineConfig, outdir: &Path) -> Result<ReproductionReport> {
    let reference = reference_figures(example)?;
    let slot = if cfg.kernel == KernelSpec::gaussian_k2() {
        KernelChoice::K2.slot()
    } else {
        KernelChoice::K1.slot()
    };
    std::fs::create_dir_all(outdir).map_err(|e| Error::io(outdir, e))?;
    let dataset = outdir.join(names::DATASET);
    let sim = run_simulate(cfg, &dataset)?;
    let mut report = ReproductionReport {
        example,
        kernel: cfg.kernel,
        config: cfg.clone(),
        dataset: DatasetComparison {
            quoted: reference.dataset_count,
            reproduced: sim.retained_count,
            raw: sim.raw_count,
            nonconverged_steps: sim.nonconverged_steps,
            boundary: "closed".into(),
            initial_state_included: true,
        },
        greedy: None,
        fit: None,
        eval: None,
        failure: None,
    };
    let result = finish(cfg, reference.greedy_sizes[slot], outdir, &dataset, &mut report);
    if let Err(e) = &result {
        report.failure = Some(e.to_string());
    }
    write_json(&outdir.join(names::REPORT), &report)?;
    result.map(|()| report)
}

fn finish(
    cfg: &PipelineConfig,
    quoted_size: usize,
    outdir: &Path,
    dataset: &Path,
    report: &mut ReproductionReport,
) -> Result<()> {
    let selection_path = outdir.join(names::SELECTION);
    let selection = run_greedy(cfg, dataset, &selection_path)?;
    let by_mode = [TolMode::PowerSquared, TolMode::Power]
        .into_iter()
        .map(|mode| {
            let outcome = if mode == cfg.tol_mode {
                Ok(selection.clone())
            } else {
                select(cfg, dataset, mode)
            };
            match outcome {
                Ok(sel) => ModeResult {
                    tol_mode: mode,
                    size: Some(sel.selected_indices.len()),
                    final_max_power: Some(sel.final_max_power),
                    error: None,
                },
                Err(e) => ModeResult {
                    tol_mode: mode,
                    size: None,
                    final_max_power: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    report.greedy = Some(GreedyComparison {
        quoted: quoted_size,
        tol_mode: cfg.tol_mode,
        reproduced: selection.selected_indices.len(),
        by_mode,
    });
    let model_path = outdir.join(names::MODEL);
    let model = run_fit(cfg, dataset, &selection_path, &model_path)?;
    report.fit = model.fit_report;
    report.eval = Some(run_eval(cfg, &model_path, &outdir.join(names::EVAL))?);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_parsing() {
        assert_eq!("0.1".parse::<BoxSpec>().unwrap(), BoxSpec::symmetric(0.1));
        let b: BoxSpec = "0.2:0.1".parse().unwrap();
        assert!(!b.domain(1).contains(&[0.15]));
        assert!("-1".parse::<BoxSpec>().is_err());
        assert!("a:b".parse::<BoxSpec>().is_err());
    }

    #[test]
    fn reference_configs() {
        let c = PipelineConfig::reference(3, KernelChoice::K2).unwrap();
        assert_eq!(c.eps_tol, 1e-10);
        assert_eq!(c.kernel, KernelSpec::gaussian_k2());
        assert_eq!(c.integration.step_count(), 10000);
        assert!(PipelineConfig::reference(4, KernelChoice::K1).is_err());
        assert_eq!(default_grid(2).n, 101);
    }

    #[test]
    fn derived_paths() {
        assert_eq!(sidecar_path(Path::new("a/data.csv")), Path::new("a/data.provenance.json"));
        assert_eq!(taylor_path(Path::new("eval.csv")), Path::new("eval.taylor.json"));
    }
}
