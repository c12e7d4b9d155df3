//! Command-line front end over [`crate::pipeline`].

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::analysis::GridAxis;
use crate::artifacts::DirLock;
use crate::dynamics::FailurePolicy;
use crate::error::{Error, Result};
use crate::greedy::TolMode;
use crate::kernels::KernelSpec;
use crate::pipeline::{
    default_eps, reproduce, run_eval, run_fit, run_greedy, run_simulate, BoxSpec, KernelChoice, PipelineConfig,
};
use crate::regression::WeightMode;

#[derive(Debug, Parser)]
#[command(name = "cmsurrogate", version, about = "Kernel surrogates of center manifolds from trajectory data")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate the initial grid and write the filtered dataset.
    Simulate {
        #[command(flatten)]
        opts: Options,
        #[arg(long, default_value = "dataset.csv")]
        out: PathBuf,
    },
    /// Select centers from a dataset with P-greedy.
    Greedy {
        #[command(flatten)]
        opts: Options,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value = "selection.json")]
        out: PathBuf,
    },
    /// Fit the constrained surrogate on a selection.
    Fit {
        #[command(flatten)]
        opts: Options,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        selection: PathBuf,
        #[arg(long, default_value = "model.json")]
        out: PathBuf,
    },
    /// Evaluate a model against the Taylor oracle and the invariance residual.
    Eval {
        #[command(flatten)]
        opts: Options,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value = "eval.csv")]
        out: PathBuf,
    },
    /// Run all stages with reference settings and compare against the quoted figures.
    Reproduce {
        /// 1, 2 or 3.
        example: u8,
        /// k1 or k2.
        #[arg(id = "reference_kernel", value_name = "KERNEL")]
        kernel: KernelChoice,
        #[command(flatten)]
        opts: Options,
        #[arg(long, default_value = "reproduction")]
        outdir: PathBuf,
    },
}

/// Overrides shared by all subcommands; unset values keep their defaults.
#[derive(Debug, Default, Args)]
pub struct Options {
    /// Built-in name (example1..3) or system file.
    #[arg(long)]
    pub system: Option<String>,
    /// poly:DEG:SCALE or gauss:SHAPE.
    #[arg(long)]
    pub kernel: Option<KernelSpec>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub t0: Option<f64>,
    #[arg(long = "T")]
    pub t_end: Option<f64>,
    #[arg(long)]
    pub init_mag: Option<f64>,
    /// Half-width H, or LO:HI.
    #[arg(long = "box", allow_hyphen_values = true)]
    pub domain: Option<BoxSpec>,
    #[arg(long)]
    pub eps: Option<f64>,
    /// p or p2.
    #[arg(long)]
    pub tol_mode: Option<TolMode>,
    #[arg(long)]
    pub max_points: Option<usize>,
    #[arg(long)]
    pub lambda: Option<f64>,
    /// diag-jitter or literal.
    #[arg(long)]
    pub weight_mode: Option<WeightMode>,
    /// lo:hi:n on every axis.
    #[arg(long, allow_hyphen_values = true)]
    pub grid: Option<GridAxis>,
    #[arg(long)]
    pub taylor_degree: Option<usize>,
    #[arg(long)]
    pub newton_tol: Option<f64>,
    #[arg(long)]
    pub newton_max_iter: Option<usize>,
    /// continue or abort when a Newton solve does not converge.
    #[arg(long, value_parser = parse_policy)]
    pub on_step_failure: Option<FailurePolicy>,
}

fn parse_policy(s: &str) -> std::result::Result<FailurePolicy, String> {
    match s {
        "continue" => Ok(FailurePolicy::ContinueWithLastIterate),
        "abort" => Ok(FailurePolicy::Abort),
        _ => Err(format!("{s:?}: expected continue or abort")),
    }
}

impl Options {
    pub fn apply(&self, mut cfg: PipelineConfig) -> PipelineConfig {
        if let Some(s) = &self.system {
            if self.eps.is_none() {
                cfg.eps_tol = default_eps(s);
            }
            cfg.system = s.clone();
        }
        let it = &mut cfg.integration;
        macro_rules! set {
            ($($src:ident => $dst:expr),* $(,)?) => {
                $(if let Some(v) = self.$src.clone() { $dst = v; })*
            };
        }
        set! {
            dt => it.dt,
            t0 => it.t0,
            t_end => it.t_end,
            newton_tol => it.newton.tol,
            newton_max_iter => it.newton.max_iter,
            on_step_failure => it.on_failure,
        }
        set! {
            kernel => cfg.kernel,
            init_mag => cfg.init_mag,
            domain => cfg.domain,
            eps => cfg.eps_tol,
            tol_mode => cfg.tol_mode,
            max_points => cfg.max_points,
            lambda => cfg.lambda,
            weight_mode => cfg.weight_mode,
            taylor_degree => cfg.taylor_degree,
        }
        if self.grid.is_some() {
            cfg.grid = self.grid;
        }
        cfg
    }
}

/// Process exit code for a failure.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::StepFailure { .. } => 3,
        Error::EmptyDataset(_) => 4,
        Error::NumericalFailure(_) | Error::OracleFailure { .. } => 5,
        Error::FitFailure { .. } => 6,
        Error::DimensionMismatch { .. } => 7,
        Error::InvalidArgument(_) | Error::Io { .. } | Error::Parse(_) => 1,
    }
}

fn parent_dir(path: &Path) -> &Path {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    }
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Simulate { opts, out } => {
            let cfg = opts.apply(PipelineConfig::default());
            let _lock = DirLock::acquire(parent_dir(&out))?;
            let start = Instant::now();
            let s = run_simulate(&cfg, &out)?;
            println!("N* = {}", s.retained_count);
            println!(
                "raw states {}, non-converged Newton steps {}, {:.2?}",
                s.raw_count,
                s.nonconverged_steps,
                start.elapsed()
            );
            println!("wrote {}", out.display());
        }
        Command::Greedy { opts, dataset, out } => {
            let cfg = opts.apply(PipelineConfig::default());
            let _lock = DirLock::acquire(parent_dir(&out))?;
            let sel = run_greedy(&cfg, &dataset, &out)?;
            println!("selected {} of {} candidates", sel.selected_indices.len(), sel.candidate_count);
            println!("final max power {:e} ({:?})", sel.final_max_power, sel.tol_mode);
            println!("wrote {}", out.display());
        }
        Command::Fit {
            opts,
            dataset,
            selection,
            out,
        } => {
            let cfg = opts.apply(PipelineConfig::default());
            let _lock = DirLock::acquire(parent_dir(&out))?;
            let model = run_fit(&cfg, &dataset, &selection, &out)?;
            if let Some(r) = &model.fit_report {
                if !r.constraints_met() {
                    eprintln!("warning: origin constraints not met to tolerance; consider increasing lambda");
                }
                println!("|s(0)| = {:e}", r.origin_value_norm);
                println!("|Ds(0)|_F = {:e}", r.origin_jacobian_norm);
                println!(
                    "relative residual {:e}, backward error {:e}, condition {:e}{}",
                    r.relative_residual,
                    r.backward_error,
                    r.condition_estimate,
                    if r.pseudo_inverse_fallback { " (pseudo-inverse)" } else { "" }
                );
            }
            println!("wrote {}", out.display());
        }
        Command::Eval { opts, model, out } => {
            let cfg = opts.apply(PipelineConfig::default());
            let _lock = DirLock::acquire(parent_dir(&out))?;
            let e = run_eval(&cfg, &model, &out)?;
            println!("rows {}", e.rows);
            println!("max |s - taylor| = {:e} (degree {})", e.max_abs_taylor_diff, e.taylor_degree);
            println!(
                "max residual {:e}, mean {:e}, zero model {:e}",
                e.max_residual, e.mean_residual, e.zero_model_max_residual
            );
            println!("wrote {}", out.display());
        }
        Command::Reproduce {
            example,
            kernel,
            opts,
            outdir,
        } => {
            let cfg = opts.apply(PipelineConfig::reference(example, kernel)?);
            let _lock = DirLock::acquire(&outdir)?;
            let result = reproduce(example, &cfg, &outdir);
            let report_path = outdir.join(crate::pipeline::names::REPORT);
            if let Ok(text) = std::fs::read_to_string(&report_path) {
                if let Ok(report) = serde_json::from_str::<crate::pipeline::ReproductionReport>(&text) {
                    print_report(&report);
                }
            }
            result?;
        }
    }
    Ok(())
}

fn print_report(r: &crate::pipeline::ReproductionReport) {
    let quoted = |v: Option<usize>| v.map_or("not quoted".to_string(), |v| v.to_string());
    println!("example {} with {}", r.example, r.kernel);
    println!(
        "N*: quoted {}, reproduced {} (raw {}, non-converged steps {})",
        quoted(r.dataset.quoted),
        r.dataset.reproduced,
        r.dataset.raw,
        r.dataset.nonconverged_steps
    );
    if let Some(g) = &r.greedy {
        println!("greedy size: quoted {}, reproduced {} ({:?})", g.quoted, g.reproduced, g.tol_mode);
        for m in &g.by_mode {
            match (m.size, &m.error) {
                (Some(n), _) => println!("  {:?}: {n}", m.tol_mode),
                (None, Some(e)) => println!("  {:?}: {e}", m.tol_mode),
                _ => {}
            }
        }
    }
    if let Some(f) = &r.fit {
        if !f.constraints_met() {
            println!("warning: origin constraints not met to tolerance");
        }
        println!(
            "fit: |s(0)| {:e}, |Ds(0)| {:e}, relative residual {:e}",
            f.origin_value_norm, f.origin_jacobian_norm, f.relative_residual
        );
    }
    if let Some(e) = &r.eval {
        println!(
            "eval: max |s - taylor| {:e}, max residual {:e} (zero model {:e})",
            e.max_abs_taylor_diff, e.max_residual, e.zero_model_max_residual
        );
    }
    if let Some(f) = &r.failure {
        println!("failed: {f}");
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if let Error::StepFailure {
                last_iterate,
                trajectory,
                ..
            } = &e
            {
                eprintln!("failing trajectory {trajectory:?}, last iterate {last_iterate:?}");
            }
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use clap::CommandFactory;

    use super::*;

    #[test]
    fn command_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn negative_bounds_parse() {
        let cli = Cli::try_parse_from(["cmsurrogate", "eval", "--model", "m.json", "--grid", "-0.2:0.2:5", "--box", "-0.3:0.1"])
            .unwrap();
        let Command::Eval { opts, .. } = cli.command else { panic!() };
        assert_eq!(opts.grid.unwrap().lo, -0.2);
        assert_eq!(opts.domain.unwrap().lo, -0.3);
    }

    #[test]
    fn overrides_apply() {
        let cli = Cli::try_parse_from([
            "cmsurrogate",
            "simulate",
            "--system",
            "example3",
            "--T",
            "5",
            "--box",
            "0.2:0.1",
            "--on-step-failure",
            "abort",
        ])
        .unwrap();
        let Command::Simulate { opts, .. } = cli.command else { panic!() };
        let cfg = opts.apply(PipelineConfig::default());
        assert_eq!(cfg.system, "example3");
        assert_eq!(cfg.eps_tol, 1e-10);
        assert_eq!(cfg.integration.t_end, 5.0);
        assert_eq!(cfg.integration.on_failure, FailurePolicy::Abort);
        assert_eq!(cfg.domain, BoxSpec { lo: 0.2, hi: 0.1 });
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::EmptyDataset(String::new())), 4);
        assert_eq!(
            exit_code(&Error::DimensionMismatch {
                what: String::new(),
                got: 1,
                expected: 2
            }),
            7
        );
        assert_eq!(run(["cmsurrogate", "bogus"]), 2);
    }
}
