//! The whole file-based pipeline for one reference experiment:
//! `cargo run --release --example reproduce_pipeline -- 2 k1 out/`.

use std::path::PathBuf;

use cmsurrogate::pipeline::{reproduce, KernelChoice, PipelineConfig};

fn main() -> cmsurrogate::Result<()> {
    let mut args = std::env::args().skip(1);
    let example: u8 = args.next().map_or(Ok(2), |a| a.parse()).expect("example number");
    let kernel: KernelChoice = args.next().unwrap_or_else(|| "k1".into()).parse()?;
    let outdir = args.next().map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("cmsurrogate-demo"));
    let cfg = PipelineConfig::reference(example, kernel)?;
    let report = reproduce(example, &cfg, &outdir)?;
    println!("{}", serde_json::to_string_pretty(&report).unwrap());
    println!("artifacts in {}", outdir.display());
    Ok(())
}
