//! On-disk formats for every pipeline stage.
//!
//! CSV files use `,`, `.` decimals, a header row and LF line endings; floats
//! are written with 17 significant digits so they read back bit-exactly.
//! Structured files are pretty-printed JSON. Every write goes to a temporary
//! sibling first and is renamed into place only once complete.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::{ManifoldModel, PolynomialMap, PolynomialMapFile, ResidualReport};
use crate::dynamics::{DatasetProvenance, DomainBox, SplitSystem, SystemDescription, TrajectoryDataset};
use crate::error::{check_dim, Error, Result};
use crate::greedy::{GreedySelection, TolMode};
use crate::kernels::KernelSpec;
use crate::regression::{FitReport, Surrogate, WeightMode};

/// Hex SHA-256 of a byte string.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_sha256(path: &Path) -> Result<String> {
    Ok(sha256_hex(&fs::read(path).map_err(|e| Error::io(path, e))?))
}

/// Writes `bytes` to `path` via a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| Error::invalid(format!("{} is not a file path", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp", name.to_string_lossy()));
    let write = || -> std::io::Result<()> {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    };
    write().map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::io(path, e)
    })
}

/// Exclusive claim on an output directory, released on drop.
#[derive(Debug)]
pub struct DirLock {
    path: PathBuf,
}

impl DirLock {
    pub const FILE_NAME: &'static str = ".cmsurrogate.lock";

    pub fn acquire(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(Self::FILE_NAME);
        let mut f = fs::OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&path)
            .map_err(|e| {
                if e.kind() == std::io::ErrorKind::AlreadyExists {
                    Error::invalid(format!(
                        "{} is locked by another run (remove {} if stale)",
                        dir.display(),
                        path.display()
                    ))
                } else {
                    Error::io(&path, e)
                }
            })?;
        let _ = writeln!(f, "{}", std::process::id());
        Ok(DirLock { path })
    }
}

impl Drop for DirLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

fn to_json<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut out = serde_json::to_vec_pretty(value).map_err(|e| Error::Parse(e.to_string()))?;
    out.push(b'\n');
    Ok(out)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, &to_json(value)?)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn csv_bytes(header: &[String], rows: impl Iterator<Item = Vec<f64>>) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    let err = |e: csv::Error| Error::Parse(e.to_string());
    w.write_record(header).map_err(err)?;
    for row in rows {
        w.write_record(row.iter().map(|v| fmt_f64(*v))).map_err(err)?;
    }
    w.into_inner().map_err(|e| Error::Parse(e.to_string()))
}

/// Header and numeric rows of a CSV file.
fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut r = csv::Reader::from_reader(bytes.as_slice());
    let perr = |e: csv::Error| Error::Parse(format!("{}: {e}", path.display()));
    let header: Vec<String> = r.headers().map_err(perr)?.iter().map(str::to_owned).collect();
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(perr)?;
        let row = rec
            .iter()
            .map(|t| {
                t.trim().parse::<f64>().map_err(|_| {
                    Error::Parse(format!("{}: row {}: bad number {t:?}", path.display(), i + 1))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok((header, rows))
}

fn numbered(prefix: &str, n: usize) -> impl Iterator<Item = String> + '_ {
    (1..=n).map(move |i| format!("{prefix}{i}"))
}

pub fn dataset_header(d: usize, m: usize) -> Vec<String> {
    std::iter::once("t".to_string())
        .chain(numbered("x", d))
        .chain(numbered("y", m))
        .collect()
}

/// `t,x1..xd,y1..ym`, one row per retained pair.
pub fn dataset_csv(ds: &TrajectoryDataset) -> Result<Vec<u8>> {
    let rows = ds
        .times
        .iter()
        .zip(ds.x_points.iter().zip(&ds.y_points))
        .map(|(t, (x, y))| std::iter::once(*t).chain(x.iter().copied()).chain(y.iter().copied()).collect());
    csv_bytes(&dataset_header(ds.d, ds.m), rows)
}

/// Reads a dataset CSV. The domain box is not stored in the CSV and comes
/// back as the whole space; provenance lives in the sidecar.
pub fn read_dataset(path: &Path) -> Result<TrajectoryDataset> {
    let (header, rows) = read_csv(path)?;
    let d = header.iter().filter(|h| h.starts_with('x')).count();
    let m = header.iter().filter(|h| h.starts_with('y')).count();
    if d == 0 || m == 0 || header != dataset_header(d, m) {
        return Err(Error::Parse(format!(
            "{}: expected header t,x1..xd,y1..ym, got {}",
            path.display(),
            header.join(",")
        )));
    }
    let mut ds = TrajectoryDataset {
        d,
        m,
        times: Vec::with_capacity(rows.len()),
        x_points: Vec::with_capacity(rows.len()),
        y_points: Vec::with_capacity(rows.len()),
        domain_box: DomainBox::whole_space(d),
        provenance: None,
    };
    for row in rows {
        ds.times.push(row[0]);
        ds.x_points.push(row[1..=d].to_vec());
        ds.y_points.push(row[d + 1..].to_vec());
    }
    Ok(ds)
}

/// Sidecar written next to a dataset: configuration echo and counts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSidecar {
    pub dataset_sha256: String,
    pub domain_box: DomainBox,
    #[serde(flatten)]
    pub provenance: DatasetProvenance,
}

pub fn read_system(path: &Path) -> Result<SplitSystem> {
    let desc: SystemDescription = read_json(path)?;
    SplitSystem::from_description(&desc)
}

/// A built-in name (`example1`..`example3`) or a path to a system file.
pub fn load_system(source: &str) -> Result<SplitSystem> {
    match SplitSystem::builtin(source) {
        Some(s) => Ok(s),
        None if Path::new(source).exists() => read_system(Path::new(source)),
        None => Err(Error::invalid(format!(
            "unknown system {source:?}: expected example1, example2, example3 or a system file"
        ))),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionFile {
    /// Hash of the dataset file the candidates were taken from.
    pub dataset_sha256: String,
    pub kernel: KernelSpec,
    pub eps_tol: f64,
    pub tol_mode: TolMode,
    pub max_points: usize,
    /// Deduplicated, origin-free candidates drawn from the dataset.
    pub candidate_count: usize,
    /// Indices into the deduplicated candidate list.
    pub selected_indices: Vec<usize>,
    /// Matching rows of the dataset file (0-based, header excluded).
    pub dataset_rows: Vec<usize>,
    pub selected_points: Vec<Vec<f64>>,
    pub power_history: Vec<f64>,
    pub final_max_power: f64,
}

impl SelectionFile {
    pub fn new(
        dataset_sha256: String,
        kernel: KernelSpec,
        max_points: usize,
        candidates: &[Vec<f64>],
        candidate_rows: &[usize],
        sel: &GreedySelection,
    ) -> Self {
        SelectionFile {
            dataset_sha256,
            kernel,
            eps_tol: sel.eps_tol,
            tol_mode: sel.tol_mode,
            max_points,
            candidate_count: candidates.len(),
            selected_indices: sel.selected_indices.clone(),
            dataset_rows: sel.selected_indices.iter().map(|&i| candidate_rows[i]).collect(),
            selected_points: sel.selected_indices.iter().map(|&i| candidates[i].clone()).collect(),
            power_history: sel.power_history.clone(),
            final_max_power: sel.final_max_power,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub kernel: KernelSpec,
    pub d: usize,
    pub m: usize,
    /// Selected centers followed by the origin.
    pub centers_with_origin: Vec<Vec<f64>>,
    /// One length-`m` vector per center.
    pub alpha: Vec<Vec<f64>>,
    /// One length-`m` vector per input direction.
    pub beta: Vec<Vec<f64>>,
    pub lambda: f64,
    pub weight_mode: WeightMode,
    pub selection_sha256: String,
    pub fit_report: Option<FitReport>,
}

impl ModelFile {
    pub fn new(s: &Surrogate, lambda: f64, weight_mode: WeightMode, selection_sha256: String) -> Self {
        ModelFile {
            kernel: s.spec,
            d: s.d,
            m: s.m,
            centers_with_origin: s.centers_with_origin.clone(),
            alpha: s.alpha.clone(),
            beta: s.beta.clone(),
            lambda,
            weight_mode,
            selection_sha256,
            fit_report: s.fit_report.clone(),
        }
    }

    pub fn surrogate(&self) -> Result<Surrogate> {
        let mut s = Surrogate::from_coefficients(
            self.kernel,
            self.centers_with_origin.clone(),
            self.alpha.clone(),
            self.beta.clone(),
        )?;
        check_dim("model d", s.d, self.d)?;
        check_dim("model m", s.m, self.m)?;
        s.fit_report = self.fit_report.clone();
        Ok(s)
    }
}

pub fn write_taylor(path: &Path, map: &PolynomialMap) -> Result<()> {
    write_json(path, &map.to_file())
}

pub fn read_taylor(path: &Path) -> Result<PolynomialMap> {
    PolynomialMap::from_file(&read_json::<PolynomialMapFile>(path)?)
}

pub fn eval_header(d: usize, m: usize) -> Vec<String> {
    numbered("x", d)
        .chain(numbered("s_", m))
        .chain(numbered("h_taylor_", m))
        .chain(std::iter::once("residual_norm".to_string()))
        .collect()
}

/// One row per grid node: `x`, model value, Taylor value, residual norm.
pub fn eval_csv(report: &ResidualReport, model: &dyn ManifoldModel, taylor: &PolynomialMap) -> Result<Vec<u8>> {
    let d = model.center_dim();
    let m = model.stable_dim();
    let rows = report
        .points
        .iter()
        .zip(report.norms())
        .map(|(x, r)| -> Result<Vec<f64>> {
            let mut row = x.clone();
            row.extend(model.value(x)?);
            row.extend(taylor.value(x)?);
            row.push(r);
            Ok(row)
        })
        .collect::<Result<Vec<_>>>()?;
    csv_bytes(&eval_header(d, m), rows.into_iter())
}

/// Parsed evaluation CSV: `(x, s, h_taylor, residual_norm)` columns.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalTable {
    pub d: usize,
    pub m: usize,
    pub rows: Vec<Vec<f64>>,
}

pub fn read_eval(path: &Path) -> Result<EvalTable> {
    let (header, rows) = read_csv(path)?;
    let d = header.iter().filter(|h| h.starts_with('x')).count();
    let m = header.iter().filter(|h| h.starts_with("s_")).count();
    if header != eval_header(d, m) {
        return Err(Error::Parse(format!("{}: unexpected header {}", path.display(), header.join(","))));
    }
    Ok(EvalTable { d, m, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{build_dataset, sign_grid, IntegrationSettings};

    fn small_dataset() -> TrajectoryDataset {
        let settings = IntegrationSettings {
            t_end: 2.0,
            ..Default::default()
        };
        build_dataset(
            &SplitSystem::example3(),
            &sign_grid(3, 0.05),
            &settings,
            &DomainBox::symmetric(2, 0.1),
        )
        .unwrap()
    }

    #[test]
    fn dataset_roundtrip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.csv");
        let ds = small_dataset();
        write_atomic(&path, &dataset_csv(&ds).unwrap()).unwrap();
        let back = read_dataset(&path).unwrap();
        assert_eq!(back.times, ds.times);
        assert_eq!(back.x_points, ds.x_points);
        assert_eq!(back.y_points, ds.y_points);
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("t,x1,x2,y1\n"));
        assert!(!text.contains('\r'));
    }

    #[test]
    fn empty_dataset_has_header_only() {
        let ds = TrajectoryDataset {
            d: 1,
            m: 1,
            times: vec![],
            x_points: vec![],
            y_points: vec![],
            domain_box: DomainBox::whole_space(1),
            provenance: None,
        };
        assert_eq!(dataset_csv(&ds).unwrap(), b"t,x1,y1\n");
    }

    #[test]
    fn bad_header_is_a_parse_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        fs::write(&path, "a,b\n1,2\n").unwrap();
        assert!(matches!(read_dataset(&path), Err(Error::Parse(_))));
    }

    #[test]
    fn lock_is_exclusive() {
        let dir = tempfile::tempdir().unwrap();
        let lock = DirLock::acquire(dir.path()).unwrap();
        assert!(DirLock::acquire(dir.path()).is_err());
        drop(lock);
        assert!(DirLock::acquire(dir.path()).is_ok());
    }

    #[test]
    fn atomic_write_leaves_no_temp_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.json");
        write_json(&path, &vec![1.0, 2.5]).unwrap();
        let names: Vec<_> = fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
        assert_eq!(names, vec![std::ffi::OsString::from("x.json")]);
        assert_eq!(read_json::<Vec<f64>>(&path).unwrap(), vec![1.0, 2.5]);
    }

    #[test]
    fn system_file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sys.json");
        let sys = SplitSystem::example3();
        write_json(&path, &sys.description()).unwrap();
        let back = load_system(path.to_str().unwrap()).unwrap();
        assert_eq!(back.description(), sys.description());
        assert!(load_system("example9").is_err());
    }

    #[test]
    fn hash_is_stable() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
