//! Taylor oracle, invariance residual and reduced dynamics.
//!
//! A center manifold `y = h(x)` satisfies
//!
//! ```text
//! Dh(x) f1(x, h(x)) = f2(x, h(x)),   h(0) = 0,   Dh(0) = 0.
//! ```
//!
//! [`taylor_center_manifold`] solves this degree by degree for polynomial
//! systems; [`pde_residual`] measures how far any model is from satisfying it;
//! [`integrate_reduced`] runs `x' = f1(x, h(x))` on a model of the manifold.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dynamics::{integrate_implicit_euler, join, IntegrationSettings, SplitSystem, Trajectory};
use crate::error::{check_dim, Error, Result};
use crate::polynomial::{Exponent, FieldTerm, Polynomial};
use crate::regression::Surrogate;

/// Anything that can stand in for `h`: values and an `m x d` Jacobian.
pub trait ManifoldModel {
    fn center_dim(&self) -> usize;
    fn stable_dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> Result<Vec<f64>>;
    fn jacobian(&self, x: &[f64]) -> Result<DMatrix<f64>>;
    fn label(&self) -> String;
}

impl ManifoldModel for Surrogate {
    fn center_dim(&self) -> usize {
        self.d
    }
    fn stable_dim(&self) -> usize {
        self.m
    }
    fn value(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.eval(x)
    }
    fn jacobian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        Surrogate::jacobian(self, x)
    }
    fn label(&self) -> String {
        format!("surrogate[{}; {} centers]", self.spec, self.centers_with_origin.len())
    }
}

/// `h = 0`, the baseline against which residuals are compared.
#[derive(Clone, Copy, Debug)]
pub struct ZeroModel {
    pub d: usize,
    pub m: usize,
}

impl ManifoldModel for ZeroModel {
    fn center_dim(&self) -> usize {
        self.d
    }
    fn stable_dim(&self) -> usize {
        self.m
    }
    fn value(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim("evaluation point", x.len(), self.d)?;
        Ok(vec![0.0; self.m])
    }
    fn jacobian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        check_dim("evaluation point", x.len(), self.d)?;
        Ok(DMatrix::zeros(self.m, self.d))
    }
    fn label(&self) -> String {
        "zero".into()
    }
}

/// Truncated Taylor expansion `h(x) = h2(x) + ... + hK(x)` of a manifold.
#[derive(Clone, Debug, PartialEq)]
pub struct PolynomialMap {
    d: usize,
    m: usize,
    max_degree: usize,
    components: Vec<Polynomial>,
}

/// One homogeneous degree of a [`PolynomialMap`], as stored on disk.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DegreeTable {
    pub degree: usize,
    pub terms: Vec<FieldTerm>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolynomialMapFile {
    pub d: usize,
    pub m: usize,
    pub max_degree: usize,
    pub tables: Vec<DegreeTable>,
}

impl PolynomialMap {
    pub fn zero(d: usize, m: usize, max_degree: usize) -> Self {
        PolynomialMap {
            d,
            m,
            max_degree,
            components: vec![Polynomial::zero(d); m],
        }
    }

    /// Builds a map from per-component polynomials in `d` variables. Linear
    /// and constant terms are rejected (the manifold is tangent at 0).
    pub fn from_components(components: Vec<Polynomial>, max_degree: usize) -> Result<Self> {
        let m = components.len();
        let d = components.first().map(|p| p.nvars()).unwrap_or(0);
        if m == 0 || d == 0 || components.iter().any(|p| p.nvars() != d) {
            return Err(Error::invalid("components must share a positive variable count"));
        }
        for p in &components {
            if p.terms().any(|(e, _)| e.iter().sum::<u32>() < 2) {
                return Err(Error::invalid("constant and linear terms must vanish"));
            }
            if p.degree().unwrap_or(0) as usize > max_degree {
                return Err(Error::invalid("term exceeds max_degree"));
            }
        }
        Ok(PolynomialMap {
            d,
            m,
            max_degree,
            components,
        })
    }

    pub fn max_degree(&self) -> usize {
        self.max_degree
    }

    pub fn components(&self) -> &[Polynomial] {
        &self.components
    }

    /// Coefficient vector of `x^exponent`.
    pub fn coefficient(&self, exponent: &[u32]) -> Vec<f64> {
        self.components.iter().map(|p| p.coefficient(exponent)).collect()
    }

    pub fn to_file(&self) -> PolynomialMapFile {
        let tables = (1..=self.max_degree)
            .map(|k| {
                let mut by_exp: std::collections::BTreeMap<Exponent, Vec<f64>> = Default::default();
                for (c, p) in self.components.iter().enumerate() {
                    for (e, v) in p.homogeneous(k as u32).terms() {
                        by_exp.entry(e.clone()).or_insert_with(|| vec![0.0; self.m])[c] = v;
                    }
                }
                DegreeTable {
                    degree: k,
                    terms: by_exp
                        .into_iter()
                        .map(|(exponents, coefficients)| FieldTerm {
                            exponents,
                            coefficients,
                        })
                        .collect(),
                }
            })
            .collect();
        PolynomialMapFile {
            d: self.d,
            m: self.m,
            max_degree: self.max_degree,
            tables,
        }
    }

    pub fn from_file(file: &PolynomialMapFile) -> Result<Self> {
        let mut comps = vec![Polynomial::zero(file.d); file.m];
        for table in &file.tables {
            for t in &table.terms {
                check_dim("exponent", t.exponents.len(), file.d)?;
                check_dim("coefficients", t.coefficients.len(), file.m)?;
                if t.exponents.iter().sum::<u32>() as usize != table.degree {
                    return Err(Error::Parse(format!(
                        "term {:?} listed under degree {}",
                        t.exponents, table.degree
                    )));
                }
                for (c, v) in t.coefficients.iter().enumerate() {
                    comps[c].add_term(t.exponents.clone(), *v);
                }
            }
        }
        Self::from_components(comps, file.max_degree)
    }
}

impl ManifoldModel for PolynomialMap {
    fn center_dim(&self) -> usize {
        self.d
    }
    fn stable_dim(&self) -> usize {
        self.m
    }
    fn value(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim("evaluation point", x.len(), self.d)?;
        Ok(self.components.iter().map(|p| p.eval(x)).collect())
    }
    fn jacobian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        check_dim("evaluation point", x.len(), self.d)?;
        Ok(DMatrix::from_fn(self.m, self.d, |c, i| {
            self.components[c].derivative(i).eval(x)
        }))
    }
    fn label(&self) -> String {
        format!("taylor[degree {}]", self.max_degree)
    }
}

/// All exponents of total degree `k` in `d` variables, lexicographically descending.
fn monomials(d: usize, k: u32) -> Vec<Exponent> {
    fn rec(d: usize, k: u32, prefix: &mut Exponent, out: &mut Vec<Exponent>) {
        if prefix.len() + 1 == d {
            prefix.push(k);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for first in (0..=k).rev() {
            prefix.push(first);
            rec(d, k - first, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(d, k, &mut Vec::new(), &mut out);
    out
}

/// Solves the invariance equation for the Taylor coefficients of degrees
/// `2..=max_degree`. The linear term is zero. At degree `k` the unknown
/// homogeneous part `h_k` satisfies
///
/// ```text
/// Dh_k(x) F1 x - F2 h_k(x) = -[ DH(x) f1(x, H(x)) - f2(x, H(x)) ]_k
/// ```
///
/// with `H` the expansion through degree `k - 1`.
pub fn taylor_center_manifold(system: &SplitSystem, max_degree: usize) -> Result<PolynomialMap> {
    if max_degree < 2 {
        return Err(Error::invalid("max_degree must be at least 2"));
    }
    let d = system.center_dim();
    let m = system.stable_dim();
    let f1: Vec<Polynomial> = (0..d).map(|i| system.f1().component(i)).collect();
    let f2: Vec<Polynomial> = (0..m).map(|c| system.f2().component(c)).collect();
    let lin1 = system.center_linear();
    let lin2 = system.stable_linear();

    // F1 x as polynomials in x.
    let f1x: Vec<Polynomial> = (0..d)
        .map(|i| {
            let mut p = Polynomial::zero(d);
            for j in 0..d {
                let mut e = vec![0; d];
                e[j] = 1;
                p.add_term(e, lin1[(i, j)]);
            }
            p
        })
        .collect();
    let apply_linear = |h: &[Polynomial]| -> Vec<Polynomial> {
        (0..m)
            .map(|c| {
                let mut out = Polynomial::zero(d);
                for (i, fi) in f1x.iter().enumerate() {
                    out = out.add(&h[c].derivative(i).mul_truncated(fi, None));
                }
                for (c2, hc2) in h.iter().enumerate() {
                    out = out.sub(&hc2.scale(lin2[(c, c2)]));
                }
                out
            })
            .collect()
    };

    let mut h: Vec<Polynomial> = vec![Polynomial::zero(d); m];
    for k in 2..=max_degree {
        let kk = k as u32;
        let residual = invariance_residual(&h, &f1, &f2, d, kk);
        let basis = monomials(d, kk);
        let nb = basis.len();
        let size = nb * m;
        let mut mat = DMatrix::zeros(size, size);
        for (col_mono, e) in basis.iter().enumerate() {
            for c in 0..m {
                let mut trial = vec![Polynomial::zero(d); m];
                trial[c].add_term(e.clone(), 1.0);
                let image = apply_linear(&trial);
                for (row_mono, er) in basis.iter().enumerate() {
                    for (rc, img) in image.iter().enumerate() {
                        mat[(row_mono * m + rc, col_mono * m + c)] = img.coefficient(er);
                    }
                }
            }
        }
        let rhs = nalgebra::DVector::from_fn(size, |r, _| {
            -residual[r % m].coefficient(&basis[r / m])
        });
        let sv = mat.clone().svd(false, false).singular_values;
        if sv.min() <= 1e-12 * sv.max().max(1.0) {
            return Err(Error::OracleFailure { degree: k });
        }
        let sol = mat.lu().solve(&rhs).ok_or(Error::OracleFailure { degree: k })?;
        for (r, v) in sol.iter().enumerate() {
            h[r % m].add_term(basis[r / m].clone(), *v);
        }
    }
    PolynomialMap::from_components(h, max_degree)
}

/// Degree-`k` part of `DH f1(x, H) - f2(x, H)` as polynomials in `x`.
fn invariance_residual(
    h: &[Polynomial],
    f1: &[Polynomial],
    f2: &[Polynomial],
    d: usize,
    k: u32,
) -> Vec<Polynomial> {
    let subs: Vec<Polynomial> = (0..d)
        .map(|i| Polynomial::variable(d, i))
        .chain(h.iter().cloned())
        .collect();
    let f1_on: Vec<Polynomial> = f1.iter().map(|p| p.compose(&subs, Some(k))).collect();
    h.iter()
        .zip(f2)
        .map(|(hc, f2c)| {
            let mut lhs = Polynomial::zero(d);
            for (i, f1i) in f1_on.iter().enumerate() {
                lhs = lhs.add(&hc.derivative(i).mul_truncated(f1i, Some(k)));
            }
            lhs.sub(&f2c.compose(&subs, Some(k))).homogeneous(k)
        })
        .collect()
}

fn check_model(model: &dyn ManifoldModel, system: &SplitSystem) -> Result<()> {
    check_dim("model center dimension", model.center_dim(), system.center_dim())?;
    check_dim("model stable dimension", model.stable_dim(), system.stable_dim())
}

/// `D model(x) f1(x, model(x)) - f2(x, model(x))`
pub fn pde_residual(model: &dyn ManifoldModel, system: &SplitSystem, x: &[f64]) -> Result<Vec<f64>> {
    check_model(model, system)?;
    let y = model.value(x)?;
    let jac = model.jacobian(x)?;
    let (f1, f2) = system.rhs_eval(x, &y)?;
    Ok((0..system.stable_dim())
        .map(|c| (0..system.center_dim()).map(|i| jac[(c, i)] * f1[i]).sum::<f64>() - f2[c])
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridAxis {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl GridAxis {
    pub fn points(&self) -> Vec<f64> {
        if self.n == 1 {
            return vec![self.lo];
        }
        (0..self.n)
            .map(|i| {
                let t = i as f64 / (self.n - 1) as f64;
                // exact endpoints
                if i + 1 == self.n {
                    self.hi
                } else {
                    self.lo + t * (self.hi - self.lo)
                }
            })
            .collect()
    }
}

impl std::str::FromStr for GridAxis {
    type Err = Error;

    /// `lo:hi:n`
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let [lo, hi, n] = parts.as_slice() else {
            return Err(Error::Parse(format!("grid {s:?}: expected lo:hi:n")));
        };
        let f = |t: &str| t.parse::<f64>().map_err(|_| Error::Parse(format!("grid {s:?}: bad number {t:?}")));
        let axis = GridAxis {
            lo: f(lo)?,
            hi: f(hi)?,
            n: n.parse().map_err(|_| Error::Parse(format!("grid {s:?}: bad count {n:?}")))?,
        };
        if axis.n == 0 || !(axis.lo <= axis.hi) {
            return Err(Error::Parse(format!("grid {s:?}: need n >= 1 and lo <= hi")));
        }
        Ok(axis)
    }
}

/// Tensor-product grid; nodes are enumerated with the first axis slowest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorGrid {
    pub axes: Vec<GridAxis>,
}

impl TensorGrid {
    pub fn uniform(d: usize, axis: GridAxis) -> Self {
        TensorGrid { axes: vec![axis; d] }
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.n).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn nodes(&self) -> Vec<Vec<f64>> {
        let pts: Vec<Vec<f64>> = self.axes.iter().map(|a| a.points()).collect();
        let mut out: Vec<Vec<f64>> = vec![vec![]];
        for axis in &pts {
            out = out
                .into_iter()
                .flat_map(|prefix| {
                    axis.iter().map(move |v| {
                        let mut p = prefix.clone();
                        p.push(*v);
                        p
                    })
                })
                .collect();
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub model: String,
    pub grid: TensorGrid,
    pub points: Vec<Vec<f64>>,
    pub residuals: Vec<Vec<f64>>,
    pub max_norm: f64,
    pub mean_norm: f64,
}

impl ResidualReport {
    pub fn norms(&self) -> Vec<f64> {
        self.residuals.iter().map(|r| euclid(r)).collect()
    }
}

pub(crate) fn euclid(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Residual at every grid node, with max and mean Euclidean norms.
pub fn residual_grid(model: &dyn ManifoldModel, system: &SplitSystem, grid: &TensorGrid) -> Result<ResidualReport> {
    check_dim("grid dimension", grid.dim(), system.center_dim())?;
    if grid.is_empty() {
        return Err(Error::invalid("empty grid"));
    }
    let points = grid.nodes();
    let residuals = points
        .iter()
        .map(|x| {
            pde_residual(model, system, x).map_err(|e| Error::invalid(format!("at node {x:?}: {e}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let norms: Vec<f64> = residuals.iter().map(|r| euclid(r)).collect();
    let max_norm = norms.iter().cloned().fold(0.0, f64::max);
    let mean_norm = norms.iter().sum::<f64>() / norms.len() as f64;
    Ok(ResidualReport {
        model: model.label(),
        grid: grid.clone(),
        points,
        residuals,
        max_norm,
        mean_norm,
    })
}

/// Integrates `x' = f1(x, model(x))` with the same implicit Euler scheme as
/// the full system. The Jacobian is `d f1/dx + d f1/dy * D model(x)`.
pub fn integrate_reduced(
    model: &dyn ManifoldModel,
    system: &SplitSystem,
    x0: &[f64],
    settings: &IntegrationSettings,
) -> Result<Trajectory> {
    check_model(model, system)?;
    check_dim("initial state", x0.len(), system.center_dim())?;
    let d = system.center_dim();
    let m = system.stable_dim();
    integrate_implicit_euler(x0, settings, |x| {
        // Dimensions were checked above; model evaluation cannot fail here.
        let y = model.value(x).expect("model value");
        let dh = model.jacobian(x).expect("model jacobian");
        let z = join(x, &y);
        let f = system.f1().eval(&z);
        let full = system.f1().jacobian(&z);
        let jac = full.columns(0, d) + full.columns(d, m) * dh;
        (f, jac)
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stability {
    Stable,
    Unstable,
    Inconclusive,
}

/// Radius ratio below which a probe counts as contracting.
pub const STABLE_RATIO: f64 = 0.9;

/// Classifies a reduced trajectory by the ratio `|x(T)| / |x(0)|`:
/// below [`STABLE_RATIO`] is stable, above one is unstable.
pub fn classify(trajectory: &Trajectory) -> Stability {
    let first = euclid(&trajectory.states[0]);
    let last = euclid(trajectory.states.last().unwrap());
    if !last.is_finite() || last > first {
        Stability::Unstable
    } else if last < STABLE_RATIO * first {
        Stability::Stable
    } else {
        Stability::Inconclusive
    }
}

/// Runs [`integrate_reduced`] from `x0` and classifies the outcome.
pub fn stability_probe(
    model: &dyn ManifoldModel,
    system: &SplitSystem,
    x0: &[f64],
    settings: &IntegrationSettings,
) -> Result<(Stability, Trajectory)> {
    let traj = integrate_reduced(model, system, x0, settings)?;
    Ok((classify(&traj), traj))
}
