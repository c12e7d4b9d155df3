//! Constrained, regularized kernel regression for center-manifold surrogates.
//!
//! The surrogate is
//!
//! ```text
//! s(x) = sum_i k(x, x_i) alpha_i + sum_j (d k / d y_j)(x, 0) beta_j
//! ```
//!
//! over the selected centers plus the origin (appended last). Its
//! coefficients solve the symmetric block system
//!
//! ```text
//! [ A + W   B ] [alpha]   [y]
//! [ B^T     C ] [beta ] = [0]
//! ```
//!
//! where `A` is the kernel Gram matrix, `B` holds derivative functionals at
//! the origin, `C` the mixed second derivatives at the origin and `W` the
//! inverse data weights, zero on the origin rows. The origin row and the `C`
//! rows enforce `s(0) = 0` and `Ds(0) = 0` exactly; the data rows minimize the
//! native-space norm plus the weighted misfit.
//!
//! Vector outputs use the separable kernel `k * I_m`. Coefficients are
//! stacked center-major: entry `i * m + c` is component `c` of `alpha_i`, and
//! `beta` follows with entry `j * m + c` for derivative direction `j`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::kernels::KernelSpec;

/// Condition number above which the solve switches to an SVD pseudo-inverse.
pub const PSEUDO_SOLVE_CONDITION: f64 = 1e14;
/// Bound on `|s(0)|` checked after every fit.
pub const ORIGIN_VALUE_TOL: f64 = 1e-10;
/// Bound on the Frobenius norm of `Ds(0)` checked after every fit.
pub const ORIGIN_JACOBIAN_TOL: f64 = 1e-8;

/// How the regularization parameter `lambda` enters the data rows.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightMode {
    /// `lambda` is added to the data diagonal (`W = lambda I`); the data
    /// weight is `1 / lambda`. Small `lambda` means near-interpolation.
    #[default]
    DiagJitter,
    /// The data weight is `lambda` itself, so `W = lambda^-1 I`.
    Literal,
}

impl std::str::FromStr for WeightMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "diag-jitter" | "jitter" => Ok(WeightMode::DiagJitter),
            "literal" => Ok(WeightMode::Literal),
            _ => Err(Error::Parse(format!(
                "weight mode {s:?}: expected diag-jitter or literal"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RegressionProblem {
    pub centers: Vec<Vec<f64>>,
    pub targets: Vec<Vec<f64>>,
    pub spec: KernelSpec,
    pub weight_mode: WeightMode,
    pub lambda: f64,
}

impl RegressionProblem {
    pub fn new(
        centers: Vec<Vec<f64>>,
        targets: Vec<Vec<f64>>,
        spec: KernelSpec,
        weight_mode: WeightMode,
        lambda: f64,
        d: usize,
        m: usize,
    ) -> Result<Self> {
        let p = RegressionProblem {
            centers,
            targets,
            spec,
            weight_mode,
            lambda,
        };
        p.validate(d, m)?;
        Ok(p)
    }

    fn validate(&self, d: usize, m: usize) -> Result<()> {
        self.spec.validate()?;
        if d == 0 || m == 0 {
            return Err(Error::invalid("dimensions must be positive"));
        }
        check_dim("targets", self.targets.len(), self.centers.len())?;
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return Err(Error::invalid("lambda must be positive"));
        }
        for c in &self.centers {
            check_dim("center", c.len(), d)?;
            if c.iter().all(|v| *v == 0.0) {
                return Err(Error::invalid("the origin is appended internally; remove it from the centers"));
            }
        }
        for t in &self.targets {
            check_dim("target", t.len(), m)?;
        }
        if self
            .centers
            .iter()
            .chain(&self.targets)
            .flatten()
            .any(|v| !v.is_finite())
        {
            return Err(Error::invalid("non-finite center or target"));
        }
        let mut sorted: Vec<&Vec<f64>> = self.centers.iter().collect();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid("duplicate centers make the system singular"));
        }
        Ok(())
    }

    fn dims(&self) -> Result<(usize, usize)> {
        let d = self
            .centers
            .first()
            .map(|c| c.len())
            .ok_or_else(|| Error::invalid("cannot infer dimensions from an empty problem"))?;
        let m = self
            .targets
            .first()
            .map(|t| t.len())
            .ok_or_else(|| Error::invalid("targets and centers differ in length"))?;
        Ok((d, m))
    }

    /// Scalar data weight `omega` (so `omega_i = omega * I_m`).
    pub fn data_weight(&self) -> f64 {
        match self.weight_mode {
            WeightMode::DiagJitter => 1.0 / self.lambda,
            WeightMode::Literal => self.lambda,
        }
    }

    /// Diagonal entry of `W` on data rows, `1 / omega`.
    pub fn inverse_weight(&self) -> f64 {
        match self.weight_mode {
            WeightMode::DiagJitter => self.lambda,
            WeightMode::Literal => 1.0 / self.lambda,
        }
    }

    /// Centers followed by the origin.
    pub fn centers_with_origin(&self, d: usize) -> Vec<Vec<f64>> {
        let mut c = self.centers.clone();
        c.push(vec![0.0; d]);
        c
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SystemBlocks {
    pub d: usize,
    pub m: usize,
    pub a: DMatrix<f64>,
    /// Diagonal of `W`.
    pub w: DVector<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub rhs_values: DVector<f64>,
    pub rhs_derivs: DVector<f64>,
}

impl SystemBlocks {
    /// `[[A, B], [B^T, C]]`, the Gram matrix of all value and derivative functionals.
    pub fn gram(&self) -> DMatrix<f64> {
        let nv = self.a.nrows();
        let nd = self.c.nrows();
        let mut g = DMatrix::zeros(nv + nd, nv + nd);
        g.view_mut((0, 0), (nv, nv)).copy_from(&self.a);
        g.view_mut((0, nv), (nv, nd)).copy_from(&self.b);
        g.view_mut((nv, 0), (nd, nv)).copy_from(&self.b.transpose());
        g.view_mut((nv, nv), (nd, nd)).copy_from(&self.c);
        g
    }

    /// `[[A + W, B], [B^T, C]]`
    pub fn full_matrix(&self) -> DMatrix<f64> {
        let mut g = self.gram();
        for (i, w) in self.w.iter().enumerate() {
            g[(i, i)] += w;
        }
        g
    }

    pub fn rhs(&self) -> DVector<f64> {
        let mut r = DVector::zeros(self.rhs_values.len() + self.rhs_derivs.len());
        r.rows_mut(0, self.rhs_values.len()).copy_from(&self.rhs_values);
        r
    }
}

pub fn assemble_blocks(problem: &RegressionProblem) -> Result<SystemBlocks> {
    let (d, m) = problem.dims().or_else(|_| {
        Err(Error::invalid(
            "use assemble_blocks_with_dims for a problem without data",
        ))
    })?;
    assemble_blocks_with_dims(problem, d, m)
}

/// Like [`assemble_blocks`], with explicit dimensions so that the data set
/// may be empty (origin constraints only).
pub fn assemble_blocks_with_dims(
    problem: &RegressionProblem,
    d: usize,
    m: usize,
) -> Result<SystemBlocks> {
    problem.validate(d, m)?;
    let spec = &problem.spec;
    let pts = problem.centers_with_origin(d);
    let n1 = pts.len();
    let origin = vec![0.0; d];

    let mut a = DMatrix::zeros(n1 * m, n1 * m);
    for i in 0..n1 {
        for j in 0..n1 {
            let k = spec.eval_unchecked(&pts[i], &pts[j]);
            for c in 0..m {
                a[(i * m + c, j * m + c)] = k;
            }
        }
    }

    let mut b = DMatrix::zeros(n1 * m, d * m);
    let mut grad = vec![0.0; d];
    for (i, p) in pts.iter().enumerate() {
        spec.grad_second_into(p, &origin, &mut grad);
        for (j, g) in grad.iter().enumerate() {
            for c in 0..m {
                b[(i * m + c, j * m + c)] = *g;
            }
        }
    }

    let h = spec.mixed_hessian_unchecked(&origin, &origin);
    let mut cm = DMatrix::zeros(d * m, d * m);
    for i in 0..d {
        for j in 0..d {
            for c in 0..m {
                cm[(i * m + c, j * m + c)] = h[(i, j)];
            }
        }
    }

    let mut w = DVector::from_element(n1 * m, problem.inverse_weight());
    w.rows_mut((n1 - 1) * m, m).fill(0.0);

    let mut rhs_values = DVector::zeros(n1 * m);
    for (i, t) in problem.targets.iter().enumerate() {
        for (c, v) in t.iter().enumerate() {
            rhs_values[i * m + c] = *v;
        }
    }

    Ok(SystemBlocks {
        d,
        m,
        a,
        w,
        b,
        c: cm,
        rhs_values,
        rhs_derivs: DVector::zeros(d * m),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    /// `|M c - f| / |f|` (absolute when `f = 0`), accumulated in double-double.
    pub relative_residual: f64,
    /// `|M c - f| / (|M|_F |c| + |f|)`, the normwise backward error.
    pub backward_error: f64,
    /// 2-norm condition number of the block matrix.
    #[serde(with = "extended_float")]
    pub condition_estimate: f64,
    pub pseudo_inverse_fallback: bool,
    pub refinement_steps: usize,
    pub origin_value_norm: f64,
    pub origin_jacobian_norm: f64,
}

impl FitReport {
    /// Whether `|s(0)|` and `|Ds(0)|_F` are within the hard-constraint tolerances.
    pub fn constraints_met(&self) -> bool {
        self.origin_value_norm <= ORIGIN_VALUE_TOL && self.origin_jacobian_norm <= ORIGIN_JACOBIAN_TOL
    }
}

/// JSON has no literal for infinity; non-finite values travel as strings.
mod extended_float {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_str(&v.to_string())
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// Fitted surrogate: a kernel expansion over `centers_with_origin` plus the
/// derivative functionals at the origin.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Surrogate {
    pub spec: KernelSpec,
    pub d: usize,
    pub m: usize,
    pub centers_with_origin: Vec<Vec<f64>>,
    pub alpha: Vec<Vec<f64>>,
    /// One vector of length `m` per input direction.
    pub beta: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit_report: Option<FitReport>,
}

impl Surrogate {
    pub fn from_coefficients(
        spec: KernelSpec,
        centers_with_origin: Vec<Vec<f64>>,
        alpha: Vec<Vec<f64>>,
        beta: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let d = beta.len();
        let m = alpha.first().map(|a| a.len()).unwrap_or(0);
        if d == 0 || m == 0 {
            return Err(Error::invalid("surrogate needs at least one center and direction"));
        }
        check_dim("alpha", alpha.len(), centers_with_origin.len())?;
        for c in &centers_with_origin {
            check_dim("center", c.len(), d)?;
        }
        for v in alpha.iter().chain(&beta) {
            check_dim("coefficient", v.len(), m)?;
        }
        Ok(Surrogate {
            spec,
            d,
            m,
            centers_with_origin,
            alpha,
            beta,
            fit_report: None,
        })
    }

    fn from_stacked(spec: KernelSpec, pts: Vec<Vec<f64>>, coef: &DVector<f64>, d: usize, m: usize) -> Self {
        let n1 = pts.len();
        let alpha = (0..n1)
            .map(|i| (0..m).map(|c| coef[i * m + c]).collect())
            .collect();
        let beta = (0..d)
            .map(|j| (0..m).map(|c| coef[n1 * m + j * m + c]).collect())
            .collect();
        Surrogate {
            spec,
            d,
            m,
            centers_with_origin: pts,
            alpha,
            beta,
            fit_report: None,
        }
    }

    /// Stacked `(alpha, beta)` in the block-system ordering.
    pub fn coefficients(&self) -> DVector<f64> {
        DVector::from_iterator(
            (self.alpha.len() + self.beta.len()) * self.m,
            self.alpha.iter().chain(&self.beta).flatten().copied(),
        )
    }

    /// Sums are compensated: fitted coefficients are often large and
    /// cancel, and plain accumulation would swamp `s(0) = 0`.
    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim("evaluation point", x.len(), self.d)?;
        let mut out = vec![Compensated::default(); self.m];
        for (p, a) in self.centers_with_origin.iter().zip(&self.alpha) {
            let k = self.spec.eval_unchecked(x, p);
            for (o, ac) in out.iter_mut().zip(a) {
                o.add_product(k, *ac);
            }
        }
        let mut grad = vec![0.0; self.d];
        self.spec.grad_second_into(x, &vec![0.0; self.d], &mut grad);
        for (g, b) in grad.iter().zip(&self.beta) {
            for (o, bc) in out.iter_mut().zip(b) {
                o.add_product(*g, *bc);
            }
        }
        Ok(out.iter().map(Compensated::value).collect())
    }

    /// `m x d` Jacobian.
    pub fn jacobian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        check_dim("evaluation point", x.len(), self.d)?;
        let mut acc = vec![Compensated::default(); self.m * self.d];
        let mut grad = vec![0.0; self.d];
        for (p, a) in self.centers_with_origin.iter().zip(&self.alpha) {
            // d/dx k(x, p) = grad_second(p, x) by symmetry.
            self.spec.grad_second_into(p, x, &mut grad);
            for (i, g) in grad.iter().enumerate() {
                for (c, ac) in a.iter().enumerate() {
                    acc[c + i * self.m].add_product(*g, *ac);
                }
            }
        }
        let h = self.spec.mixed_hessian_unchecked(x, &vec![0.0; self.d]);
        for (j, b) in self.beta.iter().enumerate() {
            for i in 0..self.d {
                for (c, bc) in b.iter().enumerate() {
                    acc[c + i * self.m].add_product(h[(i, j)], *bc);
                }
            }
        }
        Ok(DMatrix::from_fn(self.m, self.d, |c, i| acc[c + i * self.m].value()))
    }
}

/// Double-double accumulator (TwoSum plus an FMA-exact product).
#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct Compensated {
    hi: f64,
    lo: f64,
}

impl Compensated {
    pub(crate) fn new(start: f64) -> Self {
        Compensated { hi: start, lo: 0.0 }
    }

    pub(crate) fn add_product(&mut self, a: f64, b: f64) {
        let p = a * b;
        let p_err = a.mul_add(b, -p);
        let s = self.hi + p;
        let bb = s - self.hi;
        let s_err = (self.hi - (s - bb)) + (p - bb);
        self.hi = s;
        self.lo += s_err + p_err;
    }

    pub(crate) fn value(&self) -> f64 {
        self.hi + self.lo
    }
}

/// Solves the block system. The origin constraint norms are recorded in
/// the fit report; see [`FitReport::constraints_met`].
pub fn fit(problem: &RegressionProblem) -> Result<Surrogate> {
    let (d, m) = problem.dims()?;
    fit_with_dims(problem, d, m)
}

pub fn fit_with_dims(problem: &RegressionProblem, d: usize, m: usize) -> Result<Surrogate> {
    let blocks = assemble_blocks_with_dims(problem, d, m)?;
    let matrix = blocks.full_matrix();
    let rhs = blocks.rhs();
    let solved = solve_symmetric(&matrix, &rhs)?;

    let mut s = Surrogate::from_stacked(problem.spec, problem.centers_with_origin(d), &solved.solution, d, m);
    let origin = vec![0.0; d];
    let v0 = norm(&s.eval(&origin)?);
    let j0 = s.jacobian(&origin)?.norm();
    let report = FitReport {
        relative_residual: solved.relative_residual,
        backward_error: solved.backward_error,
        condition_estimate: solved.condition,
        pseudo_inverse_fallback: solved.pseudo_inverse,
        refinement_steps: solved.refinement_steps,
        origin_value_norm: v0,
        origin_jacobian_norm: j0,
    };
    s.fit_report = Some(report);
    Ok(s)
}

struct Solved {
    solution: DVector<f64>,
    condition: f64,
    relative_residual: f64,
    backward_error: f64,
    pseudo_inverse: bool,
    refinement_steps: usize,
}

/// Dense solve of the symmetric block system: LU with partial pivoting and
/// residual refinement in double-double, or an SVD pseudo-inverse when the
/// condition number exceeds [`PSEUDO_SOLVE_CONDITION`].
fn solve_symmetric(matrix: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<Solved> {
    if matrix.iter().any(|v| !v.is_finite()) {
        return Err(Error::FitFailure {
            condition: f64::INFINITY,
            reason: "non-finite system matrix".into(),
        });
    }
    let sv = matrix.clone().svd(true, true);
    let smax = sv.singular_values.max();
    let smin = sv.singular_values.min();
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    let rhs_norm = rhs.norm();
    let relative = |r: &DVector<f64>| if rhs_norm > 0.0 { r.norm() / rhs_norm } else { r.norm() };
    let matrix_norm = matrix.norm();
    let backward = |r: &DVector<f64>, x: &DVector<f64>| {
        let scale = matrix_norm * x.norm() + rhs_norm;
        if scale > 0.0 { r.norm() / scale } else { 0.0 }
    };

    if condition > PSEUDO_SOLVE_CONDITION {
        let eps = f64::EPSILON * matrix.nrows() as f64 * smax;
        let solution = sv.solve(rhs, eps).map_err(|e| Error::FitFailure {
            condition,
            reason: e.to_string(),
        })?;
        if solution.iter().any(|v| !v.is_finite()) {
            return Err(Error::FitFailure {
                condition,
                reason: "pseudo-inverse produced non-finite coefficients".into(),
            });
        }
        let res = accurate_residual(matrix, &solution, rhs);
        return Ok(Solved {
            relative_residual: relative(&res),
            backward_error: backward(&res, &solution),
            solution,
            condition,
            pseudo_inverse: true,
            refinement_steps: 0,
        });
    }

    let lu = matrix.clone().lu();
    let mut x = lu.solve(rhs).ok_or_else(|| Error::FitFailure {
        condition,
        reason: "LU factorization is singular".into(),
    })?;
    let mut res = accurate_residual(matrix, &x, rhs);
    let mut steps = 0;
    for _ in 0..8 {
        let Some(dx) = lu.solve(&(-&res)) else { break };
        let candidate = &x + &dx;
        let candidate_res = accurate_residual(matrix, &candidate, rhs);
        if candidate_res.norm() >= res.norm() {
            break;
        }
        x = candidate;
        res = candidate_res;
        steps += 1;
        if dx.norm() <= f64::EPSILON * x.norm() {
            break;
        }
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::FitFailure {
            condition,
            reason: "non-finite coefficients".into(),
        });
    }
    Ok(Solved {
        relative_residual: relative(&res),
        backward_error: backward(&res, &x),
        solution: x,
        condition,
        pseudo_inverse: false,
        refinement_steps: steps,
    })
}

/// `M x - f` with each row accumulated in double-double.
fn accurate_residual(matrix: &DMatrix<f64>, x: &DVector<f64>, f: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(
        matrix.nrows(),
        (0..matrix.nrows()).map(|i| {
            let mut acc = Compensated::new(-f[i]);
            for j in 0..matrix.ncols() {
                acc.add_product(matrix[(i, j)], x[j]);
            }
            acc.value()
        }),
    )
}

/// `J(s) = |s|_H^2 + sum_i (s(x_i) - y_i)^T omega_i (s(x_i) - y_i)` for a
/// surrogate expressed over the problem's centers plus the origin.
pub fn objective_value(s: &Surrogate, problem: &RegressionProblem) -> Result<f64> {
    let d = s.d;
    if s.centers_with_origin != problem.centers_with_origin(d) || s.spec != problem.spec {
        return Err(Error::invalid(
            "surrogate is not expressed in the representer basis of this problem",
        ));
    }
    let blocks = assemble_blocks_with_dims(problem, d, s.m)?;
    let c = s.coefficients();
    let norm_sq = (c.transpose() * blocks.gram() * &c)[(0, 0)];
    let omega = problem.data_weight();
    let mut data = 0.0;
    for (x, y) in problem.centers.iter().zip(&problem.targets) {
        let v = s.eval(x)?;
        data += omega * v.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    }
    Ok(norm_sq + data)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}
