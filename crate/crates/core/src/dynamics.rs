//! Split polynomial systems, implicit Euler integration and dataset harvesting.
//!
//! A [`SplitSystem`] is `x' = f1(x, y)`, `y' = f2(x, y)` with `x` in `R^d` the
//! center coordinates and `y` in `R^m` the stable ones. The linear part at the
//! origin must be block diagonal, `F1` with spectrum on the imaginary axis and
//! `F2` stable; the split is supplied by the caller, never computed.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::polynomial::{FieldTerm, PolynomialField};

/// Serializable description of a split system (the system file format).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemDescription {
    #[serde(default)]
    pub name: String,
    pub d: usize,
    pub m: usize,
    pub f1: Vec<FieldTerm>,
    pub f2: Vec<FieldTerm>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SplitSystem {
    name: String,
    d: usize,
    m: usize,
    f1: PolynomialField,
    f2: PolynomialField,
    f1_linear: DMatrix<f64>,
    f2_linear: DMatrix<f64>,
}

impl SplitSystem {
    /// Validates and builds a system. Both fields act on the full state
    /// `(x, y)` of dimension `d + m`.
    pub fn new(name: impl Into<String>, f1: PolynomialField, f2: PolynomialField) -> Result<Self> {
        let d = f1.noutputs();
        let m = f2.noutputs();
        check_dim("f1 variables", f1.nvars(), d + m)?;
        check_dim("f2 variables", f2.nvars(), d + m)?;
        if f1.constant_term().iter().chain(&f2.constant_term()).any(|c| *c != 0.0) {
            return Err(Error::invalid("the origin must be an equilibrium"));
        }
        let l1 = f1.linear_part();
        let l2 = f2.linear_part();
        let coupled = l1.columns(d, m).iter().any(|v| *v != 0.0)
            || l2.columns(0, d).iter().any(|v| *v != 0.0);
        if coupled {
            return Err(Error::invalid(
                "linear part must be block diagonal in the (x, y) split",
            ));
        }
        Ok(SplitSystem {
            name: name.into(),
            d,
            m,
            f1_linear: l1.columns(0, d).into_owned(),
            f2_linear: l2.columns(d, m).into_owned(),
            f1,
            f2,
        })
    }

    pub fn from_description(desc: &SystemDescription) -> Result<Self> {
        let n = desc.d + desc.m;
        let f1 = PolynomialField::new(n, desc.d, desc.f1.clone())?;
        let f2 = PolynomialField::new(n, desc.m, desc.f2.clone())?;
        Self::new(desc.name.clone(), f1, f2)
    }

    pub fn description(&self) -> SystemDescription {
        SystemDescription {
            name: self.name.clone(),
            d: self.d,
            m: self.m,
            f1: self.f1.terms(),
            f2: self.f2.terms(),
        }
    }

    /// `x' = x y`, `y' = -y + x^2`. Unstable origin.
    pub fn example1() -> Self {
        let f1 = PolynomialField::from_pairs(2, 1, &[(&[1, 1], &[1.0])]).unwrap();
        let f2 =
            PolynomialField::from_pairs(2, 1, &[(&[0, 1], &[-1.0]), (&[2, 0], &[1.0])]).unwrap();
        Self::new("example1", f1, f2).unwrap()
    }

    /// `x' = -x y`, `y' = x^2 - y - 2 y^2`. Stable origin.
    pub fn example2() -> Self {
        let f1 = PolynomialField::from_pairs(2, 1, &[(&[1, 1], &[-1.0])]).unwrap();
        let f2 = PolynomialField::from_pairs(
            2,
            1,
            &[(&[2, 0], &[1.0]), (&[0, 1], &[-1.0]), (&[0, 2], &[-2.0])],
        )
        .unwrap();
        Self::new("example2", f1, f2).unwrap()
    }

    /// `x1' = -x2 + x1 y`, `x2' = x1 + x2 y`, `y' = -y - x1^2 - x2^2 + y^2`.
    pub fn example3() -> Self {
        let f1 = PolynomialField::from_pairs(
            3,
            2,
            &[
                (&[0, 1, 0], &[-1.0, 0.0]),
                (&[1, 0, 1], &[1.0, 0.0]),
                (&[1, 0, 0], &[0.0, 1.0]),
                (&[0, 1, 1], &[0.0, 1.0]),
            ],
        )
        .unwrap();
        let f2 = PolynomialField::from_pairs(
            3,
            1,
            &[
                (&[0, 0, 1], &[-1.0]),
                (&[2, 0, 0], &[-1.0]),
                (&[0, 2, 0], &[-1.0]),
                (&[0, 0, 2], &[1.0]),
            ],
        )
        .unwrap();
        Self::new("example3", f1, f2).unwrap()
    }

    pub fn builtin(name: &str) -> Option<Self> {
        match name {
            "example1" => Some(Self::example1()),
            "example2" => Some(Self::example2()),
            "example3" => Some(Self::example3()),
            _ => None,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn center_dim(&self) -> usize {
        self.d
    }

    pub fn stable_dim(&self) -> usize {
        self.m
    }

    pub fn state_dim(&self) -> usize {
        self.d + self.m
    }

    pub fn f1(&self) -> &PolynomialField {
        &self.f1
    }

    pub fn f2(&self) -> &PolynomialField {
        &self.f2
    }

    /// `F1`, the `d x d` linear part of `f1` at the origin.
    pub fn center_linear(&self) -> &DMatrix<f64> {
        &self.f1_linear
    }

    /// `F2`, the `m x m` linear part of `f2` at the origin.
    pub fn stable_linear(&self) -> &DMatrix<f64> {
        &self.f2_linear
    }

    pub fn rhs_eval(&self, x: &[f64], y: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        check_dim("center state", x.len(), self.d)?;
        check_dim("stable state", y.len(), self.m)?;
        let z = join(x, y);
        Ok((self.f1.eval(&z), self.f2.eval(&z)))
    }

    /// Full right-hand side on the stacked state `(x, y)`.
    pub fn rhs(&self, z: &[f64]) -> Vec<f64> {
        let mut out = self.f1.eval(z);
        out.extend(self.f2.eval(z));
        out
    }

    /// Full `(d + m) x (d + m)` Jacobian.
    pub fn jacobian(&self, z: &[f64]) -> DMatrix<f64> {
        let n = self.state_dim();
        let mut jac = DMatrix::zeros(n, n);
        jac.rows_mut(0, self.d).copy_from(&self.f1.jacobian(z));
        jac.rows_mut(self.d, self.m).copy_from(&self.f2.jacobian(z));
        jac
    }
}

pub(crate) fn join(x: &[f64], y: &[f64]) -> Vec<f64> {
    let mut z = Vec::with_capacity(x.len() + y.len());
    z.extend_from_slice(x);
    z.extend_from_slice(y);
    z
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NewtonSettings {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for NewtonSettings {
    fn default() -> Self {
        NewtonSettings {
            tol: 1e-12,
            max_iter: 50,
        }
    }
}

/// What a trajectory does when the Newton solve of a step does not converge.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FailurePolicy {
    /// Return the step failure.
    Abort,
    /// Keep the last (finite) Newton iterate as the new state and record the step.
    #[default]
    ContinueWithLastIterate,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntegrationSettings {
    pub t0: f64,
    pub t_end: f64,
    pub dt: f64,
    pub newton: NewtonSettings,
    pub on_failure: FailurePolicy,
}

impl Default for IntegrationSettings {
    fn default() -> Self {
        IntegrationSettings {
            t0: 0.0,
            t_end: 1000.0,
            dt: 0.1,
            newton: NewtonSettings::default(),
            on_failure: FailurePolicy::default(),
        }
    }
}

impl IntegrationSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::invalid("dt must be positive"));
        }
        if !(self.t0.is_finite() && self.t_end.is_finite() && self.t_end >= self.t0) {
            return Err(Error::invalid("final time must not precede the initial time"));
        }
        if !(self.newton.tol > 0.0) || self.newton.max_iter == 0 {
            return Err(Error::invalid("Newton tolerance and iteration cap must be positive"));
        }
        Ok(())
    }

    /// `floor((T - t0) / dt)`, robust to the representation error of `dt`.
    pub fn step_count(&self) -> usize {
        let ratio = (self.t_end - self.t0) / self.dt;
        (ratio + 1e-9 * ratio.max(1.0)).floor() as usize
    }
}

/// Result of one Newton solve, converged or not.
#[derive(Clone, Debug)]
pub struct StepOutcome {
    pub state: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Norm of `z - state - dt f(z)` at the returned iterate.
    pub residual: f64,
}

/// Solves `z = state + dt f(z)` by Newton's method started at `state`.
/// `field` returns `f(z)` and its Jacobian. Convergence is declared when the
/// Newton update has Euclidean norm `<= tol`.
pub fn implicit_euler_solve<F>(
    state: &[f64],
    dt: f64,
    newton: &NewtonSettings,
    field: F,
) -> StepOutcome
where
    F: Fn(&[f64]) -> (Vec<f64>, DMatrix<f64>),
{
    let n = state.len();
    let mut z = state.to_vec();
    let residual_of = |z: &[f64], f: &[f64]| -> DVector<f64> {
        DVector::from_iterator(n, (0..n).map(|i| z[i] - state[i] - dt * f[i]))
    };
    for it in 1..=newton.max_iter {
        let (f, jac) = field(&z);
        let g = residual_of(&z, &f);
        let lhs = DMatrix::identity(n, n) - jac * dt;
        let Some(update) = lhs.lu().solve(&g) else {
            return StepOutcome {
                residual: g.norm(),
                state: z,
                converged: false,
                iterations: it,
            };
        };
        for (zi, ui) in z.iter_mut().zip(update.iter()) {
            *zi -= ui;
        }
        let step = update.norm();
        if !step.is_finite() {
            break;
        }
        if step <= newton.tol {
            let (f, _) = field(&z);
            return StepOutcome {
                residual: residual_of(&z, &f).norm(),
                state: z,
                converged: true,
                iterations: it,
            };
        }
    }
    let residual = if z.iter().all(|v| v.is_finite()) {
        residual_of(&z, &field(&z).0).norm()
    } else {
        f64::INFINITY
    };
    StepOutcome {
        state: z,
        converged: false,
        iterations: newton.max_iter,
        residual,
    }
}

/// One implicit Euler step using the analytic polynomial Jacobian.
pub fn implicit_euler_step(
    system: &SplitSystem,
    state: &[f64],
    dt: f64,
    newton: &NewtonSettings,
) -> Result<Vec<f64>> {
    check_dim("state", state.len(), system.state_dim())?;
    if !(dt > 0.0) || !(newton.tol > 0.0) {
        return Err(Error::invalid("dt and Newton tolerance must be positive"));
    }
    let out = implicit_euler_solve(state, dt, newton, |z| (system.rhs(z), system.jacobian(z)));
    if out.converged {
        Ok(out.state)
    } else {
        Err(Error::StepFailure {
            trajectory: None,
            step: 0,
            iterations: out.iterations,
            residual: out.residual,
            last_iterate: out.state,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    /// Indices (1-based step numbers) whose Newton solve did not converge.
    pub nonconverged_steps: Vec<usize>,
}

/// Integrates a generic field with fixed-step implicit Euler.
pub fn integrate_implicit_euler<F>(
    initial: &[f64],
    settings: &IntegrationSettings,
    field: F,
) -> Result<Trajectory>
where
    F: Fn(&[f64]) -> (Vec<f64>, DMatrix<f64>),
{
    settings.validate()?;
    let steps = settings.step_count();
    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    let mut nonconverged = Vec::new();
    times.push(settings.t0);
    states.push(initial.to_vec());
    let mut current = initial.to_vec();
    for k in 1..=steps {
        let out = implicit_euler_solve(&current, settings.dt, &settings.newton, &field);
        if !out.converged {
            let finite = out.state.iter().all(|v| v.is_finite());
            if settings.on_failure == FailurePolicy::Abort || !finite {
                return Err(Error::StepFailure {
                    trajectory: None,
                    step: k,
                    iterations: out.iterations,
                    residual: out.residual,
                    last_iterate: out.state,
                });
            }
            nonconverged.push(k);
        }
        current = out.state;
        times.push(settings.t0 + k as f64 * settings.dt);
        states.push(current.clone());
    }
    Ok(Trajectory {
        times,
        states,
        nonconverged_steps: nonconverged,
    })
}

/// Returns the initial state plus one state per step.
pub fn simulate_trajectory(
    system: &SplitSystem,
    initial: &[f64],
    settings: &IntegrationSettings,
) -> Result<Trajectory> {
    check_dim("initial state", initial.len(), system.state_dim())?;
    integrate_implicit_euler(initial, settings, |z| (system.rhs(z), system.jacobian(z)))
}

/// Axis-aligned closed box on the center coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl DomainBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        check_dim("box upper bounds", upper.len(), lower.len())?;
        if lower.iter().chain(&upper).any(|v| v.is_nan()) {
            return Err(Error::invalid("box bounds must not be NaN"));
        }
        Ok(DomainBox { lower, upper })
    }

    /// `[-half_width, half_width]^d`
    pub fn symmetric(d: usize, half_width: f64) -> Self {
        DomainBox {
            lower: vec![-half_width; d],
            upper: vec![half_width; d],
        }
    }

    pub fn whole_space(d: usize) -> Self {
        DomainBox {
            lower: vec![f64::NEG_INFINITY; d],
            upper: vec![f64::INFINITY; d],
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    /// Closed-interval membership; boundary points are inside.
    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (lo, hi))| *lo <= *v && *v <= *hi)
    }
}

/// All sign combinations `{+mag, -mag}^n`, `+` first, first component slowest.
pub fn sign_grid(n: usize, magnitude: f64) -> Vec<Vec<f64>> {
    (0..1usize << n)
        .map(|bits| {
            (0..n)
                .map(|i| {
                    if bits >> (n - 1 - i) & 1 == 0 {
                        magnitude
                    } else {
                        -magnitude
                    }
                })
                .collect()
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetProvenance {
    pub system: String,
    pub initial_grid: Vec<Vec<f64>>,
    pub settings: IntegrationSettings,
    pub raw_count: usize,
    pub retained_count: usize,
    /// Non-converged Newton steps per trajectory, in grid order.
    pub nonconverged_steps: Vec<Vec<usize>>,
}

/// Filtered `(x, y)` pairs harvested from trajectories, in encounter order.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryDataset {
    pub d: usize,
    pub m: usize,
    pub times: Vec<f64>,
    pub x_points: Vec<Vec<f64>>,
    pub y_points: Vec<Vec<f64>>,
    pub domain_box: DomainBox,
    pub provenance: Option<DatasetProvenance>,
}

impl TrajectoryDataset {
    pub fn len(&self) -> usize {
        self.x_points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x_points.is_empty()
    }
}

/// Simulates every initial state (in parallel) and keeps the states whose
/// center part lies in `domain_box`. Merge order is the grid order.
pub fn build_dataset(
    system: &SplitSystem,
    initial_grid: &[Vec<f64>],
    settings: &IntegrationSettings,
    domain_box: &DomainBox,
) -> Result<TrajectoryDataset> {
    if initial_grid.is_empty() {
        return Err(Error::invalid("initial grid is empty"));
    }
    check_dim("domain box", domain_box.dim(), system.center_dim())?;
    let trajectories: Vec<Trajectory> = initial_grid
        .par_iter()
        .enumerate()
        .map(|(i, z0)| {
            simulate_trajectory(system, z0, settings).map_err(|e| match e {
                Error::StepFailure {
                    step,
                    iterations,
                    residual,
                    last_iterate,
                    ..
                } => Error::StepFailure {
                    trajectory: Some(i),
                    step,
                    iterations,
                    residual,
                    last_iterate,
                },
                other => other,
            })
        })
        .collect::<Result<_>>()?;

    let d = system.center_dim();
    let mut out = TrajectoryDataset {
        d,
        m: system.stable_dim(),
        times: Vec::new(),
        x_points: Vec::new(),
        y_points: Vec::new(),
        domain_box: domain_box.clone(),
        provenance: None,
    };
    let mut raw = 0;
    for traj in &trajectories {
        raw += traj.states.len();
        for (t, z) in traj.times.iter().zip(&traj.states) {
            let (x, y) = z.split_at(d);
            if domain_box.contains(x) {
                out.times.push(*t);
                out.x_points.push(x.to_vec());
                out.y_points.push(y.to_vec());
            }
        }
    }
    out.provenance = Some(DatasetProvenance {
        system: system.name().to_string(),
        initial_grid: initial_grid.to_vec(),
        settings: *settings,
        raw_count: raw,
        retained_count: out.len(),
        nonconverged_steps: trajectories
            .into_iter()
            .map(|t| t.nonconverged_steps)
            .collect(),
    });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn decay() -> SplitSystem {
        // Degenerate split with a trivial center block: x' = 0 * x, y' = -y.
        let f1 = PolynomialField::new(2, 1, vec![]).unwrap();
        let f2 = PolynomialField::from_pairs(2, 1, &[(&[0, 1], &[-1.0])]).unwrap();
        SplitSystem::new("decay", f1, f2).unwrap()
    }

    fn short(t_end: f64) -> IntegrationSettings {
        IntegrationSettings {
            t_end,
            ..Default::default()
        }
    }

    #[test]
    fn rhs_examples() {
        let e1 = SplitSystem::example1();
        assert_eq!(e1.rhs_eval(&[0.0], &[0.0]).unwrap(), (vec![0.0], vec![0.0]));
        let (a, b) = e1.rhs_eval(&[0.1], &[0.01]).unwrap();
        assert_abs_diff_eq!(a[0], 0.001, epsilon = 1e-18);
        assert_abs_diff_eq!(b[0], 0.0, epsilon = 1e-17);
        let e3 = SplitSystem::example3();
        let (a, b) = e3.rhs_eval(&[0.0, 0.1], &[0.0]).unwrap();
        assert_eq!(a, vec![-0.1, 0.0]);
        assert_abs_diff_eq!(b[0], -0.01, epsilon = 1e-17);
        assert!(e3.rhs_eval(&[0.0], &[0.0]).is_err());
    }

    #[test]
    fn builtin_linear_blocks() {
        assert_eq!(SplitSystem::example1().center_linear()[(0, 0)], 0.0);
        assert_eq!(SplitSystem::example2().stable_linear()[(0, 0)], -1.0);
        let e3 = SplitSystem::example3();
        assert_eq!(
            *e3.center_linear(),
            DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0])
        );
        assert_eq!(e3.stable_linear()[(0, 0)], -1.0);
    }

    #[test]
    fn linear_blocks_match_finite_differences() {
        for sys in [
            SplitSystem::example1(),
            SplitSystem::example2(),
            SplitSystem::example3(),
        ] {
            let n = sys.state_dim();
            let d = sys.center_dim();
            let h = 1e-6;
            for k in 0..n {
                let mut zp = vec![0.0; n];
                let mut zm = vec![0.0; n];
                zp[k] = h;
                zm[k] = -h;
                let (fp, fm) = (sys.rhs(&zp), sys.rhs(&zm));
                for r in 0..n {
                    let fd = (fp[r] - fm[r]) / (2.0 * h);
                    let exact = match (r < d, k < d) {
                        (true, true) => sys.center_linear()[(r, k)],
                        (false, false) => sys.stable_linear()[(r - d, k - d)],
                        _ => 0.0,
                    };
                    assert_abs_diff_eq!(fd, exact, epsilon = 1e-9);
                }
            }
        }
    }

    #[test]
    fn invalid_systems_are_rejected() {
        let f1 = PolynomialField::from_pairs(2, 1, &[(&[0, 0], &[1.0])]).unwrap();
        let f2 = PolynomialField::from_pairs(2, 1, &[(&[0, 1], &[-1.0])]).unwrap();
        assert!(SplitSystem::new("c", f1, f2.clone()).is_err());
        let coupled = PolynomialField::from_pairs(2, 1, &[(&[0, 1], &[1.0])]).unwrap();
        assert!(SplitSystem::new("c", coupled, f2).is_err());
    }

    #[test]
    fn linear_decay_step() {
        let z = implicit_euler_step(&decay(), &[0.0, 1.0], 0.1, &NewtonSettings::default())
            .unwrap();
        assert_abs_diff_eq!(z[1], 1.0 / 1.1, epsilon = 1e-15);
    }

    #[test]
    fn zero_field_is_a_fixed_point() {
        let f1 = PolynomialField::new(2, 1, vec![]).unwrap();
        let f2 = PolynomialField::new(2, 1, vec![]).unwrap();
        let sys = SplitSystem::new("zero", f1, f2).unwrap();
        let z = implicit_euler_step(&sys, &[0.3, -2.0], 0.1, &NewtonSettings::default()).unwrap();
        assert_eq!(z, vec![0.3, -2.0]);
    }

    #[test]
    fn step_failure_carries_last_iterate() {
        // Example 1 past the fold of the implicit Euler map: no nearby root.
        let err = implicit_euler_step(
            &SplitSystem::example1(),
            &[3.11719004, 2.46796502],
            0.1,
            &NewtonSettings::default(),
        )
        .unwrap_err();
        match err {
            Error::StepFailure {
                last_iterate,
                residual,
                ..
            } => {
                assert_eq!(last_iterate.len(), 2);
                assert!(residual > 1e-6);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn trajectory_lengths() {
        let sys = decay();
        let t = simulate_trajectory(&sys, &[0.0, 1.0], &short(0.0)).unwrap();
        assert_eq!(t.states, vec![vec![0.0, 1.0]]);

        let t = simulate_trajectory(&sys, &[0.0, 1.0], &short(0.3)).unwrap();
        assert_eq!(t.states.len(), 4);
        for (k, z) in t.states.iter().enumerate() {
            assert_abs_diff_eq!(z[1], 1.1f64.powi(-(k as i32)), epsilon = 1e-14);
        }
        assert_eq!(IntegrationSettings::default().step_count(), 10000);
    }

    #[test]
    fn equilibrium_is_preserved() {
        for sys in [SplitSystem::example1(), SplitSystem::example3()] {
            let z0 = vec![0.0; sys.state_dim()];
            let t = simulate_trajectory(&sys, &z0, &short(50.0)).unwrap();
            assert!(t.states.iter().all(|z| z.iter().all(|v| *v == 0.0)));
        }
    }

    #[test]
    fn abort_policy_reports_failing_step() {
        let settings = IntegrationSettings {
            on_failure: FailurePolicy::Abort,
            ..short(20.0)
        };
        match simulate_trajectory(&SplitSystem::example1(), &[0.8, 0.8], &settings) {
            Err(Error::StepFailure { step, .. }) => assert!(step > 0),
            other => panic!("expected step failure, got {other:?}"),
        }
    }

    #[test]
    fn unfiltered_dataset_keeps_every_state() {
        let sys = decay();
        let ds = build_dataset(
            &sys,
            &[vec![0.0, 1.0]],
            &short(1.0),
            &DomainBox::whole_space(1),
        )
        .unwrap();
        assert_eq!(ds.len(), 11);
        let empty = build_dataset(
            &sys,
            &[vec![0.0, 1.0]],
            &short(1.0),
            &DomainBox::new(vec![1.0], vec![-1.0]).unwrap(),
        )
        .unwrap();
        assert!(empty.is_empty());
        assert!(build_dataset(&sys, &[], &short(1.0), &DomainBox::whole_space(1)).is_err());
    }

    #[test]
    fn closed_box_keeps_boundary() {
        let b = DomainBox::symmetric(2, 0.1);
        assert!(b.contains(&[0.1, -0.1]));
        assert!(!b.contains(&[0.1000001, 0.0]));
    }

    #[test]
    fn grid_order() {
        assert_eq!(
            sign_grid(2, 0.8),
            vec![
                vec![0.8, 0.8],
                vec![0.8, -0.8],
                vec![-0.8, 0.8],
                vec![-0.8, -0.8]
            ]
        );
        assert_eq!(sign_grid(3, 1.0).len(), 8);
    }

    #[test]
    fn description_roundtrip() {
        let e3 = SplitSystem::example3();
        let json = serde_json::to_string(&e3.description()).unwrap();
        let back: SystemDescription = serde_json::from_str(&json).unwrap();
        assert_eq!(SplitSystem::from_description(&back).unwrap(), e3);
    }
}
