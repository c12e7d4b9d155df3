//! P-greedy center selection.
//!
//! Points are picked one at a time by maximizing the power function of the
//! kernel on the current center set. The Newton basis of the selected
//! centers is kept column by column, so after `n` steps the squared power at a
//! candidate `x` is `k(x, x) - sum_j v_j(x)^2` and each step costs one kernel
//! column plus one update over all candidates. Selection never looks at
//! target values.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::KernelSpec;

/// Squared power values in `[-NEGATIVE_FLOOR, 0)` are round-off and clipped.
pub const NEGATIVE_FLOOR: f64 = 1e-12;

/// Which quantity the stopping tolerance bounds.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TolMode {
    /// The power function `P`.
    Power,
    /// Its square `P^2`.
    #[default]
    PowerSquared,
}

impl TolMode {
    fn measure(self, power_squared: f64) -> f64 {
        match self {
            TolMode::Power => power_squared.sqrt(),
            TolMode::PowerSquared => power_squared,
        }
    }
}

impl std::str::FromStr for TolMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "p" | "power" => Ok(TolMode::Power),
            "p2" | "power_squared" => Ok(TolMode::PowerSquared),
            _ => Err(Error::Parse(format!("tol mode {s:?}: expected p or p2"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GreedySelection {
    /// Indices into the candidate list, in selection order.
    pub selected_indices: Vec<usize>,
    /// Maximal power (in `tol_mode` units) at each selection step.
    pub power_history: Vec<f64>,
    /// Maximal power over the unselected candidates when the loop stopped.
    pub final_max_power: f64,
    pub eps_tol: f64,
    pub tol_mode: TolMode,
}

/// Runs P-greedy over `candidates` until the maximal power drops to
/// `eps_tol` (measured per `tol_mode`), `max_points` centers are chosen or
/// the candidates are exhausted. Ties go to the smallest index.
pub fn p_greedy_select(
    candidates: &[Vec<f64>],
    spec: &KernelSpec,
    eps_tol: f64,
    tol_mode: TolMode,
    max_points: usize,
) -> Result<GreedySelection> {
    let Some(first) = candidates.first() else {
        return Err(Error::invalid("no candidates"));
    };
    let d = first.len();
    if d == 0 || candidates.iter().any(|c| c.len() != d) {
        return Err(Error::invalid("candidates must share one positive dimension"));
    }
    if !(eps_tol > 0.0) || max_points == 0 {
        return Err(Error::invalid("eps_tol and max_points must be positive"));
    }
    spec.validate()?;

    let n = candidates.len();
    let mut power_sq: Vec<f64> = candidates
        .iter()
        .map(|c| spec.eval_unchecked(c, c))
        .collect();
    check_finite(&power_sq)?;

    // Newton basis values: basis[j][i] = v_j(candidate i).
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut selected = Vec::new();
    let mut is_selected = vec![false; n];
    let mut history = Vec::new();

    let final_max = loop {
        let best = argmax_unselected(&power_sq, &is_selected);
        let Some((idx, p2)) = best else {
            break 0.0;
        };
        let measure = tol_mode.measure(p2);
        if measure <= eps_tol || selected.len() >= max_points {
            break measure;
        }
        let pivot = p2.sqrt();
        let center = &candidates[idx];
        let mut column: Vec<f64> = candidates
            .iter()
            .map(|c| spec.eval_unchecked(c, center))
            .collect();
        check_finite(&column)?;
        for v in &basis {
            let vi = v[idx];
            for (c, vj) in column.iter_mut().zip(v) {
                *c -= vj * vi;
            }
        }
        for c in column.iter_mut() {
            *c /= pivot;
        }
        for (p, v) in power_sq.iter_mut().zip(&column) {
            *p -= v * v;
            if *p < 0.0 {
                if *p < -NEGATIVE_FLOOR {
                    return Err(Error::NumericalFailure(format!(
                        "squared power {p:e} below -{NEGATIVE_FLOOR:e} after {} selections; \
                         duplicate candidates or an invalid kernel",
                        selected.len() + 1
                    )));
                }
                *p = 0.0;
            }
        }
        basis.push(column);
        selected.push(idx);
        is_selected[idx] = true;
        history.push(measure);
    };

    Ok(GreedySelection {
        selected_indices: selected,
        power_history: history,
        final_max_power: final_max,
        eps_tol,
        tol_mode,
    })
}

/// Largest squared power among unselected candidates; the first index wins ties.
fn argmax_unselected(power_sq: &[f64], is_selected: &[bool]) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, (&p, &taken)) in power_sq.iter().zip(is_selected).enumerate() {
        if taken {
            continue;
        }
        match best {
            Some((_, b)) if p <= b => {}
            _ => best = Some((i, p)),
        }
    }
    best
}

fn check_finite(values: &[f64]) -> Result<()> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericalFailure("non-finite kernel value".into()));
    }
    Ok(())
}

/// Newton basis of a center set, evaluable anywhere.
///
/// `v_j(x) = (k(x, c_j) - sum_{i<j} v_i(x) v_i(c_j)) / P_{j-1}(c_j)`, so the
/// squared power function of the first `n` centers is
/// `k(x, x) - sum_{j<n} v_j(x)^2`.
#[derive(Clone, Debug)]
pub struct NewtonBasis {
    spec: KernelSpec,
    centers: Vec<Vec<f64>>,
    /// `triangle[j][i] = v_i(c_j)` for `i < j`.
    triangle: Vec<Vec<f64>>,
    pivots: Vec<f64>,
}

impl NewtonBasis {
    pub fn new(spec: KernelSpec) -> Self {
        NewtonBasis {
            spec,
            centers: Vec::new(),
            triangle: Vec::new(),
            pivots: Vec::new(),
        }
    }

    /// Basis of the selected candidates, in selection order.
    pub fn from_selection(candidates: &[Vec<f64>], spec: KernelSpec, selection: &GreedySelection) -> Result<Self> {
        let mut basis = NewtonBasis::new(spec);
        for &i in &selection.selected_indices {
            let c = candidates
                .get(i)
                .ok_or_else(|| Error::invalid(format!("selected index {i} out of range")))?;
            basis.push(c.clone())?;
        }
        Ok(basis)
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn centers(&self) -> &[Vec<f64>] {
        &self.centers
    }

    /// Adds a center and returns its pivot, the power at it before adding.
    pub fn push(&mut self, center: Vec<f64>) -> Result<f64> {
        if let Some(first) = self.centers.first() {
            crate::error::check_dim("center", center.len(), first.len())?;
        }
        let values = self.values(&center)?;
        let p2 = self.spec.eval(&center, &center)? - values.iter().map(|v| v * v).sum::<f64>();
        if !(p2 > 0.0) {
            return Err(Error::NumericalFailure(format!(
                "center {center:?} has squared power {p2:e}; it is (numerically) in the span of the basis"
            )));
        }
        let pivot = p2.sqrt();
        self.triangle.push(values);
        self.pivots.push(pivot);
        self.centers.push(center);
        Ok(pivot)
    }

    /// `(v_0(x), ..., v_{n-1}(x))`
    pub fn values(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut out: Vec<f64> = Vec::with_capacity(self.len());
        for (j, c) in self.centers.iter().enumerate() {
            let mut v = self.spec.eval(x, c)?;
            for (vi, tji) in out.iter().zip(&self.triangle[j]) {
                v -= vi * tji;
            }
            out.push(v / self.pivots[j]);
        }
        Ok(out)
    }

    /// Squared power function `P(x)^2`, clipped at zero.
    pub fn power_squared(&self, x: &[f64]) -> Result<f64> {
        let v = self.values(x)?;
        Ok((self.spec.eval(x, x)? - v.iter().map(|a| a * a).sum::<f64>()).max(0.0))
    }
}

/// Unique candidate points in first-occurrence order, dropping the origin.
/// Returns the points and, for each, the index of its first occurrence.
pub fn deduplicate_candidates(points: &[Vec<f64>]) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut seen = HashSet::new();
    let mut unique = Vec::new();
    let mut rows = Vec::new();
    for (i, p) in points.iter().enumerate() {
        if p.iter().all(|v| *v == 0.0) {
            continue;
        }
        // +0.0 and -0.0 compare equal, so normalize before hashing bits.
        let key: Vec<u64> = p.iter().map(|v| (v + 0.0).to_bits()).collect();
        if seen.insert(key) {
            unique.push(p.clone());
            rows.push(i);
        }
    }
    (unique, rows)
}
