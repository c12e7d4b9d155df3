//! Sparse multivariate polynomials with floating coefficients.
//!
//! [`Polynomial`] is a scalar polynomial used for truncated Taylor arithmetic.
//! [`PolynomialField`] is a vector field whose terms share one exponent
//! multi-index and carry one coefficient per output component; this is the
//! representation of the right-hand sides of split systems.

use std::collections::btree_map::Entry;
use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

pub type Exponent = Vec<u32>;

fn total_degree(e: &[u32]) -> u32 {
    e.iter().sum()
}

fn monomial(e: &[u32], x: &[f64]) -> f64 {
    e.iter()
        .zip(x)
        .filter(|(p, _)| **p > 0)
        .map(|(&p, &v)| v.powi(p as i32))
        .product()
}

/// Scalar polynomial in `nvars` variables.
#[derive(Clone, Debug, PartialEq)]
pub struct Polynomial {
    nvars: usize,
    terms: BTreeMap<Exponent, f64>,
}

impl Polynomial {
    pub fn zero(nvars: usize) -> Self {
        Polynomial {
            nvars,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(nvars: usize, c: f64) -> Self {
        let mut p = Self::zero(nvars);
        p.add_term(vec![0; nvars], c);
        p
    }

    /// The coordinate function `x_i`.
    pub fn variable(nvars: usize, i: usize) -> Self {
        let mut e = vec![0; nvars];
        e[i] = 1;
        let mut p = Self::zero(nvars);
        p.add_term(e, 1.0);
        p
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Exponent, f64)> {
        self.terms.iter().map(|(e, c)| (e, *c))
    }

    pub fn coefficient(&self, e: &[u32]) -> f64 {
        self.terms.get(e).copied().unwrap_or(0.0)
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn degree(&self) -> Option<u32> {
        self.terms.keys().map(|e| total_degree(e)).max()
    }

    /// Adds `c * x^e`, dropping the term if it cancels exactly.
    pub fn add_term(&mut self, e: Exponent, c: f64) {
        debug_assert_eq!(e.len(), self.nvars);
        if c == 0.0 {
            return;
        }
        match self.terms.entry(e) {
            Entry::Occupied(mut slot) => {
                *slot.get_mut() += c;
                if *slot.get() == 0.0 {
                    slot.remove();
                }
            }
            Entry::Vacant(slot) => {
                slot.insert(c);
            }
        }
    }

    pub fn add(&self, other: &Polynomial) -> Polynomial {
        let mut out = self.clone();
        for (e, c) in other.terms() {
            out.add_term(e.clone(), c);
        }
        out
    }

    pub fn sub(&self, other: &Polynomial) -> Polynomial {
        self.add(&other.scale(-1.0))
    }

    pub fn scale(&self, s: f64) -> Polynomial {
        let mut out = Self::zero(self.nvars);
        for (e, c) in self.terms() {
            out.add_term(e.clone(), c * s);
        }
        out
    }

    /// Product, keeping only terms of total degree `<= max_degree` when given.
    pub fn mul_truncated(&self, other: &Polynomial, max_degree: Option<u32>) -> Polynomial {
        let mut out = Self::zero(self.nvars);
        for (ea, ca) in self.terms() {
            let da = total_degree(ea);
            for (eb, cb) in other.terms() {
                if let Some(max) = max_degree {
                    if da + total_degree(eb) > max {
                        continue;
                    }
                }
                let e: Exponent = ea.iter().zip(eb).map(|(a, b)| a + b).collect();
                out.add_term(e, ca * cb);
            }
        }
        out
    }

    pub fn pow_truncated(&self, k: u32, max_degree: Option<u32>) -> Polynomial {
        let mut out = Self::constant(self.nvars, 1.0);
        for _ in 0..k {
            out = out.mul_truncated(self, max_degree);
        }
        out
    }

    pub fn truncate(&self, max_degree: u32) -> Polynomial {
        self.filter_degree(|d| d <= max_degree)
    }

    /// The homogeneous part of degree `k`.
    pub fn homogeneous(&self, k: u32) -> Polynomial {
        self.filter_degree(|d| d == k)
    }

    fn filter_degree(&self, keep: impl Fn(u32) -> bool) -> Polynomial {
        Polynomial {
            nvars: self.nvars,
            terms: self
                .terms
                .iter()
                .filter(|(e, _)| keep(total_degree(e)))
                .map(|(e, c)| (e.clone(), *c))
                .collect(),
        }
    }

    pub fn derivative(&self, i: usize) -> Polynomial {
        let mut out = Self::zero(self.nvars);
        for (e, c) in self.terms() {
            if e[i] > 0 {
                let mut de = e.clone();
                de[i] -= 1;
                out.add_term(de, c * e[i] as f64);
            }
        }
        out
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms().map(|(e, c)| c * monomial(e, x)).sum()
    }

    /// Substitutes variable `i` by `subs[i]` (all in a common variable set),
    /// truncating every intermediate product at `max_degree`.
    pub fn compose(&self, subs: &[Polynomial], max_degree: Option<u32>) -> Polynomial {
        assert_eq!(subs.len(), self.nvars);
        let target = subs.first().map_or(0, |p| p.nvars);
        let mut out = Self::zero(target);
        for (e, c) in self.terms() {
            let mut term = Self::constant(target, c);
            for (i, &p) in e.iter().enumerate() {
                if p > 0 {
                    term = term.mul_truncated(&subs[i].pow_truncated(p, max_degree), max_degree);
                }
            }
            out = out.add(&term);
        }
        out
    }
}

/// One term of a [`PolynomialField`]: a monomial with a coefficient per output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldTerm {
    pub exponents: Vec<u32>,
    pub coefficients: Vec<f64>,
}

/// Polynomial map `R^nvars -> R^noutputs`.
#[derive(Clone, Debug, PartialEq)]
pub struct PolynomialField {
    nvars: usize,
    noutputs: usize,
    terms: BTreeMap<Exponent, Vec<f64>>,
}

impl PolynomialField {
    /// Builds a field, merging duplicate exponents.
    pub fn new(nvars: usize, noutputs: usize, terms: Vec<FieldTerm>) -> Result<Self> {
        if nvars == 0 || noutputs == 0 {
            return Err(Error::invalid("polynomial field needs positive dimensions"));
        }
        let mut map: BTreeMap<Exponent, Vec<f64>> = BTreeMap::new();
        for t in terms {
            check_dim("term exponents", t.exponents.len(), nvars)?;
            check_dim("term coefficients", t.coefficients.len(), noutputs)?;
            if t.coefficients.iter().any(|c| !c.is_finite()) {
                return Err(Error::invalid("non-finite polynomial coefficient"));
            }
            let slot = map
                .entry(t.exponents)
                .or_insert_with(|| vec![0.0; noutputs]);
            for (s, c) in slot.iter_mut().zip(&t.coefficients) {
                *s += c;
            }
        }
        map.retain(|_, c| c.iter().any(|v| *v != 0.0));
        Ok(PolynomialField {
            nvars,
            noutputs,
            terms: map,
        })
    }

    /// Convenience constructor from `(exponents, coefficients)` pairs.
    pub fn from_pairs(nvars: usize, noutputs: usize, pairs: &[(&[u32], &[f64])]) -> Result<Self> {
        let terms = pairs
            .iter()
            .map(|(e, c)| FieldTerm {
                exponents: e.to_vec(),
                coefficients: c.to_vec(),
            })
            .collect();
        Self::new(nvars, noutputs, terms)
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn noutputs(&self) -> usize {
        self.noutputs
    }

    pub fn terms(&self) -> Vec<FieldTerm> {
        self.terms
            .iter()
            .map(|(e, c)| FieldTerm {
                exponents: e.clone(),
                coefficients: c.clone(),
            })
            .collect()
    }

    pub fn eval(&self, z: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.noutputs];
        for (e, c) in &self.terms {
            let v = monomial(e, z);
            for (o, ci) in out.iter_mut().zip(c) {
                *o += ci * v;
            }
        }
        out
    }

    /// Analytic Jacobian, `noutputs x nvars`.
    pub fn jacobian(&self, z: &[f64]) -> DMatrix<f64> {
        let mut jac = DMatrix::zeros(self.noutputs, self.nvars);
        for (e, c) in &self.terms {
            for k in 0..self.nvars {
                if e[k] == 0 {
                    continue;
                }
                let mut v = e[k] as f64;
                for (i, (&p, &zi)) in e.iter().zip(z).enumerate() {
                    let p = if i == k { p - 1 } else { p };
                    if p > 0 {
                        v *= zi.powi(p as i32);
                    }
                }
                for (r, ci) in c.iter().enumerate() {
                    jac[(r, k)] += ci * v;
                }
            }
        }
        jac
    }

    pub fn component(&self, r: usize) -> Polynomial {
        let mut p = Polynomial::zero(self.nvars);
        for (e, c) in &self.terms {
            p.add_term(e.clone(), c[r]);
        }
        p
    }

    /// Coefficient vector of the constant monomial.
    pub fn constant_term(&self) -> Vec<f64> {
        self.terms
            .get(&vec![0; self.nvars])
            .cloned()
            .unwrap_or_else(|| vec![0.0; self.noutputs])
    }

    /// Jacobian at the origin, read off the degree-one terms.
    pub fn linear_part(&self) -> DMatrix<f64> {
        let mut lin = DMatrix::zeros(self.noutputs, self.nvars);
        for (e, c) in &self.terms {
            if total_degree(e) == 1 {
                let k = e.iter().position(|&p| p == 1).unwrap();
                for (r, ci) in c.iter().enumerate() {
                    lin[(r, k)] = *ci;
                }
            }
        }
        lin
    }
}
