//! Scalar kernels with closed-form first and mixed second derivatives.
//!
//! Both families are symmetric, twice continuously differentiable and
//! positive definite. Vector-valued surrogates use the separable lift
//! `K(x, y) = k(x, y) * I_m`, so every quantity needed downstream reduces to
//! a scalar kernel evaluation or one of its derivatives.
//!
//! Derivative naming follows the argument being differentiated: `grad_first`
//! is `d k / d x`, `grad_second` is `d k / d y` and `mixed_hessian(i, j)` is
//! `d^2 k / (d x_i d y_j)`.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// Kernel family and its parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum KernelSpec {
    /// `(1 + inner_scale * <x, y>)^degree`
    Polynomial { degree: u32, inner_scale: f64 },
    /// `exp(-shape * |x - y|^2)`
    Gaussian { shape: f64 },
}

impl KernelSpec {
    /// `(1 + x.y/2)^4`
    pub const fn polynomial_k1() -> Self {
        KernelSpec::Polynomial {
            degree: 4,
            inner_scale: 0.5,
        }
    }

    /// `exp(-|x - y|^2 / 2)`
    pub const fn gaussian_k2() -> Self {
        KernelSpec::Gaussian { shape: 0.5 }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::Polynomial {
                degree,
                inner_scale,
            } => {
                if degree == 0 {
                    return Err(Error::invalid("polynomial kernel degree must be positive"));
                }
                if !(inner_scale.is_finite() && inner_scale > 0.0) {
                    return Err(Error::invalid("polynomial inner_scale must be positive"));
                }
            }
            KernelSpec::Gaussian { shape } => {
                if !(shape.is_finite() && shape > 0.0) {
                    return Err(Error::invalid("gaussian shape must be positive"));
                }
            }
        }
        Ok(())
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        check_pair(x, y)?;
        Ok(self.eval_unchecked(x, y))
    }

    pub fn grad_second(&self, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        check_pair(x, y)?;
        let mut out = vec![0.0; x.len()];
        self.grad_second_into(x, y, &mut out);
        Ok(out)
    }

    /// For the symmetric families here this is `grad_second(y, x)`.
    pub fn grad_first(&self, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        check_pair(x, y)?;
        let mut out = vec![0.0; x.len()];
        self.grad_second_into(y, x, &mut out);
        Ok(out)
    }

    pub fn mixed_hessian(&self, x: &[f64], y: &[f64]) -> Result<DMatrix<f64>> {
        check_pair(x, y)?;
        Ok(self.mixed_hessian_unchecked(x, y))
    }

    pub(crate) fn eval_unchecked(&self, x: &[f64], y: &[f64]) -> f64 {
        match *self {
            KernelSpec::Polynomial {
                degree,
                inner_scale,
            } => (1.0 + inner_scale * dot(x, y)).powi(degree as i32),
            KernelSpec::Gaussian { shape } => (-shape * sq_dist(x, y)).exp(),
        }
    }

    pub(crate) fn grad_second_into(&self, x: &[f64], y: &[f64], out: &mut [f64]) {
        match *self {
            KernelSpec::Polynomial {
                degree,
                inner_scale,
            } => {
                let base = 1.0 + inner_scale * dot(x, y);
                let factor = degree as f64 * inner_scale * base.powi(degree as i32 - 1);
                for (o, xi) in out.iter_mut().zip(x) {
                    *o = factor * xi;
                }
            }
            KernelSpec::Gaussian { shape } => {
                let k = (-shape * sq_dist(x, y)).exp();
                for ((o, xi), yi) in out.iter_mut().zip(x).zip(y) {
                    *o = 2.0 * shape * (xi - yi) * k;
                }
            }
        }
    }

    pub(crate) fn mixed_hessian_unchecked(&self, x: &[f64], y: &[f64]) -> DMatrix<f64> {
        let d = x.len();
        match *self {
            KernelSpec::Polynomial {
                degree,
                inner_scale,
            } => {
                let p = degree as f64;
                let base = 1.0 + inner_scale * dot(x, y);
                let diag = p * inner_scale * base.powi(degree as i32 - 1);
                // p = 1 has no rank-one part; skip it so base = 0 cannot produce 0 * inf.
                let outer = if degree >= 2 {
                    p * (p - 1.0) * inner_scale * inner_scale * base.powi(degree as i32 - 2)
                } else {
                    0.0
                };
                DMatrix::from_fn(d, d, |i, j| {
                    let delta = if i == j { diag } else { 0.0 };
                    delta + outer * y[i] * x[j]
                })
            }
            KernelSpec::Gaussian { shape } => {
                let k = (-shape * sq_dist(x, y)).exp();
                DMatrix::from_fn(d, d, |i, j| {
                    let delta = if i == j { 2.0 * shape } else { 0.0 };
                    (delta - 4.0 * shape * shape * (x[i] - y[i]) * (x[j] - y[j])) * k
                })
            }
        }
    }
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelSpec::Polynomial {
                degree,
                inner_scale,
            } => write!(f, "poly:{degree}:{inner_scale}"),
            KernelSpec::Gaussian { shape } => write!(f, "gauss:{shape}"),
        }
    }
}

/// Parses the CLI notation `poly:DEG:SCALE` or `gauss:SHAPE`. The aliases
/// `k1` and `k2` name the two standard kernels.
impl FromStr for KernelSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split(':').collect();
        let num = |t: &str| {
            t.parse::<f64>()
                .map_err(|_| Error::Parse(format!("bad number {t:?} in kernel {s:?}")))
        };
        let spec = match parts.as_slice() {
            ["k1"] => KernelSpec::polynomial_k1(),
            ["k2"] => KernelSpec::gaussian_k2(),
            ["poly", deg, scale] => KernelSpec::Polynomial {
                degree: deg
                    .parse()
                    .map_err(|_| Error::Parse(format!("bad degree {deg:?} in kernel {s:?}")))?,
                inner_scale: num(scale)?,
            },
            ["gauss", shape] => KernelSpec::Gaussian { shape: num(shape)? },
            _ => {
                return Err(Error::Parse(format!(
                    "kernel {s:?}: expected poly:DEG:SCALE or gauss:SHAPE"
                )))
            }
        };
        spec.validate()?;
        Ok(spec)
    }
}

fn check_pair(x: &[f64], y: &[f64]) -> Result<()> {
    if x.is_empty() {
        return Err(Error::invalid("kernel arguments must be non-empty"));
    }
    check_dim("second kernel argument", y.len(), x.len())
}

#[inline]
pub(crate) fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

#[inline]
fn sq_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const H: f64 = 1e-6;

    fn fd_grad_second(spec: &KernelSpec, x: &[f64], y: &[f64]) -> Vec<f64> {
        (0..y.len())
            .map(|j| {
                let mut yp = y.to_vec();
                let mut ym = y.to_vec();
                yp[j] += H;
                ym[j] -= H;
                (spec.eval(x, &yp).unwrap() - spec.eval(x, &ym).unwrap()) / (2.0 * H)
            })
            .collect()
    }

    #[test]
    fn gaussian_values() {
        let g = KernelSpec::gaussian_k2();
        assert_eq!(g.eval(&[0.3, -0.2], &[0.3, -0.2]).unwrap(), 1.0);
        assert_relative_eq!(
            g.eval(&[0.0], &[1.0]).unwrap(),
            0.6065306597126334,
            max_relative = 1e-12
        );
    }

    #[test]
    fn polynomial_at_origin_is_one() {
        let p = KernelSpec::polynomial_k1();
        assert_eq!(p.eval(&[0.0, 0.0], &[0.7, -3.0]).unwrap(), 1.0);
    }

    #[test]
    fn polynomial_gradients_1d() {
        let p = KernelSpec::polynomial_k1();
        let g2 = p.grad_second(&[0.3], &[0.0]).unwrap();
        assert_relative_eq!(g2[0], 0.6, max_relative = 1e-14);
        assert_relative_eq!(fd_grad_second(&p, &[0.3], &[0.0])[0], 0.6, max_relative = 1e-8);
        let g1 = p.grad_first(&[0.0], &[0.3]).unwrap();
        assert_relative_eq!(g1[0], 0.6, max_relative = 1e-14);
    }

    #[test]
    fn gaussian_gradient_vanishes_on_diagonal() {
        let g = KernelSpec::gaussian_k2();
        let x = [0.4, -0.1];
        assert_eq!(g.grad_second(&x, &x).unwrap(), vec![0.0, 0.0]);
        assert_eq!(g.grad_first(&x, &x).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn mixed_hessian_at_origin() {
        let z = [0.0, 0.0];
        let g = KernelSpec::gaussian_k2().mixed_hessian(&z, &z).unwrap();
        assert_eq!(g, DMatrix::identity(2, 2));
        let p = KernelSpec::polynomial_k1().mixed_hessian(&z, &z).unwrap();
        assert_eq!(p, DMatrix::identity(2, 2) * 2.0);
    }

    #[test]
    fn degree_one_polynomial_has_no_rank_one_term() {
        let p = KernelSpec::Polynomial {
            degree: 1,
            inner_scale: 1.0,
        };
        // base = 1 + <x, y> = 0 here.
        let h = p.mixed_hessian(&[1.0], &[-1.0]).unwrap();
        assert_eq!(h[(0, 0)], 1.0);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let g = KernelSpec::gaussian_k2();
        assert!(matches!(
            g.eval(&[0.0], &[0.0, 1.0]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(g.grad_second(&[], &[]).is_err());
        assert!(g.mixed_hessian(&[0.0, 0.0], &[0.0]).is_err());
    }

    #[test]
    fn parse_and_serialize() {
        let p: KernelSpec = "poly:4:0.5".parse().unwrap();
        assert_eq!(p, KernelSpec::polynomial_k1());
        let g: KernelSpec = "gauss:0.5".parse().unwrap();
        assert_eq!(g, KernelSpec::gaussian_k2());
        assert_eq!(
            serde_json::to_string(&p).unwrap(),
            r#"{"family":"polynomial","degree":4,"inner_scale":0.5}"#
        );
        assert_eq!(
            serde_json::to_string(&g).unwrap(),
            r#"{"family":"gaussian","shape":0.5}"#
        );
        assert_eq!(p.to_string().parse::<KernelSpec>().unwrap(), p);
        assert!("gauss:-1".parse::<KernelSpec>().is_err());
        assert!("rbf:1".parse::<KernelSpec>().is_err());
    }
}
