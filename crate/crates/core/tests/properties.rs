use cmsurrogate::analysis::{pde_residual, taylor_center_manifold, ManifoldModel, PolynomialMap};
use cmsurrogate::artifacts::{read_json, write_json, ModelFile, SelectionFile};
use cmsurrogate::dynamics::SplitSystem;
use cmsurrogate::greedy::{deduplicate_candidates, p_greedy_select, NewtonBasis, TolMode};
use cmsurrogate::kernels::KernelSpec;
use cmsurrogate::polynomial::Polynomial;
use cmsurrogate::regression::{assemble_blocks, fit, objective_value, RegressionProblem, WeightMode};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn kernel() -> impl Strategy<Value = KernelSpec> {
    prop_oneof![
        (1u32..=5, 0.1f64..2.0).prop_map(|(degree, inner_scale)| KernelSpec::Polynomial { degree, inner_scale }),
        (0.1f64..3.0).prop_map(|shape| KernelSpec::Gaussian { shape }),
    ]
}

/// Kernels whose native space on the plane has room for ten data points
/// plus the origin value and gradient constraints.
fn rich_kernel() -> impl Strategy<Value = KernelSpec> {
    prop_oneof![
        (4u32..=6, 0.3f64..1.0).prop_map(|(degree, inner_scale)| KernelSpec::Polynomial { degree, inner_scale }),
        (0.3f64..3.0).prop_map(|shape| KernelSpec::Gaussian { shape }),
    ]
}

fn points(d: usize, n: std::ops::Range<usize>) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-1.0f64..1.0, d), n)
}

/// Points on a jittered lattice, pairwise at least `0.1` apart and away from the origin.
fn separated(d: usize, n: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-0.02f64..0.02, d), n).prop_map(move |jitter| {
        jitter
            .into_iter()
            .enumerate()
            .map(|(i, j)| {
                j.iter()
                    .enumerate()
                    .map(|(a, v)| {
                        let cell = (i / 6usize.pow(a as u32)) % 6;
                        -0.7 + 0.28 * cell as f64 + 0.07 * (a as f64 + 1.0) + v
                    })
                    .collect()
            })
            .collect()
    })
}

fn min_eigenvalue_ratio(m: &DMatrix<f64>) -> f64 {
    let eig = m.clone().symmetric_eigenvalues();
    let max = eig.iter().cloned().fold(f64::MIN, f64::max);
    let min = eig.iter().cloned().fold(f64::MAX, f64::min);
    min / max
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kernel_is_symmetric(spec in kernel(), xy in points(3, 2..3)) {
        let (x, y) = (&xy[0], &xy[1]);
        prop_assert_eq!(spec.eval(x, y).unwrap(), spec.eval(y, x).unwrap());
        let g1 = spec.grad_first(x, y).unwrap();
        let g2 = spec.grad_second(y, x).unwrap();
        prop_assert_eq!(g1, g2);
    }

    #[test]
    fn gram_is_positive_semidefinite(spec in kernel(), xs in points(2, 1..25)) {
        let n = xs.len();
        let gram = DMatrix::from_fn(n, n, |i, j| spec.eval(&xs[i], &xs[j]).unwrap());
        prop_assert!(min_eigenvalue_ratio(&gram) >= -1e-10);
    }

    #[test]
    fn block_system_is_symmetric_psd(spec in kernel(), d in 1usize..3, m in 1usize..3, n in 1usize..=16, seed in separated(2, 16)) {
        // one axis of the lattice only has 6 well-separated cells
        let n = if d == 1 { n.min(6) } else { n };
        let centers: Vec<Vec<f64>> = seed.iter().take(n).map(|c| c[..d].to_vec()).collect();
        let targets = centers.iter().map(|c| vec![c[0] * c[0]; m]).collect();
        let problem = RegressionProblem::new(centers, targets, spec, WeightMode::DiagJitter, 1e-10, d, m).unwrap();
        let blocks = assemble_blocks(&problem).unwrap();
        let full = blocks.full_matrix();
        prop_assert_eq!(&full, &full.transpose());
        prop_assert!(min_eigenvalue_ratio(&blocks.gram()) >= -1e-10);
    }

    #[test]
    fn greedy_history_decreases_and_centers_are_distinct(spec in kernel(), xs in points(2, 2..60)) {
        let (candidates, _) = deduplicate_candidates(&xs);
        prop_assume!(!candidates.is_empty());
        let sel = match p_greedy_select(&candidates, &spec, 1e-8, TolMode::PowerSquared, 15) {
            Ok(sel) => sel,
            // Nearly coincident random candidates can push P^2 below the floor.
            Err(cmsurrogate::Error::NumericalFailure(_)) => return Ok(()),
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        };
        prop_assert!(sel.power_history.windows(2).all(|w| w[1] <= w[0]));
        let mut idx = sel.selected_indices.clone();
        idx.sort_unstable();
        idx.dedup();
        prop_assert_eq!(idx.len(), sel.selected_indices.len());
        prop_assert!(sel.selected_indices.len() <= 15);
        if sel.selected_indices.len() < 15 && sel.selected_indices.len() < candidates.len() {
            prop_assert!(sel.final_max_power <= 1e-8);
        }
    }

    #[test]
    fn newton_basis_annihilates_power_at_centers(spec in kernel(), xs in separated(2, 8)) {
        let mut basis = NewtonBasis::new(spec);
        for x in &xs {
            if basis.push(x.clone()).is_err() {
                break;
            }
        }
        for c in basis.centers() {
            prop_assert!(basis.power_squared(c).unwrap() <= 1e-12);
        }
    }

    #[test]
    fn polynomial_product_commutes_and_evaluates(
        a in prop::collection::vec((0u32..3, 0u32..3, -2.0f64..2.0), 1..6),
        b in prop::collection::vec((0u32..3, 0u32..3, -2.0f64..2.0), 1..6),
        x in prop::collection::vec(-1.0f64..1.0, 2),
    ) {
        let build = |terms: &[(u32, u32, f64)]| {
            let mut p = Polynomial::zero(2);
            for &(i, j, c) in terms {
                p.add_term(vec![i, j], c);
            }
            p
        };
        let (p, q) = (build(&a), build(&b));
        let pq = p.mul_truncated(&q, None);
        let qp = q.mul_truncated(&p, None);
        prop_assert!((pq.eval(&x) - qp.eval(&x)).abs() <= 1e-12);
        prop_assert!((pq.eval(&x) - p.eval(&x) * q.eval(&x)).abs() <= 1e-12);
        // product rule
        let lhs = pq.derivative(0).eval(&x);
        let rhs = p.derivative(0).eval(&x) * q.eval(&x) + p.eval(&x) * q.derivative(0).eval(&x);
        prop_assert!((lhs - rhs).abs() <= 1e-11);
    }

    #[test]
    fn polynomial_map_file_roundtrip(coeffs in prop::collection::vec(-5.0f64..5.0, 6)) {
        let mut p = Polynomial::zero(2);
        let exps = [[2, 0], [1, 1], [0, 2], [3, 0], [2, 2], [0, 4]];
        for (e, c) in exps.iter().zip(&coeffs) {
            p.add_term(e.to_vec(), *c);
        }
        let map = PolynomialMap::from_components(vec![p], 4).unwrap();
        let back = PolynomialMap::from_file(&map.to_file()).unwrap();
        prop_assert_eq!(map, back);
    }

    #[test]
    fn files_roundtrip_bit_exactly(spec in kernel(), xs in separated(2, 6), ys in prop::collection::vec(-1.0f64..1.0, 6)) {
        let dir = tempfile::tempdir().unwrap();
        let rows: Vec<usize> = (0..xs.len()).collect();
        let sel = p_greedy_select(&xs, &spec, 1e-14, TolMode::PowerSquared, 4).unwrap();
        let selection = SelectionFile::new("ab".repeat(32), spec, 4, &xs, &rows, &sel);
        let path = dir.path().join("s.json");
        write_json(&path, &selection).unwrap();
        prop_assert_eq!(&read_json::<SelectionFile>(&path).unwrap(), &selection);

        let targets = ys.iter().map(|y| vec![*y]).collect();
        let problem = RegressionProblem::new(xs, targets, spec, WeightMode::DiagJitter, 1e-6, 2, 1).unwrap();
        let s = fit(&problem).unwrap();
        let model = ModelFile::new(&s, 1e-6, WeightMode::DiagJitter, "cd".repeat(32));
        let path = dir.path().join("m.json");
        write_json(&path, &model).unwrap();
        let back: ModelFile = read_json(&path).unwrap();
        prop_assert_eq!(&back, &model);
        let x = [0.3, -0.2];
        prop_assert_eq!(back.surrogate().unwrap().eval(&x).unwrap(), s.eval(&x).unwrap());
    }

    #[test]
    fn doubling_weight_doubles_data_term(spec in kernel(), xs in separated(1, 6), lambda in 1e-3f64..1.0) {
        let targets: Vec<Vec<f64>> = xs.iter().map(|x| vec![x[0].sin()]).collect();
        let p1 = RegressionProblem::new(xs.clone(), targets.clone(), spec, WeightMode::Literal, lambda, 1, 1).unwrap();
        let p2 = RegressionProblem::new(xs, targets, spec, WeightMode::Literal, 2.0 * lambda, 1, 1).unwrap();
        let s = fit(&p1).unwrap();
        let norm = objective_value(&s, &RegressionProblem { lambda: f64::MIN_POSITIVE, ..p1.clone() }).unwrap();
        let d1 = objective_value(&s, &p1).unwrap() - norm;
        let d2 = objective_value(&s, &p2).unwrap() - norm;
        prop_assert!((d2 - 2.0 * d1).abs() <= 1e-12 * (1.0 + d2.abs()));
    }

    #[test]
    fn fits_meet_origin_constraints(spec in rich_kernel(), xs in separated(2, 10)) {
        let targets = xs.iter().map(|x| vec![x[0] * x[0] - x[1] * x[1], x[0] * x[1]]).collect();
        let problem = RegressionProblem::new(xs, targets, spec, WeightMode::DiagJitter, 1e-8, 2, 2).unwrap();
        let s = fit(&problem).unwrap();
        prop_assert!(s.fit_report.as_ref().unwrap().constraints_met());
        let v = s.eval(&[0.0, 0.0]).unwrap();
        prop_assert!(v.iter().map(|a| a * a).sum::<f64>().sqrt() <= 1e-10);
        prop_assert!(s.jacobian(&[0.0, 0.0]).unwrap().norm() <= 1e-8);
    }

    #[test]
    fn taylor_residual_vanishes_to_order(example in 1usize..=3, degree in 2usize..=5, r in 0.01f64..0.02) {
        let system = SplitSystem::builtin(&format!("example{example}")).unwrap();
        let h = taylor_center_manifold(&system, degree).unwrap();
        let mut x = vec![0.0; system.center_dim()];
        x[0] = r;
        let small = pde_residual(&h, &system, &x).unwrap();
        x[0] = 2.0 * r;
        let large = pde_residual(&h, &system, &x).unwrap();
        let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
        // The residual is O(|x|^(degree+1)): halving the radius shrinks it by at least 2^degree.
        prop_assert!(norm(&small) * 2f64.powi(degree as i32) <= norm(&large) * 1.05 + 1e-18);
    }
}

#[test]
fn interpolation_limit_reproduces_data() {
    // k1 spans only quartics in 1D, so it gets a planar instance.
    let line: Vec<Vec<f64>> = (0..10).map(|i| vec![-2.85 + 0.6 * i as f64]).collect();
    let plane: Vec<Vec<f64>> = (0..10)
        .map(|i| {
            let t = 0.7 * i as f64;
            vec![0.8 * t.cos() * (0.3 + 0.07 * i as f64), 0.8 * t.sin() * (0.3 + 0.07 * i as f64)]
        })
        .collect();
    for (spec, centers) in [(KernelSpec::gaussian_k2(), line), (KernelSpec::polynomial_k1(), plane)] {
        let d = centers[0].len();
        let targets: Vec<Vec<f64>> = centers.iter().map(|x| vec![(2.0 * x[0]).cos() - 1.0 + x[d - 1].powi(3)]).collect();
        let ymax = targets.iter().map(|t| t[0].abs()).fold(0.0, f64::max);
        // The smallest positive jitter leaves the data diagonal of the system unchanged.
        let problem =
            RegressionProblem::new(centers.clone(), targets.clone(), spec, WeightMode::DiagJitter, f64::MIN_POSITIVE, d, 1)
                .unwrap();
        let s = fit(&problem).unwrap();
        for (x, y) in centers.iter().zip(&targets) {
            let err = (s.eval(x).unwrap()[0] - y[0]).abs();
            assert!(err <= 1e-8 * ymax, "{spec}: {err:e} at {x:?}");
        }
    }
}

#[test]
fn taylor_maps_are_tangent_at_origin() {
    for example in 1..=3 {
        let system = SplitSystem::builtin(&format!("example{example}")).unwrap();
        let h = taylor_center_manifold(&system, 6).unwrap();
        let origin = vec![0.0; system.center_dim()];
        assert!(h.value(&origin).unwrap().iter().all(|v| *v == 0.0));
        assert!(h.jacobian(&origin).unwrap().iter().all(|v| *v == 0.0));
    }
}
