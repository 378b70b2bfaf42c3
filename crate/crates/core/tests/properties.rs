//! Randomized invariants of the matrix layer, the mean constructions and the
//! inequality checks.

use nalgebra::DMatrix;
use opmean::inequalities::{
    check_ah_family, optimality_scan, recheck, unit_implication_margin, AhVariant, ScanMode,
    SearchConfig, CHECK_TOL,
};
use opmean::meanfns::{
    condition_vi_margin, default_r_grid, default_x_grid, pmi_margin, rep_eval, two_var_mean,
    RepFnSpec,
};
use opmean::multimeans::{
    deformed_mean, deformed_residual, evaluate, MultiMeanSpec, SolverConfig, Weights,
};
use opmean::psd::{
    loewner_compare, matrix_function, random_spd, thompson_distance, Relation, SpdMatrix,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const LOEWNER_TOL: f64 = 1e-9;

fn mats(dim: usize, n: usize, spectrum: (f64, f64), seed: u64) -> Vec<SpdMatrix> {
    (0..n)
        .map(|j| random_spd(dim, spectrum, seed.wrapping_mul(97).wrapping_add(j as u64)).unwrap())
        .collect()
}

fn weights(n: usize, seed: u64) -> Weights {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
    let s: f64 = raw.iter().sum();
    Weights::new(raw.into_iter().map(|v| v / s).collect()).unwrap()
}

fn invertible(dim: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xc0de);
    loop {
        let s = DMatrix::from_fn(dim, dim, |_, _| rng.random_range(-1.0..1.0));
        let sv = s.clone().svd(false, false).singular_values;
        if sv.min() > 0.2 {
            return s;
        }
    }
}

fn le(a: &SpdMatrix, b: &SpdMatrix) -> bool {
    loewner_compare(a, b, LOEWNER_TOL).unwrap().is_le()
}

fn catalog(k: usize) -> RepFnSpec {
    match k % 5 {
        0 => RepFnSpec::arithmetic(0.3).unwrap(),
        1 => RepFnSpec::harmonic(0.6).unwrap(),
        2 => RepFnSpec::geometric(0.25).unwrap(),
        3 => RepFnSpec::non_pmi_blend(),
        _ => RepFnSpec::geometric(0.7).unwrap().transpose().unwrap(),
    }
}

fn mean_catalog(k: usize, w: &Weights) -> MultiMeanSpec {
    match k % 6 {
        0 => MultiMeanSpec::arithmetic(w.clone()),
        1 => MultiMeanSpec::harmonic(w.clone()),
        2 => MultiMeanSpec::power(w.clone(), 0.5),
        3 => MultiMeanSpec::power(w.clone(), -0.25),
        4 => MultiMeanSpec::karcher(w.clone()),
        _ => MultiMeanSpec::deformed(
            MultiMeanSpec::arithmetic(w.clone()),
            RepFnSpec::harmonic(0.4).unwrap(),
        ),
    }
}

fn cfg() -> SolverConfig {
    SolverConfig::default()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn thompson_metric_axioms(seed in any::<u64>(), dim in 2usize..6) {
        let m = mats(dim, 3, (0.2, 5.0), seed);
        let (a, b, c) = (&m[0], &m[1], &m[2]);
        let ab = thompson_distance(a, b).unwrap();
        prop_assert!((ab - thompson_distance(b, a).unwrap()).abs() <= 1e-9 * (1.0 + ab));
        prop_assert!(ab <= thompson_distance(a, c).unwrap() + thompson_distance(c, b).unwrap() + 1e-9);
        let s = invertible(dim, seed);
        let moved = thompson_distance(&a.congruence(&s).unwrap(), &b.congruence(&s).unwrap()).unwrap();
        prop_assert!((moved - ab).abs() <= 1e-9 * (1.0 + ab));
    }

    #[test]
    fn arithmetic_mean_is_non_expansive(seed in any::<u64>(), dim in 2usize..6, n in 2usize..5) {
        let w = weights(n, seed);
        let a = mats(dim, n, (0.2, 5.0), seed);
        let b = mats(dim, n, (0.2, 5.0), seed.wrapping_add(1));
        let spec = MultiMeanSpec::arithmetic(w);
        let d = thompson_distance(&evaluate(&spec, &a, &cfg()).unwrap().value, &evaluate(&spec, &b, &cfg()).unwrap().value).unwrap();
        let bound = a.iter().zip(&b).map(|(x, y)| thompson_distance(x, y).unwrap()).fold(0.0, f64::max);
        prop_assert!(d <= bound + 1e-9);
    }

    #[test]
    fn functional_calculus_composes(seed in any::<u64>(), dim in 2usize..6) {
        let a = &mats(dim, 1, (0.1, 10.0), seed)[0];
        let g = |x: f64| x.sqrt() + 1.0;
        let f = |x: f64| x.ln() + 2.0;
        let direct = matrix_function(a, |x| f(g(x))).unwrap();
        let inner = SpdMatrix::from_matrix(matrix_function(a, g).unwrap(), 1e-12).unwrap();
        let nested = matrix_function(&inner, f).unwrap();
        prop_assert!((&direct - &nested).norm() <= 1e-9 * direct.norm());
        let same = matrix_function(a, |x| x).unwrap();
        prop_assert!((&same - a.matrix()).norm() <= 1e-12 * a.matrix().norm());
    }

    #[test]
    fn loewner_comparison_is_antisymmetric(seed in any::<u64>(), dim in 2usize..6, shift in 0.0f64..2.0) {
        let a = &mats(dim, 1, (0.2, 5.0), seed)[0];
        let b = SpdMatrix::from_matrix(a.matrix() + DMatrix::identity(dim, dim) * shift, 0.0).unwrap();
        let c = &mats(dim, 1, (0.2, 5.0), seed.wrapping_add(3))[0];
        for (x, y) in [(a, &b), (a, c)] {
            let fwd = loewner_compare(x, y, 1e-10).unwrap();
            let back = loewner_compare(y, x, 1e-10).unwrap();
            prop_assert_eq!(fwd.is_le(), back.is_ge());
            prop_assert_eq!(fwd.is_ge(), back.is_le());
        }
        prop_assert!(loewner_compare(a, &b, 1e-10).unwrap().is_le());
        prop_assert!(!matches!(loewner_compare(a, &b, 1e-10).unwrap().relation, Relation::GreaterEqual));
    }

    #[test]
    fn representing_functions_are_normalized_and_between_trivial_means(k in 0usize..5, t in 1e-3f64..1e3, r in 0.2f64..4.0) {
        let f = catalog(k);
        let stacks = [
            f.clone(),
            f.adjoint().unwrap(),
            f.transpose().unwrap(),
            f.power_inner_outer(r).unwrap(),
            f.power_outer(r.min(1.0)).unwrap(),
        ];
        for s in &stacks {
            prop_assert!((rep_eval(s, 1.0).unwrap() - 1.0).abs() <= 1e-12);
        }
        let v = rep_eval(&f, t).unwrap();
        prop_assert!(v >= t.min(1.0) * (1.0 - 1e-12) && v <= t.max(1.0) * (1.0 + 1e-12));
        let twice = rep_eval(&f.adjoint().unwrap().adjoint().unwrap(), t).unwrap();
        prop_assert!((twice - v).abs() <= 1e-12 * v.max(1.0));
    }

    #[test]
    fn two_variable_means_are_monotone_and_congruent(k in 0usize..5, seed in any::<u64>(), dim in 2usize..5) {
        let sigma = catalog(k);
        let m = mats(dim, 4, (0.2, 5.0), seed);
        let (a, b) = (&m[0], &m[1]);
        let bump = |x: &SpdMatrix, p: &SpdMatrix| SpdMatrix::from_matrix(x.matrix() + p.matrix() * 0.5, 0.0).unwrap();
        let (c, d) = (bump(a, &m[2]), bump(b, &m[3]));
        prop_assert!(le(&two_var_mean(&sigma, a, b).unwrap(), &two_var_mean(&sigma, &c, &d).unwrap()));
        let s = invertible(dim, seed);
        let lhs = two_var_mean(&sigma, a, b).unwrap().congruence(&s).unwrap();
        let rhs = two_var_mean(&sigma, &a.congruence(&s).unwrap(), &b.congruence(&s).unwrap()).unwrap();
        prop_assert!((lhs.matrix() - rhs.matrix()).norm() <= 1e-8 * lhs.matrix().norm());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn multivariate_axioms(k in 0usize..6, seed in any::<u64>(), dim in 2usize..5, n in 2usize..4, t in 0.1f64..10.0) {
        let w = weights(n, seed);
        let spec = mean_catalog(k, &w);
        let c = cfg();
        let a = mats(dim, n, (0.3, 3.0), seed);
        let x = evaluate(&spec, &a, &c).unwrap().value;

        let ids = vec![SpdMatrix::identity(dim); n];
        let id = evaluate(&spec, &ids, &c).unwrap().value;
        prop_assert!((id.matrix() - DMatrix::identity(dim, dim)).norm() <= 1e-9);

        let scaled: Vec<SpdMatrix> = a.iter().map(|m| m.scale(t).unwrap()).collect();
        let xt = evaluate(&spec, &scaled, &c).unwrap().value;
        prop_assert!(thompson_distance(&xt, &x.scale(t).unwrap()).unwrap() <= 1e-9);

        let s = invertible(dim, seed);
        let moved: Vec<SpdMatrix> = a.iter().map(|m| m.congruence(&s).unwrap()).collect();
        let lhs = x.congruence(&s).unwrap();
        let rhs = evaluate(&spec, &moved, &c).unwrap().value;
        prop_assert!((lhs.matrix() - rhs.matrix()).norm() <= 1e-8 * lhs.matrix().norm());

        let extra = mats(dim, n, (0.1, 1.0), seed.wrapping_add(11));
        let bigger: Vec<SpdMatrix> = a.iter().zip(&extra)
            .map(|(p, q)| SpdMatrix::from_matrix(p.matrix() + q.matrix(), 0.0).unwrap())
            .collect();
        let y = evaluate(&spec, &bigger, &c).unwrap().value;
        prop_assert!(le(&x, &y));

        let b = mats(dim, n, (0.3, 3.0), seed.wrapping_add(7));
        let yb = evaluate(&spec, &b, &c).unwrap().value;
        let bound = a.iter().zip(&b).map(|(p, q)| thompson_distance(p, q).unwrap()).fold(0.0, f64::max);
        prop_assert!(thompson_distance(&x, &yb).unwrap() <= bound + 1e-9);
    }

    #[test]
    fn power_means_bracket_and_approach_the_karcher_mean(seed in any::<u64>(), dim in 2usize..5, n in 2usize..5) {
        let w = weights(n, seed);
        let c = cfg();
        let a = mats(dim, n, (0.2, 5.0), seed);
        let g = evaluate(&MultiMeanSpec::karcher(w.clone()), &a, &c).unwrap().value;
        let mut prev_gap = f64::INFINITY;
        let mut prev_upper: Option<SpdMatrix> = None;
        for alpha in [1.0, 0.5, 0.25, 0.125] {
            let up = evaluate(&MultiMeanSpec::power(w.clone(), alpha), &a, &c).unwrap().value;
            let lo = evaluate(&MultiMeanSpec::power(w.clone(), -alpha), &a, &c).unwrap().value;
            prop_assert!(le(&lo, &g) && le(&g, &up));
            let gap = thompson_distance(&up, &g).unwrap();
            prop_assert!(gap <= prev_gap + 1e-9);
            if let Some(p) = &prev_upper {
                prop_assert!(le(&up, p));
            }
            prev_gap = gap;
            prev_upper = Some(up);
        }
    }

    #[test]
    fn deformed_means_sit_between_harmonic_and_arithmetic(k in 0usize..5, seed in any::<u64>(), dim in 2usize..5, n in 2usize..4) {
        let w = weights(n, seed);
        let c = cfg();
        let a = mats(dim, n, (0.2, 5.0), seed);
        let sigma = catalog(k);
        let base = if seed % 2 == 0 { MultiMeanSpec::arithmetic(w.clone()) } else { MultiMeanSpec::harmonic(w.clone()) };
        let x = deformed_mean(&base, &sigma, &a, &c).unwrap().value;
        prop_assert!(deformed_residual(&base, &sigma, &a, &x, &c).unwrap() < 2.0 * c.dt_tol);
        let h = evaluate(&MultiMeanSpec::harmonic(w.clone()), &a, &c).unwrap().value;
        let ar = evaluate(&MultiMeanSpec::arithmetic(w), &a, &c).unwrap().value;
        prop_assert!(le(&h, &x) && le(&x, &ar));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    /// For a power monotone increasing σ every condition of the chain holds;
    /// for the blend only the arithmetic-base implication and its scalar
    /// counterpart survive.
    #[test]
    fn power_monotonicity_chain(alpha in 0.1f64..0.9, p in 0.2f64..1.0, r in 1.0f64..4.0, seed in any::<u64>(), dim in 2usize..4) {
        let c = cfg();
        let w = weights(2, seed);
        let a = mats(dim, 2, (0.3, 3.0), seed);
        let sigma = RepFnSpec::geometric(alpha).unwrap();
        let geo = MultiMeanSpec::deformed(MultiMeanSpec::karcher(w.clone()), sigma.clone());
        let ar = |s: RepFnSpec| MultiMeanSpec::deformed(MultiMeanSpec::arithmetic(w.clone()), s);

        prop_assert!(check_ah_family(&geo, &a, r, AhVariant::Original, &c).unwrap().holds);
        prop_assert!(unit_implication_margin(&geo, &a, r, &c).unwrap() >= -CHECK_TOL);
        prop_assert!(unit_implication_margin(&ar(sigma.power_outer(p).unwrap()), &a, r, &c).unwrap() >= -CHECK_TOL);
        prop_assert!(unit_implication_margin(&ar(sigma), &a, r, &c).unwrap() >= -CHECK_TOL);

        let blend = RepFnSpec::non_pmi_blend();
        prop_assert!(unit_implication_margin(&ar(blend), &a, r, &c).unwrap() >= -CHECK_TOL);
    }

    #[test]
    fn counterexamples_recheck_as_violations(w in 0.2f64..0.8, r in 1.5f64..4.0) {
        let tau = RepFnSpec::arithmetic(w).unwrap();
        let cx = optimality_scan(&tau, r, ScanMode::NormOrder, &SearchConfig::default()).unwrap();
        let cx = cx.expect("arithmetic means violate the norm order beyond r = 1");
        prop_assert!(cx.violation_margin < -CHECK_TOL);
        prop_assert!(recheck(&cx).unwrap() < -CHECK_TOL);
    }
}

#[test]
fn blend_fails_power_monotonicity_but_keeps_the_weak_condition() {
    let f = RepFnSpec::non_pmi_blend();
    assert!(
        pmi_margin(&f, &default_x_grid(), &default_r_grid())
            .unwrap()
            .worst_margin
            < 0.0
    );
    assert!(
        condition_vi_margin(&f, &default_x_grid(), &default_r_grid())
            .unwrap()
            .worst_margin
            >= -1e-12
    );
}
