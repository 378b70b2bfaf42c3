use super::*;
use crate::multimeans::Weights;
use crate::psd::random_spd;
use approx::assert_relative_eq;

fn cfg() -> SolverConfig {
    SolverConfig::default()
}

fn ensemble(n: usize, dim: usize, lo: f64, hi: f64, seed: u64) -> Vec<SpdMatrix> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| random_spd_with(dim, lo, hi, &mut rng).unwrap())
        .collect()
}

fn naive_kantorovich(h: f64, p: f64) -> f64 {
    (h.powf(p) - h) / ((p - 1.0) * (h - 1.0))
        * ((p - 1.0) / p * (h.powf(p) - 1.0) / (h.powf(p) - h)).powf(p)
}

#[test]
fn kantorovich_values() {
    assert_eq!(kantorovich(3.0, 1.0).unwrap(), 1.0);
    assert_relative_eq!(kantorovich(2.0, 2.0).unwrap(), 9.0 / 8.0, epsilon = 1e-15);
    for &(h, p) in &[(3.0, 2.5), (1.5, 0.5), (10.0, 3.0), (4.0, -1.0)] {
        assert_relative_eq!(
            kantorovich(h, p).unwrap(),
            naive_kantorovich(h, p),
            max_relative = 1e-12
        );
    }
    // continuity through the removable singularity
    // 50-digit reference value of K(3, 1 + 1e-10)
    let near = kantorovich(3.0, 1.0 + 1e-10).unwrap();
    assert_relative_eq!(near, 1.000_000_000_014_840_5, max_relative = 1e-15);
    assert!(matches!(kantorovich(1.0, 2.0), Err(Error::BadH(_))));
    assert!(matches!(kantorovich(0.5, 2.0), Err(Error::BadH(_))));
}

#[test]
fn kantorovich_power_scaling_is_monotone_and_bounded() {
    let (h, p) = (3.0_f64, 2.0);
    let mut prev = 1.0;
    for i in 1..=80 {
        let t = i as f64 * 0.05;
        let v = kantorovich(h.powf(t), p).unwrap().powf(1.0 / t);
        assert!(v >= prev - 1e-12, "t = {t}");
        assert!(v >= 1.0 && v <= h.powf(p - 1.0) + 1e-12);
        prev = v;
    }
    let small = kantorovich(h.powf(1e-6), p).unwrap().powf(1e-6_f64.recip());
    assert!((small - 1.0).abs() < 1e-3);
}

#[test]
fn every_check_has_zero_margin_at_r_one() {
    let mats = ensemble(3, 3, 0.5, 3.0, 1);
    let w = Weights::new(vec![0.2, 0.3, 0.5]).unwrap();
    let c = cfg();
    let ens = Ensemble::new(&mats, &c);
    let p = MultiMeanSpec::power(w.clone(), 0.5);
    for v in [
        AhVariant::Original,
        AhVariant::OriginalAdjoint,
        AhVariant::Complementary,
        AhVariant::ComplementaryAdjoint,
    ] {
        let rep = ens.check_ah(&p, 1.0, v).unwrap();
        assert!(rep.margin.abs() < 1e-14, "{v:?}: {}", rep.margin);
    }
    assert!(ens.check_karcher_ah(&w, 1.0).unwrap().margin.abs() < 1e-14);
    let sigma = RepFnSpec::harmonic(0.4).unwrap();
    let base = MultiMeanSpec::arithmetic(w.clone());
    for f in [ModifiedForm::Forward, ModifiedForm::Complementary] {
        assert!(
            ens.check_modified(&base, &sigma, 1.0, f)
                .unwrap()
                .margin
                .abs()
                < 1e-14
        );
        assert!(
            ens.check_power_modified(&w, -0.5, 1.0, f)
                .unwrap()
                .margin
                .abs()
                < 1e-14
        );
    }
    assert!(ens.check_log_majorization(&w, 1.0).unwrap().margin.abs() < 1e-12);
}

#[test]
fn ah_variants_reject_wrong_exponents() {
    let mats = ensemble(2, 2, 0.5, 2.0, 2);
    let spec = MultiMeanSpec::power(Weights::uniform(2).unwrap(), 0.5);
    let c = cfg();
    assert!(matches!(
        check_ah_family(&spec, &mats, 0.5, AhVariant::Original, &c),
        Err(Error::BadR { .. })
    ));
    assert!(matches!(
        check_ah_family(&spec, &mats, 2.0, AhVariant::ComplementaryAdjoint, &c),
        Err(Error::BadR { .. })
    ));
}

/// Diagonal inputs: every mean acts entrywise, so both sides are scalars.
#[test]
fn power_ah_matches_diagonal_oracle() {
    let diag = [[0.5, 2.0, 1.3], [3.0, 0.7, 1.1], [1.2, 1.5, 0.4]];
    let mats: Vec<_> = diag
        .iter()
        .map(|d| SpdMatrix::from_diagonal(d).unwrap())
        .collect();
    let wv = [0.5, 0.25, 0.25];
    let w = Weights::new(wv.to_vec()).unwrap();
    let (alpha, r) = (0.5_f64, 2.0_f64);
    let scalar_power = |r: f64, i: usize| -> f64 {
        (0..3)
            .map(|j| wv[j] * diag[j][i].powf(r * alpha))
            .sum::<f64>()
            .powf(1.0 / alpha)
    };
    let x: Vec<f64> = (0..3).map(|i| scalar_power(1.0, i)).collect();
    let y: Vec<f64> = (0..3).map(|i| scalar_power(r, i)).collect();
    let lam = x
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
        .powf(r - 1.0);
    let lhs: Vec<f64> = x.iter().map(|v| lam * v).collect();
    let scale = lhs.iter().cloned().fold(0.0, f64::max) + y.iter().cloned().fold(0.0, f64::max);
    let expected = (0..3).map(|i| y[i] - lhs[i]).fold(f64::INFINITY, f64::min) / scale;
    let rep = check_ah_family(
        &MultiMeanSpec::power(w, alpha),
        &mats,
        r,
        AhVariant::Original,
        &cfg(),
    )
    .unwrap();
    assert!(rep.holds);
    assert!(
        (rep.margin - expected).abs() < 1e-9,
        "{} vs {expected}",
        rep.margin
    );
    assert_relative_eq!(rep.constants["lambda_min_pow"], lam, max_relative = 1e-9);
}

#[test]
fn ah_family_holds_on_random_power_means() {
    let c = cfg();
    for seed in 0..4 {
        let mats = ensemble(3, 3, 0.3, 4.0, 100 + seed);
        let w = Weights::uniform(3).unwrap();
        let ens = Ensemble::new(&mats, &c);
        let p = MultiMeanSpec::power(w, 0.5);
        for r in [1.5, 2.0, 3.0] {
            assert!(ens.check_ah(&p, r, AhVariant::Original).unwrap().holds);
            assert!(
                ens.check_ah(&p, r, AhVariant::OriginalAdjoint)
                    .unwrap()
                    .holds
            );
        }
        for r in [0.25, 0.5, 0.8] {
            assert!(ens.check_ah(&p, r, AhVariant::Complementary).unwrap().holds);
            assert!(
                ens.check_ah(&p, r, AhVariant::ComplementaryAdjoint)
                    .unwrap()
                    .holds
            );
        }
    }
}

#[test]
fn karcher_chain_holds_both_ways() {
    let c = cfg();
    let mats = ensemble(3, 4, 0.2, 5.0, 7);
    let w = Weights::new(vec![0.5, 0.3, 0.2]).unwrap();
    for r in [0.3, 0.7, 1.5, 2.5] {
        let rep = check_karcher_ah(&w, &mats, r, &c).unwrap();
        assert!(rep.holds, "r = {r}: {rep:?}");
        assert_eq!(
            rep.inequality_id,
            if r < 1.0 {
                "karcher-ah-complementary"
            } else {
                "karcher-ah"
            }
        );
    }
}

#[test]
fn geometric_deformation_of_karcher_reduces_to_karcher_chain() {
    let c = cfg();
    let mats = ensemble(2, 3, 0.5, 3.0, 8);
    let w = Weights::uniform(2).unwrap();
    let r = 2.0;
    let modified = check_modified(
        &MultiMeanSpec::karcher(w.clone()),
        &RepFnSpec::geometric(0.5).unwrap(),
        &mats,
        r,
        ModifiedForm::Forward,
        &c,
    )
    .unwrap();
    let plain = check_karcher_ah(&w, &mats, r, &c).unwrap();
    assert!(modified.holds);
    assert!((modified.margin - plain.margin).abs() < 1e-7);
}

#[test]
fn modified_forms_hold_for_catalog_sigmas() {
    let c = cfg();
    let mats = ensemble(3, 3, 0.4, 3.0, 9);
    let w = Weights::new(vec![0.3, 0.3, 0.4]).unwrap();
    let ens = Ensemble::new(&mats, &c);
    for sigma in [
        RepFnSpec::harmonic(0.5).unwrap(),
        RepFnSpec::non_pmi_blend(),
        RepFnSpec::geometric(0.3).unwrap(),
    ] {
        for base in [
            MultiMeanSpec::arithmetic(w.clone()),
            MultiMeanSpec::harmonic(w.clone()),
        ] {
            assert!(
                ens.check_modified(&base, &sigma, 2.0, ModifiedForm::Forward)
                    .unwrap()
                    .holds
            );
            assert!(
                ens.check_modified(&base, &sigma, 0.5, ModifiedForm::Complementary)
                    .unwrap()
                    .holds
            );
        }
    }
    for alpha in [-1.0, -0.5, 0.25, 1.0] {
        assert!(
            ens.check_power_modified(&w, alpha, 2.0, ModifiedForm::Forward)
                .unwrap()
                .holds
        );
        assert!(
            ens.check_power_modified(&w, alpha, 0.5, ModifiedForm::Complementary)
                .unwrap()
                .holds
        );
    }
    let left = RepFnSpec::left_trivial();
    assert!(matches!(
        ens.check_modified(
            &MultiMeanSpec::arithmetic(w),
            &left,
            2.0,
            ModifiedForm::Forward
        ),
        Err(Error::SigmaIsLeftTrivial)
    ));
}

#[test]
fn bracket_form_with_geometric_tau_is_the_classical_inequality() {
    let c = cfg();
    let mats = ensemble(2, 3, 0.2, 5.0, 10);
    for alpha in [0.2, 0.5, 0.9] {
        let tau = RepFnSpec::geometric(alpha).unwrap();
        for r in [1.0, 1.5, 3.0] {
            let rep =
                check_two_var(&tau, None, &mats[0], &mats[1], r, TwoVarForm::Bracket, &c).unwrap();
            assert!(rep.holds, "alpha {alpha}, r {r}");
        }
    }
}

/// Commuting pair: `A τ B = diag(a f(b/a))` and the bracket side is its r-th power.
#[test]
fn bracket_form_matches_commuting_oracle() {
    let a = [0.5, 2.0];
    let b = [3.0, 0.4];
    let tau = RepFnSpec::harmonic(0.3).unwrap();
    let r = 2.0_f64;
    let x: Vec<f64> = (0..2)
        .map(|i| a[i] * tau.value(b[i] / a[i]).unwrap())
        .collect();
    let y: Vec<f64> = x.iter().map(|v| v.powf(r)).collect();
    let lam = x
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
        .powf(r - 1.0);
    let nrm = x.iter().cloned().fold(0.0, f64::max).powf(r - 1.0);
    let ymax = y.iter().cloned().fold(0.0, f64::max);
    let lower = (0..2)
        .map(|i| y[i] - lam * x[i])
        .fold(f64::INFINITY, f64::min)
        / (lam * x.iter().cloned().fold(0.0, f64::max) + ymax);
    let upper = (0..2)
        .map(|i| nrm * x[i] - y[i])
        .fold(f64::INFINITY, f64::min)
        / (nrm * x.iter().cloned().fold(0.0, f64::max) + ymax);
    let rep = check_two_var(
        &tau,
        None,
        &SpdMatrix::from_diagonal(&a).unwrap(),
        &SpdMatrix::from_diagonal(&b).unwrap(),
        r,
        TwoVarForm::Bracket,
        &cfg(),
    )
    .unwrap();
    assert!((rep.constants["lower_margin"] - lower).abs() < 1e-12);
    assert!((rep.constants["upper_margin"] - upper).abs() < 1e-12);
}

#[test]
fn two_var_forms_hold_and_need_sigma() {
    let c = cfg();
    let mats = ensemble(2, 3, 0.3, 3.0, 11);
    let tau = RepFnSpec::arithmetic(0.4).unwrap();
    let sigma = RepFnSpec::harmonic(0.5).unwrap();
    let (a, b) = (&mats[0], &mats[1]);
    for (form, r) in [
        (TwoVarForm::Deformed, 2.0),
        (TwoVarForm::DeformedComplementary, 0.5),
        (TwoVarForm::Bracket, 2.0),
        (TwoVarForm::BracketComplementary, 0.5),
    ] {
        let rep = check_two_var(&tau, Some(&sigma), a, b, r, form, &c).unwrap();
        assert!(rep.holds, "{form:?}: {rep:?}");
    }
    assert!(matches!(
        check_two_var(&tau, None, a, b, 2.0, TwoVarForm::Deformed, &c),
        Err(Error::MissingParameter("sigma"))
    ));
    let rep = check_two_var(&tau, Some(&sigma), a, a, 1.0, TwoVarForm::Deformed, &c).unwrap();
    assert!(rep.margin.abs() < 1e-14);
}

#[test]
fn escalation_equivalence_agrees_on_both_examples() {
    let c = cfg();
    let grid = crate::meanfns::default_x_grid();
    let g = RepFnSpec::geometric(0.5).unwrap();
    let same = escalation_equivalence_test(&g, &g, 2.0, &grid, 20, 1, &c).unwrap();
    assert!(same.holds && same.constants["scalar_margin"] >= -CHECK_TOL);
    assert!(same.constants["matrix_margin"] >= -CHECK_TOL);

    let sigma = RepFnSpec::geometric(0.1).unwrap();
    let tau = RepFnSpec::arithmetic(0.5).unwrap();
    let rep = escalation_equivalence_test(&sigma, &tau, 2.0, &grid, 20, 1, &c).unwrap();
    assert!(rep.constants["scalar_margin"] < -CHECK_TOL);
    assert!(rep.constants["matrix_margin"] < -CHECK_TOL);
    assert!(rep.holds);
    assert!(rep.matrices.is_some());
}

/// These seeds give means much better conditioned than the bounds; the
/// reverse bounds do fail in general, see the repeated-inputs test below.
#[test]
fn reverse_inequalities_hold_on_well_conditioned_seeds() {
    let c = cfg();
    let bounds = (1.0, 4.0);
    for seed in 0..3 {
        let mats = ensemble(3, 3, bounds.0, bounds.1, 200 + seed);
        let w = Weights::uniform(3).unwrap();
        let ens = Ensemble::new(&mats, &c);
        let families = [
            ReverseFamily::Power {
                weights: w.clone(),
                alpha: 0.5,
            },
            ReverseFamily::Power {
                weights: w.clone(),
                alpha: -0.5,
            },
            ReverseFamily::PowerModified {
                weights: w.clone(),
                alpha: 0.5,
            },
            ReverseFamily::PowerModified {
                weights: w.clone(),
                alpha: -1.0,
            },
            ReverseFamily::Deformed {
                base: MultiMeanSpec::arithmetic(w.clone()),
                sigma: RepFnSpec::harmonic(0.5).unwrap(),
            },
            ReverseFamily::Karcher { weights: w.clone() },
        ];
        for f in &families {
            for r in [1.0, 2.0, 3.0] {
                let rep = ens.check_reverse(f, r, bounds).unwrap();
                assert!(rep.holds, "{f:?} r {r}: {rep:?}");
                assert!(rep.constants["kantorovich"] >= 1.0);
            }
        }
    }
}

#[test]
fn reverse_scalar_case_and_bounds_violation() {
    let c = cfg();
    let mats = vec![SpdMatrix::scaled_identity(2, 2.0).unwrap(); 2];
    let w = Weights::uniform(2).unwrap();
    let rep = check_reverse(
        &ReverseFamily::Karcher { weights: w.clone() },
        &mats,
        2.0,
        (2.0, 2.0),
        &c,
    )
    .unwrap();
    assert!(rep.holds && rep.margin >= 0.0);
    let wide = ensemble(2, 2, 0.5, 5.0, 3);
    assert!(matches!(
        check_reverse(
            &ReverseFamily::Karcher { weights: w },
            &wide,
            2.0,
            (1.0, 4.0),
            &c
        ),
        Err(Error::BoundsViolated { .. })
    ));
}

#[test]
fn reverse_bound_can_beat_forward_bound() {
    let c = cfg();
    let w = Weights::uniform(2).unwrap();
    let bounds = (1.0, 2.0);
    let mut found = false;
    for seed in 0..50 {
        let mats = ensemble(2, 3, bounds.0, bounds.1, 300 + seed);
        let (reverse, forward, predicted) = reverse_improvement(&w, &mats, bounds, &c).unwrap();
        assert_eq!(reverse < forward, predicted);
        found |= predicted;
    }
    assert!(found);
}

#[test]
fn congruence_bound_cases() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let a = random_spd_with(3, 1.0, 3.0, &mut rng).unwrap();
    let id = SpdMatrix::identity(3);
    let rep = check_congruence_kantorovich(&a, &id, 2.0, (1.0, 3.0), 1.0).unwrap();
    assert!(rep.holds && rep.margin >= 0.0);
    // Scalar instance where the congruence bound fails: with A = I and
    // C = 0.5 I the left side is 0.25 I but K(4.04, 2)·0.0625 ≈ 0.098.
    let a1 = SpdMatrix::identity(2);
    let half = SpdMatrix::scaled_identity(2, 0.5).unwrap();
    let rep = check_congruence_kantorovich(&a1, &half, 2.0, (1.0, 1.01), 0.25).unwrap();
    let k = kantorovich(1.01 / 0.25, 2.0).unwrap();
    let expected = (k * 0.0625 - 0.25) / (k * 0.0625 + 0.25);
    assert!(!rep.holds);
    assert!((rep.margin - expected).abs() < 1e-14);
    // diagonal: c² a^r ≤ K (c² a)^r per entry
    let (ad, cd) = ([1.0_f64, 2.0, 3.0], [1.0_f64, 0.8, 0.5]);
    let r = 2.5_f64;
    let k = kantorovich(3.0 / 0.25, r).unwrap();
    let lhs: Vec<f64> = (0..3).map(|i| cd[i] * cd[i] * ad[i].powf(r)).collect();
    let rhs: Vec<f64> = (0..3)
        .map(|i| k * (cd[i] * cd[i] * ad[i]).powf(r))
        .collect();
    let scale = lhs.iter().cloned().fold(0.0, f64::max) + rhs.iter().cloned().fold(0.0, f64::max);
    let expected = (0..3)
        .map(|i| rhs[i] - lhs[i])
        .fold(f64::INFINITY, f64::min)
        / scale;
    let rep = check_congruence_kantorovich(
        &SpdMatrix::from_diagonal(&ad).unwrap(),
        &SpdMatrix::from_diagonal(&cd).unwrap(),
        r,
        (1.0, 3.0),
        0.25,
    )
    .unwrap();
    assert!((rep.margin - expected).abs() < 1e-12);
    assert!(matches!(
        check_congruence_kantorovich(
            &a,
            &SpdMatrix::scaled_identity(3, 2.0).unwrap(),
            2.0,
            (1.0, 3.0),
            0.25
        ),
        Err(Error::BoundsViolated { .. })
    ));
}

#[test]
fn power_sum_inequality() {
    let w = Weights::uniform(2).unwrap();
    let same = vec![random_spd(3, (1.0, 3.0), 5).unwrap(); 2];
    assert!(
        check_power_sum_kantorovich(&w, &same, 2.0, (1.0, 3.0))
            .unwrap()
            .margin
            >= 0.0
    );
    for seed in 0..10 {
        let mats = ensemble(2, 3, 1.0, 3.0, 400 + seed);
        assert!(
            check_power_sum_kantorovich(&w, &mats, 2.0, (1.0, 3.0))
                .unwrap()
                .holds
        );
    }
    // scalar grid: Σ w a^r ≤ K(M/m, r) (Σ w a)^r
    let k = kantorovich(3.0, 2.0).unwrap();
    let mut worst = f64::INFINITY;
    for i in 0..=20 {
        for j in 0..=20 {
            let (a, b) = (1.0 + 0.1 * i as f64, 1.0 + 0.1 * j as f64);
            for wt in [0.1, 0.5, 0.9] {
                let lhs = wt * a * a + (1.0 - wt) * b * b;
                let rhs = k * (wt * a + (1.0 - wt) * b).powi(2);
                worst = worst.min(rhs - lhs);
                let w2 = Weights::new(vec![wt, 1.0 - wt]).unwrap();
                let mats = [
                    SpdMatrix::from_diagonal(&[a]).unwrap(),
                    SpdMatrix::from_diagonal(&[b]).unwrap(),
                ];
                let rep = check_power_sum_kantorovich(&w2, &mats, 2.0, (1.0, 3.0)).unwrap();
                assert!(((rep.margin) - (rhs - lhs) / (lhs + rhs)).abs() < 1e-12);
            }
        }
    }
    assert!(worst >= -1e-12);
    // the constant is attained at the endpoints with weight 3/4
    let w = Weights::new(vec![0.75, 0.25]).unwrap();
    let ends = [
        SpdMatrix::from_diagonal(&[1.0]).unwrap(),
        SpdMatrix::from_diagonal(&[3.0]).unwrap(),
    ];
    assert!(
        check_power_sum_kantorovich(&w, &ends, 2.0, (1.0, 3.0))
            .unwrap()
            .margin
            .abs()
            < 1e-14
    );
}

#[test]
fn log_majorization_cases() {
    let c = cfg();
    let mats = ensemble(3, 4, 0.2, 5.0, 12);
    let w = Weights::uniform(3).unwrap();
    let rep = check_log_majorization(&w, &mats, 0.5, &c).unwrap();
    assert!(rep.holds, "{rep:?}");
    assert!(rep.constants["det_gap"] < 1e-8);
    // commuting inputs: G is the entrywise weighted geometric mean
    let d = [[1.0, 4.0, 0.5], [2.0, 0.25, 3.0]];
    let mats: Vec<_> = d
        .iter()
        .map(|v| SpdMatrix::from_diagonal(v).unwrap())
        .collect();
    let w = Weights::uniform(2).unwrap();
    let r = 0.5_f64;
    let mut lam: Vec<f64> = (0..3).map(|i| (d[0][i] * d[1][i]).sqrt()).collect();
    lam.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut mu: Vec<f64> = lam.iter().map(|v| v.powf(r)).collect();
    mu.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut expected = f64::INFINITY;
    let (mut lhs, mut rhs) = (0.0, 0.0);
    for k in 0..3 {
        lhs += mu[k].ln();
        rhs += (r - 1.0) * lam[2 - k].ln() + lam[k].ln();
        expected = expected.min(rhs - lhs);
    }
    let rep = check_log_majorization(&w, &mats, r, &c).unwrap();
    assert!((rep.constants["partial_margin"] - expected).abs() < 1e-10);
}

#[test]
fn lie_trotter_cases() {
    let c = cfg();
    let p_seq: Vec<f64> = (0..7).map(|k| 0.5_f64.powi(k)).collect();
    let w = Weights::uniform(2).unwrap();
    let diag = vec![
        SpdMatrix::from_diagonal(&[1.0, 3.0]).unwrap(),
        SpdMatrix::from_diagonal(&[2.0, 0.5]).unwrap(),
    ];
    let rep = lie_trotter_gap(&MultiMeanSpec::karcher(w.clone()), &diag, &p_seq, &c).unwrap();
    // the solver stops near dt_tol on A^p, and the 1/p power scales that up
    assert!(
        rep.gaps.iter().zip(&p_seq).all(|(g, p)| *g < 1e-10 / p),
        "{:?}",
        rep.gaps
    );

    let one = vec![random_spd(3, (0.5, 2.0), 1).unwrap()];
    let w1 = Weights::uniform(1).unwrap();
    let rep = lie_trotter_gap(&MultiMeanSpec::power(w1, 0.5), &one, &p_seq, &c).unwrap();
    assert!(rep.gaps.iter().all(|g| *g < 1e-10));

    let mats = ensemble(2, 3, 0.5, 2.0, 13);
    let adj = MultiMeanSpec::power(w.clone(), -0.5);
    let rep = lie_trotter_gap(&adj, &mats, &p_seq, &c).unwrap();
    assert!(rep.is_monotone(1e-9), "{:?}", rep.gaps);
    assert!(
        rep.norms.windows(2).all(|n| n[1] >= n[0] - 1e-9),
        "{:?}",
        rep.norms
    );
    assert!(*rep.gaps.last().unwrap() < 0.05);

    assert!(matches!(
        lie_trotter_gap(
            &MultiMeanSpec::KuboAndo {
                sigma: RepFnSpec::geometric(0.5).unwrap()
            },
            &mats,
            &p_seq,
            &c
        ),
        Err(Error::NoWeights)
    ));
}

#[test]
fn diagonal_scan_finds_violation_only_beyond_one() {
    let tau = RepFnSpec::arithmetic(0.5).unwrap();
    let s = SearchConfig::default();
    let cx = optimality_scan(&tau, 2.0, ScanMode::NormOrder, &s)
        .unwrap()
        .unwrap();
    assert!(cx.violation_margin < -CHECK_TOL);
    // scalar oracle: ‖X‖ = 1, so the second entries compare f(x²)^{1/2} with f(x²)
    let f = tau.value(cx.family_params.x.powi(2)).unwrap();
    assert!(f.sqrt() > f);
    assert!(recheck(&cx).unwrap() < -CHECK_TOL);
    for r in [1.0, 0.5, 0.2] {
        for tau in [
            tau.clone(),
            RepFnSpec::harmonic(0.3).unwrap(),
            RepFnSpec::left_trivial(),
        ] {
            assert!(optimality_scan(&tau, r, ScanMode::NormOrder, &s)
                .unwrap()
                .is_none());
        }
    }
}

#[test]
fn rank_one_witness_conditions() {
    let (x, y) = (1.96_f64, 0.09_f64);
    let half_mean = ((x.sqrt() + y.sqrt()) / 2.0).powi(2);
    assert!((half_mean - 0.7225).abs() < 1e-12);
    assert!(half_mean < 1.0);
    assert!((x + y) / 2.0 > 1.0);
    assert!(((x + y) / 2.0 - 1.025).abs() < 1e-12);
}

#[test]
fn rank_one_scan() {
    let s = SearchConfig::default();
    let h = RepFnSpec::harmonic(0.5).unwrap();
    let cx = optimality_scan(&h, 0.5, ScanMode::UnitImplication, &s)
        .unwrap()
        .unwrap();
    assert!(recheck(&cx).unwrap() < -CHECK_TOL);
    assert_eq!(cx.shift, 1e-9);
    // the stored pair satisfies the hypothesis tightly
    let (a, b) = &cx.matrices;
    let lhs = crate::meanfns::two_var_mean(&h, a, b).unwrap();
    assert!((lhs.norm().unwrap() - 1.0).abs() < 1e-9);
    let json = serde_json::to_string(&cx).unwrap();
    let back: Counterexample = serde_json::from_str(&json).unwrap();
    assert!(recheck(&back).unwrap() < -CHECK_TOL);

    let ar = RepFnSpec::arithmetic(0.5).unwrap();
    assert!(optimality_scan(&ar, 0.5, ScanMode::UnitImplication, &s)
        .unwrap()
        .is_some());
    for r in [1.0, 2.0] {
        let g = RepFnSpec::geometric(0.5).unwrap();
        assert!(optimality_scan(&g, r, ScanMode::UnitImplication, &s)
            .unwrap()
            .is_none());
        assert!(optimality_scan(&h, r, ScanMode::UnitImplication, &s)
            .unwrap()
            .is_none());
    }
    assert!(matches!(
        optimality_scan(
            &RepFnSpec::right_trivial(),
            0.5,
            ScanMode::UnitImplication,
            &s
        ),
        Err(Error::TrivialMean)
    ));
    assert!(matches!(
        "prop_7".parse::<ScanMode>(),
        Err(Error::BadMode(_))
    ));
}

#[test]
fn unit_implication_for_pmi_and_blend() {
    let c = cfg();
    let mats = ensemble(2, 2, 0.5, 3.0, 14);
    let w = Weights::uniform(2).unwrap();
    let g = MultiMeanSpec::deformed(
        MultiMeanSpec::karcher(w.clone()),
        RepFnSpec::geometric(0.5).unwrap(),
    );
    assert!(unit_implication_margin(&g, &mats, 2.0, &c).unwrap() >= -CHECK_TOL);
    let a = MultiMeanSpec::deformed(MultiMeanSpec::arithmetic(w), RepFnSpec::non_pmi_blend());
    assert!(unit_implication_margin(&a, &mats, 2.0, &c).unwrap() >= -CHECK_TOL);
}

#[test]
fn report_json_round_trip() {
    let mats = ensemble(2, 2, 0.5, 2.0, 15);
    let w = Weights::uniform(2).unwrap();
    let rep = check_karcher_ah(&w, &mats, 2.0, &cfg())
        .unwrap()
        .with_seed(42)
        .with_matrices(&mats);
    let json = serde_json::to_string(&rep).unwrap();
    assert!(json.contains("\"witness_seed\":42"));
    let back: CheckReport = serde_json::from_str(&json).unwrap();
    assert_eq!(back, rep);
}

/// Repeated inputs make every mean equal to `A`, so the upper reverse
/// bounds reduce to `(a/λ_min)^{r-1} ≤` the prefactor, which fails for
/// `A = diag(1, 2)` on `[1, 2]` at `r = 2`.
#[test]
fn reverse_upper_bounds_fail_on_repeated_inputs() {
    let c = cfg();
    let a = SpdMatrix::from_diagonal(&[1.0, 2.0]).unwrap();
    let mats = vec![a.clone(), a];
    let w = Weights::uniform(2).unwrap();
    let bounds = (1.0, 2.0);
    let k = kantorovich(4.0, 2.0).unwrap();
    assert_relative_eq!(k, 25.0 / 16.0, max_relative = 1e-15);
    // upper: diag(1, 4) ≤ k·diag(1, 2) fails on the second entry
    let expected = (2.0 * k - 4.0) / (2.0 * k + 4.0);
    let karcher = check_reverse(
        &ReverseFamily::Karcher { weights: w.clone() },
        &mats,
        2.0,
        bounds,
        &c,
    )
    .unwrap();
    assert!(!karcher.holds);
    assert!((karcher.constants["upper_margin"] - expected).abs() < 1e-12);
    let deformed = check_reverse(
        &ReverseFamily::Deformed {
            base: MultiMeanSpec::arithmetic(w.clone()),
            sigma: RepFnSpec::harmonic(0.5).unwrap(),
        },
        &mats,
        2.0,
        bounds,
        &c,
    )
    .unwrap();
    assert!(!deformed.holds);
    let power = check_reverse(
        &ReverseFamily::Power {
            weights: w,
            alpha: 0.25,
        },
        &mats,
        2.0,
        bounds,
        &c,
    )
    .unwrap();
    let k2 = kantorovich(2.0_f64.sqrt(), 2.0).unwrap().powi(4);
    assert!(k * k2 < 2.0);
    assert!(!power.holds);
}
