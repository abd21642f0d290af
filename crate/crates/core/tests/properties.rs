use proptest::prelude::*;

use screenlab::analysis::{check_fosd, kolmogorov_distance, Verdict, DEFAULT_FOSD_TOL};
use screenlab::screening::{run_strategy, solve_fixed_threshold_posterior};
use screenlab::{
    make_piecewise_linear, make_uniform, sum_survivor, BoundedDistribution, FactorizedPosterior, NoiseSpec,
    ScreeningProblem,
};

fn impact() -> impl Strategy<Value = BoundedDistribution> {
    (
        -2.0..2.0f64,
        0.3..3.0f64,
        prop::collection::vec((0.05..0.95f64, 0.1..3.0f64), 1..5),
        0.0..2.0f64,
        0.0..2.0f64,
    )
        .prop_map(|(lo, len, mut interior, f_lo, f_hi)| {
            interior.sort_by(|a, b| a.0.total_cmp(&b.0));
            interior.dedup_by(|a, b| (a.0 - b.0).abs() < 1e-3);
            let mut knots = vec![(lo, f_lo)];
            knots.extend(interior.into_iter().map(|(u, f)| (lo + u * len, f)));
            knots.push((lo + len, f_hi));
            make_piecewise_linear(&knots).unwrap()
        })
}

fn noise() -> impl Strategy<Value = NoiseSpec> {
    prop_oneof![
        (0.05..0.8f64).prop_map(|w| NoiseSpec::uniform(w).unwrap()),
        (0.05..0.8f64, 0.0..2.0f64).prop_map(|(w, edge)| {
            NoiseSpec::new(make_piecewise_linear(&[(-w, edge), (0.0, 1.0 + edge), (w, edge)]).unwrap()).unwrap()
        }),
    ]
}

fn thresholds_with_capacity(v: &BoundedDistribution, noises: &[NoiseSpec], fractions: &[f64]) -> Vec<f64> {
    let mut post = FactorizedPosterior::new(v.clone());
    let mut ts = Vec::new();
    for (n, &u) in noises.iter().zip(fractions) {
        let t = post.solve_stage_threshold(n, u).unwrap();
        post = post.apply_stage(n, t).unwrap();
        ts.push(t);
    }
    ts
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn densities_integrate_to_one(v in impact()) {
        prop_assert!((v.total_mass() - 1.0).abs() < 1e-9);
        prop_assert_eq!(v.cdf(v.support_lo()), 0.0);
        prop_assert!((v.cdf(v.support_hi()) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn quantile_round_trip(v in impact(), p in 0.001..0.999f64) {
        let x = v.quantile_upper(p).unwrap();
        prop_assert!((v.survivor(x) - p).abs() < 1e-8);
    }

    #[test]
    fn sum_survivor_is_nonincreasing(v in impact(), n in noise(), a in 0.0..1.0f64, b in 0.0..1.0f64) {
        let lo = v.support_lo() + n.lower();
        let hi = v.support_hi() + n.upper();
        let (s, t) = (lo + a.min(b) * (hi - lo), lo + a.max(b) * (hi - lo));
        let (gs, gt) = (sum_survivor(&v, &n, s), sum_survivor(&v, &n, t));
        prop_assert!(gs + 1e-12 >= gt);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&gs));
        prop_assert_eq!(sum_survivor(&v, &n, lo - 0.1), 1.0);
        prop_assert_eq!(sum_survivor(&v, &n, hi + 0.1), 0.0);
    }

    #[test]
    fn translation_equivariance(v in impact(), n in noise(), c in -3.0..3.0f64, u in 0.05..0.95f64) {
        let ts = thresholds_with_capacity(&v, std::slice::from_ref(&n), &[u]);
        let post = FactorizedPosterior::new(v.clone()).apply_stage(&n, ts[0]).unwrap();
        let shifted = FactorizedPosterior::new(v.shifted(c)).apply_stage(&n, ts[0] + c).unwrap();
        prop_assert!((post.normalization() - shifted.normalization()).abs() < 1e-9);
        prop_assert!((shifted.mean() - post.mean() - c).abs() < 1e-8);
    }

    #[test]
    fn posterior_normalizes(v in impact(), noises in prop::collection::vec(noise(), 1..4), u in 0.2..0.9f64) {
        let fr = vec![u; noises.len()];
        let ts = thresholds_with_capacity(&v, &noises, &fr);
        let sp = ScreeningProblem::new(v, noises.clone(), u.powi(noises.len() as i32)).unwrap();
        let (post, strategy) = run_strategy(&sp, &ts).unwrap();
        prop_assert!((post.total_mass() - 1.0).abs() < 1e-8);
        for c in &strategy.stage_capacities {
            prop_assert!((c - u).abs() < 1e-8);
        }
        let d = post.to_distribution().unwrap();
        prop_assert!((d.cdf(d.support_hi()) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn stage_order_does_not_matter(v in impact(), a in noise(), b in noise(), u in 0.2..0.9f64, w in 0.2..0.9f64) {
        let ts = thresholds_with_capacity(&v, &[a.clone(), b.clone()], &[u, w]);
        let ab = ScreeningProblem::new(v.clone(), vec![a.clone(), b.clone()], 0.5).unwrap();
        let ba = ScreeningProblem::new(v.clone(), vec![b, a], 0.5).unwrap();
        let (pab, _) = run_strategy(&ab, &ts).unwrap();
        let (pba, _) = run_strategy(&ba, &[ts[1], ts[0]]).unwrap();
        prop_assert!((pab.normalization() - pba.normalization()).abs() < 1e-10);
        let (lo, hi) = v.support();
        for j in 0..=200 {
            let x = lo + (hi - lo) * j as f64 / 200.0;
            prop_assert!((pab.density(x) - pba.density(x)).abs() < 1e-8 * (1.0 + pab.density(x)));
        }
    }

    #[test]
    fn stage_capacities_multiply(v in impact(), noises in prop::collection::vec(noise(), 1..4), fr in prop::collection::vec(0.2..0.95f64, 3)) {
        let k = noises.len();
        let ts = thresholds_with_capacity(&v, &noises, &fr[..k]);
        let sp = ScreeningProblem::new(v, noises, 0.5).unwrap();
        let (_, s) = run_strategy(&sp, &ts).unwrap();
        let product: f64 = s.stage_capacities.iter().product();
        prop_assert!((product - s.overall_capacity).abs() < 1e-12);
    }

    #[test]
    fn dominance_is_antisymmetric(v in impact(), n in noise(), u in 0.05..0.6f64, w in 0.05..0.6f64) {
        let a = FactorizedPosterior::new(v.clone());
        let b = a.clone();
        let ta = a.solve_stage_threshold(&n, u).unwrap();
        let tb = b.solve_stage_threshold(&n, w).unwrap();
        let da = a.apply_stage(&n, ta).unwrap().to_distribution().unwrap();
        let db = b.apply_stage(&n, tb).unwrap().to_distribution().unwrap();
        let ab = check_fosd(&da, &db, DEFAULT_FOSD_TOL).unwrap();
        let ba = check_fosd(&db, &da, DEFAULT_FOSD_TOL).unwrap();
        prop_assert_eq!(ab.max_gap_A_over_B, ba.max_gap_B_over_A);
        prop_assert_eq!(ab.max_gap_B_over_A, ba.max_gap_A_over_B);
        let mirrored = match ab.verdict {
            Verdict::ADominates => Verdict::BDominates,
            Verdict::BDominates => Verdict::ADominates,
            other => other,
        };
        prop_assert_eq!(ba.verdict, mirrored);
        prop_assert!((kolmogorov_distance(&da, &db) - kolmogorov_distance(&db, &da)).abs() < 1e-15);
    }

    #[test]
    fn stricter_single_stage_dominates(v in impact(), n in noise(), u in 0.05..0.9f64, shrink in 0.1..0.9f64) {
        // One stage at a tighter capacity selects from higher scores.
        let base = FactorizedPosterior::new(v);
        let loose = base.apply_stage(&n, base.solve_stage_threshold(&n, u).unwrap()).unwrap();
        let tight = base.apply_stage(&n, base.solve_stage_threshold(&n, u * shrink).unwrap()).unwrap();
        let r = check_fosd(&tight.to_distribution().unwrap(), &loose.to_distribution().unwrap(), DEFAULT_FOSD_TOL).unwrap();
        prop_assert!(r.verdict == Verdict::ADominates, "verdict {:?}", r.verdict);
    }

    #[test]
    fn grid_refinement_converges(v in impact(), n in noise(), u in 0.1..0.9f64) {
        let coarse = v.clone().with_grid_resolution(512);
        let fine = v.with_grid_resolution(8192);
        let t = FactorizedPosterior::new(fine.clone()).solve_stage_threshold(&n, u).unwrap();
        let pc = FactorizedPosterior::new(coarse).apply_stage(&n, t).unwrap();
        let pf = FactorizedPosterior::new(fine).apply_stage(&n, t).unwrap();
        prop_assert!((pc.normalization() - pf.normalization()).abs() < 1e-9);
        prop_assert!((pc.mean() - pf.mean()).abs() < 1e-9);
    }
}

#[test]
fn fixed_threshold_shared_cutoff_meets_capacity() {
    let v = make_uniform(0.0, 1.0).unwrap();
    let n = NoiseSpec::uniform(0.25).unwrap();
    for k in [1, 2, 3, 5] {
        let sp = ScreeningProblem::iid(v.clone(), n.clone(), k, 0.05).unwrap();
        let (_, s) = solve_fixed_threshold_posterior(&sp).unwrap();
        assert!(s.thresholds.windows(2).all(|w| w[0] == w[1]));
        assert!((s.overall_capacity - 0.05).abs() < 1e-9);
    }
}
