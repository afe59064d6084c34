use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use survey_design::correction::{self, ConfusionMatrix, TwoStageConfig};
use survey_design::estimators;
use survey_design::io::{ingest_paired_csv, write_paired_csv, PairedTable};
use survey_design::model::{
    AnnotatorProfile, CostModel, Design, PairedSampleSet, PopulationModel, PrecisionTarget,
};
use survey_design::planner::{self, PlanningInputs};
use survey_design::sim::{
    self, metrics::sd_standard_error, metrics::variance_with_se, BernoulliGrid,
    PoolBootstrapConfig, PopulationShape, SyntheticAnnotatorSpec,
};

fn inputs(sigma_p: f64, sigma_a: f64, sigma_b: f64, d: f64, costs: (f64, f64, f64)) -> PlanningInputs {
    PlanningInputs::new(
        PopulationModel::new(sigma_p).unwrap(),
        AnnotatorProfile::primary(sigma_a, costs.1).unwrap(),
        AnnotatorProfile::auxiliary(0.0, sigma_b, costs.2).unwrap(),
        costs.0,
        PrecisionTarget::new(d, 0.05).unwrap(),
    )
    .unwrap()
}

fn hybrid_inputs() -> impl Strategy<Value = PlanningInputs> {
    (0.05..0.3f64, 0.05..0.95f64, 0.0..0.05f64, 0.01..0.05f64, 0.5..2.0f64, 2.0..50.0f64)
        .prop_map(|(sp, frac, sa, d, cc, ca)| inputs(sp, sa, sp * frac, d, (cc, ca, 0.0)))
}

fn population_moments(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (m, v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n)
}

proptest! {
    #[test]
    fn offset_equals_conventional_when_fully_paired(
        pairs in prop::collection::vec((0.0..=1.0f64, 0.0..=1.0f64), 1..60)
    ) {
        let (aux, primary): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let set = PairedSampleSet::new(aux, primary.clone()).unwrap();
        let off = estimators::offset_mean(&set).unwrap();
        let conv = estimators::conventional_mean(&primary).unwrap();
        prop_assert!((off - conv).abs() <= 1e-12);
    }

    #[test]
    fn ratio_mean_is_finite(
        aux in prop::collection::vec(prop_oneof![Just(0.0), 0.0..=1.0f64], 1..40),
        n_a in 1usize..40,
    ) {
        let n_a = n_a.min(aux.len());
        let primary: Vec<f64> = aux[..n_a].iter().map(|x| (x * 0.7).min(1.0)).collect();
        let set = PairedSampleSet::new(aux, primary).unwrap();
        prop_assert!(estimators::ratio_mean(&set).unwrap().is_finite());
    }

    #[test]
    fn ratio_mean_with_unit_ratio_is_the_aux_mean(
        aux in prop::collection::vec(0.0..=1.0f64, 2..40),
    ) {
        // all-zero primaries force r̂ = 1
        let set = PairedSampleSet::new(aux.clone(), vec![0.0]).unwrap();
        let r = estimators::ratio_mean(&set).unwrap();
        prop_assert!((r - estimators::auxiliary_mean(&aux).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn aggregated_points_lie_on_the_grid(labels in prop::collection::vec(0u8..=1, 1..300)) {
        let s = labels.len() as f64;
        let v = estimators::aggregate_points(&labels).unwrap();
        let k = v * s;
        prop_assert!((k - k.round()).abs() < 1e-9 && (0.0..=1.0).contains(&v));
    }

    #[test]
    fn tradeoff_is_strictly_decreasing(p in hybrid_inputs(), steps in 1u32..50) {
        let n_star = planner::conventional_sample_size_raw(&p);
        let mut prev = f64::INFINITY;
        for i in 0..steps {
            let n_b = n_star * (1.0 + i as f64 * 0.37);
            let n_a = planner::tradeoff_n_a(n_b, &p).unwrap();
            prop_assert!(n_a < prev);
            prev = n_a;
        }
    }

    #[test]
    fn tradeoff_boundary_collapses(p in hybrid_inputs()) {
        let n_star = planner::conventional_sample_size_raw(&p);
        let n_a = planner::tradeoff_n_a(n_star, &p).unwrap();
        prop_assert!((n_a - n_star).abs() <= 1e-9 * n_star);
        let hybrid_var = p.offset_gain() / n_star + p.offset_noise() / n_a;
        prop_assert!((hybrid_var - p.target.variance_budget()).abs() <= 1e-12);
    }

    #[test]
    fn cost_curve_is_convex(p in hybrid_inputs()) {
        let lo = planner::conventional_sample_size_raw(&p).ceil() as u64;
        let f = |n: u64| planner::offset_cost_curve(n as f64, &p).unwrap();
        for n in lo + 1..(10 * lo).min(lo + 2000) {
            prop_assert!(f(n - 1) - 2.0 * f(n) + f(n + 1) >= -1e-9);
        }
    }

    #[test]
    fn optimal_plan_meets_target_and_beats_neighbours(p in hybrid_inputs()) {
        let plan = planner::optimal_offset_plan(&p).unwrap();
        prop_assert!(plan.n_a >= 1 && plan.n_a <= plan.n_b);
        prop_assert!(plan.predicted_variance <= p.target.variance_budget() * (1.0 + 1e-12));
        let conv = planner::conventional_plan(&p).unwrap();
        prop_assert!(plan.tsc <= conv.tsc + 1e-9);
    }

    #[test]
    fn inversion_identity_in_expectation(alpha in 0.51..1.0f64, beta in 0.51..1.0f64) {
        prop_assume!(alpha + beta - 1.0 > 1e-3);
        let cm = ConfusionMatrix::new(alpha, beta).unwrap();
        let hit = correction::abundance_correct(1.0, &cm).unwrap();
        let miss = correction::abundance_correct(0.0, &cm).unwrap();
        // y = 1: aux is 1 with probability α; y = 0: aux is 1 with probability 1 − β
        let tol = 1e-12 / (alpha + beta - 1.0);
        prop_assert!((alpha * hit + (1.0 - alpha) * miss - 1.0).abs() < tol);
        prop_assert!(((1.0 - beta) * hit + beta * miss).abs() < tol);
    }

    #[test]
    fn two_stage_variance_decreases(
        mu in 0.1..0.9f64, frac in 0.1..0.9f64, alpha in 0.6..1.0f64, beta in 0.6..1.0f64,
        s in 1u32..500, n_b in 1u64..2000,
    ) {
        let sigma = frac * (mu * (1.0 - mu)).sqrt();
        let cfg = |s| TwoStageConfig::new(s, ConfusionMatrix::new(alpha, beta).unwrap()).unwrap();
        let v = correction::two_stage_variance(mu, sigma, &cfg(s), n_b).unwrap();
        prop_assert!(correction::two_stage_variance(mu, sigma, &cfg(s + 1), n_b).unwrap() < v);
        prop_assert!(correction::two_stage_variance(mu, sigma, &cfg(s), n_b + 1).unwrap() < v);
        prop_assert!(correction::two_stage_variance_upper_bound(mu, sigma, &cfg(s), n_b).unwrap() >= v);
    }

    #[test]
    fn metrics_invariants(est in prop::collection::vec(-2.0..2.0f64, 1..100), truth in -1.0..1.0f64) {
        let m = sim::metrics(&est, truth).unwrap();
        prop_assert!(m.mse >= m.bias * m.bias * (1.0 - 1e-12));
        prop_assert!(m.mae >= m.bias.abs() * (1.0 - 1e-12));
        prop_assert!([m.bias, m.mae, m.mse, m.sd, m.se].iter().all(|x| x.is_finite()));
    }

    #[test]
    fn paired_csv_round_trips(
        values in prop::collection::vec((any::<u64>(), 0.0..=1.0f64), 1..50),
        n_a in 0usize..50,
    ) {
        let aux: Vec<f64> = values.iter().map(|v| v.1).collect();
        let n_a = n_a.min(aux.len());
        // reuse the generated bits for primary values to cover awkward decimals
        let primary: Vec<f64> = values[..n_a].iter().map(|v| (v.0 >> 11) as f64 / (1u64 << 53) as f64).collect();
        let table = PairedTable {
            samples: PairedSampleSet::new(aux, primary).unwrap(),
            ids: (0..values.len()).map(|i| format!("s{i}")).collect(),
            original_rows: (0..values.len()).collect(),
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("paired.csv");
        write_paired_csv(&path, &table).unwrap();
        let back = ingest_paired_csv(&path).unwrap();
        prop_assert_eq!(back.samples, table.samples);
        prop_assert_eq!(back.ids, table.ids);
    }
}

#[test]
fn exhaustive_search_agrees_with_closed_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..40 {
        let sp = rng.random_range(0.05..0.3);
        let p = inputs(sp, rng.random_range(0.0..0.05), sp * rng.random_range(0.05..0.95), rng.random_range(0.01..0.05), (1.0, rng.random_range(2.0..50.0), 0.0));
        let lo = planner::conventional_sample_size_raw(&p).ceil() as u64;
        let best = (lo..=10 * lo)
            .min_by(|a, b| {
                let f = |n: u64| planner::offset_cost_curve(n as f64, &p).unwrap();
                f(*a).total_cmp(&f(*b))
            })
            .unwrap();
        let plan = planner::optimal_offset_plan_with(&p, planner::RoundingPolicy::Nearest).unwrap();
        assert!(plan.n_b.abs_diff(best) <= 1, "{} vs {best}", plan.n_b);
    }
}

/// Offset estimates over `reps` resamples (with replacement) of a pool.
fn offset_replicates(y: &[f64], aux: &[f64], n_a: usize, n_b: usize, reps: u64, cell: u64) -> Vec<f64> {
    (0..reps)
        .into_par_iter()
        .map(|r| {
            let mut rng = sim::replicate_rng(1, cell, r);
            let idx: Vec<usize> = (0..n_b).map(|_| rng.random_range(0..y.len())).collect();
            let a = idx.iter().map(|&i| aux[i]).collect();
            let p = idx[..n_a].iter().map(|&i| y[i]).collect();
            estimators::offset_mean(&PairedSampleSet::new(a, p).unwrap()).unwrap()
        })
        .collect()
}

#[test]
fn offset_variance_matches_theory() {
    // (mu, sigma_p, aux bias, sigma_b, correlation, n_a, n_b)
    let settings = [
        (0.3, 0.16, 0.05, 0.047, 0.8, 10, 60),
        (0.5, 0.2, -0.1, 0.05, -0.5, 20, 200),
        (0.5, 0.05, 0.0, 0.12, 0.0, 30, 40),
        (0.4, 0.08, 0.1, 0.15, 0.3, 50, 60),
        (0.7, 0.15, 0.02, 0.02, 0.95, 5, 500),
        (0.2, 0.1, -0.05, 0.1, 0.0, 15, 15),
    ];
    let mut saw_noisier_aux = false;
    for (cell, &(mu, sp, bias, sb, rho, n_a, n_b)) in settings.iter().enumerate() {
        let y = sim::generate_population(mu, sp, 50_000, PopulationShape::Beta, cell as u64).unwrap();
        let spec = SyntheticAnnotatorSpec::additive(bias, sb).unwrap().with_correlation(rho).unwrap().clamped();
        let aux = sim::apply_annotator(&y, &spec, 100 + cell as u64).unwrap();
        let eps: Vec<f64> = aux.iter().zip(&y).map(|(b, y)| b - y).collect();
        let (truth, var_y) = population_moments(&y);
        let (_, var_e) = population_moments(&eps);
        saw_noisier_aux |= var_e > var_y;
        let theory = (var_y - var_e) / n_b as f64 + var_e / n_a as f64;
        let est = offset_replicates(&y, &aux, n_a, n_b, 10_000, cell as u64);
        let m = sim::metrics(&est, truth).unwrap();
        let (var, se) = variance_with_se(&est).unwrap();
        assert!(m.bias.abs() < 4.0 * m.se, "setting {cell}: bias {} se {}", m.bias, m.se);
        assert!((var - theory).abs() < 3.0 * se, "setting {cell}: {var} vs {theory} ({se})");
    }
    assert!(saw_noisier_aux);
}

#[test]
fn corrected_bernoulli_draws_follow_the_variance_law() {
    let triples = [(0.9, 0.9, 0.3), (0.7, 0.7, 0.5), (0.95, 0.6, 0.75), (0.6, 0.95, 0.1), (0.8, 0.85, 0.9), (0.99, 0.99, 0.5)];
    for (i, &(alpha, beta, mu)) in triples.iter().enumerate() {
        let cm = ConfusionMatrix::new(alpha, beta).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(i as u64);
        let draws: Vec<f64> = (0..200_000)
            .map(|_| {
                let y = rng.random_bool(mu);
                let pos = if y { rng.random_bool(alpha) } else { !rng.random_bool(beta) };
                correction::abundance_correct(pos as u8 as f64, &cm).unwrap()
            })
            .collect();
        let (var, se) = variance_with_se(&draws).unwrap();
        // a corrected draw varies by the true label plus the correction noise
        let theory = mu * (1.0 - mu) + correction::sigma_s_squared(mu, &cm).unwrap();
        assert!((var - theory).abs() < 3.0 * se, "{alpha} {beta} {mu}: {var} vs {theory}");
    }
}

#[test]
fn estimated_confusion_converges() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (alpha, beta) = (0.83, 0.71);
    let pairs: Vec<(bool, bool)> = (0..200_000)
        .map(|_| {
            let y = rng.random_bool(0.4);
            (y, if y { rng.random_bool(alpha) } else { !rng.random_bool(beta) })
        })
        .collect();
    let cm = correction::estimate_confusion(&pairs).unwrap();
    assert!((cm.alpha - alpha).abs() < 0.005 && (cm.beta - beta).abs() < 0.005);

    let exact = [(true, true), (true, false), (false, false), (false, false)];
    let cm = correction::estimate_confusion(&exact).unwrap();
    assert_eq!((cm.alpha, cm.beta), (0.5, 1.0));
}

#[test]
fn two_stage_sample_size_gives_nominal_coverage() {
    let (mu, sigma, d) = (0.3, 0.16, 0.058);
    let cfg = TwoStageConfig::new(200, ConfusionMatrix::new(0.9, 0.9).unwrap()).unwrap();
    let p = PlanningInputs::new(
        PopulationModel::with_mean(mu, sigma).unwrap(),
        AnnotatorProfile::primary(0.0, 10.0).unwrap(),
        AnnotatorProfile::auxiliary(0.0, 0.0, 0.0).unwrap(),
        1.0,
        PrecisionTarget::new(d, 0.05).unwrap(),
    )
    .unwrap();
    let n_b = correction::two_stage_sample_size(mu, sigma, &cfg, &p.target).unwrap();
    let est = sim::two_stage_estimates(mu, sigma, &cfg, n_b as usize, 4000, 21).unwrap();
    let covered = est.iter().filter(|e| (*e - mu).abs() <= d).count() as f64 / est.len() as f64;
    assert!(covered >= 0.93, "n_b = {n_b}, coverage {covered}");
}

#[test]
fn offset_variance_across_the_binary_grid() {
    let grid = BernoulliGrid::reference();
    let cells = sim::run_bernoulli_comparison(&grid).unwrap();
    for c in &cells {
        let m = c.offset.unwrap();
        // ε = aux − y takes −1, 0, 1
        let up = (1.0 - c.mu_p) * (1.0 - c.beta);
        let down = c.mu_p * (1.0 - c.alpha);
        let var_e = up + down - (up - down).powi(2);
        let var_y = c.mu_p * (1.0 - c.mu_p);
        let theory = ((var_y - var_e) / c.n_b as f64 + var_e / c.n_a as f64).sqrt();
        let se = sd_standard_error(m.sd, m.replicates);
        assert!((m.sd - theory).abs() < 3.0 * se, "{c:?}: sd {} vs {theory}", m.sd);
        assert!(m.bias.abs() < 4.0 * m.se, "{c:?}");
    }
}

#[test]
fn pool_bootstrap_unbiasedness_suite() {
    let y = sim::generate_population(0.3, 0.16, 2000, PopulationShape::Beta, 9).unwrap();
    let spec = SyntheticAnnotatorSpec::additive(0.05, 0.047).unwrap().with_correlation(0.5).unwrap().clamped();
    let aux = sim::apply_annotator(&y, &spec, 10).unwrap();
    let pool_bias = aux.iter().zip(&y).map(|(b, y)| b - y).sum::<f64>() / y.len() as f64;
    let pool = PairedSampleSet::new(aux, y).unwrap();
    let mut cfg = PoolBootstrapConfig::new(
        vec![Design::Conventional, Design::HybridOffset, Design::Auxiliary],
        vec![120.0, 300.0, 600.0],
        CostModel::new(1.0, 10.0, 0.0).unwrap(),
    );
    cfg.replicates = 4000;
    let report = sim::run_pool_bootstrap(&pool, &cfg).unwrap();
    for cell in &report.cells {
        let m = cell.metrics().unwrap();
        let expected = if cell.design == Design::Auxiliary { pool_bias } else { 0.0 };
        assert!((m.bias - expected).abs() < 4.0 * m.se, "{cell:?}");
    }
    let again = sim::run_pool_bootstrap(&pool, &cfg).unwrap();
    assert_eq!(report, again);
}
