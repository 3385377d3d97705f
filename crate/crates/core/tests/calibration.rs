mod common;

use eprb_lab::calibration::*;
use eprb_lab::model::{DetectorConfig, SourceConfig};
use eprb_lab::runner::{run_block, sweep, ExperimentConfig, SweepConfig};
use eprb_lab::stats::{binomial_se, CorrelationCurve};

fn standard_sweep(ta: f64, tb: f64, trials: u64, seed: u64) -> SweepConfig {
    SweepConfig::new(ExperimentConfig::standard(ta, tb).with_trials(trials).with_seed(seed))
}

#[test]
fn scan_recommends_half() {
    let scan = single_detector_scan(
        &DetectorConfig::standard(0.5),
        &SourceConfig::new(0.2),
        &default_threshold_grid(),
        20_000,
        4,
    )
    .unwrap();
    let t = recommend_threshold(&scan, DEFAULT_DOUBLE_EPSILON).unwrap();
    assert!((t - 0.5).abs() <= 0.01 + 1e-12, "{t}");
    let noiseless =
        single_detector_scan(&DetectorConfig::ideal(0.5), &SourceConfig::new(0.0), &default_threshold_grid(), 20_000, 4)
            .unwrap();
    let t = recommend_threshold(&noiseless, DEFAULT_DOUBLE_EPSILON).unwrap();
    assert!((t - 0.5).abs() <= 0.01 + 1e-12, "{t}");
}

#[test]
fn all_double_scan_has_no_recommendation() {
    let det = DetectorConfig::ideal(0.1);
    let scan = single_detector_scan(&det, &SourceConfig::new(0.0), &[0.0, 0.05, 0.1], 5_000, 1).unwrap();
    assert!(scan.iter().all(|p| p.rate_double > DEFAULT_DOUBLE_EPSILON));
    assert!(recommend_threshold(&scan, DEFAULT_DOUBLE_EPSILON).is_err());
    assert!(recommend_threshold(&[], DEFAULT_DOUBLE_EPSILON).is_err());
}

#[test]
fn fair_sampled_side_marginalizes_the_other() {
    let trials = 1_000_000;
    let r = sweep(&standard_sweep(0.5, 0.75, trials, 12)).unwrap();
    let n = trials as f64;
    for p in &r.points {
        let sa = p.tally.singles_a() as f64 / n;
        let se = binomial_se(common::SINGLES_A_QUANTUM, trials);
        assert!((sa - common::SINGLES_A_QUANTUM).abs() <= 3.0 * se, "singles_a {sa} at {}", p.theta);
        let co = p.tally.coincidences as f64 / n;
        let se = binomial_se(common::COINCIDENCE_RATE_QUANTUM, trials);
        assert!(
            (co - common::COINCIDENCE_RATE_QUANTUM).abs() <= 3.0 * se,
            "coincidences {co} at {}",
            p.theta
        );
    }
}

#[test]
fn side_b_starves_monotonically() {
    let mut last = u64::MAX;
    for tb in default_morph_grid() {
        let t = run_block(&ExperimentConfig::standard(0.5, tb).with_trials(100_000).with_seed(6), 0.0, 0.7);
        assert!(t.singles_b() <= last, "threshold_b {tb}");
        last = t.singles_b();
    }
}

#[test]
fn morph_is_continuous_and_ordered() {
    let cfg = standard_sweep(0.5, 0.5, 20_000, 9);
    let pts = morph_scan(&cfg, &default_morph_grid()).unwrap();
    for w in pts.windows(3) {
        let d2v = w[0].visibility - 2.0 * w[1].visibility + w[2].visibility;
        let sv = (w[0].visibility_se.powi(2) + 4.0 * w[1].visibility_se.powi(2) + w[2].visibility_se.powi(2)).sqrt();
        assert!(d2v.abs() <= 4.0 * sv, "V jump at {}", w[1].threshold_b);
        let d2s = w[0].chsh_s - 2.0 * w[1].chsh_s + w[2].chsh_s;
        let ss = (w[0].chsh_sigma.powi(2) + 4.0 * w[1].chsh_sigma.powi(2) + w[2].chsh_sigma.powi(2)).sqrt();
        assert!(d2s.abs() <= 4.0 * ss, "S jump at {}", w[1].threshold_b);
    }
    let first = &pts[0];
    let last = pts.last().unwrap();
    assert!(first.chsh_s <= 2.0 + 3.0 * first.chsh_sigma);
    assert!(last.chsh_s > 2.0 * 2f64.sqrt());
    assert!(first.visibility < last.visibility);
    assert!(pts.windows(2).all(|w| w[1].singles_ratio <= w[0].singles_ratio));
}

#[test]
fn morph_mirror_equivalence() {
    let cfg = standard_sweep(0.5, 0.5, 20_000, 10);
    let hi = morph_scan(&cfg, &[0.75]).unwrap();
    let lo = morph_scan(&cfg, &[0.25]).unwrap();
    assert_eq!(hi[0].visibility, lo[0].visibility);
    assert_eq!(hi[0].chsh_s, lo[0].chsh_s);
}

#[test]
fn sequential_calibration_picks_the_last_quantum_threshold() {
    // oracle: fitted V crosses 1 between 0.80 and 0.81
    let cfg = standard_sweep(0.5, 0.5, 200_000, 13);
    let grid: Vec<f64> = (70..=85).map(|i| i as f64 / 100.0).collect();
    let cal = sequential_visibility_calibration(&cfg, &grid).unwrap();
    assert_eq!(cal.best_threshold_b, 0.80);
    assert_eq!(cal.table.len(), grid.len());
    for (tb, v) in common::V_FIT_BY_THRESHOLD_B {
        let row = cal.table.iter().find(|r| (r.threshold_b - tb).abs() < 1e-9).unwrap();
        assert!((row.fitted_visibility - v).abs() <= 4.0 * row.fit_std_error, "{tb}: {row:?}");
    }
    let mirrored: Vec<f64> = grid.iter().rev().map(|t| ((100.0 - t * 100.0).round()) / 100.0).collect();
    let cal_m = sequential_visibility_calibration(&cfg, &mirrored).unwrap();
    assert_eq!(cal_m.best_threshold_b, 0.20);
}

#[test]
fn sequential_calibration_ties_go_to_half() {
    let mut exp = ExperimentConfig::noiseless(0.5, 0.5).with_trials(2_000);
    exp.station_a.efficiency = 1.0;
    let cal = sequential_visibility_calibration(&SweepConfig::new(exp), &[0.5, 0.6, 0.7]).unwrap();
    assert_eq!(cal.best_threshold_b, 0.5);
}

#[test]
fn uncalibrated_side_a_is_rejected() {
    let cfg = standard_sweep(0.3, 0.7, 100, 1);
    assert!(morph_scan(&cfg, &[0.7]).is_err());
    assert!(sequential_visibility_calibration(&cfg, &[0.7]).is_err());
}

#[test]
fn invariance_report() {
    let rep = check_rotational_invariance(&standard_sweep(0.5, 0.75, 200_000, 14), &[0.0, 45f64.to_radians()], DEFAULT_RV_LIMIT)
        .unwrap();
    assert!(rep.max_sigma < 3.0, "{}", rep.max_sigma);
    assert_eq!(rep.rows.len(), 37);
    let bad = check_rotational_invariance(&standard_sweep(0.3, 0.7, 100_000, 15), &[0.0], DEFAULT_RV_LIMIT).unwrap();
    assert!(bad.rv_flagged[0]);
    assert!((bad.rotational_variance[0] - common::RV_UNCALIBRATED).abs() < 0.03, "{}", bad.rotational_variance[0]);
    assert!(check_rotational_invariance(&standard_sweep(0.5, 0.75, 0, 1), &[0.0], DEFAULT_RV_LIMIT).is_err());
}

#[test]
fn classical_curve_less_visible_than_quantum() {
    let v = |tb| {
        let c = CorrelationCurve::from_sweep(&sweep(&standard_sweep(0.5, tb, 100_000, 16)).unwrap()).unwrap();
        eprb_lab::stats::fit_visibility(&c).unwrap()
    };
    let (c, q) = (v(0.5), v(0.75));
    assert!(c.visibility < q.visibility);
    assert!((c.visibility - common::V_FIT_CLASSICAL).abs() <= 4.0 * c.std_error);
    assert!((q.visibility - common::V_FIT_QUANTUM).abs() <= 4.0 * q.std_error);
}
