use std::f64::consts::PI;

use eprb_lab::runner::*;
use eprb_lab::stats::{binomial_se, match_probability};
use proptest::prelude::*;

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(f)
}

#[test]
fn tallies_do_not_depend_on_worker_count() {
    let cfg = ExperimentConfig::standard(0.3, 0.7).with_trials(50_000).with_seed(8);
    let one = in_pool(1, || run_block(&cfg, 0.2, 1.1));
    for threads in [2, 3, 8] {
        assert_eq!(in_pool(threads, || run_block(&cfg, 0.2, 1.1)), one, "{threads} threads");
    }
    let sweep_cfg = SweepConfig::new(cfg.with_trials(5_000));
    let s1 = in_pool(1, || sweep(&sweep_cfg).unwrap());
    assert_eq!(in_pool(4, || sweep(&sweep_cfg).unwrap()), s1);
}

#[test]
fn station_exchange_symmetry() {
    let trials = 200_000;
    let ab = SweepConfig::new(ExperimentConfig::standard(0.5, 0.75).with_trials(trials).with_seed(31));
    let ba = SweepConfig::new(ExperimentConfig::standard(0.75, 0.5).with_trials(trials).with_seed(32));
    let (r1, r2) = (sweep(&ab).unwrap(), sweep(&ba).unwrap());
    for (p, q) in r1.points.iter().zip(&r2.points) {
        let (x, y) = (match_probability(&p.tally).unwrap(), match_probability(&q.tally).unwrap());
        let pooled = (x + y) / 2.0;
        let se = (binomial_se(pooled, p.tally.coincidences).powi(2) + binomial_se(pooled, q.tally.coincidences).powi(2))
            .sqrt();
        assert!((x - y).abs() <= 3.0 * se, "theta {}: {x} vs {y} (se {se})", p.theta.to_degrees());
    }
}

fn classes(cfg: &ExperimentConfig, a: f64, b: f64) -> Vec<PairClass> {
    let mut out = Vec::with_capacity(cfg.trials_per_point as usize);
    for_each_class(cfg, 0, a, b, |_, c| out.push(c));
    out
}

#[test]
fn mirrored_threshold_keeps_every_retained_class() {
    let hi = ExperimentConfig::standard(0.5, 0.75).with_trials(100_000).with_seed(5);
    let lo = hi.with_threshold_b(0.25);
    let (x, y) = (classes(&hi, 0.0, 0.5), classes(&lo, 0.0, 0.5));
    let mut retained = 0;
    for (i, (cx, cy)) in x.iter().zip(&y).enumerate() {
        assert_eq!(cx.is_retained(), cy.is_retained(), "trial {i}");
        if cx.is_retained() {
            assert_eq!(cx, cy, "trial {i}");
            retained += 1;
        }
    }
    assert!(retained > 10_000);
    // only the discard reason differs
    assert!(x.contains(&PairClass::DiscardedMiss) && y.contains(&PairClass::DiscardedDouble));
}

#[test]
fn discard_priority_prefers_double() {
    use eprb_lab::model::DetectionOutcome::*;
    assert_eq!(classify(TrialOutcome { a: Double, b: Miss }), PairClass::DiscardedDouble);
    assert_eq!(classify(TrialOutcome { a: Miss, b: Double }), PairClass::DiscardedDouble);
    assert_eq!(classify(TrialOutcome { a: Up, b: Miss }), PairClass::DiscardedMiss);
    assert_eq!(classify(TrialOutcome { a: Up, b: Down }), PairClass::Match);
    assert_eq!(classify(TrialOutcome { a: Down, b: Down }), PairClass::Mismatch);
}

#[test]
fn empty_and_unordered_grids_rejected() {
    let mut cfg = SweepConfig::new(ExperimentConfig::standard(0.5, 0.5).with_trials(10));
    cfg.angle_b_grid.clear();
    assert!(sweep(&cfg).is_err());
    cfg.angle_b_grid = vec![0.0, 0.5, 0.5];
    assert!(sweep(&cfg).is_err());
}

#[test]
fn default_grid_is_five_degree_steps() {
    let g = default_angle_grid();
    assert_eq!(g.len(), 37);
    assert_eq!(g[0], 0.0);
    assert!((g[36] - PI).abs() < 1e-15);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn blocks_conserve_trials(
        ta in 0.0..1.0f64,
        tb in 0.0..1.0f64,
        a in 0.0..PI,
        b in 0.0..PI,
        dark in 0.0..0.2f64,
        seed in any::<u64>(),
    ) {
        let mut cfg = ExperimentConfig::standard(ta, tb).with_trials(2_000).with_seed(seed);
        cfg.station_a.dark_prob = dark;
        cfg.station_b.dark_prob = dark;
        let t = run_block(&cfg, a, b);
        prop_assert!(t.is_conserved());
        prop_assert_eq!(t.trials, 2_000);
        prop_assert_eq!(t.coincidences, t.matches + t.mismatches);
        prop_assert_eq!(t.trials, t.coincidences + t.discarded_doubles + t.discarded_misses);
    }

    #[test]
    fn mirror_equivalence_any_delta(delta in 0.01..0.49f64, theta in 0.0..PI, seed in any::<u64>()) {
        let hi = ExperimentConfig::standard(0.5, 0.5 + delta).with_trials(5_000).with_seed(seed);
        let lo = hi.with_threshold_b(0.5 - delta);
        let (x, y) = (classes(&hi, 0.0, theta), classes(&lo, 0.0, theta));
        for (cx, cy) in x.iter().zip(&y) {
            if cx.is_retained() || cy.is_retained() {
                prop_assert_eq!(cx, cy);
            }
        }
    }

    #[test]
    fn tally_merge_is_associative(seeds in prop::array::uniform3(any::<u64>())) {
        let t: Vec<TallyBlock> = seeds
            .iter()
            .map(|&s| run_block(&ExperimentConfig::standard(0.4, 0.6).with_trials(300).with_seed(s), 0.0, 1.0))
            .collect();
        prop_assert_eq!((t[0] + t[1]) + t[2], t[0] + (t[1] + t[2]));
        prop_assert_eq!(t[0] + t[1], t[1] + t[0]);
    }
}
