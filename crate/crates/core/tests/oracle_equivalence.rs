use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use txcache::oracle::{
    brute_optimal, verify_consecutive_dominance, verify_consecutive_dominance_with,
};
use txcache::search::{
    optimize_boundaries_with, strictly_less, SearchOptions, SearchRule, UpperBound,
};
use txcache::{PopularityModel, SystemConfig};

/// Random small network. Lambda = 4, gamma = 1/4 keeps the subpacketization
/// tiny; the remaining knobs span loose and tight clamps.
fn random_instance(rng: &mut ChaCha8Rng, max_files: usize) -> (SystemConfig, PopularityModel) {
    let files = rng.gen_range(3..=max_files);
    let transmitters = rng.gen_range(2..=8);
    let users = 4 * rng.gen_range(1..=60);
    let stored = rng.gen_range(1..=transmitters);
    let gamma_t = stored as f64 / transmitters as f64;
    let alpha = rng.gen_range(0.0..=2.0);
    let cfg = SystemConfig::new(files, users, transmitters, 0.25, gamma_t, 4, 100).unwrap();
    (cfg, PopularityModel::zipf(files, alpha).unwrap())
}

fn matches_brute_force(rule: SearchRule) {
    let opts = SearchOptions {
        rule,
        ..SearchOptions::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut compared = 0;
    for _ in 0..240 {
        let (cfg, model) = random_instance(&mut rng, 14);
        let q = rng.gen_range(1..=3);
        let brute = brute_optimal(&cfg, &model, q);
        let found = optimize_boundaries_with(&cfg, &model, q, opts);
        match (brute, found) {
            (Ok(b), Ok(f)) => {
                assert_eq!(
                    f.delay, b.delay,
                    "{cfg:?} alpha={} q={q}: search {:?} vs brute {:?}",
                    model.alpha,
                    f.segmentation.boundaries(),
                    b.solution.segmentation.boundaries()
                );
                compared += 1;
            }
            (Err(_), Err(_)) => {}
            (b, f) => panic!("feasibility disagrees: {b:?} vs {f:?}"),
        }
    }
    assert!(compared >= 200, "only {compared} feasible instances");
}

#[test]
fn warm_search_matches_brute_force() {
    matches_brute_force(SearchRule::Warm);
}

#[test]
fn fibonacci_search_matches_brute_force() {
    matches_brute_force(SearchRule::Fibonacci);
}

#[test]
fn bisection_rule_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let opts = SearchOptions {
        rule: SearchRule::Bisection,
        ..SearchOptions::default()
    };
    for _ in 0..100 {
        let (cfg, model) = random_instance(&mut rng, 12);
        let q = rng.gen_range(2..=3);
        if let Ok(b) = brute_optimal(&cfg, &model, q) {
            let f = optimize_boundaries_with(&cfg, &model, q, opts).unwrap();
            // ties between distinct segmentations may differ in the last ulp
            assert!(
                !strictly_less(b.delay, f.delay),
                "{cfg:?} alpha={} q={q}: {} vs {}",
                model.alpha,
                f.delay,
                b.delay
            );
        }
    }
}

#[test]
fn consecutive_dominates_general_without_demand_cap() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for i in 0..40 {
        let (cfg, model) = random_instance(&mut rng, 10);
        let q = 2 + i % 2;
        let r = verify_consecutive_dominance_with(&cfg, &model, q, 0, i as u64, UpperBound::Relaxed)
            .unwrap();
        assert!(r.exhaustive);
        assert!(r.holds(), "{cfg:?} alpha={} q={q}: {r:?}", model.alpha);
    }
}

#[test]
fn demand_cap_admits_non_consecutive_optimum() {
    // L = 1 fixes every level, so the delay is n_1 + C (1 - pi_1); each coded
    // block needs pi_q >= Lambda / K = 1/7. Broadcasting files 1-2 leaves a
    // tail that no consecutive split can cut into two such blocks, while
    // {3, 5} and {4, 6} both clear the cap.
    let cfg = SystemConfig::new(6, 28, 8, 0.25, 0.125, 4, 100).unwrap();
    let model = PopularityModel::zipf(6, 1.0991).unwrap();
    let r = verify_consecutive_dominance(&cfg, &model, 3, 0, 0).unwrap();
    assert!(!r.holds());
    assert_eq!(r.counterexample, Some(vec![0, 0, 2, 1, 2, 1]));
    let general = txcache::oracle::GeneralSegmentation::new(vec![0, 0, 2, 1, 2, 1], 3).unwrap();
    let best = brute_optimal(&cfg, &model, 3).unwrap().delay;
    assert!(general.delay(&cfg, &model) < best - 1.0);
}

#[test]
fn four_sublibraries_match_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for _ in 0..40 {
        let (cfg, model) = random_instance(&mut rng, 20);
        if cfg.files < 4 {
            continue;
        }
        if let Ok(b) = brute_optimal(&cfg, &model, 4) {
            let f = optimize_boundaries_with(&cfg, &model, 4, SearchOptions::default()).unwrap();
            assert!(!strictly_less(b.delay, f.delay), "{cfg:?} alpha={}", model.alpha);
        }
    }
}
