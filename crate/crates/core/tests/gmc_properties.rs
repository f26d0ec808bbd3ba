mod common;

use common::{combinations, gaussian_instance, neighbours, planted};
use gmc_core::gmc::{gmc, multi_restart, ExhaustiveOutcome, GmcConfig, SearchState, Termination};
use gmc_core::linalg::{energy, fit_active};
use gmc_core::{Instance, SparseWeight};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn traced(seed: u64) -> GmcConfig {
    GmcConfig {
        record_trajectory: true,
        ..GmcConfig::with_seed(seed)
    }
}

#[test]
fn trajectory_never_goes_up_and_keeps_k() {
    for seed in 0..10 {
        let pi = planted(60, 0.5, 0.2, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c0 = gmc_core::datagen::random_support(60, 12, &mut rng).unwrap();
        let res = gmc(&pi.inst, &c0, &traced(seed)).unwrap();
        let t = res.trajectory.as_ref().unwrap();
        assert_eq!(t.len() as u64, res.accepted_flips + 1);
        assert!(t.windows(2).all(|w| w[1] < w[0]));
        assert_eq!(res.c_final.k(), 12);
        assert_eq!(*t.last().unwrap(), res.energy);
    }
}

#[test]
fn local_optimum_survives_independent_rescan() {
    for seed in 0..10 {
        let inst = gaussian_instance(20, 40, 100 + seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c0 = gmc_core::datagen::random_support(40, 6, &mut rng).unwrap();
        let res = gmc(&inst, &c0, &GmcConfig::with_seed(seed)).unwrap();
        assert_eq!(res.terminated_by, Termination::LocalOptimum);
        let here = energy(&inst, &res.c_final).unwrap();
        for (_, _, nb) in neighbours(&res.c_final) {
            assert!(energy(&inst, &nb).unwrap() >= here);
        }
    }
}

#[test]
fn same_seed_same_run() {
    let pi = planted(50, 0.5, 0.2, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let c0 = gmc_core::datagen::random_support(50, 10, &mut rng).unwrap();
    let a = gmc(&pi.inst, &c0, &traced(77)).unwrap();
    let b = gmc(&pi.inst, &c0, &traced(77)).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.energy.to_bits(), b.energy.to_bits());
}

#[test]
fn planted_start_stops_after_t_wait_sweeps() {
    let pi = planted(40, 0.5, 0.2, 21);
    let res = gmc(&pi.inst, &pi.support0, &GmcConfig::with_seed(1)).unwrap();
    assert_eq!(res.n_conv, 10);
    assert_eq!(res.exhaustive_invocations, 1);
    assert_eq!(res.accepted_flips, 0);
    assert_eq!(res.c_final, pi.support0);
}

#[test]
fn restarts_find_the_enumerated_minimum() {
    for seed in 0..5 {
        let inst = gaussian_instance(6, 12, 300 + seed);
        let best = combinations(12, 2)
            .iter()
            .map(|s| fit_active(&inst, s).energy)
            .fold(f64::INFINITY, f64::min);
        let mr = multi_restart(&inst, 2, 20, &GmcConfig::with_seed(seed)).unwrap();
        assert!(mr.best.energy >= best * (1.0 - 1e-9));
        assert!(mr.best.energy <= best * (1.0 + 1e-9));
    }
}

#[test]
fn exhaustive_step_picks_the_best_neighbour() {
    for seed in 0..20 {
        let inst = gaussian_instance(5, 10, 500 + seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c0 = gmc_core::datagen::random_support(10, 2, &mut rng).unwrap();
        let here = energy(&inst, &c0).unwrap();
        let nbs = neighbours(&c0);
        assert_eq!(nbs.len(), 16);
        let (bi, bj, be) = nbs
            .iter()
            .map(|(i, j, nb)| (*i, *j, energy(&inst, nb).unwrap()))
            .min_by(|a, b| a.2.total_cmp(&b.2))
            .unwrap();
        let mut st = SearchState::new(&inst, &c0, seed, false).unwrap();
        match st.exhaustive_local_search().unwrap() {
            ExhaustiveOutcome::MovedTo { i_out, j_in, energy } => {
                assert!(be < here);
                assert_eq!((i_out, j_in), (bi, bj));
                assert!((energy - be).abs() <= 1e-10 * be);
            }
            ExhaustiveOutcome::NoImprovement => assert!(be >= here * (1.0 - 1e-12)),
        }
    }
}

#[test]
fn exact_ties_are_broken_uniformly() {
    // columns 0 and 1 are identical and both beat column 2
    let inst = Instance::from_rows(
        &[vec![1.0, 1.0, 0.0], vec![2.0, 2.0, 1.0], vec![0.5, 0.5, -1.0]],
        vec![1.0, 2.1, 0.4],
    )
    .unwrap();
    let start = SparseWeight::from_indices(3, &[2]).unwrap();
    let trials = 200;
    let mut picked_zero = 0;
    for seed in 0..trials {
        let mut st = SearchState::new(&inst, &start, seed, false).unwrap();
        match st.exhaustive_local_search().unwrap() {
            ExhaustiveOutcome::MovedTo { j_in, .. } => {
                assert!(j_in < 2);
                if j_in == 0 {
                    picked_zero += 1;
                }
            }
            other => panic!("expected a move, got {other:?}"),
        }
    }
    let freq = picked_zero as f64 / trials as f64;
    assert!((freq - 0.5).abs() <= 0.1, "frequency {freq}");
}

#[test]
fn multi_restart_is_reproducible() {
    let pi = planted(40, 0.5, 0.2, 8);
    let cfg = GmcConfig::with_seed(5);
    let a = multi_restart(&pi.inst, 8, 12, &cfg).unwrap();
    let b = multi_restart(&pi.inst, 8, 12, &cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.all.len(), 12);
    let lowest = a.all.iter().map(|r| r.energy).fold(f64::INFINITY, f64::min);
    assert_eq!(a.best.energy, lowest);
    assert!(a.all[..a.best_index].iter().all(|r| r.energy > lowest));

    let single = multi_restart(&pi.inst, 8, 1, &cfg).unwrap();
    assert_eq!(single.best_index, 0);
    assert_eq!(single.best, single.all[0]);
}
