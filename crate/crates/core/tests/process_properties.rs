mod common;

use common::*;
use multitime::control::computational_measure_reprepare;
use multitime::linalg::herm_eigvals;
use multitime::monotones::{channel_information, monotone_report};
use multitime::process::ProcessTensor;
use proptest::prelude::*;

fn d_env_choice() -> impl Strategy<Value = usize> {
    prop::sample::select(vec![1usize, 2, 4])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn process_chois_satisfy_invariants(seed in any::<u64>(), d_env in d_env_choice(), m in 0usize..=2, extra in 0usize..=2) {
        let mut r = rng(seed);
        let n = m + 1 + extra;
        let dynm = random_dynamics(&mut r, d_env, n);
        let open = random_slots(&mut r, n - 1, m);
        let t = dynm.choi_of_process(&open).unwrap();
        prop_assert_eq!(t.n_slots(), m);
        prop_assert!(t.check_invariants().is_ok());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn contraction_matches_simulation(seed in any::<u64>(), d_env in d_env_choice(), mask in 1u8..4) {
        let mut r = rng(seed);
        let dynm = random_dynamics(&mut r, d_env, 3);
        let t = dynm.choi_of_process(&[1, 2]).unwrap();
        let closed: Vec<usize> = [1, 2].into_iter().filter(|s| mask & (1 << (s - 1)) != 0).collect();
        let open: Vec<usize> = [1, 2].into_iter().filter(|s| !closed.contains(s)).collect();
        let controls: Vec<(usize, _)> = closed.iter().map(|&s| (s, random_channel(&mut r, 2))).collect();
        let formula = t.contract(controls.iter().map(|(s, c)| (*s, c))).unwrap();
        let simulated = dynm
            .insert_controls(controls.iter().map(|(s, c)| (*s, c)))
            .unwrap()
            .choi_of_process(&open)
            .unwrap();
        prop_assert!(max_diff(formula.choi(), simulated.choi()) < 1e-10);
    }

    #[test]
    fn no_environment_means_no_memory(seed in any::<u64>(), m in 1usize..=2) {
        let mut r = rng(seed);
        let dynm = random_dynamics(&mut r, 1, m + 1);
        let open: Vec<usize> = (1..=m).collect();
        let rep = monotone_report(&dynm.choi_of_process(&open).unwrap()).unwrap();
        prop_assert!(rep.n_bits.abs() < 1e-9, "N = {}", rep.n_bits);
    }

    #[test]
    fn unitary_pulses_preserve_pair_spectra(seed in any::<u64>(), d_env in d_env_choice()) {
        let mut r = rng(seed);
        let dynm = random_dynamics(&mut r, d_env, 3);
        let t = dynm.choi_of_process(&[1, 2]).unwrap();
        let pulses = [(1, random_unitary_channel(&mut r, 2)), (2, random_unitary_channel(&mut r, 2))];
        let u = dynm.insert_controls(pulses.iter().map(|(s, c)| (*s, c))).unwrap().choi_of_process(&[1, 2]).unwrap();
        for (a, b) in t.channel_pairs() {
            let x = herm_eigvals(&t.leg_marginal(&[a, b]).unwrap()).unwrap();
            let y = herm_eigvals(&u.leg_marginal(&[a, b]).unwrap()).unwrap();
            for (p, q) in x.iter().zip(&y) {
                prop_assert!((p - q).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn measuring_every_slot_breaks_entanglement(seed in any::<u64>(), d_env in d_env_choice()) {
        let mut r = rng(seed);
        let dynm = random_dynamics(&mut r, d_env, 3);
        let t = dynm.choi_of_process(&[1, 2]).unwrap();
        let mr = computational_measure_reprepare(2);
        let closed = t.contract([(1, &mr), (2, &mr)]).unwrap();
        let rep = monotone_report(&closed).unwrap();
        prop_assert!(rep.n_bits.abs() < 1e-8);
        // a separable Choi state carries at most one bit between its halves
        let info = channel_information(&closed.as_channel().unwrap()).unwrap();
        prop_assert!(info.value <= 1.0 + 1e-9, "I = {}", info.value);
    }

    #[test]
    fn compositions_are_valid_processes(seed in any::<u64>()) {
        let mut r = rng(seed);
        let a = random_dynamics(&mut r, 2, 2).choi_of_process(&[1]).unwrap();
        let b = random_dynamics(&mut r, 1, 1).choi_of_process(&[]).unwrap();
        let par = ProcessTensor::parallel_compose(&a, &b);
        prop_assert!(par.check_invariants().is_ok());
        let seq = ProcessTensor::sequential_compose(&b, &a).unwrap();
        prop_assert_eq!(seq.n_slots(), 2);
        prop_assert!(seq.check_invariants().is_ok());
        let ia = monotone_report(&a).unwrap().i_bits;
        let ib = monotone_report(&b).unwrap().i_bits;
        let ipar = monotone_report(&par).unwrap().i_bits;
        prop_assert!((ipar - ia - ib).abs() < 1e-8);
    }
}
