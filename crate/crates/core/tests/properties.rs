use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Zero;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use qpolar::circuit::{apply_circuit, build, gf2_matrices, Direction, Family};
use qpolar::decoder::brute_force_marginal;
use qpolar::montecarlo::{run_batches_sequential, McConfig};
use qpolar::oracle::random_schedule_state;
use qpolar::pauli::cnot_pair;
use qpolar::polarization::{
    bec_density_evolution_exact, select_channels, union_bound, ChannelStats, FreezeRule,
};
use qpolar::{decision_marginal, Pauli, PauliOp, Role, Schedule};

fn pauli() -> impl Strategy<Value = Pauli> {
    (0u8..4).prop_map(Pauli::from_bits)
}

fn family() -> impl Strategy<Value = Family> {
    prop_oneof![Just(Family::Polar), Just(Family::Bmera)]
}

fn op(n: usize) -> impl Strategy<Value = PauliOp> {
    prop::collection::vec(pauli(), n).prop_map(PauliOp::from_paulis)
}

proptest! {
    #[test]
    fn cnot_is_an_involution(a in pauli(), b in pauli()) {
        let (c, t) = cnot_pair(a, b);
        prop_assert_eq!(cnot_pair(c, t), (a, b));
    }

    #[test]
    fn cnot_respects_products(a in pauli(), b in pauli(), c in pauli(), d in pauli()) {
        let (p, q) = cnot_pair(a.compose(c), b.compose(d));
        let (p1, q1) = cnot_pair(a, b);
        let (p2, q2) = cnot_pair(c, d);
        prop_assert_eq!((p, q), (p1.compose(p2), q1.compose(q2)));
    }

    #[test]
    fn decode_undoes_encode((fam, e) in (family(), 1usize..=6).prop_flat_map(|(f, l)| (Just(f), op(1 << l)))) {
        let c = build(fam, e.len().trailing_zeros() as usize).unwrap();
        let enc = apply_circuit(&e, &c, Direction::Encode).unwrap();
        prop_assert_eq!(apply_circuit(&enc, &c, Direction::Decode).unwrap(), e);
    }

    #[test]
    fn symplectic_matrices_track_conjugation((fam, e) in (family(), 1usize..=5).prop_flat_map(|(f, l)| (Just(f), op(1 << l)))) {
        let c = build(fam, e.len().trailing_zeros() as usize).unwrap();
        let (mx, mz) = gf2_matrices(&c);
        let enc = apply_circuit(&e, &c, Direction::Encode).unwrap();
        prop_assert_eq!(enc.x_bits(), mx.mul_vec(&e.x_bits()));
        prop_assert_eq!(enc.z_bits(), mz.mul_vec(&e.z_bits()));
    }

    #[test]
    fn erasure_rates_average_to_eps(l in 1usize..=6, num in 0i64..=16) {
        // the two children of every split average to the parent
        let eps = BigRational::new(BigInt::from(num), BigInt::from(16));
        let (x, z) = bec_density_evolution_exact(l, &eps);
        let n = BigRational::from_integer(BigInt::from(1i64 << l));
        let sx = x.iter().fold(BigRational::zero(), |a, b| a + b);
        let sz = z.iter().fold(BigRational::zero(), |a, b| a + b);
        let half = &eps / BigRational::from_integer(BigInt::from(2));
        prop_assert_eq!(&sx / &n, half.clone());
        prop_assert_eq!(&sz / &n, half);
    }

    #[test]
    fn union_bound_grows_with_k(rates in prop::collection::vec((0.0f64..0.5, 0.0f64..0.5), 16), k in 0usize..16) {
        let (x, z): (Vec<f64>, Vec<f64>) = rates.into_iter().unzip();
        let s = ChannelStats::new(x, z, 1).unwrap();
        let lo = union_bound(&s, &select_channels(&s, k, FreezeRule::FreezeWorse).unwrap()).unwrap();
        let hi = union_bound(&s, &select_channels(&s, k + 1, FreezeRule::FreezeWorse).unwrap()).unwrap();
        prop_assert!(hi.raw >= lo.raw);
        prop_assert!(lo.clamped <= 1.0);
    }

    #[test]
    fn selection_commutes_with_relabelling(
        rates in prop::collection::vec((0.0f64..0.5, 0.0f64..0.5), 8),
        perm in Just((0..8usize).collect::<Vec<_>>()).prop_shuffle(),
        k in 0usize..=8,
    ) {
        let worst: Vec<f64> = rates.iter().map(|r| r.0.max(r.1)).collect();
        let mut sorted = worst.clone();
        sorted.sort_by(f64::total_cmp);
        prop_assume!(sorted.windows(2).all(|w| w[0] < w[1]));
        let (x, z): (Vec<f64>, Vec<f64>) = rates.iter().copied().unzip();
        let s = ChannelStats::new(x.clone(), z.clone(), 1).unwrap();
        let ps = ChannelStats::new(perm.iter().map(|&i| x[i]).collect(), perm.iter().map(|&i| z[i]).collect(), 1).unwrap();
        let roles = select_channels(&s, k, FreezeRule::FreezeWorse).unwrap();
        let proles = select_channels(&ps, k, FreezeRule::FreezeWorse).unwrap();
        let expect: Vec<Role> = perm.iter().map(|&i| roles[i]).collect();
        prop_assert_eq!(proles, expect);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn contraction_matches_brute_force(
        fam in family(),
        l in 1usize..=3,
        sym in any::<bool>(),
        p in 0.01f64..0.6,
        bias in 0.0f64..1.0,
        seed in any::<u64>(),
    ) {
        let c = build(fam, l).unwrap();
        let px = p * bias / 2.0;
        let pz = p * (1.0 - bias) / 2.0;
        let priors = [[1.0 - p, px, p / 2.0, pz]];
        let schedule = if sym { Schedule::Symmetric } else { Schedule::Standard };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let la = random_schedule_state(&mut rng, schedule, c.n);
        match (decision_marginal(&c, &la, &priors), brute_force_marginal(&c, &la, &priors)) {
            (Ok(a), Ok(b)) => {
                prop_assert!((a.0 - b.0).abs() < 1e-10 && (a.1 - b.1).abs() < 1e-10, "{a:?} vs {b:?}");
            }
            (Err(_), Err(_)) => {}
            (a, b) => prop_assert!(false, "feasibility differs: {a:?} vs {b:?}"),
        }
    }

    #[test]
    fn batches_do_not_depend_on_threads(trials in 0u64..2000, batch in 1u64..300, seed in any::<u64>()) {
        use rand::Rng;
        let cfg = McConfig { trials, seed, batch_size: batch, threads: Some(3) };
        let work = |rng: &mut ChaCha8Rng, count: u64| Ok((0..count).map(|_| rng.random::<u32>() as u64).sum::<u64>());
        let seq = run_batches_sequential(&cfg, work).unwrap();
        prop_assert_eq!(seq.len() as u64, trials.div_ceil(batch));
        #[cfg(feature = "parallel")]
        prop_assert_eq!(qpolar::montecarlo::run_batches_parallel(&cfg, work).unwrap(), seq);
    }
}
