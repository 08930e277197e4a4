//! Property tests for the structural invariants, driven by seeded random
//! channels so that failures shrink to a reproducible seed.

use std::f64::consts::PI;

use proptest::prelude::*;

use qds_core::channels::{
    choi_from_superop, kraus_from_superop, kraus_to_superop, superop_from_choi, DensityMatrix, Dynamics,
    QuantumChannel,
};
use qds_core::coherence::{
    block_decompose, cutoff_invariance_defect, fit_root_of_unity, kadison_gap, verify_block_preservation,
    RingSphere,
};
use qds_core::linalg::{identity, C64, CMatrix};
use qds_core::spectral::decay_profile;
use qds_core::structure::{
    canonical_stationary, cutoff_dual, decompose_structure, stationary_coordinates, CanonicalStationaryState,
    Subspace,
};
use qds_core::tolerance::Tolerances;
use qds_core::zoo;

fn config() -> ProptestConfig {
    ProptestConfig {
        cases: 24,
        ..ProptestConfig::default()
    }
}

/// Random channel, possibly with a decaying part: with `drain` set, the
/// last level is emptied into the first after the random channel acts.
fn channel(dim: usize, kraus: usize, seed: u64, drain: bool) -> QuantumChannel {
    let base = zoo::random_cptp(dim, kraus, seed).unwrap();
    if !drain || dim < 2 {
        return base;
    }
    let mut keep = identity(dim);
    keep[(dim - 1, dim - 1)] = C64::new(0.0, 0.0);
    let move_down = CMatrix::from_fn(dim, dim, |i, j| {
        if i == 0 && j == dim - 1 {
            C64::new(1.0, 0.0)
        } else {
            C64::new(0.0, 0.0)
        }
    });
    let drain = QuantumChannel::from_kraus(vec![keep, move_down]).unwrap();
    // A unitary first step keeps the random channel from refilling the
    // drained level, so that level is decaying.
    let u = zoo::random_cptp(dim - 1, 1, seed ^ 0x55).unwrap();
    let mut k = identity(dim);
    k.view_mut((0, 0), (dim - 1, dim - 1)).copy_from(&u.kraus()[0]);
    let rotate = QuantumChannel::from_kraus(vec![k]).unwrap();
    drain.after(&rotate).unwrap().after(&base).unwrap()
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn representations_round_trip(dim in 1usize..4, kraus in 1usize..4, seed in any::<u64>()) {
        let ch = zoo::random_cptp(dim, kraus, seed).unwrap();
        let s = kraus_to_superop(ch.kraus()).unwrap();
        let back = superop_from_choi(&choi_from_superop(&s).unwrap()).unwrap();
        prop_assert!((&back - &s).norm() <= 1e-12);
        let ks = kraus_from_superop(&s, 1e-10).unwrap();
        prop_assert!((kraus_to_superop(&ks).unwrap() - &s).norm() <= 1e-10);
        prop_assert!(ch.verify(1e-10).passed());
    }

    #[test]
    fn evolution_preserves_states(dim in 1usize..5, kraus in 1usize..4, seed in any::<u64>()) {
        let ch = zoo::random_cptp(dim, kraus, seed).unwrap();
        let mut rng = zoo::rng(seed);
        let rho = zoo::random_density(&mut rng, dim);
        let out = ch.act(rho.matrix());
        prop_assert!(DensityMatrix::new(out, &Tolerances::default()).is_ok());
    }

    #[test]
    fn block_decomposition_reassembles(n in 2usize..6, split in 1usize..5, seed in any::<u64>()) {
        let split = split.min(n - 1);
        let v = Subspace::coordinate(n, &(0..split).collect::<Vec<_>>());
        let w = v.complement();
        let mut rng = zoo::rng(seed);
        let m = zoo::gaussian_matrix(&mut rng, n, n);
        let b = block_decompose(&m, &v, &w).unwrap();
        prop_assert!((b.reassemble() - &m).norm() <= 1e-12 * m.norm().max(1.0));
        let norms = b.vv.norm_squared() + b.ww.norm_squared() + b.coherence_norm().powi(2);
        prop_assert!((norms - m.norm_squared()).abs() <= 1e-10 * m.norm_squared());
    }

    #[test]
    fn decomposition_accounts_for_every_dimension(
        dim in 2usize..5, kraus in 1usize..4, seed in any::<u64>(), drain in any::<bool>()
    ) {
        let ch = channel(dim, kraus, seed, drain);
        let tol = Tolerances::default();
        let sd = decompose_structure(&ch, &tol, seed).unwrap();
        prop_assert_eq!(sd.accounted_dim(), dim);
        prop_assert_eq!(sd.decaying.dim() + sd.recurrent.dim(), dim);
        for (_, e) in sd.enclosures() {
            prop_assert!(qds_core::structure::is_enclosure(&ch, &e, tol.eig).unwrap().0);
        }
    }

    #[test]
    fn decaying_population_never_grows(dim in 2usize..5, kraus in 1usize..4, seed in any::<u64>()) {
        let ch = channel(dim, kraus, seed, true);
        let sd = decompose_structure(&ch, &Tolerances::default(), seed).unwrap();
        let mut rng = zoo::rng(seed ^ 1);
        let rho = zoo::random_density(&mut rng, dim);
        let p = decay_profile(&ch, &rho, sd.decaying.projector(), 30, None).unwrap();
        for w in p.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-10, "{:?}", p);
        }
    }

    #[test]
    fn canonical_form_round_trips(dim in 2usize..5, kraus in 1usize..3, seed in any::<u64>()) {
        let ch = channel(dim, kraus, seed, seed % 2 == 0);
        let tol = Tolerances::default();
        let sd = decompose_structure(&ch, &tol, seed).unwrap();
        let mut rng = zoo::rng(seed);
        let coords = CanonicalStationaryState::random(&sd, &mut rng);
        let rho = canonical_stationary(&sd, &coords).unwrap();
        prop_assert!(ch.stationarity_defect(rho.matrix()) <= 1e-9);
        let back = stationary_coordinates(&ch, &sd, &rho, &tol).unwrap();
        let again = canonical_stationary(&sd, &back).unwrap();
        prop_assert!((again.matrix() - rho.matrix()).norm() <= 1e-9);
    }

    #[test]
    fn coherence_blocks_do_not_mix(dim in 2usize..5, kraus in 1usize..3, seed in any::<u64>()) {
        let ch = channel(dim, kraus, seed, seed % 3 == 0);
        let sd = decompose_structure(&ch, &Tolerances::default(), seed).unwrap();
        let rep = verify_block_preservation(&ch, &sd, 1e-9, seed).unwrap();
        prop_assert!(rep.passed, "{:?}", rep.checks);
    }

    #[test]
    fn kadison_inequality_holds(dim in 2usize..5, kraus in 1usize..4, seed in any::<u64>(), drain in any::<bool>()) {
        let ch = channel(dim, kraus, seed, drain);
        let tol = Tolerances::default();
        let sd = decompose_structure(&ch, &tol, seed).unwrap();
        let s = cutoff_dual(&ch, &sd.recurrent, &tol).unwrap();
        let mut rng = zoo::rng(seed ^ 7);
        let a = zoo::gaussian_matrix(&mut rng, s.dim, s.dim);
        prop_assert!(kadison_gap(&s, &a).unwrap() >= -1e-9);
        prop_assert!(s.unitality_defect() <= 1e-9);
    }

    #[test]
    fn sphere_projectors_are_invariant(m in 2usize..4, p in 0.1f64..0.9, alpha in 0.0..PI, phase in 0.0..(2.0 * PI)) {
        let ch = zoo::replica(m, &zoo::depolarizing(p).unwrap()).unwrap();
        let tol = Tolerances::default();
        let sd = decompose_structure(&ch, &tol, 1).unwrap();
        let x = &sd.x_blocks[0];
        let ring = RingSphere::new(&ch, &x.replica(0), &x.replica(1), &tol).unwrap();
        let proj = ring.projector(alpha, C64::from_polar(1.0, phase)).unwrap();
        prop_assert!((&proj * &proj - &proj).norm() <= 1e-9);
        prop_assert!(cutoff_invariance_defect(&ch, &sd.recurrent, &proj) <= 1e-9);
        let u = ring.unitaries(alpha).u;
        let moved = &u * ring.projector(0.3, C64::new(1.0, 0.0)).unwrap() * u.adjoint();
        prop_assert!((moved - ring.projector(alpha + 0.3, C64::new(1.0, 0.0)).unwrap()).norm() <= 1e-9);
    }

    #[test]
    fn roots_of_unity_are_recovered_in_lowest_terms(m in 2u32..12, q in 1u32..12) {
        let q = q % m;
        prop_assume!(q > 0);
        let lambda = C64::from_polar(1.0, 2.0 * PI * q as f64 / m as f64);
        let g = gcd(q, m);
        prop_assert_eq!(fit_root_of_unity(lambda, 12), Some((q / g, m / g)));
    }
}

fn gcd(a: u32, b: u32) -> u32 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}
