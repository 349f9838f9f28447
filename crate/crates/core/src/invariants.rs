//! Property tests for cross-module invariants.

use crate::basis::ModeBasis;
use crate::cluster::{build_uniform_cluster, nullifier_report, nullifiers};
use crate::random::{random_covariance, random_symplectic, random_unitary};
use crate::state::QuadratureForm;
use crate::symplectic::{
    omega, passive_symplectic, symplectic_eigenvalues, symplectic_residual, williamson,
};
use crate::tomography::{informationally_complete_settings, linear_inversion, TomographyDataset};
use crate::witness::{npt_value, Bipartition};
use crate::{ClusterGraph, DMatrix, GaussianState};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// Random simple graph on `n` vertices from an edge bitmask.
fn graph_from_bits(n: usize, bits: u64) -> ClusterGraph {
    let mut edges = Vec::new();
    let mut k = 0;
    for a in 0..n {
        for b in a + 1..n {
            if bits >> (k % 64) & 1 == 1 {
                edges.push((a, b));
            }
            k += 1;
        }
    }
    ClusterGraph::from_edges(n, &edges).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn williamson_reconstructs(m in 1usize..=20, seed in any::<u64>()) {
        let v = random_covariance(m, 1.0, 1.0, &mut rng(seed));
        let w = williamson(&v).unwrap();
        let s = &w.symplectic;
        let back = s * w.normal_form() * s.transpose();
        prop_assert!((back - &v).amax() < 1e-8 * v.amax());
        prop_assert!(symplectic_residual(s) < 1e-8 * s.norm_squared());
        prop_assert!(w.spectrum.min() >= 1.0 - 1e-9);
    }

    #[test]
    fn spectrum_is_symplectic_invariant(m in 1usize..=8, seed in any::<u64>()) {
        let mut r = rng(seed);
        let v = random_covariance(m, 0.8, 0.5, &mut r);
        let s = random_symplectic(m, 0.6, &mut r);
        let a = symplectic_eigenvalues(&v).unwrap();
        let b = symplectic_eigenvalues(&(&s * &v * s.transpose())).unwrap();
        for (x, y) in a.values().iter().zip(b.values()) {
            prop_assert!((x - y).abs() < 1e-8 * x.max(1.0));
        }
    }

    #[test]
    fn passive_maps_are_orthogonal_symplectic(m in 1usize..=10, seed in any::<u64>()) {
        let s = passive_symplectic(&random_unitary(m, &mut rng(seed)));
        let n = 2 * m;
        prop_assert!((s.transpose() * &s - DMatrix::<f64>::identity(n, n)).amax() < 1e-12);
        let w = omega(m);
        prop_assert!((&s * &w * s.transpose() - w).amax() < 1e-12);
    }

    #[test]
    fn nullifier_ratio_is_exact(n in 2usize..=10, bits in any::<u64>(), r in 0.0f64..1.5) {
        let g = graph_from_bits(n, bits);
        let state = build_uniform_cluster(&g, r).unwrap();
        for rec in nullifier_report(&state, &g, 1.0).unwrap() {
            prop_assert!((rec.ratio - (-2.0 * r).exp()).abs() < 1e-10);
        }
        prop_assert!(nullifiers(&g).max_commutator() < 1e-12);
    }

    #[test]
    fn npt_ignores_local_unitaries(seed in any::<u64>(), split in 1usize..=3) {
        let mut r = rng(seed);
        let v = random_covariance(4, 0.7, 0.3, &mut r);
        let ua = random_unitary(split, &mut r);
        let ub = random_unitary(4 - split, &mut r);
        let mut u = DMatrix::zeros(4, 4);
        u.view_mut((0, 0), (split, split)).copy_from(&ua);
        u.view_mut((split, split), (4 - split, 4 - split)).copy_from(&ub);
        let s = passive_symplectic(&u);
        let b = Bipartition::new(4, &(0..split).collect::<Vec<_>>()).unwrap();
        let before = npt_value(&v, &b).unwrap();
        let after = npt_value(&(&s * &v * s.transpose()), &b).unwrap();
        prop_assert!((before - after).abs() < 1e-8);
    }

    #[test]
    fn homodyne_keeps_states_physical(seed in any::<u64>(), mode in 0usize..5, phase in 0.0f64..3.2, outcome in -3.0f64..3.0) {
        let v = random_covariance(5, 0.8, 0.5, &mut rng(seed));
        let state = GaussianState::from_covariance(v).unwrap();
        let form = QuadratureForm::rotated(mode, phase, 5).unwrap();
        let after = state.homodyne_condition(&form, outcome).unwrap();
        prop_assert_eq!(after.mode_count(), 4);
        prop_assert!(after.is_physical(1e-9));
    }

    #[test]
    fn basis_composition_is_associative(n in 1usize..=6, seed in any::<u64>()) {
        let mut r = rng(seed);
        let a = ModeBasis::new(random_unitary(n, &mut r)).unwrap();
        let b = ModeBasis::new(random_unitary(n, &mut r)).unwrap();
        let c = ModeBasis::new(random_unitary(n, &mut r)).unwrap();
        let left = ModeBasis::compose(&ModeBasis::compose(&a, &b).unwrap(), &c).unwrap();
        let right = ModeBasis::compose(&a, &ModeBasis::compose(&b, &c).unwrap()).unwrap();
        prop_assert!((left.coeffs() - right.coeffs()).camax() < 1e-12);
        let id = ModeBasis::compose(&a, &a.adjoint()).unwrap();
        prop_assert!((id.coeffs() - ModeBasis::identity(n).coeffs()).camax() < 1e-12);
    }

    #[test]
    fn noiseless_inversion_is_exact(m in 1usize..=4, seed in any::<u64>()) {
        let v = random_covariance(m, 0.8, 0.5, &mut rng(seed));
        let data = TomographyDataset::noiseless(&v, informationally_complete_settings(m), 1000);
        let back = linear_inversion(&data).unwrap();
        prop_assert!((back - &v).amax() < 1e-9 * v.amax());
    }
}
