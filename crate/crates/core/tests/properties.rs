//! Property tests for the storage, model and metric invariants.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use trifact_core::model::{FactorState, RegMode, sigmoid};
use trifact_core::tensor::{DuplicatePolicy, Entry, SparseTensorCOO, TensorShape};
use trifact_core::{Error, metrics};

fn random_tensor(dims: (usize, usize, usize), n: usize, seed: u64) -> SparseTensorCOO {
    let shape = TensorShape::new(dims.0, dims.1, dims.2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tensor = SparseTensorCOO::new(shape);
    let mut placed = 0;
    while placed < n {
        let entry = Entry::new(
            rng.random_range(0..dims.0),
            rng.random_range(0..dims.1),
            rng.random_range(0..dims.2),
            rng.random_range(0.0..1.0),
        );
        if tensor.get(entry.i, entry.j, entry.k).is_none() {
            tensor.insert_or_merge(entry, DuplicatePolicy::Mean).unwrap();
            placed += 1;
        }
    }
    tensor
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn split_partitions_indices_exactly(
        n in 3usize..400,
        w1 in 0.05f64..1.0,
        w2 in 0.05f64..1.0,
        w3 in 0.05f64..1.0,
        seed in any::<u64>(),
    ) {
        let total = w1 + w2 + w3;
        let ratios = (w1 / total, w2 / total, w3 / total);
        let tensor = random_tensor((n, 2, 2), n, seed ^ 0x9e37);
        match tensor.split(ratios, seed) {
            Err(Error::Config(_)) => {
                // a block rounded to zero; legal outcome for small n
            }
            Err(other) => return Err(TestCaseError::fail(format!("unexpected error {other}"))),
            Ok(split) => {
                prop_assert_eq!(split.total(), n);
                let mut seen = vec![false; n];
                for idx in split.train.iter().chain(&split.validation).chain(&split.test) {
                    prop_assert!(!seen[*idx], "index {} assigned twice", idx);
                    seen[*idx] = true;
                }
                prop_assert!(seen.into_iter().all(|s| s));

                let again = tensor.split(ratios, seed).unwrap();
                prop_assert_eq!(split, again);
            }
        }
    }

    #[test]
    fn density_ignores_entry_order(seed in any::<u64>(), n in 1usize..60) {
        let tensor = random_tensor((8, 8, 4), n, seed);
        let mut entries = tensor.entries().to_vec();
        entries.reverse();
        let permuted =
            SparseTensorCOO::from_entries(tensor.shape(), entries).unwrap();
        prop_assert_eq!(tensor.density(), permuted.density());
    }

    #[test]
    fn tensor_text_round_trip(seed in any::<u64>(), n in 0usize..50) {
        let tensor = random_tensor((6, 5, 4), n, seed);
        let back = SparseTensorCOO::from_text(&tensor.to_text()).unwrap();
        prop_assert_eq!(back.shape(), tensor.shape());
        prop_assert_eq!(back.len(), tensor.len());
        for (a, b) in tensor.entries().iter().zip(back.entries()) {
            prop_assert_eq!((a.i, a.j, a.k), (b.i, b.j, b.k));
            prop_assert_eq!(a.value.to_bits(), b.value.to_bits());
        }
    }

    #[test]
    fn mapped_factors_and_predictions_stay_in_range(
        seed in any::<u64>(),
        rank in 1usize..8,
        scale in 0.01f64..10.0,
    ) {
        let shape = TensorShape::new(5, 4, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let state = FactorState::random(shape, rank, scale, &mut rng).unwrap();
        for table in [state.y_i(), state.y_j(), state.y_k()] {
            for &y in table.values() {
                let x = sigmoid(y);
                prop_assert!(x > 0.0 && x < 1.0);
            }
        }
        for i in 0..5 {
            for j in 0..4 {
                for k in 0..3 {
                    let p = state.predict(i, j, k).unwrap();
                    prop_assert!(p > 0.0 && p < rank as f64);
                }
            }
        }
    }

    #[test]
    fn gradient_matches_finite_differences(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rank = rng.random_range(1..=5);
        let shape = TensorShape::new(4, 3, 5).unwrap();
        let state = FactorState::random(shape, rank, 2.0, &mut rng).unwrap();
        let entry = Entry::new(
            rng.random_range(0..4),
            rng.random_range(0..3),
            rng.random_range(0..5),
            rng.random_range(0.0..1.0),
        );
        let lambda = if seed % 3 == 0 { 0.0 } else { rng.random_range(0.0..0.1) };
        let grad = state.point_gradient(&entry, lambda, RegMode::Exact).unwrap();

        // probe the loss through a rebuilt state so the check stays on the
        // public surface
        let h = 1e-5;
        let loss_with_y_j = |delta: f64, r: usize| {
            let mut rows: Vec<Vec<f64>> =
                (0..3).map(|row| state.y_j().row(row).to_vec()).collect();
            rows[entry.j][r] += delta;
            let table = trifact_core::model::FactorTable::from_rows(rows, rank).unwrap();
            let probe =
                FactorState::from_tables(state.y_i().clone(), table, state.y_k().clone()).unwrap();
            probe.loss(&[entry], lambda).unwrap().total
        };
        for r in 0..rank {
            let fd = (loss_with_y_j(h, r) - loss_with_y_j(-h, r)) / (2.0 * h);
            let analytic = grad.grad_y_j[r];
            let scale = analytic.abs().max(fd.abs()).max(1e-3);
            prop_assert!((analytic - fd).abs() / scale < 1e-6);
        }
    }

    #[test]
    fn rmse_is_permutation_invariant_and_mergeable(seed in any::<u64>()) {
        let shape = TensorShape::new(6, 6, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let state = FactorState::random(shape, 3, 1.0, &mut rng).unwrap();
        let draw = |rng: &mut ChaCha8Rng, n: usize| -> Vec<Entry> {
            (0..n).map(|_| Entry::new(
                rng.random_range(0..6),
                rng.random_range(0..6),
                rng.random_range(0..3),
                rng.random_range(0.0..1.0),
            )).collect()
        };
        let s1 = draw(&mut rng, 25);
        let s2 = draw(&mut rng, 40);

        let mut shuffled = s1.clone();
        shuffled.reverse();
        prop_assert!(
            (metrics::rmse(&state, &s1).unwrap() - metrics::rmse(&state, &shuffled).unwrap()).abs()
                < 1e-12
        );
        prop_assert!(
            (metrics::mae(&state, &s1).unwrap() - metrics::mae(&state, &shuffled).unwrap()).abs()
                < 1e-12
        );

        let merged: Vec<Entry> = s1.iter().chain(&s2).copied().collect();
        let lhs = metrics::rmse(&state, &merged).unwrap().powi(2) * merged.len() as f64;
        let rhs = metrics::rmse(&state, &s1).unwrap().powi(2) * s1.len() as f64
            + metrics::rmse(&state, &s2).unwrap().powi(2) * s2.len() as f64;
        prop_assert!((lhs - rhs).abs() / rhs.max(1e-9) < 1e-12);
    }
}
