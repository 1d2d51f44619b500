use proptest::prelude::*;
use unpaired::data::make_dataset;
use unpaired::diagnostics::{permutation_oracle, rank1_score, routing_weights, singular_values};
use unpaired::objective::fitness_term;
use unpaired::{Matrix, PredictorParams, TransitionModel};

#[test]
fn oracle_recovers_inverse_permutation_on_default_benchmark() {
    let prior = TransitionModel::default_benchmark();
    for seed in 0..10 {
        let ds = make_dataset(&prior, 5_000, 1.0, seed).unwrap();
        let result = permutation_oracle(&ds.train_observations(), &prior).unwrap();
        assert_eq!(result.table.len(), 24);
        assert_eq!(result.best, ds.inverse_permutation(), "seed {seed}");
        assert!(result.margin > 0.0);
    }
}

#[test]
fn oracle_scores_agree_with_saturated_fitness() {
    let prior = TransitionModel::default_benchmark();
    let ds = make_dataset(&prior, 2_000, 1.0, 7).unwrap();
    let x = ds.train_observations();
    let result = permutation_oracle(&x, &prior).unwrap();
    for (routing, score) in &result.table {
        // a logit gap of 1e3 underflows the other classes to exactly zero
        let pred = PredictorParams::new(routing_weights(routing, 4, 1e3), 1.0).unwrap();
        let f = fitness_term(&pred, &x, &prior).unwrap();
        assert!((f - score).abs() <= 1e-9 * score.abs().max(1.0), "{routing:?}: {f} vs {score}");
    }
}

#[test]
fn generic_priors_have_a_unique_best_labeling() {
    for prior_seed in 0..10 {
        let prior = TransitionModel::random_dirichlet(4, 0.5, 0.01, prior_seed).unwrap();
        let ds = make_dataset(&prior, 5_000, 1.0, prior_seed).unwrap();
        let result = permutation_oracle(&ds.train_observations(), &prior).unwrap();
        assert!(result.margin > 0.0, "prior {prior_seed}: margin {}", result.margin);
        assert!(result.is_identifiable());
    }
}

#[test]
fn scaled_permutation_has_flat_spectrum() {
    let w = routing_weights(&[2, 0, 3, 1], 4, 5.0);
    for s in singular_values(&w).unwrap() {
        assert!((s - 5.0).abs() < 1e-12);
    }
    assert!((rank1_score(&w).unwrap() - 1.0).abs() < 1e-12);
}

fn matrix_strategy() -> impl Strategy<Value = Matrix> {
    proptest::collection::vec(-10.0f64..10.0, 16)
        .prop_map(|v| Matrix::from_row_major(4, 4, v).unwrap())
}

proptest! {
    #[test]
    fn squared_singular_values_sum_to_frobenius(m in matrix_strategy()) {
        let s = singular_values(&m).unwrap();
        let sum_sq: f64 = s.iter().map(|v| v * v).sum();
        let fro = m.frobenius_norm().powi(2);
        prop_assert!((sum_sq - fro).abs() <= 1e-9 * fro.max(1.0));
        prop_assert!(s.windows(2).all(|w| w[0] >= w[1]));
        prop_assert!(s.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn singular_values_ignore_row_and_column_order(
        m in matrix_strategy(),
        rows in Just(vec![0usize, 1, 2, 3]).prop_shuffle(),
        cols in Just(vec![0usize, 1, 2, 3]).prop_shuffle(),
    ) {
        let permuted = Matrix::from_fn(4, 4, |i, j| m[(rows[i], cols[j])]);
        let a = singular_values(&m).unwrap();
        let b = singular_values(&permuted).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-10, "{:?} vs {:?}", a, b);
        }
    }

    #[test]
    fn outer_products_score_zero(
        a in proptest::collection::vec(-5.0f64..5.0, 4),
        b in proptest::collection::vec(-5.0f64..5.0, 4),
    ) {
        prop_assume!(a.iter().any(|v| v.abs() > 0.1) && b.iter().any(|v| v.abs() > 0.1));
        let m = Matrix::from_fn(4, 4, |i, j| a[i] * b[j]);
        prop_assert!(rank1_score(&m).unwrap() < 1e-10);
    }
}
