mod common;

use common::{finite_difference_error, random_graph, rng};
use eventsift_core::bgnn::{balanced_class_weights, Architecture, ModelConfig, ModelParams};
use eventsift_core::ClassIndex;
use ndarray::Array2;
use proptest::prelude::*;
use rand::Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn analytic_matches_central_difference(seed in any::<u64>(), n in 3usize..=20, sage in any::<bool>()) {
        let mut r = rng(seed);
        let d = r.random_range(2..=6);
        let graph = random_graph(&mut r, n, 4);
        let features = Array2::from_shape_simple_fn((n, d), || r.random_range(-1.0..1.0));
        let config = ModelConfig {
            hidden1: r.random_range(2..=6),
            hidden2: r.random_range(2..=6),
            dropout_p: 0.5,
            architecture: if sage { Architecture::Sage } else { Architecture::Mlp },
        };
        let params = ModelParams::<f64>::init(&config, d, seed);
        let mut labeled: Vec<(usize, ClassIndex)> = Vec::new();
        for i in 0..n {
            if r.random_bool(0.6) {
                labeled.push((i, ClassIndex(r.random_range(0..3))));
            }
        }
        prop_assume!(!labeled.is_empty());
        let weights = balanced_class_weights(&labeled);
        let err = finite_difference_error(&params, &graph, &features, &labeled, &weights);
        prop_assert!(err < 1e-4, "relative error {err}");
    }
}
