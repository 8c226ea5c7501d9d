mod common;

use common::{conjugate, model, permute_rows, random_config, random_connected_graph, random_permutation, rng};
use gtspectra::{forward, Mode, SanConfig};
use proptest::prelude::*;
use rand::Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn attention_rows_are_stochastic(seed in any::<u64>(), class_token in any::<bool>()) {
        let mut r = rng(seed);
        let n = r.random_range(1..=12);
        let g = random_connected_graph(&mut r, n);
        let cfg = random_config(&mut r, class_token);
        let trace = forward(&g, &model(&cfg), &cfg).unwrap();
        for layer in &trace.attention {
            for a in layer {
                prop_assert!(a.iter().all(|&v| v >= 0.0));
                for row in a.rows() {
                    prop_assert!((row.sum() - 1.0).abs() <= 1e-9);
                }
            }
        }
    }

    #[test]
    fn relabeling_is_equivariant(seed in any::<u64>()) {
        let mut r = rng(seed);
        let g = random_connected_graph(&mut r, 6);
        let perm = random_permutation(&mut r, 6);
        let cfg = random_config(&mut r, false);
        let w = model(&cfg);
        let a = forward(&g, &w, &cfg).unwrap();
        let b = forward(&g.permuted(&perm).unwrap(), &w, &cfg).unwrap();
        for (xa, xb) in a.states.iter().zip(&b.states) {
            let moved = permute_rows(xa, &perm);
            for (u, v) in moved.iter().zip(xb.iter()) {
                prop_assert!((u - v).abs() <= 1e-10, "{u} vs {v}");
            }
        }
        for (la, lb) in a.attention.iter().zip(&b.attention) {
            for (ha, hb) in la.iter().zip(lb) {
                let moved = conjugate(ha, &perm);
                for (u, v) in moved.iter().zip(hb.iter()) {
                    prop_assert!((u - v).abs() <= 1e-10);
                }
            }
        }
    }

    #[test]
    fn proxy_output_is_product_of_skip_attention(seed in any::<u64>(), class_token in any::<bool>()) {
        let mut r = rng(seed);
        let n = r.random_range(1..=10);
        let g = random_connected_graph(&mut r, n);
        let cfg = SanConfig { mode: Mode::Proxy, ..random_config(&mut r, class_token) };
        let trace = forward(&g, &model(&cfg), &cfg).unwrap();
        let tokens = trace.tokens();
        let eye = ndarray::Array2::<f64>::eye(tokens);
        let mut x = trace.input().clone();
        for l in 1..=trace.layers() {
            x = (&eye + &trace.head_mean(l)).dot(&x);
        }
        for (u, v) in x.iter().zip(trace.output().iter()) {
            prop_assert!((u - v).abs() <= 1e-10, "{u} vs {v}");
        }
    }

    #[test]
    fn forward_is_deterministic(seed in any::<u64>()) {
        let mut r = rng(seed);
        let g = random_connected_graph(&mut r, 7);
        let class_token = r.random_bool(0.5);
        let cfg = random_config(&mut r, class_token);
        let w = model(&cfg);
        prop_assert_eq!(forward(&g, &w, &cfg).unwrap(), forward(&g, &w, &cfg).unwrap());
        prop_assert_eq!(model(&cfg), w);
    }
}
