//! Property tests for the invariants the library promises.

use proptest::prelude::*;

use prunecrit::applicability::{gamma_ratio, var_r};
use prunecrit::criteria::{
    bottom_k_indices, fermat_score, gm_score, histogram_entropy, nonzero_fraction, norm_score, Criterion, ScoreVector,
};
use prunecrit::cwda_tests::correlation_matrix;
use prunecrit::geometric_median::GmOptions;
use prunecrit::global_sim::{classify_pair, prune_mask_from_scores, PruneMode};
use prunecrit::similarity::{normalized_ratio_variance, sp_matrix, spearman};
use prunecrit::stats::{one_sided_t_test, NullSide};
use prunecrit::synth::centroid_identity_residual;
use prunecrit::tensor_store::{from_bytes, to_bytes, DenseTensor, LayerRecord, NetworkDump, TensorRole};

fn config() -> ProptestConfig {
    ProptestConfig::with_cases(64)
}

fn layer_from(n_out: usize, n_in: usize, values: &[f32]) -> LayerRecord {
    let t = DenseTensor::new(vec![n_out, n_in, 1, 1], values.to_vec()).unwrap();
    LayerRecord::new("c", t).unwrap()
}

/// Filters whose entries are multiples of 1/8 in [-4, 4]: sums and
/// power-of-two scalings stay exact in f32.
fn dyadic_layer() -> impl Strategy<Value = (usize, usize, Vec<f32>)> {
    (3usize..12, 1usize..8).prop_flat_map(|(n, d)| {
        prop::collection::vec((-32i32..=32).prop_map(|v| v as f32 / 8.0), n * d).prop_map(move |v| (n, d, v))
    })
}

fn distinct(v: &[f64]) -> bool {
    v.iter().any(|&a| a != v[0])
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn positive_scaling_keeps_the_pruned_set((n, d, v) in dyadic_layer(), shift in -3i32..=3) {
        let c = 2f32.powi(shift);
        let base = layer_from(n, d, &v);
        let scaled = layer_from(n, d, &v.iter().map(|x| x * c).collect::<Vec<_>>());
        let opts = GmOptions { rel_tol: 1e-12, max_iter: 100_000 };
        let pairs = [
            (norm_score(&base, 1).unwrap(), norm_score(&scaled, 1).unwrap()),
            (norm_score(&base, 2).unwrap(), norm_score(&scaled, 2).unwrap()),
            (gm_score(&base).unwrap(), gm_score(&scaled).unwrap()),
            (fermat_score(&base, opts).unwrap(), fermat_score(&scaled, opts).unwrap()),
        ];
        for (i, (a, b)) in pairs.iter().enumerate() {
            for (x, y) in a.scores.iter().zip(&b.scores) {
                prop_assert!((y - c as f64 * x).abs() <= 1e-9 * (c as f64 * x).abs().max(1e-12));
            }
            if i < 3 {
                // Norms and distance sums scale exactly by a power of two.
                for k in 0..=n {
                    prop_assert_eq!(bottom_k_indices(&a.scores, k).unwrap(), bottom_k_indices(&b.scores, k).unwrap());
                }
            }
        }
    }

    #[test]
    fn distance_scores_ignore_translation((n, d, v) in dyadic_layer(), t in prop::collection::vec(-16i32..=16, 8)) {
        let shift: Vec<f32> = (0..d).map(|p| t[p] as f32 / 4.0).collect();
        let moved: Vec<f32> = v.iter().enumerate().map(|(i, x)| x + shift[i % d]).collect();
        let (a, b) = (layer_from(n, d, &v), layer_from(n, d, &moved));
        prop_assert_eq!(gm_score(&a).unwrap().scores, gm_score(&b).unwrap().scores);
        let opts = GmOptions { rel_tol: 1e-12, max_iter: 100_000 };
        let (fa, fb) = (fermat_score(&a, opts).unwrap(), fermat_score(&b, opts).unwrap());
        let scale = fa.scores.iter().copied().fold(0.0, f64::max).max(1e-12);
        for (x, y) in fa.scores.iter().zip(&fb.scores) {
            prop_assert!((x - y).abs() <= 1e-9 * scale);
        }
    }

    #[test]
    fn l2_squared_is_sum_of_squares(v in prop::collection::vec(-100.0f32..100.0, 1..300)) {
        let layer = layer_from(1, v.len(), &v);
        let l2 = norm_score(&layer, 2).unwrap().scores[0];
        let ss: f64 = v.iter().map(|&x| (x as f64) * (x as f64)).sum();
        prop_assert!((l2 * l2 - ss).abs() <= 1e-12 * ss.max(f64::MIN_POSITIVE));
    }

    #[test]
    fn entropy_and_nonzero_fraction_ranges(v in prop::collection::vec(-5.0f64..5.0, 2..200), bins in 2usize..150) {
        let h = histogram_entropy(&v, bins);
        prop_assert!(h >= 0.0 && h <= (bins as f64).ln() + 1e-12);
        let f = nonzero_fraction(&v, 1, 0.5).unwrap()[0];
        prop_assert!((0.0..=1.0).contains(&f));
    }

    #[test]
    fn spearman_symmetric_bounded_and_monotone_invariant(
        xy in prop::collection::vec((-50.0f64..50.0, -50.0f64..50.0), 3..80)
    ) {
        let x: Vec<f64> = xy.iter().map(|p| p.0).collect();
        let y: Vec<f64> = xy.iter().map(|p| p.1).collect();
        prop_assume!(distinct(&x) && distinct(&y));
        let s = spearman(&x, &y).unwrap();
        prop_assert!((-1.0..=1.0).contains(&s));
        prop_assert_eq!(s, spearman(&y, &x).unwrap());
        // Strictly increasing maps keep the ranks.
        let fx: Vec<f64> = x.iter().map(|v| v * v * v + 3.0 * v).collect();
        let gx: Vec<f64> = x.iter().map(|v| (v / 10.0).exp()).collect();
        prop_assert_eq!(spearman(&fx, &y).unwrap(), s);
        prop_assert_eq!(spearman(&gx, &y).unwrap(), s);
    }

    #[test]
    fn sp_matrix_is_symmetric_with_unit_diagonal(rows in prop::collection::vec(prop::collection::vec(-9.0f64..9.0, 12), 1..5)) {
        prop_assume!(rows.iter().all(|r| distinct(r)));
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let m = sp_matrix(&refs).unwrap();
        for i in 0..m.len() {
            prop_assert_eq!(m[i][i], 1.0);
            for j in 0..m.len() {
                prop_assert_eq!(m[i][j], m[j][i]);
            }
        }
    }

    #[test]
    fn ratio_variance_ignores_rescaling(
        xy in prop::collection::vec((0.01f64..100.0, 0.01f64..100.0), 2..100),
        a in 1e-3f64..1e3,
        b in 1e-3f64..1e3,
    ) {
        let x: Vec<f64> = xy.iter().map(|p| p.0).collect();
        let y: Vec<f64> = xy.iter().map(|p| p.1).collect();
        let (p, q) = normalized_ratio_variance(&x, &y).unwrap();
        let xs: Vec<f64> = x.iter().map(|v| a * v).collect();
        let ys: Vec<f64> = y.iter().map(|v| b * v).collect();
        let (ps, qs) = normalized_ratio_variance(&xs, &ys).unwrap();
        prop_assert!((p - ps).abs() <= 1e-12 * p.max(1e-300) + 1e-300);
        prop_assert!((q - qs).abs() <= 1e-12 * q.max(1e-300) + 1e-300);
    }

    #[test]
    fn var_r_scales_linearly(v in prop::collection::vec(0.1f64..10.0, 2..50), c in 0.01f64..100.0) {
        let base = var_r(&v).unwrap();
        let scaled = var_r(&v.iter().map(|x| c * x).collect::<Vec<_>>()).unwrap();
        prop_assert!(base >= 0.0);
        prop_assert!((scaled - c * base).abs() <= 1e-12 * (c * base).max(1e-300) + 1e-300);
    }

    #[test]
    fn gamma_ratio_monotone_and_bounded(d in 0.5f64..5000.0) {
        let (g, g_next) = (gamma_ratio(d), gamma_ratio(d + 0.5));
        prop_assert!(g_next > g);
        let q = g * g / d;
        prop_assert!(q > 0.0 && q <= 0.5);
    }

    #[test]
    fn classify_pair_is_scale_invariant(
        d_a in 1usize..3000,
        d_b in 1usize..3000,
        sa in 1e-4f64..1.0,
        sb in 1e-4f64..1.0,
        c in 1e-3f64..1e3,
    ) {
        let band = 0.15;
        let r = sa / sb;
        let dr = d_b as f64 / d_a as f64;
        // Stay off the band edge, where the last bit of σ_A/σ_B decides.
        for target in [dr, dr.sqrt()] {
            prop_assume!(((r / target - 1.0).abs() - band).abs() > 1e-9);
        }
        prop_assert_eq!(
            classify_pair(d_a, d_b, sa, sb, band).unwrap(),
            classify_pair(d_a, d_b, c * sa, c * sb, band).unwrap()
        );
    }

    #[test]
    fn prune_mask_invariants(
        layers in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 1..40), 1..6),
        ratio in 0.01f64..0.99,
        min_keep in 1usize..5,
        global in any::<bool>(),
    ) {
        let scores: Vec<ScoreVector> = layers
            .iter()
            .enumerate()
            .map(|(i, s)| ScoreVector { layer: format!("l{i}"), criterion: Criterion::L1, scores: s.clone() })
            .collect();
        let mode = if global { PruneMode::Global } else { PruneMode::Layerwise };
        let mask = prune_mask_from_scores(&scores, mode, ratio, min_keep).unwrap();
        let total: usize = layers.iter().map(Vec::len).sum();
        for (l, m) in layers.iter().zip(&mask.layers) {
            let n = l.len();
            prop_assert_eq!(m.n_out, n);
            prop_assert!(m.pruned.windows(2).all(|w| w[0] < w[1]));
            prop_assert!(m.pruned.iter().all(|&j| j < n));
            prop_assert!(n - m.pruned.len() >= min_keep.min(n));
            if !global {
                let k = ((ratio * n as f64).floor() as usize).min(n.saturating_sub(min_keep));
                prop_assert_eq!(m.pruned.len(), k);
            }
        }
        prop_assert!(mask.total_pruned() <= (ratio * total as f64).floor() as usize);
    }

    #[test]
    fn global_mask_prunes_exact_count_for_large_layers(
        layers in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 40..60), 2..4),
        ratio in 0.05f64..0.5,
    ) {
        let scores: Vec<ScoreVector> = layers
            .iter()
            .enumerate()
            .map(|(i, s)| ScoreVector { layer: format!("l{i}"), criterion: Criterion::L2, scores: s.clone() })
            .collect();
        let total: usize = layers.iter().map(Vec::len).sum();
        let mask = prune_mask_from_scores(&scores, PruneMode::Global, ratio, 1).unwrap();
        prop_assert_eq!(mask.total_pruned(), (ratio * total as f64).floor() as usize);
    }

    #[test]
    fn correlation_matrix_symmetric_unit_diagonal((n, d, v) in dyadic_layer()) {
        let layer = layer_from(n, d, &v);
        let c = correlation_matrix(&layer).unwrap();
        for p in 0..d {
            prop_assert_eq!(c.get(p, p), 1.0);
            for q in 0..d {
                prop_assert_eq!(c.get(p, q), c.get(q, p));
                prop_assert!((-1.0..=1.0).contains(&c.get(p, q)));
            }
        }
    }

    #[test]
    fn t_test_p_values_in_unit_interval(v in prop::collection::vec(-3.0f64..3.0, 2..40), mu in -2.0f64..2.0) {
        for side in [NullSide::AtMost, NullSide::AtLeast] {
            let t = one_sided_t_test(&v, mu, side).unwrap();
            prop_assert!((0.0..=1.0).contains(&t.p_value));
        }
    }

    #[test]
    fn centroid_identity_holds(
        pts in prop::collection::vec(prop::collection::vec(-100.0f64..100.0, 5), 2..12),
        p in prop::collection::vec(-100.0f64..100.0, 5),
    ) {
        prop_assert!(centroid_identity_residual(&pts, &p) <= 1e-12);
    }

    #[test]
    fn ntd_round_trip_is_bitwise(
        layers in prop::collection::vec((1usize..5, 1usize..4, 1usize..3, any::<bool>()), 0..4),
        seed in any::<u32>(),
    ) {
        let mut state = seed as u64 | 1;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            f32::from_bits(((state >> 40) as u32 & 0x007f_ffff) | 0x3f00_0000) - 0.75
        };
        let records: Vec<LayerRecord> = layers
            .iter()
            .enumerate()
            .map(|(i, &(n, c, k, bn))| {
                let f = DenseTensor::new(vec![n, c, k, k], (0..n * c * k * k).map(|_| next()).collect()).unwrap();
                let mut l = LayerRecord::new(format!("layer{i}"), f).unwrap();
                if bn {
                    let g = DenseTensor::new(vec![n], (0..n).map(|_| next()).collect()).unwrap();
                    l = l.with_tensor(TensorRole::BnGamma, g).unwrap();
                }
                l
            })
            .collect();
        let dump = NetworkDump::new(records).unwrap().with_meta("seed", seed.to_string());
        let bytes = to_bytes(&dump).unwrap();
        let back = from_bytes(&bytes).unwrap();
        for (a, b) in dump.layers.iter().zip(&back.layers) {
            let bits = |t: &DenseTensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            prop_assert_eq!(bits(&a.filters), bits(&b.filters));
        }
        prop_assert_eq!(&back, &dump);
        prop_assert_eq!(to_bytes(&back).unwrap(), bytes);
    }
}
