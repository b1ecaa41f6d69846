use proptest::prelude::*;

use regiostat::autocorr::{global_moran, local_moran};
use regiostat::growth::{cobb_douglas_eval, simple_ols};
use regiostat::panel::z_scores;
use regiostat::pls::{fit_pls, FitConfig, PlsData};
use regiostat::stats::{pearson, quantile_type7_sorted, sorted};
use regiostat::weights::{connectivity_summary, load_gal, save_gal, GalHeader};
use regiostat::{synthetic, CobbDouglasMode};

fn spread(v: &[f64]) -> bool {
    let (lo, hi) = v.iter().fold((f64::MAX, f64::MIN), |(a, b), x| (a.min(*x), b.max(*x)));
    hi - lo > 1e-3
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn z_scores_have_zero_mean_unit_sd(v in prop::collection::vec(-1e4f64..1e4, 3..60)) {
        prop_assume!(spread(&v));
        let z = z_scores(&v).unwrap();
        let n = z.len() as f64;
        let m = z.iter().sum::<f64>() / n;
        let var = z.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
        prop_assert!(m.abs() < 1e-9);
        prop_assert!((var - 1.0).abs() < 1e-9);
    }

    #[test]
    fn z_scores_ignore_affine_rescaling(v in prop::collection::vec(-100f64..100.0, 3..40), a in 0.01f64..50.0, b in -1e3f64..1e3) {
        prop_assume!(spread(&v));
        let w: Vec<f64> = v.iter().map(|x| a * x + b).collect();
        for (p, q) in z_scores(&v).unwrap().iter().zip(z_scores(&w).unwrap()) {
            prop_assert!((p - q).abs() < 1e-7);
        }
    }

    #[test]
    fn type7_quantile_stays_in_range(v in prop::collection::vec(-1e3f64..1e3, 1..50), p in 0.0f64..=1.0) {
        let s = sorted(&v);
        let q = quantile_type7_sorted(&s, p);
        prop_assert!(q >= s[0] && q <= s[s.len() - 1]);
    }

    #[test]
    fn pct_nonzero_is_mean_over_n(rows in 1usize..15, cols in 2usize..15, queen: bool) {
        let s = connectivity_summary(&synthetic::grid_weights(rows, cols, queen));
        prop_assert!((s.pct_nonzero / 100.0 - s.mean_neighbors / s.n_regions as f64).abs() < 1e-12);
        prop_assert!(s.min_neighbors as f64 <= s.mean_neighbors && s.mean_neighbors <= s.max_neighbors as f64);
    }

    #[test]
    fn local_moran_sums_to_n_times_global(rows in 2usize..9, cols in 2usize..9, queen: bool, seed in 0u64..10_000) {
        let w = synthetic::grid_weights(rows, cols, queen);
        let v = synthetic::normal_vector(rows * cols, seed, 0);
        let g = global_moran(&v, &w).unwrap();
        let sum: f64 = local_moran(&v, &w).unwrap().iter().flatten().sum();
        prop_assert!((sum - g.n_used as f64 * g.i).abs() < 1e-10);
    }

    #[test]
    fn moran_ignores_affine_rescaling(rows in 2usize..8, cols in 2usize..8, seed in 0u64..10_000, a in 0.1f64..10.0, b in -50f64..50.0) {
        let w = synthetic::grid_weights(rows, cols, true);
        let v = synthetic::normal_vector(rows * cols, seed, 0);
        let u: Vec<f64> = v.iter().map(|x| a * x + b).collect();
        prop_assert!((global_moran(&v, &w).unwrap().i - global_moran(&u, &w).unwrap().i).abs() < 1e-10);
    }

    #[test]
    fn gal_round_trip_is_byte_exact(rows in 1usize..8, cols in 2usize..8, queen: bool) {
        let w = synthetic::grid_weights(rows, cols, queen);
        let header = GalHeader { layer: Some("grid".into()), id_variable: Some("code".into()) };
        let mut first = Vec::new();
        save_gal(&w, &header, &mut first).unwrap();
        let (back, h) = load_gal(first.as_slice()).unwrap();
        prop_assert_eq!(&h, &header);
        prop_assert_eq!(&back, &w);
        let mut second = Vec::new();
        save_gal(&back, &h, &mut second).unwrap();
        prop_assert_eq!(first, second);
    }

    #[test]
    fn ols_r_squared_is_squared_correlation(seed in 0u64..10_000, n in 3usize..80, slope in -5f64..5.0) {
        let x = synthetic::normal_vector(n, seed, 0);
        let e = synthetic::normal_vector(n, seed, 1);
        let y: Vec<f64> = x.iter().zip(&e).map(|(a, b)| slope * a + b).collect();
        let fit = simple_ols(&x, &y).unwrap();
        let r = pearson(&x, &y);
        prop_assert!((fit.r_squared - r * r).abs() < 1e-12);
        prop_assert!(fit.slope.signum() == r.signum());
        prop_assert!((0.0..=1.0).contains(&fit.p_value));
    }

    #[test]
    fn canonical_cobb_douglas_is_homogeneous(a in 0.01f64..1e3, k in 0.01f64..1e3, alpha in 0.0f64..=1.0, t in 0.01f64..100.0) {
        let base = cobb_douglas_eval(&[a], &[k], alpha, CobbDouglasMode::Canonical).unwrap()[0];
        let scaled = cobb_douglas_eval(&[t * a], &[t * k], alpha, CobbDouglasMode::Canonical).unwrap()[0];
        prop_assert!((scaled / (t * base) - 1.0).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn pls_paths_ignore_indicator_units(seed in 0u64..1_000, scales in prop::collection::vec(0.01f64..100.0, 6), shifts in prop::collection::vec(-100f64..100.0, 6)) {
        let (model, data) = synthetic::two_construct(150, &[0.9, 0.8, 0.7], 0.5, seed);
        let mut x = data.matrix().clone();
        for (j, mut col) in x.column_iter_mut().enumerate() {
            col.apply(|v| *v = scales[j] * *v + shifts[j]);
        }
        let rescaled = PlsData::new(data.names().to_vec(), x).unwrap();
        let cfg = FitConfig::default();
        let a = fit_pls(&model, &data, &cfg).unwrap().beta("X", "Y").unwrap();
        let b = fit_pls(&model, &rescaled, &cfg).unwrap().beta("X", "Y").unwrap();
        prop_assert!((a - b).abs() < 1e-6, "{} vs {}", a, b);
    }
}
