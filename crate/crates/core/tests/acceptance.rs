//! Acceptance run: one PASS/FAIL line per criterion, each checked against
//! its tolerance and its time budget. Exits non-zero if any criterion fails.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use regiostat::autocorr::{global_moran, local_moran, moran_permutation};
use regiostat::growth::{cobb_douglas_eval, cobb_douglas_fit, simple_ols};
use regiostat::panel::{self, PanelDataset, RegionId};
use regiostat::pls::{
    blindfold_q2, bootstrap_paths, fit_pls, measurement_quality, structural_collinearity, FitConfig,
};
use regiostat::report::{self, PipelineConfig};
use regiostat::weights::{connectivity_summary, queen_contiguity, SpatialWeights};
use regiostat::{synthetic, CobbDouglasMode};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn normals(r: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| r.sample(StandardNormal)).collect()
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let ss: f64 = v.iter().map(|x| (x - m) * (x - m)).sum();
    (m, (ss / (n - 1.0)).sqrt())
}

/// 89 values with mean 285 and sd 284 in which one region holds 896.
fn tic_like_sample() -> Vec<f64> {
    let mut base = normals(&mut rng(6), 88);
    let target = (896.0 - 285.0) / 284.0;
    let z_of = |t: f64, base: &[f64]| {
        let mut all = base.to_vec();
        all.push(t);
        let (m, s) = mean_sd(&all);
        (t - m) / s
    };
    let (mut lo, mut hi) = (0.0, 1e3);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if z_of(mid, &base) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    base.push(0.5 * (lo + hi));
    let (m, s) = mean_sd(&base);
    base.iter().map(|v| 285.0 + 284.0 * (v - m) / s).collect()
}

fn standardization() -> Outcome {
    let values = tic_like_sample();
    let regions = (0..values.len())
        .map(|i| RegionId {
            code: format!("R{i:02}"),
            name: format!("Municipio {i}"),
            microregion: "MR".into(),
            capital: i == 0,
        })
        .collect();
    let mut ds = PanelDataset::new(regions, vec!["TIC".into()], vec![2009]).unwrap();
    for (r, v) in values.iter().enumerate() {
        ds.set(r, 0, 0, Some(*v));
    }
    let stats = panel::describe(&ds, "TIC", 2009).unwrap();
    let z = panel::standardize(&ds).unwrap();
    let r = values.len() - 1;
    let zr = z.get(r, 0, 0).unwrap();
    let pass = (stats.mean - 285.0).abs() < 1e-9
        && (stats.sd - 284.0).abs() < 1e-9
        && (values[r] - 896.0).abs() < 1e-6
        && (zr - 2.149).abs() <= 0.02;
    outcome(
        pass,
        format!("mean {:.3}, sd {:.3}, raw {:.3} -> z {zr:.4} (target 2.149 +/- 0.02)", stats.mean, stats.sd, values[r]),
    )
}

/// Random symmetric weights: a ring (so nobody is isolated) plus extra links.
fn random_symmetric(n: usize, links: usize, seed: u64) -> SpatialWeights {
    let mut adj = vec![Vec::new(); n];
    let add = |a: usize, b: usize, adj: &mut Vec<Vec<usize>>| {
        if a != b && !adj[a].contains(&b) {
            adj[a].push(b);
            adj[b].push(a);
            true
        } else {
            false
        }
    };
    let mut pairs = 0;
    for i in 0..n {
        if add(i, (i + 1) % n, &mut adj) {
            pairs += 1;
        }
    }
    let mut r = rng(seed);
    while pairs < links {
        let (a, b) = (r.random_range(0..n), r.random_range(0..n));
        if add(a, b, &mut adj) {
            pairs += 1;
        }
    }
    let ids = (0..n).map(|i| format!("R{i:03}")).collect();
    SpatialWeights::from_adjacency(ids, adj).unwrap()
}

fn connectivity() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut r = rng(2);
    for k in 0..50 {
        let w = if k % 2 == 0 {
            synthetic::grid_weights(r.random_range(1..12), r.random_range(2..12), k % 4 == 0)
        } else {
            let n = r.random_range(5..120);
            random_symmetric(n, (n + r.random_range(0..3 * n)).min(n * (n - 1) / 2), k)
        };
        let s = connectivity_summary(&w);
        worst = worst.max((s.pct_nonzero / 100.0 - s.mean_neighbors / s.n_regions as f64).abs());
    }
    // 89 municipalities with 470 directed links average 5.28 neighbors
    let table = connectivity_summary(&random_symmetric(89, 235, 34));
    let table_ok = format!("{:.2}", table.mean_neighbors) == "5.28" && format!("{:.2}", table.pct_nonzero) == "5.93";
    let g2 = connectivity_summary(&queen_contiguity(&synthetic::grid_geometry(2, 2)).unwrap());
    let g3 = connectivity_summary(&queen_contiguity(&synthetic::grid_geometry(3, 3)).unwrap());
    let grids_ok = (g2.min_neighbors, g2.max_neighbors) == (3, 3)
        && (g3.min_neighbors, g3.max_neighbors, g3.median_neighbors) == (3, 8, 5.0)
        && (g3.mean_neighbors - 40.0 / 9.0).abs() < 1e-12;
    outcome(
        worst < 1e-9 && table_ok && grids_ok,
        format!(
            "max |pct - mean/n| = {worst:.1e}; 89 regions: mean {:.2}, {:.2}% nonzero; grid oracles {}; municipal polygons not bundled",
            table.mean_neighbors,
            table.pct_nonzero,
            if grids_ok { "ok" } else { "MISMATCH" }
        ),
    )
}

fn lisa_decomposition() -> Outcome {
    let mut r = rng(3);
    let mut worst: f64 = 0.0;
    for k in 0..100 {
        let (rows, cols) = loop {
            let (a, b) = (r.random_range(2..=10), r.random_range(2..=50));
            if (10..=100).contains(&(a * b)) {
                break (a, b);
            }
        };
        let w = synthetic::grid_weights(rows, cols, r.random_bool(0.5));
        let values = synthetic::normal_vector(rows * cols, 1000 + k, 0);
        let g = global_moran(&values, &w).unwrap();
        let sum: f64 = local_moran(&values, &w).unwrap().iter().flatten().sum();
        worst = worst.max((sum - g.n_used as f64 * g.i).abs());
    }
    outcome(worst < 1e-10, format!("max |sum I_i - n I| = {worst:.2e} over 100 lattices"))
}

fn permutation_calibration() -> Outcome {
    let w = synthetic::grid_weights(6, 6, true);
    let trials = 500;
    let hits = (0..trials)
        .filter(|&t| {
            let values = synthetic::normal_vector(36, 5000 + t, 0);
            moran_permutation(&values, &w, 999, t).unwrap().pseudo_p.unwrap() <= 0.05
        })
        .count();
    let rate = hits as f64 / trials as f64;
    outcome(
        (rate - 0.05).abs() <= 0.02,
        format!("{hits}/{trials} trials with p <= .05 (rate {rate:.3}, target 0.05 +/- 0.02)"),
    )
}

fn pls_recovery() -> Outcome {
    let cfg = FitConfig::default();
    let betas: Vec<f64> = (0..50)
        .map(|seed| {
            let (model, data) = synthetic::two_construct(500, &[0.9, 0.8, 0.7], 0.6, seed);
            fit_pls(&model, &data, &cfg).unwrap().beta("X", "Y").unwrap()
        })
        .collect();
    let within = betas.iter().filter(|b| (*b - 0.6).abs() <= 0.05).count();
    let mean_beta = betas.iter().sum::<f64>() / betas.len() as f64;

    let (model, data) = synthetic::single_indicator_chain(300, 0.7, 8);
    let est = fit_pls(&model, &data, &cfg).unwrap();
    let x = data.matrix();
    let a: Vec<f64> = x.column(0).iter().copied().collect();
    let b: Vec<f64> = x.column(1).iter().copied().collect();
    let r = pearson(&a, &b);
    let beta_err = (est.beta("A", "B").unwrap() - r).abs();
    let q = measurement_quality(&est, &data).unwrap();
    let ones = q
        .constructs
        .iter()
        .all(|c| format!("{:.3}{:.3}{:.3}", c.cronbach_alpha, c.composite_reliability, c.ave) == "1.0001.0001.000");
    let vif_one = structural_collinearity(&model, &est).iter().all(|v| v.vif == Some(1.0));
    outcome(
        within * 10 >= 50 * 9 && beta_err < 1e-10 && ones && vif_one,
        format!(
            "{within}/50 seeds within 0.6 +/- 0.05 (mean beta {mean_beta:.4}); single-indicator |beta - r| = {beta_err:.1e}, alpha=CR=AVE=1.000 {ones}, VIF=1.000 {vif_one}"
        ),
    )
}

fn bootstrap_calibration() -> Outcome {
    let cfg = FitConfig::default();
    let trials = 200u64;
    let hits = (0..trials)
        .filter(|&t| {
            let (model, data) = synthetic::two_construct(200, &[0.9, 0.8, 0.7], 0.0, 7000 + t);
            let est = fit_pls(&model, &data, &cfg).unwrap();
            let boot = bootstrap_paths(&model, &data, &est, 1000, t, &cfg).unwrap();
            boot.edges[0].t.abs() > 1.96
        })
        .count();
    let rate = hits as f64 / trials as f64;
    outcome(
        (rate - 0.05).abs() <= 0.03,
        format!("{hits}/{trials} trials with |t| > 1.96 (rate {rate:.3}, target 0.05 +/- 0.03)"),
    )
}

fn blindfolding_sign() -> Outcome {
    let cfg = FitConfig::default();
    let q2 = |beta: f64, seed: u64| {
        let (model, data) = synthetic::two_construct(199, &[0.9, 0.8, 0.7], beta, seed);
        blindfold_q2(&model, &data, 7, &cfg).unwrap()[0].q2
    };
    let predictive: Vec<f64> = (0..20).map(|s| q2(0.6, 100 + s)).collect();
    let null: Vec<f64> = (0..20).map(|s| q2(0.0, 200 + s)).collect();
    let pos = predictive.iter().filter(|q| **q > 0.0).count();
    let nonpos = null.iter().filter(|q| **q <= 0.0).count();
    let max_null = null.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min_pred = predictive.iter().copied().fold(f64::INFINITY, f64::min);
    outcome(
        pos == 20 && nonpos == 20,
        format!("beta 0.6: {pos}/20 with Q2 > 0 (min {min_pred:.4}); beta 0: {nonpos}/20 with Q2 <= 0 (max {max_null:.4})"),
    )
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    sxy / (sxx * syy).sqrt()
}

fn ols_oracle() -> Outcome {
    let x = [1.0, 2.0, 3.0, 4.0, 5.0];
    let y = [2.1, 3.8, 6.05, 8.15, 9.9];
    let fit = simple_ols(&x, &y).unwrap();
    // sxx = 10, sxy = 19.95, syy = 39.885 by hand
    let slope = 1.995;
    let r2 = 19.95 * 19.95 / (10.0 * 39.885);
    let se = ((39.885 - slope * 19.95) / 3.0 / 10.0_f64).sqrt();
    let t = slope / se;
    // Student t with 3 df: F(t) = 1/2 + (u/(1+u^2) + atan u)/pi, u = t/sqrt(3)
    let u = t / 3f64.sqrt();
    let p = 2.0 * (0.5 - (u / (1.0 + u * u) + u.atan()) / std::f64::consts::PI);
    let hand_err = [
        (fit.slope - slope).abs(),
        (fit.intercept - 0.015).abs(),
        (fit.r_squared - r2).abs(),
        (fit.p_value - p).abs(),
    ]
    .into_iter()
    .fold(0.0, f64::max);
    let mut r = rng(8);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let n = r.random_range(3..200);
        let xs = normals(&mut r, n);
        let slope = r.random_range(-3.0..3.0);
        let ys: Vec<f64> = xs.iter().map(|v| slope * v + r.sample::<f64, _>(StandardNormal)).collect();
        let f = simple_ols(&xs, &ys).unwrap();
        worst = worst.max((f.r_squared - pearson(&xs, &ys).powi(2)).abs());
    }
    outcome(
        hand_err < 1e-10 && worst < 1e-12,
        format!("5-point oracle max error {hand_err:.1e} (p = {p:.3e}); max |R2 - r2| = {worst:.1e} over 100 samples"),
    )
}

fn cobb_douglas() -> Outcome {
    let mut r = rng(9);
    let n = 200;
    let a: Vec<f64> = (0..n).map(|_| r.random_range(0.1..50.0)).collect();
    let k: Vec<f64> = (0..n).map(|_| r.random_range(0.1..50.0)).collect();
    let mut worst_hom: f64 = 0.0;
    let mut worst_log: f64 = 0.0;
    for &alpha in &[0.0, 0.25, 0.5, 0.8, 1.0] {
        let y = cobb_douglas_eval(&a, &k, alpha, CobbDouglasMode::Canonical).unwrap();
        for &s in &[0.5, 2.0, 7.5] {
            let sa: Vec<f64> = a.iter().map(|v| v * s).collect();
            let sk: Vec<f64> = k.iter().map(|v| v * s).collect();
            let ys = cobb_douglas_eval(&sa, &sk, alpha, CobbDouglasMode::Canonical).unwrap();
            for (u, v) in ys.iter().zip(&y) {
                worst_hom = worst_hom.max((u / (s * v) - 1.0).abs());
            }
        }
        for i in 0..n {
            let expect = alpha * k[i].ln() + (1.0 - alpha) * a[i].ln();
            worst_log = worst_log.max((y[i].ln() - expect).abs());
        }
    }
    let y: Vec<f64> = cobb_douglas_eval(&a, &k, 0.37, CobbDouglasMode::Canonical)
        .unwrap()
        .iter()
        .map(|v| 3.2 * v)
        .collect();
    let fit = cobb_douglas_fit(&y, &a, &k).unwrap();
    let alpha_err = (fit.alpha - 0.37).abs();
    outcome(
        worst_hom < 1e-12 && worst_log < 1e-12 && alpha_err < 1e-8,
        format!("homogeneity {worst_hom:.1e}, log-linearity {worst_log:.1e}, alpha error {alpha_err:.1e}"),
    )
}

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

fn read_tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

fn determinism() -> Outcome {
    let root = tempfile::tempdir().unwrap();
    let run = |threads: usize, tag: &str| {
        let out = root.path().join(tag);
        let cfg = PipelineConfig {
            panel: Some(fixtures().join("panel.csv")),
            geometry: Some(fixtures().join("regions.geojson")),
            model: Some(fixtures().join("model.json")),
            seed: 42,
            out: out.clone(),
            ..PipelineConfig::default()
        };
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            report::cmd_lisa(&PipelineConfig {
                out: out.join("lisa"),
                ..cfg.clone()
            })
            .unwrap();
            report::cmd_plssem(&PipelineConfig {
                out: out.join("plssem"),
                ..cfg.clone()
            })
            .unwrap();
        });
        [read_tree(&out.join("lisa")), read_tree(&out.join("plssem"))]
    };
    let max_threads = std::thread::available_parallelism().map_or(8, |n| n.get()).max(8);
    let serial = run(1, "serial");
    let parallel = run(max_threads, "parallel");
    let again = run(max_threads, "again");
    let files = serial[0].len() + serial[1].len();
    let same = serial == parallel && parallel == again;
    outcome(
        same,
        format!("{files} files byte-identical across 1 thread, {max_threads} threads and a rerun (9999 permutations, 5000 resamples)"),
    )
}

type Check = fn() -> Outcome;

fn main() {
    let criteria: [(&str, u64, Check); 10] = [
        ("standardization cross-check", 1, standardization),
        ("connectivity identity", 5, connectivity),
        ("LISA decomposition", 10, lisa_decomposition),
        ("permutation-null calibration", 60, permutation_calibration),
        ("PLS recovery", 60, pls_recovery),
        ("bootstrap calibration", 300, bootstrap_calibration),
        ("blindfolding sign check", 60, blindfolding_sign),
        ("OLS oracle", 5, ols_oracle),
        ("Cobb-Douglas", 1, cobb_douglas),
        ("determinism", 120, determinism),
    ];
    let mut failed = Vec::new();
    for (k, (name, budget, check)) in criteria.iter().enumerate() {
        let id = k + 1;
        let start = Instant::now();
        let o = check();
        let elapsed = start.elapsed();
        let in_time = elapsed <= Duration::from_secs(*budget);
        let pass = o.pass && in_time;
        println!(
            "{} [{id:>2}] {name}: {} [{:.2}s, budget {budget}s{}]",
            if pass { "PASS" } else { "FAIL" },
            o.detail,
            elapsed.as_secs_f64(),
            if in_time { "" } else { ", over budget" }
        );
        if !pass {
            failed.push(id);
        }
    }
    println!("{}/10 criteria passed", 10 - failed.len());
    if !failed.is_empty() {
        println!("failed: {failed:?}");
        std::process::exit(1);
    }
}
