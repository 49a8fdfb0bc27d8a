//! Oracles for metrics, statistics and probing.

use planlink::analysis::{
    binary_f1, correlation_experiment, f1_score, fit_logistic, logistic_probe, macro_f1, mean_std,
    noise_features, paired_ttest, pearson, student_t_cdf, Confusion, CorrelationPoint, ProbeConfig,
};
use planlink::tensor::Tensor;
use planlink::Error;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// ------------------------------------------------------------------ F1

#[test]
fn f1_formula_examples() {
    assert!((f1_score(2, 1, 1) - 2.0 / 3.0).abs() < 1e-15);
    assert_eq!(f1_score(5, 0, 0), 1.0);
    assert_eq!(f1_score(0, 0, 0), 1.0, "nothing to find, nothing predicted");
    assert_eq!(f1_score(0, 3, 0), 0.0);
    assert_eq!(binary_f1(&[true, false, true], &[false, false, false]).unwrap(), 0.0);
    assert_eq!(binary_f1(&[true, false, true], &[true, false, true]).unwrap(), 1.0);
}

#[test]
fn three_class_macro_f1_matches_hand_computation() {
    // Confusion (rows truth, columns prediction):
    //   [1 1 0]
    //   [0 2 0]
    //   [1 0 2]
    // F1: class 0 = 2/4, class 1 = 4/5, class 2 = 4/5.
    let truth = [0, 0, 1, 1, 2, 2, 2];
    let pred = [0, 1, 1, 1, 2, 0, 2];
    let c = Confusion::from_labels(&truth, &pred, 3).unwrap();
    assert_eq!(c.counts, vec![vec![1, 1, 0], vec![0, 2, 0], vec![1, 0, 2]]);
    assert!((c.macro_f1().unwrap() - (0.5 + 0.8 + 0.8) / 3.0).abs() < 1e-15);
    // A class absent from both truth and prediction is excluded.
    assert!((macro_f1(&truth, &pred, 5).unwrap() - 0.7).abs() < 1e-15);
    assert_eq!(macro_f1(&[0, 1], &[0, 1], 2).unwrap(), 1.0);
    assert!(matches!(macro_f1(&[0, 3], &[0, 1], 3), Err(Error::Schema(_))));
}

#[test]
fn mean_std_is_population() {
    let (m, s) = mean_std(&[1.0, 3.0]);
    assert_eq!((m, s), (2.0, 1.0));
}

proptest! {
    #[test]
    fn macro_f1_is_invariant_under_relabeling(
        pairs in prop::collection::vec((0usize..4, 0usize..4), 1..40),
        perm in Just([0usize, 1, 2, 3]).prop_shuffle(),
    ) {
        let truth: Vec<usize> = pairs.iter().map(|p| p.0).collect();
        let pred: Vec<usize> = pairs.iter().map(|p| p.1).collect();
        let a = macro_f1(&truth, &pred, 4).unwrap();
        let t2: Vec<usize> = truth.iter().map(|&c| perm[c]).collect();
        let p2: Vec<usize> = pred.iter().map(|&c| perm[c]).collect();
        let b = macro_f1(&t2, &p2, 4).unwrap();
        prop_assert!((a - b).abs() < 1e-12);
    }
}

// ----------------------------------------------------- Student-t oracle

/// Gauss–Legendre nodes and weights on [-1, 1] by Newton iteration on P_n.
fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 1..=n {
        let mut x = (std::f64::consts::PI * (i as f64 - 0.25) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    out
}

fn t_pdf(t: f64, df: f64) -> f64 {
    let c = libm::lgamma((df + 1.0) / 2.0) - libm::lgamma(df / 2.0) - 0.5 * (df * std::f64::consts::PI).ln();
    (c - (df + 1.0) / 2.0 * (1.0 + t * t / df).ln()).exp()
}

/// `0.5 + ∫_0^t pdf` by 64-point Gauss–Legendre.
fn t_cdf_oracle(t: f64, df: f64) -> f64 {
    let half = t / 2.0;
    let integral: f64 = gauss_legendre(64)
        .iter()
        .map(|&(x, w)| w * t_pdf(half * (x + 1.0), df))
        .sum::<f64>()
        * half;
    0.5 + integral
}

#[test]
fn student_t_cdf_matches_numerical_integration() {
    for df in [3.0, 5.0, 30.0] {
        for k in 0..=160 {
            let t = -8.0 + 0.1 * k as f64;
            let got = student_t_cdf(t, df).unwrap();
            let want = t_cdf_oracle(t, df);
            assert!((got - want).abs() < 1e-8, "df {df} t {t}: {got} vs {want}");
        }
    }
    assert!(student_t_cdf(1.0, 0.0).is_err());
}

#[test]
fn paired_ttest_textbook_example() {
    // d = {1, 2, 3, 4}: mean 2.5, sd = sqrt(5/3), t = 2.5 / (sd / 2).
    let a = [2.0, 4.0, 6.0, 8.0];
    let b = [1.0, 2.0, 3.0, 4.0];
    let r = paired_ttest(&a, &b).unwrap();
    let t_oracle = 2.5 / ((5.0f64 / 3.0).sqrt() / 2.0);
    let p_oracle = 2.0 * (1.0 - t_cdf_oracle(t_oracle, 3.0));
    assert!((r.t - 3.873).abs() < 1e-3);
    assert!((r.p - 0.0305).abs() < 1e-3);
    assert!((r.t - t_oracle).abs() < 1e-12);
    assert!((r.p - p_oracle).abs() < 1e-8);
    assert_eq!(r.df, 3.0);
    let s = paired_ttest(&b, &a).unwrap();
    assert_eq!(s.t, -r.t);
    assert!((s.p - r.p).abs() < 1e-15);
}

#[test]
fn paired_ttest_degenerate_cases() {
    let r = paired_ttest(&[0.3, 0.5, 0.9], &[0.3, 0.5, 0.9]).unwrap();
    assert_eq!((r.t, r.p), (0.0, 1.0));
    let r = paired_ttest(&[1.0, 2.0, 3.0], &[0.0, 1.0, 2.0]).unwrap();
    assert_eq!((r.t, r.p), (f64::INFINITY, 0.0));
    assert!(matches!(paired_ttest(&[1.0], &[2.0]), Err(Error::Stat(_))));
    assert!(matches!(paired_ttest(&[1.0, 2.0], &[2.0]), Err(Error::Stat(_))));
}

// -------------------------------------------------------------- Pearson

#[test]
fn pearson_exact_lines() {
    let x: Vec<f64> = (0..10).map(f64::from).collect();
    let up: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
    let down: Vec<f64> = x.iter().map(|v| -v).collect();
    let r = pearson(&x, &up).unwrap();
    assert!((r.r - 1.0).abs() < 1e-15 && r.p == 0.0);
    assert!((pearson(&x, &down).unwrap().r + 1.0).abs() < 1e-15);
    assert!(matches!(pearson(&x, &vec![1.0; 10]), Err(Error::Stat(_))));
    assert!(matches!(pearson(&[1.0, 2.0], &[1.0, 2.0]), Err(Error::Stat(_))));
}

#[test]
fn pearson_matches_direct_formula_on_random_points() {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let x: Vec<f64> = (0..20).map(|_| rng.random_range(-3.0..3.0)).collect();
    let y: Vec<f64> = x.iter().map(|v| 0.5 * v + rng.random_range(-2.0..2.0)).collect();
    // One-pass textbook form.
    let n = 20.0;
    let (sx, sy): (f64, f64) = (x.iter().sum(), y.iter().sum());
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
    let sxx: f64 = x.iter().map(|a| a * a).sum();
    let syy: f64 = y.iter().map(|b| b * b).sum();
    let r_oracle = (n * sxy - sx * sy) / ((n * sxx - sx * sx).sqrt() * (n * syy - sy * sy).sqrt());
    let t = r_oracle * ((n - 2.0) / (1.0 - r_oracle * r_oracle)).sqrt();
    let p_oracle = 2.0 * (1.0 - t_cdf_oracle(t.abs(), n - 2.0));
    let got = pearson(&x, &y).unwrap();
    assert!((got.r - r_oracle).abs() < 1e-10);
    assert!((got.p - p_oracle).abs() < 1e-8);
    assert!((0.0..=1.0).contains(&got.p));
}

proptest! {
    #[test]
    fn p_values_lie_in_unit_interval(
        a in prop::collection::vec(-10.0f64..10.0, 3..20),
        noise in prop::collection::vec(-10.0f64..10.0, 20),
    ) {
        let b: Vec<f64> = a.iter().zip(&noise).map(|(x, e)| x + e).collect();
        if let Ok(r) = paired_ttest(&a, &b) {
            prop_assert!((0.0..=1.0).contains(&r.p));
        }
        if let Ok(r) = pearson(&a, &b) {
            prop_assert!((0.0..=1.0).contains(&r.p));
            prop_assert!((-1.0..=1.0).contains(&r.r));
        }
    }
}

// ------------------------------------------------------------- probing

#[test]
fn probe_separates_linearly_separable_data() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut sample = |n: usize| {
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for _ in 0..n {
            let c = rng.random_range(0..2usize);
            let shift = if c == 0 { -2.0 } else { 2.0 };
            rows.push(vec![shift + rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]);
            y.push(c);
        }
        (Tensor::from_rows(&rows).unwrap(), y)
    };
    let (xtr, ytr) = sample(100);
    let (xte, yte) = sample(100);
    let cfg = ProbeConfig {
        max_iters: 2000,
        ..Default::default()
    };
    let out = logistic_probe(&xtr, &ytr, &xte, &yte, 2, &cfg).unwrap();
    assert_eq!(out.f1, 1.0);
    assert!(out.fit.objective.windows(2).all(|w| w[1] <= w[0]), "objective increased");
}

#[test]
fn probe_on_noise_is_at_chance() {
    let mut f1s = Vec::new();
    for seed in 0..5u64 {
        let n = 300;
        let labels: Vec<usize> = (0..2 * n).map(|i| i % 3).collect();
        let x = noise_features(2 * n, 64, seed);
        let rows = |lo: usize, hi: usize| Tensor::from_rows(&(lo..hi).map(|r| x.row(r).to_vec()).collect::<Vec<_>>()).unwrap();
        let cfg = ProbeConfig {
            max_iters: 1000,
            ..Default::default()
        };
        let out = logistic_probe(&rows(0, n), &labels[..n], &rows(n, 2 * n), &labels[n..], 3, &cfg).unwrap();
        f1s.push(out.f1);
    }
    let (mean, _) = mean_std(&f1s);
    assert!((mean - 1.0 / 3.0).abs() < 0.1, "noise probe F1 {f1s:?}");
}

#[test]
fn probe_objective_is_convex_across_inits() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 400;
    let mut rows = Vec::new();
    let mut y = Vec::new();
    for _ in 0..n {
        let r: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
        let score = [r[0] + r[1], r[2] - r[0], 0.3 * r[3]];
        let noisy: Vec<f64> = score.iter().map(|s| s + rng.random_range(-1.0..1.0)).collect();
        y.push(planlink::nn::argmax(&noisy));
        rows.push(r);
    }
    let x = Tensor::from_rows(&rows).unwrap();
    let fit = |seed| {
        let cfg = ProbeConfig {
            init_scale: 1.0,
            seed,
            ..Default::default()
        };
        fit_logistic(&x, &y, 3, &cfg).unwrap()
    };
    let (a, b) = (fit(1), fit(2));
    assert!(a.converged && b.converged);
    assert!(a.objective.windows(2).all(|w| w[1] <= w[0]));
    let pa = a.model.predict(&x).unwrap();
    let pb = b.model.predict(&x).unwrap();
    let agree = pa.iter().zip(&pb).filter(|(p, q)| p == q).count();
    assert!(agree as f64 >= 0.99 * n as f64, "{agree}/{n}");
}

#[test]
fn probe_rejects_single_class_training_data() {
    let x = noise_features(5, 3, 0);
    assert!(matches!(
        fit_logistic(&x, &[1, 1, 1, 1, 1], 3, &ProbeConfig::default()),
        Err(Error::DegenerateFit(_))
    ));
}

// ---------------------------------------------------------- correlation

fn points(tom: &[f64], delta: &[f64]) -> Vec<CorrelationPoint> {
    tom.iter()
        .zip(delta)
        .enumerate()
        .map(|(i, (&t, &d))| CorrelationPoint {
            session: i as u64,
            player: 0,
            tom_f1: t,
            delta_f1: d,
        })
        .collect()
}

#[test]
fn correlation_experiment_cases() {
    let tom = [0.0, 0.2, 0.5, 0.9, 0.4];
    assert!(matches!(correlation_experiment(&points(&tom, &[0.0; 5])), Err(Error::Stat(_))));
    let r = correlation_experiment(&points(&tom, &tom)).unwrap();
    assert!((r.result.r - 1.0).abs() < 1e-12);
    let r = correlation_experiment(&points(&tom, &[0.1, 0.0, -0.1, 0.2, 0.0])).unwrap();
    assert_eq!(r.flagged, 1);
}

#[test]
fn shuffled_pairing_destroys_correlation() {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    let tom: Vec<f64> = (0..32).map(|_| rng.random::<f64>()).collect();
    let mut total = 0.0;
    for _ in 0..20 {
        let mut delta = tom.clone();
        delta.shuffle(&mut rng);
        total += correlation_experiment(&points(&tom, &delta)).unwrap().result.r.abs();
    }
    assert!(total / 20.0 < 0.3, "mean |r| {}", total / 20.0);
}
