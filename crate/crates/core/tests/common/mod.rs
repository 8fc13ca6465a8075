#![allow(dead_code)]

use aspus::survdata::SurvivalDataset;
use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Random small dataset: sparse-ish dosages (some fractional), K covariates,
/// times on a coarse grid so ties occur, random censoring with at least one event.
pub fn random_dataset(rng: &mut ChaCha8Rng, n: usize, p: usize, k: usize) -> SurvivalDataset {
    let geno = Array2::from_shape_fn((n, p), |_| {
        let u: f64 = rng.random();
        if u < 0.6 {
            0.0
        } else if u < 0.8 {
            1.0
        } else if u < 0.9 {
            2.0
        } else {
            rng.random_range(0.0..=2.0)
        }
    });
    let covar = Array2::from_shape_fn((n, k), |_| rng.random_range(-1.5..1.5));
    let time: Vec<f64> = (0..n).map(|_| f64::from(rng.random_range(1..=(n as u32).max(4))) / 4.0).collect();
    let mut event: Vec<bool> = (0..n).map(|_| rng.random_bool(0.65)).collect();
    if !event.iter().any(|&e| e) {
        event[0] = true;
    }
    SurvivalDataset::new(
        (0..n).map(|i| format!("s{i}")).collect(),
        (0..p).map(|j| format!("rs{j}")).collect(),
        (0..k).map(|j| format!("c{j}")).collect(),
        geno,
        covar,
        time,
        event,
    )
    .unwrap()
}

pub fn linear_predictor(d: &SurvivalDataset, beta: &[f64]) -> Vec<f64> {
    (0..d.n())
        .map(|i| d.covar().row(i).iter().zip(beta).map(|(x, b)| x * b).sum())
        .collect()
}

/// Breslow partial log-likelihood by the textbook double loop.
pub fn naive_loglik(d: &SurvivalDataset, beta: &[f64]) -> f64 {
    let eta = linear_predictor(d, beta);
    let mut ll = 0.0;
    for i in 0..d.n() {
        if !d.event()[i] {
            continue;
        }
        let denom: f64 = (0..d.n())
            .filter(|&j| d.time()[j] >= d.time()[i])
            .map(|j| eta[j].exp())
            .sum();
        ll += eta[i] - denom.ln();
    }
    ll
}

/// `omega_j(X_i)` straight from its definition.
pub fn naive_omega(d: &SurvivalDataset, mu: &[f64], i: usize, j: usize) -> f64 {
    let t = d.time()[i];
    let denom: f64 = (0..d.n()).filter(|&l| d.time()[l] >= t).map(|l| mu[l]).sum();
    if d.time()[j] >= t {
        mu[j] / denom
    } else {
        0.0
    }
}

/// Schoenfeld-residual score on an explicitly permuted genotype matrix:
/// row `i` of the permuted matrix is row `perm[i]` of the original.
pub fn brute_force_score(d: &SurvivalDataset, mu: &[f64], perm: &[usize]) -> Vec<f64> {
    let n = d.n();
    let p = d.n_snps();
    let zp = Array2::from_shape_fn((n, p), |(i, s)| d.geno()[(perm[i], s)]);
    let mut u = vec![0.0; p];
    for i in 0..n {
        if !d.event()[i] {
            continue;
        }
        let w: Vec<f64> = (0..n).map(|j| naive_omega(d, mu, i, j)).collect();
        for s in 0..p {
            let mean: f64 = (0..n).map(|j| w[j] * zp[(j, s)]).sum();
            u[s] += zp[(i, s)] - mean;
        }
    }
    u
}

/// Maximizes a unimodal function on `[lo, hi]` by golden-section search.
pub fn golden_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = hi - g * (hi - lo);
    let mut b = lo + g * (hi - lo);
    let (mut fa, mut fb) = (f(a), f(b));
    while hi - lo > tol {
        if fa < fb {
            lo = a;
            a = b;
            fa = fb;
            b = lo + g * (hi - lo);
            fb = f(b);
        } else {
            hi = b;
            b = a;
            fb = fa;
            a = hi - g * (hi - lo);
            fa = f(a);
        }
    }
    0.5 * (lo + hi)
}

/// Two-sample Kolmogorov-Smirnov statistic and asymptotic p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> (f64, f64) {
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    let (n, m) = (x.len() as f64, y.len() as f64);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < x.len() && j < y.len() {
        let t = x[i].min(y[j]);
        while i < x.len() && x[i] <= t {
            i += 1;
        }
        while j < y.len() && y[j] <= t {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    let en = (n * m / (n + m)).sqrt();
    (d, kolmogorov_sf((en + 0.12 + 0.11 / en) * d))
}

/// One-sample KS against a continuous CDF.
pub fn ks_one_sample(a: &[f64], cdf: impl Fn(f64) -> f64) -> (f64, f64) {
    let mut x = a.to_vec();
    x.sort_by(f64::total_cmp);
    let n = x.len() as f64;
    let d = x
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let f = cdf(v);
            (f - i as f64 / n).max((i as f64 + 1.0) / n - f)
        })
        .fold(0.0, f64::max);
    let en = n.sqrt();
    (d, kolmogorov_sf((en + 0.12 + 0.11 / en) * d))
}

fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..200 {
        let kf = f64::from(k);
        let term = 2.0 * (-1f64).powi(k - 1) * (-2.0 * kf * kf * lambda * lambda).exp();
        sum += term;
        if term.abs() < 1e-12 {
            break;
        }
    }
    sum.clamp(0.0, 1.0)
}
