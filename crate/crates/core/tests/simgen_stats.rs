mod common;

use aspus::simgen::{
    apply_censoring, build_scenario, calibrate_tau, correlation_from_covariance, event_rate, sample_effects,
    sample_event_times, sample_genotypes, sample_ld_correlation, CausalLayout, LdStructure, Scenario, SnpsPerGene,
};
use common::{ks_one_sample, ks_two_sample};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Textbook Wishart: G G' with G a p x df matrix of N(0, lambda0) draws.
fn naive_wishart_correlation(p: usize, lambda0: f64, r: &mut ChaCha8Rng) -> DMatrix<f64> {
    let g = DMatrix::from_fn(p, p, |_, _| lambda0.sqrt() * r.sample::<f64, _>(StandardNormal));
    correlation_from_covariance(&(&g * g.transpose()))
}

#[test]
fn bartlett_matches_naive_wishart() {
    let (mut a, mut b) = (Vec::new(), Vec::new());
    let (mut ra, mut rb) = (rng(1), rng(2));
    for _ in 0..1000 {
        let phi = sample_ld_correlation(10, 0.8, &mut ra).unwrap();
        let naive = naive_wishart_correlation(10, 0.8, &mut rb);
        for i in 0..10 {
            for j in 0..i {
                a.push(phi[(i, j)]);
                b.push(naive[(i, j)]);
            }
        }
    }
    // pairs within one matrix are dependent; compare one entry per draw too
    let (_, p_all) = ks_two_sample(&a, &b);
    let first_a: Vec<f64> = a.iter().step_by(45).copied().collect();
    let first_b: Vec<f64> = b.iter().step_by(45).copied().collect();
    let (_, p_one) = ks_two_sample(&first_a, &first_b);
    assert!(p_one > 0.01, "single-entry KS p = {p_one}");
    assert!(p_all > 0.01, "pooled KS p = {p_all}");
}

#[test]
fn realized_maf_matches_target() {
    let n = 20_000;
    let z = sample_genotypes(n, &DMatrix::identity(3, 3), &[0.05, 0.01, 0.2], &mut rng(3));
    for (j, f) in [0.05, 0.01, 0.2].into_iter().enumerate() {
        let maf = z.column(j).sum() / (2.0 * n as f64);
        assert!((maf - f).abs() < 0.2 * f, "SNP {j}: {maf} vs {f}");
    }
    let maf = z.column(0).sum() / (2.0 * n as f64);
    assert!(maf > 0.04 && maf < 0.06);
}

#[test]
fn effect_signs_are_balanced() {
    let causal: Vec<usize> = (0..10_000).collect();
    let e = sample_effects(10_000, &causal, 0.3, 0, 0.0, &mut rng(4));
    let positive = e.snp_beta.iter().filter(|&&b| b > 0.0).count() as f64 / 10_000.0;
    assert!(positive > 0.48 && positive < 0.52, "{positive}");
    assert!(e.snp_beta.iter().all(|b| (0.15..=0.45).contains(&b.abs())));
}

#[test]
fn baseline_times_are_unit_exponential() {
    let n = 100_000;
    let t = sample_event_times(&vec![0.0; n], &mut rng(5));
    let mean = t.iter().sum::<f64>() / n as f64;
    let sd = 1.0 / (n as f64).sqrt();
    assert!((mean - 1.0).abs() < 3.0 * sd, "{mean}");

    let median = |mut v: Vec<f64>| {
        v.sort_by(f64::total_cmp);
        v[v.len() / 2]
    };
    let base = median(t);
    assert!((base - 2f64.ln()).abs() < 0.01, "{base}");
    let doubled = median(sample_event_times(&vec![2f64.ln(); n], &mut rng(6)));
    assert!((doubled / base - 0.5).abs() < 0.02, "{doubled} / {base}");
}

#[test]
fn scaled_times_pass_ks_against_exponential() {
    let mut r = rng(7);
    let eta: Vec<f64> = (0..10_000).map(|_| r.random_range(-1.0..1.0)).collect();
    let t = sample_event_times(&eta, &mut r);
    let scaled: Vec<f64> = t.iter().zip(&eta).map(|(t, e)| t * e.exp()).collect();
    let (_, p) = ks_one_sample(&scaled, |x| 1.0 - (-x).exp());
    assert!(p > 0.01, "KS p = {p}");
}

#[test]
fn censoring_flags_follow_times() {
    let mut r = rng(8);
    let t = sample_event_times(&vec![0.0; 5000], &mut r);
    let (x, d) = apply_censoring(&t, 2.0, &mut r);
    for i in 0..t.len() {
        assert!(x[i] <= t[i] && x[i] < 2.0);
        assert_eq!(d[i], x[i] == t[i]);
    }
}

#[test]
fn tau_matches_analytic_root() {
    // with all effects zero the event rate is 1 - (1 - e^-tau) / tau
    let f = |tau: f64| 1.0 - (1.0 - (-tau).exp()) / tau - 0.6;
    let (mut lo, mut hi) = (0.1, 100.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let root = 0.5 * (lo + hi);
    let tau = calibrate_tau(0.6, &vec![0.0; 50_000]).unwrap();
    assert!((tau - root).abs() < 0.05 * root, "{tau} vs {root}");
    assert!((event_rate(tau, &[0.0]) - 0.6).abs() < 1e-9);
}

#[test]
fn unattainable_targets_are_reported() {
    assert!(calibrate_tau(0.0, &[0.0]).is_err());
    assert!(calibrate_tau(1.0, &[0.0]).is_err());
    assert!(calibrate_tau(0.6, &[]).is_err());
}

#[test]
fn null_gene_scenario() {
    let s = Scenario::numbered(1).unwrap();
    let out = build_scenario(&s).unwrap();
    assert_eq!(out.dataset.n_snps(), 10);
    assert_eq!(out.dataset.n(), 1000);
    assert!(out.truth.causal.is_empty());
    assert!(out.truth.snp_beta.iter().all(|&b| b == 0.0));
    assert!((out.truth.event_rate - 0.6).abs() < 0.05, "{}", out.truth.event_rate);
    assert!(out.dataset.geno().iter().all(|&d| d == 0.0 || d == 1.0 || d == 2.0));
}

#[test]
fn dropped_causal_columns() {
    let s = Scenario {
        layout: CausalLayout::Gene { n_snps: 20, n_causal: 3 },
        effect_a: 0.4,
        ..Scenario::numbered(3).unwrap()
    };
    let out = build_scenario(&s).unwrap();
    assert_eq!(out.dataset.n_snps(), 17);
    assert_eq!(out.truth.dropped.len(), 3);
    assert_eq!(out.truth.dropped, out.truth.causal);
    for &c in &out.truth.dropped {
        assert!(out.dataset.snp_index(&out.truth.snp_ids[c]).is_none());
    }
    assert_eq!(out.genemap.get("gene1").unwrap().len(), 17);
}

#[test]
fn pathway_scenario_sizes() {
    let mut total = 0;
    for seed in 0..20 {
        let s = Scenario {
            n: 50,
            seed,
            ..Scenario::numbered(4).unwrap()
        };
        let out = build_scenario(&s).unwrap();
        assert_eq!(out.genemap.len(), 20);
        let pw = out.pathways.unwrap();
        assert_eq!(pw.get("pathway1").unwrap().members.len(), 20);
        total += out.dataset.n_snps();
    }
    let mean = total as f64 / 20.0;
    assert!((mean - 220.0).abs() < 30.0, "{mean}");

    let fixed = Scenario {
        n: 50,
        layout: CausalLayout::Pathway {
            n_genes: 20,
            snps_per_gene: SnpsPerGene::Fixed { k: 10 },
            n_causal_genes: 0,
        },
        ..Scenario::default()
    };
    assert_eq!(build_scenario(&fixed).unwrap().dataset.n_snps(), 200);
}

#[test]
fn same_seed_same_output() {
    let s = Scenario {
        n: 200,
        effect_a: 0.3,
        ld: LdStructure::correlated(),
        seed: 99,
        ..Scenario::default()
    };
    let a = build_scenario(&s).unwrap();
    let b = build_scenario(&s).unwrap();
    assert_eq!(a.dataset, b.dataset);
    assert_eq!(a.truth, b.truth);
    let c = build_scenario(&Scenario { seed: 100, ..s }).unwrap();
    assert_ne!(a.dataset, c.dataset);
}

#[test]
fn correlated_scenarios_carry_ld() {
    // common variants so that genotype correlations are measurable at n = 5000
    let base = Scenario {
        n: 5000,
        maf_range: (0.2, 0.4),
        layout: CausalLayout::Gene { n_snps: 10, n_causal: 0 },
        ..Scenario::default()
    };
    let mean_abs_corr = |ld| {
        let mut values = Vec::new();
        for seed in 0..10 {
            let out = build_scenario(&Scenario { ld, seed, ..base.clone() }).unwrap();
            let g = out.dataset.geno();
            let p = g.ncols();
            for i in 0..p {
                for j in 0..i {
                    let (a, b) = (g.column(i), g.column(j));
                    let (ma, mb) = (a.mean().unwrap(), b.mean().unwrap());
                    let cov = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>();
                    let va = a.iter().map(|x| (x - ma).powi(2)).sum::<f64>();
                    let vb = b.iter().map(|y| (y - mb).powi(2)).sum::<f64>();
                    values.push((cov / (va * vb).sqrt()).abs());
                }
            }
        }
        values
    };
    let ind = mean_abs_corr(LdStructure::Independent);
    let cor = mean_abs_corr(LdStructure::correlated());
    // Welch statistic for a difference in means
    let stats = |v: &[f64]| {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64;
        (m, var / v.len() as f64)
    };
    let ((mi, si), (mc, sc)) = (stats(&ind), stats(&cor));
    let z = (mc - mi) / (si + sc).sqrt();
    assert!(z > 2.33, "correlated {mc} vs independent {mi}, z = {z}");
}
