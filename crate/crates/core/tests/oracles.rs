mod common;

use aspus::coxnull::{fit_null, partial_loglik, FitOptions, NullModel};
use aspus::rng;
use aspus::score::{
    build_weight_table, build_weight_table_with_limit, score_observed, score_observed_stepwise, score_permuted,
    Permutation,
};
use aspus::spu::{spu_gene_stat, spu_pathway_stat, Gamma, TestUnit};
use aspus::survdata::{Gene, GeneMap, PathwayMap};
use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}

#[test]
fn permuted_score_matches_brute_force() {
    let mut r = ChaCha8Rng::seed_from_u64(11);
    for case in 0..30 {
        let n = r.random_range(2..=30);
        let p = r.random_range(1..=6);
        let k = r.random_range(0..=2);
        let d = random_dataset(&mut r, n, p, k);
        let null = match fit_null(&d, &FitOptions::default()) {
            Ok(m) => m,
            Err(_) => NullModel::from_beta(&d, vec![0.3; k]).unwrap(),
        };
        let wt = build_weight_table(&d, &null).unwrap();
        for b in 0..10u64 {
            let perm = rng::permutation(case, b, n);
            let fast = score_permuted(&d, &wt, &Permutation::new(perm.clone()).unwrap()).unwrap();
            let slow = brute_force_score(&d, &null.mu, &perm);
            assert!(close(&fast.u, &slow, 1e-10), "case {case} perm {b}: {:?} vs {slow:?}", fast.u);
        }
    }
}

#[test]
fn observed_score_routes_agree() {
    let mut r = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..20 {
        let d = random_dataset(&mut r, 25, 4, 1);
        let null = fit_null(&d, &FitOptions::default()).unwrap();
        let wt = build_weight_table(&d, &null).unwrap();
        let a = score_observed(&d, &wt).unwrap();
        let b = score_observed_stepwise(&d, &wt).unwrap();
        let identity: Vec<usize> = (0..d.n()).collect();
        assert!(close(&a.u, &b.u, 1e-10));
        assert!(close(&a.u, &brute_force_score(&d, &null.mu, &identity), 1e-10));
        let id = score_permuted(&d, &wt, &Permutation::identity(d.n())).unwrap();
        assert_eq!(a.u, id.u);
    }
}

#[test]
fn weight_rows_match_definition() {
    let mut r = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..20 {
        let d = random_dataset(&mut r, 20, 2, 2);
        let null = NullModel::from_beta(&d, vec![0.4, -0.7]).unwrap();
        let dense = build_weight_table(&d, &null).unwrap();
        let lazy = build_weight_table_with_limit(&d, &null, 0).unwrap();
        assert!(dense.is_dense() && !lazy.is_dense());
        let mut row = vec![0.0; d.n()];
        for (k, &i) in dense.event_rows().iter().enumerate() {
            lazy.omega_row_into(k, &mut row);
            let mut total = 0.0;
            for j in 0..d.n() {
                let expect = naive_omega(&d, &null.mu, i, j);
                assert!((dense.omega(k, j) - expect).abs() < 1e-14);
                assert!((row[j] - expect).abs() < 1e-14);
                total += dense.omega(k, j);
            }
            assert!((total - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn cox_fit_matches_one_dimensional_search() {
    let mut r = ChaCha8Rng::seed_from_u64(14);
    let mut checked = 0;
    while checked < 10 {
        let d = random_dataset(&mut r, 40, 0, 1);
        let Ok(m) = fit_null(&d, &FitOptions::default()) else { continue };
        if !m.converged || m.beta[0].abs() > 5.0 {
            continue;
        }
        let best = golden_max(|b| naive_loglik(&d, &[b]), -8.0, 8.0, 1e-9);
        assert!((m.beta[0] - best).abs() < 1e-5, "{} vs {best}", m.beta[0]);
        assert!(m.max_score < 1e-6);
        assert!((m.loglik - naive_loglik(&d, &m.beta)).abs() < 1e-9);
        checked += 1;
    }
}

#[test]
fn derivatives_match_finite_differences() {
    let mut r = ChaCha8Rng::seed_from_u64(15);
    for _ in 0..10 {
        let d = random_dataset(&mut r, 30, 0, 3);
        let beta = [0.2, -0.4, 0.1];
        let pl = partial_loglik(&d, &beta).unwrap();
        assert!((pl.loglik - naive_loglik(&d, &beta)).abs() < 1e-10);
        let h = 1e-5;
        for a in 0..3 {
            let mut up = beta;
            let mut dn = beta;
            up[a] += h;
            dn[a] -= h;
            let pu = partial_loglik(&d, &up).unwrap();
            let pd = partial_loglik(&d, &dn).unwrap();
            let g = (pu.loglik - pd.loglik) / (2.0 * h);
            assert!((g - pl.gradient[a]).abs() < 1e-6, "gradient {a}");
            for b in 0..3 {
                let hess = (pu.gradient[b] - pd.gradient[b]) / (2.0 * h);
                assert!((hess - pl.hessian[(a, b)]).abs() < 1e-6, "hessian {a},{b}");
            }
        }
    }
}

#[test]
fn shared_snp_pathway_by_hand() {
    // gene A = {0, 1}, gene B = {1, 2}; SNP 1 counted in both genes
    let genes = vec![
        Gene {
            id: "A".into(),
            snps: vec![0, 1],
            weights: vec![1.0, 2.0],
        },
        Gene::unweighted("B", vec![1, 2]),
    ];
    let map = GeneMap::from_genes(genes, 3).unwrap();
    let pathways = PathwayMap::from_members(vec![("P".into(), vec![("A".into(), 1.0), ("B".into(), 0.5)])], &map).unwrap();
    let unit = TestUnit::pathway(pathways.get("P").unwrap(), &map).unwrap();
    assert_eq!(unit.cols, vec![0, 1, 2]);

    let u = [1.5, -2.0, 0.5];
    for (g, gg) in [(1.0, 1.0), (2.0, 1.0), (2.0, 3.0), (4.0, 2.0)] {
        let gene_a = ((1.5f64).powf(g) + (2.0 * 2.0f64).powf(g)) / 2.0;
        let gene_b = ((2.0f64).powf(g) + (0.5f64).powf(g)) / 2.0;
        let expect = gene_a.powf(1.0 / g).powf(gg) + (0.5 * gene_b.powf(1.0 / g)).powf(gg);
        let got = spu_pathway_stat(&u, &unit.blocks, Gamma::new(g).unwrap(), Gamma::new(gg).unwrap()).unwrap();
        assert!((got - expect).abs() < 1e-12 * expect, "{g},{gg}: {got} vs {expect}");
    }
}

#[test]
fn gene_statistic_by_hand() {
    let u = [3.0, -4.0, 0.0];
    let sum_sq = 25f64;
    assert!((spu_gene_stat(&u, None, Gamma::new(2.0).unwrap()) - sum_sq.sqrt()).abs() < 1e-15);
    assert_eq!(spu_gene_stat(&u, None, Gamma::new(1.0).unwrap()), 7.0);
    assert_eq!(spu_gene_stat(&u, None, Gamma::INFINITY), 4.0);
    assert_eq!(spu_gene_stat(&u, Some(&[2.0, 1.0, 1.0]), Gamma::INFINITY), 6.0);
    let g8 = (3f64.powi(8) + 4f64.powi(8)).powf(1.0 / 8.0);
    assert!((spu_gene_stat(&u, None, Gamma::new(8.0).unwrap()) - g8).abs() < 1e-12);
}
