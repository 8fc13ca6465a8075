mod common;

use aspus::coxnull::{fit_null, FitOptions, NullModel};
use aspus::score::{build_weight_table, score_observed};
use aspus::spu::{
    empirical_pvalues, run_adaptive_test, scan, spu_pathway_stat, Gamma, GammaGrid, GeneBlock, PermPlan, TestUnit,
};
use aspus::survdata::{self, DatasetPaths, SurvivalDataset};
use common::random_dataset;
use ndarray::Array2;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn small_plan(seed: u64, theta: f64) -> PermPlan {
    PermPlan {
        b: 60,
        b_init: 12,
        theta,
        seed,
        ..PermPlan::default()
    }
}

fn null_for(d: &SurvivalDataset) -> NullModel {
    fit_null(d, &FitOptions::default()).unwrap_or_else(|_| NullModel::from_beta(d, vec![0.0; d.n_covars()]).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn dataset_round_trips_through_csv(seed in any::<u64>(), n in 2usize..15, p in 0usize..5, k in 0usize..3) {
        let d = random_dataset(&mut ChaCha8Rng::seed_from_u64(seed), n, p, k);
        let dir = tempfile::tempdir().unwrap();
        let paths = DatasetPaths::in_dir(dir.path());
        survdata::write_dataset(&d, &paths).unwrap();
        let back = survdata::load_dataset(&paths.geno, &paths.pheno, Some(&paths.covar)).unwrap();
        prop_assert_eq!(back, d);
    }

    #[test]
    fn scaling_scores_leaves_pvalues_unchanged(seed in any::<u64>(), n in 4usize..30, p in 1usize..6) {
        let d = random_dataset(&mut ChaCha8Rng::seed_from_u64(seed), n, p, 1);
        let null = null_for(&d);
        let wt = build_weight_table(&d, &null).unwrap();
        let half = d.with_geno(d.snp_ids().to_vec(), d.geno() * 0.5).unwrap();
        let unit = TestUnit::whole_gene("g", p);
        let grid = GammaGrid::gene_default();
        let plan = small_plan(seed, 1.0);
        let a = run_adaptive_test(&d, &wt, &unit, &grid, &plan).unwrap();
        let b = run_adaptive_test(&half, &wt, &unit, &grid, &plan).unwrap();
        prop_assert_eq!(&a.p_spu, &b.p_spu);
        prop_assert_eq!(a.p_min, b.p_min);
        prop_assert_eq!(a.p_aspus, b.p_aspus);
    }

    #[test]
    fn empirical_pvalues_are_rank_based(
        stats in proptest::collection::vec(proptest::collection::vec(-50.0f64..50.0, 9), 1..5),
        shift in -3i32..4,
    ) {
        let c = 2f64.powi(shift);
        let scaled: Vec<Vec<f64>> = stats.iter().map(|col| col.iter().map(|x| x * c).collect()).collect();
        prop_assert_eq!(empirical_pvalues(&stats), empirical_pvalues(&scaled));
    }

    #[test]
    fn dropping_an_exponent_never_lowers_p_min(
        stats in proptest::collection::vec(proptest::collection::vec(0.0f64..10.0, 12), 2..6),
        drop in 0usize..6,
    ) {
        let drop = drop % stats.len();
        let (_, full) = empirical_pvalues(&stats);
        let subset: Vec<Vec<f64>> = stats.iter().enumerate().filter(|(i, _)| *i != drop).map(|(_, c)| c.clone()).collect();
        let (_, restricted) = empirical_pvalues(&subset);
        for (r, f) in restricted.iter().zip(&full) {
            prop_assert!(r >= f);
        }
    }

    #[test]
    fn constant_genotype_has_zero_score(seed in any::<u64>(), n in 2usize..40, level in 0.0f64..=2.0) {
        let d = random_dataset(&mut ChaCha8Rng::seed_from_u64(seed), n, 1, 2);
        let constant = d.with_geno(vec!["c".into()], Array2::from_elem((n, 1), level)).unwrap();
        let wt = build_weight_table(&constant, &null_for(&d)).unwrap();
        let u = score_observed(&constant, &wt).unwrap().u;
        prop_assert!(u[0].abs() < 1e-10 * n as f64, "{}", u[0]);
    }

    #[test]
    fn continued_runs_equal_full_runs(seed in any::<u64>(), n in 5usize..40, p in 1usize..6) {
        let d = random_dataset(&mut ChaCha8Rng::seed_from_u64(seed), n, p, 1);
        let wt = build_weight_table(&d, &null_for(&d)).unwrap();
        let unit = TestUnit::whole_gene("g", p);
        let grid = GammaGrid::gene_default();
        let staged = run_adaptive_test(&d, &wt, &unit, &grid, &small_plan(seed, 0.1)).unwrap();
        let full = run_adaptive_test(&d, &wt, &unit, &grid, &small_plan(seed, 1.0)).unwrap();
        if staged.early_stopped {
            prop_assert!(staged.p_initial >= 0.1);
            prop_assert_eq!(staged.perms_used, 12);
        } else {
            prop_assert_eq!(staged.p_aspus, full.p_aspus);
            prop_assert_eq!(&staged.p_spu, &full.p_spu);
            prop_assert_eq!(staged.perms_used, 60);
        }
        prop_assert_eq!(staged.p_initial, full.p_initial);
    }

    #[test]
    fn single_snp_genes_collapse(u in proptest::collection::vec(-5.0f64..5.0, 1..8), g in 1.0f64..8.0) {
        let blocks: Vec<GeneBlock> = (0..u.len())
            .map(|i| GeneBlock { members: vec![i], snp_weights: vec![1.0], gene_weight: 1.0, k: 1 })
            .collect();
        let stat = spu_pathway_stat(&u, &blocks, Gamma::new(g).unwrap(), Gamma::new(1.0).unwrap()).unwrap();
        let expect: f64 = u.iter().map(|x| x.abs()).sum();
        prop_assert!((stat - expect).abs() < 1e-9 * (1.0 + expect));
    }
}

#[test]
fn scan_is_independent_of_thread_count() {
    let d = random_dataset(&mut ChaCha8Rng::seed_from_u64(3), 60, 12, 2);
    let wt = build_weight_table(&d, &null_for(&d)).unwrap();
    let units: Vec<TestUnit> = (0..4)
        .map(|g| TestUnit::gene(&survdata::Gene::unweighted(format!("g{g}"), (3 * g..3 * g + 3).collect())).unwrap())
        .collect();
    let grid = GammaGrid::gene_default();
    let plan = small_plan(9, 1.0);
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| scan(&d, &wt, &units, &grid, &plan))
            .into_iter()
            .map(Result::unwrap)
            .collect::<Vec<_>>()
    };
    let one = run(1);
    assert_eq!(one, run(4));
    // reordering the units does not change any unit's result
    let reversed: Vec<TestUnit> = units.iter().rev().cloned().collect();
    let back = scan(&d, &wt, &reversed, &grid, &plan);
    for (r, o) in back.into_iter().rev().zip(&one) {
        assert_eq!(&r.unwrap(), o);
    }
}
