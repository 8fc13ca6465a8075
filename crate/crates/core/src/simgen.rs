//! Synthetic cohorts with rare variants, LD, covariates and censored
//! proportional-hazards survival.
//!
//! Per replicate:
//!
//! * `Lambda ~ Wishart(P, diag(lambda0))`, `Phi = Cor(Lambda)` (or `Phi = I`);
//! * two haplotypes `Psi ~ N_P(0, Phi)` per subject, dosage
//!   `z_ip = 1{Psi_1ip > pi_p} + 1{Psi_2ip > pi_p}` with `P(Psi > pi_p) = f_p`;
//! * `K` standard-normal covariates with effect `covar_beta`;
//! * causal effects `|beta_p| ~ U(0.5a, 1.5a)` with a random sign;
//! * `T = -log(U) exp(-Z'beta)` (unit-exponential baseline, i.e. Weibull(1,1)),
//!   `C ~ U(0, tau)` with `tau` tuned to the target event rate.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use ndarray::Array2;
use rand::seq::index;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, Open01, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::rng;
use crate::survdata::{Gene, GeneMap, PathwayMap, SurvivalDataset};
use crate::{Error, Result};

/// Pilot draws used to tune the censoring bound.
pub const PILOT_DRAWS: usize = 50_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LdStructure {
    Independent,
    Correlated { lambda0_diag: f64 },
}

impl LdStructure {
    pub fn correlated() -> Self {
        LdStructure::Correlated { lambda0_diag: 0.8 }
    }

    pub fn label(&self) -> &'static str {
        match self {
            LdStructure::Independent => "independent",
            LdStructure::Correlated { .. } => "correlated",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SnpsPerGene {
    Fixed { k: usize },
    /// Integer uniform on `min..=max`.
    Uniform { min: usize, max: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum CausalLayout {
    Gene {
        n_snps: usize,
        n_causal: usize,
    },
    /// Each causal gene carries exactly one causal SNP.
    Pathway {
        n_genes: usize,
        snps_per_gene: SnpsPerGene,
        n_causal_genes: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub n: usize,
    pub n_covars: usize,
    pub ld: LdStructure,
    pub layout: CausalLayout,
    pub effect_a: f64,
    pub covar_beta: f64,
    pub maf_range: (f64, f64),
    pub event_target: f64,
    pub drop_causal: bool,
    /// Background prevalence; carried as metadata, enters no formula.
    pub prevalence_a0: f64,
    pub seed: u64,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            n: 1000,
            n_covars: 2,
            ld: LdStructure::Independent,
            layout: CausalLayout::Gene {
                n_snps: 10,
                n_causal: 3,
            },
            effect_a: 0.0,
            covar_beta: 0.1,
            maf_range: (0.001, 0.05),
            event_target: 0.6,
            drop_causal: false,
            prevalence_a0: 0.05,
            seed: 1,
        }
    }
}

impl Scenario {
    /// The six numbered scenarios: 1-3 gene-based, 4-6 pathway-based, each as
    /// independent / correlated / correlated with causal SNPs removed.
    pub fn numbered(id: u8) -> Result<Self> {
        let gene = CausalLayout::Gene {
            n_snps: 10,
            n_causal: 3,
        };
        let pathway = CausalLayout::Pathway {
            n_genes: 20,
            snps_per_gene: SnpsPerGene::Uniform { min: 2, max: 20 },
            n_causal_genes: 5,
        };
        let (layout, ld, drop_causal) = match id {
            1 => (gene, LdStructure::Independent, false),
            2 => (gene, LdStructure::correlated(), false),
            3 => (gene, LdStructure::correlated(), true),
            4 => (pathway, LdStructure::Independent, false),
            5 => (pathway, LdStructure::correlated(), false),
            6 => (pathway, LdStructure::correlated(), true),
            other => return Err(Error::Config(format!("scenario {other} is not in 1..=6"))),
        };
        Ok(Self {
            layout,
            ld,
            drop_causal,
            ..Self::default()
        })
    }

    pub fn is_pathway(&self) -> bool {
        matches!(self.layout, CausalLayout::Pathway { .. })
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.n < 2 {
            return fail(format!("n = {} must be at least 2", self.n));
        }
        let (lo, hi) = self.maf_range;
        if !(lo > 0.0 && lo <= hi && hi < 0.5) {
            return fail(format!("MAF range ({lo}, {hi}) must satisfy 0 < lo <= hi < 0.5"));
        }
        if !(self.event_target > 0.0 && self.event_target < 1.0) {
            return fail(format!("event target {} must lie in (0,1)", self.event_target));
        }
        if !(self.effect_a >= 0.0 && self.effect_a.is_finite()) {
            return fail(format!("effect size {} must be >= 0", self.effect_a));
        }
        if !self.covar_beta.is_finite() {
            return fail("covariate effect must be finite".into());
        }
        if let LdStructure::Correlated { lambda0_diag } = self.ld {
            if lambda0_diag.is_nan() || lambda0_diag <= 0.0 {
                return fail(format!("Lambda0 diagonal {lambda0_diag} must be positive"));
            }
        }
        match self.layout {
            CausalLayout::Gene { n_snps, n_causal } => {
                if n_snps == 0 || n_causal > n_snps {
                    return fail(format!("need 0 <= n_causal ({n_causal}) <= n_snps ({n_snps}), n_snps >= 1"));
                }
                if self.drop_causal && self.effect_a > 0.0 && n_causal == n_snps {
                    return fail("dropping every SNP leaves nothing to test".into());
                }
            }
            CausalLayout::Pathway {
                n_genes,
                snps_per_gene,
                n_causal_genes,
            } => {
                if n_genes == 0 || n_causal_genes > n_genes {
                    return fail(format!("need n_causal_genes ({n_causal_genes}) <= n_genes ({n_genes}), n_genes >= 1"));
                }
                let (min, max) = match snps_per_gene {
                    SnpsPerGene::Fixed { k } => (k, k),
                    SnpsPerGene::Uniform { min, max } => (min, max),
                };
                if min == 0 || min > max {
                    return fail(format!("SNPs per gene range ({min}, {max}) invalid"));
                }
            }
        }
        Ok(())
    }
}

/// Ground truth behind a simulated dataset. SNP indices refer to the
/// generated columns, before any causal column is removed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Truth {
    pub snp_ids: Vec<String>,
    pub snp_beta: Vec<f64>,
    pub causal: Vec<usize>,
    pub dropped: Vec<usize>,
    pub covar_beta: Vec<f64>,
    pub mafs: Vec<f64>,
    pub event_rate: f64,
    pub tau: f64,
}

#[derive(Debug, Clone)]
pub struct SimOutput {
    pub dataset: SurvivalDataset,
    pub genemap: GeneMap,
    pub pathways: Option<PathwayMap>,
    pub truth: Truth,
}

// ---------------------------------------------------------------------------
// LD

/// Correlation of a `Wishart(df = p, diag(lambda0_diag))` draw (Bartlett).
pub fn sample_ld_correlation<R: Rng + ?Sized>(p: usize, lambda0_diag: f64, rng: &mut R) -> Result<DMatrix<f64>> {
    if p == 0 {
        return Err(Error::Config("need at least one SNP".into()));
    }
    if lambda0_diag.is_nan() || lambda0_diag <= 0.0 {
        return Err(Error::Config("Lambda0 diagonal must be positive".into()));
    }
    let df = p as f64;
    let mut a = DMatrix::<f64>::zeros(p, p);
    for i in 0..p {
        let chi = ChiSquared::new(df - i as f64).expect("df >= 1");
        a[(i, i)] = chi.sample(rng).sqrt();
        for j in 0..i {
            a[(i, j)] = rng.sample(StandardNormal);
        }
    }
    let lambda = (&a * a.transpose()) * lambda0_diag;
    Ok(correlation_from_covariance(&lambda))
}

pub fn correlation_from_covariance(cov: &DMatrix<f64>) -> DMatrix<f64> {
    let p = cov.nrows();
    let sd: Vec<f64> = (0..p).map(|i| cov[(i, i)].sqrt()).collect();
    let mut phi = DMatrix::from_fn(p, p, |i, j| cov[(i, j)] / (sd[i] * sd[j]));
    for i in 0..p {
        phi[(i, i)] = 1.0;
    }
    phi
}

/// Lower factor `L` with `L L' = Phi`. Falls back to clipping eigenvalues at
/// 1e-10 and renormalizing to unit diagonal when Cholesky fails.
pub fn correlation_factor(phi: &DMatrix<f64>) -> DMatrix<f64> {
    if let Some(chol) = phi.clone().cholesky() {
        return chol.l();
    }
    let eig = phi.clone().symmetric_eigen();
    let clipped = eig.eigenvalues.map(|v| v.max(1e-10));
    let mut root = eig.eigenvectors.clone();
    for (j, mut col) in root.column_iter_mut().enumerate() {
        col *= clipped[j].sqrt();
    }
    // rescale rows so that (L L')_ii = 1
    for mut row in root.row_iter_mut() {
        let norm = row.norm();
        if norm > 0.0 {
            row /= norm;
        }
    }
    root
}

// ---------------------------------------------------------------------------
// Genotypes

/// Threshold `pi_p` with `P(N(0,1) > pi_p) = f`.
pub fn haplotype_threshold(f: f64) -> f64 {
    Normal::standard().inverse_cdf(1.0 - f)
}

/// Dosages for one LD block: two haplotypes `L xi`, thresholded per SNP.
pub fn sample_genotypes<R: Rng + ?Sized>(n: usize, factor: &DMatrix<f64>, mafs: &[f64], rng: &mut R) -> Array2<f64> {
    let p = factor.nrows();
    assert_eq!(mafs.len(), p, "one MAF per SNP");
    let thresholds: Vec<f64> = mafs.iter().map(|&f| haplotype_threshold(f)).collect();
    let mut out = Array2::zeros((n, p));
    let mut xi = DVector::<f64>::zeros(p);
    for i in 0..n {
        for _ in 0..2 {
            for v in xi.iter_mut() {
                *v = rng.sample(StandardNormal);
            }
            let psi = factor * &xi;
            for (j, &t) in thresholds.iter().enumerate() {
                if psi[j] > t {
                    out[(i, j)] += 1.0;
                }
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Effects and survival

#[derive(Debug, Clone, PartialEq)]
pub struct Effects {
    pub snp_beta: Vec<f64>,
    pub covar_beta: Vec<f64>,
    pub causal: Vec<usize>,
}

/// Causal effects `U(0.5a, 1.5a) * Rademacher` on `causal`, zero elsewhere.
pub fn sample_effects<R: Rng + ?Sized>(
    n_snps: usize,
    causal: &[usize],
    a: f64,
    n_covars: usize,
    covar_beta: f64,
    rng: &mut R,
) -> Effects {
    let mut snp_beta = vec![0.0; n_snps];
    let causal: Vec<usize> = if a > 0.0 { causal.to_vec() } else { Vec::new() };
    for &c in &causal {
        let magnitude = rng.random_range(0.5 * a..=1.5 * a);
        snp_beta[c] = if rng.random_bool(0.5) { magnitude } else { -magnitude };
    }
    Effects {
        snp_beta,
        covar_beta: vec![covar_beta; n_covars],
        causal,
    }
}

/// Event times `-log(U) exp(-eta)` under a unit-exponential baseline.
pub fn sample_event_times<R: Rng + ?Sized>(eta: &[f64], rng: &mut R) -> Vec<f64> {
    eta.iter()
        .map(|&e| {
            let u: f64 = rng.sample(Open01);
            -u.ln() * (-e).exp()
        })
        .collect()
}

/// Applies `C ~ U(0, tau)` censoring: `X = min(T, C)`, `delta = 1{T <= C}`.
pub fn apply_censoring<R: Rng + ?Sized>(times: &[f64], tau: f64, rng: &mut R) -> (Vec<f64>, Vec<bool>) {
    times
        .iter()
        .map(|&t| {
            let c = tau * rng.sample::<f64, _>(Open01);
            if t <= c {
                (t, true)
            } else {
                (c, false)
            }
        })
        .unzip()
}

/// `P(T <= C)` for `T ~ Exp(rate)`, `C ~ U(0, tau)`: `1 - (1 - e^{-x}) / x`, `x = rate * tau`.
pub fn conditional_event_probability(x: f64) -> f64 {
    if x < 1e-6 {
        x / 2.0 - x * x / 6.0
    } else {
        1.0 + (-x).exp_m1() / x
    }
}

/// Expected event rate at censoring bound `tau` over pilot linear predictors.
pub fn event_rate(tau: f64, pilot_eta: &[f64]) -> f64 {
    let total: f64 = pilot_eta
        .iter()
        .map(|&e| conditional_event_probability(e.exp() * tau))
        .sum();
    total / pilot_eta.len() as f64
}

/// Bisection for the `tau` whose expected event rate equals `target`.
pub fn calibrate_tau(target: f64, pilot_eta: &[f64]) -> Result<f64> {
    if !(target > 0.0 && target < 1.0) {
        return Err(Error::Config(format!("event target {target} must lie in (0,1)")));
    }
    if pilot_eta.is_empty() {
        return Err(Error::Config("no pilot draws".into()));
    }
    const TAU_MIN: f64 = 1e-12;
    const TAU_MAX: f64 = 1e12;
    let rate = |tau: f64| event_rate(tau, pilot_eta);
    let (mut lo, mut hi) = (1.0, 1.0);
    while rate(hi) < target {
        hi *= 2.0;
        if hi > TAU_MAX {
            return Err(Error::UnattainableEventRate {
                target,
                low: rate(TAU_MIN),
                high: rate(TAU_MAX),
            });
        }
    }
    while rate(lo) > target {
        lo /= 2.0;
        if lo < TAU_MIN {
            return Err(Error::UnattainableEventRate {
                target,
                low: rate(TAU_MIN),
                high: rate(TAU_MAX),
            });
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if rate(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-10 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Pilot linear predictors drawn from the same genotype and covariate model,
/// simulating only SNPs with nonzero effect (from their marginal correlation).
fn pilot_linear_predictor<R: Rng + ?Sized>(
    blocks: &[Block],
    mafs: &[f64],
    effects: &Effects,
    draws: usize,
    rng: &mut R,
) -> Vec<f64> {
    let mut eta = vec![0.0; draws];
    for block in blocks {
        let active: Vec<usize> = (0..block.cols.len())
            .filter(|&i| effects.snp_beta[block.cols[i]] != 0.0)
            .collect();
        if active.is_empty() {
            continue;
        }
        let sub = DMatrix::from_fn(active.len(), active.len(), |a, b| block.phi[(active[a], active[b])]);
        let factor = correlation_factor(&sub);
        let sub_mafs: Vec<f64> = active.iter().map(|&i| mafs[block.cols[i]]).collect();
        let z = sample_genotypes(draws, &factor, &sub_mafs, rng);
        for (e, row) in eta.iter_mut().zip(z.rows()) {
            *e += row
                .iter()
                .zip(&active)
                .map(|(&d, &i)| d * effects.snp_beta[block.cols[i]])
                .sum::<f64>();
        }
    }
    if effects.covar_beta.iter().any(|&b| b != 0.0) {
        for e in eta.iter_mut() {
            for &b in &effects.covar_beta {
                let x: f64 = rng.sample(StandardNormal);
                *e += b * x;
            }
        }
    }
    eta
}

/// One LD block: generated SNP columns and their correlation.
struct Block {
    cols: Vec<usize>,
    phi: DMatrix<f64>,
}

/// Runs the whole generator for `scenario`.
pub fn build_scenario(scenario: &Scenario) -> Result<SimOutput> {
    scenario.validate()?;
    let mut rng: ChaCha8Rng = rng::stream(scenario.seed, 0);
    let n = scenario.n;

    // gene sizes and names
    let sizes: Vec<usize> = match scenario.layout {
        CausalLayout::Gene { n_snps, .. } => vec![n_snps],
        CausalLayout::Pathway {
            n_genes,
            snps_per_gene,
            ..
        } => (0..n_genes)
            .map(|_| match snps_per_gene {
                SnpsPerGene::Fixed { k } => k,
                SnpsPerGene::Uniform { min, max } => rng.random_range(min..=max),
            })
            .collect(),
    };
    let p: usize = sizes.iter().sum();
    let snp_ids: Vec<String> = (1..=p).map(|i| format!("rs{i}")).collect();
    let mut offset = 0;
    let mut gene_cols = Vec::with_capacity(sizes.len());
    for &k in &sizes {
        gene_cols.push((offset..offset + k).collect::<Vec<usize>>());
        offset += k;
    }

    let (lo, hi) = scenario.maf_range;
    let mafs: Vec<f64> = (0..p)
        .map(|_| if lo < hi { rng.random_range(lo..hi) } else { lo })
        .collect();

    let blocks: Vec<Block> = gene_cols
        .iter()
        .map(|cols| {
            let phi = match scenario.ld {
                LdStructure::Independent => Ok(DMatrix::identity(cols.len(), cols.len())),
                LdStructure::Correlated { lambda0_diag } => sample_ld_correlation(cols.len(), lambda0_diag, &mut rng),
            }?;
            Ok(Block {
                cols: cols.clone(),
                phi,
            })
        })
        .collect::<Result<_>>()?;

    let mut geno = Array2::zeros((n, p));
    for block in &blocks {
        let factor = correlation_factor(&block.phi);
        let block_mafs: Vec<f64> = block.cols.iter().map(|&c| mafs[c]).collect();
        let z = sample_genotypes(n, &factor, &block_mafs, &mut rng);
        for (local, &c) in block.cols.iter().enumerate() {
            geno.column_mut(c).assign(&z.column(local));
        }
    }

    let k = scenario.n_covars;
    let covar = Array2::from_shape_simple_fn((n, k), || rng.sample(StandardNormal));

    let causal: Vec<usize> = match scenario.layout {
        CausalLayout::Gene { n_snps, n_causal } => {
            let mut c = index::sample(&mut rng, n_snps, n_causal).into_vec();
            c.sort_unstable();
            c
        }
        CausalLayout::Pathway { n_genes, n_causal_genes, .. } => {
            let mut genes = index::sample(&mut rng, n_genes, n_causal_genes).into_vec();
            genes.sort_unstable();
            genes
                .into_iter()
                .map(|g| gene_cols[g][rng.random_range(0..gene_cols[g].len())])
                .collect()
        }
    };
    let effects = sample_effects(p, &causal, scenario.effect_a, k, scenario.covar_beta, &mut rng);

    let eta: Vec<f64> = (0..n)
        .map(|i| {
            let g: f64 = geno.row(i).iter().zip(&effects.snp_beta).map(|(z, b)| z * b).sum();
            let c: f64 = covar.row(i).iter().zip(&effects.covar_beta).map(|(z, b)| z * b).sum();
            g + c
        })
        .collect();

    let pilot = pilot_linear_predictor(&blocks, &mafs, &effects, PILOT_DRAWS, &mut rng);
    let tau = calibrate_tau(scenario.event_target, &pilot)?;
    let t = sample_event_times(&eta, &mut rng);
    let (time, event) = apply_censoring(&t, tau, &mut rng);
    let event_rate = event.iter().filter(|&&e| e).count() as f64 / n as f64;

    let dropped: Vec<usize> = if scenario.drop_causal {
        effects.causal.clone()
    } else {
        Vec::new()
    };
    let keep: Vec<usize> = (0..p).filter(|c| !dropped.contains(c)).collect();
    let mut new_index = vec![usize::MAX; p];
    for (new, &old) in keep.iter().enumerate() {
        new_index[old] = new;
    }

    let full = SurvivalDataset::new(
        (1..=n).map(|i| format!("sub{i}")).collect(),
        snp_ids.clone(),
        (1..=k).map(|j| format!("cov{j}")).collect(),
        geno,
        covar,
        time,
        event,
    )?;
    let dataset = if dropped.is_empty() { full } else { full.select_snps(&keep) };

    let mut genes = Vec::with_capacity(gene_cols.len());
    let mut warnings = Vec::new();
    for (g, cols) in gene_cols.iter().enumerate() {
        let id = format!("gene{}", g + 1);
        let kept: Vec<usize> = cols.iter().map(|&c| new_index[c]).filter(|&c| c != usize::MAX).collect();
        if kept.is_empty() {
            warnings.push(format!("gene {id} dropped: all SNPs were causal and removed"));
        } else {
            genes.push(Gene::unweighted(id, kept));
        }
    }
    let mut genemap = GeneMap::from_genes(genes, dataset.n_snps())?;
    genemap.warnings = warnings;

    let pathways = if scenario.is_pathway() {
        let members = genemap.genes().map(|g| (g.id.clone(), 1.0)).collect();
        Some(PathwayMap::from_members(vec![("pathway1".to_owned(), members)], &genemap)?)
    } else {
        None
    };

    Ok(SimOutput {
        dataset,
        genemap,
        pathways,
        truth: Truth {
            snp_ids,
            snp_beta: effects.snp_beta,
            causal: effects.causal,
            dropped,
            covar_beta: effects.covar_beta,
            mafs,
            event_rate,
            tau,
        },
    })
}

/// Writes `snp_id,true_beta,causal,dropped`.
pub fn write_truth_csv(path: impl AsRef<Path>, truth: &Truth) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|source| Error::Csv {
        path: path.to_path_buf(),
        source,
    })?;
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    w.write_record(["snp_id", "true_beta", "causal", "dropped"]).map_err(csv_err)?;
    for (i, id) in truth.snp_ids.iter().enumerate() {
        let causal = truth.causal.contains(&i);
        let dropped = truth.dropped.contains(&i);
        w.write_record([
            id.clone(),
            truth.snp_beta[i].to_string(),
            u8::from(causal).to_string(),
            u8::from(dropped).to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes the scenario parameters as pretty-printed JSON.
pub fn write_scenario_json(path: impl AsRef<Path>, scenario: &Scenario) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(scenario)? + "\n";
    std::fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}
