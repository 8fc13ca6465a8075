//! Sum-of-powered-score statistics and the adaptive permutation test.
//!
//! For each exponent `gamma` (and, for pathways, each gene-level exponent
//! `gamma_G`) the observed statistic is ranked among its permutation
//! replicates; the smallest of those empirical p-values is then itself
//! calibrated against the permutations to give the adaptive p-value.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;

use crate::rng;
use crate::score::{ScoreKernel, WeightTable};
use crate::survdata::{Gene, GeneMap, Pathway, SurvivalDataset};
use crate::{Error, Result};

/// A power exponent; `Gamma::INFINITY` selects the max-norm.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Gamma(f64);

impl Gamma {
    pub const INFINITY: Gamma = Gamma(f64::INFINITY);

    pub fn new(value: f64) -> Result<Self> {
        if value >= 1.0 {
            Ok(Self(value))
        } else {
            Err(Error::Config(format!("exponent {value} must be >= 1")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_infinite(self) -> bool {
        self.0.is_infinite()
    }
}

impl fmt::Display for Gamma {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_infinite() {
            f.write_str("inf")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

impl FromStr for Gamma {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "inf" | "Inf" | "infinity" | "∞" => Ok(Gamma::INFINITY),
            other => other
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("cannot parse exponent {other:?}")))
                .and_then(Gamma::new),
        }
    }
}

fn gammas(values: &[f64]) -> Vec<Gamma> {
    values.iter().map(|&v| Gamma(v)).collect()
}

/// Exponents searched by the adaptive test.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaGrid {
    /// SNP-level exponents `gamma`.
    pub snp: Vec<Gamma>,
    /// Gene-level exponents `gamma_G`, used by pathway tests only.
    pub gene: Vec<Gamma>,
}

impl GammaGrid {
    pub fn new(snp: Vec<Gamma>, gene: Vec<Gamma>) -> Result<Self> {
        for (name, list) in [("gamma", &snp), ("gamma_G", &gene)] {
            if list.is_empty() {
                return Err(Error::Config(format!("{name} grid is empty")));
            }
            if list.windows(2).any(|w| w[0].0 >= w[1].0) {
                return Err(Error::Config(format!("{name} grid must be strictly increasing")));
            }
        }
        Ok(Self { snp, gene })
    }

    /// `{1,2,4,8,inf}` for gene tests.
    pub fn gene_default() -> Self {
        Self {
            snp: gammas(&[1.0, 2.0, 4.0, 8.0, f64::INFINITY]),
            gene: gammas(&[1.0, 2.0, 4.0, 8.0]),
        }
    }

    /// `gamma in {1,2,4,8}`, `gamma_G in {1,2,4,8}` for pathway tests.
    pub fn pathway_default() -> Self {
        Self {
            snp: gammas(&[1.0, 2.0, 4.0, 8.0]),
            gene: gammas(&[1.0, 2.0, 4.0, 8.0]),
        }
    }

    pub fn default_for(kind: UnitKind) -> Self {
        match kind {
            UnitKind::Gene => Self::gene_default(),
            UnitKind::Pathway => Self::pathway_default(),
        }
    }

    pub fn check_for(&self, kind: UnitKind) -> Result<()> {
        if kind == UnitKind::Pathway && self.snp.iter().chain(&self.gene).any(|g| g.is_infinite()) {
            return Err(Error::Config("pathway statistics need finite exponents".into()));
        }
        Ok(())
    }

    /// Column labels of the statistics, in evaluation order.
    pub fn labels(&self, kind: UnitKind) -> Vec<String> {
        match kind {
            UnitKind::Gene => self.snp.iter().map(ToString::to_string).collect(),
            UnitKind::Pathway => self
                .snp
                .iter()
                .flat_map(|g| self.gene.iter().map(move |gg| format!("{g}_{gg}")))
                .collect(),
        }
    }
}

/// Which adaptive p-value to report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
pub enum PValueConvention {
    /// `sum_{b=1..B} I(p_min^b <= p_min^0) / (B+1)`; may be exactly zero.
    #[default]
    Standard,
    /// `(1 + sum_{b=1..B} I(p_min^b <= p_min^0)) / (B+1)`.
    PlusOne,
    /// `sum_{b=1..B} I(p_min^0 <= p_min^b) / (B+1)`, with the comparison
    /// reversed. Small values then mean the observed data are *less* extreme
    /// than the permutations; kept only for reproducing that form.
    AsPrinted,
}

/// Permutation budget and early-stopping rule.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PermPlan {
    pub b: usize,
    pub b_init: usize,
    pub theta: f64,
    pub seed: u64,
    pub convention: PValueConvention,
}

impl Default for PermPlan {
    fn default() -> Self {
        Self {
            b: 500,
            b_init: 40,
            theta: 0.1,
            seed: 1,
            convention: PValueConvention::Standard,
        }
    }
}

impl PermPlan {
    pub fn validate(&self) -> Result<()> {
        if self.b_init < 1 || self.b_init > self.b {
            return Err(Error::Config(format!(
                "need 1 <= B_init <= B, got B_init={} B={}",
                self.b_init, self.b
            )));
        }
        if !(self.theta > 0.0 && self.theta <= 1.0) {
            return Err(Error::Config(format!("theta {} must lie in (0, 1]", self.theta)));
        }
        Ok(())
    }

    /// Whether the second batch can ever be skipped.
    pub fn can_stop_early(&self) -> bool {
        self.theta < 1.0 && self.b_init < self.b
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum UnitKind {
    Gene,
    Pathway,
}

impl fmt::Display for UnitKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            UnitKind::Gene => "gene",
            UnitKind::Pathway => "pathway",
        })
    }
}

impl FromStr for UnitKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gene" => Ok(UnitKind::Gene),
            "pathway" => Ok(UnitKind::Pathway),
            other => Err(Error::Config(format!("unknown unit type {other:?}"))),
        }
    }
}

/// One gene inside a unit: positions into the unit's columns with weights.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneBlock {
    pub members: Vec<usize>,
    pub snp_weights: Vec<f64>,
    pub gene_weight: f64,
    pub k: usize,
}

/// A gene or pathway resolved to genotype columns.
#[derive(Debug, Clone, PartialEq)]
pub struct TestUnit {
    pub id: String,
    pub kind: UnitKind,
    /// Distinct genotype columns touched by the unit.
    pub cols: Vec<usize>,
    pub blocks: Vec<GeneBlock>,
}

impl TestUnit {
    pub fn gene(gene: &Gene) -> Result<Self> {
        if gene.is_empty() {
            return Err(Error::Config(format!("gene {} has no SNPs", gene.id)));
        }
        Ok(Self {
            id: gene.id.clone(),
            kind: UnitKind::Gene,
            cols: gene.snps.clone(),
            blocks: vec![GeneBlock {
                members: (0..gene.len()).collect(),
                snp_weights: gene.weights.clone(),
                gene_weight: 1.0,
                k: gene.len(),
            }],
        })
    }

    /// All `n_snps` columns as one unweighted gene.
    pub fn whole_gene(id: impl Into<String>, n_snps: usize) -> Self {
        Self::gene(&Gene::unweighted(id, (0..n_snps).collect())).expect("non-empty gene")
    }

    pub fn pathway(pathway: &Pathway, genemap: &GeneMap) -> Result<Self> {
        let mut cols: Vec<usize> = Vec::new();
        let mut blocks = Vec::with_capacity(pathway.members.len());
        for m in &pathway.members {
            let gene = genemap.get(&m.gene).ok_or_else(|| {
                Error::Config(format!("pathway {}: gene {} not in gene map", pathway.id, m.gene))
            })?;
            if m.n_snps == 0 || gene.is_empty() {
                return Err(Error::Config(format!(
                    "pathway {}: gene {} has no SNPs",
                    pathway.id, m.gene
                )));
            }
            let members = gene
                .snps
                .iter()
                .map(|&s| match cols.iter().position(|&c| c == s) {
                    Some(pos) => pos,
                    None => {
                        cols.push(s);
                        cols.len() - 1
                    }
                })
                .collect();
            blocks.push(GeneBlock {
                members,
                snp_weights: gene.weights.clone(),
                gene_weight: m.weight,
                k: m.n_snps,
            });
        }
        if blocks.is_empty() {
            return Err(Error::Config(format!("pathway {} has no genes", pathway.id)));
        }
        Ok(Self {
            id: pathway.id.clone(),
            kind: UnitKind::Pathway,
            cols,
            blocks,
        })
    }

    pub fn n_snps(&self) -> usize {
        self.cols.len()
    }
}

/// `(sum_j (v_j |U_j|)^gamma)^(1/gamma)`, or `max_j v_j |U_j|` for infinite gamma.
pub fn spu_gene_stat(u: &[f64], weights: Option<&[f64]>, gamma: Gamma) -> f64 {
    let scaled = |j: usize| weights.map_or(1.0, |v| v[j]) * u[j].abs();
    let max = (0..u.len()).map(scaled).fold(0.0, f64::max);
    if gamma.is_infinite() || max == 0.0 {
        return max;
    }
    let g = gamma.value();
    // factor out the max so large scores cannot overflow at high gamma
    let sum: f64 = (0..u.len()).map(|j| (scaled(j) / max).powf(g)).sum();
    max * sum.powf(1.0 / g)
}

/// Pathway statistic
/// `sum_g ( q_g ( sum_{s in G_g} (v_s |U_s|)^gamma / k_g )^(1/gamma) )^gamma_G`.
///
/// `u` is indexed by the unit's columns, which [`GeneBlock::members`] point into.
pub fn spu_pathway_stat(u: &[f64], blocks: &[GeneBlock], gamma: Gamma, gamma_g: Gamma) -> Result<f64> {
    if gamma.is_infinite() || gamma_g.is_infinite() {
        return Err(Error::Config("pathway statistics need finite exponents".into()));
    }
    let mut total = 0.0;
    for block in blocks {
        if block.k == 0 {
            return Err(Error::Config("gene with k = 0 SNPs".into()));
        }
        total += (block.gene_weight * gene_level(u, block, gamma.value())).powf(gamma_g.value());
    }
    Ok(total)
}

fn gene_level(u: &[f64], block: &GeneBlock, g: f64) -> f64 {
    let sum: f64 = block
        .members
        .iter()
        .zip(&block.snp_weights)
        .map(|(&m, &v)| (v * u[m].abs()).powf(g))
        .sum();
    (sum / block.k as f64).powf(1.0 / g)
}

/// Writes every statistic of the unit's grid for score `u` into `out`.
fn unit_stats(unit: &TestUnit, grid: &GammaGrid, u: &[f64], gene_level_buf: &mut [f64], out: &mut Vec<f64>) {
    out.clear();
    match unit.kind {
        UnitKind::Gene => {
            let block = &unit.blocks[0];
            let mut scaled = Vec::with_capacity(block.members.len());
            scaled.extend(block.members.iter().zip(&block.snp_weights).map(|(&m, &v)| v * u[m].abs()));
            for &g in &grid.snp {
                out.push(spu_gene_stat(&scaled, None, g));
            }
        }
        UnitKind::Pathway => {
            for &g in &grid.snp {
                for (slot, block) in gene_level_buf.iter_mut().zip(&unit.blocks) {
                    *slot = block.gene_weight * gene_level(u, block, g.value());
                }
                for &gg in &grid.gene {
                    out.push(gene_level_buf.iter().map(|x| x.powf(gg.value())).sum());
                }
            }
        }
    }
}

/// Self-inclusive empirical p-values.
///
/// `stats[c][b]` is statistic `c` on permutation `b` (b = 0 observed). Returns
/// `p[c][b] = #{b' : stats[c][b'] >= stats[c][b]} / (B+1)` and
/// `p_min[b] = min_c p[c][b]`.
pub fn empirical_pvalues(stats: &[Vec<f64>]) -> (Vec<Vec<f64>>, Vec<f64>) {
    let total = stats.first().map_or(0, Vec::len);
    let denom = total as f64;
    let mut p_min = vec![f64::INFINITY; total];
    let p: Vec<Vec<f64>> = stats
        .iter()
        .map(|column| {
            let mut sorted = column.clone();
            sorted.sort_by(f64::total_cmp);
            column
                .iter()
                .map(|&x| {
                    let below = sorted.partition_point(|&y| y < x);
                    (total - below) as f64 / denom
                })
                .collect()
        })
        .collect();
    for column in &p {
        for (m, &v) in p_min.iter_mut().zip(column) {
            *m = m.min(v);
        }
    }
    (p, p_min)
}

/// Adaptive p-value from `p_min^0` and the permutation minima `p_min^1..B`.
pub fn aspus_pvalue(p_min_observed: f64, p_min_perms: &[f64], convention: PValueConvention) -> f64 {
    let (hits, extra) = match convention {
        PValueConvention::Standard => (p_min_perms.iter().filter(|&&p| p <= p_min_observed).count(), 0),
        PValueConvention::PlusOne => (p_min_perms.iter().filter(|&&p| p <= p_min_observed).count(), 1),
        PValueConvention::AsPrinted => (p_min_perms.iter().filter(|&&p| p_min_observed <= p).count(), 0),
    };
    (hits + extra) as f64 / (p_min_perms.len() + 1) as f64
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct SpuResult {
    pub labels: Vec<String>,
    /// Observed statistics `u^0`, one per label.
    pub observed: Vec<f64>,
    /// Per-label empirical p-values `p^0`.
    pub p_spu: Vec<f64>,
    pub p_min: f64,
    pub p_aspus: f64,
    /// Adaptive p-value after the first batch alone.
    pub p_initial: f64,
    pub perms_used: usize,
    pub early_stopped: bool,
}

fn summarize(labels: &[String], stats: &[Vec<f64>], upto: usize, convention: PValueConvention) -> (Vec<f64>, f64, f64) {
    let view: Vec<Vec<f64>> = stats.iter().map(|c| c[..=upto].to_vec()).collect();
    let (p, p_min) = empirical_pvalues(&view);
    debug_assert_eq!(p.len(), labels.len());
    let p_spu = p.iter().map(|c| c[0]).collect();
    let p_aspus = aspus_pvalue(p_min[0], &p_min[1..], convention);
    (p_spu, p_min[0], p_aspus)
}

/// Runs the two-stage permutation test on one unit.
///
/// Permutations `1..=b_init` are drawn first. When their adaptive p-value is
/// at least `theta` the unit stops there; otherwise permutations up to `b`
/// are added and everything is re-ranked over the full set.
pub fn run_adaptive_test(
    dataset: &SurvivalDataset,
    wt: &WeightTable,
    unit: &TestUnit,
    grid: &GammaGrid,
    plan: &PermPlan,
) -> Result<SpuResult> {
    plan.validate()?;
    grid.check_for(unit.kind)?;
    if wt.n() != dataset.n() {
        return Err(Error::Config("weight table was built for a different dataset".into()));
    }
    if let Some(&bad) = unit.cols.iter().find(|&&c| c >= dataset.n_snps()) {
        return Err(Error::Config(format!("unit {} references column {bad}", unit.id)));
    }

    let n = dataset.n();
    let labels = grid.labels(unit.kind);
    let kernel = ScoreKernel::new(dataset, &unit.cols);
    let seed = rng::unit_seed(plan.seed, &unit.id);

    let mut stats: Vec<Vec<f64>> = vec![Vec::with_capacity(plan.b + 1); labels.len()];
    let mut u = vec![0.0; unit.cols.len()];
    let mut gene_buf = vec![0.0; unit.blocks.len()];
    let mut row = Vec::with_capacity(labels.len());
    let mut perm = vec![0; n];
    let mut inverse = vec![0; n];

    let mut push = |u: &[f64], stats: &mut Vec<Vec<f64>>| {
        unit_stats(unit, grid, u, &mut gene_buf, &mut row);
        for (col, &v) in stats.iter_mut().zip(&row) {
            col.push(v);
        }
    };

    kernel.observed_into(wt, &mut u);
    push(&u, &mut stats);
    let mut draw = |b: usize, stats: &mut Vec<Vec<f64>>| {
        rng::fill_permutation(seed, b as u64, &mut perm);
        kernel.permuted_into(wt, &perm, &mut inverse, &mut u);
        push(&u, stats);
    };

    for b in 1..=plan.b_init {
        draw(b, &mut stats);
    }
    let (p_spu, p_min, p_initial) = summarize(&labels, &stats, plan.b_init, plan.convention);
    if plan.b_init == plan.b || (plan.can_stop_early() && p_initial >= plan.theta) {
        return Ok(SpuResult {
            observed: stats.iter().map(|c| c[0]).collect(),
            labels,
            p_spu,
            p_min,
            p_aspus: p_initial,
            p_initial,
            perms_used: plan.b_init,
            early_stopped: plan.b_init < plan.b,
        });
    }

    for b in plan.b_init + 1..=plan.b {
        draw(b, &mut stats);
    }
    let (p_spu, p_min, p_aspus) = summarize(&labels, &stats, plan.b, plan.convention);
    Ok(SpuResult {
        observed: stats.iter().map(|c| c[0]).collect(),
        labels,
        p_spu,
        p_min,
        p_aspus,
        p_initial,
        perms_used: plan.b,
        early_stopped: false,
    })
}

/// Tests many units in parallel. Each unit's permutations come from its own
/// stream, so results do not depend on the thread count.
pub fn scan(
    dataset: &SurvivalDataset,
    wt: &WeightTable,
    units: &[TestUnit],
    grid: &GammaGrid,
    plan: &PermPlan,
) -> Vec<Result<SpuResult>> {
    units
        .par_iter()
        .map(|unit| run_adaptive_test(dataset, wt, unit, grid, plan))
        .collect()
}

/// Writes `unit_id,unit_type,n_snps,p_aspus,perms_used,early_stopped,p_spu_<label>...`.
pub fn write_results_csv(path: impl AsRef<Path>, rows: &[(&TestUnit, &SpuResult)]) -> Result<()> {
    let path = path.as_ref();
    let io_err = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = std::fs::File::create(path).map_err(io_err)?;
    let mut w = std::io::BufWriter::new(file);
    write_results(&mut w, rows).map_err(io_err)?;
    w.flush().map_err(io_err)
}

pub fn write_results<W: Write>(w: &mut W, rows: &[(&TestUnit, &SpuResult)]) -> std::io::Result<()> {
    let labels = rows.first().map(|(_, r)| r.labels.clone()).unwrap_or_default();
    write!(w, "unit_id,unit_type,n_snps,p_aspus,perms_used,early_stopped")?;
    for l in &labels {
        write!(w, ",p_spu_{l}")?;
    }
    writeln!(w)?;
    for (unit, res) in rows {
        write!(
            w,
            "{},{},{},{},{},{}",
            unit.id,
            unit.kind,
            unit.n_snps(),
            res.p_aspus,
            res.perms_used,
            res.early_stopped
        )?;
        for p in &res.p_spu {
            write!(w, ",{p}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}
