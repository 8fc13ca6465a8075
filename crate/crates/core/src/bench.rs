//! Replicate orchestration for Type-I-error, power and timing experiments.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{Beta, ContinuousCDF, Discrete, Hypergeometric};

use crate::coxnull::{fit_null, FitOptions};
use crate::memory;
use crate::rng;
use crate::score::build_weight_table;
use crate::simgen::{build_scenario, CausalLayout, LdStructure, Scenario, SimOutput};
use crate::spu::{run_adaptive_test, GammaGrid, PermPlan, SpuResult, TestUnit, UnitKind};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Cell {
    pub label: String,
    pub scenario: Scenario,
}

impl Cell {
    pub fn new(label: impl Into<String>, scenario: Scenario) -> Self {
        Self {
            label: label.into(),
            scenario,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub cells: Vec<Cell>,
    pub replicates: usize,
    pub alpha: f64,
    pub plan: PermPlan,
    /// `None` uses the default grid for the unit type.
    pub grid: Option<GammaGrid>,
    pub fit: FitOptions,
    pub master_seed: u64,
    /// Worker threads; `None` uses the global pool.
    pub threads: Option<usize>,
    pub ci_level: f64,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            cells: Vec::new(),
            replicates: 200,
            alpha: 0.05,
            plan: PermPlan::default(),
            grid: None,
            fit: FitOptions::default(),
            master_seed: 2024,
            threads: None,
            ci_level: 0.95,
        }
    }
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.cells.is_empty() {
            return Err(Error::Config("experiment has no cells".into()));
        }
        if self.replicates < 1 {
            return Err(Error::Config("need at least one replicate".into()));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::Config(format!("alpha {} must lie in (0, 1]", self.alpha)));
        }
        if !(self.ci_level > 0.0 && self.ci_level < 1.0) {
            return Err(Error::Config(format!("CI level {} must lie in (0, 1)", self.ci_level)));
        }
        self.plan.validate()?;
        for cell in &self.cells {
            cell.scenario.validate()?;
        }
        Ok(())
    }
}

/// Gene-based Type-I cells: {independent, correlated} x `snp_counts`.
pub fn gene_type1_cells(snp_counts: &[usize], n: usize) -> Vec<Cell> {
    let mut cells = Vec::new();
    for ld in [LdStructure::Independent, LdStructure::correlated()] {
        for &p in snp_counts {
            let scenario = Scenario {
                n,
                ld,
                layout: CausalLayout::Gene { n_snps: p, n_causal: 0 },
                ..Scenario::default()
            };
            cells.push(Cell::new(format!("gene_{}_{p}snps", ld.label()), scenario));
        }
    }
    cells
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Replicate {
    pub seed: u64,
    pub p_aspus: f64,
    pub perms_used: usize,
    pub early_stopped: bool,
    pub event_rate: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellResult {
    pub label: String,
    pub scenario: Scenario,
    pub replicates: usize,
    pub rejections: usize,
    pub rate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub mean_seconds: f64,
    pub mean_perms: f64,
    pub early_stop_fraction: f64,
    pub mean_event_rate: f64,
    pub runs: Vec<Replicate>,
}

impl CellResult {
    pub fn p_values(&self) -> Vec<f64> {
        self.runs.iter().map(|r| r.p_aspus).collect()
    }
}

/// One-sided comparison `rate(higher) > rate(lower)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrendCheck {
    pub higher: String,
    pub lower: String,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentResult {
    pub alpha: f64,
    pub ci_level: f64,
    pub cells: Vec<CellResult>,
    pub trends: Vec<TrendCheck>,
}

impl ExperimentResult {
    pub fn cell(&self, label: &str) -> Option<&CellResult> {
        self.cells.iter().find(|c| c.label == label)
    }
}

/// Exact (Clopper-Pearson) interval for `x` successes out of `n`.
pub fn clopper_pearson(x: usize, n: usize, level: f64) -> (f64, f64) {
    assert!(n > 0 && x <= n, "need 0 <= x <= n, n > 0");
    let tail = (1.0 - level) / 2.0;
    let (xf, nf) = (x as f64, n as f64);
    let low = if x == 0 {
        0.0
    } else {
        Beta::new(xf, nf - xf + 1.0).expect("positive shapes").inverse_cdf(tail)
    };
    let high = if x == n {
        1.0
    } else {
        Beta::new(xf + 1.0, nf - xf).expect("positive shapes").inverse_cdf(1.0 - tail)
    };
    (low, high)
}

/// Fisher's exact test, one-sided for `x1/n1 > x2/n2`.
pub fn fisher_one_sided(x1: usize, n1: usize, x2: usize, n2: usize) -> f64 {
    let total = x1 + x2;
    let hyper = Hypergeometric::new((n1 + n2) as u64, total as u64, n1 as u64).expect("valid table");
    let top = total.min(n1);
    (x1..=top).map(|k| hyper.pmf(k as u64)).sum::<f64>().min(1.0)
}

pub fn trend_check(higher: &CellResult, lower: &CellResult) -> TrendCheck {
    TrendCheck {
        higher: higher.label.clone(),
        lower: lower.label.clone(),
        p_value: fisher_one_sided(higher.rejections, higher.replicates, lower.rejections, lower.replicates),
    }
}

fn unit_for(sim: &SimOutput, scenario: &Scenario) -> Result<TestUnit> {
    if scenario.is_pathway() {
        let map = sim.pathways.as_ref().expect("pathway scenario has a pathway map");
        let pathway = map
            .pathways()
            .next()
            .ok_or_else(|| Error::Validation("simulated pathway is empty".into()))?;
        TestUnit::pathway(pathway, &sim.genemap)
    } else {
        let gene = sim
            .genemap
            .genes()
            .next()
            .ok_or_else(|| Error::Validation("simulated gene has no SNPs left".into()))?;
        TestUnit::gene(gene)
    }
}

/// Simulates one replicate and runs the full test pipeline on it.
pub fn run_replicate(scenario: &Scenario, seed: u64, spec: &ExperimentSpec) -> Result<Replicate> {
    let scenario = Scenario {
        seed,
        ..scenario.clone()
    };
    let sim = build_scenario(&scenario)?;
    let unit = unit_for(&sim, &scenario)?;
    let grid = spec.grid.clone().unwrap_or_else(|| GammaGrid::default_for(unit.kind));
    let plan = PermPlan { seed, ..spec.plan };

    let start = Instant::now();
    let null = fit_null(&sim.dataset, &spec.fit)?;
    null.ensure_usable(false)?;
    let wt = build_weight_table(&sim.dataset, &null)?;
    let res = run_adaptive_test(&sim.dataset, &wt, &unit, &grid, &plan)?;
    let seconds = start.elapsed().as_secs_f64();

    Ok(Replicate {
        seed,
        p_aspus: res.p_aspus,
        perms_used: res.perms_used,
        early_stopped: res.early_stopped,
        event_rate: sim.truth.event_rate,
        seconds,
    })
}

fn summarize_cell(cell: &Cell, runs: Vec<Replicate>, alpha: f64, ci_level: f64) -> CellResult {
    let r = runs.len();
    let rejections = runs.iter().filter(|x| x.p_aspus <= alpha).count();
    let (ci_low, ci_high) = clopper_pearson(rejections, r, ci_level);
    let mean = |f: &dyn Fn(&Replicate) -> f64| runs.iter().map(f).sum::<f64>() / r as f64;
    CellResult {
        label: cell.label.clone(),
        scenario: cell.scenario.clone(),
        replicates: r,
        rejections,
        rate: rejections as f64 / r as f64,
        ci_low,
        ci_high,
        mean_seconds: mean(&|x| x.seconds),
        mean_perms: mean(&|x| x.perms_used as f64),
        early_stop_fraction: mean(&|x| f64::from(u8::from(x.early_stopped))),
        mean_event_rate: mean(&|x| x.event_rate),
        runs,
    }
}

fn run_cells(spec: &ExperimentSpec) -> Result<Vec<CellResult>> {
    spec.validate()?;
    let jobs: Vec<(usize, usize)> = (0..spec.cells.len())
        .flat_map(|c| (0..spec.replicates).map(move |r| (c, r)))
        .collect();
    let work = || -> Result<Vec<Replicate>> {
        jobs.par_iter()
            .map(|&(c, r)| {
                let seed = rng::replicate_seed(spec.master_seed, c as u64, r as u64);
                run_replicate(&spec.cells[c].scenario, seed, spec).map_err(|e| match e {
                    Error::Config(m) => Error::Config(format!("{} replicate {r}: {m}", spec.cells[c].label)),
                    other => other,
                })
            })
            .collect()
    };
    let runs = match spec.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(work)?,
        None => work()?,
    };
    let mut runs = runs.into_iter();
    Ok(spec
        .cells
        .iter()
        .map(|cell| {
            let chunk: Vec<Replicate> = runs.by_ref().take(spec.replicates).collect();
            summarize_cell(cell, chunk, spec.alpha, spec.ci_level)
        })
        .collect())
}

/// Null experiments: every cell must have `effect_a == 0`.
pub fn run_type1(spec: &ExperimentSpec) -> Result<ExperimentResult> {
    if let Some(cell) = spec.cells.iter().find(|c| c.scenario.effect_a != 0.0) {
        return Err(Error::Config(format!(
            "Type-I cell {} has effect size {}",
            cell.label, cell.scenario.effect_a
        )));
    }
    Ok(ExperimentResult {
        alpha: spec.alpha,
        ci_level: spec.ci_level,
        cells: run_cells(spec)?,
        trends: Vec::new(),
    })
}

/// Power experiments. Trend checks compare cells that differ only in effect
/// size, each against the next larger one.
pub fn run_power(spec: &ExperimentSpec) -> Result<ExperimentResult> {
    if spec.cells.iter().all(|c| c.scenario.effect_a == 0.0) {
        return Err(Error::Config("power experiment needs a cell with effect size > 0".into()));
    }
    let cells = run_cells(spec)?;
    let key = |s: &Scenario| Scenario {
        effect_a: 0.0,
        seed: 0,
        ..s.clone()
    };
    let mut trends = Vec::new();
    let mut seen = vec![false; cells.len()];
    for i in 0..cells.len() {
        if seen[i] {
            continue;
        }
        let mut group: Vec<usize> = (i..cells.len())
            .filter(|&j| key(&cells[j].scenario) == key(&cells[i].scenario))
            .collect();
        for &j in &group {
            seen[j] = true;
        }
        group.sort_by(|&a, &b| cells[a].scenario.effect_a.total_cmp(&cells[b].scenario.effect_a));
        for w in group.windows(2) {
            trends.push(trend_check(&cells[w[1]], &cells[w[0]]));
        }
    }
    Ok(ExperimentResult {
        alpha: spec.alpha,
        ci_level: spec.ci_level,
        cells,
        trends,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimingSpec {
    pub n: usize,
    pub n_snps: usize,
    pub replicates: usize,
    pub plan: PermPlan,
    pub master_seed: u64,
}

impl Default for TimingSpec {
    fn default() -> Self {
        Self {
            n: 2000,
            n_snps: 80,
            replicates: 10,
            plan: PermPlan::default(),
            master_seed: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimingRun {
    pub seed: u64,
    pub fit_seconds: f64,
    pub table_seconds: f64,
    pub test_seconds: f64,
    pub perms_used: usize,
    pub early_stopped: bool,
    pub p_aspus: f64,
    /// Peak bytes allocated during the test beyond what was live before it.
    pub peak_test_bytes: Option<usize>,
    pub dataset_bytes: usize,
    pub table_bytes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimingResult {
    pub spec: TimingSpec,
    pub runs: Vec<TimingRun>,
    pub median_test_seconds: f64,
    pub mean_test_seconds: f64,
    pub max_peak_ratio: Option<f64>,
}

pub fn median(values: &[f64]) -> f64 {
    assert!(!values.is_empty(), "median of nothing");
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Null gene dataset used for timing.
pub fn timing_scenario(spec: &TimingSpec, seed: u64) -> Scenario {
    Scenario {
        n: spec.n,
        layout: CausalLayout::Gene {
            n_snps: spec.n_snps,
            n_causal: 0,
        },
        seed,
        ..Scenario::default()
    }
}

/// Times the gene test on the calling thread.
pub fn run_timing(spec: &TimingSpec) -> Result<TimingResult> {
    spec.plan.validate()?;
    if spec.replicates < 1 {
        return Err(Error::Config("need at least one replicate".into()));
    }
    let grid = GammaGrid::default_for(UnitKind::Gene);
    let mut runs = Vec::with_capacity(spec.replicates);
    for r in 0..spec.replicates {
        let seed = rng::replicate_seed(spec.master_seed, 0, r as u64);
        let sim = build_scenario(&timing_scenario(spec, seed))?;
        let unit = TestUnit::whole_gene("gene1", sim.dataset.n_snps());
        let plan = PermPlan { seed, ..spec.plan };

        let t = Instant::now();
        let null = fit_null(&sim.dataset, &FitOptions::default())?;
        null.ensure_usable(false)?;
        let fit_seconds = t.elapsed().as_secs_f64();
        let t = Instant::now();
        let wt = build_weight_table(&sim.dataset, &null)?;
        let table_seconds = t.elapsed().as_secs_f64();

        let t = Instant::now();
        let (res, peak) = memory::measure_peak(|| run_adaptive_test(&sim.dataset, &wt, &unit, &grid, &plan));
        let test_seconds = t.elapsed().as_secs_f64();
        let res: SpuResult = res?;
        runs.push(TimingRun {
            seed,
            fit_seconds,
            table_seconds,
            test_seconds,
            perms_used: res.perms_used,
            early_stopped: res.early_stopped,
            p_aspus: res.p_aspus,
            peak_test_bytes: peak,
            dataset_bytes: sim.dataset.payload_bytes(),
            table_bytes: wt.bytes(),
        });
    }
    let secs: Vec<f64> = runs.iter().map(|r| r.test_seconds).collect();
    let max_peak_ratio = runs
        .iter()
        .map(|r| r.peak_test_bytes.map(|p| p as f64 / r.dataset_bytes as f64))
        .collect::<Option<Vec<f64>>>()
        .map(|v| v.into_iter().fold(0.0, f64::max));
    Ok(TimingResult {
        spec: spec.clone(),
        median_test_seconds: median(&secs),
        mean_test_seconds: secs.iter().sum::<f64>() / secs.len() as f64,
        runs,
        max_peak_ratio,
    })
}

/// `label,unit_type,ld,n_snps,effect_a,n_causal,replicates,rejections,rate,ci_low,ci_high,mean_seconds,mean_perms,early_stop_fraction,mean_event_rate`.
pub fn write_results<W: Write>(w: &mut W, result: &ExperimentResult) -> std::io::Result<()> {
    writeln!(
        w,
        "label,unit_type,ld,n_snps,effect_a,n_causal,replicates,rejections,rate,ci_low,ci_high,mean_seconds,mean_perms,early_stop_fraction,mean_event_rate"
    )?;
    for c in &result.cells {
        let s = &c.scenario;
        let (kind, n_snps, n_causal) = match s.layout {
            CausalLayout::Gene { n_snps, n_causal } => ("gene", n_snps.to_string(), n_causal),
            CausalLayout::Pathway {
                n_genes,
                n_causal_genes,
                ..
            } => ("pathway", format!("{n_genes}genes"), n_causal_genes),
        };
        writeln!(
            w,
            "{},{kind},{},{n_snps},{},{n_causal},{},{},{},{},{},{},{},{},{}",
            c.label,
            s.ld.label(),
            s.effect_a,
            c.replicates,
            c.rejections,
            c.rate,
            c.ci_low,
            c.ci_high,
            c.mean_seconds,
            c.mean_perms,
            c.early_stop_fraction,
            c.mean_event_rate
        )?;
    }
    Ok(())
}

/// `label,rank,observed_log10,expected_log10`, sorted by observed p.
/// Zero p-values are floored at `1/(B+1)` for the log scale.
pub fn write_qq<W: Write>(w: &mut W, result: &ExperimentResult, b: usize) -> std::io::Result<()> {
    writeln!(w, "label,rank,observed_log10,expected_log10")?;
    let floor = 1.0 / (b + 1) as f64;
    for c in &result.cells {
        let mut p = c.p_values();
        p.sort_by(f64::total_cmp);
        let m = p.len() as f64;
        for (i, &v) in p.iter().enumerate() {
            let expected = (i as f64 + 0.5) / m;
            writeln!(w, "{},{},{},{}", c.label, i + 1, -v.max(floor).log10(), -expected.log10())?;
        }
    }
    Ok(())
}

/// Writes `results.csv` and `qq.csv` into `dir`.
pub fn write_outputs(dir: impl AsRef<Path>, result: &ExperimentResult, b: usize) -> Result<()> {
    let dir = dir.as_ref();
    let write = |name: &str, f: &dyn Fn(&mut std::io::BufWriter<std::fs::File>) -> std::io::Result<()>| {
        let path = dir.join(name);
        let io = |source| Error::Io {
            path: path.clone(),
            source,
        };
        let mut out = std::io::BufWriter::new(std::fs::File::create(&path).map_err(io)?);
        f(&mut out).map_err(io)?;
        out.flush().map_err(io)
    };
    std::fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    write("results.csv", &|o| write_results(o, result))?;
    write("qq.csv", &|o| write_qq(o, result, b))
}
