use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use aspus::bench::{self, Cell, ExperimentSpec, TimingSpec};
use aspus::coxnull::{self, FitOptions};
use aspus::memory::TrackingAllocator;
use aspus::score;
use aspus::simgen::{self, CausalLayout, LdStructure, Scenario, SnpsPerGene};
use aspus::spu::{self, Gamma, GammaGrid, PValueConvention, PermPlan, TestUnit, UnitKind};
use aspus::survdata;
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};

#[global_allocator]
static ALLOC: TrackingAllocator = TrackingAllocator;

#[derive(Parser)]
#[command(name = "aspus", version, about = "Adaptive SPU rare-variant tests for survival outcomes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Test genes or pathways on a dataset
    Test(TestArgs),
    /// Generate a synthetic dataset
    Simulate(SimulateArgs),
    /// Null rejection rates over simulated replicates
    BenchType1(Type1Args),
    /// Power over simulated replicates
    BenchPower(PowerArgs),
    /// Single-thread runtime and memory of one gene test
    BenchTiming(TimingArgs),
}

#[derive(Args, Clone)]
struct PlanArgs {
    /// Total permutations
    #[arg(long, default_value_t = 500)]
    b: usize,
    /// Permutations in the first batch
    #[arg(long, default_value_t = 40)]
    b_init: usize,
    /// Stop after the first batch when its adaptive p-value is >= theta (1 disables)
    #[arg(long, default_value_t = 0.1)]
    theta: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Report (1 + count) / (B + 1) instead of count / (B + 1)
    #[arg(long, conflicts_with = "as_printed")]
    plus_one: bool,
    /// Count permutations with p_min >= the observed p_min (reversed comparison)
    #[arg(long)]
    as_printed: bool,
}

impl PlanArgs {
    fn plan(&self) -> Result<PermPlan> {
        let plan = PermPlan {
            b: self.b,
            b_init: self.b_init.min(self.b),
            theta: self.theta,
            seed: self.seed,
            convention: if self.plus_one {
                PValueConvention::PlusOne
            } else if self.as_printed {
                PValueConvention::AsPrinted
            } else {
                PValueConvention::Standard
            },
        };
        plan.validate()?;
        Ok(plan)
    }
}

#[derive(Args)]
struct TestArgs {
    #[arg(long)]
    geno: PathBuf,
    #[arg(long)]
    pheno: PathBuf,
    #[arg(long)]
    covar: Option<PathBuf>,
    #[arg(long)]
    genemap: PathBuf,
    /// Pathway map; required with --unit pathway
    #[arg(long)]
    pathways: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = UnitArg::Gene)]
    unit: UnitArg,
    #[command(flatten)]
    plan: PlanArgs,
    /// Newton tolerance on the score max-norm
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    #[arg(long, default_value_t = 25)]
    max_iter: usize,
    /// Continue when the null fit does not converge
    #[arg(long)]
    allow_unconverged: bool,
    /// SNP-level exponents, e.g. 1,2,4,8,inf
    #[arg(long, value_delimiter = ',')]
    gammas: Option<Vec<Gamma>>,
    /// Gene-level exponents for pathway tests
    #[arg(long, value_delimiter = ',')]
    gamma_g: Option<Vec<Gamma>>,
    #[arg(long)]
    threads: Option<usize>,
    /// Results CSV; stdout when omitted
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum UnitArg {
    Gene,
    Pathway,
}

#[derive(Clone, Copy, ValueEnum)]
enum LdArg {
    Independent,
    Correlated,
}

impl LdArg {
    fn structure(self) -> LdStructure {
        match self {
            LdArg::Independent => LdStructure::Independent,
            LdArg::Correlated => LdStructure::correlated(),
        }
    }
}

#[derive(Args)]
struct SimulateArgs {
    /// Numbered scenario (1-6); other flags override its fields
    #[arg(long)]
    scenario: Option<u8>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, value_enum)]
    ld: Option<LdArg>,
    /// SNPs in the gene (gene layout)
    #[arg(long)]
    n_snps: Option<usize>,
    /// Causal SNPs (gene layout) or causal genes (pathway layout)
    #[arg(long)]
    n_causal: Option<usize>,
    /// Switch to a pathway layout with this many genes
    #[arg(long)]
    n_genes: Option<usize>,
    /// SNPs per gene as K or MIN-MAX (pathway layout)
    #[arg(long)]
    snps_per_gene: Option<String>,
    #[arg(long)]
    effect: Option<f64>,
    #[arg(long)]
    covar_beta: Option<f64>,
    #[arg(long)]
    n_covars: Option<usize>,
    #[arg(long)]
    event_target: Option<f64>,
    #[arg(long)]
    drop_causal: bool,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CommonBench {
    #[arg(long, default_value_t = 200)]
    replicates: usize,
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[command(flatten)]
    plan: PlanArgs,
    /// Master seed for replicate generation
    #[arg(long, default_value_t = 2024)]
    master_seed: u64,
    #[arg(long)]
    threads: Option<usize>,
    /// Directory for results.csv and qq.csv
    #[arg(long)]
    out: PathBuf,
}

impl CommonBench {
    fn spec(&self, cells: Vec<Cell>) -> Result<ExperimentSpec> {
        Ok(ExperimentSpec {
            cells,
            replicates: self.replicates,
            alpha: self.alpha,
            plan: self.plan()?,
            master_seed: self.master_seed,
            threads: self.threads,
            ..ExperimentSpec::default()
        })
    }

    fn plan(&self) -> Result<PermPlan> {
        self.plan.plan()
    }
}

#[derive(Args)]
struct Type1Args {
    #[command(flatten)]
    common: CommonBench,
    /// Gene sizes for the gene-based cells
    #[arg(long, value_delimiter = ',', default_values_t = vec![10, 50])]
    snps: Vec<usize>,
    /// Add an independent pathway cell with this many SNPs per gene (20 genes)
    #[arg(long)]
    pathway_snps: Option<usize>,
    /// Skip the gene-based cells
    #[arg(long)]
    no_gene: bool,
}

#[derive(Args)]
struct PowerArgs {
    #[command(flatten)]
    common: CommonBench,
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.0, 0.2, 0.4, 0.6])]
    effects: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = vec![3])]
    n_causal: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = vec![50])]
    snps: Vec<usize>,
    #[arg(long, value_enum, default_value_t = LdArg::Correlated)]
    ld: LdArg,
}

#[derive(Args)]
struct TimingArgs {
    #[arg(long, default_value_t = 2000)]
    n: usize,
    #[arg(long, default_value_t = 80)]
    snps: usize,
    #[arg(long, default_value_t = 10)]
    replicates: usize,
    #[command(flatten)]
    plan: PlanArgs,
    #[arg(long, default_value_t = 7)]
    master_seed: u64,
    /// JSON report; stdout when omitted
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Test(a) => run_test(a),
        Command::Simulate(a) => run_simulate(a),
        Command::BenchType1(a) => run_type1(a),
        Command::BenchPower(a) => run_power(a),
        Command::BenchTiming(a) => run_timing(a),
    }
}

fn install_threads(threads: Option<usize>) -> Result<()> {
    if let Some(t) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .context("configuring worker threads")?;
    }
    Ok(())
}

fn grid_from(args: &TestArgs, kind: UnitKind) -> Result<GammaGrid> {
    let default = GammaGrid::default_for(kind);
    let grid = GammaGrid::new(
        args.gammas.clone().unwrap_or(default.snp),
        args.gamma_g.clone().unwrap_or(default.gene),
    )?;
    grid.check_for(kind)?;
    Ok(grid)
}

fn run_test(args: TestArgs) -> Result<()> {
    install_threads(args.threads)?;
    let plan = args.plan.plan()?;
    let dataset = survdata::load_dataset(&args.geno, &args.pheno, args.covar.as_ref())?;
    info!(
        "loaded {} subjects, {} SNPs, {} covariates, {} events",
        dataset.n(),
        dataset.n_snps(),
        dataset.n_covars(),
        dataset.n_events()
    );
    let genemap = survdata::load_genemap(&args.genemap, &dataset)?;
    for w in &genemap.warnings {
        warn!("{w}");
    }

    let (kind, units) = match args.unit {
        UnitArg::Gene => {
            let units = genemap.genes().map(TestUnit::gene).collect::<aspus::Result<Vec<_>>>()?;
            (UnitKind::Gene, units)
        }
        UnitArg::Pathway => {
            let path = args.pathways.as_ref().context("--unit pathway needs --pathways")?;
            let pathways = survdata::load_pathwaymap(path, &genemap)?;
            for w in &pathways.warnings {
                warn!("{w}");
            }
            let units = pathways
                .pathways()
                .map(|p| TestUnit::pathway(p, &genemap))
                .collect::<aspus::Result<Vec<_>>>()?;
            (UnitKind::Pathway, units)
        }
    };
    if units.is_empty() {
        bail!("no testable units");
    }
    let grid = grid_from(&args, kind)?;

    let opts = FitOptions {
        tol: args.tol,
        max_iter: args.max_iter,
        ..FitOptions::default()
    };
    let null = coxnull::fit_null(&dataset, &opts)?;
    if !null.converged {
        warn!(
            "null fit stopped after {} iterations with score max-norm {:e}",
            null.iters, null.max_score
        );
    }
    null.ensure_usable(args.allow_unconverged)?;
    let wt = score::build_weight_table(&dataset, &null)?;

    let start = Instant::now();
    let results = spu::scan(&dataset, &wt, &units, &grid, &plan);
    let mut rows = Vec::with_capacity(units.len());
    for (unit, res) in units.iter().zip(&results) {
        match res {
            Ok(r) => rows.push((unit, r)),
            Err(e) => warn!("unit {} skipped: {e}", unit.id),
        }
    }
    info!("tested {} units in {:.2}s", rows.len(), start.elapsed().as_secs_f64());

    match &args.out {
        Some(path) => spu::write_results_csv(path, &rows)?,
        None => spu::write_results(&mut std::io::stdout().lock(), &rows)?,
    }
    Ok(())
}

fn parse_snps_per_gene(s: &str) -> Result<SnpsPerGene> {
    match s.split_once('-') {
        Some((lo, hi)) => Ok(SnpsPerGene::Uniform {
            min: lo.trim().parse().context("SNPs per gene")?,
            max: hi.trim().parse().context("SNPs per gene")?,
        }),
        None => Ok(SnpsPerGene::Fixed {
            k: s.trim().parse().context("SNPs per gene")?,
        }),
    }
}

fn scenario_from(args: &SimulateArgs) -> Result<Scenario> {
    let mut s = match args.scenario {
        Some(id) => Scenario::numbered(id)?,
        None => Scenario::default(),
    };
    if let Some(n) = args.n {
        s.n = n;
    }
    if let Some(ld) = args.ld {
        s.ld = ld.structure();
    }
    if let Some(a) = args.effect {
        s.effect_a = a;
    }
    if let Some(b) = args.covar_beta {
        s.covar_beta = b;
    }
    if let Some(k) = args.n_covars {
        s.n_covars = k;
    }
    if let Some(t) = args.event_target {
        s.event_target = t;
    }
    s.drop_causal |= args.drop_causal;
    s.seed = args.seed;

    if args.n_genes.is_some() || args.snps_per_gene.is_some() {
        let (mut n_genes, mut per, mut causal) = match s.layout {
            CausalLayout::Pathway {
                n_genes,
                snps_per_gene,
                n_causal_genes,
            } => (n_genes, snps_per_gene, n_causal_genes),
            CausalLayout::Gene { .. } => (20, SnpsPerGene::Uniform { min: 2, max: 20 }, 5),
        };
        if let Some(g) = args.n_genes {
            n_genes = g;
        }
        if let Some(p) = &args.snps_per_gene {
            per = parse_snps_per_gene(p)?;
        }
        if let Some(c) = args.n_causal {
            causal = c;
        }
        s.layout = CausalLayout::Pathway {
            n_genes,
            snps_per_gene: per,
            n_causal_genes: causal,
        };
    } else if let CausalLayout::Gene { n_snps, n_causal } = s.layout {
        s.layout = CausalLayout::Gene {
            n_snps: args.n_snps.unwrap_or(n_snps),
            n_causal: args.n_causal.unwrap_or(n_causal),
        };
    } else if let (CausalLayout::Pathway { n_genes, snps_per_gene, .. }, Some(c)) = (s.layout, args.n_causal) {
        s.layout = CausalLayout::Pathway {
            n_genes,
            snps_per_gene,
            n_causal_genes: c,
        };
    }
    s.validate()?;
    Ok(s)
}

fn run_simulate(args: SimulateArgs) -> Result<()> {
    let scenario = scenario_from(&args)?;
    let out = &args.out;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let sim = simgen::build_scenario(&scenario)?;
    survdata::write_dataset(&sim.dataset, &survdata::DatasetPaths::in_dir(out))?;
    survdata::write_genemap(out.join("genemap.csv"), &sim.genemap, &sim.dataset)?;
    if let Some(p) = &sim.pathways {
        survdata::write_pathwaymap(out.join("pathways.csv"), p)?;
    }
    simgen::write_truth_csv(out.join("truth.csv"), &sim.truth)?;
    simgen::write_scenario_json(out.join("scenario.json"), &scenario)?;
    for w in &sim.genemap.warnings {
        warn!("{w}");
    }
    info!(
        "wrote {} subjects x {} SNPs to {} (event rate {:.3}, tau {:.4})",
        sim.dataset.n(),
        sim.dataset.n_snps(),
        out.display(),
        sim.truth.event_rate,
        sim.truth.tau
    );
    Ok(())
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

fn report(result: &bench::ExperimentResult, b: usize, out: &Path) -> Result<()> {
    bench::write_outputs(out, result, b)?;
    for c in &result.cells {
        info!(
            "{}: {}/{} rejected, rate {:.4} [{:.4}, {:.4}], {:.1} perms/test",
            c.label, c.rejections, c.replicates, c.rate, c.ci_low, c.ci_high, c.mean_perms
        );
    }
    for t in &result.trends {
        info!("trend {} > {}: one-sided p = {:.3e}", t.higher, t.lower, t.p_value);
    }
    Ok(())
}

fn run_type1(args: Type1Args) -> Result<()> {
    let c = &args.common;
    let mut cells = if args.no_gene {
        Vec::new()
    } else {
        bench::gene_type1_cells(&args.snps, c.n)
    };
    if let Some(k) = args.pathway_snps {
        cells.push(Cell::new(
            format!("pathway_independent_{k}snps_per_gene"),
            Scenario {
                n: c.n,
                layout: CausalLayout::Pathway {
                    n_genes: 20,
                    snps_per_gene: SnpsPerGene::Fixed { k },
                    n_causal_genes: 0,
                },
                ..Scenario::default()
            },
        ));
    }
    let spec = c.spec(cells)?;
    let result = bench::run_type1(&spec)?;
    report(&result, spec.plan.b, &c.out)
}

fn run_power(args: PowerArgs) -> Result<()> {
    let c = &args.common;
    let ld = args.ld.structure();
    let mut cells = Vec::new();
    for &p in &args.snps {
        for &k in &args.n_causal {
            for &a in &args.effects {
                cells.push(Cell::new(
                    format!("gene_{}_{p}snps_{k}causal_a{a}", ld.label()),
                    Scenario {
                        n: c.n,
                        ld,
                        layout: CausalLayout::Gene { n_snps: p, n_causal: k },
                        effect_a: a,
                        ..Scenario::default()
                    },
                ));
            }
        }
    }
    let spec = c.spec(cells)?;
    let result = bench::run_power(&spec)?;
    report(&result, spec.plan.b, &c.out)
}

fn run_timing(args: TimingArgs) -> Result<()> {
    let spec = TimingSpec {
        n: args.n,
        n_snps: args.snps,
        replicates: args.replicates,
        plan: args.plan.plan()?,
        master_seed: args.master_seed,
    };
    let result = bench::run_timing(&spec)?;
    info!(
        "median {:.4}s per gene test, mean {:.4}s; peak extra memory {} of one dataset copy",
        result.median_test_seconds,
        result.mean_test_seconds,
        result
            .max_peak_ratio
            .map_or_else(|| "unknown".to_owned(), |r| format!("{r:.3}x"))
    );
    match &args.out {
        Some(path) => write_json(path, &result),
        None => {
            println!("{}", serde_json::to_string_pretty(&result)?);
            Ok(())
        }
    }
}
