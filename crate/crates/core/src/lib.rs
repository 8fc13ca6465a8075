//! Adaptive sum-of-powered-score (aSPUS) association tests for rare variants
//! with right-censored survival outcomes.
//!
//! The pipeline for one analysis is:
//!
//! 1. [`coxnull::fit_null`] fits the covariates-only Cox model.
//! 2. [`score::build_weight_table`] precomputes the risk-set weights, which do
//!    not depend on the genotypes and therefore survive every permutation.
//! 3. [`spu::run_adaptive_test`] scores the observed and index-permuted
//!    genotypes for a gene or pathway and combines the SPU statistics into an
//!    adaptive p-value, stopping early when the first batch is unremarkable.
//!
//! [`simgen`] generates synthetic cohorts and [`bench`] drives replicate
//! experiments (Type-I error, power, timing) on top of them.
//!
//! ```no_run
//! use aspus::{coxnull, score, spu, survdata};
//! # fn main() -> aspus::Result<()> {
//! let data = survdata::load_dataset("geno.csv", "pheno.csv", Some("covar.csv"))?;
//! let null = coxnull::fit_null(&data, &coxnull::FitOptions::default())?;
//! let table = score::build_weight_table(&data, &null)?;
//! let unit = spu::TestUnit::whole_gene("gene1", data.n_snps());
//! let result = spu::run_adaptive_test(
//!     &data,
//!     &table,
//!     &unit,
//!     &spu::GammaGrid::gene_default(),
//!     &spu::PermPlan::default(),
//! )?;
//! println!("p = {}", result.p_aspus);
//! # Ok(())
//! # }
//! ```

pub mod bench;
pub mod coxnull;
pub mod error;
pub mod memory;
pub mod rng;
pub mod score;
pub mod simgen;
pub mod spu;
pub mod survdata;

pub use error::{Error, Result};
