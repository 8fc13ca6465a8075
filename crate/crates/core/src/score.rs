//! Risk sets, the permutation-invariant weight table, and SNP score vectors.
//!
//! Under the null the weights
//!
//! ```text
//! omega_j(t) = mu_j I(X_j >= t) / sum_l mu_l I(X_l >= t)
//! ```
//!
//! depend on covariates, times and statuses only. Permuting genotype rows
//! leaves them untouched, so they are built once per dataset. The SNP score
//!
//! ```text
//! U_s = sum_{events i} ( Z_i - sum_j Z_j omega_j(X_i) )
//! ```
//!
//! regroups as `sum_j r_j Z_j` with `r_j = delta_j - sum_{events i} omega_j(X_i)`,
//! and a permuted score is `sum_j r_j Z_{perm(j)}`. Each permutation costs one
//! pass over the genotype rows through an index vector; no permuted matrix is
//! ever built.

use ndarray::{Array2, ArrayView2};

use crate::coxnull::NullModel;
use crate::survdata::SurvivalDataset;
use crate::{Error, Result};

/// Above this many `events x n` entries the weight rows are generated on
/// demand instead of stored (about 400MB of f64).
pub const DENSE_OMEGA_LIMIT: usize = 50_000_000;

/// Risk-set membership `a_ij = I(X_j >= X_i)` for every event time.
///
/// Stored as subjects sorted by time plus, per event, the offset where its
/// risk set begins; the risk set is the suffix from that offset.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskIndicator {
    time: Vec<f64>,
    order: Vec<usize>,
    sorted_time: Vec<f64>,
    events: Vec<usize>,
    start: Vec<usize>,
}

impl RiskIndicator {
    pub fn new(time: &[f64], event: &[bool]) -> Self {
        let mut order: Vec<usize> = (0..time.len()).collect();
        order.sort_by(|&a, &b| time[a].total_cmp(&time[b]).then(a.cmp(&b)));
        let sorted_time: Vec<f64> = order.iter().map(|&i| time[i]).collect();
        let events: Vec<usize> = order.iter().copied().filter(|&i| event[i]).collect();
        let start = events
            .iter()
            .map(|&i| sorted_time.partition_point(|&t| t < time[i]))
            .collect();
        Self {
            time: time.to_vec(),
            order,
            sorted_time,
            events,
            start,
        }
    }

    /// Event subjects in time order (ties by subject index).
    pub fn event_rows(&self) -> &[usize] {
        &self.events
    }

    pub fn n_events(&self) -> usize {
        self.events.len()
    }

    /// Subjects at risk at the `k`-th event time.
    pub fn members(&self, k: usize) -> &[usize] {
        &self.order[self.start[k]..]
    }

    /// `a_kj`: whether `subject` is at risk at the `k`-th event time.
    pub fn at_risk(&self, k: usize, subject: usize) -> bool {
        self.time[subject] >= self.sorted_time[self.start[k]]
    }

    /// Offset of each event's risk set in the time-sorted subject order.
    pub fn starts(&self) -> &[usize] {
        &self.start
    }

    pub fn sorted_order(&self) -> &[usize] {
        &self.order
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Omega {
    Dense(Array2<f64>),
    OnDemand,
}

/// Everything about the score that survives genotype permutation.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightTable {
    n: usize,
    risk: RiskIndicator,
    mu: Vec<f64>,
    /// `o_k = sum_{l at risk} mu_l` per event.
    risk_total: Vec<f64>,
    omega: Omega,
    /// Per event, the P-vector `sum_j Z_j omega_j(X_k)`.
    zbar: Array2<f64>,
    /// `r_j = delta_j - sum_k omega_j(X_k)`.
    residual: Vec<f64>,
}

impl WeightTable {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn risk(&self) -> &RiskIndicator {
        &self.risk
    }

    pub fn event_rows(&self) -> &[usize] {
        self.risk.event_rows()
    }

    pub fn n_events(&self) -> usize {
        self.risk.n_events()
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn risk_totals(&self) -> &[f64] {
        &self.risk_total
    }

    /// Weighted risk-set mean genotype for each event (`events x P`).
    pub fn zbar_cache(&self) -> &Array2<f64> {
        &self.zbar
    }

    /// Per-subject weights `r_j` of the collapsed score.
    pub fn residual_weights(&self) -> &[f64] {
        &self.residual
    }

    pub fn is_dense(&self) -> bool {
        matches!(self.omega, Omega::Dense(_))
    }

    /// Stored `events x n` weight matrix, when small enough to keep.
    pub fn omega_dense(&self) -> Option<ArrayView2<'_, f64>> {
        match &self.omega {
            Omega::Dense(m) => Some(m.view()),
            Omega::OnDemand => None,
        }
    }

    /// `omega_j(X_k)` for the `k`-th event.
    pub fn omega(&self, k: usize, j: usize) -> f64 {
        match &self.omega {
            Omega::Dense(m) => m[(k, j)],
            Omega::OnDemand => self.omega_from_mu(k, j),
        }
    }

    fn omega_from_mu(&self, k: usize, j: usize) -> f64 {
        if self.risk.at_risk(k, j) {
            self.mu[j] / self.risk_total[k]
        } else {
            0.0
        }
    }

    /// Writes the weight row of the `k`-th event into `out` (length n).
    pub fn omega_row_into(&self, k: usize, out: &mut [f64]) {
        match &self.omega {
            Omega::Dense(m) => out.copy_from_slice(m.row(k).as_slice().expect("row-major")),
            Omega::OnDemand => {
                out.fill(0.0);
                let total = self.risk_total[k];
                for &j in self.risk.members(k) {
                    out[j] = self.mu[j] / total;
                }
            }
        }
    }

    /// Approximate bytes held by the table.
    pub fn bytes(&self) -> usize {
        let omega = match &self.omega {
            Omega::Dense(m) => m.len(),
            Omega::OnDemand => 0,
        };
        let reals = omega + self.zbar.len() + self.mu.len() + self.residual.len() + self.risk_total.len() + self.n;
        reals * 8 + (self.risk.order.len() + self.risk.events.len() + self.risk.start.len()) * 8
    }
}

/// Builds the weight table from a fitted (or supplied) null model.
pub fn build_weight_table(dataset: &SurvivalDataset, null: &NullModel) -> Result<WeightTable> {
    build_weight_table_with_limit(dataset, null, DENSE_OMEGA_LIMIT)
}

/// As [`build_weight_table`], with an explicit dense-storage limit.
pub fn build_weight_table_with_limit(
    dataset: &SurvivalDataset,
    null: &NullModel,
    dense_limit: usize,
) -> Result<WeightTable> {
    let n = dataset.n();
    if null.mu.len() != n {
        return Err(Error::Config(format!(
            "null model has {} relative hazards for {n} subjects",
            null.mu.len()
        )));
    }
    if null.mu.iter().any(|&m| !(m > 0.0 && m.is_finite())) {
        return Err(Error::Validation("relative hazards must be positive and finite".into()));
    }
    let risk = RiskIndicator::new(dataset.time(), dataset.event());
    let n_events = risk.n_events();
    if n_events == 0 {
        return Err(Error::NoEvents);
    }
    let mu = null.mu.clone();
    let p = dataset.n_snps();
    let geno = dataset.geno();

    // Suffix sums over the time-sorted subjects; events are visited from the
    // latest backwards so each suffix is extended, never recomputed.
    let mut risk_total = vec![0.0; n_events];
    let mut zbar = Array2::zeros((n_events, p));
    let mut s0 = 0.0;
    let mut s1 = vec![0.0; p];
    let mut pos = n;
    for k in (0..n_events).rev() {
        let start = risk.start[k];
        while pos > start {
            pos -= 1;
            let j = risk.order[pos];
            s0 += mu[j];
            for (acc, &z) in s1.iter_mut().zip(geno.row(j)) {
                *acc += mu[j] * z;
            }
        }
        risk_total[k] = s0;
        for (out, &acc) in zbar.row_mut(k).iter_mut().zip(&s1) {
            *out = acc / s0;
        }
    }

    // r_j = delta_j - mu_j * sum_{events k with X_k <= X_j} 1 / o_k
    let event_times: Vec<f64> = risk.events.iter().map(|&i| dataset.time()[i]).collect();
    let mut cum_hazard = Vec::with_capacity(n_events + 1);
    cum_hazard.push(0.0);
    for &o in &risk_total {
        let last = *cum_hazard.last().unwrap();
        cum_hazard.push(last + 1.0 / o);
    }
    let residual = (0..n)
        .map(|j| {
            let t = dataset.time()[j];
            let upto = event_times.partition_point(|&e| e <= t);
            f64::from(u8::from(dataset.event()[j])) - mu[j] * cum_hazard[upto]
        })
        .collect();

    let omega = if n_events.saturating_mul(n) <= dense_limit {
        let mut m = Array2::zeros((n_events, n));
        for (k, &total) in risk_total.iter().enumerate() {
            let mut row = m.row_mut(k);
            for &j in risk.members(k) {
                row[j] = mu[j] / total;
            }
        }
        Omega::Dense(m)
    } else {
        Omega::OnDemand
    };

    Ok(WeightTable {
        n,
        risk,
        mu,
        risk_total,
        omega,
        zbar,
        residual,
    })
}

/// SNP-block score; `perm_id` is 0 for the observed data.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVector {
    pub u: Vec<f64>,
    pub perm_id: usize,
}

/// A validated bijection on subjects. Row `j` of the permuted genotype
/// matrix is row `perm[j]` of the original.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Permutation(Vec<usize>);

impl Permutation {
    pub fn identity(n: usize) -> Self {
        Self((0..n).collect())
    }

    pub fn new(indices: Vec<usize>) -> Result<Self> {
        let n = indices.len();
        let mut seen = vec![false; n];
        for &i in &indices {
            if i >= n {
                return Err(Error::BadPermutation(format!("index {i} out of range for {n} subjects")));
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(Error::BadPermutation(format!("index {i} appears twice")));
            }
        }
        Ok(Self(indices))
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn inverse(&self) -> Vec<usize> {
        invert(&self.0)
    }
}

fn invert(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (j, &i) in perm.iter().enumerate() {
        inv[i] = j;
    }
    inv
}

/// Genotype columns of one test unit, laid out for repeated permuted scoring.
///
/// Rare-variant columns are mostly zero, so columns below 25% density are
/// stored as (row, dosage) lists and scored as `sum_i Z_i r_{perm^-1(i)}`;
/// denser data keeps row-major rows and is scored as `sum_j r_j Z_{perm(j)}`.
#[derive(Debug, Clone)]
pub struct ScoreKernel {
    n: usize,
    repr: KernelRepr,
}

#[derive(Debug, Clone)]
enum KernelRepr {
    Dense { rows: Array2<f64> },
    Sparse { cols: Vec<Vec<(u32, f64)>> },
}

impl ScoreKernel {
    pub fn new(dataset: &SurvivalDataset, cols: &[usize]) -> Self {
        let geno = dataset.geno();
        let n = dataset.n();
        let nonzero: usize = cols
            .iter()
            .map(|&c| geno.column(c).iter().filter(|&&z| z != 0.0).count())
            .sum();
        let cells = (n * cols.len()).max(1);
        let repr = if nonzero * 4 < cells {
            let cols = cols
                .iter()
                .map(|&c| {
                    geno.column(c)
                        .iter()
                        .enumerate()
                        .filter(|(_, &z)| z != 0.0)
                        .map(|(i, &z)| (i as u32, z))
                        .collect()
                })
                .collect();
            KernelRepr::Sparse { cols }
        } else {
            KernelRepr::Dense {
                rows: geno.select(ndarray::Axis(1), cols),
            }
        };
        Self { n, repr }
    }

    pub fn n_cols(&self) -> usize {
        match &self.repr {
            KernelRepr::Dense { rows } => rows.ncols(),
            KernelRepr::Sparse { cols } => cols.len(),
        }
    }

    /// Observed score into `out`.
    pub fn observed_into(&self, wt: &WeightTable, out: &mut [f64]) {
        let r = wt.residual_weights();
        match &self.repr {
            KernelRepr::Dense { rows } => {
                out.fill(0.0);
                for (j, row) in rows.rows().into_iter().enumerate() {
                    let w = r[j];
                    if w != 0.0 {
                        for (o, &z) in out.iter_mut().zip(row) {
                            *o += w * z;
                        }
                    }
                }
            }
            KernelRepr::Sparse { cols } => {
                for (o, col) in out.iter_mut().zip(cols) {
                    *o = col.iter().map(|&(i, z)| z * r[i as usize]).sum();
                }
            }
        }
    }

    /// Score under `perm` into `out`. `inverse` is scratch space of length n.
    pub fn permuted_into(&self, wt: &WeightTable, perm: &[usize], inverse: &mut [usize], out: &mut [f64]) {
        debug_assert_eq!(perm.len(), self.n);
        let r = wt.residual_weights();
        match &self.repr {
            KernelRepr::Dense { rows } => {
                out.fill(0.0);
                for (j, &src) in perm.iter().enumerate() {
                    let w = r[j];
                    if w != 0.0 {
                        for (o, &z) in out.iter_mut().zip(rows.row(src)) {
                            *o += w * z;
                        }
                    }
                }
            }
            KernelRepr::Sparse { cols } => {
                for (j, &i) in perm.iter().enumerate() {
                    inverse[i] = j;
                }
                for (o, col) in out.iter_mut().zip(cols) {
                    *o = col.iter().map(|&(i, z)| z * r[inverse[i as usize]]).sum();
                }
            }
        }
    }
}

fn check_table(dataset: &SurvivalDataset, wt: &WeightTable) -> Result<()> {
    if wt.n() != dataset.n() || wt.zbar_cache().ncols() != dataset.n_snps() {
        return Err(Error::Config(
            "weight table was built for a different dataset".into(),
        ));
    }
    Ok(())
}

/// Observed SNP score `U_s`.
pub fn score_observed(dataset: &SurvivalDataset, wt: &WeightTable) -> Result<ScoreVector> {
    score_permuted(dataset, wt, &Permutation::identity(dataset.n()))
        .map(|s| ScoreVector { perm_id: 0, ..s })
}

/// Score with genotype rows re-indexed by `perm`; covariates, times, statuses
/// and therefore the weights stay in place.
pub fn score_permuted(
    dataset: &SurvivalDataset,
    wt: &WeightTable,
    perm: &Permutation,
) -> Result<ScoreVector> {
    check_table(dataset, wt)?;
    if perm.len() != dataset.n() {
        return Err(Error::BadPermutation(format!(
            "permutation has length {} for {} subjects",
            perm.len(),
            dataset.n()
        )));
    }
    let cols: Vec<usize> = (0..dataset.n_snps()).collect();
    let kernel = ScoreKernel::new(dataset, &cols);
    let mut u = vec![0.0; cols.len()];
    let mut scratch = vec![0; dataset.n()];
    kernel.permuted_into(wt, perm.as_slice(), &mut scratch, &mut u);
    Ok(ScoreVector { u, perm_id: 1 })
}

/// Observed score accumulated event by event from the cached weighted means:
/// `sum_{events k} (Z_k - zbar_k)`. Equal to [`score_observed`] up to rounding.
pub fn score_observed_stepwise(dataset: &SurvivalDataset, wt: &WeightTable) -> Result<ScoreVector> {
    check_table(dataset, wt)?;
    let mut u = vec![0.0; dataset.n_snps()];
    for (k, &i) in wt.event_rows().iter().enumerate() {
        for ((acc, &z), &m) in u.iter_mut().zip(dataset.geno_row(i)).zip(wt.zbar_cache().row(k)) {
            *acc += z - m;
        }
    }
    Ok(ScoreVector { u, perm_id: 0 })
}
