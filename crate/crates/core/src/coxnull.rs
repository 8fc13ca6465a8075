//! Covariates-only Cox model under the null hypothesis of no SNP effect.
//!
//! Ties use the Breslow convention: every subject with `X_l >= t` is at risk
//! at `t`, and each tied event contributes its own term.

use nalgebra::{DMatrix, DVector};

use crate::survdata::SurvivalDataset;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    /// Convergence threshold on the max-norm of the score.
    pub tol: f64,
    pub max_iter: usize,
    pub max_halvings: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iter: 25,
            max_halvings: 10,
        }
    }
}

/// Fitted null model: coefficients `beta` and relative hazards `mu`.
#[derive(Debug, Clone, PartialEq)]
pub struct NullModel {
    pub beta: Vec<f64>,
    pub mu: Vec<f64>,
    pub loglik: f64,
    /// Log partial likelihood after each accepted step, starting at beta = 0.
    pub loglik_path: Vec<f64>,
    pub iters: usize,
    pub converged: bool,
    /// Max-norm of the score at `beta`.
    pub max_score: f64,
}

impl NullModel {
    /// Null model with user-supplied coefficients (no fitting). The result is
    /// marked converged; its `max_score` reports how far from the MLE it is.
    pub fn from_beta(dataset: &SurvivalDataset, beta: Vec<f64>) -> Result<Self> {
        let pl = partial_loglik(dataset, &beta)?;
        let mu = relative_hazards(dataset, &beta);
        Ok(Self {
            beta,
            mu,
            loglik: pl.loglik,
            loglik_path: vec![pl.loglik],
            iters: 0,
            converged: true,
            max_score: max_abs(&pl.gradient),
        })
    }

    /// Errors unless the fit converged or `allow_unconverged` is set.
    pub fn ensure_usable(&self, allow_unconverged: bool) -> Result<()> {
        if self.converged || allow_unconverged {
            Ok(())
        } else {
            Err(Error::Unconverged {
                iters: self.iters,
                max_score: self.max_score,
            })
        }
    }
}

/// Log partial likelihood with its gradient and Hessian.
#[derive(Debug, Clone, PartialEq)]
pub struct PartialLikelihood {
    pub loglik: f64,
    pub gradient: Vec<f64>,
    pub hessian: DMatrix<f64>,
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn linear_predictor(dataset: &SurvivalDataset, beta: &[f64]) -> Vec<f64> {
    dataset
        .covar()
        .rows()
        .into_iter()
        .map(|row| row.iter().zip(beta).map(|(z, b)| z * b).sum())
        .collect()
}

/// `mu_i = exp(beta . Z_i^m)`.
pub fn relative_hazards(dataset: &SurvivalDataset, beta: &[f64]) -> Vec<f64> {
    linear_predictor(dataset, beta).into_iter().map(f64::exp).collect()
}

/// Subject indices sorted by decreasing observed time.
fn descending_time_order(time: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..time.len()).collect();
    order.sort_by(|&a, &b| time[b].total_cmp(&time[a]));
    order
}

/// Breslow log partial likelihood at `beta` (length K).
///
/// Risk-set sums are accumulated from the latest time backwards on a scale
/// shifted by the running maximum of `beta . Z`, so large linear predictors
/// never overflow.
pub fn partial_loglik(dataset: &SurvivalDataset, beta: &[f64]) -> Result<PartialLikelihood> {
    let k = dataset.n_covars();
    if beta.len() != k {
        return Err(Error::Config(format!(
            "beta has {} entries but the dataset has {k} covariates",
            beta.len()
        )));
    }
    if beta.iter().any(|b| !b.is_finite()) {
        return Err(Error::Config("beta must be finite".into()));
    }
    let covar = dataset.covar();
    let time = dataset.time();
    let event = dataset.event();
    let eta = linear_predictor(dataset, beta);
    let order = descending_time_order(time);

    let mut shift = f64::NEG_INFINITY;
    let mut s0 = 0.0;
    let mut s1 = DVector::<f64>::zeros(k);
    let mut s2 = DMatrix::<f64>::zeros(k, k);

    let mut loglik = 0.0;
    let mut grad = DVector::<f64>::zeros(k);
    let mut hess = DMatrix::<f64>::zeros(k, k);

    let mut start = 0;
    while start < order.len() {
        let t = time[order[start]];
        let mut end = start;
        while end < order.len() && time[order[end]] == t {
            end += 1;
        }
        for &i in &order[start..end] {
            if eta[i] > shift {
                let scale = (shift - eta[i]).exp();
                s0 *= scale;
                s1 *= scale;
                s2 *= scale;
                shift = eta[i];
            }
            let w = (eta[i] - shift).exp();
            let z = DVector::from_iterator(k, covar.row(i).iter().copied());
            s0 += w;
            s1.axpy(w, &z, 1.0);
            s2.ger(w, &z, &z, 1.0);
        }
        for &i in &order[start..end] {
            if !event[i] {
                continue;
            }
            let mean = &s1 / s0;
            loglik += eta[i] - shift - s0.ln();
            for j in 0..k {
                grad[j] += covar[(i, j)] - mean[j];
            }
            hess -= &s2 / s0 - &mean * mean.transpose();
        }
        start = end;
    }

    Ok(PartialLikelihood {
        loglik,
        gradient: grad.iter().copied().collect(),
        hessian: hess,
    })
}

/// Names covariates that are constant or linearly dependent on earlier ones.
fn dependent_columns(dataset: &SurvivalDataset) -> Vec<String> {
    let covar = dataset.covar();
    let n = covar.nrows();
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut bad = Vec::new();
    for (j, col) in covar.columns().into_iter().enumerate() {
        let mean = col.sum() / n as f64;
        let mut v = DVector::from_iterator(n, col.iter().map(|x| x - mean));
        let norm0 = col.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1.0) * (n as f64).sqrt();
        for q in &basis {
            let proj = q.dot(&v);
            v.axpy(-proj, q, 1.0);
        }
        let norm = v.norm();
        if norm <= 1e-10 * norm0 {
            bad.push(dataset.covar_ids()[j].clone());
        } else {
            basis.push(v / norm);
        }
    }
    bad
}

/// Newton-Raphson with step halving for the covariates-only Cox model.
pub fn fit_null(dataset: &SurvivalDataset, opts: &FitOptions) -> Result<NullModel> {
    if dataset.n() < 2 {
        return Err(Error::Validation("at least two subjects are required".into()));
    }
    dataset.require_events()?;
    let k = dataset.n_covars();
    if k == 0 {
        return NullModel::from_beta(dataset, Vec::new());
    }
    let bad = dependent_columns(dataset);
    if !bad.is_empty() {
        return Err(Error::RankDeficient { columns: bad });
    }

    let mut beta = vec![0.0; k];
    let mut current = partial_loglik(dataset, &beta)?;
    let mut path = vec![current.loglik];
    let mut iters = 0;
    let mut converged = max_abs(&current.gradient) < opts.tol;

    while !converged && iters < opts.max_iter {
        let info = -current.hessian.clone();
        let chol = info.cholesky().ok_or_else(|| Error::RankDeficient {
            columns: dataset.covar_ids().to_vec(),
        })?;
        let mut step = chol.solve(&DVector::from_column_slice(&current.gradient));

        // near the optimum the true increase drops below rounding noise
        let slack = 64.0 * f64::EPSILON * current.loglik.abs().max(1.0);
        let mut accepted = None;
        for _ in 0..=opts.max_halvings {
            let trial: Vec<f64> = beta.iter().zip(step.iter()).map(|(b, s)| b + s).collect();
            if trial.iter().all(|b| b.is_finite()) {
                let pl = partial_loglik(dataset, &trial)?;
                if pl.loglik.is_finite() && pl.loglik >= current.loglik - slack {
                    accepted = Some((trial, pl));
                    break;
                }
            }
            step /= 2.0;
        }
        let Some((trial, pl)) = accepted else {
            break;
        };
        iters += 1;
        beta = trial;
        current = pl;
        path.push(current.loglik);
        converged = max_abs(&current.gradient) < opts.tol;
    }

    let mu = relative_hazards(dataset, &beta);
    Ok(NullModel {
        beta,
        mu,
        loglik: current.loglik,
        loglik_path: path,
        iters,
        converged,
        max_score: max_abs(&current.gradient),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn dataset(time: Vec<f64>, event: Vec<bool>, covar: Array2<f64>) -> SurvivalDataset {
        let n = time.len();
        let k = covar.ncols();
        SurvivalDataset::new(
            (0..n).map(|i| format!("s{i}")).collect(),
            vec![],
            (0..k).map(|j| format!("c{j}")).collect(),
            Array2::zeros((n, 0)),
            covar,
            time,
            event,
        )
        .unwrap()
    }

    #[test]
    fn no_covariates_gives_unit_hazards() {
        let d = dataset(
            vec![1.0, 2.0, 3.0, 4.0],
            vec![true, false, true, true],
            Array2::zeros((4, 0)),
        );
        let m = fit_null(&d, &FitOptions::default()).unwrap();
        assert!(m.beta.is_empty());
        assert!(m.mu.iter().all(|&u| u == 1.0));
        // risk sets of size 4, 2, 1 at the three events
        let expected = -(4f64.ln() + 2f64.ln() + 1f64.ln());
        assert!((m.loglik - expected).abs() < 1e-14);
    }

    #[test]
    fn constant_covariate_is_rank_deficient() {
        let covar = Array2::from_shape_vec((4, 1), vec![1.0; 4]).unwrap();
        let d = dataset(vec![1.0, 2.0, 3.0, 4.0], vec![true; 4], covar);
        match fit_null(&d, &FitOptions::default()) {
            Err(Error::RankDeficient { columns }) => assert_eq!(columns, vec!["c0"]),
            other => panic!("expected rank deficiency, got {other:?}"),
        }
    }

    #[test]
    fn collinear_covariates_named() {
        let covar = Array2::from_shape_fn((5, 2), |(i, j)| (i as f64) * (j as f64 + 1.0));
        let d = dataset(vec![1.0, 2.0, 3.0, 4.0, 5.0], vec![true; 5], covar);
        match fit_null(&d, &FitOptions::default()) {
            Err(Error::RankDeficient { columns }) => assert_eq!(columns, vec!["c1"]),
            other => panic!("expected rank deficiency, got {other:?}"),
        }
    }

    #[test]
    fn gradient_at_zero_is_centered_sum() {
        let covar = Array2::from_shape_vec((4, 1), vec![0.5, -1.0, 2.0, 0.0]).unwrap();
        let d = dataset(vec![3.0, 1.0, 2.0, 4.0], vec![true, true, false, true], covar);
        let pl = partial_loglik(&d, &[0.0]).unwrap();
        // events at t=1 (all four at risk), t=3 (subjects 0,3), t=4 (subject 3)
        let g = (-1.0 - (0.5 - 1.0 + 2.0 + 0.0) / 4.0) + (0.5 - 0.25) + (0.0 - 0.0);
        assert!((pl.gradient[0] - g).abs() < 1e-14);
    }

    #[test]
    fn no_events_gives_zero() {
        let covar = Array2::from_shape_vec((3, 1), vec![0.5, -1.0, 2.0]).unwrap();
        let d = dataset(vec![1.0, 2.0, 3.0], vec![false; 3], covar);
        let pl = partial_loglik(&d, &[0.7]).unwrap();
        assert_eq!(pl.loglik, 0.0);
        assert_eq!(pl.gradient, vec![0.0]);
        assert!(fit_null(&d, &FitOptions::default()).is_err());
    }

    #[test]
    fn huge_linear_predictor_stays_finite() {
        let covar = Array2::from_shape_vec((4, 1), vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let d = dataset(vec![1.0, 2.0, 3.0, 4.0], vec![true; 4], covar);
        let pl = partial_loglik(&d, &[900.0]).unwrap();
        assert!(pl.loglik.is_finite());
        assert!(pl.gradient.iter().all(|g| g.is_finite()));
        assert!(pl.hessian.iter().all(|h| h.is_finite()));
    }

    #[test]
    fn unconverged_fit_is_refused_unless_allowed() {
        // perfectly ordered by covariate: likelihood increases without bound
        let covar = Array2::from_shape_vec((4, 1), vec![4.0, 3.0, 2.0, 1.0]).unwrap();
        let d = dataset(vec![1.0, 2.0, 3.0, 4.0], vec![true; 4], covar);
        let opts = FitOptions {
            max_iter: 3,
            ..FitOptions::default()
        };
        let m = fit_null(&d, &opts).unwrap();
        assert!(!m.converged);
        assert!(m.ensure_usable(false).is_err());
        assert!(m.ensure_usable(true).is_ok());
        assert!(m.loglik_path.windows(2).all(|w| w[1] >= w[0]));
    }
}
