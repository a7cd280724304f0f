//! Penalty selection: data-driven lambda grids, per-iteration 10-fold cross
//! validation with frozen E-step weights, and HBIC scoring for ranking fits
//! from different initializations.

use ndarray::ArrayView2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::filtering::WindowWeights;
use crate::model::SeriesData;
use crate::mstep::{lambda_max_from_moments, split_moments, training_moments, LassoConfig};
use crate::rng::{stream_rng, Purpose};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum TuningMode {
    FixedLambda(f64),
    CvPerIteration,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FoldScheme {
    /// Random partition of time indices; rows are exchangeable given the
    /// frozen weights.
    RandomIndex,
    /// Contiguous blocks, for dependence-aware validation.
    ContiguousBlocks,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TuningPolicy {
    pub mode: TuningMode,
    pub n_folds: usize,
    pub grid_size: usize,
    /// lambda_min / lambda_max for the log-spaced grid.
    pub grid_ratio: f64,
    pub fold_scheme: FoldScheme,
    pub seed: u64,
}

impl Default for TuningPolicy {
    fn default() -> Self {
        Self {
            mode: TuningMode::CvPerIteration,
            n_folds: 10,
            grid_size: 50,
            grid_ratio: 1e-3,
            fold_scheme: FoldScheme::RandomIndex,
            seed: 0,
        }
    }
}

impl TuningPolicy {
    pub fn validate(&self) -> Result<()> {
        if self.n_folds < 2 {
            return Err(CoreError::InvalidInput("n_folds must be >= 2".into()));
        }
        if self.grid_size == 0 {
            return Err(CoreError::InvalidInput("grid_size must be >= 1".into()));
        }
        if !(self.grid_ratio > 0.0 && self.grid_ratio < 1.0) {
            return Err(CoreError::InvalidInput(
                "grid_ratio must lie in (0,1)".into(),
            ));
        }
        Ok(())
    }
}

/// Deterministic fold assignment: fold id per time row t = 1..=T.
/// Folds are disjoint, cover 1..=T, and differ in size by at most one.
pub fn make_folds(t_len: usize, policy: &TuningPolicy) -> Result<Vec<usize>> {
    policy.validate()?;
    if t_len < policy.n_folds {
        return Err(CoreError::InvalidInput(format!(
            "T={t_len} smaller than n_folds={}",
            policy.n_folds
        )));
    }
    let mut fold_of_t = vec![0usize; t_len];
    match policy.fold_scheme {
        FoldScheme::RandomIndex => {
            let mut order: Vec<usize> = (0..t_len).collect();
            let mut rng = stream_rng(policy.seed, Purpose::CvFolds, &[t_len as u64]);
            // Fisher-Yates
            for i in (1..t_len).rev() {
                let j = rand::Rng::gen_range(&mut rng, 0..=i);
                order.swap(i, j);
            }
            for (pos, &t_idx) in order.iter().enumerate() {
                fold_of_t[t_idx] = pos % policy.n_folds;
            }
        }
        FoldScheme::ContiguousBlocks => {
            for (t_idx, f) in fold_of_t.iter_mut().enumerate() {
                *f = t_idx * policy.n_folds / t_len;
            }
        }
    }
    Ok(fold_of_t)
}

/// Data-driven penalty grid: log-spaced, strictly decreasing, starting at
/// the smallest all-zero penalty lambda_max of the weighted problem.
pub fn lambda_grid(
    series: &SeriesData,
    weights: &WindowWeights,
    policy: &TuningPolicy,
) -> Result<Vec<f64>> {
    policy.validate()?;
    let moments = crate::mstep::fold_moments(series, weights.marg().view(), None, 1);
    lambda_grid_from_max(lambda_max_from_moments(&moments[0]), policy)
}

pub fn lambda_grid_from_max(lambda_max: f64, policy: &TuningPolicy) -> Result<Vec<f64>> {
    if !(lambda_max > 0.0) || !lambda_max.is_finite() {
        return Err(CoreError::InvalidInput(format!(
            "lambda_max = {lambda_max}: all-zero data or weights"
        )));
    }
    let n = policy.grid_size;
    if n == 1 {
        return Ok(vec![lambda_max]);
    }
    let ln_max = lambda_max.ln();
    let ln_min = (policy.grid_ratio * lambda_max).ln();
    Ok((0..n)
        .map(|i| (ln_max + (ln_min - ln_max) * i as f64 / (n - 1) as f64).exp())
        .collect())
}

/// Cross-validation outcome: the chosen penalty and the mean held-out curve.
#[derive(Debug, Clone)]
pub struct CvOutcome {
    pub lambda: f64,
    /// (lambda, pooled held-out weighted squared error) per grid point.
    pub curve: Vec<(f64, f64)>,
    pub skipped_folds: Vec<usize>,
}

/// Select lambda by K-fold cross validation with the E-step weights held
/// fixed. For each fold and each grid lambda (descending, warm-started),
/// fits on the training rows and scores the held-out weighted squared
/// error; the pooled score over folds picks the winner, ties going to the
/// larger (sparser) lambda. The top-of-grid fit is the zero stack by
/// construction, anchoring the curve at the zero-model error.
pub fn cv_select_lambda(
    series: &SeriesData,
    weights: &WindowWeights,
    policy: &TuningPolicy,
    lasso_cfg: &LassoConfig,
) -> Result<CvOutcome> {
    cv_select_lambda_weighted(series, weights.marg().view(), policy, lasso_cfg)
}

/// Weight-matrix variant of `cv_select_lambda`; rows of `marg` need not be
/// normalized (the transition-observed baseline passes indicator columns).
pub fn cv_select_lambda_weighted(
    series: &SeriesData,
    marg: ArrayView2<f64>,
    policy: &TuningPolicy,
    lasso_cfg: &LassoConfig,
) -> Result<CvOutcome> {
    policy.validate()?;
    let t_len = series.t_len();
    let fold_of_t = make_folds(t_len, policy)?;
    let split = split_moments(series, marg, &fold_of_t, policy.n_folds);
    let lambda_max = lambda_max_from_moments(&split.total);
    let grid = lambda_grid_from_max(lambda_max, policy)?;
    if grid.len() == 1 {
        return Ok(CvOutcome {
            lambda: grid[0],
            curve: vec![(grid[0], f64::NAN)],
            skipped_folds: Vec::new(),
        });
    }
    let k = marg.ncols();
    let d = series.dim();

    // Folds with no weight mass cannot score held-out error.
    let mut skipped = Vec::new();
    let mut live_folds = Vec::new();
    for f in 0..policy.n_folds {
        let mass: f64 = split.per_fold[f]
            .iter()
            .map(|m| m.gram.iter().map(|v| v.abs()).sum::<f64>() + m.ysq.sum())
            .sum();
        if mass > 0.0 {
            live_folds.push(f);
        } else {
            skipped.push(f);
        }
    }
    if live_folds.is_empty() {
        return Err(CoreError::AllCandidatesFailed(
            "every cross-validation fold has zero weight".into(),
        ));
    }

    // Per fold: walk the grid top-down per (regime, coordinate) with the
    // warm path state held in place, scoring held-out error as we go.
    // grid[0] is lambda_max of the full data; the zero stack is the path
    // anchor there and needs no descent.
    let per_fold_scores: Vec<Result<Vec<f64>>> = live_folds
        .par_iter()
        .map(|&f| {
            let train = training_moments(&split, f);
            let held = &split.per_fold[f];
            let mut scores = vec![0.0f64; grid.len()];
            let mut b = ndarray::Array1::<f64>::zeros(d);
            let mut q = ndarray::Array1::<f64>::zeros(d);
            for j in 0..k {
                let (g2, c2) = train[j].scaled();
                let mut pinned = Vec::new();
                for kix in 0..d {
                    if g2[[kix, kix]] <= 0.0 {
                        pinned.push(kix);
                    }
                }
                for i in 0..d {
                    b.fill(0.0);
                    q.fill(0.0);
                    let ysq2 = 2.0 * train[j].ysq[i] / train[j].n_rows as f64;
                    // Above this coordinate's own activation threshold the
                    // zero vector is the exact solution: score it directly.
                    let lmax_i = (0..d).fold(0.0f64, |acc, r| acc.max(c2[[r, i]].abs()));
                    let zero_score = held[j].ysq[i];
                    for (gi, &lambda) in grid.iter().enumerate() {
                        if gi == 0 || lambda >= lmax_i {
                            scores[gi] += zero_score;
                            continue;
                        }
                        crate::mstep::cd_descend(
                            &g2,
                            &c2,
                            i,
                            ysq2,
                            &mut b,
                            &mut q,
                            lambda,
                            lasso_cfg.tol,
                            lasso_cfg.max_sweeps,
                            &pinned,
                            false,
                        )?;
                        scores[gi] += held[j].sse_column(i, &b);
                    }
                }
            }
            Ok(scores)
        })
        .collect();

    let mut curve: Vec<(f64, f64)> = grid.iter().map(|&l| (l, 0.0)).collect();
    for scores in per_fold_scores {
        let scores = scores?;
        for (gi, s) in scores.into_iter().enumerate() {
            curve[gi].1 += s;
        }
    }

    let mut best = 0;
    for gi in 1..curve.len() {
        if curve[gi].1 < curve[best].1 {
            best = gi;
        }
    }
    Ok(CvOutcome {
        lambda: curve[best].0,
        curve,
        skipped_folds: skipped,
    })
}

/// High-dimensional information criterion used to rank fits from different
/// initializations: T*d*log(sigma2_hat) + ||beta||_0 * log(log T) * log(K d^2).
/// Lower is better; only the induced ranking is meaningful.
pub fn hbic_score(t_len: usize, d: usize, k: usize, sigma2_hat: f64, beta_l0: usize) -> f64 {
    let t = t_len as f64;
    let p = (k * d * d) as f64;
    t * d as f64 * sigma2_hat.ln() + beta_l0 as f64 * t.ln().ln() * p.ln()
}
