//! M-step updates: closed-form transition matrix, coordinate-descent
//! weighted lasso for the regression coefficients, closed-form variance.
//!
//! The lasso objective per regime j and output coordinate i is
//!     (1/n) sum_t m_{t,j} (Y_{t,i} - b' Y_{t-1})^2 + lambda ||b||_1.
//! With G = (2/n) sum_t m Y_{t-1} Y_{t-1}' and c = (2/n) sum_t m Y_{t,i} Y_{t-1},
//! cyclic coordinate descent updates
//!     b_k <- Soft(c_k - (G b)_k + G_kk b_k, lambda) / G_kk.

use ndarray::{Array1, Array2, ArrayView2};
use rayon::prelude::*;

use crate::error::{CoreError, Result};
use crate::filtering::WindowWeights;
use crate::linalg::soft_threshold;
use crate::model::SeriesData;

/// Minimum total pair mass a regime needs for a transition-row update.
pub const DEGENERATE_REGIME_EPS: f64 = 1e-10;
/// Lower bound applied to the variance update.
pub const SIGMA2_FLOOR: f64 = 1e-8;
/// KKT certification tolerance for returned lasso solutions.
pub const KKT_TOL: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct LassoConfig {
    /// L1 penalty level on the (1/n)-scaled quadratic loss.
    pub lambda: f64,
    /// Sweep convergence threshold on the max coefficient change.
    pub tol: f64,
    pub max_sweeps: usize,
    /// Optional starting coefficient matrices (one per regime).
    pub warm_start: Option<Vec<Array2<f64>>>,
}

impl LassoConfig {
    pub fn new(lambda: f64) -> Result<Self> {
        if lambda < 0.0 || !lambda.is_finite() {
            return Err(CoreError::Domain(format!(
                "lambda must be >= 0, got {lambda}"
            )));
        }
        Ok(Self {
            lambda,
            tol: 1e-7,
            max_sweeps: 10_000,
            warm_start: None,
        })
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_warm_start(mut self, ws: Vec<Array2<f64>>) -> Self {
        self.warm_start = Some(ws);
        self
    }
}

/// Raw weighted second moments of one regime over a set of time rows:
/// gram = sum m X X', cross[r,i] = sum m X_r Y_i, ysq[i] = sum m Y_i^2,
/// with X = Y_{t-1}, Y = Y_t. `n_rows` counts time rows (not weight mass)
/// and carries the 1/n normalization of the objective.
#[derive(Debug, Clone)]
pub struct RegimeMoments {
    pub gram: Array2<f64>,
    pub cross: Array2<f64>,
    pub ysq: Array1<f64>,
    pub n_rows: usize,
}

impl RegimeMoments {
    fn zeros(d: usize) -> Self {
        Self {
            gram: Array2::zeros((d, d)),
            cross: Array2::zeros((d, d)),
            ysq: Array1::zeros(d),
            n_rows: 0,
        }
    }

    fn add_scaled(&mut self, other: &Self, sign: f64) {
        self.gram.scaled_add(sign, &other.gram);
        self.cross.scaled_add(sign, &other.cross);
        self.ysq.scaled_add(sign, &other.ysq);
    }

    /// Raw weighted squared error sum_t m ||Y_t - B' Y_{t-1}||^2 of
    /// coefficient matrix `b`, expanded through the stored moments.
    pub fn weighted_sse(&self, b: &Array2<f64>) -> f64 {
        let d = self.gram.nrows();
        let mut total = 0.0;
        for i in 0..d {
            let col = b.column(i);
            let mut lin = 0.0;
            let mut quad = 0.0;
            for r in 0..d {
                let br = col[r];
                if br == 0.0 {
                    continue;
                }
                lin += br * self.cross[[r, i]];
                let mut gb = 0.0;
                for s in 0..d {
                    let bs = col[s];
                    if bs != 0.0 {
                        gb += self.gram[[r, s]] * bs;
                    }
                }
                quad += br * gb;
            }
            total += self.ysq[i] - 2.0 * lin + quad;
        }
        total
    }

    /// Raw weighted squared error of a single output coordinate:
    /// ysq_i - 2 b'c_i + b'G b, skipping zero coefficients.
    pub fn sse_column(&self, coord: usize, b: &Array1<f64>) -> f64 {
        let d = self.gram.nrows();
        let mut lin = 0.0;
        let mut quad = 0.0;
        for r in 0..d {
            let br = b[r];
            if br == 0.0 {
                continue;
            }
            lin += br * self.cross[[r, coord]];
            let mut gb = 0.0;
            for s in 0..d {
                let bs = b[s];
                if bs != 0.0 {
                    gb += self.gram[[r, s]] * bs;
                }
            }
            quad += br * gb;
        }
        self.ysq[coord] - 2.0 * lin + quad
    }

    /// Gram and cross moments on the (2/n) scale used by coordinate descent.
    pub(crate) fn scaled(&self) -> (Array2<f64>, Array2<f64>) {
        let f = 2.0 / self.n_rows as f64;
        (self.gram.mapv(|v| f * v), self.cross.mapv(|v| f * v))
    }
}

/// Accumulate per-regime moments over rows 1..=T, optionally split by fold.
/// Row t uses predictor Y_{t-1}, response Y_t and weight marg[t-1, j].
/// Accumulation runs in t order, independent of thread count.
pub fn fold_moments(
    series: &SeriesData,
    marg: ArrayView2<f64>,
    fold_of_t: Option<&[usize]>,
    n_folds: usize,
) -> Vec<Vec<RegimeMoments>> {
    let t_len = series.t_len();
    let d = series.dim();
    let k = marg.ncols();
    let groups = if fold_of_t.is_some() { n_folds } else { 1 };
    let mut acc: Vec<Vec<RegimeMoments>> = (0..groups)
        .map(|_| (0..k).map(|_| RegimeMoments::zeros(d)).collect())
        .collect();
    let y = series.y();
    for t in 1..=t_len {
        let g = fold_of_t.map_or(0, |f| f[t - 1]);
        let x = y.row(t - 1);
        let resp = y.row(t);
        for j in 0..k {
            let m = marg[[t - 1, j]];
            let slot = &mut acc[g][j];
            slot.n_rows += 1;
            if m == 0.0 {
                continue;
            }
            for r in 0..d {
                let mxr = m * x[r];
                for s in r..d {
                    slot.gram[[r, s]] += mxr * x[s];
                }
                for i in 0..d {
                    slot.cross[[r, i]] += mxr * resp[i];
                }
            }
            for i in 0..d {
                slot.ysq[i] += m * resp[i] * resp[i];
            }
        }
    }
    for group in &mut acc {
        for slot in group.iter_mut() {
            let dd = slot.gram.nrows();
            for r in 0..dd {
                for s in 0..r {
                    slot.gram[[r, s]] = slot.gram[[s, r]];
                }
            }
        }
    }
    acc
}

/// Total moments plus per-fold moments; training moments for fold f are
/// total minus fold f.
pub struct MomentSplit {
    pub total: Vec<RegimeMoments>,
    pub per_fold: Vec<Vec<RegimeMoments>>,
}

pub fn split_moments(
    series: &SeriesData,
    marg: ArrayView2<f64>,
    fold_of_t: &[usize],
    n_folds: usize,
) -> MomentSplit {
    let per_fold = fold_moments(series, marg, Some(fold_of_t), n_folds);
    let k = marg.ncols();
    let d = series.dim();
    let mut total: Vec<RegimeMoments> = (0..k).map(|_| RegimeMoments::zeros(d)).collect();
    for fold in &per_fold {
        for (j, m) in fold.iter().enumerate() {
            total[j].add_scaled(m, 1.0);
            total[j].n_rows += m.n_rows;
        }
    }
    MomentSplit { total, per_fold }
}

pub fn training_moments(split: &MomentSplit, fold: usize) -> Vec<RegimeMoments> {
    split
        .total
        .iter()
        .zip(&split.per_fold[fold])
        .map(|(tot, f)| {
            let mut m = tot.clone();
            m.add_scaled(f, -1.0);
            m.n_rows = tot.n_rows - f.n_rows;
            m
        })
        .collect()
}

/// Outcome of a lasso update for all regimes.
#[derive(Debug, Clone)]
pub struct BetaUpdate {
    pub coeffs: Vec<Array2<f64>>,
    /// (regime, coordinate, predictor) triples pinned to zero because the
    /// weighted predictor column had no mass.
    pub pinned: Vec<(usize, usize, usize)>,
    /// Largest sweep count over the per-(regime, coordinate) subproblems.
    pub sweeps: usize,
}

/// Weighted-lasso coefficient update from E-step weights.
pub fn update_beta(
    series: &SeriesData,
    weights: &WindowWeights,
    cfg: &LassoConfig,
) -> Result<BetaUpdate> {
    let moments = fold_moments(series, weights.marg().view(), None, 1);
    update_beta_from_moments(&moments[0], cfg)
}

/// Same update from precomputed raw moments.
pub fn update_beta_from_moments(
    moments: &[RegimeMoments],
    cfg: &LassoConfig,
) -> Result<BetaUpdate> {
    let k = moments.len();
    let d = moments[0].gram.nrows();
    if let Some(ws) = &cfg.warm_start {
        if ws.len() != k || ws.iter().any(|b| b.nrows() != d || b.ncols() != d) {
            return Err(CoreError::InvalidInput("warm start shape mismatch".into()));
        }
    }
    if moments.iter().any(|m| m.n_rows == 0) {
        return Err(CoreError::InvalidInput("no rows in lasso moments".into()));
    }
    let scaled: Vec<(Array2<f64>, Array2<f64>)> = moments.iter().map(|m| m.scaled()).collect();

    // The K*d one-dimensional problems are independent; solve in parallel,
    // reassemble in index order.
    let problems: Vec<(usize, usize)> = (0..k).flat_map(|j| (0..d).map(move |i| (j, i))).collect();
    let solved: Vec<Result<(Array1<f64>, Vec<usize>, usize)>> = problems
        .par_iter()
        .map(|&(j, i)| {
            let start = cfg
                .warm_start
                .as_ref()
                .map(|ws| ws[j].column(i).to_owned())
                .unwrap_or_else(|| Array1::zeros(d));
            let ysq2 = 2.0 * moments[j].ysq[i] / moments[j].n_rows as f64;
            solve_coordinate_lasso(&scaled[j].0, &scaled[j].1, i, ysq2, start, cfg)
        })
        .collect();

    let mut coeffs: Vec<Array2<f64>> = (0..k).map(|_| Array2::zeros((d, d))).collect();
    let mut pinned = Vec::new();
    let mut sweeps = 0;
    for (&(j, i), res) in problems.iter().zip(solved) {
        let (b, pins, sw) = res?;
        for r in 0..d {
            coeffs[j][[r, i]] = b[r];
        }
        for p in pins {
            pinned.push((j, i, p));
        }
        sweeps = sweeps.max(sw);
    }
    Ok(BetaUpdate {
        coeffs,
        pinned,
        sweeps,
    })
}

/// Cyclic coordinate descent with soft-thresholding for one (regime,
/// coordinate) subproblem. Active-set iteration with full confirmation
/// sweeps; the returned solution is KKT-certified at `KKT_TOL`.
fn solve_coordinate_lasso(
    g2: &Array2<f64>,
    c2: &Array2<f64>,
    coord: usize,
    ysq2: f64,
    mut b: Array1<f64>,
    cfg: &LassoConfig,
) -> Result<(Array1<f64>, Vec<usize>, usize)> {
    let d = g2.nrows();
    let mut pinned = Vec::new();
    for kix in 0..d {
        if g2[[kix, kix]] <= 0.0 {
            b[kix] = 0.0;
            pinned.push(kix);
        }
    }
    let mut q = g2.dot(&b);
    let sweeps_used = cd_descend(
        g2,
        c2,
        coord,
        ysq2,
        &mut b,
        &mut q,
        cfg.lambda,
        cfg.tol,
        cfg.max_sweeps,
        &pinned,
        true,
    )?;
    Ok((b, pinned, sweeps_used))
}

/// Descend to the lasso optimum at one penalty level, reusing caller-owned
/// state (b, q = G b). This is the warm-path engine the cross-validation
/// grid walks without reallocating. `certify` adds the KKT confirmation
/// loop required of returned solutions; scoring-only fits skip it.
#[allow(clippy::too_many_arguments)]
pub(crate) fn cd_descend(
    g2: &Array2<f64>,
    c2: &Array2<f64>,
    coord: usize,
    ysq2: f64,
    b: &mut Array1<f64>,
    q: &mut Array1<f64>,
    lambda: f64,
    tol: f64,
    max_sweeps: usize,
    pinned: &[usize],
    certify: bool,
) -> Result<usize> {
    #[cfg(debug_assertions)]
    let mut prev_obj = {
        let d = b.len();
        let lin: f64 = (0..d).map(|r| b[r] * c2[[r, coord]]).sum();
        0.5 * (ysq2 - 2.0 * lin + b.dot(&*q)) + lambda * b.iter().map(|v| v.abs()).sum::<f64>()
    };
    #[cfg(not(debug_assertions))]
    let _ = ysq2;

    let mut sweeps_used = 0;
    let mut full_sweep = true;
    loop {
        if sweeps_used >= max_sweeps {
            let delta = sweep(g2, c2, coord, b, q, lambda, pinned, true);
            return Err(CoreError::LassoNonConvergence {
                max_sweeps,
                last_delta: delta,
            });
        }
        let delta = sweep(g2, c2, coord, b, q, lambda, pinned, full_sweep);
        sweeps_used += 1;

        #[cfg(debug_assertions)]
        {
            // Exact coordinate minimization cannot increase the objective.
            let d = b.len();
            let lin: f64 = (0..d).map(|r| b[r] * c2[[r, coord]]).sum();
            let obj = 0.5 * (ysq2 - 2.0 * lin + b.dot(&*q))
                + lambda * b.iter().map(|v| v.abs()).sum::<f64>();
            debug_assert!(
                obj <= prev_obj + 1e-9 * (1.0 + prev_obj.abs()),
                "coordinate sweep increased objective: {prev_obj} -> {obj}"
            );
            prev_obj = obj;
        }

        if delta <= tol {
            if !full_sweep {
                // Converged on the active set; confirm with a full pass.
                full_sweep = true;
                continue;
            }
            if !certify || kkt_satisfied(g2, c2, coord, b, q, lambda) {
                break;
            }
            full_sweep = true;
        } else {
            full_sweep = false;
        }
    }
    Ok(sweeps_used)
}

#[allow(clippy::too_many_arguments)]
fn sweep(
    g2: &Array2<f64>,
    c2: &Array2<f64>,
    coord: usize,
    b: &mut Array1<f64>,
    q: &mut Array1<f64>,
    lambda: f64,
    pinned: &[usize],
    full: bool,
) -> f64 {
    let d = b.len();
    let mut max_delta = 0.0f64;
    let q_slice = q.as_slice_mut().expect("contiguous");
    for kix in 0..d {
        if !full && b[kix] == 0.0 {
            continue;
        }
        if pinned.binary_search(&kix).is_ok() {
            continue;
        }
        let z = g2[[kix, kix]];
        let rho = c2[[kix, coord]] - q_slice[kix] + z * b[kix];
        let new = soft_threshold(rho, lambda) / z;
        let delta = new - b[kix];
        if delta != 0.0 {
            // g2 is symmetric; its row kix is the contiguous view of the
            // column the rank-one q update needs.
            let grow = g2.row(kix);
            let grow = grow.as_slice().expect("contiguous");
            for (qr, gr) in q_slice.iter_mut().zip(grow) {
                *qr += gr * delta;
            }
            b[kix] = new;
            max_delta = max_delta.max(delta.abs());
        }
    }
    max_delta
}

fn kkt_satisfied(
    g2: &Array2<f64>,
    c2: &Array2<f64>,
    coord: usize,
    b: &Array1<f64>,
    q: &Array1<f64>,
    lambda: f64,
) -> bool {
    let d = b.len();
    for kix in 0..d {
        if g2[[kix, kix]] <= 0.0 {
            continue;
        }
        let grad = q[kix] - c2[[kix, coord]];
        if b[kix] != 0.0 {
            if (grad + lambda * b[kix].signum()).abs() > KKT_TOL {
                return false;
            }
        } else if grad.abs() > lambda + KKT_TOL {
            return false;
        }
    }
    true
}

/// Largest KKT residual of a fitted coefficient stack against the stated
/// objective; used by tests and the acceptance suite.
pub fn kkt_max_violation(
    series: &SeriesData,
    weights: &WindowWeights,
    coeffs: &[Array2<f64>],
    lambda: f64,
) -> f64 {
    let moments = &fold_moments(series, weights.marg().view(), None, 1)[0];
    let mut worst = 0.0f64;
    for (j, m) in moments.iter().enumerate() {
        let (g2, c2) = m.scaled();
        let d = g2.nrows();
        for i in 0..d {
            let b = coeffs[j].column(i).to_owned();
            let q = g2.dot(&b);
            for kix in 0..d {
                if g2[[kix, kix]] <= 0.0 {
                    continue;
                }
                let grad = q[kix] - c2[[kix, i]];
                let v = if b[kix] != 0.0 {
                    (grad + lambda * b[kix].signum()).abs()
                } else {
                    (grad.abs() - lambda).max(0.0)
                };
                worst = worst.max(v);
            }
        }
    }
    worst
}

/// Smallest penalty at which the lasso returns the all-zero stack:
/// max_{j,i,k} |(2/n) sum_t m_{t,j} Y_{t,i} Y_{t-1,k}|.
pub fn lambda_max_from_moments(moments: &[RegimeMoments]) -> f64 {
    moments
        .iter()
        .map(|m| {
            let f = 2.0 / m.n_rows as f64;
            m.cross.iter().fold(0.0f64, |acc, v| acc.max((f * v).abs()))
        })
        .fold(0.0f64, f64::max)
}

/// Closed-form transition update: p_ij = sum_t pair[t,i,j] / sum_{t,l} pair[t,i,l].
pub fn update_transition(weights: &WindowWeights) -> Result<Array2<f64>> {
    let k = weights.k();
    let mut counts = Array2::<f64>::zeros((k, k));
    for t in 1..=weights.t_len() {
        for i in 0..k {
            for j in 0..k {
                counts[[i, j]] += weights.pair_at(t, i, j);
            }
        }
    }
    let mut out = Array2::<f64>::zeros((k, k));
    for i in 0..k {
        let mass: f64 = counts.row(i).sum();
        if mass < DEGENERATE_REGIME_EPS {
            return Err(CoreError::DegenerateRegime { regime: i, mass });
        }
        for j in 0..k {
            out[[i, j]] = counts[[i, j]] / mass;
        }
        // Renormalize exactly; quotient rounding can leave ~1e-16 drift.
        let s: f64 = out.row(i).sum();
        for j in 0..k {
            out[[i, j]] /= s;
        }
    }
    Ok(out)
}

/// Closed-form variance update, floored at SIGMA2_FLOOR. The bool reports
/// whether the floor engaged. Computed directly from residuals, which keeps
/// it an independent route from the Gram-based machinery.
pub fn update_sigma2(
    series: &SeriesData,
    weights: &WindowWeights,
    beta_new: &[Array2<f64>],
) -> (f64, bool) {
    let d = series.dim();
    let t_len = series.t_len();
    let k = weights.k();
    let y = series.y();
    let mut acc = 0.0;
    for t in 1..=t_len {
        let x = y.row(t - 1);
        let resp = y.row(t);
        for j in 0..k {
            let m = weights.marg_at(t, j);
            if m == 0.0 {
                continue;
            }
            let b = &beta_new[j];
            let mut ss = 0.0;
            for i in 0..d {
                let mut pred = 0.0;
                for r in 0..d {
                    pred += b[[r, i]] * x[r];
                }
                let rsd = resp[i] - pred;
                ss += rsd * rsd;
            }
            acc += m * ss;
        }
    }
    let sigma2 = acc / (t_len as f64 * d as f64);
    if sigma2 < SIGMA2_FLOOR {
        (SIGMA2_FLOOR, true)
    } else {
        (sigma2, false)
    }
}
