//! E-step computations.
//!
//! `approx_estep` evaluates, for every t, the conditional law of
//! (Z_{t-1}, Z_t) given the window observations Y_{t-s}..Y_t and the window
//! start pinned to a fixed regime. The windowed sum over K^s latent paths is
//! evaluated by an in-window forward recursion in log space, which is the
//! same quantity at O(K^2 s) cost. `exact_filter` is the full-history
//! forward filter, used both as a test oracle and as an alternative engine.

use ndarray::{Array2, Array3, ArrayView1};

use crate::error::{CoreError, Result};
use crate::linalg::{gaussian_loglik, log_sum_exp, stationary_distribution};
use crate::model::{ModelParams, SeriesData};

/// Per-time posterior weights produced by an E-step.
///
/// Row t-1 of `marg` holds the regime law at time t (t = 1..=T); slice t-1 of
/// `pair` holds the joint law of (Z_{t-1}, Z_t). `s_used[t-1]` is the
/// effective window length at t: min(s, t) for the windowed E-step (windows
/// truncate at the start of the series), t for the exact filter.
#[derive(Debug, Clone)]
pub struct WindowWeights {
    marg: Array2<f64>,
    pair: Array3<f64>,
    s_used: Vec<usize>,
}

impl WindowWeights {
    pub fn new(marg: Array2<f64>, pair: Array3<f64>, s_used: Vec<usize>) -> Result<Self> {
        let (t_len, k) = marg.dim();
        if pair.dim() != (t_len, k, k) || s_used.len() != t_len {
            return Err(CoreError::InvalidInput(
                "weight container shape mismatch".into(),
            ));
        }
        for t in 0..t_len {
            let row_sum: f64 = marg.row(t).sum();
            if (row_sum - 1.0).abs() > 1e-10 {
                return Err(CoreError::InvalidInput(format!(
                    "marginal weights at t={} sum to {row_sum}",
                    t + 1
                )));
            }
            let slice_sum: f64 = pair.index_axis(ndarray::Axis(0), t).sum();
            if (slice_sum - 1.0).abs() > 1e-10 {
                return Err(CoreError::InvalidInput(format!(
                    "pair weights at t={} sum to {slice_sum}",
                    t + 1
                )));
            }
            for j in 0..k {
                let col: f64 = (0..k).map(|i| pair[[t, i, j]]).sum();
                if (col - marg[[t, j]]).abs() > 1e-8 {
                    return Err(CoreError::InvalidInput(format!(
                        "pair/marg inconsistency at t={}, j={j}",
                        t + 1
                    )));
                }
            }
        }
        Ok(Self { marg, pair, s_used })
    }

    /// Number of weighted time points T.
    pub fn t_len(&self) -> usize {
        self.marg.nrows()
    }

    pub fn k(&self) -> usize {
        self.marg.ncols()
    }

    /// T x K marginal weight matrix; row t-1 is the law of Z_t.
    pub fn marg(&self) -> &Array2<f64> {
        &self.marg
    }

    /// Marginal weight of regime j at time t (t = 1..=T, j 0-based).
    pub fn marg_at(&self, t: usize, j: usize) -> f64 {
        self.marg[[t - 1, j]]
    }

    /// Pair weight of (Z_{t-1}=i, Z_t=j) at time t (t = 1..=T).
    pub fn pair_at(&self, t: usize, i: usize, j: usize) -> f64 {
        self.pair[[t - 1, i, j]]
    }

    pub fn pair(&self) -> &Array3<f64> {
        &self.pair
    }

    pub fn s_used(&self) -> &[usize] {
        &self.s_used
    }

    /// Build weights from an observed latent path: one-hot marginals, with
    /// pair slices from consecutive states. The first slice has no observed
    /// predecessor and is attributed to a self-transition so the container
    /// invariants hold; transition estimation from observed paths counts
    /// t >= 2 directly instead of using that slice.
    pub fn from_latent_path(z_one_based: &[usize], k: usize) -> Result<Self> {
        let t_len = z_one_based.len();
        if t_len == 0 {
            return Err(CoreError::InvalidInput("empty latent path".into()));
        }
        let mut marg = Array2::zeros((t_len, k));
        let mut pair = Array3::zeros((t_len, k, k));
        for (t, &zv) in z_one_based.iter().enumerate() {
            let j = zv
                .checked_sub(1)
                .filter(|&j| j < k)
                .ok_or_else(|| CoreError::InvalidInput(format!("regime {zv} out of 1..={k}")))?;
            marg[[t, j]] = 1.0;
            let i = if t == 0 { j } else { z_one_based[t - 1] - 1 };
            pair[[t, i, j]] = 1.0;
        }
        Self::new(marg, pair, (1..=t_len).collect())
    }
}

/// Per-(t, regime) Gaussian log-densities log p(Y_t | Y_{t-1}, B_j, sigma2),
/// t = 1..=T in row t-1. Shared by both filters.
pub fn loglik_table(series: &SeriesData, params: &ModelParams) -> Result<Array2<f64>> {
    let t_len = series.t_len();
    let k = params.k();
    let mut table = Array2::zeros((t_len, k));
    for t in 1..=t_len {
        for j in 0..k {
            let ll = gaussian_loglik(
                series.y_at(t),
                series.y_at(t - 1),
                params.coeff(j).view(),
                params.sigma2(),
            )?;
            if !ll.is_finite() {
                return Err(CoreError::NonFiniteDensity {
                    t,
                    detail: format!("regime {}: log-density {ll}", j + 1),
                });
            }
            table[[t - 1, j]] = ll;
        }
    }
    Ok(table)
}

/// Windowed approximate E-step conditioning the window start on regime 1.
pub fn approx_estep(series: &SeriesData, params: &ModelParams, s: usize) -> Result<WindowWeights> {
    approx_estep_with_start(series, params, s, 0)
}

/// Windowed approximate E-step with an explicit window-start regime
/// (0-based). Any start regime gives an equally accurate approximation of
/// the exact filter; regime 0 is the conventional default.
pub fn approx_estep_with_start(
    series: &SeriesData,
    params: &ModelParams,
    s: usize,
    start_regime: usize,
) -> Result<WindowWeights> {
    if s == 0 {
        return Err(CoreError::InvalidInput(
            "window length s must be >= 1".into(),
        ));
    }
    let k = params.k();
    if start_regime >= k {
        return Err(CoreError::InvalidInput(format!(
            "start regime {start_regime} out of range for K={k}"
        )));
    }
    let t_len = series.t_len();
    let ll = loglik_table(series, params)?;
    let log_p = params.trans().mapv(|v| v.ln());

    let mut marg = Array2::zeros((t_len, k));
    let mut pair = Array3::zeros((t_len, k, k));
    let mut s_used = vec![0usize; t_len];

    let mut alpha = vec![0.0f64; k];
    let mut alpha_next = vec![0.0f64; k];
    let mut terms = vec![0.0f64; k];
    for t in 1..=t_len {
        let eff = s.min(t);
        s_used[t - 1] = eff;
        let start = t - eff; // window covers observations Y_start..Y_t

        // alpha_u(j) = log P(Z_u = j, Y_{start+1..u} | Z_start = start_regime, Y_start)
        for j in 0..k {
            alpha[j] = if j == start_regime {
                0.0
            } else {
                f64::NEG_INFINITY
            };
        }
        for u in start + 1..t {
            for j in 0..k {
                for i in 0..k {
                    terms[i] = alpha[i] + log_p[[i, j]];
                }
                alpha_next[j] = log_sum_exp(&terms) + ll[[u - 1, j]];
            }
            std::mem::swap(&mut alpha, &mut alpha_next);
        }

        // Final step: joint over (Z_{t-1}, Z_t) given the window.
        let mut log_joint = Array2::from_elem((k, k), f64::NEG_INFINITY);
        let mut flat = Vec::with_capacity(k * k);
        for i in 0..k {
            for j in 0..k {
                let v = alpha[i] + log_p[[i, j]] + ll[[t - 1, j]];
                log_joint[[i, j]] = v;
                flat.push(v);
            }
        }
        let norm = log_sum_exp(&flat);
        if !norm.is_finite() {
            return Err(CoreError::NonFiniteDensity {
                t,
                detail: "window normalizer vanished".into(),
            });
        }
        for i in 0..k {
            for j in 0..k {
                let w = (log_joint[[i, j]] - norm).exp();
                pair[[t - 1, i, j]] = w;
                marg[[t - 1, j]] += w;
            }
        }
    }
    WindowWeights::new(marg, pair, s_used)
}

/// Exact full-history forward filter. The time-0 regime is drawn from the
/// stationary distribution of the transition matrix, so the marginal prior
/// of Z_1 is stationary as well.
pub fn exact_filter(series: &SeriesData, params: &ModelParams) -> Result<WindowWeights> {
    let k = params.k();
    let t_len = series.t_len();
    let ll = loglik_table(series, params)?;
    let log_p = params.trans().mapv(|v| v.ln());
    let pi = stationary_distribution(params.trans().view())?;

    let mut marg = Array2::zeros((t_len, k));
    let mut pair = Array3::zeros((t_len, k, k));

    // log filtered law of Z_{t-1} given Y_0^{t-1}
    let mut alpha: Vec<f64> = pi.iter().map(|&v| v.ln()).collect();
    let mut flat = Vec::with_capacity(k * k);
    for t in 1..=t_len {
        flat.clear();
        let mut log_joint = Array2::from_elem((k, k), f64::NEG_INFINITY);
        for i in 0..k {
            for j in 0..k {
                let v = alpha[i] + log_p[[i, j]] + ll[[t - 1, j]];
                log_joint[[i, j]] = v;
                flat.push(v);
            }
        }
        let norm = log_sum_exp(&flat);
        if !norm.is_finite() {
            return Err(CoreError::NonFiniteDensity {
                t,
                detail: "filter normalizer vanished".into(),
            });
        }
        for j in 0..k {
            let mut col = Vec::with_capacity(k);
            for i in 0..k {
                let w = (log_joint[[i, j]] - norm).exp();
                pair[[t - 1, i, j]] = w;
                marg[[t - 1, j]] += w;
                col.push(log_joint[[i, j]]);
            }
            alpha[j] = log_sum_exp(&col) - norm;
        }
    }
    WindowWeights::new(marg, pair, (1..=t_len).collect())
}

/// Closed-form filtered probability of regime 1 in the symmetric two-regime
/// model (B_2 = -B_1, sigma2 = 1, i.i.d. regimes with P(Z=1) = p1).
///
/// Equals p1 K_+ / (p1 K_+ + (1-p1) K_-) with Gaussian kernels K_+- around
/// +-B' y_prev; computed through the sigmoid of the exponent difference,
/// which collapses to 2 y_t' (B' y_prev) + log(p1/(1-p1)).
pub fn symmetric_filter_closed_form(
    y_prev: ArrayView1<f64>,
    y_t: ArrayView1<f64>,
    beta: ArrayView1<f64>,
    p1: f64,
) -> Result<f64> {
    if !(p1 > 0.0 && p1 < 1.0) {
        return Err(CoreError::Domain(format!("p1 must lie in (0,1), got {p1}")));
    }
    let d = y_t.len();
    if y_prev.len() != d || beta.len() != d * d {
        return Err(CoreError::InvalidInput(
            "symmetric filter: dimension mismatch".into(),
        ));
    }
    // v = (Id (x) y_prev)' beta, coordinate i = column i of B dot y_prev.
    let mut dot = 0.0;
    for i in 0..d {
        let mut vi = 0.0;
        for r in 0..d {
            vi += beta[i * d + r] * y_prev[r];
        }
        dot += y_t[i] * vi;
    }
    let x = (p1 / (1.0 - p1)).ln() + 2.0 * dot;
    Ok(stable_sigmoid(x))
}

fn stable_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
