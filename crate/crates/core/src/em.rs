//! EM drivers: the windowed-E-step iteration, the truncation variant, and
//! multi-initialization orchestration with HBIC selection.

use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::xi_coefficient;
use crate::error::{CoreError, Result};
use crate::filtering::{approx_estep, exact_filter, WindowWeights};
use crate::model::{ModelParams, SeriesData};
use crate::mstep::{update_beta, update_sigma2, update_transition, LassoConfig};
use crate::rng::{stream_rng, Purpose};
use crate::tuning::{cv_select_lambda, hbic_score, TuningMode, TuningPolicy};

/// Window-length rule for the approximate E-step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SPolicy {
    Fixed(usize),
    /// ceil(log T), the default theory-backed choice.
    LogT,
    /// ceil(log T / (-2 log Xi(P_hat))) recomputed each iteration from the
    /// current transition estimate, clamped to [1, 30].
    LogTOverXi,
}

pub const S_CLAMP_MAX: usize = 30;

/// An initialization is failed once some regime's total posterior mass
/// drops below one effective observation: the regime is starved, the fit
/// has collapsed onto fewer regimes, and its ratio-form updates run on
/// numerical dust. Failed initializations are excluded from ranking.
pub const REGIME_MIN_MASS: f64 = 1.0;

/// Which E-step engine drives the iteration. The exact filter is a
/// comparison option, not the production path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EStepEngine {
    Windowed,
    ExactFilter,
}

/// Hard-thresholding rule xi(T, d) = c * sqrt(log(K d^2) / T) applied to the
/// coefficient stack after each M-step (the truncation variant).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncationRule {
    pub c: f64,
}

impl TruncationRule {
    pub fn threshold(&self, t_len: usize, d: usize, k: usize) -> f64 {
        self.c * (((k * d * d) as f64).ln() / t_len as f64).sqrt()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmConfig {
    pub s_policy: SPolicy,
    /// Sup-norm convergence threshold on the full parameter stack.
    pub tol_inf: f64,
    pub max_iter: usize,
    pub n_inits: usize,
    /// Standard deviation of the random coefficient initialization.
    pub init_sd: f64,
    /// Enables the truncation variant when set.
    pub truncation: Option<TruncationRule>,
    pub tuning: TuningPolicy,
    pub engine: EStepEngine,
    pub seed: u64,
    /// Store every iterate in the fit result (for invariant checks).
    pub keep_iterates: bool,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            s_policy: SPolicy::LogT,
            tol_inf: 1e-4,
            max_iter: 200,
            n_inits: 5,
            init_sd: 0.5,
            truncation: None,
            tuning: TuningPolicy::default(),
            engine: EStepEngine::Windowed,
            seed: 0,
            keep_iterates: false,
        }
    }
}

impl EmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol_inf > 0.0) {
            return Err(CoreError::InvalidInput("tol_inf must be positive".into()));
        }
        if self.n_inits == 0 || self.max_iter == 0 {
            return Err(CoreError::InvalidInput(
                "n_inits and max_iter must be >= 1".into(),
            ));
        }
        if !(self.init_sd > 0.0) {
            return Err(CoreError::InvalidInput("init_sd must be positive".into()));
        }
        self.tuning.validate()
    }
}

/// One EM iteration's bookkeeping.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iter: usize,
    pub lambda: f64,
    /// Penalized objective at the updated parameters under the iteration's
    /// weights (the quantity the M-step maximizes).
    pub objective: f64,
    /// Sup-norm change of the full parameter stack from the previous iterate.
    pub delta_inf: f64,
    pub beta_l0: usize,
    pub s_used: usize,
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub theta_hat: ModelParams,
    pub trace: Vec<TraceRecord>,
    pub converged: bool,
    pub iterations: usize,
    pub hbic: f64,
    pub init_id: usize,
    /// Final E-step weights at the returned parameters' last iteration.
    pub final_weights: WindowWeights,
    /// Present when the config asked to keep iterates.
    pub iterates: Option<Vec<ModelParams>>,
}

/// Outcome of a multi-initialization fit: the HBIC-selected result plus all
/// per-initialization outcomes (failed ones carry the error text).
#[derive(Debug)]
pub struct FitOutput {
    pub best: FitResult,
    pub all: Vec<std::result::Result<FitResult, String>>,
}

/// Random initialization: coefficient entries i.i.d. N(0, init_sd^2),
/// uniform transition rows, unit variance.
pub fn random_init(d: usize, k: usize, init_sd: f64, rng: &mut impl Rng) -> Result<ModelParams> {
    let mut coeffs = Vec::with_capacity(k);
    for _ in 0..k {
        let mut b = Array2::<f64>::zeros((d, d));
        // Column-stacked draw order matches the vectorized stack layout.
        for col in 0..d {
            for row in 0..d {
                let z: f64 = rng.sample(StandardNormal);
                b[[row, col]] = init_sd * z;
            }
        }
        coeffs.push(b);
    }
    let trans = Array2::from_elem((k, k), 1.0 / k as f64);
    ModelParams::new(coeffs, trans, 1.0)
}

fn window_length(policy: SPolicy, t_len: usize, trans: &Array2<f64>) -> usize {
    match policy {
        SPolicy::Fixed(s) => s.max(1),
        SPolicy::LogT => ((t_len as f64).ln().ceil() as usize).max(1),
        SPolicy::LogTOverXi => {
            let xi = xi_coefficient(trans.view());
            if xi <= 0.0 {
                1
            } else if xi >= 1.0 {
                S_CLAMP_MAX
            } else {
                let s = ((t_len as f64).ln() / (-2.0 * xi.ln())).ceil() as usize;
                s.clamp(1, S_CLAMP_MAX)
            }
        }
    }
}

/// Sup-norm distance over the full parameter stack (beta, vec(P), sigma2).
pub fn theta_sup_distance(a: &ModelParams, b: &ModelParams) -> f64 {
    let mut d = 0.0f64;
    for (ba, bb) in a.coeffs().iter().zip(b.coeffs()) {
        for (x, y) in ba.iter().zip(bb.iter()) {
            d = d.max((x - y).abs());
        }
    }
    for (x, y) in a.trans().iter().zip(b.trans().iter()) {
        d = d.max((x - y).abs());
    }
    d.max((a.sigma2() - b.sigma2()).abs())
}

/// Penalized objective at parameters `p` under fixed weights: the average
/// complete-data log-likelihood with pair/marginal weights in place of the
/// indicators, minus lambda * ||beta||_1.
pub fn penalized_objective(
    series: &SeriesData,
    weights: &WindowWeights,
    p: &ModelParams,
    lambda: f64,
) -> f64 {
    let t_len = series.t_len();
    let k = p.k();
    let d = p.dim();
    let y = series.y();
    let ln_p = p.trans().mapv(|v| if v > 0.0 { v.ln() } else { 0.0 });
    let mut acc = 0.0;
    for t in 1..=t_len {
        for i in 0..k {
            for j in 0..k {
                let w = weights.pair_at(t, i, j);
                if w > 0.0 {
                    // 0 * log 0 = 0 by convention; a positive weight on a
                    // zero probability cannot occur for ratio-form updates.
                    acc += w * ln_p[[i, j]];
                }
            }
        }
        let x = y.row(t - 1);
        let resp = y.row(t);
        for j in 0..k {
            let m = weights.marg_at(t, j);
            if m == 0.0 {
                continue;
            }
            let b = p.coeff(j);
            let mut ss = 0.0;
            for i in 0..d {
                let mut pred = 0.0;
                for r in 0..d {
                    pred += b[[r, i]] * x[r];
                }
                let rsd = resp[i] - pred;
                ss += rsd * rsd;
            }
            acc += -m * ss / (2.0 * p.sigma2());
        }
        acc += -0.5 * d as f64 * (crate::linalg::LN_2PI + p.sigma2().ln());
    }
    let l1: f64 = p
        .coeffs()
        .iter()
        .map(|b| b.iter().map(|v| v.abs()).sum::<f64>())
        .sum();
    acc / t_len as f64 - lambda * l1
}

/// One EM run from an explicit initialization.
pub fn fit_single_init(
    series: &SeriesData,
    cfg: &EmConfig,
    theta0: ModelParams,
    init_id: usize,
) -> Result<FitResult> {
    cfg.validate()?;
    let t_len = series.t_len();
    let d = series.dim();
    let k = theta0.k();
    if theta0.dim() != d {
        return Err(CoreError::InvalidInput(
            "initialization dimension mismatch".into(),
        ));
    }
    if t_len < 20 {
        return Err(CoreError::InvalidInput(format!(
            "series too short for estimation: T={t_len} < 20"
        )));
    }

    let mut theta = theta0;
    let mut trace = Vec::new();
    let mut iterates = cfg.keep_iterates.then(Vec::new);
    let mut converged = false;
    let mut weights_out: Option<WindowWeights> = None;
    let mut iterations = 0;

    for q in 1..=cfg.max_iter {
        let s = window_length(cfg.s_policy, t_len, theta.trans());
        let weights = match cfg.engine {
            EStepEngine::Windowed => approx_estep(series, &theta, s)?,
            EStepEngine::ExactFilter => exact_filter(series, &theta)?,
        };
        for j in 0..k {
            let mass: f64 = (1..=t_len).map(|t| weights.marg_at(t, j)).sum();
            if mass < REGIME_MIN_MASS {
                return Err(CoreError::DegenerateRegime { regime: j, mass });
            }
        }

        let lambda = match cfg.tuning.mode {
            TuningMode::FixedLambda(v) => v,
            TuningMode::CvPerIteration => {
                let lasso_probe = LassoConfig::new(0.0)?;
                cv_select_lambda(series, &weights, &cfg.tuning, &lasso_probe)?.lambda
            }
        };

        let mut lasso_cfg = LassoConfig::new(lambda)?;
        lasso_cfg.warm_start = Some(theta.coeffs().to_vec());
        let mut beta = update_beta(series, &weights, &lasso_cfg)?.coeffs;
        if let Some(rule) = cfg.truncation {
            let xi_thr = rule.threshold(t_len, d, k);
            for b in &mut beta {
                b.mapv_inplace(|v| if v.abs() >= xi_thr { v } else { 0.0 });
            }
        }
        let trans = update_transition(&weights)?;
        let (sigma2, _floored) = update_sigma2(series, &weights, &beta);

        let next = ModelParams::new(beta, trans, sigma2)?;
        let delta = theta_sup_distance(&next, &theta);
        let objective = penalized_objective(series, &weights, &next, lambda);
        trace.push(TraceRecord {
            iter: q,
            lambda,
            objective,
            delta_inf: delta,
            beta_l0: next.beta_l0(),
            s_used: match cfg.engine {
                EStepEngine::Windowed => s,
                EStepEngine::ExactFilter => t_len,
            },
        });
        if let Some(iters) = &mut iterates {
            iters.push(next.clone());
        }
        theta = next;
        weights_out = Some(weights);
        iterations = q;
        if delta < cfg.tol_inf {
            converged = true;
            break;
        }
    }

    let hbic = hbic_score(t_len, d, k, theta.sigma2(), theta.beta_l0());
    Ok(FitResult {
        final_weights: weights_out.expect("at least one iteration ran"),
        theta_hat: theta,
        trace,
        converged,
        iterations,
        hbic,
        init_id,
        iterates,
    })
}

/// Multi-initialization fit: runs `n_inits` EM chains from random starts in
/// parallel, ranks the survivors by HBIC (ties: lower final objective, then
/// lower init id), and returns the winner plus everything else.
pub fn fit(series: &SeriesData, k: usize, cfg: &EmConfig) -> Result<FitOutput> {
    cfg.validate()?;
    if k == 0 {
        return Err(CoreError::InvalidInput("K must be >= 1".into()));
    }
    let d = series.dim();
    let all: Vec<std::result::Result<FitResult, String>> = (0..cfg.n_inits)
        .into_par_iter()
        .map(|init_id| {
            let mut rng = stream_rng(cfg.seed, Purpose::EmInit, &[init_id as u64]);
            let theta0 = random_init(d, k, cfg.init_sd, &mut rng)
                .map_err(|e| format!("init {init_id}: {e}"))?;
            fit_single_init(series, cfg, theta0, init_id).map_err(|e| e.to_string())
        })
        .collect();

    let mut best: Option<&FitResult> = None;
    for fit in all.iter().flatten() {
        let better = match best {
            None => true,
            Some(cur) => {
                let a = (fit.hbic, final_objective(fit), fit.init_id);
                let b = (cur.hbic, final_objective(cur), cur.init_id);
                a.0 < b.0 || (a.0 == b.0 && (a.1 < b.1 || (a.1 == b.1 && a.2 < b.2)))
            }
        };
        if better {
            best = Some(fit);
        }
    }
    match best {
        Some(b) => Ok(FitOutput {
            best: b.clone(),
            all,
        }),
        None => {
            let reasons: Vec<String> = all
                .iter()
                .map(|r| r.as_ref().err().cloned().unwrap_or_default())
                .collect();
            Err(CoreError::AllCandidatesFailed(reasons.join("; ")))
        }
    }
}

fn final_objective(fit: &FitResult) -> f64 {
    fit.trace.last().map(|t| t.objective).unwrap_or(f64::NAN)
}

/// Resolve label switching: search all K! regime relabelings (guarded at
/// K <= 8), applying each simultaneously to the coefficient matrices and to
/// rows+columns of the transition matrix, and keep the one minimizing the
/// coefficient error against `truth`.
pub fn align_permutation(
    fit: &ModelParams,
    truth: &ModelParams,
) -> Result<(ModelParams, Vec<usize>)> {
    let k = fit.k();
    if truth.k() != k || truth.dim() != fit.dim() {
        return Err(CoreError::InvalidInput(
            "shape mismatch in alignment".into(),
        ));
    }
    if k > 8 {
        return Err(CoreError::InvalidInput(format!(
            "refusing {k}! permutations; K must be <= 8"
        )));
    }
    let mut best_perm: Vec<usize> = (0..k).collect();
    let mut best_err = f64::INFINITY;
    let mut perm: Vec<usize> = (0..k).collect();
    permute_search(&mut perm, 0, fit, truth, &mut best_perm, &mut best_err);
    let aligned = fit.permuted(&best_perm)?;
    Ok((aligned, best_perm))
}

fn permute_search(
    perm: &mut Vec<usize>,
    depth: usize,
    fit: &ModelParams,
    truth: &ModelParams,
    best_perm: &mut Vec<usize>,
    best_err: &mut f64,
) {
    let k = perm.len();
    if depth == k {
        let mut err2 = 0.0;
        for i in 0..k {
            let bf = fit.coeff(perm[i]);
            let bt = truth.coeff(i);
            for (x, y) in bf.iter().zip(bt.iter()) {
                let d = x - y;
                err2 += d * d;
            }
        }
        if err2 < *best_err {
            *best_err = err2;
            best_perm.clone_from(perm);
        }
        return;
    }
    for i in depth..k {
        perm.swap(depth, i);
        permute_search(perm, depth + 1, fit, truth, best_perm, best_err);
        perm.swap(depth, i);
    }
}

/// beta-stack L2 distance between two parameter sets.
pub fn beta_l2_distance(a: &ModelParams, b: &ModelParams) -> f64 {
    let mut err2 = 0.0;
    for (ba, bb) in a.coeffs().iter().zip(b.coeffs()) {
        for (x, y) in ba.iter().zip(bb.iter()) {
            let d = x - y;
            err2 += d * d;
        }
    }
    err2.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{make_setting_one, simulate, SimConfig};
    use ndarray::array;

    #[test]
    fn random_init_matches_contract() {
        let mut rng = stream_rng(1, Purpose::EmInit, &[0]);
        let p = random_init(30, 2, 0.5, &mut rng).unwrap();
        assert_eq!(p.trans()[[0, 0]], 0.5);
        assert_eq!(p.trans()[[1, 0]], 0.5);
        assert_eq!(p.sigma2(), 1.0);
        let stack = p.beta_stack();
        assert_eq!(stack.len(), 1800);
        let mean: f64 = stack.iter().sum::<f64>() / 1800.0;
        let sd: f64 = (stack.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 1800.0).sqrt();
        assert!((sd - 0.5).abs() < 0.05, "sd = {sd}");
    }

    #[test]
    fn window_length_rules() {
        let p = array![[0.7, 0.3], [0.3, 0.7]];
        assert_eq!(window_length(SPolicy::Fixed(4), 1000, &p), 4);
        assert_eq!(window_length(SPolicy::LogT, 2000, &p), 8);
        // Xi = 0.4/0.58; s = ceil(log 2000 / (-2 log Xi)) = ceil(10.2) = 11.
        let s = window_length(SPolicy::LogTOverXi, 2000, &p);
        let xi: f64 = 0.4 / 0.58;
        let expect = ((2000f64).ln() / (-2.0 * xi.ln())).ceil() as usize;
        assert_eq!(s, expect.clamp(1, 30));
        // Uniform rows: Xi = 0 -> s = 1.
        let u = array![[0.5, 0.5], [0.5, 0.5]];
        assert_eq!(window_length(SPolicy::LogTOverXi, 2000, &u), 1);
    }

    #[test]
    fn align_identity_and_swap() {
        let truth = make_setting_one(3).unwrap();
        let (aligned, perm) = align_permutation(&truth, &truth).unwrap();
        assert_eq!(perm, vec![0, 1]);
        assert_eq!(aligned.coeff(0), truth.coeff(0));

        let swapped = truth.permuted(&[1, 0]).unwrap();
        let (aligned, perm) = align_permutation(&swapped, &truth).unwrap();
        assert_eq!(perm, vec![1, 0]);
        assert!(beta_l2_distance(&aligned, &truth) == 0.0);
        assert_eq!(aligned.trans()[[0, 0]], truth.trans()[[0, 0]]);
    }

    #[test]
    fn align_never_worse_than_unaligned() {
        let truth = make_setting_one(3).unwrap();
        let mut rng = stream_rng(3, Purpose::EmInit, &[7]);
        for _ in 0..10 {
            let guess = random_init(3, 2, 0.5, &mut rng).unwrap();
            let raw = beta_l2_distance(&guess, &truth);
            let (aligned, _) = align_permutation(&guess, &truth).unwrap();
            assert!(beta_l2_distance(&aligned, &truth) <= raw + 1e-15);
        }
    }

    #[test]
    fn align_error_invariant_to_truth_relabeling() {
        // Aligning against the truth or against any relabeling of the truth
        // yields the same minimal error.
        let truth = make_setting_one(3).unwrap();
        let relabeled = truth.permuted(&[1, 0]).unwrap();
        let mut rng = stream_rng(5, Purpose::EmInit, &[1]);
        let guess = random_init(3, 2, 0.5, &mut rng).unwrap();
        let (a1, _) = align_permutation(&guess, &truth).unwrap();
        let (a2, _) = align_permutation(&guess, &relabeled).unwrap();
        let e1 = beta_l2_distance(&a1, &truth);
        let e2 = beta_l2_distance(&a2, &relabeled);
        assert!((e1 - e2).abs() < 1e-12);
    }

    #[test]
    fn align_guards_large_k() {
        let coeffs: Vec<Array2<f64>> = (0..9).map(|_| Array2::zeros((1, 1))).collect();
        let trans = Array2::from_elem((9, 9), 1.0 / 9.0);
        let p = ModelParams::new(coeffs, trans, 1.0).unwrap();
        assert!(align_permutation(&p, &p).is_err());
    }

    #[test]
    fn single_regime_fit_reduces_to_weighted_lasso() {
        let params =
            ModelParams::new(vec![array![[0.5, 0.1], [0.0, 0.3]]], array![[1.0]], 1.0).unwrap();
        let cfg_sim = SimConfig::new(params, 300, 77).unwrap().with_burn_in(100);
        let series = simulate(&cfg_sim).unwrap().series;

        let lambda = 0.02;
        let cfg = EmConfig {
            tuning: TuningPolicy {
                mode: TuningMode::FixedLambda(lambda),
                ..TuningPolicy::default()
            },
            n_inits: 1,
            ..EmConfig::default()
        };
        let out = fit(&series, 1, &cfg).unwrap();

        // Direct single-regime weighted lasso on all-ones weights.
        let w = WindowWeights::new(
            Array2::from_elem((300, 1), 1.0),
            ndarray::Array3::from_elem((300, 1, 1), 1.0),
            (1..=300).collect(),
        )
        .unwrap();
        let direct = update_beta(&series, &w, &LassoConfig::new(lambda).unwrap()).unwrap();
        for i in 0..2 {
            for r in 0..2 {
                assert!(
                    (out.best.theta_hat.coeff(0)[[r, i]] - direct.coeffs[0][[r, i]]).abs() < 1e-8
                );
            }
        }
        assert!(out.best.converged);
        assert_eq!(out.best.theta_hat.trans()[[0, 0]], 1.0);
    }

    #[test]
    fn fit_from_truth_stays_near_truth() {
        // Started at the generating parameters with a small fixed penalty,
        // the iteration must converge quickly and stay in the neighborhood.
        let params = make_setting_one(9).unwrap();
        let cfg_sim = SimConfig::new(params.clone(), 2000, 31)
            .unwrap()
            .with_burn_in(500);
        let series = simulate(&cfg_sim).unwrap().series;
        let cfg = EmConfig {
            tuning: TuningPolicy {
                mode: TuningMode::FixedLambda(0.02),
                ..TuningPolicy::default()
            },
            ..EmConfig::default()
        };
        let fit = fit_single_init(&series, &cfg, params.clone(), 0).unwrap();
        assert!(
            fit.converged && fit.iterations <= 25,
            "converged={} iterations={}",
            fit.converged,
            fit.iterations
        );
        let err = beta_l2_distance(&fit.theta_hat, &params);
        assert!(err <= 0.5, "drifted to error {err}");
    }

    #[test]
    fn trace_terminal_delta_below_tol_when_converged() {
        let params = make_setting_one(3).unwrap();
        let cfg_sim = SimConfig::new(params.clone(), 500, 13)
            .unwrap()
            .with_burn_in(200);
        let series = simulate(&cfg_sim).unwrap().series;
        let cfg = EmConfig {
            tuning: TuningPolicy {
                mode: TuningMode::FixedLambda(0.05),
                ..TuningPolicy::default()
            },
            n_inits: 2,
            ..EmConfig::default()
        };
        let out = fit(&series, 2, &cfg).unwrap();
        if out.best.converged {
            let last = out.best.trace.last().unwrap();
            assert!(last.delta_inf < cfg.tol_inf);
        }
    }

    #[test]
    fn truncation_enforces_magnitude_floor() {
        let params = make_setting_one(3).unwrap();
        let cfg_sim = SimConfig::new(params.clone(), 500, 19)
            .unwrap()
            .with_burn_in(200);
        let series = simulate(&cfg_sim).unwrap().series;
        let rule = TruncationRule { c: 0.5 };
        let cfg = EmConfig {
            tuning: TuningPolicy {
                mode: TuningMode::FixedLambda(0.02),
                ..TuningPolicy::default()
            },
            truncation: Some(rule),
            keep_iterates: true,
            n_inits: 1,
            ..EmConfig::default()
        };
        let out = fit(&series, 2, &cfg).unwrap();
        let thr = rule.threshold(500, 3, 2);
        for iterate in out.best.iterates.as_ref().unwrap() {
            for b in iterate.coeffs() {
                for &v in b.iter() {
                    assert!(
                        v == 0.0 || v.abs() >= thr,
                        "value {v} below threshold {thr}"
                    );
                }
            }
        }
    }

    #[test]
    fn fit_is_deterministic() {
        let params = make_setting_one(3).unwrap();
        let cfg_sim = SimConfig::new(params.clone(), 300, 3)
            .unwrap()
            .with_burn_in(100);
        let series = simulate(&cfg_sim).unwrap().series;
        let cfg = EmConfig {
            n_inits: 3,
            max_iter: 30,
            ..EmConfig::default()
        };
        let a = fit(&series, 2, &cfg).unwrap();
        let b = fit(&series, 2, &cfg).unwrap();
        assert_eq!(a.best.init_id, b.best.init_id);
        assert_eq!(a.best.iterations, b.best.iterations);
        assert_eq!(
            a.best.theta_hat.beta_stack().to_vec(),
            b.best.theta_hat.beta_stack().to_vec()
        );
        assert_eq!(a.best.theta_hat.sigma2(), b.best.theta_hat.sigma2());
    }
}
