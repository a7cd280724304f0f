#![allow(dead_code)]

//! Test-only oracles, independent of the library's computation paths:
//! a Jacobi eigensolver for singular values, brute-force latent-path
//! enumeration for the filters, a plain Gaussian-elimination solver for
//! normal equations, and a linear-space forward recursion.

use mswitch_core::model::{ModelParams, SeriesData};
use ndarray::{Array1, Array2};

/// Largest singular value via Jacobi diagonalization of m'm. Independent of
/// the power-iteration path in the library.
pub fn jacobi_sigma_max(m: &Array2<f64>) -> f64 {
    let n = m.ncols();
    let mut a = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            let mut s = 0.0;
            for r in 0..m.nrows() {
                s += m[[r, i]] * m[[r, j]];
            }
            a[[i, j]] = s;
        }
    }
    for _ in 0..200 {
        // Find the largest off-diagonal element.
        let (mut p, mut q, mut big) = (0, 1, 0.0f64);
        for i in 0..n {
            for j in i + 1..n {
                if a[[i, j]].abs() > big {
                    big = a[[i, j]].abs();
                    p = i;
                    q = j;
                }
            }
        }
        if big < 1e-14 {
            break;
        }
        let theta = 0.5 * (2.0 * a[[p, q]]).atan2(a[[p, p]] - a[[q, q]]);
        let (c, s) = (theta.cos(), theta.sin());
        for k in 0..n {
            let akp = a[[k, p]];
            let akq = a[[k, q]];
            a[[k, p]] = c * akp + s * akq;
            a[[k, q]] = -s * akp + c * akq;
        }
        for k in 0..n {
            let apk = a[[p, k]];
            let aqk = a[[q, k]];
            a[[p, k]] = c * apk + s * aqk;
            a[[q, k]] = -s * apk + c * aqk;
        }
    }
    let mut lam = 0.0f64;
    for i in 0..n {
        lam = lam.max(a[[i, i]]);
    }
    lam.max(0.0).sqrt()
}

/// Gaussian elimination with partial pivoting, written independently of the
/// library's solver; used as the normal-equations oracle for the lasso.
pub fn dense_solve(a: &Array2<f64>, b: &Array1<f64>) -> Array1<f64> {
    let n = b.len();
    let mut aug = Array2::<f64>::zeros((n, n + 1));
    for i in 0..n {
        for j in 0..n {
            aug[[i, j]] = a[[i, j]];
        }
        aug[[i, n]] = b[i];
    }
    for col in 0..n {
        let mut piv = col;
        for r in col + 1..n {
            if aug[[r, col]].abs() > aug[[piv, col]].abs() {
                piv = r;
            }
        }
        if piv != col {
            for c in 0..=n {
                let tmp = aug[[col, c]];
                aug[[col, c]] = aug[[piv, c]];
                aug[[piv, c]] = tmp;
            }
        }
        let pivot = aug[[col, col]];
        assert!(pivot.abs() > 1e-12, "oracle solver hit singular pivot");
        for r in 0..n {
            if r == col {
                continue;
            }
            let f = aug[[r, col]] / pivot;
            for c in col..=n {
                aug[[r, c]] -= f * aug[[col, c]];
            }
        }
    }
    Array1::from_shape_fn(n, |i| aug[[i, n]] / aug[[i, i]])
}

fn gauss_density_log(
    y_t: ndarray::ArrayView1<f64>,
    y_prev: ndarray::ArrayView1<f64>,
    b: &Array2<f64>,
    sigma2: f64,
) -> f64 {
    let d = y_t.len();
    let mut ss = 0.0;
    for i in 0..d {
        let mut pred = 0.0;
        for r in 0..d {
            pred += b[[r, i]] * y_prev[r];
        }
        let rr = y_t[i] - pred;
        ss += rr * rr;
    }
    -0.5 * d as f64 * ((2.0 * std::f64::consts::PI).ln() + sigma2.ln()) - ss / (2.0 * sigma2)
}

/// Brute-force windowed posterior at time t: enumerate every in-window
/// latent path explicitly and sum path posteriors. Window and conditioning
/// conventions mirror the library contract: window observations
/// Y_{t-eff}..Y_t with eff = min(s, t), start state fixed.
pub fn enumerate_window_posterior(
    series: &SeriesData,
    params: &ModelParams,
    s: usize,
    start_regime: usize,
    t: usize,
) -> (Vec<f64>, Vec<Vec<f64>>) {
    let k = params.k();
    let eff = s.min(t);
    let start = t - eff;
    let n_free = eff; // states z_{start+1} .. z_t
    let mut pair = vec![vec![0.0f64; k]; k];
    let mut total = 0.0f64;
    // Log weights accumulated per path, exponentiated against the max for
    // stability (path counts are tiny in tests).
    let mut log_weights = Vec::new();
    let mut path_ends = Vec::new();
    let n_paths = k.pow(n_free as u32);
    for code in 0..n_paths {
        let mut states = Vec::with_capacity(n_free + 1);
        states.push(start_regime);
        let mut c = code;
        for _ in 0..n_free {
            states.push(c % k);
            c /= k;
        }
        let mut lw = 0.0;
        for (step, u) in (start + 1..=t).enumerate() {
            let from = states[step];
            let to = states[step + 1];
            lw += params.trans()[[from, to]].ln()
                + gauss_density_log(
                    series.y_at(u),
                    series.y_at(u - 1),
                    params.coeff(to),
                    params.sigma2(),
                );
        }
        log_weights.push(lw);
        path_ends.push((states[n_free - 1], states[n_free]));
    }
    let max_lw = log_weights
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    for (lw, &(i, j)) in log_weights.iter().zip(&path_ends) {
        let w = (lw - max_lw).exp();
        pair[i][j] += w;
        total += w;
    }
    for row in &mut pair {
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    let mut marg = vec![0.0f64; k];
    for (j, m) in marg.iter_mut().enumerate() {
        for row in &pair {
            *m += row[j];
        }
    }
    (marg, pair)
}

/// Exhaustive full-history filter at time t: enumerate latent paths
/// z_0..z_t with the stationary prior on z_0 and sum joint densities.
pub fn enumerate_exact_filter(
    series: &SeriesData,
    params: &ModelParams,
    t: usize,
) -> (Vec<f64>, Vec<Vec<f64>>) {
    let k = params.k();
    let pi = mswitch_core::stationary_distribution(params.trans().view()).unwrap();
    let n_paths = k.pow((t + 1) as u32);
    let mut pair = vec![vec![0.0f64; k]; k];
    let mut log_weights = Vec::with_capacity(n_paths);
    let mut ends = Vec::with_capacity(n_paths);
    for code in 0..n_paths {
        let mut states = Vec::with_capacity(t + 1);
        let mut c = code;
        for _ in 0..=t {
            states.push(c % k);
            c /= k;
        }
        let mut lw = pi[states[0]].ln();
        for u in 1..=t {
            lw += params.trans()[[states[u - 1], states[u]]].ln()
                + gauss_density_log(
                    series.y_at(u),
                    series.y_at(u - 1),
                    params.coeff(states[u]),
                    params.sigma2(),
                );
        }
        log_weights.push(lw);
        ends.push((states[t - 1], states[t]));
    }
    let max_lw = log_weights
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (lw, &(i, j)) in log_weights.iter().zip(&ends) {
        let w = (lw - max_lw).exp();
        pair[i][j] += w;
        total += w;
    }
    for row in &mut pair {
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    let mut marg = vec![0.0f64; k];
    for (j, m) in marg.iter_mut().enumerate() {
        for row in &pair {
            *m += row[j];
        }
    }
    (marg, pair)
}

/// Linear-space (no logarithms) windowed forward recursion with per-step
/// normalization disabled; valid only where kernels do not underflow.
pub fn linear_space_window_posterior(
    series: &SeriesData,
    params: &ModelParams,
    s: usize,
    start_regime: usize,
    t: usize,
) -> (Vec<f64>, Vec<Vec<f64>>) {
    let k = params.k();
    let eff = s.min(t);
    let start = t - eff;
    let mut alpha = vec![0.0f64; k];
    alpha[start_regime] = 1.0;
    for u in start + 1..t {
        let mut next = vec![0.0f64; k];
        for (j, nj) in next.iter_mut().enumerate() {
            let mut acc = 0.0;
            for i in 0..k {
                acc += alpha[i] * params.trans()[[i, j]];
            }
            *nj = acc
                * gauss_density_log(
                    series.y_at(u),
                    series.y_at(u - 1),
                    params.coeff(j),
                    params.sigma2(),
                )
                .exp();
        }
        alpha = next;
    }
    let mut pair = vec![vec![0.0f64; k]; k];
    let mut total = 0.0;
    for i in 0..k {
        for j in 0..k {
            let w = alpha[i]
                * params.trans()[[i, j]]
                * gauss_density_log(
                    series.y_at(t),
                    series.y_at(t - 1),
                    params.coeff(j),
                    params.sigma2(),
                )
                .exp();
            pair[i][j] = w;
            total += w;
        }
    }
    for row in &mut pair {
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    let mut marg = vec![0.0f64; k];
    for (j, m) in marg.iter_mut().enumerate() {
        for row in &pair {
            *m += row[j];
        }
    }
    (marg, pair)
}
