//! Configuration-driven experiment runner: simulate, fit, score, and
//! summarize across a (T, replication) grid with deterministic seeding and
//! byte-stable CSV output.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::diagnostics::{compute_metrics, oracle_fit, MetricsReport};
use crate::em::{align_permutation, fit, EmConfig, TruncationRule};
use crate::error::{CoreError, Result};
use crate::model::ModelParams;
use crate::mstep::LassoConfig;
use crate::rng::{derive_seed, Purpose};
use crate::sim::{simulate, SettingKind, SettingSpec, SimConfig};

pub const RESULTS_SCHEMA_VERSION: u32 = 1;

/// Declarative description of a simulation study. Serialized as the
/// experiment spec JSON; every CLI flag overrides one field.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub setting: SettingSpec,
    pub t_values: Vec<usize>,
    pub n_reps: usize,
    pub em: EmConfig,
    pub run_oracle: bool,
    /// Adds a truncation-variant arm with this threshold constant.
    #[serde(default)]
    pub emt_threshold: Option<f64>,
    /// Restrict the truncation arm to these T values (all when empty).
    #[serde(default)]
    pub emt_t_values: Vec<usize>,
    pub out_dir: PathBuf,
    pub master_seed: u64,
    /// Redraw Setting-II coefficients per replication instead of once.
    #[serde(default)]
    pub redraw_per_rep: bool,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
}

fn default_burn_in() -> usize {
    crate::sim::DEFAULT_BURN_IN
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.t_values.is_empty() {
            return Err(CoreError::InvalidInput("t_values must be nonempty".into()));
        }
        if self.t_values.windows(2).any(|w| w[1] <= w[0]) {
            return Err(CoreError::InvalidInput(
                "t_values must be strictly increasing".into(),
            ));
        }
        if self.n_reps == 0 {
            return Err(CoreError::InvalidInput("n_reps must be >= 1".into()));
        }
        self.em.validate()
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// One results row: (method, T, rep) with metrics or a failure status.
#[derive(Debug, Clone)]
pub struct ResultRow {
    pub method: String,
    pub t_len: usize,
    pub rep: usize,
    pub status: String,
    pub metrics: Option<MetricsReport>,
    pub converged: Option<bool>,
    pub iterations: Option<usize>,
    pub hbic: Option<f64>,
    pub runtime_s: f64,
    pub trans_dim: usize,
}

const METHOD_ORDER: [&str; 3] = ["em", "emt", "oracle"];

#[derive(Debug)]
pub struct StudyOutput {
    pub rows: Vec<ResultRow>,
    pub results_csv: String,
    pub truth_by_rep: Vec<ModelParams>,
}

/// Purpose-tagged seed paths: a cell's seeds depend only on
/// (master_seed, T, rep, purpose), so grids can grow without reshuffling.
fn cell_seed(master: u64, purpose: Purpose, t_len: usize, rep: usize) -> u64 {
    derive_seed(master, purpose, &[t_len as u64, rep as u64])
}

/// Run the full study. Cells execute in parallel; output order and content
/// are independent of the parallelism degree.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<StudyOutput> {
    spec.validate()?;

    // Shared truth: drawn once per study unless redraw-per-rep is on
    // (only Setting II has seed-driven randomness).
    let base_truth = spec.setting.build()?.params;
    let truth_for_rep = |rep: usize| -> Result<ModelParams> {
        if spec.redraw_per_rep && spec.setting.kind == SettingKind::SettingII {
            let seed = derive_seed(spec.master_seed, Purpose::SettingDraw, &[rep as u64]);
            Ok(SettingSpec {
                seed,
                ..spec.setting.clone()
            }
            .build()?
            .params)
        } else {
            Ok(base_truth.clone())
        }
    };

    let mut cells: Vec<(usize, usize)> = Vec::new();
    for &t in &spec.t_values {
        for rep in 0..spec.n_reps {
            cells.push((t, rep));
        }
    }

    let cell_rows: Vec<Result<Vec<ResultRow>>> = cells
        .par_iter()
        .map(|&(t_len, rep)| run_cell(spec, t_len, rep, truth_for_rep(rep)?))
        .collect();

    let mut rows = Vec::new();
    for r in cell_rows {
        rows.extend(r?);
    }
    rows.sort_by(|a, b| {
        let ma = METHOD_ORDER.iter().position(|m| *m == a.method);
        let mb = METHOD_ORDER.iter().position(|m| *m == b.method);
        (a.t_len, a.rep, ma).cmp(&(b.t_len, b.rep, mb))
    });

    // Study-level failure rule: more than half the replications failed at
    // some (method, T).
    for &t in &spec.t_values {
        for method in METHOD_ORDER {
            let in_cell: Vec<&ResultRow> = rows
                .iter()
                .filter(|r| r.t_len == t && r.method == method)
                .collect();
            if in_cell.is_empty() {
                continue;
            }
            let failed = in_cell.iter().filter(|r| r.status != "ok").count();
            if failed * 2 > in_cell.len() {
                return Err(CoreError::StudyFailure(format!(
                    "{failed}/{} replications failed for method={method} T={t}",
                    in_cell.len()
                )));
            }
        }
    }

    let results_csv = render_results_csv(&rows, spec);
    let truth_by_rep = (0..spec.n_reps)
        .map(truth_for_rep)
        .collect::<Result<Vec<_>>>()?;
    Ok(StudyOutput {
        rows,
        results_csv,
        truth_by_rep,
    })
}

fn run_cell(
    spec: &ExperimentSpec,
    t_len: usize,
    rep: usize,
    truth: ModelParams,
) -> Result<Vec<ResultRow>> {
    let k = truth.k();
    let sim_cfg = SimConfig {
        params: truth.clone(),
        t_len,
        burn_in: spec.burn_in,
        seed: cell_seed(spec.master_seed, Purpose::Simulate, t_len, rep),
    };
    let series = simulate(&sim_cfg)?.series;

    let mut rows = Vec::new();

    // Plain EM arm.
    {
        let mut em_cfg = spec.em.clone();
        em_cfg.seed = cell_seed(spec.master_seed, Purpose::EmInit, t_len, rep);
        em_cfg.tuning.seed = cell_seed(spec.master_seed, Purpose::CvFolds, t_len, rep);
        rows.push(run_method("em", &series, &truth, k, &em_cfg, t_len, rep));
    }

    // Truncation arm.
    if let Some(c) = spec.emt_threshold {
        if spec.emt_t_values.is_empty() || spec.emt_t_values.contains(&t_len) {
            let mut em_cfg = spec.em.clone();
            em_cfg.truncation = Some(TruncationRule { c });
            em_cfg.seed = cell_seed(spec.master_seed, Purpose::EmInit, t_len, rep);
            em_cfg.tuning.seed = cell_seed(spec.master_seed, Purpose::CvFolds, t_len, rep);
            rows.push(run_method("emt", &series, &truth, k, &em_cfg, t_len, rep));
        }
    }

    // Oracle arm.
    if spec.run_oracle {
        let start = std::time::Instant::now();
        let mut tuning = spec.em.tuning.clone();
        tuning.seed = cell_seed(spec.master_seed, Purpose::CvFolds, t_len, rep);
        let row = match oracle_fit(&series, k, &LassoConfig::new(0.0)?, &tuning).and_then(|o| {
            let (aligned, _) = align_permutation(&o.params, &truth)?;
            compute_metrics(&aligned, &truth)
        }) {
            Ok(metrics) => ResultRow {
                method: "oracle".into(),
                t_len,
                rep,
                status: "ok".into(),
                metrics: Some(metrics),
                converged: None,
                iterations: None,
                hbic: None,
                runtime_s: start.elapsed().as_secs_f64(),
                trans_dim: k,
            },
            Err(e) => ResultRow {
                method: "oracle".into(),
                t_len,
                rep,
                status: format!("failed: {e}"),
                metrics: None,
                converged: None,
                iterations: None,
                hbic: None,
                runtime_s: start.elapsed().as_secs_f64(),
                trans_dim: k,
            },
        };
        rows.push(row);
    }

    Ok(rows)
}

fn run_method(
    name: &str,
    series: &crate::model::SeriesData,
    truth: &ModelParams,
    k: usize,
    em_cfg: &EmConfig,
    t_len: usize,
    rep: usize,
) -> ResultRow {
    let start = std::time::Instant::now();
    match fit(series, k, em_cfg).and_then(|out| {
        let (aligned, _) = align_permutation(&out.best.theta_hat, truth)?;
        let metrics = compute_metrics(&aligned, truth)?;
        Ok((out, metrics))
    }) {
        Ok((out, metrics)) => ResultRow {
            method: name.into(),
            t_len,
            rep,
            status: "ok".into(),
            metrics: Some(metrics),
            converged: Some(out.best.converged),
            iterations: Some(out.best.iterations),
            hbic: Some(out.best.hbic),
            runtime_s: start.elapsed().as_secs_f64(),
            trans_dim: k,
        },
        Err(e) => ResultRow {
            method: name.into(),
            t_len,
            rep,
            status: format!("failed: {e}"),
            metrics: None,
            converged: None,
            iterations: None,
            hbic: None,
            runtime_s: start.elapsed().as_secs_f64(),
            trans_dim: k,
        },
    }
}

/// Frozen results schema. Transition errors are flattened row-major with a
/// fixed K=trans_dim per study. Wall-clock runtimes live in a companion
/// timings file so this one stays byte-identical across thread counts.
pub fn render_results_csv(rows: &[ResultRow], spec: &ExperimentSpec) -> String {
    let k = rows.first().map(|r| r.trans_dim).unwrap_or(0);
    let mut out = String::new();
    out.push_str("schema_version,setting,d,method,t,rep,status,beta_l2_error,log_beta_error");
    for i in 0..k {
        for j in 0..k {
            let _ = write!(out, ",trans_err_{}{}", i + 1, j + 1);
        }
    }
    out.push_str(",sigma2_error,support_precision,support_recall,converged,iterations,hbic\n");
    let setting_name = match spec.setting.kind {
        SettingKind::SettingI => "1",
        SettingKind::SettingII => "2",
    };
    for r in rows {
        let _ = write!(
            out,
            "{RESULTS_SCHEMA_VERSION},{setting_name},{},{},{},{},{}",
            spec.setting.d, r.method, r.t_len, r.rep, r.status
        );
        match &r.metrics {
            Some(m) => {
                let _ = write!(out, ",{},{}", m.beta_l2_error, m.log_beta_error);
                for v in &m.trans_errors {
                    let _ = write!(out, ",{v}");
                }
                let _ = write!(
                    out,
                    ",{},{},{}",
                    m.sigma2_error, m.support_precision, m.support_recall
                );
            }
            None => {
                for _ in 0..(2 + k * k + 3) {
                    out.push(',');
                }
            }
        }
        match r.converged {
            Some(c) => {
                let _ = write!(out, ",{c}");
            }
            None => out.push(','),
        }
        match r.iterations {
            Some(n) => {
                let _ = write!(out, ",{n}");
            }
            None => out.push(','),
        }
        match r.hbic {
            Some(h) => {
                let _ = write!(out, ",{h}");
            }
            None => out.push(','),
        }
        out.push('\n');
    }
    out
}

/// Per-(method, T) summary statistics.
#[derive(Debug, Clone, Serialize)]
pub struct SummaryCell {
    pub method: String,
    pub t_len: usize,
    pub n_ok: usize,
    pub n_failed: usize,
    pub median_log_beta_error: f64,
    pub q1_log_beta_error: f64,
    pub q3_log_beta_error: f64,
    pub median_beta_l2_error: f64,
    pub median_sigma2_error: f64,
    pub median_trans_err_11: f64,
    pub median_trans_err_21: f64,
    pub median_support_precision: f64,
    pub median_support_recall: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct StudySummary {
    pub cells: Vec<SummaryCell>,
    /// Per-method OLS slope of median log error against log T; NaN when
    /// fewer than two T values are available.
    pub slopes: Vec<(String, f64)>,
    /// Per-method slope fitted on every replication rather than medians.
    pub slopes_per_rep: Vec<(String, f64)>,
}

pub fn median(sorted: &[f64]) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

fn quartiles(vals: &mut Vec<f64>) -> (f64, f64, f64) {
    vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = vals.len();
    if n == 0 {
        return (f64::NAN, f64::NAN, f64::NAN);
    }
    let med = median(vals);
    let (lo, hi) = if n == 1 {
        (vals.as_slice(), vals.as_slice())
    } else {
        (&vals[..n / 2], &vals[(n + 1) / 2..])
    };
    (median(lo), med, median(hi))
}

/// Ordinary least squares slope of y against x.
pub fn ols_slope(xs: &[f64], ys: &[f64]) -> f64 {
    if xs.len() < 2 {
        return f64::NAN;
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        num += (x - mx) * (y - my);
        den += (x - mx) * (x - mx);
    }
    num / den
}

/// Parse a results CSV back into rows (only the columns summaries need).
pub fn parse_results_csv(text: &str) -> Result<Vec<ResultRow>> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| CoreError::InvalidInput("empty results file".into()))?;
    let cols: Vec<&str> = header.split(',').collect();
    let find = |name: &str| -> Result<usize> {
        cols.iter()
            .position(|c| *c == name)
            .ok_or_else(|| CoreError::InvalidInput(format!("missing column {name}")))
    };
    let c_method = find("method")?;
    let c_t = find("t")?;
    let c_rep = find("rep")?;
    let c_status = find("status")?;
    let c_beta = find("beta_l2_error")?;
    let c_log = find("log_beta_error")?;
    let c_sigma = find("sigma2_error")?;
    let c_prec = find("support_precision")?;
    let c_rec = find("support_recall")?;
    let c_t11 = find("trans_err_11").ok();
    let k = cols
        .iter()
        .filter(|c| c.starts_with("trans_err_"))
        .count()
        .isqrt();

    let mut rows = Vec::new();
    let mut bad_lines = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != cols.len() {
            bad_lines.push(lineno + 2);
            continue;
        }
        let parse_f64 = |s: &str| -> Option<f64> { s.parse().ok() };
        let status = f[c_status].to_string();
        let metrics = if status == "ok" {
            let mut trans_errors = vec![0.0; k * k];
            if let Some(i11) = c_t11 {
                for (pos, te) in trans_errors.iter_mut().enumerate() {
                    *te = parse_f64(f[i11 + pos]).unwrap_or(f64::NAN);
                }
            }
            Some(MetricsReport {
                beta_l2_error: parse_f64(f[c_beta]).unwrap_or(f64::NAN),
                log_beta_error: parse_f64(f[c_log]).unwrap_or(f64::NAN),
                trans_errors,
                sigma2_error: parse_f64(f[c_sigma]).unwrap_or(f64::NAN),
                support_precision: parse_f64(f[c_prec]).unwrap_or(f64::NAN),
                support_recall: parse_f64(f[c_rec]).unwrap_or(f64::NAN),
            })
        } else {
            None
        };
        rows.push(ResultRow {
            method: f[c_method].to_string(),
            t_len: f[c_t]
                .parse()
                .map_err(|_| CoreError::InvalidInput(format!("line {}: bad t", lineno + 2)))?,
            rep: f[c_rep]
                .parse()
                .map_err(|_| CoreError::InvalidInput(format!("line {}: bad rep", lineno + 2)))?,
            status,
            metrics,
            converged: None,
            iterations: None,
            hbic: None,
            runtime_s: 0.0,
            trans_dim: k,
        });
    }
    if !bad_lines.is_empty() {
        return Err(CoreError::InvalidInput(format!(
            "malformed rows at lines {bad_lines:?}"
        )));
    }
    if rows.is_empty() {
        return Err(CoreError::InvalidInput("results file has no rows".into()));
    }
    Ok(rows)
}

pub fn summarize(rows: &[ResultRow]) -> Result<StudySummary> {
    if rows.is_empty() {
        return Err(CoreError::InvalidInput("no rows to summarize".into()));
    }
    let mut methods: Vec<String> = Vec::new();
    let mut t_values: Vec<usize> = Vec::new();
    for r in rows {
        if !methods.contains(&r.method) {
            methods.push(r.method.clone());
        }
        if !t_values.contains(&r.t_len) {
            t_values.push(r.t_len);
        }
    }
    t_values.sort_unstable();

    let k = rows[0].trans_dim;
    let mut cells = Vec::new();
    for method in &methods {
        for &t in &t_values {
            let sel: Vec<&ResultRow> = rows
                .iter()
                .filter(|r| &r.method == method && r.t_len == t)
                .collect();
            if sel.is_empty() {
                continue;
            }
            let ok: Vec<&MetricsReport> = sel.iter().filter_map(|r| r.metrics.as_ref()).collect();
            let grab = |f: &dyn Fn(&MetricsReport) -> f64| -> Vec<f64> {
                ok.iter().map(|m| f(m)).collect()
            };
            let mut log_errs = grab(&|m| m.log_beta_error);
            let (q1, med, q3) = quartiles(&mut log_errs);
            let med_of = |f: &dyn Fn(&MetricsReport) -> f64| {
                let mut v = grab(f);
                v.sort_by(|a, b| a.partial_cmp(b).unwrap());
                median(&v)
            };
            cells.push(SummaryCell {
                method: method.clone(),
                t_len: t,
                n_ok: ok.len(),
                n_failed: sel.len() - ok.len(),
                median_log_beta_error: med,
                q1_log_beta_error: q1,
                q3_log_beta_error: q3,
                median_beta_l2_error: med_of(&|m| m.beta_l2_error),
                median_sigma2_error: med_of(&|m| m.sigma2_error),
                median_trans_err_11: med_of(&|m| {
                    m.trans_errors.first().copied().unwrap_or(f64::NAN)
                }),
                median_trans_err_21: med_of(&|m| {
                    m.trans_errors.get(k).copied().unwrap_or(f64::NAN)
                }),
                median_support_precision: med_of(&|m| m.support_precision),
                median_support_recall: med_of(&|m| m.support_recall),
            });
        }
    }

    let mut slopes = Vec::new();
    let mut slopes_per_rep = Vec::new();
    for method in &methods {
        let pts: Vec<(f64, f64)> = cells
            .iter()
            .filter(|c| &c.method == method && c.median_log_beta_error.is_finite())
            .map(|c| ((c.t_len as f64).ln(), c.median_log_beta_error))
            .collect();
        let xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
        let ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
        slopes.push((method.clone(), ols_slope(&xs, &ys)));

        let rep_pts: Vec<(f64, f64)> = rows
            .iter()
            .filter(|r| &r.method == method)
            .filter_map(|r| {
                r.metrics
                    .as_ref()
                    .map(|m| ((r.t_len as f64).ln(), m.log_beta_error))
            })
            .collect();
        let xs: Vec<f64> = rep_pts.iter().map(|p| p.0).collect();
        let ys: Vec<f64> = rep_pts.iter().map(|p| p.1).collect();
        slopes_per_rep.push((method.clone(), ols_slope(&xs, &ys)));
    }

    Ok(StudySummary {
        cells,
        slopes,
        slopes_per_rep,
    })
}

pub fn render_summary_csv(summary: &StudySummary) -> String {
    let mut out = String::from(
        "method,t,n_ok,n_failed,median_log_beta_error,q1_log_beta_error,q3_log_beta_error,\
         median_beta_l2_error,median_sigma2_error,median_trans_err_11,median_trans_err_21,\
         median_support_precision,median_support_recall\n",
    );
    for c in &summary.cells {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            c.method,
            c.t_len,
            c.n_ok,
            c.n_failed,
            c.median_log_beta_error,
            c.q1_log_beta_error,
            c.q3_log_beta_error,
            c.median_beta_l2_error,
            c.median_sigma2_error,
            c.median_trans_err_11,
            c.median_trans_err_21,
            c.median_support_precision,
            c.median_support_recall
        );
    }
    out
}

/// Thresholds the human-readable report checks. These mirror the published
/// behavior of the estimator on the d=30 block design at desk scale.
#[derive(Debug, Clone, Copy)]
pub struct ReportThresholds {
    pub slope_lo: f64,
    pub slope_hi: f64,
    pub em_oracle_gap: f64,
    pub trans_err_max: f64,
    pub sigma2_err_max: f64,
}

impl Default for ReportThresholds {
    fn default() -> Self {
        Self {
            slope_lo: -0.75,
            slope_hi: -0.25,
            em_oracle_gap: 0.7,
            trans_err_max: 0.05,
            sigma2_err_max: 0.1,
        }
    }
}

pub fn render_report(summary: &StudySummary, thr: &ReportThresholds) -> String {
    let mut out = String::new();
    out.push_str("study summary\n=============\n\n");
    for c in &summary.cells {
        let _ = writeln!(
            out,
            "method={:<7} T={:<6} ok={:<3} failed={:<3} median log-beta-error={:+.4} [q1 {:+.4}, q3 {:+.4}]",
            c.method, c.t_len, c.n_ok, c.n_failed,
            c.median_log_beta_error, c.q1_log_beta_error, c.q3_log_beta_error
        );
    }
    out.push('\n');
    for (m, s) in &summary.slopes {
        let verdict = if s.is_nan() {
            "undefined (single T)".to_string()
        } else if *s >= thr.slope_lo && *s <= thr.slope_hi {
            format!("PASS (within [{}, {}])", thr.slope_lo, thr.slope_hi)
        } else {
            format!("FAIL (outside [{}, {}])", thr.slope_lo, thr.slope_hi)
        };
        let _ = writeln!(out, "slope[{m}] (median fit) = {s:.4}  {verdict}");
    }
    for (m, s) in &summary.slopes_per_rep {
        let _ = writeln!(out, "slope[{m}] (per-replication fit) = {s:.4}");
    }

    let find = |method: &str, t: usize| -> Option<&SummaryCell> {
        summary
            .cells
            .iter()
            .find(|c| c.method == method && c.t_len == t)
    };
    let t_max = summary.cells.iter().map(|c| c.t_len).max().unwrap_or(0);
    if let (Some(em), Some(or)) = (find("em", t_max), find("oracle", t_max)) {
        out.push('\n');
        for (em_cell, or_cell) in summary
            .cells
            .iter()
            .filter(|c| c.method == "em")
            .filter_map(|c| find("oracle", c.t_len).map(|o| (c, o)))
        {
            let gap = em_cell.median_log_beta_error - or_cell.median_log_beta_error;
            let verdict = if gap <= thr.em_oracle_gap {
                "PASS"
            } else {
                "FAIL"
            };
            let _ = writeln!(
                out,
                "em-vs-oracle gap at T={}: {gap:+.4} (limit {})  {verdict}",
                em_cell.t_len, thr.em_oracle_gap
            );
        }
        let p11 = em.median_trans_err_11;
        let p21 = em.median_trans_err_21;
        let s2 = em.median_sigma2_error;
        let _ = writeln!(
            out,
            "em parameter recovery at T={t_max}: |p11 err|={p11:.4} |p21 err|={p21:.4} |sigma2 err|={s2:.4}  {}",
            if p11 <= thr.trans_err_max && p21 <= thr.trans_err_max && s2 <= thr.sigma2_err_max {
                "PASS"
            } else {
                "FAIL"
            }
        );
        let _ = or;
    }
    out
}

/// Write the study artifacts into `out_dir`: the deterministic results
/// table, the (non-deterministic) wall-clock timings, summary, report, and
/// the spec itself for reproducibility.
pub fn write_study(spec: &ExperimentSpec, out: &StudyOutput, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("results.csv"), &out.results_csv)?;
    let mut timings = String::from("method,t,rep,runtime_s\n");
    for r in &out.rows {
        let _ = writeln!(
            timings,
            "{},{},{},{:.3}",
            r.method, r.t_len, r.rep, r.runtime_s
        );
    }
    std::fs::write(dir.join("timings.csv"), timings)?;
    let summary = summarize(&out.rows)?;
    std::fs::write(dir.join("summary.csv"), render_summary_csv(&summary))?;
    std::fs::write(
        dir.join("report.txt"),
        render_report(&summary, &ReportThresholds::default()),
    )?;
    std::fs::write(dir.join("spec.json"), spec.to_json()?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::em::SPolicy;
    use crate::tuning::{TuningMode, TuningPolicy};

    fn tiny_spec() -> ExperimentSpec {
        ExperimentSpec {
            setting: SettingSpec {
                kind: SettingKind::SettingI,
                d: 3,
                seed: 0,
            },
            t_values: vec![60],
            n_reps: 1,
            em: EmConfig {
                s_policy: SPolicy::Fixed(3),
                n_inits: 1,
                max_iter: 15,
                tuning: TuningPolicy {
                    mode: TuningMode::FixedLambda(0.05),
                    ..TuningPolicy::default()
                },
                ..EmConfig::default()
            },
            run_oracle: true,
            emt_threshold: None,
            emt_t_values: Vec::new(),
            out_dir: PathBuf::from("unused"),
            master_seed: 9,
            redraw_per_rep: false,
            burn_in: 50,
        }
    }

    #[test]
    fn smallest_study_produces_finite_rows() {
        let spec = tiny_spec();
        let out = run_experiment(&spec).unwrap();
        assert_eq!(out.rows.len(), 2); // em + oracle
        for r in &out.rows {
            assert_eq!(r.status, "ok", "{:?}", r.status);
            let m = r.metrics.as_ref().unwrap();
            assert!(m.beta_l2_error.is_finite());
        }
    }

    #[test]
    fn csv_roundtrip_preserves_metrics() {
        let spec = tiny_spec();
        let out = run_experiment(&spec).unwrap();
        let parsed = parse_results_csv(&out.results_csv).unwrap();
        assert_eq!(parsed.len(), out.rows.len());
        for (a, b) in out.rows.iter().zip(&parsed) {
            assert_eq!(a.method, b.method);
            let (ma, mb) = (a.metrics.as_ref().unwrap(), b.metrics.as_ref().unwrap());
            assert_eq!(ma.beta_l2_error, mb.beta_l2_error);
            assert_eq!(ma.trans_errors, mb.trans_errors);
        }
    }

    #[test]
    fn summarize_rejects_empty_and_flags_single_row() {
        assert!(parse_results_csv("").is_err());
        let spec = tiny_spec();
        let out = run_experiment(&spec).unwrap();
        let summary = summarize(&out.rows).unwrap();
        // One T value: quartiles collapse to the value, slope undefined.
        let em = summary.cells.iter().find(|c| c.method == "em").unwrap();
        assert_eq!(em.q1_log_beta_error, em.median_log_beta_error);
        assert!(summary.slopes.iter().all(|(_, s)| s.is_nan()));
    }

    #[test]
    fn synthetic_half_slope_recovered_exactly() {
        // log errors exactly -0.5 log T + c must give slope -0.5.
        let mut rows = Vec::new();
        for &t in &[500usize, 1000, 2000] {
            for rep in 0..3 {
                let log_err = -0.5 * (t as f64).ln() + 1.3;
                rows.push(ResultRow {
                    method: "em".into(),
                    t_len: t,
                    rep,
                    status: "ok".into(),
                    metrics: Some(MetricsReport {
                        beta_l2_error: log_err.exp(),
                        log_beta_error: log_err,
                        trans_errors: vec![0.0; 4],
                        sigma2_error: 0.0,
                        support_precision: 1.0,
                        support_recall: 1.0,
                    }),
                    converged: Some(true),
                    iterations: Some(1),
                    hbic: Some(0.0),
                    runtime_s: 0.0,
                    trans_dim: 2,
                });
            }
        }
        let summary = summarize(&rows).unwrap();
        let slope = summary.slopes[0].1;
        assert!((slope + 0.5).abs() < 1e-10, "slope {slope}");
    }

    #[test]
    fn seeds_do_not_depend_on_grid_shape() {
        let a = cell_seed(7, Purpose::Simulate, 500, 3);
        let b = cell_seed(7, Purpose::Simulate, 500, 3);
        assert_eq!(a, b);
        let c = cell_seed(7, Purpose::Simulate, 1000, 3);
        assert_ne!(a, c);
    }

    #[test]
    fn determinism_across_thread_counts() {
        let spec = tiny_spec();
        let pool2 = rayon::ThreadPoolBuilder::new()
            .num_threads(2)
            .build()
            .unwrap();
        let pool1 = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let csv2 = pool2.install(|| run_experiment(&spec).unwrap().results_csv);
        let csv1 = pool1.install(|| run_experiment(&spec).unwrap().results_csv);
        assert_eq!(csv1, csv2);
    }

    #[test]
    fn majority_failures_abort_the_study() {
        // Cross validation cannot build 30 folds from T=25 rows, so every
        // EM replication fails and the failure rule fires.
        let mut spec = tiny_spec();
        spec.t_values = vec![25];
        spec.n_reps = 2;
        spec.run_oracle = false;
        spec.em.tuning = TuningPolicy {
            mode: TuningMode::CvPerIteration,
            n_folds: 30,
            ..TuningPolicy::default()
        };
        match run_experiment(&spec) {
            Err(crate::error::CoreError::StudyFailure(msg)) => {
                assert!(msg.contains("method=em"), "{msg}");
            }
            other => panic!("expected study failure, got {other:?}"),
        }
    }
}
