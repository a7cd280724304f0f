//! `mswitch` command line: simulate series, fit the switching VAR by
//! approximate EM, run diagnostics, and drive full simulation studies.
//!
//! Exit codes: 0 success, 2 invalid input, 3 study-level failure,
//! 4 internal error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ndarray::Array1;

use mswitch_core::diagnostics::{spearman_rho, ProbeConfig};
use mswitch_core::em::{EStepEngine, EmConfig, SPolicy, TruncationRule};
use mswitch_core::error::CoreError;
use mswitch_core::experiment::{
    parse_results_csv, render_report, render_summary_csv, write_study, ExperimentSpec,
    ReportThresholds,
};
use mswitch_core::model::{validate, ModelParams, SeriesData};
use mswitch_core::sim::{SettingKind, SettingSpec, SimConfig, DEFAULT_BURN_IN};
use mswitch_core::tuning::{FoldScheme, TuningMode, TuningPolicy};
use mswitch_core::{
    bound_check, fit, gradient_norm_probe, isnr_probe, xi_coefficient, ProbeEstimate,
};

#[derive(Parser)]
#[command(name = "mswitch", version, about = "Markov-switching VAR toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a series from one of the benchmark designs.
    Simulate(SimulateArgs),
    /// Fit the switching VAR to a series CSV by approximate EM.
    Fit(FitArgs),
    /// Diagnostics: mixing coefficient, filter bound table, probes.
    Diagnose {
        #[command(subcommand)]
        what: DiagnoseCommand,
    },
    /// Run or summarize a replication study.
    Experiment {
        #[command(subcommand)]
        what: ExperimentCommand,
    },
}

#[derive(Args)]
struct SimulateArgs {
    /// Benchmark design: 1 (block diagonal) or 2 (random sparse).
    #[arg(long)]
    setting: u8,
    #[arg(long)]
    d: usize,
    /// Retained series length T.
    #[arg(long)]
    t: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_BURN_IN)]
    burn_in: usize,
    /// Output series CSV.
    #[arg(long)]
    out: PathBuf,
    /// Where to write the generating parameters.
    #[arg(long)]
    params_out: Option<PathBuf>,
}

#[derive(Args)]
struct FitArgs {
    /// Input series CSV (header t,y1..yd[,z]).
    #[arg(long)]
    data: PathBuf,
    /// Number of regimes.
    #[arg(long)]
    k: usize,
    /// Window rule: fixed:N, logT, or adaptive.
    #[arg(long, default_value = "logT")]
    s: String,
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
    #[arg(long, default_value_t = 200)]
    max_iter: usize,
    #[arg(long, default_value_t = 5)]
    inits: usize,
    #[arg(long, default_value_t = 0.5)]
    init_sd: f64,
    /// Enable hard thresholding with constant C in C*sqrt(log(K d^2)/T).
    #[arg(long)]
    emt_threshold: Option<f64>,
    /// cv or fixed:VALUE.
    #[arg(long, default_value = "cv")]
    tuning: String,
    #[arg(long, default_value_t = 10)]
    folds: usize,
    #[arg(long, default_value_t = 50)]
    grid: usize,
    /// random or blocks.
    #[arg(long, default_value = "random")]
    fold_scheme: String,
    /// E-step engine: windowed or exact.
    #[arg(long, default_value = "windowed")]
    engine: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Debug dump of the final marginal weights (t, j, m_j columns).
    #[arg(long)]
    dump_weights: Option<PathBuf>,
    /// Output fit JSON.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum DiagnoseCommand {
    /// Mixing coefficient of a transition matrix from a params JSON.
    Xi {
        #[arg(long)]
        params: PathBuf,
    },
    /// Filter-approximation error table on random instances.
    Bound {
        #[arg(long, default_value_t = 2)]
        d: usize,
        #[arg(long, default_value_t = 2)]
        k: usize,
        #[arg(long, default_value_t = 50)]
        t: usize,
        #[arg(long, default_value_t = 8)]
        s_max: usize,
        #[arg(long, default_value_t = 50)]
        reps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Inverse signal-to-noise ratio over a coefficient-scale grid.
    Isnr {
        /// Grid as start:end:step, e.g. 0.3:1.5:0.1.
        #[arg(long, default_value = "0.3:1.5:0.1")]
        mu_grid: String,
        #[arg(long, default_value_t = 3)]
        d: usize,
        #[arg(long, default_value_t = 0.5)]
        p1: f64,
        #[arg(long, default_value_t = 20_000)]
        samples: usize,
        #[arg(long, default_value_t = 5_000)]
        burn_in: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Expected fourth power of the filter gradient norm over a scale grid.
    Gradnorm {
        #[arg(long, default_value = "0.3:1.5:0.1")]
        mu_grid: String,
        #[arg(long, default_value_t = 3)]
        d: usize,
        #[arg(long, default_value_t = 0.5)]
        p1: f64,
        #[arg(long, default_value_t = 20_000)]
        samples: usize,
        #[arg(long, default_value_t = 5_000)]
        burn_in: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum ExperimentCommand {
    /// Run the study described by a spec JSON.
    Run {
        #[arg(long)]
        spec: PathBuf,
        /// Use the published replication counts instead of desk scale.
        #[arg(long)]
        paper_scale: bool,
        /// Override the output directory.
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Override the master seed.
        #[arg(long)]
        master_seed: Option<u64>,
        /// Override the replication count.
        #[arg(long)]
        reps: Option<usize>,
        /// Redraw random-design coefficients for every replication.
        #[arg(long)]
        redraw_per_rep: bool,
    },
    /// Summarize an existing results CSV.
    Summarize {
        results: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Ok(threads) = std::env::var("MSWITCH_THREADS") {
        if let Ok(n) = threads.trim().parse::<usize>() {
            if n >= 1 {
                let _ = rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build_global();
            }
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

fn exit_code_for(e: &anyhow::Error) -> u8 {
    match e.downcast_ref::<CoreError>() {
        Some(CoreError::StudyFailure(_)) => 3,
        Some(CoreError::Io(_)) | Some(CoreError::Serde(_)) => 4,
        Some(_) => 2,
        None => {
            if e.downcast_ref::<std::io::Error>().is_some() {
                4
            } else {
                2
            }
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::Fit(args) => cmd_fit(args),
        Command::Diagnose { what } => match what {
            DiagnoseCommand::Xi { params } => cmd_xi(params),
            DiagnoseCommand::Bound {
                d,
                k,
                t,
                s_max,
                reps,
                seed,
                out,
            } => cmd_bound(d, k, t, s_max, reps, seed, out),
            DiagnoseCommand::Isnr {
                mu_grid,
                d,
                p1,
                samples,
                burn_in,
                seed,
                out,
            } => cmd_probe_grid(ProbeKind::Isnr, mu_grid, d, p1, samples, burn_in, seed, out),
            DiagnoseCommand::Gradnorm {
                mu_grid,
                d,
                p1,
                samples,
                burn_in,
                seed,
                out,
            } => cmd_probe_grid(
                ProbeKind::GradNorm,
                mu_grid,
                d,
                p1,
                samples,
                burn_in,
                seed,
                out,
            ),
        },
        Command::Experiment { what } => match what {
            ExperimentCommand::Run {
                spec,
                paper_scale,
                out_dir,
                master_seed,
                reps,
                redraw_per_rep,
            } => cmd_experiment_run(
                spec,
                paper_scale,
                out_dir,
                master_seed,
                reps,
                redraw_per_rep,
            ),
            ExperimentCommand::Summarize {
                results,
                out,
                report,
            } => cmd_summarize(results, out, report),
        },
    }
}

fn cmd_simulate(args: SimulateArgs) -> anyhow::Result<()> {
    let kind = match args.setting {
        1 => SettingKind::SettingI,
        2 => SettingKind::SettingII,
        other => anyhow::bail!(CoreError::InvalidInput(format!(
            "--setting must be 1 or 2, got {other}"
        ))),
    };
    let draw = SettingSpec {
        kind,
        d: args.d,
        seed: args.seed,
    }
    .build()?;
    if draw.rejections > 0 {
        eprintln!(
            "note: {} coefficient redraws before the stationarity certificate held",
            draw.rejections
        );
    }
    let cfg = SimConfig {
        params: draw.params.clone(),
        t_len: args.t,
        burn_in: args.burn_in,
        seed: args.seed,
    };
    let run = mswitch_core::simulate(&cfg)?;
    if !run.stationarity_certified {
        eprintln!("warning: parameters are not stationarity-certified");
    }
    run.series.write_csv_path(&args.out)?;
    if let Some(p) = &args.params_out {
        draw.params.write_json(p)?;
    }
    println!(
        "simulated setting {} d={} T={} -> {}",
        args.setting,
        args.d,
        args.t,
        args.out.display()
    );
    Ok(())
}

fn parse_s_policy(s: &str) -> anyhow::Result<SPolicy> {
    if s == "logT" {
        Ok(SPolicy::LogT)
    } else if s == "adaptive" {
        Ok(SPolicy::LogTOverXi)
    } else if let Some(n) = s.strip_prefix("fixed:") {
        Ok(SPolicy::Fixed(n.parse().map_err(|_| {
            CoreError::InvalidInput(format!("bad window length in --s {s}"))
        })?))
    } else {
        anyhow::bail!(CoreError::InvalidInput(format!(
            "--s must be fixed:N, logT, or adaptive (got {s})"
        )))
    }
}

fn parse_tuning(
    mode: &str,
    folds: usize,
    grid: usize,
    scheme: &str,
    seed: u64,
) -> anyhow::Result<TuningPolicy> {
    let mode = if mode == "cv" {
        TuningMode::CvPerIteration
    } else if let Some(v) = mode.strip_prefix("fixed:") {
        TuningMode::FixedLambda(
            v.parse()
                .map_err(|_| CoreError::InvalidInput(format!("bad lambda in --tuning {mode}")))?,
        )
    } else {
        anyhow::bail!(CoreError::InvalidInput(format!(
            "--tuning must be cv or fixed:VALUE (got {mode})"
        )))
    };
    let fold_scheme = match scheme {
        "random" => FoldScheme::RandomIndex,
        "blocks" => FoldScheme::ContiguousBlocks,
        other => anyhow::bail!(CoreError::InvalidInput(format!(
            "--fold-scheme must be random or blocks (got {other})"
        ))),
    };
    Ok(TuningPolicy {
        mode,
        n_folds: folds,
        grid_size: grid,
        fold_scheme,
        seed,
        ..TuningPolicy::default()
    })
}

fn cmd_fit(args: FitArgs) -> anyhow::Result<()> {
    let series = SeriesData::read_csv_path(&args.data)?;
    let engine = match args.engine.as_str() {
        "windowed" => EStepEngine::Windowed,
        "exact" => EStepEngine::ExactFilter,
        other => anyhow::bail!(CoreError::InvalidInput(format!(
            "--engine must be windowed or exact (got {other})"
        ))),
    };
    let cfg = EmConfig {
        s_policy: parse_s_policy(&args.s)?,
        tol_inf: args.tol,
        max_iter: args.max_iter,
        n_inits: args.inits,
        init_sd: args.init_sd,
        truncation: args.emt_threshold.map(|c| TruncationRule { c }),
        tuning: parse_tuning(
            &args.tuning,
            args.folds,
            args.grid,
            &args.fold_scheme,
            args.seed,
        )?,
        engine,
        seed: args.seed,
        keep_iterates: false,
    };
    let out = fit(&series, args.k, &cfg)?;
    let best = &out.best;
    for (i, r) in out.all.iter().enumerate() {
        if let Err(e) = r {
            eprintln!("init {i} failed: {e}");
        }
    }

    if let Some(path) = &args.dump_weights {
        let mut text = String::from("t,j,m_j\n");
        for t in 1..=best.final_weights.t_len() {
            for j in 0..best.final_weights.k() {
                text.push_str(&format!(
                    "{t},{},{}\n",
                    j + 1,
                    best.final_weights.marg_at(t, j)
                ));
            }
        }
        std::fs::write(path, text)?;
    }

    let fit_json = serde_json::json!({
        "params": serde_json::from_str::<serde_json::Value>(&best.theta_hat.to_json()?)?,
        "hbic": best.hbic,
        "converged": best.converged,
        "iterations": best.iterations,
        "init_id": best.init_id,
        "trace": best.trace,
        "n_inits": out.all.len(),
        "failed_inits": out.all.iter().filter(|r| r.is_err()).count(),
    });
    std::fs::write(&args.out, serde_json::to_string_pretty(&fit_json)?)?;
    println!(
        "fit: converged={} iterations={} hbic={:.3} -> {}",
        best.converged,
        best.iterations,
        best.hbic,
        args.out.display()
    );
    Ok(())
}

fn cmd_xi(params_path: PathBuf) -> anyhow::Result<()> {
    let params = ModelParams::read_json(&params_path)?;
    let report = validate(&params);
    println!("xi = {}", report.xi);
    println!("max spectral norm = {}", report.max_spectral_norm);
    println!("stationarity certified = {}", report.stationarity_certified);
    for v in &report.violations {
        println!("violation: {v}");
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_bound(
    d: usize,
    k: usize,
    t: usize,
    s_max: usize,
    reps: usize,
    seed: u64,
    out: PathBuf,
) -> anyhow::Result<()> {
    use mswitch_core::diagnostics::random_bound_instance;
    let s_range: Vec<usize> = (1..=s_max).collect();
    let mut csv =
        String::from("rep,s,xi,max_marg_err,bound_marg,max_pair_err,bound_pair,violations\n");
    let mut total_violations = 0usize;
    for rep in 0..reps {
        let (params, series) = random_bound_instance(d, k, t, seed, rep as u64)?;
        let xi = xi_coefficient(params.trans().view());
        let rows = bound_check(&series, &params, &s_range)?;
        for r in &rows {
            total_violations += r.violations;
            csv.push_str(&format!(
                "{rep},{},{xi},{},{},{},{},{}\n",
                r.s, r.max_marg_err, r.bound_marg, r.max_pair_err, r.bound_pair, r.violations
            ));
        }
    }
    std::fs::write(&out, csv)?;
    println!(
        "bound table for {reps} instances -> {} (total violations: {total_violations})",
        out.display()
    );
    Ok(())
}

enum ProbeKind {
    Isnr,
    GradNorm,
}

#[allow(clippy::too_many_arguments)]
fn cmd_probe_grid(
    kind: ProbeKind,
    mu_grid: String,
    d: usize,
    p1: f64,
    samples: usize,
    burn_in: usize,
    seed: u64,
    out: PathBuf,
) -> anyhow::Result<()> {
    let parts: Vec<&str> = mu_grid.split(':').collect();
    if parts.len() != 3 {
        anyhow::bail!(CoreError::InvalidInput(format!(
            "--mu-grid must be start:end:step (got {mu_grid})"
        )));
    }
    let (start, end, step): (f64, f64, f64) =
        (parts[0].parse()?, parts[1].parse()?, parts[2].parse()?);
    if step <= 0.0 || end < start {
        anyhow::bail!(CoreError::InvalidInput("empty mu grid".into()));
    }
    let beta_unit = mswitch_core::diagnostics::symmetric_probe_coefficients(d)?;
    let mut mus = Vec::new();
    let mut vals = Vec::new();
    let mut csv = String::from("mu,value,std_error,n_samples\n");
    let mut mu = start;
    while mu <= end + 1e-12 {
        let beta: Array1<f64> = beta_unit.mapv(|v| mu * v);
        let cfg = ProbeConfig {
            n_samples: samples,
            burn_in,
            seed,
        };
        let est: ProbeEstimate = match kind {
            ProbeKind::Isnr => isnr_probe(&beta, p1, &cfg)?,
            ProbeKind::GradNorm => gradient_norm_probe(&beta, p1, &cfg)?,
        };
        csv.push_str(&format!(
            "{mu},{},{},{}\n",
            est.value, est.std_error, est.n_samples
        ));
        mus.push(mu);
        vals.push(est.value);
        mu += step;
    }
    std::fs::write(&out, csv)?;
    let rho = spearman_rho(&mus, &vals);
    println!(
        "grid of {} points -> {} (spearman vs mu: {rho:.3})",
        mus.len(),
        out.display()
    );
    Ok(())
}

fn cmd_experiment_run(
    spec_path: PathBuf,
    paper_scale: bool,
    out_dir: Option<PathBuf>,
    master_seed: Option<u64>,
    reps: Option<usize>,
    redraw_per_rep: bool,
) -> anyhow::Result<()> {
    let mut spec = ExperimentSpec::from_json(&std::fs::read_to_string(&spec_path)?)?;
    if paper_scale {
        spec.n_reps = if spec.setting.d >= 90 { 20 } else { 100 };
    }
    if let Some(dir) = out_dir {
        spec.out_dir = dir;
    }
    if let Some(seed) = master_seed {
        spec.master_seed = seed;
    }
    if let Some(r) = reps {
        spec.n_reps = r;
    }
    if redraw_per_rep {
        spec.redraw_per_rep = true;
    }
    let out = mswitch_core::run_experiment(&spec)?;
    write_study(&spec, &out, &spec.out_dir)?;
    let summary = mswitch_core::summarize(&out.rows)?;
    print!("{}", render_report(&summary, &ReportThresholds::default()));
    println!("artifacts in {}", spec.out_dir.display());
    Ok(())
}

fn cmd_summarize(
    results: PathBuf,
    out: Option<PathBuf>,
    report: Option<PathBuf>,
) -> anyhow::Result<()> {
    let rows = parse_results_csv(&std::fs::read_to_string(&results)?)?;
    let summary = mswitch_core::summarize(&rows)?;
    let csv = render_summary_csv(&summary);
    let text = render_report(&summary, &ReportThresholds::default());
    if let Some(p) = out {
        std::fs::write(p, &csv)?;
    }
    if let Some(p) = report {
        std::fs::write(p, &text)?;
    }
    print!("{text}");
    Ok(())
}
