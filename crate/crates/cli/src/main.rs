use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use gmc_core::cv::{loo_cv_error, selection_counts, DEFAULT_N_INIT_PER_FOLD};
use gmc_core::datagen::{gen_planted, EnsembleParams};
use gmc_core::dataio::{self, rows, InstanceFile};
use gmc_core::experiments::{
    default_phase_grid, input_mse, mean_stderr, noisy_mse_curve, nconv_scaling, phase_sweep,
    success_report, PERFECT_RECONSTRUCTION_TOL,
};
use gmc_core::gmc::{multi_restart, GmcConfig, Termination, DEFAULT_T_WAIT};
use gmc_core::linalg::fit_least_squares;

mod manifest;

use manifest::{RunManifest, Recorder};

#[derive(Parser, Debug)]
#[command(name = "gmc", version, about = "Sparse linear regression by greedy Monte-Carlo search")]
struct Cli {
    /// Worker threads (default: all available cores)
    #[arg(long, global = true, env = "GMC_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a planted instance
    Gen(GenArgs),
    /// Best-of-restarts search on an instance file
    Solve(SolveArgs),
    /// Success rate over random planted instances
    Success(SuccessArgs),
    /// Reconstruction-limit grid over (alpha, rho0)
    Phase(PhaseArgs),
    /// Sweeps to convergence against system size
    Scaling(ScalingArgs),
    /// Output and input MSE against assumed density on noisy instances
    Noisy(NoisyArgs),
    /// Leave-one-out cross-validation over K on CSV data
    Cv(CvArgs),
    /// Re-run the command recorded in a manifest
    Replay(ReplayArgs),
}

/// Search settings shared by every subcommand that runs GMC.
#[derive(Args, Debug, Clone, Serialize)]
struct SearchArgs {
    /// Stalled sweeps before the exhaustive neighbour scan
    #[arg(long, default_value_t = DEFAULT_T_WAIT, value_parser = positive())]
    t_wait: usize,
    /// Sweep cap per run (default: 100 * t_wait * N)
    #[arg(long)]
    max_mcs: Option<u64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl SearchArgs {
    fn config(&self) -> GmcConfig {
        GmcConfig {
            t_wait: self.t_wait,
            max_mcs: self.max_mcs,
            ..GmcConfig::with_seed(self.seed)
        }
    }
}

fn positive() -> clap::builder::RangedU64ValueParser<usize> {
    clap::builder::RangedU64ValueParser::<usize>::new().range(1..)
}

#[derive(Args, Debug, Serialize)]
struct GenArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    alpha: f64,
    #[arg(long)]
    rho0: f64,
    #[arg(long, default_value_t = 0.0)]
    noise_var: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct SolveArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, value_parser = positive())]
    k: usize,
    #[arg(long, default_value_t = 100, value_parser = positive())]
    n_init: usize,
    #[command(flatten)]
    search: SearchArgs,
    /// Report path (default: print to stdout)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct SuccessArgs {
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    #[arg(long, default_value_t = 0.2)]
    rho0: f64,
    #[arg(long, default_value_t = 100, value_parser = positive())]
    n_samp: usize,
    #[arg(long, default_value_t = 100, value_parser = positive())]
    n_init: usize,
    #[command(flatten)]
    search: SearchArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct PhaseArgs {
    #[arg(long, default_value_t = 100)]
    n: usize,
    /// Comma-separated alpha values (default: 0.05 to 0.95 in steps of 0.05)
    #[arg(long, value_delimiter = ',')]
    alpha: Option<Vec<f64>>,
    /// Comma-separated rho0 values (default: 0.05 to 0.95 in steps of 0.05)
    #[arg(long, value_delimiter = ',')]
    rho0: Option<Vec<f64>>,
    #[arg(long, default_value_t = 100, value_parser = positive())]
    n_samp: usize,
    #[arg(long, default_value_t = 100, value_parser = positive())]
    n_init: usize,
    #[command(flatten)]
    search: SearchArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct ScalingArgs {
    #[arg(long, default_value = "50,100,200,400", value_delimiter = ',')]
    sizes: Vec<usize>,
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    #[arg(long, default_value_t = 0.2)]
    rho: f64,
    #[arg(long, default_value_t = 0.2)]
    rho0: f64,
    #[arg(long, default_value_t = 100, value_parser = positive())]
    n_samp: usize,
    #[arg(long, default_value_t = 100, value_parser = positive())]
    n_init: usize,
    #[command(flatten)]
    search: SearchArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct NoisyArgs {
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    #[arg(long, default_value_t = 0.2)]
    rho0: f64,
    #[arg(long, default_value_t = 0.1)]
    noise_var: f64,
    /// Comma-separated assumed densities
    #[arg(long, default_value = "0.05,0.1,0.15,0.2,0.25,0.3,0.35,0.4", value_delimiter = ',')]
    rho: Vec<f64>,
    #[arg(long, default_value_t = 100, value_parser = positive())]
    n_samp: usize,
    #[arg(long, default_value_t = 100, value_parser = positive())]
    n_init: usize,
    #[command(flatten)]
    search: SearchArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct CvArgs {
    /// Predictor matrix, one row per observation
    #[arg(long)]
    a: PathBuf,
    /// Response, one value per line
    #[arg(long)]
    y: PathBuf,
    /// Skip a header line in both files
    #[arg(long)]
    header: bool,
    /// Use the data as given instead of centring and scaling it
    #[arg(long)]
    no_standardize: bool,
    #[arg(long, default_value_t = 1, value_parser = positive())]
    k_min: usize,
    #[arg(long, default_value_t = 5, value_parser = positive())]
    k_max: usize,
    #[arg(long, default_value_t = DEFAULT_N_INIT_PER_FOLD, value_parser = positive())]
    n_init_per_fold: usize,
    #[command(flatten)]
    search: SearchArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct ReplayArgs {
    manifest: PathBuf,
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(t) = cli.threads {
        if t == 0 {
            bail!("--threads must be at least 1");
        }
        // fails only if a pool already exists, as on replay
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    match cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Solve(a) => cmd_solve(a),
        Command::Success(a) => cmd_success(a),
        Command::Phase(a) => cmd_phase(a),
        Command::Scaling(a) => cmd_scaling(a),
        Command::Noisy(a) => cmd_noisy(a),
        Command::Cv(a) => cmd_cv(a),
        Command::Replay(a) => cmd_replay(a),
    }
}

fn cmd_gen(args: GenArgs) -> Result<()> {
    let mut rec = Recorder::start();
    let params = EnsembleParams {
        n: args.n,
        alpha: args.alpha,
        rho0: args.rho0,
        noise_var: args.noise_var,
        seed: args.seed,
    };
    let pi = gen_planted(&params)?;
    rec.phase("generate");
    dataio::save_instance(&InstanceFile::from_planted(&pi), &args.out)?;
    rec.output(&args.out);
    rec.phase("write");
    println!("M = {}, K0 = {}", pi.inst.m(), pi.k0());
    rec.finish("gen", &args, Some(args.seed), &args.out)?;
    Ok(())
}

#[derive(Serialize)]
struct RestartRecord {
    index: usize,
    seed: u64,
    energy: f64,
    n_conv: u64,
    exhaustive_invocations: u64,
    accepted_flips: u64,
    terminated_by: Termination,
    support: Vec<usize>,
}

#[derive(Serialize)]
struct NconvStats {
    mean: f64,
    stderr: f64,
    min: u64,
    max: u64,
}

#[derive(Serialize)]
struct SolveReport {
    k: usize,
    m: usize,
    n: usize,
    n_init: usize,
    t_wait: usize,
    seed: u64,
    best_index: usize,
    /// 0-based column indices
    best_support: Vec<usize>,
    best_energy: f64,
    best_coefficients: Vec<f64>,
    nconv: NconvStats,
    capped_runs: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    eps_x: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    recovered: Option<bool>,
    restarts: Vec<RestartRecord>,
}

fn cmd_solve(args: SolveArgs) -> Result<()> {
    let mut rec = Recorder::start();
    let file = dataio::load_instance(&args.input)
        .with_context(|| format!("reading {}", args.input.display()))?;
    let inst = file.instance()?;
    if args.k > inst.m() {
        bail!("K = {} exceeds M = {}", args.k, inst.m());
    }
    rec.phase("load");
    let cfg = args.search.config();
    let mr = multi_restart(&inst, args.k, args.n_init, &cfg)?;
    rec.phase("search");
    let fit = fit_least_squares(&inst, &mr.best.c_final)?;
    let conv: Vec<f64> = mr.all.iter().map(|r| r.n_conv as f64).collect();
    let (mean, stderr) = mean_stderr(&conv);
    let (eps_x, recovered) = match file.planted()? {
        Some(pi) => {
            let e = input_mse(&pi.x0, &mr.best.c_final, &fit)?;
            (Some(e), Some(e <= PERFECT_RECONSTRUCTION_TOL && mr.best.converged()))
        }
        None => (None, None),
    };
    let report = SolveReport {
        k: args.k,
        m: inst.m(),
        n: inst.n(),
        n_init: args.n_init,
        t_wait: args.search.t_wait,
        seed: args.search.seed,
        best_index: mr.best_index,
        best_support: fit.active.clone(),
        best_energy: mr.best.energy,
        best_coefficients: fit.coefficients.clone(),
        nconv: NconvStats {
            mean,
            stderr,
            min: mr.all.iter().map(|r| r.n_conv).min().unwrap_or(0),
            max: mr.all.iter().map(|r| r.n_conv).max().unwrap_or(0),
        },
        capped_runs: mr.all.iter().filter(|r| !r.converged()).count(),
        eps_x,
        recovered,
        restarts: mr
            .all
            .iter()
            .enumerate()
            .map(|(index, r)| RestartRecord {
                index,
                seed: r.seed,
                energy: r.energy,
                n_conv: r.n_conv,
                exhaustive_invocations: r.exhaustive_invocations,
                accepted_flips: r.accepted_flips,
                terminated_by: r.terminated_by,
                support: r.c_final.ones(),
            })
            .collect(),
    };
    match &args.out {
        Some(out) => {
            dataio::write_json(out, &report)?;
            rec.output(out);
            rec.phase("write");
            eprintln!(
                "best energy {:e} on {:?} (restart {})",
                report.best_energy, report.best_support, report.best_index
            );
            rec.finish("solve", &args, Some(args.search.seed), out)?;
        }
        None => println!("{}", serde_json::to_string_pretty(&report)?),
    }
    Ok(())
}

fn cmd_success(args: SuccessArgs) -> Result<()> {
    let mut rec = Recorder::start();
    let rep = success_report(args.n, args.alpha, args.rho0, args.n_samp, args.n_init, &args.search.config())?;
    rec.phase("experiment");
    dataio::write_csv(
        &args.out,
        &[rows::Success {
            n: rep.n,
            alpha: rep.alpha,
            rho0: rep.rho0,
            n_init: rep.n_init,
            n_samp: rep.n_samp,
            p_suc_mean: rep.mean,
            p_suc_stderr: rep.stderr,
        }],
    )?;
    rec.output(&args.out);
    rec.phase("write");
    eprintln!("P_suc = {:.4} +/- {:.4}", rep.mean, rep.stderr);
    rec.finish("success", &args, Some(args.search.seed), &args.out)?;
    Ok(())
}

fn cmd_phase(args: PhaseArgs) -> Result<()> {
    let mut rec = Recorder::start();
    let cells: Vec<(f64, f64)> = match (&args.alpha, &args.rho0) {
        (None, None) => default_phase_grid(args.n),
        _ => {
            let ticks: Vec<f64> = (1..=19).map(|i| i as f64 / 20.0).collect();
            let alphas = args.alpha.clone().unwrap_or_else(|| ticks.clone());
            let rho0s = args.rho0.clone().unwrap_or(ticks);
            alphas
                .iter()
                .flat_map(|&a| rho0s.iter().map(move |&r| (a, r)))
                .collect()
        }
    };
    let res = phase_sweep(&cells, args.n, args.n_samp, args.n_init, &args.search.config())?;
    rec.phase("experiment");
    let out: Vec<rows::Phase> = res
        .iter()
        .map(|c| rows::Phase {
            alpha: c.alpha,
            rho0: c.rho0,
            n_samp: c.n_samp,
            p_samp: c.p_samp,
        })
        .collect();
    dataio::write_csv(&args.out, &out)?;
    rec.output(&args.out);
    rec.phase("write");
    rec.finish("phase", &args, Some(args.search.seed), &args.out)?;
    Ok(())
}

fn cmd_scaling(args: ScalingArgs) -> Result<()> {
    let mut rec = Recorder::start();
    let rep = nconv_scaling(
        &args.sizes,
        args.alpha,
        args.rho,
        args.rho0,
        args.n_samp,
        args.n_init,
        &args.search.config(),
    )?;
    rec.phase("experiment");
    let out: Vec<rows::Scaling> = rep
        .records
        .iter()
        .map(|r| rows::Scaling {
            n: r.n,
            nconv_mean: r.nconv_mean,
            nconv_stderr: r.nconv_stderr,
        })
        .collect();
    dataio::write_csv(&args.out, &out)?;
    rec.output(&args.out);
    rec.phase("write");
    if let Some(s) = rep.slope {
        eprintln!("log-log slope {s:.3}");
    }
    rec.finish("scaling", &args, Some(args.search.seed), &args.out)?;
    Ok(())
}

fn cmd_noisy(args: NoisyArgs) -> Result<()> {
    let mut rec = Recorder::start();
    let base = EnsembleParams {
        n: args.n,
        alpha: args.alpha,
        rho0: args.rho0,
        noise_var: args.noise_var,
        seed: 0,
    };
    let rep = noisy_mse_curve(&base, &args.rho, args.n_samp, args.n_init, &args.search.config())?;
    rec.phase("experiment");
    let out: Vec<rows::Noisy> = rep
        .rows
        .iter()
        .map(|r| rows::Noisy {
            rho: r.rho,
            eps_y_mean: r.eps_y_mean,
            eps_y_stderr: r.eps_y_stderr,
            eps_x_mean: r.eps_x_mean,
            eps_x_stderr: r.eps_x_stderr,
        })
        .collect();
    dataio::write_csv(&args.out, &out)?;
    rec.output(&args.out);
    rec.phase("write");
    rec.finish("noisy", &args, Some(args.search.seed), &args.out)?;
    Ok(())
}

/// `dir/stem.csv` becomes `dir/stem.<tag>`.
fn sibling(out: &Path, tag: &str) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}.{tag}"))
}

fn cmd_cv(args: CvArgs) -> Result<()> {
    if args.k_min > args.k_max {
        bail!("--k-min {} exceeds --k-max {}", args.k_min, args.k_max);
    }
    let mut rec = Recorder::start();
    let raw = dataio::load_csv(&args.a, &args.y, args.header)?;
    let data = if args.no_standardize {
        raw
    } else {
        dataio::standardize(&raw)?.data
    };
    rec.phase("load");
    let cfg = args.search.config();
    let mut reports = Vec::new();
    for k in args.k_min..=args.k_max {
        reports.push(loo_cv_error(&data, k, args.n_init_per_fold, &cfg)?);
        rec.phase(&format!("K={k}"));
    }
    let table: Vec<rows::Cv> = reports.iter().map(|r| rows::Cv { k: r.k, eps_cv: r.eps_cv }).collect();
    dataio::write_csv(&args.out, &table)?;
    rec.output(&args.out);
    for r in &reports {
        let path = sibling(&args.out, &format!("counts_K{}.csv", r.k));
        let counts: Vec<rows::Count> = selection_counts(r, None)
            .into_iter()
            .map(|(j, count)| rows::Count { variable: j + 1, count })
            .collect();
        dataio::write_csv(&path, &counts)?;
        rec.output(&path);
    }
    let report_path = sibling(&args.out, "report.json");
    dataio::write_json(&report_path, &reports)?;
    rec.output(&report_path);
    rec.phase("write");
    for r in &reports {
        eprintln!("K = {}: eps_cv = {:.6}", r.k, r.eps_cv);
    }
    rec.finish("cv", &args, Some(args.search.seed), &args.out)?;
    Ok(())
}

fn cmd_replay(args: ReplayArgs) -> Result<()> {
    let manifest: RunManifest = dataio::read_json(&args.manifest)
        .with_context(|| format!("reading {}", args.manifest.display()))?;
    let argv = std::iter::once("gmc".to_string()).chain(manifest.argv.iter().cloned());
    let cli = Cli::try_parse_from(argv).context("manifest holds an invalid command line")?;
    if matches!(cli.command, Command::Replay(_)) {
        bail!("a manifest cannot replay another replay");
    }
    run(cli)
}
