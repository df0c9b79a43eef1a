use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nalgebra::DVector;
use see_core::bandwidth::plugin_bandwidth_with_fit;
use see_core::estimator::{huge_h_estimate, solve_see, unsmoothed_qr_reference, SolverOptions};
use see_core::inference::{run_test, BandwidthChoice};
use see_core::instruments::Dataset;
use see_core::kernels::SmoothingKernel;
use see_core::montecarlo::{parse_estimators, run_mc, size_adjusted_power, DgpId, DgpSpec, McOptions, PowerMethod, PowerOptions};
use see_cli::config::{
    default_parallelism, load_config, parse_h_mode, parse_list, pick, validate_parallelism, validate_q, FileConfig, Format,
    DEFAULT_ALPHA, DEFAULT_KERNEL, DEFAULT_Q, DEFAULT_REPS, DEFAULT_SEED,
};
use see_cli::io::{emit_json, load_dataset, sink, write_draws_csv, write_fit_csv, write_power_csv, write_summary_csv, FitOutput, SchemaOptions, SieveOptions};
use see_cli::{CliError, CliResult};

#[derive(Parser)]
#[command(name = "seeqr", version, about = "Smoothed estimating equations for IV quantile regression")]
struct Cli {
    /// TOML file with default values for any flag.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct DataArgs {
    /// CSV with columns y, x*, z*.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    q: Option<f64>,
    #[arg(long)]
    kernel: Option<String>,
    /// Prepend a column of ones to X (and to Z).
    #[arg(long)]
    add_intercept: bool,
    /// Use a polynomial sieve of this degree in the instruments.
    #[arg(long)]
    sieve_degree: Option<usize>,
    #[arg(long)]
    interactions: bool,
}

#[derive(Args)]
struct OutArgs {
    #[arg(long)]
    out: Option<PathBuf>,
    /// csv or json.
    #[arg(long)]
    format: Option<String>,
}

#[derive(Args)]
struct SimArgs {
    #[arg(long)]
    dgp: Option<String>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    parallelism: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    q: Option<f64>,
    #[arg(long)]
    kernel: Option<String>,
    /// JTPA2s at n = 50000.
    #[arg(long)]
    full_scale: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate the coefficients.
    Fit {
        #[command(flatten)]
        data: DataArgs,
        /// plugin, tiny, huge or a positive number.
        #[arg(long)]
        h: Option<String>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Chi-square test of H0: beta = beta0.
    Test {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        h: Option<String>,
        /// Comma-separated hypothesized coefficients.
        #[arg(long)]
        beta0: String,
        #[arg(long)]
        alpha: Option<f64>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Plug-in bandwidth with the per-family density fits.
    Bandwidth {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Monte Carlo comparison of estimators.
    Simulate {
        #[command(flatten)]
        sim: SimArgs,
        /// Comma-separated: see-plugin, see-fixed:H, scf, scf-fixed:H, tiny-h, iv, huge-h, constant.
        #[arg(long)]
        estimators: Option<String>,
        /// Per-replication estimates; the summary goes to --summary or standard output.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        summary: Option<PathBuf>,
        /// csv (default) or json for the full result.
        #[arg(long)]
        format: Option<String>,
    },
    /// Size-adjusted power curve.
    #[command(name = "power-curve", visible_alias = "power")]
    Power {
        #[command(flatten)]
        sim: SimArgs,
        #[arg(long)]
        alpha: Option<f64>,
        /// Comma-separated deviation magnitudes.
        #[arg(long)]
        deltas: Option<String>,
        /// Comma-separated: see-plugin, tiny-h, see-fixed:H.
        #[arg(long)]
        methods: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn kernel(flag: Option<String>, cfg: &FileConfig) -> CliResult<SmoothingKernel> {
    Ok(pick(flag, cfg.kernel.clone(), DEFAULT_KERNEL.to_string()).parse::<SmoothingKernel>()?)
}

fn dataset(args: DataArgs, cfg: &FileConfig) -> CliResult<(Dataset, SmoothingKernel)> {
    let path = args
        .data
        .or_else(|| cfg.data.as_ref().map(PathBuf::from))
        .ok_or_else(|| CliError::Config("--data is required".into()))?;
    let q = validate_q(pick(args.q, cfg.q, DEFAULT_Q))?;
    let degree = args.sieve_degree.or(cfg.sieve_degree);
    let interactions = args.interactions || cfg.interactions.unwrap_or(false);
    let opts = SchemaOptions {
        q,
        add_intercept: args.add_intercept || cfg.add_intercept.unwrap_or(false),
        sieve: degree.map(|degree| SieveOptions { degree, interactions }),
    };
    Ok((load_dataset(&path, &opts)?, kernel(args.kernel, cfg)?))
}

fn h_choice(flag: Option<String>, cfg: &FileConfig) -> CliResult<BandwidthChoice> {
    match (flag, &cfg.h) {
        (Some(s), _) => parse_h_mode(&s),
        (None, Some(h)) => h.to_choice(),
        (None, None) => Ok(BandwidthChoice::Plugin),
    }
}

fn format(flag: Option<String>, cfg: &FileConfig, default: Format) -> CliResult<Format> {
    flag.or_else(|| cfg.format.clone()).map_or(Ok(default), |s| s.parse())
}

fn h_label(choice: BandwidthChoice) -> String {
    match choice {
        BandwidthChoice::Plugin => "plugin".into(),
        BandwidthChoice::Fixed(h) => format!("fixed:{h}"),
        BandwidthChoice::Tiny => "tiny".into(),
        BandwidthChoice::Huge => "huge".into(),
    }
}

fn fit(data: &Dataset, k: &SmoothingKernel, choice: BandwidthChoice) -> CliResult<FitOutput> {
    let opts = SolverOptions::default();
    let label = h_label(choice);
    let out = match choice {
        BandwidthChoice::Plugin => {
            let (report, initial) = plugin_bandwidth_with_fit(data, k, &opts)?;
            let f = solve_see(data, report.selected, k, Some(&initial.beta), &opts)?;
            FitOutput::new(&f, data, &label, Some(report))
        }
        BandwidthChoice::Tiny => {
            let (report, initial) = plugin_bandwidth_with_fit(data, k, &opts)?;
            let f = unsmoothed_qr_reference(data, k, &initial, &opts)?;
            FitOutput::new(&f, data, &label, Some(report))
        }
        BandwidthChoice::Huge => FitOutput::new(&huge_h_estimate(data, k, &opts)?, data, &label, None),
        BandwidthChoice::Fixed(h) => FitOutput::new(&solve_see(data, h, k, None, &opts)?, data, &label, None),
    };
    Ok(out)
}

fn sim_spec(sim: &SimArgs, cfg: &FileConfig) -> CliResult<DgpSpec> {
    let id: DgpId = sim
        .dgp
        .clone()
        .or_else(|| cfg.dgp.clone())
        .ok_or_else(|| CliError::Config("--dgp is required".into()))?
        .parse()?;
    let mut spec = if sim.full_scale || cfg.full_scale.unwrap_or(false) { DgpSpec::full_scale(id) } else { DgpSpec::new(id) };
    if let Some(n) = sim.n.or(cfg.n) {
        spec = spec.with_n(n);
    }
    if let Some(q) = sim.q.or(cfg.q) {
        spec = spec.with_q(validate_q(q)?);
    }
    spec.validate()?;
    Ok(spec)
}

fn write_with<F>(path: Option<&Path>, f: F) -> CliResult<()>
where
    F: FnOnce(Box<dyn std::io::Write>) -> CliResult<()>,
{
    f(sink(path)?)
}

fn run(cli: Cli) -> CliResult<()> {
    let cfg = match &cli.config {
        Some(p) => load_config(p)?,
        None => FileConfig::default(),
    };
    match cli.command {
        Command::Fit { data, h, out } => {
            let (ds, k) = dataset(data, &cfg)?;
            let res = fit(&ds, &k, h_choice(h, &cfg)?)?;
            match format(out.format, &cfg, Format::Json)? {
                Format::Json => emit_json("fit", &res, out.out.as_deref()),
                Format::Csv => write_with(out.out.as_deref(), |w| write_fit_csv(&res, w)),
            }
        }
        Command::Test { data, h, beta0, alpha, out } => {
            let (ds, k) = dataset(data, &cfg)?;
            let beta0 = DVector::from_vec(parse_list(&beta0)?);
            let alpha = pick(alpha, cfg.alpha, DEFAULT_ALPHA);
            let res = run_test(&ds, &beta0, alpha, &k, h_choice(h, &cfg)?, &SolverOptions::default())?;
            emit_json("test", &res, out.out.as_deref())
        }
        Command::Bandwidth { data, out } => {
            let (ds, k) = dataset(data, &cfg)?;
            let (report, _) = plugin_bandwidth_with_fit(&ds, &k, &SolverOptions::default())?;
            emit_json("bandwidth", &report, out.out.as_deref())
        }
        Command::Simulate { sim, estimators, out, summary, format: fmt } => {
            let spec = sim_spec(&sim, &cfg)?;
            let list = pick(estimators, cfg.estimators.clone(), "see-plugin,scf,tiny-h,iv".to_string());
            let est = parse_estimators(&list)?;
            let mut opts = McOptions::new(
                pick(sim.reps, cfg.reps, DEFAULT_REPS),
                pick(sim.seed, cfg.seed, DEFAULT_SEED),
                validate_parallelism(pick(sim.parallelism, cfg.parallelism, default_parallelism()))?,
            );
            opts.kernel = kernel(sim.kernel, &cfg)?;
            let res = run_mc(&spec, &est, &opts)?;
            for (label, fails) in res.estimator_labels.iter().zip(&res.failures) {
                if !fails.is_empty() {
                    eprintln!("{label}: {} of {} replications failed", fails.len(), res.reps);
                }
            }
            match format(fmt, &cfg, Format::Csv)? {
                Format::Json => emit_json("simulate", &res, out.as_deref()),
                Format::Csv => {
                    if let Some(path) = out.as_deref() {
                        write_with(Some(path), |w| write_draws_csv(&res, w))?;
                    }
                    write_with(summary.as_deref(), |w| write_summary_csv(&res, w))
                }
            }
        }
        Command::Power { sim, alpha, deltas, methods, out } => {
            let spec = sim_spec(&sim, &cfg)?;
            let deltas = match deltas {
                Some(s) => parse_list(&s)?,
                None => cfg.deltas.clone().unwrap_or_else(|| (0..=10).map(|i| i as f64).collect()),
            };
            let mut opts = PowerOptions::new(
                pick(sim.reps, cfg.reps, DEFAULT_REPS),
                pick(alpha, cfg.alpha, DEFAULT_ALPHA),
                pick(sim.seed, cfg.seed, DEFAULT_SEED),
                validate_parallelism(pick(sim.parallelism, cfg.parallelism, default_parallelism()))?,
            );
            if let Some(list) = methods.or_else(|| cfg.methods.clone()) {
                opts.methods = list.split(',').filter(|s| !s.trim().is_empty()).map(str::parse::<PowerMethod>).collect::<Result<_, _>>()?;
            }
            opts.kernel = kernel(sim.kernel, &cfg)?;
            let curve = size_adjusted_power(&spec, &deltas, &opts)?;
            write_with(out.as_deref(), |w| write_power_csv(&curve, w))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
