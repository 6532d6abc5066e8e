use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use alloyscope::harness::{emit_report, fmt_float, format_json, run, seed_from_env, ExperimentConfig, Format};
use alloyscope::spectra::ExperimentResult;
use alloyscope::{Error, Result};

/// Numerical laboratory for lattice alloy-type random operators with long-range interactions.
#[derive(Parser, Debug)]
#[command(name = "alloyscope", version)]
struct Cli {
    /// Base seed; falls back to the config file, then ALLOYSCOPE_SEED, then 0
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Monte Carlo trials
    #[arg(long, global = true)]
    trials: Option<u64>,
    /// Worker threads (default: all cores)
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Directory for JSON, CSV and SVG artifacts
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// json, csv, svg or all
    #[arg(long, global = true)]
    format: Option<String>,
    /// TOML config file; flags override its values
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Partial Viete-Euler product prod cos(x / 2^k)
    Viete(ExperimentConfig),
    /// Characteristic function of the thermal-bath sum and its decay fit
    Charfun(ExperimentConfig),
    /// Density of the bath sum by Fourier inversion
    Density(ExperimentConfig),
    /// Wegner-type interval probabilities and their slope in eps
    Wegner(ExperimentConfig),
    /// Eigenvalue histograms of finite-volume Hamiltonians
    Ids(ExperimentConfig),
    /// Eigenvalue comparison between two distant boxes
    Evcompare(ExperimentConfig),
    /// Initial length scale probabilities
    Ils(ExperimentConfig),
    /// Sequential activation and the Bernstein-type envelope check
    Bernstein(ExperimentConfig),
    /// Two-point covariance of the scalar shifts
    Twopoint(ExperimentConfig),
    /// Wiener average of a scaled Bernoulli product
    Wiener(ExperimentConfig),
}

impl Cmd {
    fn split(self) -> (&'static str, ExperimentConfig) {
        let name = self.name();
        let c = match self {
            Cmd::Viete(c)
            | Cmd::Charfun(c)
            | Cmd::Density(c)
            | Cmd::Wegner(c)
            | Cmd::Ids(c)
            | Cmd::Evcompare(c)
            | Cmd::Ils(c)
            | Cmd::Bernstein(c)
            | Cmd::Twopoint(c)
            | Cmd::Wiener(c) => c,
        };
        (name, c)
    }

    fn name(&self) -> &'static str {
        match self {
            Cmd::Viete(_) => "viete",
            Cmd::Charfun(_) => "charfun",
            Cmd::Density(_) => "density",
            Cmd::Wegner(_) => "wegner",
            Cmd::Ids(_) => "ids",
            Cmd::Evcompare(_) => "evcompare",
            Cmd::Ils(_) => "ils",
            Cmd::Bernstein(_) => "bernstein",
            Cmd::Twopoint(_) => "twopoint",
            Cmd::Wiener(_) => "wiener",
        }
    }
}

fn summary(res: &ExperimentResult) -> String {
    let mut out = Vec::new();
    match res.kind.name() {
        "viete" => {
            if let Some(v) = res.meta_f64("value") {
                return fmt_float(v);
            }
        }
        "charfun" => {
            if let Some(fit) = res.metadata.get("fit") {
                return format_json(fit).trim_end().to_string();
            }
        }
        _ => {}
    }
    for s in &res.slopes {
        out.push(format!(
            "slope[{}] = {} +/- {} ({} points)",
            s.label,
            fmt_float(s.slope),
            fmt_float(s.slope_se),
            s.points
        ));
    }
    for (k, v) in &res.metadata {
        match v {
            serde_json::Value::Number(n) => out.push(format!("{k} = {}", fmt_float(n.as_f64().unwrap_or(f64::NAN)))),
            serde_json::Value::String(_) | serde_json::Value::Bool(_) => out.push(format!("{k} = {v}")),
            _ => {}
        }
    }
    out.join("\n")
}

fn execute(cli: Cli) -> Result<()> {
    let (kind, mut flags) = cli.cmd.split();
    flags.kind = Some(kind.into());
    flags.seed = cli.seed;
    flags.trials = cli.trials;
    flags.jobs = cli.jobs;
    flags.out_dir = cli.out_dir;
    flags.format = cli.format;
    let file = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    let mut cfg = file.overlay(&flags)?;
    seed_from_env(&mut cfg)?;
    let format: Format = cfg.format.as_deref().unwrap_or("json").parse()?;
    if let Some(jobs) = cfg.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| Error::InvalidParameter(format!("--jobs: {e}")))?;
    }
    let res = run(&cfg)?;
    let hash = cfg.hash()?;
    let out_dir = cfg.out_dir.clone().unwrap_or_else(|| PathBuf::from("alloyscope-out"));
    for path in emit_report(&res, format, &out_dir, &hash)? {
        eprintln!("wrote {}", path.display());
    }
    println!("{}", summary(&res));
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let kind = cli.cmd.name();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {kind}: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
