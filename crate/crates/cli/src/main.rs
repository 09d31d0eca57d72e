use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gqarch_ito::pipeline::{execute, Command, Dgp, RunConfig};
use gqarch_ito::Error;

/// GQARCH-Itô volatility toolkit.
#[derive(Parser, Debug)]
#[command(name = "gqarch", version, about)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args, Debug)]
struct Global {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed for every stochastic step.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (results do not depend on this).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Args, Debug, Default)]
struct Inputs {
    /// Panel CSV written by `simulate` or `run`.
    #[arg(long)]
    panel: Option<PathBuf>,
    /// Raw tick CSV (`timestamp,price` or `day,seconds,price`).
    #[arg(long)]
    input: Option<PathBuf>,
    /// Realized-variance CSV written by `rv`.
    #[arg(long)]
    rv: Option<PathBuf>,
    /// Fit JSON written by `fit`.
    #[arg(long)]
    fit: Option<PathBuf>,
    /// Comma-separated horizons, e.g. `1,2,3`.
    #[arg(long, value_delimiter = ',')]
    horizons: Option<Vec<u32>>,
    /// Re-estimate on each fractional grid instead of deriving coefficients.
    #[arg(long)]
    refit: bool,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Simulate a tick panel with ground truth.
    Simulate {
        #[arg(long)]
        dgp: Option<Dgp>,
    },
    /// Realized variance per day and fractional window.
    Rv(Inputs),
    /// Quasi-maximum-likelihood fit on daily data.
    Fit(Inputs),
    /// Forecast the next window at each horizon.
    Forecast(Inputs),
    /// Out-of-sample forecast evaluation.
    Evaluate(Inputs),
    /// Parameter-recovery study.
    #[command(name = "replicate-4.1")]
    Replicate41 {
        #[arg(long)]
        reps: Option<usize>,
    },
    /// Fractional-horizon forecasting study under Heston or jump-diffusion data.
    #[command(name = "replicate-4.2")]
    Replicate42 {
        #[arg(long, default_value = "heston")]
        dgp: Dgp,
        #[arg(long)]
        reps: Option<usize>,
    },
    /// Full pipeline driven by the configuration file.
    Run(Inputs),
}

fn apply_inputs(cfg: &mut RunConfig, inputs: &Inputs) {
    if inputs.panel.is_some() {
        cfg.panel.clone_from(&inputs.panel);
    }
    if inputs.input.is_some() {
        cfg.input.clone_from(&inputs.input);
    }
    if inputs.rv.is_some() {
        cfg.rv_file.clone_from(&inputs.rv);
    }
    if inputs.fit.is_some() {
        cfg.fit_file.clone_from(&inputs.fit);
    }
    if let Some(h) = &inputs.horizons {
        cfg.horizons.clone_from(h);
    }
    if inputs.refit {
        cfg.refit_per_horizon = true;
    }
}

fn resolve(cli: &Cli) -> Result<(Command, RunConfig), Error> {
    let mut cfg = match (&cli.global.config, &cli.command) {
        (Some(path), _) => RunConfig::load(path)?,
        (None, Cmd::Replicate41 { .. }) => RunConfig::recovery_preset(),
        (None, Cmd::Replicate42 { dgp, .. }) => RunConfig::forecast_preset(*dgp),
        (None, _) => RunConfig::default(),
    };
    if cli.global.seed.is_some() {
        cfg.seed = cli.global.seed;
    }
    let cmd = match &cli.command {
        Cmd::Simulate { dgp } => {
            if let Some(d) = dgp {
                cfg.dgp = *d;
            }
            Command::Simulate
        }
        Cmd::Rv(i) => {
            apply_inputs(&mut cfg, i);
            Command::Rv
        }
        Cmd::Fit(i) => {
            apply_inputs(&mut cfg, i);
            Command::Fit
        }
        Cmd::Forecast(i) => {
            apply_inputs(&mut cfg, i);
            Command::Forecast
        }
        Cmd::Evaluate(i) => {
            apply_inputs(&mut cfg, i);
            Command::Evaluate
        }
        Cmd::Replicate41 { reps } => {
            if let Some(r) = reps {
                cfg.replications = *r;
            }
            Command::Replicate41
        }
        Cmd::Replicate42 { dgp, reps } => {
            cfg.dgp = *dgp;
            if let Some(r) = reps {
                cfg.replications = *r;
            }
            Command::Replicate42
        }
        Cmd::Run(i) => {
            apply_inputs(&mut cfg, i);
            Command::Run
        }
    };
    Ok((cmd, cfg))
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    if let Some(k) = cli.global.threads {
        if k == 0 || rayon::ThreadPoolBuilder::new().num_threads(k).build_global().is_err() {
            eprintln!("error: invalid --threads {k}");
            return ExitCode::from(2);
        }
    }
    let (cmd, cfg) = match resolve(&cli) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(exit_code(&e));
        }
    };
    let out = cli
        .global
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    match execute(cmd, &cfg, &out) {
        Ok(manifest) => {
            for o in &manifest.outputs {
                println!("{}  {}", o.sha256, out.join(&o.file).display());
            }
            for w in &manifest.warnings {
                eprintln!("warning: {w}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
