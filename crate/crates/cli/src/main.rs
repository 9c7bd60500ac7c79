use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nested_bregman::experiments::{
    parse_grid, parse_pairs, run_experiment, sweep_alphas, sweep_csv, write_run, ExperimentSpec, SweepMode,
};

#[derive(Parser)]
#[command(name = "nested-bregman", version, about = "Nested Bregman decomposition experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write a run directory.
    Run(RunArgs),
    /// Single-step decompositions over a grid of the first weight.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct SpecArgs {
    /// key=value config file; flags given on the command line override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// exp1, exp2 or exp3.
    #[arg(long)]
    experiment: Option<String>,
    /// noisefree, morozov, bregman-inner, single-step-tikhonov,
    /// single-step-morozov or classic-bregman.
    #[arg(long)]
    algo: Option<String>,
    #[arg(long)]
    alpha: Option<String>,
    #[arg(long)]
    beta: Option<String>,
    #[arg(long)]
    alpha1: Option<String>,
    #[arg(long)]
    beta1: Option<String>,
    #[arg(long)]
    alpha2: Option<String>,
    #[arg(long)]
    beta2: Option<String>,
    /// Texture frequency as `w1,w2`.
    #[arg(long)]
    omega: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    noise_std: Option<String>,
    #[arg(long)]
    tau: Option<String>,
    #[arg(long)]
    max_outer: Option<String>,
    #[arg(long)]
    max_inner: Option<String>,
    #[arg(long)]
    inner_tol: Option<String>,
    #[arg(long)]
    eq_tol: Option<String>,
    #[arg(long)]
    moreau_mu: Option<String>,
    /// Tikhonov multiplier of Bregman-type runs (default: a quarter of the Morozov multiplier).
    #[arg(long)]
    lambda: Option<String>,
    /// Signal length (exp1), image side (exp2) or block side (exp3).
    #[arg(long)]
    size: Option<String>,
    /// Use the original experiment sizes instead of the reduced defaults.
    #[arg(long)]
    full_scale: bool,
    #[arg(long)]
    out: Option<String>,
    #[arg(long)]
    swap_roles: bool,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    spec: SpecArgs,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    spec: SpecArgs,
    /// `a:b:log:n`, `a:b:lin:n` or a comma-separated list.
    #[arg(long, default_value = "1e-2:1e4:log:200")]
    alphas: String,
    /// morozov-single-step or tikhonov-single-step.
    #[arg(long, default_value = "morozov-single-step")]
    mode: String,
}

enum Failure {
    Config(String),
    Solver(String),
}

impl SpecArgs {
    /// The spec and the verbatim config file text, if one was given.
    fn build(&self) -> Result<(ExperimentSpec, Option<String>), Failure> {
        let cfg_err = |e: nested_bregman::Error| Failure::Config(e.to_string());
        let mut pairs = Vec::new();
        let text = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
                pairs = parse_pairs(&text).map_err(cfg_err)?;
                Some(text)
            }
            None => None,
        };
        let flags = [
            ("experiment", &self.experiment),
            ("algo", &self.algo),
            ("alpha", &self.alpha),
            ("beta", &self.beta),
            ("alpha1", &self.alpha1),
            ("beta1", &self.beta1),
            ("alpha2", &self.alpha2),
            ("beta2", &self.beta2),
            ("omega", &self.omega),
            ("seed", &self.seed),
            ("noise_std", &self.noise_std),
            ("tau", &self.tau),
            ("max_outer", &self.max_outer),
            ("max_inner", &self.max_inner),
            ("inner_tol", &self.inner_tol),
            ("eq_tol", &self.eq_tol),
            ("moreau_mu", &self.moreau_mu),
            ("lambda", &self.lambda),
            ("size", &self.size),
            ("out", &self.out),
        ];
        for (k, v) in flags {
            if let Some(v) = v {
                pairs.push((k.to_string(), v.clone()));
            }
        }
        if self.full_scale {
            pairs.push(("full_scale".into(), "true".into()));
        }
        if self.swap_roles {
            pairs.push(("swap_roles".into(), "true".into()));
        }
        let spec = ExperimentSpec::from_pairs(&pairs).map_err(cfg_err)?;
        Ok((spec, text))
    }
}

fn run(args: &RunArgs) -> Result<(), Failure> {
    let (spec, text) = args.spec.build()?;
    let outcome = run_experiment(&spec).map_err(|e| Failure::Solver(e.to_string()))?;
    write_run(&outcome, &spec.output_dir, text.as_deref()).map_err(|e| Failure::Solver(e.to_string()))?;
    println!("{}", outcome.summary.to_line());
    Ok(())
}

fn sweep(args: &SweepArgs) -> Result<(), Failure> {
    let (spec, text) = args.spec.build()?;
    let alphas = parse_grid(&args.alphas).map_err(|e| Failure::Config(e.to_string()))?;
    let mode: SweepMode = args.mode.parse().map_err(|e: nested_bregman::Error| Failure::Config(e.to_string()))?;
    let rows = sweep_alphas(&spec, &alphas, mode).map_err(|e| Failure::Solver(e.to_string()))?;
    let write = || -> std::io::Result<()> {
        let dir = &spec.output_dir;
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("config.txt"), spec.to_config_text())?;
        std::fs::write(dir.join("sweep.txt"), format!("alphas={}\nmode={}\n", args.alphas, args.mode))?;
        if let Some(text) = &text {
            std::fs::write(dir.join("input_config.txt"), text)?;
        }
        std::fs::write(dir.join("sweep.csv"), sweep_csv(&rows))
    };
    write().map_err(|e| Failure::Solver(e.to_string()))?;
    if let Some(best) = rows.iter().max_by(|a, b| a.psnr_sum().total_cmp(&b.psnr_sum())) {
        println!("points={} best_alpha={:?} best_psnr_sum={:?}", rows.len(), best.alpha, best.psnr_sum());
    }
    Ok(())
}

fn main() -> ExitCode {
    // Usage errors are config errors (exit 1); clap would use 2.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Run(args) => run(args),
        Command::Sweep(args) => sweep(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Solver(msg)) => {
            eprintln!("solver error: {msg}");
            ExitCode::from(2)
        }
    }
}
