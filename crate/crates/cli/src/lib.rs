//! Command-line driver: JSON configs with flag overrides, rayon-parallel
//! sweeps and deterministic CSV/JSON output.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod output;

use std::ffi::OsString;
use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use rdcontract::certificates::LambdaSource;
use rdcontract::models::ModelPreset;

use crate::config::{CertifyMode, Command, InitPreset, RunConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_NOT_CERTIFIED: i32 = 2;
pub const THREADS_ENV: &str = "RD_CONTRACT_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "rdcontract",
    version,
    about = "Reaction-diffusion simulation and contraction certificates"
)]
pub struct Cli {
    /// JSON run configuration; flags override its fields.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (default `out`).
    #[arg(long, short, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Grid nodes (default 500).
    #[arg(long, global = true)]
    pub n: Option<usize>,
    #[command(subcommand)]
    pub command: Cmd,
}

#[derive(Debug, Subcommand)]
pub enum Cmd {
    /// Integrate a preset model and export the trajectory.
    Simulate(ModelArgs),
    /// Check the contraction certificate of a preset model.
    Certify(ModelArgs),
    /// Slope sweep over omega for the scalar example.
    SweepOmega(SweepOmegaArgs),
    /// Critical zeta per radius for the two-species example.
    SweepZeta(SweepZetaArgs),
    /// Binding correction factor of two volume profiles.
    Bcf(ProfileArgs),
    /// Second eigenvalue of a θ-diffusion operator against its floor.
    Eig(EigArgs),
    /// QSS error trajectories of the translation model.
    Qss(QssArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct TimeArgs {
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub t_end: Option<f64>,
    /// Slope window `T_LO T_HI`.
    #[arg(long, num_args = 2, value_names = ["T_LO", "T_HI"])]
    pub window: Option<Vec<f64>>,
    #[arg(long)]
    pub sample_every: Option<usize>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct TranslationArgs {
    #[arg(long)]
    pub r_m: Option<f64>,
    #[arg(long)]
    pub r_r: Option<f64>,
    #[arg(long)]
    pub x_star: Option<f64>,
    /// Multiplies every translation-model diffusivity.
    #[arg(long)]
    pub diffusion_scale: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// example31, example32 or translation.
    #[arg(long)]
    pub model: Option<ModelPreset>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub omega: Option<f64>,
    /// Diffusivity override for example31.
    #[arg(long)]
    pub diffusion: Option<f64>,
    #[arg(long)]
    pub zeta: Option<f64>,
    #[arg(long)]
    pub r: Option<f64>,
    #[arg(long, value_enum)]
    pub init: Option<InitPreset>,
    #[arg(long, value_enum)]
    pub mode: Option<CertifyMode>,
    /// Random probes per certificate condition.
    #[arg(long)]
    pub samples: Option<usize>,
    /// analytic-floor or numeric.
    #[arg(long, value_parser = parse_lambda_source)]
    pub lambda_source: Option<LambdaSource>,
    #[command(flatten)]
    pub time: TimeArgs,
    #[command(flatten)]
    pub translation: TranslationArgs,
}

#[derive(Debug, Clone, Args)]
pub struct SweepOmegaArgs {
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub omega_min: Option<f64>,
    #[arg(long)]
    pub omega_max: Option<f64>,
    #[arg(long)]
    pub steps: Option<usize>,
    /// Bisection tolerance for the critical omega.
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub diffusion: Option<f64>,
    #[command(flatten)]
    pub time: TimeArgs,
}

#[derive(Debug, Clone, Args)]
pub struct SweepZetaArgs {
    #[arg(long)]
    pub r_min: Option<f64>,
    #[arg(long)]
    pub r_max: Option<f64>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub zeta_min: Option<f64>,
    #[arg(long)]
    pub zeta_max: Option<f64>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[command(flatten)]
    pub time: TimeArgs,
}

#[derive(Debug, Clone, Args)]
pub struct ProfileArgs {
    #[arg(long)]
    pub r_m: Option<f64>,
    #[arg(long)]
    pub r_r: Option<f64>,
    #[arg(long)]
    pub x_star: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct EigArgs {
    #[arg(long)]
    pub theta: Option<f64>,
    /// Use the available-volume profile of this radius as d.
    #[arg(long)]
    pub r: Option<f64>,
    /// Constant d when no radius is given.
    #[arg(long)]
    pub d: Option<f64>,
    #[arg(long)]
    pub x_star: Option<f64>,
    /// Also write the operator as triplets.
    #[arg(long)]
    pub triplets: bool,
}

#[derive(Debug, Clone, Args)]
pub struct QssArgs {
    #[arg(long, value_enum)]
    pub init: Option<InitPreset>,
    #[command(flatten)]
    pub time: TimeArgs,
    #[command(flatten)]
    pub translation: TranslationArgs,
}

fn parse_lambda_source(s: &str) -> std::result::Result<LambdaSource, String> {
    match s {
        "analytic-floor" => Ok(LambdaSource::AnalyticFloor),
        "numeric" => Ok(LambdaSource::Numeric),
        other => Err(format!("expected analytic-floor or numeric, got `{other}`")),
    }
}

impl TimeArgs {
    fn apply(&self, c: &mut RunConfig) {
        c.dt = self.dt;
        c.t_end = self.t_end;
        c.window = self.window.as_ref().map(|w| [w[0], w[1]]);
        c.sample_every = self.sample_every;
    }
}

impl TranslationArgs {
    fn apply(&self, c: &mut RunConfig) {
        c.r_m = self.r_m;
        c.r_r = self.r_r;
        c.x_star = self.x_star;
        c.diffusion_scale = self.diffusion_scale;
    }
}

impl Cli {
    /// The flag layer: only fields given on the command line are set.
    pub fn flags(&self) -> (Command, RunConfig) {
        let mut c = RunConfig {
            output_dir: self.out.clone(),
            seed: self.seed,
            n: self.n,
            ..Default::default()
        };
        let command = match &self.command {
            Cmd::Simulate(a) | Cmd::Certify(a) => {
                c.model = a.model;
                c.epsilon = a.epsilon;
                c.omega = a.omega;
                c.diffusion = a.diffusion;
                c.zeta = a.zeta;
                c.r = a.r;
                c.init = a.init;
                c.mode = a.mode;
                c.samples = a.samples;
                c.lambda_source = a.lambda_source;
                a.time.apply(&mut c);
                a.translation.apply(&mut c);
                if matches!(self.command, Cmd::Simulate(_)) {
                    Command::Simulate
                } else {
                    Command::Certify
                }
            }
            Cmd::SweepOmega(a) => {
                c.epsilon = a.epsilon;
                c.omega_min = a.omega_min;
                c.omega_max = a.omega_max;
                c.steps = a.steps;
                c.tol = a.tol;
                c.diffusion = a.diffusion;
                a.time.apply(&mut c);
                Command::SweepOmega
            }
            Cmd::SweepZeta(a) => {
                c.r_min = a.r_min;
                c.r_max = a.r_max;
                c.steps = a.steps;
                c.zeta_min = a.zeta_min;
                c.zeta_max = a.zeta_max;
                c.tol = a.tol;
                a.time.apply(&mut c);
                Command::SweepZeta
            }
            Cmd::Bcf(a) => {
                c.r_m = a.r_m;
                c.r_r = a.r_r;
                c.x_star = a.x_star;
                Command::Bcf
            }
            Cmd::Eig(a) => {
                c.theta = a.theta;
                c.r = a.r;
                c.d = a.d;
                c.x_star = a.x_star;
                c.triplets = a.triplets.then_some(true);
                Command::Eig
            }
            Cmd::Qss(a) => {
                c.init = a.init;
                a.time.apply(&mut c);
                a.translation.apply(&mut c);
                Command::Qss
            }
        };
        (command, c)
    }

    /// Config file (if any) overlaid with the flags, bound to the command.
    pub fn resolve(&self) -> Result<RunConfig> {
        let (command, flags) = self.flags();
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        cfg.overlay(&flags);
        if matches!(command, Command::SweepOmega) {
            cfg.model.get_or_insert(ModelPreset::Example31);
        }
        if matches!(command, Command::SweepZeta) {
            cfg.model.get_or_insert(ModelPreset::Example32);
        }
        cfg.bind(command)
    }
}

/// Worker count from `RD_CONTRACT_THREADS`, if set to a positive integer.
pub fn thread_cap() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => anyhow::bail!("{THREADS_ENV} must be a positive integer, got `{v}`"),
        },
        Err(_) => Ok(None),
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match run_cli(&cli) {
        Ok(outcome) => {
            println!("{}", outcome.message);
            for f in &outcome.files {
                println!("wrote {}", f.display());
            }
            match outcome.certified {
                Some(false) => EXIT_NOT_CERTIFIED,
                _ => EXIT_OK,
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_ERROR
        }
    }
}

fn run_cli(cli: &Cli) -> Result<commands::Outcome> {
    let cfg = cli.resolve()?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = thread_cap()? {
        pool = pool.num_threads(n);
    }
    pool.build()?.install(|| commands::execute(&cfg))
}
