//! Command-line front end for private polynomial evaluation over networks.
//!
//! Exit codes: 0 on success, 2 on configuration errors, 3 on protocol
//! aborts.

use clap::{Parser, Subcommand};
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use privpoly::error::{AnalysisError, NetError, ProtocolError};
use privpoly::modmath::{gen_prime, PrimeParams};
use privpoly::paillier;
use privpoly::scenario::{
    self, bench_csv, verdicts_csv, RunReport, ScenarioConfig,
};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

#[derive(Parser)]
#[command(
    name = "privpoly",
    about = "Privately evaluate polynomial functions over a network of agents",
    version
)]
struct Cli {
    /// Scenario configuration file (JSON). Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Seed for all randomness in the run; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory; results print to stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Secret sharing mode; overrides the config.
    #[arg(long, global = true, value_parser = ["direct", "prf"])]
    share_mode: Option<String>,

    /// Paillier key length in bits; overrides the config.
    #[arg(long, global = true)]
    sigma: Option<u64>,

    /// Bit length of the public prime field; overrides the config.
    #[arg(long, global = true)]
    omega_bits: Option<u64>,

    /// Fractional bits of the fixed-point encoding; overrides the config.
    #[arg(long, global = true)]
    frac_bits: Option<u32>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a Paillier key pair and write its prime material.
    Keygen,
    /// Evaluate the configured polynomials over the horizon.
    Run,
    /// Run the gradient-projection game case study.
    Game,
    /// Run the consensus-controller case study.
    Consensus,
    /// Sweep key lengths and neighbor counts; report medians.
    Bench,
    /// Report which noncorrupt values a corrupt set can reconstruct.
    Analyze,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}

struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    fn config(message: impl Into<String>) -> Self {
        CliError { code: 2, message: message.into() }
    }

    fn protocol(message: impl Into<String>) -> Self {
        CliError { code: 3, message: message.into() }
    }
}

impl From<ProtocolError> for CliError {
    fn from(e: ProtocolError) -> Self {
        match &e {
            ProtocolError::Net(NetError::ConfigError(_)) => CliError::config(e.to_string()),
            _ => CliError::protocol(e.to_string()),
        }
    }
}

impl From<NetError> for CliError {
    fn from(e: NetError) -> Self {
        CliError::config(e.to_string())
    }
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        match &e {
            AnalysisError::StructureViolation(_) => CliError::config(e.to_string()),
            AnalysisError::OracleInconclusive => CliError::protocol(e.to_string()),
        }
    }
}

fn load_config(cli: &Cli) -> Result<ScenarioConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
            ScenarioConfig::from_json(&text)?
        }
        None => ScenarioConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(mode) = &cli.share_mode {
        cfg.share_mode = mode.clone();
    }
    if let Some(sigma) = cli.sigma {
        cfg.sigma_bits = sigma;
    }
    if let Some(bits) = cli.omega_bits {
        cfg.omega_bits = bits;
    }
    if let Some(f) = cli.frac_bits {
        cfg.frac_bits = f;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn emit(out: &Option<PathBuf>, name: &str, content: &str) -> Result<(), CliError> {
    match out {
        Some(dir) => {
            fs::create_dir_all(dir)
                .map_err(|e| CliError::config(format!("cannot create {}: {e}", dir.display())))?;
            let path: PathBuf = dir.join(name);
            fs::write(&path, content)
                .map_err(|e| CliError::config(format!("cannot write {}: {e}", path.display())))?;
            eprintln!("wrote {}", path.display());
            Ok(())
        }
        None => {
            println!("{content}");
            Ok(())
        }
    }
}

fn emit_report(out: &Option<PathBuf>, prefix: &str, report: &RunReport) -> Result<(), CliError> {
    emit(out, &format!("{prefix}_report.json"), &report.to_json())?;
    emit(out, &format!("{prefix}_trajectory.csv"), &report.trajectory_csv())
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = load_config(cli)?;
    match cli.command {
        Command::Keygen => {
            let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed ^ 0x6b6579);
            let params = PrimeParams::new(cfg.sigma_bits / 2);
            let (pk, p, q) = loop {
                let p = gen_prime(&params, &mut rng);
                let q = gen_prime(&params, &mut rng);
                if let Some((pk, _)) = paillier::keygen_from_primes(&p, &q) {
                    break (pk, p, q);
                }
            };
            let doc = serde_json::json!({
                "sigma_bits": cfg.sigma_bits,
                "modulus": pk.modulus().to_string(),
                "p": p.to_string(),
                "q": q.to_string(),
            });
            emit(&cli.out, "keypair.json", &serde_json::to_string_pretty(&doc).unwrap())
        }
        Command::Run => {
            let report = scenario::run_scenario(&cfg)?;
            emit_report(&cli.out, "run", &report)
        }
        Command::Game => {
            let report = scenario::run_game(&cfg)?;
            emit_report(&cli.out, "game", &report)
        }
        Command::Consensus => {
            let report = scenario::run_consensus(&cfg)?;
            emit_report(&cli.out, "consensus", &report)
        }
        Command::Bench => {
            let rows = scenario::run_bench(&cfg)?;
            emit(&cli.out, "bench.csv", &bench_csv(&rows))
        }
        Command::Analyze => {
            let rows = scenario::analyze(&cfg)?;
            emit(&cli.out, "verdicts.csv", &verdicts_csv(&rows))?;
            emit(
                &cli.out,
                "verdicts.json",
                &serde_json::to_string_pretty(&rows).unwrap(),
            )
        }
    }
}
