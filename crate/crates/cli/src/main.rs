use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use obake_core::sim::{
    run_session, run_trials, random_template, Direction, SessionConfig, SessionOutcome, Tamper,
    TemplateStore, TrialConfig, Transport,
};
use obake_core::{decode, DerivedKey, FeatureVector, ProtocolParams};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

mod flags;

use flags::{parse_tamper, NoiseSpec, PerDim};

const EXIT_ABORT: u8 = 2;
const EXIT_USAGE: u8 = 3;
const EXIT_INFRA: u8 = 4;

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Infra(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Infra(_) => EXIT_INFRA,
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "obake", version, about = "Biometric-authenticated key exchange simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one session verbosely, printing every frame.
    Demo {
        #[command(flatten)]
        session: SessionArgs,
    },
    /// Run many sessions and print aggregate statistics.
    Trials {
        #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u32).range(1..))]
        trials: u32,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
        /// Run sessions one after another instead of in parallel.
        #[arg(long)]
        serial: bool,
        #[command(flatten)]
        session: SessionArgs,
    },
    /// Generate or inspect template files.
    #[command(subcommand)]
    Template(TemplateCommand),
}

#[derive(Subcommand, Debug)]
enum TemplateCommand {
    /// Write random templates to a file.
    Gen {
        #[arg(long)]
        dim: usize,
        #[arg(long)]
        bits: u32,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        count: usize,
        #[arg(long, env = "OBAKE_SEED")]
        seed: Option<u64>,
    },
    /// Print the templates stored in a file.
    Show {
        file: PathBuf,
        /// Component width used to validate the file.
        #[arg(long, default_value_t = 32)]
        bits: u32,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Table,
    Jsonl,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum TransportArg {
    Inproc,
    Tcp,
}

#[derive(Args, Debug)]
struct SessionArgs {
    #[arg(long, default_value_t = 4)]
    dim: usize,
    #[arg(long, default_value_t = 8)]
    bits: u32,
    /// Power of two, or a comma list with one per dimension.
    #[arg(long, default_value = "8")]
    threshold: PerDim<u32>,
    /// uniform:N, gauss:S or adv:V; values are a scalar or a comma list.
    #[arg(long, default_value = "uniform:0")]
    noise: NoiseSpec,
    #[arg(long, default_value_t = 4)]
    queries_per_round: u16,
    #[arg(long, default_value_t = 16)]
    max_rounds: u16,
    #[arg(long, value_enum, default_value_t = TransportArg::Inproc)]
    transport: TransportArg,
    /// none, flip-tag, corrupt:N or truncate:N.
    #[arg(long, default_value = "none", value_parser = parse_tamper)]
    tamper: Tamper,
    /// Master seed; a random one is drawn and printed when absent.
    #[arg(long, env = "OBAKE_SEED")]
    seed: Option<u64>,
    /// Template file; a random template is used when absent.
    #[arg(long)]
    template: Option<PathBuf>,
    /// Entry of the template file to use; the first one by default.
    #[arg(long, requires = "template")]
    token: Option<String>,
}

struct Resolved {
    params: ProtocolParams,
    noise: obake_core::sim::NoiseKind,
    transport: Transport,
    seed: u64,
    template: Option<FeatureVector>,
}

impl SessionArgs {
    fn resolve(&self) -> Result<Resolved, CliError> {
        let usage = |e: String| CliError::Usage(e);
        let thresholds = self.threshold.expand(self.dim, "threshold").map_err(usage)?;
        let params = ProtocolParams::new(self.dim, self.bits, thresholds)
            .and_then(|p| p.with_queries_per_round(self.queries_per_round))
            .and_then(|p| p.with_max_rounds(self.max_rounds))
            .map_err(|e| CliError::Usage(e.to_string()))?;
        let noise = self.noise.to_kind(self.dim).map_err(usage)?;
        noise.validate(&params).map_err(|e| CliError::Usage(e.to_string()))?;
        let seed = self.seed.unwrap_or_else(|| {
            let seed = rand::random();
            eprintln!("seed: {seed}");
            seed
        });
        let template = match &self.template {
            None => None,
            Some(path) => {
                let store = TemplateStore::load(path, &params).map_err(|e| CliError::Usage(e.to_string()))?;
                let found = match &self.token {
                    Some(id) => store.get(id).cloned(),
                    None => store.iter().next().map(|(_, t)| t.clone()),
                };
                Some(found.ok_or_else(|| {
                    CliError::Usage(format!("no matching template in {}", path.display()))
                })?)
            }
        };
        Ok(Resolved {
            params,
            noise,
            transport: match self.transport {
                TransportArg::Inproc => Transport::InProcess,
                TransportArg::Tcp => Transport::TcpLoopback,
            },
            seed,
            template,
        })
    }
}

/// First 8 bytes of SHA-256 over the key, in hex.
fn fingerprint(key: &DerivedKey) -> String {
    hex::encode(&Sha256::digest(key.as_bytes())[..8])
}

fn demo(args: &SessionArgs) -> Result<u8, CliError> {
    let r = args.resolve()?;
    let template = r.template.unwrap_or_else(|| {
        let mut rng = ChaCha20Rng::seed_from_u64(r.seed);
        random_template(&r.params, &mut rng)
    });
    println!(
        "params: dim={} bits={} thresholds={:?} queries/round={} max_rounds={}",
        r.params.dim(),
        r.params.bits().bits(),
        r.params.thresholds(),
        r.params.max_queries_per_round(),
        r.params.max_rounds()
    );
    println!("template: {:?}", template.components());
    let mut config = SessionConfig::new(r.params.clone(), template, r.noise, r.seed);
    config.transport = r.transport;
    config.tamper = args.tamper;
    config.record_transcript = true;
    let report = run_session(&config).map_err(|e| CliError::Infra(e.to_string()))?;

    for record in &report.transcript {
        let arrow = match record.direction {
            Direction::SystemToToken => "system -> token",
            Direction::TokenToSystem => "token -> system",
        };
        if record.frame.is_empty() {
            println!("{arrow}  (no reply)");
            continue;
        }
        let name = decode(&record.frame, &r.params)
            .map(|m| m.name().to_string())
            .unwrap_or_else(|e| format!("undecodable ({e})"));
        println!("{arrow}  {name:<16} {}", hex::encode(&record.frame));
    }
    println!("rounds: {}  verifiers sent: {}", report.rounds, report.queries_sent);
    match &report.outcome {
        SessionOutcome::KeyEstablished { round, index, system_key, token_key } => {
            println!("outcome: KeyEstablished (round {round}, index {index})");
            println!("system key fingerprint: {}", fingerprint(system_key));
            match token_key {
                Some(k) => println!("token key fingerprint:  {}", fingerprint(k)),
                None => println!("token key fingerprint:  (none)"),
            }
            Ok(if report.outcome.keys_agree() { 0 } else { EXIT_ABORT })
        }
        SessionOutcome::Aborted { reason } => {
            println!("outcome: Abort({reason})");
            Ok(EXIT_ABORT)
        }
    }
}

fn trials(count: u32, format: Format, serial: bool, args: &SessionArgs) -> Result<u8, CliError> {
    let r = args.resolve()?;
    let mut config = TrialConfig::new(r.params, r.noise, count, r.seed);
    config.transport = r.transport;
    config.tamper = args.tamper;
    config.template = r.template;
    config.parallel = !serial;
    let report = run_trials(&config);
    match format {
        Format::Table => print!("{}", report.to_table()),
        Format::Jsonl => print!("{}", report.to_jsonl()),
    }
    Ok(if report.infrastructure_errors > 0 { EXIT_INFRA } else { 0 })
}

fn template(cmd: &TemplateCommand) -> Result<u8, CliError> {
    match cmd {
        TemplateCommand::Gen { dim, bits, out, count, seed } => {
            // Thresholds play no part in a template; the smallest one validates.
            let params = ProtocolParams::uniform(*dim, *bits, 1).map_err(|e| CliError::Usage(e.to_string()))?;
            let seed = seed.unwrap_or_else(rand::random);
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let mut store = TemplateStore::new();
            for i in 0..*count {
                store.insert(format!("token-{i}"), random_template(&params, &mut rng));
            }
            store.save(out).map_err(|e| CliError::Infra(e.to_string()))?;
            println!("wrote {count} template(s) to {}", out.display());
        }
        TemplateCommand::Show { file, bits } => {
            let text = std::fs::read_to_string(file).map_err(|e| CliError::Infra(e.to_string()))?;
            let dim = text
                .lines()
                .map(|l| l.split('#').next().unwrap_or("").trim())
                .find(|l| !l.is_empty())
                .map(|l| l.split_whitespace().count())
                .ok_or_else(|| CliError::Usage(format!("{} holds no templates", file.display())))?;
            let params = ProtocolParams::uniform(dim, *bits, 1).map_err(|e| CliError::Usage(e.to_string()))?;
            let store = TemplateStore::parse(&text, &params).map_err(|e| CliError::Usage(e.to_string()))?;
            for (id, t) in store.iter() {
                println!("{id}: {:?}", t.components());
            }
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    let result = match &cli.command {
        Command::Demo { session } => demo(session),
        Command::Trials { trials: n, format, serial, session } => trials(*n, *format, *serial, session),
        Command::Template(cmd) => template(cmd),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
