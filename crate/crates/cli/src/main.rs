//! `polsynth`: synthesize, verify and serialize security policies from a
//! JSON scenario.
//!
//! Exit codes: 0 success, 2 verification failure, 3 scenario error,
//! 4 serialization error.

mod output;

use std::collections::BTreeSet;
use std::fs;
use std::net::{Ipv4Addr, SocketAddr};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use polsynth_core::backends::Format;
use polsynth_core::pipeline::{run_text, PipelineError, PipelineOptions, PipelineResult, Stage};

const EXIT_VERIFICATION: u8 = 2;
const EXIT_SCENARIO: u8 = 3;
const EXIT_SERIALIZATION: u8 = 4;

#[derive(Parser)]
#[command(name = "polsynth", version, about = "Security policy synthesis from host-attribute invariants")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the whole pipeline and write device configurations.
    Synth {
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated list of iptables, openflow, dot, or `all`.
        #[arg(long, value_parser = parse_formats)]
        format: Option<BTreeSet<Format>>,
        /// Write configurations even if verification fails.
        #[arg(long)]
        force: bool,
    },
    /// Construct, refine and verify the policy.
    Verify { scenario: PathBuf },
    /// Compute the stateful policy.
    Stateful { scenario: PathBuf },
    /// Print the full pipeline report.
    Report {
        scenario: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Start the HTTP session service.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value_t = Ipv4Addr::LOCALHOST)]
        bind: Ipv4Addr,
        /// Persist sessions as JSON snapshots in this directory.
        #[arg(long)]
        snapshot_dir: Option<PathBuf>,
    },
}

fn parse_formats(s: &str) -> Result<BTreeSet<Format>, String> {
    let mut out = BTreeSet::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        if part == "all" {
            out.extend(Format::ALL);
        } else {
            out.insert(part.parse::<Format>()?);
        }
    }
    if out.is_empty() {
        return Err("no formats given".into());
    }
    Ok(out)
}

fn exit_code(e: &PipelineError) -> u8 {
    match e.stage() {
        Stage::Serialize => EXIT_SERIALIZATION,
        _ => EXIT_SCENARIO,
    }
}

fn report_error(e: &PipelineError) -> ExitCode {
    match e.path() {
        Some(p) => eprintln!("error [{}] at {p}: {e}", e.stage()),
        None => eprintln!("error [{}]: {e}", e.stage()),
    }
    ExitCode::from(exit_code(e))
}

fn run(path: &Path, opts: &PipelineOptions) -> Result<PipelineResult, ExitCode> {
    let text = fs::read_to_string(path).map_err(|e| {
        eprintln!("error [parse]: cannot read {}: {e}", path.display());
        ExitCode::from(EXIT_SCENARIO)
    })?;
    run_text(&text, opts).map(|(_, r)| r).map_err(|e| report_error(&e))
}

/// Options for commands that only inspect results.
fn no_output() -> PipelineOptions {
    PipelineOptions {
        force: false,
        formats: Some(BTreeSet::new()),
    }
}

fn verdict(r: &PipelineResult) -> ExitCode {
    if r.verified() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_VERIFICATION)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Synth {
            scenario,
            out,
            format,
            force,
        } => {
            let opts = PipelineOptions { force, formats: format };
            let r = match run(&scenario, &opts) {
                Ok(r) => r,
                Err(code) => return code,
            };
            print!("{}", output::summary(&r));
            if r.withheld {
                eprintln!("verification failed; no configurations written (use --force to override)");
                return ExitCode::from(EXIT_VERIFICATION);
            }
            if let Err(e) = fs::create_dir_all(&out) {
                eprintln!("error [serialize]: cannot create {}: {e}", out.display());
                return ExitCode::from(EXIT_SERIALIZATION);
            }
            for (format, text) in &r.configs {
                let file = out.join(format.file_name());
                if let Err(e) = fs::write(&file, text) {
                    eprintln!("error [serialize]: cannot write {}: {e}", file.display());
                    return ExitCode::from(EXIT_SERIALIZATION);
                }
                println!("wrote {}", file.display());
            }
            if !r.verified() {
                eprintln!("WARNING: configurations were forced from a policy that fails verification");
            }
            verdict(&r)
        }
        Command::Verify { scenario } => match run(&scenario, &no_output()) {
            Ok(r) => {
                print!("{}", output::verification(&r));
                verdict(&r)
            }
            Err(code) => code,
        },
        Command::Stateful { scenario } => match run(&scenario, &no_output()) {
            Ok(r) => {
                print!("{}", output::stateful(&r));
                verdict(&r)
            }
            Err(code) => code,
        },
        Command::Report { scenario, json } => match run(&scenario, &no_output()) {
            Ok(r) => {
                if json {
                    println!("{}", serde_json::to_string_pretty(&r.to_json()).expect("JSON value"));
                } else {
                    print!("{}", output::summary(&r));
                    print!("{}", output::verification(&r));
                    print!("{}", output::stateful(&r));
                }
                verdict(&r)
            }
            Err(code) => code,
        },
        Command::Serve {
            port,
            bind,
            snapshot_dir,
        } => {
            let addr = SocketAddr::from((bind, port));
            let rt = match tokio::runtime::Runtime::new() {
                Ok(rt) => rt,
                Err(e) => {
                    eprintln!("error: cannot start runtime: {e}");
                    return ExitCode::FAILURE;
                }
            };
            eprintln!("listening on http://{addr}");
            match rt.block_on(polsynth_service::serve(addr, snapshot_dir)) {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::FAILURE
                }
            }
        }
    }
}
