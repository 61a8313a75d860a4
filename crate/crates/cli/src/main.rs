use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use rvtee_cli::bench::{self, BenchOptions};
use rvtee_cli::commands::{self, ReportFormat, EXIT_FATAL};
use rvtee_cli::tamper::{FieldName, TamperKind, TamperOptions};

/// Tamper-evident runtime-verification toolkit.
#[derive(Parser)]
#[command(name = "rvtee", version, about, max_term_width = 100)]
struct Cli {
    /// Path to the deployment config (created by `init` if absent).
    #[arg(long, global = true, default_value = "rvtee.toml")]
    config: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Provision a deployment: keystream device, forensic key copy, seal log.
    Init {
        /// Discard an existing deployment and reprovision.
        #[arg(long)]
        force: bool,
        /// Keystream length in octets (default from config, 2 MiB).
        #[arg(long)]
        key_length: Option<u64>,
        /// Burn chunk size in octets (default from config, 32).
        #[arg(long)]
        chunk_size: Option<u64>,
    },
    /// Run the bridge: seal and monitor instrumented-application events.
    Monitor {
        /// Serve exactly one connection, then exit.
        #[arg(long)]
        once: bool,
        /// Serve at most this many connections, then exit.
        #[arg(long, conflicts_with = "once")]
        max_connections: Option<usize>,
    },
    /// Re-authenticate the sealed history against the forensic key copy.
    Verify {
        /// Attested key offset from the attestation channel.
        #[arg(long, conflicts_with = "no_attested")]
        attested_offset: Option<u64>,
        /// Skip the attested-counter check (truncation becomes a warning).
        #[arg(long)]
        no_attested: bool,
        /// Report format.
        #[arg(long, value_enum, default_value = "text")]
        format: ReportFormat,
    },
    /// Damage the store on purpose so `verify` can be drilled.
    Tamper {
        /// What to damage.
        #[arg(value_enum)]
        kind: TamperKind,
        /// Seed for reproducible drills.
        #[arg(long)]
        seed: Option<u64>,
        /// Target log id (flip-byte picks one otherwise).
        #[arg(long)]
        log_id: Option<u64>,
        /// Byte offset (flip-byte) or new length (truncate-log).
        #[arg(long)]
        offset: Option<u64>,
        /// Record index (drop-record, swap-records, edit-field).
        #[arg(long)]
        record: Option<u64>,
        /// Second record index (swap-records).
        #[arg(long)]
        record2: Option<u64>,
        /// Record field to edit (edit-field).
        #[arg(long, value_enum)]
        field: Option<FieldName>,
    },
    /// Measure end-to-end instrumentation overhead on a scripted workload.
    Bench {
        /// Timed runs per scenario.
        #[arg(long, default_value_t = 10)]
        runs: u32,
        /// Artificial think-time between scripted messages, in milliseconds.
        #[arg(long, default_value_t = 5)]
        pause_ms: u64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Init {
            force,
            key_length,
            chunk_size,
        } => commands::cmd_init(&cli.config, force, key_length, chunk_size),
        Command::Monitor {
            once,
            max_connections,
        } => commands::cmd_monitor(&cli.config, once, max_connections),
        Command::Verify {
            attested_offset,
            no_attested,
            format,
        } => commands::cmd_verify(&cli.config, attested_offset, no_attested, format),
        Command::Tamper {
            kind,
            seed,
            log_id,
            offset,
            record,
            record2,
            field,
        } => commands::cmd_tamper(
            &cli.config,
            kind,
            &TamperOptions {
                seed,
                log_id,
                offset,
                record,
                record2,
                field,
            },
        ),
        Command::Bench { runs, pause_ms } => {
            match bench::run(&BenchOptions {
                runs,
                pause_ms,
                ..BenchOptions::default()
            }) {
                Ok(report) => {
                    print!("{}", report.render_table());
                    Ok(commands::EXIT_OK)
                }
                Err(e) => {
                    eprintln!("bench failed: {e}");
                    Ok(EXIT_FATAL)
                }
            }
        }
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
