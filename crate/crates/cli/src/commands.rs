//! Subcommand implementations. Each returns the process exit code on the
//! happy path; [`CmdError`] carries the usage (2) / fatal (3) distinction.

use std::path::Path;
use std::sync::Mutex;

use rand::rngs::OsRng;

use rvtee_core::bridge::{serve, Endpoint, Listener, SessionConfig, SessionSummary};
use rvtee_core::hsm::{SafeCopy, SimulatedHsm};
use rvtee_core::rvmon::parser::load_spec;
use rvtee_core::seallog::{LogRegistry, SealLogStore};
use rvtee_core::taint::{load_patterns, Scanner};
use rvtee_core::verifier::{verify, VerificationReport};

use crate::config::Config;
use crate::fixtures;
use crate::tamper::{self, TamperKind, TamperOptions};

/// Exit codes: 0 pass/ok, 1 verification failed, 2 usage/config error,
/// 3 fatal runtime.
pub const EXIT_OK: i32 = 0;
pub const EXIT_VERIFICATION_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_FATAL: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CmdError {
    /// Operator or configuration mistake — exit 2.
    #[error("{0}")]
    Usage(String),
    /// Runtime failure the operator cannot fix by editing flags — exit 3.
    #[error("{0}")]
    Fatal(String),
}

impl CmdError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CmdError::Usage(_) => EXIT_USAGE,
            CmdError::Fatal(_) => EXIT_FATAL,
        }
    }
}

fn usage(message: impl Into<String>) -> CmdError {
    CmdError::Usage(message.into())
}

fn load_config(path: &Path) -> Result<Config, CmdError> {
    Config::load(path).map_err(usage)
}

/// Provisions a deployment: keystream device, pristine key copy in the
/// forensic directory, seal log header, log registry, and starter fixtures.
pub fn cmd_init(
    config_path: &Path,
    force: bool,
    key_length: Option<u64>,
    chunk_size: Option<u64>,
) -> Result<i32, CmdError> {
    let mut config = if config_path.exists() {
        load_config(config_path)?
    } else {
        let mut fresh = Config::default();
        fresh.base_dir = config_path
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .map(Path::to_path_buf)
            .unwrap_or_else(|| ".".into());
        fresh
    };
    if let Some(k) = key_length {
        config.store.key_length = k;
    }
    if let Some(c) = chunk_size {
        config.store.chunk_size = c;
    }
    let (key_length, chunk_size) = (config.store.key_length, config.store.chunk_size);
    if chunk_size == 0 || key_length == 0 || key_length % chunk_size != 0 {
        return Err(usage(format!(
            "bad geometry: key length {key_length} must be a positive multiple of \
             chunk size {chunk_size}"
        )));
    }

    let provisioned = [
        config.device_path(),
        config.seal_log_path(),
        config.safe_copy_path(),
        config.registry_path(),
        config.event_log_path(),
        config.verdict_log_path(),
    ];
    let existing: Vec<_> = provisioned.iter().filter(|p| p.exists()).collect();
    if !existing.is_empty() && !force {
        return Err(usage(format!(
            "{} already exists; pass --force to reprovision (this discards the store)",
            existing[0].display()
        )));
    }
    for path in &provisioned {
        if path.exists() {
            std::fs::remove_file(path)
                .map_err(|e| usage(format!("cannot remove {}: {e}", path.display())))?;
        }
    }

    std::fs::create_dir_all(config.state_dir())
        .map_err(|e| usage(format!("cannot create state dir: {e}")))?;
    std::fs::create_dir_all(config.forensic_dir())
        .map_err(|e| usage(format!("cannot create forensic dir: {e}")))?;

    let (hsm, safe_copy) = SimulatedHsm::provision(&mut OsRng, key_length, chunk_size)
        .map_err(|e| usage(format!("provisioning refused: {e}")))?;
    safe_copy
        .write_to(&config.safe_copy_path())
        .map_err(|e| CmdError::Fatal(format!("cannot write safe copy: {e}")))?;

    let mut registry = LogRegistry::new();
    registry.register(config.monitor.event_log_id, config.event_log_path());
    registry.register(config.monitor.verdict_log_id, config.verdict_log_path());
    registry
        .save(&config.registry_path())
        .map_err(|e| CmdError::Fatal(format!("cannot write registry: {e}")))?;

    let mut store = SealLogStore::create(registry, config.seal_log_path(), hsm)
        .map_err(|e| CmdError::Fatal(format!("cannot create seal log: {e}")))?;
    store
        .persist_device_to(config.device_path())
        .map_err(|e| CmdError::Fatal(format!("cannot persist device state: {e}")))?;

    // Starter fixtures and the config itself, where absent.
    if !config_path.exists() {
        config.save(config_path).map_err(CmdError::Fatal)?;
    }
    for (path, content) in [
        (config.property_spec_path(), fixtures::PROPERTIES),
        (config.patterns_path(), fixtures::PATTERNS),
    ] {
        if !path.exists() {
            std::fs::write(&path, content)
                .map_err(|e| CmdError::Fatal(format!("cannot write {}: {e}", path.display())))?;
        }
    }

    println!("initialized deployment at {}", config.base_dir.display());
    println!("  config:        {}", config_path.display());
    println!("  device state:  {}", config.device_path().display());
    println!("  seal log:      {}", config.seal_log_path().display());
    println!("  forensic copy: {}", config.safe_copy_path().display());
    println!(
        "  keystream:     {} octets in chunks of {} ({} appends)",
        key_length,
        chunk_size,
        key_length / chunk_size
    );
    Ok(EXIT_OK)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ReportFormat {
    Text,
    Json,
}

/// Re-authenticates the sealed history. Exit 0 on pass, 1 on any finding.
pub fn cmd_verify(
    config_path: &Path,
    attested_offset: Option<u64>,
    no_attested: bool,
    format: ReportFormat,
) -> Result<i32, CmdError> {
    let config = load_config(config_path)?;
    let registry = LogRegistry::load(&config.registry_path())
        .map_err(|e| usage(format!("cannot load registry: {e}")))?;
    let safe_copy = SafeCopy::read_from(&config.safe_copy_path())
        .map_err(|e| usage(format!("cannot load forensic key copy: {e}")))?;
    if !config.seal_log_path().exists() {
        return Err(usage(format!(
            "seal log {} does not exist",
            config.seal_log_path().display()
        )));
    }
    let attested = if no_attested {
        None
    } else if attested_offset.is_some() {
        attested_offset
    } else if config.device_path().exists() {
        // Operator-side convenience: read the counter off the local device.
        // Forensic verification on another machine passes --attested-offset
        // from the attestation channel instead.
        Some(
            SimulatedHsm::load(&config.device_path())
                .map_err(|e| usage(format!("cannot read device state: {e}")))?
                .attested_key_offset(),
        )
    } else {
        None
    };

    let report = verify(&registry, &config.seal_log_path(), &safe_copy, attested);
    print_report(&report, &safe_copy, format);
    Ok(if report.passed {
        EXIT_OK
    } else {
        EXIT_VERIFICATION_FAILED
    })
}

fn print_report(report: &VerificationReport, safe_copy: &SafeCopy, format: ReportFormat) {
    match format {
        ReportFormat::Text => {
            print!("{}", report.render_text());
            println!(
                "keystream capacity: {} appends of {}-octet chunks",
                safe_copy.key_length() / safe_copy.chunk_size(),
                safe_copy.chunk_size()
            );
        }
        ReportFormat::Json => {
            println!(
                "{}",
                serde_json::to_string_pretty(report).expect("report serializes")
            );
        }
    }
}

/// Runs the bridge: accepts instrumented-application connections, seals and
/// monitors their event streams, answers with commands.
pub fn cmd_monitor(
    config_path: &Path,
    once: bool,
    max_connections: Option<usize>,
) -> Result<i32, CmdError> {
    let config = load_config(config_path)?;
    let registry = LogRegistry::load(&config.registry_path())
        .map_err(|e| usage(format!("cannot load registry (run init first?): {e}")))?;
    let hsm = SimulatedHsm::load(&config.device_path())
        .map_err(|e| usage(format!("cannot load device state (run init first?): {e}")))?;
    let mut store = SealLogStore::open(registry, config.seal_log_path(), hsm)
        .map_err(|e| CmdError::Fatal(format!("store refuses to open: {e}")))?;
    store
        .persist_device_to(config.device_path())
        .map_err(|e| CmdError::Fatal(format!("cannot persist device state: {e}")))?;

    let spec_text = std::fs::read_to_string(config.property_spec_path())
        .map_err(|e| usage(format!("cannot read property spec: {e}")))?;
    let loaded = load_spec(&spec_text).map_err(|e| usage(format!("bad property spec: {e}")))?;
    for warning in &loaded.warnings {
        eprintln!("property spec warning: {warning}");
    }
    let patterns_text = std::fs::read_to_string(config.patterns_path())
        .map_err(|e| usage(format!("cannot read patterns: {e}")))?;
    let patterns = load_patterns(&patterns_text).map_err(|e| usage(format!("bad patterns: {e}")))?;
    let scanner = Scanner::new(patterns, config.taint_config())
        .map_err(|e| usage(format!("bad taint config: {e}")))?;

    let endpoint = Endpoint::parse(&config.bridge.endpoint)
        .map_err(|e| usage(format!("bad endpoint: {e}")))?;
    let listener = Listener::bind(&endpoint)
        .map_err(|e| CmdError::Fatal(format!("cannot listen on {endpoint}: {e}")))?;
    println!("listening on {}", listener.local_endpoint());

    let session_config = SessionConfig {
        event_log_id: config.monitor.event_log_id,
        verdict_log_id: config.monitor.verdict_log_id,
        heartbeat_every: config.heartbeat_every(),
    };
    let limit = if once { Some(1) } else { max_connections };
    let store = Mutex::new(store);
    let summaries = serve(
        &listener,
        &store,
        &loaded.automata,
        Some(&scanner),
        &session_config,
        limit,
    )
    .map_err(|e| CmdError::Fatal(format!("bridge failed: {e}")))?;

    let mut fatal = false;
    for (i, summary) in summaries.iter().enumerate() {
        print_summary(i, summary);
        fatal |= summary.fatal.is_some();
    }
    Ok(if fatal { EXIT_FATAL } else { EXIT_OK })
}

fn print_summary(index: usize, summary: &SessionSummary) {
    println!(
        "session {index}: processed={} sealed={} verdicts={} heartbeats={} \
         taint_matches={} rejected={} seq_gaps={}",
        summary.events_processed,
        summary.events_sealed,
        summary.verdicts,
        summary.heartbeats,
        summary.taint_matches,
        summary.rejected_events,
        summary.seq_gaps,
    );
    if let Some(fatal) = &summary.fatal {
        println!("session {index}: FATAL: {fatal}");
    }
}

/// Applies one drill mutation to the store.
pub fn cmd_tamper(
    config_path: &Path,
    kind: TamperKind,
    options: &TamperOptions,
) -> Result<i32, CmdError> {
    let config = load_config(config_path)?;
    let registry = LogRegistry::load(&config.registry_path())
        .map_err(|e| usage(format!("cannot load registry: {e}")))?;
    let description = tamper::apply(&registry, &config.seal_log_path(), kind, options)
        .map_err(|e| usage(e.to_string()))?;
    println!("{description}");
    println!("the store is now damaged; `verify` must fail");
    Ok(EXIT_OK)
}
