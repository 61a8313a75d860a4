//! Out-of-process event ingestion.
//!
//! Instrumented applications stream boundary events over a byte-oriented
//! connection (TCP or a local socket), one structured text object per
//! newline-terminated line. The bridge validates and orders each line, seals
//! the raw line into the event log — so the event history itself is
//! tamper-evident — then feeds the decoded event to the property monitor and,
//! for outbound payloads, the taint scanner. Commands (pause / resume / flag)
//! flow back to the application on the same connection.
//!
//! The seal-before-process invariant is load-bearing: an event influences
//! monitor state only if its raw line was first durably sealed. If sealing
//! fails — keystream exhausted, storage fault — the session halts with a
//! fatal summary entry rather than continuing to observe unsealed events.

use std::io::{self, BufRead, BufReader, Read, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream};
use std::os::unix::net::{UnixListener, UnixStream};
use std::path::PathBuf;
use std::sync::Mutex;
use std::thread;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::rvmon::{Boundary, Direction, Event, Monitor, PropertyAutomaton, VerdictKind};
use crate::seallog::{read_line_capped, SealLogStore};
use crate::taint::Scanner;

/// Hard cap on one wire line, terminator included.
pub const MAX_LINE_LEN: usize = 1024 * 1024;

#[derive(Debug, thiserror::Error)]
pub enum BridgeError {
    #[error("malformed event: {0}")]
    MalformedEvent(String),
    #[error("line exceeds {MAX_LINE_LEN} octets")]
    OversizeLine,
    #[error("malformed command: {0}")]
    MalformedCommand(String),
    #[error("invalid endpoint `{0}`: expected host:port, a socket path, or unix:<path>")]
    InvalidEndpoint(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// On-wire shape of one event line. Field order is the canonical encoding.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireEventRepr {
    seq: u64,
    ts: u64,
    boundary: Boundary,
    channel: String,
    dir: Direction,
    payload_b64: String,
}

/// Parses one newline-terminated wire line into an [`Event`].
pub fn decode_wire(line: &[u8]) -> Result<Event, BridgeError> {
    if line.len() > MAX_LINE_LEN {
        return Err(BridgeError::OversizeLine);
    }
    let repr: WireEventRepr = serde_json::from_slice(line)
        .map_err(|e| BridgeError::MalformedEvent(e.to_string()))?;
    let payload = BASE64
        .decode(repr.payload_b64.as_bytes())
        .map_err(|e| BridgeError::MalformedEvent(format!("bad payload_b64: {e}")))?;
    Ok(Event {
        seq: repr.seq,
        timestamp_ns: repr.ts,
        boundary: repr.boundary,
        channel: repr.channel,
        direction: repr.dir,
        payload,
    })
}

/// Canonical newline-terminated encoding of an event; `decode_wire` of the
/// result reproduces the event exactly.
pub fn encode_wire(event: &Event) -> String {
    let repr = WireEventRepr {
        seq: event.seq,
        ts: event.timestamp_ns,
        boundary: event.boundary,
        channel: event.channel.clone(),
        dir: event.direction,
        payload_b64: BASE64.encode(&event.payload),
    };
    let mut line = serde_json::to_string(&repr).expect("wire repr serializes");
    line.push('\n');
    line
}

/// Bridge → application control messages.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Command {
    Pause,
    Resume,
    Flag { property_id: String },
}

pub fn encode_command(command: &Command) -> String {
    let mut line = serde_json::to_string(command).expect("command serializes");
    line.push('\n');
    line
}

pub fn decode_command(line: &[u8]) -> Result<Command, BridgeError> {
    serde_json::from_slice(line).map_err(|e| BridgeError::MalformedCommand(e.to_string()))
}

/// Per-session wiring shared by [`run_session`] and [`serve`].
#[derive(Debug, Clone, Copy)]
pub struct SessionConfig {
    /// Log id the raw event lines are sealed into.
    pub event_log_id: u64,
    /// Log id monitor verdicts are sealed into (per-session monitors).
    pub verdict_log_id: u64,
    /// Emit heartbeat verdicts every N accepted events; `None` disables.
    pub heartbeat_every: Option<u64>,
}

/// Outcome counters for one connection.
#[derive(Debug, Default, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionSummary {
    /// Events that completed the pipeline: decoded, sealed, monitor-accepted.
    pub events_processed: u64,
    /// Raw lines sealed into the event log (includes monitor-rejected ones).
    pub events_sealed: u64,
    /// Violation / recovery verdicts sealed by the monitor.
    pub verdicts: u64,
    /// Heartbeat verdicts sealed by cadence.
    pub heartbeats: u64,
    /// Taint matches across outbound payloads.
    pub taint_matches: u64,
    /// Lines dropped: oversize, malformed, or out-of-order.
    pub rejected_events: u64,
    /// Forward jumps in the seq numbering (arrival order is never changed).
    pub seq_gaps: u64,
    /// Set when the session halted fail-closed instead of ending cleanly.
    pub fatal: Option<String>,
}

/// Discards reader input up to and including the next newline, so one
/// oversize line cannot desynchronize the framing of the ones after it.
fn drain_to_newline(reader: &mut impl BufRead) -> io::Result<()> {
    loop {
        let buf = reader.fill_buf()?;
        if buf.is_empty() {
            return Ok(());
        }
        if let Some(pos) = buf.iter().position(|&b| b == b'\n') {
            reader.consume(pos + 1);
            return Ok(());
        }
        let n = buf.len();
        reader.consume(n);
    }
}

/// Runs one ingestion session to completion.
///
/// Per line: decode → seal the raw line → feed the monitor → scan outbound
/// payloads → emit any commands. Connection errors end the session cleanly
/// with the summary so far; a sealing failure (keystream exhausted, storage
/// fault, monitor halt) sets `fatal` and stops — fail closed — without the
/// failing event ever reaching the monitor.
pub fn run_session<R: BufRead, W: Write>(
    mut reader: R,
    writer: &mut W,
    store: &Mutex<SealLogStore>,
    monitor: &mut Monitor,
    scanner: Option<&Scanner>,
    config: &SessionConfig,
) -> SessionSummary {
    let mut summary = SessionSummary::default();
    loop {
        let (line, overflowed) = match read_line_capped(&mut reader, MAX_LINE_LEN) {
            Ok(Some(item)) => item,
            Ok(None) => break,
            Err(_) => break, // connection error: end cleanly
        };
        if overflowed {
            summary.rejected_events += 1;
            if drain_to_newline(&mut reader).is_err() {
                break;
            }
            continue;
        }
        let event = match decode_wire(&line) {
            Ok(event) => event,
            Err(_) => {
                // Malformed input is dropped before sealing: the event log
                // holds only lines the decoder vouched for.
                summary.rejected_events += 1;
                continue;
            }
        };
        if let Some(last) = monitor.last_seq() {
            if event.seq > last + 1 {
                summary.seq_gaps += 1;
            }
        }

        let mut guard = match store.lock() {
            Ok(guard) => guard,
            Err(_) => {
                summary.fatal = Some("seal store mutex poisoned".into());
                break;
            }
        };
        if let Err(e) = guard.append_sealed(config.event_log_id, &line) {
            summary.fatal = Some(if e.is_key_exhausted() {
                format!("keystream exhausted; halting fail-closed: {e}")
            } else {
                format!("event sealing failed; halting fail-closed: {e}")
            });
            break;
        }
        summary.events_sealed += 1;

        let verdicts = match monitor.process(&mut guard, &event) {
            Ok(verdicts) => verdicts,
            Err(e) if e.is_rejection() => {
                summary.rejected_events += 1;
                continue;
            }
            Err(e) => {
                summary.fatal = Some(format!("verdict sealing failed; halting fail-closed: {e}"));
                break;
            }
        };
        summary.events_processed += 1;

        if let Some(every) = config.heartbeat_every {
            if every > 0 && summary.events_processed % every == 0 {
                match monitor.heartbeat(&mut guard) {
                    Ok(beats) => summary.heartbeats += beats.len() as u64,
                    Err(e) => {
                        summary.fatal =
                            Some(format!("heartbeat sealing failed; halting fail-closed: {e}"));
                        break;
                    }
                }
            }
        }
        drop(guard);

        if event.direction == Direction::Out {
            if let Some(scanner) = scanner {
                summary.taint_matches += scanner.scan(&event.payload).len() as u64;
            }
        }

        summary.verdicts += verdicts.len() as u64;
        for verdict in &verdicts {
            if verdict.kind == VerdictKind::Violation {
                let command = Command::Flag {
                    property_id: verdict.property_id.clone(),
                };
                if writer.write_all(encode_command(&command).as_bytes()).is_err()
                    || writer.flush().is_err()
                {
                    return summary; // connection error: end cleanly
                }
            }
        }
    }
    summary
}

/// Where the bridge listens or an instrumented application connects.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Endpoint {
    /// `host:port`.
    Tcp(String),
    /// Filesystem socket path.
    Unix(PathBuf),
}

impl Endpoint {
    /// `unix:<path>` or a path starting with `/` or `./` selects a local
    /// socket; anything of the shape `host:port` selects TCP.
    pub fn parse(s: &str) -> Result<Endpoint, BridgeError> {
        if let Some(path) = s.strip_prefix("unix:") {
            if path.is_empty() {
                return Err(BridgeError::InvalidEndpoint(s.into()));
            }
            return Ok(Endpoint::Unix(PathBuf::from(path)));
        }
        if s.starts_with('/') || s.starts_with("./") {
            return Ok(Endpoint::Unix(PathBuf::from(s)));
        }
        match s.rsplit_once(':') {
            Some((host, port)) if !host.is_empty() && port.parse::<u16>().is_ok() => {
                Ok(Endpoint::Tcp(s.to_string()))
            }
            _ => Err(BridgeError::InvalidEndpoint(s.into())),
        }
    }
}

impl std::fmt::Display for Endpoint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Endpoint::Tcp(addr) => write!(f, "{addr}"),
            Endpoint::Unix(path) => write!(f, "unix:{}", path.display()),
        }
    }
}

/// One client connection, either transport.
#[derive(Debug)]
pub enum Stream {
    Tcp(TcpStream),
    Unix(UnixStream),
}

impl Stream {
    pub fn connect(endpoint: &Endpoint) -> io::Result<Stream> {
        match endpoint {
            Endpoint::Tcp(addr) => TcpStream::connect(addr).map(Stream::Tcp),
            Endpoint::Unix(path) => UnixStream::connect(path).map(Stream::Unix),
        }
    }

    pub fn try_clone(&self) -> io::Result<Stream> {
        match self {
            Stream::Tcp(s) => s.try_clone().map(Stream::Tcp),
            Stream::Unix(s) => s.try_clone().map(Stream::Unix),
        }
    }

    /// Signals end-of-events to the peer while keeping the read side open
    /// for trailing commands.
    pub fn shutdown_write(&self) -> io::Result<()> {
        match self {
            Stream::Tcp(s) => s.shutdown(Shutdown::Write),
            Stream::Unix(s) => s.shutdown(Shutdown::Write),
        }
    }
}

impl Read for Stream {
    fn read(&mut self, buf: &mut [u8]) -> io::Result<usize> {
        match self {
            Stream::Tcp(s) => s.read(buf),
            Stream::Unix(s) => s.read(buf),
        }
    }
}

impl Write for Stream {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        match self {
            Stream::Tcp(s) => s.write(buf),
            Stream::Unix(s) => s.write(buf),
        }
    }

    fn flush(&mut self) -> io::Result<()> {
        match self {
            Stream::Tcp(s) => s.flush(),
            Stream::Unix(s) => s.flush(),
        }
    }
}

/// A bound listening socket. Binding a TCP endpoint with port 0 resolves to
/// a real port, visible through [`Listener::local_endpoint`].
#[derive(Debug)]
pub enum Listener {
    Tcp(TcpListener),
    Unix { listener: UnixListener, path: PathBuf },
}

impl Listener {
    pub fn bind(endpoint: &Endpoint) -> Result<Listener, BridgeError> {
        match endpoint {
            Endpoint::Tcp(addr) => Ok(Listener::Tcp(TcpListener::bind(addr)?)),
            Endpoint::Unix(path) => {
                // A stale socket file from a previous run would refuse the
                // bind; a live listener still errors (the file reappears).
                let _ = std::fs::remove_file(path);
                Ok(Listener::Unix {
                    listener: UnixListener::bind(path)?,
                    path: path.clone(),
                })
            }
        }
    }

    pub fn local_endpoint(&self) -> Endpoint {
        match self {
            Listener::Tcp(l) => Endpoint::Tcp(
                l.local_addr()
                    .map(|a: SocketAddr| a.to_string())
                    .unwrap_or_default(),
            ),
            Listener::Unix { path, .. } => Endpoint::Unix(path.clone()),
        }
    }

    pub fn accept(&self) -> io::Result<Stream> {
        match self {
            Listener::Tcp(l) => l.accept().map(|(s, _)| Stream::Tcp(s)),
            Listener::Unix { listener, .. } => listener.accept().map(|(s, _)| Stream::Unix(s)),
        }
    }
}

/// Accepts connections and runs one session per connection, each with its
/// own monitor over the shared automata; all seal appends funnel through the
/// single-writer store. With `max_connections = Some(n)` the loop returns
/// after `n` sessions finish; `None` serves until accept fails.
pub fn serve(
    listener: &Listener,
    store: &Mutex<SealLogStore>,
    automata: &[PropertyAutomaton],
    scanner: Option<&Scanner>,
    config: &SessionConfig,
    max_connections: Option<usize>,
) -> Result<Vec<SessionSummary>, BridgeError> {
    let summaries = Mutex::new(Vec::new());
    thread::scope(|scope| -> Result<(), BridgeError> {
        let mut accepted = 0usize;
        loop {
            if let Some(max) = max_connections {
                if accepted >= max {
                    break;
                }
            }
            let stream = listener.accept()?;
            accepted += 1;
            let summaries = &summaries;
            scope.spawn(move || {
                let reader = match stream.try_clone() {
                    Ok(clone) => BufReader::new(clone),
                    Err(_) => return,
                };
                let mut writer = stream;
                let mut monitor = Monitor::new(automata.to_vec(), config.verdict_log_id);
                let summary =
                    run_session(reader, &mut writer, store, &mut monitor, scanner, config);
                summaries.lock().expect("summary collection").push(summary);
            });
        }
        Ok(())
    })?;
    Ok(summaries.into_inner().expect("summary collection"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hsm::SimulatedHsm;
    use crate::rvmon::{Guard, Transition};
    use crate::seallog::LogRegistry;
    use crate::taint::{SensitivePattern, TaintConfig};
    use rand::rngs::OsRng;
    use rand::{Rng, RngCore, SeedableRng};
    use rand_chacha::ChaCha20Rng;
    use std::path::Path;

    const EVENT_LOG: u64 = 1;
    const VERDICT_LOG: u64 = 2;

    fn session_config() -> SessionConfig {
        SessionConfig {
            event_log_id: EVENT_LOG,
            verdict_log_id: VERDICT_LOG,
            heartbeat_every: None,
        }
    }

    fn store_with_capacity(dir: &Path, seals: u64) -> Mutex<SealLogStore> {
        let (hsm, _copy) = SimulatedHsm::provision(&mut OsRng, seals * 32, 32).unwrap();
        let mut registry = LogRegistry::new();
        registry.register(EVENT_LOG, dir.join("events.log"));
        registry.register(VERDICT_LOG, dir.join("verdicts.log"));
        Mutex::new(SealLogStore::create(registry, dir.join("seal.log"), hsm).unwrap())
    }

    /// Benign events self-loop on s0; any `panic` channel event trips sV.
    fn tripwire_automaton() -> PropertyAutomaton {
        PropertyAutomaton {
            id: "tripwire".into(),
            states: vec!["s0".into(), "sV".into()],
            initial: 0,
            violation: vec![false, true],
            transitions: vec![Transition {
                from: 0,
                to: 1,
                guard: Guard {
                    boundary: None,
                    channel: Some("panic".into()),
                    direction: None,
                    payload: None,
                },
            }],
        }
    }

    fn event(seq: u64, channel: &str, dir: Direction, payload: &[u8]) -> Event {
        Event {
            seq,
            timestamp_ns: seq * 1_000,
            boundary: Boundary::RaRee,
            channel: channel.into(),
            direction: dir,
            payload: payload.to_vec(),
        }
    }

    #[test]
    fn decode_wire_minimal_event() {
        let line =
            br#"{"seq":1,"ts":0,"boundary":"ra_ree","channel":"send","dir":"out","payload_b64":""}"#;
        let event = decode_wire(line).unwrap();
        assert_eq!(event.seq, 1);
        assert_eq!(event.boundary, Boundary::RaRee);
        assert_eq!(event.channel, "send");
        assert_eq!(event.direction, Direction::Out);
        assert!(event.payload.is_empty());
    }

    #[test]
    fn decode_wire_rejects_bad_lines() {
        let missing_seq =
            br#"{"ts":0,"boundary":"ra_ree","channel":"c","dir":"out","payload_b64":""}"#;
        assert!(matches!(
            decode_wire(missing_seq),
            Err(BridgeError::MalformedEvent(_))
        ));
        let unknown_key = br#"{"seq":1,"ts":0,"boundary":"ra_ree","channel":"c","dir":"out","payload_b64":"","extra":1}"#;
        assert!(matches!(
            decode_wire(unknown_key),
            Err(BridgeError::MalformedEvent(_))
        ));
        let bad_b64 =
            br#"{"seq":1,"ts":0,"boundary":"ra_ree","channel":"c","dir":"out","payload_b64":"@@"}"#;
        assert!(matches!(
            decode_wire(bad_b64),
            Err(BridgeError::MalformedEvent(_))
        ));
        assert!(matches!(
            decode_wire(b"not json at all"),
            Err(BridgeError::MalformedEvent(_))
        ));
        let long = vec![b'x'; MAX_LINE_LEN + 1];
        assert!(matches!(decode_wire(&long), Err(BridgeError::OversizeLine)));
    }

    #[test]
    fn wire_round_trip_is_canonical_over_random_events() {
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        for _ in 0..10_000 {
            let payload_len = (rng.next_u32() % 64) as usize;
            let mut payload = vec![0u8; payload_len];
            rng.fill_bytes(&mut payload);
            let event = Event {
                seq: rng.next_u64(),
                timestamp_ns: rng.next_u64(),
                boundary: if rng.gen::<bool>() {
                    Boundary::RaTee
                } else {
                    Boundary::RaRee
                },
                channel: format!("chan-{}", rng.next_u32() % 1000),
                direction: if rng.gen::<bool>() {
                    Direction::In
                } else {
                    Direction::Out
                },
                payload,
            };
            let line = encode_wire(&event);
            let decoded = decode_wire(line.as_bytes()).unwrap();
            assert_eq!(decoded, event);
            assert_eq!(encode_wire(&decoded), line);
        }
    }

    #[test]
    fn decode_normalizes_key_order_and_whitespace() {
        let scrambled = br#" { "payload_b64" : "aGk=" , "dir" : "in" , "channel" : "c" , "boundary" : "ra_tee" , "ts" : 9 , "seq" : 4 } "#;
        let event = decode_wire(scrambled).unwrap();
        assert_eq!(event.payload, b"hi");
        assert_eq!(
            encode_wire(&event),
            "{\"seq\":4,\"ts\":9,\"boundary\":\"ra_tee\",\"channel\":\"c\",\"dir\":\"in\",\"payload_b64\":\"aGk=\"}\n"
        );
    }

    #[test]
    fn command_encoding() {
        for command in [
            Command::Pause,
            Command::Resume,
            Command::Flag {
                property_id: "tripwire".into(),
            },
        ] {
            let line = encode_command(&command);
            assert!(line.ends_with('\n'));
            assert_eq!(decode_command(line.as_bytes()).unwrap(), command);
        }
        assert_eq!(
            encode_command(&Command::Flag {
                property_id: "p".into()
            }),
            "{\"kind\":\"flag\",\"property_id\":\"p\"}\n"
        );
        assert!(matches!(
            decode_command(b"{\"kind\":\"explode\"}"),
            Err(BridgeError::MalformedCommand(_))
        ));
    }

    #[test]
    fn endpoint_parsing() {
        assert_eq!(
            Endpoint::parse("127.0.0.1:7070").unwrap(),
            Endpoint::Tcp("127.0.0.1:7070".into())
        );
        assert_eq!(
            Endpoint::parse("/run/rv.sock").unwrap(),
            Endpoint::Unix(PathBuf::from("/run/rv.sock"))
        );
        assert_eq!(
            Endpoint::parse("unix:rel/rv.sock").unwrap(),
            Endpoint::Unix(PathBuf::from("rel/rv.sock"))
        );
        assert!(Endpoint::parse("nonsense").is_err());
        assert!(Endpoint::parse("host:notaport").is_err());
        assert!(Endpoint::parse("unix:").is_err());
    }

    #[test]
    fn empty_session_summarizes_to_zeros() {
        let dir = tempfile::tempdir().unwrap();
        let store = store_with_capacity(dir.path(), 16);
        let mut monitor = Monitor::new(vec![tripwire_automaton()], VERDICT_LOG);
        let mut out = Vec::new();
        let summary = run_session(
            io::Cursor::new(Vec::new()),
            &mut out,
            &store,
            &mut monitor,
            None,
            &session_config(),
        );
        assert_eq!(summary, SessionSummary::default());
        assert!(out.is_empty());
    }

    #[test]
    fn benign_events_are_sealed_and_produce_no_verdicts() {
        let dir = tempfile::tempdir().unwrap();
        let store = store_with_capacity(dir.path(), 256);
        let mut monitor = Monitor::new(vec![tripwire_automaton()], VERDICT_LOG);
        let mut input = String::new();
        for seq in 1..=100 {
            input.push_str(&encode_wire(&event(seq, "send", Direction::Out, b"ok")));
        }
        let mut out = Vec::new();
        let summary = run_session(
            io::Cursor::new(input.into_bytes()),
            &mut out,
            &store,
            &mut monitor,
            None,
            &session_config(),
        );
        assert_eq!(summary.events_processed, 100);
        assert_eq!(summary.events_sealed, 100);
        assert_eq!(summary.verdicts, 0);
        assert_eq!(summary.fatal, None);
        assert_eq!(store.lock().unwrap().records_written(), 100);
        assert!(out.is_empty());
    }

    #[test]
    fn violation_mid_session_emits_flag_command() {
        let dir = tempfile::tempdir().unwrap();
        let store = store_with_capacity(dir.path(), 256);
        let mut monitor = Monitor::new(vec![tripwire_automaton()], VERDICT_LOG);
        let mut input = String::new();
        for seq in 1..=100 {
            let channel = if seq == 50 { "panic" } else { "send" };
            input.push_str(&encode_wire(&event(seq, channel, Direction::Out, b"x")));
        }
        let mut out = Vec::new();
        let summary = run_session(
            io::Cursor::new(input.into_bytes()),
            &mut out,
            &store,
            &mut monitor,
            None,
            &session_config(),
        );
        assert_eq!(summary.verdicts, 1);
        assert_eq!(summary.events_processed, 100);
        let commands: Vec<Command> = out
            .split(|&b| b == b'\n')
            .filter(|l| !l.is_empty())
            .map(|l| decode_command(l).unwrap())
            .collect();
        assert_eq!(
            commands,
            vec![Command::Flag {
                property_id: "tripwire".into()
            }]
        );
        // 100 event seals + 1 verdict seal.
        assert_eq!(store.lock().unwrap().records_written(), 101);
    }

    #[test]
    fn malformed_lines_are_rejected_without_sealing() {
        let dir = tempfile::tempdir().unwrap();
        let store = store_with_capacity(dir.path(), 64);
        let mut monitor = Monitor::new(vec![tripwire_automaton()], VERDICT_LOG);
        let mut input = encode_wire(&event(1, "send", Direction::In, b"a"));
        input.push_str("this is not an event\n");
        input.push_str(&encode_wire(&event(2, "send", Direction::In, b"b")));
        let mut out = Vec::new();
        let summary = run_session(
            io::Cursor::new(input.into_bytes()),
            &mut out,
            &store,
            &mut monitor,
            None,
            &session_config(),
        );
        assert_eq!(summary.events_processed, 2);
        assert_eq!(summary.rejected_events, 1);
        assert_eq!(summary.events_sealed, 2);
        assert_eq!(store.lock().unwrap().records_written(), 2);
    }

    #[test]
    fn oversize_line_is_dropped_and_framing_resyncs() {
        let dir = tempfile::tempdir().unwrap();
        let store = store_with_capacity(dir.path(), 64);
        let mut monitor = Monitor::new(vec![tripwire_automaton()], VERDICT_LOG);
        let mut input = encode_wire(&event(1, "send", Direction::In, b"a")).into_bytes();
        input.extend(vec![b'x'; 2 * MAX_LINE_LEN]);
        input.push(b'\n');
        input.extend(encode_wire(&event(2, "send", Direction::In, b"b")).into_bytes());
        let mut out = Vec::new();
        let summary = run_session(
            io::Cursor::new(input),
            &mut out,
            &store,
            &mut monitor,
            None,
            &session_config(),
        );
        assert_eq!(summary.events_processed, 2);
        assert_eq!(summary.rejected_events, 1);
        assert_eq!(monitor.last_seq(), Some(2));
    }

    #[test]
    fn gaps_are_counted_and_out_of_order_events_rejected_after_sealing() {
        let dir = tempfile::tempdir().unwrap();
        let store = store_with_capacity(dir.path(), 64);
        let mut monitor = Monitor::new(vec![tripwire_automaton()], VERDICT_LOG);
        let mut input = String::new();
        for seq in [1u64, 2, 10, 3, 11] {
            input.push_str(&encode_wire(&event(seq, "send", Direction::In, b"")));
        }
        let mut out = Vec::new();
        let summary = run_session(
            io::Cursor::new(input.into_bytes()),
            &mut out,
            &store,
            &mut monitor,
            None,
            &session_config(),
        );
        // 2→10 is a gap; 3 arrives after 10 and is rejected (never
        // reordered); 10→11 is consecutive.
        assert_eq!(summary.seq_gaps, 1);
        assert_eq!(summary.rejected_events, 1);
        assert_eq!(summary.events_processed, 4);
        // All five lines were sealed: arrival history is kept verbatim.
        assert_eq!(summary.events_sealed, 5);
        assert_eq!(monitor.last_seq(), Some(11));
    }

    #[test]
    fn outbound_payloads_are_scanned_inbound_are_not() {
        let dir = tempfile::tempdir().unwrap();
        let store = store_with_capacity(dir.path(), 64);
        let mut monitor = Monitor::new(vec![tripwire_automaton()], VERDICT_LOG);
        let pattern = SensitivePattern::new("token", b"API-TOKEN-12345".to_vec()).unwrap();
        let scanner = Scanner::new(vec![pattern], TaintConfig::default()).unwrap();
        let mut input = String::new();
        input.push_str(&encode_wire(&event(
            1,
            "recv",
            Direction::In,
            b"API-TOKEN-12345 arriving is fine",
        )));
        input.push_str(&encode_wire(&event(
            2,
            "send",
            Direction::Out,
            b"leaking API-TOKEN-12345 now",
        )));
        let mut out = Vec::new();
        let summary = run_session(
            io::Cursor::new(input.into_bytes()),
            &mut out,
            &store,
            &mut monitor,
            Some(&scanner),
            &session_config(),
        );
        assert_eq!(summary.taint_matches, 1);
        assert_eq!(summary.events_processed, 2);
    }

    #[test]
    fn seal_failure_halts_before_the_monitor_sees_the_event() {
        let dir = tempfile::tempdir().unwrap();
        // Capacity for exactly 2 seals; the third event must fail closed.
        let store = store_with_capacity(dir.path(), 2);
        let mut monitor = Monitor::new(vec![tripwire_automaton()], VERDICT_LOG);
        let mut input = String::new();
        for seq in 1..=5 {
            // Event 3 would trip the property — but sealing it must fail
            // first, so the monitor never observes it.
            let channel = if seq == 3 { "panic" } else { "send" };
            input.push_str(&encode_wire(&event(seq, channel, Direction::In, b"")));
        }
        let mut out = Vec::new();
        let summary = run_session(
            io::Cursor::new(input.into_bytes()),
            &mut out,
            &store,
            &mut monitor,
            None,
            &session_config(),
        );
        assert_eq!(summary.events_processed, 2);
        assert_eq!(summary.events_sealed, 2);
        let fatal = summary.fatal.expect("session must record the halt");
        assert!(fatal.contains("exhausted"), "unexpected fatal: {fatal}");
        // Monitor state is exactly as of the last sealed event.
        assert_eq!(monitor.last_seq(), Some(2));
        assert_eq!(monitor.current_states(), vec![("tripwire", "s0")]);
        assert_eq!(summary.verdicts, 0);
        assert!(out.is_empty(), "no commands after the halt");
        assert_eq!(store.lock().unwrap().records_written(), 2);
    }

    #[test]
    fn heartbeat_cadence_seals_heartbeat_verdicts() {
        let dir = tempfile::tempdir().unwrap();
        let store = store_with_capacity(dir.path(), 64);
        let mut monitor = Monitor::new(vec![tripwire_automaton()], VERDICT_LOG);
        let config = SessionConfig {
            heartbeat_every: Some(3),
            ..session_config()
        };
        let mut input = String::new();
        for seq in 1..=7 {
            input.push_str(&encode_wire(&event(seq, "send", Direction::In, b"")));
        }
        let mut out = Vec::new();
        let summary = run_session(
            io::Cursor::new(input.into_bytes()),
            &mut out,
            &store,
            &mut monitor,
            None,
            &config,
        );
        // Cadence points after events 3 and 6, one automaton each.
        assert_eq!(summary.heartbeats, 2);
        assert_eq!(summary.events_processed, 7);
        // 7 event seals + 2 heartbeat seals.
        assert_eq!(store.lock().unwrap().records_written(), 9);
    }
}
