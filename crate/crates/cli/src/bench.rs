//! Instrumentation-overhead benchmark.
//!
//! The fixture is a scripted two-party message exchange over local TCP with
//! artificial pauses standing in for user interaction. Scenario A measures
//! the party that creates the session and drives the conversation; scenario B
//! measures the party that joins and answers. Each scenario runs N times
//! plain and N times with the measured party streaming one event per message
//! boundary to an in-process bridge (which seals every event and steps the
//! demo properties), and the report carries both means plus the relative
//! increase — the same shape as a runtime-overhead table with
//! No-Instrumentation / Instrumentation / Increase columns.
//!
//! The workload is pause-dominated by design: the interesting quantity is
//! the instrumentation delta, not the raw wall time.

use std::io::{BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant, SystemTime};

use rand::rngs::OsRng;

use rvtee_core::bridge::{encode_wire, serve, Endpoint, Listener, SessionConfig, Stream};
use rvtee_core::hsm::SimulatedHsm;
use rvtee_core::rvmon::{parser::load_spec, Boundary, Direction, Event};
use rvtee_core::seallog::{LogRegistry, SealLogStore};
use rvtee_core::taint::{load_patterns, Scanner, TaintConfig};

use crate::fixtures;

#[derive(Debug, Clone, Copy)]
pub struct BenchOptions {
    pub runs: u32,
    pub pause_ms: u64,
    pub rounds_a: u32,
    pub rounds_b: u32,
}

impl Default for BenchOptions {
    fn default() -> BenchOptions {
        BenchOptions {
            runs: 10,
            pause_ms: 5,
            rounds_a: 24,
            rounds_b: 16,
        }
    }
}

/// Timing for one scenario, both variants over the same run count.
#[derive(Debug, Clone)]
pub struct ScenarioTiming {
    pub label: String,
    pub plain_mean_s: f64,
    pub instrumented_mean_s: f64,
    pub runs: u32,
}

impl ScenarioTiming {
    /// `(instrumented − plain) / plain`.
    pub fn relative_increase(&self) -> f64 {
        (self.instrumented_mean_s - self.plain_mean_s) / self.plain_mean_s
    }
}

#[derive(Debug, Clone)]
pub struct BenchReport {
    pub runs: u32,
    pub scenario_a: ScenarioTiming,
    pub scenario_b: ScenarioTiming,
}

impl BenchReport {
    /// Increase across both scenarios pooled, the single "A & B" cell.
    pub fn combined_increase(&self) -> f64 {
        let plain = self.scenario_a.plain_mean_s + self.scenario_b.plain_mean_s;
        let instr = self.scenario_a.instrumented_mean_s + self.scenario_b.instrumented_mean_s;
        (instr - plain) / plain
    }

    /// Fixed-shape text table: No Instrumentation (A, B) | Instrumentation
    /// (A, B) | Increase (A & B). Same columns regardless of timings.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("runs per cell: {}\n", self.runs));
        out.push_str(
            "Time (s)            | No Instrumentation  | Instrumentation     | Increase\n",
        );
        out.push_str(
            "Scenario            |        A  |        B |        A  |       B |    A & B\n",
        );
        out.push_str(
            "--------------------+-----------+----------+-----------+---------+---------\n",
        );
        out.push_str(&format!(
            "{:<20}| {:>9.3} | {:>8.3} | {:>9.3} | {:>7.3} | {:>7.2}%\n",
            "Local desk-scale",
            self.scenario_a.plain_mean_s,
            self.scenario_b.plain_mean_s,
            self.scenario_a.instrumented_mean_s,
            self.scenario_b.instrumented_mean_s,
            self.combined_increase() * 100.0,
        ));
        out
    }
}

/// Streams boundary events from inside the measured party.
struct Emitter {
    stream: Stream,
    seq: u64,
}

impl Emitter {
    fn connect(endpoint: &Endpoint) -> std::io::Result<Emitter> {
        Ok(Emitter {
            stream: Stream::connect(endpoint)?,
            seq: 0,
        })
    }

    fn emit(&mut self, channel: &str, direction: Direction, payload: &[u8]) -> std::io::Result<()> {
        self.seq += 1;
        let event = Event {
            seq: self.seq,
            timestamp_ns: SystemTime::now()
                .duration_since(SystemTime::UNIX_EPOCH)
                .map(|d| d.as_nanos() as u64)
                .unwrap_or(0),
            boundary: Boundary::RaRee,
            channel: channel.into(),
            direction,
            payload: payload.to_vec(),
        };
        self.stream.write_all(encode_wire(&event).as_bytes())
    }

    fn finish(self) -> std::io::Result<()> {
        self.stream.shutdown_write()
    }
}

/// Drives the conversation: send a message, await the answer, pause.
fn drive(
    stream: TcpStream,
    rounds: u32,
    pause: Duration,
    bridge: Option<&Endpoint>,
) -> std::io::Result<()> {
    let mut emitter = bridge.map(Emitter::connect).transpose()?;
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut writer = stream;
    let mut answer = String::new();
    for k in 1..=rounds {
        let message = format!("m{k}\n");
        writer.write_all(message.as_bytes())?;
        if let Some(e) = emitter.as_mut() {
            e.emit("send", Direction::Out, message.as_bytes())?;
        }
        answer.clear();
        reader.read_line(&mut answer)?;
        if let Some(e) = emitter.as_mut() {
            e.emit("recv", Direction::In, answer.as_bytes())?;
        }
        thread::sleep(pause);
    }
    writer.write_all(b"bye\n")?;
    if let Some(e) = emitter.as_mut() {
        e.emit("send", Direction::Out, b"bye\n")?;
    }
    if let Some(e) = emitter {
        e.finish()?;
    }
    Ok(())
}

/// Answers the conversation: await each message, reply, until `bye`.
fn answer(stream: TcpStream, bridge: Option<&Endpoint>) -> std::io::Result<()> {
    let mut emitter = bridge.map(Emitter::connect).transpose()?;
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut writer = stream;
    let mut message = String::new();
    loop {
        message.clear();
        if reader.read_line(&mut message)? == 0 {
            break;
        }
        if let Some(e) = emitter.as_mut() {
            e.emit("recv", Direction::In, message.as_bytes())?;
        }
        if message.trim_end() == "bye" {
            break;
        }
        writer.write_all(b"ok\n")?;
        if let Some(e) = emitter.as_mut() {
            e.emit("send", Direction::Out, b"ok\n")?;
        }
    }
    if let Some(e) = emitter {
        e.finish()?;
    }
    Ok(())
}

/// One timed session. Scenario A measures the driver (who also owns the
/// listening socket, i.e. creates the session); scenario B measures the
/// answerer (who joins a session the peer created and drives).
fn timed_session(
    measure_driver: bool,
    rounds: u32,
    pause: Duration,
    bridge: Option<&Endpoint>,
) -> Result<Duration, String> {
    let listener = TcpListener::bind("127.0.0.1:0").map_err(|e| e.to_string())?;
    let addr = listener.local_addr().map_err(|e| e.to_string())?;
    thread::scope(|scope| {
        if measure_driver {
            let peer = scope.spawn(move || -> std::io::Result<()> {
                let stream = TcpStream::connect(addr)?;
                answer(stream, None)
            });
            let start = Instant::now();
            let (stream, _) = listener.accept().map_err(|e| e.to_string())?;
            drive(stream, rounds, pause, bridge).map_err(|e| e.to_string())?;
            let elapsed = start.elapsed();
            peer.join()
                .map_err(|_| "peer panicked".to_string())?
                .map_err(|e| e.to_string())?;
            Ok(elapsed)
        } else {
            let peer = scope.spawn(move || -> std::io::Result<()> {
                let (stream, _) = listener.accept()?;
                drive(stream, rounds, pause, None)
            });
            let start = Instant::now();
            let stream = TcpStream::connect(addr).map_err(|e| e.to_string())?;
            answer(stream, bridge).map_err(|e| e.to_string())?;
            let elapsed = start.elapsed();
            peer.join()
                .map_err(|_| "peer panicked".to_string())?
                .map_err(|e| e.to_string())?;
            Ok(elapsed)
        }
    })
}

fn mean_seconds(samples: &[Duration]) -> f64 {
    samples.iter().map(Duration::as_secs_f64).sum::<f64>() / samples.len() as f64
}

/// Runs the full benchmark. Any aborted run is an error, not a number.
pub fn run(options: &BenchOptions) -> Result<BenchReport, String> {
    if options.runs == 0 {
        return Err("runs must be positive".into());
    }
    let pause = Duration::from_millis(options.pause_ms);

    // Plain passes.
    let mut plain_a = Vec::new();
    let mut plain_b = Vec::new();
    for _ in 0..options.runs {
        plain_a.push(timed_session(true, options.rounds_a, pause, None)?);
        plain_b.push(timed_session(false, options.rounds_b, pause, None)?);
    }

    // Instrumented passes stream into a real bridge with a real store.
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let events_per_drive = 2 * options.rounds_a as u64 + 1;
    let events_per_answer = 2 * options.rounds_b as u64 + 1;
    let capacity = options.runs as u64 * (events_per_drive + events_per_answer) + 64;
    let (hsm, _safe_copy) =
        SimulatedHsm::provision(&mut OsRng, capacity * 32, 32).map_err(|e| e.to_string())?;
    let mut registry = LogRegistry::new();
    registry.register(1, dir.path().join("events.log"));
    registry.register(2, dir.path().join("verdicts.log"));
    let store = Mutex::new(
        SealLogStore::create(registry, dir.path().join("seal.log"), hsm)
            .map_err(|e| e.to_string())?,
    );
    let automata = load_spec(fixtures::PROPERTIES)
        .map_err(|e| e.to_string())?
        .automata;
    let scanner = Scanner::new(
        load_patterns(fixtures::PATTERNS).map_err(|e| e.to_string())?,
        TaintConfig::default(),
    )
    .map_err(|e| e.to_string())?;
    let session_config = SessionConfig {
        event_log_id: 1,
        verdict_log_id: 2,
        heartbeat_every: None,
    };

    let bridge_listener =
        Listener::bind(&Endpoint::Tcp("127.0.0.1:0".into())).map_err(|e| e.to_string())?;
    let bridge_endpoint = bridge_listener.local_endpoint();
    let total_sessions = 2 * options.runs as usize;

    let (instr_a, instr_b) = thread::scope(|scope| -> Result<_, String> {
        let bridge = scope.spawn(|| {
            serve(
                &bridge_listener,
                &store,
                &automata,
                Some(&scanner),
                &session_config,
                Some(total_sessions),
            )
        });
        let mut instr_a = Vec::new();
        let mut instr_b = Vec::new();
        for _ in 0..options.runs {
            instr_a.push(timed_session(
                true,
                options.rounds_a,
                pause,
                Some(&bridge_endpoint),
            )?);
            instr_b.push(timed_session(
                false,
                options.rounds_b,
                pause,
                Some(&bridge_endpoint),
            )?);
        }
        let summaries = bridge
            .join()
            .map_err(|_| "bridge panicked".to_string())?
            .map_err(|e| e.to_string())?;
        for s in &summaries {
            if let Some(fatal) = &s.fatal {
                return Err(format!("bridge session aborted: {fatal}"));
            }
        }
        let sealed: u64 = summaries.iter().map(|s| s.events_sealed).sum();
        let expected = options.runs as u64 * (events_per_drive + events_per_answer);
        if sealed != expected {
            return Err(format!(
                "bridge sealed {sealed} events where {expected} were streamed"
            ));
        }
        Ok((instr_a, instr_b))
    })?;

    Ok(BenchReport {
        runs: options.runs,
        scenario_a: ScenarioTiming {
            label: "A (creates the session)".into(),
            plain_mean_s: mean_seconds(&plain_a),
            instrumented_mean_s: mean_seconds(&instr_a),
            runs: options.runs,
        },
        scenario_b: ScenarioTiming {
            label: "B (joins the session)".into(),
            plain_mean_s: mean_seconds(&plain_b),
            instrumented_mean_s: mean_seconds(&instr_b),
            runs: options.runs,
        },
    })
}
