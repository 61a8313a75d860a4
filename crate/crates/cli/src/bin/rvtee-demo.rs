//! Small instrumented application for end-to-end drills. It connects to the
//! bridge, plays a scripted handshake (`hello` in, `data` out ×N, `bye` in),
//! then prints every command the monitor sends back.
//!
//! `--violate` appends a `data` event after `bye`, tripping the
//! `handshake_order` property. `--leak` plants a demo credential in one
//! payload so the leak scanner has something to find.

use std::io::{BufRead, BufReader, Write};
use std::process::ExitCode;
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use clap::Parser;

use rvtee_core::bridge::{decode_command, encode_wire, Endpoint, Stream};
use rvtee_core::rvmon::{Boundary, Direction, Event};

#[derive(Parser)]
#[command(name = "rvtee-demo", version, about)]
struct Cli {
    /// Bridge endpoint (falls back to $RVTEE_BRIDGE_ENDPOINT, then
    /// 127.0.0.1:7177).
    #[arg(long)]
    endpoint: Option<String>,
    /// Number of `data` events to emit.
    #[arg(long, default_value_t = 20)]
    events: u64,
    /// Send a `data` event after `bye`, violating the handshake property.
    #[arg(long)]
    violate: bool,
    /// Plant a demo credential in one outbound payload.
    #[arg(long)]
    leak: bool,
}

fn now_ns() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_nanos() as u64)
        .unwrap_or(0)
}

fn connect_with_retry(endpoint: &Endpoint) -> std::io::Result<Stream> {
    let deadline = Instant::now() + Duration::from_secs(5);
    loop {
        match Stream::connect(endpoint) {
            Ok(stream) => return Ok(stream),
            Err(e) if Instant::now() < deadline => {
                let _ = e;
                std::thread::sleep(Duration::from_millis(50));
            }
            Err(e) => return Err(e),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let endpoint_str = cli
        .endpoint
        .clone()
        .or_else(|| std::env::var("RVTEE_BRIDGE_ENDPOINT").ok())
        .unwrap_or_else(|| "127.0.0.1:7177".to_string());
    let endpoint = match Endpoint::parse(&endpoint_str) {
        Ok(e) => e,
        Err(e) => {
            eprintln!("bad endpoint: {e}");
            return ExitCode::from(2);
        }
    };

    let stream = match connect_with_retry(&endpoint) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("cannot connect to {endpoint}: {e}");
            return ExitCode::from(3);
        }
    };
    let reader = match stream.try_clone() {
        Ok(s) => BufReader::new(s),
        Err(e) => {
            eprintln!("cannot clone stream: {e}");
            return ExitCode::from(3);
        }
    };

    if let Err(e) = play_script(&cli, stream, reader) {
        eprintln!("session failed: {e}");
        return ExitCode::from(3);
    }
    ExitCode::SUCCESS
}

fn play_script(
    cli: &Cli,
    mut stream: Stream,
    mut reader: BufReader<Stream>,
) -> std::io::Result<()> {
    let mut seq = 0u64;
    let mut emit = |stream: &mut Stream,
                    channel: &str,
                    direction: Direction,
                    payload: &[u8]|
     -> std::io::Result<()> {
        let event = Event {
            seq,
            timestamp_ns: now_ns(),
            boundary: Boundary::RaRee,
            channel: channel.to_string(),
            direction,
            payload: payload.to_vec(),
        };
        seq += 1;
        stream.write_all(encode_wire(&event).as_bytes())
    };

    emit(&mut stream, "hello", Direction::In, b"session open")?;
    for i in 0..cli.events {
        let payload = if cli.leak && i == cli.events / 2 {
            format!("message {i}: token=DEMO-API-TOKEN-0042").into_bytes()
        } else {
            format!("message {i}").into_bytes()
        };
        emit(&mut stream, "data", Direction::Out, &payload)?;
    }
    emit(&mut stream, "bye", Direction::In, b"session close")?;
    if cli.violate {
        emit(&mut stream, "data", Direction::Out, b"post-close send")?;
    }
    stream.shutdown_write()?;

    let mut line = Vec::new();
    loop {
        line.clear();
        if reader.read_until(b'\n', &mut line)? == 0 {
            break;
        }
        match decode_command(&line) {
            Ok(command) => println!("command: {command:?}"),
            Err(e) => eprintln!("unreadable command: {e}"),
        }
    }
    Ok(())
}
