//! The source: pairs up detector settings, samples joint outcomes, and
//! keeps the session transcript.

use std::io::{BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use pairsim_core::montecarlo::{event_for_settings, tally, trial_draws, SettingsTable};
use pairsim_core::{EventRecord, RunConfig, Side, TallySummary};

use crate::protocol::{Endpoint, Role, WireMessage, PROTOCOL_VERSION};
use crate::transcript::Transcript;
use crate::HarnessError;

#[derive(Clone, Debug)]
pub struct SourceConfig {
    /// Family, seed, pair count and per-side setting lists. The policy
    /// field is ignored: detectors choose their own settings.
    pub run: RunConfig,
    pub handshake_timeout: Duration,
    pub trial_timeout: Duration,
    /// Relay A's first setting to B. Used to check that the audit catches
    /// a broken star topology.
    pub inject_fault: bool,
}

impl SourceConfig {
    pub fn new(run: RunConfig) -> Self {
        Self {
            run,
            handshake_timeout: Duration::from_secs(5),
            trial_timeout: Duration::from_secs(30),
            inject_fault: false,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SourceReport {
    pub transcript: Transcript,
    pub events: Vec<EventRecord>,
    pub tally: Option<TallySummary>,
    pub complete: bool,
    /// Why the session stopped early, if it did.
    pub abort: Option<String>,
}

enum Inbound {
    Line(Side, String),
    Closed(Side),
    Failed(Side, std::io::Error),
}

struct Link {
    writer: TcpStream,
    reader: Option<JoinHandle<()>>,
}

struct Session<'a> {
    cfg: &'a SourceConfig,
    transcript: Transcript,
    links: Vec<(Side, Link)>,
}

impl Session<'_> {
    fn send(&mut self, side: Side, msg: &WireMessage) -> Result<(), HarnessError> {
        let raw = msg.encode();
        self.relay_raw(Endpoint::Source, side, &raw)
    }

    fn relay_raw(&mut self, from: Endpoint, to: Side, raw: &str) -> Result<(), HarnessError> {
        let link = &mut self
            .links
            .iter_mut()
            .find(|(s, _)| *s == to)
            .expect("both sides linked")
            .1;
        link.writer.write_all(raw.as_bytes())?;
        link.writer.write_all(b"\n")?;
        link.writer.flush()?;
        self.transcript.push(from, Endpoint::Detector(to), raw);
        Ok(())
    }

    fn broadcast_error(&mut self, code: &str, detail: &str) {
        let msg = WireMessage::error(code, detail);
        for side in [Side::A, Side::B] {
            if self.links.iter().any(|(s, _)| *s == side) {
                let _ = self.send(side, &msg);
            }
        }
    }

    fn close(&mut self) {
        for (_, link) in &mut self.links {
            let _ = link.writer.shutdown(std::net::Shutdown::Both);
            if let Some(handle) = link.reader.take() {
                let _ = handle.join();
            }
        }
    }
}

fn accept_two(listener: &TcpListener, timeout: Duration) -> Result<Vec<TcpStream>, HarnessError> {
    listener.set_nonblocking(true)?;
    let deadline = Instant::now() + timeout;
    let mut streams = Vec::with_capacity(2);
    while streams.len() < 2 {
        match listener.accept() {
            Ok((stream, _)) => {
                stream.set_nonblocking(false)?;
                stream.set_nodelay(true)?;
                streams.push(stream);
            }
            Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                if Instant::now() >= deadline {
                    listener.set_nonblocking(false)?;
                    return Err(HarnessError::Timeout("two detectors to connect"));
                }
                thread::sleep(Duration::from_millis(5));
            }
            Err(e) => return Err(e.into()),
        }
    }
    listener.set_nonblocking(false)?;
    Ok(streams)
}

fn read_hello(reader: &mut BufReader<TcpStream>) -> Result<(Side, String), HarnessError> {
    let mut line = String::new();
    let n = reader.read_line(&mut line).map_err(|e| match e.kind() {
        std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut => {
            HarnessError::Timeout("detector hello")
        }
        _ => e.into(),
    })?;
    if n == 0 {
        return Err(HarnessError::protocol(
            "handshake",
            "connection closed before hello",
        ));
    }
    let raw = line.trim_end_matches(['\r', '\n']).to_string();
    match WireMessage::decode(&raw)? {
        WireMessage::Hello {
            role: Role::Detector,
            side: Some(side),
            protocol_version,
        } => {
            if protocol_version != PROTOCOL_VERSION {
                return Err(HarnessError::protocol(
                    "version",
                    format!("detector speaks protocol {protocol_version}, source speaks {PROTOCOL_VERSION}"),
                ));
            }
            Ok((side, raw))
        }
        other => Err(HarnessError::protocol(
            "handshake",
            format!("expected detector hello, got {other:?}"),
        )),
    }
}

fn spawn_reader(
    side: Side,
    mut reader: BufReader<TcpStream>,
    tx: Sender<Inbound>,
) -> JoinHandle<()> {
    thread::spawn(move || loop {
        let mut line = String::new();
        match reader.read_line(&mut line) {
            Ok(0) => {
                let _ = tx.send(Inbound::Closed(side));
                return;
            }
            Ok(_) => {
                let raw = line.trim_end_matches(['\r', '\n']).to_string();
                if tx.send(Inbound::Line(side, raw)).is_err() {
                    return;
                }
            }
            Err(e) => {
                let _ = tx.send(Inbound::Failed(side, e));
                return;
            }
        }
    })
}

fn side_slot(side: Side) -> usize {
    match side {
        Side::A => 0,
        Side::B => 1,
    }
}

/// Runs one session on an already-bound listener and returns its
/// transcript. Protocol violations end the session with `complete = false`
/// after both detectors have been sent an `error` message; only bad
/// configuration and listener failures are returned as `Err`.
pub fn run_source(listener: TcpListener, cfg: &SourceConfig) -> Result<SourceReport, HarnessError> {
    let table = SettingsTable::build(&cfg.run)?;
    let mut session = Session {
        cfg,
        transcript: Transcript::default(),
        links: Vec::new(),
    };
    let mut events = Vec::new();
    let result = drive(&listener, &mut session, &table, &mut events);
    let abort = match result {
        Ok(()) => None,
        Err(e) => {
            let (code, detail) = match &e {
                HarnessError::Protocol { code, detail } => (code.clone(), detail.clone()),
                HarnessError::Timeout(what) => {
                    ("timeout".to_string(), format!("waiting for {what}"))
                }
                other => ("aborted".to_string(), other.to_string()),
            };
            session.broadcast_error(&code, &detail);
            Some(format!("{code}: {detail}"))
        }
    };
    session.close();
    let tally = if events.is_empty() {
        None
    } else {
        tally(&events, cfg.run.family).ok()
    };
    Ok(SourceReport {
        complete: abort.is_none() && session.transcript.is_complete(),
        transcript: session.transcript,
        events,
        tally,
        abort,
    })
}

fn drive(
    listener: &TcpListener,
    session: &mut Session<'_>,
    table: &SettingsTable,
    events: &mut Vec<EventRecord>,
) -> Result<(), HarnessError> {
    let cfg = session.cfg;
    let streams = accept_two(listener, cfg.handshake_timeout)?;
    let (tx, rx) = mpsc::channel();
    let mut pending = Vec::new();
    for stream in streams {
        stream.set_read_timeout(Some(cfg.handshake_timeout))?;
        let writer = stream.try_clone()?;
        let mut reader = BufReader::new(stream);
        let (side, raw) = read_hello(&mut reader)?;
        if session.links.iter().any(|(s, _)| *s == side) {
            return Err(HarnessError::protocol(
                "duplicate_side",
                format!("two detectors claimed side {side}"),
            ));
        }
        session
            .transcript
            .push(Endpoint::Detector(side), Endpoint::Source, raw);
        reader.get_ref().set_read_timeout(None)?;
        session.links.push((
            side,
            Link {
                writer,
                reader: None,
            },
        ));
        pending.push((side, reader));
    }
    for side in [Side::A, Side::B] {
        session.send(side, &WireMessage::hello(Role::Source, Some(side)))?;
    }
    for (side, reader) in pending {
        let handle = spawn_reader(side, reader, tx.clone());
        session
            .links
            .iter_mut()
            .find(|(s, _)| *s == side)
            .expect("linked")
            .1
            .reader = Some(handle);
    }
    drop(tx);

    let n_settings = [table.n_a(), table.n_b()];
    for pair_id in 0..cfg.run.n_pairs {
        let mut chosen: [Option<usize>; 2] = [None, None];
        while chosen.iter().any(Option::is_none) {
            let (side, raw) = next_line(&rx, cfg.trial_timeout)?;
            session
                .transcript
                .push(Endpoint::Detector(side), Endpoint::Source, raw.clone());
            match WireMessage::decode(&raw)
                .map_err(|e| HarnessError::protocol("malformed", e.to_string()))?
            {
                WireMessage::Setting {
                    pair_id: p,
                    side: claimed,
                    setting_index,
                } => {
                    if claimed != side {
                        return Err(HarnessError::protocol(
                            "side_mismatch",
                            format!("detector {side} sent a setting labelled {claimed}"),
                        ));
                    }
                    if p > pair_id {
                        return Err(HarnessError::protocol(
                            "out_of_order",
                            format!("expected pair {pair_id} from {side}, got {p}"),
                        ));
                    }
                    let slot = side_slot(side);
                    if p < pair_id || chosen[slot].is_some() {
                        return Err(HarnessError::protocol(
                            "duplicate_setting",
                            format!("second setting for pair {p} from {side}"),
                        ));
                    }
                    if setting_index >= n_settings[slot] {
                        return Err(HarnessError::protocol(
                            "bad_setting",
                            format!(
                                "side {side} has {} settings, got index {setting_index}",
                                n_settings[slot]
                            ),
                        ));
                    }
                    chosen[slot] = Some(setting_index);
                    if cfg.inject_fault && pair_id == 0 && side == Side::A {
                        session.relay_raw(Endpoint::A, Side::B, &raw)?;
                    }
                }
                WireMessage::Error { code, detail } => {
                    return Err(HarnessError::protocol(
                        "remote_error",
                        format!("{side} reported {code}: {detail}"),
                    ));
                }
                other => {
                    return Err(HarnessError::protocol(
                        "unexpected_message",
                        format!("expected a setting from {side}, got {other:?}"),
                    ));
                }
            }
        }
        let (ia, ib) = (chosen[0].expect("filled"), chosen[1].expect("filled"));
        let event =
            event_for_settings(table, pair_id, &trial_draws(cfg.run.seed, pair_id), ia, ib)?;
        for side in [Side::A, Side::B] {
            let msg = WireMessage::Outcome {
                pair_id,
                side,
                outcome: event.outcome(side).value(),
            };
            session.send(side, &msg)?;
        }
        events.push(event);
    }
    for side in [Side::A, Side::B] {
        session.send(
            side,
            &WireMessage::Done {
                n_pairs: cfg.run.n_pairs,
            },
        )?;
    }
    Ok(())
}

fn next_line(rx: &Receiver<Inbound>, timeout: Duration) -> Result<(Side, String), HarnessError> {
    match rx.recv_timeout(timeout) {
        Ok(Inbound::Line(side, raw)) => Ok((side, raw)),
        Ok(Inbound::Closed(side)) => Err(HarnessError::protocol(
            "disconnect",
            format!("detector {side} closed the connection"),
        )),
        Ok(Inbound::Failed(side, e)) => Err(HarnessError::protocol(
            "disconnect",
            format!("detector {side}: {e}"),
        )),
        Err(RecvTimeoutError::Timeout) => Err(HarnessError::Timeout("detector settings")),
        Err(RecvTimeoutError::Disconnected) => Err(HarnessError::protocol(
            "disconnect",
            "both detectors are gone",
        )),
    }
}
