//! A detector client. It sees only its own settings and outcomes.

use std::io::{BufRead, BufReader, Write};
use std::net::{SocketAddr, TcpStream};
use std::thread;
use std::time::Duration;

use pairsim_core::montecarlo::{setting_index, unit_f64};
use pairsim_core::{Outcome, SettingPolicy, Side};
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::protocol::{Role, WireMessage, PROTOCOL_VERSION};
use crate::HarnessError;

#[derive(Clone, Debug)]
pub struct DetectorConfig {
    pub side: Side,
    pub n_settings: usize,
    pub policy: SettingPolicy,
    /// Seeds this detector's own setting choices. Unrelated to the source seed.
    pub seed: u64,
    pub n_pairs: u64,
    pub connect_attempts: u32,
    pub initial_backoff: Duration,
    pub io_timeout: Duration,
}

impl DetectorConfig {
    pub fn new(
        side: Side,
        n_settings: usize,
        policy: SettingPolicy,
        seed: u64,
        n_pairs: u64,
    ) -> Self {
        Self {
            side,
            n_settings,
            policy,
            seed,
            n_pairs,
            connect_attempts: 10,
            initial_backoff: Duration::from_millis(20),
            io_timeout: Duration::from_secs(30),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogEntry {
    pub pair_id: u64,
    pub setting_index: usize,
    pub outcome: Outcome,
}

/// What a detector saw during a session.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DetectorLog {
    pub entries: Vec<LogEntry>,
    /// Messages about the other side that reached this detector.
    pub foreign_messages: usize,
    pub done: bool,
}

fn connect(addr: SocketAddr, cfg: &DetectorConfig) -> Result<TcpStream, HarnessError> {
    let mut backoff = cfg.initial_backoff;
    for attempt in 1..=cfg.connect_attempts.max(1) {
        match TcpStream::connect(addr) {
            Ok(s) => return Ok(s),
            Err(_) if attempt < cfg.connect_attempts => {
                thread::sleep(backoff);
                backoff = (backoff * 2).min(Duration::from_millis(500));
            }
            Err(_) => break,
        }
    }
    Err(HarnessError::Unreachable {
        addr,
        attempts: cfg.connect_attempts.max(1),
    })
}

struct Wire {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
}

impl Wire {
    fn send(&mut self, msg: &WireMessage) -> Result<(), HarnessError> {
        let mut line = msg.encode();
        line.push('\n');
        self.writer.write_all(line.as_bytes())?;
        self.writer.flush()?;
        Ok(())
    }

    fn recv(&mut self) -> Result<WireMessage, HarnessError> {
        let mut line = String::new();
        let n = self
            .reader
            .read_line(&mut line)
            .map_err(|e| match e.kind() {
                std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut => {
                    HarnessError::Timeout("the source")
                }
                _ => e.into(),
            })?;
        if n == 0 {
            return Err(HarnessError::Disconnected(crate::Endpoint::Source));
        }
        WireMessage::decode(&line)
    }
}

/// Connects to the source, plays `n_pairs` trials and returns the local log.
pub fn run_detector(addr: SocketAddr, cfg: &DetectorConfig) -> Result<DetectorLog, HarnessError> {
    if cfg.n_settings == 0 {
        return Err(
            pairsim_core::Error::Config("detector needs at least one setting".into()).into(),
        );
    }
    let stream = connect(addr, cfg)?;
    stream.set_nodelay(true)?;
    stream.set_read_timeout(Some(cfg.io_timeout))?;
    let mut wire = Wire {
        reader: BufReader::new(stream.try_clone()?),
        writer: stream,
    };
    wire.send(&WireMessage::hello(Role::Detector, Some(cfg.side)))?;
    match wire.recv()? {
        WireMessage::Hello {
            role: Role::Source,
            protocol_version,
            ..
        } if protocol_version == PROTOCOL_VERSION => {}
        WireMessage::Error { code, detail } => return Err(HarnessError::Remote { code, detail }),
        other => {
            let err = HarnessError::protocol(
                "handshake",
                format!("expected source hello, got {other:?}"),
            );
            let _ = wire.send(&WireMessage::error("handshake", err.to_string()));
            return Err(err);
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut log = DetectorLog::default();
    for pair_id in 0..cfg.n_pairs {
        let setting = setting_index(unit_f64(rng.next_u64()), cfg.n_settings, cfg.policy);
        wire.send(&WireMessage::Setting {
            pair_id,
            side: cfg.side,
            setting_index: setting,
        })?;
        loop {
            match wire.recv()? {
                WireMessage::Outcome {
                    pair_id: p,
                    side,
                    outcome,
                } if p == pair_id && side == cfg.side => {
                    let outcome =
                        Outcome::from_value(outcome.into()).expect("decode checks the range");
                    log.entries.push(LogEntry {
                        pair_id,
                        setting_index: setting,
                        outcome,
                    });
                    break;
                }
                WireMessage::Setting { side, .. } | WireMessage::Outcome { side, .. }
                    if side != cfg.side =>
                {
                    log.foreign_messages += 1;
                }
                WireMessage::Error { code, detail } => {
                    return Err(HarnessError::Remote { code, detail })
                }
                other => {
                    let err = HarnessError::protocol(
                        "unexpected_message",
                        format!("pair {pair_id}: got {other:?}"),
                    );
                    let _ = wire.send(&WireMessage::error("unexpected_message", err.to_string()));
                    return Err(err);
                }
            }
        }
    }
    loop {
        match wire.recv()? {
            WireMessage::Done { n_pairs } if n_pairs == cfg.n_pairs => {
                log.done = true;
                return Ok(log);
            }
            WireMessage::Setting { side, .. } | WireMessage::Outcome { side, .. }
                if side != cfg.side =>
            {
                log.foreign_messages += 1;
            }
            WireMessage::Error { code, detail } => {
                return Err(HarnessError::Remote { code, detail })
            }
            other => {
                return Err(HarnessError::protocol(
                    "unexpected_message",
                    format!("expected done, got {other:?}"),
                ))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::net::TcpListener;

    #[test]
    fn gives_up_on_a_dead_port() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        drop(listener);
        let mut cfg = DetectorConfig::new(Side::A, 1, SettingPolicy::Fixed, 0, 1);
        cfg.connect_attempts = 3;
        cfg.initial_backoff = Duration::from_millis(1);
        assert!(matches!(
            run_detector(addr, &cfg),
            Err(HarnessError::Unreachable { attempts: 3, .. })
        ));
    }
}
