//! All three parties on threads of the current process, wired through a
//! real loopback socket.

use std::net::TcpListener;
use std::thread;
use std::time::Duration;

use pairsim_core::{RunConfig, Side};

use crate::audit::{audit, AuditReport};
use crate::detector::{run_detector, DetectorConfig, DetectorLog};
use crate::source::{run_source, SourceConfig, SourceReport};
use crate::HarnessError;

#[derive(Clone, Debug)]
pub struct SessionConfig {
    /// Source-side run description; `policy` is what the detectors use.
    pub run: RunConfig,
    /// Local seeds for the A and B setting choices.
    pub detector_seeds: [u64; 2],
    pub inject_fault: bool,
    pub handshake_timeout: Duration,
    pub trial_timeout: Duration,
}

impl SessionConfig {
    pub fn new(run: RunConfig) -> Self {
        let seed = run.seed;
        Self {
            run,
            detector_seeds: [seed.wrapping_add(1), seed.wrapping_add(2)],
            inject_fault: false,
            handshake_timeout: Duration::from_secs(5),
            trial_timeout: Duration::from_secs(30),
        }
    }

    pub fn source_config(&self) -> SourceConfig {
        SourceConfig {
            run: self.run.clone(),
            handshake_timeout: self.handshake_timeout,
            trial_timeout: self.trial_timeout,
            inject_fault: self.inject_fault,
        }
    }

    pub fn detector_config(&self, side: Side) -> DetectorConfig {
        let (n_settings, seed) = match side {
            Side::A => (self.run.settings_a.len(), self.detector_seeds[0]),
            Side::B => (self.run.settings_b.len(), self.detector_seeds[1]),
        };
        let mut cfg =
            DetectorConfig::new(side, n_settings, self.run.policy, seed, self.run.n_pairs);
        cfg.io_timeout = self.trial_timeout;
        cfg
    }
}

#[derive(Debug)]
pub struct SessionOutcome {
    pub source: SourceReport,
    pub detectors: [Result<DetectorLog, HarnessError>; 2],
    pub audit: AuditReport,
}

pub fn run_local(cfg: &SessionConfig) -> Result<SessionOutcome, HarnessError> {
    let listener = TcpListener::bind("127.0.0.1:0")?;
    let addr = listener.local_addr()?;
    let source_cfg = cfg.source_config();
    let (source, detectors) = thread::scope(|s| {
        let src = s.spawn(|| run_source(listener, &source_cfg));
        let da = s.spawn(|| run_detector(addr, &cfg.detector_config(Side::A)));
        let db = s.spawn(|| run_detector(addr, &cfg.detector_config(Side::B)));
        let a = da.join().expect("detector A thread panicked");
        let b = db.join().expect("detector B thread panicked");
        (src.join().expect("source thread panicked"), [a, b])
    });
    let source = source?;
    let audit = audit(&source.transcript);
    Ok(SessionOutcome {
        source,
        detectors,
        audit,
    })
}
