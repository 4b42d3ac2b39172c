//! Three-party socket harness for no-signaling runs.
//!
//! A source process listens on a loopback TCP port and two detector
//! processes (A and B) connect to it. Detectors choose their own settings
//! and send them to the source; the source samples the joint outcome once
//! both settings of a trial are in and tells each detector only its own
//! result. Every message crossing the source is appended to a
//! [`Transcript`], which [`audit`] checks afterwards for topology, ordering
//! and marginal independence.
//!
//! ```text
//!        A  <----->  source  <----->  B
//! ```
//!
//! [`session::run_local`] runs all three parties on threads of one process;
//! the `pairsim source` and `pairsim detector` commands run them as
//! separate processes.

pub mod audit;
pub mod detector;
pub mod protocol;
pub mod session;
pub mod source;
pub mod transcript;

pub use audit::{audit, AuditCheck, AuditReport};
pub use detector::{run_detector, DetectorConfig, DetectorLog};
pub use protocol::{Endpoint, Role, WireMessage, PROTOCOL_VERSION};
pub use session::{run_local, SessionConfig, SessionOutcome};
pub use source::{run_source, SourceConfig, SourceReport};
pub use transcript::{Transcript, TranscriptRecord};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Core(#[from] pairsim_core::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("malformed message: {0}")]
    Malformed(String),
    #[error("protocol violation ({code}): {detail}")]
    Protocol { code: String, detail: String },
    #[error("peer reported {code}: {detail}")]
    Remote { code: String, detail: String },
    #[error("could not reach {addr} after {attempts} attempts")]
    Unreachable {
        addr: std::net::SocketAddr,
        attempts: u32,
    },
    #[error("timed out waiting for {0}")]
    Timeout(&'static str),
    #[error("connection closed by {0}")]
    Disconnected(Endpoint),
}

impl HarnessError {
    pub(crate) fn protocol(code: &str, detail: impl Into<String>) -> Self {
        HarnessError::Protocol {
            code: code.to_string(),
            detail: detail.into(),
        }
    }
}
