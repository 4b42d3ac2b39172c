//! Wire messages: one JSON object per line, UTF-8, discriminated by `type`.
//!
//! ```text
//! {"type":"hello","role":"detector","side":"A","protocol_version":"1"}
//! {"type":"setting","pair_id":0,"side":"A","setting_index":1}
//! {"type":"outcome","pair_id":0,"side":"A","outcome":-1}
//! {"type":"done","n_pairs":10000}
//! {"type":"error","code":"out_of_order","detail":"expected pair 3, got 5"}
//! ```

use std::fmt;
use std::str::FromStr;

use pairsim_core::Side;
use serde::{Deserialize, Serialize};

use crate::HarnessError;

pub const PROTOCOL_VERSION: &str = "1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Source,
    Detector,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum WireMessage {
    Hello {
        role: Role,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        side: Option<Side>,
        protocol_version: String,
    },
    Setting {
        pair_id: u64,
        side: Side,
        setting_index: usize,
    },
    Outcome {
        pair_id: u64,
        side: Side,
        outcome: i8,
    },
    Done {
        n_pairs: u64,
    },
    Error {
        code: String,
        detail: String,
    },
}

impl WireMessage {
    pub fn hello(role: Role, side: Option<Side>) -> Self {
        WireMessage::Hello {
            role,
            side,
            protocol_version: PROTOCOL_VERSION.to_string(),
        }
    }

    pub fn error(code: &str, detail: impl Into<String>) -> Self {
        WireMessage::Error {
            code: code.to_string(),
            detail: detail.into(),
        }
    }

    /// Single line, no trailing newline.
    pub fn encode(&self) -> String {
        serde_json::to_string(self).expect("wire messages always serialize")
    }

    pub fn decode(line: &str) -> Result<Self, HarnessError> {
        let msg: WireMessage = serde_json::from_str(line.trim_end_matches(['\r', '\n']))
            .map_err(|e| HarnessError::Malformed(format!("{e}: {line:?}")))?;
        if let WireMessage::Outcome { outcome, .. } = msg {
            if outcome != 1 && outcome != -1 {
                return Err(HarnessError::Malformed(format!(
                    "outcome must be +1 or -1, got {outcome}"
                )));
            }
        }
        Ok(msg)
    }
}

/// A party in a session.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Endpoint {
    Source,
    Detector(Side),
}

impl Endpoint {
    pub const A: Endpoint = Endpoint::Detector(Side::A);
    pub const B: Endpoint = Endpoint::Detector(Side::B);
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Endpoint::Source => f.write_str("source"),
            Endpoint::Detector(side) => f.write_str(side.name()),
        }
    }
}

impl FromStr for Endpoint {
    type Err = HarnessError;
    fn from_str(s: &str) -> Result<Self, HarnessError> {
        match s {
            "source" => Ok(Endpoint::Source),
            "A" => Ok(Endpoint::A),
            "B" => Ok(Endpoint::B),
            other => Err(HarnessError::Malformed(format!(
                "unknown endpoint {other:?}"
            ))),
        }
    }
}
