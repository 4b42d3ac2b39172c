//! Session transcripts. On disk: one record per line,
//! `timestamp_ns<TAB>from<TAB>to<TAB>raw message`.

use std::io::{BufRead, Write};
use std::time::{SystemTime, UNIX_EPOCH};

use crate::protocol::{Endpoint, WireMessage};
use crate::HarnessError;

#[derive(Clone, Debug, PartialEq)]
pub struct TranscriptRecord {
    pub timestamp_ns: u128,
    pub from: Endpoint,
    pub to: Endpoint,
    pub raw: String,
}

impl TranscriptRecord {
    pub fn message(&self) -> Result<WireMessage, HarnessError> {
        WireMessage::decode(&self.raw)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Transcript {
    pub records: Vec<TranscriptRecord>,
}

pub fn now_ns() -> u128 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_nanos())
        .unwrap_or(0)
}

impl Transcript {
    pub fn push(&mut self, from: Endpoint, to: Endpoint, raw: impl Into<String>) {
        self.records.push(TranscriptRecord {
            timestamp_ns: now_ns(),
            from,
            to,
            raw: raw.into(),
        });
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Both detectors were sent `done`.
    pub fn is_complete(&self) -> bool {
        [Endpoint::A, Endpoint::B].iter().all(|&d| {
            self.records.iter().any(|r| {
                r.from == Endpoint::Source
                    && r.to == d
                    && matches!(r.message(), Ok(WireMessage::Done { .. }))
            })
        })
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), HarnessError> {
        for r in &self.records {
            writeln!(w, "{}\t{}\t{}\t{}", r.timestamp_ns, r.from, r.to, r.raw)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: BufRead>(r: R) -> Result<Self, HarnessError> {
        let mut records = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let mut parts = line.splitn(4, '\t');
            let mut field = |name: &str| {
                parts.next().ok_or_else(|| {
                    HarnessError::Malformed(format!("transcript line {}: missing {name}", i + 1))
                })
            };
            let ts = field("timestamp_ns")?;
            let from = field("from")?;
            let to = field("to")?;
            let raw = field("raw message")?;
            records.push(TranscriptRecord {
                timestamp_ns: ts.parse().map_err(|_| {
                    HarnessError::Malformed(format!(
                        "transcript line {}: bad timestamp {ts:?}",
                        i + 1
                    ))
                })?,
                from: from.parse()?,
                to: to.parse()?,
                raw: raw.to_string(),
            });
        }
        Ok(Self { records })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_format_round_trips() {
        let mut t = Transcript::default();
        t.push(
            Endpoint::A,
            Endpoint::Source,
            r#"{"type":"hello","role":"detector","side":"A","protocol_version":"1"}"#,
        );
        t.push(
            Endpoint::Source,
            Endpoint::B,
            r#"{"type":"done","n_pairs":0}"#,
        );
        let mut buf = Vec::new();
        t.write_to(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        let first = text.lines().next().unwrap();
        assert_eq!(first.split('\t').count(), 4);
        assert!(first.split('\t').nth(1) == Some("A"));
        let back = Transcript::read_from(&buf[..]).unwrap();
        assert_eq!(back, t);
        assert!(!back.is_complete());
    }

    #[test]
    fn bad_lines_are_reported() {
        assert!(Transcript::read_from(&b"12\tA\n"[..]).is_err());
        assert!(Transcript::read_from(&b"x\tA\tsource\t{}\n"[..]).is_err());
        assert!(Transcript::read_from(&b"1\tC\tsource\t{}\n"[..]).is_err());
    }
}
