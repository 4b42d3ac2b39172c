//! Offline transcript audit.
//!
//! The audit trusts nothing but the transcript: it rebuilds the endpoint
//! graph, replays the per-side message order, and recomputes each side's
//! outcome frequencies split by the remote side's setting.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use pairsim_core::Side;
use serde::Serialize;

use crate::protocol::{Endpoint, Role, WireMessage, PROTOCOL_VERSION};
use crate::transcript::Transcript;

/// z-score gate for the marginal-independence check.
pub const SIGMA_GATE: f64 = 3.0;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AuditCheck {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    /// Transcript record indices (0-based) that break the check.
    pub offending: Vec<usize>,
}

impl AuditCheck {
    fn new(
        name: &'static str,
        offending: Vec<usize>,
        ok_detail: String,
        fail_detail: String,
    ) -> Self {
        let passed = offending.is_empty();
        Self {
            name,
            passed,
            detail: if passed { ok_detail } else { fail_detail },
            offending,
        }
    }
}

impl fmt::Display for AuditCheck {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {}: {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.detail
        )
    }
}

/// P(outcome = +1) on `side` among trials where the other side used
/// `remote_setting`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MarginalCell {
    pub side: Side,
    pub remote_setting: usize,
    pub n: u64,
    pub plus: u64,
    pub p_plus: f64,
    pub stderr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AuditReport {
    pub checks: Vec<AuditCheck>,
    pub marginals: Vec<MarginalCell>,
    pub n_pairs: u64,
    /// Largest two-proportion z-score between remote settings, per side.
    pub max_z: [f64; 2],
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&AuditCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

#[derive(Default, Clone, Copy)]
struct PairView {
    setting: [Option<usize>; 2],
    outcome: [Option<i8>; 2],
}

fn slot(side: Side) -> usize {
    match side {
        Side::A => 0,
        Side::B => 1,
    }
}

fn is_star_edge(from: Endpoint, to: Endpoint) -> bool {
    matches!(
        (from, to),
        (Endpoint::Source, Endpoint::Detector(_)) | (Endpoint::Detector(_), Endpoint::Source)
    )
}

pub fn audit(transcript: &Transcript) -> AuditReport {
    let records = &transcript.records;
    let decoded: Vec<Option<WireMessage>> = records.iter().map(|r| r.message().ok()).collect();
    let mut checks = Vec::new();

    let malformed: Vec<usize> = (0..records.len())
        .filter(|&i| decoded[i].is_none())
        .collect();
    checks.push(AuditCheck::new(
        "well_formed",
        malformed.clone(),
        format!("{} records decode", records.len()),
        format!("{} undecodable records at {:?}", malformed.len(), malformed),
    ));

    let mut bad_edges = Vec::new();
    let mut edge_names = BTreeSet::new();
    let mut spokes = BTreeSet::new();
    for (i, r) in records.iter().enumerate() {
        if is_star_edge(r.from, r.to) {
            if let Endpoint::Detector(d) = if r.from == Endpoint::Source {
                r.to
            } else {
                r.from
            } {
                spokes.insert(d.name());
            }
        } else {
            bad_edges.push(i);
            edge_names.insert(format!("{}->{}", r.from, r.to));
        }
    }
    let mut star = AuditCheck::new(
        "star_topology",
        bad_edges.clone(),
        "edges source<->A and source<->B only".to_string(),
        format!(
            "edge {} at records {:?}",
            edge_names.into_iter().collect::<Vec<_>>().join(", "),
            bad_edges
        ),
    );
    if star.passed && spokes.len() != 2 {
        star.passed = false;
        star.detail = format!("expected both spokes of the star, found {:?}", spokes);
    }
    checks.push(star);

    let mut handshake_bad = Vec::new();
    for d in [Side::A, Side::B] {
        let ep = Endpoint::Detector(d);
        let mut involving = (0..records.len())
            .filter(|&i| is_star_edge(records[i].from, records[i].to))
            .filter(|&i| records[i].from == ep || records[i].to == ep);
        if let Some(i) = involving.next() {
            let ok = records[i].from == ep
                && matches!(&decoded[i], Some(WireMessage::Hello { role: Role::Detector, side: Some(s), protocol_version })
                    if *s == d && protocol_version == PROTOCOL_VERSION);
            if !ok {
                handshake_bad.push(i);
            }
            let reply = records
                .iter()
                .enumerate()
                .find(|(_, r)| r.from == Endpoint::Source && r.to == ep);
            match reply {
                Some((j, _))
                    if matches!(
                        &decoded[j],
                        Some(WireMessage::Hello {
                            role: Role::Source,
                            ..
                        })
                    ) => {}
                Some((j, _)) => handshake_bad.push(j),
                None => handshake_bad.push(i),
            }
        }
    }
    checks.push(AuditCheck::new(
        "handshake",
        handshake_bad.clone(),
        format!("both detectors greeted with protocol {PROTOCOL_VERSION}"),
        format!("bad or missing hello at records {handshake_bad:?}"),
    ));

    let mut pairs: BTreeMap<u64, PairView> = BTreeMap::new();
    let mut order_bad = Vec::new();
    let mut next_pair = [0u64; 2];
    let mut done_to = [None::<u64>; 2];
    for (i, r) in records.iter().enumerate() {
        if !is_star_edge(r.from, r.to) {
            continue;
        }
        let Some(msg) = &decoded[i] else { continue };
        match (r.from, r.to, msg) {
            (
                Endpoint::Detector(d),
                Endpoint::Source,
                WireMessage::Setting {
                    pair_id,
                    side,
                    setting_index,
                },
            ) => {
                let view = pairs.entry(*pair_id).or_default();
                if *side != d || *pair_id != next_pair[slot(d)] || view.setting[slot(d)].is_some() {
                    order_bad.push(i);
                } else {
                    view.setting[slot(d)] = Some(*setting_index);
                    next_pair[slot(d)] += 1;
                }
            }
            (
                Endpoint::Source,
                Endpoint::Detector(d),
                WireMessage::Outcome {
                    pair_id,
                    side,
                    outcome,
                },
            ) => {
                let view = pairs.entry(*pair_id).or_default();
                if *side != d || view.setting[slot(d)].is_none() || view.outcome[slot(d)].is_some()
                {
                    order_bad.push(i);
                } else {
                    view.outcome[slot(d)] = Some(*outcome);
                }
            }
            (Endpoint::Source, Endpoint::Detector(d), WireMessage::Done { n_pairs }) => {
                done_to[slot(d)] = Some(*n_pairs);
            }
            (_, _, WireMessage::Hello { .. } | WireMessage::Error { .. }) => {}
            _ => order_bad.push(i),
        }
    }
    let n_pairs = pairs.len() as u64;
    let contiguous = pairs.keys().copied().eq(0..n_pairs);
    let unanswered: Vec<u64> = pairs
        .iter()
        .filter(|(_, v)| {
            v.setting.iter().any(Option::is_none) || v.outcome.iter().any(Option::is_none)
        })
        .map(|(&p, _)| p)
        .collect();
    let mut ordering = AuditCheck::new(
        "message_order",
        order_bad.clone(),
        format!("{n_pairs} pairs, settings precede outcomes, pair ids contiguous from 0"),
        format!("out-of-order or duplicate messages at records {order_bad:?}"),
    );
    if ordering.passed && !contiguous {
        ordering.passed = false;
        ordering.detail = "pair ids are not contiguous from 0".to_string();
    }
    checks.push(ordering);

    let complete = done_to.iter().all(|d| *d == Some(n_pairs)) && unanswered.is_empty();
    checks.push(AuditCheck {
        name: "complete",
        passed: complete,
        detail: if complete {
            format!("done({n_pairs}) sent to both detectors")
        } else if !unanswered.is_empty() {
            format!(
                "{} pairs lack a setting or outcome (first {})",
                unanswered.len(),
                unanswered[0]
            )
        } else {
            format!("done messages {:?} do not match {n_pairs} pairs", done_to)
        },
        offending: Vec::new(),
    });

    let mut marginals = Vec::new();
    let mut max_z = [0.0f64; 2];
    for side in [Side::A, Side::B] {
        let (me, remote) = (slot(side), slot(side.other()));
        let mut by_remote: BTreeMap<usize, (u64, u64)> = BTreeMap::new();
        for v in pairs.values() {
            if let (Some(o), Some(rs)) = (v.outcome[me], v.setting[remote]) {
                let cell = by_remote.entry(rs).or_default();
                cell.0 += 1;
                cell.1 += u64::from(o == 1);
            }
        }
        let cells: Vec<MarginalCell> = by_remote
            .into_iter()
            .map(|(remote_setting, (n, plus))| {
                let p = plus as f64 / n as f64;
                MarginalCell {
                    side,
                    remote_setting,
                    n,
                    plus,
                    p_plus: p,
                    stderr: (p * (1.0 - p) / n as f64).sqrt(),
                }
            })
            .collect();
        for (i, x) in cells.iter().enumerate() {
            for y in &cells[i + 1..] {
                max_z[me] = max_z[me].max(two_proportion_z(x, y));
            }
        }
        marginals.extend(cells);
    }
    let independent = max_z.iter().all(|&z| z < SIGMA_GATE);
    checks.push(AuditCheck {
        name: "marginal_independence",
        passed: independent,
        detail: format!(
            "max z across remote settings: A {:.3}, B {:.3} (gate {SIGMA_GATE})",
            max_z[0], max_z[1]
        ),
        offending: Vec::new(),
    });

    AuditReport {
        checks,
        marginals,
        n_pairs,
        max_z,
    }
}

/// Pooled two-proportion z-score; 0 when both cells are degenerate and equal.
fn two_proportion_z(x: &MarginalCell, y: &MarginalCell) -> f64 {
    let pooled = (x.plus + y.plus) as f64 / (x.n + y.n) as f64;
    let sigma = (pooled * (1.0 - pooled) * (1.0 / x.n as f64 + 1.0 / y.n as f64)).sqrt();
    let diff = (x.p_plus - y.p_plus).abs();
    if sigma == 0.0 {
        if diff == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        diff / sigma
    }
}
