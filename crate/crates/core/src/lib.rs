//! Two-particle entangled states constrained by a conserved quantity.
//!
//! The crate builds the pair states (helicity photons, spin-½ pairs averaged
//! over their common transverse axis, linearly polarized photons, and
//! computational-basis qubit pairs), projects them onto ideal detectors,
//! and turns the resulting amplitudes into joint outcome distributions,
//! correlation functions, CHSH values, and seeded Monte Carlo event streams.
//!
//! Module map:
//!
//! * [`qmath`]: complex numbers, spinors, periodic trapezoid quadrature
//! * [`states`]: pair-state constructors and their norms
//! * [`detectors`]: detector settings and projectors
//! * [`correlate`]: amplitudes, joint distributions, CHSH, hidden-variable baseline
//! * [`montecarlo`]: reproducible event generation and tallies
//! * [`checks`]: the invariant suite run by `pairsim validate`

pub mod checks;
pub mod correlate;
pub mod detectors;
pub mod exec;
pub mod montecarlo;
pub mod qmath;
pub mod states;

pub use correlate::{ChshResult, ChshSettings, JointDistribution, LhvModel};
pub use detectors::{DetectorKind, DetectorSetting, Outcome, Side};
pub use exec::Exec;
pub use montecarlo::{EventRecord, RunConfig, SettingPolicy, TallySummary};
pub use qmath::{Complex, ComplexExt, QuadratureRule, Spinor2};
pub use states::{FamilyKind, PairFamily, Port};

use thiserror::Error as ThisError;

#[derive(Debug, ThisError)]
pub enum Error {
    #[error("quadrature rule has no nodes")]
    EmptyQuadrature,
    #[error("family has no terms")]
    EmptyFamily,
    #[error("both particles of a product term carry the same momentum")]
    MomentumNotConserved,
    #[error("chirality filter applied to a state without helicity")]
    NotHelicity,
    #[error("qubit readout applied to a non-qubit state")]
    NotQubit,
    #[error("unknown family `{0}` (expected chiral, spin, linear or crypto)")]
    UnknownFamily(String),
    #[error("a {detector} detector cannot face the {family} family")]
    Pairing {
        family: FamilyKind,
        detector: &'static str,
    },
    #[error("setting meant for side {expected} was given for side {found}")]
    WrongSide { expected: Side, found: Side },
    #[error("the {0} family has no analysis angle")]
    NoAngle(FamilyKind),
    #[error("invalid run configuration: {0}")]
    Config(String),
    #[error("no events to tally")]
    EmptyEvents,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Shortest decimal that reads back to the same `f64` (at most 17
/// significant digits), with `-0` printed as `0`. Magnitudes outside
/// `[1e-5, 1e16)` use exponent notation, e.g. `2.5e-15`.
pub fn format_float(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 {
        "0".to_string()
    } else if !(1e-5..1e16).contains(&a) {
        format!("{x:e}")
    } else {
        format!("{x}")
    }
}
