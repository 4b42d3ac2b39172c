//! Detector-side projectors: Stern-Gerlach port spinors, chirality pass
//! filters, linear polarizers, and computational-basis qubit readout.
//!
//! Which detector kinds may face which state family is decided in
//! [`crate::correlate`]; nothing here knows about families.

use serde::{Deserialize, Serialize};

use crate::qmath::{normalize_angle, normalize_line, Spinor2};
use crate::states::{theta_spinor, Helicity, InternalDof, MomentumTag, Port, Qubit};
use crate::Error;

/// Detector station. A faces the particle with momentum `-p`, B the one
/// with `+p`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    A,
    B,
}

impl Side {
    pub fn accepts(self) -> MomentumTag {
        match self {
            Side::A => MomentumTag::Minus,
            Side::B => MomentumTag::Plus,
        }
    }

    pub fn other(self) -> Side {
        match self {
            Side::A => Side::B,
            Side::B => Side::A,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Side::A => "A",
            Side::B => "B",
        }
    }
}

impl std::fmt::Display for Side {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Binary detector result. For Stern-Gerlach detectors `Plus` is the up
/// port; for filters and polarizers it is "pass".
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Outcome {
    Plus,
    Minus,
}

impl Outcome {
    pub const BOTH: [Outcome; 2] = [Outcome::Plus, Outcome::Minus];

    pub fn value(self) -> i8 {
        match self {
            Outcome::Plus => 1,
            Outcome::Minus => -1,
        }
    }

    pub fn from_value(v: i64) -> Option<Self> {
        match v {
            1 => Some(Outcome::Plus),
            -1 => Some(Outcome::Minus),
            _ => None,
        }
    }

    pub fn port(self) -> Port {
        match self {
            Outcome::Plus => Port::Up,
            Outcome::Minus => Port::Dn,
        }
    }
}

impl From<Port> for Outcome {
    fn from(p: Port) -> Self {
        match p {
            Port::Up => Outcome::Plus,
            Port::Dn => Outcome::Minus,
        }
    }
}

/// The two covector branches of a polarizer, which cannot tell a field
/// vector from its negative.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Branch {
    Plus,
    Minus,
}

impl Branch {
    pub const BOTH: [Branch; 2] = [Branch::Plus, Branch::Minus];

    fn sign(self) -> f64 {
        match self {
            Branch::Plus => 1.0,
            Branch::Minus => -1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum DetectorKind {
    ChiralityFilter { pass: Helicity },
    SternGerlach { omega: f64 },
    LinearPolarizer { omega: f64 },
    QubitBasis { value: Qubit },
}

impl DetectorKind {
    pub fn label(&self) -> &'static str {
        match self {
            DetectorKind::ChiralityFilter { .. } => "chirality_filter",
            DetectorKind::SternGerlach { .. } => "stern_gerlach",
            DetectorKind::LinearPolarizer { .. } => "linear_polarizer",
            DetectorKind::QubitBasis { .. } => "qubit_basis",
        }
    }

    /// Analysis angle, if the kind has one.
    pub fn angle(&self) -> Option<f64> {
        match *self {
            DetectorKind::SternGerlach { omega } | DetectorKind::LinearPolarizer { omega } => {
                Some(omega)
            }
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectorSetting {
    pub side: Side,
    pub kind: DetectorKind,
}

impl DetectorSetting {
    pub fn stern_gerlach(side: Side, omega: f64) -> Self {
        Self {
            side,
            kind: DetectorKind::SternGerlach {
                omega: normalize_angle(omega),
            },
        }
    }

    pub fn polarizer(side: Side, omega: f64) -> Self {
        Self {
            side,
            kind: DetectorKind::LinearPolarizer {
                omega: normalize_line(omega),
            },
        }
    }

    pub fn chirality(side: Side, pass: Helicity) -> Self {
        Self {
            side,
            kind: DetectorKind::ChiralityFilter { pass },
        }
    }

    pub fn qubit(side: Side, value: Qubit) -> Self {
        Self {
            side,
            kind: DetectorKind::QubitBasis { value },
        }
    }

    pub fn accepts(&self, momentum: MomentumTag) -> bool {
        self.side.accepts() == momentum
    }
}

/// Port spinor of a Stern-Gerlach apparatus with field axis at `omega`.
pub fn sg_spinor(omega: f64, port: Port) -> Spinor2 {
    theta_spinor(omega, port)
}

/// Real transverse covector applied to a photon's field line at one side.
///
/// `Plus` (pass) selects the polarizer axis `(cos ω, sin ω)`; `Minus`
/// (block) selects the orthogonal axis. The minus branch negates both.
pub fn line_covector(omega: f64, outcome: Outcome, branch: Branch) -> [f64; 2] {
    let (s, c) = omega.sin_cos();
    let v = match outcome {
        Outcome::Plus => [c, s],
        Outcome::Minus => [-s, c],
    };
    let k = branch.sign();
    [k * v[0], k * v[1]]
}

/// Pass covectors of a polarizer pair with A along x̂ and B at `omega`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PolarizerCovector {
    pub side_a: [f64; 2],
    pub side_b: [f64; 2],
}

pub fn polarizer_covector(omega: f64, branch: Branch) -> PolarizerCovector {
    let omega = normalize_line(omega);
    PolarizerCovector {
        side_a: line_covector(0.0, Outcome::Plus, branch),
        side_b: line_covector(omega, Outcome::Plus, branch),
    }
}

/// 1 if a chirality filter passes the photon's helicity, else 0.
pub fn chirality_response(filter: Helicity, dof: &InternalDof) -> Result<f64, Error> {
    match dof {
        InternalDof::Helicity(h) => Ok(if *h == filter { 1.0 } else { 0.0 }),
        _ => Err(Error::NotHelicity),
    }
}

/// 1 if a computational-basis readout for `value` passes the qubit, else 0.
pub fn qubit_response(value: Qubit, dof: &InternalDof) -> Result<f64, Error> {
    match dof {
        InternalDof::Qubit(q) => Ok(if *q == value { 1.0 } else { 0.0 }),
        _ => Err(Error::NotQubit),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qmath::{inner, Complex};
    use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, PI};

    #[test]
    fn sg_spinor_examples() {
        let s = FRAC_1_SQRT_2;
        let h0up = Spinor2::new(Complex::from(s), Complex::from(s));
        let h0dn = Spinor2::new(Complex::from(-s), Complex::from(s));
        assert!(sg_spinor(0.0, Port::Up).dist(&h0up) < 1e-12);
        assert!(sg_spinor(0.0, Port::Dn).dist(&h0dn) < 1e-12);
        let w = 0.77;
        let dn = Spinor2::halved(-Complex::cis(-w), Complex::ONE);
        assert!(sg_spinor(w, Port::Dn).dist(&dn) < 1e-12);
        assert!(inner(&sg_spinor(w, Port::Up), &sg_spinor(w, Port::Dn)).norm() < 1e-12);
    }

    #[test]
    fn polarizer_covector_examples() {
        let c = polarizer_covector(0.0, Branch::Plus);
        assert_eq!(c.side_a, [1.0, 0.0]);
        assert_eq!(c.side_b, [1.0, 0.0]);
        let c = polarizer_covector(FRAC_PI_2, Branch::Plus);
        assert_eq!(c.side_a, [1.0, 0.0]);
        assert!(c.side_b[0].abs() < 1e-15 && (c.side_b[1] - 1.0).abs() < 1e-15);
        let w = 1.2;
        let p = polarizer_covector(w, Branch::Plus);
        let m = polarizer_covector(w, Branch::Minus);
        for i in 0..2 {
            assert_eq!(m.side_a[i], -p.side_a[i]);
            assert_eq!(m.side_b[i], -p.side_b[i]);
        }
    }

    #[test]
    fn polarizer_angles_are_lines() {
        let a = DetectorSetting::polarizer(Side::B, 0.3 + PI);
        let omega = a.kind.angle().unwrap();
        assert!((omega - 0.3).abs() < 1e-12);
        let p = polarizer_covector(0.3 + PI, Branch::Plus);
        let q = polarizer_covector(0.3, Branch::Plus);
        assert!((p.side_b[0] - q.side_b[0]).abs() < 1e-12);
    }

    #[test]
    fn chirality_responses() {
        let l = InternalDof::Helicity(Helicity::L);
        let r = InternalDof::Helicity(Helicity::R);
        assert_eq!(chirality_response(Helicity::L, &l).unwrap(), 1.0);
        assert_eq!(chirality_response(Helicity::L, &r).unwrap(), 0.0);
        assert_eq!(chirality_response(Helicity::R, &r).unwrap(), 1.0);
        let q = InternalDof::Qubit(Qubit::One);
        assert!(matches!(
            chirality_response(Helicity::L, &q),
            Err(Error::NotHelicity)
        ));
    }

    #[test]
    fn sides_accept_one_momentum() {
        let a = DetectorSetting::stern_gerlach(Side::A, 0.0);
        assert!(a.accepts(MomentumTag::Minus));
        assert!(!a.accepts(MomentumTag::Plus));
        let b = DetectorSetting::stern_gerlach(Side::B, -0.5);
        assert!(b.accepts(MomentumTag::Plus));
        assert!(matches!(b.kind, DetectorKind::SternGerlach { omega } if omega > 0.0));
    }
}
