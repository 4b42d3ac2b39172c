//! Entangled two-particle states.
//!
//! Every state is a superposition of product terms, one particle travelling
//! toward side A (momentum `-p`) and the other toward side B (`+p`). Families
//! that depend on the unobserved pair angle θ are stored as generators
//! `θ -> terms` together with the measure used to integrate over θ.
//!
//! Two normalizations are in play for the θ families:
//!
//! * [`make_spin_pair_at`] / [`make_linear_pair_at`] return the terms at a
//!   single θ normalized on their own (coefficients `±1/√2`). Detection
//!   amplitudes are evaluated on these.
//! * [`PairFamily::terms_at`] returns the bare integrand terms (coefficients
//!   `±1`) that sit under the `1/√(4π) ∫₀^{2π} dθ` measure, so that
//!   `(1/4π) ∫ dθ Σ|c|² = 1`.

use std::f64::consts::{FRAC_1_SQRT_2, PI, SQRT_2, TAU};

use serde::{Deserialize, Serialize};

use crate::qmath::{
    integrate_periodic_real, normalize_angle, Complex, ComplexExt, QuadratureRule, Spinor2,
};
use crate::Error;

const ANGLE_SLACK: f64 = 1e-12;

/// Sign of a particle's momentum along z. The modulus is fixed at 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MomentumTag {
    Minus,
    Plus,
}

impl MomentumTag {
    pub fn sign(self) -> i8 {
        match self {
            MomentumTag::Minus => -1,
            MomentumTag::Plus => 1,
        }
    }

    pub fn modulus(self) -> f64 {
        1.0
    }

    pub fn flipped(self) -> Self {
        match self {
            MomentumTag::Minus => MomentumTag::Plus,
            MomentumTag::Plus => MomentumTag::Minus,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Helicity {
    L,
    R,
}

impl Helicity {
    /// Spin projection on the direction of motion: L is negative.
    pub fn value(self) -> i8 {
        match self {
            Helicity::L => -1,
            Helicity::R => 1,
        }
    }
}

/// Stern-Gerlach exit port, or spin eigenvalue sign along an axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Port {
    Up,
    Dn,
}

impl Port {
    pub const BOTH: [Port; 2] = [Port::Up, Port::Dn];

    /// Twice the spin projection: `+1` for up, `-1` for down.
    pub fn twice_spin(self) -> i8 {
        match self {
            Port::Up => 1,
            Port::Dn => -1,
        }
    }

    pub fn opposite(self) -> Self {
        match self {
            Port::Up => Port::Dn,
            Port::Dn => Port::Up,
        }
    }
}

/// Which of the two field vectors of a pair; `B` points opposite to `A`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FieldParity {
    A,
    B,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Qubit {
    Zero,
    One,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum InternalDof {
    Helicity(Helicity),
    SpinTheta { theta: f64, port: Port },
    EFieldLine { theta: f64, parity: FieldParity },
    Qubit(Qubit),
}

impl InternalDof {
    pub fn spin(theta: f64, port: Port) -> Self {
        InternalDof::SpinTheta {
            theta: normalize_angle(theta),
            port,
        }
    }

    pub fn field(theta: f64, parity: FieldParity) -> Self {
        InternalDof::EFieldLine {
            theta: normalize_angle(theta),
            parity,
        }
    }

    /// Unit transverse field vector for an [`InternalDof::EFieldLine`].
    pub fn field_vector(&self) -> Option<[f64; 2]> {
        match *self {
            InternalDof::EFieldLine { theta, parity } => {
                let phi = match parity {
                    FieldParity::A => theta,
                    FieldParity::B => theta + PI,
                };
                let (s, c) = phi.sin_cos();
                Some([c, s])
            }
            _ => None,
        }
    }

    /// Spinor for an [`InternalDof::SpinTheta`].
    pub fn spinor(&self) -> Option<Spinor2> {
        match *self {
            InternalDof::SpinTheta { theta, port } => Some(theta_spinor(theta, port)),
            _ => None,
        }
    }

    /// Equality with `1e-12` slack on angles, compared around the circle.
    pub fn approx_eq(&self, other: &InternalDof) -> bool {
        use InternalDof::*;
        match (self, other) {
            (Helicity(a), Helicity(b)) => a == b,
            (Qubit(a), Qubit(b)) => a == b,
            (
                SpinTheta {
                    theta: t1,
                    port: p1,
                },
                SpinTheta {
                    theta: t2,
                    port: p2,
                },
            ) => p1 == p2 && angles_close(*t1, *t2),
            (
                EFieldLine {
                    theta: t1,
                    parity: p1,
                },
                EFieldLine {
                    theta: t2,
                    parity: p2,
                },
            ) => p1 == p2 && angles_close(*t1, *t2),
            _ => false,
        }
    }
}

fn angles_close(a: f64, b: f64) -> bool {
    let d = normalize_angle(a - b);
    d <= ANGLE_SLACK || TAU - d <= ANGLE_SLACK
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParticleKet {
    pub dof: InternalDof,
    pub momentum: MomentumTag,
}

impl ParticleKet {
    pub fn new(dof: InternalDof, momentum: MomentumTag) -> Self {
        Self { dof, momentum }
    }

    /// `J_z` of a helicity ket: helicity times the direction of motion.
    pub fn jz(&self) -> Option<i8> {
        match self.dof {
            InternalDof::Helicity(h) => Some(h.value() * self.momentum.sign()),
            _ => None,
        }
    }
}

/// One product term `coeff · |a⟩|b⟩`, written in the stored factor order.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairTerm {
    pub coeff: Complex,
    pub a: ParticleKet,
    pub b: ParticleKet,
}

impl PairTerm {
    pub fn new(coeff: Complex, a: ParticleKet, b: ParticleKet) -> Result<Self, Error> {
        if a.momentum == b.momentum {
            return Err(Error::MomentumNotConserved);
        }
        Ok(Self { coeff, a, b })
    }

    fn make(coeff: f64, a: ParticleKet, b: ParticleKet) -> Self {
        Self::new(Complex::from(coeff), a, b).expect("constructor terms carry opposite momenta")
    }

    /// The ket travelling with the given momentum sign.
    pub fn ket_with(&self, momentum: MomentumTag) -> &ParticleKet {
        if self.a.momentum == momentum {
            &self.a
        } else {
            &self.b
        }
    }

    /// Kets in detection order `(side A = -p, side B = +p)` and the sign
    /// picked up by bringing the stored factor order into that order.
    pub fn in_detection_order(&self, exchange_sign: i8) -> (f64, &ParticleKet, &ParticleKet) {
        if self.a.momentum == MomentumTag::Minus {
            (1.0, &self.a, &self.b)
        } else {
            (f64::from(exchange_sign), &self.b, &self.a)
        }
    }

    /// Particle interchange: the internal states swap momentum modes.
    pub fn interchanged(&self) -> Self {
        Self {
            coeff: self.coeff,
            a: ParticleKet::new(self.b.dof, self.a.momentum),
            b: ParticleKet::new(self.a.dof, self.b.momentum),
        }
    }

    pub fn scaled(&self, k: Complex) -> Self {
        Self {
            coeff: self.coeff * k,
            ..*self
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FamilyKind {
    Chiral,
    #[serde(rename = "spin")]
    SpinTheta,
    #[serde(rename = "linear")]
    LinearTheta,
    Crypto,
}

impl FamilyKind {
    pub const ALL: [FamilyKind; 4] = [
        FamilyKind::Chiral,
        FamilyKind::SpinTheta,
        FamilyKind::LinearTheta,
        FamilyKind::Crypto,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FamilyKind::Chiral => "chiral",
            FamilyKind::SpinTheta => "spin",
            FamilyKind::LinearTheta => "linear",
            FamilyKind::Crypto => "crypto",
        }
    }

    /// Whether detector settings for this family carry an analysis angle.
    pub fn has_angle(self) -> bool {
        matches!(self, FamilyKind::SpinTheta | FamilyKind::LinearTheta)
    }

    /// `-1` for fermion pairs, `+1` for bosons.
    pub fn exchange_sign(self) -> i8 {
        match self {
            FamilyKind::SpinTheta => -1,
            _ => 1,
        }
    }
}

impl std::fmt::Display for FamilyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for FamilyKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "chiral" => Ok(FamilyKind::Chiral),
            "spin" => Ok(FamilyKind::SpinTheta),
            "linear" => Ok(FamilyKind::LinearTheta),
            "crypto" => Ok(FamilyKind::Crypto),
            other => Err(Error::UnknownFamily(other.to_string())),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ThetaMeasure {
    None,
    /// `1/√(4π) ∫₀^{2π} dθ`.
    Uniform0To2PiOver4Pi,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConservedTag {
    JzTotalZero,
    JthetaTotalZero,
    ETotalZero,
    ParityBit,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RelativeSign {
    Plus,
    Minus,
}

#[derive(Clone, Debug, PartialEq)]
enum TermSource {
    Fixed(Vec<PairTerm>),
    SpinTheta,
    LinearTheta,
}

/// A θ-parameterized superposition of two-particle product terms.
#[derive(Clone, Debug, PartialEq)]
pub struct PairFamily {
    kind: FamilyKind,
    source: TermSource,
    theta_measure: ThetaMeasure,
    exchange_sign: i8,
    conserved: ConservedTag,
    scale: Complex,
}

impl PairFamily {
    /// A θ-independent family from explicit terms.
    pub fn discrete(
        kind: FamilyKind,
        terms: Vec<PairTerm>,
        exchange_sign: i8,
        conserved: ConservedTag,
    ) -> Self {
        Self {
            kind,
            source: TermSource::Fixed(terms),
            theta_measure: ThetaMeasure::None,
            exchange_sign,
            conserved,
            scale: Complex::ONE,
        }
    }

    /// Whole spin-½ family under its θ measure.
    pub fn spin() -> Self {
        Self {
            kind: FamilyKind::SpinTheta,
            source: TermSource::SpinTheta,
            theta_measure: ThetaMeasure::Uniform0To2PiOver4Pi,
            exchange_sign: -1,
            conserved: ConservedTag::JthetaTotalZero,
            scale: Complex::ONE,
        }
    }

    /// Whole linear-polarization photon family under its θ measure.
    pub fn linear() -> Self {
        Self {
            kind: FamilyKind::LinearTheta,
            source: TermSource::LinearTheta,
            theta_measure: ThetaMeasure::Uniform0To2PiOver4Pi,
            exchange_sign: 1,
            conserved: ConservedTag::ETotalZero,
            scale: Complex::ONE,
        }
    }

    /// Canonical constructor by kind (the crypto family uses the `+` sign).
    pub fn of_kind(kind: FamilyKind) -> Self {
        match kind {
            FamilyKind::Chiral => make_chiral_pair(),
            FamilyKind::SpinTheta => Self::spin(),
            FamilyKind::LinearTheta => Self::linear(),
            FamilyKind::Crypto => make_crypto_pair(RelativeSign::Plus),
        }
    }

    pub fn kind(&self) -> FamilyKind {
        self.kind
    }

    pub fn theta_measure(&self) -> ThetaMeasure {
        self.theta_measure
    }

    pub fn exchange_sign(&self) -> i8 {
        self.exchange_sign
    }

    pub fn conserved_tag(&self) -> ConservedTag {
        self.conserved
    }

    /// Same family with every coefficient multiplied by `k`.
    pub fn scaled(&self, k: f64) -> Self {
        Self {
            scale: self.scale.scale(k),
            ..self.clone()
        }
    }

    /// Terms under the family's measure at angle `theta` (ignored for
    /// θ-independent families).
    pub fn terms_at(&self, theta: f64) -> Vec<PairTerm> {
        let raw = match &self.source {
            TermSource::Fixed(terms) => terms.clone(),
            TermSource::SpinTheta => scale_terms(make_spin_pair_at(theta), SQRT_2),
            TermSource::LinearTheta => scale_terms(make_linear_pair_at(theta), SQRT_2),
        };
        if self.scale == Complex::ONE {
            raw
        } else {
            raw.iter().map(|t| t.scaled(self.scale)).collect()
        }
    }

    /// Whether a single term respects the family's conserved quantity.
    pub fn term_conserves(&self, term: &PairTerm) -> bool {
        use InternalDof::*;
        match self.conserved {
            ConservedTag::JzTotalZero => match (term.a.jz(), term.b.jz()) {
                (Some(x), Some(y)) => x + y == 0,
                _ => false,
            },
            ConservedTag::JthetaTotalZero => match (term.a.dof, term.b.dof) {
                (
                    SpinTheta {
                        theta: t1,
                        port: p1,
                    },
                    SpinTheta {
                        theta: t2,
                        port: p2,
                    },
                ) => p1.twice_spin() + p2.twice_spin() == 0 && angles_close(t1, t2),
                _ => false,
            },
            ConservedTag::ETotalZero => {
                match (term.a.dof.field_vector(), term.b.dof.field_vector()) {
                    (Some(u), Some(v)) => {
                        (u[0] + v[0]).abs() <= 1e-12 && (u[1] + v[1]).abs() <= 1e-12
                    }
                    _ => false,
                }
            }
            ConservedTag::ParityBit => match (term.a.dof, term.b.dof) {
                (Qubit(x), Qubit(y)) => x == y,
                _ => false,
            },
        }
    }

    /// Largest coefficient mismatch between the interchanged state and the
    /// state times its exchange sign, at angle `theta`.
    pub fn exchange_defect(&self, theta: f64) -> f64 {
        let terms = self.terms_at(theta);
        let swapped: Vec<PairTerm> = terms.iter().map(PairTerm::interchanged).collect();
        let expected: Vec<PairTerm> = terms
            .iter()
            .map(|t| t.scaled(Complex::from(f64::from(self.exchange_sign))))
            .collect();
        coefficient_mismatch(&swapped, &expected).max(coefficient_mismatch(&expected, &swapped))
    }
}

fn scale_terms(terms: Vec<PairTerm>, k: f64) -> Vec<PairTerm> {
    terms
        .into_iter()
        .map(|t| t.scaled(Complex::from(k)))
        .collect()
}

/// Key a term by what occupies each momentum mode.
fn mode_key(term: &PairTerm) -> (InternalDof, InternalDof) {
    (
        term.ket_with(MomentumTag::Minus).dof,
        term.ket_with(MomentumTag::Plus).dof,
    )
}

/// For each term of `lhs`, the distance to the summed coefficient of the
/// matching mode assignment in `rhs` (a missing match counts as zero).
fn coefficient_mismatch(lhs: &[PairTerm], rhs: &[PairTerm]) -> f64 {
    lhs.iter()
        .map(|t| {
            let (m, p) = mode_key(t);
            let matched: Complex = rhs
                .iter()
                .filter(|r| {
                    let (rm, rp) = mode_key(r);
                    rm.approx_eq(&m) && rp.approx_eq(&p)
                })
                .map(|r| r.coeff)
                .sum();
            t.coeff.dist(matched)
        })
        .fold(0.0, f64::max)
}

/// `(1/√2)(|L,-p⟩|L,+p⟩ + |R,-p⟩|R,+p⟩)`.
pub fn make_chiral_pair() -> PairFamily {
    let term = |h| {
        PairTerm::make(
            FRAC_1_SQRT_2,
            ParticleKet::new(InternalDof::Helicity(h), MomentumTag::Minus),
            ParticleKet::new(InternalDof::Helicity(h), MomentumTag::Plus),
        )
    };
    PairFamily::discrete(
        FamilyKind::Chiral,
        vec![term(Helicity::L), term(Helicity::R)],
        1,
        ConservedTag::JzTotalZero,
    )
}

/// Eigenspinor of the transverse spin along `theta`:
/// up is `(1, e^{iθ})/√2`, down is `(-e^{-iθ}, 1)/√2`.
pub fn theta_spinor(theta: f64, port: Port) -> Spinor2 {
    match port {
        Port::Up => Spinor2::halved(Complex::ONE, Complex::cis(theta)),
        Port::Dn => Spinor2::halved(-Complex::cis(-theta), Complex::ONE),
    }
}

/// Spin pair at a fixed θ, normalized on its own:
/// `(1/√2)([up,+p ⊗ dn,-p] - [dn,+p ⊗ up,-p])`.
pub fn make_spin_pair_at(theta: f64) -> Vec<PairTerm> {
    let ket = |port, momentum| ParticleKet::new(InternalDof::spin(theta, port), momentum);
    vec![
        PairTerm::make(
            FRAC_1_SQRT_2,
            ket(Port::Up, MomentumTag::Plus),
            ket(Port::Dn, MomentumTag::Minus),
        ),
        PairTerm::make(
            -FRAC_1_SQRT_2,
            ket(Port::Dn, MomentumTag::Plus),
            ket(Port::Up, MomentumTag::Minus),
        ),
    ]
}

/// Linear-polarization photon pair at a fixed θ, normalized on its own:
/// `(1/√2)([E_a,-p ⊗ E_b,+p] + [E_a,+p ⊗ E_b,-p])` with `E_b = -E_a`.
pub fn make_linear_pair_at(theta: f64) -> Vec<PairTerm> {
    let ket = |parity, momentum| ParticleKet::new(InternalDof::field(theta, parity), momentum);
    vec![
        PairTerm::make(
            FRAC_1_SQRT_2,
            ket(FieldParity::A, MomentumTag::Minus),
            ket(FieldParity::B, MomentumTag::Plus),
        ),
        PairTerm::make(
            FRAC_1_SQRT_2,
            ket(FieldParity::A, MomentumTag::Plus),
            ket(FieldParity::B, MomentumTag::Minus),
        ),
    ]
}

/// `(1/√2)(|0⟩|0⟩ ± |1⟩|1⟩)`.
pub fn make_crypto_pair(relative: RelativeSign) -> PairFamily {
    let sign = match relative {
        RelativeSign::Plus => 1.0,
        RelativeSign::Minus => -1.0,
    };
    let term = |q, c| {
        PairTerm::make(
            c,
            ParticleKet::new(InternalDof::Qubit(q), MomentumTag::Minus),
            ParticleKet::new(InternalDof::Qubit(q), MomentumTag::Plus),
        )
    };
    PairFamily::discrete(
        FamilyKind::Crypto,
        vec![
            term(Qubit::Zero, FRAC_1_SQRT_2),
            term(Qubit::One, sign * FRAC_1_SQRT_2),
        ],
        1,
        ConservedTag::ParityBit,
    )
}

/// Squared norm of a family, integrating θ families with [`QuadratureRule::default`].
pub fn norm(family: &PairFamily) -> Result<f64, Error> {
    norm_with(family, &QuadratureRule::default())
}

/// `Σ|c|²` for discrete families, `(1/4π) ∫dθ Σ|c(θ)|²` for θ families.
pub fn norm_with(family: &PairFamily, rule: &QuadratureRule) -> Result<f64, Error> {
    let sum_sq = |terms: &[PairTerm]| terms.iter().map(|t| t.coeff.norm_sqr()).sum::<f64>();
    match family.theta_measure {
        ThetaMeasure::None => {
            let terms = family.terms_at(0.0);
            if terms.is_empty() {
                return Err(Error::EmptyFamily);
            }
            Ok(sum_sq(&terms))
        }
        ThetaMeasure::Uniform0To2PiOver4Pi => {
            let integral = integrate_periodic_real(|t| sum_sq(&family.terms_at(t)), rule)?;
            Ok(integral / (4.0 * PI))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qmath::inner;

    fn coeff_of(family: &PairFamily, minus: InternalDof, plus: InternalDof) -> Complex {
        family
            .terms_at(0.0)
            .iter()
            .filter(|t| {
                let (m, p) = mode_key(t);
                m.approx_eq(&minus) && p.approx_eq(&plus)
            })
            .map(|t| t.coeff)
            .sum()
    }

    #[test]
    fn chiral_pair_coefficients() {
        let fam = make_chiral_pair();
        let l = InternalDof::Helicity(Helicity::L);
        let r = InternalDof::Helicity(Helicity::R);
        assert!(coeff_of(&fam, l, l).dist(Complex::from(FRAC_1_SQRT_2)) < 1e-15);
        assert_eq!(coeff_of(&fam, l, r), Complex::ZERO);
        assert!((norm(&fam).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn chiral_jz_labels() {
        let fam = make_chiral_pair();
        let t = &fam.terms_at(0.0)[0];
        // L moving along -z has J_z = +1, along +z has J_z = -1
        assert_eq!(t.ket_with(MomentumTag::Minus).jz(), Some(1));
        assert_eq!(t.ket_with(MomentumTag::Plus).jz(), Some(-1));
    }

    #[test]
    fn theta_spinor_examples() {
        let s = FRAC_1_SQRT_2;
        let close = |a: Spinor2, c0: f64, c1: f64| {
            a.dist(&Spinor2::new(Complex::from(c0), Complex::from(c1))) < 1e-12
        };
        assert!(close(theta_spinor(0.0, Port::Up), s, s));
        assert!(close(theta_spinor(0.0, Port::Dn), -s, s));
        assert!(close(theta_spinor(PI, Port::Up), s, -s));
        for &t in &[0.0, 0.9, 3.3, 6.0] {
            let u = theta_spinor(t, Port::Up);
            let d = theta_spinor(t, Port::Dn);
            assert!((u.norm_sqr() - 1.0).abs() < 1e-12);
            assert!((d.norm_sqr() - 1.0).abs() < 1e-12);
            assert!(inner(&u, &d).norm() < 1e-12);
        }
    }

    #[test]
    fn spin_pair_structure() {
        let terms = make_spin_pair_at(1.1);
        assert_eq!(terms.len(), 2);
        let ratio = terms[1].coeff.re / terms[0].coeff.re;
        assert!((ratio + 1.0).abs() < 1e-15);
        let fam = PairFamily::spin();
        for t in &terms {
            assert!(fam.term_conserves(t));
            assert!((t.coeff.norm() - FRAC_1_SQRT_2).abs() < 1e-15);
        }
        assert!(fam.exchange_defect(1.1) < 1e-15);
    }

    #[test]
    fn linear_pair_fields_cancel() {
        let terms = make_linear_pair_at(0.0);
        let ea = terms[0].a.dof.field_vector().unwrap();
        let eb = terms[0].b.dof.field_vector().unwrap();
        assert!((ea[0] - 1.0).abs() < 1e-15 && ea[1].abs() < 1e-15);
        assert!((eb[0] + 1.0).abs() < 1e-15 && eb[1].abs() < 1e-12);
        assert_eq!(terms.len(), 2);
        assert_eq!(terms[0].coeff, terms[1].coeff);
        let fam = PairFamily::linear();
        for k in 0..32 {
            let theta = k as f64 * 0.37;
            assert!(make_linear_pair_at(theta)
                .iter()
                .all(|t| fam.term_conserves(t)));
        }
    }

    #[test]
    fn crypto_pair_coefficients() {
        for (rel, sign) in [(RelativeSign::Plus, 1.0), (RelativeSign::Minus, -1.0)] {
            let fam = make_crypto_pair(rel);
            let z = InternalDof::Qubit(Qubit::Zero);
            let o = InternalDof::Qubit(Qubit::One);
            assert!(coeff_of(&fam, z, z).dist(Complex::from(FRAC_1_SQRT_2)) < 1e-15);
            assert!(coeff_of(&fam, o, o).dist(Complex::from(sign * FRAC_1_SQRT_2)) < 1e-15);
            assert_eq!(coeff_of(&fam, z, o), Complex::ZERO);
            assert!((norm(&fam).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn norms() {
        for kind in FamilyKind::ALL {
            let fam = PairFamily::of_kind(kind);
            assert!((norm(&fam).unwrap() - 1.0).abs() < 1e-10, "{kind}");
            assert!(
                (norm(&fam.scaled(2.0)).unwrap() - 4.0).abs() < 1e-10,
                "{kind}"
            );
        }
    }

    #[test]
    fn empty_family_norm_errors() {
        let fam = PairFamily::discrete(FamilyKind::Crypto, vec![], 1, ConservedTag::ParityBit);
        assert!(matches!(norm(&fam), Err(Error::EmptyFamily)));
    }

    #[test]
    fn same_momentum_term_rejected() {
        let k = ParticleKet::new(InternalDof::Qubit(Qubit::Zero), MomentumTag::Plus);
        assert!(matches!(
            PairTerm::new(Complex::ONE, k, k),
            Err(Error::MomentumNotConserved)
        ));
    }

    #[test]
    fn wrong_sign_is_detected() {
        // the spin terms with a bosonic sign would not be symmetric
        let fam = PairFamily::discrete(
            FamilyKind::SpinTheta,
            make_spin_pair_at(0.4),
            1,
            ConservedTag::JthetaTotalZero,
        );
        assert!(fam.exchange_defect(0.4) > 1.0);
    }
}
