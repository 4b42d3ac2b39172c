//! Joint amplitudes, outcome distributions, correlation functions, CHSH,
//! and a sign-threshold local-hidden-variable baseline.
//!
//! # Amplitude convention
//!
//! A detector pair is a bra `⟨A| ⊗ ⟨B|` ordered (side A, side B), i.e.
//! (`-p`, `+p`). A stored product term whose first factor travels with `+p`
//! is brought into that order first, which costs the family's exchange sign.
//! With this convention the spin-pair amplitudes come out as
//!
//! ```text
//! A(up, dn) = (1 + e^{iω}) / (2√2)      A(dn, dn) = (-1 + e^{iω}) / (2√2)
//! A(dn, up) = -(1 + e^{-iω}) / (2√2)    A(up, up) = (e^{-iω} - 1) / (2√2)
//! ```
//!
//! so `|A(dn,up)| = |A(up,dn)|` and `|A(up,up)| = |A(dn,dn)|`.
//!
//! # Normalization bookkeeping
//!
//! Amplitudes are evaluated on the terms at one θ normalized on their own.
//! The bare integrand of the θ-averaged state carries `√2` times those
//! coefficients under a `1/√(4π)` prefactor, so each joint probability is
//! `(1/4π) ∫ dθ |√2 A(θ)|² = |A|²` whenever `A` does not depend on θ.
//! [`spin_distribution_by_quadrature`] evaluates that integral numerically
//! and serves as the oracle for [`joint_distribution_spin`].

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI, TAU};

use serde::{Deserialize, Serialize};

use crate::detectors::{
    chirality_response, line_covector, qubit_response, sg_spinor, Branch, DetectorKind,
    DetectorSetting, Outcome, Side,
};
use crate::exec::Exec;
use crate::qmath::{
    inner, integrate_periodic_real, normalize_angle, Complex, ComplexExt, QuadratureRule,
};
use crate::states::{make_spin_pair_at, FamilyKind, InternalDof, PairFamily, PairTerm, Port};
use crate::Error;

/// Cell order used everywhere a distribution is flattened, including the
/// Monte Carlo inverse-CDF sampler.
pub const CELL_ORDER: [(Outcome, Outcome); 4] = [
    (Outcome::Plus, Outcome::Plus),
    (Outcome::Plus, Outcome::Minus),
    (Outcome::Minus, Outcome::Plus),
    (Outcome::Minus, Outcome::Minus),
];

fn cell_index(a: Outcome, b: Outcome) -> usize {
    match (a, b) {
        (Outcome::Plus, Outcome::Plus) => 0,
        (Outcome::Plus, Outcome::Minus) => 1,
        (Outcome::Minus, Outcome::Plus) => 2,
        (Outcome::Minus, Outcome::Minus) => 3,
    }
}

/// Outcome correlation that conservation enforces on a pair: opposite spin
/// ports for the spin family, matching pass/block for every other family.
pub fn partner_sign(family: FamilyKind) -> f64 {
    match family {
        FamilyKind::SpinTheta => -1.0,
        _ => 1.0,
    }
}

/// Four joint outcome probabilities at one pair of settings. Side A is the
/// first index. "up" is [`Outcome::Plus`] (pass, for non-spin families).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointDistribution {
    pub family: FamilyKind,
    /// Relative analysis angle `ω_B - ω_A` (0 for families without angles).
    pub omega: f64,
    pub p_upup: f64,
    pub p_updn: f64,
    pub p_dnup: f64,
    pub p_dndn: f64,
}

impl JointDistribution {
    fn from_cells(family: FamilyKind, omega: f64, cells: [f64; 4]) -> Self {
        Self {
            family,
            omega,
            p_upup: cells[0],
            p_updn: cells[1],
            p_dnup: cells[2],
            p_dndn: cells[3],
        }
    }

    /// Probabilities in [`CELL_ORDER`].
    pub fn cells(&self) -> [f64; 4] {
        [self.p_upup, self.p_updn, self.p_dnup, self.p_dndn]
    }

    pub fn p(&self, a: Outcome, b: Outcome) -> f64 {
        self.cells()[cell_index(a, b)]
    }

    pub fn total(&self) -> f64 {
        self.cells().iter().sum()
    }

    pub fn p_opposite(&self) -> f64 {
        self.p_updn + self.p_dnup
    }

    pub fn p_same(&self) -> f64 {
        self.p_upup + self.p_dndn
    }

    /// Probability that `side` registers [`Outcome::Plus`].
    pub fn marginal(&self, side: Side) -> f64 {
        match side {
            Side::A => self.p_upup + self.p_updn,
            Side::B => self.p_upup + self.p_dnup,
        }
    }

    /// `⟨s_A · s_B⟩` scaled by [`partner_sign`], so a perfectly conserved
    /// pair scores `+1`.
    pub fn correlation(&self) -> f64 {
        partner_sign(self.family) * (self.p_same() - self.p_opposite())
    }
}

/// `Σ_terms sign · coeff · ⟨A|ket_A⟩ · ⟨B|ket_B⟩` in detection order.
fn project_terms<FA, FB>(terms: &[PairTerm], exchange_sign: i8, bra_a: FA, bra_b: FB) -> Complex
where
    FA: Fn(&InternalDof) -> Complex,
    FB: Fn(&InternalDof) -> Complex,
{
    terms
        .iter()
        .map(|t| {
            let (sign, ka, kb) = t.in_detection_order(exchange_sign);
            (t.coeff * bra_a(&ka.dof) * bra_b(&kb.dof)).scale(sign)
        })
        .sum()
}

fn spin_bra(omega: f64, port: Port) -> impl Fn(&InternalDof) -> Complex {
    let bra = sg_spinor(omega, port);
    move |dof| {
        inner(
            &bra,
            &dof.spinor().expect("spin family terms carry spinors"),
        )
    }
}

/// Joint amplitude with the A detector at `H0` and the B detector at `omega`.
pub fn amplitude_spin(theta: f64, port_a: Port, omega: f64, port_b: Port) -> Complex {
    amplitude_spin_between(theta, 0.0, port_a, omega, port_b)
}

/// Joint amplitude with both Stern-Gerlach axes free.
pub fn amplitude_spin_between(
    theta: f64,
    omega_a: f64,
    port_a: Port,
    omega_b: f64,
    port_b: Port,
) -> Complex {
    project_terms(
        &make_spin_pair_at(theta),
        -1,
        spin_bra(omega_a, port_a),
        spin_bra(omega_b, port_b),
    )
}

/// Joint distribution for the spin family with A at 0 and B at `omega`.
pub fn joint_distribution_spin(omega: f64) -> JointDistribution {
    spin_distribution(0.0, omega)
}

pub fn spin_distribution(omega_a: f64, omega_b: f64) -> JointDistribution {
    // (1/4π) · 2π · |√2 A|² with A independent of θ
    let measure = TAU / (4.0 * PI);
    let cells = CELL_ORDER.map(|(a, b)| {
        let amp = amplitude_spin_between(0.0, omega_a, a.port(), omega_b, b.port());
        measure * 2.0 * amp.norm_sqr()
    });
    JointDistribution::from_cells(FamilyKind::SpinTheta, omega_b - omega_a, cells)
}

/// Spin distribution by direct θ quadrature of the bare integrand terms.
pub fn spin_distribution_by_quadrature(
    omega_a: f64,
    omega_b: f64,
    rule: &QuadratureRule,
) -> Result<JointDistribution, Error> {
    let family = PairFamily::spin();
    let mut cells = [0.0; 4];
    for (cell, (a, b)) in cells.iter_mut().zip(CELL_ORDER) {
        let bra_a = spin_bra(omega_a, a.port());
        let bra_b = spin_bra(omega_b, b.port());
        let integral = integrate_periodic_real(
            |theta| project_terms(&family.terms_at(theta), -1, &bra_a, &bra_b).norm_sqr(),
            rule,
        )?;
        *cell = integral / (4.0 * PI);
    }
    Ok(JointDistribution::from_cells(
        FamilyKind::SpinTheta,
        omega_b - omega_a,
        cells,
    ))
}

/// Unnormalized `(1/4π) ∫dθ |amplitude|²` per cell for one polarizer
/// branch, A at `omega_a`, B at `omega_b`.
pub fn linear_branch_weights(
    omega_a: f64,
    omega_b: f64,
    branch: Branch,
    rule: &QuadratureRule,
) -> Result<[f64; 4], Error> {
    let family = PairFamily::linear();
    let bra = |omega: f64, outcome: Outcome| {
        let v = line_covector(omega, outcome, branch);
        move |dof: &InternalDof| {
            let e = dof
                .field_vector()
                .expect("linear family terms carry field lines");
            Complex::from(v[0] * e[0] + v[1] * e[1])
        }
    };
    let mut cells = [0.0; 4];
    for (cell, (a, b)) in cells.iter_mut().zip(CELL_ORDER) {
        let (bra_a, bra_b) = (bra(omega_a, a), bra(omega_b, b));
        let integral = integrate_periodic_real(
            |theta| project_terms(&family.terms_at(theta), 1, bra_a, bra_b).norm_sqr(),
            rule,
        )?;
        *cell = integral / (4.0 * PI);
    }
    Ok(cells)
}

/// Pass/block distribution for polarizers at 0 and `omega`: both covector
/// branches summed, θ integrated, then normalized over the four outcomes.
pub fn joint_distribution_linear(
    omega: f64,
    rule: &QuadratureRule,
) -> Result<JointDistribution, Error> {
    linear_distribution(0.0, omega, rule)
}

pub fn linear_distribution(
    omega_a: f64,
    omega_b: f64,
    rule: &QuadratureRule,
) -> Result<JointDistribution, Error> {
    let plus = linear_branch_weights(omega_a, omega_b, Branch::Plus, rule)?;
    let minus = linear_branch_weights(omega_a, omega_b, Branch::Minus, rule)?;
    let summed: [f64; 4] = std::array::from_fn(|i| plus[i] + minus[i]);
    let total: f64 = summed.iter().sum();
    let cells = summed.map(|w| w / total);
    Ok(JointDistribution::from_cells(
        FamilyKind::LinearTheta,
        omega_b - omega_a,
        cells,
    ))
}

/// Closed form of the θ-averaged polarizer mismatch probability,
/// `(2 - cos 2ω)/4`, used as the check column of linear scans.
pub fn linear_opposite_closed_form(omega: f64) -> f64 {
    (2.0 - (2.0 * omega).cos()) / 4.0
}

/// `(1 + cos ω)/2`, the spin-pair opposite-port law.
pub fn cosine_law(omega: f64) -> f64 {
    (1.0 + omega.cos()) / 2.0
}

/// Distribution for θ-independent families whose detectors project onto
/// the family's own basis states (chirality filters, qubit readout).
fn discrete_distribution<R>(family: &PairFamily, response: R) -> Result<JointDistribution, Error>
where
    R: Fn(Side, &InternalDof) -> Result<f64, Error>,
{
    let terms = family.terms_at(0.0);
    if terms.is_empty() {
        return Err(Error::EmptyFamily);
    }
    let mut cells = [0.0; 4];
    for (cell, (a, b)) in cells.iter_mut().zip(CELL_ORDER) {
        let mut p = 0.0;
        for t in &terms {
            let (sign, ka, kb) = t.in_detection_order(family.exchange_sign());
            let ra = pass_or_block(response(Side::A, &ka.dof)?, a);
            let rb = pass_or_block(response(Side::B, &kb.dof)?, b);
            // basis terms are mutually orthogonal, so probabilities add
            p += (t.coeff.scale(sign * ra * rb)).norm_sqr();
        }
        *cell = p;
    }
    Ok(JointDistribution::from_cells(family.kind(), 0.0, cells))
}

fn pass_or_block(pass: f64, outcome: Outcome) -> f64 {
    match outcome {
        Outcome::Plus => pass,
        Outcome::Minus => 1.0 - pass,
    }
}

/// Coincidence (pass, pass) probability for chirality filters facing the
/// helicity pair.
pub fn coincidence_chiral(
    filter_a: crate::states::Helicity,
    filter_b: crate::states::Helicity,
) -> f64 {
    let family = crate::states::make_chiral_pair();
    discrete_distribution(&family, |side, dof| match side {
        Side::A => chirality_response(filter_a, dof),
        Side::B => chirality_response(filter_b, dof),
    })
    .expect("chiral pair carries helicity terms")
    .p_upup
}

/// Joint distribution for any supported (family, detector, detector)
/// combination. θ integrals use `rule`.
pub fn joint_for_settings(
    family: FamilyKind,
    a: &DetectorSetting,
    b: &DetectorSetting,
    rule: &QuadratureRule,
) -> Result<JointDistribution, Error> {
    if a.side != Side::A {
        return Err(Error::WrongSide {
            expected: Side::A,
            found: a.side,
        });
    }
    if b.side != Side::B {
        return Err(Error::WrongSide {
            expected: Side::B,
            found: b.side,
        });
    }
    let pairing = |d: &DetectorKind| Error::Pairing {
        family,
        detector: d.label(),
    };
    use DetectorKind::*;
    match (family, a.kind, b.kind) {
        (FamilyKind::SpinTheta, SternGerlach { omega: wa }, SternGerlach { omega: wb }) => {
            Ok(spin_distribution(wa, wb))
        }
        (FamilyKind::LinearTheta, LinearPolarizer { omega: wa }, LinearPolarizer { omega: wb }) => {
            linear_distribution(wa, wb, rule)
        }
        (FamilyKind::Chiral, ChiralityFilter { pass: fa }, ChiralityFilter { pass: fb }) => {
            discrete_distribution(&PairFamily::of_kind(family), |side, dof| match side {
                Side::A => chirality_response(fa, dof),
                Side::B => chirality_response(fb, dof),
            })
        }
        (FamilyKind::Crypto, QubitBasis { value: va }, QubitBasis { value: vb }) => {
            discrete_distribution(&PairFamily::of_kind(family), |side, dof| match side {
                Side::A => qubit_response(va, dof),
                Side::B => qubit_response(vb, dof),
            })
        }
        (_, ka, kb) => {
            let expected = default_kind(family, 0.0);
            if std::mem::discriminant(&ka) != std::mem::discriminant(&expected) {
                Err(pairing(&ka))
            } else {
                Err(pairing(&kb))
            }
        }
    }
}

/// The detector kind a family is measured with, at analysis angle `omega`
/// where one applies.
pub fn default_kind(family: FamilyKind, omega: f64) -> DetectorKind {
    match family {
        FamilyKind::SpinTheta => DetectorKind::SternGerlach {
            omega: normalize_angle(omega),
        },
        FamilyKind::LinearTheta => DetectorKind::LinearPolarizer {
            omega: crate::qmath::normalize_line(omega),
        },
        FamilyKind::Chiral => DetectorKind::ChiralityFilter {
            pass: crate::states::Helicity::L,
        },
        FamilyKind::Crypto => DetectorKind::QubitBasis {
            value: crate::states::Qubit::Zero,
        },
    }
}

/// Standard correlation `E(ω) = P_opposite - P_same` for the spin family.
pub fn correlation_e(omega: f64) -> f64 {
    joint_distribution_spin(omega).correlation()
}

/// Single-side probability of [`Outcome::Plus`] with A at 0 and B at
/// `omega` (chirality filters both L, qubit readout both 0).
pub fn marginal(omega: f64, side: Side, family: FamilyKind) -> Result<f64, Error> {
    let a = DetectorSetting {
        side: Side::A,
        kind: default_kind(family, 0.0),
    };
    let b = DetectorSetting {
        side: Side::B,
        kind: default_kind(family, omega),
    };
    Ok(joint_for_settings(family, &a, &b, &QuadratureRule::default())?.marginal(side))
}

/// Max deviation of every port pair's amplitude across a θ grid from its
/// value at θ = 0, over a grid of ω.
pub fn theta_independence_deviation(omegas: &[f64], thetas: &[f64], exec: Exec) -> f64 {
    exec.max(omegas.len(), |i| {
        let omega = omegas[i];
        let mut worst: f64 = 0.0;
        for pa in Port::BOTH {
            for pb in Port::BOTH {
                let reference = amplitude_spin(0.0, pa, omega, pb);
                for &theta in thetas {
                    worst = worst.max(amplitude_spin(theta, pa, omega, pb).dist(reference));
                }
            }
        }
        worst
    })
}

/// `n` evenly spaced angles over `[0, 2π)`.
pub fn uniform_grid(n: usize) -> Vec<f64> {
    (0..n).map(|k| TAU * k as f64 / n as f64).collect()
}

// --- local hidden variables -------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LhvStrategy {
    /// Outcome `sign(cos(θ - ω))` at A; B reports the opposite sign so that
    /// equal settings are perfectly anticorrelated.
    SignThreshold,
}

/// Deterministic local model with a hidden angle uniform on `[0, 2π)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LhvModel {
    pub strategy: LhvStrategy,
}

impl Default for LhvModel {
    fn default() -> Self {
        Self {
            strategy: LhvStrategy::SignThreshold,
        }
    }
}

impl LhvModel {
    pub fn outcome(&self, theta: f64, omega: f64, side: Side) -> Outcome {
        match self.strategy {
            LhvStrategy::SignThreshold => {
                let local = if (theta - omega).cos() >= 0.0 {
                    Outcome::Plus
                } else {
                    Outcome::Minus
                };
                match (side, local) {
                    (Side::A, o) => o,
                    (Side::B, Outcome::Plus) => Outcome::Minus,
                    (Side::B, Outcome::Minus) => Outcome::Plus,
                }
            }
        }
    }

    /// Outcome product in the same convention as [`correlation_e`].
    fn adjusted_product(&self, theta: f64, omega_a: f64, omega_b: f64) -> f64 {
        let a = self.outcome(theta, omega_a, Side::A).value();
        let b = self.outcome(theta, omega_b, Side::B).value();
        -f64::from(a * b)
    }

    /// Angles in `[0, 2π)` where the outcome at `omega` can flip.
    fn breakpoints(&self, omega: f64) -> [f64; 2] {
        match self.strategy {
            LhvStrategy::SignThreshold => [
                normalize_angle(omega + FRAC_PI_2),
                normalize_angle(omega - FRAC_PI_2),
            ],
        }
    }
}

/// `E_LHV(ω) = (1/2π) ∫dθ s_A(θ,0)·(-s_B(θ,ω))` for A at 0.
pub fn lhv_correlation(model: &LhvModel, omega: f64) -> f64 {
    lhv_correlation_between(model, 0.0, omega)
}

/// Hidden-variable correlation for arbitrary settings.
///
/// The integrand is piecewise constant in θ, so the integral is taken
/// exactly: split `[0, 2π)` at every possible outcome flip and weight each
/// piece's midpoint value by its length.
pub fn lhv_correlation_between(model: &LhvModel, omega_a: f64, omega_b: f64) -> f64 {
    let mut cuts = Vec::with_capacity(6);
    cuts.push(0.0);
    cuts.extend(model.breakpoints(omega_a));
    cuts.extend(model.breakpoints(omega_b));
    cuts.push(TAU);
    cuts.sort_by(f64::total_cmp);
    let integral: f64 = cuts
        .windows(2)
        .filter(|w| w[1] > w[0])
        .map(|w| (w[1] - w[0]) * model.adjusted_product(0.5 * (w[0] + w[1]), omega_a, omega_b))
        .sum();
    integral / TAU
}

// --- CHSH -------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChshSettings {
    pub a: f64,
    pub a_prime: f64,
    pub b: f64,
    pub b_prime: f64,
}

impl ChshSettings {
    /// `(0, π/2, π/4, 3π/4)`, the maximal-violation choice for `E = cos ω`.
    pub const CANONICAL: ChshSettings = ChshSettings {
        a: 0.0,
        a_prime: FRAC_PI_2,
        b: FRAC_PI_4,
        b_prime: 3.0 * FRAC_PI_4,
    };

    pub fn from_slice(v: &[f64]) -> Option<Self> {
        match *v {
            [a, a_prime, b, b_prime] => Some(Self {
                a,
                a_prime,
                b,
                b_prime,
            }),
            _ => None,
        }
    }

    /// Setting pairs in the order `(a,b), (a,b'), (a',b), (a',b')`.
    pub fn pairs(&self) -> [(f64, f64); 4] {
        [
            (self.a, self.b),
            (self.a, self.b_prime),
            (self.a_prime, self.b),
            (self.a_prime, self.b_prime),
        ]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum ChshSource {
    Quantum,
    Lhv(LhvModel),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChshResult {
    pub settings: ChshSettings,
    pub e_ab: f64,
    pub e_ab_prime: f64,
    pub e_a_prime_b: f64,
    pub e_a_prime_b_prime: f64,
    pub s_value: f64,
}

/// `S = |E(a,b) - E(a,b')| + |E(a',b) + E(a',b')|`, correlations in the
/// order of [`ChshSettings::pairs`].
pub fn s_value(e: [f64; 4]) -> f64 {
    (e[0] - e[1]).abs() + (e[2] + e[3]).abs()
}

pub fn chsh(settings: ChshSettings, source: ChshSource) -> ChshResult {
    let e = settings.pairs().map(|(x, y)| match source {
        ChshSource::Quantum => correlation_e(y - x),
        ChshSource::Lhv(model) => lhv_correlation_between(&model, x, y),
    });
    ChshResult {
        settings,
        e_ab: e[0],
        e_ab_prime: e[1],
        e_a_prime_b: e[2],
        e_a_prime_b_prime: e[3],
        s_value: s_value(e),
    }
}

// --- scans ------------------------------------------------------------------

/// One row of an ω scan.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub omega: f64,
    pub p_opposite: f64,
    pub p_same: f64,
    pub e: f64,
    /// Independent route to `p_opposite`: θ quadrature for the spin family,
    /// the closed form for the linear family.
    pub oracle_p_opposite: f64,
    pub abs_error: f64,
    /// Linear family only: `(1 + cos ω)/2`, compared against `p_same`.
    pub cosine_law_p: Option<f64>,
}

pub fn scan(
    family: FamilyKind,
    omegas: &[f64],
    rule: &QuadratureRule,
    exec: Exec,
) -> Result<Vec<ScanRow>, Error> {
    if rule.node_count() == 0 {
        return Err(Error::EmptyQuadrature);
    }
    let row = |omega: f64| -> Result<ScanRow, Error> {
        match family {
            FamilyKind::SpinTheta => {
                let d = joint_distribution_spin(omega);
                let oracle = spin_distribution_by_quadrature(0.0, omega, rule)?.p_opposite();
                Ok(ScanRow {
                    omega,
                    p_opposite: d.p_opposite(),
                    p_same: d.p_same(),
                    e: d.correlation(),
                    oracle_p_opposite: oracle,
                    abs_error: (d.p_opposite() - oracle).abs(),
                    cosine_law_p: None,
                })
            }
            FamilyKind::LinearTheta => {
                let d = joint_distribution_linear(omega, rule)?;
                let oracle = linear_opposite_closed_form(omega);
                Ok(ScanRow {
                    omega,
                    p_opposite: d.p_opposite(),
                    p_same: d.p_same(),
                    e: d.correlation(),
                    oracle_p_opposite: oracle,
                    abs_error: (d.p_opposite() - oracle).abs(),
                    cosine_law_p: Some(cosine_law(omega)),
                })
            }
            other => Err(Error::NoAngle(other)),
        }
    };
    exec.map(omegas.len(), |i| row(omegas[i]))
        .into_iter()
        .collect()
}

/// Largest `|p_same - cosine_law_p|` over linear scan rows, with the ω
/// where it occurs.
pub fn max_cosine_law_discrepancy(rows: &[ScanRow]) -> Option<(f64, f64)> {
    rows.iter()
        .filter_map(|r| r.cosine_law_p.map(|c| ((r.p_same - c).abs(), r.omega)))
        .fold(None, |best, cur| match best {
            Some(b) if b.0 >= cur.0 => Some(b),
            _ => Some(cur),
        })
}
