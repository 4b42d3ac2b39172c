//! Invariant suite: every property the library promises, evaluated with its
//! pinned tolerance. `pairsim validate` prints these.

use std::f64::consts::{FRAC_PI_3, SQRT_2, TAU};

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::correlate::{
    self, chsh, coincidence_chiral, lhv_correlation_between, linear_branch_weights,
    spin_distribution_by_quadrature, theta_independence_deviation, uniform_grid, ChshSettings,
    ChshSource, LhvModel,
};
use crate::detectors::{sg_spinor, Branch, DetectorSetting, Side};
use crate::exec::Exec;
use crate::montecarlo::{
    binomial_stderr, generate_events, resolve_trial, tally, trial_draws, unit_f64, write_csv,
    RunConfig, SettingPolicy, SettingsTable,
};
use crate::qmath::{
    inner, integrate_periodic, sigma_theta, Complex, ComplexExt, QuadratureRule, Spinor2,
};
use crate::states::{
    make_chiral_pair, make_crypto_pair, norm_with, theta_spinor, FamilyKind, Helicity, PairFamily,
    Port, RelativeSign,
};

/// Result of one invariant.
#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: &'static str,
    /// Human-readable gate, e.g. `< 1e-12`.
    pub tolerance: String,
    pub observed: f64,
    pub passed: bool,
}

impl Check {
    /// Passes when `observed < bound`.
    pub fn below(name: &'static str, observed: f64, bound: f64) -> Self {
        Self {
            name,
            tolerance: format!("< {bound:e}"),
            observed,
            passed: observed < bound,
        }
    }

    /// Passes when `observed >= bound`.
    pub fn at_least(name: &'static str, observed: f64, bound: f64) -> Self {
        Self {
            name,
            tolerance: format!(">= {bound}"),
            observed,
            passed: observed >= bound,
        }
    }

    pub fn exact(name: &'static str, observed: f64, expected: f64) -> Self {
        Self {
            name,
            tolerance: format!("== {expected}"),
            observed,
            passed: observed == expected,
        }
    }
}

fn random_angles(seed: u64, n: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| TAU * unit_f64(rng.next_u64())).collect()
}

fn random_spinor(rng: &mut ChaCha8Rng) -> Spinor2 {
    let mut c = || {
        Complex::new(
            unit_f64(rng.next_u64()) - 0.5,
            unit_f64(rng.next_u64()) - 0.5,
        )
    };
    let v = Spinor2::new(c(), c());
    let n = v.norm_sqr().sqrt();
    v.scale(Complex::from(1.0 / n))
}

// --- qmath ------------------------------------------------------------------

pub fn quadrature_exactness(nodes: usize) -> Check {
    let rule = QuadratureRule::uniform(nodes).expect("nodes > 0");
    let half = (nodes / 2) as i64;
    let mut worst: f64 = 0.0;
    for k in (1 - half)..half {
        let got = integrate_periodic(|t| Complex::cis(k as f64 * t), &rule).expect("rule");
        let want = if k == 0 {
            Complex::from(TAU)
        } else {
            Complex::ZERO
        };
        worst = worst.max(got.dist(want));
    }
    Check::below("qmath.quadrature_exactness", worst, 1e-12)
}

pub fn sigma_theta_spectral() -> Check {
    let worst = random_angles(0x5157, 100)
        .into_iter()
        .map(|t| {
            let s = sigma_theta(t);
            let up = theta_spinor(t, Port::Up);
            let dn = theta_spinor(t, Port::Dn);
            s.apply(&up)
                .dist(&up.scale(Complex::from(0.5)))
                .max(s.apply(&dn).dist(&dn.scale(Complex::from(-0.5))))
        })
        .fold(0.0, f64::max);
    Check::below("qmath.sigma_theta_spectral", worst, 1e-12)
}

pub fn inner_positivity() -> Check {
    let mut worst: f64 = 0.0;
    for t in random_angles(0x1a2b, 50) {
        for port in Port::BOTH {
            for s in [theta_spinor(t, port), sg_spinor(t, port)] {
                let z = inner(&s, &s);
                worst = worst.max(z.im.abs()).max((z.re - 1.0).abs());
            }
        }
    }
    Check::below("qmath.inner_positivity", worst, 1e-12)
}

// --- states -----------------------------------------------------------------

fn all_families() -> Vec<PairFamily> {
    vec![
        make_chiral_pair(),
        PairFamily::spin(),
        PairFamily::linear(),
        make_crypto_pair(RelativeSign::Plus),
        make_crypto_pair(RelativeSign::Minus),
    ]
}

pub fn momentum_and_conservation() -> Check {
    let mut violations = 0.0;
    for fam in all_families() {
        for theta in uniform_grid(16) {
            for t in fam.terms_at(theta) {
                if t.a.momentum == t.b.momentum || !fam.term_conserves(&t) {
                    violations += 1.0;
                }
            }
        }
    }
    Check::exact("states.momentum_and_conserved_quantity", violations, 0.0)
}

pub fn exchange_symmetry() -> Check {
    let worst = all_families()
        .iter()
        .flat_map(|f| {
            uniform_grid(16)
                .into_iter()
                .map(move |t| f.exchange_defect(t))
        })
        .fold(0.0, f64::max);
    Check::below("states.exchange_symmetry", worst, 1e-12)
}

pub fn normalization(rule: &QuadratureRule) -> Check {
    let worst = all_families()
        .iter()
        .map(|f| (norm_with(f, rule).expect("nonempty") - 1.0).abs())
        .fold(0.0, f64::max);
    Check::below("states.normalization", worst, 1e-10)
}

// --- detectors --------------------------------------------------------------

pub fn port_completeness() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0xc0de);
    let mut worst: f64 = 0.0;
    for w in random_angles(0xfeed, 64) {
        let psi = random_spinor(&mut rng);
        let total = inner(&sg_spinor(w, Port::Up), &psi).norm_sqr()
            + inner(&sg_spinor(w, Port::Dn), &psi).norm_sqr();
        worst = worst.max((total - 1.0).abs());
    }
    Check::below("detectors.port_completeness", worst, 1e-12)
}

pub fn line_insensitivity(rule: &QuadratureRule) -> Check {
    let worst = uniform_grid(16)
        .into_iter()
        .map(|w| {
            let d = correlate::linear_distribution(0.0, w, rule).expect("rule");
            let e =
                correlate::linear_distribution(0.0, w + std::f64::consts::PI, rule).expect("rule");
            d.cells()
                .iter()
                .zip(e.cells())
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max)
        })
        .fold(0.0, f64::max);
    Check::below("detectors.line_insensitivity", worst, 1e-10)
}

pub fn h0_spinors() -> Check {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let up = Spinor2::new(Complex::from(s), Complex::from(s));
    let dn = Spinor2::new(Complex::from(-s), Complex::from(s));
    let d = sg_spinor(0.0, Port::Up)
        .dist(&up)
        .max(sg_spinor(0.0, Port::Dn).dist(&dn));
    Check::exact("detectors.h0_spinors", d, 0.0)
}

// --- correlate --------------------------------------------------------------

pub fn theta_independence(exec: Exec) -> Check {
    let dev = theta_independence_deviation(&uniform_grid(64), &uniform_grid(256), exec);
    Check::below("correlate.theta_independence", dev, 1e-12)
}

pub fn probability_conservation(rule: &QuadratureRule) -> Check {
    let mut worst: f64 = 0.0;
    for w in uniform_grid(64) {
        for d in [
            correlate::joint_distribution_spin(w),
            correlate::joint_distribution_linear(w, rule).expect("rule"),
        ] {
            worst = worst.max((d.total() - 1.0).abs());
            for p in d.cells() {
                if !(-1e-12..=1.0 + 1e-12).contains(&p) {
                    worst = worst.max(1.0);
                }
            }
        }
    }
    Check::below("correlate.probability_conservation", worst, 1e-12)
}

pub fn closed_form_vs_oracle(rule: &QuadratureRule) -> Check {
    let worst = uniform_grid(64)
        .into_iter()
        .map(|w| {
            let a = correlate::joint_distribution_spin(w);
            let b = spin_distribution_by_quadrature(0.0, w, rule).expect("rule");
            let cells = a
                .cells()
                .iter()
                .zip(b.cells())
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max);
            cells.max((a.p_opposite() - correlate::cosine_law(w)).abs())
        })
        .fold(0.0, f64::max);
    Check::below("correlate.closed_form_vs_oracle", worst, 1e-10)
}

pub fn no_signaling() -> Check {
    let mut worst: f64 = 0.0;
    for w in uniform_grid(64) {
        for side in [Side::A, Side::B] {
            // B rotating with A fixed, and A rotating with B fixed
            let d1 = correlate::spin_distribution(0.0, w);
            let d2 = correlate::spin_distribution(w, 0.0);
            worst = worst
                .max((d1.marginal(side) - 0.5).abs())
                .max((d2.marginal(side) - 0.5).abs());
        }
    }
    Check::below("correlate.no_signaling", worst, 1e-12)
}

/// Quantum S at the canonical settings minus the largest hidden-variable S
/// over `n` random setting quadruples (plus the canonical one).
pub fn chsh_ordering(n: usize) -> Check {
    let model = LhvModel::default();
    let quantum = chsh(ChshSettings::CANONICAL, ChshSource::Quantum).s_value;
    let angles = random_angles(0xc45, 4 * n);
    let mut best = chsh(ChshSettings::CANONICAL, ChshSource::Lhv(model)).s_value;
    for q in angles.chunks_exact(4) {
        let s = ChshSettings::from_slice(q).expect("four angles");
        let e = s
            .pairs()
            .map(|(x, y)| lhv_correlation_between(&model, x, y));
        best = best.max(correlate::s_value(e));
    }
    Check::at_least("correlate.chsh_ordering", quantum - best, 0.8 - 1e-9)
}

pub fn quantum_chsh() -> Check {
    let s = chsh(ChshSettings::CANONICAL, ChshSource::Quantum).s_value;
    Check::below(
        "correlate.quantum_chsh_is_2sqrt2",
        (s - 2.0 * SQRT_2).abs(),
        1e-9,
    )
}

pub fn chirality_superselection() -> Check {
    let off =
        coincidence_chiral(Helicity::L, Helicity::R) + coincidence_chiral(Helicity::R, Helicity::L);
    Check::exact("correlate.chirality_superselection", off, 0.0)
}

pub fn linear_branch_symmetry(rule: &QuadratureRule) -> Check {
    let worst = uniform_grid(64)
        .into_iter()
        .map(|w| {
            let p = linear_branch_weights(0.0, w, Branch::Plus, rule).expect("rule");
            let m = linear_branch_weights(0.0, w, Branch::Minus, rule).expect("rule");
            p.iter()
                .zip(m)
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max)
        })
        .fold(0.0, f64::max);
    Check::below("correlate.linear_branch_symmetry", worst, 1e-10)
}

// --- montecarlo -------------------------------------------------------------

fn spin_config(seed: u64, n: u64, omega: f64) -> RunConfig {
    RunConfig::fixed(
        FamilyKind::SpinTheta,
        seed,
        n,
        DetectorSetting::stern_gerlach(Side::A, 0.0),
        DetectorSetting::stern_gerlach(Side::B, omega),
    )
}

pub fn reproducibility() -> Check {
    let cfg = spin_config(42, 2000, 1.0);
    let render = || {
        let mut buf = Vec::new();
        write_csv(&generate_events(&cfg).expect("valid"), cfg.family, &mut buf).expect("in-memory");
        buf
    };
    let same = render() == render();
    Check::exact(
        "montecarlo.reproducibility",
        if same { 1.0 } else { 0.0 },
        1.0,
    )
}

/// Number of seeds (out of 20) whose opposite-outcome frequency at π/3
/// lands within 3σ of ¾.
pub fn statistical_soundness(n: u64) -> Check {
    let hits = (0..20u64)
        .filter(|&seed| {
            let events = generate_events(&spin_config(1000 + seed, n, FRAC_PI_3)).expect("valid");
            let t = tally(&events, FamilyKind::SpinTheta).expect("nonempty");
            (t.cells[0].p_opposite() - 0.75).abs() <= 3.0 * binomial_stderr(0.75, n)
        })
        .count();
    Check::at_least("montecarlo.statistical_soundness", hits as f64, 19.0)
}

/// Outcomes are unchanged when the recorded θ values are permuted.
pub fn theta_is_label_only() -> Check {
    let mut cfg = spin_config(9, 4000, 0.8);
    cfg.settings_b
        .push(DetectorSetting::stern_gerlach(Side::B, 2.2));
    cfg.policy = SettingPolicy::UniformRandomPerTrial;
    let table = SettingsTable::build(&cfg).expect("valid");
    let draws: Vec<_> = (0..cfg.n_pairs).map(|i| trial_draws(cfg.seed, i)).collect();
    let n = draws.len();
    let mismatches = (0..n)
        .filter(|&i| {
            let mut permuted = draws[i];
            permuted.theta = draws[(i * 7919 + 13) % n].theta;
            let a = resolve_trial(&table, cfg.policy, i as u64, &draws[i]);
            let b = resolve_trial(&table, cfg.policy, i as u64, &permuted);
            (a.setting_a, a.setting_b, a.outcome_a, a.outcome_b)
                != (b.setting_a, b.setting_b, b.outcome_a, b.outcome_b)
        })
        .count();
    Check::exact("montecarlo.theta_is_label_only", mismatches as f64, 0.0)
}

/// The full core suite with the given quadrature rule.
pub fn run_all(rule: &QuadratureRule, exec: Exec) -> Vec<Check> {
    vec![
        quadrature_exactness(rule.node_count()),
        sigma_theta_spectral(),
        inner_positivity(),
        momentum_and_conservation(),
        exchange_symmetry(),
        normalization(rule),
        port_completeness(),
        line_insensitivity(rule),
        h0_spinors(),
        theta_independence(exec),
        probability_conservation(rule),
        closed_form_vs_oracle(rule),
        no_signaling(),
        quantum_chsh(),
        chsh_ordering(10_000),
        chirality_superselection(),
        linear_branch_symmetry(rule),
        reproducibility(),
        statistical_soundness(10_000),
        theta_is_label_only(),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_suite_passes() {
        let checks = run_all(&QuadratureRule::default(), Exec::default());
        for c in &checks {
            assert!(
                c.passed,
                "{} observed {} (gate {})",
                c.name, c.observed, c.tolerance
            );
        }
    }
}
