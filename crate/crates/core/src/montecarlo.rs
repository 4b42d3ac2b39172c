//! Seeded, order-independent Monte Carlo event generation and tallies.
//!
//! # Reproducibility contract
//!
//! Trial `i` of a run with seed `s` draws from ChaCha8 (`rand_chacha` 0.9)
//! seeded with `seed_from_u64(s)` and positioned on stream `i`. Four 64-bit
//! words are taken in this order and mapped to `[0, 1)` as
//! `(word >> 11) · 2⁻⁵³`:
//!
//! 1. hidden pair angle θ (scaled by 2π; recorded, never used for outcomes)
//! 2. side A setting index
//! 3. side B setting index
//! 4. joint outcome, by inverse CDF over [`CELL_ORDER`]
//!
//! All four words are drawn whatever the setting policy, so every trial
//! consumes the same stream prefix. Because trial `i` only reads stream `i`,
//! generation can run on any number of workers and still produce the same
//! events.

use std::io::Write;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::correlate::{joint_for_settings, partner_sign, JointDistribution, CELL_ORDER};
use crate::detectors::{DetectorSetting, Outcome, Side};
use crate::exec::Exec;
use crate::qmath::{QuadratureRule, DEFAULT_NODES};
use crate::states::FamilyKind;
use crate::{format_float, Error};

/// Identity of the per-trial generator; part of the reproducibility contract.
pub const GENERATOR: &str = "chacha8/rand_chacha-0.9/seed_from_u64/stream=pair_id";

/// Map a raw 64-bit word to `[0, 1)` with 53 bits of resolution.
pub fn unit_f64(word: u64) -> f64 {
    (word >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SettingPolicy {
    /// Always the first setting of each side.
    Fixed,
    UniformRandomPerTrial,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub seed: u64,
    pub n_pairs: u64,
    pub family: FamilyKind,
    pub settings_a: Vec<DetectorSetting>,
    pub settings_b: Vec<DetectorSetting>,
    pub policy: SettingPolicy,
    /// Quadrature nodes for families whose distribution needs a θ integral.
    pub nodes: usize,
}

impl RunConfig {
    /// One fixed setting per side.
    pub fn fixed(
        family: FamilyKind,
        seed: u64,
        n_pairs: u64,
        a: DetectorSetting,
        b: DetectorSetting,
    ) -> Self {
        Self {
            seed,
            n_pairs,
            family,
            settings_a: vec![a],
            settings_b: vec![b],
            policy: SettingPolicy::Fixed,
            nodes: DEFAULT_NODES,
        }
    }

    pub fn validate(&self) -> Result<(), Error> {
        if self.n_pairs == 0 {
            return Err(Error::Config("n_pairs must be at least 1".into()));
        }
        if self.settings_a.is_empty() || self.settings_b.is_empty() {
            return Err(Error::Config("each side needs at least one setting".into()));
        }
        if self.nodes == 0 {
            return Err(Error::EmptyQuadrature);
        }
        Ok(())
    }
}

/// Distributions for every (A setting, B setting) combination of a run.
#[derive(Clone, Debug)]
pub struct SettingsTable {
    n_b: usize,
    dists: Vec<JointDistribution>,
}

impl SettingsTable {
    /// Validates the configuration and every family/detector pairing.
    pub fn build(config: &RunConfig) -> Result<Self, Error> {
        config.validate()?;
        let rule = QuadratureRule::uniform(config.nodes)?;
        let mut dists = Vec::with_capacity(config.settings_a.len() * config.settings_b.len());
        for a in &config.settings_a {
            for b in &config.settings_b {
                dists.push(joint_for_settings(config.family, a, b, &rule)?);
            }
        }
        Ok(Self {
            n_b: config.settings_b.len(),
            dists,
        })
    }

    pub fn get(&self, setting_a: usize, setting_b: usize) -> Option<&JointDistribution> {
        if setting_b >= self.n_b {
            return None;
        }
        self.dists.get(setting_a * self.n_b + setting_b)
    }

    pub fn n_a(&self) -> usize {
        self.dists.len() / self.n_b
    }

    pub fn n_b(&self) -> usize {
        self.n_b
    }
}

/// The four uniform variates of one trial, in draw order.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrialDraws {
    pub theta: f64,
    pub u_setting_a: f64,
    pub u_setting_b: f64,
    pub u_outcome: f64,
}

pub fn trial_draws(seed: u64, pair_id: u64) -> TrialDraws {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(pair_id);
    let mut next = || unit_f64(rng.next_u64());
    let theta = std::f64::consts::TAU * next();
    let u_setting_a = next();
    let u_setting_b = next();
    let u_outcome = next();
    TrialDraws {
        theta,
        u_setting_a,
        u_setting_b,
        u_outcome,
    }
}

pub fn setting_index(u: f64, len: usize, policy: SettingPolicy) -> usize {
    match policy {
        SettingPolicy::Fixed => 0,
        SettingPolicy::UniformRandomPerTrial => ((u * len as f64) as usize).min(len - 1),
    }
}

/// Inverse-CDF draw of a joint outcome over [`CELL_ORDER`].
pub fn sample_outcome(dist: &JointDistribution, u: f64) -> (Outcome, Outcome) {
    let cells = dist.cells();
    let mut cumulative = 0.0;
    let mut last_nonzero = 0;
    for (i, &p) in cells.iter().enumerate() {
        if p > 0.0 {
            last_nonzero = i;
        }
        cumulative += p;
        if u < cumulative {
            return CELL_ORDER[i];
        }
    }
    // roundoff left the total just under 1
    CELL_ORDER[last_nonzero]
}

/// One simulated coincidence trial.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub pair_id: u64,
    /// Audit only; never shown to a detector and never used for outcomes.
    pub theta_hidden: f64,
    pub setting_a: usize,
    pub setting_b: usize,
    pub outcome_a: Outcome,
    pub outcome_b: Outcome,
}

impl EventRecord {
    pub fn outcome(&self, side: Side) -> Outcome {
        match side {
            Side::A => self.outcome_a,
            Side::B => self.outcome_b,
        }
    }

    pub fn setting(&self, side: Side) -> usize {
        match side {
            Side::A => self.setting_a,
            Side::B => self.setting_b,
        }
    }
}

/// Event for a trial whose settings are already known (the harness path).
pub fn event_for_settings(
    table: &SettingsTable,
    pair_id: u64,
    draws: &TrialDraws,
    setting_a: usize,
    setting_b: usize,
) -> Result<EventRecord, Error> {
    let dist = table.get(setting_a, setting_b).ok_or_else(|| {
        Error::Config(format!(
            "setting pair ({setting_a}, {setting_b}) is out of range"
        ))
    })?;
    let (outcome_a, outcome_b) = sample_outcome(dist, draws.u_outcome);
    Ok(EventRecord {
        pair_id,
        theta_hidden: draws.theta,
        setting_a,
        setting_b,
        outcome_a,
        outcome_b,
    })
}

/// Full trial: settings from the policy, outcome from the distribution.
pub fn resolve_trial(
    table: &SettingsTable,
    policy: SettingPolicy,
    pair_id: u64,
    draws: &TrialDraws,
) -> EventRecord {
    let ia = setting_index(draws.u_setting_a, table.n_a(), policy);
    let ib = setting_index(draws.u_setting_b, table.n_b(), policy);
    event_for_settings(table, pair_id, draws, ia, ib).expect("indices come from the table bounds")
}

pub fn generate_events(config: &RunConfig) -> Result<Vec<EventRecord>, Error> {
    generate_events_with(config, Exec::default())
}

pub fn generate_events_with(config: &RunConfig, exec: Exec) -> Result<Vec<EventRecord>, Error> {
    let table = SettingsTable::build(config)?;
    let n = usize::try_from(config.n_pairs)
        .map_err(|_| Error::Config("n_pairs does not fit in memory".into()))?;
    Ok(exec.map(n, |i| {
        let pair_id = i as u64;
        resolve_trial(
            &table,
            config.policy,
            pair_id,
            &trial_draws(config.seed, pair_id),
        )
    }))
}

// --- tallies ----------------------------------------------------------------

/// Counts for one (A setting, B setting) pair, cells in [`CELL_ORDER`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SettingsTally {
    pub setting_a: usize,
    pub setting_b: usize,
    pub counts: [u64; 4],
    pub n: u64,
    pub probabilities: [f64; 4],
    /// Binomial standard error `√(p(1-p)/n)` per cell.
    pub stderr: [f64; 4],
}

impl SettingsTally {
    fn from_counts(setting_a: usize, setting_b: usize, counts: [u64; 4]) -> Self {
        let n: u64 = counts.iter().sum();
        let nf = n as f64;
        let probabilities = counts.map(|c| c as f64 / nf);
        let stderr = probabilities.map(|p| binomial_stderr(p, n));
        Self {
            setting_a,
            setting_b,
            counts,
            n,
            probabilities,
            stderr,
        }
    }

    pub fn p_opposite(&self) -> f64 {
        self.probabilities[1] + self.probabilities[2]
    }

    pub fn p_same(&self) -> f64 {
        self.probabilities[0] + self.probabilities[3]
    }

    pub fn p_opposite_stderr(&self) -> f64 {
        binomial_stderr(self.p_opposite(), self.n)
    }

    /// Estimated correlation in the convention of
    /// [`JointDistribution::correlation`].
    pub fn correlation(&self, family: FamilyKind) -> f64 {
        partner_sign(family) * (self.p_same() - self.p_opposite())
    }

    /// Standard error of a mean of ±1 values: `√((1 - E²)/n)`.
    pub fn correlation_stderr(&self, family: FamilyKind) -> f64 {
        let e = self.correlation(family);
        ((1.0 - e * e).max(0.0) / self.n as f64).sqrt()
    }

    pub fn marginal_plus(&self, side: Side) -> f64 {
        match side {
            Side::A => self.probabilities[0] + self.probabilities[1],
            Side::B => self.probabilities[0] + self.probabilities[2],
        }
    }
}

pub fn binomial_stderr(p: f64, n: u64) -> f64 {
    if n == 0 {
        return f64::NAN;
    }
    (p * (1.0 - p) / n as f64).max(0.0).sqrt()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TallySummary {
    pub family: FamilyKind,
    pub n_pairs: u64,
    /// One entry per setting pair that occurred, sorted by (A, B) index.
    pub cells: Vec<SettingsTally>,
}

impl TallySummary {
    pub fn cell(&self, setting_a: usize, setting_b: usize) -> Option<&SettingsTally> {
        self.cells
            .iter()
            .find(|c| c.setting_a == setting_a && c.setting_b == setting_b)
    }
}

pub fn estimate(events: &[EventRecord], config: &RunConfig) -> Result<TallySummary, Error> {
    tally(events, config.family)
}

/// Fold events into per-setting-pair counts.
pub fn tally(events: &[EventRecord], family: FamilyKind) -> Result<TallySummary, Error> {
    if events.is_empty() {
        return Err(Error::EmptyEvents);
    }
    let mut counts: std::collections::BTreeMap<(usize, usize), [u64; 4]> = Default::default();
    for e in events {
        let idx = CELL_ORDER
            .iter()
            .position(|&c| c == (e.outcome_a, e.outcome_b))
            .expect("every outcome pair is a cell");
        counts.entry((e.setting_a, e.setting_b)).or_default()[idx] += 1;
    }
    Ok(TallySummary {
        family,
        n_pairs: events.len() as u64,
        cells: counts
            .into_iter()
            .map(|((a, b), c)| SettingsTally::from_counts(a, b, c))
            .collect(),
    })
}

/// S estimate with propagated standard error from four tallies in
/// `(a,b), (a,b'), (a',b), (a',b')` order.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChshEstimate {
    pub correlations: [f64; 4],
    pub correlation_stderr: [f64; 4],
    pub s_value: f64,
    pub stderr: f64,
}

pub fn chsh_from_tallies(tallies: [&SettingsTally; 4], family: FamilyKind) -> ChshEstimate {
    let correlations = tallies.map(|t| t.correlation(family));
    let correlation_stderr = tallies.map(|t| t.correlation_stderr(family));
    let stderr = correlation_stderr.iter().map(|s| s * s).sum::<f64>().sqrt();
    ChshEstimate {
        correlations,
        correlation_stderr,
        s_value: crate::correlate::s_value(correlations),
        stderr,
    }
}

// --- serialization ----------------------------------------------------------

pub const CSV_HEADER: &str = "pair_id,theta_hidden,setting_a,setting_b,outcome_a,outcome_b";

/// `+1`/`-1` for spin ports, `pass`/`block` for every other family.
pub fn outcome_label(family: FamilyKind, outcome: Outcome) -> &'static str {
    match (family, outcome) {
        (FamilyKind::SpinTheta, Outcome::Plus) => "+1",
        (FamilyKind::SpinTheta, Outcome::Minus) => "-1",
        (_, Outcome::Plus) => "pass",
        (_, Outcome::Minus) => "block",
    }
}

pub fn write_csv<W: Write>(
    events: &[EventRecord],
    family: FamilyKind,
    mut w: W,
) -> Result<(), Error> {
    writeln!(w, "{CSV_HEADER}")?;
    for e in events {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            e.pair_id,
            format_float(e.theta_hidden),
            e.setting_a,
            e.setting_b,
            outcome_label(family, e.outcome_a),
            outcome_label(family, e.outcome_b),
        )?;
    }
    Ok(())
}

#[derive(Serialize)]
struct JsonEvent<'a> {
    pair_id: u64,
    theta_hidden: f64,
    setting_a: usize,
    setting_b: usize,
    outcome_a: &'a str,
    outcome_b: &'a str,
}

pub fn write_jsonl<W: Write>(
    events: &[EventRecord],
    family: FamilyKind,
    mut w: W,
) -> Result<(), Error> {
    for e in events {
        let rec = JsonEvent {
            pair_id: e.pair_id,
            theta_hidden: e.theta_hidden,
            setting_a: e.setting_a,
            setting_b: e.setting_b,
            outcome_a: outcome_label(family, e.outcome_a),
            outcome_b: outcome_label(family, e.outcome_b),
        };
        serde_json::to_writer(&mut w, &rec)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::states::Helicity;
    use std::f64::consts::FRAC_PI_3;

    fn spin_run(seed: u64, n: u64, omega: f64) -> RunConfig {
        RunConfig::fixed(
            FamilyKind::SpinTheta,
            seed,
            n,
            DetectorSetting::stern_gerlach(Side::A, 0.0),
            DetectorSetting::stern_gerlach(Side::B, omega),
        )
    }

    #[test]
    fn aligned_spin_detectors_always_disagree() {
        for seed in [0, 1, 42, u64::MAX] {
            let events = generate_events(&spin_run(seed, 2000, 0.0)).unwrap();
            assert!(events.iter().all(|e| e.outcome_a != e.outcome_b));
        }
    }

    #[test]
    fn pi_over_three_frequency() {
        let n = 100_000;
        let events = generate_events(&spin_run(7, n, FRAC_PI_3)).unwrap();
        let t = tally(&events, FamilyKind::SpinTheta).unwrap();
        let c = &t.cells[0];
        let se = binomial_stderr(0.75, n);
        assert!(
            (c.p_opposite() - 0.75).abs() < 3.0 * se,
            "{}",
            c.p_opposite()
        );
    }

    #[test]
    fn mismatched_chirality_filters_never_coincide() {
        let cfg = RunConfig::fixed(
            FamilyKind::Chiral,
            3,
            5000,
            DetectorSetting::chirality(Side::A, Helicity::L),
            DetectorSetting::chirality(Side::B, Helicity::R),
        );
        let events = generate_events(&cfg).unwrap();
        let coincidences = events
            .iter()
            .filter(|e| e.outcome_a == Outcome::Plus && e.outcome_b == Outcome::Plus)
            .count();
        assert_eq!(coincidences, 0);
    }

    #[test]
    fn sequential_and_parallel_streams_match() {
        let mut cfg = spin_run(11, 5000, 1.0);
        cfg.settings_b
            .push(DetectorSetting::stern_gerlach(Side::B, 2.0));
        cfg.policy = SettingPolicy::UniformRandomPerTrial;
        let a = generate_events_with(&cfg, Exec::Sequential).unwrap();
        let b = generate_events_with(&cfg, Exec::Parallel).unwrap();
        assert_eq!(a, b);
        assert!(a.windows(2).all(|w| w[0].pair_id < w[1].pair_id));
    }

    #[test]
    fn single_event_tally() {
        let events = generate_events(&spin_run(5, 1, 0.4)).unwrap();
        let t = tally(&events, FamilyKind::SpinTheta).unwrap();
        assert_eq!(t.cells.len(), 1);
        assert_eq!(t.cells[0].counts.iter().sum::<u64>(), 1);
        assert_eq!(t.cells[0].counts.iter().filter(|&&c| c == 1).count(), 1);
    }

    #[test]
    fn empty_tally_errors() {
        assert!(matches!(
            tally(&[], FamilyKind::SpinTheta),
            Err(Error::EmptyEvents)
        ));
    }

    #[test]
    fn config_errors() {
        let mut cfg = spin_run(0, 0, 0.0);
        assert!(matches!(SettingsTable::build(&cfg), Err(Error::Config(_))));
        cfg.n_pairs = 1;
        cfg.settings_b.clear();
        assert!(matches!(SettingsTable::build(&cfg), Err(Error::Config(_))));
        let bad = RunConfig::fixed(
            FamilyKind::LinearTheta,
            0,
            1,
            DetectorSetting::stern_gerlach(Side::A, 0.0),
            DetectorSetting::polarizer(Side::B, 0.0),
        );
        assert!(matches!(generate_events(&bad), Err(Error::Pairing { .. })));
    }

    #[test]
    fn sampler_respects_zero_cells() {
        let d = crate::correlate::joint_distribution_spin(0.0);
        for k in 0..1000 {
            let u = k as f64 / 1000.0;
            let (a, b) = sample_outcome(&d, u);
            assert_ne!(a, b);
        }
        assert_ne!(
            sample_outcome(&d, 1.0 - f64::EPSILON).0,
            sample_outcome(&d, 1.0 - f64::EPSILON).1
        );
    }

    #[test]
    fn csv_is_stable() {
        let events = generate_events(&spin_run(42, 3, 0.0)).unwrap();
        let mut a = Vec::new();
        let mut b = Vec::new();
        write_csv(&events, FamilyKind::SpinTheta, &mut a).unwrap();
        write_csv(
            &generate_events(&spin_run(42, 3, 0.0)).unwrap(),
            FamilyKind::SpinTheta,
            &mut b,
        )
        .unwrap();
        assert_eq!(a, b);
        let text = String::from_utf8(a).unwrap();
        assert!(text.starts_with(CSV_HEADER));
        assert_eq!(text.lines().count(), 4);
    }

    #[test]
    fn unit_f64_range() {
        assert_eq!(unit_f64(0), 0.0);
        assert!(unit_f64(u64::MAX) < 1.0);
    }
}
