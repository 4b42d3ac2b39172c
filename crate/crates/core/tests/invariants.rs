use std::f64::consts::{SQRT_2, TAU};

use pairsim_core::correlate::{
    amplitude_spin, chsh, linear_distribution, marginal, spin_distribution, ChshSource,
};
use pairsim_core::montecarlo::{generate_events, generate_events_with, unit_f64};
use pairsim_core::states::norm_with;
use pairsim_core::{
    format_float, ChshSettings, ComplexExt, DetectorSetting, Exec, FamilyKind, LhvModel,
    PairFamily, Port, QuadratureRule, RunConfig, SettingPolicy, Side,
};
use proptest::prelude::*;

fn angle() -> impl Strategy<Value = f64> {
    -TAU..TAU
}

fn family() -> impl Strategy<Value = FamilyKind> {
    prop::sample::select(FamilyKind::ALL.to_vec())
}

fn two_setting_run(seed: u64, n: u64, a: [f64; 2], b: [f64; 2]) -> RunConfig {
    RunConfig {
        settings_a: a
            .iter()
            .map(|&w| DetectorSetting::stern_gerlach(Side::A, w))
            .collect(),
        settings_b: b
            .iter()
            .map(|&w| DetectorSetting::stern_gerlach(Side::B, w))
            .collect(),
        policy: SettingPolicy::UniformRandomPerTrial,
        ..RunConfig::fixed(
            FamilyKind::SpinTheta,
            seed,
            n,
            DetectorSetting::stern_gerlach(Side::A, 0.0),
            DetectorSetting::stern_gerlach(Side::B, 0.0),
        )
    }
}

proptest! {
    #[test]
    fn every_family_is_normalized(kind in family(), nodes in 8usize..600) {
        let rule = QuadratureRule::uniform(nodes).unwrap();
        let norm = norm_with(&PairFamily::of_kind(kind), &rule).unwrap();
        prop_assert!((norm - 1.0).abs() < 1e-10, "{kind}: {norm}");
    }

    #[test]
    fn exchange_sign_holds_at_any_theta(kind in family(), theta in angle()) {
        prop_assert!(PairFamily::of_kind(kind).exchange_defect(theta) < 1e-12);
    }

    #[test]
    fn spin_amplitude_ignores_theta(theta in angle(), omega in angle(), pa in 0usize..2, pb in 0usize..2) {
        let (pa, pb) = (Port::BOTH[pa], Port::BOTH[pb]);
        let d = amplitude_spin(theta, pa, omega, pb).dist(amplitude_spin(0.0, pa, omega, pb));
        prop_assert!(d < 1e-12);
    }

    #[test]
    fn spin_distribution_is_a_cosine_law(a in angle(), b in angle()) {
        let d = spin_distribution(a, b);
        prop_assert!(d.cells().iter().all(|&p| p >= -1e-15));
        prop_assert!((d.total() - 1.0).abs() < 1e-12);
        prop_assert!((d.p_opposite() - (1.0 + (b - a).cos()) / 2.0).abs() < 1e-12);
        for side in [Side::A, Side::B] {
            prop_assert!((d.marginal(side) - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn linear_distribution_is_normalized_and_unbiased(a in angle(), b in angle()) {
        let rule = QuadratureRule::uniform(64).unwrap();
        let d = linear_distribution(a, b, &rule).unwrap();
        prop_assert!((d.total() - 1.0).abs() < 1e-12);
        prop_assert!((d.p_same() - (2.0 + (2.0 * (b - a)).cos()) / 4.0).abs() < 1e-12);
        for side in [Side::A, Side::B] {
            prop_assert!((d.marginal(side) - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn remote_setting_never_moves_a_marginal(omega in angle()) {
        for kind in [FamilyKind::SpinTheta, FamilyKind::LinearTheta] {
            for side in [Side::A, Side::B] {
                prop_assert!((marginal(omega, side, kind).unwrap() - 0.5).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn chsh_respects_both_bounds(s in prop::array::uniform4(angle())) {
        let settings = ChshSettings::from_slice(&s).unwrap();
        let quantum = chsh(settings, ChshSource::Quantum).s_value;
        let lhv = chsh(settings, ChshSource::Lhv(LhvModel::default())).s_value;
        prop_assert!(quantum <= 2.0 * SQRT_2 + 1e-9, "{quantum}");
        prop_assert!(lhv <= 2.0 + 1e-9, "{lhv}");
    }

    #[test]
    fn unit_draws_stay_in_the_half_open_interval(word in any::<u64>()) {
        let u = unit_f64(word);
        prop_assert!((0.0..1.0).contains(&u));
    }

    #[test]
    fn float_text_round_trips(x in any::<f64>().prop_filter("finite", |x| x.is_finite())) {
        let back: f64 = format_float(x).parse().unwrap();
        prop_assert_eq!(back, if x == 0.0 { 0.0 } else { x });
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn runs_replay_bit_for_bit(seed in any::<u64>(), n in 1u64..400, a in prop::array::uniform2(angle()), b in prop::array::uniform2(angle())) {
        let run = two_setting_run(seed, n, a, b);
        let first = generate_events(&run).unwrap();
        prop_assert_eq!(&first, &generate_events(&run).unwrap());
        prop_assert_eq!(&first, &generate_events_with(&run, Exec::Sequential).unwrap());
        prop_assert_eq!(&first, &generate_events_with(&run, Exec::Parallel).unwrap());
    }

    #[test]
    fn shorter_runs_are_prefixes(seed in any::<u64>(), n in 2u64..300, cut in 1u64..300) {
        let cut = cut.min(n);
        let long = generate_events(&two_setting_run(seed, n, [0.0, 1.0], [0.5, 2.0])).unwrap();
        let short = generate_events(&two_setting_run(seed, cut, [0.0, 1.0], [0.5, 2.0])).unwrap();
        prop_assert_eq!(&long[..cut as usize], &short[..]);
    }

    #[test]
    fn aligned_spin_detectors_always_disagree(seed in any::<u64>(), omega in angle()) {
        let run = RunConfig::fixed(
            FamilyKind::SpinTheta,
            seed,
            200,
            DetectorSetting::stern_gerlach(Side::A, omega),
            DetectorSetting::stern_gerlach(Side::B, omega),
        );
        prop_assert!(generate_events(&run).unwrap().iter().all(|e| e.outcome_a != e.outcome_b));
    }
}

#[test]
fn hidden_angle_stays_in_one_period() {
    let run = two_setting_run(3, 2000, [0.0, 1.0], [0.5, 2.0]);
    assert!(generate_events(&run)
        .unwrap()
        .iter()
        .all(|e| (0.0..TAU).contains(&e.theta_hidden)));
}
