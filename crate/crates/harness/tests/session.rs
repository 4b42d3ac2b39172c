use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};
use std::io::{BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream};
use std::thread;
use std::time::Duration;

use pairsim_core::montecarlo::{chsh_from_tallies, generate_events};
use pairsim_core::{DetectorSetting, FamilyKind, RunConfig, SettingPolicy, Side};
use pairsim_harness::{
    audit, run_detector, run_local, run_source, DetectorConfig, Role, SessionConfig, SourceConfig,
    Transcript, WireMessage,
};

fn spin_fixed(seed: u64, n: u64, omega_b: f64) -> RunConfig {
    RunConfig::fixed(
        FamilyKind::SpinTheta,
        seed,
        n,
        DetectorSetting::stern_gerlach(Side::A, 0.0),
        DetectorSetting::stern_gerlach(Side::B, omega_b),
    )
}

fn chsh_run(seed: u64, n: u64) -> RunConfig {
    RunConfig {
        seed,
        n_pairs: n,
        family: FamilyKind::SpinTheta,
        settings_a: vec![
            DetectorSetting::stern_gerlach(Side::A, 0.0),
            DetectorSetting::stern_gerlach(Side::A, FRAC_PI_2),
        ],
        settings_b: vec![
            DetectorSetting::stern_gerlach(Side::B, FRAC_PI_4),
            DetectorSetting::stern_gerlach(Side::B, 3.0 * FRAC_PI_4),
        ],
        policy: SettingPolicy::UniformRandomPerTrial,
        nodes: 256,
    }
}

#[test]
fn aligned_detectors_always_disagree() {
    let out = run_local(&SessionConfig::new(spin_fixed(5, 1000, 0.0))).unwrap();
    assert!(out.source.complete, "{:?}", out.source.abort);
    assert_eq!(out.source.events.len(), 1000);
    assert!(out.source.events.iter().all(|e| e.outcome_a != e.outcome_b));
    assert!(out.audit.passed(), "{:#?}", out.audit.checks);
    for log in &out.detectors {
        let log = log.as_ref().unwrap();
        assert!(log.done);
        assert_eq!(log.foreign_messages, 0);
        assert!(log.entries.iter().all(|e| e.setting_index == 0));
    }
}

#[test]
fn socket_events_match_the_in_memory_generator() {
    let run = spin_fixed(2024, 3000, PI / 3.0);
    let out = run_local(&SessionConfig::new(run.clone())).unwrap();
    let direct = generate_events(&run).unwrap();
    assert_eq!(out.source.events, direct);
    let tally = out.source.tally.unwrap();
    let cell = tally.cell(0, 0).unwrap();
    assert!((cell.p_opposite() - 0.75).abs() < 3.0 * cell.p_opposite_stderr());
}

#[test]
fn detector_logs_agree_with_source_events() {
    let out = run_local(&SessionConfig::new(chsh_run(8, 500))).unwrap();
    let a = out.detectors[0].as_ref().unwrap();
    let b = out.detectors[1].as_ref().unwrap();
    for ((e, la), lb) in out.source.events.iter().zip(&a.entries).zip(&b.entries) {
        assert_eq!(
            (e.pair_id, e.setting_a, e.outcome_a),
            (la.pair_id, la.setting_index, la.outcome)
        );
        assert_eq!(
            (e.pair_id, e.setting_b, e.outcome_b),
            (lb.pair_id, lb.setting_index, lb.outcome)
        );
    }
}

#[test]
fn chsh_over_sockets_violates_the_bound() {
    let out = run_local(&SessionConfig::new(chsh_run(11, 40_000))).unwrap();
    assert!(out.audit.passed(), "{:#?}", out.audit.checks);
    let t = out.source.tally.unwrap();
    let est = chsh_from_tallies(
        [
            t.cell(0, 0).unwrap(),
            t.cell(0, 1).unwrap(),
            t.cell(1, 0).unwrap(),
            t.cell(1, 1).unwrap(),
        ],
        FamilyKind::SpinTheta,
    );
    let target = 2.0 * 2f64.sqrt();
    assert!(
        (est.s_value.abs() - target).abs() < 3.0 * est.stderr,
        "S = {} ± {}",
        est.s_value,
        est.stderr
    );
}

#[test]
fn injected_relay_breaks_the_star() {
    let mut cfg = SessionConfig::new(chsh_run(3, 200));
    cfg.inject_fault = true;
    let out = run_local(&cfg).unwrap();
    assert!(out.source.complete);
    assert_eq!(out.detectors[1].as_ref().unwrap().foreign_messages, 1);
    let star = out.audit.check("star_topology").unwrap();
    assert!(!star.passed);
    assert!(star.detail.contains("A->B"));
    assert_eq!(star.offending.len(), 1);
    assert!(!out.audit.passed());
}

#[test]
fn transcript_survives_the_file_format() {
    let out = run_local(&SessionConfig::new(chsh_run(4, 300))).unwrap();
    let mut buf = Vec::new();
    out.source.transcript.write_to(&mut buf).unwrap();
    let back = Transcript::read_from(&buf[..]).unwrap();
    assert_eq!(back, out.source.transcript);
    assert_eq!(audit(&back), out.audit);
    assert_eq!(back.len(), 4 + 4 * 300 + 2);
}

#[test]
fn same_local_seed_replays_the_same_settings() {
    let cfg = SessionConfig::new(chsh_run(1, 400));
    let first = run_local(&cfg).unwrap();
    let second = run_local(&cfg).unwrap();
    for i in 0..2 {
        let s1: Vec<usize> = first.detectors[i]
            .as_ref()
            .unwrap()
            .entries
            .iter()
            .map(|e| e.setting_index)
            .collect();
        let s2: Vec<usize> = second.detectors[i]
            .as_ref()
            .unwrap()
            .entries
            .iter()
            .map(|e| e.setting_index)
            .collect();
        assert_eq!(s1, s2);
        assert!(s1.contains(&0) && s1.contains(&1));
    }
    assert_eq!(first.source.events, second.source.events);
}

fn rogue_session(
    script: impl FnOnce(&mut BufReader<TcpStream>, &mut TcpStream) + Send + 'static,
) -> pairsim_harness::SourceReport {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let mut cfg = SourceConfig::new(spin_fixed(0, 5, 0.0));
    cfg.trial_timeout = Duration::from_secs(5);
    let src = thread::spawn(move || run_source(listener, &cfg).unwrap());
    let honest = thread::spawn(move || {
        run_detector(
            addr,
            &DetectorConfig::new(Side::A, 1, SettingPolicy::Fixed, 0, 5),
        )
    });
    let mut stream = TcpStream::connect(addr).unwrap();
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    writeln!(
        stream,
        "{}",
        WireMessage::hello(Role::Detector, Some(Side::B)).encode()
    )
    .unwrap();
    let mut line = String::new();
    reader.read_line(&mut line).unwrap();
    assert!(matches!(
        WireMessage::decode(&line).unwrap(),
        WireMessage::Hello {
            role: Role::Source,
            ..
        }
    ));
    script(&mut reader, &mut stream);
    let report = src.join().unwrap();
    let honest = honest.join().unwrap();
    assert!(honest.is_err());
    report
}

fn last_error(reader: &mut BufReader<TcpStream>) -> String {
    let mut code = String::new();
    for line in reader.lines() {
        let Ok(line) = line else { break };
        if let Ok(WireMessage::Error { code: c, .. }) = WireMessage::decode(&line) {
            code = c;
        }
    }
    code
}

#[test]
fn out_of_order_pair_aborts_the_session() {
    let report = rogue_session(|reader, stream| {
        writeln!(
            stream,
            "{}",
            WireMessage::Setting {
                pair_id: 3,
                side: Side::B,
                setting_index: 0
            }
            .encode()
        )
        .unwrap();
        assert_eq!(last_error(reader), "out_of_order");
    });
    assert!(!report.complete);
    assert!(report.abort.unwrap().starts_with("out_of_order"));
    assert!(!audit(&report.transcript).passed());
}

#[test]
fn duplicate_setting_aborts_the_session() {
    let report = rogue_session(|reader, stream| {
        let s = WireMessage::Setting {
            pair_id: 0,
            side: Side::B,
            setting_index: 0,
        }
        .encode();
        writeln!(stream, "{s}\n{s}").unwrap();
        assert_eq!(last_error(reader), "duplicate_setting");
    });
    assert!(!report.complete);
}

#[test]
fn malformed_line_aborts_the_session() {
    let report = rogue_session(|reader, stream| {
        writeln!(stream, "{{\"type\":\"setting\",\"pair_id\":\"zero\"}}").unwrap();
        assert_eq!(last_error(reader), "malformed");
    });
    assert!(report.abort.unwrap().starts_with("malformed"));
}

#[test]
fn disconnect_leaves_an_incomplete_transcript() {
    let report = rogue_session(|_, stream| {
        stream.shutdown(std::net::Shutdown::Both).unwrap();
    });
    assert!(!report.complete);
    assert!(!report.transcript.is_complete());
    assert!(report.abort.unwrap().starts_with("disconnect"));
}

#[test]
fn missing_detector_times_out() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let mut cfg = SourceConfig::new(spin_fixed(0, 5, 0.0));
    cfg.handshake_timeout = Duration::from_millis(200);
    let src = thread::spawn(move || run_source(listener, &cfg).unwrap());
    let _only = TcpStream::connect(addr).unwrap();
    let report = src.join().unwrap();
    assert!(!report.complete);
    assert!(report.abort.unwrap().starts_with("timeout"));
}
