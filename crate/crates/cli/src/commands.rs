use std::fs::File;
use std::io::{self, BufWriter, Write};

use pairsim_core::checks::{run_all, Check};
use pairsim_core::correlate::{
    self, chsh as chsh_value, max_cosine_law_discrepancy, ChshSource, ScanRow,
};
use pairsim_core::montecarlo::{generate_events, outcome_label, tally, write_csv, write_jsonl};
use pairsim_core::states::{Helicity, Qubit};
use pairsim_core::{
    format_float, ChshSettings, DetectorSetting, Exec, FamilyKind, LhvModel, QuadratureRule,
    RunConfig, SettingPolicy, Side, TallySummary,
};
use pairsim_harness::{run_local, SessionConfig};
use serde::Serialize;

use crate::config::{CliConfig, Format};
use crate::{CliError, EXIT_NO_VIOLATION, EXIT_OK, EXIT_RUNTIME};

pub fn open_output(cfg: &CliConfig) -> Result<Box<dyn Write>, CliError> {
    Ok(match &cfg.out {
        Some(path) => Box::new(BufWriter::new(
            File::create(path)
                .map_err(CliError::io(format!("cannot create {}", path.display())))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

pub const SCAN_COLUMNS: &str = "omega,p_opposite,p_same,E,oracle_p_opposite,abs_error";

#[derive(Serialize)]
struct ScanJson {
    omega: f64,
    p_opposite: f64,
    p_same: f64,
    #[serde(rename = "E")]
    e: f64,
    oracle_p_opposite: f64,
    abs_error: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    cosine_law_p: Option<f64>,
}

#[derive(Serialize)]
struct DiscrepancyJson {
    max_abs_discrepancy: f64,
    omega: f64,
}

pub fn write_scan<W: Write>(rows: &[ScanRow], format: Format, mut w: W) -> io::Result<()> {
    let claim = rows.iter().any(|r| r.cosine_law_p.is_some());
    let summary = max_cosine_law_discrepancy(rows);
    match format {
        Format::Csv => {
            writeln!(
                w,
                "{SCAN_COLUMNS}{}",
                if claim { ",cosine_law_p" } else { "" }
            )?;
            for r in rows {
                let mut line = [
                    r.omega,
                    r.p_opposite,
                    r.p_same,
                    r.e,
                    r.oracle_p_opposite,
                    r.abs_error,
                ]
                .map(format_float)
                .join(",");
                if let Some(c) = r.cosine_law_p {
                    line.push(',');
                    line.push_str(&format_float(c));
                }
                writeln!(w, "{line}")?;
            }
            if let Some((d, omega)) = summary {
                writeln!(
                    w,
                    "# max_abs_discrepancy={},omega={}",
                    format_float(d),
                    format_float(omega)
                )?;
            }
        }
        Format::Jsonl => {
            for r in rows {
                let rec = ScanJson {
                    omega: r.omega,
                    p_opposite: r.p_opposite,
                    p_same: r.p_same,
                    e: r.e,
                    oracle_p_opposite: r.oracle_p_opposite,
                    abs_error: r.abs_error,
                    cosine_law_p: r.cosine_law_p,
                };
                serde_json::to_writer(&mut w, &rec)?;
                writeln!(w)?;
            }
            if let Some((d, omega)) = summary {
                serde_json::to_writer(
                    &mut w,
                    &DiscrepancyJson {
                        max_abs_discrepancy: d,
                        omega,
                    },
                )?;
                writeln!(w)?;
            }
        }
    }
    w.flush()
}

pub fn scan(cfg: &CliConfig) -> Result<i32, CliError> {
    let rule = QuadratureRule::uniform(cfg.nodes)?;
    let rows = correlate::scan(cfg.family, &cfg.scan_angles(), &rule, Exec::default())?;
    write_scan(&rows, cfg.format, open_output(cfg)?).map_err(CliError::io("writing scan"))?;
    Ok(EXIT_OK)
}

/// S must clear the classical bound by this much to count as a violation,
/// so rounding in `S = 2` cases cannot flip the verdict.
pub const VIOLATION_MARGIN: f64 = 1e-9;

#[derive(Serialize)]
struct ChshReport {
    settings: ChshSettings,
    quantum_e: [f64; 4],
    quantum_s: f64,
    lhv_e: [f64; 4],
    lhv_s: f64,
    difference: f64,
    violation: bool,
}

pub fn chsh(cfg: &CliConfig, settings: Option<&[f64]>) -> Result<i32, CliError> {
    if cfg.family != FamilyKind::SpinTheta {
        return Err(CliError::Usage(format!(
            "chsh is defined for the spin family, not {}",
            cfg.family
        )));
    }
    let settings = match settings {
        None => ChshSettings::CANONICAL,
        Some(v) => {
            let v: Vec<f64> = v.iter().map(|&x| cfg.angle(x)).collect();
            ChshSettings::from_slice(&v).ok_or_else(|| {
                CliError::Usage(format!(
                    "--settings needs exactly four angles a,a',b,b'; got {}",
                    v.len()
                ))
            })?
        }
    };
    let q = chsh_value(settings, ChshSource::Quantum);
    let l = chsh_value(settings, ChshSource::Lhv(LhvModel::default()));
    let e =
        |r: &pairsim_core::ChshResult| [r.e_ab, r.e_ab_prime, r.e_a_prime_b, r.e_a_prime_b_prime];
    let report = ChshReport {
        settings,
        quantum_e: e(&q),
        quantum_s: q.s_value,
        lhv_e: e(&l),
        lhv_s: l.s_value,
        difference: q.s_value - l.s_value,
        violation: q.s_value > 2.0 + VIOLATION_MARGIN,
    };
    let mut w = open_output(cfg)?;
    let write = |w: &mut dyn Write| -> io::Result<()> {
        match cfg.format {
            Format::Jsonl => {
                serde_json::to_writer(&mut *w, &report)?;
                writeln!(w)?;
            }
            Format::Csv => {
                let list = |e: [f64; 4]| e.map(format_float).join(",");
                writeln!(
                    w,
                    "settings a={} a'={} b={} b'={}",
                    format_float(settings.a),
                    format_float(settings.a_prime),
                    format_float(settings.b),
                    format_float(settings.b_prime)
                )?;
                writeln!(w, "quantum_E={}", list(report.quantum_e))?;
                writeln!(w, "quantum_S={}", format_float(report.quantum_s))?;
                writeln!(w, "lhv_E={}", list(report.lhv_e))?;
                writeln!(w, "lhv_S={}", format_float(report.lhv_s))?;
                writeln!(w, "difference={}", format_float(report.difference))?;
                writeln!(w, "violation={}", report.violation)?;
            }
        }
        w.flush()
    };
    write(&mut *w).map_err(CliError::io("writing chsh report"))?;
    Ok(if report.violation {
        EXIT_OK
    } else {
        EXIT_NO_VIOLATION
    })
}

fn parse_helicity(s: &str) -> Result<Helicity, CliError> {
    match s {
        "L" | "l" => Ok(Helicity::L),
        "R" | "r" => Ok(Helicity::R),
        other => Err(CliError::Usage(format!(
            "chirality filter must be L or R, got {other:?}"
        ))),
    }
}

fn parse_qubit(s: &str) -> Result<Qubit, CliError> {
    match s {
        "0" => Ok(Qubit::Zero),
        "1" => Ok(Qubit::One),
        other => Err(CliError::Usage(format!(
            "qubit readout must be 0 or 1, got {other:?}"
        ))),
    }
}

/// A's and B's detectors for a fixed-settings run of `family`.
pub fn fixed_settings(
    family: FamilyKind,
    omega: f64,
    pass_a: Option<&str>,
    pass_b: Option<&str>,
) -> Result<(DetectorSetting, DetectorSetting), CliError> {
    if family.has_angle() && (pass_a.is_some() || pass_b.is_some()) {
        return Err(CliError::Usage(format!(
            "--pass-a/--pass-b apply to chiral and crypto, not {family}"
        )));
    }
    Ok(match family {
        FamilyKind::SpinTheta => (
            DetectorSetting::stern_gerlach(Side::A, 0.0),
            DetectorSetting::stern_gerlach(Side::B, omega),
        ),
        FamilyKind::LinearTheta => (
            DetectorSetting::polarizer(Side::A, 0.0),
            DetectorSetting::polarizer(Side::B, omega),
        ),
        FamilyKind::Chiral => (
            DetectorSetting::chirality(Side::A, parse_helicity(pass_a.unwrap_or("L"))?),
            DetectorSetting::chirality(Side::B, parse_helicity(pass_b.unwrap_or("L"))?),
        ),
        FamilyKind::Crypto => (
            DetectorSetting::qubit(Side::A, parse_qubit(pass_a.unwrap_or("0"))?),
            DetectorSetting::qubit(Side::B, parse_qubit(pass_b.unwrap_or("0"))?),
        ),
    })
}

pub fn write_tally<W: Write>(t: &TallySummary, mut w: W) -> io::Result<()> {
    writeln!(w, "family={} n_pairs={}", t.family, t.n_pairs)?;
    for c in &t.cells {
        writeln!(
            w,
            "settings a={} b={} n={} p_opposite={} stderr={} E={}",
            c.setting_a,
            c.setting_b,
            c.n,
            format_float(c.p_opposite()),
            format_float(c.p_opposite_stderr()),
            format_float(c.correlation(t.family)),
        )?;
        for (k, (oa, ob)) in correlate::CELL_ORDER.iter().enumerate() {
            writeln!(
                w,
                "  a={} b={} count={} p={}",
                outcome_label(t.family, *oa),
                outcome_label(t.family, *ob),
                c.counts[k],
                format_float(c.probabilities[k]),
            )?;
        }
        writeln!(w, "  coincidences={}", c.counts[0])?;
    }
    w.flush()
}

pub fn events(
    cfg: &CliConfig,
    pass_a: Option<&str>,
    pass_b: Option<&str>,
) -> Result<i32, CliError> {
    let omega = cfg.fixed_angle("events")?;
    if !cfg.family.has_angle() && cfg.angles.is_some() {
        return Err(CliError::Usage(format!(
            "the {} family has no analysis angle",
            cfg.family
        )));
    }
    let (a, b) = fixed_settings(cfg.family, omega, pass_a, pass_b)?;
    let mut run = RunConfig::fixed(cfg.family, cfg.seed, cfg.n_pairs, a, b);
    run.nodes = cfg.nodes;
    let events = generate_events(&run)?;
    let mut w = open_output(cfg)?;
    match cfg.format {
        Format::Csv => write_csv(&events, cfg.family, &mut w)?,
        Format::Jsonl => write_jsonl(&events, cfg.family, &mut w)?,
    }
    w.flush().map_err(CliError::io("writing events"))?;
    drop(w);
    let summary = tally(&events, cfg.family)?;
    let res = if cfg.out.is_some() {
        write_tally(&summary, io::stdout().lock())
    } else {
        write_tally(&summary, io::stderr().lock())
    };
    res.map_err(CliError::io("writing tally"))?;
    Ok(EXIT_OK)
}

/// Two socket sessions: a clean one whose audit must pass and a faulted one
/// whose audit must flag the relayed edge.
pub fn harness_checks() -> Vec<Check> {
    let run = RunConfig {
        seed: 17,
        n_pairs: 2000,
        family: FamilyKind::SpinTheta,
        settings_a: vec![
            DetectorSetting::stern_gerlach(Side::A, 0.0),
            DetectorSetting::stern_gerlach(Side::A, std::f64::consts::FRAC_PI_2),
        ],
        settings_b: vec![
            DetectorSetting::stern_gerlach(Side::B, std::f64::consts::FRAC_PI_4),
            DetectorSetting::stern_gerlach(Side::B, 3.0 * std::f64::consts::FRAC_PI_4),
        ],
        policy: SettingPolicy::UniformRandomPerTrial,
        nodes: 256,
    };
    let clean = SessionConfig::new(run);
    let mut faulted = clean.clone();
    faulted.inject_fault = true;
    let failures = |cfg: &SessionConfig| match run_local(cfg) {
        Ok(out) if out.source.complete => {
            let failed = out.audit.checks.iter().filter(|c| !c.passed).count() as f64;
            let star_edges = out
                .audit
                .check("star_topology")
                .map_or(0, |c| c.offending.len()) as f64;
            (failed, star_edges)
        }
        _ => (f64::INFINITY, 0.0),
    };
    vec![
        Check::exact("harness.clean_audit_failures", failures(&clean).0, 0.0),
        Check::at_least("harness.fault_edges_flagged", failures(&faulted).1, 1.0),
    ]
}

pub fn write_checks<W: Write>(checks: &[Check], mut w: W) -> io::Result<()> {
    for c in checks {
        writeln!(
            w,
            "{} {:<40} tolerance {:<12} observed {}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.tolerance,
            format_float(c.observed)
        )?;
    }
    w.flush()
}

pub fn validate(cfg: &CliConfig) -> Result<i32, CliError> {
    let rule = QuadratureRule::uniform(cfg.nodes)?;
    let mut checks = run_all(&rule, Exec::default());
    checks.extend(harness_checks());
    write_checks(&checks, open_output(cfg)?).map_err(CliError::io("writing checks"))?;
    let failed: Vec<&str> = checks
        .iter()
        .filter(|c| !c.passed)
        .map(|c| c.name)
        .collect();
    if failed.is_empty() {
        Ok(EXIT_OK)
    } else {
        eprintln!(
            "pairsim: {} check(s) failed: {}",
            failed.len(),
            failed.join(", ")
        );
        Ok(EXIT_RUNTIME)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn spin_scan_csv_shape() {
        let rule = QuadratureRule::uniform(64).unwrap();
        let rows = correlate::scan(
            FamilyKind::SpinTheta,
            &[0.0, PI / 3.0],
            &rule,
            Exec::Sequential,
        )
        .unwrap();
        let mut buf = Vec::new();
        write_scan(&rows, Format::Csv, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], SCAN_COLUMNS);
        let first: Vec<f64> = lines[1].split(',').map(|x| x.parse().unwrap()).collect();
        assert_eq!(first.len(), 6);
        assert!((first[1] - 1.0).abs() < 1e-12 && first[2].abs() < 1e-12);
        assert_eq!(lines.len(), 3);
    }

    #[test]
    fn linear_scan_adds_claim_column_and_summary() {
        let rule = QuadratureRule::uniform(64).unwrap();
        let rows = correlate::scan(
            FamilyKind::LinearTheta,
            &[0.0, 1.0],
            &rule,
            Exec::Sequential,
        )
        .unwrap();
        let mut buf = Vec::new();
        write_scan(&rows, Format::Csv, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with(&format!("{SCAN_COLUMNS},cosine_law_p\n")));
        assert!(text
            .lines()
            .last()
            .unwrap()
            .starts_with("# max_abs_discrepancy="));
        let mut buf = Vec::new();
        write_scan(&rows, Format::Jsonl, &mut buf).unwrap();
        let last: serde_json::Value =
            serde_json::from_str(String::from_utf8(buf).unwrap().lines().last().unwrap()).unwrap();
        assert!(last["max_abs_discrepancy"].is_f64());
    }

    #[test]
    fn jsonl_rows_keep_column_order() {
        let rule = QuadratureRule::uniform(64).unwrap();
        let rows = correlate::scan(FamilyKind::SpinTheta, &[0.5], &rule, Exec::Sequential).unwrap();
        let mut buf = Vec::new();
        write_scan(&rows, Format::Jsonl, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let keys: Vec<&str> = [
            "omega",
            "p_opposite",
            "p_same",
            "\"E\"",
            "oracle_p_opposite",
            "abs_error",
        ]
        .to_vec();
        let pos: Vec<usize> = keys.iter().map(|k| text.find(k).unwrap()).collect();
        assert!(pos.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn filter_parsing() {
        assert!(fixed_settings(FamilyKind::Chiral, 0.0, Some("L"), Some("R")).is_ok());
        assert!(matches!(
            fixed_settings(FamilyKind::Chiral, 0.0, Some("X"), None),
            Err(CliError::Usage(_))
        ));
        assert!(fixed_settings(FamilyKind::Crypto, 0.0, Some("0"), Some("1")).is_ok());
        assert!(fixed_settings(FamilyKind::Crypto, 0.0, None, None).is_ok());
        assert!(fixed_settings(FamilyKind::SpinTheta, 0.0, Some("L"), None).is_err());
    }
}
