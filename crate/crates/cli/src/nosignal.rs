//! Multi-process sessions. `pairsim nosignal` re-executes its own binary as
//! one `source` and two `detector` children, then audits the transcript the
//! source wrote.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};
use std::fs::File;
use std::io::{self, BufRead, BufReader, Read, Write};
use std::net::{SocketAddr, TcpListener};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Stdio};
use std::time::Duration;

use pairsim_core::montecarlo::chsh_from_tallies;
use pairsim_core::{
    format_float, DetectorSetting, FamilyKind, RunConfig, SettingPolicy, Side, TallySummary,
};
use pairsim_harness::{audit, run_detector, run_source, DetectorConfig, SourceConfig, Transcript};
use serde::{Deserialize, Serialize};

use crate::commands::write_tally;
use crate::config::{Angles, CliConfig, CONFIG_ENV};
use crate::{CliError, EXIT_OK, EXIT_RUNTIME};

const LISTENING: &str = "listening ";
const REPORT: &str = "report ";

fn angle_setting(family: FamilyKind, side: Side, omega: f64) -> Result<DetectorSetting, CliError> {
    match family {
        FamilyKind::SpinTheta => Ok(DetectorSetting::stern_gerlach(side, omega)),
        FamilyKind::LinearTheta => Ok(DetectorSetting::polarizer(side, omega)),
        other => Err(CliError::Usage(format!(
            "nosignal needs an angle family (spin or linear), not {other}"
        ))),
    }
}

fn parse_side(s: &str) -> Result<Side, CliError> {
    match s {
        "A" | "a" => Ok(Side::A),
        "B" | "b" => Ok(Side::B),
        other => Err(CliError::Usage(format!(
            "side must be A or B, got {other:?}"
        ))),
    }
}

fn join_angles(v: &[f64]) -> String {
    v.iter()
        .map(|x| format_float(*x))
        .collect::<Vec<_>>()
        .join(",")
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SourceSummary {
    pub complete: bool,
    pub abort: Option<String>,
    pub tally: Option<TallySummary>,
}

/// Hidden `source` subcommand.
pub fn source(
    cfg: &CliConfig,
    listen: &str,
    settings_a: &[f64],
    settings_b: &[f64],
    transcript: &Path,
    inject_fault: bool,
    (handshake_ms, trial_ms): (u64, u64),
) -> Result<i32, CliError> {
    let side_settings = |side, v: &[f64]| -> Result<Vec<DetectorSetting>, CliError> {
        v.iter()
            .map(|&w| angle_setting(cfg.family, side, cfg.angle(w)))
            .collect()
    };
    let run = RunConfig {
        seed: cfg.seed,
        n_pairs: cfg.n_pairs,
        family: cfg.family,
        settings_a: side_settings(Side::A, settings_a)?,
        settings_b: side_settings(Side::B, settings_b)?,
        policy: SettingPolicy::UniformRandomPerTrial,
        nodes: cfg.nodes,
    };
    let listener =
        TcpListener::bind(listen).map_err(CliError::io(format!("cannot bind {listen}")))?;
    let addr = listener
        .local_addr()
        .map_err(CliError::io("reading bound address"))?;
    {
        let mut out = io::stdout().lock();
        writeln!(out, "{LISTENING}{addr}")
            .and_then(|_| out.flush())
            .map_err(CliError::io("stdout"))?;
    }
    let source_cfg = SourceConfig {
        run,
        handshake_timeout: Duration::from_millis(handshake_ms),
        trial_timeout: Duration::from_millis(trial_ms),
        inject_fault,
    };
    let report = run_source(listener, &source_cfg)?;
    let file = File::create(transcript).map_err(CliError::io(format!(
        "cannot create {}",
        transcript.display()
    )))?;
    report.transcript.write_to(io::BufWriter::new(file))?;
    let summary = SourceSummary {
        complete: report.complete,
        abort: report.abort,
        tally: report.tally,
    };
    let json = serde_json::to_string(&summary).map_err(|e| CliError::Runtime(e.to_string()))?;
    println!("{REPORT}{json}");
    Ok(if summary.complete {
        EXIT_OK
    } else {
        EXIT_RUNTIME
    })
}

/// Hidden `detector` subcommand.
pub fn detector(
    cfg: &CliConfig,
    connect: SocketAddr,
    side: &str,
    settings_count: usize,
    uniform: bool,
    local_seed: u64,
    log_path: Option<&Path>,
) -> Result<i32, CliError> {
    let side = parse_side(side)?;
    let policy = if uniform {
        SettingPolicy::UniformRandomPerTrial
    } else {
        SettingPolicy::Fixed
    };
    let log = run_detector(
        connect,
        &DetectorConfig::new(side, settings_count, policy, local_seed, cfg.n_pairs),
    )?;
    if let Some(path) = log_path {
        let mut w = io::BufWriter::new(
            File::create(path)
                .map_err(CliError::io(format!("cannot create {}", path.display())))?,
        );
        for e in &log.entries {
            serde_json::to_writer(&mut w, e).map_err(|e| CliError::Runtime(e.to_string()))?;
            writeln!(w).map_err(CliError::io("writing detector log"))?;
        }
        w.flush().map_err(CliError::io("writing detector log"))?;
    }
    let plus = log
        .entries
        .iter()
        .filter(|e| e.outcome == pairsim_core::Outcome::Plus)
        .count();
    println!(
        "detector {side} entries={} plus={} foreign_messages={} done={}",
        log.entries.len(),
        plus,
        log.foreign_messages,
        log.done
    );
    Ok(EXIT_OK)
}

fn child_output(mut child: Child, name: &str) -> Result<(bool, String, String), CliError> {
    let mut out = String::new();
    let mut err = String::new();
    if let Some(mut s) = child.stdout.take() {
        s.read_to_string(&mut out)
            .map_err(CliError::io(format!("reading {name} output")))?;
    }
    if let Some(mut s) = child.stderr.take() {
        s.read_to_string(&mut err)
            .map_err(CliError::io(format!("reading {name} errors")))?;
    }
    let status = child
        .wait()
        .map_err(CliError::io(format!("waiting for {name}")))?;
    Ok((status.success(), out, err))
}

fn base_command(exe: &Path, cfg: &CliConfig, sub: &str) -> Command {
    let mut cmd = Command::new(exe);
    cmd.env_remove(CONFIG_ENV)
        .arg(sub)
        .args(["--family", cfg.family.name()])
        .args(["--seed", &cfg.seed.to_string()])
        .args(["--n", &cfg.n_pairs.to_string()])
        .args(["--nodes", &cfg.nodes.to_string()])
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped());
    cmd
}

fn temp_transcript() -> PathBuf {
    let nanos = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_nanos())
        .unwrap_or(0);
    std::env::temp_dir().join(format!(
        "pairsim-{}-{nanos}.transcript.tsv",
        std::process::id()
    ))
}

/// `pairsim nosignal`.
pub fn orchestrate(
    cfg: &CliConfig,
    settings_a: Option<&[f64]>,
    settings_b: Option<&[f64]>,
    inject_fault: bool,
) -> Result<i32, CliError> {
    angle_setting(cfg.family, Side::A, 0.0)?;
    let convert = |v: &[f64]| v.iter().map(|&x| cfg.angle(x)).collect::<Vec<f64>>();
    let (a, b) = match (settings_a, settings_b, &cfg.angles) {
        (None, None, Some(Angles::Fixed(w))) => (vec![0.0], vec![*w]),
        (None, None, Some(Angles::Grid(_))) => {
            return Err(CliError::Usage(
                "nosignal takes --omega or explicit settings, not --scan".into(),
            ));
        }
        (sa, sb, _) => (
            sa.map(convert).unwrap_or_else(|| vec![0.0, FRAC_PI_2]),
            sb.map(convert)
                .unwrap_or_else(|| vec![FRAC_PI_4, 3.0 * FRAC_PI_4]),
        ),
    };
    if a.is_empty() || b.is_empty() {
        return Err(CliError::Usage(
            "each side needs at least one setting".into(),
        ));
    }
    let uniform = a.len() > 1 || b.len() > 1;
    let (transcript_path, keep) = match &cfg.out {
        Some(p) => (p.clone(), true),
        None => (temp_transcript(), false),
    };
    let exe = std::env::current_exe().map_err(CliError::io("locating own executable"))?;

    let mut src_cmd = base_command(&exe, cfg, "source");
    src_cmd
        .args(["--listen", "127.0.0.1:0"])
        .arg(format!("--settings-a={}", join_angles(&a)))
        .arg(format!("--settings-b={}", join_angles(&b)))
        .arg("--transcript")
        .arg(&transcript_path);
    if inject_fault {
        src_cmd.arg("--inject-fault");
    }
    let mut source = src_cmd.spawn().map_err(CliError::io("spawning source"))?;
    let mut src_out = BufReader::new(source.stdout.take().expect("piped"));
    let mut first = String::new();
    src_out
        .read_line(&mut first)
        .map_err(CliError::io("reading source address"))?;
    let Some(addr) = first.trim().strip_prefix(LISTENING) else {
        let _ = source.kill();
        let (_, _, err) = child_output(source, "source")?;
        return Err(CliError::Runtime(format!(
            "source did not report an address: {}",
            err.trim()
        )));
    };
    println!("source listening on {addr}");

    let mut detectors = Vec::new();
    for (side, n_settings, seed) in [
        ("A", a.len(), cfg.seed.wrapping_add(1)),
        ("B", b.len(), cfg.seed.wrapping_add(2)),
    ] {
        let mut cmd = base_command(&exe, cfg, "detector");
        cmd.args(["--connect", addr, "--side", side])
            .args(["--settings-count", &n_settings.to_string()])
            .args(["--local-seed", &seed.to_string()]);
        if uniform {
            cmd.arg("--uniform");
        }
        detectors.push((
            side,
            cmd.spawn()
                .map_err(CliError::io(format!("spawning detector {side}")))?,
        ));
    }
    for (side, child) in detectors {
        let (ok, out, err) = child_output(child, &format!("detector {side}"))?;
        print!("{out}");
        if !ok {
            eprintln!("detector {side} failed: {}", err.trim());
        }
    }
    let mut rest = String::new();
    src_out
        .read_to_string(&mut rest)
        .map_err(CliError::io("reading source report"))?;
    let (_, _, src_err) = child_output(source, "source")?;
    let summary: Option<SourceSummary> = rest
        .lines()
        .find_map(|l| l.strip_prefix(REPORT))
        .and_then(|j| serde_json::from_str(j).ok());
    let Some(summary) = summary else {
        return Err(CliError::Runtime(format!(
            "source produced no report: {}",
            src_err.trim()
        )));
    };

    let transcript = Transcript::read_from(BufReader::new(File::open(&transcript_path).map_err(
        CliError::io(format!("cannot open {}", transcript_path.display())),
    )?))?;
    if !keep {
        let _ = std::fs::remove_file(&transcript_path);
    }
    let report = audit(&transcript);

    let mut w = io::stdout().lock();
    let res = (|| -> io::Result<()> {
        writeln!(
            w,
            "session complete={} records={} transcript={}",
            summary.complete,
            transcript.len(),
            if keep {
                transcript_path.display().to_string()
            } else {
                "(discarded)".to_string()
            }
        )?;
        if let Some(reason) = &summary.abort {
            writeln!(w, "aborted: {reason}")?;
        }
        if let Some(t) = &summary.tally {
            write_tally(t, &mut w)?;
            if let [Some(c00), Some(c01), Some(c10), Some(c11)] =
                [t.cell(0, 0), t.cell(0, 1), t.cell(1, 0), t.cell(1, 1)]
            {
                let est = chsh_from_tallies([c00, c01, c10, c11], t.family);
                writeln!(
                    w,
                    "chsh S={} stderr={}",
                    format_float(est.s_value),
                    format_float(est.stderr)
                )?;
            }
        }
        for m in &report.marginals {
            writeln!(
                w,
                "marginal side={} remote_setting={} n={} p_plus={} stderr={}",
                m.side,
                m.remote_setting,
                m.n,
                format_float(m.p_plus),
                format_float(m.stderr)
            )?;
        }
        for c in &report.checks {
            writeln!(w, "{c}")?;
        }
        writeln!(w, "audit {}", if report.passed() { "PASS" } else { "FAIL" })?;
        w.flush()
    })();
    res.map_err(CliError::io("writing session report"))?;
    Ok(if report.passed() && summary.complete {
        EXIT_OK
    } else {
        EXIT_RUNTIME
    })
}
