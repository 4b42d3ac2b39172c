//! Option resolution: command-line flags, then the config file, then
//! built-in defaults.

use std::path::{Path, PathBuf};

use pairsim_core::correlate::uniform_grid;
use pairsim_core::FamilyKind;
use serde::Deserialize;

use crate::CliError;

pub const CONFIG_ENV: &str = "PAIRSIM_CONFIG";
pub const DEFAULT_NODES: usize = 256;
pub const MIN_NODES: usize = 8;
pub const DEFAULT_GRID: usize = 64;
pub const DEFAULT_N: u64 = 10_000;
const MAX_SCAN_POINTS: usize = 10_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Jsonl,
}

/// Inclusive `start:stop:step` range, in the unit it was written in.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScanRange {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl ScanRange {
    pub fn parse(s: &str) -> Result<Self, CliError> {
        let parts: Vec<&str> = s.split(':').collect();
        let [start, stop, step] = parts.as_slice() else {
            return Err(CliError::Usage(format!(
                "scan range {s:?} is not start:stop:step"
            )));
        };
        let num = |x: &str| {
            x.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| CliError::Usage(format!("scan range {s:?}: {x:?} is not a number")))
        };
        let r = Self {
            start: num(start)?,
            stop: num(stop)?,
            step: num(step)?,
        };
        if r.step <= 0.0 {
            return Err(CliError::Usage(format!(
                "scan step must be positive, got {}",
                r.step
            )));
        }
        if r.stop < r.start {
            return Err(CliError::Usage(format!(
                "scan stop {} is below start {}",
                r.stop, r.start
            )));
        }
        if (r.stop - r.start) / r.step >= MAX_SCAN_POINTS as f64 {
            return Err(CliError::Usage(format!(
                "scan range {s:?} has more than {MAX_SCAN_POINTS} points"
            )));
        }
        Ok(r)
    }

    /// `start + i·step` up to and including `stop` (with a 1e-9 step slack).
    pub fn points(&self) -> Vec<f64> {
        let count = ((self.stop - self.start) / self.step + 1e-9).floor() as usize + 1;
        (0..count)
            .map(|i| self.start + i as f64 * self.step)
            .collect()
    }
}

/// Keys accepted in the flat TOML config file.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub family: Option<String>,
    pub omega: Option<f64>,
    pub scan: Option<String>,
    pub degrees: Option<bool>,
    pub nodes: Option<usize>,
    pub seed: Option<u64>,
    pub n: Option<u64>,
    pub format: Option<Format>,
    pub out: Option<PathBuf>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text)
            .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
    }
}

/// Flag values as given; `None` means "not on the command line".
#[derive(Clone, Debug, Default, clap::Args)]
pub struct CommonArgs {
    /// State family: chiral, spin, linear or crypto.
    #[arg(long, global = true)]
    pub family: Option<String>,
    /// Fixed relative analysis angle (radians unless --degrees).
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub omega: Option<f64>,
    /// Angle range start:stop:step, stop inclusive.
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub scan: Option<String>,
    /// Read every angle input in degrees. Output is always radians.
    #[arg(long, global = true)]
    pub degrees: bool,
    /// Quadrature nodes for θ integrals (at least 8).
    #[arg(long, global = true)]
    pub nodes: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Number of pairs.
    #[arg(long, global = true)]
    pub n: Option<u64>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Output file; stdout when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Flat TOML file with any of the keys above.
    #[arg(long, global = true, env = CONFIG_ENV)]
    pub config: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Angles {
    Fixed(f64),
    Grid(Vec<f64>),
}

/// Fully resolved options, angles in radians.
#[derive(Clone, Debug, PartialEq)]
pub struct CliConfig {
    pub family: FamilyKind,
    /// Explicit angle choice, or `None` when neither an angle nor a range
    /// was given anywhere.
    pub angles: Option<Angles>,
    pub degrees: bool,
    pub nodes: usize,
    pub seed: u64,
    pub n_pairs: u64,
    pub format: Format,
    pub out: Option<PathBuf>,
}

impl CliConfig {
    pub fn resolve(args: &CommonArgs) -> Result<Self, CliError> {
        let file = match &args.config {
            Some(path) => FileConfig::load(path)?,
            None => FileConfig::default(),
        };
        Self::merge(args, &file)
    }

    pub fn merge(args: &CommonArgs, file: &FileConfig) -> Result<Self, CliError> {
        let degrees = args.degrees || file.degrees.unwrap_or(false);
        let family = args
            .family
            .clone()
            .or_else(|| file.family.clone())
            .unwrap_or_else(|| "spin".into());
        let family: FamilyKind = family
            .parse()
            .map_err(|e: pairsim_core::Error| CliError::Usage(e.to_string()))?;
        let nodes = args.nodes.or(file.nodes).unwrap_or(DEFAULT_NODES);
        if nodes < MIN_NODES {
            return Err(CliError::Usage(format!(
                "--nodes must be at least {MIN_NODES}, got {nodes}"
            )));
        }
        let n_pairs = args.n.or(file.n).unwrap_or(DEFAULT_N);
        if n_pairs == 0 {
            return Err(CliError::Usage("--n must be at least 1".into()));
        }

        // A flag of either kind shadows both angle keys of the file.
        let (omega, scan) = if args.omega.is_some() || args.scan.is_some() {
            (args.omega, args.scan.clone())
        } else {
            (file.omega, file.scan.clone())
        };
        let unit = |x: f64| if degrees { x.to_radians() } else { x };
        let angles = match (omega, scan) {
            (Some(_), Some(_)) => {
                return Err(CliError::Usage(
                    "give either --omega or --scan, not both".into(),
                ));
            }
            (Some(w), None) => {
                if !w.is_finite() {
                    return Err(CliError::Usage(format!("--omega must be finite, got {w}")));
                }
                Some(Angles::Fixed(unit(w)))
            }
            (None, Some(s)) => Some(Angles::Grid(
                ScanRange::parse(&s)?
                    .points()
                    .into_iter()
                    .map(unit)
                    .collect(),
            )),
            (None, None) => None,
        };

        Ok(Self {
            family,
            angles,
            degrees,
            nodes,
            seed: args.seed.or(file.seed).unwrap_or(0),
            n_pairs,
            format: args.format.or(file.format).unwrap_or(Format::Csv),
            out: args.out.clone().or_else(|| file.out.clone()),
        })
    }

    /// Grid for scans: the explicit angles, or 64 points over `[0, 2π)`.
    pub fn scan_angles(&self) -> Vec<f64> {
        match &self.angles {
            Some(Angles::Fixed(w)) => vec![*w],
            Some(Angles::Grid(g)) => g.clone(),
            None => uniform_grid(DEFAULT_GRID),
        }
    }

    /// Single angle for commands that need one; defaults to 0.
    pub fn fixed_angle(&self, command: &str) -> Result<f64, CliError> {
        match &self.angles {
            Some(Angles::Fixed(w)) => Ok(*w),
            Some(Angles::Grid(_)) => Err(CliError::Usage(format!(
                "{command} takes --omega, not --scan"
            ))),
            None => Ok(0.0),
        }
    }

    pub fn angle(&self, x: f64) -> f64 {
        if self.degrees {
            x.to_radians()
        } else {
            x
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{PI, TAU};

    #[test]
    fn scan_range_is_inclusive() {
        let r = ScanRange::parse("0:180:30").unwrap();
        assert_eq!(r.points(), vec![0.0, 30.0, 60.0, 90.0, 120.0, 150.0, 180.0]);
        let r = ScanRange::parse(&format!("0:{}:{}", PI, PI / 6.0)).unwrap();
        assert_eq!(r.points().len(), 7);
        assert_eq!(ScanRange::parse("1:1:0.5").unwrap().points(), vec![1.0]);
    }

    #[test]
    fn bad_ranges_are_usage_errors() {
        for s in [
            "0:1", "0:1:0", "0:1:-1", "2:1:0.1", "a:1:1", "0:1:1:1", "0:inf:1",
        ] {
            assert!(
                matches!(ScanRange::parse(s), Err(CliError::Usage(_))),
                "{s}"
            );
        }
    }

    #[test]
    fn flags_override_file_override_defaults() {
        let file = FileConfig {
            family: Some("linear".into()),
            seed: Some(9),
            nodes: Some(64),
            ..Default::default()
        };
        let args = CommonArgs {
            seed: Some(3),
            ..Default::default()
        };
        let c = CliConfig::merge(&args, &file).unwrap();
        assert_eq!(c.family, FamilyKind::LinearTheta);
        assert_eq!(c.seed, 3);
        assert_eq!(c.nodes, 64);
        assert_eq!(c.n_pairs, DEFAULT_N);
        assert_eq!(c.format, Format::Csv);
    }

    #[test]
    fn angle_flag_shadows_file_range() {
        let file = FileConfig {
            scan: Some("0:1:0.5".into()),
            ..Default::default()
        };
        let args = CommonArgs {
            omega: Some(0.25),
            ..Default::default()
        };
        assert_eq!(
            CliConfig::merge(&args, &file).unwrap().angles,
            Some(Angles::Fixed(0.25))
        );
        let both = CommonArgs {
            omega: Some(0.25),
            scan: Some("0:1:1".into()),
            ..Default::default()
        };
        assert!(CliConfig::merge(&both, &FileConfig::default()).is_err());
    }

    #[test]
    fn degrees_convert_inputs() {
        let args = CommonArgs {
            omega: Some(90.0),
            degrees: true,
            ..Default::default()
        };
        let c = CliConfig::merge(&args, &FileConfig::default()).unwrap();
        assert_eq!(c.angles, Some(Angles::Fixed(PI / 2.0)));
    }

    #[test]
    fn default_grid_has_64_points() {
        let c = CliConfig::merge(&CommonArgs::default(), &FileConfig::default()).unwrap();
        let g = c.scan_angles();
        assert_eq!(g.len(), 64);
        assert_eq!(g[0], 0.0);
        assert!(g[63] < TAU);
    }

    #[test]
    fn few_nodes_rejected() {
        let args = CommonArgs {
            nodes: Some(4),
            ..Default::default()
        };
        assert!(CliConfig::merge(&args, &FileConfig::default()).is_err());
    }

    #[test]
    fn file_keys_are_checked() {
        assert!(toml::from_str::<FileConfig>("colour = \"red\"").is_err());
        let f: FileConfig =
            toml::from_str("family = \"crypto\"\nformat = \"jsonl\"\nn = 5").unwrap();
        assert_eq!(f.format, Some(Format::Jsonl));
    }
}
