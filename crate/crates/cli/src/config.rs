//! Experiment configuration file and command-line overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sparse_ppf::simulation::{FilterKind, FilterSuite, L1Settings, SsppfSettings, Study1Config, Study2Config};
use sparse_ppf::strf::PlantedStrfConfig;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Study1,
    Study2,
    Strf,
    Custom,
}

impl Mode {
    pub fn label(self) -> &'static str {
        match self {
            Mode::Study1 => "study1",
            Mode::Study2 => "study2",
            Mode::Strf => "strf",
            Mode::Custom => "custom",
        }
    }
}

/// One filter run on recorded spikes and stimulus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomConfig {
    pub spikes: PathBuf,
    pub stimulus: PathBuf,
    pub dim: usize,
    #[serde(default = "one")]
    pub window_len: usize,
    #[serde(default = "default_filter")]
    pub filter: FilterKind,
    #[serde(default = "default_suite")]
    pub suite: FilterSuite,
    /// Stimulus variance for the step-size rule; estimated from the data if absent.
    #[serde(default)]
    pub stimulus_var: Option<f64>,
    #[serde(default)]
    pub cv_grid: Vec<f64>,
    #[serde(default)]
    pub ci_coords: Vec<usize>,
    #[serde(default = "default_stride")]
    pub ci_stride: usize,
    #[serde(default = "default_level")]
    pub ci_level: f64,
    #[serde(default = "default_stride")]
    pub trace_every: usize,
    #[serde(default = "default_lag")]
    pub gof_max_lag: usize,
    /// Leading fraction of bins excluded from the goodness-of-fit tests.
    #[serde(default)]
    pub gof_burn_in: f64,
}

fn one() -> usize {
    1
}

fn default_filter() -> FilterKind {
    FilterKind::Ppf1
}

fn default_stride() -> usize {
    10
}

fn default_level() -> f64 {
    0.95
}

fn default_lag() -> usize {
    50
}

pub fn default_suite() -> FilterSuite {
    FilterSuite {
        ppf1: L1Settings::new(0.999, 0.5),
        ppf0: L1Settings::new(0.995, 0.1),
        ssppf: SsppfSettings {
            q: 0.0,
            forgetting: 0.999,
            prior_variance: 1.0,
        },
        sdppf_step: 1.0,
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: Option<Mode>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub gnuplot: bool,
    pub study1: Option<Study1Config>,
    pub study2: Option<Study2Config>,
    pub strf: Option<PlantedStrfConfig>,
    pub custom: Option<CustomConfig>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: Self = toml::from_str(&text)
            .map_err(|e| CliError::Config(format!("invalid config {}: {e}", path.display())))?;
        if let Some(c) = cfg.custom.as_mut() {
            let base = path.parent().unwrap_or(Path::new("."));
            for p in [&mut c.spikes, &mut c.stimulus] {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        Ok(cfg)
    }
}

/// Command-line values that override the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub filters: Option<Vec<FilterKind>>,
    pub ensemble: Option<usize>,
    pub cv_grid: Option<Vec<f64>>,
    pub stride_ci: Option<usize>,
}

pub fn parse_filters(list: &str) -> Result<Vec<FilterKind>, CliError> {
    list.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| FilterKind::parse(s).map_err(|e| CliError::Config(e.to_string())))
        .collect()
}

pub fn parse_grid(list: &str) -> Result<Vec<f64>, CliError> {
    list.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| CliError::Config(format!("bad grid value {s:?}")))
        })
        .collect()
}

pub fn apply_study1(cfg: &mut Study1Config, o: &Overrides) {
    if let Some(s) = o.seed {
        cfg.seed = s;
    }
    if let Some(f) = &o.filters {
        cfg.filters = f.clone();
    }
    if let Some(n) = o.ensemble {
        cfg.realizations = n;
    }
    if let Some(g) = &o.cv_grid {
        cfg.cv_grid = g.clone();
    }
}

pub fn apply_study2(cfg: &mut Study2Config, o: &Overrides) {
    if let Some(s) = o.seed {
        cfg.seed = s;
    }
    if let Some(f) = &o.filters {
        cfg.filters = f.clone();
    }
    if let Some(g) = &o.cv_grid {
        cfg.cv_grid = g.clone();
    }
    if let Some(s) = o.stride_ci {
        cfg.ci_stride = s;
    }
}

pub fn apply_strf(cfg: &mut PlantedStrfConfig, o: &Overrides) {
    if let Some(s) = o.seed {
        cfg.seed = s;
    }
}

pub fn apply_custom(cfg: &mut CustomConfig, o: &Overrides) -> Result<(), CliError> {
    if let Some(f) = &o.filters {
        match f.as_slice() {
            [one] => cfg.filter = *one,
            _ => return Err(CliError::Config("custom mode runs exactly one filter".into())),
        }
    }
    if let Some(g) = &o.cv_grid {
        cfg.cv_grid = g.clone();
    }
    if let Some(s) = o.stride_ci {
        cfg.ci_stride = s;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_rejected() {
        assert!(toml::from_str::<ExperimentConfig>("mode = \"study1\"\nbogus = 1\n").is_err());
        assert!(toml::from_str::<ExperimentConfig>("[study1]\nrealisations = 3\n").is_err());
    }

    #[test]
    fn partial_study_tables_use_defaults() {
        let cfg: ExperimentConfig = toml::from_str("mode = \"study1\"\n[study1]\nrealizations = 3\n").unwrap();
        let s = cfg.study1.unwrap();
        assert_eq!(s.realizations, 3);
        assert_eq!(s.dim, 101);
    }

    #[test]
    fn list_parsing() {
        assert_eq!(parse_filters("l1_ppf1,sdppf").unwrap(), vec![FilterKind::Ppf1, FilterKind::Sdppf]);
        assert!(parse_filters("kalman").is_err());
        assert_eq!(parse_grid("0.1, 0.5").unwrap(), vec![0.1, 0.5]);
        assert!(parse_grid("a").is_err());
    }

    #[test]
    fn strf_defaults_round_trip() {
        let cfg: ExperimentConfig = toml::from_str("[strf]\nbeta = 0.9998\ngamma = 40.0\nwindow_len = 10\n").unwrap();
        let s = cfg.strf.unwrap();
        assert_eq!((s.beta, s.gamma, s.window_len, s.iterations, s.step_scale), (0.9998, 40.0, 10, 1, 4.0));
    }
}
