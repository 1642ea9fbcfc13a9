//! Run configuration: a TOML document with an `[experiment]` table mirroring
//! [`ExperimentConfig`], plus `[coverage]` and `[bri]` tables.
//!
//! ```toml
//! svg = true
//!
//! [experiment]
//! snr_grid_db = [0.0, 2.0, 4.0]
//! trials_per_point = 50000
//! master_seed = 7
//!
//! [experiment.forward]
//! q_reflectors = 2
//!
//! [coverage]
//! q_b = [1, 2, 3]
//! c0 = [0.5, 1.0]
//!
//! [bri]
//! n_s = 64
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::analysis::MAX_IM_SUBCARRIERS;
use crate::montecarlo::{ExperimentConfig, Modulation};
use crate::reader::DetectorMode;

use super::CliError;

/// Upper bound on grid sizes accepted from a file or flag.
pub const MAX_GRID_POINTS: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoverageConfig {
    pub q_b: Vec<usize>,
    pub c0: Vec<f64>,
    pub mu_c_sq: f64,
    pub sigma_c_sq: f64,
}

impl Default for CoverageConfig {
    fn default() -> Self {
        Self { q_b: (1..=20).collect(), c0: vec![0.2, 0.4, 0.6, 0.8, 1.0], mu_c_sq: 0.5, sigma_c_sq: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BriConfig {
    pub n_s: usize,
    /// Active-subcarrier counts; `1..=n_s` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<Vec<usize>>,
}

impl Default for BriConfig {
    fn default() -> Self {
        Self { n_s: 64, k: None }
    }
}

impl BriConfig {
    pub fn k_grid(&self) -> Vec<usize> {
        self.k.clone().unwrap_or_else(|| (1..=self.n_s).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Emit an SVG plot next to each CSV.
    pub svg: bool,
    pub experiment: ExperimentConfig,
    pub coverage: CoverageConfig,
    pub bri: BriConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            svg: true,
            experiment: ExperimentConfig::default(),
            coverage: CoverageConfig::default(),
            bri: BriConfig::default(),
        }
    }
}

/// Values given on the command line. `None` leaves the file or default value.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub snr_db: Option<Vec<f64>>,
    pub trials: Option<u64>,
    pub qf: Option<usize>,
    pub qb: Option<usize>,
    pub qd: Option<usize>,
    pub k: Option<usize>,
    pub mode: Option<DetectorMode>,
    pub svg: Option<bool>,
    pub c0: Option<Vec<f64>>,
    pub n_s: Option<usize>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Defaults, overlaid by the file at `path` when given.
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?;
                Self::from_toml(&text).map_err(|e| match e {
                    CliError::Config(m) => CliError::Config(format!("{}: {m}", p.display())),
                    other => other,
                })
            }
        }
    }

    /// Applies flag values. `--qb` and `--k` act on the experiment and also
    /// pin the coverage and BRI grids to that single value.
    pub fn apply(&mut self, o: &Overrides) {
        let exp = &mut self.experiment;
        if let Some(s) = o.seed {
            exp.master_seed = s;
        }
        if let Some(g) = &o.snr_db {
            exp.snr_grid_db = g.clone();
        }
        if let Some(t) = o.trials {
            exp.trials_per_point = t;
        }
        if let Some(q) = o.qf {
            exp.forward.q_reflectors = q;
        }
        if let Some(q) = o.qb {
            exp.backward.q_reflectors = q;
            self.coverage.q_b = vec![q];
        }
        if let Some(q) = o.qd {
            exp.direct.q_reflectors = q;
        }
        if let Some(k) = o.k {
            exp.modulation = Modulation::Im { k };
            self.bri.k = Some(vec![k]);
        }
        if let Some(m) = o.mode {
            exp.detector_mode = m;
        }
        if let Some(s) = o.svg {
            self.svg = s;
        }
        if let Some(c) = &o.c0 {
            self.coverage.c0 = c.clone();
        }
        if let Some(n) = o.n_s {
            self.bri.n_s = n;
        }
    }

    pub fn validate_experiment(&self) -> Result<(), CliError> {
        self.experiment.validate().map_err(|e| CliError::Config(e.to_string()))?;
        if self.experiment.snr_grid_db.len() > MAX_GRID_POINTS {
            return Err(CliError::Config(format!("SNR grid exceeds {MAX_GRID_POINTS} points")));
        }
        Ok(())
    }

    pub fn validate_coverage(&self) -> Result<(), CliError> {
        let c = &self.coverage;
        if c.q_b.is_empty() || c.c0.is_empty() {
            return Err(CliError::Config("coverage grids must not be empty".into()));
        }
        if c.q_b.len().saturating_mul(c.c0.len()) > MAX_GRID_POINTS {
            return Err(CliError::Config(format!("coverage grid exceeds {MAX_GRID_POINTS} points")));
        }
        if let Some(bad) = c.c0.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(CliError::Config(format!("c0 must be positive and finite, got {bad}")));
        }
        if !(c.mu_c_sq.is_finite() && c.mu_c_sq >= 0.0 && c.sigma_c_sq.is_finite() && c.sigma_c_sq >= 0.0) {
            return Err(CliError::Config("mu_c_sq and sigma_c_sq must be non-negative and finite".into()));
        }
        Ok(())
    }

    pub fn validate_bri(&self) -> Result<(), CliError> {
        let n = self.bri.n_s;
        if !(1..=MAX_IM_SUBCARRIERS).contains(&n) {
            return Err(CliError::Config(format!("n_s must be in 1..={MAX_IM_SUBCARRIERS}, got {n}")));
        }
        let grid = self.bri.k_grid();
        if grid.is_empty() {
            return Err(CliError::Config("k grid must not be empty".into()));
        }
        if let Some(bad) = grid.iter().find(|&&k| k == 0 || k > n) {
            return Err(CliError::Config(format!("k must be in 1..={n}, got {bad}")));
        }
        Ok(())
    }
}

/// Parses `A:STEP:B` (inclusive) or a single value.
pub fn parse_snr_range(s: &str) -> Result<Vec<f64>, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let num = |t: &str| -> Result<f64, String> {
        let v: f64 = t.trim().parse().map_err(|_| format!("not a number: {t:?}"))?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(format!("not finite: {t:?}"))
        }
    };
    match parts.as_slice() {
        [one] => Ok(vec![num(one)?]),
        [a, step, b] => {
            let (a, step, b) = (num(a)?, num(step)?, num(b)?);
            if step <= 0.0 {
                return Err("step must be positive".into());
            }
            if b < a {
                return Err("range end is below its start".into());
            }
            let count = ((b - a) / step + 1e-9).floor() + 1.0;
            if count > MAX_GRID_POINTS as f64 {
                return Err(format!("range has more than {MAX_GRID_POINTS} points"));
            }
            Ok((0..count as usize).map(|i| a + step * i as f64).collect())
        }
        _ => Err(format!("expected A:STEP:B or a single value, got {s:?}")),
    }
}

/// Parses a comma-separated list of numbers.
pub fn parse_f64_list(s: &str) -> Result<Vec<f64>, String> {
    s.split(',').map(|t| t.trim().parse::<f64>().map_err(|_| format!("not a number: {t:?}"))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn snr_ranges() {
        assert_eq!(parse_snr_range("0:2:6").unwrap(), vec![0.0, 2.0, 4.0, 6.0]);
        assert_eq!(parse_snr_range("0:2:30").unwrap().len(), 16);
        assert_eq!(parse_snr_range("0:0.1:0.3").unwrap().len(), 4);
        assert_eq!(parse_snr_range("5").unwrap(), vec![5.0]);
        assert!(parse_snr_range("0:0:3").is_err());
        assert!(parse_snr_range("3:1:0").is_err());
        assert!(parse_snr_range("a:1:2").is_err());
        assert!(parse_snr_range("1:2").is_err());
        assert!(parse_snr_range("0:1e-9:1e9").is_err());
    }

    #[test]
    fn default_roundtrips_through_toml() {
        let cfg = RunConfig::default();
        let text = toml::to_string(&cfg).unwrap();
        assert_eq!(RunConfig::from_toml(&text).unwrap(), cfg);
    }

    #[test]
    fn partial_file_keeps_defaults() {
        let cfg =
            RunConfig::from_toml("[experiment]\nmaster_seed = 9\n[experiment.forward]\nq_reflectors = 3\n").unwrap();
        assert_eq!(cfg.experiment.master_seed, 9);
        assert_eq!(cfg.experiment.forward.q_reflectors, 3);
        assert_eq!(cfg.experiment.trials_per_point, ExperimentConfig::default().trials_per_point);
        assert_eq!(cfg.coverage, CoverageConfig::default());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::from_toml("[experiment]\nmaster_sed = 9\n").is_err());
        assert!(RunConfig::from_toml("bogus = 1\n").is_err());
        assert!(RunConfig::from_toml("[coverage]\nc0 = \"x\"\n").is_err());
    }

    #[test]
    fn flags_beat_file() {
        let mut cfg = RunConfig::from_toml("svg = false\n[experiment]\nmaster_seed = 9\n").unwrap();
        cfg.apply(&Overrides {
            seed: Some(3),
            k: Some(4),
            qb: Some(2),
            mode: Some(DetectorMode::ExactMl),
            ..Default::default()
        });
        assert_eq!(cfg.experiment.master_seed, 3);
        assert_eq!(cfg.experiment.modulation, Modulation::Im { k: 4 });
        assert_eq!(cfg.experiment.backward.q_reflectors, 2);
        assert_eq!(cfg.coverage.q_b, vec![2]);
        assert_eq!(cfg.bri.k_grid(), vec![4]);
        assert!(!cfg.svg);
    }

    #[test]
    fn validation() {
        let mut cfg = RunConfig::default();
        assert!(cfg.validate_coverage().is_ok() && cfg.validate_bri().is_ok() && cfg.validate_experiment().is_ok());
        cfg.coverage.c0 = vec![-1.0];
        assert!(cfg.validate_coverage().is_err());
        cfg.bri.k = Some(vec![65]);
        assert!(cfg.validate_bri().is_err());
        cfg.bri.k = Some(vec![0]);
        assert!(cfg.validate_bri().is_err());
        cfg.bri.n_s = 200;
        assert!(cfg.validate_bri().is_err());
    }
}
