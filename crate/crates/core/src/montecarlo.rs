//! Monte Carlo experiment engine.
//!
//! One trial is one OFDM symbol pushed through the whole link: BPSK source
//! symbols, forward channel `h`, tag masking, backward channel `g·β`, direct
//! path `A`, AWGN with `N_0 = E_b/γ`, demodulation and detection. Each trial
//! draws from its own stream (see [`crate::rng`]) and trials are run in
//! fixed-size batches, so a sweep is bit-identical for any thread count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{baseline_ber, ber_closed_form, bri, im_bit_count, BerPoint, BriScheme};
use crate::channel::{add_awgn, apply_flat_channel, build_composite, coverage_ratio, RisLinkConfig};
use crate::error::{invalid, Result};
use crate::ofdm::{generate_symbols, OfdmModem, OfdmParams};
use crate::reader::{detect_im, detect_ook, DetectorConfig, DetectorMode};
use crate::rng::{trial_stream, MAX_POINTS, MAX_TRIALS_PER_POINT};
use crate::tag::{backscatter_with, TagMessage};

/// Two-sided 95% standard normal quantile.
pub const Z_95: f64 = 1.959_963_984_540_054;

/// Trials run between early-stopping checks. Fixed so that the set of
/// executed trials never depends on scheduling.
pub const BATCH_TRIALS: u64 = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Modulation {
    Ook,
    Im { k: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub ofdm: OfdmParams,
    pub forward: RisLinkConfig,
    pub direct: RisLinkConfig,
    pub backward: RisLinkConfig,
    /// Tag attenuation `β`.
    pub beta: f64,
    /// Per-subcarrier symbol energy `E_b`.
    pub energy: f64,
    pub modulation: Modulation,
    pub detector_mode: DetectorMode,
    pub snr_grid_db: Vec<f64>,
    /// Upper bound on trials (OFDM symbols) per SNR point.
    pub trials_per_point: u64,
    pub master_seed: u64,
    /// Stop a point once this many bit errors have accumulated; `None` or 0
    /// runs every trial.
    pub stop_at_errors: Option<u64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let los = RisLinkConfig::fixed(0, 1.0, 0.2);
        Self {
            ofdm: OfdmParams::default(),
            forward: los,
            direct: los,
            backward: los,
            beta: 1.0,
            energy: 1.0,
            modulation: Modulation::Ook,
            detector_mode: DetectorMode::Threshold,
            snr_grid_db: (0..=8).map(|i| 2.0 * i as f64).collect(),
            trials_per_point: 200_000,
            master_seed: 1,
            stop_at_errors: Some(500),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.ofdm.validate()?;
        self.forward.validate()?;
        self.direct.validate()?;
        self.backward.validate()?;
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return invalid(format!("beta must lie in (0, 1], got {}", self.beta));
        }
        if !(self.energy.is_finite() && self.energy > 0.0) {
            return invalid("energy must be positive");
        }
        if self.snr_grid_db.is_empty() {
            return invalid("snr_grid_db must not be empty");
        }
        if let Some(bad) = self.snr_grid_db.iter().find(|v| !v.is_finite()) {
            return invalid(format!("snr_grid_db contains non-finite value {bad}"));
        }
        if self.snr_grid_db.len() as u64 > MAX_POINTS {
            return invalid("snr_grid_db has too many points");
        }
        if self.trials_per_point == 0 || self.trials_per_point > MAX_TRIALS_PER_POINT {
            return invalid(format!("trials_per_point must lie in [1, {MAX_TRIALS_PER_POINT}]"));
        }
        if let Modulation::Im { k } = self.modulation {
            im_bit_count(self.ofdm.n_subcarriers, k)?;
        }
        Ok(())
    }

    fn stop_threshold(&self) -> Option<u64> {
        self.stop_at_errors.filter(|n| *n > 0)
    }

    /// `A` and `α` with every reflector at its mean gain; exact when all
    /// links use fixed gains.
    pub fn nominal_gains(&self) -> Result<(f64, f64)> {
        let h = self.forward.nominal_gain()?;
        let a = self.direct.nominal_gain()?;
        let g = self.backward.nominal_gain()?;
        Ok((a.norm(), (g * self.beta * h).norm()))
    }
}

/// Additive error counters; merging is associative and commutative.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorCounts {
    pub trials: u64,
    pub bits_sent: u64,
    pub bit_errors: u64,
    /// OOK subcarriers the tag nulled, and how many of them were misread.
    pub bits_sent0: u64,
    pub bit_errors0: u64,
    /// OOK subcarriers the tag preserved, and how many of them were misread.
    pub bits_sent1: u64,
    pub bit_errors1: u64,
    /// IM codewords sent and detected wrongly.
    pub symbols: u64,
    pub symbol_errors: u64,
    pub out_of_codebook: u64,
}

impl ErrorCounts {
    pub fn merge(self, o: ErrorCounts) -> ErrorCounts {
        ErrorCounts {
            trials: self.trials + o.trials,
            bits_sent: self.bits_sent + o.bits_sent,
            bit_errors: self.bit_errors + o.bit_errors,
            bits_sent0: self.bits_sent0 + o.bits_sent0,
            bit_errors0: self.bit_errors0 + o.bit_errors0,
            bits_sent1: self.bits_sent1 + o.bits_sent1,
            bit_errors1: self.bit_errors1 + o.bit_errors1,
            symbols: self.symbols + o.symbols,
            symbol_errors: self.symbol_errors + o.symbol_errors,
            out_of_codebook: self.out_of_codebook + o.out_of_codebook,
        }
    }
}

/// Wilson score interval for `errors` successes out of `n`.
pub fn wilson_interval(errors: u64, n: u64, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let nf = n as f64;
    let p = errors as f64 / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let center = (p + z2 / (2.0 * nf)) / denom;
    let half = z / denom * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt();
    ((center - half).max(0.0).min(p), (center + half).min(1.0).max(p))
}

/// Error rate estimate with its 95% Wilson interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub errors: u64,
    pub total: u64,
    pub rate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl Estimate {
    pub fn new(errors: u64, total: u64) -> Self {
        let (ci_low, ci_high) = wilson_interval(errors, total, Z_95);
        let rate = if total == 0 { 0.0 } else { errors as f64 / total as f64 };
        Self { errors, total, rate, ci_low, ci_high }
    }

    pub fn contains(&self, p: f64) -> bool {
        self.ci_low <= p && p <= self.ci_high
    }

    pub fn ci_width(&self) -> f64 {
        self.ci_high - self.ci_low
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub snr_db: f64,
    pub counts: ErrorCounts,
    pub ber: Estimate,
    pub ber_given0: Estimate,
    pub ber_given1: Estimate,
    pub closed_form: BerPoint,
    /// `None` where the baseline curve is undefined (`γ ≤ 1`).
    pub baseline_ber: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    /// `|A|` and `|α|` used for the closed-form columns.
    pub a_nominal: f64,
    pub alpha_nominal: f64,
    pub points: Vec<SweepPoint>,
}

pub fn snr_db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// A validated experiment with its cached modem.
#[derive(Debug, Clone)]
pub struct Simulator {
    cfg: ExperimentConfig,
    modem: OfdmModem,
}

impl Simulator {
    pub fn new(cfg: ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let modem = OfdmModem::new(cfg.ofdm)?;
        Ok(Self { cfg, modem })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.cfg
    }

    /// One OFDM symbol at grid point `point_index`.
    pub fn run_trial(&self, point_index: usize, trial_index: u64) -> Result<ErrorCounts> {
        let cfg = &self.cfg;
        let Some(&snr_db) = cfg.snr_grid_db.get(point_index) else {
            return invalid(format!("point index {point_index} outside the SNR grid"));
        };
        if trial_index >= MAX_TRIALS_PER_POINT {
            return invalid("trial index out of range");
        }
        let mut rng = trial_stream(cfg.master_seed, point_index as u64, trial_index);
        let n = cfg.ofdm.n_subcarriers;

        let gains = build_composite(&cfg.forward, &cfg.direct, &cfg.backward, cfg.beta, &mut rng)?;
        let s = generate_symbols(&cfg.ofdm, cfg.energy, &mut rng)?;
        let message = match cfg.modulation {
            Modulation::Ook => TagMessage::random_ook(n, &mut rng),
            Modulation::Im { k } => TagMessage::random_im(n, k, &mut rng)?,
        };
        let mask = message.mask()?;

        let x = self.modem.modulate(&s)?;
        let incident = apply_flat_channel(&x, gains.h);
        let reflected = apply_flat_channel(&backscatter_with(&self.modem, &incident, &mask, cfg.beta)?, gains.g);
        let direct = apply_flat_channel(&x, gains.a_direct);
        let n0 = cfg.energy / snr_db_to_linear(snr_db);
        let z = add_awgn(&direct.superpose(&reflected)?, n0, &mut rng)?;
        let r = self.modem.demodulate(&z)?;

        // co-phase with the direct link so the detectors see real gains
        let a_mag = gains.a_direct.norm();
        let derotate = gains.a_direct.conj() / a_mag;
        let r = apply_flat_channel(&r, derotate);
        let det = DetectorConfig::new(a_mag, gains.alpha.norm(), cfg.energy, n0, cfg.detector_mode)?;

        let mut counts = ErrorCounts { trials: 1, ..ErrorCounts::default() };
        match (&message, cfg.modulation) {
            (TagMessage::Ook { bits }, _) => {
                let detected = detect_ook(&r, &det)?;
                for (sent, got) in bits.iter().zip(&detected.bits) {
                    let wrong = u64::from(sent != got);
                    if *sent == 0 {
                        counts.bits_sent0 += 1;
                        counts.bit_errors0 += wrong;
                    } else {
                        counts.bits_sent1 += 1;
                        counts.bit_errors1 += wrong;
                    }
                }
                counts.bits_sent = counts.bits_sent0 + counts.bits_sent1;
                counts.bit_errors = counts.bit_errors0 + counts.bit_errors1;
            }
            (TagMessage::Im { index, .. }, Modulation::Im { k }) => {
                let eta = im_bit_count(n, k)?;
                let detected = detect_im(&r, k, &det)?;
                let got = detected.recovered_index.unwrap_or_default();
                counts.bits_sent = u64::from(eta);
                counts.bit_errors = u64::from((index ^ got).count_ones());
                counts.symbols = 1;
                counts.symbol_errors = u64::from(got != *index);
                counts.out_of_codebook = u64::from(detected.out_of_codebook);
            }
            (TagMessage::Im { .. }, Modulation::Ook) => unreachable!("message kind follows modulation"),
        }
        Ok(counts)
    }

    /// Runs one grid point, honouring the early-stopping rule.
    pub fn run_point(&self, point_index: usize) -> Result<ErrorCounts> {
        let stop = self.cfg.stop_threshold();
        let mut total = ErrorCounts::default();
        let mut next = 0;
        while next < self.cfg.trials_per_point {
            let end = (next + BATCH_TRIALS).min(self.cfg.trials_per_point);
            let batch = (next..end)
                .into_par_iter()
                .map(|t| self.run_trial(point_index, t))
                .try_reduce(ErrorCounts::default, |a, b| Ok(a.merge(b)))?;
            total = total.merge(batch);
            next = end;
            if stop.is_some_and(|s| total.bit_errors >= s) {
                break;
            }
        }
        Ok(total)
    }

    pub fn sweep(&self) -> Result<SweepResult> {
        let (a, alpha) = self.cfg.nominal_gains()?;
        let mut points = Vec::with_capacity(self.cfg.snr_grid_db.len());
        for (i, &snr_db) in self.cfg.snr_grid_db.iter().enumerate() {
            let counts = self.run_point(i)?;
            let gamma = snr_db_to_linear(snr_db);
            points.push(SweepPoint {
                snr_db,
                counts,
                ber: Estimate::new(counts.bit_errors, counts.bits_sent),
                ber_given0: Estimate::new(counts.bit_errors0, counts.bits_sent0),
                ber_given1: Estimate::new(counts.bit_errors1, counts.bits_sent1),
                closed_form: ber_closed_form(a, alpha, gamma),
                baseline_ber: baseline_ber(gamma, self.cfg.ofdm.n_cp).ok(),
            });
        }
        Ok(SweepResult { a_nominal: a, alpha_nominal: alpha, points })
    }
}

pub fn run_trial(cfg: &ExperimentConfig, point_index: usize, trial_index: u64) -> Result<ErrorCounts> {
    Simulator::new(cfg.clone())?.run_trial(point_index, trial_index)
}

pub fn ber_sweep(cfg: &ExperimentConfig) -> Result<SweepResult> {
    Simulator::new(cfg.clone())?.sweep()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoverageRow {
    pub q_b: usize,
    pub c0: f64,
    pub ratio: f64,
}

/// Coverage ratio over the product of the grids, `q_b` outer.
pub fn coverage_sweep(q_b_grid: &[usize], c0_grid: &[f64], mu_c_sq: f64, sigma_c_sq: f64) -> Result<Vec<CoverageRow>> {
    if q_b_grid.is_empty() || c0_grid.is_empty() {
        return invalid("coverage grids must not be empty");
    }
    let mut rows = Vec::with_capacity(q_b_grid.len() * c0_grid.len());
    for &q_b in q_b_grid {
        for &c0 in c0_grid {
            rows.push(CoverageRow { q_b, c0, ratio: coverage_ratio(q_b, mu_c_sq, sigma_c_sq, c0)? });
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BriRow {
    pub k: usize,
    pub eta_im: u32,
    pub lambda_im: f64,
    pub eta_ook: usize,
    pub lambda_ook: f64,
}

/// Bit rate and BRI of index modulation per `k`, next to the OOK constants
/// (unit symbol energy).
pub fn bri_table(n_s: usize, k_grid: &[usize]) -> Result<Vec<BriRow>> {
    if k_grid.is_empty() {
        return invalid("k grid must not be empty");
    }
    let lambda_ook = bri(n_s, BriScheme::Ook, 1.0)?;
    k_grid
        .iter()
        .map(|&k| {
            Ok(BriRow {
                k,
                eta_im: im_bit_count(n_s, k)?,
                lambda_im: bri(n_s, BriScheme::Im { k }, 1.0)?,
                eta_ook: n_s,
                lambda_ook,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick(snr_db: Vec<f64>, trials: u64) -> ExperimentConfig {
        ExperimentConfig {
            snr_grid_db: snr_db,
            trials_per_point: trials,
            stop_at_errors: None,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn wilson_properties() {
        let (lo, hi) = wilson_interval(0, 64, Z_95);
        assert_eq!(lo, 0.0);
        assert!(hi > 0.0 && hi < 0.1);
        assert_eq!(wilson_interval(0, 0, Z_95), (0.0, 1.0));
        let (lo, hi) = wilson_interval(64, 64, Z_95);
        assert!(lo < 1.0 && hi == 1.0);
        // textbook value: 10 of 100 gives roughly [0.0552, 0.1744]
        let (lo, hi) = wilson_interval(10, 100, Z_95);
        assert!((lo - 0.0552).abs() < 1e-4 && (hi - 0.1744).abs() < 1e-4);
    }

    #[test]
    fn config_validation() {
        assert!(ExperimentConfig::default().validate().is_ok());
        assert!(ExperimentConfig { snr_grid_db: vec![], ..ExperimentConfig::default() }.validate().is_err());
        assert!(ExperimentConfig { trials_per_point: 0, ..ExperimentConfig::default() }.validate().is_err());
        assert!(ExperimentConfig { beta: 0.0, ..ExperimentConfig::default() }.validate().is_err());
        assert!(ExperimentConfig { modulation: Modulation::Im { k: 65 }, ..ExperimentConfig::default() }
            .validate()
            .is_err());
        assert!(run_trial(&ExperimentConfig::default(), 99, 0).is_err());
    }

    #[test]
    fn noiseless_trial_has_no_errors() {
        let cfg = quick(vec![60.0], 1);
        for t in 0..20 {
            let c = run_trial(&cfg, 0, t).unwrap();
            assert_eq!(c.bits_sent, 64);
            assert_eq!(c.bit_errors, 0);
        }
        let ml = ExperimentConfig { detector_mode: DetectorMode::ExactMl, ..cfg };
        assert_eq!(run_trial(&ml, 0, 3).unwrap().bit_errors, 0);
    }

    #[test]
    fn im_trials_recover_codewords_at_high_snr() {
        let cfg = ExperimentConfig { modulation: Modulation::Im { k: 8 }, ..quick(vec![40.0], 1) };
        let sim = Simulator::new(cfg).unwrap();
        for t in 0..20 {
            let c = sim.run_trial(0, t).unwrap();
            assert_eq!(c.bits_sent, u64::from(im_bit_count(64, 8).unwrap()));
            assert_eq!(c.symbol_errors, 0);
        }
    }

    #[test]
    fn vanishing_backscatter_is_a_coin_flip() {
        // β = 1e-9 leaves α ≈ 0: the two amplitude levels coincide
        let cfg = ExperimentConfig { beta: 1e-9, ..quick(vec![10.0], 2000) };
        let r = ber_sweep(&cfg).unwrap();
        let p = &r.points[0];
        assert!((p.ber.rate - 0.5).abs() < 0.01, "ber {}", p.ber.rate);
    }

    #[test]
    fn trials_are_deterministic() {
        let cfg = quick(vec![4.0, 8.0], 10);
        assert_eq!(run_trial(&cfg, 1, 7).unwrap(), run_trial(&cfg, 1, 7).unwrap());
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let cfg = ExperimentConfig { stop_at_errors: Some(300), trials_per_point: 5000, ..cfg };
        let a = one.install(|| ber_sweep(&cfg)).unwrap();
        let b = four.install(|| ber_sweep(&cfg)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn early_stop_runs_whole_batches() {
        let cfg = ExperimentConfig { stop_at_errors: Some(100), ..quick(vec![0.0], 100_000) };
        let r = ber_sweep(&cfg).unwrap();
        let c = r.points[0].counts;
        assert!(c.bit_errors >= 100);
        assert_eq!(c.trials % BATCH_TRIALS, 0);
        assert!(c.trials < 100_000);
    }

    #[test]
    fn zero_error_point_keeps_open_interval() {
        let r = ber_sweep(&quick(vec![40.0], 1)).unwrap();
        let p = &r.points[0];
        assert_eq!(p.counts.bit_errors, 0);
        assert_eq!(p.ber.ci_low, 0.0);
        assert!(p.ber.ci_high > 0.0);
        assert!(p.ber.ci_low <= p.ber.rate && p.ber.rate <= p.ber.ci_high);
    }

    #[test]
    fn nominal_gains_follow_reflectors() {
        let cfg = ExperimentConfig {
            forward: RisLinkConfig::fixed(5, 1.0, 0.2),
            backward: RisLinkConfig::fixed(5, 1.0, 0.2),
            direct: RisLinkConfig::fixed(2, 1.0, 0.2),
            ..ExperimentConfig::default()
        };
        let (a, alpha) = cfg.nominal_gains().unwrap();
        assert!((a - 1.4).abs() < 1e-12);
        assert!((alpha - 4.0).abs() < 1e-12);
    }

    #[test]
    fn coverage_grid() {
        let rows = coverage_sweep(&[1, 10], &[1.0, 2.0], 0.5, 1.0).unwrap();
        assert_eq!(rows.len(), 4);
        assert_eq!((rows[2].q_b, rows[2].c0), (10, 1.0));
        assert!((rows[2].ratio - 60f64.sqrt()).abs() < 1e-12);
        assert!(rows[0].ratio < rows[2].ratio);
        assert!(rows[3].ratio < rows[2].ratio);
        assert!(coverage_sweep(&[], &[1.0], 0.5, 1.0).is_err());
        assert!(coverage_sweep(&[1], &[-1.0], 0.5, 1.0).is_err());
    }

    #[test]
    fn bri_rows() {
        let k: Vec<usize> = (1..=64).collect();
        let rows = bri_table(64, &k).unwrap();
        assert_eq!(rows.len(), 64);
        let r32 = rows[31];
        assert_eq!((r32.k, r32.eta_im, r32.lambda_im, r32.eta_ook, r32.lambda_ook), (32, 60, 1.875, 64, 2.0));
        assert_eq!(rows[0].eta_im, 6);
        assert_eq!(rows.iter().map(|r| r.eta_im).max(), Some(60));
        assert!(rows.iter().all(|r| r.lambda_ook == 2.0));
        assert!(bri_table(64, &[0]).is_err());
        assert!(bri_table(64, &[65]).is_err());
    }
}
