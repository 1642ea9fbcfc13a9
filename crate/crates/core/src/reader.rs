//! Reader-side detection of tag bits from the demodulated subcarriers
//! `r_l = (A + α d_l) s_l + n_l`.
//!
//! The reader knows `A`, `α`, `E_b` and `N_0` exactly and has removed the
//! common phase of the direct link, so the BPSK data sits on the real axis.
//! Both OOK detectors therefore work on the in-phase component `Re(r_l)`;
//! the quadrature component carries noise only.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::ofdm::{ComplexSignal, SignalDomain};
use crate::tag::{codebook_size, subset_rank, SubcarrierMask};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectorMode {
    /// Compare `|Re r_l|` against the optimal amplitude threshold.
    Threshold,
    /// Exact likelihood-ratio test averaged over both BPSK symbols.
    ExactMl,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorConfig {
    pub a_direct: f64,
    pub alpha: f64,
    pub energy: f64,
    pub n0: f64,
    pub mode: DetectorMode,
}

impl DetectorConfig {
    pub fn new(a_direct: f64, alpha: f64, energy: f64, n0: f64, mode: DetectorMode) -> Result<Self> {
        let cfg = Self { a_direct, alpha, energy, n0, mode };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a_direct.is_finite() && self.a_direct >= 0.0) {
            return invalid(format!("direct gain must be non-negative, got {}", self.a_direct));
        }
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return invalid(format!("backscatter gain must be non-negative, got {}", self.alpha));
        }
        if !(self.energy.is_finite() && self.energy > 0.0) {
            return invalid("symbol energy must be positive");
        }
        if !(self.n0.is_finite() && self.n0 > 0.0) {
            return invalid("noise variance must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionResult {
    /// Detected OOK bits, or the detected IM mask as bits.
    pub bits: Vec<u8>,
    /// Detected IM codeword.
    pub recovered_index: Option<u128>,
    /// The IM active set fell outside the codebook and was clamped.
    pub out_of_codebook: bool,
    /// Per-subcarrier statistic the decision was based on.
    pub per_subcarrier_stats: Vec<f64>,
}

/// `δ = (2A + α)·√E_b / 2`, midway between the two amplitude levels.
pub fn optimal_threshold(cfg: &DetectorConfig) -> f64 {
    (2.0 * cfg.a_direct + cfg.alpha) * cfg.energy.sqrt() / 2.0
}

fn check_frequency(r: &ComplexSignal) -> Result<()> {
    if r.domain() != SignalDomain::Frequency {
        return invalid(format!("detectors need a frequency-domain signal, got {}", r.domain()));
    }
    Ok(())
}

/// Bit 1 iff `|Re r_l| > δ`; a tie decides 0.
pub fn detect_ook_threshold(r: &ComplexSignal, cfg: &DetectorConfig) -> Result<DetectionResult> {
    check_frequency(r)?;
    cfg.validate()?;
    let delta = optimal_threshold(cfg);
    let stats: Vec<f64> = r.samples().iter().map(|v| v.re.abs()).collect();
    let bits = stats.iter().map(|s| u8::from(*s > delta)).collect();
    Ok(DetectionResult { bits, recovered_index: None, out_of_codebook: false, per_subcarrier_stats: stats })
}

/// `ln cosh x` without overflow.
fn ln_cosh(x: f64) -> f64 {
    let ax = x.abs();
    ax + (-2.0 * ax).exp().ln_1p() - std::f64::consts::LN_2
}

/// Bit 1 iff
/// `cosh(2A√E_b·x/N_0) / cosh(2(A+α)√E_b·x/N_0) < exp(−(2Aα+α²)E_b/N_0)`
/// with `x = Re r_l`, evaluated in the log domain.
pub fn detect_ook_exact_ml(r: &ComplexSignal, cfg: &DetectorConfig) -> Result<DetectionResult> {
    check_frequency(r)?;
    cfg.validate()?;
    let DetectorConfig { a_direct: a, alpha, energy, n0, .. } = *cfg;
    let amp = energy.sqrt();
    let rhs = -(2.0 * a * alpha + alpha * alpha) * energy / n0;
    let llr: Vec<f64> = r
        .samples()
        .iter()
        .map(|v| ln_cosh(2.0 * a * amp * v.re / n0) - ln_cosh(2.0 * (a + alpha) * amp * v.re / n0) - rhs)
        .collect();
    let bits = llr.iter().map(|l| u8::from(*l < 0.0)).collect();
    Ok(DetectionResult { bits, recovered_index: None, out_of_codebook: false, per_subcarrier_stats: llr })
}

pub fn detect_ook(r: &ComplexSignal, cfg: &DetectorConfig) -> Result<DetectionResult> {
    match cfg.mode {
        DetectorMode::Threshold => detect_ook_threshold(r, cfg),
        DetectorMode::ExactMl => detect_ook_exact_ml(r, cfg),
    }
}

/// Index-modulation detection: the `k` subcarriers with the largest `|r_l|`
/// (lowest index first on ties) form the active set. A set ranked beyond
/// the codebook is mapped to the last codeword and flagged.
pub fn detect_im(r: &ComplexSignal, k: usize, cfg: &DetectorConfig) -> Result<DetectionResult> {
    check_frequency(r)?;
    cfg.validate()?;
    let n = r.len();
    if k == 0 || k > n {
        return invalid(format!("need 1 <= k <= {n}, got {k}"));
    }
    let stats: Vec<f64> = r.samples().iter().map(|v| v.norm()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| stats[j].total_cmp(&stats[i]).then(i.cmp(&j)));
    let mask = SubcarrierMask::from_active(n, &order[..k])?;
    let size = codebook_size(n, k)?;
    let rank = subset_rank(&mask, k)?;
    let (index, clamped) = if rank >= size { (size - 1, true) } else { (rank, false) };
    Ok(DetectionResult {
        bits: mask.to_bits(),
        recovered_index: Some(index),
        out_of_codebook: clamped,
        per_subcarrier_stats: stats,
    })
}
