//! Closed-form link metrics: the Gaussian Q-function, bit error
//! probabilities of the amplitude-threshold detector, the CP-correlation
//! baseline curve, signal power, index-modulation bit count, bit-rate to
//! interference ratio and data rate.

use std::f64::consts::SQRT_2;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Largest subcarrier count for which exact binomials fit in `u128`.
pub const MAX_IM_SUBCARRIERS: usize = 128;

static CLAMP_EVENTS: AtomicU64 = AtomicU64::new(0);

/// Number of closed-form probabilities that had to be clamped into `[0, 1]`
/// since process start.
pub fn clamp_event_count() -> u64 {
    CLAMP_EVENTS.load(Ordering::Relaxed)
}

fn clamp_probability(p: f64) -> (f64, bool) {
    if (0.0..=1.0).contains(&p) {
        (p, false)
    } else {
        CLAMP_EVENTS.fetch_add(1, Ordering::Relaxed);
        (p.clamp(0.0, 1.0), true)
    }
}

/// Gaussian tail probability `Q(x) = P(N(0,1) > x)`.
pub fn q_function(x: f64) -> f64 {
    0.5 * libm::erfc(x / SQRT_2)
}

/// `ρ = sqrt(α²γ/2)`, the argument of the dominant BER term.
pub fn rho(alpha: f64, gamma: f64) -> f64 {
    (alpha * alpha * gamma / 2.0).sqrt()
}

fn outer_arg(a: f64, alpha: f64, alpha_weight: f64, gamma: f64) -> f64 {
    let m = 2.0 * a + alpha_weight * alpha;
    (2.0 * m * m * gamma).sqrt()
}

/// Error probability given bit 0 (subcarrier nulled):
/// `Q(sqrt(α²γ/2)) + Q(sqrt(2(2A + α/2)²γ))`.
pub fn ber_given_bit0(a: f64, alpha: f64, gamma: f64) -> f64 {
    let raw = q_function(rho(alpha, gamma)) + q_function(outer_arg(a, alpha, 0.5, gamma));
    clamp_probability(raw).0
}

/// Error probability given bit 1 (subcarrier preserved):
/// `1 − Q(−sqrt(α²γ/2)) − Q(sqrt(2(2A + 3α/2)²γ))`.
///
/// `1 − Q(−x)` is evaluated as `Q(x)`, which avoids cancellation once
/// `Q(−x)` rounds to 1.
pub fn ber_given_bit1(a: f64, alpha: f64, gamma: f64) -> f64 {
    let raw = q_function(rho(alpha, gamma)) - q_function(outer_arg(a, alpha, 1.5, gamma));
    clamp_probability(raw).0
}

/// Closed-form error probabilities at one SNR.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BerPoint {
    pub snr_linear: f64,
    pub p_e0: f64,
    pub p_e1: f64,
    pub p_e: f64,
    /// High-SNR approximation `Q(sqrt(α²γ/2))`.
    pub p_e_approx: f64,
    /// Set when any of the probabilities above was clamped into `[0, 1]`.
    pub clamped: bool,
}

/// Average BER for equiprobable tag bits, evaluated directly as
/// `Q(ρ) + ½Q(sqrt(2(2A+α/2)²γ)) − ½Q(sqrt(2(2A+3α/2)²γ))`.
pub fn ber_closed_form(a: f64, alpha: f64, gamma: f64) -> BerPoint {
    let r = rho(alpha, gamma);
    let before = clamp_event_count();
    let p_e0 = ber_given_bit0(a, alpha, gamma);
    let p_e1 = ber_given_bit1(a, alpha, gamma);
    let raw = q_function(r) + 0.5 * q_function(outer_arg(a, alpha, 0.5, gamma))
        - 0.5 * q_function(outer_arg(a, alpha, 1.5, gamma));
    let (p_e, c) = clamp_probability(raw);
    BerPoint {
        snr_linear: gamma,
        p_e0,
        p_e1,
        p_e,
        p_e_approx: q_function(r),
        clamped: c || clamp_event_count() != before,
    }
}

/// Decision-statistic argument `ζ` of the single-bit-per-symbol CP-based
/// baseline detector at high SNR over a flat channel.
///
/// `ζ² = N_cp(γ² + (1 − sqrt(1 + 2 ln γ / N_cp))γ)² / γ⁴ + 2 ln γ`, which
/// tends to `N_cp + 2 ln γ` as `γ → ∞`. Defined for `γ > 1`.
pub fn baseline_zeta(gamma: f64, n_cp: usize) -> Result<f64> {
    if !(gamma.is_finite() && gamma > 1.0) {
        return Err(Error::Domain(format!("baseline zeta needs gamma > 1, got {gamma}")));
    }
    if n_cp == 0 {
        return Err(Error::Domain("baseline zeta needs n_cp >= 1".into()));
    }
    let ncp = n_cp as f64;
    let ln_g = gamma.ln();
    let inner = gamma * gamma + (1.0 - (1.0 + 2.0 * ln_g / ncp).sqrt()) * gamma;
    let zeta_sq = ncp * inner * inner / gamma.powi(4) + 2.0 * ln_g;
    Ok(zeta_sq.sqrt())
}

/// Baseline BER curve `Q(ζ/√2)`.
pub fn baseline_ber(gamma: f64, n_cp: usize) -> Result<f64> {
    Ok(q_function(baseline_zeta(gamma, n_cp)? / SQRT_2))
}

/// Received signal power `(M·A² + K·(A+α)²)·E_b/N_s` with `M = N_s − K`
/// nulled and `K` preserved subcarriers.
pub fn signal_power(a: f64, alpha: f64, k: usize, n_s: usize, e_b: f64) -> Result<f64> {
    if n_s == 0 || k > n_s {
        return invalid(format!("need 0 <= k <= n_s and n_s > 0, got k={k}, n_s={n_s}"));
    }
    let m = (n_s - k) as f64;
    let k = k as f64;
    Ok((m * a * a + k * (a + alpha) * (a + alpha)) * e_b / n_s as f64)
}

/// Exact binomial coefficient, `None` on `u128` overflow.
pub fn binomial(n: usize, k: usize) -> Option<u128> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    // one Pascal row at a time, keeping only the first k+1 entries
    let mut row = vec![0u128; k + 1];
    row[0] = 1;
    for i in 1..=n {
        for j in (1..=k.min(i)).rev() {
            row[j] = row[j].checked_add(row[j - 1])?;
        }
    }
    Some(row[k])
}

/// `floor(log2 C(n_s, k))`: bits carried by choosing `k` active subcarriers.
pub fn im_bit_count(n_s: usize, k: usize) -> Result<u32> {
    if k == 0 || k > n_s {
        return invalid(format!("need 1 <= k <= n_s, got k={k}, n_s={n_s}"));
    }
    if n_s > MAX_IM_SUBCARRIERS {
        return invalid(format!("n_s={n_s} exceeds the supported maximum of {MAX_IM_SUBCARRIERS}"));
    }
    let c = binomial(n_s, k).ok_or_else(|| Error::InvalidInput("binomial overflow".into()))?;
    Ok(127 - c.leading_zeros())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum BriScheme {
    /// On-off keying: `N_s` bits over `N_s/2` active subcarriers on average.
    Ook,
    /// Index modulation with `k` active subcarriers.
    Im { k: usize },
}

/// Bit-rate to interference ratio: bits per symbol divided by the energy of
/// the active (interfering) subcarriers.
pub fn bri(n_s: usize, scheme: BriScheme, e_b: f64) -> Result<f64> {
    if !(e_b.is_finite() && e_b > 0.0) {
        return invalid("e_b must be positive");
    }
    if n_s == 0 {
        return invalid("n_s must be positive");
    }
    match scheme {
        BriScheme::Ook => Ok(n_s as f64 / (n_s as f64 / 2.0 * e_b)),
        BriScheme::Im { k } => Ok(im_bit_count(n_s, k)? as f64 / (k as f64 * e_b)),
    }
}

/// Bits per second when every symbol of duration `symbol_duration_s`
/// carries `bits_per_symbol` tag bits.
pub fn data_rate(bits_per_symbol: usize, symbol_duration_s: f64) -> Result<f64> {
    if !(symbol_duration_s.is_finite() && symbol_duration_s > 0.0) {
        return invalid("symbol duration must be positive");
    }
    Ok(bits_per_symbol as f64 / symbol_duration_s)
}
