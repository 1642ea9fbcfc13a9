//! RIS-assisted flat-fading links.
//!
//! Each link (forward source→tag, direct source→reader, backward tag→reader)
//! is a LoS path plus `Q` reflector paths. The RIS sets every reflector phase
//! so that all paths arrive co-phased with the LoS component, which turns
//! the link gain into `(g_0 + Σ g_i)·e^{-jφ_0}` with non-negative `g_i`.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::ofdm::ComplexSignal;
use crate::Complex64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GainDistribution {
    /// Uniform on `[0, 2·mean]`: mean `mean`, variance `mean²/3`.
    UniformNonneg,
    /// Every reflector has gain exactly `mean`.
    Fixed,
}

/// One RIS-assisted link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RisLinkConfig {
    pub q_reflectors: usize,
    pub los_gain: f64,
    pub los_phase_rad: f64,
    pub gain_mean: f64,
    pub gain_distribution: GainDistribution,
}

impl Default for RisLinkConfig {
    fn default() -> Self {
        Self {
            q_reflectors: 0,
            los_gain: 1.0,
            los_phase_rad: 0.0,
            gain_mean: 0.2,
            gain_distribution: GainDistribution::UniformNonneg,
        }
    }
}

impl RisLinkConfig {
    /// LoS-only link with the given gain.
    pub fn los_only(los_gain: f64) -> Self {
        Self { los_gain, ..Self::default() }
    }

    /// `q` reflectors of fixed gain `gain` next to a LoS path of gain `los_gain`.
    pub fn fixed(q: usize, los_gain: f64, gain: f64) -> Self {
        Self {
            q_reflectors: q,
            los_gain,
            los_phase_rad: 0.0,
            gain_mean: gain,
            gain_distribution: GainDistribution::Fixed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.los_gain.is_finite() && self.los_gain > 0.0) {
            return invalid(format!("los_gain must be positive, got {}", self.los_gain));
        }
        if !(self.gain_mean.is_finite() && self.gain_mean > 0.0) {
            return invalid(format!("gain_mean must be positive, got {}", self.gain_mean));
        }
        if !self.los_phase_rad.is_finite() {
            return invalid("los_phase_rad must be finite");
        }
        Ok(())
    }

    /// Link gain with every reflector at its mean gain.
    pub fn nominal_gain(&self) -> Result<Complex64> {
        self.validate()?;
        composite_gain_aligned(self.los_gain, self.los_phase_rad, &vec![self.gain_mean; self.q_reflectors])
    }
}

/// Composite gains of the three links and the dyadic backscatter gain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompositeGains {
    /// Forward link, source to tag.
    pub h: Complex64,
    /// Direct link, source to reader.
    pub a_direct: Complex64,
    /// Backward link, tag to reader.
    pub g: Complex64,
    /// `g·β·h`.
    pub alpha: Complex64,
    pub beta: f64,
}

impl CompositeGains {
    pub fn new(h: Complex64, a_direct: Complex64, g: Complex64, beta: f64) -> Result<Self> {
        check_beta(beta)?;
        Ok(Self { h, a_direct, g, alpha: g * beta * h, beta })
    }
}

fn check_beta(beta: f64) -> Result<()> {
    if beta > 0.0 && beta <= 1.0 {
        Ok(())
    } else {
        invalid(format!("tag attenuation beta must lie in (0, 1], got {beta}"))
    }
}

pub fn sample_reflector_gains<R: Rng + ?Sized>(cfg: &RisLinkConfig, rng: &mut R) -> Vec<f64> {
    match cfg.gain_distribution {
        GainDistribution::Fixed => vec![cfg.gain_mean; cfg.q_reflectors],
        GainDistribution::UniformNonneg => {
            let hi = 2.0 * cfg.gain_mean;
            (0..cfg.q_reflectors).map(|_| rng.random::<f64>() * hi).collect()
        }
    }
}

/// `(los_gain + Σ gains)·exp(-j·los_phase_rad)`: the link gain once every
/// reflector phase cancels its path phase relative to the LoS path.
pub fn composite_gain_aligned(los_gain: f64, los_phase_rad: f64, reflector_gains: &[f64]) -> Result<Complex64> {
    if !(los_gain.is_finite() && los_gain > 0.0) {
        return invalid(format!("los_gain must be positive, got {los_gain}"));
    }
    if let Some(g) = reflector_gains.iter().find(|g| !(g.is_finite() && **g >= 0.0)) {
        return invalid(format!("reflector gains must be non-negative, got {g}"));
    }
    let magnitude = los_gain + reflector_gains.iter().sum::<f64>();
    Ok(Complex64::from_polar(magnitude, -los_phase_rad))
}

/// Draws reflector gains for all three links and combines them.
pub fn build_composite<R: Rng + ?Sized>(
    forward: &RisLinkConfig,
    direct: &RisLinkConfig,
    backward: &RisLinkConfig,
    beta: f64,
    rng: &mut R,
) -> Result<CompositeGains> {
    check_beta(beta)?;
    let mut link = |cfg: &RisLinkConfig| -> Result<Complex64> {
        cfg.validate()?;
        let gains = sample_reflector_gains(cfg, rng);
        composite_gain_aligned(cfg.los_gain, cfg.los_phase_rad, &gains)
    };
    let h = link(forward)?;
    let a_direct = link(direct)?;
    let g = link(backward)?;
    CompositeGains::new(h, a_direct, g, beta)
}

pub fn apply_flat_channel(x: &ComplexSignal, gain: Complex64) -> ComplexSignal {
    ComplexSignal::new(x.samples().iter().map(|v| v * gain).collect(), x.domain())
}

/// Adds circularly symmetric complex Gaussian noise of variance `n0` per
/// sample (`n0/2` per real dimension).
pub fn add_awgn<R: Rng + ?Sized>(y: &ComplexSignal, n0: f64, rng: &mut R) -> Result<ComplexSignal> {
    if !(n0.is_finite() && n0 > 0.0) {
        return invalid(format!("noise variance must be positive, got {n0}"));
    }
    let sigma = (n0 / 2.0).sqrt();
    let samples = y
        .samples()
        .iter()
        .map(|v| {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            v + Complex64::new(sigma * re, sigma * im)
        })
        .collect();
    Ok(ComplexSignal::new(samples, y.domain()))
}

/// Coverage distance ratio of an RIS-assisted backward link over a LoS-only
/// link, assuming path loss grows with distance squared:
/// `sqrt((q_b²·μ_c² + q_b·σ_c²) / c0²)`.
///
/// The second moment counts `q_b` reflector terms only, so a link without
/// reflectors evaluates to 0 rather than 1.
pub fn coverage_ratio(q_b: usize, mu_c_sq: f64, sigma_c_sq: f64, c0: f64) -> Result<f64> {
    if !(c0.is_finite() && c0 > 0.0) {
        return invalid(format!("c0 must be positive, got {c0}"));
    }
    if !(mu_c_sq.is_finite() && mu_c_sq >= 0.0 && sigma_c_sq.is_finite() && sigma_c_sq >= 0.0) {
        return invalid("mu_c_sq and sigma_c_sq must be non-negative");
    }
    let q = q_b as f64;
    Ok(((q * q * mu_c_sq + q * sigma_c_sq) / (c0 * c0)).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ofdm::SignalDomain;
    use crate::rng::seeded;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn reflector_gain_sampling() {
        let mut rng = seeded(1);
        assert!(sample_reflector_gains(&RisLinkConfig::default(), &mut rng).is_empty());
        assert_eq!(sample_reflector_gains(&RisLinkConfig::fixed(3, 1.0, 0.2), &mut rng), vec![0.2, 0.2, 0.2]);
    }

    #[test]
    fn uniform_gain_moments() {
        let cfg = RisLinkConfig { q_reflectors: 100_000, ..RisLinkConfig::default() };
        let gains = sample_reflector_gains(&cfg, &mut seeded(2));
        assert!(gains.iter().all(|g| (0.0..=0.4).contains(g)));
        let mean = gains.iter().sum::<f64>() / gains.len() as f64;
        let sd = (0.2f64 * 0.2 / 3.0 / gains.len() as f64).sqrt();
        assert!((mean - 0.2).abs() < 3.0 * sd, "mean {mean}");
    }

    #[test]
    fn aligned_gain_examples() {
        assert!((composite_gain_aligned(1.0, 0.0, &[]).unwrap() - c(1.0, 0.0)).norm() < 1e-15);
        assert!((composite_gain_aligned(1.0, 0.0, &[0.2, 0.2, 0.2]).unwrap() - c(1.6, 0.0)).norm() < 1e-15);
        assert!((composite_gain_aligned(1.0, PI, &[0.5]).unwrap() - c(-1.5, 0.0)).norm() < 1e-15);
        assert!(composite_gain_aligned(1.0, 0.0, &[-0.1]).is_err());
        assert!(composite_gain_aligned(0.0, 0.0, &[]).is_err());
    }

    #[test]
    fn composite_gains() {
        let los = RisLinkConfig::fixed(0, 1.0, 0.2);
        let g = build_composite(&los, &los, &los, 1.0, &mut seeded(0)).unwrap();
        for v in [g.h, g.a_direct, g.g, g.alpha] {
            assert!((v - c(1.0, 0.0)).norm() < 1e-15);
        }

        let parts = CompositeGains::new(c(2.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), 0.5).unwrap();
        assert!((parts.alpha - c(1.0, 0.0)).norm() < 1e-15);

        let five = RisLinkConfig::fixed(5, 1.0, 0.2);
        let g = build_composite(&five, &los, &five, 1.0, &mut seeded(0)).unwrap();
        assert!((g.alpha.norm() - 4.0).abs() < 1e-12);

        assert!(build_composite(&los, &los, &los, 0.0, &mut seeded(0)).is_err());
        assert!(build_composite(&los, &los, &los, 1.5, &mut seeded(0)).is_err());
    }

    #[test]
    fn flat_channel() {
        let mut imp = vec![c(0.0, 0.0); 4];
        imp[0] = c(1.0, 0.0);
        let x = ComplexSignal::new(imp, SignalDomain::Frequency);
        assert_eq!(apply_flat_channel(&x, c(1.0, 0.0)), x);
        assert!(apply_flat_channel(&x, c(0.0, 0.0)).samples().iter().all(|v| v.norm() == 0.0));
        let y = apply_flat_channel(&x, c(0.0, 2.0));
        assert_eq!(y.samples()[0], c(0.0, 2.0));
        assert_eq!(y.domain(), SignalDomain::Frequency);
    }

    #[test]
    fn awgn_statistics() {
        let n = 1_000_000;
        let n0 = 0.3;
        let zero = ComplexSignal::new(vec![c(0.0, 0.0); n], SignalDomain::TimeNoCp);
        let y = add_awgn(&zero, n0, &mut seeded(7)).unwrap();
        let mean: Complex64 = y.samples().iter().sum::<Complex64>() / n as f64;
        let var = y.energy() / n as f64;
        // the mean of each real dimension has std sqrt(n0/2/n)
        let sd = (n0 / 2.0 / n as f64).sqrt();
        assert!(mean.re.abs() < 3.0 * sd && mean.im.abs() < 3.0 * sd);
        assert!((var - n0).abs() / n0 < 0.01, "variance {var}");
        let re_var = y.samples().iter().map(|v| v.re * v.re).sum::<f64>() / n as f64;
        assert!((re_var - n0 / 2.0).abs() / (n0 / 2.0) < 0.01);
    }

    #[test]
    fn awgn_is_deterministic_and_validates() {
        let x = ComplexSignal::new(vec![c(1.0, 0.0); 16], SignalDomain::TimeNoCp);
        assert_eq!(add_awgn(&x, 1.0, &mut seeded(3)).unwrap(), add_awgn(&x, 1.0, &mut seeded(3)).unwrap());
        assert!(add_awgn(&x, 0.0, &mut seeded(3)).is_err());
        assert!(add_awgn(&x, -1.0, &mut seeded(3)).is_err());
    }

    #[test]
    fn coverage_examples() {
        assert!((coverage_ratio(10, 0.5, 1.0, 1.0).unwrap() - 60f64.sqrt()).abs() < 1e-12);
        assert_eq!(coverage_ratio(0, 0.5, 1.0, 1.0).unwrap(), 0.0);
        let one = coverage_ratio(7, 0.5, 1.0, 1.0).unwrap();
        let two = coverage_ratio(7, 0.5, 1.0, 2.0).unwrap();
        assert!((one / 2.0 - two).abs() < 1e-12);
        assert!(coverage_ratio(7, 0.5, 1.0, 0.0).is_err());
        assert!(coverage_ratio(7, 0.5, 1.0, -1.0).is_err());
    }

    proptest! {
        #[test]
        fn aligned_magnitude_grows_with_reflectors(gains in prop::collection::vec(0.0f64..2.0, 0..20), phase in -10.0f64..10.0) {
            let mut prev = 0.0;
            for q in 0..=gains.len() {
                let m = composite_gain_aligned(0.5, phase, &gains[..q]).unwrap().norm();
                prop_assert!(m + 1e-12 >= prev);
                prev = m;
            }
        }

        #[test]
        fn alpha_is_product(seed in any::<u64>(), beta in 0.01f64..=1.0, qf in 0usize..8, qb in 0usize..8) {
            let f = RisLinkConfig { q_reflectors: qf, los_phase_rad: 0.7, ..RisLinkConfig::default() };
            let b = RisLinkConfig { q_reflectors: qb, los_phase_rad: -1.1, ..RisLinkConfig::default() };
            let g = build_composite(&f, &RisLinkConfig::default(), &b, beta, &mut seeded(seed)).unwrap();
            prop_assert_eq!(g.alpha, g.g * beta * g.h);
        }

        #[test]
        fn coverage_increases_with_reflectors(q in 1usize..500, c0 in 0.01f64..10.0) {
            prop_assert!(coverage_ratio(q + 1, 0.5, 1.0, c0).unwrap() > coverage_ratio(q, 0.5, 1.0, c0).unwrap());
        }
    }
}
