//! OFDM symbol construction: BPSK data symbols, unitary DFT/IDFT and the
//! cyclic prefix.
//!
//! Both transform directions are scaled by `1/√N`, so white noise keeps its
//! per-sample variance when it moves between time and frequency domain and
//! the per-subcarrier model `r_l = (A + α d_l) s_l + n_l` holds exactly.
//! There are no guard bands: every subcarrier carries data.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::linalg::DenseMatrix;
use crate::Complex64;

/// Numerology of one OFDM symbol.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OfdmParams {
    pub n_subcarriers: usize,
    pub n_cp: usize,
    pub data_duration_s: f64,
    pub cp_duration_s: f64,
}

impl Default for OfdmParams {
    /// 802.11a-like numerology: 64 subcarriers, 16-sample CP, 3.2 µs + 0.8 µs.
    fn default() -> Self {
        Self { n_subcarriers: 64, n_cp: 16, data_duration_s: 3.2e-6, cp_duration_s: 0.8e-6 }
    }
}

impl OfdmParams {
    pub fn new(n_subcarriers: usize, n_cp: usize, data_duration_s: f64, cp_duration_s: f64) -> Result<Self> {
        let params = Self { n_subcarriers, n_cp, data_duration_s, cp_duration_s };
        params.validate()?;
        Ok(params)
    }

    /// Sample-count-only parameters; durations scale with the sample counts
    /// at the default 50 ns sample period.
    pub fn with_sizes(n_subcarriers: usize, n_cp: usize) -> Result<Self> {
        const SAMPLE_PERIOD_S: f64 = 50e-9;
        Self::new(n_subcarriers, n_cp, n_subcarriers as f64 * SAMPLE_PERIOD_S, n_cp as f64 * SAMPLE_PERIOD_S)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_subcarriers == 0 {
            return invalid("n_subcarriers must be positive");
        }
        if self.n_cp >= self.n_subcarriers {
            return invalid(format!(
                "n_cp ({}) must be smaller than n_subcarriers ({})",
                self.n_cp, self.n_subcarriers
            ));
        }
        if !(self.data_duration_s.is_finite() && self.data_duration_s > 0.0) {
            return invalid("data_duration_s must be positive");
        }
        if !(self.cp_duration_s.is_finite() && self.cp_duration_s >= 0.0) {
            return invalid("cp_duration_s must be non-negative");
        }
        Ok(())
    }

    /// Total symbol duration `T = T_d + T_cp`.
    pub fn symbol_duration_s(&self) -> f64 {
        self.data_duration_s + self.cp_duration_s
    }

    /// Samples in one transmitted symbol, prefix included.
    pub fn frame_len(&self) -> usize {
        self.n_subcarriers + self.n_cp
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SignalDomain {
    TimeWithCp,
    TimeNoCp,
    Frequency,
}

impl SignalDomain {
    pub fn expected_len(self, params: &OfdmParams) -> usize {
        match self {
            SignalDomain::TimeWithCp => params.frame_len(),
            SignalDomain::TimeNoCp | SignalDomain::Frequency => params.n_subcarriers,
        }
    }
}

impl fmt::Display for SignalDomain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SignalDomain::TimeWithCp => "time (with CP)",
            SignalDomain::TimeNoCp => "time (no CP)",
            SignalDomain::Frequency => "frequency",
        })
    }
}

/// A block of complex baseband samples tagged with its domain.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSignal {
    samples: Vec<Complex64>,
    domain: SignalDomain,
}

impl ComplexSignal {
    pub fn new(samples: Vec<Complex64>, domain: SignalDomain) -> Self {
        Self { samples, domain }
    }

    pub fn zeros(params: &OfdmParams, domain: SignalDomain) -> Self {
        Self::new(vec![Complex64::new(0.0, 0.0); domain.expected_len(params)], domain)
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    pub fn samples_mut(&mut self) -> &mut [Complex64] {
        &mut self.samples
    }

    pub fn into_samples(self) -> Vec<Complex64> {
        self.samples
    }

    pub fn domain(&self) -> SignalDomain {
        self.domain
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Sum of squared magnitudes.
    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|s| s.norm_sqr()).sum()
    }

    /// Checks the domain tag and the length it implies.
    pub fn check(&self, params: &OfdmParams, domain: SignalDomain) -> Result<()> {
        if self.domain != domain {
            return invalid(format!("expected a {domain} signal, got {}", self.domain));
        }
        let expected = domain.expected_len(params);
        if self.samples.len() != expected {
            return invalid(format!("{domain} signal has {} samples, expected {expected}", self.samples.len()));
        }
        Ok(())
    }

    /// Elementwise sum of two signals in the same domain.
    pub fn superpose(&self, other: &ComplexSignal) -> Result<ComplexSignal> {
        if self.domain != other.domain || self.len() != other.len() {
            return invalid("superposed signals must share domain and length");
        }
        let samples = self.samples.iter().zip(&other.samples).map(|(a, b)| a + b).collect();
        Ok(ComplexSignal::new(samples, self.domain))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Constellation {
    Bpsk,
}

/// Data symbols `s_l` carried on the subcarriers.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolVector {
    symbols: Vec<Complex64>,
    constellation: Constellation,
    energy: f64,
}

impl SymbolVector {
    /// Wraps BPSK symbols, checking every one is `±√energy`.
    pub fn bpsk(symbols: Vec<Complex64>, energy: f64) -> Result<Self> {
        if !(energy.is_finite() && energy > 0.0) {
            return invalid("symbol energy must be positive");
        }
        let amp = energy.sqrt();
        let tol = 1e-12 * amp.max(1.0);
        if let Some(bad) = symbols.iter().find(|s| s.im != 0.0 || (s.re.abs() - amp).abs() > tol) {
            return invalid(format!("{bad} is not a BPSK symbol of energy {energy}"));
        }
        Ok(Self { symbols, constellation: Constellation::Bpsk, energy })
    }

    pub fn symbols(&self) -> &[Complex64] {
        &self.symbols
    }

    pub fn constellation(&self) -> Constellation {
        self.constellation
    }

    pub fn energy(&self) -> f64 {
        self.energy
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }
}

/// Draws `N_s` i.i.d. equiprobable BPSK symbols `±√energy`.
pub fn generate_symbols<R: Rng + ?Sized>(params: &OfdmParams, energy: f64, rng: &mut R) -> Result<SymbolVector> {
    if !(energy.is_finite() && energy > 0.0) {
        return invalid("symbol energy must be positive");
    }
    let amp = energy.sqrt();
    let symbols =
        (0..params.n_subcarriers).map(|_| Complex64::new(if rng.random::<bool>() { amp } else { -amp }, 0.0)).collect();
    Ok(SymbolVector { symbols, constellation: Constellation::Bpsk, energy })
}

/// A length-`N` transform pair. Implementations must be mutually inverse.
pub trait Transform: Send + Sync {
    fn len(&self) -> usize;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
    fn forward(&self, buf: &mut [Complex64]);
    fn inverse(&self, buf: &mut [Complex64]);
}

/// Unitary DFT backed by planned FFTs.
pub struct Dft {
    n: usize,
    scale: f64,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl Dft {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self { n, scale: 1.0 / (n as f64).sqrt(), fwd: planner.plan_fft_forward(n), inv: planner.plan_fft_inverse(n) }
    }
}

impl fmt::Debug for Dft {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Dft").field("n", &self.n).finish()
    }
}

impl Transform for Dft {
    fn len(&self) -> usize {
        self.n
    }

    fn forward(&self, buf: &mut [Complex64]) {
        self.fwd.process(buf);
        buf.iter_mut().for_each(|v| *v *= self.scale);
    }

    fn inverse(&self, buf: &mut [Complex64]) {
        self.inv.process(buf);
        buf.iter_mut().for_each(|v| *v *= self.scale);
    }
}

/// OFDM modulator/demodulator with a cached transform.
#[derive(Clone)]
pub struct OfdmModem {
    params: OfdmParams,
    transform: Arc<dyn Transform>,
}

impl fmt::Debug for OfdmModem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OfdmModem").field("params", &self.params).finish()
    }
}

impl OfdmModem {
    pub fn new(params: OfdmParams) -> Result<Self> {
        params.validate()?;
        Ok(Self { params, transform: Arc::new(Dft::new(params.n_subcarriers)) })
    }

    /// Uses a caller-supplied transform instead of the built-in DFT.
    pub fn with_transform(params: OfdmParams, transform: Arc<dyn Transform>) -> Result<Self> {
        params.validate()?;
        if transform.len() != params.n_subcarriers {
            return invalid("transform length differs from n_subcarriers");
        }
        Ok(Self { params, transform })
    }

    pub fn params(&self) -> &OfdmParams {
        &self.params
    }

    pub fn dft(&self, v: &ComplexSignal) -> Result<ComplexSignal> {
        v.check(&self.params, SignalDomain::TimeNoCp)?;
        let mut buf = v.samples().to_vec();
        self.transform.forward(&mut buf);
        Ok(ComplexSignal::new(buf, SignalDomain::Frequency))
    }

    pub fn idft(&self, v: &ComplexSignal) -> Result<ComplexSignal> {
        v.check(&self.params, SignalDomain::Frequency)?;
        let mut buf = v.samples().to_vec();
        self.transform.inverse(&mut buf);
        Ok(ComplexSignal::new(buf, SignalDomain::TimeNoCp))
    }

    /// IDFT of the spectrum with the last `N_cp` samples copied in front.
    pub fn modulate_spectrum(&self, spectrum: &[Complex64]) -> Result<ComplexSignal> {
        let n = self.params.n_subcarriers;
        if spectrum.len() != n {
            return invalid(format!("spectrum has {} subcarriers, expected {n}", spectrum.len()));
        }
        let mut body = spectrum.to_vec();
        self.transform.inverse(&mut body);
        let mut out = Vec::with_capacity(self.params.frame_len());
        out.extend_from_slice(&body[n - self.params.n_cp..]);
        out.extend_from_slice(&body);
        Ok(ComplexSignal::new(out, SignalDomain::TimeWithCp))
    }

    pub fn modulate(&self, s: &SymbolVector) -> Result<ComplexSignal> {
        self.modulate_spectrum(s.symbols())
    }

    /// Drops the prefix and returns the DFT of the remaining `N_s` samples.
    pub fn demodulate(&self, z: &ComplexSignal) -> Result<ComplexSignal> {
        z.check(&self.params, SignalDomain::TimeWithCp)?;
        let mut buf = z.samples()[self.params.n_cp..].to_vec();
        self.transform.forward(&mut buf);
        Ok(ComplexSignal::new(buf, SignalDomain::Frequency))
    }
}

pub fn dft(v: &ComplexSignal, params: &OfdmParams) -> Result<ComplexSignal> {
    OfdmModem::new(*params)?.dft(v)
}

pub fn idft(v: &ComplexSignal, params: &OfdmParams) -> Result<ComplexSignal> {
    OfdmModem::new(*params)?.idft(v)
}

pub fn ofdm_modulate(s: &SymbolVector, params: &OfdmParams) -> Result<ComplexSignal> {
    OfdmModem::new(*params)?.modulate(s)
}

pub fn ofdm_demodulate(z: &ComplexSignal, params: &OfdmParams) -> Result<ComplexSignal> {
    OfdmModem::new(*params)?.demodulate(z)
}

/// Explicit `(N_s + N_cp) × N_s` modulation matrix: the last `N_cp` rows of
/// the unitary inverse DFT stacked on top of the full inverse DFT.
pub fn build_u_matrix(params: &OfdmParams) -> DenseMatrix {
    let n = params.n_subcarriers;
    let finv = DenseMatrix::unitary_idft(n);
    DenseMatrix::from_fn(params.frame_len(), n, |r, c| {
        if r < params.n_cp {
            finv.get(n - params.n_cp + r, c)
        } else {
            finv.get(r - params.n_cp, c)
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    /// Direct O(N²) summation with `sign` = -1 for forward, +1 for inverse.
    fn brute_dft(x: &[Complex64], sign: f64) -> Vec<Complex64> {
        let n = x.len();
        (0..n)
            .map(|k| {
                x.iter()
                    .enumerate()
                    .map(|(m, v)| v * Complex64::from_polar(1.0, sign * 2.0 * PI * (k * m) as f64 / n as f64))
                    .sum::<Complex64>()
                    / (n as f64).sqrt()
            })
            .collect()
    }

    fn random_vec(n: usize, seed: u64) -> Vec<Complex64> {
        let mut rng = seeded(seed);
        (0..n).map(|_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect()
    }

    fn max_err(a: &[Complex64], b: &[Complex64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
    }

    fn sizes(n: usize, cp: usize) -> OfdmParams {
        OfdmParams::with_sizes(n, cp).unwrap()
    }

    #[test]
    fn params_validation() {
        assert!(OfdmParams::default().validate().is_ok());
        assert!(OfdmParams::with_sizes(8, 8).is_err());
        assert!(OfdmParams::with_sizes(0, 0).is_err());
        assert!(OfdmParams::new(8, 2, 0.0, 0.0).is_err());
        assert!((OfdmParams::default().symbol_duration_s() - 4e-6).abs() < 1e-18);
    }

    #[test]
    fn dft_of_ones_is_dc() {
        let p = sizes(4, 0);
        let v = ComplexSignal::new(vec![c(1.0, 0.0); 4], SignalDomain::TimeNoCp);
        let out = dft(&v, &p).unwrap();
        assert!(max_err(out.samples(), &[c(2.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]) < 1e-12);
        let back = idft(&out, &p).unwrap();
        assert!(max_err(back.samples(), v.samples()) < 1e-12);
    }

    #[test]
    fn dft_of_impulse_is_flat() {
        let p = sizes(4, 0);
        let mut s = vec![c(0.0, 0.0); 4];
        s[0] = c(1.0, 0.0);
        let out = dft(&ComplexSignal::new(s, SignalDomain::TimeNoCp), &p).unwrap();
        assert!(max_err(out.samples(), &[c(0.5, 0.0); 4]) < 1e-12);
    }

    #[test]
    fn dft_matches_direct_summation() {
        let p = sizes(8, 2);
        let x = random_vec(8, 11);
        let out = dft(&ComplexSignal::new(x.clone(), SignalDomain::TimeNoCp), &p).unwrap();
        assert!(max_err(out.samples(), &brute_dft(&x, -1.0)) < 1e-12);
        let inv = idft(&ComplexSignal::new(x.clone(), SignalDomain::Frequency), &p).unwrap();
        assert!(max_err(inv.samples(), &brute_dft(&x, 1.0)) < 1e-12);
    }

    #[test]
    fn idft_of_zero_is_zero() {
        let p = sizes(8, 2);
        let out = idft(&ComplexSignal::zeros(&p, SignalDomain::Frequency), &p).unwrap();
        assert!(out.samples().iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn length_and_domain_mismatch_rejected() {
        let p = sizes(8, 2);
        let short = ComplexSignal::new(vec![c(0.0, 0.0); 7], SignalDomain::TimeNoCp);
        assert!(dft(&short, &p).is_err());
        let wrong = ComplexSignal::new(vec![c(0.0, 0.0); 8], SignalDomain::Frequency);
        assert!(dft(&wrong, &p).is_err());
        assert!(idft(&ComplexSignal::new(vec![c(0.0, 0.0); 9], SignalDomain::Frequency), &p).is_err());
        assert!(ofdm_demodulate(&ComplexSignal::zeros(&p, SignalDomain::TimeNoCp), &p).is_err());
        let sym = SymbolVector::bpsk(vec![c(1.0, 0.0); 5], 1.0).unwrap();
        assert!(ofdm_modulate(&sym, &p).is_err());
    }

    #[test]
    fn bpsk_symbols_have_unit_magnitude_and_are_reproducible() {
        let p = OfdmParams::default();
        let a = generate_symbols(&p, 1.0, &mut seeded(5)).unwrap();
        let b = generate_symbols(&p, 1.0, &mut seeded(5)).unwrap();
        assert_eq!(a, b);
        assert!(a.symbols().iter().all(|s| *s == c(1.0, 0.0) || *s == c(-1.0, 0.0)));
        assert!(generate_symbols(&p, 0.0, &mut seeded(5)).is_err());
        assert!(SymbolVector::bpsk(vec![c(0.5, 0.0)], 1.0).is_err());
    }

    #[test]
    fn bpsk_moments() {
        let p = sizes(100_000, 0);
        let energy = 2.0;
        let s = generate_symbols(&p, energy, &mut seeded(99)).unwrap();
        let n = s.len() as f64;
        let mean: f64 = s.symbols().iter().map(|v| v.re).sum::<f64>() / n;
        let power: f64 = s.symbols().iter().map(|v| v.norm_sqr()).sum::<f64>() / n;
        // symbol variance is `energy`, so the sample mean has std sqrt(energy/n)
        assert!(mean.abs() < 3.0 * (energy / n).sqrt(), "mean {mean}");
        assert!((power - energy).abs() / energy < 0.01);
    }

    #[test]
    fn zero_symbols_modulate_to_zero() {
        let p = sizes(8, 2);
        let out = OfdmModem::new(p).unwrap().modulate_spectrum(&[c(0.0, 0.0); 8]).unwrap();
        assert_eq!(out.len(), 10);
        assert!(out.samples().iter().all(|v| v.norm() == 0.0));
        let spectrum = ofdm_demodulate(&ComplexSignal::zeros(&p, SignalDomain::TimeWithCp), &p).unwrap();
        assert!(spectrum.samples().iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn cyclic_prefix_copies_tail() {
        let p = sizes(8, 2);
        let s = generate_symbols(&p, 1.0, &mut seeded(3)).unwrap();
        let x = ofdm_modulate(&s, &p).unwrap();
        assert_eq!(x.samples()[0], x.samples()[8]);
        assert_eq!(x.samples()[1], x.samples()[9]);
    }

    #[test]
    fn modulation_matches_u_matrix() {
        let p = sizes(8, 2);
        let u = build_u_matrix(&p);
        for seed in 0..10 {
            let s = generate_symbols(&p, 1.0, &mut seeded(seed)).unwrap();
            let expected = u.mul_vec(s.symbols());
            let got = ofdm_modulate(&s, &p).unwrap();
            assert!(max_err(got.samples(), &expected) < 1e-10);
        }
    }

    #[test]
    fn flat_gain_commutes_with_demodulation() {
        let p = sizes(8, 2);
        let s = generate_symbols(&p, 1.0, &mut seeded(4)).unwrap();
        let gain = c(0.3, -1.2);
        let x = ofdm_modulate(&s, &p).unwrap();
        let scaled = ComplexSignal::new(x.samples().iter().map(|v| v * gain).collect(), SignalDomain::TimeWithCp);
        let r = ofdm_demodulate(&scaled, &p).unwrap();
        let expected: Vec<_> = s.symbols().iter().map(|v| v * gain).collect();
        assert!(max_err(r.samples(), &expected) < 1e-12);
    }

    proptest! {
        #[test]
        fn parseval_holds(seed in any::<u64>(), log_n in 0u32..8) {
            let n = 1usize << log_n;
            let p = sizes(n, 0);
            let x = random_vec(n, seed);
            let t = ComplexSignal::new(x, SignalDomain::TimeNoCp);
            let f = dft(&t, &p).unwrap();
            prop_assert!((t.energy() - f.energy()).abs() <= 1e-10 * t.energy().max(1e-300));
        }

        #[test]
        fn modulate_demodulate_roundtrip(seed in any::<u64>(), n in 2usize..40, cp_frac in 0.0f64..1.0) {
            let cp = ((n - 1) as f64 * cp_frac) as usize;
            let p = sizes(n, cp);
            let s = generate_symbols(&p, 1.0, &mut seeded(seed)).unwrap();
            let r = ofdm_demodulate(&ofdm_modulate(&s, &p).unwrap(), &p).unwrap();
            prop_assert!(max_err(r.samples(), s.symbols()) < 1e-12);
        }
    }
}
