//! Fast invariant suite behind `ambc selftest`.
//!
//! Every check that touches the OFDM chain obtains its transform from a
//! factory, so a faulty transform can be substituted to confirm that the
//! suite notices.

use std::sync::Arc;
use std::time::Instant;

use crate::analysis::{ber_closed_form, im_bit_count, q_function};
use crate::ofdm::{
    build_u_matrix, generate_symbols, ComplexSignal, Dft, OfdmModem, OfdmParams, SignalDomain, Transform,
};
use crate::reader::{detect_im, detect_ook, DetectorConfig, DetectorMode};
use crate::rng::seeded;
use crate::tag::{backscatter_with, build_vb_matrix, im_decode, im_encode, TagMessage};
use crate::Complex64;

const N_S: usize = 8;
const N_CP: usize = 2;
const TOL: f64 = 1e-10;
const SEED: u64 = 0x5e1f_7e57;

pub type TransformFactory = dyn Fn(usize) -> Arc<dyn Transform>;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelftestReport {
    pub checks: Vec<CheckOutcome>,
    pub elapsed_ms: u128,
}

impl SelftestReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.error.is_none())
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckOutcome> {
        self.checks.iter().filter(|c| c.error.is_some())
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for c in &self.checks {
            match &c.error {
                None => s.push_str(&format!("ok    {}\n", c.name)),
                Some(e) => s.push_str(&format!("FAIL  {}: {e}\n", c.name)),
            }
        }
        let failed = self.failures().count();
        s.push_str(&format!("{} checks, {} failed, {} ms\n", self.checks.len(), failed, self.elapsed_ms));
        s
    }
}

type CheckResult = Result<(), String>;

fn max_dev(a: &[Complex64], b: &[Complex64]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

fn close(what: &str, a: &[Complex64], b: &[Complex64]) -> CheckResult {
    let d = max_dev(a, b);
    if d <= TOL {
        Ok(())
    } else {
        Err(format!("{what} deviates by {d:e}"))
    }
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn params() -> OfdmParams {
    OfdmParams::with_sizes(N_S, N_CP).expect("valid sizes")
}

fn modem(factory: &TransformFactory) -> Result<OfdmModem, String> {
    OfdmModem::with_transform(params(), factory(N_S)).map_err(err)
}

fn check_roundtrip(factory: &TransformFactory) -> CheckResult {
    let m = modem(factory)?;
    let mut rng = seeded(SEED);
    for _ in 0..20 {
        let s = generate_symbols(m.params(), 1.0, &mut rng).map_err(err)?;
        let back = m.demodulate(&m.modulate(&s).map_err(err)?).map_err(err)?;
        close("demodulate(modulate(s))", back.samples(), s.symbols())?;
    }
    Ok(())
}

fn check_parseval(factory: &TransformFactory) -> CheckResult {
    let m = modem(factory)?;
    let mut rng = seeded(SEED + 1);
    for _ in 0..20 {
        let s = generate_symbols(m.params(), 2.0, &mut rng).map_err(err)?;
        let x = ComplexSignal::new(s.symbols().to_vec(), SignalDomain::TimeNoCp);
        let e_in = x.energy();
        let e_f = m.dft(&x).map_err(err)?.energy();
        let e_t = m.idft(&ComplexSignal::new(s.symbols().to_vec(), SignalDomain::Frequency)).map_err(err)?.energy();
        if (e_f - e_in).abs() > TOL * e_in || (e_t - e_in).abs() > TOL * e_in {
            return Err(format!("energy {e_in} became {e_f} (DFT) and {e_t} (IDFT)"));
        }
    }
    Ok(())
}

fn check_dc(factory: &TransformFactory) -> CheckResult {
    let m = modem(factory)?;
    let ones = ComplexSignal::new(vec![Complex64::new(1.0, 0.0); N_S], SignalDomain::TimeNoCp);
    let mut expect = vec![Complex64::new(0.0, 0.0); N_S];
    expect[0] = Complex64::new((N_S as f64).sqrt(), 0.0);
    close("DFT of all-ones", m.dft(&ones).map_err(err)?.samples(), &expect)
}

fn check_u_oracle(factory: &TransformFactory) -> CheckResult {
    let m = modem(factory)?;
    let u = build_u_matrix(m.params());
    let mut rng = seeded(SEED + 2);
    for _ in 0..20 {
        let s = generate_symbols(m.params(), 1.0, &mut rng).map_err(err)?;
        close("modulate(s) against U·s", m.modulate(&s).map_err(err)?.samples(), &u.mul_vec(s.symbols()))?;
    }
    Ok(())
}

fn check_vb_oracle(factory: &TransformFactory) -> CheckResult {
    let m = modem(factory)?;
    let mut rng = seeded(SEED + 3);
    for _ in 0..20 {
        let s = generate_symbols(m.params(), 1.0, &mut rng).map_err(err)?;
        let u = m.modulate(&s).map_err(err)?;
        let mask = TagMessage::random_ook(N_S, &mut rng).mask().map_err(err)?;
        let vb = build_vb_matrix(&mask, m.params()).map_err(err)?;
        let got = backscatter_with(&m, &u, &mask, 1.0).map_err(err)?;
        close("backscatter against V_b·u", got.samples(), &vb.mul_vec(u.samples()))?;
    }
    Ok(())
}

fn check_noiseless_chain(factory: &TransformFactory) -> CheckResult {
    let m = modem(factory)?;
    let (a, alpha) = (1.0, 0.5);
    let cfg = DetectorConfig::new(a, alpha, 1.0, 1e-3, DetectorMode::Threshold).map_err(err)?;
    let mut rng = seeded(SEED + 4);
    for _ in 0..20 {
        let s = generate_symbols(m.params(), 1.0, &mut rng).map_err(err)?;
        let u = m.modulate(&s).map_err(err)?;
        let msg = TagMessage::random_ook(N_S, &mut rng);
        let mask = msg.mask().map_err(err)?;
        let mut y = backscatter_with(&m, &u, &mask, alpha).map_err(err)?;
        for (v, d) in y.samples_mut().iter_mut().zip(u.samples()) {
            *v += d * a;
        }
        let r = m.demodulate(&y).map_err(err)?;
        let det = detect_ook(&r, &cfg).map_err(err)?;
        if det.bits != mask.to_bits() {
            return Err(format!("sent {:?}, detected {:?}", mask.to_bits(), det.bits));
        }
    }
    Ok(())
}

fn check_im_roundtrip(_: &TransformFactory) -> CheckResult {
    let cfg = DetectorConfig::new(1.0, 1.0, 1.0, 1e-3, DetectorMode::Threshold).map_err(err)?;
    for k in 1..=N_S {
        let size = 1u128 << im_bit_count(N_S, k).map_err(err)?;
        for idx in 0..size {
            let mask = im_encode(idx, N_S, k).map_err(err)?;
            if im_decode(&mask, k).map_err(err)? != idx {
                return Err(format!("codeword {idx} of (n={N_S}, k={k}) does not decode to itself"));
            }
            let r: Vec<Complex64> =
                mask.bits().iter().map(|&on| Complex64::new(if on { 2.0 } else { 1.0 }, 0.0)).collect();
            let det = detect_im(&ComplexSignal::new(r, SignalDomain::Frequency), k, &cfg).map_err(err)?;
            if det.recovered_index != Some(idx) {
                return Err(format!("detect_im returned {:?} for codeword {idx}", det.recovered_index));
            }
        }
    }
    Ok(())
}

fn check_closed_form(_: &TransformFactory) -> CheckResult {
    if (q_function(0.0) - 0.5).abs() > 1e-15 {
        return Err(format!("Q(0) = {}", q_function(0.0)));
    }
    for a in [0.0, 0.5, 1.0, 2.0] {
        for alpha in [0.1, 0.5, 1.0, 3.0] {
            for db in (-10..=30).step_by(5) {
                let g = 10f64.powf(db as f64 / 10.0);
                let p = ber_closed_form(a, alpha, g);
                if p.clamped || !(0.0..=1.0).contains(&p.p_e) {
                    return Err(format!("probability out of range at A={a}, α={alpha}, {db} dB"));
                }
                if (p.p_e - 0.5 * (p.p_e0 + p.p_e1)).abs() > 1e-12 {
                    return Err(format!("average BER differs from the conditional mean at A={a}, α={alpha}, {db} dB"));
                }
            }
        }
    }
    Ok(())
}

type Check = fn(&TransformFactory) -> CheckResult;

const CHECKS: [(&str, Check); 8] = [
    ("ofdm roundtrip", check_roundtrip),
    ("transform preserves energy", check_parseval),
    ("DFT of all-ones is sqrt(N) at DC", check_dc),
    ("modulator matches U matrix", check_u_oracle),
    ("backscatter matches V_b matrix", check_vb_oracle),
    ("noiseless OOK chain is error-free", check_noiseless_chain),
    ("index modulation roundtrip", check_im_roundtrip),
    ("closed-form BER identities", check_closed_form),
];

/// Runs every check with transforms from `factory`.
pub fn run_with(factory: &TransformFactory) -> SelftestReport {
    let start = Instant::now();
    let checks = CHECKS
        .iter()
        .map(|(name, f)| {
            let error = match std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| f(factory))) {
                Ok(r) => r.err(),
                Err(_) => Some("panicked".to_string()),
            };
            CheckOutcome { name, error }
        })
        .collect();
    SelftestReport { checks, elapsed_ms: start.elapsed().as_millis() }
}

/// Runs every check with the built-in DFT.
pub fn run() -> SelftestReport {
    run_with(&|n| Arc::new(Dft::new(n)) as Arc<dyn Transform>)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pristine_build_passes() {
        let r = run();
        assert!(r.passed(), "{}", r.render());
        assert_eq!(r.checks.len(), CHECKS.len());
    }
}
