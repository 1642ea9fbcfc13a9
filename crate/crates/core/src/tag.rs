//! Backscatter tag: subcarrier masks for on-off keying and index
//! modulation, and the masking operator applied to the incident symbol.
//!
//! The tag removes the cyclic prefix, takes the DFT, nulls the subcarriers
//! whose mask bit is 0, returns to the time domain, restores the prefix and
//! reflects the result with attenuation `β`. Noise added inside the tag is
//! ignored.

use rand::Rng;

use crate::analysis::{binomial, im_bit_count};
use crate::error::{invalid, Error, Result};
use crate::linalg::DenseMatrix;
use crate::ofdm::{build_u_matrix, ComplexSignal, OfdmModem, OfdmParams, SignalDomain};
use crate::Complex64;

/// Per-subcarrier keep (true) / null (false) pattern.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SubcarrierMask {
    bits: Vec<bool>,
}

impl SubcarrierMask {
    pub fn from_bools(bits: Vec<bool>) -> Self {
        Self { bits }
    }

    pub fn all(n: usize, keep: bool) -> Self {
        Self { bits: vec![keep; n] }
    }

    /// Mask with exactly the given (in-range) subcarriers active.
    pub fn from_active(n: usize, active: &[usize]) -> Result<Self> {
        let mut bits = vec![false; n];
        for &i in active {
            if i >= n {
                return invalid(format!("subcarrier {i} out of range for {n} subcarriers"));
            }
            bits[i] = true;
        }
        Ok(Self { bits })
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn popcount(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    /// Ascending indices of the active subcarriers.
    pub fn active(&self) -> Vec<usize> {
        self.bits.iter().enumerate().filter(|(_, b)| **b).map(|(i, _)| i).collect()
    }

    pub fn to_bits(&self) -> Vec<u8> {
        self.bits.iter().map(|b| u8::from(*b)).collect()
    }
}

/// Data carried by the tag during one OFDM symbol.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TagMessage {
    /// One bit per subcarrier.
    Ook { bits: Vec<u8> },
    /// Codeword `index` selecting `k` active subcarriers out of `n`.
    Im { index: u128, n: usize, k: usize },
}

impl TagMessage {
    pub fn random_ook<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        TagMessage::Ook { bits: (0..n).map(|_| u8::from(rng.random::<bool>())).collect() }
    }

    pub fn random_im<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> Result<Self> {
        let size = codebook_size(n, k)?;
        Ok(TagMessage::Im { index: rng.random_range(0..size), n, k })
    }

    pub fn mask(&self) -> Result<SubcarrierMask> {
        match self {
            TagMessage::Ook { bits } => ook_mask(bits),
            TagMessage::Im { index, n, k } => im_encode(*index, *n, *k),
        }
    }
}

pub fn ook_mask(bits: &[u8]) -> Result<SubcarrierMask> {
    if let Some((i, b)) = bits.iter().enumerate().find(|(_, b)| **b > 1) {
        return invalid(format!("bit {i} has non-binary value {b}"));
    }
    Ok(SubcarrierMask { bits: bits.iter().map(|b| *b == 1).collect() })
}

/// Number of usable index-modulation codewords, `2^η`.
pub fn codebook_size(n: usize, k: usize) -> Result<u128> {
    Ok(1u128 << im_bit_count(n, k)?)
}

fn choose(n: usize, k: usize) -> u128 {
    // callers stay within MAX_IM_SUBCARRIERS, checked through im_bit_count
    binomial(n, k).expect("binomial within u128")
}

/// Maps `index` to the `index`-th `k`-subset of `n` subcarriers in
/// lexicographic order. Only the first `2^η` subsets form the codebook.
pub fn im_encode(index: u128, n: usize, k: usize) -> Result<SubcarrierMask> {
    let size = codebook_size(n, k)?;
    if index >= size {
        return Err(Error::OutOfCodebook { index, size });
    }
    let mut rest = index;
    let mut bits = vec![false; n];
    let mut x = 0;
    for slot in 0..k {
        loop {
            let below = choose(n - 1 - x, k - 1 - slot);
            if rest < below {
                bits[x] = true;
                x += 1;
                break;
            }
            rest -= below;
            x += 1;
        }
    }
    Ok(SubcarrierMask { bits })
}

/// Lexicographic rank of the active set among all `k`-subsets, without any
/// codebook check.
pub fn subset_rank(mask: &SubcarrierMask, k: usize) -> Result<u128> {
    let n = mask.len();
    let active = mask.active();
    if active.len() != k {
        return invalid(format!("mask has {} active subcarriers, expected {k}", active.len()));
    }
    if n > crate::analysis::MAX_IM_SUBCARRIERS {
        return invalid(format!("n={n} exceeds the supported maximum"));
    }
    let mut rank = 0u128;
    let mut start = 0;
    for (slot, &c) in active.iter().enumerate() {
        for x in start..c {
            rank += choose(n - 1 - x, k - 1 - slot);
        }
        start = c + 1;
    }
    Ok(rank)
}

/// Inverse of [`im_encode`].
pub fn im_decode(mask: &SubcarrierMask, k: usize) -> Result<u128> {
    let rank = subset_rank(mask, k)?;
    let size = codebook_size(mask.len(), k)?;
    if rank >= size {
        return Err(Error::OutOfCodebook { index: rank, size });
    }
    Ok(rank)
}

fn check_backscatter_inputs(u: &ComplexSignal, mask: &SubcarrierMask, beta: f64, params: &OfdmParams) -> Result<()> {
    u.check(params, SignalDomain::TimeWithCp)?;
    if mask.len() != params.n_subcarriers {
        return invalid(format!("mask has {} entries, expected {}", mask.len(), params.n_subcarriers));
    }
    if !(beta > 0.0 && beta <= 1.0) {
        return invalid(format!("beta must lie in (0, 1], got {beta}"));
    }
    Ok(())
}

/// Applies `β·V_b` to the incident symbol `u` using the modem's transform.
pub fn backscatter_with(
    modem: &OfdmModem,
    u: &ComplexSignal,
    mask: &SubcarrierMask,
    beta: f64,
) -> Result<ComplexSignal> {
    let params = modem.params();
    check_backscatter_inputs(u, mask, beta, params)?;
    let body = ComplexSignal::new(u.samples()[params.n_cp..].to_vec(), SignalDomain::TimeNoCp);
    let mut spectrum = modem.dft(&body)?.into_samples();
    for (v, keep) in spectrum.iter_mut().zip(mask.bits()) {
        if !keep {
            *v = Complex64::new(0.0, 0.0);
        }
    }
    let mut out = modem.modulate_spectrum(&spectrum)?;
    out.samples_mut().iter_mut().for_each(|v| *v *= beta);
    Ok(out)
}

pub fn backscatter(u: &ComplexSignal, mask: &SubcarrierMask, beta: f64, params: &OfdmParams) -> Result<ComplexSignal> {
    backscatter_with(&OfdmModem::new(*params)?, u, mask, beta)
}

/// Explicit `(N_s+N_cp) × (N_s+N_cp)` operator `U·diag(d)·[O F]`.
/// Dense, so meant for small `N_s`.
pub fn build_vb_matrix(mask: &SubcarrierMask, params: &OfdmParams) -> Result<DenseMatrix> {
    params.validate()?;
    let n = params.n_subcarriers;
    if mask.len() != n {
        return invalid(format!("mask has {} entries, expected {n}", mask.len()));
    }
    let u = build_u_matrix(params);
    let f = DenseMatrix::unitary_dft(n);
    // diag(d)·[O F]: the DFT applied to the CP-free part, masked rows zeroed
    let masked_dft = DenseMatrix::from_fn(n, params.frame_len(), |r, c| {
        if c < params.n_cp || !mask.bits()[r] {
            Complex64::new(0.0, 0.0)
        } else {
            f.get(r, c - params.n_cp)
        }
    });
    Ok(u.mul(&masked_dft))
}
