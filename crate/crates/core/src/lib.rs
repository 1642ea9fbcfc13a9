//! Link-level simulation of ambient backscatter communication over OFDM
//! subcarriers with RIS-assisted (phase-aligned) channels.
//!
//! The chain is: a WiFi-like source emits one OFDM symbol, a passive tag
//! nulls or preserves individual subcarriers (on-off keying or index
//! modulation), RIS reflectors co-phase the multipath components of every
//! link, and a reader detects the tag bits per subcarrier. Monte Carlo
//! sweeps are checked against the closed-form error probabilities in
//! [`analysis`].
//!
//! Module map:
//! - [`ofdm`]: unitary DFT, cyclic prefix, BPSK symbol generation.
//! - [`channel`]: reflector gains, composite link gains, AWGN, coverage ratio.
//! - [`tag`]: OOK masks, index-modulation codebook, backscatter operator.
//! - [`reader`]: optimal threshold, exact ML and index-modulation detectors.
//! - [`analysis`]: Q-function, BER expressions, bit rate and BRI metrics.
//! - [`montecarlo`]: deterministic parallel sweeps with Wilson intervals.
//! - [`cli`]: configuration, output files and the `ambc` subcommands.

pub mod analysis;
pub mod channel;
pub mod cli;
pub mod error;
pub mod linalg;
pub mod montecarlo;
pub mod ofdm;
pub mod reader;
pub mod rng;
pub mod tag;

pub use error::{Error, Result};
pub use num_complex::Complex64;
