//! Finite-size key rate and the repeaterless PLOB benchmark.

use serde::{Deserialize, Serialize};

use super::aopp::UntaggedSource;
use crate::params::SecurityEpsilons;
use crate::{Error, Result};

/// Effective clock rate of the source in Hz.
pub const DEFAULT_CLOCK_HZ: f64 = 5e8;

/// Binary Shannon entropy in bits.
pub fn binary_entropy(x: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::InvalidInput(format!("binary_entropy: {x} outside [0, 1]")));
    }
    let term = |p: f64| if p > 0.0 { -p * p.log2() } else { 0.0 };
    Ok(term(x) + term(1.0 - x))
}

/// Finite-size correction Δ in bits.
pub fn delta_bits(security: &SecurityEpsilons) -> f64 {
    2.0 * (2.0 / security.eps_cor).log2()
        + 4.0 * (1.0 / (std::f64::consts::SQRT_2 * security.eps_pa * security.eps_hat)).log2()
}

/// Secure key per signal: R = {n1'·[1 − h(e1ph')] − f·nt'·h(ez') − Δ}/N_tot,
/// clamped at 0.
pub fn skr(
    n1_prime: f64,
    e1ph_prime: f64,
    nt_prime: f64,
    ez_prime: f64,
    n_tot: u64,
    security: &SecurityEpsilons,
) -> Result<f64> {
    if n1_prime < 0.0 || nt_prime < 0.0 {
        return Err(Error::InvalidInput("skr: negative counts".into()));
    }
    let bits = n1_prime * (1.0 - binary_entropy(e1ph_prime)?)
        - security.f * nt_prime * binary_entropy(ez_prime)?
        - delta_bits(security);
    Ok((bits / n_tot as f64).max(0.0))
}

pub fn skr_per_second(skr_per_signal: f64, clock_hz: f64) -> f64 {
    skr_per_signal * clock_hz
}

/// Repeaterless secret-key capacity −log2(1 − η) at the given attenuation;
/// evaluated through ln_1p to stay accurate at η ≪ 1.
pub fn plob_skc0_db(total_db: f64) -> f64 {
    let eta = 10f64.powf(-total_db / 10.0);
    -(-eta).ln_1p() / std::f64::consts::LN_2
}

pub fn plob_skc0(length_km: f64, coeff_db_per_km: f64) -> f64 {
    plob_skc0_db(length_km * coeff_db_per_km)
}

/// Key-rate summary with provenance flags.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KeyRateReport {
    pub skr_per_signal: f64,
    pub skr_per_second: f64,
    pub skc0_per_signal: Option<f64>,
    pub ratio_skr_skc0: Option<f64>,
    pub delta_bits: f64,
    pub n_tot: u64,
    pub n1_prime: f64,
    pub e1ph_prime: f64,
    pub nt_prime: f64,
    pub ez_prime: f64,
    pub n1_prime_source: UntaggedSource,
    pub derived_sent: bool,
}
