//! Actively odd-parity pairing (AOPP).
//!
//! Bob randomly pairs his 0-bits with his 1-bits and both sides discard
//! pairs whose parities disagree, trading roughly half the sifted key for a
//! two-orders-of-magnitude drop in the Z-basis error rate.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::protocol::DetectionTally;
use crate::{Error, Result};

/// Where the post-pairing untagged-bit figures came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UntaggedSource {
    /// Ingested from an external certified computation.
    External,
    /// In-repo simplified propagation model; not a certified bound.
    Estimated,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AoppOutcome {
    /// Error fraction among Bob's 0-bits (both-sent rounds).
    pub e0: f64,
    /// Error fraction among Bob's 1-bits (neither-sent rounds).
    pub e1: f64,
    /// Fraction of formed pairs that survive the parity comparison.
    pub pair_survival: f64,
    /// Surviving key length.
    pub nt_prime: f64,
    /// Z-basis error rate of the surviving key.
    pub ez_prime: f64,
    /// Effective Z events before pairing (scaling reference for estimates).
    pub nt_before: f64,
    /// Simplified-model estimates, not certified.
    pub n1_prime_estimate: Option<f64>,
    pub e1ph_prime_estimate: Option<f64>,
    /// Externally certified values, preferred when present.
    pub n1_prime_external: Option<f64>,
    pub e1ph_prime_external: Option<f64>,
    /// Set when no pairs could be formed.
    pub degenerate: bool,
}

/// Closed-form pairing outcome for class-conditional error rates `e0`, `e1`
/// and bit-class sizes: a pair survives when neither or both bits are wrong,
/// and a surviving pair carries an error exactly in the both-wrong case.
pub fn aopp_analytic(e0: f64, e1: f64, zeros: f64, ones: f64) -> AoppOutcome {
    let pair_survival = (1.0 - e0) * (1.0 - e1) + e0 * e1;
    let ez_prime = if pair_survival > 0.0 { e0 * e1 / pair_survival } else { 0.0 };
    AoppOutcome {
        e0,
        e1,
        pair_survival,
        nt_prime: zeros.min(ones) * pair_survival,
        ez_prime,
        nt_before: zeros + ones,
        n1_prime_estimate: None,
        e1ph_prime_estimate: None,
        n1_prime_external: None,
        e1ph_prime_external: None,
        degenerate: zeros.min(ones) == 0.0,
    }
}

impl AoppOutcome {
    /// Attach the simplified post-pairing estimates for the untagged bits:
    /// the surviving untagged count is scaled by the overall key retention
    /// and the phase-flip error propagates through pair parity as
    /// 2·e·(1 − e). Flagged non-certified.
    pub fn with_untagged_estimates(mut self, n1_lower: f64, e1ph_upper: f64) -> Self {
        let retention = if self.nt_before > 0.0 { self.nt_prime / self.nt_before } else { 0.0 };
        self.n1_prime_estimate = Some(n1_lower * retention);
        self.e1ph_prime_estimate = Some(2.0 * e1ph_upper * (1.0 - e1ph_upper));
        self
    }

    /// Attach externally certified post-pairing values.
    pub fn with_external(mut self, n1_prime: f64, e1ph_prime: f64) -> Self {
        self.n1_prime_external = Some(n1_prime);
        self.e1ph_prime_external = Some(e1ph_prime);
        self
    }

    /// Post-pairing untagged figures with their provenance; external values
    /// win over estimates.
    pub fn untagged(&self) -> Option<(f64, f64, UntaggedSource)> {
        if let (Some(n1), Some(e)) = (self.n1_prime_external, self.e1ph_prime_external) {
            return Some((n1, e, UntaggedSource::External));
        }
        if let (Some(n1), Some(e)) = (self.n1_prime_estimate, self.e1ph_prime_estimate) {
            return Some((n1, e, UntaggedSource::Estimated));
        }
        None
    }
}

/// Analytic pairing outcome from the ZZ class counts.
pub fn aopp_from_tally(tally: &DetectionTally) -> Result<AoppOutcome> {
    let d = |k: &str| tally.class(k).map(|c| c.detected as f64).unwrap_or(0.0);
    // Bob's 0-bits are the rounds he sent in (ZZ03 correct, ZZ33 error);
    // his 1-bits the rounds he did not (ZZ30 correct, ZZ00 error).
    let zeros = d("ZZ03") + d("ZZ33");
    let ones = d("ZZ30") + d("ZZ00");
    if zeros == 0.0 || ones == 0.0 {
        return Err(Error::ZeroDenominator("aopp_from_tally: empty ZZ bit class"));
    }
    let e0 = d("ZZ33") / zeros;
    let e1 = d("ZZ00") / ones;
    Ok(aopp_analytic(e0, e1, zeros, ones))
}

/// Literal pairing on raw key strings; bits are 0/1 values.
pub fn aopp_simulate<R: Rng + ?Sized>(
    bits_alice: &[u8],
    bits_bob: &[u8],
    rng: &mut R,
) -> AoppOutcome {
    assert_eq!(bits_alice.len(), bits_bob.len(), "key strings must align");
    let mut zero_pos: Vec<usize> = Vec::new();
    let mut one_pos: Vec<usize> = Vec::new();
    let (mut zero_err, mut one_err) = (0u64, 0u64);
    for (i, (&a, &b)) in bits_alice.iter().zip(bits_bob).enumerate() {
        if b == 0 {
            zero_pos.push(i);
            if a != b {
                zero_err += 1;
            }
        } else {
            one_pos.push(i);
            if a != b {
                one_err += 1;
            }
        }
    }
    let e0 = if zero_pos.is_empty() { 0.0 } else { zero_err as f64 / zero_pos.len() as f64 };
    let e1 = if one_pos.is_empty() { 0.0 } else { one_err as f64 / one_pos.len() as f64 };
    zero_pos.shuffle(rng);
    one_pos.shuffle(rng);
    let n_pairs = zero_pos.len().min(one_pos.len());
    let (mut kept, mut kept_err) = (0u64, 0u64);
    for (&i, &j) in zero_pos.iter().zip(&one_pos).take(n_pairs) {
        // Bob's pair parity is odd by construction; the pair survives when
        // Alice's parity is odd too, and the first bit is retained.
        if bits_alice[i] != bits_alice[j] {
            kept += 1;
            if bits_alice[i] != bits_bob[i] {
                kept_err += 1;
            }
        }
    }
    let mut out = aopp_analytic(e0, e1, zero_pos.len() as f64, one_pos.len() as f64);
    out.degenerate = n_pairs == 0;
    out.pair_survival = if n_pairs > 0 { kept as f64 / n_pairs as f64 } else { 0.0 };
    out.nt_prime = kept as f64;
    out.ez_prime = if kept > 0 { kept_err as f64 / kept as f64 } else { 0.0 };
    out
}
