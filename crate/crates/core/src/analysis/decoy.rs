//! Decoy-state bounds on the single-photon contribution.
//!
//! The counting rates of the vacuum-paired decoy classes bracket the
//! single-photon yields seen from either side; those in turn bound the
//! number of untagged signal bits and their phase-flip error rate.

use serde::{Deserialize, Serialize};

use super::chernoff::chernoff_bounds;
use crate::params::{ProtocolParams, UserParams};
use crate::protocol::DetectionTally;
use crate::{Error, Result};

/// Global per-entry failure probability of the fluctuation analysis.
pub const DEFAULT_XI: f64 = 1e-10;

/// One observed counting rate with its trial count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateEntry {
    pub successes: f64,
    pub trials: f64,
}

impl RateEntry {
    pub fn observed(&self) -> f64 {
        if self.trials > 0.0 {
            self.successes / self.trials
        } else {
            0.0
        }
    }

    /// Lower bound on the expected rate; `xi = None` means asymptotic
    /// (no fluctuation allowance).
    pub fn lower(&self, xi: Option<f64>) -> Result<f64> {
        match xi {
            None => Ok(self.observed()),
            Some(xi) => {
                if self.trials <= 0.0 {
                    return Err(Error::ZeroDenominator("rate entry with zero trials"));
                }
                Ok(chernoff_bounds(self.successes, xi)?.0 / self.trials)
            }
        }
    }

    pub fn upper(&self, xi: Option<f64>) -> Result<f64> {
        match xi {
            None => Ok(self.observed()),
            Some(xi) => {
                if self.trials <= 0.0 {
                    return Err(Error::ZeroDenominator("rate entry with zero trials"));
                }
                Ok(chernoff_bounds(self.successes, xi)?.1 / self.trials)
            }
        }
    }
}

/// The counting rates entering the single-photon bounds.
///
/// Classes in which one side chose vacuum are pooled with those where that
/// side chose the signal window but did not send (both emit nothing), which
/// roughly triples the statistics of each S entry: `s10` is Alice's weak
/// decoy against Bob's vacuum (XX10 + XZ10), `s20` her strong decoy (XX20 +
/// XZ20), `s01`/`s02` the mirror images, and `s00` the both-vacuum pool
/// (XX00 + XZ00 + ZX00). `t_xx` is the error yield of the phase-matched
/// μ_A1μ_B1 pairs: error events over matched pairs sent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CountingRates {
    pub s10: RateEntry,
    pub s20: RateEntry,
    pub s01: RateEntry,
    pub s02: RateEntry,
    pub s00: RateEntry,
    pub t_xx: RateEntry,
    /// Per-entry failure probability; `None` selects asymptotic analysis.
    pub xi: Option<f64>,
}

impl CountingRates {
    pub fn from_tally(tally: &DetectionTally, xi: Option<f64>) -> Result<Self> {
        let entry = |keys: &[&str]| -> Result<RateEntry> {
            let mut successes = 0.0;
            let mut trials = 0.0;
            for key in keys {
                let c = tally
                    .class(key)
                    .ok_or(Error::MissingRate("unknown class key"))?;
                successes += c.detected as f64;
                trials += c.sent as f64;
            }
            if trials == 0.0 {
                return Err(Error::MissingRate("class pool has no sent pairs"));
            }
            Ok(RateEntry { successes, trials })
        };
        let x11 = &tally.x11;
        if x11.matched_sent_pairs == 0 {
            return Err(Error::MissingRate("x11 record has no matched pairs sent"));
        }
        Ok(CountingRates {
            s10: entry(&["XX10", "XZ10"])?,
            s20: entry(&["XX20", "XZ20"])?,
            s01: entry(&["XX01", "ZX01"])?,
            s02: entry(&["XX02", "ZX02"])?,
            s00: entry(&["XX00", "XZ00", "ZX00"])?,
            t_xx: RateEntry {
                successes: x11.errors as f64,
                trials: x11.matched_sent_pairs as f64,
            },
            xi,
        })
    }
}

fn y_single_lower(
    s_weak: &RateEntry,
    s_strong: &RateEntry,
    s_vac: &RateEntry,
    mu1: f64,
    mu2: f64,
    xi: Option<f64>,
) -> Result<f64> {
    if !(mu2 > mu1 && mu1 > 0.0) {
        return Err(Error::Degenerate(format!(
            "decoy intensities must satisfy mu2 > mu1 > 0, got mu1 = {mu1}, mu2 = {mu2}"
        )));
    }
    // Positively-signed terms take their lower bounds, negatively-signed
    // ones their upper bounds.
    let num = mu2 * mu2 * mu1.exp() * s_weak.lower(xi)?
        - mu1 * mu1 * mu2.exp() * s_strong.upper(xi)?
        - (mu2 * mu2 - mu1 * mu1) * s_vac.upper(xi)?;
    Ok((num / (mu1 * mu2 * (mu2 - mu1))).max(0.0))
}

/// Lower bound on the yield of a single photon sent by Alice.
pub fn y10_lower(rates: &CountingRates, alice: &UserParams) -> Result<f64> {
    y_single_lower(&rates.s10, &rates.s20, &rates.s00, alice.mu_1, alice.mu_2, rates.xi)
}

/// Lower bound on the yield of a single photon sent by Bob.
pub fn y01_lower(rates: &CountingRates, bob: &UserParams) -> Result<f64> {
    y_single_lower(&rates.s01, &rates.s02, &rates.s00, bob.mu_1, bob.mu_2, rates.xi)
}

/// Intensity-weighted mean yield of the untagged bits.
pub fn y1_lower(y10: f64, y01: f64, mu_a1: f64, mu_b1: f64) -> Result<f64> {
    if mu_a1 + mu_b1 <= 0.0 {
        return Err(Error::ZeroDenominator("y1_lower: mu_a1 + mu_b1 = 0"));
    }
    Ok((mu_a1 * y10 + mu_b1 * y01) / (mu_a1 + mu_b1))
}

/// Lower bound on the number of untagged signal-window bits.
pub fn n1_lower(y10: f64, y01: f64, params: &ProtocolParams) -> f64 {
    let a = &params.alice;
    let b = &params.bob;
    let n_zz = params.n_tot as f64 * (1.0 - a.p_x) * (1.0 - b.p_x);
    n_zz
        * (a.epsilon * (1.0 - b.epsilon) * a.mu_z * (-a.mu_z).exp() * y10
            + b.epsilon * (1.0 - a.epsilon) * b.mu_z * (-b.mu_z).exp() * y01)
}

/// Upper bound on the phase-flip error rate of the untagged bits, clamped to
/// [0, 1/2].
pub fn e1ph_upper(rates: &CountingRates, y1_lower: f64, mu_a1: f64, mu_b1: f64) -> Result<f64> {
    let atten = (-(mu_a1 + mu_b1)).exp();
    let denom = atten * (mu_a1 + mu_b1) * y1_lower;
    if denom <= 0.0 {
        return Err(Error::ZeroDenominator("e1ph_upper: zero denominator"));
    }
    let num = rates.t_xx.upper(rates.xi)? - 0.5 * atten * rates.s00.lower(rates.xi)?;
    Ok((num / denom).clamp(0.0, 0.5))
}

/// Single-photon bounds deduced from a tally.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecoyBounds {
    pub y10_lower: f64,
    pub y01_lower: f64,
    pub y1_lower: f64,
    pub n1_lower: f64,
    pub e1ph_upper: f64,
}

pub fn decoy_bounds(
    tally: &DetectionTally,
    params: &ProtocolParams,
    xi: Option<f64>,
) -> Result<DecoyBounds> {
    let rates = CountingRates::from_tally(tally, xi)?;
    decoy_bounds_from_rates(&rates, params)
}

pub fn decoy_bounds_from_rates(
    rates: &CountingRates,
    params: &ProtocolParams,
) -> Result<DecoyBounds> {
    let y10 = y10_lower(rates, &params.alice)?;
    let y01 = y01_lower(rates, &params.bob)?;
    let y1 = y1_lower(y10, y01, params.alice.mu_1, params.bob.mu_1)?;
    let n1 = n1_lower(y10, y01, params);
    let e1ph = e1ph_upper(rates, y1, params.alice.mu_1, params.bob.mu_1)?;
    Ok(DecoyBounds {
        y10_lower: y10,
        y01_lower: y01,
        y1_lower: y1,
        n1_lower: n1,
        e1ph_upper: e1ph,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use approx::assert_relative_eq;

    fn synthetic_rates(f: impl Fn(f64, bool) -> f64, alice: &UserParams, bob: &UserParams) -> CountingRates {
        // f(mu, from_alice) gives the effective rate with the other side dark.
        let entry = |mu: f64, from_alice: bool| RateEntry { successes: f(mu, from_alice), trials: 1.0 };
        CountingRates {
            s10: entry(alice.mu_1, true),
            s20: entry(alice.mu_2, true),
            s01: entry(bob.mu_1, false),
            s02: entry(bob.mu_2, false),
            s00: entry(0.0, true),
            t_xx: RateEntry { successes: 0.0, trials: 1.0 },
            xi: None,
        }
    }

    #[test]
    fn linear_yield_model_recovers_slope() {
        // With S(μ) = e^{−μ}(y0 + y1·μ), the two-photon term vanishes and
        // the bound is tight.
        let mut alice = UserParams::symmetric_reference();
        alice.mu_1 = 0.1;
        alice.mu_2 = 0.4;
        let bob = alice;
        let (y0, y1) = (1e-6, 3.7e-4);
        let rates = synthetic_rates(|mu, _| (-mu).exp() * (y0 + y1 * mu), &alice, &bob);
        assert_relative_eq!(y10_lower(&rates, &alice).unwrap(), y1, max_relative = 1e-9);
        assert_relative_eq!(y01_lower(&rates, &bob).unwrap(), y1, max_relative = 1e-9);

        // A plain linear response only carries O(μ) corrections.
        let rates = synthetic_rates(|mu, _| y0 + y1 * mu, &alice, &bob);
        let mut small = alice;
        small.mu_1 = 0.002;
        small.mu_2 = 0.008;
        let rates_small = synthetic_rates(|mu, _| y0 + y1 * mu, &small, &small);
        assert_relative_eq!(y10_lower(&rates_small, &small).unwrap(), y1, max_relative = 1e-2);
        // At larger μ the linear model is not exactly Poissonian; just check
        // the bound stays below the slope.
        assert!(y10_lower(&rates, &alice).unwrap() <= y1 * 1.01);
    }

    #[test]
    fn vacuum_only_response_clamps_to_zero() {
        // S(μ) = y0·e^{−μ}: all events come from the vacuum component, so no
        // single-photon signal is present and the bound clamps at zero.
        let alice = UserParams::symmetric_reference();
        let rates = synthetic_rates(|mu, _| 4.2e-5 * (-mu).exp(), &alice, &alice);
        assert_eq!(y10_lower(&rates, &alice).unwrap(), 0.0);
        assert_eq!(y01_lower(&rates, &alice).unwrap(), 0.0);
        // A genuinely flat response decomposes into equal per-photon-number
        // yields, so the recovered single-photon yield is the floor itself.
        let rates = synthetic_rates(|_, _| 4.2e-5, &alice, &alice);
        let y = y10_lower(&rates, &alice).unwrap();
        assert_relative_eq!(y, 4.2e-5, max_relative = 0.02);
    }

    #[test]
    fn degenerate_intensity_spacing_rejected() {
        let mut alice = UserParams::symmetric_reference();
        let rates = synthetic_rates(|mu, _| 1e-4 * mu, &alice, &alice);
        alice.mu_2 = alice.mu_1;
        assert!(matches!(y10_lower(&rates, &alice), Err(Error::Degenerate(_))));
        alice.mu_1 = 0.0;
        alice.mu_2 = 0.1;
        assert!(y10_lower(&rates, &alice).is_err());
    }

    #[test]
    fn y1_weighting() {
        assert_relative_eq!(y1_lower(2e-4, 4e-4, 0.105, 0.105).unwrap(), 3e-4);
        assert_relative_eq!(y1_lower(3e-4, 3e-4, 0.1, 0.7).unwrap(), 3e-4);
        // Published asymmetric weights.
        let (mu_a1, mu_b1) = (0.057, 0.246);
        let (y10, y01) = (5e-4, 2e-4);
        let direct = (mu_a1 * y10 + mu_b1 * y01) / (mu_a1 + mu_b1);
        assert_relative_eq!(y1_lower(y10, y01, mu_a1, mu_b1).unwrap(), direct);
        assert!(y1_lower(1.0, 1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn n1_is_linear_in_n_tot_and_zero_at_zero_yield() {
        let params = fixtures::params_403km();
        assert_eq!(n1_lower(0.0, 0.0, &params), 0.0);
        let mut doubled = params.clone();
        doubled.n_tot *= 2;
        let base = n1_lower(1e-4, 2e-4, &params);
        assert!(base > 0.0);
        assert_relative_eq!(n1_lower(1e-4, 2e-4, &doubled), 2.0 * base, max_relative = 1e-12);
    }

    #[test]
    fn n1_reconstruction_403km_within_20_percent() {
        let params = fixtures::params_403km();
        let tally = fixtures::table_s5_403km();
        let bounds = decoy_bounds(&tally, &params, Some(DEFAULT_XI)).unwrap();
        let published = 9.565e6;
        assert!(
            (bounds.n1_lower / published - 1.0).abs() < 0.2,
            "n1 = {} vs published {published}",
            bounds.n1_lower
        );
        // Asymptotically the pooled reconstruction lands much closer.
        let asym = decoy_bounds(&tally, &params, None).unwrap();
        assert!(
            (asym.n1_lower / published - 1.0).abs() < 0.05,
            "asymptotic n1 = {}",
            asym.n1_lower
        );
    }

    #[test]
    fn all_bundled_tallies_give_positive_bounds() {
        for (label, params, _, tally) in fixtures::all_datasets() {
            let b = decoy_bounds(&tally, &params, Some(DEFAULT_XI)).unwrap();
            assert!(b.y10_lower > 0.0, "{label}");
            assert!(b.y01_lower > 0.0, "{label}");
            assert!(b.n1_lower > 0.0, "{label}");
            assert!(b.e1ph_upper > 0.0 && b.e1ph_upper < 0.5, "{label}: {}", b.e1ph_upper);
            let lo = b.y10_lower.min(b.y01_lower);
            let hi = b.y10_lower.max(b.y01_lower);
            assert!(b.y1_lower >= lo && b.y1_lower <= hi, "{label}");
        }
    }

    #[test]
    fn e1ph_clamps_pathological_inputs() {
        let params = fixtures::params_403km();
        let tally = fixtures::table_s5_403km();
        let mut rates = CountingRates::from_tally(&tally, None).unwrap();
        rates.t_xx.successes = 0.0;
        let e = e1ph_upper(&rates, 1e-4, params.alice.mu_1, params.bob.mu_1).unwrap();
        assert_eq!(e, 0.0);
        rates.t_xx.successes = rates.t_xx.trials; // all errors
        let e = e1ph_upper(&rates, 1e-9, params.alice.mu_1, params.bob.mu_1).unwrap();
        assert_eq!(e, 0.5);
        assert!(e1ph_upper(&rates, 0.0, 0.105, 0.105).is_err());
    }

    #[test]
    fn fluctuation_bounds_bracket_asymptotic_values() {
        let params = fixtures::params_403km();
        let tally = fixtures::table_s5_403km();
        let finite = decoy_bounds(&tally, &params, Some(DEFAULT_XI)).unwrap();
        let asym = decoy_bounds(&tally, &params, None).unwrap();
        assert!(finite.y10_lower <= asym.y10_lower);
        assert!(finite.y01_lower <= asym.y01_lower);
        assert!(finite.n1_lower <= asym.n1_lower);
        assert!(finite.e1ph_upper >= asym.e1ph_upper);
    }
}
