//! Analytic channel-model predictions: phase-averaged exactly-one-click
//! probabilities per class. These feed the optimizer objective and serve as
//! cross-checks of the Monte Carlo simulator.

use super::aopp::aopp_analytic;
use super::decoy::{decoy_bounds_from_rates, CountingRates, RateEntry};
use super::keyrate::skr;
use crate::channel::{exclusive_click_probabilities, phase_average, transmittance, OpticalPath};
use crate::params::{LinkConfig, ProtocolParams};
use crate::protocol::DEFAULT_PHASE_JITTER_STD_RAD;
use crate::Result;

const PHASE_POINTS: usize = 256;

/// Arm transmittances (fibre + middle-node losses, detector efficiency
/// excluded, matching the simulator's convention).
pub fn arm_transmittances(link: &LinkConfig) -> (f64, f64) {
    let eta = |km: f64, extra: f64| {
        transmittance(&OpticalPath {
            length_km: km,
            loss_coeff_db_per_km: link.loss_coeff_db_per_km,
            extra_db: extra,
        })
    };
    (
        eta(link.alice_fibre_km, link.alice_extra_db),
        eta(link.bob_fibre_km, link.bob_extra_db),
    )
}

struct Detectors {
    eff0: f64,
    eff1: f64,
    dark0: f64,
    dark1: f64,
}

impl Detectors {
    fn from_link(link: &LinkConfig) -> Self {
        let (dark0, dark1) = link.dark_probs();
        Detectors { eff0: link.det_eff_0, eff1: link.det_eff_1, dark0, dark1 }
    }

    fn exclusive(&self, mu_a: f64, mu_b: f64, v: f64, phi: f64) -> (f64, f64) {
        exclusive_click_probabilities(mu_a, mu_b, phi, v, self.eff0, self.eff1, self.dark0, self.dark1)
    }

    /// Effective-event probability averaged over a uniform relative phase.
    fn effective_uniform(&self, mu_a: f64, mu_b: f64, v: f64) -> f64 {
        phase_average(PHASE_POINTS, |phi| {
            let (p0, p1) = self.exclusive(mu_a, mu_b, v, phi);
            p0 + p1
        })
    }
}

/// Average of `f` over a centred Gaussian offset via Simpson quadrature on
/// ±5σ (exact pass-through for σ = 0).
fn gaussian_average(std: f64, f: impl Fn(f64) -> f64) -> f64 {
    if std == 0.0 {
        return f(0.0);
    }
    let n = 160; // even
    let half = 5.0 * std;
    let h = 2.0 * half / n as f64;
    let (mut num, mut den) = (0.0, 0.0);
    for k in 0..=n {
        let x = -half + k as f64 * h;
        let w = if k == 0 || k == n {
            1.0
        } else if k % 2 == 1 {
            4.0
        } else {
            2.0
        };
        let pdf = (-0.5 * (x / std).powi(2)).exp();
        num += w * pdf * f(x);
        den += w * pdf;
    }
    num / den
}

/// Expected single-photon effective-event probability for a photon emitted
/// on the arm with transmittance `eta`: the photon reaches the splitter with
/// probability η, exits either port with probability 1/2 (the other input is
/// vacuum) and fires its detector with the detector efficiency; dark counts
/// fill in the remaining exactly-one-click combinations.
pub fn expected_single_photon_yield(
    eta: f64,
    det_eff_0: f64,
    det_eff_1: f64,
    dark0: f64,
    dark1: f64,
) -> f64 {
    let p0 = 0.5 * eta * det_eff_0;
    let p1 = 0.5 * eta * det_eff_1;
    let none = 1.0 - p0 - p1;
    p0 * (1.0 - dark1) + p1 * (1.0 - dark0) + none * (dark0 * (1.0 - dark1) + dark1 * (1.0 - dark0))
}

/// Asymptotic counting rates of the decoy pools under the channel model,
/// with the same class pooling as [`CountingRates::from_tally`].
pub fn expected_rates(params: &ProtocolParams, link: &LinkConfig, visibility: f64) -> CountingRates {
    expected_rates_with(params, link, visibility, DEFAULT_PHASE_JITTER_STD_RAD)
}

pub fn expected_rates_with(
    params: &ProtocolParams,
    link: &LinkConfig,
    visibility: f64,
    phase_jitter_std_rad: f64,
) -> CountingRates {
    let (eta_a, eta_b) = arm_transmittances(link);
    let det = Detectors::from_link(link);
    let a = &params.alice;
    let b = &params.bob;

    // Each pool mixes classes with slightly different co-emitted intensity
    // (true vacuum decoy μ0 vs a not-sent signal slot); weight by selection
    // probability.
    let pool = |entries: &[(f64, f64, f64)]| -> RateEntry {
        let mut rate = 0.0;
        let mut weight = 0.0;
        for &(w, mu_a, mu_b) in entries {
            rate += w * det.effective_uniform(eta_a * mu_a, eta_b * mu_b, visibility);
            weight += w;
        }
        RateEntry { successes: rate / weight, trials: 1.0 }
    };
    let a_vacuumish = [(a.p_x * a.p_mu0, a.mu_0), (a.p_z * (1.0 - a.epsilon), 0.0)];
    let b_vacuumish = [(b.p_x * b.p_mu0, b.mu_0), (b.p_z * (1.0 - b.epsilon), 0.0)];

    let one_sided = |mu: f64, from_alice: bool| -> RateEntry {
        let other = if from_alice { &b_vacuumish } else { &a_vacuumish };
        let entries: Vec<(f64, f64, f64)> = other
            .iter()
            .map(|&(w, mu_o)| if from_alice { (w, mu, mu_o) } else { (w, mu_o, mu) })
            .collect();
        pool(&entries)
    };
    let s00_entries: Vec<(f64, f64, f64)> = a_vacuumish
        .iter()
        .flat_map(|&(wa, mu_a)| {
            b_vacuumish.iter().filter_map(move |&(wb, mu_b)| {
                // The both-not-sent class is a Z bit (ZZ00), not part of the pool.
                if mu_a == 0.0 && mu_b == 0.0 {
                    None
                } else {
                    Some((wa * wb, mu_a, mu_b))
                }
            })
        })
        .collect();

    // Error yield of matched μ_A1μ_B1 pairs: average the wrong-detector
    // probability over the six accepted slice offsets, with the residual
    // phase jitter of the stabilised link folded in.
    let m = params.m_slices as f64;
    let slice = std::f64::consts::TAU / m;
    let mut t = 0.0;
    for offset in [-1.0f64, 0.0, 1.0] {
        for (base, wrong_is_d0) in [(0.0, false), (std::f64::consts::PI, true)] {
            let centre = base + offset * slice;
            t += gaussian_average(phase_jitter_std_rad, |jit| {
                let (p0, p1) = det.exclusive(eta_a * a.mu_1, eta_b * b.mu_1, visibility, centre + jit);
                if wrong_is_d0 {
                    p0
                } else {
                    p1
                }
            });
        }
    }
    let t_xx = RateEntry { successes: t / 6.0, trials: 1.0 };

    CountingRates {
        s10: one_sided(a.mu_1, true),
        s20: one_sided(a.mu_2, true),
        s01: one_sided(b.mu_1, false),
        s02: one_sided(b.mu_2, false),
        s00: pool(&s00_entries),
        t_xx,
        xi: None,
    }
}

/// Expected conditional effective-event probabilities of the four Z-basis
/// bit classes (given the class was selected).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZzExpectation {
    /// Bob sent, Alice did not (correct 0-bit).
    pub p03: f64,
    /// Alice sent, Bob did not (correct 1-bit).
    pub p30: f64,
    /// Both sent (errored 0-bit).
    pub p33: f64,
    /// Neither sent (errored 1-bit).
    pub p00: f64,
}

pub fn expected_zz(params: &ProtocolParams, link: &LinkConfig, visibility: f64) -> ZzExpectation {
    let (eta_a, eta_b) = arm_transmittances(link);
    let det = Detectors::from_link(link);
    let (mu_a, mu_b) = (params.alice.mu_z, params.bob.mu_z);
    ZzExpectation {
        p03: det.effective_uniform(0.0, eta_b * mu_b, visibility),
        p30: det.effective_uniform(eta_a * mu_a, 0.0, visibility),
        p33: det.effective_uniform(eta_a * mu_a, eta_b * mu_b, visibility),
        p00: det.effective_uniform(0.0, 0.0, visibility),
    }
}

/// Analytic expected key rate per signal under the channel model: asymptotic
/// decoy bounds on the expected rates, the analytic pairing outcome, and the
/// finite-size rate formula at the configured N_tot. The optimizer objective.
pub fn expected_key_rate(
    params: &ProtocolParams,
    link: &LinkConfig,
    visibility: f64,
) -> Result<f64> {
    let rates = expected_rates(params, link, visibility);
    let bounds = decoy_bounds_from_rates(&rates, params)?;
    let zz = expected_zz(params, link, visibility);
    let a = &params.alice;
    let b = &params.bob;
    let n_zz = params.n_tot as f64 * a.p_z * b.p_z;
    let c03 = n_zz * (1.0 - a.epsilon) * b.epsilon * zz.p03;
    let c30 = n_zz * a.epsilon * (1.0 - b.epsilon) * zz.p30;
    let c33 = n_zz * a.epsilon * b.epsilon * zz.p33;
    let c00 = n_zz * (1.0 - a.epsilon) * (1.0 - b.epsilon) * zz.p00;
    let zeros = c03 + c33;
    let ones = c30 + c00;
    if zeros <= 0.0 || ones <= 0.0 {
        return Ok(0.0);
    }
    let aopp = aopp_analytic(c33 / zeros, c00 / ones, zeros, ones)
        .with_untagged_estimates(bounds.n1_lower, bounds.e1ph_upper);
    let (n1p, e1php, _) = aopp.untagged().expect("estimates attached");
    skr(n1p, e1php, aopp.nt_prime, aopp.ez_prime, params.n_tot, &params.security)
}
