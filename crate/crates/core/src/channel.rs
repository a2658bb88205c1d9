//! Optical-channel physics: fibre transmittance, coherent-state interference
//! at the middle node's 50/50 beam splitter, and the stochastic differential
//! phase of the open link.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// One user's optical path to the middle node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OpticalPath {
    pub length_km: f64,
    pub loss_coeff_db_per_km: f64,
    pub extra_db: f64,
}

/// Power transmittance 10^{−(length·coeff + extra)/10}.
pub fn transmittance(path: &OpticalPath) -> f64 {
    let db = path.length_km * path.loss_coeff_db_per_km + path.extra_db;
    10f64.powf(-db / 10.0)
}

/// Differential-phase noise of the open link.
///
/// The fibre term is modelled as a drift rate drawn fresh for each hold
/// interval from Normal(0, `fibre_rate_std_hz`); the carrier frequency and
/// fibre light speed of the physical drift expression are absorbed into the
/// rate standard deviation, since only their product is observable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseNoiseModel {
    /// Laser frequency difference Δν.
    pub delta_nu_hz: f64,
    /// Standard deviation of the fibre-induced drift rate.
    pub fibre_rate_std_hz: f64,
    /// Interval over which a drawn fibre rate is held constant before being
    /// redrawn. Matches the 10 ms windows the drift-rate statistics are
    /// characterised with. [`phase_step`] redraws every call regardless; the
    /// hold matters for fine-grained stabiliser simulation.
    #[serde(default = "default_rate_hold")]
    pub rate_hold_s: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_rate_hold() -> f64 {
    0.01
}

impl PhaseNoiseModel {
    pub fn new(delta_nu_hz: f64, fibre_rate_std_hz: f64) -> Self {
        PhaseNoiseModel { delta_nu_hz, fibre_rate_std_hz, rate_hold_s: default_rate_hold(), seed: 0 }
    }

    /// Draw one fibre drift rate in Hz.
    pub fn draw_rate<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.fibre_rate_std_hz == 0.0 {
            return 0.0;
        }
        Normal::new(0.0, self.fibre_rate_std_hz).expect("valid std").sample(rng)
    }
}

/// Differential phase of the twin fields and elapsed time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseState {
    pub phi_rad: f64,
    pub t_s: f64,
}

impl Default for PhaseState {
    fn default() -> Self {
        PhaseState { phi_rad: 0.0, t_s: 0.0 }
    }
}

/// Advance the differential phase by one step:
/// φ ← φ + 2π(Δν + r)·dt with r ~ Normal(0, fibre std), drawn fresh per call.
pub fn phase_step<R: Rng + ?Sized>(
    state: PhaseState,
    dt_s: f64,
    noise: &PhaseNoiseModel,
    rng: &mut R,
) -> PhaseState {
    debug_assert!(dt_s > 0.0);
    let rate = noise.delta_nu_hz + noise.draw_rate(rng);
    PhaseState {
        phi_rad: state.phi_rad + std::f64::consts::TAU * rate * dt_s,
        t_s: state.t_s + dt_s,
    }
}

/// Mean photon numbers at the two beam-splitter outputs for coherent inputs
/// with mean photon numbers `mu_a`, `mu_b` already attenuated to the splitter,
/// relative phase `delta_phi` and fringe visibility `v`:
/// n_{0,1} = (μ_a + μ_b)/2 ± V √(μ_a μ_b) cos(δφ).
pub fn splitter_means(mu_a: f64, mu_b: f64, v: f64, delta_phi_rad: f64) -> (f64, f64) {
    let avg = 0.5 * (mu_a + mu_b);
    let cross = v * (mu_a * mu_b).sqrt() * delta_phi_rad.cos();
    (avg + cross, avg - cross)
}

/// Click probabilities of the two detectors.
///
/// Detector efficiency is folded into `eta_a`, `eta_b` by the caller; each
/// detector clicks with probability 1 − (1 − dark)·e^{−n}.
#[allow(clippy::too_many_arguments)]
pub fn click_probabilities(
    mu_a_launch: f64,
    mu_b_launch: f64,
    eta_a: f64,
    eta_b: f64,
    delta_phi_rad: f64,
    visibility: f64,
    dark_prob_0: f64,
    dark_prob_1: f64,
) -> Result<(f64, f64)> {
    let (n0, n1) = splitter_means(eta_a * mu_a_launch, eta_b * mu_b_launch, visibility, delta_phi_rad);
    if n0 < 0.0 || n1 < 0.0 {
        return Err(Error::InvalidInput(format!(
            "negative mean photon number (n0 = {n0}, n1 = {n1}); visibility above 1?"
        )));
    }
    let p0 = 1.0 - (1.0 - dark_prob_0) * (-n0).exp();
    let p1 = 1.0 - (1.0 - dark_prob_1) * (-n1).exp();
    Ok((p0, p1))
}

/// Probability that exactly one detector clicks, with per-detector
/// efficiencies applied after the beam splitter.
///
/// This is the event rule of the protocol ("one and only one detector
/// clicks") and is shared by the Monte Carlo simulator and the analytic rate
/// predictions.
#[allow(clippy::too_many_arguments)]
pub fn one_click_probability(
    mu_a_at_splitter: f64,
    mu_b_at_splitter: f64,
    delta_phi_rad: f64,
    visibility: f64,
    det_eff_0: f64,
    det_eff_1: f64,
    dark_prob_0: f64,
    dark_prob_1: f64,
) -> f64 {
    let (n0, n1) = splitter_means(mu_a_at_splitter, mu_b_at_splitter, visibility, delta_phi_rad);
    let p0 = 1.0 - (1.0 - dark_prob_0) * (-det_eff_0 * n0).exp();
    let p1 = 1.0 - (1.0 - dark_prob_1) * (-det_eff_1 * n1).exp();
    p0 * (1.0 - p1) + p1 * (1.0 - p0)
}

/// Same, split into the two exclusive outcomes (only D0, only D1).
#[allow(clippy::too_many_arguments)]
pub fn exclusive_click_probabilities(
    mu_a_at_splitter: f64,
    mu_b_at_splitter: f64,
    delta_phi_rad: f64,
    visibility: f64,
    det_eff_0: f64,
    det_eff_1: f64,
    dark_prob_0: f64,
    dark_prob_1: f64,
) -> (f64, f64) {
    let (n0, n1) = splitter_means(mu_a_at_splitter, mu_b_at_splitter, visibility, delta_phi_rad);
    let p0 = 1.0 - (1.0 - dark_prob_0) * (-det_eff_0 * n0).exp();
    let p1 = 1.0 - (1.0 - dark_prob_1) * (-det_eff_1 * n1).exp();
    (p0 * (1.0 - p1), p1 * (1.0 - p0))
}

/// Average `f(δφ)` over δφ uniform on [0, 2π) with the trapezoid rule, which
/// converges spectrally for smooth periodic integrands.
pub fn phase_average(n_points: usize, mut f: impl FnMut(f64) -> f64) -> f64 {
    let n = n_points.max(4);
    let mut acc = 0.0;
    for k in 0..n {
        acc += f(std::f64::consts::TAU * k as f64 / n as f64);
    }
    acc / n as f64
}
