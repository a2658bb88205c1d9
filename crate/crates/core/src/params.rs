//! Protocol and link configuration types.
//!
//! All types here are immutable value objects after construction and safe to
//! share across threads. Parameter files are JSON with an explicit
//! `schema_version`; see `fixtures/` for bundled examples.

use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::{Error, Result};

pub const PARAMS_SCHEMA_VERSION: u32 = 1;

/// Probability-sum invariants are checked to this tolerance.
pub const PROB_SUM_TOL: f64 = 1e-9;

/// Default relative tolerance on the asymmetric-source constraint.
///
/// Published parameters are rounded to three decimals, so exact equality of
/// both sides is unattainable; deviations above this are reported as warnings.
pub const SNS_CONSTRAINT_DEFAULT_TOL: f64 = 0.01;

/// One user's SNS source parameters: the four intensities and the window /
/// intensity selection probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UserParams {
    /// Signal-state mean photon number μ_z.
    pub mu_z: f64,
    /// Strong decoy μ_2.
    pub mu_2: f64,
    /// Weak decoy μ_1.
    pub mu_1: f64,
    /// Vacuum-level intensity μ_0 (kept nonzero; the published value is 2e-4).
    pub mu_0: f64,
    /// Signal (Z) window probability.
    pub p_z: f64,
    /// Decoy (X) window probability.
    pub p_x: f64,
    /// Probability of actually sending in a signal window.
    pub epsilon: f64,
    pub p_mu2: f64,
    pub p_mu1: f64,
    pub p_mu0: f64,
}

impl UserParams {
    /// Symmetric parameter set of the published experiments (Alice = Bob).
    pub fn symmetric_reference() -> Self {
        UserParams {
            mu_z: 0.493,
            mu_2: 0.493,
            mu_1: 0.105,
            mu_0: 0.0002,
            p_z: 0.735,
            p_x: 0.265,
            epsilon: 0.269,
            p_mu2: 0.216,
            p_mu1: 0.706,
            p_mu0: 0.078,
        }
    }

    /// Collect invariant violations; empty means valid.
    pub fn violations(&self, who: &str) -> Vec<String> {
        let mut v = Vec::new();
        let probs = [
            ("p_z", self.p_z),
            ("p_x", self.p_x),
            ("epsilon", self.epsilon),
            ("p_mu2", self.p_mu2),
            ("p_mu1", self.p_mu1),
            ("p_mu0", self.p_mu0),
        ];
        for (name, p) in probs {
            if !(0.0..=1.0).contains(&p) || !p.is_finite() {
                v.push(format!("{who}.{name} = {p} outside [0, 1]"));
            }
        }
        if (self.p_z + self.p_x - 1.0).abs() > PROB_SUM_TOL {
            v.push(format!("{who}: p_z + p_x = {} != 1", self.p_z + self.p_x));
        }
        let psum = self.p_mu2 + self.p_mu1 + self.p_mu0;
        if (psum - 1.0).abs() > PROB_SUM_TOL {
            v.push(format!("{who}: p_mu2 + p_mu1 + p_mu0 = {psum} != 1"));
        }
        if !(self.mu_2 > self.mu_1) {
            v.push(format!("{who}: mu_2 = {} not > mu_1 = {}", self.mu_2, self.mu_1));
        }
        if !(self.mu_1 > self.mu_0) {
            v.push(format!("{who}: mu_1 = {} not > mu_0 = {}", self.mu_1, self.mu_0));
        }
        if self.mu_0 < 0.0 {
            v.push(format!("{who}: mu_0 = {} negative", self.mu_0));
        }
        if !(self.mu_z > 0.0) {
            v.push(format!("{who}: mu_z = {} not positive", self.mu_z));
        }
        v
    }
}

/// Security failure probabilities and the error-correction efficiency factor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SecurityEpsilons {
    pub eps_cor: f64,
    pub eps_pa: f64,
    pub eps_hat: f64,
    /// Error-correction efficiency factor f (≥ 1; the experiments use 1.1).
    pub f: f64,
}

impl Default for SecurityEpsilons {
    fn default() -> Self {
        SecurityEpsilons { eps_cor: 1e-10, eps_pa: 1e-10, eps_hat: 1e-10, f: 1.1 }
    }
}

impl SecurityEpsilons {
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        for (name, e) in [("eps_cor", self.eps_cor), ("eps_pa", self.eps_pa), ("eps_hat", self.eps_hat)] {
            if !(e > 0.0 && e < 1.0) {
                v.push(format!("security.{name} = {e} outside (0, 1)"));
            }
        }
        if !(self.f >= 1.0) {
            v.push(format!("security.f = {} below 1", self.f));
        }
        v
    }
}

/// Full protocol configuration for one run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProtocolParams {
    pub alice: UserParams,
    pub bob: UserParams,
    /// Number of phase slices M.
    pub m_slices: u32,
    /// Total number of pulse-pair slots N_tot.
    pub n_tot: u64,
    #[serde(default)]
    pub security: SecurityEpsilons,
}

impl ProtocolParams {
    pub fn symmetric_reference(n_tot: u64) -> Self {
        ProtocolParams {
            alice: UserParams::symmetric_reference(),
            bob: UserParams::symmetric_reference(),
            m_slices: 16,
            n_tot,
            security: SecurityEpsilons::default(),
        }
    }
}

/// Fibre, middle-node and detector configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkConfig {
    pub alice_fibre_km: f64,
    pub bob_fibre_km: f64,
    pub loss_coeff_db_per_km: f64,
    /// Charlie's internal loss on Alice's arm plus any compensation attenuation.
    pub alice_extra_db: f64,
    pub bob_extra_db: f64,
    /// Detector efficiencies as fractions.
    pub det_eff_0: f64,
    pub det_eff_1: f64,
    /// Steady-state noise count rates.
    pub dark_rate_hz_0: f64,
    pub dark_rate_hz_1: f64,
    /// Effective quantum-signal rate.
    pub clock_hz: f64,
    /// Slot duration used to convert dark rates to per-slot probabilities.
    pub gate_s: f64,
}

impl LinkConfig {
    /// Symmetric link at the published loss coefficient, middle-node losses
    /// (4.5 dB Alice incl. phase modulator, 2.5 dB Bob plus 2 dB compensation)
    /// and detector performance.
    pub fn symmetric(total_km: f64) -> Self {
        LinkConfig {
            alice_fibre_km: total_km / 2.0,
            bob_fibre_km: total_km / 2.0,
            loss_coeff_db_per_km: 0.168,
            alice_extra_db: 4.5,
            bob_extra_db: 4.5,
            det_eff_0: 0.60,
            det_eff_1: 0.65,
            dark_rate_hz_0: 4.0,
            dark_rate_hz_1: 4.0,
            clock_hz: 5e8,
            gate_s: 1e-9,
        }
    }

    /// Per-slot dark-click probabilities for (D0, D1).
    pub fn dark_probs(&self) -> (f64, f64) {
        (self.dark_rate_hz_0 * self.gate_s, self.dark_rate_hz_1 * self.gate_s)
    }

    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.alice_fibre_km < 0.0 || self.bob_fibre_km < 0.0 {
            v.push("fibre lengths must be >= 0".into());
        }
        for (name, e) in [("det_eff_0", self.det_eff_0), ("det_eff_1", self.det_eff_1)] {
            if !(0.0..=1.0).contains(&e) {
                v.push(format!("{name} = {e} outside [0, 1]"));
            }
        }
        if self.dark_rate_hz_0 < 0.0 || self.dark_rate_hz_1 < 0.0 {
            v.push("dark rates must be >= 0".into());
        }
        if !(self.clock_hz > 0.0) {
            v.push("clock_hz must be > 0".into());
        }
        if !(self.gate_s > 0.0) {
            v.push("gate_s must be > 0".into());
        }
        v
    }
}

/// Outcome of [`validate`]: hard violations fail, warnings do not.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<String>,
    pub warnings: Vec<String>,
    /// Relative deviation |LHS − RHS| / RHS of the source constraint, when
    /// computable.
    pub sns_constraint_deviation: Option<f64>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Both sides of the asymmetric-source security constraint:
/// lhs = μ_A1/μ_B1, rhs = ε_A(1−ε_B)μ_Az e^{−μ_Az} / (ε_B(1−ε_A)μ_Bz e^{−μ_Bz}).
///
/// Identical user parameters give (1, 1) exactly.
pub fn sns_constraint_sides(alice: &UserParams, bob: &UserParams) -> Result<(f64, f64)> {
    if bob.mu_1 == 0.0 {
        return Err(Error::Degenerate("mu_B1 = 0".into()));
    }
    if bob.epsilon <= 0.0 || bob.epsilon >= 1.0 {
        return Err(Error::Degenerate(format!("epsilon_B = {} in {{0, 1}}", bob.epsilon)));
    }
    if alice.epsilon >= 1.0 {
        return Err(Error::Degenerate("epsilon_A = 1".into()));
    }
    let lhs = alice.mu_1 / bob.mu_1;
    let rhs = alice.epsilon * (1.0 - bob.epsilon) * alice.mu_z * (-alice.mu_z).exp()
        / (bob.epsilon * (1.0 - alice.epsilon) * bob.mu_z * (-bob.mu_z).exp());
    Ok((lhs, rhs))
}

/// Check all invariants plus the source-security constraint.
///
/// The constraint is soft: deviations above `tol` (default 1 %) become
/// warnings, never hard failures, to admit rounded published parameters.
pub fn validate(params: &ProtocolParams) -> ValidationReport {
    validate_with_tolerance(params, SNS_CONSTRAINT_DEFAULT_TOL)
}

pub fn validate_with_tolerance(params: &ProtocolParams, tol: f64) -> ValidationReport {
    let mut report = ValidationReport::default();
    report.violations.extend(params.alice.violations("alice"));
    report.violations.extend(params.bob.violations("bob"));
    report.violations.extend(params.security.violations());
    if params.m_slices < 2 || params.m_slices % 2 != 0 {
        report
            .violations
            .push(format!("m_slices = {} must be even and >= 2", params.m_slices));
    }
    if params.n_tot < 1 {
        report.violations.push("n_tot must be >= 1".into());
    }
    match sns_constraint_sides(&params.alice, &params.bob) {
        Ok((lhs, rhs)) => {
            if rhs == 0.0 {
                report.warnings.push("constraint RHS is zero (epsilon_A = 0?)".into());
            } else {
                let dev = (lhs - rhs).abs() / rhs;
                report.sns_constraint_deviation = Some(dev);
                if dev > tol {
                    report.warnings.push(format!(
                        "source constraint deviation {:.3}% exceeds {:.3}% tolerance",
                        dev * 100.0,
                        tol * 100.0
                    ));
                }
            }
        }
        Err(e) => report.warnings.push(format!("source constraint not evaluable: {e}")),
    }
    report
}

#[derive(Serialize, Deserialize)]
struct ParamsFile {
    schema_version: u32,
    #[serde(flatten)]
    params: ProtocolParams,
}

pub fn load_params(path: impl AsRef<Path>) -> Result<ProtocolParams> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    parse_params(&text, &path.display().to_string())
}

pub fn parse_params(text: &str, origin: &str) -> Result<ProtocolParams> {
    let file: ParamsFile = serde_json::from_str(text).map_err(|e| Error::Parse {
        path: origin.to_string(),
        detail: e.to_string(),
    })?;
    if file.schema_version != PARAMS_SCHEMA_VERSION {
        return Err(Error::SchemaVersion {
            expected: PARAMS_SCHEMA_VERSION,
            found: file.schema_version,
        });
    }
    Ok(file.params)
}

pub fn save_params(params: &ProtocolParams, path: impl AsRef<Path>) -> Result<()> {
    let file = ParamsFile { schema_version: PARAMS_SCHEMA_VERSION, params: *params };
    let text = serde_json::to_string_pretty(&file).expect("params serialise");
    std::fs::write(path, text)?;
    Ok(())
}

pub fn load_link(path: impl AsRef<Path>) -> Result<LinkConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        detail: e.to_string(),
    })
}

pub fn save_link(link: &LinkConfig, path: impl AsRef<Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(link).expect("link serialise");
    std::fs::write(path, text)?;
    Ok(())
}
