//! Source-parameter search maximising the analytic expected key rate under
//! the sending/not-sending source constraint.
//!
//! The constraint ties Alice's and Bob's decoy intensities to their send
//! probabilities and signal intensities; Bob's decoy intensities are
//! eliminated analytically (scaled from Alice's by the constraint ratio), so
//! every evaluated candidate satisfies it exactly. The objective is the
//! asymptotic expected key rate with the finite-size Δ penalty at the given
//! N_tot; no tail-bound widening inside the loop.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::expected_key_rate;
use crate::params::{
    sns_constraint_sides, validate, LinkConfig, ProtocolParams, SecurityEpsilons, UserParams,
};
use crate::{Error, Result};

/// Inclusive search interval with a point count (`steps = 1` pins `lo`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisSpec {
    pub lo: f64,
    pub hi: f64,
    pub steps: usize,
}

impl AxisSpec {
    pub fn new(lo: f64, hi: f64, steps: usize) -> Self {
        AxisSpec { lo, hi, steps }
    }

    pub fn fixed(value: f64) -> Self {
        AxisSpec { lo: value, hi: value, steps: 1 }
    }

    pub fn grid(&self) -> Vec<f64> {
        if self.steps <= 1 {
            return vec![self.lo];
        }
        let step = (self.hi - self.lo) / (self.steps - 1) as f64;
        (0..self.steps).map(|i| self.lo + i as f64 * step).collect()
    }

    /// Coarse-grid spacing; also the initial coordinate-descent step.
    pub fn step(&self) -> f64 {
        if self.steps <= 1 {
            0.0
        } else {
            (self.hi - self.lo) / (self.steps - 1) as f64
        }
    }

    fn clamp(&self, x: f64) -> f64 {
        x.clamp(self.lo, self.hi)
    }

    fn check(&self, name: &str) -> Result<()> {
        if !(self.lo.is_finite() && self.hi.is_finite()) || self.lo > self.hi || self.steps == 0 {
            return Err(Error::InvalidInput(format!(
                "search axis {name}: lo {} hi {} steps {}",
                self.lo, self.hi, self.steps
            )));
        }
        Ok(())
    }
}

/// Free parameters of the search. `mu_z` and the window/decoy probabilities
/// are shared by both users; Bob's `mu_1`, `mu_2` follow from the constraint.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SearchSpace {
    pub mu_z: AxisSpec,
    pub mu_1: AxisSpec,
    pub mu_2: AxisSpec,
    pub eps_a: AxisSpec,
    pub eps_b: AxisSpec,
    pub p_x: AxisSpec,
    pub p_mu1: AxisSpec,
    pub p_mu2: AxisSpec,
    /// Vacuum-decoy intensity, held fixed.
    pub mu_0: f64,
    pub constraint_tol: f64,
    pub visibility: f64,
    /// Halving rounds of coordinate descent after the coarse grid.
    pub descent_rounds: usize,
    /// Optional inequality hook on the candidate (true = feasible).
    #[serde(skip)]
    pub feasibility_hook: Option<fn(&ProtocolParams) -> bool>,
}

impl Default for SearchSpace {
    fn default() -> Self {
        SearchSpace {
            mu_z: AxisSpec::new(0.25, 0.65, 3),
            mu_1: AxisSpec::new(0.08, 0.28, 3),
            mu_2: AxisSpec::new(0.35, 0.65, 3),
            eps_a: AxisSpec::new(0.15, 0.55, 3),
            eps_b: AxisSpec::new(0.15, 0.55, 3),
            p_x: AxisSpec::new(0.15, 0.45, 3),
            p_mu1: AxisSpec::new(0.5, 0.8, 2),
            p_mu2: AxisSpec::new(0.1, 0.3, 2),
            mu_0: 2e-4,
            constraint_tol: 1e-9,
            visibility: 0.968,
            descent_rounds: 4,
            feasibility_hook: None,
        }
    }
}

impl SearchSpace {
    fn check(&self) -> Result<()> {
        self.mu_z.check("mu_z")?;
        self.mu_1.check("mu_1")?;
        self.mu_2.check("mu_2")?;
        self.eps_a.check("eps_a")?;
        self.eps_b.check("eps_b")?;
        self.p_x.check("p_x")?;
        self.p_mu1.check("p_mu1")?;
        self.p_mu2.check("p_mu2")?;
        if self.mu_2.hi <= self.mu_1.lo {
            return Err(Error::InfeasibleSpace("mu_2 range entirely below mu_1 range".into()));
        }
        if !(0.0..0.5).contains(&self.mu_0) {
            return Err(Error::InvalidInput(format!("mu_0 = {} out of range", self.mu_0)));
        }
        Ok(())
    }

    fn axes(&self) -> [AxisSpec; 8] {
        [self.mu_z, self.mu_1, self.mu_2, self.eps_a, self.eps_b, self.p_x, self.p_mu1, self.p_mu2]
    }
}

/// One evaluated point of the search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub eval: usize,
    pub phase: SearchPhase,
    pub objective: f64,
    pub best_so_far: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchPhase {
    Grid,
    Descent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizeOutcome {
    pub params: ProtocolParams,
    pub objective: f64,
    /// Best objective among coarse-grid points only.
    pub grid_objective: f64,
    pub evaluations: usize,
    pub trace: Vec<TracePoint>,
}

impl OptimizeOutcome {
    pub fn trace_csv(&self) -> String {
        let mut out = String::from("eval,phase,objective,best_so_far\n");
        for p in &self.trace {
            let phase = match p.phase {
                SearchPhase::Grid => "grid",
                SearchPhase::Descent => "descent",
            };
            out.push_str(&format!(
                "{},{},{:.8e},{:.8e}\n",
                p.eval, phase, p.objective, p.best_so_far
            ));
        }
        out
    }
}

/// Candidate vector order: mu_z, mu_1, mu_2, eps_a, eps_b, p_x, p_mu1, p_mu2.
fn build_params(x: &[f64; 8], space: &SearchSpace, n_tot: u64) -> Option<ProtocolParams> {
    let [mu_z, mu_1, mu_2, eps_a, eps_b, p_x, p_mu1, p_mu2] = *x;
    if mu_2 <= mu_1 || mu_1 <= space.mu_0 {
        return None;
    }
    let p_mu0 = 1.0 - p_mu1 - p_mu2;
    if p_mu0 < 0.0 {
        return None;
    }
    if !(eps_a > 0.0 && eps_a < 1.0 && eps_b > 0.0 && eps_b < 1.0) {
        return None;
    }
    // Shared mu_z cancels in the constraint ratio.
    let ratio = eps_a * (1.0 - eps_b) / (eps_b * (1.0 - eps_a));
    let alice = UserParams {
        mu_z,
        mu_2,
        mu_1,
        mu_0: space.mu_0,
        p_z: 1.0 - p_x,
        p_x,
        epsilon: eps_a,
        p_mu2,
        p_mu1,
        p_mu0,
    };
    let bob = UserParams {
        mu_1: mu_1 / ratio,
        mu_2: mu_2 / ratio,
        epsilon: eps_b,
        ..alice
    };
    if bob.mu_1 <= bob.mu_0 || bob.mu_2 >= 1.5 {
        return None;
    }
    let params = ProtocolParams {
        alice,
        bob,
        m_slices: 16,
        n_tot,
        security: SecurityEpsilons::default(),
    };
    if !params.alice.violations("alice").is_empty() || !params.bob.violations("bob").is_empty() {
        return None;
    }
    if let Some(hook) = space.feasibility_hook {
        if !hook(&params) {
            return None;
        }
    }
    Some(params)
}

fn objective(x: &[f64; 8], space: &SearchSpace, link: &LinkConfig, n_tot: u64) -> Option<f64> {
    let params = build_params(x, space, n_tot)?;
    expected_key_rate(&params, link, space.visibility).ok()
}

/// Coarse grid search followed by coordinate descent with halving steps.
pub fn optimize(link: &LinkConfig, space: &SearchSpace, n_tot: u64) -> Result<OptimizeOutcome> {
    space.check()?;
    if n_tot == 0 {
        return Err(Error::InvalidInput("optimize: n_tot must be positive".into()));
    }
    let axes = space.axes();
    let grids: Vec<Vec<f64>> = axes.iter().map(|a| a.grid()).collect();
    let mut points: Vec<[f64; 8]> = vec![[0.0; 8]];
    for (dim, grid) in grids.iter().enumerate() {
        points = points
            .iter()
            .flat_map(|p| {
                grid.iter().map(move |&v| {
                    let mut q = *p;
                    q[dim] = v;
                    q
                })
            })
            .collect();
    }

    let evaluated: Vec<([f64; 8], Option<f64>)> = points
        .par_iter()
        .map(|p| (*p, objective(p, space, link, n_tot)))
        .collect();

    let mut trace = Vec::new();
    let mut evals = 0usize;
    let mut best: Option<([f64; 8], f64)> = None;
    for (p, obj) in &evaluated {
        let Some(obj) = obj else { continue };
        evals += 1;
        if best.map(|(_, b)| *obj > b).unwrap_or(true) {
            best = Some((*p, *obj));
        }
        trace.push(TracePoint {
            eval: evals,
            phase: SearchPhase::Grid,
            objective: *obj,
            best_so_far: best.unwrap().1,
        });
    }
    let (mut best_x, mut best_obj) =
        best.ok_or_else(|| Error::InfeasibleSpace("no feasible grid point".into()))?;
    let grid_objective = best_obj;

    for round in 0..space.descent_rounds {
        let shrink = 0.5f64.powi(round as i32);
        let mut improved = true;
        let mut sweeps = 0;
        while improved && sweeps < 8 {
            improved = false;
            sweeps += 1;
            for dim in 0..8 {
                let step = axes[dim].step() * shrink;
                if step == 0.0 {
                    continue;
                }
                for dir in [-1.0, 1.0] {
                    let mut cand = best_x;
                    cand[dim] = axes[dim].clamp(cand[dim] + dir * step);
                    if cand[dim] == best_x[dim] {
                        continue;
                    }
                    if let Some(obj) = objective(&cand, space, link, n_tot) {
                        evals += 1;
                        if obj > best_obj {
                            best_obj = obj;
                            best_x = cand;
                            improved = true;
                        }
                        trace.push(TracePoint {
                            eval: evals,
                            phase: SearchPhase::Descent,
                            objective: obj,
                            best_so_far: best_obj,
                        });
                    }
                }
            }
        }
    }

    let params = build_params(&best_x, space, n_tot)
        .ok_or_else(|| Error::InfeasibleSpace("best point became infeasible".into()))?;
    let report = validate(&params);
    if !report.violations.is_empty() {
        return Err(Error::InfeasibleSpace(format!(
            "optimized parameters invalid: {:?}",
            report.violations
        )));
    }
    let (lhs, rhs) = sns_constraint_sides(&params.alice, &params.bob)?;
    let dev = (lhs - rhs).abs() / rhs;
    if dev > space.constraint_tol {
        return Err(Error::InfeasibleSpace(format!(
            "constraint deviation {dev:.3e} above tolerance {:.3e}",
            space.constraint_tol
        )));
    }
    Ok(OptimizeOutcome { params, objective: best_obj, grid_objective, evaluations: evals, trace })
}
