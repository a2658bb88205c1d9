//! Monte Carlo execution of the 4-intensity SNS protocol.
//!
//! Each slot, both users independently pick a signal (Z) or decoy (X) window,
//! an intensity and (in decoy windows) one of M discrete phases. The middle
//! node interferes the pulses and announces which detector clicked; rounds
//! with exactly one click are the effective events. Tallies mirror the
//! per-class reporting of the experiments (`XX20` … `ZZ00`).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::ops::Add;
use std::path::Path;

use crate::channel::{splitter_means, transmittance, OpticalPath};
use crate::params::{LinkConfig, ProtocolParams, UserParams};
use crate::{Error, Result};

pub const TALLY_SCHEMA_VERSION: u32 = 1;

/// Default Gaussian jitter on the stabilised differential phase during
/// simulation, matching the locked-channel residual band of ~0.1 rad.
pub const DEFAULT_PHASE_JITTER_STD_RAD: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Window {
    Decoy,
    Signal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Alice,
    Bob,
}

/// One user's choice for one slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SlotChoice {
    pub window: Window,
    /// Intensity label: 0/1/2 for μ_0/μ_1/μ_2 in decoy windows; in signal
    /// windows 3 (μ_z, sent) or 0 (vacuum, not sent).
    pub intensity_index: u8,
    /// Sending decision; meaningful in signal windows only.
    pub sent: bool,
    /// Encoding phase slice, decoy windows only.
    pub phase_index: u16,
    /// Raw key bit for signal windows: Alice marks sending as 1, Bob as 0.
    pub z_bit: u8,
}

/// Draw one slot choice for a user.
pub fn prepare_slot<R: Rng + ?Sized>(
    user: &UserParams,
    role: Role,
    m_slices: u32,
    rng: &mut R,
) -> SlotChoice {
    if rng.random::<f64>() < user.p_x {
        let u: f64 = rng.random();
        let intensity_index = if u < user.p_mu1 {
            1
        } else if u < user.p_mu1 + user.p_mu2 {
            2
        } else {
            0
        };
        SlotChoice {
            window: Window::Decoy,
            intensity_index,
            sent: false,
            phase_index: rng.random_range(0..m_slices) as u16,
            z_bit: 0,
        }
    } else {
        let sent = rng.random::<f64>() < user.epsilon;
        let z_bit = match (role, sent) {
            (Role::Alice, true) | (Role::Bob, false) => 1,
            _ => 0,
        };
        SlotChoice {
            window: Window::Signal,
            intensity_index: if sent { 3 } else { 0 },
            sent,
            phase_index: 0,
            z_bit,
        }
    }
}

/// Phase post-selection outcome for an X-window pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum XMatchOutcome {
    MatchedZero,
    MatchedPi,
    Unmatched,
}

/// Post-select on the announced phase slices: matched at zero when the
/// circular distance |θ_A − θ_B| ≤ 2π/M, matched at π when
/// |θ_A − θ_B − π| ≤ 2π/M. Evaluated exactly on slice indices.
pub fn phase_match(theta_a_index: u32, theta_b_index: u32, m_slices: u32) -> XMatchOutcome {
    let m = m_slices;
    let diff = (theta_a_index % m + m - theta_b_index % m) % m;
    let dist_zero = diff.min(m - diff);
    if dist_zero <= 1 {
        return XMatchOutcome::MatchedZero;
    }
    // distance from the π slice (index M/2); m is even by invariant
    let dist_pi = diff.abs_diff(m / 2);
    if dist_pi.min(m - dist_pi) <= 1 {
        return XMatchOutcome::MatchedPi;
    }
    XMatchOutcome::Unmatched
}

/// Sent / detected counts for one (window, intensity) × (window, intensity)
/// class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub sent: u64,
    pub detected: u64,
}

/// Phase-matched record for the μ1μ1 (or μ2μ2) decoy pairs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseMatchedRecord {
    /// All pairs of this class, matched or not. Reconstructable from the
    /// selection probabilities, hence optional in serialized tallies.
    #[serde(default)]
    pub sent_pairs: u64,
    /// Pairs passing the phase post-selection (the matched fraction of the
    /// class is 6/M for M slices); denominator of the error yield T_XX.
    #[serde(default)]
    pub matched_sent_pairs: u64,
    /// Matched pairs with an effective detection; denominator of the X QBER.
    pub matched: u64,
    /// Wrong-detector clicks among matched effective events (the outcome
    /// convention is flipped for π-matched pairs).
    pub errors: u64,
}

/// Simulation-only ground truth: ZZ rounds in which the two sources emitted
/// exactly one photon in total.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruthCounters {
    pub zz_single_photon_pairs: u64,
    pub single_photon_z_events: u64,
    pub single_photon_z_errors: u64,
}

const N_CLASSES: usize = 64;

/// Detection tallies for a run, keyed like the experimental tables: the
/// first two characters give Alice's and Bob's window (X or Z), the last two
/// their intensity labels (0/1/2, or 3 for μ_z).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DetectionTally {
    pub n_tot: u64,
    classes: [ClassCounts; N_CLASSES],
    pub x11: PhaseMatchedRecord,
    pub x22: PhaseMatchedRecord,
    /// Present for simulated tallies only; never serialised for experimental
    /// data ingested without it.
    pub truth: Option<TruthCounters>,
    /// Set when sent counts were reconstructed from N_tot and the selection
    /// probabilities rather than observed.
    pub derived_sent: bool,
}

impl Default for DetectionTally {
    fn default() -> Self {
        DetectionTally {
            n_tot: 0,
            classes: [ClassCounts::default(); N_CLASSES],
            x11: PhaseMatchedRecord::default(),
            x22: PhaseMatchedRecord::default(),
            truth: None,
            derived_sent: false,
        }
    }
}

#[inline]
fn class_index(wa: Window, la: u8, wb: Window, lb: u8) -> usize {
    let w = |w: Window| match w {
        Window::Decoy => 0usize,
        Window::Signal => 1,
    };
    ((w(wa) * 4 + la as usize) * 8) + w(wb) * 4 + lb as usize
}

fn key_to_index(key: &str) -> Option<usize> {
    let b = key.as_bytes();
    if b.len() != 4 {
        return None;
    }
    let w = |c: u8| match c {
        b'X' => Some(Window::Decoy),
        b'Z' => Some(Window::Signal),
        _ => None,
    };
    let l = |c: u8| match c {
        b'0'..=b'3' => Some(c - b'0'),
        _ => None,
    };
    Some(class_index(w(b[0])?, l(b[2])?, w(b[1])?, l(b[3])?))
}

fn index_to_key(idx: usize) -> String {
    let wa = if idx / 32 == 0 { 'X' } else { 'Z' };
    let la = (idx / 8) % 4;
    let wb = if (idx % 8) / 4 == 0 { 'X' } else { 'Z' };
    let lb = idx % 4;
    format!("{wa}{wb}{la}{lb}")
}

impl DetectionTally {
    pub fn class(&self, key: &str) -> Option<ClassCounts> {
        key_to_index(key).map(|i| self.classes[i])
    }

    pub fn class_mut(&mut self, key: &str) -> Option<&mut ClassCounts> {
        key_to_index(key).map(move |i| &mut self.classes[i])
    }

    #[inline]
    pub fn counts(&self, wa: Window, la: u8, wb: Window, lb: u8) -> ClassCounts {
        self.classes[class_index(wa, la, wb, lb)]
    }

    #[inline]
    fn cell(&mut self, wa: Window, la: u8, wb: Window, lb: u8) -> &mut ClassCounts {
        &mut self.classes[class_index(wa, la, wb, lb)]
    }

    /// Non-empty classes in table order.
    pub fn class_map(&self) -> BTreeMap<String, ClassCounts> {
        self.classes
            .iter()
            .enumerate()
            .filter(|(_, c)| c.sent != 0 || c.detected != 0)
            .map(|(i, c)| (index_to_key(i), *c))
            .collect()
    }

    pub fn total_sent(&self) -> u64 {
        self.classes.iter().map(|c| c.sent).sum()
    }

    /// Reconstruct per-class sent counts as N_tot × selection probabilities
    /// and mark the tally `derived_sent`. Used for ingested table data where
    /// only detected counts are published.
    pub fn derive_sent_counts(&mut self, params: &ProtocolParams) {
        let prob = |u: &UserParams, w: Window, l: u8| -> f64 {
            match (w, l) {
                (Window::Decoy, 0) => u.p_x * u.p_mu0,
                (Window::Decoy, 1) => u.p_x * u.p_mu1,
                (Window::Decoy, 2) => u.p_x * u.p_mu2,
                (Window::Signal, 0) => u.p_z * (1.0 - u.epsilon),
                (Window::Signal, 3) => u.p_z * u.epsilon,
                _ => 0.0,
            }
        };
        let n = self.n_tot as f64;
        for (i, c) in self.classes.iter_mut().enumerate() {
            if c.detected == 0 && c.sent == 0 {
                continue;
            }
            let wa = if i / 32 == 0 { Window::Decoy } else { Window::Signal };
            let la = ((i / 8) % 4) as u8;
            let wb = if (i % 8) / 4 == 0 { Window::Decoy } else { Window::Signal };
            let lb = (i % 4) as u8;
            c.sent = (n * prob(&params.alice, wa, la) * prob(&params.bob, wb, lb)).round() as u64;
        }
        let matched_fraction = 6.0 / params.m_slices as f64;
        let p_x11 = params.alice.p_x * params.alice.p_mu1 * params.bob.p_x * params.bob.p_mu1;
        self.x11.sent_pairs = (n * p_x11).round() as u64;
        self.x11.matched_sent_pairs = (n * p_x11 * matched_fraction).round() as u64;
        let p_x22 = params.alice.p_x * params.alice.p_mu2 * params.bob.p_x * params.bob.p_mu2;
        self.x22.sent_pairs = (n * p_x22).round() as u64;
        self.x22.matched_sent_pairs = (n * p_x22 * matched_fraction).round() as u64;
        self.derived_sent = true;
    }
}

/// Tallies form a commutative monoid under fieldwise addition.
pub fn merge(a: &DetectionTally, b: &DetectionTally) -> DetectionTally {
    let mut out = a.clone();
    out.n_tot += b.n_tot;
    for (x, y) in out.classes.iter_mut().zip(b.classes.iter()) {
        x.sent += y.sent;
        x.detected += y.detected;
    }
    for (x, y) in [(&mut out.x11, &b.x11), (&mut out.x22, &b.x22)] {
        x.sent_pairs += y.sent_pairs;
        x.matched_sent_pairs += y.matched_sent_pairs;
        x.matched += y.matched;
        x.errors += y.errors;
    }
    out.truth = match (a.truth, b.truth) {
        (None, None) => None,
        (x, y) => {
            let x = x.unwrap_or_default();
            let y = y.unwrap_or_default();
            Some(TruthCounters {
                zz_single_photon_pairs: x.zz_single_photon_pairs + y.zz_single_photon_pairs,
                single_photon_z_events: x.single_photon_z_events + y.single_photon_z_events,
                single_photon_z_errors: x.single_photon_z_errors + y.single_photon_z_errors,
            })
        }
    };
    out.derived_sent = a.derived_sent || b.derived_sent;
    out
}

impl Add for DetectionTally {
    type Output = DetectionTally;
    fn add(self, other: DetectionTally) -> DetectionTally {
        merge(&self, &other)
    }
}

/// Z-basis QBER before pairing: both-send and neither-send effective events
/// are the errors.
pub fn ez_before_aopp(tally: &DetectionTally) -> Result<f64> {
    let d = |k| tally.class(k).map(|c| c.detected).unwrap_or(0);
    let errors = d("ZZ33") + d("ZZ00");
    let total = errors + d("ZZ03") + d("ZZ30");
    if total == 0 {
        return Err(Error::ZeroDenominator("ez_before_aopp: no ZZ effective events"));
    }
    if errors == 0 {
        return Ok(0.0);
    }
    Ok(errors as f64 / total as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum XClass {
    X11,
    X22,
}

/// QBER of the phase-matched decoy pairs.
pub fn xqber(tally: &DetectionTally, class: XClass) -> Result<f64> {
    let rec = match class {
        XClass::X11 => &tally.x11,
        XClass::X22 => &tally.x22,
    };
    if rec.matched == 0 {
        return Err(Error::ZeroDenominator("xqber: no matched effective events"));
    }
    Ok(rec.errors as f64 / rec.matched as f64)
}

/// Tunables of the Monte Carlo run beyond the protocol parameters.
#[derive(Debug, Clone, Copy)]
pub struct SimOptions {
    /// Gaussian jitter added to the decoy-pair differential phase,
    /// representing the residual error of the stabilised channel.
    pub phase_jitter_std_rad: f64,
    /// Record simulation-only single-photon truth counters.
    pub collect_truth: bool,
    /// Slots per parallel shard; shard boundaries fix the RNG streams, so
    /// results do not depend on thread count.
    pub shard_slots: u64,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            phase_jitter_std_rad: DEFAULT_PHASE_JITTER_STD_RAD,
            collect_truth: true,
            shard_slots: 1 << 21,
        }
    }
}

struct SimContext {
    alice: UserCtx,
    bob: UserCtx,
    m_slices: u32,
    visibility: f64,
    det_eff_0: f64,
    det_eff_1: f64,
    dark_0: f64,
    dark_1: f64,
    jitter: Option<Normal<f64>>,
    collect_truth: bool,
}

struct UserCtx {
    params: UserParams,
    /// Fibre + middle-node transmittance, detector efficiency excluded.
    eta: f64,
    /// Launch intensity per label (0/1/2 decoy, 3 = μ_z).
    mu: [f64; 4],
    exp_neg_mu_z: f64,
}

impl UserCtx {
    fn new(params: UserParams, path: OpticalPath) -> Self {
        UserCtx {
            params,
            eta: transmittance(&path),
            mu: [params.mu_0, params.mu_1, params.mu_2, params.mu_z],
            exp_neg_mu_z: (-params.mu_z).exp(),
        }
    }

    /// Launch intensity for a slot choice (vacuum when not sending).
    #[inline]
    fn launch(&self, c: &SlotChoice) -> f64 {
        match c.window {
            Window::Signal => {
                if c.sent {
                    self.params.mu_z
                } else {
                    0.0
                }
            }
            Window::Decoy => self.mu[c.intensity_index as usize],
        }
    }
}

#[inline]
fn sample_poisson<R: Rng + ?Sized>(rng: &mut R, exp_neg_mu: f64) -> u32 {
    // Knuth inversion; fine for the sub-unity means used here.
    let mut k = 0u32;
    let mut p = rng.random::<f64>();
    while p > exp_neg_mu {
        k += 1;
        p *= rng.random::<f64>();
    }
    k
}

#[inline]
fn thin<R: Rng + ?Sized>(rng: &mut R, n: u32, eta: f64) -> u32 {
    let mut m = 0;
    for _ in 0..n {
        if rng.random::<f64>() < eta {
            m += 1;
        }
    }
    m
}

fn simulate_shard(ctx: &SimContext, n_slots: u64, rng: &mut ChaCha8Rng) -> DetectionTally {
    let mut tally = DetectionTally {
        n_tot: n_slots,
        truth: ctx.collect_truth.then(TruthCounters::default),
        ..DetectionTally::default()
    };
    let slice_phase = TAU / ctx.m_slices as f64;
    for _ in 0..n_slots {
        let a = prepare_slot(&ctx.alice.params, Role::Alice, ctx.m_slices, rng);
        let b = prepare_slot(&ctx.bob.params, Role::Bob, ctx.m_slices, rng);
        let cell = tally.cell(a.window, a.intensity_index, b.window, b.intensity_index);
        cell.sent += 1;

        if a.window == Window::Signal && b.window == Window::Signal {
            // Photon-number-resolved path so the single-photon ground truth
            // stays consistent with the click statistics: emitted numbers are
            // Poissonian, losses are Bernoulli thinnings, and arrived photons
            // are routed with the interference-fringe splitting ratio, which
            // reproduces the coherent-state detector statistics exactly.
            let na = if a.sent { sample_poisson(rng, ctx.alice.exp_neg_mu_z) } else { 0 };
            let nb = if b.sent { sample_poisson(rng, ctx.bob.exp_neg_mu_z) } else { 0 };
            let single = na + nb == 1;
            if single {
                if let Some(t) = tally.truth.as_mut() {
                    t.zz_single_photon_pairs += 1;
                }
            }
            let ma = thin(rng, na, ctx.alice.eta);
            let mb = thin(rng, nb, ctx.bob.eta);
            let (mut det0, mut det1) = (0u32, 0u32);
            if ma + mb > 0 {
                let mu_a = ctx.alice.eta * ctx.alice.launch(&a);
                let mu_b = ctx.bob.eta * ctx.bob.launch(&b);
                let phi = rng.random::<f64>() * TAU;
                let (n0, n1) = splitter_means(mu_a, mu_b, ctx.visibility, phi);
                let q0 = if n0 + n1 > 0.0 { n0 / (n0 + n1) } else { 0.5 };
                for _ in 0..(ma + mb) {
                    if rng.random::<f64>() < q0 {
                        if rng.random::<f64>() < ctx.det_eff_0 {
                            det0 += 1;
                        }
                    } else if rng.random::<f64>() < ctx.det_eff_1 {
                        det1 += 1;
                    }
                }
            }
            let click0 = det0 > 0 || rng.random::<f64>() < ctx.dark_0;
            let click1 = det1 > 0 || rng.random::<f64>() < ctx.dark_1;
            if click0 != click1 {
                tally.cell(a.window, a.intensity_index, b.window, b.intensity_index).detected += 1;
                if single {
                    if let Some(t) = tally.truth.as_mut() {
                        t.single_photon_z_events += 1;
                        if a.z_bit != b.z_bit {
                            t.single_photon_z_errors += 1;
                        }
                    }
                }
            }
            continue;
        }

        // Mixed or decoy-decoy slot: coherent-state click probabilities.
        let both_decoy = a.window == Window::Decoy && b.window == Window::Decoy;
        let delta_phi = if both_decoy {
            let enc = (a.phase_index as f64 - b.phase_index as f64) * slice_phase;
            match &ctx.jitter {
                Some(j) => enc + j.sample(rng),
                None => enc,
            }
        } else {
            // Signal-window pulses are phase randomised.
            rng.random::<f64>() * TAU
        };
        let (p_only0, p_only1) = crate::channel::exclusive_click_probabilities(
            ctx.alice.eta * ctx.alice.launch(&a),
            ctx.bob.eta * ctx.bob.launch(&b),
            delta_phi,
            ctx.visibility,
            ctx.det_eff_0,
            ctx.det_eff_1,
            ctx.dark_0,
            ctx.dark_1,
        );
        let u = rng.random::<f64>();
        let outcome = if u < p_only0 {
            Some(0u8)
        } else if u < p_only0 + p_only1 {
            Some(1u8)
        } else {
            None
        };
        if outcome.is_some() {
            tally.cell(a.window, a.intensity_index, b.window, b.intensity_index).detected += 1;
        }
        if both_decoy && a.intensity_index == b.intensity_index && a.intensity_index >= 1 {
            let rec = if a.intensity_index == 1 { &mut tally.x11 } else { &mut tally.x22 };
            rec.sent_pairs += 1;
            match phase_match(a.phase_index as u32, b.phase_index as u32, ctx.m_slices) {
                XMatchOutcome::Unmatched => {}
                m => {
                    rec.matched_sent_pairs += 1;
                    if let Some(det) = outcome {
                        rec.matched += 1;
                        let wrong = match m {
                            XMatchOutcome::MatchedZero => det == 1,
                            XMatchOutcome::MatchedPi => det == 0,
                            XMatchOutcome::Unmatched => unreachable!(),
                        };
                        if wrong {
                            rec.errors += 1;
                        }
                    }
                }
            }
        }
    }
    tally
}

/// Run the protocol for `n_slots` pulse-pair slots. Deterministic for a fixed
/// seed regardless of thread count; shards use independent RNG streams and
/// are merged with [`merge`].
pub fn run_simulation(
    params: &ProtocolParams,
    link: &LinkConfig,
    visibility: f64,
    n_slots: u64,
    seed: u64,
) -> DetectionTally {
    run_simulation_with(params, link, visibility, n_slots, seed, SimOptions::default())
}

pub fn run_simulation_with(
    params: &ProtocolParams,
    link: &LinkConfig,
    visibility: f64,
    n_slots: u64,
    seed: u64,
    opts: SimOptions,
) -> DetectionTally {
    let (dark_0, dark_1) = link.dark_probs();
    let ctx = SimContext {
        alice: UserCtx::new(
            params.alice,
            OpticalPath {
                length_km: link.alice_fibre_km,
                loss_coeff_db_per_km: link.loss_coeff_db_per_km,
                extra_db: link.alice_extra_db,
            },
        ),
        bob: UserCtx::new(
            params.bob,
            OpticalPath {
                length_km: link.bob_fibre_km,
                loss_coeff_db_per_km: link.loss_coeff_db_per_km,
                extra_db: link.bob_extra_db,
            },
        ),
        m_slices: params.m_slices,
        visibility,
        det_eff_0: link.det_eff_0,
        det_eff_1: link.det_eff_1,
        dark_0,
        dark_1,
        jitter: (opts.phase_jitter_std_rad > 0.0)
            .then(|| Normal::new(0.0, opts.phase_jitter_std_rad).expect("valid std")),
        collect_truth: opts.collect_truth,
    };
    if n_slots == 0 {
        let mut t = DetectionTally::default();
        t.truth = opts.collect_truth.then(TruthCounters::default);
        return t;
    }
    let shard = opts.shard_slots.max(1);
    let n_shards = n_slots.div_ceil(shard);
    (0..n_shards)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i + 1);
            let slots = shard.min(n_slots - i * shard);
            simulate_shard(&ctx, slots, &mut rng)
        })
        .reduce(
            || {
                let mut t = DetectionTally::default();
                t.truth = opts.collect_truth.then(TruthCounters::default);
                t
            },
            |a, b| merge(&a, &b),
        )
}

#[derive(Serialize, Deserialize)]
struct TallyFile {
    schema_version: u32,
    n_tot: u64,
    #[serde(default)]
    derived_sent: bool,
    classes: BTreeMap<String, ClassCounts>,
    #[serde(default)]
    x11: PhaseMatchedRecord,
    #[serde(default)]
    x22: PhaseMatchedRecord,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    truth: Option<TruthCounters>,
}

pub fn tally_to_json(tally: &DetectionTally) -> String {
    let file = TallyFile {
        schema_version: TALLY_SCHEMA_VERSION,
        n_tot: tally.n_tot,
        derived_sent: tally.derived_sent,
        classes: tally.class_map(),
        x11: tally.x11,
        x22: tally.x22,
        truth: tally.truth,
    };
    serde_json::to_string_pretty(&file).expect("tally serialise")
}

pub fn tally_from_json(text: &str, origin: &str) -> Result<DetectionTally> {
    let file: TallyFile = serde_json::from_str(text).map_err(|e| Error::Parse {
        path: origin.to_string(),
        detail: e.to_string(),
    })?;
    if file.schema_version != TALLY_SCHEMA_VERSION {
        return Err(Error::SchemaVersion {
            expected: TALLY_SCHEMA_VERSION,
            found: file.schema_version,
        });
    }
    let mut tally = DetectionTally {
        n_tot: file.n_tot,
        x11: file.x11,
        x22: file.x22,
        truth: file.truth,
        derived_sent: file.derived_sent,
        ..DetectionTally::default()
    };
    for (key, counts) in file.classes {
        match tally.class_mut(&key) {
            Some(c) => *c = counts,
            None => {
                return Err(Error::Parse {
                    path: origin.to_string(),
                    detail: format!("unknown tally class key {key:?}"),
                })
            }
        }
    }
    Ok(tally)
}

pub fn save_tally(tally: &DetectionTally, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, tally_to_json(tally))?;
    Ok(())
}

pub fn load_tally(path: impl AsRef<Path>) -> Result<DetectionTally> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    tally_from_json(&text, &path.display().to_string())
}
