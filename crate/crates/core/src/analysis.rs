//! Exact per-step expectations for RMix against a greedy adversary, the
//! per-step certificate, and a harness that plays an adaptive-online
//! adversary while keeping both players' buffers identical.
//!
//! In each step the adversary commits to a frontier packet `j`, RMix draws
//! `x` and sends `f`. Afterwards the adversary's buffer is patched so that it
//! equals RMix's:
//!
//! * `f == j`: nothing to patch, the adversary is credited `w_j`.
//! * `f ⊲ j`: the adversary's copy of `f` is replaced by `j`; credit `w_j`.
//! * `j ⊲ f`: the adversary also sends `f` and gets `j` back; credit `w_j + w_f`.
//!
//! In every case the shared buffer simply loses `f`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::algorithms::{draw_x, rmix_distribution, rmix_pick, SelectionDistribution};
use crate::error::{Error, Result};
use crate::model::{BufferState, PacketId, Replay, Trace};

/// `1 - 1/e`, the per-step ratio RMix guarantees.
pub const RATIO_BOUND: f64 = 1.0 - 1.0 / std::f64::consts::E;

/// Absolute slack allowed on ratios for floating-point round-off.
pub const DEFAULT_TOLERANCE: f64 = 1e-9;

/// Relative agreement required between the two routes to `E[ADV']`.
const FORM_AGREEMENT: f64 = 1e-9;

/// `E[w_f]` over the draw; zero for an empty buffer.
pub fn expected_rmix_gain(buffer: &BufferState) -> f64 {
    match rmix_distribution(buffer) {
        Ok(d) => d.mean_weight(),
        Err(_) => 0.0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdvAmortized {
    /// `ln(w_j / w_h)`, not clamped.
    pub y: f64,
    pub value: f64,
}

/// Expected amortized adversary gain when it sends `j`.
///
/// Computed twice, by per-atom case analysis and by the closed form
/// `w_j + ∫_{max(y,-1)}^0 w_f [f != j] dx`, and the two are required to agree.
pub fn expected_adv_amortized(buffer: &BufferState, j: PacketId) -> Result<AdvAmortized> {
    let dist = rmix_distribution(buffer)?;
    expected_adv_amortized_with(buffer, &dist, j)
}

fn expected_adv_amortized_with(
    buffer: &BufferState,
    dist: &SelectionDistribution,
    j: PacketId,
) -> Result<AdvAmortized> {
    let by_cases = adv_amortized_by_cases(buffer, dist, j)?;
    let closed = adv_amortized_closed_form(buffer, dist, j)?;
    assert!(
        (by_cases.value - closed.value).abs() <= FORM_AGREEMENT * closed.value.abs().max(1.0),
        "case analysis {} and closed form {} disagree on buffer {}",
        by_cases.value,
        closed.value,
        buffer.digest()
    );
    Ok(by_cases)
}

fn frontier_member(buffer: &BufferState, j: PacketId) -> Result<(f64, f64)> {
    let pj = buffer.get(j).ok_or(Error::NotPending(j))?;
    if !buffer.on_frontier(j) {
        return Err(Error::NotOnFrontier(j));
    }
    let wh = buffer.heaviest().expect("buffer holds j").weight;
    Ok((pj.weight, (pj.weight / wh).ln()))
}

/// Each atom contributes `w_j` when `f ⊴ j` and `w_j + w_f` when `j ⊲ f`.
pub fn adv_amortized_by_cases(
    buffer: &BufferState,
    dist: &SelectionDistribution,
    j: PacketId,
) -> Result<AdvAmortized> {
    let (wj, y) = frontier_member(buffer, j)?;
    let pj = buffer.get(j).expect("checked");
    let mut value = 0.0;
    for atom in &dist.atoms {
        let f = buffer.get(atom.packet).expect("atoms come from the buffer");
        let gain = if f.cmp_deadline(pj).is_le() {
            wj
        } else {
            wj + f.weight
        };
        value += atom.probability * gain;
    }
    Ok(AdvAmortized { y, value })
}

pub fn adv_amortized_closed_form(
    buffer: &BufferState,
    dist: &SelectionDistribution,
    j: PacketId,
) -> Result<AdvAmortized> {
    let (wj, y) = frontier_member(buffer, j)?;
    let from = y.max(-1.0);
    let integral: f64 = dist
        .atoms
        .iter()
        .filter(|a| a.packet != j)
        .map(|a| {
            let len = (a.hi.min(0.0) - a.lo.max(from)).max(0.0);
            len * a.weight
        })
        .sum();
    Ok(AdvAmortized {
        y,
        value: wj + integral,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateRow {
    pub j: PacketId,
    pub y: f64,
    pub e_adv_amortized: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepCertificate {
    pub buffer_digest: String,
    pub e_rmix: f64,
    /// One row per Pareto-frontier packet, in deadline order.
    pub rows: Vec<CertificateRow>,
    pub min_ratio: f64,
    pub passed: bool,
}

impl StepCertificate {
    pub fn row(&self, j: PacketId) -> Option<&CertificateRow> {
        self.rows.iter().find(|r| r.j == j)
    }

    /// Frontier packet with the smallest ratio (earliest on ties).
    pub fn worst_row(&self) -> Option<&CertificateRow> {
        self.rows
            .iter()
            .fold(None, |best: Option<&CertificateRow>, r| match best {
                Some(b) if b.ratio <= r.ratio => Some(b),
                _ => Some(r),
            })
    }
}

pub fn step_certificate(buffer: &BufferState) -> Result<StepCertificate> {
    step_certificate_with_tolerance(buffer, DEFAULT_TOLERANCE)
}

/// Checks `E[RMix] >= (1 - 1/e) E[ADV']` for every legal adversary choice.
pub fn step_certificate_with_tolerance(
    buffer: &BufferState,
    tolerance: f64,
) -> Result<StepCertificate> {
    let dist = rmix_distribution(buffer)?;
    let e_rmix = dist.mean_weight();
    let mut rows = Vec::new();
    for j in buffer.pareto_frontier() {
        let adv = expected_adv_amortized_with(buffer, &dist, j.id)?;
        rows.push(CertificateRow {
            j: j.id,
            y: adv.y,
            e_adv_amortized: adv.value,
            ratio: e_rmix / adv.value,
        });
    }
    let min_ratio = rows.iter().map(|r| r.ratio).fold(f64::INFINITY, f64::min);
    Ok(StepCertificate {
        buffer_digest: buffer.digest(),
        e_rmix,
        rows,
        min_ratio,
        passed: min_ratio >= RATIO_BOUND - tolerance,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CaseTaken {
    /// Both players sent the same packet.
    Equal,
    /// `f ⊲ j`.
    Case1,
    /// `j ⊲ f`.
    Case2,
}

impl fmt::Display for CaseTaken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CaseTaken::Equal => "equal",
            CaseTaken::Case1 => "case1",
            CaseTaken::Case2 => "case2",
        })
    }
}

/// Patch applied to the adversary's buffer after both transmissions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Modification {
    None,
    /// The adversary's pending `f` becomes `j`.
    ReplaceWithJ {
        f: PacketId,
        j: PacketId,
    },
    /// The adversary additionally sends `f` and keeps `j`.
    ExtraSendAndReinsert {
        f: PacketId,
        j: PacketId,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: u64,
    pub x: f64,
    pub f: PacketId,
    pub j: PacketId,
    pub case_taken: CaseTaken,
    pub modification: Modification,
    pub alg_gain: f64,
    pub adv_gain: f64,
    pub e_rmix: f64,
    pub e_adv: f64,
}

/// Running state of the adversary harness.
#[derive(Debug, Clone, Default)]
pub struct HarnessState {
    pub shared_buffer: BufferState,
    pub alg_total: f64,
    pub adv_amortized_total: f64,
    pub expected_alg_total: f64,
    pub expected_adv_total: f64,
    /// Sum of per-step variances of RMix's gain given the realized buffers.
    pub alg_variance_total: f64,
    pub step_log: Vec<StepRecord>,
    dual: Option<DualBuffers>,
}

/// Both players' buffers, maintained literally for fidelity checks.
#[derive(Debug, Clone, Default)]
struct DualBuffers {
    alg: BufferState,
    adv: BufferState,
}

impl HarnessState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Also tracks the two buffers separately and checks after each step
    /// that they equal each other and the shared buffer.
    pub fn with_dual_buffers() -> Self {
        HarnessState {
            dual: Some(DualBuffers::default()),
            ..Self::default()
        }
    }

    pub fn from_buffer(buffer: BufferState, dual: bool) -> Self {
        let mut s = if dual {
            Self::with_dual_buffers()
        } else {
            Self::new()
        };
        if let Some(d) = &mut s.dual {
            d.alg = buffer.clone();
            d.adv = buffer.clone();
        }
        s.shared_buffer = buffer;
        s
    }

    pub fn dual_mode(&self) -> bool {
        self.dual.is_some()
    }

    pub fn aggregate_expected_ratio(&self) -> f64 {
        if self.expected_adv_total == 0.0 {
            1.0
        } else {
            self.expected_alg_total / self.expected_adv_total
        }
    }

    pub fn insert_arrivals(&mut self, arrivals: &[crate::model::Packet]) -> Result<()> {
        for p in arrivals {
            self.shared_buffer.insert(*p)?;
            if let Some(d) = &mut self.dual {
                d.alg.insert(*p)?;
                d.adv.insert(*p)?;
            }
        }
        Ok(())
    }

    pub fn expire(&mut self, replay: &Replay<'_>, step: u64) -> Result<()> {
        replay.expire(&mut self.shared_buffer, step)?;
        if let Some(d) = &mut self.dual {
            replay.expire(&mut d.alg, step)?;
            replay.expire(&mut d.adv, step)?;
        }
        self.check_identity()
    }

    fn check_identity(&self) -> Result<()> {
        if let Some(d) = &self.dual {
            if d.alg != d.adv || d.alg != self.shared_buffer {
                return Err(Error::Harness(format!(
                    "buffers diverged: alg {} adv {} shared {}",
                    d.alg.digest(),
                    d.adv.digest(),
                    self.shared_buffer.digest()
                )));
            }
        }
        Ok(())
    }

    /// One transmission round. `adv_choice` must be on the Pareto frontier
    /// of the shared buffer and `x` in `[-1, 0]`.
    pub fn harness_step(&mut self, step: u64, adv_choice: PacketId, x: f64) -> Result<&StepRecord> {
        if !(-1.0..=0.0).contains(&x) {
            return Err(Error::Harness(format!("draw x = {x} outside [-1, 0]")));
        }
        let buffer = &self.shared_buffer;
        let pj = *buffer
            .get(adv_choice)
            .ok_or(Error::NotPending(adv_choice))?;
        if !buffer.on_frontier(adv_choice) {
            return Err(Error::NotOnFrontier(adv_choice));
        }
        let dist = rmix_distribution(buffer)?;
        let e_rmix = dist.mean_weight();
        let e_adv = expected_adv_amortized_with(buffer, &dist, adv_choice)?.value;
        let pf = *rmix_pick(buffer, x).expect("buffer is non-empty");

        let (case_taken, modification, adv_gain) = if pf.id == pj.id {
            (CaseTaken::Equal, Modification::None, pj.weight)
        } else if pf.cmp_deadline(&pj).is_lt() {
            (
                CaseTaken::Case1,
                Modification::ReplaceWithJ { f: pf.id, j: pj.id },
                pj.weight,
            )
        } else {
            (
                CaseTaken::Case2,
                Modification::ExtraSendAndReinsert { f: pf.id, j: pj.id },
                pj.weight + pf.weight,
            )
        };

        self.shared_buffer.remove(pf.id)?;
        if let Some(d) = &mut self.dual {
            d.alg.remove(pf.id)?;
            d.adv.remove(pj.id)?;
            match modification {
                Modification::None => {}
                Modification::ReplaceWithJ { f, .. } => {
                    d.adv.remove(f)?;
                    d.adv.insert(pj)?;
                }
                Modification::ExtraSendAndReinsert { f, .. } => {
                    d.adv.remove(f)?;
                    d.adv.insert(pj)?;
                }
            }
        }
        self.check_identity()?;

        self.alg_total += pf.weight;
        self.adv_amortized_total += adv_gain;
        self.expected_alg_total += e_rmix;
        self.expected_adv_total += e_adv;
        self.alg_variance_total += dist.weight_variance();
        self.step_log.push(StepRecord {
            step,
            x,
            f: pf.id,
            j: pj.id,
            case_taken,
            modification,
            alg_gain: pf.weight,
            adv_gain,
            e_rmix,
            e_adv,
        });
        Ok(self.step_log.last().expect("just pushed"))
    }
}

/// How the adaptive adversary picks its packet each step. It sees the
/// shared buffer and every past draw, never the current one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AdversaryStrategy {
    FrontierHeaviest,
    FrontierEarliest,
    /// Minimizes `E[RMix] / E[ADV']` for the current buffer.
    MinRatio,
    RandomFrontier,
    /// Fixed choice per step; unscripted steps fall back to frontier-earliest.
    Scripted(BTreeMap<u64, PacketId>),
}

impl AdversaryStrategy {
    pub fn name(&self) -> &'static str {
        match self {
            AdversaryStrategy::FrontierHeaviest => "frontier-heaviest",
            AdversaryStrategy::FrontierEarliest => "frontier-earliest",
            AdversaryStrategy::MinRatio => "min-ratio",
            AdversaryStrategy::RandomFrontier => "random-frontier",
            AdversaryStrategy::Scripted(_) => "scripted",
        }
    }

    fn choose(
        &self,
        step: u64,
        buffer: &BufferState,
        cert: &StepCertificate,
        rng: &mut ChaCha8Rng,
    ) -> Result<PacketId> {
        let earliest = || buffer.earliest().expect("non-empty").id;
        Ok(match self {
            AdversaryStrategy::FrontierHeaviest => buffer.heaviest().expect("non-empty").id,
            AdversaryStrategy::FrontierEarliest => earliest(),
            AdversaryStrategy::MinRatio => cert.worst_row().expect("non-empty").j,
            AdversaryStrategy::RandomFrontier => cert.rows.choose(rng).expect("non-empty").j,
            AdversaryStrategy::Scripted(script) => match script.get(&step) {
                Some(&id) if buffer.contains(id) => id,
                Some(&id) => {
                    return Err(Error::trace(format!(
                        "script names packet {id} at step {step}, which is not pending"
                    )))
                }
                None => earliest(),
            },
        })
    }
}

impl FromStr for AdversaryStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "frontier-heaviest" => Ok(AdversaryStrategy::FrontierHeaviest),
            "frontier-earliest" => Ok(AdversaryStrategy::FrontierEarliest),
            "min-ratio" => Ok(AdversaryStrategy::MinRatio),
            "random-frontier" => Ok(AdversaryStrategy::RandomFrontier),
            "scripted" => Err(Error::Config(
                "the scripted strategy needs a script of per-step packet ids".into(),
            )),
            other => Err(Error::Config(format!(
                "unknown adversary strategy {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveOptions {
    pub seed: u64,
    pub dual_buffers: bool,
    pub tolerance: f64,
}

impl Default for AdaptiveOptions {
    fn default() -> Self {
        AdaptiveOptions {
            seed: 0,
            dual_buffers: false,
            tolerance: DEFAULT_TOLERANCE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveReport {
    pub strategy: String,
    pub seed: u64,
    pub steps: usize,
    pub alg_total: f64,
    pub adv_amortized_total: f64,
    pub expected_alg_total: f64,
    pub expected_adv_total: f64,
    pub alg_variance_total: f64,
    pub aggregate_expected_ratio: f64,
    pub min_step_ratio: f64,
    pub all_certificates_passed: bool,
    pub step_log: Vec<StepRecord>,
    pub certificates: Vec<StepCertificate>,
}

impl AdaptiveReport {
    pub fn passed(&self, tolerance: f64) -> bool {
        self.all_certificates_passed && self.aggregate_expected_ratio >= RATIO_BOUND - tolerance
    }
}

/// Plays RMix against an adaptive adversary over a trace.
///
/// Per step: arrivals, adversary commits to `j`, RMix draws `x`, both send
/// and the adversary's buffer is synchronized, then expiration.
pub fn run_adaptive(
    trace: &Trace,
    strategy: &AdversaryStrategy,
    opts: &AdaptiveOptions,
) -> Result<AdaptiveReport> {
    let replay = Replay::new(trace)?;
    let mut state = if opts.dual_buffers {
        HarnessState::with_dual_buffers()
    } else {
        HarnessState::new()
    };
    let mut rmix_rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut adv_rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut certificates = Vec::new();
    let mut steps = 0;

    for step in replay.steps() {
        steps += 1;
        state.insert_arrivals(replay.arrivals(step))?;
        if !state.shared_buffer.is_empty() {
            let cert = step_certificate_with_tolerance(&state.shared_buffer, opts.tolerance)?;
            let j = strategy.choose(step, &state.shared_buffer, &cert, &mut adv_rng)?;
            let x = draw_x(&mut rmix_rng);
            state.harness_step(step, j, x)?;
            certificates.push(cert);
        }
        state.expire(&replay, step)?;
    }

    Ok(AdaptiveReport {
        strategy: strategy.name().to_string(),
        seed: opts.seed,
        steps,
        alg_total: state.alg_total,
        adv_amortized_total: state.adv_amortized_total,
        expected_alg_total: state.expected_alg_total,
        expected_adv_total: state.expected_adv_total,
        alg_variance_total: state.alg_variance_total,
        aggregate_expected_ratio: state.aggregate_expected_ratio(),
        min_step_ratio: certificates
            .iter()
            .map(|c| c.min_ratio)
            .fold(f64::INFINITY, f64::min),
        all_certificates_passed: certificates.iter().all(|c| c.passed),
        step_log: state.step_log,
        certificates,
    })
}
