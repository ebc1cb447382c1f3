//! Online schedulers: RMix (pointwise rule, sampler and exact selection
//! distribution) plus greedy and earliest-deadline-first baselines.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{BufferState, Packet, PacketId};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchedulerDecision {
    pub chosen: Option<PacketId>,
    /// The uniform draw, for randomized schedulers.
    pub sample_x: Option<f64>,
}

impl SchedulerDecision {
    const IDLE: SchedulerDecision = SchedulerDecision {
        chosen: None,
        sample_x: None,
    };
}

/// One packet RMix can pick, with the set of draws `x` that pick it.
///
/// Draws in `(lo, hi]` select `packet`; the first atom also owns `x = -1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub packet: PacketId,
    pub weight: f64,
    pub probability: f64,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionDistribution {
    /// Ordered by increasing `x`, which is also deadline order.
    pub atoms: Vec<Atom>,
}

impl SelectionDistribution {
    /// The atom whose interval owns `x`.
    pub fn atom_for(&self, x: f64) -> Option<&Atom> {
        self.atoms.iter().find(|a| x <= a.hi).or(self.atoms.last())
    }

    pub fn total_probability(&self) -> f64 {
        self.atoms.iter().map(|a| a.probability).sum()
    }

    pub fn mean_weight(&self) -> f64 {
        self.atoms.iter().map(|a| a.probability * a.weight).sum()
    }

    /// Variance of the transmitted weight under one draw.
    pub fn weight_variance(&self) -> f64 {
        let m = self.mean_weight();
        self.atoms
            .iter()
            .map(|a| a.probability * (a.weight - m).powi(2))
            .sum()
    }
}

fn check_x(x: f64) -> Result<()> {
    if !(-1.0..=0.0).contains(&x) {
        return Err(Error::Harness(format!("draw x = {x} outside [-1, 0]")));
    }
    Ok(())
}

/// The earliest packet `f` with `w_f >= e^x * w_h`, `h` the heaviest pending packet.
pub fn rmix_pick(buffer: &BufferState, x: f64) -> Option<&Packet> {
    let h = buffer.heaviest()?;
    let threshold = x.exp() * h.weight;
    buffer.iter().find(|p| p.weight >= threshold).or(Some(h))
}

pub fn rmix_choose(buffer: &BufferState, x: f64) -> Result<SchedulerDecision> {
    check_x(x)?;
    Ok(match rmix_pick(buffer, x) {
        Some(f) => SchedulerDecision {
            chosen: Some(f.id),
            sample_x: Some(x),
        },
        None => SchedulerDecision::IDLE,
    })
}

/// Draws `x` uniformly from `[-1, 0]` and applies [`rmix_choose`]. An empty
/// buffer consumes no randomness.
pub fn rmix_sample<R: Rng + ?Sized>(buffer: &BufferState, rng: &mut R) -> SchedulerDecision {
    if buffer.is_empty() {
        return SchedulerDecision::IDLE;
    }
    let x = draw_x(rng);
    rmix_choose(buffer, x).expect("draw lies in [-1, 0]")
}

pub(crate) fn draw_x<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    -rng.random::<f64>()
}

/// Exact selection probabilities of RMix.
///
/// Only strict prefix weight maxima (in deadline order) can be selected. For
/// such a packet `p` with earlier prefix maximum `M`, the draws selecting it
/// are `x ∈ (ln(M/w_h), ln(w_p/w_h)]` clipped to `[-1, 0]`.
pub fn rmix_distribution(buffer: &BufferState) -> Result<SelectionDistribution> {
    let h = buffer.heaviest().ok_or(Error::EmptyBuffer)?;
    let wh = h.weight;
    let mut atoms = Vec::new();
    let mut prefix_max = 0.0_f64;
    for p in buffer.iter() {
        if p.weight <= prefix_max {
            continue;
        }
        let lo = if prefix_max > 0.0 {
            (prefix_max / wh).ln().max(-1.0)
        } else {
            -1.0
        };
        let hi = (p.weight / wh).ln().min(0.0);
        if hi > lo {
            atoms.push(Atom {
                packet: p.id,
                weight: p.weight,
                probability: hi - lo,
                lo,
                hi,
            });
        }
        prefix_max = p.weight;
        if p.id == h.id {
            break;
        }
    }
    Ok(SelectionDistribution { atoms })
}

pub fn greedy_choose(buffer: &BufferState) -> SchedulerDecision {
    SchedulerDecision {
        chosen: buffer.heaviest().map(|p| p.id),
        sample_x: None,
    }
}

pub fn edf_choose(buffer: &BufferState) -> SchedulerDecision {
    SchedulerDecision {
        chosen: buffer.earliest().map(|p| p.id),
        sample_x: None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheduler {
    Rmix,
    Greedy,
    Edf,
}

impl Scheduler {
    pub fn decide<R: Rng + ?Sized>(&self, buffer: &BufferState, rng: &mut R) -> SchedulerDecision {
        match self {
            Scheduler::Rmix => rmix_sample(buffer, rng),
            Scheduler::Greedy => greedy_choose(buffer),
            Scheduler::Edf => edf_choose(buffer),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Scheduler::Rmix => "rmix",
            Scheduler::Greedy => "greedy",
            Scheduler::Edf => "edf",
        }
    }
}

impl fmt::Display for Scheduler {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheduler {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rmix" => Ok(Scheduler::Rmix),
            "greedy" => Ok(Scheduler::Greedy),
            "edf" => Ok(Scheduler::Edf),
            other => Err(Error::Config(format!(
                "unknown scheduler {other:?} (expected rmix, greedy or edf)"
            ))),
        }
    }
}
