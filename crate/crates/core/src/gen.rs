//! Seeded instance generators.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{BufferState, DeadlineKey, DeadlineModel, Packet, StepEvent, Trace};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum WeightDist {
    LogUniform {
        lo: f64,
        hi: f64,
    },
    Uniform {
        lo: f64,
        hi: f64,
    },
    /// Uniform over `{1, 1/2, ..., 2^-(k-1)}`.
    GeometricGrid {
        k: u32,
    },
}

impl WeightDist {
    fn validate(&self) -> Result<()> {
        match *self {
            WeightDist::LogUniform { lo, hi } | WeightDist::Uniform { lo, hi } => {
                if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && lo <= hi) {
                    return Err(Error::Config(format!(
                        "weight bounds must satisfy 0 < lo <= hi, got lo={lo} hi={hi}"
                    )));
                }
            }
            WeightDist::GeometricGrid { k } => {
                if k == 0 {
                    return Err(Error::Config("geometric grid needs k >= 1".into()));
                }
            }
        }
        Ok(())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            WeightDist::LogUniform { lo, hi } => {
                if lo == hi {
                    lo
                } else {
                    (lo.ln() + rng.random::<f64>() * (hi / lo).ln())
                        .exp()
                        .clamp(lo, hi)
                }
            }
            WeightDist::Uniform { lo, hi } => {
                if lo == hi {
                    lo
                } else {
                    rng.random_range(lo..=hi)
                }
            }
            WeightDist::GeometricGrid { k } => 0.5f64.powi(rng.random_range(0..k) as i32),
        }
    }
}

/// Window length `deadline - arrival + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SpanDist {
    /// Uniform on `1..=max`.
    Uniform {
        max: u64,
    },
    Constant {
        span: u64,
    },
}

impl SpanDist {
    fn validate(&self) -> Result<()> {
        match *self {
            SpanDist::Uniform { max: s } | SpanDist::Constant { span: s } if s == 0 => {
                Err(Error::Config("spans must be at least 1".into()))
            }
            _ => Ok(()),
        }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        match *self {
            SpanDist::Uniform { max } => rng.random_range(1..=max),
            SpanDist::Constant { span } => span,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenConfig {
    pub steps: u64,
    /// Mean arrivals per step (Poisson).
    pub arrival_rate: f64,
    pub weight_dist: WeightDist,
    pub span_dist: SpanDist,
    #[serde(default)]
    pub s_bounded: Option<u64>,
    pub model: DeadlineModel,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            steps: 100,
            arrival_rate: 1.0,
            weight_dist: WeightDist::LogUniform { lo: 1e-3, hi: 1.0 },
            span_dist: SpanDist::Uniform { max: 8 },
            s_bounded: None,
            model: DeadlineModel::Numeric,
            seed: 0,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.arrival_rate.is_finite() && self.arrival_rate >= 0.0) {
            return Err(Error::Config(format!(
                "arrival_rate must be finite and >= 0, got {}",
                self.arrival_rate
            )));
        }
        if self.s_bounded == Some(0) {
            return Err(Error::Config("s_bounded must be at least 1".into()));
        }
        self.weight_dist.validate()?;
        self.span_dist.validate()
    }
}

/// Ordinal ranks are `latent_deadline * RANK_STRIDE + jitter`, so the
/// expiration order follows a hidden deadline with random tie-breaking.
const RANK_STRIDE: u64 = 1 << 20;

/// Probability that an ordinal step expires one packet beyond those whose
/// hidden deadline has passed.
const EXTRA_EXPIRY_PROB: f64 = 0.2;

/// Deterministic trace from `config.seed`. One event per step in `0..steps`.
pub fn generate(config: &GenConfig) -> Result<Trace> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let poisson = if config.arrival_rate > 0.0 {
        Some(Poisson::new(config.arrival_rate).map_err(|e| Error::Config(e.to_string()))?)
    } else {
        None
    };
    let mut next_id = 0u64;
    let mut events = Vec::with_capacity(config.steps as usize);
    // ordinal bookkeeping: ranks of packets that have not expired yet
    let mut live: std::collections::BTreeSet<(u64, u64)> = Default::default();

    for step in 0..config.steps {
        let count = poisson.as_ref().map_or(0, |p| p.sample(&mut rng) as u64);
        let mut arrivals = Vec::with_capacity(count as usize);
        for _ in 0..count {
            let w = config.weight_dist.sample(&mut rng);
            let mut span = config.span_dist.sample(&mut rng);
            if let Some(s) = config.s_bounded {
                span = span.min(s);
            }
            let latent = step + span - 1;
            let deadline = match config.model {
                DeadlineModel::Numeric => DeadlineKey::Numeric(latent),
                DeadlineModel::Ordinal => {
                    let rank = latent * RANK_STRIDE + rng.random_range(0..RANK_STRIDE);
                    live.insert((rank, next_id));
                    DeadlineKey::Ordinal(rank)
                }
            };
            arrivals.push(Packet::new(next_id, w, deadline, step)?);
            next_id += 1;
        }
        let mut event = StepEvent::new(step, arrivals);
        if config.model == DeadlineModel::Ordinal {
            let due = live
                .iter()
                .take_while(|(rank, _)| rank / RANK_STRIDE <= step)
                .count();
            let extra = usize::from(due < live.len() && rng.random_bool(EXTRA_EXPIRY_PROB));
            let m = due + extra;
            for _ in 0..m {
                live.pop_first();
            }
            event.expire_prefix = Some(m);
        }
        events.push(event);
    }
    Trace::new(config.model, events)
}

/// `k` packets with weights `e^{-1 + i/k}`, `i = 1..=k`, whose deadline
/// order is increasing weight. Every packet is a strict prefix maximum,
/// which makes `w_f` track `e^x w_h` as closely as `k` allows.
pub fn tightness_buffer(k: usize) -> Result<BufferState> {
    if k < 2 {
        return Err(Error::Config(format!(
            "tightness buffer needs k >= 2, got {k}"
        )));
    }
    BufferState::from_packets((1..=k).map(|i| {
        let w = (-1.0 + i as f64 / k as f64).exp();
        Packet::numeric(i as u64 - 1, w, i as u64, 0).expect("positive weight")
    }))
}

/// Buffer of `n` packets with log-uniform weights on `[lo, hi]` and a random
/// deadline permutation.
pub fn random_buffer<R: Rng + ?Sized>(rng: &mut R, n: usize, lo: f64, hi: f64) -> BufferState {
    use rand::seq::SliceRandom;
    let dist = WeightDist::LogUniform { lo, hi };
    let mut deadlines: Vec<u64> = (1..=n as u64).collect();
    deadlines.shuffle(rng);
    BufferState::from_packets(
        deadlines
            .into_iter()
            .enumerate()
            .map(|(i, d)| Packet::numeric(i as u64, dist.sample(rng), d, 0).expect("valid")),
    )
    .expect("distinct ids")
}
