//! Oblivious simulation: a scheduler replays a fixed trace, and its gain is
//! compared with the offline optimum of the same (realized) instance.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algorithms::Scheduler;
use crate::analysis::{AdaptiveReport, RATIO_BOUND};
use crate::error::Result;
use crate::model::{BufferState, PacketId, Replay, Trace};
use crate::opt::{numeric_instance, opt_greedy};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transmission {
    pub step: u64,
    pub packet: PacketId,
    pub weight: f64,
}

/// Runs `scheduler` over the trace once. Returns what it sent, in order.
pub fn simulate_once(trace: &Trace, scheduler: Scheduler, seed: u64) -> Result<Vec<Transmission>> {
    let replay = Replay::new(trace)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut buffer = BufferState::new();
    let mut sent = Vec::new();
    for step in replay.steps() {
        for p in replay.arrivals(step) {
            buffer.insert(*p)?;
        }
        if let Some(id) = scheduler.decide(&buffer, &mut rng).chosen {
            let p = buffer.remove(id)?;
            sent.push(Transmission {
                step,
                packet: id,
                weight: p.weight,
            });
        }
        replay.expire(&mut buffer, step)?;
    }
    Ok(sent)
}

pub fn simulate_gain(trace: &Trace, scheduler: Scheduler, seed: u64) -> Result<f64> {
    Ok(simulate_once(trace, scheduler, seed)?
        .iter()
        .map(|t| t.weight)
        .sum())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub trial: u64,
    pub seed: u64,
    pub gain: f64,
    pub opt_value: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub scheduler: String,
    pub seed: u64,
    pub trials: u64,
    pub opt_value: f64,
    pub per_trial: Vec<TrialResult>,
    pub mean_gain: f64,
    /// Mean of per-trial `gain / opt`, in `[0, 1]`.
    pub mean_ratio: f64,
    pub std_error: f64,
    /// 95% normal-approximation half-width around `mean_ratio`.
    pub ci_half_width: f64,
    /// `opt / mean_gain`, comparable with `e / (e - 1)`.
    pub reciprocal_ratio: f64,
    pub bound: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aggregate_expected_ratio: Option<f64>,
}

/// `opt == 0` counts as ratio 1.
pub fn trial_ratio(gain: f64, opt: f64) -> f64 {
    if opt == 0.0 {
        1.0
    } else {
        gain / opt
    }
}

/// Runs `trials` independent replays; trial `i` uses seed `seed + i`, so
/// serial and parallel runs produce identical reports.
pub fn run_trials(
    trace: &Trace,
    scheduler: Scheduler,
    seed: u64,
    trials: u64,
    parallel: bool,
) -> Result<RunReport> {
    let opt_value = opt_greedy(numeric_instance(trace)?.as_ref())?.value;
    let one = |trial: u64| -> Result<TrialResult> {
        let s = seed.wrapping_add(trial);
        let gain = simulate_gain(trace, scheduler, s)?;
        Ok(TrialResult {
            trial,
            seed: s,
            gain,
            opt_value,
            ratio: trial_ratio(gain, opt_value),
        })
    };
    let per_trial: Vec<TrialResult> = if parallel {
        (0..trials)
            .into_par_iter()
            .map(one)
            .collect::<Result<_>>()?
    } else {
        (0..trials).map(one).collect::<Result<_>>()?
    };
    Ok(summarize(scheduler.name(), seed, opt_value, per_trial))
}

fn summarize(scheduler: &str, seed: u64, opt_value: f64, per_trial: Vec<TrialResult>) -> RunReport {
    let n = per_trial.len() as f64;
    let (mean_gain, mean_ratio, std_error) = if per_trial.is_empty() {
        (0.0, 1.0, 0.0)
    } else {
        let mean_gain = per_trial.iter().map(|t| t.gain).sum::<f64>() / n;
        let mean_ratio = per_trial.iter().map(|t| t.ratio).sum::<f64>() / n;
        let var = if per_trial.len() > 1 {
            per_trial
                .iter()
                .map(|t| (t.ratio - mean_ratio).powi(2))
                .sum::<f64>()
                / (n - 1.0)
        } else {
            0.0
        };
        (mean_gain, mean_ratio, (var / n).sqrt())
    };
    RunReport {
        scheduler: scheduler.to_string(),
        seed,
        trials: per_trial.len() as u64,
        opt_value,
        mean_gain,
        mean_ratio,
        std_error,
        ci_half_width: 1.96 * std_error,
        reciprocal_ratio: if mean_ratio > 0.0 {
            1.0 / mean_ratio
        } else {
            f64::INFINITY
        },
        bound: RATIO_BOUND,
        aggregate_expected_ratio: None,
        per_trial,
    }
}

impl RunReport {
    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["trial", "seed", "gain", "opt_value", "ratio"])?;
        for t in &self.per_trial {
            w.write_record([
                t.trial.to_string(),
                t.seed.to_string(),
                t.gain.to_string(),
                t.opt_value.to_string(),
                t.ratio.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Per-step table of an adaptive run:
/// `step, e_rmix, e_adv, ratio, case_taken, cumulative_ratio`.
pub fn write_adaptive_csv(report: &AdaptiveReport, out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "step",
        "e_rmix",
        "e_adv",
        "ratio",
        "case_taken",
        "cumulative_ratio",
    ])?;
    let (mut alg, mut adv) = (0.0, 0.0);
    for r in &report.step_log {
        alg += r.e_rmix;
        adv += r.e_adv;
        w.write_record([
            r.step.to_string(),
            r.e_rmix.to_string(),
            r.e_adv.to_string(),
            (r.e_rmix / r.e_adv).to_string(),
            r.case_taken.to_string(),
            (alg / adv).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
