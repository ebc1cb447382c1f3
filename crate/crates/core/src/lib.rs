//! Buffer management with bounded delay: the RMix randomized scheduler, exact
//! per-step expectations and ratio certificates, an adaptive-online adversary
//! harness, and the offline optimum used to measure competitive ratios.

pub mod algorithms;
pub mod analysis;
pub mod cli;
pub mod error;
pub mod gen;
pub mod model;
pub mod opt;
pub mod sim;

pub use algorithms::{
    edf_choose, greedy_choose, rmix_choose, rmix_distribution, rmix_sample, Atom, Scheduler,
    SchedulerDecision, SelectionDistribution,
};
pub use analysis::{
    expected_adv_amortized, expected_rmix_gain, run_adaptive, step_certificate, AdaptiveOptions,
    AdaptiveReport, AdversaryStrategy, HarnessState, StepCertificate, DEFAULT_TOLERANCE,
    RATIO_BOUND,
};
pub use error::{Error, Result};
pub use gen::{generate, tightness_buffer, GenConfig, SpanDist, WeightDist};
pub use model::{
    apply_step, lhd, unlhd, BufferState, DeadlineKey, DeadlineModel, Packet, PacketId, StepEvent,
    Trace,
};
pub use opt::{opt_brute, opt_greedy, realize_deadlines, Schedule};
pub use sim::{run_trials, simulate_gain, RunReport};
