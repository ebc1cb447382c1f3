//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

mod common;

use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use rmix_core::cli::certify_random;
use rmix_core::*;

type Outcome = (bool, String);
type Criterion = (&'static str, fn() -> Outcome);

fn certificate_on_random_buffers() -> Outcome {
    let (summary, failing) = certify_random(100_000, 1, DEFAULT_TOLERANCE).unwrap();
    (
        summary.failures == 0 && failing.is_empty(),
        format!(
            "{} buffers, {} frontier rows, min ratio {:.9}, {} failures",
            summary.buffers, summary.frontier_rows, summary.min_ratio, summary.failures
        ),
    )
}

fn expected_gain_against_oracles() -> Outcome {
    let worst = (0..100u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + i);
            let n = rng.random_range(1..=20);
            let b = common::random_buffer(&mut rng, n, 1e-3, 1.0);
            let exact = expected_rmix_gain(&b);
            let quad = common::integrate_rmix_gain(&b);
            let (mean, se) = common::monte_carlo_gain(&b, 1_000_000, 2000 + i);
            let rel = (exact - quad).abs() / quad;
            let sigmas = if se > 0.0 {
                (mean - exact).abs() / se
            } else {
                0.0
            };
            (rel, sigmas)
        })
        .reduce(|| (0.0, 0.0), |a, b| (a.0.max(b.0), a.1.max(b.1)));
    (
        worst.0 <= 1e-6 && worst.1 <= 4.0,
        format!(
            "max quadrature rel err {:.2e}, max MC deviation {:.2} sigma",
            worst.0, worst.1
        ),
    )
}

fn tightness_near_bound() -> Outcome {
    let c = step_certificate(&tightness_buffer(100).unwrap()).unwrap();
    (
        c.passed && c.min_ratio <= RATIO_BOUND * 1.02 && c.min_ratio >= RATIO_BOUND - 1e-9,
        format!(
            "min ratio {:.6} in [{:.6}, {:.6}]",
            c.min_ratio,
            RATIO_BOUND,
            RATIO_BOUND * 1.02
        ),
    )
}

fn small_instance(rng: &mut ChaCha8Rng) -> Trace {
    let n = rng.random_range(1..=8u64);
    let mut by_step: Vec<Vec<Packet>> = vec![Vec::new(); 8];
    for id in 0..n {
        let a = rng.random_range(0..8u64);
        let d = a + rng.random_range(0..8u64);
        let w = if rng.random_bool(0.3) {
            rng.random_range(1..=4) as f64
        } else {
            (rng.random::<f64>() * 6.9).exp() * 1e-3
        };
        by_step[a as usize].push(Packet::numeric(id, w, d, a).unwrap());
    }
    let events = by_step
        .into_iter()
        .enumerate()
        .filter(|(_, ps)| !ps.is_empty())
        .map(|(s, ps)| StepEvent::new(s as u64, ps))
        .collect();
    Trace::new(DeadlineModel::Numeric, events).unwrap()
}

fn greedy_opt_matches_brute_force() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut mismatches = 0;
    for _ in 0..200 {
        let t = small_instance(&mut rng);
        let g = opt_greedy(&t).unwrap();
        let b = opt_brute(&t).unwrap();
        g.validate(&t).unwrap();
        if g.value != b.value {
            mismatches += 1;
        }
    }
    (
        mismatches == 0,
        format!("200 instances, {mismatches} mismatches"),
    )
}

fn adaptive_config(i: u64) -> GenConfig {
    GenConfig {
        steps: 200,
        arrival_rate: 1.0 + (i % 4) as f64 * 0.5,
        model: if i.is_multiple_of(2) {
            DeadlineModel::Numeric
        } else {
            DeadlineModel::Ordinal
        },
        weight_dist: if i.is_multiple_of(3) {
            WeightDist::GeometricGrid { k: 8 }
        } else {
            WeightDist::LogUniform { lo: 1e-3, hi: 1.0 }
        },
        seed: i,
        ..GenConfig::default()
    }
}

fn adaptive_min_ratio_adversary() -> Outcome {
    let results: Vec<(f64, bool)> = (0..1000u64)
        .into_par_iter()
        .map(|i| {
            let trace = generate(&adaptive_config(i)).unwrap();
            let opts = AdaptiveOptions {
                seed: 77 + i,
                dual_buffers: true,
                tolerance: DEFAULT_TOLERANCE,
            };
            let r = run_adaptive(&trace, &AdversaryStrategy::MinRatio, &opts).unwrap();
            (r.aggregate_expected_ratio, r.all_certificates_passed)
        })
        .collect();
    let min = results.iter().map(|r| r.0).fold(f64::INFINITY, f64::min);
    let all_certs = results.iter().all(|r| r.1);
    (
        all_certs && min >= RATIO_BOUND - 1e-9,
        format!(
            "1000 runs x 200 steps, min aggregate ratio {min:.6}, certificates ok: {all_certs}"
        ),
    )
}

fn simulated_ratio_against_opt() -> Outcome {
    let mut worst = f64::INFINITY;
    let mut ok = true;
    for i in 0..20u64 {
        let cfg = GenConfig {
            steps: 60,
            arrival_rate: 1.5,
            model: if i.is_multiple_of(2) {
                DeadlineModel::Numeric
            } else {
                DeadlineModel::Ordinal
            },
            span_dist: SpanDist::Uniform { max: 6 },
            seed: 500 + i,
            ..GenConfig::default()
        };
        let r = run_trials(&generate(&cfg).unwrap(), Scheduler::Rmix, i, 10_000, true).unwrap();
        let slack = r.mean_ratio - (RATIO_BOUND - 4.0 * r.std_error);
        ok &= slack >= 0.0;
        worst = worst.min(r.mean_ratio);
    }
    (
        ok,
        format!("20 instances x 10^4 trials, lowest mean ratio {worst:.6}"),
    )
}

fn ordinal_matches_numeric() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut bad = 0;
    for _ in 0..1000 {
        let n = rng.random_range(1..=20);
        let b = common::random_buffer(&mut rng, n, 1e-3, 1.0);
        let offset = rng.random_range(0..1000u64);
        let ord = BufferState::from_packets(b.iter().map(|p| Packet {
            deadline: DeadlineKey::Ordinal(p.deadline.value() * 17 + offset),
            ..*p
        }))
        .unwrap();
        let (dn, dor) = (
            rmix_distribution(&b).unwrap(),
            rmix_distribution(&ord).unwrap(),
        );
        let same = dn.atoms.len() == dor.atoms.len()
            && dn.atoms.iter().zip(&dor.atoms).all(|(x, y)| {
                x.packet == y.packet && (x.probability - y.probability).abs() <= 1e-12
            });
        if !same {
            bad += 1;
        }
    }
    (bad == 0, format!("1000 paired buffers, {bad} differ"))
}

fn reports_are_reproducible() -> Outcome {
    let trace = generate(&adaptive_config(3)).unwrap();
    let same_trace = generate(&adaptive_config(3)).unwrap().to_jsonl() == trace.to_jsonl();
    let sim = |parallel| {
        serde_json::to_string(&run_trials(&trace, Scheduler::Rmix, 9, 2000, parallel).unwrap())
            .unwrap()
    };
    let (p1, p2, s1) = (sim(true), sim(true), sim(false));
    let opts = AdaptiveOptions {
        seed: 5,
        dual_buffers: false,
        tolerance: DEFAULT_TOLERANCE,
    };
    let adv = || {
        serde_json::to_string(
            &run_adaptive(&trace, &AdversaryStrategy::RandomFrontier, &opts).unwrap(),
        )
        .unwrap()
    };
    let adaptive_same = adv() == adv();
    let ok = same_trace && p1 == p2 && p1 == s1 && adaptive_same;
    (
        ok,
        format!(
            "trace {same_trace}, parallel rerun {}, serial vs parallel {}, adaptive rerun {adaptive_same}",
            p1 == p2,
            p1 == s1
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        (
            "per-step certificate on random buffers",
            certificate_on_random_buffers,
        ),
        (
            "expected gain vs quadrature and Monte Carlo",
            expected_gain_against_oracles,
        ),
        (
            "tightness buffer approaches the bound",
            tightness_near_bound,
        ),
        (
            "greedy OPT equals brute force",
            greedy_opt_matches_brute_force,
        ),
        ("adaptive min-ratio adversary", adaptive_min_ratio_adversary),
        (
            "simulated ratio against offline OPT",
            simulated_ratio_against_opt,
        ),
        ("ordinal and numeric agree", ordinal_matches_numeric),
        ("reproducible reports", reports_are_reproducible),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let (ok, detail) = check();
        if !ok {
            failed += 1;
        }
        println!(
            "{} [{}] {name}: {detail} ({:.1}s)",
            if ok { "PASS" } else { "FAIL" },
            i + 1,
            start.elapsed().as_secs_f64()
        );
    }
    if failed == 0 {
        println!("acceptance: all {} criteria passed", criteria.len());
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failed} of {} criteria failed", criteria.len());
        ExitCode::FAILURE
    }
}
