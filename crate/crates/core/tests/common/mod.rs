//! Independent oracles shared by the integration tests. Nothing here uses
//! the selection distribution; everything goes through the pointwise rule.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rmix_core::model::{BufferState, Packet, PacketId};
use rmix_core::{lhd, rmix_choose};

pub fn weight_of_choice(buffer: &BufferState, x: f64) -> f64 {
    let id = rmix_choose(buffer, x).unwrap().chosen.unwrap();
    buffer.get(id).unwrap().weight
}

/// `∫_{a}^{b} g(x) dx` for a non-decreasing `g`, by adaptive trapezoids.
///
/// On a panel `[l, r]` the trapezoid error is at most `(r - l)(g(r) - g(l)) / 2`,
/// so panels are bisected until that bound drops below `panel_tol`. Returns
/// the estimate and the accumulated error bound.
pub fn integrate_monotone(g: &dyn Fn(f64) -> f64, a: f64, b: f64, panel_tol: f64) -> (f64, f64) {
    let mut total = 0.0;
    let mut bound = 0.0;
    let mut stack = vec![(a, b, g(a), g(b))];
    while let Some((l, r, gl, gr)) = stack.pop() {
        let err = (r - l) * (gr - gl) / 2.0;
        let m = 0.5 * (l + r);
        if err <= panel_tol || m <= l || m >= r {
            total += (r - l) * (gl + gr) / 2.0;
            bound += err;
            continue;
        }
        let gm = g(m);
        stack.push((l, m, gl, gm));
        stack.push((m, r, gm, gr));
    }
    (total, bound)
}

/// `∫_{-1}^{0} w_f(x) dx` by adaptive quadrature on the pointwise rule.
pub fn integrate_rmix_gain(buffer: &BufferState) -> f64 {
    integrate_monotone(&|x| weight_of_choice(buffer, x), -1.0, 0.0, 1e-14).0
}

/// `w_j + ∫ w_f [j ⊲ f] dx`: adversary credit integrated pointwise.
pub fn integrate_adv_amortized(buffer: &BufferState, j: PacketId) -> f64 {
    let pj = *buffer.get(j).unwrap();
    let g = |x: f64| {
        let id = rmix_choose(buffer, x).unwrap().chosen.unwrap();
        let pf = buffer.get(id).unwrap();
        if lhd(&pj, pf).unwrap() {
            pf.weight
        } else {
            0.0
        }
    };
    // j ⊲ f exactly when x > y, so the integrand is non-decreasing as well
    pj.weight + integrate_monotone(&g, -1.0, 0.0, 1e-14).0
}

/// Monte Carlo mean and standard error of `w_f` with `n` uniform draws.
pub fn monte_carlo_gain(buffer: &BufferState, n: usize, seed: u64) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut s, mut s2) = (0.0, 0.0);
    for _ in 0..n {
        let x = -rng.random::<f64>();
        let w = weight_of_choice(buffer, x);
        s += w;
        s2 += w * w;
    }
    let nf = n as f64;
    let mean = s / nf;
    let var = (s2 / nf - mean * mean).max(0.0) * nf / (nf - 1.0);
    (mean, (var / nf).sqrt())
}

/// Frontier straight from the definition: `j` such that every pending `k`
/// has `w_j >= w_k` or `j ⊴ k`.
pub fn brute_frontier(buffer: &BufferState) -> Vec<PacketId> {
    buffer
        .iter()
        .filter(|j| {
            buffer
                .iter()
                .all(|k| j.weight >= k.weight || !lhd(k, j).unwrap())
        })
        .map(|p| p.id)
        .collect()
}

/// Buffer with log-uniform weights on `[lo, hi]`, random distinct numeric
/// deadlines and random ids.
pub fn random_buffer(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> BufferState {
    rmix_core::gen::random_buffer(rng, n, lo, hi)
}

pub fn packets(buffer: &BufferState) -> Vec<Packet> {
    buffer.packets().to_vec()
}

pub fn numeric(ps: &[(u64, f64, u64)]) -> BufferState {
    BufferState::from_packets(
        ps.iter()
            .map(|&(id, w, d)| Packet::numeric(id, w, d, 0).unwrap()),
    )
    .unwrap()
}
