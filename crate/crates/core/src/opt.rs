//! Offline optimum for a realized numeric instance.
//!
//! Sets of packets that can all be sent (one per step, each inside its
//! `[arrival, deadline]` window) are the independent sets of a transversal
//! matroid, so adding packets heaviest-first whenever the set stays feasible
//! yields a maximum-weight schedule. Feasibility is kept by incremental
//! augmenting paths from packets to time slots.

use std::collections::HashMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    ordinal_expiry_steps, DeadlineKey, DeadlineModel, Packet, PacketId, StepEvent, Trace,
};

/// Packets accepted by [`opt_brute`].
pub const BRUTE_FORCE_LIMIT: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub step: u64,
    pub packet: PacketId,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    /// Sorted by step.
    pub assignments: Vec<Assignment>,
    pub value: f64,
}

impl Schedule {
    fn from_assignments(mut assignments: Vec<Assignment>) -> Self {
        assignments.sort_by_key(|a| a.step);
        let value = canonical_sum(assignments.iter().map(|a| a.weight));
        Schedule { assignments, value }
    }

    /// Checks one packet per step, each packet at most once and inside its window.
    pub fn validate(&self, trace: &Trace) -> Result<()> {
        let packets: HashMap<PacketId, &Packet> = trace.packets().map(|p| (p.id, p)).collect();
        let mut steps = std::collections::HashSet::new();
        let mut used = std::collections::HashSet::new();
        for a in &self.assignments {
            let p = packets.get(&a.packet).ok_or(Error::NotPending(a.packet))?;
            if !steps.insert(a.step) || !used.insert(a.packet) {
                return Err(Error::Harness(format!(
                    "slot or packet reused at step {}",
                    a.step
                )));
            }
            if a.step < p.arrival_step || a.step > p.deadline.value() {
                return Err(Error::Harness(format!(
                    "packet {} scheduled at {} outside [{}, {}]",
                    p.id,
                    a.step,
                    p.arrival_step,
                    p.deadline.value()
                )));
            }
        }
        Ok(())
    }

    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["step", "packet", "weight"])?;
        for a in &self.assignments {
            w.write_record([
                a.step.to_string(),
                a.packet.0.to_string(),
                a.weight.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Sum in ascending order, so equal weight multisets give bit-identical values.
fn canonical_sum(weights: impl Iterator<Item = f64>) -> f64 {
    let mut w: Vec<f64> = weights.collect();
    w.sort_by(f64::total_cmp);
    w.iter().sum()
}

fn numeric_packets(trace: &Trace) -> Result<Vec<Packet>> {
    if trace.model != DeadlineModel::Numeric {
        return Err(Error::trace(
            "offline optimum needs numeric deadlines; realize the ordinal trace first",
        ));
    }
    Ok(trace.packets().copied().collect())
}

/// Bipartite matching of packets to time slots, grown one packet at a time.
struct SlotMatching<'a> {
    packets: &'a [Packet],
    slot_owner: HashMap<u64, usize>,
    slot_of: Vec<Option<u64>>,
}

impl<'a> SlotMatching<'a> {
    fn new(packets: &'a [Packet]) -> Self {
        SlotMatching {
            packets,
            slot_owner: HashMap::new(),
            slot_of: vec![None; packets.len()],
        }
    }

    /// Tries to match packet `i`, re-routing earlier packets if needed. On
    /// failure the matching is left unchanged.
    fn try_add(&mut self, i: usize) -> bool {
        let mut visited = std::collections::HashSet::new();
        self.augment(i, &mut visited)
    }

    fn augment(&mut self, i: usize, visited: &mut std::collections::HashSet<u64>) -> bool {
        let p = &self.packets[i];
        for slot in p.arrival_step..=p.deadline.value() {
            if !visited.insert(slot) {
                continue;
            }
            let free = match self.slot_owner.get(&slot) {
                None => true,
                Some(&k) => self.augment(k, visited),
            };
            if free {
                self.slot_owner.insert(slot, i);
                self.slot_of[i] = Some(slot);
                return true;
            }
        }
        false
    }
}

/// Maximum-weight schedule by matroid greedy.
pub fn opt_greedy(trace: &Trace) -> Result<Schedule> {
    let packets = numeric_packets(trace)?;
    let mut order: Vec<usize> = (0..packets.len()).collect();
    order.sort_by(|&a, &b| {
        let (pa, pb) = (&packets[a], &packets[b]);
        pb.weight
            .total_cmp(&pa.weight)
            .then(pa.deadline.value().cmp(&pb.deadline.value()))
            .then(pa.id.cmp(&pb.id))
    });
    let mut matching = SlotMatching::new(&packets);
    for i in order {
        matching.try_add(i);
    }
    let assignments = matching
        .slot_of
        .iter()
        .enumerate()
        .filter_map(|(i, s)| {
            s.map(|step| Assignment {
                step,
                packet: packets[i].id,
                weight: packets[i].weight,
            })
        })
        .collect();
    Ok(Schedule::from_assignments(assignments))
}

/// Whether `subset` can all be sent: run earliest-deadline-first over time
/// and fail as soon as a packet misses its deadline.
fn edf_schedule(subset: &[&Packet]) -> Option<Vec<Assignment>> {
    let mut by_arrival: Vec<&Packet> = subset.to_vec();
    by_arrival.sort_by_key(|p| (p.arrival_step, p.id));
    let mut pending: Vec<&Packet> = Vec::new();
    let mut out = Vec::with_capacity(subset.len());
    let mut next = 0;
    let mut t = by_arrival.first()?.arrival_step;
    while next < by_arrival.len() || !pending.is_empty() {
        if pending.is_empty() && by_arrival[next].arrival_step > t {
            t = by_arrival[next].arrival_step;
        }
        while next < by_arrival.len() && by_arrival[next].arrival_step <= t {
            pending.push(by_arrival[next]);
            next += 1;
        }
        let (i, _) = pending
            .iter()
            .enumerate()
            .min_by_key(|(_, p)| (p.deadline.value(), p.id))
            .expect("pending is non-empty");
        let p = pending.swap_remove(i);
        if p.deadline.value() < t {
            return None;
        }
        out.push(Assignment {
            step: t,
            packet: p.id,
            weight: p.weight,
        });
        t += 1;
    }
    Some(out)
}

/// Exhaustive search over subsets; a test oracle for [`opt_greedy`].
pub fn opt_brute(trace: &Trace) -> Result<Schedule> {
    let packets = numeric_packets(trace)?;
    let n = packets.len();
    if n > BRUTE_FORCE_LIMIT {
        return Err(Error::TooLarge(n, BRUTE_FORCE_LIMIT));
    }
    let mut best = Schedule::from_assignments(Vec::new());
    for mask in 1u32..(1u32 << n) {
        let subset: Vec<&Packet> = (0..n)
            .filter(|i| mask & (1 << i) != 0)
            .map(|i| &packets[i])
            .collect();
        let value = canonical_sum(subset.iter().map(|p| p.weight));
        if value <= best.value {
            continue;
        }
        if let Some(a) = edf_schedule(&subset) {
            best = Schedule::from_assignments(a);
        }
    }
    Ok(best)
}

/// Converts an ordinal trace into a numeric one: each packet's deadline is
/// the step whose expiration event removes it (it can still be sent in that
/// step); packets that never expire get the last step.
pub fn realize_deadlines(trace: &Trace) -> Result<Trace> {
    let expiry = ordinal_expiry_steps(trace)?;
    let events = trace
        .events
        .iter()
        .map(|ev| StepEvent {
            step: ev.step,
            arrivals: ev
                .arrivals
                .iter()
                .map(|p| Packet {
                    deadline: DeadlineKey::Numeric(expiry[&p.id]),
                    ..*p
                })
                .collect(),
            expire_prefix: None,
        })
        .collect();
    Trace::new(DeadlineModel::Numeric, events)
}

/// Numeric instance for `trace`, realizing it first if it is ordinal.
pub fn numeric_instance(trace: &Trace) -> Result<std::borrow::Cow<'_, Trace>> {
    match trace.model {
        DeadlineModel::Numeric => Ok(std::borrow::Cow::Borrowed(trace)),
        DeadlineModel::Ordinal => Ok(std::borrow::Cow::Owned(realize_deadlines(trace)?)),
    }
}
