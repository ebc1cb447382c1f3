//! Packets, the deadline order, the shared buffer and the step lifecycle.
//!
//! Two deadline models are supported. In the numeric model every packet
//! carries the last step in which it may be transmitted. In the ordinal model
//! a packet only carries a rank: schedulers learn the order of expirations,
//! and the trace decides which prefix of that order expires at each step.
//!
//! Both models share the strict total order `lhd`: deadline key first,
//! ascending [`PacketId`] second.

mod trace;

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub use trace::{ordinal_expiry_steps, read_trace, write_trace, Replay, StepEvent, Trace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PacketId(pub u64);

impl fmt::Display for PacketId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DeadlineModel {
    Numeric,
    Ordinal,
}

impl DeadlineModel {
    pub fn as_str(self) -> &'static str {
        match self {
            DeadlineModel::Numeric => "numeric",
            DeadlineModel::Ordinal => "ordinal",
        }
    }
}

impl fmt::Display for DeadlineModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for DeadlineModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "numeric" => Ok(DeadlineModel::Numeric),
            "ordinal" => Ok(DeadlineModel::Ordinal),
            other => Err(Error::Config(format!("unknown deadline model {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DeadlineKey {
    /// Last step in which the packet can be transmitted.
    Numeric(u64),
    /// Position in the expiration order; only comparisons are meaningful.
    Ordinal(u64),
}

impl DeadlineKey {
    pub fn model(&self) -> DeadlineModel {
        match self {
            DeadlineKey::Numeric(_) => DeadlineModel::Numeric,
            DeadlineKey::Ordinal(_) => DeadlineModel::Ordinal,
        }
    }

    pub fn value(&self) -> u64 {
        match *self {
            DeadlineKey::Numeric(v) | DeadlineKey::Ordinal(v) => v,
        }
    }

    pub fn with_model(model: DeadlineModel, value: u64) -> Self {
        match model {
            DeadlineModel::Numeric => DeadlineKey::Numeric(value),
            DeadlineModel::Ordinal => DeadlineKey::Ordinal(value),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Packet {
    pub id: PacketId,
    pub weight: f64,
    pub deadline: DeadlineKey,
    pub arrival_step: u64,
}

impl Packet {
    /// Validating constructor. Weights must be finite and strictly positive,
    /// and a numeric deadline may not precede the arrival step.
    pub fn new(id: u64, weight: f64, deadline: DeadlineKey, arrival_step: u64) -> Result<Self> {
        let p = Packet {
            id: PacketId(id),
            weight,
            deadline,
            arrival_step,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn numeric(id: u64, weight: f64, deadline: u64, arrival_step: u64) -> Result<Self> {
        Self::new(id, weight, DeadlineKey::Numeric(deadline), arrival_step)
    }

    pub fn ordinal(id: u64, weight: f64, rank: u64, arrival_step: u64) -> Result<Self> {
        Self::new(id, weight, DeadlineKey::Ordinal(rank), arrival_step)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.weight.is_finite() && self.weight > 0.0) {
            return Err(Error::Model(format!(
                "packet {} has non-positive or non-finite weight {}",
                self.id, self.weight
            )));
        }
        if let DeadlineKey::Numeric(d) = self.deadline {
            if d < self.arrival_step {
                return Err(Error::Model(format!(
                    "packet {} has deadline {} before its arrival step {}",
                    self.id, d, self.arrival_step
                )));
            }
        }
        Ok(())
    }

    fn order_key(&self) -> (u64, PacketId) {
        (self.deadline.value(), self.id)
    }

    /// Position in the deadline order. Callers must ensure both packets use the same model.
    pub(crate) fn cmp_deadline(&self, other: &Packet) -> Ordering {
        self.order_key().cmp(&other.order_key())
    }
}

/// `a ⊲ b`: `a` expires strictly before `b` (deadline, then id).
pub fn lhd(a: &Packet, b: &Packet) -> Result<bool> {
    check_same_model(a, b)?;
    Ok(a.cmp_deadline(b) == Ordering::Less)
}

/// `a ⊴ b`: `a ⊲ b` or `a` and `b` are the same packet.
pub fn unlhd(a: &Packet, b: &Packet) -> Result<bool> {
    check_same_model(a, b)?;
    Ok(a.cmp_deadline(b) != Ordering::Greater)
}

fn check_same_model(a: &Packet, b: &Packet) -> Result<()> {
    if a.deadline.model() != b.deadline.model() {
        return Err(Error::Model(format!(
            "cannot compare {} deadline of {} with {} deadline of {}",
            a.deadline.model(),
            a.id,
            b.deadline.model(),
            b.id
        )));
    }
    Ok(())
}

/// Pending packets, kept sorted by `lhd`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BufferState {
    packets: Vec<Packet>,
}

impl BufferState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_packets(packets: impl IntoIterator<Item = Packet>) -> Result<Self> {
        let mut buf = Self::new();
        for p in packets {
            buf.insert(p)?;
        }
        Ok(buf)
    }

    pub fn model(&self) -> Option<DeadlineModel> {
        self.packets.first().map(|p| p.deadline.model())
    }

    pub fn insert(&mut self, packet: Packet) -> Result<()> {
        packet.validate()?;
        if let Some(model) = self.model() {
            if model != packet.deadline.model() {
                return Err(Error::Model(format!(
                    "packet {} uses the {} model in a {} buffer",
                    packet.id,
                    packet.deadline.model(),
                    model
                )));
            }
        }
        if self.contains(packet.id) {
            return Err(Error::Model(format!("duplicate packet id {}", packet.id)));
        }
        let at = self
            .packets
            .partition_point(|q| q.cmp_deadline(&packet) == Ordering::Less);
        self.packets.insert(at, packet);
        Ok(())
    }

    pub fn remove(&mut self, id: PacketId) -> Result<Packet> {
        match self.position(id) {
            Some(i) => Ok(self.packets.remove(i)),
            None => Err(Error::NotPending(id)),
        }
    }

    pub fn get(&self, id: PacketId) -> Option<&Packet> {
        self.position(id).map(|i| &self.packets[i])
    }

    pub fn contains(&self, id: PacketId) -> bool {
        self.position(id).is_some()
    }

    fn position(&self, id: PacketId) -> Option<usize> {
        self.packets.iter().position(|p| p.id == id)
    }

    pub fn len(&self) -> usize {
        self.packets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.packets.is_empty()
    }

    /// Packets in deadline order.
    pub fn packets(&self) -> &[Packet] {
        &self.packets
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Packet> {
        self.packets.iter()
    }

    /// Heaviest pending packet; among equal weights the earliest in deadline order.
    pub fn heaviest(&self) -> Option<&Packet> {
        let mut best: Option<&Packet> = None;
        for p in &self.packets {
            if best.is_none_or(|b| p.weight > b.weight) {
                best = Some(p);
            }
        }
        best
    }

    /// Earliest pending packet in deadline order.
    pub fn earliest(&self) -> Option<&Packet> {
        self.packets.first()
    }

    /// Packets `j` with no pending `k` such that `w_k > w_j` and `k ⊲ j`,
    /// i.e. the legal choices of a greedy adversary. Returned in deadline order.
    pub fn pareto_frontier(&self) -> Vec<Packet> {
        let mut prefix_max = f64::NEG_INFINITY;
        let mut out = Vec::new();
        for p in &self.packets {
            if p.weight >= prefix_max {
                out.push(*p);
            }
            prefix_max = prefix_max.max(p.weight);
        }
        out
    }

    pub fn on_frontier(&self, id: PacketId) -> bool {
        let Some(i) = self.position(id) else {
            return false;
        };
        let w = self.packets[i].weight;
        self.packets[..i].iter().all(|k| k.weight <= w)
    }

    /// Numeric model: drop every packet whose deadline is `<= step`.
    pub fn expire_through(&mut self, step: u64) {
        self.packets.retain(|p| match p.deadline {
            DeadlineKey::Numeric(d) => d > step,
            DeadlineKey::Ordinal(_) => true,
        });
    }

    /// Drop the first `count` packets in deadline order.
    pub fn expire_prefix(&mut self, count: usize) -> Result<()> {
        if count > self.packets.len() {
            return Err(Error::trace(format!(
                "expire_prefix {} exceeds buffer size {}",
                count,
                self.packets.len()
            )));
        }
        self.packets.drain(..count);
        Ok(())
    }

    pub fn total_weight(&self) -> f64 {
        self.packets.iter().map(|p| p.weight).sum()
    }

    /// Stable content hash: SHA-256 over (id, weight bits, deadline) in deadline order, hex, truncated to 16 bytes.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for p in &self.packets {
            h.update(p.id.0.to_le_bytes());
            h.update(p.weight.to_bits().to_le_bytes());
            h.update([match p.deadline.model() {
                DeadlineModel::Numeric => 0u8,
                DeadlineModel::Ordinal => 1u8,
            }]);
            h.update(p.deadline.value().to_le_bytes());
        }
        h.finalize()[..16]
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

/// One step of the lifecycle: insert `event.arrivals`, remove `transmitted`,
/// then expire (numeric: deadline `<= event.step`; ordinal: the first
/// `event.expire_prefix` packets of what remains).
pub fn apply_step(
    buffer: &BufferState,
    event: &StepEvent,
    transmitted: &[PacketId],
) -> Result<BufferState> {
    let mut next = buffer.clone();
    for p in &event.arrivals {
        if let DeadlineKey::Numeric(d) = p.deadline {
            if d < event.step {
                return Err(Error::trace(format!(
                    "packet {} arrives at step {} after its deadline {}",
                    p.id, event.step, d
                )));
            }
        }
        next.insert(*p)?;
    }
    for id in transmitted {
        next.remove(*id)?;
    }
    match next.model() {
        Some(DeadlineModel::Numeric) => {
            if event.expire_prefix.is_some() {
                return Err(Error::trace(
                    "expire_prefix is only valid in the ordinal model",
                ));
            }
            next.expire_through(event.step);
        }
        Some(DeadlineModel::Ordinal) => next.expire_prefix(event.expire_prefix.unwrap_or(0))?,
        None => {
            if event.expire_prefix.unwrap_or(0) > 0 {
                next.expire_prefix(event.expire_prefix.unwrap_or(0))?;
            }
        }
    }
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn num(id: u64, w: f64, d: u64) -> Packet {
        Packet::numeric(id, w, d, 0).unwrap()
    }

    fn ord(id: u64, w: f64, r: u64) -> Packet {
        Packet::ordinal(id, w, r, 0).unwrap()
    }

    #[test]
    fn lhd_examples() {
        assert!(lhd(&num(0, 1.0, 1), &num(1, 1.0, 3)).unwrap());
        assert!(!lhd(&num(5, 1.0, 2), &num(3, 1.0, 2)).unwrap());
        assert!(lhd(&num(3, 1.0, 2), &num(5, 1.0, 2)).unwrap());
        let a = num(4, 2.0, 7);
        assert!(!lhd(&a, &a).unwrap());
        assert!(unlhd(&a, &a).unwrap());
    }

    #[test]
    fn mixed_models_do_not_compare() {
        assert!(matches!(
            lhd(&num(0, 1.0, 1), &ord(1, 1.0, 1)),
            Err(Error::Model(_))
        ));
        let mut b = BufferState::from_packets([num(0, 1.0, 1)]).unwrap();
        assert!(b.insert(ord(1, 1.0, 1)).is_err());
    }

    #[test]
    fn rejects_bad_packets() {
        assert!(Packet::numeric(0, 0.0, 1, 0).is_err());
        assert!(Packet::numeric(0, -1.0, 1, 0).is_err());
        assert!(Packet::numeric(0, f64::NAN, 1, 0).is_err());
        assert!(Packet::numeric(0, 1.0, 2, 3).is_err());
        assert!(Packet::numeric(0, 1.0, 3, 3).is_ok());
        let mut b = BufferState::from_packets([num(0, 1.0, 1)]).unwrap();
        assert!(b.insert(num(0, 2.0, 5)).is_err());
    }

    #[test]
    fn heaviest_examples() {
        let b = BufferState::from_packets([num(0, 1.0, 1)]).unwrap();
        assert_eq!(b.heaviest().unwrap().id, PacketId(0));
        let b = BufferState::from_packets([num(0, 0.5, 1), num(1, 1.0, 2)]).unwrap();
        assert_eq!(b.heaviest().unwrap().id, PacketId(1));
        let b = BufferState::from_packets([num(2, 1.0, 4), num(7, 1.0, 1)]).unwrap();
        assert_eq!(b.heaviest().unwrap().id, PacketId(7));
        assert!(BufferState::new().heaviest().is_none());
    }

    #[test]
    fn frontier_examples() {
        let b = BufferState::from_packets([num(0, 1.0, 1)]).unwrap();
        assert_eq!(b.pareto_frontier().len(), 1);

        let b = BufferState::from_packets([num(0, 0.5, 1), num(1, 1.0, 2)]).unwrap();
        let ids: Vec<_> = b.pareto_frontier().iter().map(|p| p.id.0).collect();
        assert_eq!(ids, vec![0, 1]);

        let b = BufferState::from_packets([num(0, 1.0, 1), num(1, 0.5, 2)]).unwrap();
        let ids: Vec<_> = b.pareto_frontier().iter().map(|p| p.id.0).collect();
        assert_eq!(ids, vec![0]);
        assert!(b.on_frontier(PacketId(0)));
        assert!(!b.on_frontier(PacketId(1)));

        assert!(BufferState::new().pareto_frontier().is_empty());
    }

    #[test]
    fn apply_step_numeric_expiry() {
        let b = BufferState::from_packets([
            Packet::numeric(0, 1.0, 1, 1).unwrap(),
            Packet::numeric(1, 2.0, 3, 1).unwrap(),
        ])
        .unwrap();
        let ev = StepEvent::new(1, vec![]);
        let next = apply_step(&b, &ev, &[]).unwrap();
        let ids: Vec<_> = next.iter().map(|p| p.id.0).collect();
        assert_eq!(ids, vec![1]);
    }

    #[test]
    fn apply_step_ordinal_prefix() {
        let b =
            BufferState::from_packets([ord(0, 1.0, 1), ord(1, 1.0, 2), ord(2, 1.0, 3)]).unwrap();
        let mut ev = StepEvent::new(4, vec![]);
        ev.expire_prefix = Some(0);
        let next = apply_step(&b, &ev, &[PacketId(1)]).unwrap();
        assert_eq!(next.len(), 2);

        ev.expire_prefix = Some(2);
        let next = apply_step(&b, &ev, &[]).unwrap();
        let ids: Vec<_> = next.iter().map(|p| p.id.0).collect();
        assert_eq!(ids, vec![2]);

        ev.expire_prefix = Some(4);
        assert!(matches!(apply_step(&b, &ev, &[]), Err(Error::Trace { .. })));
    }

    #[test]
    fn apply_step_rejects_unknown_transmission() {
        let b = BufferState::from_packets([num(0, 1.0, 5)]).unwrap();
        let ev = StepEvent::new(1, vec![]);
        assert!(matches!(
            apply_step(&b, &ev, &[PacketId(9)]),
            Err(Error::NotPending(PacketId(9)))
        ));
    }

    #[test]
    fn digest_ignores_insertion_order() {
        let a = BufferState::from_packets([num(0, 0.5, 1), num(1, 1.0, 2)]).unwrap();
        let b = BufferState::from_packets([num(1, 1.0, 2), num(0, 0.5, 1)]).unwrap();
        assert_eq!(a.digest(), b.digest());
        let c = BufferState::from_packets([num(1, 1.0, 2), num(0, 0.25, 1)]).unwrap();
        assert_ne!(a.digest(), c.digest());
    }
}
