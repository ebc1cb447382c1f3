//! Traces: per-step arrivals plus (ordinal model) prefix-expiration events,
//! and their line-delimited JSON encoding.
//!
//! ```text
//! {"model":"numeric"}
//! {"step":0,"arrivals":[{"id":0,"w":0.5,"d":1}]}
//! {"step":1,"arrivals":[]}
//! ```

use std::collections::{BTreeSet, HashMap, HashSet};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{BufferState, DeadlineKey, DeadlineModel, Packet, PacketId};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct StepEvent {
    pub step: u64,
    pub arrivals: Vec<Packet>,
    /// Ordinal model only.
    pub expire_prefix: Option<usize>,
}

impl StepEvent {
    pub fn new(step: u64, arrivals: Vec<Packet>) -> Self {
        StepEvent {
            step,
            arrivals,
            expire_prefix: None,
        }
    }
}

/// A replayable instance.
///
/// In ordinal traces `expire_prefix = m` at step `t` expires the `m`
/// earliest packets among those that have arrived and not yet expired,
/// counting packets a scheduler may already have transmitted. This keeps the
/// instance independent of the schedule run on it; for any particular
/// schedule the packets that leave its buffer still form a prefix of that
/// buffer. The last event marks the horizon; anything left then expires.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub model: DeadlineModel,
    pub events: Vec<StepEvent>,
}

impl Trace {
    pub fn new(model: DeadlineModel, events: Vec<StepEvent>) -> Result<Self> {
        let t = Trace { model, events };
        t.validate()?;
        Ok(t)
    }

    pub fn empty(model: DeadlineModel) -> Self {
        Trace {
            model,
            events: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut ids = HashSet::new();
        let mut last_step = None;
        for ev in &self.events {
            if last_step.is_some_and(|s| ev.step <= s) {
                return Err(Error::trace(format!(
                    "event steps must be strictly increasing, got {} after {}",
                    ev.step,
                    last_step.unwrap()
                )));
            }
            last_step = Some(ev.step);
            if ev.expire_prefix.is_some() && self.model == DeadlineModel::Numeric {
                return Err(Error::trace(format!(
                    "step {}: expire_prefix in a numeric trace",
                    ev.step
                )));
            }
            for p in &ev.arrivals {
                p.validate()?;
                if p.deadline.model() != self.model {
                    return Err(Error::trace(format!(
                        "packet {} does not use the {} model",
                        p.id, self.model
                    )));
                }
                if p.arrival_step != ev.step {
                    return Err(Error::trace(format!(
                        "packet {} records arrival {} inside step {}",
                        p.id, p.arrival_step, ev.step
                    )));
                }
                if !ids.insert(p.id) {
                    return Err(Error::trace(format!("duplicate packet id {}", p.id)));
                }
            }
        }
        if self.model == DeadlineModel::Ordinal {
            ordinal_expiry_steps(self)?;
        }
        Ok(())
    }

    pub fn packets(&self) -> impl Iterator<Item = &Packet> {
        self.events.iter().flat_map(|e| e.arrivals.iter())
    }

    pub fn packet_count(&self) -> usize {
        self.events.iter().map(|e| e.arrivals.len()).sum()
    }

    pub fn first_step(&self) -> Option<u64> {
        self.events.first().map(|e| e.step)
    }

    /// Last step in which any packet can still be transmitted.
    pub fn horizon(&self) -> Option<u64> {
        let last = self.events.last()?.step;
        Some(match self.model {
            DeadlineModel::Numeric => self
                .packets()
                .map(|p| p.deadline.value())
                .fold(last, u64::max),
            DeadlineModel::Ordinal => last,
        })
    }

    pub fn event_at(&self, step: u64) -> Option<&StepEvent> {
        self.events
            .binary_search_by_key(&step, |e| e.step)
            .ok()
            .map(|i| &self.events[i])
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = Vec::new();
        write_trace(self, &mut out).expect("writing to a Vec cannot fail");
        String::from_utf8(out).expect("serde_json emits UTF-8")
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        read_trace(text.as_bytes())
    }
}

/// For an ordinal trace, the step at which each packet expires.
pub fn ordinal_expiry_steps(trace: &Trace) -> Result<HashMap<PacketId, u64>> {
    if trace.model != DeadlineModel::Ordinal {
        return Err(Error::trace("expected an ordinal trace"));
    }
    let mut live: BTreeSet<(u64, PacketId)> = BTreeSet::new();
    let mut expiry = HashMap::with_capacity(trace.packet_count());
    for ev in &trace.events {
        for p in &ev.arrivals {
            live.insert((p.deadline.value(), p.id));
        }
        let m = ev.expire_prefix.unwrap_or(0);
        if m > live.len() {
            return Err(Error::trace(format!(
                "step {}: expire_prefix {} exceeds the {} live packets",
                ev.step,
                m,
                live.len()
            )));
        }
        for _ in 0..m {
            let (_, id) = live.pop_first().expect("checked above");
            expiry.insert(id, ev.step);
        }
    }
    if let Some(last) = trace.events.last() {
        for (_, id) in live {
            expiry.insert(id, last.step);
        }
    }
    Ok(expiry)
}

/// Step-by-step driver shared by the simulator and the adversary harness.
pub struct Replay<'a> {
    trace: &'a Trace,
    ordinal_expiry: Option<HashMap<PacketId, u64>>,
}

impl<'a> Replay<'a> {
    pub fn new(trace: &'a Trace) -> Result<Self> {
        let ordinal_expiry = match trace.model {
            DeadlineModel::Numeric => None,
            DeadlineModel::Ordinal => Some(ordinal_expiry_steps(trace)?),
        };
        Ok(Replay {
            trace,
            ordinal_expiry,
        })
    }

    /// Steps to simulate, in order. Empty for an empty trace.
    pub fn steps(&self) -> std::ops::RangeInclusive<u64> {
        match (self.trace.first_step(), self.trace.horizon()) {
            (Some(a), Some(b)) => a..=b,
            #[allow(clippy::reversed_empty_ranges)]
            _ => 1..=0,
        }
    }

    pub fn arrivals(&self, step: u64) -> &'a [Packet] {
        self.trace
            .event_at(step)
            .map(|e| e.arrivals.as_slice())
            .unwrap_or(&[])
    }

    /// Expiration phase of `step` applied to a buffer that already lost this step's transmissions.
    pub fn expire(&self, buffer: &mut BufferState, step: u64) -> Result<()> {
        match &self.ordinal_expiry {
            None => {
                buffer.expire_through(step);
                Ok(())
            }
            Some(expiry) => {
                let count = buffer
                    .iter()
                    .filter(|p| expiry.get(&p.id).is_some_and(|&s| s <= step))
                    .count();
                let prefix_ok = buffer.packets()[..count]
                    .iter()
                    .all(|p| expiry.get(&p.id).is_some_and(|&s| s <= step));
                if !prefix_ok {
                    return Err(Error::trace(format!(
                        "step {step}: expiring packets are not a prefix of the buffer"
                    )));
                }
                buffer.expire_prefix(count)
            }
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    model: DeadlineModel,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WirePacket {
    id: u64,
    w: f64,
    d: u64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireEvent {
    step: u64,
    arrivals: Vec<WirePacket>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    expire_prefix: Option<usize>,
}

pub fn write_trace(trace: &Trace, mut out: impl Write) -> Result<()> {
    serde_json::to_writer(&mut out, &Header { model: trace.model })?;
    out.write_all(b"\n")?;
    for ev in &trace.events {
        let wire = WireEvent {
            step: ev.step,
            arrivals: ev
                .arrivals
                .iter()
                .map(|p| WirePacket {
                    id: p.id.0,
                    w: p.weight,
                    d: p.deadline.value(),
                })
                .collect(),
            expire_prefix: ev.expire_prefix,
        };
        serde_json::to_writer(&mut out, &wire)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Parses the JSONL trace format. Errors carry the offending line number.
pub fn read_trace(input: impl BufRead) -> Result<Trace> {
    let mut model = None;
    let mut events: Vec<StepEvent> = Vec::new();
    let mut ids = HashSet::new();
    for (idx, line) in input.lines().enumerate() {
        let lineno = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let Some(model) = model else {
            let h: Header = serde_json::from_str(&line)
                .map_err(|e| Error::at_line(lineno, format!("bad header: {e}")))?;
            model = Some(h.model);
            continue;
        };
        let w: WireEvent =
            serde_json::from_str(&line).map_err(|e| Error::at_line(lineno, e.to_string()))?;
        if events.last().is_some_and(|e| e.step >= w.step) {
            return Err(Error::at_line(
                lineno,
                "event steps must be strictly increasing",
            ));
        }
        if w.expire_prefix.is_some() && model == DeadlineModel::Numeric {
            return Err(Error::at_line(lineno, "expire_prefix in a numeric trace"));
        }
        let mut arrivals = Vec::with_capacity(w.arrivals.len());
        for wp in w.arrivals {
            let p = Packet::new(wp.id, wp.w, DeadlineKey::with_model(model, wp.d), w.step)
                .map_err(|e| Error::at_line(lineno, e.to_string()))?;
            if !ids.insert(p.id) {
                return Err(Error::at_line(
                    lineno,
                    format!("duplicate packet id {}", p.id),
                ));
            }
            arrivals.push(p);
        }
        events.push(StepEvent {
            step: w.step,
            arrivals,
            expire_prefix: w.expire_prefix,
        });
    }
    let model = model.ok_or_else(|| Error::at_line(1, "missing header line"))?;
    Trace::new(model, events)
}
