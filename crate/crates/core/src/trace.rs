//! Run records: every event and per-step summary a scenario produces, plus
//! the versioned line-delimited file format and a content hash.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::config::{McvId, NodeId};

pub const TRACE_VERSION: u32 = 1;

/// Scenario descriptors echoed at the top of every trace.
#[derive(Debug, Clone, Default)]
pub struct TraceMeta {
    pub seed: u64,
    pub node_count: u32,
    pub mcv_count: u32,
    pub tier: String,
    pub controller: bool,
    pub time_step: f64,
    pub horizon: f64,
}

/// MCV operating mode, as recorded in step summaries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum McvModeTag {
    Idle,
    Roaming,
    Dispatched,
    Charging,
    Returning,
}

impl McvModeTag {
    pub fn label(&self) -> &'static str {
        match self {
            McvModeTag::Idle => "idle",
            McvModeTag::Roaming => "roam",
            McvModeTag::Dispatched => "disp",
            McvModeTag::Charging => "chrg",
            McvModeTag::Returning => "ret",
        }
    }
}

/// Per-MCV slice of a step summary.
#[derive(Debug, Clone)]
pub struct McvSnapshot {
    pub id: McvId,
    pub x: f64,
    pub y: f64,
    pub residual: f64,
    /// Distance covered during this step, meters.
    pub moved: f64,
    /// Lifetime distance, meters.
    pub odometer: f64,
    pub mode: McvModeTag,
}

/// Aggregate state at one step boundary.
#[derive(Debug, Clone)]
pub struct StepSummary {
    pub step: u64,
    pub clock: f64,
    pub alive: u32,
    pub queue_len: u32,
    /// Sum of node residuals, joules.
    pub node_residual_sum: f64,
    /// Cumulative node drain since start, joules.
    pub total_drained: f64,
    /// Cumulative energy sent by MCVs, joules.
    pub total_sent: f64,
    /// Cumulative energy received by nodes, joules.
    pub total_received: f64,
    /// Cumulative depot refill energy, joules.
    pub depot_drawn: f64,
    pub mcvs: Vec<McvSnapshot>,
}

/// Everything that can happen during a run.
#[derive(Debug, Clone)]
pub enum TraceEvent {
    /// A charging request reached the sink. `queued` is false when the node
    /// already had a pending entry.
    Request {
        node: NodeId,
        reported_residual: f64,
        queued: bool,
    },
    Death {
        node: NodeId,
    },
    Dispatch {
        mcv: McvId,
        node: NodeId,
    },
    SessionStart {
        mcv: McvId,
        node: NodeId,
    },
    /// One step of energy transfer within a session.
    Transfer {
        mcv: McvId,
        node: NodeId,
        sent: f64,
        received: f64,
    },
    SessionEnd {
        mcv: McvId,
        node: NodeId,
        sent: f64,
        received: f64,
    },
    Refill {
        mcv: McvId,
        amount: f64,
    },
    /// A dispatched or charging MCV was pulled off a freshly excluded target.
    Revoke {
        mcv: McvId,
        node: NodeId,
    },
    /// Controller-issued queue reordering.
    QueueUpdate {
        ordered: Vec<QueueEntry>,
        excluded: Vec<NodeId>,
    },
    /// Detector snapshot for one node at one controller tick.
    Score {
        node: NodeId,
        m_request: f64,
        m_energy: f64,
        m_reputation: f64,
        m_efficiency: f64,
        combined: f64,
        flagged: bool,
    },
    Warning {
        message: String,
    },
}

/// One slot of a controller queue ordering.
#[derive(Debug, Clone)]
pub struct QueueEntry {
    pub node: NodeId,
    pub reported_residual: f64,
    pub issued_at: f64,
}

/// A trace record in chronological order.
#[derive(Debug, Clone)]
pub enum TraceRecord {
    Step(StepSummary),
    Event { step: u64, event: TraceEvent },
}

/// Complete record stream of one scenario run.
#[derive(Debug, Clone, Default)]
pub struct TraceLog {
    pub meta: TraceMeta,
    pub records: Vec<TraceRecord>,
}

impl TraceLog {
    pub fn new(meta: TraceMeta) -> Self {
        Self {
            meta,
            records: Vec::new(),
        }
    }

    pub fn push_event(&mut self, step: u64, event: TraceEvent) {
        self.records.push(TraceRecord::Event { step, event });
    }

    pub fn push_step(&mut self, summary: StepSummary) {
        self.records.push(TraceRecord::Step(summary));
    }

    pub fn events(&self) -> impl Iterator<Item = (u64, &TraceEvent)> {
        self.records.iter().filter_map(|r| match r {
            TraceRecord::Event { step, event } => Some((*step, event)),
            TraceRecord::Step(_) => None,
        })
    }

    pub fn steps(&self) -> impl Iterator<Item = &StepSummary> {
        self.records.iter().filter_map(|r| match r {
            TraceRecord::Step(s) => Some(s),
            TraceRecord::Event { .. } => None,
        })
    }

    pub fn last_step(&self) -> Option<&StepSummary> {
        self.steps().last()
    }

    /// Renders the versioned line-delimited format.
    pub fn serialize_to_string(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "wrsn-trace v{TRACE_VERSION}");
        let m = &self.meta;
        let _ = writeln!(
            out,
            "meta seed={} nodes={} mcvs={} tier={} controller={} dt={} horizon={}",
            m.seed,
            m.node_count,
            m.mcv_count,
            m.tier,
            if m.controller { "on" } else { "off" },
            m.time_step,
            m.horizon
        );
        for record in &self.records {
            match record {
                TraceRecord::Step(s) => {
                    let _ = write!(
                        out,
                        "step i={} t={} alive={} queue={} res_sum={} drained={} sent={} received={} drawn={}",
                        s.step,
                        s.clock,
                        s.alive,
                        s.queue_len,
                        s.node_residual_sum,
                        s.total_drained,
                        s.total_sent,
                        s.total_received,
                        s.depot_drawn
                    );
                    for v in &s.mcvs {
                        let _ = write!(
                            out,
                            " {}={},{},{},{},{},{}",
                            v.id,
                            v.x,
                            v.y,
                            v.residual,
                            v.moved,
                            v.odometer,
                            v.mode.label()
                        );
                    }
                    out.push('\n');
                }
                TraceRecord::Event { step, event } => {
                    let _ = write!(out, "event i={step} ");
                    match event {
                        TraceEvent::Request {
                            node,
                            reported_residual,
                            queued,
                        } => {
                            let _ = writeln!(
                                out,
                                "request node={node} reported={reported_residual} queued={queued}"
                            );
                        }
                        TraceEvent::Death { node } => {
                            let _ = writeln!(out, "death node={node}");
                        }
                        TraceEvent::Dispatch { mcv, node } => {
                            let _ = writeln!(out, "dispatch mcv={mcv} node={node}");
                        }
                        TraceEvent::SessionStart { mcv, node } => {
                            let _ = writeln!(out, "session_start mcv={mcv} node={node}");
                        }
                        TraceEvent::Transfer {
                            mcv,
                            node,
                            sent,
                            received,
                        } => {
                            let _ = writeln!(
                                out,
                                "transfer mcv={mcv} node={node} sent={sent} received={received}"
                            );
                        }
                        TraceEvent::SessionEnd {
                            mcv,
                            node,
                            sent,
                            received,
                        } => {
                            let _ = writeln!(
                                out,
                                "session_end mcv={mcv} node={node} sent={sent} received={received}"
                            );
                        }
                        TraceEvent::Refill { mcv, amount } => {
                            let _ = writeln!(out, "refill mcv={mcv} amount={amount}");
                        }
                        TraceEvent::Revoke { mcv, node } => {
                            let _ = writeln!(out, "revoke mcv={mcv} node={node}");
                        }
                        TraceEvent::QueueUpdate { ordered, excluded } => {
                            let _ = write!(out, "queue_update order=");
                            for (i, e) in ordered.iter().enumerate() {
                                if i > 0 {
                                    out.push(';');
                                }
                                let _ = write!(
                                    out,
                                    "{}:{}:{}",
                                    e.node, e.reported_residual, e.issued_at
                                );
                            }
                            let _ = write!(out, " excluded=");
                            for (i, n) in excluded.iter().enumerate() {
                                if i > 0 {
                                    out.push(';');
                                }
                                let _ = write!(out, "{n}");
                            }
                            out.push('\n');
                        }
                        TraceEvent::Score {
                            node,
                            m_request,
                            m_energy,
                            m_reputation,
                            m_efficiency,
                            combined,
                            flagged,
                        } => {
                            let _ = writeln!(
                                out,
                                "score node={node} mc={m_request} me={m_energy} mr={m_reputation} meta={m_efficiency} m={combined} flag={}",
                                u8::from(*flagged)
                            );
                        }
                        TraceEvent::Warning { message } => {
                            let _ = writeln!(out, "warning msg={message}");
                        }
                    }
                }
            }
        }
        out
    }

    /// SHA-256 over the serialized form, hex-encoded.
    pub fn hash_hex(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.serialize_to_string().as_bytes());
        let digest = hasher.finalize();
        let mut out = String::with_capacity(64);
        for byte in digest {
            let _ = write!(out, "{byte:02x}");
        }
        out
    }

    pub fn write_to(&self, path: &Path) -> std::io::Result<()> {
        let mut file = std::fs::File::create(path)?;
        file.write_all(self.serialize_to_string().as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_trace() -> TraceLog {
        let mut log = TraceLog::new(TraceMeta {
            seed: 9,
            node_count: 2,
            mcv_count: 1,
            tier: "none".to_string(),
            controller: true,
            time_step: 1.0,
            horizon: 2.0,
        });
        log.push_step(StepSummary {
            step: 0,
            clock: 0.0,
            alive: 2,
            queue_len: 0,
            node_residual_sum: 1.0,
            total_drained: 0.0,
            total_sent: 0.0,
            total_received: 0.0,
            depot_drawn: 0.0,
            mcvs: vec![McvSnapshot {
                id: McvId(0),
                x: 1.0,
                y: 2.0,
                residual: 10.0,
                moved: 0.0,
                odometer: 0.0,
                mode: McvModeTag::Idle,
            }],
        });
        log.push_event(
            1,
            TraceEvent::Request {
                node: NodeId(1),
                reported_residual: 0.149,
                queued: true,
            },
        );
        log
    }

    #[test]
    fn serialization_is_stable() {
        let a = sample_trace().serialize_to_string();
        let b = sample_trace().serialize_to_string();
        assert_eq!(a, b);
        assert!(a.starts_with("wrsn-trace v1\n"));
        assert!(a.contains("request node=n1 reported=0.149 queued=true"));
    }

    #[test]
    fn hash_tracks_content() {
        let base = sample_trace();
        let mut changed = sample_trace();
        changed.push_event(2, TraceEvent::Death { node: NodeId(0) });
        assert_eq!(base.hash_hex(), sample_trace().hash_hex());
        assert_ne!(base.hash_hex(), changed.hash_hex());
        assert_eq!(base.hash_hex().len(), 64);
    }
}
