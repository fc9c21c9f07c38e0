//! Evaluation metrics over a finished trace: energy usage efficiency,
//! survival rate, detection rate / false positives, and MCV travel distance,
//! plus the tabular result and plot-data exports.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use crate::attack::GroundTruth;
use crate::config::NodeId;
use crate::trace::{TraceEvent, TraceLog};

/// Metrics of one scenario run.
#[derive(Debug, Clone)]
pub struct ScenarioResult {
    pub node_count: u32,
    pub tier: String,
    pub seed: u64,
    pub controller: bool,
    /// Percent; `None` when no energy was drawn from the depot.
    pub energy_usage_efficiency: Option<f64>,
    /// Percent of nodes alive at the horizon.
    pub survival_rate: f64,
    /// Percent of malicious nodes flagged at least once; `None` without
    /// malicious nodes.
    pub detection_rate: Option<f64>,
    /// Percent of honest nodes ever flagged.
    pub false_positive_rate: f64,
    /// Total meters across the fleet.
    pub travel_distance: f64,
    pub trace_hash: String,
}

/// 100 * received / depot-drawn; `None` sentinel when nothing was drawn.
pub fn energy_usage_efficiency(trace: &TraceLog) -> Option<f64> {
    let last = trace.last_step()?;
    if last.depot_drawn <= 0.0 {
        return None;
    }
    Some(100.0 * last.total_received / last.depot_drawn)
}

/// Percent of nodes alive at simulated time `at`.
pub fn survival_rate(trace: &TraceLog, at: f64) -> f64 {
    let total = trace.meta.node_count.max(1) as f64;
    let mut alive = trace.meta.node_count;
    for s in trace.steps() {
        if s.clock > at {
            break;
        }
        alive = s.alive;
    }
    100.0 * alive as f64 / total
}

/// Node ids flagged at least once anywhere in the trace.
pub fn flagged_nodes(trace: &TraceLog) -> BTreeSet<NodeId> {
    trace
        .events()
        .filter_map(|(_, e)| match e {
            TraceEvent::Score {
                node,
                flagged: true,
                ..
            } => Some(*node),
            _ => None,
        })
        .collect()
}

/// Node-level detection and false-positive rates in percent. A node counts
/// as detected when flagged at any controller tick.
pub fn detection_rate(trace: &TraceLog, ground_truth: &GroundTruth) -> (Option<f64>, f64) {
    let flagged = flagged_nodes(trace);
    let malicious = ground_truth.len();
    let honest = trace.meta.node_count as usize - malicious;

    let true_positives = flagged.intersection(ground_truth).count();
    let false_positives = flagged.difference(ground_truth).count();

    let detection = if malicious == 0 {
        None
    } else {
        Some(100.0 * true_positives as f64 / malicious as f64)
    };
    let fpr = if honest == 0 {
        0.0
    } else {
        100.0 * false_positives as f64 / honest as f64
    };
    (detection, fpr)
}

/// Total fleet travel, meters, from the final odometers.
pub fn travel_distance(trace: &TraceLog) -> f64 {
    trace
        .last_step()
        .map(|s| s.mcvs.iter().map(|v| v.odometer).sum())
        .unwrap_or(0.0)
}

/// Builds the full result record for one run.
pub fn summarize_run(
    trace: &TraceLog,
    ground_truth: &GroundTruth,
    seed: u64,
) -> ScenarioResult {
    let (detection, fpr) = detection_rate(trace, ground_truth);
    ScenarioResult {
        node_count: trace.meta.node_count,
        tier: trace.meta.tier.clone(),
        seed,
        controller: trace.meta.controller,
        energy_usage_efficiency: energy_usage_efficiency(trace),
        survival_rate: survival_rate(trace, trace.meta.horizon),
        detection_rate: detection,
        false_positive_rate: fpr,
        travel_distance: travel_distance(trace),
        trace_hash: trace.hash_hex(),
    }
}

fn opt_cell(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x}"),
        None => "undefined".to_string(),
    }
}

pub const RESULTS_HEADER: &str = "node_count,tier,seed,controller,energy_usage_efficiency,survival_rate,detection_rate,false_positive_rate,travel_distance_m,trace_hash";

/// Renders the comma-separated results table, one row per scenario, stable
/// column order.
pub fn render_results(results: &[ScenarioResult]) -> String {
    let mut out = String::new();
    out.push_str(RESULTS_HEADER);
    out.push('\n');
    for r in results {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.node_count,
            r.tier,
            r.seed,
            if r.controller { "on" } else { "off" },
            opt_cell(r.energy_usage_efficiency),
            r.survival_rate,
            opt_cell(r.detection_rate),
            r.false_positive_rate,
            r.travel_distance,
            r.trace_hash
        );
    }
    out
}

/// Writes the results table to `path`.
pub fn export_results(results: &[ScenarioResult], path: &Path) -> std::io::Result<()> {
    std::fs::write(path, render_results(results))
}

/// One plot-data table: x = node count, one column of per-cell means per
/// intensity tier.
#[derive(Debug, Clone)]
pub struct PlotTable {
    pub metric: String,
    pub tiers: Vec<String>,
    /// (node_count, per-tier mean or None)
    pub rows: Vec<(u32, Vec<Option<f64>>)>,
}

impl PlotTable {
    pub fn render(&self) -> String {
        let mut out = String::from("node_count");
        for t in &self.tiers {
            let _ = write!(out, ",{t}");
        }
        out.push('\n');
        for (count, cells) in &self.rows {
            let _ = write!(out, "{count}");
            for c in cells {
                let _ = write!(out, ",{}", opt_cell(*c));
            }
            out.push('\n');
        }
        out
    }
}

/// Per-figure plot tables (controller-on rows only): energy usage
/// efficiency, survival rate, detection rate, travel distance.
pub fn plot_tables(results: &[ScenarioResult]) -> Vec<PlotTable> {
    let mut tiers: Vec<String> = Vec::new();
    let mut counts: Vec<u32> = Vec::new();
    for r in results.iter().filter(|r| r.controller) {
        if !tiers.contains(&r.tier) {
            tiers.push(r.tier.clone());
        }
        if !counts.contains(&r.node_count) {
            counts.push(r.node_count);
        }
    }
    counts.sort_unstable();

    let metric_defs: [(&str, fn(&ScenarioResult) -> Option<f64>); 4] = [
        ("energy_usage_efficiency", |r| r.energy_usage_efficiency),
        ("survival_rate", |r| Some(r.survival_rate)),
        ("detection_rate", |r| r.detection_rate),
        ("travel_distance_m", |r| Some(r.travel_distance)),
    ];

    metric_defs
        .iter()
        .map(|(name, extract)| {
            let rows = counts
                .iter()
                .map(|count| {
                    let cells = tiers
                        .iter()
                        .map(|tier| {
                            let values: Vec<f64> = results
                                .iter()
                                .filter(|r| {
                                    r.controller && r.node_count == *count && &r.tier == tier
                                })
                                .filter_map(extract)
                                .collect();
                            if values.is_empty() {
                                None
                            } else {
                                Some(values.iter().sum::<f64>() / values.len() as f64)
                            }
                        })
                        .collect();
                    (*count, cells)
                })
                .collect();
            PlotTable {
                metric: name.to_string(),
                tiers: tiers.clone(),
                rows,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::McvId;
    use crate::trace::{McvModeTag, McvSnapshot, StepSummary, TraceMeta};

    fn mcv_snap(odometer: f64) -> McvSnapshot {
        McvSnapshot {
            id: McvId(0),
            x: 0.0,
            y: 0.0,
            residual: 100.0,
            moved: 0.0,
            odometer,
            mode: McvModeTag::Idle,
        }
    }

    fn step(step: u64, clock: f64, alive: u32, received: f64, drawn: f64, odo: f64) -> StepSummary {
        StepSummary {
            step,
            clock,
            alive,
            queue_len: 0,
            node_residual_sum: 0.0,
            total_drained: 0.0,
            total_sent: received,
            total_received: received,
            depot_drawn: drawn,
            mcvs: vec![mcv_snap(odo)],
        }
    }

    fn trace_with(meta_nodes: u32, steps: Vec<StepSummary>) -> TraceLog {
        let mut t = TraceLog::new(TraceMeta {
            seed: 1,
            node_count: meta_nodes,
            mcv_count: 1,
            tier: "MAI".to_string(),
            controller: true,
            time_step: 1.0,
            horizon: 10.0,
        });
        for s in steps {
            t.push_step(s);
        }
        t
    }

    #[test]
    fn efficiency_ratio_and_sentinel() {
        let t = trace_with(10, vec![step(1, 1.0, 10, 400.0, 1000.0, 0.0)]);
        assert_eq!(energy_usage_efficiency(&t), Some(40.0));
        let t = trace_with(10, vec![step(1, 1.0, 10, 0.0, 0.0, 0.0)]);
        assert_eq!(energy_usage_efficiency(&t), None);
    }

    #[test]
    fn efficiency_matches_a_hand_summed_fixture() {
        // Three accounting events: two refills (60 + 40 J drawn) and 25 J
        // delivered overall -> 25%.
        let t = trace_with(
            5,
            vec![
                step(1, 1.0, 5, 10.0, 60.0, 5.0),
                step(2, 2.0, 5, 20.0, 60.0, 9.0),
                step(3, 3.0, 5, 25.0, 100.0, 12.0),
            ],
        );
        assert_eq!(energy_usage_efficiency(&t), Some(25.0));
    }

    #[test]
    fn survival_examples() {
        let t = trace_with(
            500,
            vec![step(1, 1.0, 500, 0.0, 0.0, 0.0), step(2, 2.0, 450, 0.0, 0.0, 0.0)],
        );
        assert_eq!(survival_rate(&t, 0.0), 100.0);
        assert_eq!(survival_rate(&t, 2.0), 90.0);
        let t = trace_with(4, vec![step(1, 1.0, 0, 0.0, 0.0, 0.0)]);
        assert_eq!(survival_rate(&t, 1.0), 0.0);
    }

    #[test]
    fn survival_is_non_increasing() {
        let t = trace_with(
            100,
            (1..=50)
                .map(|i| step(i, i as f64, 100 - (i as u32 / 2), 0.0, 0.0, 0.0))
                .collect(),
        );
        let mut last = 101.0;
        for i in 0..50 {
            let s = survival_rate(&t, i as f64);
            assert!(s <= last + 1e-12);
            last = s;
        }
    }

    fn score_event(node: u32, flagged: bool) -> TraceEvent {
        TraceEvent::Score {
            node: NodeId(node),
            m_request: 0.0,
            m_energy: 0.0,
            m_reputation: 0.0,
            m_efficiency: 0.0,
            combined: if flagged { 0.9 } else { 0.1 },
            flagged,
        }
    }

    #[test]
    fn detection_counting_examples() {
        let mut t = trace_with(100, vec![step(1, 1.0, 100, 0.0, 0.0, 0.0)]);
        let truth: GroundTruth = (0..10).map(NodeId).collect();
        // 9 of 10 malicious flagged, no honest flagged.
        for id in 0..9 {
            t.push_event(1, score_event(id, true));
        }
        t.push_event(1, score_event(50, false));
        let (det, fpr) = detection_rate(&t, &truth);
        assert_eq!(det, Some(90.0));
        assert_eq!(fpr, 0.0);

        // Nobody flagged.
        let t2 = trace_with(100, vec![step(1, 1.0, 100, 0.0, 0.0, 0.0)]);
        let (det, fpr) = detection_rate(&t2, &truth);
        assert_eq!(det, Some(0.0));
        assert_eq!(fpr, 0.0);

        // Degenerate detector: everyone flagged, 40 of 100 malicious.
        let mut t3 = trace_with(100, vec![step(1, 1.0, 100, 0.0, 0.0, 0.0)]);
        for id in 0..100 {
            t3.push_event(1, score_event(id, true));
        }
        let truth40: GroundTruth = (0..40).map(NodeId).collect();
        let (det, fpr) = detection_rate(&t3, &truth40);
        assert_eq!(det, Some(100.0));
        assert_eq!(fpr, 100.0);

        // No malicious nodes: detection undefined, fpr still counted.
        let (det, fpr) = detection_rate(&t3, &GroundTruth::new());
        assert_eq!(det, None);
        assert_eq!(fpr, 100.0);
    }

    #[test]
    fn travel_examples() {
        let t = trace_with(10, vec![step(1, 1.0, 10, 0.0, 0.0, 0.0)]);
        assert_eq!(travel_distance(&t), 0.0);
        // Straight 100 m out and back.
        let t = trace_with(10, vec![step(1, 1.0, 10, 0.0, 0.0, 200.0)]);
        assert_eq!(travel_distance(&t), 200.0);
    }

    #[test]
    fn export_is_deterministic_and_ordered() {
        let results = vec![
            ScenarioResult {
                node_count: 100,
                tier: "LAI".to_string(),
                seed: 1,
                controller: true,
                energy_usage_efficiency: Some(1.25),
                survival_rate: 99.0,
                detection_rate: Some(100.0),
                false_positive_rate: 0.0,
                travel_distance: 1234.5,
                trace_hash: "abc".to_string(),
            },
            ScenarioResult {
                node_count: 200,
                tier: "MAI".to_string(),
                seed: 2,
                controller: false,
                energy_usage_efficiency: None,
                survival_rate: 87.5,
                detection_rate: None,
                false_positive_rate: 1.5,
                travel_distance: 2345.0,
                trace_hash: "def".to_string(),
            },
        ];
        let a = render_results(&results);
        let b = render_results(&results);
        assert_eq!(a, b);
        assert_eq!(a.lines().count(), 3);
        assert!(a.lines().next().unwrap().starts_with("node_count,tier"));
        assert!(a.contains("undefined"));

        // Empty result set still carries the header.
        assert_eq!(render_results(&[]).lines().count(), 1);
    }

    #[test]
    fn plot_tables_have_one_series_per_tier() {
        let mk = |count: u32, tier: &str, survival: f64| ScenarioResult {
            node_count: count,
            tier: tier.to_string(),
            seed: 0,
            controller: true,
            energy_usage_efficiency: Some(1.0),
            survival_rate: survival,
            detection_rate: Some(95.0),
            false_positive_rate: 0.0,
            travel_distance: 10.0 * count as f64,
            trace_hash: String::new(),
        };
        let results = vec![
            mk(100, "LAI", 99.0),
            mk(100, "LAI", 97.0),
            mk(100, "MAI", 95.0),
            mk(200, "LAI", 96.0),
            mk(200, "MAI", 93.0),
        ];
        let tables = plot_tables(&results);
        assert_eq!(tables.len(), 4);
        let survival = tables.iter().find(|t| t.metric == "survival_rate").unwrap();
        assert_eq!(survival.tiers, vec!["LAI".to_string(), "MAI".to_string()]);
        assert_eq!(survival.rows.len(), 2);
        // Mean of the two LAI seeds at r=100.
        assert_eq!(survival.rows[0].1[0], Some(98.0));
        let rendered = survival.render();
        assert!(rendered.starts_with("node_count,LAI,MAI\n"));
    }
}
