//! Scenario orchestration: the simulation/controller loop, the sweep grid
//! runner, and threshold calibration over labeled runs.

use std::collections::VecDeque;
use std::path::Path;

use rayon::prelude::*;
use thiserror::Error;

use crate::attack::{assign_malicious_nodes, GroundTruth};
use crate::config::{
    validate_config, AttackSpec, AttackTier, ConfigError, ScenarioConfig,
};
use crate::detect::{calibrate_threshold, CalibrationReport};
use crate::metrics::{plot_tables, summarize_run, PlotTable, ScenarioResult};
use crate::sim::{advance_step, initialize_network, SimulationState};
use crate::trace::{TraceEvent, TraceLog, TraceMeta};
use crate::twin::{controller_tick, sync_twin, TwinState};

/// A finished run: the full record stream plus the ground truth that only
/// the metrics layer may consume.
#[derive(Debug)]
pub struct ScenarioOutcome {
    pub trace: TraceLog,
    pub ground_truth: GroundTruth,
    pub final_state: SimulationState,
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("sweep file: {0}")]
    Sweep(String),
    #[error("calibration needs at least one labeled trace")]
    EmptyCalibration,
    #[error("cannot write {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

/// Mixes the scenario master seed into the attack stream so sweep seeds vary
/// the adversary draw while (config, seed) stays fully reproducible.
fn effective_attack_spec(config: &ScenarioConfig) -> AttackSpec {
    let mut spec = config.attack.clone();
    spec.rng_seed ^= config
        .network
        .rng_seed
        .wrapping_mul(0x9E37_79B9_7F4A_7C15);
    spec
}

fn tier_label(config: &ScenarioConfig) -> String {
    if config.attack.intensity_fraction == 0.0 || config.attack.tier == AttackTier::None {
        "none".to_string()
    } else {
        config.attack.tier.label().to_string()
    }
}

/// Runs one scenario end to end: initialization, the fixed-step loop, and
/// the controller cadence when enabled.
pub fn run_scenario(config: &ScenarioConfig) -> Result<ScenarioOutcome, ScenarioError> {
    let report = validate_config(config);
    if !report.is_ok() {
        return Err(ConfigError::Invalid(report).into());
    }

    let mut cfg = config.clone();
    cfg.attack = effective_attack_spec(config);
    let net = cfg.network.clone();

    let assignment = assign_malicious_nodes(net.node_count, &cfg.attack);
    let ground_truth = assignment.ground_truth.clone();
    let mut state = initialize_network(&cfg, &assignment);

    let mut trace = TraceLog::new(TraceMeta {
        seed: net.rng_seed,
        node_count: net.node_count,
        mcv_count: net.mcv_count,
        tier: tier_label(config),
        controller: cfg.controller.enabled,
        time_step: net.time_step,
        horizon: net.horizon,
    });
    for w in &assignment.warnings {
        trace.push_event(0, TraceEvent::Warning { message: w.clone() });
    }
    trace.push_step(state.summarize());

    let steps = net.step_count();
    let interval_steps = (cfg.detector.controller_interval / net.time_step)
        .round()
        .max(1.0) as u64;

    let mut twin = cfg
        .controller
        .enabled
        .then(|| TwinState::new(&cfg, &state.observables()));
    let mut directive = None;
    let mut event_buffer: Vec<(f64, TraceEvent)> = Vec::new();
    // Sync inputs held back to model twin staleness; drained once their
    // clock falls behind `now - sync_latency`.
    let mut sync_queue: VecDeque<(f64, Vec<crate::sim::NodeObservable>, Vec<(f64, TraceEvent)>)> =
        VecDeque::new();

    for step in 1..=steps {
        let events = advance_step(&mut state, &net, directive.take().as_ref());
        let clock = state.clock();
        for e in &events {
            trace.push_event(step, e.clone());
        }
        if twin.is_some() {
            event_buffer.extend(events.into_iter().map(|e| (clock, e)));
        }
        trace.push_step(state.summarize());

        if let Some(twin) = twin.as_mut() {
            if step % interval_steps == 0 {
                sync_queue.push_back((
                    clock,
                    state.observables(),
                    std::mem::take(&mut event_buffer),
                ));
                while sync_queue
                    .front()
                    .is_some_and(|(t, _, _)| *t <= clock - cfg.controller.sync_latency + 1e-9)
                {
                    let (t, snapshot, events) = sync_queue.pop_front().unwrap();
                    sync_twin(twin, t, &events, &snapshot);
                }
                let (update, score_events) =
                    controller_tick(twin, &cfg.weights, cfg.detector.theta_doc);
                for e in score_events {
                    trace.push_event(step, e);
                }
                trace.push_event(step, update.to_trace_event());
                directive = Some(update.to_directive());
            }
        }
    }

    Ok(ScenarioOutcome {
        trace,
        ground_truth,
        final_state: state,
    })
}

/// Convenience wrapper: run and summarize in one call.
pub fn run_and_summarize(config: &ScenarioConfig) -> Result<ScenarioResult, ScenarioError> {
    let outcome = run_scenario(config)?;
    Ok(summarize_run(
        &outcome.trace,
        &outcome.ground_truth,
        config.network.rng_seed,
    ))
}

// ---------------------------------------------------------------------------
// Sweeps
// ---------------------------------------------------------------------------

/// Grid description for a paper-style sweep.
#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub base: ScenarioConfig,
    pub node_counts: Vec<u32>,
    pub tiers: Vec<AttackTier>,
    pub seeds: u32,
    pub controllers: Vec<bool>,
    /// MCV fleet scaling: mcv_count = ceil(node_count / scale); 0 keeps the
    /// base config's fleet size.
    pub mcv_scale: u32,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            base: ScenarioConfig::default(),
            node_counts: vec![100, 200, 300, 400, 500],
            tiers: vec![AttackTier::Lai, AttackTier::Mai, AttackTier::Hai],
            seeds: 5,
            controllers: vec![true],
            mcv_scale: 40,
        }
    }
}

fn parse_tier(value: &str) -> Result<AttackTier, ScenarioError> {
    match value.trim().to_ascii_lowercase().as_str() {
        "none" => Ok(AttackTier::None),
        "lai" => Ok(AttackTier::Lai),
        "mai" => Ok(AttackTier::Mai),
        "hai" => Ok(AttackTier::Hai),
        "custom" => Ok(AttackTier::Custom),
        other => Err(ScenarioError::Sweep(format!("unknown tier `{other}`"))),
    }
}

/// Parses a sweep file: `sweep_*` keys drive the grid, every other line is
/// ordinary scenario configuration for the base config.
pub fn parse_sweep_str(text: &str) -> Result<SweepSpec, ScenarioError> {
    let mut spec = SweepSpec::default();
    let mut base_lines = String::new();
    for raw in text.lines() {
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            base_lines.push_str(line);
            base_lines.push('\n');
            continue;
        };
        let key = key.trim();
        let value = value.trim();
        match key {
            "sweep_node_counts" => {
                spec.node_counts = value
                    .split(',')
                    .map(|v| {
                        v.trim()
                            .parse::<u32>()
                            .map_err(|e| ScenarioError::Sweep(format!("node count: {e}")))
                    })
                    .collect::<Result<_, _>>()?;
            }
            "sweep_tiers" => {
                spec.tiers = value
                    .split(',')
                    .map(parse_tier)
                    .collect::<Result<_, _>>()?;
            }
            "sweep_seeds" => {
                spec.seeds = value
                    .parse::<u32>()
                    .map_err(|e| ScenarioError::Sweep(format!("seeds: {e}")))?;
            }
            "sweep_controller" => {
                spec.controllers = match value.to_ascii_lowercase().as_str() {
                    "on" => vec![true],
                    "off" => vec![false],
                    "both" => vec![true, false],
                    other => {
                        return Err(ScenarioError::Sweep(format!(
                            "sweep_controller expects on|off|both, got `{other}`"
                        )))
                    }
                };
            }
            "sweep_mcv_scale" => {
                spec.mcv_scale = value
                    .parse::<u32>()
                    .map_err(|e| ScenarioError::Sweep(format!("mcv scale: {e}")))?;
            }
            _ => {
                base_lines.push_str(line);
                base_lines.push('\n');
            }
        }
    }
    spec.base = crate::config::parse_config_str(&base_lines)?;
    Ok(spec)
}

/// The concrete per-cell configs, in deterministic grid order. Seeds
/// enumerate as `base_seed + scenario_index`.
pub fn sweep_cells(spec: &SweepSpec) -> Vec<ScenarioConfig> {
    let mut cells = Vec::new();
    let mut index = 0u64;
    for &count in &spec.node_counts {
        for &tier in &spec.tiers {
            for &controller in &spec.controllers {
                for _ in 0..spec.seeds {
                    let mut cfg = spec.base.clone();
                    cfg.network.node_count = count;
                    if spec.mcv_scale > 0 {
                        cfg.network.mcv_count =
                            ((count + spec.mcv_scale - 1) / spec.mcv_scale).max(1);
                    }
                    let mut attack = AttackSpec::for_tier(tier);
                    attack.active_from = spec.base.attack.active_from;
                    attack.baseline_request_rate = spec.base.attack.baseline_request_rate;
                    attack.rng_seed = spec.base.attack.rng_seed;
                    cfg.attack = attack;
                    cfg.controller.enabled = controller;
                    cfg.network.rng_seed = spec.base.network.rng_seed.wrapping_add(index);
                    cells.push(cfg);
                    index += 1;
                }
            }
        }
    }
    cells
}

/// Full sweep output: per-scenario rows plus per-figure aggregate tables.
#[derive(Debug)]
pub struct SweepOutput {
    pub results: Vec<ScenarioResult>,
    pub tables: Vec<PlotTable>,
}

/// Runs the whole grid with bounded parallelism. Aggregation is
/// order-independent; the row order is the deterministic grid order.
pub fn run_sweep(spec: &SweepSpec, parallelism: usize) -> Result<SweepOutput, ScenarioError> {
    let cells = sweep_cells(spec);
    for cell in &cells {
        let report = validate_config(cell);
        if !report.is_ok() {
            return Err(ConfigError::Invalid(report).into());
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .map_err(|e| ScenarioError::Sweep(format!("thread pool: {e}")))?;
    let results: Result<Vec<ScenarioResult>, ScenarioError> = pool.install(|| {
        cells
            .par_iter()
            .map(run_and_summarize)
            .collect::<Result<Vec<_>, _>>()
    });
    let results = results?;
    let tables = plot_tables(&results);
    Ok(SweepOutput { results, tables })
}

/// Writes `results.csv` and one `plot_<metric>.csv` per figure into
/// `out_dir`.
pub fn write_sweep_outputs(output: &SweepOutput, out_dir: &Path) -> Result<(), ScenarioError> {
    std::fs::create_dir_all(out_dir).map_err(|source| ScenarioError::Io {
        path: out_dir.display().to_string(),
        source,
    })?;
    let results_path = out_dir.join("results.csv");
    crate::metrics::export_results(&output.results, &results_path).map_err(|source| {
        ScenarioError::Io {
            path: results_path.display().to_string(),
            source,
        }
    })?;
    for table in &output.tables {
        let path = out_dir.join(format!("plot_{}.csv", table.metric));
        std::fs::write(&path, table.render()).map_err(|source| ScenarioError::Io {
            path: path.display().to_string(),
            source,
        })?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Calibration
// ---------------------------------------------------------------------------

/// Calibration run summary: the chosen threshold plus the labeled score
/// pools it was derived from.
#[derive(Debug, Clone)]
pub struct CalibrationOutcome {
    pub report: CalibrationReport,
    pub honest_scores: Vec<f64>,
    pub malicious_scores: Vec<f64>,
    pub seeds_used: u32,
}

/// Per-node maximum combined score over all controller ticks.
pub fn per_node_max_scores(trace: &TraceLog) -> std::collections::BTreeMap<u32, f64> {
    let mut maxima = std::collections::BTreeMap::new();
    for (_, event) in trace.events() {
        if let TraceEvent::Score { node, combined, .. } = event {
            let entry = maxima.entry(node.0).or_insert(0.0f64);
            *entry = entry.max(*combined);
        }
    }
    maxima
}

/// Runs `seeds` labeled scenarios at the config's tier, pools per-node score
/// maxima by ground-truth label, and picks the smallest threshold meeting
/// the false-positive target.
pub fn calibrate(
    config: &ScenarioConfig,
    target_fpr: f64,
    seeds: u32,
) -> Result<CalibrationOutcome, ScenarioError> {
    if seeds == 0 {
        return Err(ScenarioError::EmptyCalibration);
    }
    let mut honest = Vec::new();
    let mut malicious = Vec::new();
    for s in 0..seeds {
        let mut cfg = config.clone();
        cfg.controller.enabled = true;
        cfg.network.rng_seed = config.network.rng_seed.wrapping_add(s as u64);
        let outcome = run_scenario(&cfg)?;
        let maxima = per_node_max_scores(&outcome.trace);
        for (node, score) in maxima {
            if outcome.ground_truth.contains(&crate::config::NodeId(node)) {
                malicious.push(score);
            } else {
                honest.push(score);
            }
        }
    }
    if honest.is_empty() && malicious.is_empty() {
        return Err(ScenarioError::EmptyCalibration);
    }
    let report = calibrate_threshold(&honest, &malicious, target_fpr);
    Ok(CalibrationOutcome {
        report,
        honest_scores: honest,
        malicious_scores: malicious,
        seeds_used: seeds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn horizon_zero_yields_initial_snapshot_only() {
        let mut config = ScenarioConfig::default();
        config.network.horizon = 0.0;
        config.network.node_count = 5;
        config.network.mcv_count = 1;
        let outcome = run_scenario(&config).unwrap();
        assert_eq!(outcome.trace.steps().count(), 1);
        assert_eq!(outcome.trace.steps().next().unwrap().clock, 0.0);
    }

    #[test]
    fn identical_runs_hash_identically() {
        let mut config = ScenarioConfig::default();
        config.network.node_count = 20;
        config.network.mcv_count = 2;
        config.network.horizon = 400.0;
        let a = run_scenario(&config).unwrap();
        let b = run_scenario(&config).unwrap();
        assert_eq!(a.trace.hash_hex(), b.trace.hash_hex());

        config.network.rng_seed += 1;
        let c = run_scenario(&config).unwrap();
        assert_ne!(a.trace.hash_hex(), c.trace.hash_hex());
    }

    #[test]
    fn sweep_grid_enumerates_the_cross_product() {
        let spec = SweepSpec {
            seeds: 5,
            ..SweepSpec::default()
        };
        let cells = sweep_cells(&spec);
        assert_eq!(cells.len(), 5 * 3 * 1 * 5);
        // Seeds advance with the scenario index.
        assert_eq!(cells[0].network.rng_seed, spec.base.network.rng_seed);
        assert_eq!(cells[1].network.rng_seed, spec.base.network.rng_seed + 1);
        // Fleet scaling: ceil(r / 40).
        assert_eq!(cells[0].network.mcv_count, 3);
        assert_eq!(cells.last().unwrap().network.mcv_count, 13);
    }

    #[test]
    fn sweep_parse_round_trip() {
        let text = "\
sweep_node_counts = 100, 200
sweep_tiers = LAI, HAI
sweep_seeds = 2
sweep_controller = both
sweep_mcv_scale = 50
horizon = 500
node_consumption_rate = 2e-4
";
        let spec = parse_sweep_str(text).unwrap();
        assert_eq!(spec.node_counts, vec![100, 200]);
        assert_eq!(spec.tiers, vec![AttackTier::Lai, AttackTier::Hai]);
        assert_eq!(spec.seeds, 2);
        assert_eq!(spec.controllers, vec![true, false]);
        assert_eq!(spec.base.network.horizon, 500.0);
        assert_eq!(sweep_cells(&spec).len(), 2 * 2 * 2 * 2);
    }

    #[test]
    fn single_cell_sweep_equals_run_scenario() {
        let mut base = ScenarioConfig::default();
        base.network.horizon = 300.0;
        base.network.node_count = 30;
        let spec = SweepSpec {
            base: base.clone(),
            node_counts: vec![30],
            tiers: vec![AttackTier::Mai],
            seeds: 1,
            controllers: vec![true],
            mcv_scale: 0,
        };
        let sweep = run_sweep(&spec, 1).unwrap();
        assert_eq!(sweep.results.len(), 1);

        let mut cfg = base;
        cfg.attack = AttackSpec::for_tier(AttackTier::Mai);
        let single = run_and_summarize(&cfg).unwrap();
        assert_eq!(sweep.results[0].trace_hash, single.trace_hash);
    }

    #[test]
    fn calibrate_rejects_empty_sets() {
        let config = ScenarioConfig::default();
        assert!(matches!(
            calibrate(&config, 0.05, 0),
            Err(ScenarioError::EmptyCalibration)
        ));
    }
}
