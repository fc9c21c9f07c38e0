//! Digital-twin replica and the controller loop: mirrors node-reported
//! observables, runs the per-node scorers each interval, and turns the
//! results into charging-queue updates and MCV dispatches.

use std::collections::{BTreeSet, VecDeque};

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{McvId, NetworkConfig, NodeId, Point, ScenarioConfig, Weights};
use crate::detect::{
    charging_efficiency, combined_score, detect, efficiency_score, energy_score,
    request_pattern_score, reputation_score, EstimatorState, InteractionOutcome, ReputationChain,
    ScoreVector,
};
use crate::sim::{ControlDirective, Mcv, McvMode, NodeObservable, SensorNode};
use crate::trace::{QueueEntry, TraceEvent};

/// A request as the twin sees it; the residual claim may be forged.
#[derive(Debug, Clone, Copy)]
pub struct PendingView {
    pub issued_at: f64,
    pub reported_at_issue: f64,
}

/// Mirrored record of one sensor node.
#[derive(Debug, Clone)]
pub struct TwinNode {
    pub id: NodeId,
    pub position: Point,
    pub alive: bool,
    /// Latest value from the periodic report stream.
    pub reported_residual: f64,
    pub pending: Option<PendingView>,
    pub estimator: EstimatorState,
    pub score: ScoreVector,
    pub flagged: bool,
    flag_run: u32,
    sticky: bool,
    request_clocks: VecDeque<f64>,
    received_events: VecDeque<(f64, f64)>,
    residual_history: VecDeque<(f64, f64)>,
    fresh_etas: Vec<f64>,
    session_ended: bool,
    ended_unchecked: bool,
    neighbor_count: u32,
}

/// Controller-side replica of the network.
#[derive(Debug, Clone)]
pub struct TwinState {
    pub clock: f64,
    pub sync_latency: f64,
    pub nodes: Vec<TwinNode>,
    params: crate::config::DetectorParams,
    e_th: f64,
    rechargeable: f64,
    window: f64,
    window_ticks: usize,
    chain: Option<ReputationChain>,
    chain_rng: ChaCha8Rng,
}

/// Reprioritized service order plus the excluded (flagged) set.
#[derive(Debug, Clone)]
pub struct QueueUpdate {
    pub ordered: Vec<QueueEntry>,
    pub excluded: Vec<(NodeId, String)>,
    pub issued_clock: f64,
}

impl QueueUpdate {
    pub fn to_directive(&self) -> ControlDirective {
        ControlDirective {
            ordered: self.ordered.iter().map(|e| e.node).collect(),
            excluded: self.excluded.iter().map(|(n, _)| *n).collect(),
        }
    }

    pub fn to_trace_event(&self) -> TraceEvent {
        TraceEvent::QueueUpdate {
            ordered: self.ordered.clone(),
            excluded: self.excluded.iter().map(|(n, _)| *n).collect(),
        }
    }
}

impl TwinState {
    /// Builds the replica from the initial observable snapshot. Neighbor
    /// counts come from positions and the communication range.
    pub fn new(config: &ScenarioConfig, observables: &[NodeObservable]) -> Self {
        let params = config.detector.clone();
        let net = &config.network;
        let interval = params.controller_interval;
        let window_ticks = (params.obs_window / interval).round().max(1.0) as usize;
        let window = window_ticks as f64 * interval;

        let mut nodes: Vec<TwinNode> = observables
            .iter()
            .map(|o| TwinNode {
                id: o.id,
                position: o.position,
                alive: o.alive,
                reported_residual: o.residual,
                pending: None,
                estimator: EstimatorState::new(&params),
                score: ScoreVector::default(),
                flagged: false,
                flag_run: 0,
                sticky: false,
                request_clocks: VecDeque::new(),
                received_events: VecDeque::new(),
                residual_history: VecDeque::from([(0.0, o.residual)]),
                fresh_etas: Vec::new(),
                session_ended: false,
                ended_unchecked: false,
                neighbor_count: 0,
            })
            .collect();

        for i in 0..nodes.len() {
            let mut count = 0;
            for j in 0..nodes.len() {
                if i != j && nodes[i].position.distance(&nodes[j].position) <= net.comm_range {
                    count += 1;
                }
            }
            nodes[i].neighbor_count = count;
        }

        let chain = params.chain_enabled.then(|| {
            ReputationChain::uniform_mixing(
                params.chain_levels as usize,
                0.2,
                nodes.len(),
                params.chain_blend,
            )
        });

        Self {
            clock: 0.0,
            sync_latency: config.controller.sync_latency,
            nodes,
            params,
            e_th: net.energy_threshold(),
            rechargeable: net.node_capacity - net.energy_threshold(),
            window,
            window_ticks,
            chain,
            chain_rng: ChaCha8Rng::seed_from_u64(net.rng_seed ^ 0x517C_C1B7_2722_0A95),
        }
    }

    pub fn flagged_set(&self) -> BTreeSet<NodeId> {
        self.nodes
            .iter()
            .filter(|n| n.flagged)
            .map(|n| n.id)
            .collect()
    }
}

/// Mirrors the physical plane into the twin: request and session events in
/// clock order, then the periodic report snapshot. Syncing the same clock
/// twice with no new events is a no-op.
pub fn sync_twin(
    twin: &mut TwinState,
    clock: f64,
    events: &[(f64, TraceEvent)],
    snapshot: &[NodeObservable],
) {
    assert!(
        clock + 1e-9 >= twin.clock,
        "twin time runs forward only: {} -> {clock}",
        twin.clock
    );

    for (t, event) in events {
        match event {
            TraceEvent::Request {
                node,
                reported_residual,
                ..
            } => {
                let n = &mut twin.nodes[node.0 as usize];
                n.request_clocks.push_back(*t);
                if n.pending.is_none() {
                    n.pending = Some(PendingView {
                        issued_at: *t,
                        reported_at_issue: *reported_residual,
                    });
                }
            }
            TraceEvent::Transfer { node, received, .. } => {
                let n = &mut twin.nodes[node.0 as usize];
                n.received_events.push_back((*t, *received));
            }
            TraceEvent::SessionEnd {
                node,
                sent,
                received,
                ..
            } => {
                let n = &mut twin.nodes[node.0 as usize];
                if let Some(eta) = charging_efficiency(*received, *sent) {
                    n.fresh_etas.push(eta);
                }
                n.session_ended = true;
                n.ended_unchecked = true;
            }
            TraceEvent::Death { node } => {
                let n = &mut twin.nodes[node.0 as usize];
                n.alive = false;
                n.pending = None;
            }
            _ => {}
        }
    }

    for o in snapshot {
        let n = &mut twin.nodes[o.id.0 as usize];
        n.alive = o.alive;
        n.reported_residual = o.residual;
        match n.residual_history.back() {
            Some((t, _)) if (*t - clock).abs() < 1e-9 => {
                *n.residual_history.back_mut().unwrap() = (clock, o.residual);
            }
            _ => n.residual_history.push_back((clock, o.residual)),
        }
        while n.residual_history.len() > twin.window_ticks + 1 {
            n.residual_history.pop_front();
        }
        // A served node that climbed back over the threshold is no longer
        // waiting; partial sessions below E_th stay pending.
        if n.ended_unchecked {
            n.ended_unchecked = false;
            if o.residual >= twin.e_th {
                n.pending = None;
            }
        }
        // Window is half-open (clock - window, clock]: a transfer stamped
        // exactly at the window start is already inside that boundary
        // snapshot, so it gets pruned.
        let horizon = clock - twin.window + 1e-9;
        while n.request_clocks.front().is_some_and(|t| *t <= horizon) {
            n.request_clocks.pop_front();
        }
        while n.received_events.front().is_some_and(|(t, _)| *t <= horizon) {
            n.received_events.pop_front();
        }
    }

    twin.clock = clock;
}

/// One controller interval: score every alive node with fresh observations,
/// update estimators and reputations, and emit the queue update. Returns the
/// update plus per-node score trace events.
pub fn controller_tick(
    twin: &mut TwinState,
    weights: &Weights,
    theta: f64,
) -> (QueueUpdate, Vec<TraceEvent>) {
    let clock = twin.clock;
    let mode = twin.params.score_mode;
    let event_th = twin.params.event_threshold;
    let mut score_events = Vec::new();

    for idx in 0..twin.nodes.len() {
        let window_start = clock - twin.window;
        let (full_window, start_residual) = {
            let n = &twin.nodes[idx];
            match n.residual_history.front() {
                Some((t, v)) if (*t - window_start).abs() < 1e-6 => (true, *v),
                _ => (false, 0.0),
            }
        };
        if !twin.nodes[idx].alive || !full_window {
            twin.nodes[idx].fresh_etas.clear();
            twin.nodes[idx].session_ended = false;
            continue;
        }

        let count = twin.nodes[idx].request_clocks.len() as u64;
        let received: f64 = twin.nodes[idx]
            .received_events
            .iter()
            .map(|(_, r)| *r)
            .sum();
        let consumption = start_residual - twin.nodes[idx].reported_residual + received;

        if !twin.nodes[idx].estimator.warmed_up() {
            let rechargeable = twin.rechargeable;
            let n = &mut twin.nodes[idx];
            n.estimator.observe_warmup(consumption);
            if n.estimator.warmed_up() {
                let prior = n.estimator.energy_mean / rechargeable;
                n.estimator.seed_lambda_prior(prior);
                n.estimator.seed_eta_prior();
            }
            n.fresh_etas.clear();
            n.session_ended = false;
            continue;
        }

        // Score against the baselines as they stood entering this tick.
        let est = &twin.nodes[idx].estimator;
        let m_request = request_pattern_score(count, est.lambda_hat, mode);
        let m_energy = energy_score(consumption, est.energy_mean, est.energy_var, mode);
        let m_efficiency = est
            .last_eta
            .map(|eta| efficiency_score(eta, est.eta_mean, est.eta_var, mode))
            .unwrap_or(0.0);
        let reputation_level = est.reputation_estimate();
        let r_source = match twin.chain.as_mut() {
            Some(chain) => chain.transition_node(idx, reputation_level, &mut twin.chain_rng),
            None => reputation_level,
        };
        let (alpha, beta) = (est.alpha, est.beta);
        let m_reputation = reputation_score(r_source, alpha, beta, mode);
        let combined = combined_score(m_request, m_energy, m_reputation, m_efficiency, weights);
        let instant_flag = detect(combined, theta);

        let fresh_eta_scores: Vec<(f64, f64)> = twin.nodes[idx]
            .fresh_etas
            .iter()
            .map(|eta| {
                (
                    *eta,
                    efficiency_score(*eta, est.eta_mean, est.eta_var, mode),
                )
            })
            .collect();

        let n = &mut twin.nodes[idx];
        if twin.params.sticky_flag_runs > 0 {
            n.flag_run = if instant_flag { n.flag_run + 1 } else { 0 };
            if n.flag_run >= twin.params.sticky_flag_runs {
                n.sticky = true;
            }
        }
        n.flagged = instant_flag || n.sticky;
        n.score = ScoreVector {
            m_request,
            m_energy,
            m_reputation,
            m_efficiency,
            combined,
            flagged: n.flagged,
        };

        // Interaction verdict for the Beta update: any fresh observation
        // crossing the per-event threshold counts as anomalous.
        let fresh_eta_anomalous = fresh_eta_scores.iter().any(|(_, s)| *s > event_th);
        let anomalous = m_request > event_th || m_energy > event_th || fresh_eta_anomalous;
        let outcome = if anomalous {
            InteractionOutcome::Anomalous
        } else {
            InteractionOutcome::Consistent
        };
        n.estimator.record_outcome(outcome);
        // Neighbor feedback: one extra outcome per window when somebody in
        // communication range could watch the charge session.
        if n.session_ended && n.neighbor_count > 0 {
            n.estimator.record_outcome(outcome);
        }

        // Gated rolling baseline updates.
        n.estimator.push_rate(count as f64, m_request > event_th);
        n.estimator.push_energy(consumption, m_energy > event_th);
        for (eta, s) in &fresh_eta_scores {
            n.estimator.push_eta(*eta, *s > event_th);
        }
        n.fresh_etas.clear();
        n.session_ended = false;

        score_events.push(TraceEvent::Score {
            node: n.id,
            m_request,
            m_energy,
            m_reputation,
            m_efficiency,
            combined,
            flagged: n.flagged,
        });
    }

    // Queue: unflagged pending requesters ordered by reported residual,
    // ties broken by earlier issue, then lower id.
    let mut entries: Vec<QueueEntry> = twin
        .nodes
        .iter()
        .filter(|n| n.alive && !n.flagged)
        .filter_map(|n| {
            n.pending.map(|p| QueueEntry {
                node: n.id,
                reported_residual: n.reported_residual,
                issued_at: p.issued_at,
            })
        })
        .collect();
    entries.sort_by(|a, b| {
        a.reported_residual
            .partial_cmp(&b.reported_residual)
            .unwrap()
            .then(a.issued_at.partial_cmp(&b.issued_at).unwrap())
            .then(a.node.cmp(&b.node))
    });

    let excluded: Vec<(NodeId, String)> = twin
        .nodes
        .iter()
        .filter(|n| n.flagged)
        .map(|n| {
            (
                n.id,
                format!("flagged m={:.4}", n.score.combined),
            )
        })
        .collect();

    (
        QueueUpdate {
            ordered: entries,
            excluded,
            issued_clock: clock,
        },
        score_events,
    )
}

/// Greedy assignment over an explicit queue order: each request goes to the
/// nearest available MCV whose charge covers travel, a full recharge, and
/// the trip back to the depot. MCVs already working keep their targets.
pub fn dispatch_mcvs(
    update: &QueueUpdate,
    mcvs: &mut [Mcv],
    nodes: &[SensorNode],
    net: &NetworkConfig,
) -> Vec<(McvId, NodeId)> {
    let depot = net.depot();
    let excluded: BTreeSet<NodeId> = update.excluded.iter().map(|(n, _)| *n).collect();
    let mut busy: BTreeSet<NodeId> = mcvs.iter().filter_map(|v| v.mode.target()).collect();
    let mut assignments = Vec::new();

    for entry in &update.ordered {
        let node_id = entry.node;
        if excluded.contains(&node_id) || busy.contains(&node_id) {
            continue;
        }
        let node = &nodes[node_id.0 as usize];
        if !node.alive {
            continue;
        }
        let needed_after_arrival =
            node.capacity + node.position.distance(&depot) * net.travel_cost + net.mcv_reserve_floor();
        let mut best: Option<(f64, usize)> = None;
        for (idx, mcv) in mcvs.iter().enumerate() {
            if !matches!(mcv.mode, McvMode::Idle | McvMode::Roaming { .. }) {
                continue;
            }
            let d = mcv.position.distance(&node.position);
            if mcv.residual < d * net.travel_cost + needed_after_arrival {
                continue;
            }
            match best {
                Some((bd, _)) if bd <= d => {}
                _ => best = Some((d, idx)),
            }
        }
        if let Some((_, idx)) = best {
            mcvs[idx].mode = McvMode::Dispatched { target: node_id };
            busy.insert(node_id);
            assignments.push((mcvs[idx].id, node_id));
        }
    }
    assignments
}

/// Session details returned when an MCV is pulled off a flagged target.
#[derive(Debug, Clone, Copy)]
pub struct RevokedSession {
    pub mcv: McvId,
    pub node: NodeId,
    pub partial_sent: f64,
    pub partial_received: f64,
}

/// Aborts any MCV whose current target is excluded; partial transfers are
/// reported so the caller can keep the efficiency accounting intact.
pub fn revoke_flagged(excluded: &BTreeSet<NodeId>, mcvs: &mut [Mcv]) -> Vec<RevokedSession> {
    let mut revoked = Vec::new();
    for mcv in mcvs.iter_mut() {
        if let Some(target) = mcv.mode.target() {
            if excluded.contains(&target) {
                let (sent, received) = match mcv.mode {
                    McvMode::Charging { sent, received, .. } => (sent, received),
                    _ => (0.0, 0.0),
                };
                revoked.push(RevokedSession {
                    mcv: mcv.id,
                    node: target,
                    partial_sent: sent,
                    partial_received: received,
                });
                mcv.mode = McvMode::Idle;
            }
        }
    }
    revoked
}
