//! Physical-plane engine: fixed-step node drain, charging-request emission,
//! MCV mobility (random waypoint when idle, straight-line when dispatched),
//! and energy transfer.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::attack::{
    apply_energy_anomaly, apply_request_flood, disruption_factor, AttackAssignment, AttackProfile,
};
use crate::config::{McvId, NetworkConfig, NodeId, Point, ScenarioConfig};
use crate::trace::{McvModeTag, McvSnapshot, StepSummary, TraceEvent};

/// Snap-to-full slack when deciding a battery is topped off.
const FULL_EPS: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct SensorNode {
    pub id: NodeId,
    pub position: Point,
    pub residual: f64,
    pub capacity: f64,
    /// This node's constant drain, joules/second (jitter already applied).
    pub consumption_rate: f64,
    pub alive: bool,
    pub pending_request: bool,
    pub attack: Option<AttackProfile>,
}

impl SensorNode {
    pub fn is_full(&self) -> bool {
        self.residual >= self.capacity - FULL_EPS
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum McvMode {
    Idle,
    Roaming { waypoint: Point, pause_left: f64 },
    Dispatched { target: NodeId },
    Charging { target: NodeId, sent: f64, received: f64 },
    Returning,
}

impl McvMode {
    pub fn tag(&self) -> McvModeTag {
        match self {
            McvMode::Idle => McvModeTag::Idle,
            McvMode::Roaming { .. } => McvModeTag::Roaming,
            McvMode::Dispatched { .. } => McvModeTag::Dispatched,
            McvMode::Charging { .. } => McvModeTag::Charging,
            McvMode::Returning => McvModeTag::Returning,
        }
    }

    pub fn target(&self) -> Option<NodeId> {
        match self {
            McvMode::Dispatched { target } | McvMode::Charging { target, .. } => Some(*target),
            _ => None,
        }
    }

    fn is_available(&self) -> bool {
        matches!(self, McvMode::Idle | McvMode::Roaming { .. })
    }
}

#[derive(Debug, Clone)]
pub struct Mcv {
    pub id: McvId,
    pub position: Point,
    pub residual: f64,
    pub mode: McvMode,
    pub odometer: f64,
    pub energy_sent_total: f64,
    /// Distance covered during the current step, for the step summary.
    pub moved_this_step: f64,
}

#[derive(Debug, Clone)]
pub struct ChargingRequest {
    pub node_id: NodeId,
    pub issued_at: f64,
    pub residual_at_issue: f64,
}

/// Running energy ledger for conservation checks and metrics.
#[derive(Debug, Clone, Copy, Default)]
pub struct EnergyTotals {
    pub drained: f64,
    pub sent: f64,
    pub received: f64,
    pub depot_drawn: f64,
}

/// Controller output as the engine consumes it: a service order plus the
/// currently excluded (flagged) nodes.
#[derive(Debug, Clone, Default)]
pub struct ControlDirective {
    pub ordered: Vec<NodeId>,
    pub excluded: BTreeSet<NodeId>,
}

#[derive(Debug, Clone)]
pub struct SimulationState {
    pub step: u64,
    pub time_step: f64,
    pub nodes: Vec<SensorNode>,
    pub mcvs: Vec<Mcv>,
    /// Outstanding request per node; at most one entry each.
    pub pending: BTreeMap<NodeId, ChargingRequest>,
    /// Service order over pending, excluded nodes filtered out.
    pub queue_order: VecDeque<NodeId>,
    in_queue: BTreeSet<NodeId>,
    /// Nodes currently barred from service by the controller.
    pub excluded: BTreeSet<NodeId>,
    pub depot: Point,
    pub totals: EnergyTotals,
    /// Fake-request emission rate baseline, requests/second.
    pub attack_baseline_rate: f64,
    rng: ChaCha8Rng,
    attack_rng: ChaCha8Rng,
}

impl SimulationState {
    pub fn clock(&self) -> f64 {
        self.step as f64 * self.time_step
    }

    pub fn alive_count(&self) -> u32 {
        self.nodes.iter().filter(|n| n.alive).count() as u32
    }

    pub fn node(&self, id: NodeId) -> &SensorNode {
        &self.nodes[id.0 as usize]
    }

    /// What the sink can see: per-node liveness and truthfully reported
    /// residuals. Attack profiles and ground truth stay behind.
    pub fn observables(&self) -> Vec<NodeObservable> {
        self.nodes
            .iter()
            .map(|n| NodeObservable {
                id: n.id,
                position: n.position,
                alive: n.alive,
                residual: n.residual,
            })
            .collect()
    }

    pub fn summarize(&self) -> StepSummary {
        StepSummary {
            step: self.step,
            clock: self.clock(),
            alive: self.alive_count(),
            queue_len: self.queue_order.len() as u32,
            node_residual_sum: self.nodes.iter().map(|n| n.residual).sum(),
            total_drained: self.totals.drained,
            total_sent: self.totals.sent,
            total_received: self.totals.received,
            depot_drawn: self.totals.depot_drawn,
            mcvs: self
                .mcvs
                .iter()
                .map(|v| McvSnapshot {
                    id: v.id,
                    x: v.position.x,
                    y: v.position.y,
                    residual: v.residual,
                    moved: v.moved_this_step,
                    odometer: v.odometer,
                    mode: v.mode.tag(),
                })
                .collect(),
        }
    }

    /// Step-boundary contract checks, used by tests and fuzzing.
    pub fn check_invariants(&self, net: &NetworkConfig) -> Result<(), String> {
        for n in &self.nodes {
            if n.residual < 0.0 || n.residual > n.capacity {
                return Err(format!(
                    "node {} residual {} outside [0, {}]",
                    n.id, n.residual, n.capacity
                ));
            }
            if !n.alive && n.residual != 0.0 {
                return Err(format!("dead node {} holds energy {}", n.id, n.residual));
            }
        }
        for v in &self.mcvs {
            if v.residual < 0.0 {
                return Err(format!("mcv {} residual {} negative", v.id, v.residual));
            }
            if v.residual > net.mcv_capacity {
                return Err(format!("mcv {} residual {} above capacity", v.id, v.residual));
            }
        }
        let mut seen = BTreeSet::new();
        for id in &self.queue_order {
            if !seen.insert(*id) {
                return Err(format!("node {id} queued twice"));
            }
            if !self.pending.contains_key(id) {
                return Err(format!("queued node {id} has no pending request"));
            }
        }
        Ok(())
    }
}

/// Per-node view the twin is allowed to mirror.
#[derive(Debug, Clone, Copy)]
pub struct NodeObservable {
    pub id: NodeId,
    pub position: Point,
    pub alive: bool,
    pub residual: f64,
}

// ---------------------------------------------------------------------------
// Initialization
// ---------------------------------------------------------------------------

/// Initial MCV position relative to the circle center (Eq.-style placement):
/// radius C_c/2 at angle pi*(2j-1)/m, j counted from 1.
pub fn mcv_initial_position(j: u32, m: u32, circumradius: f64) -> Point {
    assert!(j >= 1 && j <= m, "mcv index {j} outside 1..={m}");
    assert!(circumradius > 0.0);
    let angle = std::f64::consts::PI * (2.0 * j as f64 - 1.0) / m as f64;
    Point::new(
        circumradius / 2.0 * angle.cos(),
        circumradius / 2.0 * angle.sin(),
    )
}

/// Builds the starting state: seeded uniform node placement, full batteries,
/// MCVs on the placement circle around the central depot, empty queue.
pub fn initialize_network(config: &ScenarioConfig, attack: &AttackAssignment) -> SimulationState {
    let net = &config.network;
    let mut placement_rng = ChaCha8Rng::seed_from_u64(net.rng_seed);

    let mut nodes = Vec::with_capacity(net.node_count as usize);
    for i in 0..net.node_count {
        let x = placement_rng.gen_range(0.0..net.area_side);
        let y = placement_rng.gen_range(0.0..net.area_side);
        let u: f64 = placement_rng.gen();
        let rate = net.node_consumption_rate * (1.0 + net.consumption_jitter * (2.0 * u - 1.0));
        nodes.push(SensorNode {
            id: NodeId(i),
            position: Point::new(x, y),
            residual: net.node_capacity,
            capacity: net.node_capacity,
            consumption_rate: rate,
            alive: true,
            pending_request: false,
            attack: attack.profiles[i as usize].clone(),
        });
    }

    let depot = net.depot();
    let mut mcvs = Vec::with_capacity(net.mcv_count as usize);
    for j in 1..=net.mcv_count {
        let rel = mcv_initial_position(j, net.mcv_count, net.circumradius);
        let position = Point::new(
            (depot.x + rel.x).clamp(0.0, net.area_side),
            (depot.y + rel.y).clamp(0.0, net.area_side),
        );
        mcvs.push(Mcv {
            id: McvId(j - 1),
            position,
            residual: net.mcv_capacity,
            mode: McvMode::Idle,
            odometer: 0.0,
            energy_sent_total: 0.0,
            moved_this_step: 0.0,
        });
    }

    SimulationState {
        step: 0,
        time_step: net.time_step,
        nodes,
        mcvs,
        pending: BTreeMap::new(),
        queue_order: VecDeque::new(),
        in_queue: BTreeSet::new(),
        excluded: BTreeSet::new(),
        depot,
        totals: EnergyTotals::default(),
        attack_baseline_rate: config.attack.baseline_rate(net),
        rng: ChaCha8Rng::seed_from_u64(net.rng_seed ^ 0x9E37_79B9_7F4A_7C15),
        attack_rng: ChaCha8Rng::seed_from_u64(
            config.attack.rng_seed ^ net.rng_seed ^ 0xA5A5_5A5A_C3C3_3C3C,
        ),
    }
}

// ---------------------------------------------------------------------------
// Movement and charging primitives
// ---------------------------------------------------------------------------

/// Moves the MCV toward `destination` for one step: covers
/// `min(speed*dt, remaining)` meters, pays `travel_cost` per meter, and
/// lands exactly on the destination when it is within reach.
pub fn mcv_move(mcv: &mut Mcv, destination: Point, dt: f64, net: &NetworkConfig) -> f64 {
    let dist = mcv.position.distance(&destination);
    if dist == 0.0 {
        return 0.0;
    }
    let reach = net.mcv_speed * dt;
    let moved = if reach >= dist {
        mcv.position = destination;
        dist
    } else {
        let f = reach / dist;
        mcv.position = Point::new(
            mcv.position.x + (destination.x - mcv.position.x) * f,
            mcv.position.y + (destination.y - mcv.position.y) * f,
        );
        reach
    };
    mcv.odometer += moved;
    mcv.moved_this_step += moved;
    mcv.residual -= moved * net.travel_cost;
    debug_assert!(mcv.residual >= -1e-9, "mcv drained past empty");
    moved
}

/// One step of energy transfer. `disruption` is the node's received/sent
/// factor (1 for honest behavior). On the topping-off tick the sent amount
/// shrinks so the session-level received/sent ratio stays exactly at the
/// disruption factor.
pub fn charge_transfer(
    mcv: &mut Mcv,
    node: &mut SensorNode,
    dt: f64,
    net: &NetworkConfig,
    disruption: f64,
) -> (f64, f64) {
    if !node.alive {
        return (0.0, 0.0);
    }
    let sent_raw = (net.charging_rate * dt).min(mcv.residual.max(0.0));
    let received_raw = sent_raw * disruption;
    let headroom = node.capacity - node.residual;
    let (sent, received) = if received_raw >= headroom {
        (headroom / disruption, headroom)
    } else {
        (sent_raw, received_raw)
    };
    if received >= headroom {
        node.residual = node.capacity;
    } else {
        node.residual += received;
    }
    mcv.residual -= sent;
    mcv.energy_sent_total += sent;
    (sent, received)
}

/// Energy an MCV must hold to reach the depot from `from` and keep its
/// working floor.
fn return_reserve(from: Point, depot: Point, net: &NetworkConfig) -> f64 {
    from.distance(&depot) * net.travel_cost + net.mcv_reserve_floor()
}

// ---------------------------------------------------------------------------
// Step function
// ---------------------------------------------------------------------------

/// Greedy dispatch pass: walks the queue in order and hands each request to
/// the nearest available MCV whose charge covers travel there, a full
/// recharge, and the trip home. Requests with no eligible MCV stay queued.
fn assign_dispatches(
    state: &mut SimulationState,
    net: &NetworkConfig,
    events: &mut Vec<TraceEvent>,
) {
    let mut busy_targets: BTreeSet<NodeId> = state
        .mcvs
        .iter()
        .filter_map(|v| v.mode.target())
        .collect();

    let mut still_queued: VecDeque<NodeId> = VecDeque::with_capacity(state.queue_order.len());
    let queue: Vec<NodeId> = state.queue_order.drain(..).collect();
    for node_id in queue {
        let node = &state.nodes[node_id.0 as usize];
        if !node.alive
            || !state.pending.contains_key(&node_id)
            || state.excluded.contains(&node_id)
        {
            state.in_queue.remove(&node_id);
            continue;
        }
        if busy_targets.contains(&node_id) {
            state.in_queue.remove(&node_id);
            continue;
        }
        let target_pos = node.position;
        let needed_after_arrival =
            node.capacity + return_reserve(target_pos, state.depot, net);
        let mut best: Option<(f64, usize)> = None;
        for (idx, mcv) in state.mcvs.iter().enumerate() {
            if !mcv.mode.is_available() {
                continue;
            }
            let d = mcv.position.distance(&target_pos);
            if mcv.residual < d * net.travel_cost + needed_after_arrival {
                continue;
            }
            match best {
                Some((bd, _)) if bd <= d => {}
                _ => best = Some((d, idx)),
            }
        }
        match best {
            Some((_, idx)) => {
                state.mcvs[idx].mode = McvMode::Dispatched { target: node_id };
                busy_targets.insert(node_id);
                state.in_queue.remove(&node_id);
                events.push(TraceEvent::Dispatch {
                    mcv: state.mcvs[idx].id,
                    node: node_id,
                });
            }
            None => still_queued.push_back(node_id),
        }
    }
    state.queue_order = still_queued;
}

fn end_session(
    mcv: &mut Mcv,
    node_id: NodeId,
    sent: f64,
    received: f64,
    events: &mut Vec<TraceEvent>,
) {
    events.push(TraceEvent::SessionEnd {
        mcv: mcv.id,
        node: node_id,
        sent,
        received,
    });
    mcv.mode = McvMode::Idle;
}

/// Advances the simulation one step. Phase order: node drain, request
/// emission, queue/control update, MCV movement and charging, death marking.
pub fn advance_step(
    state: &mut SimulationState,
    net: &NetworkConfig,
    directive: Option<&ControlDirective>,
) -> Vec<TraceEvent> {
    let dt = state.time_step;
    state.step += 1;
    let clock = state.clock();
    let e_th = net.energy_threshold();
    let mut events = Vec::new();

    // (1) Drain.
    for node in &mut state.nodes {
        if !node.alive {
            continue;
        }
        let drain = apply_energy_anomaly(node.attack.as_ref(), node.consumption_rate, dt, clock);
        let actual = drain.min(node.residual);
        node.residual -= actual;
        state.totals.drained += actual;
    }

    // (2) Requests: honest threshold crossings, then adversarial floods.
    for i in 0..state.nodes.len() {
        let node = &state.nodes[i];
        if !node.alive {
            continue;
        }
        let id = node.id;
        if !node.pending_request && node.residual < e_th {
            let reported = node.residual;
            let queue_it = !state.excluded.contains(&id);
            state.nodes[i].pending_request = true;
            state.pending.insert(
                id,
                ChargingRequest {
                    node_id: id,
                    issued_at: clock,
                    residual_at_issue: reported,
                },
            );
            if queue_it {
                state.queue_order.push_back(id);
                state.in_queue.insert(id);
            }
            events.push(TraceEvent::Request {
                node: id,
                reported_residual: reported,
                queued: queue_it,
            });
        }
        if let Some(profile) = state.nodes[i].attack.clone() {
            if profile.active_at(clock) {
                let fakes = apply_request_flood(
                    &profile,
                    clock,
                    dt,
                    state.attack_baseline_rate,
                    e_th,
                    &mut state.attack_rng,
                );
                for forged in fakes {
                    let was_pending = state.nodes[i].pending_request;
                    let queue_it = !was_pending && !state.excluded.contains(&id);
                    if !was_pending {
                        state.nodes[i].pending_request = true;
                        state.pending.insert(
                            id,
                            ChargingRequest {
                                node_id: id,
                                issued_at: clock,
                                residual_at_issue: forged,
                            },
                        );
                    }
                    if queue_it {
                        state.queue_order.push_back(id);
                        state.in_queue.insert(id);
                    }
                    events.push(TraceEvent::Request {
                        node: id,
                        reported_residual: forged,
                        queued: queue_it,
                    });
                }
            }
        }
    }

    // (3) Queue control: apply the directive if one arrived, else FIFO holds.
    if let Some(d) = directive {
        state.excluded = d.excluded.clone();

        // Revoke MCVs working freshly excluded targets.
        for idx in 0..state.mcvs.len() {
            let target = state.mcvs[idx].mode.target();
            if let Some(t) = target {
                if state.excluded.contains(&t) {
                    events.push(TraceEvent::Revoke {
                        mcv: state.mcvs[idx].id,
                        node: t,
                    });
                    if let McvMode::Charging { sent, received, .. } = state.mcvs[idx].mode {
                        let mcv = &mut state.mcvs[idx];
                        end_session(mcv, t, sent, received, &mut events);
                    } else {
                        state.mcvs[idx].mode = McvMode::Idle;
                    }
                }
            }
        }

        // Rebuild the service order: directive first, then any pending
        // requests the controller has not seen yet, in prior FIFO order.
        let old_order: Vec<NodeId> = state.queue_order.drain(..).collect();
        state.in_queue.clear();
        let busy: BTreeSet<NodeId> = state.mcvs.iter().filter_map(|v| v.mode.target()).collect();
        for id in d.ordered.iter().copied() {
            if state.pending.contains_key(&id)
                && state.nodes[id.0 as usize].alive
                && !state.excluded.contains(&id)
                && !busy.contains(&id)
                && state.in_queue.insert(id)
            {
                state.queue_order.push_back(id);
            }
        }
        for id in old_order {
            if state.pending.contains_key(&id)
                && state.nodes[id.0 as usize].alive
                && !state.excluded.contains(&id)
                && !busy.contains(&id)
                && state.in_queue.insert(id)
            {
                state.queue_order.push_back(id);
            }
        }
    }

    // Re-queue pending requests that fell out of the order (aborted
    // sessions, lapsed exclusions) so FIFO-only runs cannot orphan them.
    {
        let busy: BTreeSet<NodeId> = state.mcvs.iter().filter_map(|v| v.mode.target()).collect();
        for (&id, _) in state.pending.iter() {
            if state.nodes[id.0 as usize].alive
                && !state.in_queue.contains(&id)
                && !state.excluded.contains(&id)
                && !busy.contains(&id)
            {
                state.queue_order.push_back(id);
                state.in_queue.insert(id);
            }
        }
    }

    // (4) MCV actions.
    for v in &mut state.mcvs {
        v.moved_this_step = 0.0;
    }
    assign_dispatches(state, net, &mut events);

    for idx in 0..state.mcvs.len() {
        let mode = state.mcvs[idx].mode.clone();
        match mode {
            McvMode::Idle => {
                // Start roaming: pause at the current spot first, then head
                // for a fresh uniform waypoint.
                let waypoint = Point::new(
                    state.rng.gen_range(0.0..net.area_side),
                    state.rng.gen_range(0.0..net.area_side),
                );
                state.mcvs[idx].mode = McvMode::Roaming {
                    waypoint,
                    pause_left: net.roam_pause,
                };
                roam_step(state, idx, net, dt);
            }
            McvMode::Roaming { .. } => roam_step(state, idx, net, dt),
            McvMode::Dispatched { target } => {
                let alive = state.nodes[target.0 as usize].alive;
                let pending = state.pending.contains_key(&target);
                if !alive || !pending {
                    state.mcvs[idx].mode = McvMode::Idle;
                } else {
                    let dest = state.nodes[target.0 as usize].position;
                    let mcv = &mut state.mcvs[idx];
                    mcv_move(mcv, dest, dt, net);
                    if mcv.position == dest {
                        mcv.mode = McvMode::Charging {
                            target,
                            sent: 0.0,
                            received: 0.0,
                        };
                        events.push(TraceEvent::SessionStart {
                            mcv: mcv.id,
                            node: target,
                        });
                    }
                }
            }
            McvMode::Charging {
                target,
                sent,
                received,
            } => {
                let node_alive = state.nodes[target.0 as usize].alive;
                if !node_alive {
                    let mcv = &mut state.mcvs[idx];
                    end_session(mcv, target, sent, received, &mut events);
                    continue;
                }
                let disruption = disruption_factor(
                    state.nodes[target.0 as usize].attack.as_ref(),
                    clock,
                );
                let (node_slice, mcv_slice) = (&mut state.nodes, &mut state.mcvs);
                let (s, r) = charge_transfer(
                    &mut mcv_slice[idx],
                    &mut node_slice[target.0 as usize],
                    dt,
                    net,
                    disruption,
                );
                state.totals.sent += s;
                state.totals.received += r;
                let sent = sent + s;
                let received = received + r;
                let full = state.nodes[target.0 as usize].is_full();
                let reserve_hit = {
                    let mcv = &state.mcvs[idx];
                    mcv.residual <= return_reserve(mcv.position, state.depot, net)
                };
                if full {
                    state.nodes[target.0 as usize].pending_request = false;
                    state.pending.remove(&target);
                    let mcv = &mut state.mcvs[idx];
                    end_session(mcv, target, sent, received, &mut events);
                } else if reserve_hit {
                    // Partial session; the request stays pending and gets
                    // re-queued by the reconciliation pass next step.
                    let mcv = &mut state.mcvs[idx];
                    end_session(mcv, target, sent, received, &mut events);
                    mcv.mode = McvMode::Returning;
                } else {
                    state.mcvs[idx].mode = McvMode::Charging {
                        target,
                        sent,
                        received,
                    };
                }
            }
            McvMode::Returning => {
                let depot = state.depot;
                let mcv = &mut state.mcvs[idx];
                mcv_move(mcv, depot, dt, net);
                if mcv.position == depot {
                    let amount = net.mcv_capacity - mcv.residual;
                    mcv.residual = net.mcv_capacity;
                    state.totals.depot_drawn += amount;
                    events.push(TraceEvent::Refill {
                        mcv: mcv.id,
                        amount,
                    });
                    mcv.mode = McvMode::Idle;
                }
            }
        }
    }

    // (5) Deaths are permanent.
    for i in 0..state.nodes.len() {
        let node = &state.nodes[i];
        if node.alive && node.residual <= 0.0 {
            let id = node.id;
            state.nodes[i].residual = 0.0;
            state.nodes[i].alive = false;
            state.nodes[i].pending_request = false;
            state.pending.remove(&id);
            if state.in_queue.remove(&id) {
                state.queue_order.retain(|q| *q != id);
            }
            events.push(TraceEvent::Death { node: id });
        }
    }

    events
}

/// Roaming behavior for one step, with the depot-return energy guard.
fn roam_step(state: &mut SimulationState, idx: usize, net: &NetworkConfig, dt: f64) {
    let depot = state.depot;
    let reserve = {
        let mcv = &state.mcvs[idx];
        return_reserve(mcv.position, depot, net)
    };
    let step_cost = net.mcv_speed * dt * net.travel_cost;
    if state.mcvs[idx].residual <= reserve + step_cost {
        let mcv = &mut state.mcvs[idx];
        mcv.mode = McvMode::Returning;
        mcv_move(mcv, depot, dt, net);
        if mcv.position == depot {
            let amount = net.mcv_capacity - mcv.residual;
            mcv.residual = net.mcv_capacity;
            state.totals.depot_drawn += amount;
            mcv.mode = McvMode::Idle;
        }
        return;
    }
    let (waypoint, mut pause_left) = match state.mcvs[idx].mode {
        McvMode::Roaming {
            waypoint,
            pause_left,
        } => (waypoint, pause_left),
        _ => unreachable!("roam_step on non-roaming mcv"),
    };
    if pause_left > 0.0 {
        pause_left = (pause_left - dt).max(0.0);
        state.mcvs[idx].mode = McvMode::Roaming {
            waypoint,
            pause_left,
        };
        return;
    }
    let mcv = &mut state.mcvs[idx];
    mcv_move(mcv, waypoint, dt, net);
    if mcv.position == waypoint {
        let next = Point::new(
            state.rng.gen_range(0.0..net.area_side),
            state.rng.gen_range(0.0..net.area_side),
        );
        state.mcvs[idx].mode = McvMode::Roaming {
            waypoint: next,
            pause_left: net.roam_pause,
        };
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attack::assign_malicious_nodes;
    use crate::config::ScenarioConfig;

    fn no_attack(config: &ScenarioConfig) -> AttackAssignment {
        assign_malicious_nodes(config.network.node_count, &config.attack)
    }

    #[test]
    fn initial_position_examples() {
        // j=1, m=1: angle pi -> (-C_c/2, 0)
        let p = mcv_initial_position(1, 1, 10.0);
        assert!((p.x + 5.0).abs() < 1e-12 && p.y.abs() < 1e-12);
        // j=1, m=2: angle pi/2 -> (0, 1)
        let p = mcv_initial_position(1, 2, 2.0);
        assert!(p.x.abs() < 1e-12 && (p.y - 1.0).abs() < 1e-12);
        // j=1, m=4: angle pi/4 at radius 50.
        let p = mcv_initial_position(1, 4, 100.0);
        let expected = 35.355_339_059_327_38;
        assert!((p.x - expected).abs() < 1e-9);
        assert!((p.y - expected).abs() < 1e-9);
    }

    #[test]
    fn initialization_is_deterministic_and_full() {
        let mut config = ScenarioConfig::default();
        config.network.rng_seed = 42;
        let a = initialize_network(&config, &no_attack(&config));
        let b = initialize_network(&config, &no_attack(&config));
        for (x, y) in a.nodes.iter().zip(b.nodes.iter()) {
            assert_eq!(x.position, y.position);
            assert_eq!(x.consumption_rate, y.consumption_rate);
            assert_eq!(x.residual, x.capacity);
        }
        assert!(a.queue_order.is_empty());
        assert_eq!(a.step, 0);
    }

    #[test]
    fn mcv_placement_follows_the_circle_rule() {
        let mut config = ScenarioConfig::default();
        config.network.mcv_count = 4;
        // Keep the circle inside the region so no clamping obscures the rule.
        config.network.circumradius = 100.0;
        let state = initialize_network(&config, &no_attack(&config));
        let depot = config.network.depot();
        for (j, mcv) in state.mcvs.iter().enumerate() {
            let rel = mcv_initial_position(j as u32 + 1, 4, 100.0);
            assert!((mcv.position.x - (depot.x + rel.x)).abs() < 1e-12);
            assert!((mcv.position.y - (depot.y + rel.y)).abs() < 1e-12);
        }
    }

    #[test]
    fn linear_drain_arithmetic() {
        let mut config = ScenarioConfig::default();
        config.network.node_count = 1;
        config.network.mcv_count = 1;
        config.network.consumption_jitter = 0.0;
        config.network.node_consumption_rate = 1e-3;
        config.network.roam_pause = 1e9;
        let mut state = initialize_network(&config, &no_attack(&config));
        for _ in 0..100 {
            advance_step(&mut state, &config.network, None);
        }
        assert!((state.nodes[0].residual - 0.4).abs() < 1e-12);
    }

    #[test]
    fn crossing_emits_exactly_one_request() {
        let mut config = ScenarioConfig::default();
        config.network.node_count = 1;
        config.network.mcv_count = 1;
        config.network.consumption_jitter = 0.0;
        config.network.node_consumption_rate = 1e-3;
        config.network.roam_pause = 1e9;
        // Park the only MCV with no charge budget for service so the request
        // stays outstanding.
        config.network.mcv_capacity = 1_000.0;
        config.network.mcv_min_energy_fraction = 0.999;
        let mut state = initialize_network(&config, &no_attack(&config));
        state.nodes[0].residual = 0.1505;
        let mut requests = 0;
        for _ in 0..10 {
            let events = advance_step(&mut state, &config.network, None);
            requests += events
                .iter()
                .filter(|e| matches!(e, TraceEvent::Request { .. }))
                .count();
        }
        assert_eq!(requests, 1);
        assert!(state.nodes[0].pending_request);
    }

    #[test]
    fn mcv_move_examples() {
        let net = NetworkConfig::default();
        let mut mcv = Mcv {
            id: McvId(0),
            position: Point::new(0.0, 0.0),
            residual: 10_000.0,
            mode: McvMode::Idle,
            odometer: 0.0,
            energy_sent_total: 0.0,
            moved_this_step: 0.0,
        };
        // 100 m away at 5 m/s for 1 s: 5 m, 25 J.
        let moved = mcv_move(&mut mcv, Point::new(100.0, 0.0), 1.0, &net);
        assert!((moved - 5.0).abs() < 1e-12);
        assert!((mcv.residual - 9_975.0).abs() < 1e-9);
        // Destination equals current position: nothing happens.
        let here = mcv.position;
        assert_eq!(mcv_move(&mut mcv, here, 1.0, &net), 0.0);
        assert!((mcv.odometer - 5.0).abs() < 1e-12);
        // 3 m short hop arrives exactly.
        let dest = Point::new(mcv.position.x + 3.0, 0.0);
        let moved = mcv_move(&mut mcv, dest, 1.0, &net);
        assert!((moved - 3.0).abs() < 1e-12);
        assert_eq!(mcv.position, dest);
        assert!((mcv.residual - (9_975.0 - 15.0)).abs() < 1e-9);
    }

    #[test]
    fn charge_transfer_examples() {
        let net = NetworkConfig::default();
        let mut mcv = Mcv {
            id: McvId(0),
            position: Point::new(0.0, 0.0),
            residual: 100.0,
            mode: McvMode::Idle,
            odometer: 0.0,
            energy_sent_total: 0.0,
            moved_this_step: 0.0,
        };
        let mut node = SensorNode {
            id: NodeId(0),
            position: Point::new(0.0, 0.0),
            residual: 0.40,
            capacity: 0.50,
            consumption_rate: 1e-4,
            alive: true,
            pending_request: true,
            attack: None,
        };
        let (sent, received) = charge_transfer(&mut mcv, &mut node, 1.0, &net, 1.0);
        assert!((sent - 0.05).abs() < 1e-15);
        assert!((received - 0.05).abs() < 1e-15);
        assert!((node.residual - 0.45).abs() < 1e-12);

        // Capacity clamp: only 0.02 J of headroom, honest sent == received.
        node.residual = 0.48;
        let (sent, received) = charge_transfer(&mut mcv, &mut node, 1.0, &net, 1.0);
        assert!((sent - 0.02).abs() < 1e-12);
        assert!((received - 0.02).abs() < 1e-12);
        assert_eq!(node.residual, node.capacity);

        // Disruption factor halves the received side.
        node.residual = 0.10;
        let (sent, received) = charge_transfer(&mut mcv, &mut node, 1.0, &net, 0.5);
        assert!((sent - 0.05).abs() < 1e-15);
        assert!((received - 0.025).abs() < 1e-15);
    }

    #[test]
    fn disrupted_full_session_ratio_is_exact() {
        let net = NetworkConfig::default();
        let mut mcv = Mcv {
            id: McvId(0),
            position: Point::new(0.0, 0.0),
            residual: 1_000.0,
            mode: McvMode::Idle,
            odometer: 0.0,
            energy_sent_total: 0.0,
            moved_this_step: 0.0,
        };
        let mut node = SensorNode {
            id: NodeId(0),
            position: Point::new(0.0, 0.0),
            residual: 0.10,
            capacity: 0.50,
            consumption_rate: 0.0,
            alive: true,
            pending_request: true,
            attack: None,
        };
        let mut sent_total = 0.0;
        let mut received_total = 0.0;
        while !node.is_full() {
            let (s, r) = charge_transfer(&mut mcv, &mut node, 1.0, &net, 0.5);
            sent_total += s;
            received_total += r;
        }
        assert!((received_total / sent_total - 0.5).abs() < 1e-12);
        assert_eq!(node.residual, node.capacity);
    }

    #[test]
    fn dead_node_gets_no_transfer() {
        let net = NetworkConfig::default();
        let mut mcv = Mcv {
            id: McvId(0),
            position: Point::new(0.0, 0.0),
            residual: 100.0,
            mode: McvMode::Idle,
            odometer: 0.0,
            energy_sent_total: 0.0,
            moved_this_step: 0.0,
        };
        let mut node = SensorNode {
            id: NodeId(0),
            position: Point::new(0.0, 0.0),
            residual: 0.0,
            capacity: 0.5,
            consumption_rate: 1e-4,
            alive: false,
            pending_request: false,
            attack: None,
        };
        assert_eq!(charge_transfer(&mut mcv, &mut node, 1.0, &net, 1.0), (0.0, 0.0));
    }

    /// Two nodes, one MCV, ten steps, checked against a hand-written table.
    ///
    /// Parameters: drain 0.01 J/s, E_th 0.15 J, MCV parked at the depot
    /// (50,50), n0 at (50,60) starting at 0.16 J, n1 at (50,40) full.
    ///
    ///   t1: n0 0.15 (no request; rule is strictly below), n1 0.49
    ///   t2: n0 0.14 -> request, dispatch, MCV moves 5 m to (50,55), -25 J
    ///   t3: n0 0.13, MCV arrives (50,60), session starts, no transfer yet
    ///   t4: n0 drains to 0.12 then receives 0.05 -> 0.17
    ///   t5..t10: +0.04 J net per step -> 0.21 .. 0.41
    #[test]
    fn two_node_hand_fixture() {
        let mut config = ScenarioConfig::default();
        let net = &mut config.network;
        net.area_side = 100.0;
        net.node_count = 2;
        net.mcv_count = 1;
        net.consumption_jitter = 0.0;
        net.node_consumption_rate = 0.01;
        net.roam_pause = 1e9;
        net.rng_seed = 3;
        let net = config.network.clone();

        let mut state = initialize_network(&config, &no_attack(&config));
        state.nodes[0].position = Point::new(50.0, 60.0);
        state.nodes[0].residual = 0.16;
        state.nodes[1].position = Point::new(50.0, 40.0);
        state.mcvs[0].position = Point::new(50.0, 50.0);

        let mut all_events = Vec::new();
        let mut n0_by_step = Vec::new();
        for _ in 1..=10 {
            let events = advance_step(&mut state, &net, None);
            all_events.extend(events);
            n0_by_step.push(state.nodes[0].residual);
        }

        let expected = [0.15, 0.14, 0.13, 0.17, 0.21, 0.25, 0.29, 0.33, 0.37, 0.41];
        for (step, (got, want)) in n0_by_step.iter().zip(expected.iter()).enumerate() {
            assert!(
                (got - want).abs() < 1e-9,
                "step {}: n0 residual {got}, expected {want}",
                step + 1
            );
        }

        let requests: Vec<_> = all_events
            .iter()
            .filter(|e| matches!(e, TraceEvent::Request { .. }))
            .collect();
        assert_eq!(requests.len(), 1);
        assert!(all_events
            .iter()
            .any(|e| matches!(e, TraceEvent::SessionStart { node: NodeId(0), .. })));

        // n1 only drained: 0.5 - 10 * 0.01.
        assert!((state.nodes[1].residual - 0.40).abs() < 1e-12);
        // MCV walked exactly the 10 m to n0.
        assert!((state.mcvs[0].odometer - 10.0).abs() < 1e-12);
        assert!((state.mcvs[0].residual - (10_000.0 - 50.0 - 0.05 * 7.0)).abs() < 1e-9);
        state.check_invariants(&net).unwrap();
    }

    #[test]
    fn death_is_permanent_and_clears_bookkeeping() {
        let mut config = ScenarioConfig::default();
        config.network.node_count = 1;
        config.network.mcv_count = 1;
        config.network.consumption_jitter = 0.0;
        config.network.node_consumption_rate = 0.2;
        config.network.roam_pause = 1e9;
        config.network.mcv_capacity = 1_000.0;
        config.network.mcv_min_energy_fraction = 0.999; // MCV can never serve
        let mut state = initialize_network(&config, &no_attack(&config));
        let mut death_events = 0;
        for _ in 0..10 {
            let events = advance_step(&mut state, &config.network, None);
            death_events += events
                .iter()
                .filter(|e| matches!(e, TraceEvent::Death { .. }))
                .count();
        }
        assert_eq!(death_events, 1);
        assert!(!state.nodes[0].alive);
        assert_eq!(state.nodes[0].residual, 0.0);
        assert!(state.pending.is_empty());
        assert!(state.queue_order.is_empty());
    }
}
