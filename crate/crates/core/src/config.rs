//! Configuration records shared by every subsystem, plus validation and the
//! flat `key = value` config-file format.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use thiserror::Error;

/// Identifier of a sensor node within one scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub u32);

/// Identifier of a mobile charging vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct McvId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

impl fmt::Display for McvId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "v{}", self.0)
    }
}

/// A position in the square deployment region, meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    /// Euclidean distance to another point.
    pub fn distance(&self, other: &Point) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        (dx * dx + dy * dy).sqrt()
    }
}

/// Physical-plane parameters of one scenario.
#[derive(Debug, Clone)]
pub struct NetworkConfig {
    /// Side length of the square region, meters.
    pub area_side: f64,
    /// Number of sensor nodes (`r`).
    pub node_count: u32,
    /// Node communication range, meters.
    pub comm_range: f64,
    /// Node sensing range, meters.
    pub sense_range: f64,
    /// Node battery capacity, joules.
    pub node_capacity: f64,
    /// E_th as a fraction of node capacity, in (0,1).
    pub energy_threshold_fraction: f64,
    /// Base node drain, joules per second.
    pub node_consumption_rate: f64,
    /// Per-node drain spread: node i drains `base * (1 + u_i * jitter)`,
    /// u_i uniform in [-1,1]. Zero gives identical nodes.
    pub consumption_jitter: f64,
    /// Number of mobile charging vehicles (`m`).
    pub mcv_count: u32,
    /// MCV battery capacity, joules.
    pub mcv_capacity: f64,
    /// CE_th as a fraction of MCV capacity, in (0,1).
    pub mcv_min_energy_fraction: f64,
    /// Energy transfer rate while charging, joules per second.
    pub charging_rate: f64,
    /// MCV travel speed, meters per second.
    pub mcv_speed: f64,
    /// MCV travel energy cost, joules per meter.
    pub travel_cost: f64,
    /// Radius C_c of the circle circumscribing the region, meters.
    pub circumradius: f64,
    /// Simulation step, seconds.
    pub time_step: f64,
    /// Simulated duration, seconds.
    pub horizon: f64,
    /// Pause at each roaming waypoint, seconds.
    pub roam_pause: f64,
    /// Master seed for all randomness in the scenario.
    pub rng_seed: u64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            area_side: 200.0,
            node_count: 100,
            comm_range: 50.0,
            sense_range: 25.0,
            node_capacity: 0.5,
            energy_threshold_fraction: 0.3,
            node_consumption_rate: 1e-4,
            consumption_jitter: 0.1,
            mcv_count: 4,
            mcv_capacity: 10_000.0,
            mcv_min_energy_fraction: 0.1,
            charging_rate: 0.05,
            mcv_speed: 5.0,
            travel_cost: 5.0,
            circumradius: 200.0 * std::f64::consts::SQRT_2,
            time_step: 1.0,
            horizon: 7_000.0,
            roam_pause: 0.0,
            rng_seed: 42,
        }
    }
}

impl NetworkConfig {
    /// E_th in joules.
    pub fn energy_threshold(&self) -> f64 {
        self.energy_threshold_fraction * self.node_capacity
    }

    /// Static part of CE_th in joules; the return-trip cost is added by the
    /// caller from the MCV's current position.
    pub fn mcv_reserve_floor(&self) -> f64 {
        self.mcv_min_energy_fraction * self.mcv_capacity
    }

    /// Region center; the sink/depot sits here.
    pub fn depot(&self) -> Point {
        Point::new(self.area_side / 2.0, self.area_side / 2.0)
    }

    pub fn step_count(&self) -> u64 {
        (self.horizon / self.time_step).round() as u64
    }

    /// Long-run honest charging-request rate implied by the energy model:
    /// one request per full drain from capacity down to E_th.
    pub fn honest_request_rate(&self) -> f64 {
        let rechargeable = self.node_capacity - self.energy_threshold();
        self.node_consumption_rate / rechargeable
    }
}

/// Fusion weights for the four maliciousness sub-scores.
#[derive(Debug, Clone, Copy)]
pub struct Weights {
    pub w_request: f64,
    pub w_energy: f64,
    pub w_reputation: f64,
    pub w_efficiency: f64,
}

impl Default for Weights {
    fn default() -> Self {
        Self {
            w_request: 0.25,
            w_energy: 0.25,
            w_reputation: 0.25,
            w_efficiency: 0.25,
        }
    }
}

impl Weights {
    pub fn sum(&self) -> f64 {
        self.w_request + self.w_energy + self.w_reputation + self.w_efficiency
    }
}

/// Which form of Eqs.-style scoring the detector uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoreMode {
    /// `1 - density/pmf`, clamped into [0,1].
    Literal,
    /// `1 - two-sided tail probability` around the baseline (default).
    Tail,
}

/// Detection-engine tuning.
#[derive(Debug, Clone)]
pub struct DetectorParams {
    pub score_mode: ScoreMode,
    /// Combined-score flag threshold, in (0,1).
    pub theta_doc: f64,
    /// Observation window length, seconds.
    pub obs_window: f64,
    /// Controller/scoring cadence, seconds.
    pub controller_interval: f64,
    /// Windows of estimator warm-up before any flagging.
    pub warmup_windows: u32,
    /// Floor for the request-rate estimate, requests per window.
    pub lambda_floor: f64,
    /// Variance floor for the energy baseline, joules^2.
    pub energy_var_floor: f64,
    /// Variance floor for the efficiency baseline.
    pub eta_var_floor: f64,
    /// Sub-score level above which a single observation counts as an
    /// anomalous interaction (reputation updates, estimator gating).
    pub event_threshold: f64,
    /// Enable the quantized Markov-chain smoother for the reputation level.
    pub chain_enabled: bool,
    /// Number of quantized reputation levels when the chain is enabled.
    pub chain_levels: u32,
    /// Blend weight toward the observed level after a chain transition.
    pub chain_blend: f64,
    /// Consecutive flags after which exclusion becomes permanent; 0 disables.
    pub sticky_flag_runs: u32,
}

impl Default for DetectorParams {
    fn default() -> Self {
        Self {
            score_mode: ScoreMode::Tail,
            // Re-derived from the calibration sweep; see the `calibrate`
            // subcommand and the threshold-stability test.
            theta_doc: 0.55,
            obs_window: 1_000.0,
            controller_interval: 50.0,
            warmup_windows: 10,
            lambda_floor: 0.01,
            energy_var_floor: 4e-4,
            eta_var_floor: 2.5e-3,
            event_threshold: 0.9,
            chain_enabled: false,
            chain_levels: 5,
            chain_blend: 0.5,
            sticky_flag_runs: 0,
        }
    }
}

/// Attack intensity tiers from the evaluation setup.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttackTier {
    None,
    Lai,
    Mai,
    Hai,
    Custom,
}

impl AttackTier {
    pub fn label(&self) -> &'static str {
        match self {
            AttackTier::None => "none",
            AttackTier::Lai => "LAI",
            AttackTier::Mai => "MAI",
            AttackTier::Hai => "HAI",
            AttackTier::Custom => "custom",
        }
    }

    /// Admissible compromised-node fraction for the tier.
    pub fn fraction_range(&self) -> (f64, f64) {
        match self {
            AttackTier::None => (0.0, 0.0),
            AttackTier::Lai => (0.05, 0.10),
            AttackTier::Mai => (0.20, 0.30),
            AttackTier::Hai => (0.40, 0.50),
            AttackTier::Custom => (0.0, 1.0),
        }
    }

    fn default_fraction(&self) -> f64 {
        match self {
            AttackTier::None => 0.0,
            AttackTier::Lai => 0.075,
            AttackTier::Mai => 0.25,
            AttackTier::Hai => 0.45,
            AttackTier::Custom => 0.25,
        }
    }
}

/// Closed interval factors are drawn from; `lo == hi` pins the factor.
#[derive(Debug, Clone, Copy)]
pub struct FactorRange {
    pub lo: f64,
    pub hi: f64,
}

impl FactorRange {
    pub fn fixed(v: f64) -> Self {
        Self { lo: v, hi: v }
    }
}

/// Adversary model for one scenario.
#[derive(Debug, Clone)]
pub struct AttackSpec {
    pub tier: AttackTier,
    /// Fraction of nodes compromised, in [0,1).
    pub intensity_fraction: f64,
    /// Fake-request multiplier range (>= 1).
    pub flood_range: FactorRange,
    /// Apparent-consumption multiplier range (> 0).
    pub energy_range: FactorRange,
    /// received/sent factor range, in (0,1].
    pub disruption_range: FactorRange,
    /// Simulated time at which compromised nodes start misbehaving.
    pub active_from: f64,
    /// Honest emission rate the flood multiplies, requests/second.
    /// `None` derives it from the energy model.
    pub baseline_request_rate: Option<f64>,
    /// Seed for malicious-node selection and fake-request sampling.
    pub rng_seed: u64,
}

impl AttackSpec {
    pub fn none() -> Self {
        Self::for_tier(AttackTier::None)
    }

    pub fn for_tier(tier: AttackTier) -> Self {
        let (flood, energy, disruption) = match tier {
            AttackTier::None => (
                FactorRange::fixed(1.0),
                FactorRange::fixed(1.0),
                FactorRange::fixed(1.0),
            ),
            AttackTier::Lai => (
                FactorRange { lo: 2.0, hi: 3.0 },
                FactorRange::fixed(0.5),
                FactorRange::fixed(0.7),
            ),
            AttackTier::Mai => (
                FactorRange { lo: 3.0, hi: 5.0 },
                FactorRange::fixed(0.3),
                FactorRange::fixed(0.5),
            ),
            AttackTier::Hai => (
                FactorRange { lo: 5.0, hi: 8.0 },
                FactorRange::fixed(0.1),
                FactorRange::fixed(0.3),
            ),
            AttackTier::Custom => (
                FactorRange { lo: 3.0, hi: 5.0 },
                FactorRange::fixed(0.3),
                FactorRange::fixed(0.5),
            ),
        };
        Self {
            tier,
            intensity_fraction: tier.default_fraction(),
            flood_range: flood,
            energy_range: energy,
            disruption_range: disruption,
            active_from: 2_000.0,
            baseline_request_rate: None,
            rng_seed: 1,
        }
    }

    /// Effective honest baseline rate, requests/second.
    pub fn baseline_rate(&self, network: &NetworkConfig) -> f64 {
        self.baseline_request_rate
            .unwrap_or_else(|| network.honest_request_rate())
    }
}

/// Twin/controller layer settings.
#[derive(Debug, Clone)]
pub struct ControllerConfig {
    pub enabled: bool,
    /// Twin staleness, seconds; 0 is an ideal twin.
    pub sync_latency: f64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            sync_latency: 0.0,
        }
    }
}

/// Everything one scenario run needs.
#[derive(Debug, Clone, Default)]
pub struct ScenarioConfig {
    pub network: NetworkConfig,
    pub weights: Weights,
    pub detector: DetectorParams,
    pub attack: AttackSpec,
    pub controller: ControllerConfig,
}

impl Default for AttackSpec {
    fn default() -> Self {
        AttackSpec::none()
    }
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

/// One violated invariant.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub field: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

/// All violations found in a configuration; empty iff admissible.
#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, field: &str, message: impl Into<String>) {
        self.violations.push(Violation {
            field: field.to_string(),
            message: message.into(),
        });
    }

    fn require_positive(&mut self, field: &str, v: f64) {
        if !(v.is_finite() && v > 0.0) {
            self.push(field, format!("must be strictly positive, got {v}"));
        }
    }

    fn require_open_unit(&mut self, field: &str, v: f64) {
        if !(v.is_finite() && v > 0.0 && v < 1.0) {
            self.push(field, format!("must lie in the open interval (0,1), got {v}"));
        }
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_ok() {
            write!(f, "configuration admissible")
        } else {
            for v in &self.violations {
                writeln!(f, "{v}")?;
            }
            Ok(())
        }
    }
}

/// Checks every invariant and reports all violations; never aborts.
pub fn validate_config(config: &ScenarioConfig) -> ValidationReport {
    let mut report = ValidationReport::default();
    let net = &config.network;

    report.require_positive("area_side", net.area_side);
    report.require_positive("comm_range", net.comm_range);
    report.require_positive("sense_range", net.sense_range);
    report.require_positive("node_capacity", net.node_capacity);
    report.require_positive("node_consumption_rate", net.node_consumption_rate);
    report.require_positive("mcv_capacity", net.mcv_capacity);
    report.require_positive("charging_rate", net.charging_rate);
    report.require_positive("mcv_speed", net.mcv_speed);
    report.require_positive("travel_cost", net.travel_cost);
    report.require_positive("circumradius", net.circumradius);
    report.require_positive("time_step", net.time_step);
    report.require_open_unit("energy_threshold_fraction", net.energy_threshold_fraction);
    report.require_open_unit("mcv_min_energy_fraction", net.mcv_min_energy_fraction);

    if !(net.horizon.is_finite() && net.horizon >= 0.0) {
        report.push("horizon", "must be finite and non-negative");
    }
    if !(net.roam_pause.is_finite() && net.roam_pause >= 0.0) {
        report.push("roam_pause", "must be finite and non-negative");
    }
    if !(net.consumption_jitter.is_finite()
        && net.consumption_jitter >= 0.0
        && net.consumption_jitter < 1.0)
    {
        report.push("consumption_jitter", "must lie in [0,1)");
    }
    if net.node_count < 1 || net.node_count > 100_000 {
        report.push("node_count", "must lie in [1, 100000]");
    }
    if net.mcv_count < 1 || net.mcv_count > net.node_count {
        report.push("mcv_count", "must lie in [1, node_count]");
    }
    if net.comm_range <= net.sense_range {
        report.push("comm_range", "comm_range must exceed sense_range");
    }
    if net.circumradius > net.area_side * std::f64::consts::SQRT_2 + 1e-9 {
        report.push(
            "circumradius",
            "must not exceed area_side * sqrt(2), the circumscribed-circle bound",
        );
    }

    let w = &config.weights;
    for (field, v) in [
        ("weight_request", w.w_request),
        ("weight_energy", w.w_energy),
        ("weight_reputation", w.w_reputation),
        ("weight_efficiency", w.w_efficiency),
    ] {
        if !(v.is_finite() && v >= 0.0) {
            report.push(field, format!("must be finite and non-negative, got {v}"));
        }
    }
    if (w.sum() - 1.0).abs() > 1e-12 {
        report.push(
            "weights",
            format!("must sum to 1 within 1e-12, got {}", w.sum()),
        );
    }

    let det = &config.detector;
    report.require_open_unit("theta_doc", det.theta_doc);
    report.require_positive("obs_window", det.obs_window);
    report.require_positive("controller_interval", det.controller_interval);
    report.require_positive("lambda_floor", det.lambda_floor);
    report.require_positive("energy_var_floor", det.energy_var_floor);
    report.require_positive("eta_var_floor", det.eta_var_floor);
    report.require_open_unit("event_threshold", det.event_threshold);
    if det.warmup_windows == 0 {
        report.push("warmup_windows", "must be at least 1");
    }
    if det.obs_window < net.time_step {
        report.push("obs_window", "must cover at least one time step");
    }
    if det.controller_interval < net.time_step {
        report.push("controller_interval", "must cover at least one time step");
    }
    if det.chain_enabled && det.chain_levels < 2 {
        report.push("chain_levels", "chain mode needs at least 2 levels");
    }
    if !(det.chain_blend.is_finite() && (0.0..=1.0).contains(&det.chain_blend)) {
        report.push("chain_blend", "must lie in [0,1]");
    }

    let atk = &config.attack;
    if !(atk.intensity_fraction.is_finite()
        && atk.intensity_fraction >= 0.0
        && atk.intensity_fraction < 1.0)
    {
        report.push("attack_fraction", "must lie in [0,1)");
    } else {
        let (lo, hi) = atk.tier.fraction_range();
        if atk.tier != AttackTier::Custom
            && atk.tier != AttackTier::None
            && !(lo..=hi).contains(&atk.intensity_fraction)
        {
            report.push(
                "attack_fraction",
                format!(
                    "tier {} requires a fraction in [{lo}, {hi}], got {}",
                    atk.tier.label(),
                    atk.intensity_fraction
                ),
            );
        }
    }
    for (field, range) in [
        ("attack_flood", atk.flood_range),
        ("attack_energy_factor", atk.energy_range),
        ("attack_disruption", atk.disruption_range),
    ] {
        if !(range.lo.is_finite() && range.hi.is_finite() && range.lo <= range.hi) {
            report.push(field, "range must be finite with lo <= hi");
        }
    }
    if atk.flood_range.lo < 1.0 {
        report.push("attack_flood", "flood factor must be at least 1");
    }
    if atk.energy_range.lo <= 0.0 {
        report.push("attack_energy_factor", "must be strictly positive");
    }
    if atk.disruption_range.lo <= 0.0 || atk.disruption_range.hi > 1.0 {
        report.push("attack_disruption", "must lie in (0,1]");
    }
    if !(atk.active_from.is_finite() && atk.active_from >= 0.0) {
        report.push("attack_active_from", "must be finite and non-negative");
    }
    if let Some(rate) = atk.baseline_request_rate {
        if !(rate.is_finite() && rate > 0.0) {
            report.push("attack_baseline_rate", "must be strictly positive");
        }
    }

    if !(config.controller.sync_latency.is_finite() && config.controller.sync_latency >= 0.0) {
        report.push("sync_latency", "must be finite and non-negative");
    }

    report
}

/// Euclidean distance between two points.
pub fn distance(a: Point, b: Point) -> f64 {
    a.distance(&b)
}

// ---------------------------------------------------------------------------
// Config-file parsing
// ---------------------------------------------------------------------------

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config file {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("line {line}: expected `key = value`, got `{text}`")]
    Syntax { line: usize, text: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: invalid value for `{key}`: {message}")]
    InvalidValue {
        line: usize,
        key: String,
        message: String,
    },
    #[error("configuration rejected:\n{0}")]
    Invalid(ValidationReport),
}

fn parse_f64(line: usize, key: &str, value: &str) -> Result<f64, ConfigError> {
    value.parse::<f64>().map_err(|e| ConfigError::InvalidValue {
        line,
        key: key.to_string(),
        message: e.to_string(),
    })
}

fn parse_u32(line: usize, key: &str, value: &str) -> Result<u32, ConfigError> {
    value.parse::<u32>().map_err(|e| ConfigError::InvalidValue {
        line,
        key: key.to_string(),
        message: e.to_string(),
    })
}

fn parse_u64(line: usize, key: &str, value: &str) -> Result<u64, ConfigError> {
    value.parse::<u64>().map_err(|e| ConfigError::InvalidValue {
        line,
        key: key.to_string(),
        message: e.to_string(),
    })
}

fn parse_bool(line: usize, key: &str, value: &str) -> Result<bool, ConfigError> {
    match value.to_ascii_lowercase().as_str() {
        "on" | "true" | "1" | "yes" => Ok(true),
        "off" | "false" | "0" | "no" => Ok(false),
        other => Err(ConfigError::InvalidValue {
            line,
            key: key.to_string(),
            message: format!("expected on/off, got `{other}`"),
        }),
    }
}

/// Applies one `key = value` assignment onto a config under construction.
fn apply_key(
    config: &mut ScenarioConfig,
    line: usize,
    key: &str,
    value: &str,
) -> Result<(), ConfigError> {
    let net = &mut config.network;
    match key {
        "area_side" => net.area_side = parse_f64(line, key, value)?,
        "node_count" => net.node_count = parse_u32(line, key, value)?,
        "comm_range" => net.comm_range = parse_f64(line, key, value)?,
        "sense_range" => net.sense_range = parse_f64(line, key, value)?,
        "node_capacity" => net.node_capacity = parse_f64(line, key, value)?,
        "energy_threshold_fraction" => {
            net.energy_threshold_fraction = parse_f64(line, key, value)?
        }
        "node_consumption_rate" => net.node_consumption_rate = parse_f64(line, key, value)?,
        "consumption_jitter" => net.consumption_jitter = parse_f64(line, key, value)?,
        "mcv_count" => net.mcv_count = parse_u32(line, key, value)?,
        "mcv_capacity" => net.mcv_capacity = parse_f64(line, key, value)?,
        "mcv_min_energy_fraction" => net.mcv_min_energy_fraction = parse_f64(line, key, value)?,
        "charging_rate" => net.charging_rate = parse_f64(line, key, value)?,
        "mcv_speed" => net.mcv_speed = parse_f64(line, key, value)?,
        "travel_cost" => net.travel_cost = parse_f64(line, key, value)?,
        "circumradius" => net.circumradius = parse_f64(line, key, value)?,
        "time_step" => net.time_step = parse_f64(line, key, value)?,
        "horizon" => net.horizon = parse_f64(line, key, value)?,
        "roam_pause" => net.roam_pause = parse_f64(line, key, value)?,
        "rng_seed" => net.rng_seed = parse_u64(line, key, value)?,

        "weight_request" => config.weights.w_request = parse_f64(line, key, value)?,
        "weight_energy" => config.weights.w_energy = parse_f64(line, key, value)?,
        "weight_reputation" => config.weights.w_reputation = parse_f64(line, key, value)?,
        "weight_efficiency" => config.weights.w_efficiency = parse_f64(line, key, value)?,

        "score_mode" => {
            config.detector.score_mode = match value.to_ascii_lowercase().as_str() {
                "literal" => ScoreMode::Literal,
                "tail" => ScoreMode::Tail,
                other => {
                    return Err(ConfigError::InvalidValue {
                        line,
                        key: key.to_string(),
                        message: format!("expected literal|tail, got `{other}`"),
                    })
                }
            }
        }
        "theta_doc" => config.detector.theta_doc = parse_f64(line, key, value)?,
        "obs_window" => config.detector.obs_window = parse_f64(line, key, value)?,
        "controller_interval" => {
            config.detector.controller_interval = parse_f64(line, key, value)?
        }
        "warmup_windows" => config.detector.warmup_windows = parse_u32(line, key, value)?,
        "lambda_floor" => config.detector.lambda_floor = parse_f64(line, key, value)?,
        "energy_var_floor" => config.detector.energy_var_floor = parse_f64(line, key, value)?,
        "eta_var_floor" => config.detector.eta_var_floor = parse_f64(line, key, value)?,
        "event_threshold" => config.detector.event_threshold = parse_f64(line, key, value)?,
        "chain_mode" => config.detector.chain_enabled = parse_bool(line, key, value)?,
        "chain_levels" => config.detector.chain_levels = parse_u32(line, key, value)?,
        "chain_blend" => config.detector.chain_blend = parse_f64(line, key, value)?,
        "sticky_flag_runs" => config.detector.sticky_flag_runs = parse_u32(line, key, value)?,

        "controller" => config.controller.enabled = parse_bool(line, key, value)?,
        "sync_latency" => config.controller.sync_latency = parse_f64(line, key, value)?,

        "attack_tier" => {
            let tier = match value.to_ascii_lowercase().as_str() {
                "none" => AttackTier::None,
                "lai" => AttackTier::Lai,
                "mai" => AttackTier::Mai,
                "hai" => AttackTier::Hai,
                "custom" => AttackTier::Custom,
                other => {
                    return Err(ConfigError::InvalidValue {
                        line,
                        key: key.to_string(),
                        message: format!("expected none|LAI|MAI|HAI|custom, got `{other}`"),
                    })
                }
            };
            // Keep any already-parsed overrides for fields the tier defaults.
            let overrides = config.attack.clone();
            config.attack = AttackSpec::for_tier(tier);
            config.attack.active_from = overrides.active_from;
            config.attack.rng_seed = overrides.rng_seed;
            config.attack.baseline_request_rate = overrides.baseline_request_rate;
        }
        "attack_fraction" => config.attack.intensity_fraction = parse_f64(line, key, value)?,
        "attack_active_from" => config.attack.active_from = parse_f64(line, key, value)?,
        "attack_seed" => config.attack.rng_seed = parse_u64(line, key, value)?,
        "attack_baseline_rate" => {
            config.attack.baseline_request_rate = Some(parse_f64(line, key, value)?)
        }
        "attack_flood_min" => config.attack.flood_range.lo = parse_f64(line, key, value)?,
        "attack_flood_max" => config.attack.flood_range.hi = parse_f64(line, key, value)?,
        "attack_energy_factor_min" => config.attack.energy_range.lo = parse_f64(line, key, value)?,
        "attack_energy_factor_max" => config.attack.energy_range.hi = parse_f64(line, key, value)?,
        "attack_disruption_min" => {
            config.attack.disruption_range.lo = parse_f64(line, key, value)?
        }
        "attack_disruption_max" => {
            config.attack.disruption_range.hi = parse_f64(line, key, value)?
        }

        other => {
            return Err(ConfigError::UnknownKey {
                line,
                key: other.to_string(),
            })
        }
    }
    Ok(())
}

/// Parses the flat `key = value` format; `#` starts a comment.
pub fn parse_config_str(text: &str) -> Result<ScenarioConfig, ConfigError> {
    let mut config = ScenarioConfig::default();
    let mut seen = BTreeSet::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
            line: line_no,
            text: line.to_string(),
        })?;
        let key = key.trim();
        let value = value.trim();
        seen.insert(key.to_string());
        apply_key(&mut config, line_no, key, value)?;
    }
    Ok(config)
}

/// Reads, parses, and validates a scenario configuration file.
pub fn load_config(path: &Path) -> Result<ScenarioConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let config = parse_config_str(&text)?;
    let report = validate_config(&config);
    if report.is_ok() {
        Ok(config)
    } else {
        Err(ConfigError::Invalid(report))
    }
}
