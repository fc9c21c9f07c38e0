//! Detection engine: the four probabilistic maliciousness scorers, their
//! online baseline estimators, weighted fusion, thresholding, and threshold
//! calibration.

use std::collections::VecDeque;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::config::{DetectorParams, ScoreMode, Weights};
use crate::stats;

fn clamp_unit(x: f64) -> f64 {
    x.clamp(0.0, 1.0)
}

/// Request-pattern sub-score m_C from the node's window count and its
/// estimated rate. Literal mode keeps `1 - pmf`; tail mode (default) uses the
/// exact two-sided Poisson tail around the rate.
pub fn request_pattern_score(count: u64, lambda_hat: f64, mode: ScoreMode) -> f64 {
    assert!(
        lambda_hat > 0.0 && lambda_hat.is_finite(),
        "lambda_hat must sit above its floor, got {lambda_hat}"
    );
    match mode {
        ScoreMode::Literal => clamp_unit(1.0 - stats::poisson_pmf(count, lambda_hat)),
        ScoreMode::Tail => clamp_unit(1.0 - stats::poisson_two_sided_tail(count, lambda_hat)),
    }
}

/// Energy sub-score m_E from observed window consumption against the
/// Gaussian baseline (mu, var).
pub fn energy_score(observed: f64, mu: f64, var: f64, mode: ScoreMode) -> f64 {
    assert!(var > 0.0 && var.is_finite(), "variance below floor: {var}");
    match mode {
        ScoreMode::Literal => clamp_unit(1.0 - stats::normal_pdf(observed, mu, var)),
        ScoreMode::Tail => clamp_unit(1.0 - stats::normal_two_sided_tail(observed, mu, var)),
    }
}

/// Charging-efficiency sub-score m_eta; same Gaussian contract as
/// `energy_score` with eta in place of consumption.
pub fn efficiency_score(eta: f64, mu_eta: f64, var_eta: f64, mode: ScoreMode) -> f64 {
    energy_score(eta, mu_eta, var_eta, mode)
}

/// Reputation sub-score m_R from the Beta(alpha, beta) posterior and its
/// point estimate R. Singularities at the edges are avoided by clamping R
/// into [1e-9, 1 - 1e-9].
pub fn reputation_score(r: f64, alpha: f64, beta: f64, mode: ScoreMode) -> f64 {
    assert!(alpha > 0.0 && beta > 0.0, "Beta parameters must be positive");
    let r = r.clamp(1e-9, 1.0 - 1e-9);
    match mode {
        ScoreMode::Literal => clamp_unit(1.0 - stats::beta_pdf(r, alpha, beta)),
        ScoreMode::Tail => clamp_unit(1.0 - stats::beta_two_sided_tail(r, alpha, beta)),
    }
}

/// Interaction verdict feeding the Beta reputation update.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InteractionOutcome {
    Consistent,
    Anomalous,
}

/// Conjugate Bernoulli-Beta update: consistent bumps alpha, anomalous bumps
/// beta.
pub fn update_reputation(alpha: f64, beta: f64, outcome: InteractionOutcome) -> (f64, f64) {
    assert!(alpha > 0.0 && beta > 0.0);
    match outcome {
        InteractionOutcome::Consistent => (alpha + 1.0, beta),
        InteractionOutcome::Anomalous => (alpha, beta + 1.0),
    }
}

/// Session charging efficiency; `None` when nothing was sent, which skips
/// efficiency scoring for the window.
pub fn charging_efficiency(received: f64, sent: f64) -> Option<f64> {
    if sent <= 0.0 {
        return None;
    }
    debug_assert!((0.0..=sent * (1.0 + 1e-9)).contains(&received));
    Some((received / sent).clamp(0.0, 1.0))
}

/// Weighted fusion of the four sub-scores.
pub fn combined_score(
    m_request: f64,
    m_energy: f64,
    m_reputation: f64,
    m_efficiency: f64,
    weights: &Weights,
) -> f64 {
    for m in [m_request, m_energy, m_reputation, m_efficiency] {
        debug_assert!((0.0..=1.0).contains(&m), "sub-score {m} outside [0,1]");
    }
    weights.w_request * m_request
        + weights.w_energy * m_energy
        + weights.w_reputation * m_reputation
        + weights.w_efficiency * m_efficiency
}

/// Flag rule: strictly above the threshold.
pub fn detect(combined: f64, theta: f64) -> bool {
    combined > theta
}

/// The four sub-scores, their fusion, and the flag for one node at one tick.
#[derive(Debug, Clone, Copy, Default)]
pub struct ScoreVector {
    pub m_request: f64,
    pub m_energy: f64,
    pub m_reputation: f64,
    pub m_efficiency: f64,
    pub combined: f64,
    pub flagged: bool,
}

// ---------------------------------------------------------------------------
// Online estimators
// ---------------------------------------------------------------------------

/// Per-node baseline state: request-rate estimate, energy and efficiency
/// moments, and the Beta reputation parameters.
///
/// Rolling updates are gated: an observation whose own sub-score crossed the
/// per-event threshold stays out of its estimator, so an attacker cannot
/// normalize its baseline by simply keeping the attack up.
#[derive(Debug, Clone)]
pub struct EstimatorState {
    pub lambda_hat: f64,
    rate_prior: f64,
    rate_prior_weight: f64,
    rate_sum: f64,
    rate_count: f64,
    pub energy_mean: f64,
    pub energy_var: f64,
    energy_window: VecDeque<f64>,
    pub eta_mean: f64,
    pub eta_var: f64,
    eta_window: VecDeque<f64>,
    /// Most recent efficiency observation; retained until a newer session
    /// replaces it.
    pub last_eta: Option<f64>,
    pub alpha: f64,
    pub beta: f64,
    /// Ticks with a full observation window still to swallow before scoring.
    pub warmup_left: u32,
    window_len: usize,
    lambda_floor: f64,
    energy_var_floor: f64,
    eta_var_floor: f64,
}

fn mean_of(values: &VecDeque<f64>) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

fn sample_var(values: &VecDeque<f64>, mean: f64) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (values.len() - 1) as f64
}

impl EstimatorState {
    pub fn new(params: &DetectorParams) -> Self {
        Self {
            lambda_hat: params.lambda_floor,
            rate_prior: 0.0,
            rate_prior_weight: 0.0,
            rate_sum: 0.0,
            rate_count: 0.0,
            energy_mean: 0.0,
            energy_var: params.energy_var_floor,
            energy_window: VecDeque::new(),
            eta_mean: 1.0,
            eta_var: params.eta_var_floor,
            eta_window: VecDeque::new(),
            last_eta: None,
            alpha: 1.0,
            beta: 1.0,
            warmup_left: params.warmup_windows,
            window_len: params.warmup_windows.max(1) as usize,
            lambda_floor: params.lambda_floor,
            energy_var_floor: params.energy_var_floor,
            eta_var_floor: params.eta_var_floor,
        }
    }

    /// Baseline fit from explicit window observations: sample-mean request
    /// rate, rolling energy and efficiency moments, floors applied.
    pub fn from_observations(
        counts: &[f64],
        energies: &[f64],
        etas: &[f64],
        params: &DetectorParams,
    ) -> Self {
        let mut est = Self::new(params);
        est.rate_sum = counts.iter().sum();
        est.rate_count = counts.len() as f64;
        est.energy_window = energies.iter().copied().collect();
        est.eta_window = etas.iter().copied().collect();
        est.last_eta = etas.last().copied();
        est.window_len = est.window_len.max(energies.len()).max(etas.len());
        est.refresh();
        est.warmup_left = 0;
        est
    }

    pub fn warmed_up(&self) -> bool {
        self.warmup_left == 0
    }

    fn refresh(&mut self) {
        let rate_n = self.rate_prior_weight + self.rate_count;
        if rate_n > 0.0 {
            let mean = (self.rate_prior * self.rate_prior_weight + self.rate_sum) / rate_n;
            self.lambda_hat = mean.max(self.lambda_floor);
        }
        if !self.energy_window.is_empty() {
            self.energy_mean = mean_of(&self.energy_window);
            self.energy_var =
                sample_var(&self.energy_window, self.energy_mean).max(self.energy_var_floor);
        }
        if !self.eta_window.is_empty() {
            self.eta_mean = mean_of(&self.eta_window);
            self.eta_var = sample_var(&self.eta_window, self.eta_mean).max(self.eta_var_floor);
        }
    }

    /// One warm-up tick: the energy observation enters the baseline
    /// unconditionally and the counter advances.
    pub fn observe_warmup(&mut self, consumption: f64) {
        push_bounded(&mut self.energy_window, consumption, self.window_len);
        self.refresh();
        if self.warmup_left > 0 {
            self.warmup_left -= 1;
        }
    }

    /// Anchors the request-rate estimate on a model-derived honest prior at
    /// warm-up completion; quiet pre-first-request stretches would otherwise
    /// drag the rate to the floor and spike m_C on every honest request.
    /// Subsequent counts accumulate into a prior-weighted running mean.
    pub fn seed_lambda_prior(&mut self, prior: f64) {
        self.rate_prior = prior.max(self.lambda_floor);
        self.rate_prior_weight = 2.0 * self.window_len as f64;
        self.rate_sum = 0.0;
        self.rate_count = 0.0;
        self.lambda_hat = self.rate_prior;
    }

    /// Seeds the efficiency baseline with the lossless-charging prior.
    pub fn seed_eta_prior(&mut self) {
        self.eta_window.clear();
        for _ in 0..self.window_len {
            self.eta_window.push_back(1.0);
        }
        self.eta_mean = 1.0;
        self.eta_var = self.eta_var_floor;
    }

    /// Post-warm-up updates; `gated` drops the observation.
    pub fn push_rate(&mut self, count: f64, gated: bool) {
        if !gated {
            self.rate_sum += count;
            self.rate_count += 1.0;
            self.refresh();
        }
    }

    pub fn push_energy(&mut self, consumption: f64, gated: bool) {
        if !gated {
            push_bounded(&mut self.energy_window, consumption, self.window_len);
            self.refresh();
        }
    }

    pub fn push_eta(&mut self, eta: f64, gated: bool) {
        self.last_eta = Some(eta);
        if !gated {
            push_bounded(&mut self.eta_window, eta, self.window_len);
            self.refresh();
        }
    }

    pub fn record_outcome(&mut self, outcome: InteractionOutcome) {
        let (a, b) = update_reputation(self.alpha, self.beta, outcome);
        self.alpha = a;
        self.beta = b;
    }

    /// Beta point estimate of the reputation level.
    pub fn reputation_estimate(&self) -> f64 {
        self.alpha / (self.alpha + self.beta)
    }
}

fn push_bounded(window: &mut VecDeque<f64>, value: f64, cap: usize) {
    if window.len() == cap {
        window.pop_front();
    }
    window.push_back(value);
}

// ---------------------------------------------------------------------------
// Reputation Markov chain (optional smoother)
// ---------------------------------------------------------------------------

/// Quantized reputation chain over `levels` states spanning [0,1], with a
/// row-stochastic transition matrix.
#[derive(Debug, Clone)]
pub struct ReputationChain {
    pub levels: usize,
    pub transition: Vec<Vec<f64>>,
    pub state: Vec<usize>,
    pub blend: f64,
}

#[derive(Debug, thiserror::Error)]
#[error("transition matrix invalid: {0}")]
pub struct ChainError(String);

impl ReputationChain {
    /// Validates row-stochasticity (rows sum to 1 within 1e-12, entries
    /// non-negative) at construction.
    pub fn new(
        transition: Vec<Vec<f64>>,
        node_count: usize,
        blend: f64,
    ) -> Result<Self, ChainError> {
        let levels = transition.len();
        if levels < 2 {
            return Err(ChainError("need at least 2 levels".into()));
        }
        for (i, row) in transition.iter().enumerate() {
            if row.len() != levels {
                return Err(ChainError(format!("row {i} has wrong length")));
            }
            if row.iter().any(|p| *p < 0.0 || !p.is_finite()) {
                return Err(ChainError(format!("row {i} has a negative entry")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-12 {
                return Err(ChainError(format!("row {i} sums to {sum}")));
            }
        }
        Ok(Self {
            levels,
            transition,
            // Everyone starts at the top reputation level.
            state: vec![levels - 1; node_count],
            blend,
        })
    }

    /// Uniform-mixing default matrix: stay with probability `1 - mix`,
    /// otherwise move to a uniformly random level.
    pub fn uniform_mixing(levels: usize, mix: f64, node_count: usize, blend: f64) -> Self {
        let mut transition = vec![vec![0.0; levels]; levels];
        for (i, row) in transition.iter_mut().enumerate() {
            for (j, p) in row.iter_mut().enumerate() {
                *p = mix / levels as f64;
                if i == j {
                    *p += 1.0 - mix;
                }
            }
        }
        Self::new(transition, node_count, blend).expect("uniform mixing matrix is stochastic")
    }

    pub fn quantize(&self, level: f64) -> usize {
        let x = level.clamp(0.0, 1.0) * (self.levels - 1) as f64;
        x.round() as usize
    }

    pub fn level_value(&self, state: usize) -> f64 {
        state as f64 / (self.levels - 1) as f64
    }

    /// Advances one node: samples the current row, then blends toward the
    /// quantized observed level with weight `blend`.
    pub fn transition_node(
        &mut self,
        node: usize,
        observed_level: f64,
        rng: &mut ChaCha8Rng,
    ) -> f64 {
        let row = &self.transition[self.state[node]];
        let u: f64 = rng.gen();
        let mut cum = 0.0;
        let mut sampled = self.levels - 1;
        for (j, p) in row.iter().enumerate() {
            cum += p;
            if u < cum {
                sampled = j;
                break;
            }
        }
        let observed = self.quantize(observed_level);
        let blended =
            (1.0 - self.blend) * sampled as f64 + self.blend * observed as f64;
        let next = blended.round() as usize;
        self.state[node] = next.min(self.levels - 1);
        self.level_value(self.state[node])
    }
}

// ---------------------------------------------------------------------------
// Threshold calibration
// ---------------------------------------------------------------------------

/// Outcome of a calibration run over labeled traces.
#[derive(Debug, Clone)]
pub struct CalibrationReport {
    pub theta: f64,
    pub achieved_fpr: f64,
    pub achieved_detection: f64,
    /// Set when the requested false-positive target was unreachable.
    pub warning: Option<String>,
}

/// Picks the smallest threshold whose false-positive rate on the calibration
/// scores stays at or below `target_fpr`. Scores are per-node maxima of the
/// combined maliciousness score.
pub fn calibrate_threshold(
    honest_scores: &[f64],
    malicious_scores: &[f64],
    target_fpr: f64,
) -> CalibrationReport {
    assert!((0.0..=1.0).contains(&target_fpr), "target_fpr in [0,1]");
    let rate = |flagged: usize, total: usize| {
        if total == 0 {
            0.0
        } else {
            flagged as f64 / total as f64
        }
    };
    let fpr_at = |theta: f64| {
        rate(
            honest_scores.iter().filter(|s| **s > theta).count(),
            honest_scores.len(),
        )
    };
    let detection_at = |theta: f64| {
        rate(
            malicious_scores.iter().filter(|s| **s > theta).count(),
            malicious_scores.len(),
        )
    };

    // Candidate thresholds: 0 plus every distinct honest score. fpr(theta)
    // only changes at honest score values, and flagging is strict.
    let mut candidates: Vec<f64> = honest_scores.to_vec();
    candidates.push(0.0);
    candidates.sort_by(|a, b| a.partial_cmp(b).unwrap());
    candidates.dedup();

    for theta in candidates {
        if fpr_at(theta) <= target_fpr {
            return CalibrationReport {
                theta,
                achieved_fpr: fpr_at(theta),
                achieved_detection: detection_at(theta),
                warning: None,
            };
        }
    }
    CalibrationReport {
        theta: 1.0,
        achieved_fpr: fpr_at(1.0),
        achieved_detection: detection_at(1.0),
        warning: Some(format!(
            "false-positive target {target_fpr} unreachable; threshold pinned to 1"
        )),
    }
}
