//! Denial-of-charging adversary: selects compromised nodes and perturbs their
//! request, drain, and charging behavior according to the configured tier.

use std::collections::BTreeSet;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{AttackSpec, NetworkConfig, NodeId};

/// Per-node adversarial behavior. A profile with all factors at 1 is
/// behaviorally honest.
#[derive(Debug, Clone)]
pub struct AttackProfile {
    pub node_id: NodeId,
    /// Fake-request emission rate multiplier over the honest baseline.
    pub request_flood_factor: f64,
    /// Multiplier on the node's physical drain.
    pub energy_anomaly_factor: f64,
    /// received/sent during charging, in (0,1].
    pub disruption_efficiency: f64,
    /// Misbehavior starts at this simulated time.
    pub active_from: f64,
}

impl AttackProfile {
    pub fn is_neutral(&self) -> bool {
        self.request_flood_factor == 1.0
            && self.energy_anomaly_factor == 1.0
            && self.disruption_efficiency == 1.0
    }

    pub fn active_at(&self, clock: f64) -> bool {
        !self.is_neutral() && clock >= self.active_from
    }
}

/// Node ids compromised in a scenario. Visible to the metrics layer only;
/// the detector never receives it.
pub type GroundTruth = BTreeSet<NodeId>;

/// Result of planting the adversary in a scenario.
#[derive(Debug, Clone)]
pub struct AttackAssignment {
    /// Profile slot per node index; `None` for honest nodes.
    pub profiles: Vec<Option<AttackProfile>>,
    pub ground_truth: GroundTruth,
    /// Non-fatal setup notes, e.g. a fraction too small to pick any node.
    pub warnings: Vec<String>,
}

fn draw(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.gen_range(lo..=hi)
    } else {
        lo
    }
}

/// Chooses `floor(fraction * r)` distinct nodes uniformly (seeded) and gives
/// each a profile with factors drawn from the tier ranges.
pub fn assign_malicious_nodes(node_count: u32, spec: &AttackSpec) -> AttackAssignment {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    let target = (spec.intensity_fraction * node_count as f64).floor() as u32;
    let mut assignment = AttackAssignment {
        profiles: vec![None; node_count as usize],
        ground_truth: GroundTruth::new(),
        warnings: Vec::new(),
    };
    if target == 0 {
        if spec.intensity_fraction > 0.0 {
            assignment.warnings.push(format!(
                "attack fraction {} selects zero nodes out of {node_count}",
                spec.intensity_fraction
            ));
        }
        return assignment;
    }

    // Partial Fisher-Yates over the id range.
    let mut ids: Vec<u32> = (0..node_count).collect();
    for i in 0..target as usize {
        let j = rng.gen_range(i..ids.len());
        ids.swap(i, j);
    }
    let mut chosen: Vec<u32> = ids[..target as usize].to_vec();
    chosen.sort_unstable();

    for id in chosen {
        let profile = AttackProfile {
            node_id: NodeId(id),
            request_flood_factor: draw(&mut rng, spec.flood_range.lo, spec.flood_range.hi),
            energy_anomaly_factor: draw(&mut rng, spec.energy_range.lo, spec.energy_range.hi),
            disruption_efficiency: draw(
                &mut rng,
                spec.disruption_range.lo,
                spec.disruption_range.hi,
            ),
            active_from: spec.active_from,
        };
        assignment.ground_truth.insert(NodeId(id));
        assignment.profiles[id as usize] = Some(profile);
    }
    assignment
}

/// Exact inverse-transform Poisson sample; fine for the small `rate * dt`
/// this simulator uses.
pub fn poisson_sample(rng: &mut ChaCha8Rng, mean: f64) -> u32 {
    debug_assert!(mean >= 0.0 && mean.is_finite());
    if mean == 0.0 {
        return 0;
    }
    let u: f64 = rng.gen();
    let mut p = (-mean).exp();
    let mut cum = p;
    let mut k = 0u32;
    while u > cum && k < 1_000 {
        k += 1;
        p *= mean / k as f64;
        cum += p;
    }
    k
}

/// Number of fake requests this step, plus forged below-threshold residual
/// readings for each. Inactive or neutral profiles emit nothing and consume
/// no randomness beyond the shared per-step draw path.
pub fn apply_request_flood(
    profile: &AttackProfile,
    clock: f64,
    dt: f64,
    baseline_rate: f64,
    energy_threshold: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<f64> {
    if !profile.active_at(clock) || profile.request_flood_factor <= 0.0 {
        return Vec::new();
    }
    let mean = profile.request_flood_factor * baseline_rate * dt;
    let count = poisson_sample(rng, mean);
    (0..count)
        .map(|_| {
            let u: f64 = rng.gen();
            // Forged: just below E_th, never verifiable by the sink.
            energy_threshold * (1.0 - 0.05 * u - 1e-6)
        })
        .collect()
}

/// Drain for one step under an optional profile.
pub fn apply_energy_anomaly(
    profile: Option<&AttackProfile>,
    base_rate: f64,
    dt: f64,
    clock: f64,
) -> f64 {
    match profile {
        Some(p) if p.active_at(clock) => p.energy_anomaly_factor * base_rate * dt,
        _ => base_rate * dt,
    }
}

/// received = disruption_efficiency * sent.
pub fn apply_charging_disruption(profile: &AttackProfile, sent: f64) -> f64 {
    debug_assert!(sent >= 0.0);
    profile.disruption_efficiency * sent
}

/// Effective received/sent factor of a node at a given time.
pub fn disruption_factor(profile: Option<&AttackProfile>, clock: f64) -> f64 {
    match profile {
        Some(p) if p.active_at(clock) => p.disruption_efficiency,
        _ => 1.0,
    }
}

/// Effective baseline rate used by the flood sampler.
pub fn effective_baseline_rate(spec: &AttackSpec, network: &NetworkConfig) -> f64 {
    spec.baseline_rate(network)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::AttackTier;

    #[test]
    fn hai_fraction_selects_forty_of_one_hundred() {
        let mut spec = AttackSpec::for_tier(AttackTier::Hai);
        spec.intensity_fraction = 0.40;
        let a = assign_malicious_nodes(100, &spec);
        assert_eq!(a.ground_truth.len(), 40);
        assert_eq!(a.profiles.iter().filter(|p| p.is_some()).count(), 40);
        assert!(a.warnings.is_empty());
    }

    #[test]
    fn zero_fraction_gives_empty_truth() {
        let spec = AttackSpec::none();
        let a = assign_malicious_nodes(100, &spec);
        assert!(a.ground_truth.is_empty());
        assert!(a.warnings.is_empty());
    }

    #[test]
    fn tiny_fraction_warns() {
        let mut spec = AttackSpec::for_tier(AttackTier::Custom);
        spec.intensity_fraction = 0.04;
        let a = assign_malicious_nodes(10, &spec);
        assert!(a.ground_truth.is_empty());
        assert_eq!(a.warnings.len(), 1);
    }

    #[test]
    fn seeds_change_members_not_cardinality() {
        let mut spec = AttackSpec::for_tier(AttackTier::Lai);
        spec.intensity_fraction = 0.05;
        let a = assign_malicious_nodes(100, &spec);
        spec.rng_seed = 77;
        let b = assign_malicious_nodes(100, &spec);
        assert_eq!(a.ground_truth.len(), 5);
        assert_eq!(b.ground_truth.len(), 5);
        assert_ne!(a.ground_truth, b.ground_truth);
    }

    #[test]
    fn factors_fall_in_tier_ranges() {
        let spec = AttackSpec::for_tier(AttackTier::Mai);
        let a = assign_malicious_nodes(200, &spec);
        for p in a.profiles.iter().flatten() {
            assert!((3.0..=5.0).contains(&p.request_flood_factor));
            assert_eq!(p.energy_anomaly_factor, 0.3);
            assert_eq!(p.disruption_efficiency, 0.5);
        }
    }

    #[test]
    fn flood_is_gated_by_activation() {
        let profile = AttackProfile {
            node_id: NodeId(3),
            request_flood_factor: 5.0,
            energy_anomaly_factor: 1.0,
            disruption_efficiency: 1.0,
            active_from: 100.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let fakes = apply_request_flood(&profile, 50.0, 1.0, 0.01, 0.15, &mut rng);
        assert!(fakes.is_empty());
        let mut any = 0;
        for _ in 0..10_000 {
            any += apply_request_flood(&profile, 200.0, 1.0, 0.01, 0.15, &mut rng).len();
        }
        assert!(any > 0);
    }

    #[test]
    fn flood_poisson_mean_matches_monte_carlo() {
        // factor 5, baseline 1e-3/s, horizon 1e4 s => mean 50 fakes.
        let profile = AttackProfile {
            node_id: NodeId(0),
            request_flood_factor: 5.0,
            energy_anomaly_factor: 1.0,
            disruption_efficiency: 1.0,
            active_from: 0.0,
        };
        let trials = 1_000;
        let mut total = 0usize;
        for seed in 0..trials {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            // Sample the whole horizon in one Poisson draw per 100 s block.
            for block in 0..100 {
                total += apply_request_flood(
                    &profile,
                    block as f64 * 100.0,
                    100.0,
                    1e-3,
                    0.15,
                    &mut rng,
                )
                .len();
            }
        }
        let mean = total as f64 / trials as f64;
        // 3 sigma of the Monte-Carlo mean: 3 * sqrt(50 / trials).
        let band = 3.0 * (50.0f64 / trials as f64).sqrt();
        assert!(
            (mean - 50.0).abs() < band,
            "mean {mean} outside 50 +/- {band}"
        );
    }

    #[test]
    fn forged_residuals_sit_just_below_threshold() {
        let profile = AttackProfile {
            node_id: NodeId(0),
            request_flood_factor: 8.0,
            energy_anomaly_factor: 0.1,
            disruption_efficiency: 0.3,
            active_from: 0.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut seen = 0;
        for _ in 0..20_000 {
            for forged in apply_request_flood(&profile, 10.0, 1.0, 0.01, 0.15, &mut rng) {
                assert!(forged < 0.15 && forged > 0.15 * 0.94);
                seen += 1;
            }
        }
        assert!(seen > 10);
    }

    #[test]
    fn energy_anomaly_examples() {
        let mut profile = AttackProfile {
            node_id: NodeId(0),
            request_flood_factor: 1.0,
            energy_anomaly_factor: 1.0,
            disruption_efficiency: 1.0,
            active_from: 0.0,
        };
        // Neutral profile is honest drain.
        assert_eq!(apply_energy_anomaly(Some(&profile), 1e-4, 1.0, 10.0), 1e-4);
        profile.energy_anomaly_factor = 0.2;
        let d = apply_energy_anomaly(Some(&profile), 1e-4, 1.0, 10.0);
        assert!((d - 2e-5).abs() < 1e-20);
        profile.energy_anomaly_factor = 0.0;
        assert_eq!(apply_energy_anomaly(Some(&profile), 1e-4, 1.0, 10.0), 0.0);
    }

    #[test]
    fn disruption_examples() {
        let mut profile = AttackProfile {
            node_id: NodeId(0),
            request_flood_factor: 1.0,
            energy_anomaly_factor: 1.0,
            disruption_efficiency: 1.0,
            active_from: 0.0,
        };
        assert_eq!(apply_charging_disruption(&profile, 0.05), 0.05);
        profile.disruption_efficiency = 0.5;
        assert_eq!(apply_charging_disruption(&profile, 0.05), 0.025);
    }

    #[test]
    fn poisson_sampler_mean_and_determinism() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 200_000;
        let mean = 2.5;
        let total: u64 = (0..n).map(|_| poisson_sample(&mut rng, mean) as u64).sum();
        let sample_mean = total as f64 / n as f64;
        assert!((sample_mean - mean).abs() < 0.02);

        let mut a = ChaCha8Rng::seed_from_u64(9);
        let mut b = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            assert_eq!(poisson_sample(&mut a, 0.7), poisson_sample(&mut b, 0.7));
        }
    }
}
