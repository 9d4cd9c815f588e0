//! Environment, drift model and per-arm bookkeeping shared by every policy.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::rng::RandomSource;

/// Reward noise of the environment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "noise", rename_all = "lowercase")]
pub enum Noise {
    /// Rewards in {0, 1} with success probability equal to the arm mean.
    Bernoulli,
    /// Arm mean plus `sigma` times a standard normal draw.
    Gaussian { sigma: f64 },
}

/// Ground-truth arm means and noise. Only the simulator sees these.
#[derive(Debug, Clone, PartialEq)]
pub struct BanditInstance {
    means: Vec<f64>,
    noise: Noise,
    best: usize,
    gaps: Vec<f64>,
    min_gap: f64,
}

impl BanditInstance {
    pub fn new(means: Vec<f64>, noise: Noise) -> Result<Self> {
        if means.len() < 2 {
            return Err(SimError::TooFewArms(means.len()));
        }
        for (arm, &mean) in means.iter().enumerate() {
            if !mean.is_finite() || !(0.0..=1.0).contains(&mean) {
                return Err(SimError::MeanOutOfRange { arm, mean });
            }
        }
        if let Noise::Gaussian { sigma } = noise {
            if !sigma.is_finite() || sigma < 0.0 {
                return Err(SimError::InvalidNoise(sigma));
            }
        }
        let (gaps, min_gap) = gaps(&means)?;
        let best = gaps.iter().position(|&g| g == 0.0).expect("best arm has zero gap");
        Ok(Self {
            means,
            noise,
            best,
            gaps,
            min_gap,
        })
    }

    /// The nine-arm instance `[0.9, 0.8, ..., 0.1]` used by the reference experiments.
    pub fn reference_means() -> Vec<f64> {
        vec![0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3, 0.2, 0.1]
    }

    pub fn num_arms(&self) -> usize {
        self.means.len()
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn noise(&self) -> Noise {
        self.noise
    }

    pub fn best_arm(&self) -> usize {
        self.best
    }

    /// Per-arm gap `mu_best - mu_i`, zero for the best arm.
    pub fn gaps(&self) -> &[f64] {
        &self.gaps
    }

    /// Smallest positive gap.
    pub fn min_gap(&self) -> f64 {
        self.min_gap
    }

    /// Smallest separation between any two arm means.
    pub fn min_pairwise_gap(&self) -> f64 {
        let mut sorted = self.means.clone();
        sorted.sort_by(f64::total_cmp);
        sorted
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min)
    }

    pub fn sample_reward<R: RandomSource + ?Sized>(&self, arm: usize, rng: &mut R) -> Result<f64> {
        let mean = *self.means.get(arm).ok_or(SimError::ArmOutOfRange {
            arm,
            arms: self.means.len(),
        })?;
        match self.noise {
            Noise::Bernoulli => Ok(if rng.uniform()? < mean { 1.0 } else { 0.0 }),
            Noise::Gaussian { sigma } => Ok(mean + sigma * rng.standard_normal()?),
        }
    }
}

/// Per-arm gaps and the minimum positive gap. Fails unless exactly one arm
/// attains the maximal mean.
pub fn gaps(means: &[f64]) -> Result<(Vec<f64>, f64)> {
    if means.len() < 2 {
        return Err(SimError::TooFewArms(means.len()));
    }
    let mut best = 0;
    for (i, &m) in means.iter().enumerate().skip(1) {
        if m > means[best] {
            best = i;
        }
    }
    if let Some(other) = means
        .iter()
        .enumerate()
        .position(|(i, &m)| i != best && m == means[best])
    {
        let (first, second) = if other < best { (other, best) } else { (best, other) };
        return Err(SimError::NonUniqueOptimum { first, second });
    }
    let top = means[best];
    let gaps: Vec<f64> = means.iter().map(|&m| top - m).collect();
    let min_gap = gaps
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != best)
        .map(|(_, &g)| g)
        .fold(f64::INFINITY, f64::min);
    Ok((gaps, min_gap))
}

/// Shape of the drift function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DriftKind {
    Zero,
    Linear,
    ClippedLinear { cap: f64 },
}

/// Bias added to the feedback of a compensated pull, as a function of the
/// compensation paid. Non-decreasing, zero at zero, `lipschitz`-Lipschitz.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftModel {
    kind: DriftKind,
    lipschitz: f64,
}

impl DriftModel {
    pub fn new(kind: DriftKind, lipschitz: f64) -> Result<Self> {
        if !lipschitz.is_finite() || lipschitz < 0.0 {
            return Err(SimError::InvalidDrift {
                name: "l",
                value: lipschitz,
            });
        }
        if let DriftKind::ClippedLinear { cap } = kind {
            if !cap.is_finite() || cap < 0.0 {
                return Err(SimError::InvalidDrift {
                    name: "cap",
                    value: cap,
                });
            }
        }
        Ok(Self { kind, lipschitz })
    }

    pub fn zero() -> Self {
        Self {
            kind: DriftKind::Zero,
            lipschitz: 0.0,
        }
    }

    pub fn linear(lipschitz: f64) -> Result<Self> {
        Self::new(DriftKind::Linear, lipschitz)
    }

    pub fn kind(&self) -> DriftKind {
        self.kind
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    /// `f(x)` for a compensation `x >= 0`.
    pub fn apply(&self, x: f64) -> Result<f64> {
        if !(x >= 0.0) {
            return Err(SimError::NegativeCompensation(x));
        }
        Ok(match self.kind {
            DriftKind::Zero => 0.0,
            DriftKind::Linear => self.lipschitz * x,
            DriftKind::ClippedLinear { cap } => (self.lipschitz * x).min(cap),
        })
    }
}

/// Counters for one arm.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ArmState {
    pulls: u64,
    feedback_sum: f64,
    drift_sum: f64,
    comp_count: u64,
    comp_sum: f64,
}

impl ArmState {
    /// Builds an arm state from raw counters, checking the counter invariants.
    pub fn from_parts(
        pulls: u64,
        feedback_sum: f64,
        drift_sum: f64,
        comp_count: u64,
        comp_sum: f64,
    ) -> Result<Self> {
        let ok = comp_count <= pulls
            && drift_sum >= 0.0
            && comp_sum >= 0.0
            && (pulls > 0 || (feedback_sum == 0.0 && drift_sum == 0.0 && comp_sum == 0.0));
        if !ok {
            return Err(SimError::InvalidParameter(format!(
                "inconsistent arm counters: pulls={pulls} feedback_sum={feedback_sum} \
                 drift_sum={drift_sum} comp_count={comp_count} comp_sum={comp_sum}"
            )));
        }
        Ok(Self {
            pulls,
            feedback_sum,
            drift_sum,
            comp_count,
            comp_sum,
        })
    }

    pub fn pulls(&self) -> u64 {
        self.pulls
    }

    pub fn feedback_sum(&self) -> f64 {
        self.feedback_sum
    }

    /// Cumulative drift credited to this arm.
    pub fn drift_sum(&self) -> f64 {
        self.drift_sum
    }

    /// Number of pulls made with compensation.
    pub fn comp_count(&self) -> u64 {
        self.comp_count
    }

    pub fn comp_sum(&self) -> f64 {
        self.comp_sum
    }

    /// Average credited (drifted) feedback, the only statistic players and the
    /// principal see.
    pub fn posted_mean(&self, arm: usize) -> Result<f64> {
        if self.pulls == 0 {
            return Err(SimError::NoPulls(arm));
        }
        Ok(self.feedback_sum / self.pulls as f64)
    }

    /// Average feedback with the drift removed. Diagnostic only.
    pub fn true_empirical_mean(&self, arm: usize) -> Result<f64> {
        if self.pulls == 0 {
            return Err(SimError::NoPulls(arm));
        }
        Ok((self.feedback_sum - self.drift_sum) / self.pulls as f64)
    }

    pub(crate) fn record(&mut self, feedback: f64, drift: f64, compensation: Option<f64>) {
        self.pulls += 1;
        self.feedback_sum += feedback;
        self.drift_sum += drift;
        if let Some(x) = compensation {
            self.comp_count += 1;
            self.comp_sum += x;
        }
    }
}

/// Counters collected while a run is checked in diagnostic mode.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Diagnostics {
    /// Rounds where the [0, 1] projection changed the credited feedback.
    pub projection_binding: u64,
    /// Compensated UCB rounds whose payment exceeded the pulled arm's bonus.
    pub ucb_compensation_violations: u64,
    /// Compensated UCB rounds whose arm drift exceeded `2 l sqrt(2 n ln t)`.
    pub ucb_drift_violations: u64,
    /// Compensated UCB rounds that were checked.
    pub ucb_rounds_checked: u64,
}

/// Global round state of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    round: u64,
    arms: Vec<ArmState>,
    cum_regret: f64,
    cum_compensation: f64,
    diagnostics: Diagnostics,
}

impl SimState {
    pub fn new(num_arms: usize) -> Self {
        Self {
            round: 1,
            arms: vec![ArmState::default(); num_arms],
            cum_regret: 0.0,
            cum_compensation: 0.0,
            diagnostics: Diagnostics::default(),
        }
    }

    /// Builds a state from explicit arm counters, as if `round - 1` pulls had
    /// been made. Regret is recomputed from the instance gaps.
    pub fn from_arms(arms: Vec<ArmState>, instance: &BanditInstance) -> Result<Self> {
        if arms.len() != instance.num_arms() {
            return Err(SimError::InvalidParameter(format!(
                "{} arm states for an instance with {} arms",
                arms.len(),
                instance.num_arms()
            )));
        }
        let pulls: u64 = arms.iter().map(|a| a.pulls).sum();
        let mut state = Self {
            round: pulls + 1,
            cum_compensation: arms.iter().map(|a| a.comp_sum).sum(),
            arms,
            cum_regret: 0.0,
            diagnostics: Diagnostics::default(),
        };
        state.cum_regret = state.regret_from_pulls(instance.gaps());
        Ok(state)
    }

    /// Current (1-based) round, i.e. the round about to be played.
    pub fn round(&self) -> u64 {
        self.round
    }

    pub fn num_arms(&self) -> usize {
        self.arms.len()
    }

    pub fn arms(&self) -> &[ArmState] {
        &self.arms
    }

    pub fn arm(&self, arm: usize) -> Result<&ArmState> {
        self.arms.get(arm).ok_or(SimError::ArmOutOfRange {
            arm,
            arms: self.arms.len(),
        })
    }

    pub fn cum_regret(&self) -> f64 {
        self.cum_regret
    }

    pub fn cum_compensation(&self) -> f64 {
        self.cum_compensation
    }

    pub fn diagnostics(&self) -> &Diagnostics {
        &self.diagnostics
    }

    pub(crate) fn diagnostics_mut(&mut self) -> &mut Diagnostics {
        &mut self.diagnostics
    }

    #[cfg(test)]
    pub(crate) fn with_round(mut self, round: u64) -> Self {
        self.round = round;
        self
    }

    pub fn is_fresh(&self) -> bool {
        self.round == 1 && self.arms.iter().all(|a| a.pulls == 0)
    }

    /// First arm without a pull, if any.
    pub fn first_unpulled(&self) -> Option<usize> {
        self.arms.iter().position(|a| a.pulls == 0)
    }

    pub fn posted_mean(&self, arm: usize) -> Result<f64> {
        self.arm(arm)?.posted_mean(arm)
    }

    pub fn true_empirical_mean(&self, arm: usize) -> Result<f64> {
        self.arm(arm)?.true_empirical_mean(arm)
    }

    pub fn comp_rounds(&self) -> u64 {
        self.arms.iter().map(|a| a.comp_count).sum()
    }

    /// `sum_i gap_i * pulls_i`, summed in arm order.
    pub fn regret_from_pulls(&self, gaps: &[f64]) -> f64 {
        self.arms
            .iter()
            .zip(gaps)
            .map(|(a, &g)| g * a.pulls as f64)
            .sum()
    }

    /// Credits one pull and advances the round. Regret is recomputed from the
    /// pull counts so that it always equals `sum_i gap_i * pulls_i` exactly.
    pub(crate) fn credit(
        &mut self,
        arm: usize,
        feedback: f64,
        drift: f64,
        compensation: Option<f64>,
        gaps: &[f64],
    ) {
        self.arms[arm].record(feedback, drift, compensation);
        self.cum_compensation += compensation.unwrap_or(0.0);
        self.cum_regret = self.regret_from_pulls(gaps);
        self.round += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{ScriptedStream, SeededStream};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn arm(pulls: u64, feedback_sum: f64, drift_sum: f64) -> ArmState {
        let comp = if drift_sum > 0.0 { 1 } else { 0 };
        ArmState::from_parts(pulls, feedback_sum, drift_sum, comp, 0.0).unwrap()
    }

    #[test]
    fn drift_apply_examples() {
        let lin = DriftModel::linear(1.1).unwrap();
        assert_relative_eq!(lin.apply(0.2).unwrap(), 0.22, epsilon = 1e-15);
        let clipped = DriftModel::new(DriftKind::ClippedLinear { cap: 0.1 }, 2.0).unwrap();
        assert_eq!(clipped.apply(0.3).unwrap(), 0.1);
        for model in [DriftModel::zero(), lin, clipped] {
            assert_eq!(model.apply(0.0).unwrap(), 0.0);
        }
        assert_eq!(DriftModel::zero().apply(5.0).unwrap(), 0.0);
    }

    #[test]
    fn drift_rejects_negative_input_and_parameters() {
        let lin = DriftModel::linear(1.0).unwrap();
        assert_eq!(lin.apply(-0.1), Err(SimError::NegativeCompensation(-0.1)));
        assert!(lin.apply(f64::NAN).is_err());
        assert!(DriftModel::linear(-1.0).is_err());
        assert!(DriftModel::new(DriftKind::ClippedLinear { cap: -0.5 }, 1.0).is_err());
    }

    #[test]
    fn posted_mean_examples() {
        assert_relative_eq!(arm(4, 2.2, 0.0).posted_mean(0).unwrap(), 0.55, epsilon = 1e-15);

        let single = arm(1, 0.9, 0.0);
        assert_eq!(single.posted_mean(0).unwrap(), 0.9);
        assert_eq!(single.true_empirical_mean(0).unwrap(), 0.9);

        let drifted = arm(2, 1.2, 0.2);
        assert_relative_eq!(drifted.posted_mean(0).unwrap(), 0.6, epsilon = 1e-15);
        assert_relative_eq!(drifted.true_empirical_mean(0).unwrap(), 0.5, epsilon = 1e-15);
        assert_relative_eq!(drifted.drift_sum() / 2.0, 0.1, epsilon = 1e-15);
    }

    #[test]
    fn true_empirical_mean_examples() {
        assert_relative_eq!(arm(3, 2.1, 0.6).true_empirical_mean(0).unwrap(), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn statistics_undefined_without_pulls() {
        let a = ArmState::default();
        assert_eq!(a.posted_mean(3), Err(SimError::NoPulls(3)));
        assert_eq!(a.true_empirical_mean(3), Err(SimError::NoPulls(3)));
    }

    #[test]
    fn arm_counters_are_validated() {
        assert!(ArmState::from_parts(1, 0.5, 0.0, 2, 0.0).is_err());
        assert!(ArmState::from_parts(0, 0.5, 0.0, 0, 0.0).is_err());
        assert!(ArmState::from_parts(2, 0.5, -0.1, 0, 0.0).is_err());
    }

    #[test]
    fn sample_reward_examples() {
        let inst = BanditInstance::new(vec![1.0, 0.0], Noise::Bernoulli).unwrap();
        let mut rng = SeededStream::new(3);
        for _ in 0..100 {
            assert_eq!(inst.sample_reward(0, &mut rng).unwrap(), 1.0);
            assert_eq!(inst.sample_reward(1, &mut rng).unwrap(), 0.0);
        }

        let quiet = BanditInstance::new(vec![0.7, 0.2], Noise::Gaussian { sigma: 0.0 }).unwrap();
        assert_eq!(quiet.sample_reward(0, &mut rng).unwrap(), 0.7);

        let noisy = BanditInstance::new(vec![0.9, 0.2], Noise::Gaussian { sigma: 1.0 }).unwrap();
        let mut scripted = ScriptedStream::new(vec![-0.5]);
        assert_relative_eq!(noisy.sample_reward(0, &mut scripted).unwrap(), 0.4, epsilon = 1e-15);

        assert_eq!(
            noisy.sample_reward(2, &mut rng),
            Err(SimError::ArmOutOfRange { arm: 2, arms: 2 })
        );
    }

    #[test]
    fn bernoulli_empirical_mean_within_three_sigma() {
        let mu = 0.3;
        let inst = BanditInstance::new(vec![0.9, mu], Noise::Bernoulli).unwrap();
        let mut rng = SeededStream::new(2024);
        let n = 100_000;
        let mut sum = 0.0;
        for _ in 0..n {
            let r = inst.sample_reward(1, &mut rng).unwrap();
            assert!(r == 0.0 || r == 1.0);
            sum += r;
        }
        let sd = (mu * (1.0 - mu) / n as f64).sqrt();
        assert!((sum / n as f64 - mu).abs() < 3.0 * sd);
    }

    #[test]
    fn gaps_examples() {
        let (g, min) = gaps(&BanditInstance::reference_means()).unwrap();
        let expected = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8];
        for (a, b) in g.iter().zip(expected) {
            assert_relative_eq!(*a, b, epsilon = 1e-12);
        }
        assert_relative_eq!(min, 0.1, epsilon = 1e-12);

        let (_, min) = gaps(&[1.0, 0.0]).unwrap();
        assert_eq!(min, 1.0);

        assert_eq!(
            gaps(&[0.5, 0.5]),
            Err(SimError::NonUniqueOptimum { first: 0, second: 1 })
        );
    }

    #[test]
    fn instance_validation() {
        assert_eq!(
            BanditInstance::new(vec![0.5], Noise::Bernoulli),
            Err(SimError::TooFewArms(1))
        );
        assert!(BanditInstance::new(vec![0.5, 1.5], Noise::Bernoulli).is_err());
        assert!(BanditInstance::new(vec![0.5, 0.2], Noise::Gaussian { sigma: -1.0 }).is_err());
        let inst = BanditInstance::new(vec![0.2, 0.8, 0.5], Noise::Bernoulli).unwrap();
        assert_eq!(inst.best_arm(), 1);
        assert_relative_eq!(inst.min_gap(), 0.3, epsilon = 1e-12);
        assert_relative_eq!(inst.min_pairwise_gap(), 0.3, epsilon = 1e-12);
    }

    fn drift_models() -> impl Strategy<Value = DriftModel> {
        prop_oneof![
            Just(DriftModel::zero()),
            (0.0..5.0f64).prop_map(|l| DriftModel::linear(l).unwrap()),
            (0.0..5.0f64, 0.0..2.0f64).prop_map(|(l, cap)| DriftModel::new(
                DriftKind::ClippedLinear { cap },
                l
            )
            .unwrap()),
        ]
    }

    proptest! {
        #[test]
        fn drift_axioms(model in drift_models(), x in 0.0..10.0f64, y in 0.0..10.0f64) {
            prop_assert_eq!(model.apply(0.0).unwrap(), 0.0);
            let (fx, fy) = (model.apply(x).unwrap(), model.apply(y).unwrap());
            if x <= y {
                prop_assert!(fx <= fy);
            }
            prop_assert!((fx - fy).abs() <= model.lipschitz() * (x - y).abs() + 1e-12);
        }

        #[test]
        fn posted_mean_decomposes(
            pulls in 1u64..10_000,
            rewards in -5.0..5.0f64,
            drift in 0.0..5.0f64,
        ) {
            let a = ArmState::from_parts(pulls, rewards + drift, drift, 0, 0.0).unwrap();
            let posted = a.posted_mean(0).unwrap();
            let rebuilt = a.true_empirical_mean(0).unwrap() + drift / pulls as f64;
            prop_assert!((posted - rebuilt).abs() <= 1e-9 * posted.abs().max(1.0));
        }

        #[test]
        fn gaps_zero_only_at_best(means in proptest::collection::vec(0.0..1.0f64, 2..12)) {
            if let Ok((g, min)) = gaps(&means) {
                let best = g.iter().position(|&x| x == 0.0).unwrap();
                prop_assert_eq!(g.iter().filter(|&&x| x == 0.0).count(), 1);
                prop_assert_eq!(g[best], 0.0);
                let positive_min = g.iter().cloned().filter(|&x| x > 0.0).fold(f64::INFINITY, f64::min);
                prop_assert_eq!(min, positive_min);
            }
        }
    }
}
