//! The incentive loop: the principal proposes an arm, the player would pull
//! the greedy arm, and any deviation is paid for with a compensation that in
//! turn biases the player's feedback.

use crate::error::{Result, SimError};
use crate::model::{BanditInstance, DriftModel, SimState};
use crate::policy::{greedy_choice, ucb_bonus, PolicyKind, PostedView};
use crate::rng::{RandomSource, SeededStream};

/// Relative slack allowed when checking the UCB inequalities, absorbing
/// floating-point rounding in the index comparison.
const DIAGNOSTIC_SLACK: f64 = 1e-12;

/// One round of the audit log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundRecord {
    pub t: u64,
    /// Arm proposed by the principal and pulled by the player.
    pub chosen: usize,
    /// Player's greedy arm. Equals `chosen` during warm start.
    pub greedy: usize,
    pub compensated: bool,
    pub compensation: f64,
    pub drift: f64,
    pub raw_reward: f64,
    /// Value credited to the arm's feedback sum.
    pub feedback: f64,
    pub regret_increment: f64,
    pub cum_regret: f64,
    pub cum_compensation: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MechanismOptions {
    /// Clip credited feedback to [0, 1].
    pub project_feedback: bool,
    /// Pull every arm once, uncompensated, before the policy takes over.
    pub warm_start: bool,
    /// Check the UCB compensation and cumulative-drift inequalities every
    /// compensated round and count violations in [`SimState::diagnostics`].
    pub check_ucb_diagnostics: bool,
}

impl MechanismOptions {
    /// Defaults: projection on for epsilon-greedy only, warm start on,
    /// diagnostics off.
    pub fn for_policy(policy: &PolicyKind) -> Self {
        Self {
            project_feedback: matches!(policy, PolicyKind::EGreedy { .. }),
            warm_start: true,
            check_ucb_diagnostics: false,
        }
    }
}

/// Full log of a run plus its final state.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub records: Vec<RoundRecord>,
    pub final_state: SimState,
}

fn credit_value(raw: f64, options: &MechanismOptions) -> f64 {
    if options.project_feedback {
        raw.clamp(0.0, 1.0)
    } else {
        raw
    }
}

/// Pulls each arm once in index order with no compensation.
pub fn warm_start<R: RandomSource + ?Sized>(
    state: &mut SimState,
    instance: &BanditInstance,
    options: &MechanismOptions,
    rng: &mut R,
) -> Result<Vec<RoundRecord>> {
    if !state.is_fresh() {
        return Err(SimError::StateNotFresh);
    }
    if state.num_arms() != instance.num_arms() {
        return Err(SimError::InvalidParameter(format!(
            "state has {} arms, instance has {}",
            state.num_arms(),
            instance.num_arms()
        )));
    }
    let mut records = Vec::with_capacity(instance.num_arms());
    for arm in 0..instance.num_arms() {
        let t = state.round();
        let raw_reward = instance.sample_reward(arm, rng)?;
        let feedback = credit_value(raw_reward, options);
        if feedback != raw_reward {
            state.diagnostics_mut().projection_binding += 1;
        }
        state.credit(arm, feedback, 0.0, None, instance.gaps());
        records.push(RoundRecord {
            t,
            chosen: arm,
            greedy: arm,
            compensated: false,
            compensation: 0.0,
            drift: 0.0,
            raw_reward,
            feedback,
            regret_increment: instance.gaps()[arm],
            cum_regret: state.cum_regret(),
            cum_compensation: state.cum_compensation(),
        });
    }
    Ok(records)
}

/// Plays one round of the incentive loop.
pub fn step<R: RandomSource + ?Sized>(
    state: &mut SimState,
    policy: &PolicyKind,
    drift: &DriftModel,
    instance: &BanditInstance,
    options: &MechanismOptions,
    rng: &mut R,
) -> Result<RoundRecord> {
    if let Some(arm) = state.first_unpulled() {
        return Err(SimError::WarmStartIncomplete(arm));
    }
    let t = state.round();
    let view = PostedView::new(state);
    let chosen = policy.select(&view, rng)?;
    let greedy = greedy_choice(&view)?;
    let compensated = chosen != greedy;

    let (compensation, drift_value) = if compensated {
        // greedy is the posted-mean argmax, so this is >= 0
        let x = state.posted_mean(greedy)? - state.posted_mean(chosen)?;
        (x, drift.apply(x)?)
    } else {
        (0.0, 0.0)
    };

    let ucb_checked = compensated && options.check_ucb_diagnostics && matches!(policy, PolicyKind::Ucb);
    if ucb_checked {
        let bonus = ucb_bonus(state.arm(chosen)?.pulls(), t as f64);
        let diag = state.diagnostics_mut();
        diag.ucb_rounds_checked += 1;
        if compensation > bonus * (1.0 + DIAGNOSTIC_SLACK) + DIAGNOSTIC_SLACK {
            diag.ucb_compensation_violations += 1;
        }
    }

    let raw_reward = instance.sample_reward(chosen, rng)?;
    let unprojected = raw_reward + drift_value;
    let feedback = credit_value(unprojected, options);
    if feedback != unprojected {
        state.diagnostics_mut().projection_binding += 1;
    }
    state.credit(
        chosen,
        feedback,
        drift_value,
        compensated.then_some(compensation),
        instance.gaps(),
    );

    if ucb_checked {
        let arm = state.arm(chosen)?;
        let limit = 2.0 * drift.lipschitz() * (2.0 * arm.pulls() as f64 * (t as f64).ln()).sqrt();
        if arm.drift_sum() > limit * (1.0 + DIAGNOSTIC_SLACK) + DIAGNOSTIC_SLACK {
            state.diagnostics_mut().ucb_drift_violations += 1;
        }
    }

    Ok(RoundRecord {
        t,
        chosen,
        greedy,
        compensated,
        compensation,
        drift: drift_value,
        raw_reward,
        feedback,
        regret_increment: instance.gaps()[chosen],
        cum_regret: state.cum_regret(),
        cum_compensation: state.cum_compensation(),
    })
}

/// Runs `horizon` rounds on an explicit random stream, handing every record
/// to `observer`. Returns the final state.
pub fn run_with<R, F>(
    instance: &BanditInstance,
    policy: &PolicyKind,
    drift: &DriftModel,
    options: &MechanismOptions,
    horizon: u64,
    rng: &mut R,
    mut observer: F,
) -> Result<SimState>
where
    R: RandomSource + ?Sized,
    F: FnMut(&RoundRecord),
{
    policy.validate()?;
    let k = instance.num_arms();
    if horizon < k as u64 {
        return Err(SimError::HorizonTooShort { horizon, arms: k });
    }
    let mut state = SimState::new(k);
    if options.warm_start {
        for record in warm_start(&mut state, instance, options, rng)? {
            observer(&record);
        }
    }
    while state.round() <= horizon {
        let record = step(&mut state, policy, drift, instance, options, rng)?;
        observer(&record);
    }
    Ok(state)
}

/// Seeded run collecting the whole trajectory.
pub fn run(
    instance: &BanditInstance,
    policy: &PolicyKind,
    drift: &DriftModel,
    options: &MechanismOptions,
    horizon: u64,
    seed: u64,
) -> Result<Trajectory> {
    let mut rng = SeededStream::new(seed);
    run_on(instance, policy, drift, options, horizon, &mut rng)
}

/// Like [`run`] but on a caller-supplied random stream.
pub fn run_on<R: RandomSource + ?Sized>(
    instance: &BanditInstance,
    policy: &PolicyKind,
    drift: &DriftModel,
    options: &MechanismOptions,
    horizon: u64,
    rng: &mut R,
) -> Result<Trajectory> {
    let mut records = Vec::with_capacity(horizon as usize);
    let final_state = run_with(instance, policy, drift, options, horizon, rng, |r| {
        records.push(*r)
    })?;
    Ok(Trajectory {
        records,
        final_state,
    })
}
