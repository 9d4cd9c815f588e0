//! Arm-selection rules for the principal and the player's greedy rule.
//!
//! Policies only ever see a [`PostedView`]: posted (drifted) means, pull
//! counts and the round number. True means and drift-free averages are not
//! reachable from here.
//!
//! Ties are broken towards the lowest arm index everywhere. Per round,
//! epsilon-greedy draws one uniform for the explore coin and, when exploring,
//! one more uniform `u` mapped to arm `floor(u * K)`. Thompson sampling draws
//! `K` standard normals in arm order.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::model::SimState;
use crate::rng::RandomSource;

/// Read-only window on a [`SimState`] exposing what the principal may see.
#[derive(Debug, Clone, Copy)]
pub struct PostedView<'a> {
    state: &'a SimState,
}

impl<'a> PostedView<'a> {
    pub fn new(state: &'a SimState) -> Self {
        Self { state }
    }

    pub fn num_arms(&self) -> usize {
        self.state.num_arms()
    }

    pub fn round(&self) -> u64 {
        self.state.round()
    }

    pub fn pulls(&self, arm: usize) -> Result<u64> {
        Ok(self.state.arm(arm)?.pulls())
    }

    pub fn posted_mean(&self, arm: usize) -> Result<f64> {
        self.state.posted_mean(arm)
    }

    fn require_warm(&self) -> Result<()> {
        match self.state.first_unpulled() {
            Some(arm) => Err(SimError::WarmStartIncomplete(arm)),
            None => Ok(()),
        }
    }

    /// Lowest-index argmax of `score(arm)` over all arms.
    fn argmax_by<F>(&self, mut score: F) -> Result<usize>
    where
        F: FnMut(usize) -> Result<f64>,
    {
        self.require_warm()?;
        let mut best = 0;
        let mut best_score = score(0)?;
        for arm in 1..self.num_arms() {
            let s = score(arm)?;
            if s > best_score {
                best = arm;
                best_score = s;
            }
        }
        Ok(best)
    }
}

/// Principal's selection rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum PolicyKind {
    Ucb,
    #[serde(rename = "egreedy")]
    EGreedy {
        c: f64,
    },
    Thompson,
    /// Baseline that always proposes the player's greedy arm, so nothing is
    /// ever compensated.
    Greedy,
}

impl PolicyKind {
    pub fn validate(&self) -> Result<()> {
        if let PolicyKind::EGreedy { c } = *self {
            if !(c > 0.0) || !c.is_finite() {
                return Err(SimError::InvalidParameter(format!(
                    "epsilon-greedy constant c must be positive, got {c}"
                )));
            }
        }
        Ok(())
    }

    pub fn name(&self) -> &'static str {
        match self {
            PolicyKind::Ucb => "ucb",
            PolicyKind::EGreedy { .. } => "egreedy",
            PolicyKind::Thompson => "thompson",
            PolicyKind::Greedy => "greedy",
        }
    }

    /// Picks `I_t` for the current round.
    pub fn select<R: RandomSource + ?Sized>(&self, view: &PostedView<'_>, rng: &mut R) -> Result<usize> {
        match *self {
            PolicyKind::Ucb => ucb_select(view),
            PolicyKind::EGreedy { c } => egreedy_select(view, c, rng),
            PolicyKind::Thompson => thompson_sample(view, rng),
            PolicyKind::Greedy => greedy_choice(view),
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PolicyKind::EGreedy { c } => write!(f, "egreedy(c={c})"),
            other => f.write_str(other.name()),
        }
    }
}

/// UCB score `posted + sqrt(2 ln t / pulls)`.
pub fn ucb_index(posted: f64, pulls: u64, t: f64) -> Result<f64> {
    if pulls == 0 {
        return Err(SimError::InvalidParameter("ucb index needs pulls >= 1".into()));
    }
    if !(t >= 1.0) {
        return Err(SimError::InvalidParameter(format!("ucb index needs t >= 1, got {t}")));
    }
    Ok(posted + ucb_bonus(pulls, t))
}

pub(crate) fn ucb_bonus(pulls: u64, t: f64) -> f64 {
    (2.0 * t.ln() / pulls as f64).sqrt()
}

pub fn ucb_select(view: &PostedView<'_>) -> Result<usize> {
    let t = view.round() as f64;
    view.argmax_by(|arm| ucb_index(view.posted_mean(arm)?, view.pulls(arm)?, t))
}

/// Exploration probability `min(1, cK/t)`.
pub fn epsilon_schedule(c: f64, arms: usize, t: u64) -> f64 {
    (c * arms as f64 / t as f64).min(1.0)
}

pub fn egreedy_select<R: RandomSource + ?Sized>(
    view: &PostedView<'_>,
    c: f64,
    rng: &mut R,
) -> Result<usize> {
    view.require_warm()?;
    let k = view.num_arms();
    let eps = epsilon_schedule(c, k, view.round());
    if rng.uniform()? < eps {
        let u = rng.uniform()?;
        Ok(((u * k as f64) as usize).min(k - 1))
    } else {
        greedy_choice(view)
    }
}

/// Gaussian Thompson sampling: `theta_i = posted_i + z_i / sqrt(pulls_i + 1)`.
pub fn thompson_sample<R: RandomSource + ?Sized>(view: &PostedView<'_>, rng: &mut R) -> Result<usize> {
    view.argmax_by(|arm| {
        let z = rng.standard_normal()?;
        Ok(view.posted_mean(arm)? + z / ((view.pulls(arm)? + 1) as f64).sqrt())
    })
}

/// The player's choice `G_t`: highest posted mean.
pub fn greedy_choice(view: &PostedView<'_>) -> Result<usize> {
    view.argmax_by(|arm| view.posted_mean(arm))
}
