//! Replicated, seeded sweeps over policies and drift coefficients.
//!
//! Each `(policy, l, replication)` triple runs on its own stream seeded with
//! [`derive_seed`], so results do not depend on scheduling or thread count.
//!
//! # Seed derivation
//!
//! ```text
//! derive_seed(m, p, l, r) = s(s(s(s(m) ^ p) ^ l) ^ r)
//! s(x) = splitmix64 finalizer of x + 0x9E3779B97F4A7C15
//! ```
//!
//! where `p` is the position of the policy in the config list and `l` the
//! position of the drift coefficient in `l_values`. For example
//! `derive_seed(20200101, 0, 0, 0) == 0xC2BF_5CC2_E05D_286E`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{summarize, SummaryMetrics};
use crate::error::{Result, SimError};
use crate::mechanism::{run_with, MechanismOptions};
use crate::model::{BanditInstance, DriftKind, DriftModel, Noise};
use crate::policy::PolicyKind;
use crate::rng::{splitmix64, SeededStream};

pub fn derive_seed(master: u64, policy_id: u64, l_index: u64, rep: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(splitmix64(master) ^ policy_id) ^ l_index) ^ rep)
}

fn default_stride() -> u64 {
    10
}

fn default_replications() -> usize {
    50
}

/// Environment section of a config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceSpec {
    pub means: Vec<f64>,
    #[serde(flatten)]
    pub noise: Noise,
}

impl InstanceSpec {
    pub fn build(&self) -> Result<BanditInstance> {
        BanditInstance::new(self.means.clone(), self.noise)
    }
}

/// A policy entry with optional mechanism overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySpec {
    #[serde(flatten)]
    pub kind: PolicyKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub project_feedback: Option<bool>,
}

impl PolicySpec {
    pub fn options(&self) -> MechanismOptions {
        let mut options = MechanismOptions::for_policy(&self.kind);
        if let Some(p) = self.project_feedback {
            options.project_feedback = p;
        }
        options
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftSpec {
    #[serde(flatten)]
    pub kind: DriftKind,
    pub l_values: Vec<f64>,
}

/// Description of a replicated sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub master_seed: u64,
    pub horizon: u64,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default)]
    pub capture_trajectories: bool,
    #[serde(default = "default_stride")]
    pub trajectory_stride: u64,
    pub instance: InstanceSpec,
    pub drift: DriftSpec,
    pub policies: Vec<PolicySpec>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| SimError::InvalidConfig(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(SimError::InvalidConfig(msg));
        if self.drift.l_values.is_empty() {
            return bad("drift.l_values must not be empty".into());
        }
        if self.replications == 0 {
            return bad("replications must be at least 1".into());
        }
        if self.trajectory_stride == 0 {
            return bad("trajectory_stride must be at least 1".into());
        }
        if self.policies.is_empty() {
            return bad("at least one policy is required".into());
        }
        let instance = self.instance.build()?;
        if self.horizon < instance.num_arms() as u64 {
            return Err(SimError::HorizonTooShort {
                horizon: self.horizon,
                arms: instance.num_arms(),
            });
        }
        for &l in &self.drift.l_values {
            DriftModel::new(self.drift.kind, l)?;
        }
        for p in &self.policies {
            p.kind.validate()?;
        }
        Ok(())
    }

    /// Rounds at which curves are sampled: `min(k * stride, T)` for
    /// `k = 1..=ceil(T / stride)`.
    pub fn curve_rounds(&self) -> Vec<u64> {
        let stride = self.trajectory_stride;
        (1..=self.horizon.div_ceil(stride))
            .map(|k| (k * stride).min(self.horizon))
            .collect()
    }
}

/// Sample mean and standard deviation (n - 1 denominator, 0 when n = 1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    /// Values are summed in sorted order so the result does not depend on the
    /// order of the samples.
    pub fn of(values: &[f64]) -> Stat {
        assert!(!values.is_empty(), "statistic of an empty sample");
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len() as f64;
        let mean = sorted.iter().sum::<f64>() / n;
        if sorted.len() == 1 {
            return Stat { mean, std: 0.0 };
        }
        let mut sq: Vec<f64> = sorted.iter().map(|v| (v - mean) * (v - mean)).collect();
        sq.sort_by(f64::total_cmp);
        Stat {
            mean,
            std: (sq.iter().sum::<f64>() / (n - 1.0)).sqrt(),
        }
    }

    /// Standard error of the mean for `n` samples.
    pub fn std_error(&self, n: usize) -> f64 {
        self.std / (n as f64).sqrt()
    }
}

/// Mean/std of each headline metric over a set of runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AggregateStats {
    pub regret: Stat,
    pub compensation: Stat,
    pub comp_rounds: Stat,
    pub arm1_rel_error: Stat,
}

pub fn aggregate(samples: &[SummaryMetrics]) -> Result<AggregateStats> {
    if samples.is_empty() {
        return Err(SimError::InvalidParameter("cannot aggregate zero samples".into()));
    }
    let field = |f: fn(&SummaryMetrics) -> f64| Stat::of(&samples.iter().map(f).collect::<Vec<_>>());
    Ok(AggregateStats {
        regret: field(|s| s.regret),
        compensation: field(|s| s.compensation),
        comp_rounds: field(|s| s.comp_rounds as f64),
        arm1_rel_error: field(|s| s.arm1_rel_error),
    })
}

/// Mean cumulative curves sampled at [`ExperimentConfig::curve_rounds`].
#[derive(Debug, Clone, PartialEq)]
pub struct Curves {
    pub rounds: Vec<u64>,
    pub cum_regret: Vec<f64>,
    pub cum_compensation: Vec<f64>,
}

/// Result for one `(policy, l)` cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub policy_index: usize,
    pub policy: PolicyKind,
    pub l_index: usize,
    pub l: f64,
    pub replications: usize,
    pub stats: AggregateStats,
    pub curves: Option<Curves>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateResult {
    /// Cells ordered by policy, then by l.
    pub cells: Vec<CellResult>,
}

impl AggregateResult {
    pub fn cell(&self, policy_index: usize, l_index: usize) -> Option<&CellResult> {
        self.cells
            .iter()
            .find(|c| c.policy_index == policy_index && c.l_index == l_index)
    }
}

struct RepOutcome {
    summary: SummaryMetrics,
    curve: Option<(Vec<f64>, Vec<f64>)>,
}

fn run_one(config: &ExperimentConfig, instance: &BanditInstance, p: usize, li: usize, rep: usize) -> Result<RepOutcome> {
    let spec = &config.policies[p];
    let drift = DriftModel::new(config.drift.kind, config.drift.l_values[li])?;
    let seed = derive_seed(config.master_seed, p as u64, li as u64, rep as u64);
    let mut rng = SeededStream::new(seed);
    let mut curve = config.capture_trajectories.then(|| {
        let n = config.horizon.div_ceil(config.trajectory_stride) as usize;
        (Vec::with_capacity(n), Vec::with_capacity(n))
    });
    let stride = config.trajectory_stride;
    let horizon = config.horizon;
    let state = run_with(
        instance,
        &spec.kind,
        &drift,
        &spec.options(),
        horizon,
        &mut rng,
        |r| {
            if let Some((reg, comp)) = curve.as_mut() {
                if r.t % stride == 0 || r.t == horizon {
                    reg.push(r.cum_regret);
                    comp.push(r.cum_compensation);
                }
            }
        },
    )?;
    Ok(RepOutcome {
        summary: summarize(&state, instance)?,
        curve,
    })
}

/// Runs every `(policy, l, replication)` triple and aggregates per cell.
/// `jobs` bounds the worker threads; `None` uses the global pool.
pub fn run_experiment(config: &ExperimentConfig, jobs: Option<usize>) -> Result<AggregateResult> {
    config.validate()?;
    match jobs {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| SimError::InvalidParameter(format!("thread pool: {e}")))?;
            pool.install(|| run_experiment_inner(config))
        }
        None => run_experiment_inner(config),
    }
}

fn run_experiment_inner(config: &ExperimentConfig) -> Result<AggregateResult> {
    let instance = config.instance.build()?;
    let n_l = config.drift.l_values.len();
    let reps = config.replications;
    let triples: Vec<(usize, usize, usize)> = (0..config.policies.len())
        .flat_map(|p| (0..n_l).flat_map(move |li| (0..reps).map(move |r| (p, li, r))))
        .collect();

    let results: Vec<Result<RepOutcome>> = triples
        .par_iter()
        .map(|&(p, li, rep)| {
            run_one(config, &instance, p, li, rep).map_err(|e| SimError::RunFailed {
                policy: p,
                label: config.policies[p].kind.to_string(),
                l_index: li,
                rep,
                source: Box::new(e),
            })
        })
        .collect();
    // first failure in index order, independent of scheduling
    let outcomes = results.into_iter().collect::<Result<Vec<_>>>()?;

    let rounds = config.curve_rounds();
    let mut cells = Vec::with_capacity(config.policies.len() * n_l);
    for (cell_index, chunk) in outcomes.chunks(reps).enumerate() {
        let (p, li) = (cell_index / n_l, cell_index % n_l);
        let summaries: Vec<SummaryMetrics> = chunk.iter().map(|o| o.summary.clone()).collect();
        let curves = config.capture_trajectories.then(|| {
            let mut cum_regret = vec![0.0; rounds.len()];
            let mut cum_compensation = vec![0.0; rounds.len()];
            for o in chunk {
                let (reg, comp) = o.curve.as_ref().expect("curve captured");
                for (acc, v) in cum_regret.iter_mut().zip(reg) {
                    *acc += v;
                }
                for (acc, v) in cum_compensation.iter_mut().zip(comp) {
                    *acc += v;
                }
            }
            let n = reps as f64;
            cum_regret.iter_mut().for_each(|v| *v /= n);
            cum_compensation.iter_mut().for_each(|v| *v /= n);
            Curves {
                rounds: rounds.clone(),
                cum_regret,
                cum_compensation,
            }
        });
        cells.push(CellResult {
            policy_index: p,
            policy: config.policies[p].kind,
            l_index: li,
            l: config.drift.l_values[li],
            replications: reps,
            stats: aggregate(&summaries)?,
            curves,
        });
    }
    Ok(AggregateResult { cells })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn metrics(v: f64) -> SummaryMetrics {
        SummaryMetrics {
            regret: v,
            compensation: v,
            comp_rounds: v as u64,
            arm1_rel_error: v,
            per_arm: vec![],
        }
    }

    fn small_config() -> ExperimentConfig {
        ExperimentConfig {
            master_seed: 7,
            horizon: 300,
            replications: 3,
            capture_trajectories: true,
            trajectory_stride: 7,
            instance: InstanceSpec {
                means: vec![0.9, 0.7, 0.4],
                noise: Noise::Gaussian { sigma: 1.0 },
            },
            drift: DriftSpec {
                kind: DriftKind::Linear,
                l_values: vec![0.0, 1.1],
            },
            policies: vec![
                PolicySpec { kind: PolicyKind::Ucb, project_feedback: None },
                PolicySpec { kind: PolicyKind::EGreedy { c: 4.0 }, project_feedback: Some(false) },
                PolicySpec { kind: PolicyKind::Thompson, project_feedback: None },
            ],
        }
    }

    #[test]
    fn derive_seed_golden() {
        assert_eq!(derive_seed(20200101, 0, 0, 0), 0xC2BF_5CC2_E05D_286E);
        let table: Vec<u64> = (0..3).map(|r| derive_seed(20200101, 1, 2, r)).collect();
        assert_eq!(table, [0x9792_14C7_0BB4_A6ED, 0x7B57_E241_D067_0D6C, 0x8C2E_F562_0D90_FC98]);
    }

    #[test]
    fn derive_seed_distinct() {
        let m = 20200101;
        assert_ne!(derive_seed(m, 0, 0, 0), derive_seed(m, 0, 0, 1));
        let mut seen = std::collections::HashSet::new();
        for p in 0..4 {
            for l in 0..8 {
                for r in 0..64 {
                    assert!(seen.insert(derive_seed(m, p, l, r)));
                    assert_ne!(derive_seed(m, p, l, r), derive_seed(m + 1, p, l, r));
                }
            }
        }
    }

    #[test]
    fn aggregate_examples() {
        let s = aggregate(&[metrics(2.0), metrics(4.0)]).unwrap();
        assert_eq!(s.regret.mean, 3.0);
        assert_relative_eq!(s.regret.std, 2f64.sqrt(), epsilon = 1e-15);
        let s = aggregate(&[metrics(5.0)]).unwrap();
        assert_eq!((s.regret.mean, s.regret.std), (5.0, 0.0));
        let s = aggregate(&vec![metrics(1.5); 6]).unwrap();
        assert_eq!(s.compensation.std, 0.0);
        assert!(aggregate(&[]).is_err());
    }

    #[test]
    fn config_validation() {
        let mut c = small_config();
        c.drift.l_values.clear();
        assert!(matches!(c.validate(), Err(SimError::InvalidConfig(_))));
        let mut c = small_config();
        c.replications = 0;
        assert!(c.validate().is_err());
        let mut c = small_config();
        c.trajectory_stride = 0;
        assert!(c.validate().is_err());
        let mut c = small_config();
        c.drift.l_values.push(-1.0);
        assert!(c.validate().is_err());
        let mut c = small_config();
        c.horizon = 2;
        assert!(c.validate().is_err());
    }

    #[test]
    fn config_toml_roundtrip() {
        let c = small_config();
        assert_eq!(ExperimentConfig::from_toml(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn curve_rounds_cover_horizon() {
        let c = small_config();
        let rounds = c.curve_rounds();
        assert_eq!(rounds.len(), 300usize.div_ceil(7));
        assert_eq!(*rounds.last().unwrap(), 300);
        assert_eq!(rounds[0], 7);
    }

    #[test]
    fn experiment_is_deterministic_and_thread_independent() {
        let c = small_config();
        let a = run_experiment(&c, Some(1)).unwrap();
        let b = run_experiment(&c, Some(4)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.cells.len(), 6);
        for cell in &a.cells {
            let curves = cell.curves.as_ref().unwrap();
            assert_eq!(curves.cum_regret.len(), c.curve_rounds().len());
            assert_relative_eq!(*curves.cum_regret.last().unwrap(), cell.stats.regret.mean, max_relative = 1e-12);
            assert!(cell.stats.regret.std >= 0.0);
        }
    }

    #[test]
    fn single_replication_has_zero_std() {
        let mut c = small_config();
        c.replications = 1;
        c.capture_trajectories = false;
        let r = run_experiment(&c, None).unwrap();
        for cell in &r.cells {
            assert_eq!(cell.stats.regret.std, 0.0);
            assert!(cell.curves.is_none());
        }
    }

    #[test]
    fn run_failure_names_the_triple() {
        let mut c = small_config();
        c.policies[0].kind = PolicyKind::EGreedy { c: -1.0 };
        // validate() catches it first; bypass by calling the inner runner
        let err = run_experiment_inner(&c).unwrap_err();
        assert!(matches!(err, SimError::RunFailed { policy: 0, l_index: 0, rep: 0, .. }), "{err}");
    }

    proptest! {
        #[test]
        fn aggregate_is_order_free(mut values in proptest::collection::vec(-1e3..1e3f64, 1..40), seed in any::<u64>()) {
            let a = aggregate(&values.iter().map(|&v| metrics(v)).collect::<Vec<_>>()).unwrap();
            // deterministic shuffle
            let mut s = seed;
            for i in (1..values.len()).rev() {
                s = splitmix64(s);
                values.swap(i, (s % (i as u64 + 1)) as usize);
            }
            let b = aggregate(&values.iter().map(|&v| metrics(v)).collect::<Vec<_>>()).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
