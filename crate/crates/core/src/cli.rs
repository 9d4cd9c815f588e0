//! Command-line front end: `run`, `sweep`, `bounds` and `trace`.
//!
//! Exit codes: 0 on success, 2 for invalid flags or config, 1 for runtime
//! failures. Every command that writes files also writes `manifest.json`,
//! which holds the fully resolved inputs and can be passed back with
//! `--manifest` to reproduce the outputs byte for byte.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::analysis::{check_c_condition, summarize, BoundInputs, BoundTable};
use crate::error::SimError;
use crate::experiment::{run_experiment, ExperimentConfig, InstanceSpec};
use crate::mechanism::{run_on, run_with, MechanismOptions};
use crate::model::{BanditInstance, DriftKind, DriftModel, Noise};
use crate::output::{self, fmt_real};
use crate::policy::PolicyKind;
use crate::rng::{ScriptedStream, SeededStream};

const TOOL: &str = "incentive-bandit";
const MAX_TRACE_ROUNDS: u64 = 20;

#[derive(Debug)]
pub enum CliError {
    /// Bad flags or config values. Exit code 2.
    Usage(String),
    /// Failure while running. Exit code 1.
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => m,
        }
    }

    fn runtime(op: &str, e: impl std::fmt::Display) -> Self {
        CliError::Runtime(format!("{op}: {e}"))
    }
}

/// Domain errors from validating user inputs are usage errors.
fn usage(e: SimError) -> CliError {
    CliError::Usage(e.to_string())
}

#[derive(Debug, Parser)]
#[command(name = TOOL, version, about = "Incentivized bandit exploration under reward drift")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a single simulation and write its trajectory.
    Run(RunArgs),
    /// Run a replicated sweep described by a config file.
    Sweep(SweepArgs),
    /// Print the closed-form regret and compensation bounds.
    Bounds(BoundsArgs),
    /// Print a short trajectory driven by a scripted random stream.
    Trace(TraceArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PolicyName {
    Ucb,
    Egreedy,
    Thompson,
    Greedy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DriftName {
    Zero,
    Linear,
    Clipped,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum NoiseName {
    Gaussian,
    Bernoulli,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Toggle {
    On,
    Off,
}

/// Environment, policy and drift flags shared by `run` and `trace`.
#[derive(Debug, Args)]
struct ModelArgs {
    #[arg(long, value_enum, default_value = "ucb")]
    policy: PolicyName,
    /// Epsilon-greedy constant c in eps_t = min(1, cK/t).
    #[arg(long, default_value_t = 4.0)]
    c: f64,
    #[arg(long, value_enum, default_value = "linear")]
    drift: DriftName,
    /// Lipschitz coefficient of the drift function.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    l: f64,
    /// Cap of the clipped drift function.
    #[arg(long, allow_negative_numbers = true)]
    cap: Option<f64>,
    /// Clip credited feedback to [0, 1]. Defaults to on for egreedy only.
    #[arg(long, value_enum)]
    project_feedback: Option<Toggle>,
    /// Check the UCB compensation and drift inequalities every round.
    #[arg(long)]
    diagnostics: bool,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long = "T", default_value_t = 20_000)]
    horizon: u64,
    #[arg(long, value_enum, default_value = "gaussian")]
    noise: NoiseName,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    sigma: f64,
    /// Comma-separated arm means.
    #[arg(long, value_delimiter = ',', default_value = "0.9,0.8,0.7,0.6,0.5,0.4,0.3,0.2,0.1", allow_negative_numbers = true)]
    means: Vec<f64>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// Accepted for uniformity; a single run is sequential.
    #[arg(long)]
    jobs: Option<usize>,
    /// Re-run the invocation recorded in a manifest (other model flags are ignored).
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    /// Experiment config (TOML).
    #[arg(long, required_unless_present = "manifest")]
    config: Option<PathBuf>,
    /// Re-run the sweep recorded in a manifest.
    #[arg(long, conflicts_with = "config")]
    manifest: Option<PathBuf>,
    /// Overrides the config's master seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Debug, Args)]
struct BoundsArgs {
    /// Number of arms. Defaults to the number of means (or gaps + 1).
    #[arg(long)]
    k: Option<usize>,
    /// Suboptimal gaps, comma-separated. Overrides --means.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    gaps: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', default_value = "0.9,0.8,0.7,0.6,0.5,0.4,0.3,0.2,0.1", allow_negative_numbers = true)]
    means: Vec<f64>,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    l: f64,
    #[arg(long, default_value_t = 4.0, allow_negative_numbers = true)]
    c: f64,
    /// Posted-mean separation parameter. Defaults to the smallest gap between
    /// any two means (or the smallest suboptimal gap with --gaps).
    #[arg(long, allow_negative_numbers = true)]
    delta_lower: Option<f64>,
    #[arg(long = "T", default_value_t = 20_000.0)]
    horizon: f64,
    #[arg(long)]
    seed: Option<u64>,
    /// Also write bounds.txt and manifest.json here.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Debug, Args)]
struct TraceArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long = "T", default_value_t = 6)]
    horizon: u64,
    #[arg(long, value_enum, default_value = "gaussian")]
    noise: NoiseName,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    sigma: f64,
    #[arg(long, value_delimiter = ',', default_value = "0.9,0.8", allow_negative_numbers = true)]
    means: Vec<f64>,
    /// Comma-separated draws, consumed in order: policy draws for the round
    /// (egreedy: coin then arm uniform when exploring; thompson: one normal
    /// per arm), then one environment draw per pull.
    #[arg(long, value_delimiter = ',', required = true, allow_negative_numbers = true)]
    script: Vec<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Also write trace.csv here.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    jobs: Option<usize>,
}

/// Fully resolved inputs of a single run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    pub policy: PolicyKind,
    pub drift: DriftKind,
    pub l: f64,
    pub horizon: u64,
    pub seed: u64,
    pub instance: InstanceSpec,
    pub project_feedback: bool,
    pub diagnostics: bool,
}

impl RunSpec {
    fn options(&self) -> MechanismOptions {
        MechanismOptions {
            project_feedback: self.project_feedback,
            warm_start: true,
            check_ucb_diagnostics: self.diagnostics,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "lowercase")]
pub enum Invocation {
    Run { spec: RunSpec },
    Sweep { config: ExperimentConfig },
    Bounds { inputs: BoundsSpec },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsSpec {
    pub arms: usize,
    pub gaps: Vec<f64>,
    pub l: f64,
    pub c: f64,
    pub delta_lower: f64,
    pub horizon: f64,
}

/// Record written next to every set of outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub seed: Option<u64>,
    pub outputs: Vec<String>,
    pub invocation: Invocation,
}

impl Manifest {
    fn new(seed: Option<u64>, outputs: &[&str], invocation: Invocation) -> Self {
        Self {
            tool: TOOL.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            seed,
            outputs: outputs.iter().map(|s| s.to_string()).collect(),
            invocation,
        }
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read manifest {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("malformed manifest {}: {e}", path.display())))
    }

    fn write(&self, dir: &Path) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        write_file(&dir.join("manifest.json"), &(text + "\n"))
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| CliError::runtime("create output directory", e))?;
    }
    fs::write(path, contents).map_err(|e| CliError::runtime(&format!("write {}", path.display()), e))
}

fn resolve_policy(args: &ModelArgs) -> Result<PolicyKind, CliError> {
    let policy = match args.policy {
        PolicyName::Ucb => PolicyKind::Ucb,
        PolicyName::Egreedy => PolicyKind::EGreedy { c: args.c },
        PolicyName::Thompson => PolicyKind::Thompson,
        PolicyName::Greedy => PolicyKind::Greedy,
    };
    policy.validate().map_err(usage)?;
    Ok(policy)
}

fn resolve_drift(args: &ModelArgs) -> Result<DriftKind, CliError> {
    if !(args.l >= 0.0) {
        return Err(CliError::Usage(format!(
            "invalid value for --l: the drift Lipschitz coefficient must be nonnegative \
             (drift is non-decreasing in the compensation with f(0) = 0), got {}",
            args.l
        )));
    }
    let kind = match args.drift {
        DriftName::Zero => DriftKind::Zero,
        DriftName::Linear => DriftKind::Linear,
        DriftName::Clipped => DriftKind::ClippedLinear {
            cap: args
                .cap
                .ok_or_else(|| CliError::Usage("--drift clipped requires --cap".into()))?,
        },
    };
    DriftModel::new(kind, args.l).map_err(usage)?;
    Ok(kind)
}

fn resolve_instance(means: &[f64], noise: NoiseName, sigma: f64) -> Result<InstanceSpec, CliError> {
    let spec = InstanceSpec {
        means: means.to_vec(),
        noise: match noise {
            NoiseName::Gaussian => Noise::Gaussian { sigma },
            NoiseName::Bernoulli => Noise::Bernoulli,
        },
    };
    spec.build().map_err(usage)?;
    Ok(spec)
}

fn resolve_projection(args: &ModelArgs, policy: &PolicyKind) -> bool {
    match args.project_feedback {
        Some(Toggle::On) => true,
        Some(Toggle::Off) => false,
        None => MechanismOptions::for_policy(policy).project_feedback,
    }
}

fn execute_run(spec: &RunSpec, out_dir: &Path, stdout: &mut dyn Write) -> Result<(), CliError> {
    let instance = spec.instance.build().map_err(usage)?;
    let drift = DriftModel::new(spec.drift, spec.l).map_err(usage)?;
    if spec.horizon < instance.num_arms() as u64 {
        return Err(usage(SimError::HorizonTooShort {
            horizon: spec.horizon,
            arms: instance.num_arms(),
        }));
    }
    let mut csv = String::from(output::TRAJECTORY_HEADER);
    csv.push('\n');
    let mut rng = SeededStream::new(spec.seed);
    let state = run_with(
        &instance,
        &spec.policy,
        &drift,
        &spec.options(),
        spec.horizon,
        &mut rng,
        |r| {
            csv.push_str(&output::trajectory_row(r));
            csv.push('\n');
        },
    )
    .map_err(|e| CliError::runtime("mechanism::run", e))?;
    let summary = summarize(&state, &instance).map_err(|e| CliError::runtime("analysis::summarize", e))?;

    let summary_csv = format!(
        "policy,l,seed,T,regret,compensation,comp_rounds,arm1_rel_error\n{},{},{},{},{},{},{},{}\n",
        spec.policy,
        fmt_real(spec.l),
        spec.seed,
        spec.horizon,
        fmt_real(summary.regret),
        fmt_real(summary.compensation),
        summary.comp_rounds,
        fmt_real(summary.arm1_rel_error),
    );
    write_file(&out_dir.join("trajectory.csv"), &csv)?;
    write_file(&out_dir.join("summary.csv"), &summary_csv)?;
    Manifest::new(
        Some(spec.seed),
        &["trajectory.csv", "summary.csv"],
        Invocation::Run { spec: spec.clone() },
    )
    .write(out_dir)?;

    let d = state.diagnostics();
    let mut line = format!(
        "policy={} l={} T={} seed={} regret={} compensation={} comp_rounds={} arm1_rel_error={}",
        spec.policy,
        fmt_real(spec.l),
        spec.horizon,
        spec.seed,
        fmt_real(summary.regret),
        fmt_real(summary.compensation),
        summary.comp_rounds,
        fmt_real(summary.arm1_rel_error),
    );
    if spec.diagnostics {
        line.push_str(&format!(
            " ucb_checked={} ucb_comp_violations={} ucb_drift_violations={}",
            d.ucb_rounds_checked, d.ucb_compensation_violations, d.ucb_drift_violations
        ));
    }
    writeln!(stdout, "{line}").map_err(|e| CliError::runtime("write stdout", e))
}

fn cmd_run(args: &RunArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let spec = match &args.manifest {
        Some(path) => match Manifest::read(path)?.invocation {
            Invocation::Run { spec } => spec,
            _ => return Err(CliError::Usage(format!("{} is not a run manifest", path.display()))),
        },
        None => {
            let policy = resolve_policy(&args.model)?;
            RunSpec {
                drift: resolve_drift(&args.model)?,
                l: args.model.l,
                horizon: args.horizon,
                seed: args.seed,
                instance: resolve_instance(&args.means, args.noise, args.sigma)?,
                project_feedback: resolve_projection(&args.model, &policy),
                diagnostics: args.model.diagnostics,
                policy,
            }
        }
    };
    execute_run(&spec, &args.out_dir, stdout)
}

fn cmd_sweep(args: &SweepArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let mut config = match (&args.config, &args.manifest) {
        (_, Some(path)) => match Manifest::read(path)?.invocation {
            Invocation::Sweep { config } => config,
            _ => return Err(CliError::Usage(format!("{} is not a sweep manifest", path.display()))),
        },
        (Some(path), None) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
            ExperimentConfig::from_toml(&text).map_err(usage)?
        }
        (None, None) => return Err(CliError::Usage("sweep needs --config or --manifest".into())),
    };
    if let Some(seed) = args.seed {
        config.master_seed = seed;
    }
    config.validate().map_err(usage)?;
    let result = run_experiment(&config, args.jobs)
        .map_err(|e| CliError::runtime("experiment::run_experiment", e))?;

    let summary = output::sweep_csv(&result);
    write_file(&args.out_dir.join("summary.csv"), &summary)?;
    let mut outputs = vec!["summary.csv"];
    if let Some(curves) = output::curves_csv(&result) {
        write_file(&args.out_dir.join("curves.csv"), &curves)?;
        write_file(&args.out_dir.join("curves.gp"), &output::gnuplot_script(&result, "curves.csv"))?;
        outputs.extend(["curves.csv", "curves.gp"]);
    }
    Manifest::new(Some(config.master_seed), &outputs, Invocation::Sweep { config }).write(&args.out_dir)?;
    stdout
        .write_all(summary.as_bytes())
        .map_err(|e| CliError::runtime("write stdout", e))
}

fn cmd_bounds(args: &BoundsArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let (gaps, default_lower) = match &args.gaps {
        Some(gaps) => {
            let min = gaps.iter().cloned().fold(f64::INFINITY, f64::min);
            (gaps.clone(), min)
        }
        None => {
            let inst = BanditInstance::new(args.means.clone(), Noise::Bernoulli).map_err(usage)?;
            let gaps = inst
                .gaps()
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != inst.best_arm())
                .map(|(_, &g)| g)
                .collect();
            (gaps, inst.min_pairwise_gap())
        }
    };
    let arms = args.k.unwrap_or(gaps.len() + 1);
    let spec = BoundsSpec {
        arms,
        l: args.l,
        c: args.c,
        delta_lower: args.delta_lower.unwrap_or(default_lower),
        horizon: args.horizon,
        gaps,
    };
    let inputs = BoundInputs::new(spec.arms, spec.horizon, spec.l, spec.gaps.clone(), spec.delta_lower, spec.c)
        .map_err(usage)?;
    let table = BoundTable::evaluate(&inputs);

    let mut text = format!(
        "# K={} T={} l={} c={} delta_min={} delta_lower={}\n",
        inputs.arms(),
        fmt_real(inputs.horizon()),
        fmt_real(inputs.lipschitz()),
        fmt_real(inputs.c()),
        fmt_real(inputs.delta_min()),
        fmt_real(inputs.delta_lower()),
    );
    text.push_str(&output::bounds_text(&table));
    if !check_c_condition(inputs.c(), inputs.delta_min()) {
        text.push_str(&format!(
            "warning: c = {} is below 36/delta = {}; the egreedy bounds assume c >= 36/delta\n",
            fmt_real(inputs.c()),
            fmt_real(36.0 / inputs.delta_min())
        ));
    }
    if let Some(dir) = &args.out_dir {
        write_file(&dir.join("bounds.txt"), &text)?;
        Manifest::new(args.seed, &["bounds.txt"], Invocation::Bounds { inputs: spec }).write(dir)?;
    }
    stdout
        .write_all(text.as_bytes())
        .map_err(|e| CliError::runtime("write stdout", e))
}

fn cmd_trace(args: &TraceArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<(), CliError> {
    if args.horizon > MAX_TRACE_ROUNDS {
        return Err(CliError::Usage(format!(
            "trace is limited to T <= {MAX_TRACE_ROUNDS}, got {}",
            args.horizon
        )));
    }
    let policy = resolve_policy(&args.model)?;
    let drift = DriftModel::new(resolve_drift(&args.model)?, args.model.l).map_err(usage)?;
    let instance = resolve_instance(&args.means, args.noise, args.sigma)?
        .build()
        .map_err(usage)?;
    let options = MechanismOptions {
        project_feedback: resolve_projection(&args.model, &policy),
        warm_start: true,
        check_ucb_diagnostics: args.model.diagnostics,
    };
    let mut rng = ScriptedStream::new(args.script.clone());
    let traj = match run_on(&instance, &policy, &drift, &options, args.horizon, &mut rng) {
        Ok(t) => t,
        Err(SimError::ScriptExhausted { requested, supplied }) => {
            return Err(CliError::Usage(format!(
                "--script too short: draw #{requested} was requested but only {supplied} values \
                 were supplied (deficit of at least {})",
                requested - supplied
            )))
        }
        Err(e @ SimError::InvalidParameter(_)) => return Err(usage(e)),
        Err(e) => return Err(CliError::runtime("mechanism::run", e)),
    };
    if rng.remaining() > 0 {
        writeln!(stderr, "note: {} scripted values were not used", rng.remaining())
            .map_err(|e| CliError::runtime("write stderr", e))?;
    }
    let csv = output::trajectory_csv(&traj.records);
    if let Some(dir) = &args.out_dir {
        write_file(&dir.join("trace.csv"), &csv)?;
    }
    stdout
        .write_all(csv.as_bytes())
        .map_err(|e| CliError::runtime("write stdout", e))
}

/// Parses `args` (including the program name) and runs the command. Returns
/// the process exit code.
pub fn run_cli<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let rendered = e.render().to_string();
            let sink: &mut dyn Write = if code == 0 { stdout } else { stderr };
            let _ = sink.write_all(rendered.as_bytes());
            return code;
        }
    };
    let result = match &cli.command {
        Command::Run(a) => cmd_run(a, stdout),
        Command::Sweep(a) => cmd_sweep(a, stdout),
        Command::Bounds(a) => cmd_bounds(a, stdout),
        Command::Trace(a) => cmd_trace(a, stdout, stderr),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {}", e.message());
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn call(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let argv = std::iter::once(TOOL).chain(args.iter().copied());
        let code = run_cli(argv, &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }

    #[test]
    fn negative_l_is_a_usage_error() {
        let (code, _, err) = call(&["run", "--l", "-1", "--T", "20"]);
        assert_eq!(code, 2);
        assert!(err.contains("nonnegative"), "{err}");
    }

    #[test]
    fn unknown_flag_is_a_usage_error() {
        assert_eq!(call(&["run", "--bogus"]).0, 2);
        assert_eq!(call(&["frobnicate"]).0, 2);
    }

    #[test]
    fn invalid_domain_values_are_usage_errors() {
        assert_eq!(call(&["run", "--policy", "egreedy", "--c", "0", "--T", "20"]).0, 2);
        assert_eq!(call(&["run", "--means", "0.5,0.5", "--T", "20"]).0, 2);
        assert_eq!(call(&["run", "--T", "3"]).0, 2);
        assert_eq!(call(&["run", "--drift", "clipped", "--l", "1", "--T", "20"]).0, 2);
        assert_eq!(call(&["trace", "--T", "21", "--script", "0"]).0, 2);
    }

    #[test]
    fn help_exits_zero() {
        let (code, out, _) = call(&["--help"]);
        assert_eq!(code, 0);
        assert!(out.contains("sweep"));
    }
}
