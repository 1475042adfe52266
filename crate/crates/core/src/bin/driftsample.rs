use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use driftsample::binary::{run_threshold, tune_theta_with};
use driftsample::config::{discrete_schedule, ExperimentConfig, ModelSpec, OptimizerSpec, PolicySpec};
use driftsample::continuous::{simulate_continuous, ContinuousPolicy};
use driftsample::export::{to_file, write_binary_csv, write_continuous_csv, write_discrete_csv, write_json};
use driftsample::model::{trace_cost, trace_value};
use driftsample::optimize::{
    dp_oracle, optimal_lazy_continuous, optimal_lazy_discrete_with, optimal_onoff_for_period, vstar_estimate_with,
    OptResult,
};
use driftsample::policy::{simulate, steady_state, validate_budget, Kalman, VarianceKernel};
use driftsample::repro::run_repro;
use driftsample::verify::{run_verify, CorruptedKernel, VerifySettings};

const DEFAULT_ROUNDS: usize = 100;
const DEFAULT_BINARY_ROUNDS: usize = 10_000;

#[derive(Parser)]
#[command(name = "driftsample", version, about = "Budgeted sampling policies for a drifting Gaussian quantity")]
struct Cli {
    /// Experiment configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Random seed, overriding the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Print the result as JSON on stdout.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the configured policy and write a CSV trace and a JSON summary.
    Simulate,
    /// Run the configured optimizer.
    Optimize,
    /// Bracket the finite-horizon optimum of a discrete instance.
    Oracle,
    /// Run the acceptance suites; exits with 2 if any criterion fails.
    Verify {
        /// Run only these criteria.
        #[arg(long, value_delimiter = ',')]
        criteria: Vec<u32>,
        /// Scale the number of random instances.
        #[arg(long)]
        scale: Option<f64>,
        /// Use a deliberately wrong variance recursion; the suite should fail.
        #[arg(long, hide = true)]
        negative_control: bool,
    },
    /// Reproduce the worked-example numbers and write figure data.
    Repro,
}

struct Ctx {
    config: Option<ExperimentConfig>,
    out: PathBuf,
    seed: u64,
    json: bool,
}

impl Ctx {
    fn config(&self) -> anyhow::Result<&ExperimentConfig> {
        self.config.as_ref().ok_or_else(|| anyhow!("this command needs --config"))
    }

    fn emit<T: Serialize>(&self, name: &str, value: &T, text: impl FnOnce() -> String) -> anyhow::Result<()> {
        let path = self.out.join(name);
        write_json(&path, value)?;
        if self.json {
            say(&serde_json::to_string_pretty(value)?);
        } else {
            say(&format!("{}\nwrote {}", text(), path.display()));
        }
        Ok(())
    }
}

/// Prints a line, ignoring a closed stdout.
fn say(text: &str) {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{text}");
}

enum Failure {
    Usage(anyhow::Error),
    Verification,
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Usage(e)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Verification) => ExitCode::from(2),
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let config = match &cli.config {
        Some(p) => Some(ExperimentConfig::load(p).with_context(|| format!("loading {}", p.display()))?),
        None => None,
    };
    let out = cli
        .out
        .clone()
        .or_else(|| config.as_ref().and_then(|c| c.output_dir.clone()))
        .unwrap_or_else(|| PathBuf::from("out"));
    let seed = cli.seed.or(config.as_ref().map(|c| c.seed)).unwrap_or(0);
    let ctx = Ctx { config, out, seed, json: cli.json };
    match cli.command {
        Command::Simulate => cmd_simulate(&ctx)?,
        Command::Optimize => cmd_optimize(&ctx)?,
        Command::Oracle => cmd_oracle(&ctx)?,
        Command::Verify { criteria, scale, negative_control } => {
            if !cmd_verify(&ctx, criteria, scale, negative_control)? {
                return Err(Failure::Verification);
            }
        }
        Command::Repro => cmd_repro(&ctx)?,
    }
    Ok(())
}

fn csv_to(path: &Path, f: impl FnOnce(&mut dyn std::io::Write) -> driftsample::Result<()>) -> anyhow::Result<()> {
    to_file(path, f)?;
    Ok(())
}

fn cmd_simulate(ctx: &Ctx) -> anyhow::Result<()> {
    let cfg = ctx.config()?;
    let policy = cfg.policy.as_ref().ok_or_else(|| anyhow!("simulate needs a policy in the configuration"))?;
    let trace_path = ctx.out.join("trace.csv");
    let summary = match &cfg.model {
        ModelSpec::Discrete(params) => {
            let horizon = cfg.rounds(DEFAULT_ROUNDS);
            let schedule = discrete_schedule(policy, params, horizon)?;
            // a periodic schedule without an explicit horizon is reported at its steady state
            let (trace, mode) = if schedule.is_periodic() && cfg.horizon.is_none() {
                if schedule.is_null() {
                    bail!("a periodic schedule that never samples has no steady state; give a horizon");
                }
                (steady_state(&schedule, params, Default::default())?, "steady_state")
            } else {
                let finite = driftsample::policy::SamplingSchedule::new(schedule.rounds(horizon))?;
                (simulate(&finite, params, params.v0)?, "from_v0")
            };
            let samples: Vec<f64> = trace.records.iter().map(|r| r.s).collect();
            let budget = validate_budget(&driftsample::policy::SamplingSchedule::new(samples)?, params);
            csv_to(&trace_path, |w| write_discrete_csv(&trace, w))?;
            json!({
                "family": "discrete",
                "mode": mode,
                "rounds": trace.len(),
                "average_cost": trace_cost(&trace)?,
                "average_value": trace_value(&trace)?,
                "final_variance": trace.final_variance(),
                "budget": {
                    "valid": budget.valid,
                    "first_violation": budget.first_violation,
                    "min_balance": budget.balance.iter().cloned().fold(f64::INFINITY, f64::min),
                },
            })
        }
        ModelSpec::Continuous(params) => {
            let PolicySpec::Continuous(p) = policy else {
                let PolicySpec::Null = policy else { bail!("continuous model needs a continuous policy") };
                let h = cfg.horizon.unwrap_or(DEFAULT_ROUNDS as f64);
                return simulate_continuous_policy(ctx, &ContinuousPolicy::null(h)?, params, &trace_path);
            };
            return simulate_continuous_policy(ctx, p, params, &trace_path);
        }
        ModelSpec::Binary(model) => {
            let horizon = cfg.rounds(DEFAULT_BINARY_ROUNDS);
            let (thr, tuned) = match policy {
                PolicySpec::Threshold(t) => (*t, None),
                PolicySpec::TunedThreshold { tol, options } => {
                    let t = tune_theta_with(model, model.budget, *tol, ctx.seed, *options)?;
                    (t.policy, Some(t))
                }
                _ => bail!("binary model needs a threshold policy"),
            };
            let trace = run_threshold(model, &thr, horizon, ctx.seed)?;
            csv_to(&trace_path, |w| write_binary_csv(&trace, w))?;
            json!({
                "family": "binary",
                "rounds": horizon,
                "seed": ctx.seed,
                "theta": thr.theta,
                "tuning": tuned,
                "summary": trace.summary,
            })
        }
    };
    ctx.emit("summary.json", &summary, || summary_text(&summary, &trace_path))
}

fn summary_text(summary: &serde_json::Value, trace_path: &Path) -> String {
    let mut lines = Vec::new();
    for key in ["average_cost", "average_value"] {
        if let Some(v) = summary.get(key).and_then(|v| v.as_f64()) {
            lines.push(format!("{key} {v:.9}"));
        }
    }
    if let Some(s) = summary.get("summary") {
        lines.push(format!(
            "accuracy {} mean samples {} median samples {}",
            s["accuracy"], s["mean_samples"], s["median_samples"]
        ));
    }
    if let Some(b) = summary.get("budget") {
        lines.push(format!("budget valid {}", b["valid"]));
    }
    lines.push(format!("wrote {}", trace_path.display()));
    lines.join("\n")
}

fn simulate_continuous_policy(
    ctx: &Ctx,
    policy: &ContinuousPolicy,
    params: &driftsample::continuous::ContinuousParams,
    trace_path: &Path,
) -> anyhow::Result<()> {
    let cfg = ctx.config()?;
    let opts = cfg.continuous_output.unwrap_or_default();
    let trace = simulate_continuous(policy, params, params.v0, opts)?;
    csv_to(trace_path, |w| write_continuous_csv(&trace, w))?;
    let summary = json!({
        "family": "continuous",
        "horizon": trace.horizon,
        "average_cost": trace.average_cost,
        "average_value": trace.average_value,
        "samples": trace.samples,
        "flow_cost": trace.flow_cost,
        "atom_count": trace.atom_count,
        "final_variance": trace.final_variance,
        "budget": {
            "valid": trace.budget_valid,
            "first_violation": trace.first_violation,
            "min_balance": trace.min_balance,
        },
    });
    ctx.emit("summary.json", &summary, || summary_text(&summary, trace_path))
}

fn cmd_optimize(ctx: &Ctx) -> anyhow::Result<()> {
    let cfg = ctx.config()?;
    let opt = cfg.optimizer.as_ref().ok_or_else(|| anyhow!("optimize needs an optimizer in the configuration"))?;
    let result: OptResult = match (&cfg.model, opt) {
        (ModelSpec::Discrete(p), OptimizerSpec::Onoff { period }) => optimal_onoff_for_period(p, *period)?,
        (ModelSpec::Discrete(p), OptimizerSpec::Vstar { options }) => vstar_estimate_with(p, *options)?,
        (ModelSpec::Discrete(p), OptimizerSpec::LazyDiscrete { options }) => optimal_lazy_discrete_with(p, *options)?,
        (ModelSpec::Continuous(p), OptimizerSpec::LazyContinuous) => optimal_lazy_continuous(p)?,
        _ => bail!("optimizer does not apply to the {} model", cfg.model.family()),
    };
    let budget_valid = match (&cfg.model, &result.rendered) {
        (ModelSpec::Discrete(p), Some(s)) => Some(validate_budget(s, p).valid),
        _ => None,
    };
    if budget_valid == Some(false) {
        bail!("internal error: the rendered schedule overspends");
    }
    ctx.emit("optimize.json", &result, || {
        format!(
            "policy {}\nvalue {:.9}\ncost {:.9}\nbinding {:?}",
            serde_json::to_string(&result.policy).unwrap_or_default(),
            result.value,
            result.cost,
            result.diagnostics.binding
        )
    })
}

fn cmd_oracle(ctx: &Ctx) -> anyhow::Result<()> {
    let cfg = ctx.config()?;
    let ModelSpec::Discrete(p) = &cfg.model else { bail!("the oracle needs a discrete model") };
    let opts = cfg.oracle.unwrap_or_default();
    let result = dp_oracle(p, &opts)?;
    let br = result.diagnostics.bracket.ok_or_else(|| anyhow!("oracle returned no bracket"))?;
    ctx.emit("oracle.json", &result, || {
        format!(
            "lower {:.9}\nupper {:.9}\ntruncation {:.9}\nslack {:.9}",
            br.lower,
            br.upper,
            br.truncation,
            br.slack()
        )
    })
}

fn cmd_verify(ctx: &Ctx, criteria: Vec<u32>, scale: Option<f64>, negative_control: bool) -> anyhow::Result<bool> {
    let spec = ctx.config.as_ref().and_then(|c| c.verify.clone()).unwrap_or_default();
    let settings = VerifySettings {
        criteria: if criteria.is_empty() { spec.criteria } else { criteria },
        scale: scale.unwrap_or(spec.scale),
        seed: if ctx.seed == 0 { VerifySettings::default().seed } else { ctx.seed },
    };
    let kernel: &dyn VarianceKernel = if negative_control { &CorruptedKernel } else { &Kalman };
    let report = run_verify(kernel, &settings);
    ctx.emit("verify.json", &report, || report.criteria.iter().map(|c| c.line()).collect::<Vec<_>>().join("\n"))?;
    Ok(report.passed)
}

fn cmd_repro(ctx: &Ctx) -> anyhow::Result<()> {
    let report = run_repro(Some(&ctx.out))?;
    ctx.emit("repro.json", &report, || {
        let mut lines: Vec<String> =
            report.values.iter().map(|v| format!("{:<24} cost {:.9} ≈ {}", v.label, v.cost, v.printed)).collect();
        lines.push(format!("best on-off value {:.9} (cost {:.9})", report.vstar_value, report.vstar_cost));
        lines.push(format!(
            "binary threshold {:.5}: mean {:.3} samples/round, median {}",
            report.fig3_theta, report.fig3_mean_samples, report.fig3_median_samples
        ));
        lines.extend(report.files.iter().map(|f| format!("wrote {}", f.display())));
        lines.join("\n")
    })
}
