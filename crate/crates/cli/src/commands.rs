//! The three subcommands.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use popdyn_core::diagnostics::storage_trace_check;
use popdyn_core::dynamics::sign_preservation_check;
use popdyn_core::{
    nash_check, nash_gap, refine_study, simulate_dpedm, simulate_edm, DiscreteMeasure, Error, PayoffKernel,
    RefinementSetup, SmoothingConfig, StrategyGrid, Trajectory,
};
use serde_json::{json, Value};

use crate::config::{ExperimentConfig, FeedbackConfig, Property, ReferenceMode};
use crate::output;
use crate::CliError;

/// Largest per-sample storage increase accepted by `verify storage_trace`.
const STORAGE_INCREASE_TOL: f64 = 1e-6;

pub struct Context {
    pub config: ExperimentConfig,
    pub seed: u64,
    out: Option<PathBuf>,
}

impl Context {
    pub fn new(config_path: &Path, out: Option<PathBuf>, seed: Option<u64>) -> Result<Self, CliError> {
        let mut config = ExperimentConfig::load(config_path)?;
        if let Some(s) = seed {
            config.seed = s;
        }
        let out = out.or_else(|| config.output.clone());
        Ok(Self {
            seed: config.seed,
            config,
            out,
        })
    }

    fn out_dir(&self) -> Result<&Path, CliError> {
        let dir = self
            .out
            .as_deref()
            .ok_or_else(|| CliError::invalid("output", "pass --out or set `output` in the config"))?;
        fs::create_dir_all(dir)?;
        Ok(dir)
    }

    fn metadata(&self, command: &str) -> Value {
        json!({
            "command": command,
            "version": env!("CARGO_PKG_VERSION"),
            "seed": self.seed,
            "config": self.config,
        })
    }
}

fn run_dynamics(config: &ExperimentConfig, seed: u64) -> Result<(Trajectory, Arc<StrategyGrid>), CliError> {
    let exp = config.build(seed)?;
    let traj = match &config.feedback {
        FeedbackConfig::Static => simulate_edm(&exp.kernel, &exp.protocol, &exp.reference, &exp.x0, exp.time)?,
        FeedbackConfig::Smoothing { lambda_s, rho0 } => {
            let smoothing = SmoothingConfig::new(*lambda_s)?;
            let rho0 = config.make_rho0(rho0, &exp.grid, &exp.kernel, &exp.x0)?;
            simulate_dpedm(&exp.kernel, &exp.protocol, &exp.reference, smoothing, &exp.x0, &rho0, exp.time)?
        }
    };
    Ok((traj, exp.grid))
}

pub fn simulate(ctx: &Context) -> Result<(), CliError> {
    // Validate everything before touching the output directory.
    ctx.config.build(ctx.seed)?;
    let dir = ctx.out_dir()?.to_path_buf();
    let start = Instant::now();
    let (traj, _) = run_dynamics(&ctx.config, ctx.seed)?;
    let wall = start.elapsed().as_secs_f64();

    output::write_trajectory(&dir.join("trajectory.csv"), &traj)?;
    output::write_grid(&dir.join("grid.csv"), &traj)?;
    output::write_diagnostics(&dir.join("diagnostics.csv"), &traj)?;
    let last = traj.diagnostics.last().expect("trajectory holds t = 0");
    let max_mass_error = traj
        .diagnostics
        .iter()
        .map(|d| d.mass_error)
        .fold(traj.stats.max_mass_drift, f64::max);
    let summary = json!({
        "final_time": traj.times.last(),
        "final_nash_gap": last.nash_gap,
        "final_storage": if last.storage.is_finite() { json!(last.storage) } else { Value::Null },
        "max_mass_error": max_mass_error,
        "max_field_mass": traj.stats.max_field_mass,
        "field_evaluations": traj.stats.field_evaluations,
        "extra_substeps": traj.stats.extra_substeps,
        "samples": traj.len(),
        "wall_time_s": wall,
    });
    output::write_json(&dir.join("summary.json"), &summary)?;
    output::write_json(&dir.join("metadata.json"), &ctx.metadata("simulate"))?;
    println!(
        "t = {}: nash gap {:.6e}, storage {:.6e}; wrote {}",
        traj.times.last().copied().unwrap_or(0.0),
        last.nash_gap,
        last.storage,
        dir.display()
    );
    Ok(())
}

struct Verdict {
    property: &'static str,
    status: &'static str,
    value: Option<f64>,
    detail: String,
    witness: Option<Value>,
}

impl Verdict {
    fn new(property: &'static str, pass: bool, value: Option<f64>, detail: String) -> Self {
        Self {
            property,
            status: if pass { "PASS" } else { "FAIL" },
            value,
            detail,
            witness: None,
        }
    }

    fn to_json(&self) -> Value {
        json!({
            "property": self.property,
            "status": self.status,
            "value": self.value,
            "detail": self.detail,
            "witness": self.witness,
        })
    }
}

fn weights_json(m: &DiscreteMeasure) -> Value {
    json!(m.weights())
}

fn check_monotonicity(kernel: &PayoffKernel, trials: usize, seed: u64) -> Result<Verdict, CliError> {
    let r = kernel.monotonicity_test(trials, seed)?;
    let mut v = Verdict::new(
        "monotonicity",
        r.monotone,
        Some(r.max_value),
        format!("max <F(mu) - F(nu), mu - nu> over {} pairs = {:.6e}", r.trials, r.max_value),
    );
    if let Some((mu, nu)) = &r.violating_pair {
        v.witness = Some(json!({ "mu": weights_json(mu), "nu": weights_json(nu) }));
    }
    Ok(v)
}

pub fn verify(ctx: &Context) -> Result<(), CliError> {
    let cfg = &ctx.config;
    let spec = cfg
        .verify
        .as_ref()
        .ok_or_else(|| CliError::invalid("verify", "the config has no `verify` section"))?;
    if spec.properties.is_empty() {
        return Err(CliError::invalid("verify.properties", "must list at least one property"));
    }
    if spec.trials == 0 {
        return Err(CliError::invalid("verify.trials", "must be at least 1"));
    }
    if !(spec.nash_tol >= 0.0) {
        return Err(CliError::invalid("verify.nash_tol", "must be nonnegative"));
    }
    let exp = cfg.build(ctx.seed)?;
    let mut verdicts = Vec::new();
    for property in &spec.properties {
        let v = match property {
            Property::Monotonicity => check_monotonicity(&exp.kernel, spec.trials, ctx.seed)?,
            Property::SignPreservation => match sign_preservation_check(&exp.protocol, spec.trials, ctx.seed) {
                Ok(ok) => Verdict::new(
                    "sign_preservation",
                    ok,
                    None,
                    format!("{} over {} payoff pairs", exp.protocol.name(), spec.trials),
                ),
                Err(Error::UnsupportedProtocol(name)) => Verdict {
                    property: "sign_preservation",
                    status: "N/A",
                    value: None,
                    detail: format!("{name} is not a pairwise protocol"),
                    witness: None,
                },
                Err(e) => return Err(e.into()),
            },
            Property::Nash => {
                let rho = exp.kernel.evaluate(&exp.x0)?;
                let gap = nash_gap(&exp.x0, &rho)?;
                let check = nash_check(&exp.x0, &rho, spec.nash_tol)?;
                let mut v = Verdict::new(
                    "nash",
                    check.holds,
                    Some(gap),
                    format!("initial state: nash gap {gap:.6e}, tolerance {:e}", spec.nash_tol),
                );
                if let (false, Some(w)) = (check.holds, check.worst) {
                    let g = &exp.grid;
                    v.witness = Some(json!({
                        "better_reply": g.point(w.strategy),
                        "support_point": g.point(w.support_strategy),
                        "payoff_advantage": w.amount,
                    }));
                }
                v
            }
            Property::StorageTrace => {
                if !matches!(cfg.feedback, FeedbackConfig::Static) {
                    return Err(CliError::invalid("feedback", "storage_trace needs static feedback"));
                }
                let traj = simulate_edm(&exp.kernel, &exp.protocol, &exp.reference, &exp.x0, exp.time)?;
                match storage_trace_check(&traj, &exp.protocol, &exp.kernel, &exp.reference) {
                    Ok(r) => Verdict::new(
                        "storage_trace",
                        r.max_increase <= STORAGE_INCREASE_TOL,
                        Some(r.max_increase),
                        format!(
                            "max storage increase {:.6e} over {} samples (energy balance residual {:.3e})",
                            r.max_increase,
                            traj.len(),
                            r.energy_balance_residual
                        ),
                    ),
                    Err(Error::NotMonotone { value }) => Verdict::new(
                        "storage_trace",
                        false,
                        Some(value),
                        format!("game is not monotone (form value {value:.6e}); no Lyapunov guarantee"),
                    ),
                    Err(e) => return Err(e.into()),
                }
            }
        };
        println!("{} {}: {}", v.status, v.property, v.detail);
        verdicts.push(v);
    }
    if let Some(dir) = ctx.out.as_deref() {
        fs::create_dir_all(dir)?;
        let report = json!({
            "verdicts": verdicts.iter().map(Verdict::to_json).collect::<Vec<_>>(),
            "metadata": ctx.metadata("verify"),
        });
        output::write_json(&dir.join("verify.json"), &report)?;
    }
    Ok(())
}

pub fn refine(ctx: &Context, jobs: usize, ns: Option<Vec<usize>>) -> Result<(), CliError> {
    let cfg = &ctx.config;
    let ns = ns
        .or_else(|| cfg.refine.as_ref().map(|r| r.ns.clone()))
        .ok_or_else(|| CliError::invalid("refine.ns", "pass --ns or set `refine.ns` in the config"))?;
    if ns.is_empty() {
        return Err(CliError::invalid("refine.ns", "must not be empty"));
    }
    if ns.windows(2).any(|w| w[1] < w[0]) {
        return Err(CliError::invalid("refine.ns", "must be nondecreasing"));
    }
    if jobs == 0 {
        return Err(CliError::invalid("jobs", "must be at least 1"));
    }
    if cfg.reference != ReferenceMode::Uniform {
        return Err(CliError::invalid(
            "reference",
            "refinement compares grids under the probability reference `uniform`",
        ));
    }
    if !matches!(cfg.feedback, FeedbackConfig::Static) {
        return Err(CliError::invalid("feedback", "refinement runs use static feedback"));
    }
    // Surface configuration errors with their keys before any run starts.
    for &n in &ns {
        let g = cfg.make_grid(n)?;
        cfg.make_kernel(&g)?;
        cfg.make_initial(&g, ctx.seed)?;
    }
    cfg.make_time()?;
    let protocol = cfg.make_protocol()?;
    let dir = ctx.out_dir()?.to_path_buf();

    let as_core = |e: CliError| match e {
        CliError::Core(e) => e,
        other => Error::Inconsistent(other.to_string()),
    };
    let kernel_family = |g: &Arc<StrategyGrid>| cfg.make_kernel(g).map_err(as_core);
    let x0_family = |g: &Arc<StrategyGrid>| cfg.make_initial(g, ctx.seed).map_err(as_core);
    let setup = RefinementSetup {
        lower: cfg.grid.lower,
        upper: cfg.upper()?,
        kernel_family: &kernel_family,
        x0_family: &x0_family,
        protocol: &protocol,
        time: cfg.make_time()?,
    };
    let report = refine_study(&setup, &ns, jobs)?;
    report.write_csv(fs::File::create(dir.join("refine.csv"))?)?;
    output::write_json(&dir.join("metadata.json"), &ctx.metadata("refine"))?;
    for r in &report.rows {
        println!(
            "n = {:>5} -> {:>5}: sup BL {:.6e} at t = {}",
            r.n_coarse, r.n_fine, r.sup_bl, r.t_of_max
        );
    }
    println!(
        "sup-BL sequence {}",
        if report.strictly_decreasing() { "strictly decreasing" } else { "not strictly decreasing" }
    );
    Ok(())
}
