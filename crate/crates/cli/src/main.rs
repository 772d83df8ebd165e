//! `ibc` experiment runner.
//!
//! Exit codes: 0 success, 1 numerical failure, 2 usage or configuration
//! error. Failures are reported on stderr as one JSON object.

mod config;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use ibc_core::bounds::sweep_gains;
use ibc_core::dp_oracle::{dp_solve, DpConfig};
use ibc_core::error::Error as CoreError;
use ibc_core::example1::{
    closed_loop_expected_cost, ibc_min_cost1, mi_theta, open_loop_min_cost, simulate_ex1, Gain, ThetaPrior,
};
use ibc_core::ibc_analytic::{ibc_step1, psi};
use ibc_core::mc_ibc::{
    ibc_plan, IntegratorTheta, KalmanPosterior, LinearBilinear, PlanConfig, PlanMode, PlanTrace, Plant,
    QuadraticCost, Reduction, ThetaPosterior,
};
use ibc_core::optim::tune_nu;
use nalgebra::{DMatrix, DVector};
use serde_json::{json, Value};

use config::{Experiment, ExperimentConfig, PlanModeConfig, PlantKind};
use output::{figure1_csv, write_json, Csv};

const OUT_ENV: &str = "IBC_OUT_DIR";

#[derive(Parser)]
#[command(name = "ibc", version, about = "Run information-based control experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a JSON config.
    Run {
        config: PathBuf,
        /// Overrides the Monte-Carlo seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory; falls back to $IBC_OUT_DIR, then the config.
        #[arg(long, env = OUT_ENV)]
        out: Option<PathBuf>,
    },
    /// Tabulate the minimizer of Psi over a range of penalty weights.
    SweepNu {
        config: PathBuf,
        #[arg(long)]
        nu_from: Option<f64>,
        #[arg(long)]
        nu_to: Option<f64>,
        #[arg(long)]
        nu_step: Option<f64>,
        #[arg(long, env = OUT_ENV)]
        out: Option<PathBuf>,
    },
}

/// Failure tagged with the exit code it maps to.
struct Failure {
    code: u8,
    kind: &'static str,
    error: anyhow::Error,
}

impl Failure {
    fn usage(error: anyhow::Error) -> Self {
        Self { code: 2, kind: "config", error }
    }

    fn numerical(error: anyhow::Error) -> Self {
        // parameter errors surfacing from the core are still configuration problems
        let bad_input = matches!(
            error.downcast_ref::<CoreError>(),
            Some(CoreError::InvalidParameter(_) | CoreError::Dimension(_))
        );
        if bad_input {
            Self::usage(error)
        } else {
            Self { code: 1, kind: "numerical", error }
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            return emit_failure(&Failure::usage(anyhow::anyhow!(msg.trim().to_string())));
        }
    };
    match dispatch(cli.command) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(f) => emit_failure(&f),
    }
}

fn emit_failure(f: &Failure) -> ExitCode {
    let chain: Vec<String> = f.error.chain().map(|c| c.to_string()).collect();
    let mut obj = json!({ "error": f.kind, "message": chain.join(": ") });
    if let Some(CoreError::TargetUnreachable { trace, .. }) = f.error.downcast_ref::<CoreError>() {
        obj["trace"] = json!(trace);
    }
    eprintln!("{obj}");
    ExitCode::from(f.code)
}

fn prepare(path: &Path, out: Option<PathBuf>, edit: impl FnOnce(&mut ExperimentConfig)) -> Result<(ExperimentConfig, PathBuf)> {
    let mut cfg = ExperimentConfig::load(path)?;
    edit(&mut cfg);
    cfg.validate()?;
    let dir = out
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("ibc-out"));
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok((cfg, dir))
}

fn dispatch(cmd: Command) -> std::result::Result<Vec<PathBuf>, Failure> {
    let (cfg, dir) = match cmd {
        Command::Run { config, seed, out } => prepare(&config, out, |c| {
            if let Some(s) = seed {
                c.plan.seed = s;
            }
        }),
        Command::SweepNu { config, nu_from, nu_to, nu_step, out } => prepare(&config, out, |c| {
            c.experiment = Experiment::NuSweep;
            c.nu.sweep_from = nu_from.unwrap_or(c.nu.sweep_from);
            c.nu.sweep_to = nu_to.unwrap_or(c.nu.sweep_to);
            c.nu.sweep_step = nu_step.unwrap_or(c.nu.sweep_step);
        }),
    }
    .map_err(Failure::usage)?;
    run(&cfg, &dir).map_err(Failure::numerical)
}

fn run(cfg: &ExperimentConfig, dir: &Path) -> Result<Vec<PathBuf>> {
    let hash = cfg.hash();
    let (files, results) = match cfg.experiment {
        Experiment::Example1 => example1(cfg, dir, &hash)?,
        Experiment::Example2Dp => example2_dp(cfg, dir, &hash)?,
        Experiment::Example2Ibc => example2_ibc(cfg, dir, &hash)?,
        Experiment::NuSweep => nu_sweep(cfg, dir, &hash)?,
        Experiment::McDemo => mc_demo(cfg, dir, &hash)?,
        Experiment::BoundsCheck => bounds_check(cfg, dir, &hash)?,
    };
    let summary = json!({
        "experiment": cfg.experiment.name(),
        "config_sha256": hash,
        "seed": cfg.plan.seed,
        "config": cfg,
        "results": results,
    });
    let mut all = files;
    all.push(write_json(dir, &format!("{}.json", cfg.experiment.name()), &summary)?);
    Ok(all)
}

type Produced = (Vec<PathBuf>, Value);

fn example1(cfg: &ExperimentConfig, dir: &Path, hash: &str) -> Result<Produced> {
    let u0 = cfg.example1.u0;
    let mut csv = Csv::new(&[
        "p_minus", "u0", "u1_minus", "u1_plus", "x2_minus", "x2_plus", "closed_loop_cost", "open_loop_cost",
        "ibc_cost1_min", "mi_theta",
    ])
    .meta("config_sha256", hash)
    .meta("experiment", "example1");
    for &p in &cfg.example1.p {
        let prior = ThetaPrior::new(p)?;
        let minus = simulate_ex1(Gain::Minus, u0)?;
        let plus = simulate_ex1(Gain::Plus, u0)?;
        csv.row(&[
            p,
            u0,
            minus.controls[1],
            plus.controls[1],
            minus.states[2].x,
            plus.states[2].x,
            closed_loop_expected_cost(&prior, u0)?,
            open_loop_min_cost(&prior),
            ibc_min_cost1(&prior),
            mi_theta(u0, &prior),
        ])?;
    }
    let path = csv.write(dir, "example1.csv")?;
    Ok((vec![path], json!({ "u0": u0, "rows": cfg.example1.p.len() })))
}

fn dp_config(cfg: &ExperimentConfig) -> DpConfig {
    DpConfig { quad_order: cfg.quad_order, u0_grid: cfg.grid.spec() }
}

fn example2_dp(cfg: &ExperimentConfig, dir: &Path, hash: &str) -> Result<Produced> {
    let (m, w) = (cfg.discrete_model()?, cfg.weights()?);
    let b = cfg.belief0(&m)?;
    let sol = dp_solve(&m, &b, &w, &dp_config(cfg))?;
    let mut csv = Csv::new(&["u0", "R0"]).meta("config_sha256", hash).meta("experiment", "example2-dp");
    for (u, r) in &sol.curve {
        csv.row(&[*u, *r])?;
    }
    let path = csv.write(dir, "example2_dp.csv")?;
    Ok((
        vec![path],
        json!({
            "control": sol.control,
            "minimizers": sol.minimizers.iter().map(|m| m.x).collect::<Vec<_>>(),
            "value": sol.value,
            "boundary_warning": sol.boundary_warning,
        }),
    ))
}

fn example2_ibc(cfg: &ExperimentConfig, dir: &Path, hash: &str) -> Result<Produced> {
    let (m, w) = (cfg.discrete_model()?, cfg.weights()?);
    let b = cfg.belief0(&m)?;
    let spec = cfg.grid.spec();
    let sol = dp_solve(&m, &b, &w, &dp_config(cfg))?;

    let tuning = match tune_nu(|nu, u| psi(&m, &b, u, nu, &w), sol.control, &spec, &cfg.nu.search()) {
        Ok(t) => json!({ "nu": t.nu, "argmin": t.argmin, "trace": t.trace }),
        Err(CoreError::TargetUnreachable { target, nu_max, trace }) => {
            json!({ "unreachable": true, "target": target, "nu_max": nu_max, "trace": trace })
        }
        Err(e) => return Err(e.into()),
    };

    let nus = [cfg.nu.curves[0], cfg.nu.curves[1], cfg.nu.curves[2]];
    let u0: Vec<f64> = sol.curve.iter().map(|(u, _)| *u).collect();
    let r0: Vec<f64> = sol.curve.iter().map(|(_, r)| *r).collect();
    let curves = nus.map(|nu| u0.iter().map(|&u| psi(&m, &b, u, nu, &w)).collect::<Vec<_>>());
    let path = figure1_csv(&u0, &r0, &curves, nus, hash)?.write(dir, "figure1.csv")?;

    let mut steps = Vec::new();
    for nu in nus {
        let s = ibc_step1(&m, &b, nu, &w, &spec)?;
        steps.push(json!({
            "nu": nu,
            "control": s.control,
            "multiplicity": s.multiplicity,
            "value": s.value,
            "at_boundary": s.at_boundary,
        }));
    }
    Ok((
        vec![path],
        json!({ "dp_control": sol.control, "dp_value": sol.value, "nu_tuning": tuning, "ibc_step1": steps }),
    ))
}

fn nu_sweep(cfg: &ExperimentConfig, dir: &Path, hash: &str) -> Result<Produced> {
    let (m, w) = (cfg.discrete_model()?, cfg.weights()?);
    let b = cfg.belief0(&m)?;
    let spec = cfg.grid.spec();
    let mut csv = Csv::new(&["nu", "argmin", "value", "at_boundary"])
        .meta("config_sha256", hash)
        .meta("experiment", "nu-sweep");
    let nus = cfg.nu.sweep_values()?;
    for &nu in &nus {
        let s = ibc_step1(&m, &b, nu, &w, &spec)?;
        csv.row(&[nu, s.control, s.value, if s.at_boundary { 1.0 } else { 0.0 }])?;
    }
    let path = csv.write(dir, "nu_sweep.csv")?;
    Ok((vec![path], json!({ "points": nus.len() })))
}

fn mc_demo(cfg: &ExperimentConfig, dir: &Path, hash: &str) -> Result<Produced> {
    let p = &cfg.plan;
    let w = cfg.weights()?;
    let plan_cfg = PlanConfig {
        horizon: p.horizon,
        nu: p.nu.clone(),
        n_s: p.n_s,
        seed: p.seed,
        u_bounds: (p.u_bounds[0], p.u_bounds[1]),
        grid_step: p.grid_step,
        tol: p.tol,
        reduction: Reduction::default(),
    };
    let mode = match p.mode {
        PlanModeConfig::Ibc => PlanMode::Ibc,
        PlanModeConfig::Olfo => PlanMode::Olfo,
    };
    // state weights: w.state[0] on intermediate steps, w.state[1] on the last
    let n = p.horizon;
    let cost = |q_mid: DMatrix<f64>, q_end: DMatrix<f64>| QuadraticCost {
        q: (0..=n)
            .map(|t| match t {
                0 => DMatrix::zeros(q_end.nrows(), q_end.ncols()),
                t if t == n => q_end.clone(),
                _ => q_mid.clone(),
            })
            .collect(),
        r: (0..n).map(|t| if t + 1 == n { w.control[1] } else { w.control[0] }).collect(),
    };
    let trace = match p.plant {
        PlantKind::LinearBilinear => {
            let m = cfg.discrete_model()?;
            let b = cfg.belief0(&m)?;
            anyhow::ensure!(p.x0.len() == m.dim(), "plan.x0 must have length {}", m.dim());
            let c = cost(w.state_matrix(1, m.dim()), w.state_matrix(2, m.dim()));
            let mut prov = KalmanPosterior { model: m.clone(), belief: b };
            let mut plant = Plant { x: DVector::from_vec(p.x0.clone()), seed: p.seed.wrapping_add(1) };
            plan(&LinearBilinear::new(m), &mut prov, &mut plant, &c, &plan_cfg, mode)?
        }
        PlantKind::IntegratorTheta => {
            anyhow::ensure!(!p.x0.is_empty(), "plan.x0 must hold the initial position");
            let x0 = p.x0[0];
            // squared final position; the gain component carries no cost
            let end = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 0.0]));
            let c = cost(DMatrix::zeros(2, 2), end);
            let mut prov = ThetaPosterior::new(p.p_minus, x0, p.s_v)?;
            let mut plant = Plant { x: DVector::from_vec(vec![x0, p.theta]), seed: p.seed.wrapping_add(1) };
            plan(&IntegratorTheta { s_v: p.s_v }, &mut prov, &mut plant, &c, &plan_cfg, mode)?
        }
    };

    let mut csv = Csv::new(&["k", "u", "objective", "at_boundary", "x_next", "y_next"])
        .meta("config_sha256", hash)
        .meta("experiment", "mc-demo")
        .meta("seed", p.seed);
    for (k, step) in trace.steps.iter().enumerate() {
        let x = trace.states[k + 1].iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ");
        let y = trace.observations.get(k).map(|y| y[0].to_string()).unwrap_or_default();
        csv.row_text(vec![
            k.to_string(),
            trace.controls[k].to_string(),
            step.objective.to_string(),
            (step.at_boundary as u8).to_string(),
            x,
            y,
        ])?;
    }
    let path = csv.write(dir, "mc_demo.csv")?;
    Ok((vec![path], json!({ "controls": trace.controls, "realized_cost": trace.realized_cost })))
}

fn plan<D, P>(
    dyn_: &D,
    prov: &mut P,
    plant: &mut Plant,
    cost: &QuadraticCost,
    cfg: &PlanConfig,
    mode: PlanMode,
) -> Result<PlanTrace>
where
    D: ibc_core::mc_ibc::Dynamics,
    P: ibc_core::mc_ibc::PosteriorProvider,
{
    ibc_plan(dyn_, prov, plant, cost, cfg, mode).map_err(|e| {
        let done = e.partial.controls.len();
        anyhow::Error::new(e.source).context(format!("planning aborted at step {} after {done} applied controls", e.step))
    })
}

fn bounds_check(cfg: &ExperimentConfig, dir: &Path, hash: &str) -> Result<Produced> {
    let gains = cfg.bounds.gains()?;
    let mut csv = Csv::new(&["s_x", "s_v", "k", "cost", "info", "bound", "slack"])
        .meta("config_sha256", hash)
        .meta("experiment", "bounds-check");
    let mut min_slack = f64::INFINITY;
    for ch in cfg.bounds.channels()? {
        for r in sweep_gains(&ch, &gains) {
            min_slack = min_slack.min(r.slack);
            csv.row(&[ch.s_x, ch.s_v, r.k, r.cost, r.info, r.bound, r.slack])?;
        }
    }
    let path = csv.write(dir, "bounds_check.csv")?;
    Ok((vec![path], json!({ "min_slack": min_slack })))
}
