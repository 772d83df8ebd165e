//! JSON experiment configuration.
//!
//! Every field has a default; an empty object `{}` with only `experiment`
//! set runs the drifting-gain example with its reference parameters.

use std::path::PathBuf;

use anyhow::{bail, ensure, Context, Result};
use ibc_core::bounds::ScalarChannel;
use ibc_core::ibc_analytic::Weights;
use ibc_core::lingauss::{discretize, ContinuousModel, DiscreteModel, GaussianBelief};
use ibc_core::optim::{NuSearch, SearchSpec};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Example1,
    Example2Dp,
    Example2Ibc,
    NuSweep,
    McDemo,
    BoundsCheck,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Example1 => "example1",
            Experiment::Example2Dp => "example2-dp",
            Experiment::Example2Ibc => "example2-ibc",
            Experiment::NuSweep => "nu-sweep",
            Experiment::McDemo => "mc-demo",
            Experiment::BoundsCheck => "bounds-check",
        }
    }
}

/// How `(m0, S0)` relate to the first observation `y0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PriorInterpretation {
    /// `(m0, S0)` is the prior of `x0`; `y0` is assimilated first.
    Prior,
    /// `(m0, S0)` already conditions on `y0`.
    #[default]
    Posterior,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub a_c: f64,
    pub b_c: f64,
    pub g1c: f64,
    pub g2c: f64,
    pub s_v: f64,
    pub t0: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            a_c: 1.0,
            b_c: 1.0,
            g1c: 2f64.sqrt(),
            g2c: 2f64.sqrt(),
            s_v: 0.01,
            t0: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WeightConfig {
    /// Weights on the last state component at steps 1 and 2.
    pub state: [f64; 2],
    pub control: [f64; 2],
}

impl Default for WeightConfig {
    fn default() -> Self {
        Self {
            state: [0.0, 1.0],
            control: [1e-3, 1e-3],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitialConfig {
    pub mean: Vec<f64>,
    pub cov_diag: Vec<f64>,
    pub y0: f64,
}

impl Default for InitialConfig {
    fn default() -> Self {
        Self {
            mean: vec![0.0, 0.0],
            cov_diag: vec![5.0, 0.1],
            y0: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
    pub tol: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { lo: -6.0, hi: 6.0, step: 0.01, tol: 1e-8 }
    }
}

impl GridConfig {
    pub fn spec(&self) -> SearchSpec {
        SearchSpec::new(self.lo, self.hi, self.step, self.tol)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NuConfig {
    /// Penalty weights whose `Psi` curves are emitted next to `R0`.
    pub curves: Vec<f64>,
    pub nu_max: f64,
    pub sweep_points: usize,
    pub tol: f64,
    /// Points of the `nu-sweep` experiment.
    pub sweep_from: f64,
    pub sweep_to: f64,
    pub sweep_step: f64,
}

impl Default for NuConfig {
    fn default() -> Self {
        Self {
            curves: vec![0.5, 0.7816, 1.0],
            nu_max: 10.0,
            sweep_points: 41,
            tol: 1e-6,
            sweep_from: 0.0,
            sweep_to: 1.0,
            sweep_step: 0.01,
        }
    }
}

impl NuConfig {
    pub fn search(&self) -> NuSearch {
        NuSearch {
            nu_max: self.nu_max,
            sweep_points: self.sweep_points,
            tol: self.tol,
            ..NuSearch::default()
        }
    }

    pub fn sweep_values(&self) -> Result<Vec<f64>> {
        ensure!(self.sweep_step > 0.0, "nu sweep step must be positive");
        ensure!(self.sweep_to >= self.sweep_from, "nu sweep range is empty");
        let n = ((self.sweep_to - self.sweep_from) / self.sweep_step + 1e-9).floor() as usize;
        Ok((0..=n).map(|i| self.sweep_from + i as f64 * self.sweep_step).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Example1Config {
    /// Values of `P(theta = -1)`.
    pub p: Vec<f64>,
    pub u0: f64,
}

impl Default for Example1Config {
    fn default() -> Self {
        Self {
            p: (0..=10).map(|i| i as f64 / 10.0).collect(),
            u0: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoundsConfig {
    pub s_x: Vec<f64>,
    pub s_v: Vec<f64>,
    pub gain_from: f64,
    pub gain_to: f64,
    pub gain_points: usize,
}

impl Default for BoundsConfig {
    fn default() -> Self {
        Self {
            s_x: vec![0.1, 1.0, 10.0],
            s_v: vec![0.1, 1.0, 10.0],
            gain_from: -2.0,
            gain_to: 1.0,
            gain_points: 41,
        }
    }
}

impl BoundsConfig {
    pub fn channels(&self) -> Result<Vec<ScalarChannel>> {
        let mut out = Vec::new();
        for &sx in &self.s_x {
            for &sv in &self.s_v {
                out.push(ScalarChannel::new(sx, sv)?);
            }
        }
        Ok(out)
    }

    pub fn gains(&self) -> Result<Vec<f64>> {
        ensure!(self.gain_points >= 2, "need at least two gain points");
        ensure!(self.gain_to > self.gain_from, "gain range is empty");
        let h = (self.gain_to - self.gain_from) / (self.gain_points - 1) as f64;
        Ok((0..self.gain_points)
            .map(|i| if i + 1 == self.gain_points { self.gain_to } else { self.gain_from + i as f64 * h })
            .collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlantKind {
    LinearBilinear,
    IntegratorTheta,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PlanModeConfig {
    #[default]
    Ibc,
    Olfo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlanSection {
    pub plant: PlantKind,
    pub mode: PlanModeConfig,
    pub horizon: usize,
    pub nu: Vec<f64>,
    pub n_s: usize,
    pub seed: u64,
    pub u_bounds: [f64; 2],
    pub grid_step: f64,
    pub tol: f64,
    /// `integrator_theta` only: `P(theta = -1)`, true gain and noise.
    pub p_minus: f64,
    pub theta: f64,
    pub s_v: f64,
    /// `linear_bilinear` only: initial true state.
    pub x0: Vec<f64>,
}

impl Default for PlanSection {
    fn default() -> Self {
        Self {
            plant: PlantKind::LinearBilinear,
            mode: PlanModeConfig::Ibc,
            horizon: 2,
            nu: vec![0.06, 0.0],
            n_s: 1000,
            seed: 1,
            u_bounds: [-6.0, 6.0],
            grid_step: 0.5,
            tol: 1e-3,
            p_minus: 0.3,
            theta: 1.0,
            s_v: 1e-4,
            x0: vec![0.5, 0.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub weights: WeightConfig,
    #[serde(default)]
    pub initial: InitialConfig,
    #[serde(default)]
    pub prior_interpretation: PriorInterpretation,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default = "default_quad_order")]
    pub quad_order: usize,
    #[serde(default)]
    pub nu: NuConfig,
    #[serde(default)]
    pub example1: Example1Config,
    #[serde(default)]
    pub bounds: BoundsConfig,
    #[serde(default)]
    pub plan: PlanSection,
    /// Used when neither `--out` nor the environment variable is given.
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

fn default_quad_order() -> usize {
    32
}

impl ExperimentConfig {
    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let cfg: Self = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        Ok(cfg)
    }

    /// SHA-256 of the canonical serialization of the resolved config.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }

    pub fn discrete_model(&self) -> Result<DiscreteModel> {
        let m = &self.model;
        Ok(discretize(&ContinuousModel::drifting_gain(m.a_c, m.b_c, m.g1c, m.g2c, m.s_v), m.t0)?)
    }

    pub fn weights(&self) -> Result<Weights> {
        Ok(Weights::new(self.weights.state, self.weights.control)?)
    }

    /// The filtered belief at step 0 under the chosen interpretation.
    pub fn belief0(&self, model: &DiscreteModel) -> Result<GaussianBelief> {
        let init = &self.initial;
        let n = model.dim();
        ensure!(
            init.mean.len() == n && init.cov_diag.len() == n,
            "initial mean and covariance diagonal must have length {n}"
        );
        ensure!(init.cov_diag.iter().all(|v| *v >= 0.0), "initial covariance must be nonnegative");
        let belief = GaussianBelief::new(
            DVector::from_vec(init.mean.clone()),
            DMatrix::from_diagonal(&DVector::from_vec(init.cov_diag.clone())),
        );
        Ok(match self.prior_interpretation {
            PriorInterpretation::Posterior => belief,
            PriorInterpretation::Prior => ibc_core::lingauss::kf_update(&belief, model, init.y0)?,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.spec().validate()?;
        if self.quad_order < 8 {
            bail!("quad_order must be at least 8");
        }
        match self.experiment {
            Experiment::Example1 => {
                ensure!(!self.example1.p.is_empty(), "example1.p is empty");
                ensure!(self.example1.u0 != 0.0, "example1.u0 must be nonzero");
            }
            Experiment::BoundsCheck => {
                self.bounds.channels()?;
                self.bounds.gains()?;
            }
            Experiment::Example2Ibc => {
                ensure!(self.nu.curves.len() == 3, "nu.curves must hold three values");
            }
            Experiment::NuSweep => {
                self.nu.sweep_values()?;
            }
            Experiment::McDemo => {
                let p = &self.plan;
                ensure!(p.horizon >= 2, "plan.horizon must be at least 2");
                ensure!(p.nu.len() == p.horizon, "plan.nu must have one entry per step");
            }
            Experiment::Example2Dp => {}
        }
        if matches!(self.experiment, Experiment::Example2Dp | Experiment::Example2Ibc | Experiment::NuSweep) {
            let m = self.discrete_model()?;
            self.weights()?;
            self.belief0(&m)?;
        }
        Ok(())
    }
}
