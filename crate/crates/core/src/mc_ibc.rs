//! Sample-based information based control for general plants.
//!
//! The expected cost is a Monte-Carlo average over trajectories started from
//! posterior samples; the information term uses a Gaussian kernel density
//! estimate of the entropy of the stacked future observations. With additive
//! Gaussian observation noise the conditional entropy is known in closed
//! form, so only the marginal entropy has to be estimated.
//!
//! Randomness is drawn from independent ChaCha streams keyed by
//! `(seed, sample, time, channel)`. Every estimator is a pure function of
//! its inputs and candidate control sequences share the same noise, which
//! keeps the sampled objective smooth in the controls.

use std::f64::consts::{E, PI};

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use rayon::prelude::*;
use thiserror::Error as ThisError;

use crate::error::{Error, Result};
use crate::linalg::{min_eigenvalue, psd_sqrt};
use crate::lingauss::{kf_predict, kf_update, DiscreteModel, GaussianBelief};
use crate::optim::{golden_section, grid_minimize, nelder_mead_box, SearchSpec};

/// Noise channel identifiers mixed into the stream key.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Channel {
    Process = 1,
    Observation = 2,
    Posterior = 3,
    Plant = 4,
    PlantObservation = 5,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent generator for one `(seed, sample, time, channel)` cell.
pub fn noise_stream(seed: u64, sample: u64, time: u64, channel: Channel) -> ChaCha8Rng {
    let key = [sample, time, channel as u64]
        .into_iter()
        .fold(splitmix64(seed), |acc, v| splitmix64(acc ^ v));
    ChaCha8Rng::seed_from_u64(key)
}

fn standard_normals(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_iterator(n, (0..n).map(|_| StandardNormal.sample(rng)))
}

/// A discrete-time plant `x' = f(x, u, w)`, `y = h(x) + v`, `v ~ N(0, S_v)`.
///
/// `w` is a standard normal vector of length [`Dynamics::noise_dim`]; any
/// scaling belongs in `step`.
pub trait Dynamics: Sync {
    fn state_dim(&self) -> usize;
    fn noise_dim(&self) -> usize;
    fn obs_dim(&self) -> usize;
    fn step(&self, x: &DVector<f64>, u: f64, w: &DVector<f64>) -> DVector<f64>;
    /// Noise-free observation `h(x)`.
    fn observe_mean(&self, x: &DVector<f64>) -> DVector<f64>;
    /// Positive definite observation-noise covariance.
    fn obs_noise_cov(&self) -> DMatrix<f64>;

    /// Advances many states under one control; override to share work
    /// that depends only on `u`.
    fn step_many(&self, xs: &[DVector<f64>], u: f64, ws: &[DVector<f64>]) -> Vec<DVector<f64>> {
        xs.iter().zip(ws).map(|(x, w)| self.step(x, u, w)).collect()
    }
}

/// The bilinear linear-Gaussian model with one scalar observation.
#[derive(Debug, Clone)]
pub struct LinearBilinear {
    pub model: DiscreteModel,
}

impl LinearBilinear {
    pub fn new(model: DiscreteModel) -> Self {
        Self { model }
    }

    fn diffusion_root(&self, u: f64) -> DMatrix<f64> {
        let n = self.model.dim();
        psd_sqrt(&self.model.diffusion(u)).unwrap_or_else(|_| DMatrix::from_element(n, n, f64::NAN))
    }

    fn advance(&self, x: &DVector<f64>, u: f64, a: &DMatrix<f64>, root: &DMatrix<f64>, w: &DVector<f64>) -> DVector<f64> {
        a * x + &self.model.b * u + root * w
    }
}

impl Dynamics for LinearBilinear {
    fn state_dim(&self) -> usize {
        self.model.dim()
    }

    fn noise_dim(&self) -> usize {
        self.model.dim()
    }

    fn obs_dim(&self) -> usize {
        1
    }

    fn step(&self, x: &DVector<f64>, u: f64, w: &DVector<f64>) -> DVector<f64> {
        self.advance(x, u, &self.model.transition(u), &self.diffusion_root(u), w)
    }

    fn observe_mean(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_element(1, self.model.observe(x))
    }

    fn obs_noise_cov(&self) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, self.model.s_v)
    }

    fn step_many(&self, xs: &[DVector<f64>], u: f64, ws: &[DVector<f64>]) -> Vec<DVector<f64>> {
        let a = self.model.transition(u);
        let root = self.diffusion_root(u);
        xs.iter().zip(ws).map(|(x, w)| self.advance(x, u, &a, &root, w)).collect()
    }
}

/// Integrator with an unknown constant gain carried in the state:
/// `x = (position, theta)`, `position' = position + theta u`, observed
/// with noise variance `s_v`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorTheta {
    pub s_v: f64,
}

impl Dynamics for IntegratorTheta {
    fn state_dim(&self) -> usize {
        2
    }

    fn noise_dim(&self) -> usize {
        0
    }

    fn obs_dim(&self) -> usize {
        1
    }

    fn step(&self, x: &DVector<f64>, u: f64, _w: &DVector<f64>) -> DVector<f64> {
        DVector::from_vec(vec![x[0] + x[1] * u, x[1]])
    }

    fn observe_mean(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_element(1, x[0])
    }

    fn obs_noise_cov(&self) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, self.s_v)
    }
}

/// Source of samples from the current filtered posterior.
pub trait PosteriorProvider {
    fn samples(&self, n_s: usize, seed: u64) -> Result<Vec<DVector<f64>>>;
    /// Incorporates the applied control and the next observation.
    fn assimilate(&mut self, u: f64, y: &DVector<f64>) -> Result<()>;
}

/// Exact Gaussian posterior of the bilinear model.
#[derive(Debug, Clone)]
pub struct KalmanPosterior {
    pub model: DiscreteModel,
    pub belief: GaussianBelief,
}

impl PosteriorProvider for KalmanPosterior {
    fn samples(&self, n_s: usize, seed: u64) -> Result<Vec<DVector<f64>>> {
        let root = psd_sqrt(&self.belief.cov)?;
        let n = self.belief.dim();
        Ok((0..n_s)
            .map(|i| {
                let mut rng = noise_stream(seed, i as u64, 0, Channel::Posterior);
                &self.belief.mean + &root * standard_normals(&mut rng, n)
            })
            .collect())
    }

    fn assimilate(&mut self, u: f64, y: &DVector<f64>) -> Result<()> {
        let pred = kf_predict(&self.belief, &self.model, u);
        self.belief = kf_update(&pred, &self.model, y[0])?;
        Ok(())
    }
}

/// Discrete posterior over the gain sign of [`IntegratorTheta`] with a
/// known initial position.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaPosterior {
    /// `P(theta = -1)`.
    pub p_minus: f64,
    pub x0: f64,
    pub applied: f64,
    pub s_v: f64,
}

impl ThetaPosterior {
    pub fn new(p_minus: f64, x0: f64, s_v: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p_minus) || !(s_v > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "need p in [0, 1] and s_v > 0, got p={p_minus}, s_v={s_v}"
            )));
        }
        Ok(Self { p_minus, x0, applied: 0.0, s_v })
    }
}

impl PosteriorProvider for ThetaPosterior {
    fn samples(&self, n_s: usize, seed: u64) -> Result<Vec<DVector<f64>>> {
        let unit = Uniform::new(0.0, 1.0);
        Ok((0..n_s)
            .map(|i| {
                let mut rng = noise_stream(seed, i as u64, 0, Channel::Posterior);
                let theta = if unit.sample(&mut rng) < self.p_minus { -1.0 } else { 1.0 };
                DVector::from_vec(vec![self.x0 + theta * self.applied, theta])
            })
            .collect())
    }

    fn assimilate(&mut self, u: f64, y: &DVector<f64>) -> Result<()> {
        self.applied += u;
        let loglik = |theta: f64| -(y[0] - self.x0 - theta * self.applied).powi(2) / (2.0 * self.s_v);
        let (lm, lp) = (loglik(-1.0), loglik(1.0));
        let top = lm.max(lp);
        let (wm, wp) = (self.p_minus * (lm - top).exp(), (1.0 - self.p_minus) * (lp - top).exp());
        if !(wm + wp > 0.0) {
            return Err(Error::NonFinite(wm + wp));
        }
        self.p_minus = wm / (wm + wp);
        Ok(())
    }
}

/// Trajectories started from posterior samples at time `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    pub k: usize,
    pub x_post: Vec<DVector<f64>>,
    /// `paths[i][t]` is `x_{k+t}` of sample `i`; the last entry is `x_N`.
    pub paths: Vec<Vec<DVector<f64>>>,
    /// Stacked `y_{k+1}, ..., y_{N-1}` per sample.
    pub y_future: Vec<DVector<f64>>,
    /// Length of each stacked observation vector.
    pub n_k: usize,
}

impl SampleSet {
    pub fn len(&self) -> usize {
        self.x_post.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x_post.is_empty()
    }

    pub fn x_final(&self) -> impl Iterator<Item = &DVector<f64>> {
        self.paths.iter().map(|p| p.last().expect("paths start with the posterior sample"))
    }
}

/// Trajectories through a control prefix together with the observations
/// taken at every new state.
struct Rollout {
    paths: Vec<Vec<DVector<f64>>>,
    ys: Vec<DVector<f64>>,
}

fn process_noise(noise_dim: usize, seed: u64, n: usize, t: usize) -> Vec<DVector<f64>> {
    (0..n)
        .map(|i| standard_normals(&mut noise_stream(seed, i as u64, t as u64, Channel::Process), noise_dim))
        .collect()
}

fn obs_root<D: Dynamics + ?Sized>(dyn_: &D) -> Result<DMatrix<f64>> {
    let sv = dyn_.obs_noise_cov();
    if sv.nrows() != dyn_.obs_dim() || sv.ncols() != dyn_.obs_dim() {
        return Err(Error::Dimension(format!(
            "observation noise covariance is {}x{}, expected {}",
            sv.nrows(),
            sv.ncols(),
            dyn_.obs_dim()
        )));
    }
    if !(min_eigenvalue(&sv) > 0.0) {
        return Err(Error::Indefinite(min_eigenvalue(&sv)));
    }
    psd_sqrt(&sv)
}

fn rollout<D: Dynamics + ?Sized>(dyn_: &D, posterior: &[DVector<f64>], prefix: &[f64], seed: u64, k: usize) -> Result<Rollout> {
    let n = posterior.len();
    let root = obs_root(dyn_)?;
    let m = dyn_.obs_dim();
    let mut paths: Vec<Vec<DVector<f64>>> = posterior.iter().map(|x| vec![x.clone()]).collect();
    let mut ys = vec![DVector::zeros(m * prefix.len()); n];
    let mut current: Vec<DVector<f64>> = posterior.to_vec();
    for (j, &u) in prefix.iter().enumerate() {
        let t = k + j;
        let ws = process_noise(dyn_.noise_dim(), seed, n, t);
        current = dyn_.step_many(&current, u, &ws);
        for (i, x) in current.iter().enumerate() {
            let mut rng = noise_stream(seed, i as u64, (t + 1) as u64, Channel::Observation);
            let y = dyn_.observe_mean(x) + &root * standard_normals(&mut rng, m);
            ys[i].rows_mut(j * m, m).copy_from(&y);
            paths[i].push(x.clone());
        }
    }
    Ok(Rollout { paths, ys })
}

fn final_states<D: Dynamics + ?Sized>(dyn_: &D, last: &[DVector<f64>], u: f64, seed: u64, t: usize) -> Vec<DVector<f64>> {
    let ws = process_noise(dyn_.noise_dim(), seed, last.len(), t);
    dyn_.step_many(last, u, &ws)
}

fn check_controls(u_seq: &[f64], bounds: (f64, f64)) -> Result<()> {
    if u_seq.is_empty() {
        return Err(Error::Empty("control sequence"));
    }
    match u_seq.iter().find(|u| !(bounds.0..=bounds.1).contains(*u)) {
        Some(u) => Err(Error::InvalidParameter(format!(
            "control {u} outside the admissible box [{}, {}]",
            bounds.0, bounds.1
        ))),
        None => Ok(()),
    }
}

/// Parameters of a sampling run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleConfig {
    pub seed: u64,
    /// Time index `k` of the posterior samples.
    pub k: usize,
    pub u_bounds: (f64, f64),
}

/// Propagates every posterior sample through `u_seq = (u_k, ..., u_{N-1})`.
pub fn sample_trajectories<D: Dynamics + ?Sized>(
    dyn_: &D,
    posterior: &[DVector<f64>],
    u_seq: &[f64],
    cfg: &SampleConfig,
) -> Result<SampleSet> {
    if posterior.is_empty() {
        return Err(Error::Empty("posterior samples"));
    }
    check_controls(u_seq, cfg.u_bounds)?;
    let (prefix, last) = u_seq.split_at(u_seq.len() - 1);
    let mut r = rollout(dyn_, posterior, prefix, cfg.seed, cfg.k)?;
    let ends: Vec<DVector<f64>> = r.paths.iter().map(|p| p.last().cloned().expect("nonempty")).collect();
    let finals = final_states(dyn_, &ends, last[0], cfg.seed, cfg.k + prefix.len());
    for (p, x) in r.paths.iter_mut().zip(finals) {
        p.push(x);
    }
    Ok(SampleSet {
        k: cfg.k,
        x_post: posterior.to_vec(),
        paths: r.paths,
        n_k: dyn_.obs_dim() * prefix.len(),
        y_future: r.ys,
    })
}

/// Cost of one sampled trajectory.
pub trait PathCost: Sync {
    /// `path[t]` is `x_{k+t}`, ending at `x_N`; `controls` are `u_k..u_{N-1}`.
    fn cost(&self, k: usize, path: &[DVector<f64>], controls: &[f64]) -> f64;
}

/// `L(x_N)` only.
pub struct TerminalCost<F>(pub F);

impl<F: Fn(&DVector<f64>) -> f64 + Sync> PathCost for TerminalCost<F> {
    fn cost(&self, _k: usize, path: &[DVector<f64>], _controls: &[f64]) -> f64 {
        (self.0)(path.last().expect("nonempty path"))
    }
}

/// `1/2 sum_{i>k} x_i' Q_i x_i + 1/2 sum_{i>=k} r_i u_i^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticCost {
    /// `q[i]` weights `x_i`, `i = 0..=N`.
    pub q: Vec<DMatrix<f64>>,
    /// `r[i]` weights `u_i`, `i = 0..N`.
    pub r: Vec<f64>,
}

impl PathCost for QuadraticCost {
    fn cost(&self, k: usize, path: &[DVector<f64>], controls: &[f64]) -> f64 {
        let state: f64 = path
            .iter()
            .enumerate()
            .skip(1)
            .map(|(t, x)| (x.transpose() * &self.q[k + t] * x)[(0, 0)])
            .sum();
        let control: f64 = controls.iter().enumerate().map(|(t, u)| self.r[k + t] * u * u).sum();
        0.5 * (state + control)
    }
}

/// Monte-Carlo expected cost `(1/n_s) sum_i L(path_i)`.
pub fn mc_expectation(s: &SampleSet, cost: &dyn PathCost, controls: &[f64]) -> f64 {
    s.paths.iter().map(|p| cost.cost(s.k, p, controls)).sum::<f64>() / s.len() as f64
}

/// Rule-of-thumb bandwidth `(4 / (n_s (n_k + 2) n_k^2))^(1 / (n_k + 4))`.
pub fn kde_bandwidth(n_s: usize, n_k: usize) -> Result<f64> {
    if n_s < 2 || n_k < 1 {
        return Err(Error::InvalidParameter(format!(
            "bandwidth needs n_s >= 2 and n_k >= 1, got n_s={n_s}, n_k={n_k}"
        )));
    }
    let (n, d) = (n_s as f64, n_k as f64);
    Ok((4.0 / (n * (d + 2.0) * d * d)).powf(1.0 / (d + 4.0)))
}

/// `D_ij = |y_i - y_j|^2 / (2 sigma^2)`. Quadratic memory; small sets only.
pub fn pairwise_dist(y: &[DVector<f64>], sigma: f64) -> DMatrix<f64> {
    let n = y.len();
    let c = 0.5 / (sigma * sigma);
    DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { (&y[i] - &y[j]).norm_squared() * c })
}

/// Pairs farther apart than this (in units of `D_ij`) are skipped by the
/// default reduction. Each skipped term is below `4.3e-18` while every
/// kernel sum is at least one, so the error in `l_i` is below
/// `n_s * 4.3e-18`.
pub const KERNEL_CUTOFF: f64 = 40.0;

/// Series length of [`Reduction::Hermite`]. With box half-width 1/2 (in
/// kernel units) the tail after `P` terms is below
/// `1.09 * 2^(-P/2) / sqrt(P!)` per sample.
pub const HERMITE_TERMS: usize = 28;

/// How the pairwise kernel sums in [`log_kernel_means`] are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Reduction {
    /// Samples sorted by their first coordinate; each pair within
    /// [`KERNEL_CUTOFF`] along that coordinate is evaluated once and
    /// accumulated in a fixed order.
    Symmetric,
    /// Scalar observations only (falls back to `Symmetric` otherwise):
    /// samples are binned in boxes of width `sigma * sqrt(2)` and each box
    /// is summarized by [`HERMITE_TERMS`] Hermite moments, so a kernel sum
    /// costs one short series per nearby box instead of one exponential per
    /// pair. Truncation error is below `1e-19` per sample.
    #[default]
    Hermite,
    /// Rows summed independently in parallel over all pairs, no cutoff.
    /// Deterministic too, but differs from `Symmetric` at roundoff level.
    ParallelRows,
}

fn flatten(y: &[DVector<f64>]) -> (Vec<f64>, usize) {
    let d = y.first().map_or(0, |v| v.len());
    let mut flat = Vec::with_capacity(y.len() * d);
    for v in y {
        flat.extend(v.iter());
    }
    (flat, d)
}

fn symmetric_sums(y: &[DVector<f64>], c: f64) -> Vec<f64> {
    let n = y.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| y[a][0].total_cmp(&y[b][0]).then(a.cmp(&b)));
    let sorted: Vec<DVector<f64>> = order.iter().map(|&i| y[i].clone()).collect();
    let (flat, d) = flatten(&sorted);
    let lead: Vec<f64> = sorted.iter().map(|v| v[0]).collect();
    let reach = (KERNEL_CUTOFF / c).sqrt();
    let mut acc = vec![1.0; n];
    for i in 0..n {
        let end = i + 1 + lead[i + 1..].partition_point(|&v| v - lead[i] <= reach);
        let mut row = 0.0;
        if d == 1 {
            let yi = flat[i];
            for (yj, sj) in flat[i + 1..end].iter().zip(acc[i + 1..end].iter_mut()) {
                let t = yi - yj;
                let e = (-(t * t * c)).exp();
                row += e;
                *sj += e;
            }
        } else {
            let yi = &flat[i * d..(i + 1) * d];
            for j in i + 1..end {
                let yj = &flat[j * d..(j + 1) * d];
                let dist: f64 = yi.iter().zip(yj).map(|(p, q)| (p - q) * (p - q)).sum();
                let e = (-(dist * c)).exp();
                row += e;
                acc[j] += e;
            }
        }
        acc[i] += row;
    }
    let mut sums = vec![0.0; n];
    for (pos, &i) in order.iter().enumerate() {
        sums[i] = acc[pos];
    }
    sums
}

/// Kernel sums `sum_j exp(-(z_i - z_j)^2)` with `z = sqrt(c) y`, via
/// `exp(-(t - s)^2) = sum_k s^k / k! * H_k(t) exp(-t^2)` around box centres.
fn hermite_sums(y: &[DVector<f64>], c: f64) -> Vec<f64> {
    let scale = c.sqrt();
    // shifting first keeps z small, so its rounding matches that of y_i - y_j
    let origin = y.iter().map(|v| v[0]).fold(f64::INFINITY, f64::min);
    let z: Vec<f64> = y.iter().map(|v| (v[0] - origin) * scale).collect();
    let mut order: Vec<usize> = (0..z.len()).collect();
    order.sort_by(|&a, &b| z[a].total_cmp(&z[b]).then(a.cmp(&b)));

    // boxes of unit width; moments[k] = sum_j (z_j - centre)^k / k!
    let mut centres: Vec<f64> = Vec::new();
    let mut moments: Vec<[f64; HERMITE_TERMS]> = Vec::new();
    let mut current = f64::NAN;
    for &j in &order {
        let cell = z[j].floor();
        if cell != current {
            current = cell;
            centres.push(cell + 0.5);
            moments.push([0.0; HERMITE_TERMS]);
        }
        let s = z[j] - current - 0.5;
        let m = moments.last_mut().expect("box just pushed");
        let mut term = 1.0;
        for (k, mk) in m.iter_mut().enumerate() {
            *mk += term;
            term *= s / (k + 1) as f64;
        }
    }

    let reach = KERNEL_CUTOFF.sqrt() + 0.5;
    z.iter()
        .map(|&zi| {
            let lo = centres.partition_point(|&x| x < zi - reach);
            let hi = centres.partition_point(|&x| x <= zi + reach);
            let mut total = 0.0;
            for b in lo..hi {
                let t = zi - centres[b];
                let (mut h_prev, mut h) = (0.0, (-t * t).exp());
                let mut acc = 0.0;
                for (k, mk) in moments[b].iter().enumerate() {
                    acc += mk * h;
                    let next = 2.0 * t * h - 2.0 * k as f64 * h_prev;
                    h_prev = h;
                    h = next;
                }
                total += acc;
            }
            total
        })
        .collect()
}

/// `l_i = ln((1/n) sum_j exp(-D_ij))` for every sample.
///
/// The usual log-sum-exp shift is `max_j(-D_ij) = 0` (the `j = i` term), so
/// each sum is at least one and is accumulated without rescaling; far pairs
/// underflow to zero harmlessly.
pub fn log_kernel_means(y: &[DVector<f64>], sigma: f64, reduction: Reduction) -> Vec<f64> {
    let n = y.len();
    let c = 0.5 / (sigma * sigma);
    let scalar = y.first().is_some_and(|v| v.len() == 1);
    let sums = match reduction {
        Reduction::Hermite if scalar => hermite_sums(y, c),
        Reduction::Symmetric | Reduction::Hermite => symmetric_sums(y, c),
        Reduction::ParallelRows => {
            let (flat, d) = flatten(y);
            let dist = |i: usize, j: usize| -> f64 {
                let (a, b) = (&flat[i * d..(i + 1) * d], &flat[j * d..(j + 1) * d]);
                a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>() * c
            };
            (0..n)
                .into_par_iter()
                .map(|i| (0..n).map(|j| if i == j { 1.0 } else { (-dist(i, j)).exp() }).sum())
                .collect()
        }
    };
    let ln_n = (n as f64).ln();
    sums.into_iter().map(|s| s.ln() - ln_n).collect()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn check_kde_input(y: &[DVector<f64>]) -> Result<()> {
    if y.len() < 2 {
        return Err(Error::InvalidParameter(format!("need at least two samples, got {}", y.len())));
    }
    if y[0].is_empty() {
        return Err(Error::Empty("future observations"));
    }
    if y.iter().all(|v| v == &y[0]) {
        return Err(Error::DegenerateSamples);
    }
    Ok(())
}

/// KDE entropy estimate of the future observations, in nats.
pub fn mc_entropy(s: &SampleSet, sigma: f64, reduction: Reduction) -> Result<f64> {
    check_kde_input(&s.y_future)?;
    let ell = log_kernel_means(&s.y_future, sigma, reduction);
    Ok(0.5 * s.n_k as f64 * (2.0 * PI * sigma * sigma).ln() - mean(&ell))
}

/// Control-independent part of the information estimate,
/// `(n_k / 2) ln(sigma^2 / e) - (blocks / 2) ln |S_v|`.
pub fn info_constant(n_k: usize, sigma: f64, s_v: &DMatrix<f64>) -> Result<f64> {
    let m = s_v.nrows();
    if m == 0 || s_v.ncols() != m || n_k % m != 0 {
        return Err(Error::Dimension(format!(
            "stacked dimension {n_k} is not a multiple of the {}x{} noise covariance",
            s_v.nrows(),
            s_v.ncols()
        )));
    }
    let det = s_v.determinant();
    if !(det > 0.0) {
        return Err(Error::Indefinite(det));
    }
    Ok(0.5 * n_k as f64 * (sigma * sigma / E).ln() - 0.5 * (n_k / m) as f64 * det.ln())
}

/// KDE estimate of `I(X; Y+)` under additive Gaussian observation noise.
/// Reported raw; small negative values are estimator bias.
pub fn mc_mutual_info(s: &SampleSet, sigma: f64, s_v: &DMatrix<f64>, reduction: Reduction) -> Result<f64> {
    check_kde_input(&s.y_future)?;
    let ell = log_kernel_means(&s.y_future, sigma, reduction);
    Ok(info_constant(s.n_k, sigma, s_v)? - mean(&ell))
}

/// The optimized objective `(1/n_s) sum_i [L_i + nu l_i]`.
///
/// With no future observations the information term vanishes.
pub fn ibc_cost(s: &SampleSet, cost: &dyn PathCost, controls: &[f64], nu: f64, sigma: f64, reduction: Reduction) -> f64 {
    let base = mc_expectation(s, cost, controls);
    if s.n_k == 0 || nu == 0.0 {
        return base;
    }
    base + nu * mean(&log_kernel_means(&s.y_future, sigma, reduction))
}

/// `E L - nu I` with the full information estimate; equals [`ibc_cost`]
/// minus `nu * info_constant`.
pub fn ibc_cost_full(
    s: &SampleSet,
    cost: &dyn PathCost,
    controls: &[f64],
    nu: f64,
    sigma: f64,
    s_v: &DMatrix<f64>,
    reduction: Reduction,
) -> Result<f64> {
    let reduced = ibc_cost(s, cost, controls, nu, sigma, reduction);
    if s.n_k == 0 {
        return Ok(reduced);
    }
    Ok(reduced - nu * info_constant(s.n_k, sigma, s_v)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlanMode {
    Ibc,
    /// The information term is skipped.
    Olfo,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanConfig {
    pub horizon: usize,
    /// `nu_k` per step; the last entry is unused.
    pub nu: Vec<f64>,
    pub n_s: usize,
    pub seed: u64,
    pub u_bounds: (f64, f64),
    /// Grid step of the start grid for each control.
    pub grid_step: f64,
    /// Refinement tolerance on the controls.
    pub tol: f64,
    pub reduction: Reduction,
}

impl PlanConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon < 2 {
            return Err(Error::InvalidParameter(format!("horizon must be at least 2, got {}", self.horizon)));
        }
        if self.nu.len() != self.horizon {
            return Err(Error::Dimension(format!(
                "expected {} penalty weights, got {}",
                self.horizon,
                self.nu.len()
            )));
        }
        if let Some(nu) = self.nu.iter().find(|nu| !(**nu >= 0.0 && nu.is_finite())) {
            return Err(Error::InvalidParameter(format!("penalty weights must be nonnegative, got {nu}")));
        }
        if self.n_s < 2 {
            return Err(Error::InvalidParameter(format!("need at least two samples, got {}", self.n_s)));
        }
        self.search().validate()
    }

    fn search(&self) -> SearchSpec {
        SearchSpec::new(self.u_bounds.0, self.u_bounds.1, self.grid_step, self.tol)
    }

    fn step_seed(&self, k: usize) -> u64 {
        splitmix64(self.seed ^ splitmix64(k as u64))
    }
}

/// Result of one open-loop minimization.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanStep {
    pub k: usize,
    /// `u_k, ..., u_{N-1}`.
    pub controls: Vec<f64>,
    pub objective: f64,
    pub at_boundary: bool,
    /// `(u_k, min over the rest)` on the start grid when `u_k` is not the
    /// last control.
    pub curve: Vec<(f64, f64)>,
}

/// Objective evaluator for a fixed set of posterior samples at step `k`.
pub struct StepProblem<'a, D: Dynamics + ?Sized> {
    pub dyn_: &'a D,
    pub posterior: &'a [DVector<f64>],
    pub cost: &'a dyn PathCost,
    pub k: usize,
    pub horizon: usize,
    pub nu: f64,
    pub seed: u64,
    pub mode: PlanMode,
    pub search: SearchSpec,
    pub reduction: Reduction,
}

struct PrefixEval {
    paths: Vec<Vec<DVector<f64>>>,
    info: f64,
}

impl<D: Dynamics + ?Sized> StepProblem<'_, D> {
    fn prefix(&self, prefix: &[f64]) -> Result<PrefixEval> {
        let r = rollout(self.dyn_, self.posterior, prefix, self.seed, self.k)?;
        let info = if prefix.is_empty() || self.mode == PlanMode::Olfo || self.nu == 0.0 {
            0.0
        } else {
            let n_k = self.dyn_.obs_dim() * prefix.len();
            let sigma = kde_bandwidth(self.posterior.len(), n_k)?;
            self.nu * mean(&log_kernel_means(&r.ys, sigma, self.reduction))
        };
        Ok(PrefixEval { paths: r.paths, info })
    }

    fn value_with_last(&self, pe: &PrefixEval, prefix: &[f64], last: f64) -> f64 {
        let ends: Vec<DVector<f64>> = pe.paths.iter().map(|p| p.last().cloned().expect("nonempty")).collect();
        let t = self.k + prefix.len();
        let finals = final_states(self.dyn_, &ends, last, self.seed, t);
        let mut controls = prefix.to_vec();
        controls.push(last);
        let mut path_buf = Vec::new();
        let total: f64 = pe
            .paths
            .iter()
            .zip(finals)
            .map(|(p, x)| {
                path_buf.clear();
                path_buf.extend(p.iter().cloned());
                path_buf.push(x);
                self.cost.cost(self.k, &path_buf, &controls)
            })
            .sum();
        total / pe.paths.len() as f64 + pe.info
    }

    /// Minimum over the last control for a fixed prefix.
    fn inner(&self, prefix: &[f64]) -> Result<(f64, f64, bool)> {
        let pe = self.prefix(prefix)?;
        let m = grid_minimize(|u| self.value_with_last(&pe, prefix, u), &self.search)?;
        let best = m.best();
        Ok((best.x, best.value, m.at_boundary))
    }

    /// Full objective of a complete control sequence.
    pub fn objective(&self, controls: &[f64]) -> Result<f64> {
        let (prefix, last) = controls.split_at(controls.len() - 1);
        let pe = self.prefix(prefix)?;
        Ok(self.value_with_last(&pe, prefix, last[0]))
    }

    /// Minimizes over `u_k, ..., u_{N-1}`.
    ///
    /// The information term depends only on the controls before the last,
    /// so the last control is minimized in an inner search for every prefix.
    pub fn solve(&self) -> Result<PlanStep> {
        let len = self.horizon - self.k;
        let prefix_len = len - 1;
        if prefix_len == 0 {
            let (u, v, b) = self.inner(&[])?;
            return Ok(PlanStep { k: self.k, controls: vec![u], objective: v, at_boundary: b, curve: Vec::new() });
        }
        let failure = std::sync::Mutex::new(None);
        let outer = |p: &[f64]| -> f64 {
            match self.inner(p) {
                Ok((_, v, _)) => v,
                Err(e) => {
                    failure.lock().unwrap_or_else(|e| e.into_inner()).get_or_insert(e);
                    f64::NAN
                }
            }
        };
        let (prefix, curve, boundary) = if prefix_len == 1 {
            let m = grid_minimize(|u| outer(&[u]), &self.search);
            if let Some(e) = failure.lock().unwrap_or_else(|e| e.into_inner()).take() {
                return Err(e);
            }
            let m = m?;
            (vec![m.positive_branch().x], m.curve, m.at_boundary)
        } else {
            // start from the best constant sequence on the grid
            let starts = self.search.grid();
            let (start, _) = starts
                .iter()
                .map(|&u| (u, outer(&vec![u; prefix_len])))
                .fold((starts[0], f64::INFINITY), |acc, c| if c.1 < acc.1 { c } else { acc });
            let (x, _) = nelder_mead_box(
                &outer,
                &vec![start; prefix_len],
                self.search.lo,
                self.search.hi,
                self.search.step,
                self.search.tol,
                self.search.max_iter * prefix_len,
            );
            if let Some(e) = failure.lock().unwrap_or_else(|e| e.into_inner()).take() {
                return Err(e);
            }
            let at = x.iter().any(|&u| u <= self.search.lo || u >= self.search.hi);
            (x, Vec::new(), at)
        };
        let (last, value, last_boundary) = self.inner(&prefix)?;
        let mut controls = prefix;
        controls.push(last);
        Ok(PlanStep { k: self.k, controls, objective: value, at_boundary: boundary || last_boundary, curve })
    }
}

/// The true plant driven by the planner.
#[derive(Debug, Clone, PartialEq)]
pub struct Plant {
    pub x: DVector<f64>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PlanTrace {
    pub controls: Vec<f64>,
    /// `y_1, ..., y_{N-1}` as seen by the filter.
    pub observations: Vec<DVector<f64>>,
    pub states: Vec<DVector<f64>>,
    pub steps: Vec<PlanStep>,
    /// Realized cost of the executed trajectory; `None` if aborted.
    pub realized_cost: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, ThisError)]
#[error("planning failed at step {step}: {source}")]
pub struct PlanError {
    pub step: usize,
    pub source: Error,
    pub partial: PlanTrace,
}

/// Receding-horizon loop: plan, apply the first control, observe, update
/// the posterior, repeat.
pub fn ibc_plan<D: Dynamics + ?Sized, P: PosteriorProvider>(
    dyn_: &D,
    provider: &mut P,
    plant: &mut Plant,
    cost: &dyn PathCost,
    cfg: &PlanConfig,
    mode: PlanMode,
) -> std::result::Result<PlanTrace, PlanError> {
    let mut trace = PlanTrace { states: vec![plant.x.clone()], ..PlanTrace::default() };
    macro_rules! fail {
        ($k:expr, $e:expr) => {
            return Err(PlanError { step: $k, source: $e, partial: trace })
        };
    }
    if let Err(e) = cfg.validate() {
        fail!(0, e);
    }
    let root = match obs_root(dyn_) {
        Ok(r) => r,
        Err(e) => fail!(0, e),
    };
    for k in 0..cfg.horizon {
        let seed = cfg.step_seed(k);
        let posterior = match provider.samples(cfg.n_s, seed) {
            Ok(p) => p,
            Err(e) => fail!(k, e),
        };
        let problem = StepProblem {
            dyn_,
            posterior: &posterior,
            cost,
            k,
            horizon: cfg.horizon,
            nu: cfg.nu[k],
            seed,
            mode,
            search: cfg.search(),
            reduction: cfg.reduction,
        };
        let step = match problem.solve() {
            Ok(s) => s,
            Err(e) => fail!(k, e),
        };
        let u = step.controls[0];
        trace.steps.push(step);
        trace.controls.push(u);
        let w = standard_normals(&mut noise_stream(plant.seed, 0, k as u64, Channel::Plant), dyn_.noise_dim());
        plant.x = dyn_.step(&plant.x, u, &w);
        trace.states.push(plant.x.clone());
        if k + 1 < cfg.horizon {
            let mut rng = noise_stream(plant.seed, 0, (k + 1) as u64, Channel::PlantObservation);
            let y = dyn_.observe_mean(&plant.x) + &root * standard_normals(&mut rng, dyn_.obs_dim());
            if let Err(e) = provider.assimilate(u, &y) {
                fail!(k, e);
            }
            trace.observations.push(y);
        }
    }
    trace.realized_cost = Some(cost.cost(0, &trace.states, &trace.controls));
    Ok(trace)
}

/// Golden-section polish of a scalar control against a fixed objective;
/// exposed for callers refining grid results.
pub fn refine_scalar<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, tol: f64) -> Result<f64> {
    Ok(golden_section(f, lo, hi, tol, 200)?.x)
}
