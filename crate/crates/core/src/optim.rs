//! Deterministic low-dimensional minimization: grid scan with golden-section
//! refinement, bounded Nelder-Mead, and penalty-weight tuning.

use rayon::prelude::*;

use crate::error::{Error, Result};

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Grid and refinement settings for a one-dimensional search on `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchSpec {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SearchSpec {
    fn default() -> Self {
        Self {
            lo: -6.0,
            hi: 6.0,
            step: 0.01,
            tol: 1e-8,
            max_iter: 200,
        }
    }
}

impl SearchSpec {
    pub fn new(lo: f64, hi: f64, step: f64, tol: f64) -> Self {
        Self {
            lo,
            hi,
            step,
            tol,
            max_iter: 200,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lo < self.hi) || !self.lo.is_finite() || !self.hi.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "search interval [{}, {}] is empty",
                self.lo, self.hi
            )));
        }
        if !(self.step > 0.0) || !(self.tol > 0.0) || self.max_iter == 0 {
            return Err(Error::InvalidParameter(
                "search step, tolerance and iteration cap must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Grid points `lo, lo + step, ...`, always ending exactly at `hi`.
    pub fn grid(&self) -> Vec<f64> {
        let span = self.hi - self.lo;
        let n = (span / self.step - 1e-9).ceil().max(1.0) as usize;
        (0..=n)
            .map(|i| if i == n { self.hi } else { self.lo + i as f64 * self.step })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Minimum {
    pub x: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridMinimum {
    /// Refined minimizers whose value is within `tol` of the best one,
    /// sorted by `x`.
    pub minimizers: Vec<Minimum>,
    /// The sampled objective `(x, f(x))` on the grid.
    pub curve: Vec<(f64, f64)>,
    /// The global minimum sits on an end of the search interval; the
    /// interval is probably too small.
    pub at_boundary: bool,
}

impl GridMinimum {
    pub fn best(&self) -> Minimum {
        *self
            .minimizers
            .iter()
            .min_by(|a, b| a.value.total_cmp(&b.value))
            .expect("grid search always yields a minimizer")
    }

    /// The largest minimizer; for a symmetric pair this is the positive one.
    pub fn positive_branch(&self) -> Minimum {
        *self.minimizers.last().expect("grid search always yields a minimizer")
    }

    pub fn multiplicity(&self) -> usize {
        self.minimizers.len()
    }
}

/// Golden-section search on `[a, b]`. Returns the best point seen.
pub fn golden_section<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64, max_iter: usize) -> Result<Minimum> {
    let (mut a, mut b) = if a <= b { (a, b) } else { (b, a) };
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..max_iter {
        if (b - a).abs() <= tol {
            return Ok(if fc <= fd { Minimum { x: c, value: fc } } else { Minimum { x: d, value: fd } });
        }
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    let best = if fc <= fd { Minimum { x: c, value: fc } } else { Minimum { x: d, value: fd } };
    if (b - a).abs() <= tol {
        Ok(best)
    } else {
        Err(Error::NoConvergence {
            iterations: max_iter,
            best_x: best.x,
            best_f: best.value,
        })
    }
}

/// Samples `f` on the grid of `spec`, refines every local grid minimum with
/// golden-section search over its two neighbouring cells, and reports all
/// refined minima within `spec.tol` of the best.
pub fn grid_minimize<F: Fn(f64) -> f64 + Sync>(f: F, spec: &SearchSpec) -> Result<GridMinimum> {
    spec.validate()?;
    let xs = spec.grid();
    let values: Vec<f64> = xs.par_iter().map(|&x| f(x)).collect();
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(xs[i]));
    }
    let last = xs.len() - 1;

    let mut found: Vec<(usize, Minimum)> = Vec::new();
    for i in 0..=last {
        let left_ok = i == 0 || values[i] <= values[i - 1];
        let right_ok = i == last || values[i] < values[i + 1];
        if !(left_ok && right_ok) {
            continue;
        }
        let grid_point = Minimum { x: xs[i], value: values[i] };
        let a = xs[i.saturating_sub(1)];
        let b = xs[(i + 1).min(last)];
        let refined = golden_section(&f, a, b, spec.tol, spec.max_iter)?;
        let m = if refined.value <= grid_point.value { refined } else { grid_point };
        found.push((i, m));
    }
    if found.is_empty() {
        // strictly decreasing into a plateau at the right end
        found.push((last, Minimum { x: xs[last], value: values[last] }));
    }

    let best = found.iter().map(|(_, m)| m.value).fold(f64::INFINITY, f64::min);
    let best_index = found
        .iter()
        .find(|(_, m)| m.value == best)
        .map(|(i, _)| *i)
        .unwrap_or(0);
    let mut minimizers: Vec<Minimum> = found
        .into_iter()
        .map(|(_, m)| m)
        .filter(|m| m.value <= best + spec.tol)
        .collect();
    minimizers.sort_by(|a, b| a.x.total_cmp(&b.x));
    minimizers.dedup_by(|b, a| (b.x - a.x).abs() <= 10.0 * spec.tol);

    let at_boundary = best_index == 0 || best_index == last;
    Ok(GridMinimum {
        minimizers,
        curve: xs.into_iter().zip(values).collect(),
        at_boundary,
    })
}

/// Settings of the penalty-weight search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NuSearch {
    pub nu_max: f64,
    /// Number of points in the initial sweep over `[0, nu_max]`.
    pub sweep_points: usize,
    /// Tolerance on `| |argmin| - |target| |`.
    pub tol: f64,
    pub max_bisections: usize,
}

impl Default for NuSearch {
    fn default() -> Self {
        Self {
            nu_max: 10.0,
            sweep_points: 41,
            tol: 1e-6,
            max_bisections: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NuTuning {
    pub nu: f64,
    /// `|argmin|` of the objective at the returned `nu`.
    pub argmin: f64,
    /// Every `(nu, |argmin|)` evaluated, in evaluation order.
    pub trace: Vec<(f64, f64)>,
}

/// Finds a penalty weight `nu` for which the minimizer of `objective(nu, .)`
/// has the same magnitude as `target`.
///
/// A sweep over `[0, nu_max]` looks for a bracket on which
/// `|argmin(nu)| - |target|` changes sign; bisection then narrows it.
pub fn tune_nu<F>(objective: F, target: f64, spec: &SearchSpec, search: &NuSearch) -> Result<NuTuning>
where
    F: Fn(f64, f64) -> f64 + Sync,
{
    if !(search.nu_max > 0.0) || search.sweep_points < 2 || !(search.tol > 0.0) {
        return Err(Error::InvalidParameter("invalid penalty-weight search settings".into()));
    }
    let target = target.abs();
    let mut trace = Vec::new();
    let eval = |nu: f64, trace: &mut Vec<(f64, f64)>| -> Result<f64> {
        let m = grid_minimize(|u| objective(nu, u), spec)?;
        let a = m.best().x.abs();
        trace.push((nu, a));
        Ok(a - target)
    };

    let g0 = eval(0.0, &mut trace)?;
    if g0.abs() <= search.tol {
        return Ok(NuTuning { nu: 0.0, argmin: target + g0, trace });
    }
    let mut bracket = None;
    let mut prev = (0.0, g0);
    for k in 1..search.sweep_points {
        let nu = search.nu_max * k as f64 / (search.sweep_points - 1) as f64;
        let g = eval(nu, &mut trace)?;
        if g.abs() <= search.tol {
            return Ok(NuTuning { nu, argmin: target + g, trace });
        }
        if g.signum() != prev.1.signum() {
            bracket = Some((prev, (nu, g)));
            break;
        }
        prev = (nu, g);
    }
    let Some((mut lo, mut hi)) = bracket else {
        return Err(Error::TargetUnreachable { target, nu_max: search.nu_max, trace });
    };
    for _ in 0..search.max_bisections {
        let nu = 0.5 * (lo.0 + hi.0);
        let g = eval(nu, &mut trace)?;
        if g.abs() <= search.tol {
            return Ok(NuTuning { nu, argmin: target + g, trace });
        }
        if g.signum() == lo.1.signum() {
            lo = (nu, g);
        } else {
            hi = (nu, g);
        }
        if hi.0 - lo.0 <= f64::EPSILON * hi.0.abs().max(1.0) {
            break;
        }
    }
    // The minimizer jumps across the target inside the bracket.
    Err(Error::TargetUnreachable { target, nu_max: search.nu_max, trace })
}

/// Nelder-Mead on the box `[lo, hi]^d`, with trial points clamped to the box.
pub fn nelder_mead_box<F: Fn(&[f64]) -> f64>(
    f: &F,
    start: &[f64],
    lo: f64,
    hi: f64,
    initial_step: f64,
    tol: f64,
    max_iter: usize,
) -> (Vec<f64>, f64) {
    let d = start.len();
    let clamp = |p: Vec<f64>| p.into_iter().map(|v| v.clamp(lo, hi)).collect::<Vec<f64>>();
    let mut simplex: Vec<Vec<f64>> = vec![clamp(start.to_vec())];
    for k in 0..d {
        let mut p = start.to_vec();
        p[k] += if p[k] + initial_step <= hi { initial_step } else { -initial_step };
        simplex.push(clamp(p));
    }
    let mut values: Vec<f64> = simplex.iter().map(|p| f(p)).collect();

    for _ in 0..max_iter {
        let mut order: Vec<usize> = (0..=d).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();
        let spread = values[d] - values[0];
        let size = simplex[1..]
            .iter()
            .map(|p| p.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        if size <= tol && spread.abs() <= tol {
            break;
        }
        let centroid: Vec<f64> = (0..d)
            .map(|k| simplex[..d].iter().map(|p| p[k]).sum::<f64>() / d as f64)
            .collect();
        let along = |t: f64| clamp(centroid.iter().zip(&simplex[d]).map(|(c, w)| c + t * (c - w)).collect());
        let reflected = along(1.0);
        let fr = f(&reflected);
        if fr < values[0] {
            let expanded = along(2.0);
            let fe = f(&expanded);
            if fe < fr {
                simplex[d] = expanded;
                values[d] = fe;
            } else {
                simplex[d] = reflected;
                values[d] = fr;
            }
        } else if fr < values[d - 1] {
            simplex[d] = reflected;
            values[d] = fr;
        } else {
            let contracted = along(if fr < values[d] { 0.5 } else { -0.5 });
            let fc = f(&contracted);
            if fc < values[d].min(fr) {
                simplex[d] = contracted;
                values[d] = fc;
            } else {
                for i in 1..=d {
                    let shrunk = clamp(simplex[i].iter().zip(&simplex[0]).map(|(p, b)| b + 0.5 * (p - b)).collect());
                    values[i] = f(&shrunk);
                    simplex[i] = shrunk;
                }
            }
        }
    }
    let best = (0..=d).min_by(|&a, &b| values[a].total_cmp(&values[b])).unwrap_or(0);
    (simplex[best].clone(), values[best])
}
