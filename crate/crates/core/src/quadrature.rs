//! Gauss-Hermite rules for expectations under a normal distribution.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Probabilists' Gauss-Hermite rule: `E f(Z) ~ sum w_i f(z_i)` for
/// `Z ~ N(0, 1)`, with weights summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussHermite {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussHermite {
    /// Golub-Welsch: the nodes are the eigenvalues of the symmetric Jacobi
    /// matrix of the monic Hermite recurrence (off-diagonal `sqrt(k)`), the
    /// weights the squared first eigenvector components.
    pub fn new(order: usize) -> Result<Self> {
        if order == 0 {
            return Err(Error::InvalidParameter("quadrature order must be positive".into()));
        }
        let mut jacobi = DMatrix::zeros(order, order);
        for k in 1..order {
            let off = (k as f64).sqrt();
            jacobi[(k - 1, k)] = off;
            jacobi[(k, k - 1)] = off;
        }
        let eig = jacobi.symmetric_eigen();
        let mut pairs: Vec<(f64, f64)> = eig
            .eigenvalues
            .iter()
            .zip(eig.eigenvectors.row(0).iter())
            .map(|(&z, &v)| (z, v * v))
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        // symmetrize so that odd integrands vanish to roundoff
        let n = pairs.len();
        for i in 0..n / 2 {
            let z = 0.5 * (pairs[n - 1 - i].0 - pairs[i].0);
            let w = 0.5 * (pairs[n - 1 - i].1 + pairs[i].1);
            pairs[i] = (-z, w);
            pairs[n - 1 - i] = (z, w);
        }
        if n % 2 == 1 {
            pairs[n / 2].0 = 0.0;
        }
        let total: f64 = pairs.iter().map(|p| p.1).sum();
        let (nodes, weights) = pairs.into_iter().map(|(z, w)| (z, w / total)).unzip();
        Ok(Self { nodes, weights })
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Shared rule of the given order, built once per process.
    pub fn cached(order: usize) -> Result<Arc<Self>> {
        static CACHE: OnceLock<Mutex<HashMap<usize, Arc<GaussHermite>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        if let Some(rule) = cache.lock().unwrap_or_else(|p| p.into_inner()).get(&order) {
            return Ok(Arc::clone(rule));
        }
        // built outside the lock; a concurrent duplicate build is harmless
        let rule = Arc::new(Self::new(order)?);
        let mut guard = cache.lock().unwrap_or_else(|p| p.into_inner());
        Ok(Arc::clone(guard.entry(order).or_insert(rule)))
    }

    /// `E f(Y)` for `Y ~ N(mean, var)`.
    pub fn expect<F: FnMut(f64) -> f64>(&self, mean: f64, var: f64, mut f: F) -> f64 {
        let sd = var.max(0.0).sqrt();
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(z, w)| w * f(mean + sd * z))
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn integrates_gaussian_moments() {
        let gh = GaussHermite::new(10).unwrap();
        assert_abs_diff_eq!(gh.expect(0.0, 1.0, |_| 1.0), 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(gh.expect(0.0, 1.0, |z| z), 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(gh.expect(0.0, 1.0, |z| z * z), 1.0, epsilon = 1e-13);
        assert_abs_diff_eq!(gh.expect(0.0, 1.0, |z| z.powi(4)), 3.0, epsilon = 1e-12);
        // exact up to degree 2n - 1 = 19: E Z^18 = 17!!
        let dfact: f64 = (1..=17).step_by(2).map(|k| k as f64).product();
        assert_abs_diff_eq!(gh.expect(0.0, 1.0, |z| z.powi(18)) / dfact, 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(gh.expect(2.0, 9.0, |y| y * y), 13.0, epsilon = 1e-12);
    }

    #[test]
    fn smooth_nonpolynomial_integrand() {
        // E cos(Z) = e^{-1/2}
        let gh = GaussHermite::new(32).unwrap();
        assert_abs_diff_eq!(gh.expect(0.0, 1.0, f64::cos), (-0.5f64).exp(), epsilon = 1e-14);
    }

    #[test]
    fn zero_order_is_rejected() {
        assert!(GaussHermite::new(0).is_err());
        assert!(GaussHermite::cached(0).is_err());
    }

    #[test]
    fn cache_returns_the_same_rule() {
        let a = GaussHermite::cached(12).unwrap();
        let b = GaussHermite::cached(12).unwrap();
        assert!(Arc::ptr_eq(&a, &b));
        assert_eq!(*a, GaussHermite::new(12).unwrap());
    }
}
