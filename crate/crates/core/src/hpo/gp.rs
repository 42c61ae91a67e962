//! Gaussian-process surrogate and the expected-improvement acquisition.

use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::error::{Error, Result};

use super::{Configuration, HyperparameterSpace};

/// Fixed kernel settings: squared-exponential kernel on min-max scaled
/// coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GpSettings {
    pub length_scale: f64,
    pub signal_variance: f64,
    pub jitter: f64,
}

impl Default for GpSettings {
    fn default() -> Self {
        GpSettings {
            length_scale: 0.3,
            signal_variance: 1.0,
            jitter: 1e-6,
        }
    }
}

impl GpSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.length_scale > 0.0 && self.signal_variance > 0.0 && self.jitter >= 0.0) {
            return Err(Error::Validation(
                "GP needs positive length scale and signal variance, non-negative jitter".into(),
            ));
        }
        Ok(())
    }

    fn kernel(&self, a: &[f64], b: &[f64]) -> f64 {
        let sq: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
        self.signal_variance * (-sq / (2.0 * self.length_scale * self.length_scale)).exp()
    }
}

/// Exact GP regression posterior. Targets are centred on their mean, which
/// acts as the constant prior mean.
#[derive(Debug, Clone)]
pub struct GaussianProcess {
    settings: GpSettings,
    points: Vec<Vec<f64>>,
    /// Lower Cholesky factor of `K + jitter * I`, row-major.
    chol: Vec<f64>,
    /// `(K + jitter * I)^{-1} (y - mean)`.
    weights: Vec<f64>,
    target_mean: f64,
}

impl GaussianProcess {
    pub fn fit(points: Vec<Vec<f64>>, targets: &[f64], settings: GpSettings) -> Result<Self> {
        settings.validate()?;
        let n = points.len();
        if n < 2 || targets.len() != n {
            return Err(Error::Validation(format!(
                "GP needs at least two points with one target each, got {n} points and {} targets",
                targets.len()
            )));
        }
        if targets.iter().any(|t| !t.is_finite()) {
            return Err(Error::NonFinite("GP targets must be finite".into()));
        }
        let mut k = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let v = settings.kernel(&points[i], &points[j]);
                k[i * n + j] = v;
                k[j * n + i] = v;
            }
            k[i * n + i] += settings.jitter;
        }
        let chol = cholesky(&k, n)?;
        let target_mean = targets.iter().sum::<f64>() / n as f64;
        let centred: Vec<f64> = targets.iter().map(|t| t - target_mean).collect();
        let weights = solve_upper_t(&chol, n, &solve_lower(&chol, n, &centred));
        Ok(GaussianProcess {
            settings,
            points,
            chol,
            weights,
            target_mean,
        })
    }

    /// Posterior mean and standard deviation at `x`.
    pub fn predict(&self, x: &[f64]) -> (f64, f64) {
        let n = self.points.len();
        let kx: Vec<f64> = self.points.iter().map(|p| self.settings.kernel(p, x)).collect();
        let mean = self.target_mean + kx.iter().zip(&self.weights).map(|(a, b)| a * b).sum::<f64>();
        let v = solve_lower(&self.chol, n, &kx);
        let var = self.settings.signal_variance - v.iter().map(|a| a * a).sum::<f64>();
        (mean, var.max(0.0).sqrt())
    }

    pub fn prior_variance(&self) -> f64 {
        self.settings.signal_variance
    }
}

fn cholesky(a: &[f64], n: usize) -> Result<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[i * n + j];
            for p in 0..j {
                sum -= l[i * n + p] * l[j * n + p];
            }
            if i == j {
                if !(sum > 0.0) {
                    return Err(Error::Numerical(format!(
                        "kernel matrix not positive definite at pivot {i} ({sum:e})"
                    )));
                }
                l[i * n + i] = sum.sqrt();
            } else {
                l[i * n + j] = sum / l[j * n + j];
            }
        }
    }
    Ok(l)
}

/// Solves `L x = b`.
fn solve_lower(l: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    let mut x = vec![0.0; n];
    for i in 0..n {
        let s: f64 = (0..i).map(|p| l[i * n + p] * x[p]).sum();
        x[i] = (b[i] - s) / l[i * n + i];
    }
    x
}

/// Solves `L^T x = b`.
fn solve_upper_t(l: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|p| l[p * n + i] * x[p]).sum();
        x[i] = (b[i] - s) / l[i * n + i];
    }
    x
}

/// Evaluated pairs, the fitted GP over their scaled coordinates, and the
/// incumbent (largest target).
#[derive(Debug, Clone)]
pub struct SurrogateState {
    pub evaluated: Vec<(Configuration, f64)>,
    pub incumbent: f64,
    gp: GaussianProcess,
}

impl SurrogateState {
    pub fn fit(
        space: &HyperparameterSpace,
        evaluated: Vec<(Configuration, f64)>,
        settings: GpSettings,
    ) -> Result<Self> {
        let points = evaluated.iter().map(|(c, _)| space.scaled(c)).collect();
        let targets: Vec<f64> = evaluated.iter().map(|&(_, t)| t).collect();
        let gp = GaussianProcess::fit(points, &targets, settings)?;
        let incumbent = targets.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok(SurrogateState {
            evaluated,
            incumbent,
            gp,
        })
    }

    pub fn predict(&self, space: &HyperparameterSpace, config: &Configuration) -> (f64, f64) {
        self.gp.predict(&space.scaled(config))
    }

    pub fn expected_improvement(
        &self,
        space: &HyperparameterSpace,
        config: &Configuration,
    ) -> Result<f64> {
        let (mean, std) = self.predict(space, config);
        expected_improvement(mean, std, self.incumbent)
    }
}

/// `[phi(z) + z Phi(z)] * sigma` with `z = (eta - incumbent) / sigma`;
/// zero when `sigma = 0`.
pub fn expected_improvement(eta: f64, sigma: f64, incumbent: f64) -> Result<f64> {
    if !(sigma >= 0.0) || !eta.is_finite() || !incumbent.is_finite() {
        return Err(Error::Validation(format!(
            "expected improvement needs finite inputs and sigma >= 0 (eta {eta}, sigma {sigma}, incumbent {incumbent})"
        )));
    }
    if sigma == 0.0 {
        return Ok(0.0);
    }
    let z = (eta - incumbent) / sigma;
    let std = Normal::standard();
    Ok(((std.pdf(z) + z * std.cdf(z)) * sigma).max(0.0))
}
