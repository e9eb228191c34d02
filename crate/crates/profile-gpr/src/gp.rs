//! Exact Gaussian-process linear algebra.
//!
//! Marginal likelihood with analytic gradient, the Gaussian-noise posterior
//! predictive, and noise-free conditioning on a latent vector. Every solve
//! goes through the jittered Cholesky from `kernels`; no explicit inverses
//! leak into the API.

use crate::error::{Error, Result};
use crate::kernels::{gram, gram_sym, gram_sym_with_grads, jittered_cholesky, Kernel};
use crate::likelihoods::GaussianLik;
use crate::profiles::{linspace, Dataset};
use crate::transform::Transform;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

const LN_2PI: f64 = 1.8378770664093453;

/// A Gaussian process with constant mean and homoscedastic Gaussian noise.
/// The zero default mean is deliberate: profile offsets are absorbed by the
/// kernel amplitude.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GPModel {
    pub kernel: Kernel,
    pub mean: f64,
    pub noise: GaussianLik,
}

impl GPModel {
    pub fn new(kernel: Kernel, noise: GaussianLik) -> Result<Self> {
        let m = GPModel { kernel, mean: 0.0, noise };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        self.kernel.validate()?;
        if !(self.noise.sigma_n.is_finite() && self.noise.sigma_n > 0.0) {
            return Err(Error::invalid("GPModel", "noise sigma_n must be finite and > 0"));
        }
        if !self.mean.is_finite() {
            return Err(Error::invalid("GPModel", "mean must be finite"));
        }
        Ok(())
    }

    /// Transforms for the full hyperparameter vector [kernel params..., sigma_n].
    pub fn param_transforms(&self) -> Vec<Transform> {
        let mut t = self.kernel.param_transforms();
        t.push(Transform::Log);
        t
    }

    /// Natural-space hyperparameter vector [kernel params..., sigma_n].
    pub fn params(&self) -> Vec<f64> {
        let mut p = self.kernel.params();
        p.push(self.noise.sigma_n);
        p
    }

    pub fn param_names(&self) -> Vec<&'static str> {
        let mut n: Vec<&'static str> = self.kernel.param_names().to_vec();
        n.push("sigma_n");
        n
    }

    pub fn with_params(&self, p: &[f64]) -> Result<GPModel> {
        let nk = self.kernel.n_params();
        if p.len() != nk + 1 {
            return Err(Error::LengthMismatch {
                what: "model params",
                got: p.len(),
                expected: nk + 1,
            });
        }
        let m = GPModel {
            kernel: self.kernel.with_params(&p[..nk])?,
            mean: self.mean,
            noise: GaussianLik::new(p[nk])?,
        };
        Ok(m)
    }
}

/// Predictive mean and standard deviation over a coordinate grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictiveGrid {
    pub psi_star: Vec<f64>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl PredictiveGrid {
    pub fn validate(&self) -> Result<()> {
        if self.psi_star.len() != self.mean.len() || self.psi_star.len() != self.std.len() {
            return Err(Error::invalid("PredictiveGrid", "array lengths differ"));
        }
        if self.std.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::invalid("PredictiveGrid", "std must be finite and >= 0"));
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("psi,mean,std\n");
        for i in 0..self.psi_star.len() {
            out.push_str(&format!("{},{},{}\n", self.psi_star[i], self.mean[i], self.std[i]));
        }
        out
    }

    pub fn write_csv(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_csv_string())
            .map_err(|e| Error::io(path.display().to_string(), e))
    }
}

/// Default evaluation grid: 220 uniform coordinates spanning [0, 1.1],
/// reaching past the separatrix into the scrape-off layer.
pub fn default_predictive_grid() -> Vec<f64> {
    linspace(0.0, 1.1, 220)
}

/// Minimal data checks for GP algebra. Deliberately weaker than the
/// profile-level `Dataset::validate`: the math needs finite values and
/// matching lengths, not sortedness or positivity.
fn check_data(data: &Dataset) -> Result<()> {
    let n = data.psi.len();
    if n == 0 {
        return Err(Error::invalid("Dataset", "empty dataset"));
    }
    if data.y.len() != n {
        return Err(Error::LengthMismatch { what: "y", got: data.y.len(), expected: n });
    }
    if data.psi.iter().any(|v| !v.is_finite()) || data.y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite coordinate or observation".into()));
    }
    Ok(())
}

/// Log marginal likelihood and its gradient with respect to the
/// *unconstrained* hyperparameters [kernel params..., sigma_n], each mapped
/// through the transform declared by the model.
///
/// Value: -1/2 y'(K+s^2 I)^-1 y - 1/2 log|K+s^2 I| - n/2 log 2pi.
/// Gradient: the trace identity 1/2 (a'Ga - tr((K+s^2I)^-1 G)) with
/// a = (K+s^2I)^-1 y, chain-ruled into z-space.
pub fn log_marginal_likelihood(model: &GPModel, data: &Dataset) -> Result<(f64, Vec<f64>)> {
    model.validate()?;
    check_data(data)?;
    let n = data.psi.len();
    let sigma = model.noise.sigma_n;

    let (mut ksig, kgrads) = gram_sym_with_grads(&model.kernel, &data.psi);
    for i in 0..n {
        ksig[(i, i)] += sigma * sigma;
    }
    let (chol, _jitter) = jittered_cholesky(ksig)?;
    let y = DVector::from_iterator(n, data.y.iter().map(|v| v - model.mean));
    let alpha = chol.solve(&y);

    let half_log_det: f64 = chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum();
    let value = -0.5 * y.dot(&alpha) - half_log_det - 0.5 * n as f64 * LN_2PI;
    if !value.is_finite() {
        return Err(Error::Numerical(format!("non-finite marginal likelihood {value}")));
    }

    let kinv = chol.inverse();
    let m = model.kernel.n_params();
    let mut grad_nat = Vec::with_capacity(m + 1);
    for g in &kgrads {
        let quad = (g * &alpha).dot(&alpha);
        let trace = kinv.zip_fold(g, 0.0, |acc, a, b| acc + a * b);
        grad_nat.push(0.5 * (quad - trace));
    }
    grad_nat.push(sigma * (alpha.dot(&alpha) - kinv.trace()));

    let transforms = model.param_transforms();
    let naturals = model.params();
    let grad_z: Vec<f64> = grad_nat
        .iter()
        .zip(&transforms)
        .zip(&naturals)
        .map(|((g, t), nat)| g * t.dnatural_dz(t.to_unconstrained(*nat)))
        .collect();
    Ok((value, grad_z))
}

/// Same quantity as [`log_marginal_likelihood`] without the gradient.
/// Skips the per-parameter derivative Grams and the explicit inverse, so a
/// call costs one Gram build plus one Cholesky; optimizer line searches and
/// MCMC targets should use this.
pub fn log_marginal_value(model: &GPModel, data: &Dataset) -> Result<f64> {
    model.validate()?;
    check_data(data)?;
    let n = data.psi.len();
    let sigma = model.noise.sigma_n;

    let mut ksig = gram_sym(&model.kernel, &data.psi);
    for i in 0..n {
        ksig[(i, i)] += sigma * sigma;
    }
    let (chol, _jitter) = jittered_cholesky(ksig)?;
    let y = DVector::from_iterator(n, data.y.iter().map(|v| v - model.mean));
    let alpha = chol.solve(&y);

    let half_log_det: f64 = chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum();
    let value = -0.5 * y.dot(&alpha) - half_log_det - 0.5 * n as f64 * LN_2PI;
    if !value.is_finite() {
        return Err(Error::Numerical(format!("non-finite marginal likelihood {value}")));
    }
    Ok(value)
}

/// Gaussian-noise posterior predictive on a grid:
/// mean_* = m + K_*'(K+s^2 I)^-1 (y - m),
/// var_*  = K_** - K_*'(K+s^2 I)^-1 K_* clamped at zero.
/// A variance below -1e-6 of the prior variance at that point is reported
/// as a numerical error instead of being silently clamped.
pub fn posterior_predictive(model: &GPModel, data: &Dataset, grid: &[f64]) -> Result<PredictiveGrid> {
    model.validate()?;
    check_data(data)?;
    if grid.is_empty() || grid.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("grid", "grid must be nonempty and finite"));
    }
    let n = data.psi.len();
    let sigma = model.noise.sigma_n;

    let mut ksig = gram_sym(&model.kernel, &data.psi);
    for i in 0..n {
        ksig[(i, i)] += sigma * sigma;
    }
    let (chol, _jitter) = jittered_cholesky(ksig)?;
    let y = DVector::from_iterator(n, data.y.iter().map(|v| v - model.mean));
    let alpha = chol.solve(&y);

    let ks = gram(&model.kernel, &data.psi, grid);
    let w = chol.solve(&ks);
    let g = grid.len();
    let mut mean = Vec::with_capacity(g);
    let mut std = Vec::with_capacity(g);
    for j in 0..g {
        let col = ks.column(j);
        mean.push(model.mean + col.dot(&alpha));
        let prior = model.kernel.eval(grid[j], grid[j]);
        let var = prior - col.dot(&w.column(j));
        if var < -1e-6 * prior {
            return Err(Error::Numerical(format!(
                "predictive variance {var:.3e} at psi={} below tolerance (prior {prior:.3e})",
                grid[j]
            )));
        }
        std.push(var.max(0.0).sqrt());
    }
    Ok(PredictiveGrid { psi_star: grid.to_vec(), mean, std })
}

/// Noise-free conditioning: evaluate K_*' K^-1 f on a grid for a latent
/// vector f living at the data coordinates. Used by the full-Bayes engine
/// to turn each sampled latent into a grid curve.
pub fn condition_latent(kernel: &Kernel, xs: &[f64], f: &[f64], grid: &[f64]) -> Result<Vec<f64>> {
    kernel.validate()?;
    if xs.is_empty() {
        return Err(Error::invalid("coordinates", "empty coordinate array"));
    }
    if f.len() != xs.len() {
        return Err(Error::LengthMismatch { what: "latent vector", got: f.len(), expected: xs.len() });
    }
    let (chol, _jitter) = jittered_cholesky(gram_sym(kernel, xs))?;
    let a = chol.solve(&DVector::from_column_slice(f));
    let ks = gram(kernel, xs, grid);
    Ok((0..grid.len()).map(|j| ks.column(j).dot(&a)).collect())
}

/// Dense solve used as an independent oracle in tests; kept here so tests
/// and examples share one implementation.
#[doc(hidden)]
pub fn dense_solve(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    a.clone().lu().solve(b)
}
