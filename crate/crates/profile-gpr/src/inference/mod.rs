//! The two fitting engines.
//!
//! Empirical Bayes: quasi-Newton ascent of the log marginal likelihood,
//! restarted from prior draws, returning the best optimum's posterior.
//! Full Bayes: adaptive random-walk Metropolis over the transformed
//! hyperparameters jointly with a whitened latent vector (f = L v), so any
//! observation-noise family can be used; with a Gaussian likelihood the
//! latents can instead be marginalized analytically and only the
//! hyperparameters sampled. Both return the same `FitResult` shape.
//!
//! Hyperpriors are Gaussian in the transformed space, weakly informative,
//! centered on the scales this domain actually exhibits: log theta_l ~
//! N(log 0.5, 1) for core lengths, N(log 0.1, 1) for edge lengths,
//! log theta_v ~ N(log std(y), 1), log sigma ~ N(log median reported sigma,
//! 1), and log(nu - 1) ~ N(0, 1).

pub mod mcmc;
pub mod optimizer;

pub use mcmc::{
    batch_means_mcse, run_chain, run_chain_shaped, ChainConfig, ChainOutput, ACCEPT_HEALTHY,
};
pub use optimizer::{maximize, MaximizeResult, Objective};

use crate::error::{Error, Result};
use crate::gp::{
    condition_latent, default_predictive_grid, log_marginal_likelihood, log_marginal_value,
    posterior_predictive, GPModel, PredictiveGrid,
};
use crate::kernels::{gram_sym, jittered_cholesky, Kernel, ParamKind};
use crate::likelihoods::{GaussianLik, LikParamKind, Likelihood};
use crate::profiles::Dataset;
use crate::rng::{rng_from_seed, Rng64};
use crate::transform::Transform;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

const LN_2PI: f64 = 1.8378770664093453;

/// One hyperparameter: its transform to unconstrained space, a Gaussian
/// prior there, and an optional pin to a fixed natural value (pinned
/// parameters are excluded from optimization and sampling).
#[derive(Debug, Clone)]
pub struct ParamSpec {
    pub name: String,
    pub transform: Transform,
    pub prior_mu: f64,
    pub prior_sd: f64,
    pub fixed: Option<f64>,
}

/// The full hyperparameter vector for one fit: kernel parameters first,
/// then likelihood parameters.
#[derive(Debug, Clone)]
pub struct ParamSpace {
    pub specs: Vec<ParamSpec>,
    pub n_kernel: usize,
}

impl ParamSpace {
    /// Assemble the space for a kernel/likelihood pair, with priors scaled
    /// to the dataset. `fixed_noise_scale` pins the likelihood scale (for
    /// workflows that trust reported error bars instead of learning noise).
    pub fn for_model(
        kernel: &Kernel,
        lik: &Likelihood,
        data: &Dataset,
        fixed_noise_scale: Option<f64>,
    ) -> Result<ParamSpace> {
        kernel.validate()?;
        lik.validate()?;
        if data.y.is_empty() {
            return Err(Error::invalid("ParamSpace", "empty dataset"));
        }
        let n = data.y.len() as f64;
        let mean_y = data.y.iter().sum::<f64>() / n;
        let sd_y = (data.y.iter().map(|v| (v - mean_y).powi(2)).sum::<f64>() / n)
            .sqrt()
            .max(1e-6);
        let mut sig = data.sigma_reported.clone();
        sig.sort_by(f64::total_cmp);
        let median_sigma = if sig.is_empty() { 0.1 * sd_y } else { sig[sig.len() / 2] }.max(1e-12);

        let mut specs = Vec::new();
        let kinds = kernel.param_kinds();
        let transforms = kernel.param_transforms();
        for ((name, kind), transform) in
            kernel.param_names().iter().zip(kinds).zip(transforms)
        {
            let prior_mu = match kind {
                ParamKind::Amplitude => sd_y.ln(),
                ParamKind::LengthCore => 0.5f64.ln(),
                ParamKind::LengthEdge => 0.1f64.ln(),
                ParamKind::Center => 0.0,
                ParamKind::Width => 0.05f64.ln(),
            };
            specs.push(ParamSpec {
                name: (*name).to_string(),
                transform,
                prior_mu,
                prior_sd: 1.0,
                fixed: None,
            });
        }
        let n_kernel = specs.len();
        let lkinds = lik.param_kinds();
        let ltransforms = lik.param_transforms();
        for ((name, kind), transform) in lik.param_names().iter().zip(lkinds).zip(ltransforms) {
            let (prior_mu, fixed) = match kind {
                LikParamKind::Scale => (median_sigma.ln(), fixed_noise_scale),
                LikParamKind::Shape => (0.0, None),
            };
            specs.push(ParamSpec {
                name: (*name).to_string(),
                transform,
                prior_mu,
                prior_sd: 1.0,
                fixed,
            });
        }
        Ok(ParamSpace { specs, n_kernel })
    }

    /// Pin every parameter to the given natural values (latent-only runs).
    pub fn fix_all(&mut self, naturals: &[f64]) -> Result<()> {
        if naturals.len() != self.specs.len() {
            return Err(Error::LengthMismatch {
                what: "fixed naturals",
                got: naturals.len(),
                expected: self.specs.len(),
            });
        }
        for (spec, v) in self.specs.iter_mut().zip(naturals) {
            spec.fixed = Some(*v);
        }
        Ok(())
    }

    pub fn names(&self) -> Vec<String> {
        self.specs.iter().map(|s| s.name.clone()).collect()
    }

    pub fn n_free(&self) -> usize {
        self.specs.iter().filter(|s| s.fixed.is_none()).count()
    }

    fn free_specs(&self) -> impl Iterator<Item = &ParamSpec> {
        self.specs.iter().filter(|s| s.fixed.is_none())
    }

    /// Prior means of the free parameters: the deterministic chain start.
    pub fn z_init(&self) -> Vec<f64> {
        self.free_specs().map(|s| s.prior_mu).collect()
    }

    /// One prior draw of the free parameters.
    pub fn sample_z(&self, rng: &mut Rng64) -> Vec<f64> {
        self.free_specs()
            .map(|s| s.prior_mu + s.prior_sd * rng.sample::<f64, _>(StandardNormal))
            .collect()
    }

    /// Gaussian log prior of a free-parameter vector (transformed space).
    pub fn log_prior(&self, z_free: &[f64]) -> f64 {
        let mut lp = 0.0;
        for (spec, z) in self.free_specs().zip(z_free) {
            let u = (z - spec.prior_mu) / spec.prior_sd;
            lp += -0.5 * u * u - spec.prior_sd.ln() - 0.5 * LN_2PI;
        }
        lp
    }

    /// Full natural-space vector from the free coordinates, with pinned
    /// parameters inserted at their fixed values.
    pub fn naturals_from_z(&self, z_free: &[f64]) -> Result<Vec<f64>> {
        if z_free.len() != self.n_free() {
            return Err(Error::LengthMismatch {
                what: "free parameters",
                got: z_free.len(),
                expected: self.n_free(),
            });
        }
        let mut out = Vec::with_capacity(self.specs.len());
        let mut it = z_free.iter();
        for spec in &self.specs {
            match spec.fixed {
                Some(v) => out.push(v),
                None => out.push(spec.transform.to_natural(*it.next().unwrap())),
            }
        }
        Ok(out)
    }

    /// Indices of the free parameters within the full vector.
    pub fn free_indices(&self) -> Vec<usize> {
        self.specs
            .iter()
            .enumerate()
            .filter(|(_, s)| s.fixed.is_none())
            .map(|(i, _)| i)
            .collect()
    }
}

/// Hyperparameter part of a fit: a point estimate (empirical Bayes) or
/// per-parameter sample arrays in natural space (full Bayes).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HyperSummary {
    PointEstimate { names: Vec<String>, values: Vec<f64> },
    Samples { names: Vec<String>, draws: Vec<Vec<f64>> },
}

impl HyperSummary {
    pub fn names(&self) -> &[String] {
        match self {
            HyperSummary::PointEstimate { names, .. } => names,
            HyperSummary::Samples { names, .. } => names,
        }
    }
}

/// Outcome of one fit, common to both engines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub method: String,
    pub grid: PredictiveGrid,
    pub hypers: HyperSummary,
    /// Best log marginal likelihood (empirical Bayes only).
    pub lml: Option<f64>,
    /// Post-burn-in acceptance rate (full Bayes only).
    pub acceptance_rate: Option<f64>,
    pub warnings: Vec<String>,
    /// Wall-clock seconds, filled by callers that time fits; the engines
    /// leave it empty so identical inputs give identical results.
    pub runtime_s: Option<f64>,
    /// Root-mean-square error of the predictive mean against the known
    /// truth at the data coordinates, when the dataset carries truth.
    pub rmse: Option<f64>,
    /// Retained grid curves (full Bayes with `keep_curve_draws`).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub curve_draws: Option<Vec<Vec<f64>>>,
}

impl FitResult {
    pub fn to_json_string(&self) -> Result<String> {
        serde_json::to_string_pretty(self)
            .map_err(|e| Error::Numerical(format!("serializing fit result: {e}")))
    }

    pub fn write_json(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_json_string()?)
            .map_err(|e| Error::io(path.display().to_string(), e))
    }
}

fn rmse_against(pred: &[f64], truth: &[f64]) -> Option<f64> {
    if pred.len() != truth.len() || pred.is_empty() {
        return None;
    }
    let ss: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum();
    Some((ss / pred.len() as f64).sqrt())
}

/// Empirical-Bayes settings. `restarts` local ascents start from prior
/// draws; the best final marginal likelihood wins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EbConfig {
    pub restarts: usize,
    pub seed: u64,
    pub max_iter: usize,
    pub grad_tol: f64,
    /// Evaluation grid; the 220-point default when empty.
    pub grid: Option<Vec<f64>>,
    /// Pin the noise scale instead of optimizing it.
    pub fixed_noise_scale: Option<f64>,
}

impl Default for EbConfig {
    fn default() -> Self {
        EbConfig {
            restarts: 8,
            seed: 0,
            max_iter: 500,
            grad_tol: 1e-6,
            grid: None,
            fixed_noise_scale: None,
        }
    }
}

/// Marginal-likelihood ascent objective over the free coordinates. The
/// value-only query takes the gradient-free path, which is what every
/// line-search trial point hits.
#[derive(Clone, Copy)]
struct EbObjective<'a> {
    space: &'a ParamSpace,
    kernel: &'a Kernel,
    data: &'a Dataset,
    free_idx: &'a [usize],
}

impl EbObjective<'_> {
    fn model(&self, z_free: &[f64]) -> Result<GPModel> {
        let nat = self.space.naturals_from_z(z_free)?;
        Ok(GPModel {
            kernel: self.kernel.with_params(&nat[..self.space.n_kernel])?,
            mean: 0.0,
            noise: GaussianLik::new(nat[self.space.n_kernel])?,
        })
    }
}

impl Objective for EbObjective<'_> {
    fn value(&self, z_free: &[f64]) -> Result<f64> {
        log_marginal_value(&self.model(z_free)?, self.data)
    }

    fn value_grad(&self, z_free: &[f64]) -> Result<(f64, Vec<f64>)> {
        let (value, grad_all) = log_marginal_likelihood(&self.model(z_free)?, self.data)?;
        Ok((value, self.free_idx.iter().map(|&i| grad_all[i]).collect()))
    }
}

/// Maximize the log marginal likelihood over kernel hyperparameters and the
/// Gaussian noise scale, from `restarts` prior-sampled starting points.
pub fn fit_empirical_bayes(kernel: &Kernel, data: &Dataset, cfg: &EbConfig) -> Result<FitResult> {
    if cfg.restarts == 0 {
        return Err(Error::invalid("EbConfig", "restarts must be positive"));
    }
    let lik = Likelihood::Gaussian { sigma_n: 1.0 };
    let space = ParamSpace::for_model(kernel, &lik, data, cfg.fixed_noise_scale)?;
    let free_idx = space.free_indices();
    if free_idx.is_empty() {
        return Err(Error::invalid("EbConfig", "no free hyperparameters to optimize"));
    }
    let n_kernel = space.n_kernel;

    let objective = EbObjective { space: &space, kernel, data, free_idx: &free_idx };

    let mut rng = rng_from_seed(cfg.seed);
    let mut best: Option<MaximizeResult> = None;
    let mut failures = 0usize;
    let mut unconverged = 0usize;
    let mut last_error = String::new();
    for _ in 0..cfg.restarts {
        let z0 = space.sample_z(&mut rng);
        match maximize(objective, &z0, cfg.max_iter, cfg.grad_tol) {
            Ok(r) => {
                if !r.converged {
                    unconverged += 1;
                }
                if best.as_ref().map_or(true, |b| r.value > b.value) {
                    best = Some(r);
                }
            }
            Err(e) => {
                failures += 1;
                last_error = e.to_string();
            }
        }
    }
    let best = best.ok_or_else(|| {
        Error::FitFailed(format!(
            "all {} restarts failed; last error: {last_error}",
            cfg.restarts
        ))
    })?;

    let mut warnings = Vec::new();
    if failures > 0 {
        warnings.push(format!(
            "{failures} of {} restarts failed; last error: {last_error}",
            cfg.restarts
        ));
    }
    if unconverged > 0 {
        warnings.push(format!("{unconverged} restarts stopped before gradient tolerance"));
    }

    let nat = space.naturals_from_z(&best.z)?;
    let model = GPModel {
        kernel: kernel.with_params(&nat[..n_kernel])?,
        mean: 0.0,
        noise: GaussianLik::new(nat[n_kernel])?,
    };
    let grid = cfg.grid.clone().unwrap_or_else(default_predictive_grid);
    let mut eval = grid.clone();
    eval.extend_from_slice(&data.psi);
    let pred = posterior_predictive(&model, data, &eval)?;
    let g = grid.len();
    let rmse = data
        .truth
        .as_ref()
        .and_then(|t| rmse_against(&pred.mean[g..], t));

    Ok(FitResult {
        method: format!("eb-{}", kernel.name()),
        grid: PredictiveGrid {
            psi_star: grid,
            mean: pred.mean[..g].to_vec(),
            std: pred.std[..g].to_vec(),
        },
        hypers: HyperSummary::PointEstimate { names: space.names(), values: nat },
        lml: Some(best.value),
        acceptance_rate: None,
        warnings,
        runtime_s: None,
        rmse,
        curve_draws: None,
    })
}

/// Full-Bayes settings.
#[derive(Debug, Clone)]
pub struct FbConfig {
    pub chain: ChainConfig,
    /// Evaluation grid; the 220-point default when empty.
    pub grid: Option<Vec<f64>>,
    /// With a Gaussian likelihood, integrate the latents analytically and
    /// sample hyperparameters only.
    pub marginalize_gaussian: bool,
    /// Keep all hyperparameters at their given values and sample only the
    /// whitened latent vector.
    pub fix_hyperparameters: bool,
    /// Pin the likelihood scale instead of sampling it.
    pub fixed_noise_scale: Option<f64>,
    /// Record every retained grid curve in the result.
    pub keep_curve_draws: bool,
}

impl Default for FbConfig {
    fn default() -> Self {
        FbConfig {
            chain: ChainConfig::default(),
            grid: None,
            marginalize_gaussian: true,
            fix_hyperparameters: false,
            fixed_noise_scale: None,
            keep_curve_draws: false,
        }
    }
}

/// Streaming mean/variance accumulator per grid point.
struct RunningMoments {
    count: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl RunningMoments {
    fn new(len: usize) -> Self {
        RunningMoments { count: 0, mean: vec![0.0; len], m2: vec![0.0; len] }
    }

    fn push(&mut self, xs: &[f64]) {
        self.count += 1;
        for (i, x) in xs.iter().enumerate() {
            let delta = x - self.mean[i];
            self.mean[i] += delta / self.count as f64;
            self.m2[i] += delta * (x - self.mean[i]);
        }
    }

    /// Population variance of everything pushed so far.
    fn variance(&self, i: usize) -> f64 {
        if self.count == 0 {
            return 0.0;
        }
        (self.m2[i] / self.count as f64).max(0.0)
    }
}

/// Sample the posterior over hyperparameters (and, for non-Gaussian
/// likelihoods, the whitened latents) and average the sampled fits.
pub fn fit_full_bayes(
    kernel: &Kernel,
    lik: &Likelihood,
    data: &Dataset,
    cfg: &FbConfig,
) -> Result<FitResult> {
    cfg.chain.validate()?;
    let mut space = ParamSpace::for_model(kernel, lik, data, cfg.fixed_noise_scale)?;
    if cfg.fix_hyperparameters {
        let mut nat = kernel.params();
        nat.extend(lik.params());
        space.fix_all(&nat)?;
    }
    let grid = cfg.grid.clone().unwrap_or_else(default_predictive_grid);
    let mut eval = grid.clone();
    eval.extend_from_slice(&data.psi);

    let marginal = matches!(lik, Likelihood::Gaussian { .. })
        && cfg.marginalize_gaussian
        && space.n_free() > 0;
    let out = if marginal {
        fb_marginalized(kernel, data, &space, cfg, &eval)?
    } else {
        fb_latent(kernel, lik, data, &space, cfg, &eval)?
    };

    let g = grid.len();
    let rmse = data
        .truth
        .as_ref()
        .and_then(|t| rmse_against(&out.mean[g..], t));
    let method = format!("fb-{}-{}", kernel.name(), lik.name());
    Ok(FitResult {
        method,
        grid: PredictiveGrid {
            psi_star: grid,
            mean: out.mean[..g].to_vec(),
            std: out.std[..g].to_vec(),
        },
        hypers: HyperSummary::Samples { names: space.names(), draws: out.hyper_draws },
        lml: None,
        acceptance_rate: Some(out.acceptance_rate),
        warnings: out.warnings,
        runtime_s: None,
        rmse,
        curve_draws: out.curve_draws,
    })
}

struct FbOutput {
    mean: Vec<f64>,
    std: Vec<f64>,
    hyper_draws: Vec<Vec<f64>>,
    acceptance_rate: f64,
    warnings: Vec<String>,
    curve_draws: Option<Vec<Vec<f64>>>,
}

/// Collect per-parameter natural-space arrays from retained z samples.
fn hyper_draws_from_samples(
    space: &ParamSpace,
    samples: &[Vec<f64>],
    z_len: usize,
) -> Result<Vec<Vec<f64>>> {
    let n_params = space.specs.len();
    let mut draws = vec![Vec::with_capacity(samples.len()); n_params];
    for s in samples {
        let nat = space.naturals_from_z(&s[..z_len])?;
        for (p, v) in nat.iter().enumerate() {
            draws[p].push(*v);
        }
    }
    Ok(draws)
}

/// Gaussian likelihood with latents integrated out: the chain walks the
/// hyperparameters against marginal likelihood + prior, and each retained
/// draw contributes its full analytic predictive (so the final variance is
/// within-draw variance plus across-draw spread of the means).
fn fb_marginalized(
    kernel: &Kernel,
    data: &Dataset,
    space: &ParamSpace,
    cfg: &FbConfig,
    eval: &[f64],
) -> Result<FbOutput> {
    let n_kernel = space.n_kernel;
    let build = |z_free: &[f64]| -> Result<GPModel> {
        let nat = space.naturals_from_z(z_free)?;
        Ok(GPModel {
            kernel: kernel.with_params(&nat[..n_kernel])?,
            mean: 0.0,
            noise: GaussianLik::new(nat[n_kernel])?,
        })
    };
    let target = |z_free: &[f64]| -> Result<f64> {
        let model = build(z_free)?;
        Ok(log_marginal_value(&model, data)? + space.log_prior(z_free))
    };

    let chain = run_chain(target, &space.z_init(), &cfg.chain)?;

    let mut mean_moments = RunningMoments::new(eval.len());
    let mut sum_var = vec![0.0; eval.len()];
    let mut curves = cfg.keep_curve_draws.then(Vec::new);
    for s in &chain.samples {
        let model = build(s)?;
        let pred = posterior_predictive(&model, data, eval)?;
        for j in 0..eval.len() {
            sum_var[j] += pred.std[j] * pred.std[j];
        }
        if let Some(c) = curves.as_mut() {
            c.push(pred.mean.clone());
        }
        mean_moments.push(&pred.mean);
    }
    let n_s = chain.samples.len() as f64;
    let mut std = Vec::with_capacity(eval.len());
    for j in 0..eval.len() {
        std.push((sum_var[j] / n_s + mean_moments.variance(j)).sqrt());
    }
    Ok(FbOutput {
        mean: mean_moments.mean,
        std,
        hyper_draws: hyper_draws_from_samples(space, &chain.samples, space.n_free())?,
        acceptance_rate: chain.acceptance_rate,
        warnings: chain.warnings,
        curve_draws: curves,
    })
}

/// General path: joint chain over (z, v) with f = L v, any likelihood.
/// Each retained draw is conditioned onto the evaluation grid and the final
/// fit is the pointwise mean and spread of those curves.
fn fb_latent(
    kernel: &Kernel,
    lik: &Likelihood,
    data: &Dataset,
    space: &ParamSpace,
    cfg: &FbConfig,
    eval: &[f64],
) -> Result<FbOutput> {
    let n = data.psi.len();
    if n == 0 {
        return Err(Error::invalid("Dataset", "empty dataset"));
    }
    let n_free = space.n_free();
    let n_kernel = space.n_kernel;

    let build = |z_free: &[f64]| -> Result<(Kernel, Likelihood)> {
        let nat = space.naturals_from_z(z_free)?;
        Ok((kernel.with_params(&nat[..n_kernel])?, lik.with_params(&nat[n_kernel..])?))
    };

    // f = L v, lower-triangular product against the jittered factor.
    let latent_from = |k: &Kernel, v: &[f64]| -> Result<Vec<f64>> {
        let (chol, _) = jittered_cholesky(gram_sym(k, &data.psi))?;
        let l = chol.l_dirty();
        let mut f = vec![0.0; n];
        for i in 0..n {
            let mut acc = 0.0;
            for j in 0..=i {
                acc += l[(i, j)] * v[j];
            }
            f[i] = acc;
        }
        Ok(f)
    };

    let target = |x: &[f64]| -> Result<f64> {
        let (k, l) = build(&x[..n_free])?;
        let v = &x[n_free..];
        let f = latent_from(&k, v)?;
        let residuals: Vec<f64> = data.y.iter().zip(&f).map(|(y, fi)| y - fi).collect();
        let loglik = l.joint_log_likelihood(&residuals)?;
        let v_prior: f64 = v.iter().map(|vi| -0.5 * vi * vi).sum::<f64>()
            - 0.5 * n as f64 * LN_2PI;
        Ok(loglik + v_prior + space.log_prior(&x[..n_free]))
    };

    // Start the latents on the smooth curve f0 = K (K + s^2 I)^-1 y, i.e.
    // v0 = L' (K + s^2 I)^-1 y, a Gaussian read of the data at the initial
    // hyperparameters. Starting at v = 0 (f = 0) wastes the adaptation
    // budget climbing toward the data, while the exact interpolant L^-1 y
    // has an enormous whitened norm on dense grids (the kernel has to chase
    // noise) and strands the chain in the prior's far tail.
    //
    // The same Gaussian read supplies the proposal geometry: under it,
    // cov(v | y) = (I + L'L / s^2)^-1 exactly, and its diagonal is the right
    // per-coordinate step shape — informative data squeeze some latents four
    // orders of magnitude below their unit prior, which blind adaptation
    // cannot discover within any reasonable burn-in.
    let mut x0 = space.z_init();
    let mut shape0 = vec![1.0; n_free]; // hyper coordinates are already whitened
    {
        let (k0, l0) = build(&x0)?;
        let s = match &l0 {
            Likelihood::Gaussian { sigma_n } => *sigma_n,
            Likelihood::StudentT { sigma_t, .. } => *sigma_t,
            Likelihood::Laplace { scale } | Likelihood::Logistic { scale } => *scale,
        };
        let k = gram_sym(&k0, &data.psi);
        let mut ksig = k.clone();
        for i in 0..n {
            ksig[(i, i)] += s * s;
        }
        let (chol_sig, _) = jittered_cholesky(ksig)?;
        let alpha = chol_sig.solve(&nalgebra::DVector::from_column_slice(&data.y));
        let (chol_k, _) = jittered_cholesky(k)?;
        let lmat = chol_k.l();
        let v0 = lmat.transpose() * &alpha;
        x0.extend(v0.iter());

        let mut prec = lmat.transpose() * &lmat / (s * s);
        for i in 0..n {
            prec[(i, i)] += 1.0;
        }
        match nalgebra::Cholesky::new(prec) {
            Some(ch) => {
                let cov = ch.inverse();
                shape0.extend((0..n).map(|i| cov[(i, i)].max(0.0).sqrt().max(1e-8)));
            }
            // Degenerate scale; fall back to the unit prior shape.
            None => shape0.extend(std::iter::repeat(1.0).take(n)),
        }
    }
    let chain = run_chain_shaped(target, &x0, Some(&shape0), &cfg.chain)?;

    let mut moments = RunningMoments::new(eval.len());
    let mut curves = cfg.keep_curve_draws.then(Vec::new);
    for s in &chain.samples {
        let (k, _) = build(&s[..n_free])?;
        let f = latent_from(&k, &s[n_free..])?;
        let curve = condition_latent(&k, &data.psi, &f, eval)?;
        if let Some(c) = curves.as_mut() {
            c.push(curve.clone());
        }
        moments.push(&curve);
    }
    let std: Vec<f64> = (0..eval.len()).map(|j| moments.variance(j).sqrt()).collect();
    Ok(FbOutput {
        mean: moments.mean,
        std,
        hyper_draws: hyper_draws_from_samples(space, &chain.samples, n_free)?,
        acceptance_rate: chain.acceptance_rate,
        warnings: chain.warnings,
        curve_draws: curves,
    })
}

/// Equal-width histogram of one hyperparameter's posterior draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramTable {
    pub param: String,
    pub bin_lo: Vec<f64>,
    pub bin_hi: Vec<f64>,
    pub count: Vec<u64>,
}

/// Bin the posterior sample arrays of a full-Bayes result. Empirical-Bayes
/// results have no samples and are rejected.
pub fn extract_histograms(result: &FitResult, bins: usize) -> Result<Vec<HistogramTable>> {
    if bins == 0 {
        return Err(Error::invalid("extract_histograms", "bins must be positive"));
    }
    let HyperSummary::Samples { names, draws } = &result.hypers else {
        return Err(Error::Unsupported(
            "histograms need posterior samples; this is a point-estimate fit".into(),
        ));
    };
    let mut tables = Vec::with_capacity(names.len());
    for (name, xs) in names.iter().zip(draws) {
        if xs.is_empty() {
            return Err(Error::invalid("extract_histograms", "empty sample array"));
        }
        let lo = xs.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if lo == hi {
            tables.push(HistogramTable {
                param: name.clone(),
                bin_lo: vec![lo],
                bin_hi: vec![hi],
                count: vec![xs.len() as u64],
            });
            continue;
        }
        let width = (hi - lo) / bins as f64;
        let mut count = vec![0u64; bins];
        for x in xs {
            let idx = (((x - lo) / width) as usize).min(bins - 1);
            count[idx] += 1;
        }
        let bin_lo: Vec<f64> = (0..bins).map(|b| lo + b as f64 * width).collect();
        let bin_hi: Vec<f64> = (0..bins).map(|b| lo + (b + 1) as f64 * width).collect();
        tables.push(HistogramTable { param: name.clone(), bin_lo, bin_hi, count });
    }
    Ok(tables)
}

/// CSV rendering of histogram tables: `param,bin_lo,bin_hi,count`.
pub fn histograms_to_csv(tables: &[HistogramTable]) -> String {
    let mut out = String::from("param,bin_lo,bin_hi,count\n");
    for t in tables {
        for i in 0..t.count.len() {
            out.push_str(&format!("{},{},{},{}\n", t.param, t.bin_lo[i], t.bin_hi[i], t.count[i]));
        }
    }
    out
}
