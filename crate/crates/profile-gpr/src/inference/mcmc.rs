//! Adaptive random-walk Metropolis over a generic log-density.
//!
//! One chain, diagonal proposal. During burn-in the global step size is
//! steered toward the target acceptance rate and the per-coordinate shape
//! is estimated from the running chain variance; both freeze when sampling
//! starts so the retained draws come from a fixed Markov kernel. Everything
//! is driven by one counter-based generator, so a seed pins the entire
//! chain bit-for-bit.

use crate::error::{Error, Result};
use crate::rng::{rng_from_seed, Rng64};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// Chain-length and adaptation settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    /// Steps discarded while the proposal adapts.
    pub n_burn: usize,
    /// Retained draws (after thinning).
    pub n_samples: usize,
    /// Keep every thin-th post-burn step.
    pub thin: usize,
    pub seed: u64,
    /// Acceptance rate the burn-in steers toward.
    pub target_accept: f64,
    /// Steps between step-size updates during burn-in.
    pub adapt_interval: usize,
}

impl Default for ChainConfig {
    fn default() -> Self {
        ChainConfig {
            n_burn: 2000,
            n_samples: 5000,
            thin: 5,
            seed: 0,
            target_accept: 0.25,
            adapt_interval: 100,
        }
    }
}

impl ChainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_burn == 0 || self.n_samples == 0 || self.thin == 0 || self.adapt_interval == 0 {
            return Err(Error::invalid("ChainConfig", "all counts must be positive"));
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return Err(Error::invalid("ChainConfig", "target_accept must lie in (0, 1)"));
        }
        Ok(())
    }
}

/// Retained draws plus diagnostics.
#[derive(Debug, Clone)]
pub struct ChainOutput {
    /// `n_samples` rows, one parameter vector each.
    pub samples: Vec<Vec<f64>>,
    /// Acceptance rate over the post-burn phase.
    pub acceptance_rate: f64,
    pub warnings: Vec<String>,
}

/// Acceptance rates outside this band after burn-in trigger a warning.
pub const ACCEPT_HEALTHY: (f64, f64) = (0.05, 0.8);

/// Run one adaptive random-walk Metropolis chain on `log_target`.
///
/// The target may fail (e.g. covariance factorization breakdown at a wild
/// proposal); failures count as log-density minus infinity and the proposal
/// is rejected. A failure at the initial point is an error.
pub fn run_chain<F>(log_target: F, x0: &[f64], cfg: &ChainConfig) -> Result<ChainOutput>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    run_chain_shaped(log_target, x0, None, cfg)
}

/// [`run_chain`] with an explicit per-coordinate proposal shape. Callers
/// that know the target's geometry (e.g. a whitened latent field, whose
/// Gaussian-case posterior spread is computable in closed form) can skip
/// the slow empirical shape estimation entirely.
pub fn run_chain_shaped<F>(
    log_target: F,
    x0: &[f64],
    shape0: Option<&[f64]>,
    cfg: &ChainConfig,
) -> Result<ChainOutput>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let mut log_target = log_target;
    cfg.validate()?;
    let d = x0.len();
    if d == 0 {
        return Err(Error::invalid("run_chain", "empty state vector"));
    }
    if let Some(s) = shape0 {
        if s.len() != d {
            return Err(Error::LengthMismatch { what: "shape0", got: s.len(), expected: d });
        }
        if s.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::invalid("shape0", "entries must be finite and positive"));
        }
    }
    let mut rng: Rng64 = rng_from_seed(cfg.seed);

    let mut x = x0.to_vec();
    let mut lp = log_target(&x)?;
    if !lp.is_finite() {
        return Err(Error::Numerical(format!("log target {lp} at the initial point")));
    }

    // Global scale starts at the classic d^-1/2 rule; per-coordinate shape
    // starts isotropic (or as given) and is re-estimated from the burn-in
    // variance.
    let mut scale = 2.38 / (d as f64).sqrt();
    let mut shape = shape0.map_or_else(|| vec![1.0; d], <[f64]>::to_vec);

    // Running moments for the shape estimate (Welford).
    let mut count = 0usize;
    let mut mean = vec![0.0; d];
    let mut m2 = vec![0.0; d];

    let mut window_accepts = 0usize;
    let mut window_steps = 0usize;

    let propose = |x: &[f64], scale: f64, shape: &[f64], rng: &mut Rng64| -> Vec<f64> {
        x.iter()
            .zip(shape)
            .map(|(xi, sh)| xi + scale * sh * rng.sample::<f64, _>(StandardNormal))
            .collect()
    };

    for step in 0..cfg.n_burn {
        let cand = propose(&x, scale, &shape, &mut rng);
        let lp_cand = log_target(&cand).unwrap_or(f64::NEG_INFINITY);
        let accept = lp_cand.is_finite()
            && (lp_cand >= lp || rng.random::<f64>().ln() < lp_cand - lp);
        if accept {
            x = cand;
            lp = lp_cand;
            window_accepts += 1;
        }
        window_steps += 1;

        count += 1;
        for i in 0..d {
            let delta = x[i] - mean[i];
            mean[i] += delta / count as f64;
            m2[i] += delta * (x[i] - mean[i]);
        }

        if (step + 1) % cfg.adapt_interval == 0 {
            let rate = window_accepts as f64 / window_steps as f64;
            scale *= (2.0 * (rate - cfg.target_accept)).exp();
            scale = scale.clamp(1e-8, 1e3);
            // A frozen window says nothing about the target's spread, and
            // feeding it to the shape estimate collapses the proposal (tiny
            // steps then accept forever); only re-shape when the chain moved.
            if count > 2 * d && rate >= 0.05 {
                for i in 0..d {
                    let var = m2[i] / (count - 1) as f64;
                    shape[i] = (var + 1e-12).sqrt().max(1e-6);
                }
            }
            window_accepts = 0;
            window_steps = 0;
        }
    }

    let total = cfg
        .n_samples
        .checked_mul(cfg.thin)
        .ok_or_else(|| Error::invalid("ChainConfig", "n_samples * thin overflows"))?;
    let mut samples = Vec::with_capacity(cfg.n_samples);
    let mut accepts = 0usize;
    for step in 0..total {
        let cand = propose(&x, scale, &shape, &mut rng);
        let lp_cand = log_target(&cand).unwrap_or(f64::NEG_INFINITY);
        let accept = lp_cand.is_finite()
            && (lp_cand >= lp || rng.random::<f64>().ln() < lp_cand - lp);
        if accept {
            x = cand;
            lp = lp_cand;
            accepts += 1;
        }
        if (step + 1) % cfg.thin == 0 {
            samples.push(x.clone());
        }
    }
    let acceptance_rate = accepts as f64 / total as f64;

    let mut warnings = Vec::new();
    if acceptance_rate < ACCEPT_HEALTHY.0 || acceptance_rate > ACCEPT_HEALTHY.1 {
        warnings.push(format!(
            "acceptance rate {acceptance_rate:.3} outside healthy band [{}, {}]",
            ACCEPT_HEALTHY.0, ACCEPT_HEALTHY.1
        ));
    }
    Ok(ChainOutput { samples, acceptance_rate, warnings })
}

/// Monte-Carlo standard error of the mean of a (possibly autocorrelated)
/// series, by the batch-means estimator with ~sqrt(n) batches.
pub fn batch_means_mcse(series: &[f64]) -> f64 {
    let n = series.len();
    if n < 4 {
        return f64::INFINITY;
    }
    let n_batches = (n as f64).sqrt().floor() as usize;
    let batch = n / n_batches;
    let used = n_batches * batch;
    let grand = series[..used].iter().sum::<f64>() / used as f64;
    let mut var_bm = 0.0;
    for b in 0..n_batches {
        let m = series[b * batch..(b + 1) * batch].iter().sum::<f64>() / batch as f64;
        var_bm += (m - grand) * (m - grand);
    }
    var_bm /= (n_batches - 1) as f64;
    (var_bm / n_batches as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mean_of(samples: &[Vec<f64>], i: usize) -> f64 {
        samples.iter().map(|s| s[i]).sum::<f64>() / samples.len() as f64
    }

    /// Correlated 2-D Gaussian: mean (1, -2), cov [[1, 0.6], [0.6, 2]].
    fn gauss2_target(x: &[f64]) -> Result<f64> {
        let (dx, dy) = (x[0] - 1.0, x[1] + 2.0);
        // inverse of [[1,0.6],[0.6,2]] = [[2,-0.6],[-0.6,1]]/1.64
        let q = (2.0 * dx * dx - 1.2 * dx * dy + dy * dy) / 1.64;
        Ok(-0.5 * q)
    }

    #[test]
    fn two_dim_gaussian_moments() {
        let cfg = ChainConfig { seed: 314, ..ChainConfig::default() };
        let out = run_chain(gauss2_target, &[0.0, 0.0], &cfg).unwrap();
        assert_eq!(out.samples.len(), cfg.n_samples);
        assert!(out.warnings.is_empty(), "{:?}", out.warnings);

        for (i, want) in [(0usize, 1.0f64), (1, -2.0)] {
            let got = mean_of(&out.samples, i);
            let series: Vec<f64> = out.samples.iter().map(|s| s[i]).collect();
            let mcse = batch_means_mcse(&series);
            assert!(
                (got - want).abs() < 3.0 * mcse,
                "mean[{i}] = {got}, want {want}, mcse {mcse:.4}"
            );
        }
        // Covariance entries against their own batch-means errors.
        let means = [mean_of(&out.samples, 0), mean_of(&out.samples, 1)];
        for (a, b, want) in [(0usize, 0usize, 1.0f64), (1, 1, 2.0), (0, 1, 0.6)] {
            let prods: Vec<f64> = out
                .samples
                .iter()
                .map(|s| (s[a] - means[a]) * (s[b] - means[b]))
                .collect();
            let got = prods.iter().sum::<f64>() / prods.len() as f64;
            let mcse = batch_means_mcse(&prods);
            assert!(
                (got - want).abs() < 3.0 * mcse,
                "cov[{a}{b}] = {got}, want {want}, mcse {mcse:.4}"
            );
        }
    }

    #[test]
    fn seeded_chains_are_identical() {
        let cfg = ChainConfig { n_burn: 200, n_samples: 300, thin: 2, seed: 7, ..Default::default() };
        let a = run_chain(gauss2_target, &[0.0, 0.0], &cfg).unwrap();
        let b = run_chain(gauss2_target, &[0.0, 0.0], &cfg).unwrap();
        assert_eq!(a.samples, b.samples);
        assert_eq!(a.acceptance_rate, b.acceptance_rate);
        let c = run_chain(gauss2_target, &[0.0, 0.0], &ChainConfig { seed: 8, ..cfg }).unwrap();
        assert_ne!(a.samples, c.samples);
    }

    #[test]
    fn acceptance_adapts_into_band() {
        let cfg = ChainConfig { seed: 2, ..Default::default() };
        let out = run_chain(gauss2_target, &[40.0, 40.0], &cfg).unwrap();
        assert!(
            out.acceptance_rate > 0.1 && out.acceptance_rate < 0.5,
            "rate {}",
            out.acceptance_rate
        );
    }

    #[test]
    fn failing_proposals_are_rejected() {
        // Target errors outside the unit box; chain must stay inside and
        // keep sampling.
        let target = |x: &[f64]| -> Result<f64> {
            if x[0].abs() > 1.0 {
                return Err(Error::Numerical("outside".into()));
            }
            Ok(-0.5 * x[0] * x[0] / 0.04)
        };
        let cfg = ChainConfig { n_burn: 500, n_samples: 500, thin: 1, seed: 3, ..Default::default() };
        let out = run_chain(target, &[0.0], &cfg).unwrap();
        assert!(out.samples.iter().all(|s| s[0].abs() <= 1.0));
        assert!(out.acceptance_rate > 0.05);
    }

    #[test]
    fn initial_failure_is_an_error() {
        let target = |_: &[f64]| -> Result<f64> { Err(Error::Numerical("bad start".into())) };
        assert!(run_chain(target, &[0.0], &ChainConfig::default()).is_err());
        let inf = |_: &[f64]| -> Result<f64> { Ok(f64::NEG_INFINITY) };
        assert!(run_chain(inf, &[0.0], &ChainConfig::default()).is_err());
    }

    #[test]
    fn config_validation() {
        let ok = ChainConfig::default();
        assert!(ok.validate().is_ok());
        assert!(ChainConfig { n_burn: 0, ..ok }.validate().is_err());
        assert!(ChainConfig { thin: 0, ..ok }.validate().is_err());
        assert!(ChainConfig { target_accept: 1.0, ..ok }.validate().is_err());
        assert_eq!(ok.n_burn, 2000);
        assert_eq!(ok.n_samples, 5000);
        assert_eq!(ok.thin, 5);
        assert_eq!(ok.target_accept, 0.25);
        assert_eq!(ok.adapt_interval, 100);
    }

    #[test]
    fn batch_means_basics() {
        // Independent draws: the estimator should land near sd/sqrt(n).
        let mut rng = rng_from_seed(99);
        let xs: Vec<f64> = (0..10_000).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let mcse = batch_means_mcse(&xs);
        let naive = 1.0 / (xs.len() as f64).sqrt();
        assert!(mcse > 0.5 * naive && mcse < 2.0 * naive, "mcse {mcse} vs naive {naive}");
        assert!(batch_means_mcse(&[1.0, 2.0]).is_infinite());
        assert_eq!(batch_means_mcse(&vec![5.0; 100]), 0.0);
    }
}
