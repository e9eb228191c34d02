//! Covariance functions and Gram-matrix construction.
//!
//! Four kernels: squared exponential, Matern 5/2, a Gibbs nonstationary
//! kernel whose length scale follows a tanh profile, and a change-point
//! blend of two Matern 5/2 kernels with logistic transfer weights at fixed
//! locations 0.9 and 1.0. Each kernel evaluates pointwise, reports analytic
//! derivatives with respect to its parameters, and declares the transform
//! used when inference works in unconstrained space.

use crate::error::{Error, Result};
use crate::transform::Transform;
use nalgebra::{Cholesky, DMatrix, Dyn};
use serde::{Deserialize, Serialize};

const SQRT5: f64 = 2.23606797749979;

/// Amplitude and correlation length of a stationary kernel.
///
/// Note the two amplitude conventions, kept exactly as commonly printed:
/// the squared exponential multiplies by theta_v, the Matern 5/2 by
/// theta_v squared.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StationaryParams {
    pub theta_v: f64,
    pub theta_l: f64,
}

impl StationaryParams {
    pub fn new(theta_v: f64, theta_l: f64) -> Result<Self> {
        let p = StationaryParams { theta_v, theta_l };
        p.validate()?;
        Ok(p)
    }

    fn validate(&self) -> Result<()> {
        if !(self.theta_v.is_finite() && self.theta_v > 0.0) {
            return Err(Error::invalid("StationaryParams", "theta_v must be finite and > 0"));
        }
        if !(self.theta_l.is_finite() && self.theta_l > 0.0) {
            return Err(Error::invalid("StationaryParams", "theta_l must be finite and > 0"));
        }
        Ok(())
    }
}

/// Nonstationary length-scale profile
/// l(psi) = (l_core+l_edge)/2 - (l_core-l_edge)/2 * tanh((psi-psi_0)/w_l),
/// which slides from l_core in the core to l_edge past the transition.
/// Inference constrains psi_0 to (0.85, 1.05) via its logit transform.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GibbsTanhParams {
    pub theta_v: f64,
    pub l_core: f64,
    pub l_edge: f64,
    pub psi_0: f64,
    pub w_l: f64,
}

impl GibbsTanhParams {
    fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("theta_v", self.theta_v),
            ("l_core", self.l_core),
            ("l_edge", self.l_edge),
            ("psi_0", self.psi_0),
            ("w_l", self.w_l),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(
                    "GibbsTanhParams",
                    format!("{name} must be finite and > 0"),
                ));
            }
        }
        // tanh is in (-1,1), so l(psi) stays strictly between l_core and
        // l_edge; positivity of both bounds l(psi) > 0 everywhere.
        Ok(())
    }

    /// Length scale and its derivatives [d/dl_core, d/dl_edge, d/dpsi_0,
    /// d/dw_l] at one coordinate.
    fn length_scale(&self, psi: f64) -> (f64, [f64; 4]) {
        let u = (psi - self.psi_0) / self.w_l;
        let t = u.tanh();
        let sech2 = 1.0 - t * t;
        let h = 0.5 * (self.l_core - self.l_edge);
        let l = 0.5 * (self.l_core + self.l_edge) - h * t;
        (
            l,
            [
                0.5 * (1.0 - t),
                0.5 * (1.0 + t),
                h * sech2 / self.w_l,
                h * sech2 * u / self.w_l,
            ],
        )
    }
}

/// Two Matern 5/2 kernels blended by logistic transfer weights: kernel A
/// owns [0, 0.9] and [1.0, 1.1], kernel B the pedestal band [0.9, 1.0].
/// Locations and transfer width are fixed, not learned.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChangePointConfig {
    pub kernel_a: StationaryParams,
    pub kernel_b: StationaryParams,
    pub locations: (f64, f64),
    pub transfer_width: f64,
}

impl Default for ChangePointConfig {
    fn default() -> Self {
        ChangePointConfig {
            kernel_a: StationaryParams { theta_v: 1.0, theta_l: 0.5 },
            kernel_b: StationaryParams { theta_v: 1.0, theta_l: 0.1 },
            locations: (0.9, 1.0),
            transfer_width: 0.01,
        }
    }
}

impl ChangePointConfig {
    fn validate(&self) -> Result<()> {
        self.kernel_a.validate()?;
        self.kernel_b.validate()?;
        if !(self.locations.0 < self.locations.1) {
            return Err(Error::invalid("ChangePointConfig", "locations must satisfy c1 < c2"));
        }
        if !(self.transfer_width.is_finite() && self.transfer_width > 0.0) {
            return Err(Error::invalid("ChangePointConfig", "transfer_width must be > 0"));
        }
        Ok(())
    }

    /// Blend weights (w_A, w_B) at one coordinate; w_A + w_B = 1 exactly.
    pub fn weights(&self, psi: f64) -> (f64, f64) {
        let s1 = sigmoid((psi - self.locations.0) / self.transfer_width);
        let s2 = sigmoid((psi - self.locations.1) / self.transfer_width);
        let w_b = s1 * (1.0 - s2);
        (1.0 - w_b, w_b)
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Squared exponential: theta_v * exp(-(psi-psi')^2 / (2 theta_l^2)).
pub fn k_sek(p: &StationaryParams, psi: f64, psi2: f64) -> f64 {
    let r = psi - psi2;
    p.theta_v * (-r * r / (2.0 * p.theta_l * p.theta_l)).exp()
}

/// Matern 5/2: theta_v^2 (1 + s + s^2/3) exp(-s), s = sqrt(5)|psi-psi'|/theta_l.
pub fn k_matern52(p: &StationaryParams, psi: f64, psi2: f64) -> f64 {
    let s = SQRT5 * (psi - psi2).abs() / p.theta_l;
    p.theta_v * p.theta_v * (1.0 + s + s * s / 3.0) * (-s).exp()
}

/// Value and [d/dtheta_v, d/dtheta_l] of the Matern 5/2.
fn matern52_with_grad(p: &StationaryParams, psi: f64, psi2: f64) -> (f64, [f64; 2]) {
    let s = SQRT5 * (psi - psi2).abs() / p.theta_l;
    let e = (-s).exp();
    let tv2 = p.theta_v * p.theta_v;
    let k = tv2 * (1.0 + s + s * s / 3.0) * e;
    let dl = tv2 * e * s * s * (1.0 + s) / (3.0 * p.theta_l);
    (k, [2.0 * k / p.theta_v, dl])
}

/// Gibbs nonstationary kernel:
/// theta_v^2 sqrt(2 l l' / (l^2+l'^2)) exp(-(psi-psi')^2 / (l^2+l'^2)).
pub fn k_gibbs_tanh(p: &GibbsTanhParams, psi: f64, psi2: f64) -> f64 {
    let (l1, _) = p.length_scale(psi);
    let (l2, _) = p.length_scale(psi2);
    let s = l1 * l1 + l2 * l2;
    let r = psi - psi2;
    p.theta_v * p.theta_v * (2.0 * l1 * l2 / s).sqrt() * (-r * r / s).exp()
}

/// Change-point blend:
/// K = w_A(psi) w_A(psi') K_A + w_B(psi) w_B(psi') K_B.
pub fn k_changepoint(c: &ChangePointConfig, psi: f64, psi2: f64) -> f64 {
    let (wa1, wb1) = c.weights(psi);
    let (wa2, wb2) = c.weights(psi2);
    wa1 * wa2 * k_matern52(&c.kernel_a, psi, psi2) + wb1 * wb2 * k_matern52(&c.kernel_b, psi, psi2)
}

/// Which role a parameter plays; used by inference to pick default priors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    Amplitude,
    LengthCore,
    LengthEdge,
    Center,
    Width,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kernel")]
pub enum Kernel {
    #[serde(rename = "sek")]
    SquaredExp(StationaryParams),
    #[serde(rename = "matern52")]
    Matern52(StationaryParams),
    #[serde(rename = "gibbs_tanh")]
    GibbsTanh(GibbsTanhParams),
    #[serde(rename = "change_point")]
    ChangePoint(ChangePointConfig),
}

impl Kernel {
    /// Default change-point configuration used by the benchmark methods.
    pub fn default_changepoint() -> Kernel {
        Kernel::ChangePoint(ChangePointConfig::default())
    }

    /// Default Gibbs-tanh configuration used by the benchmark methods.
    pub fn default_gibbs() -> Kernel {
        Kernel::GibbsTanh(GibbsTanhParams {
            theta_v: 1.0,
            l_core: 0.5,
            l_edge: 0.1,
            psi_0: 0.95,
            w_l: 0.05,
        })
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Kernel::SquaredExp(p) | Kernel::Matern52(p) => p.validate(),
            Kernel::GibbsTanh(p) => p.validate(),
            Kernel::ChangePoint(c) => c.validate(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Kernel::SquaredExp(_) => "sek",
            Kernel::Matern52(_) => "matern52",
            Kernel::GibbsTanh(_) => "gibbs_tanh",
            Kernel::ChangePoint(_) => "change_point",
        }
    }

    pub fn eval(&self, psi: f64, psi2: f64) -> f64 {
        match self {
            Kernel::SquaredExp(p) => k_sek(p, psi, psi2),
            Kernel::Matern52(p) => k_matern52(p, psi, psi2),
            Kernel::GibbsTanh(p) => k_gibbs_tanh(p, psi, psi2),
            Kernel::ChangePoint(c) => k_changepoint(c, psi, psi2),
        }
    }

    pub fn n_params(&self) -> usize {
        match self {
            Kernel::SquaredExp(_) | Kernel::Matern52(_) => 2,
            Kernel::GibbsTanh(_) => 5,
            Kernel::ChangePoint(_) => 4,
        }
    }

    pub fn param_names(&self) -> &'static [&'static str] {
        match self {
            Kernel::SquaredExp(_) | Kernel::Matern52(_) => &["theta_v", "theta_l"],
            Kernel::GibbsTanh(_) => &["theta_v", "l_core", "l_edge", "psi_0", "w_l"],
            Kernel::ChangePoint(_) => &["theta_v_a", "theta_l_a", "theta_v_b", "theta_l_b"],
        }
    }

    pub fn param_kinds(&self) -> &'static [ParamKind] {
        use ParamKind::*;
        match self {
            Kernel::SquaredExp(_) | Kernel::Matern52(_) => &[Amplitude, LengthCore],
            Kernel::GibbsTanh(_) => &[Amplitude, LengthCore, LengthEdge, Center, Width],
            Kernel::ChangePoint(_) => &[Amplitude, LengthCore, Amplitude, LengthEdge],
        }
    }

    /// Transforms to unconstrained space, aligned with `param_names`.
    pub fn param_transforms(&self) -> Vec<Transform> {
        match self {
            Kernel::SquaredExp(_) | Kernel::Matern52(_) => vec![Transform::Log; 2],
            Kernel::GibbsTanh(_) => vec![
                Transform::Log,
                Transform::Log,
                Transform::Log,
                Transform::Logit { lo: 0.85, hi: 1.05 },
                Transform::Log,
            ],
            Kernel::ChangePoint(_) => vec![Transform::Log; 4],
        }
    }

    /// Natural-space parameter vector, aligned with `param_names`.
    pub fn params(&self) -> Vec<f64> {
        match self {
            Kernel::SquaredExp(p) | Kernel::Matern52(p) => vec![p.theta_v, p.theta_l],
            Kernel::GibbsTanh(p) => vec![p.theta_v, p.l_core, p.l_edge, p.psi_0, p.w_l],
            Kernel::ChangePoint(c) => vec![
                c.kernel_a.theta_v,
                c.kernel_a.theta_l,
                c.kernel_b.theta_v,
                c.kernel_b.theta_l,
            ],
        }
    }

    /// Same kernel family with a new natural-space parameter vector.
    /// Non-learned fields (change-point locations and transfer width) are
    /// carried over unchanged.
    pub fn with_params(&self, p: &[f64]) -> Result<Kernel> {
        if p.len() != self.n_params() {
            return Err(Error::LengthMismatch {
                what: "kernel params",
                got: p.len(),
                expected: self.n_params(),
            });
        }
        let k = match self {
            Kernel::SquaredExp(_) => {
                Kernel::SquaredExp(StationaryParams { theta_v: p[0], theta_l: p[1] })
            }
            Kernel::Matern52(_) => {
                Kernel::Matern52(StationaryParams { theta_v: p[0], theta_l: p[1] })
            }
            Kernel::GibbsTanh(_) => Kernel::GibbsTanh(GibbsTanhParams {
                theta_v: p[0],
                l_core: p[1],
                l_edge: p[2],
                psi_0: p[3],
                w_l: p[4],
            }),
            Kernel::ChangePoint(c) => Kernel::ChangePoint(ChangePointConfig {
                kernel_a: StationaryParams { theta_v: p[0], theta_l: p[1] },
                kernel_b: StationaryParams { theta_v: p[2], theta_l: p[3] },
                ..*c
            }),
        };
        k.validate()?;
        Ok(k)
    }

    /// Value and natural-space gradient d K / d params at one pair.
    pub fn eval_grad(&self, psi: f64, psi2: f64, grad: &mut [f64]) -> f64 {
        debug_assert_eq!(grad.len(), self.n_params());
        match self {
            Kernel::SquaredExp(p) => {
                let r = psi - psi2;
                let e = (-r * r / (2.0 * p.theta_l * p.theta_l)).exp();
                let k = p.theta_v * e;
                grad[0] = e;
                grad[1] = k * r * r / (p.theta_l * p.theta_l * p.theta_l);
                k
            }
            Kernel::Matern52(p) => {
                let (k, g) = matern52_with_grad(p, psi, psi2);
                grad.copy_from_slice(&g);
                k
            }
            Kernel::GibbsTanh(p) => {
                let (l1, d1) = p.length_scale(psi);
                let (l2, d2) = p.length_scale(psi2);
                gibbs_pair_grad(p.theta_v, psi - psi2, l1, &d1, l2, &d2, grad)
            }
            Kernel::ChangePoint(c) => {
                let (wa1, wb1) = c.weights(psi);
                let (wa2, wb2) = c.weights(psi2);
                let (ka, ga) = matern52_with_grad(&c.kernel_a, psi, psi2);
                let (kb, gb) = matern52_with_grad(&c.kernel_b, psi, psi2);
                let fa = wa1 * wa2;
                let fb = wb1 * wb2;
                grad[0] = fa * ga[0];
                grad[1] = fa * ga[1];
                grad[2] = fb * gb[0];
                grad[3] = fb * gb[1];
                fa * ka + fb * kb
            }
        }
    }
}

/// Gibbs kernel value and gradient for one pair with precomputed length
/// scales; grad layout [theta_v, l_core, l_edge, psi_0, w_l].
fn gibbs_pair_grad(
    theta_v: f64,
    r: f64,
    l1: f64,
    dl1: &[f64; 4],
    l2: f64,
    dl2: &[f64; 4],
    grad: &mut [f64],
) -> f64 {
    let s = l1 * l1 + l2 * l2;
    let k = theta_v * theta_v * (2.0 * l1 * l2 / s).sqrt() * (-r * r / s).exp();
    // d ln K / d l_i = 1/(2 l_i) - l_i/S + 2 l_i r^2 / S^2
    let dln1 = 0.5 / l1 - l1 / s + 2.0 * l1 * r * r / (s * s);
    let dln2 = 0.5 / l2 - l2 / s + 2.0 * l2 * r * r / (s * s);
    grad[0] = 2.0 * k / theta_v;
    for p in 0..4 {
        grad[p + 1] = k * (dln1 * dl1[p] + dln2 * dl2[p]);
    }
    k
}

/// Cross Gram matrix M[i][j] = k(xs[i], xs2[j]).
pub fn gram(kernel: &Kernel, xs: &[f64], xs2: &[f64]) -> DMatrix<f64> {
    match kernel {
        Kernel::ChangePoint(c) => {
            let w1: Vec<(f64, f64)> = xs.iter().map(|&p| c.weights(p)).collect();
            let w2: Vec<(f64, f64)> = xs2.iter().map(|&p| c.weights(p)).collect();
            DMatrix::from_fn(xs.len(), xs2.len(), |i, j| {
                let (wa1, wb1) = w1[i];
                let (wa2, wb2) = w2[j];
                wa1 * wa2 * k_matern52(&c.kernel_a, xs[i], xs2[j])
                    + wb1 * wb2 * k_matern52(&c.kernel_b, xs[i], xs2[j])
            })
        }
        Kernel::GibbsTanh(p) => {
            let l1: Vec<f64> = xs.iter().map(|&x| p.length_scale(x).0).collect();
            let l2: Vec<f64> = xs2.iter().map(|&x| p.length_scale(x).0).collect();
            let tv2 = p.theta_v * p.theta_v;
            DMatrix::from_fn(xs.len(), xs2.len(), |i, j| {
                let s = l1[i] * l1[i] + l2[j] * l2[j];
                let r = xs[i] - xs2[j];
                tv2 * (2.0 * l1[i] * l2[j] / s).sqrt() * (-r * r / s).exp()
            })
        }
        _ => DMatrix::from_fn(xs.len(), xs2.len(), |i, j| kernel.eval(xs[i], xs2[j])),
    }
}

/// Symmetric Gram matrix on one coordinate set; the lower triangle is
/// mirrored from the upper so the result is exactly symmetric.
pub fn gram_sym(kernel: &Kernel, xs: &[f64]) -> DMatrix<f64> {
    let n = xs.len();
    let mut m = DMatrix::zeros(n, n);
    match kernel {
        Kernel::ChangePoint(c) => {
            let w: Vec<(f64, f64)> = xs.iter().map(|&p| c.weights(p)).collect();
            for i in 0..n {
                for j in i..n {
                    let v = w[i].0 * w[j].0 * k_matern52(&c.kernel_a, xs[i], xs[j])
                        + w[i].1 * w[j].1 * k_matern52(&c.kernel_b, xs[i], xs[j]);
                    m[(i, j)] = v;
                    m[(j, i)] = v;
                }
            }
        }
        Kernel::GibbsTanh(p) => {
            let l: Vec<f64> = xs.iter().map(|&x| p.length_scale(x).0).collect();
            let tv2 = p.theta_v * p.theta_v;
            for i in 0..n {
                for j in i..n {
                    let s = l[i] * l[i] + l[j] * l[j];
                    let r = xs[i] - xs[j];
                    let v = tv2 * (2.0 * l[i] * l[j] / s).sqrt() * (-r * r / s).exp();
                    m[(i, j)] = v;
                    m[(j, i)] = v;
                }
            }
        }
        _ => {
            for i in 0..n {
                for j in i..n {
                    let v = kernel.eval(xs[i], xs[j]);
                    m[(i, j)] = v;
                    m[(j, i)] = v;
                }
            }
        }
    }
    m
}

/// Symmetric Gram matrix plus one derivative matrix per kernel parameter.
pub fn gram_sym_with_grads(kernel: &Kernel, xs: &[f64]) -> (DMatrix<f64>, Vec<DMatrix<f64>>) {
    let n = xs.len();
    let m = kernel.n_params();
    let mut value = DMatrix::zeros(n, n);
    let mut grads = vec![DMatrix::zeros(n, n); m];
    let mut g = vec![0.0; m];
    for i in 0..n {
        for j in i..n {
            let v = kernel.eval_grad(xs[i], xs[j], &mut g);
            value[(i, j)] = v;
            value[(j, i)] = v;
            for (p, gp) in g.iter().enumerate() {
                grads[p][(i, j)] = *gp;
                grads[p][(j, i)] = *gp;
            }
        }
    }
    (value, grads)
}

/// Jitter escalation ladder as fractions of the mean diagonal.
const JITTER_LADDER: [f64; 6] = [0.0, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4];

/// Cholesky with escalating diagonal jitter: try bare, then 1e-8 times the
/// mean diagonal, growing by 10 per failure, giving up past 1e-4.
/// Returns the factorization and the jitter actually added.
pub fn jittered_cholesky(m: DMatrix<f64>) -> Result<(Cholesky<f64, Dyn>, f64)> {
    let n = m.nrows();
    if n == 0 || m.ncols() != n {
        return Err(Error::Numerical(format!("cholesky needs square nonempty, got {n}x{}", m.ncols())));
    }
    let mean_diag = m.diagonal().iter().sum::<f64>() / n as f64;
    if !mean_diag.is_finite() {
        return Err(Error::Numerical("non-finite diagonal in covariance".into()));
    }
    let mut diag_stats = (f64::INFINITY, f64::NEG_INFINITY);
    for d in m.diagonal().iter() {
        diag_stats.0 = diag_stats.0.min(*d);
        diag_stats.1 = diag_stats.1.max(*d);
    }
    for frac in JITTER_LADDER {
        let jitter = frac * mean_diag;
        let mut trial = m.clone();
        if jitter > 0.0 {
            for i in 0..n {
                trial[(i, i)] += jitter;
            }
        }
        if let Some(ch) = Cholesky::new(trial) {
            return Ok((ch, jitter));
        }
    }
    Err(Error::Numerical(format!(
        "cholesky failed after jitter escalation to {:.3e} (n={n}, mean diag {:.3e}, diag range [{:.3e}, {:.3e}])",
        JITTER_LADDER.last().unwrap() * mean_diag,
        mean_diag,
        diag_stats.0,
        diag_stats.1,
    )))
}
