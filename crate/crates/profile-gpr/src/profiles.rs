//! Analytic ground-truth profiles and synthetic noisy datasets.
//!
//! Three regimes are supported: an L-mode power-law core, an H-mode that adds
//! a tanh pedestal at the edge, and an H-mode with an additional internal
//! transport barrier near the mid-radius. Datasets carry the hidden truth and
//! an outlier mask so a benchmark can score fits against exact answers.

use crate::error::{Error, Result};
use crate::rng::{rng_from_seed, stable_hash64};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Lmode,
    Hmode,
    HmodeItb,
}

impl Regime {
    pub fn slug(&self) -> &'static str {
        match self {
            Regime::Lmode => "lmode",
            Regime::Hmode => "hmode",
            Regime::HmodeItb => "hmode_itb",
        }
    }

    pub fn from_slug(s: &str) -> Result<Regime> {
        match s {
            "lmode" => Ok(Regime::Lmode),
            "hmode" => Ok(Regime::Hmode),
            "hmode_itb" => Ok(Regime::HmodeItb),
            other => Err(Error::invalid(
                "regime",
                format!("unknown regime {other:?}; expected lmode, hmode, or hmode_itb"),
            )),
        }
    }
}

/// Shape parameters of the analytic ground-truth profile.
///
/// Pedestal fields are ignored for `Lmode`; ITB fields are ignored unless
/// the regime is `HmodeItb`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileSpec {
    pub regime: Regime,
    /// Core value; the profile at psi=0 is f_o + f_edge (plus tanh tails).
    pub f_o: f64,
    /// Edge offset; the profile outside psi=1 decays to this value.
    pub f_edge: f64,
    /// Center-gradient exponent of the power-law base term.
    pub alpha1: f64,
    /// Edge-gradient exponent of the power-law base term.
    pub alpha2: f64,
    /// Pedestal height.
    pub f_ped: f64,
    /// Pedestal width in psi units.
    pub w_ped: f64,
    /// Pedestal center, inside (0.9, 1.0).
    pub psi_ped: f64,
    /// ITB height.
    pub n_itb: f64,
    /// ITB width in psi units.
    pub w_itb: f64,
    /// ITB center, inside (0.3, 0.7).
    pub psi_itb: f64,
}

impl Default for ProfileSpec {
    fn default() -> Self {
        ProfileSpec {
            regime: Regime::Lmode,
            f_o: 1.0,
            f_edge: 0.05,
            alpha1: 2.0,
            alpha2: 1.5,
            f_ped: 0.3,
            w_ped: 0.015,
            psi_ped: 0.95,
            n_itb: 1.0,
            w_itb: 0.015,
            psi_itb: 0.5,
        }
    }
}

impl ProfileSpec {
    pub fn with_regime(regime: Regime) -> Self {
        ProfileSpec {
            regime,
            ..ProfileSpec::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("f_o", self.f_o),
            ("f_edge", self.f_edge),
            ("alpha1", self.alpha1),
            ("alpha2", self.alpha2),
            ("f_ped", self.f_ped),
            ("w_ped", self.w_ped),
            ("psi_ped", self.psi_ped),
            ("n_itb", self.n_itb),
            ("w_itb", self.w_itb),
            ("psi_itb", self.psi_itb),
        ];
        for (name, v) in fields {
            if !v.is_finite() {
                return Err(Error::invalid("ProfileSpec", format!("{name} is not finite")));
            }
        }
        if self.f_o <= 0.0 {
            return Err(Error::invalid("ProfileSpec", "f_o must be > 0"));
        }
        if self.f_edge < 0.0 {
            return Err(Error::invalid("ProfileSpec", "f_edge must be >= 0"));
        }
        if self.alpha1 <= 0.0 || self.alpha2 <= 0.0 {
            return Err(Error::invalid("ProfileSpec", "alpha1 and alpha2 must be > 0"));
        }
        let pedestal_used = matches!(self.regime, Regime::Hmode | Regime::HmodeItb);
        if pedestal_used {
            if self.f_ped < 0.0 {
                return Err(Error::invalid("ProfileSpec", "f_ped must be >= 0"));
            }
            if self.w_ped <= 0.0 {
                return Err(Error::invalid("ProfileSpec", "w_ped must be > 0"));
            }
            if !(self.psi_ped > 0.9 && self.psi_ped < 1.0) {
                return Err(Error::invalid("ProfileSpec", "psi_ped must lie in (0.9, 1.0)"));
            }
        }
        if self.regime == Regime::HmodeItb {
            if self.n_itb < 0.0 {
                return Err(Error::invalid("ProfileSpec", "n_itb must be >= 0"));
            }
            if self.w_itb <= 0.0 {
                return Err(Error::invalid("ProfileSpec", "w_itb must be > 0"));
            }
            if !(self.psi_itb > 0.3 && self.psi_itb < 0.7) {
                return Err(Error::invalid("ProfileSpec", "psi_itb must lie in (0.3, 0.7)"));
            }
        }
        Ok(())
    }

    pub fn eval(&self, psi: f64) -> Result<f64> {
        eval_profile(self, psi)
    }
}

/// Ground-truth profile value at one coordinate.
///
/// L-mode: f_o*(1 - psi^alpha1)^alpha2 + f_edge. H-mode adds the pedestal
/// term 0.5*f_ped*(1 - tanh((psi - psi_ped)/w_ped)); the ITB regime adds the
/// analogous term at psi_itb. For psi > 1 the base term is clamped to 0 (it
/// would otherwise be a negative number raised to a non-integer power), so
/// the scrape-off region sits at f_edge plus whatever tanh tails remain.
pub fn eval_profile(spec: &ProfileSpec, psi: f64) -> Result<f64> {
    spec.validate()?;
    if !(psi.is_finite() && psi >= 0.0) {
        return Err(Error::invalid("psi", format!("must be finite and >= 0, got {psi}")));
    }
    let core = 1.0 - psi.powf(spec.alpha1);
    let base = if core > 0.0 { spec.f_o * core.powf(spec.alpha2) } else { 0.0 };
    let mut value = base + spec.f_edge;
    if matches!(spec.regime, Regime::Hmode | Regime::HmodeItb) {
        value += 0.5 * spec.f_ped * (1.0 - ((psi - spec.psi_ped) / spec.w_ped).tanh());
    }
    if spec.regime == Regime::HmodeItb {
        value += 0.5 * spec.n_itb * (1.0 - ((psi - spec.psi_itb) / spec.w_itb).tanh());
    }
    Ok(value)
}

/// Noise synthesis parameters; everything downstream of `seed` is
/// deterministic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// Gaussian noise width as a fraction of the local truth value.
    pub sigma_frac: f64,
    /// Systematic shift as a fraction of the local truth value.
    pub shift_frac: f64,
    /// Number of points overwritten by outlier draws.
    pub n_outliers: usize,
    /// Outlier Gaussian width as a multiple of the local truth value.
    pub outlier_scale: f64,
    pub seed: u64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec {
            sigma_frac: 0.1,
            shift_frac: 0.0,
            n_outliers: 0,
            outlier_scale: 2.0,
            seed: 0,
        }
    }
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("sigma_frac", self.sigma_frac),
            ("shift_frac", self.shift_frac),
            ("outlier_scale", self.outlier_scale),
        ] {
            if !v.is_finite() {
                return Err(Error::invalid("NoiseSpec", format!("{name} is not finite")));
            }
        }
        if !(self.sigma_frac > 0.0 && self.sigma_frac < 1.0) {
            return Err(Error::invalid("NoiseSpec", "sigma_frac must lie in (0, 1)"));
        }
        if self.shift_frac < 0.0 {
            return Err(Error::invalid("NoiseSpec", "shift_frac must be >= 0"));
        }
        if self.outlier_scale < 1.0 {
            return Err(Error::invalid("NoiseSpec", "outlier_scale must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum Provenance {
    Generated { profile: ProfileSpec, noise: NoiseSpec },
    External,
}

/// One synthetic or external dataset. Arrays are index-aligned; `psi` is
/// strictly increasing. `truth` and `outlier_mask` are present for generated
/// data and optional for external CSVs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub psi: Vec<f64>,
    pub y: Vec<f64>,
    pub sigma_reported: Vec<f64>,
    pub truth: Option<Vec<f64>>,
    pub outlier_mask: Option<Vec<bool>>,
    pub provenance: Provenance,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.psi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.psi.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.psi.len();
        if n == 0 {
            return Err(Error::invalid("Dataset", "empty"));
        }
        for (what, len) in [("y", self.y.len()), ("sigma_reported", self.sigma_reported.len())] {
            if len != n {
                return Err(Error::LengthMismatch { what: "Dataset", got: len, expected: n }
                    .rename(what));
            }
        }
        if let Some(t) = &self.truth {
            if t.len() != n {
                return Err(Error::LengthMismatch { what: "truth", got: t.len(), expected: n });
            }
        }
        if let Some(m) = &self.outlier_mask {
            if m.len() != n {
                return Err(Error::LengthMismatch { what: "outlier_mask", got: m.len(), expected: n });
            }
        }
        for w in self.psi.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::invalid("Dataset", "psi must be strictly increasing"));
            }
        }
        for (i, (&y, &s)) in self.y.iter().zip(&self.sigma_reported).enumerate() {
            if !y.is_finite() || !s.is_finite() {
                return Err(Error::invalid("Dataset", format!("non-finite value at row {i}")));
            }
            if y <= 0.0 {
                return Err(Error::invalid("Dataset", format!("y must be > 0, got {y} at row {i}")));
            }
            if s <= 0.0 {
                return Err(Error::invalid(
                    "Dataset",
                    format!("sigma_reported must be > 0, got {s} at row {i}"),
                ));
            }
        }
        Ok(())
    }

    /// CSV with header `psi,y,sigma,truth,is_outlier`; truth columns are
    /// omitted when absent. Numbers use round-trip decimal formatting.
    pub fn to_csv_string(&self) -> String {
        let with_truth = self.truth.is_some();
        let mut out = String::new();
        if with_truth {
            out.push_str("psi,y,sigma,truth,is_outlier\n");
        } else {
            out.push_str("psi,y,sigma\n");
        }
        for i in 0..self.len() {
            let _ = write!(out, "{},{},{}", self.psi[i], self.y[i], self.sigma_reported[i]);
            if let Some(t) = &self.truth {
                let flag = self.outlier_mask.as_ref().map(|m| m[i]).unwrap_or(false);
                let _ = write!(out, ",{},{}", t[i], u8::from(flag));
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv_string())
            .map_err(|e| Error::io(path.display().to_string(), e))
    }

    /// Parse `psi,y,sigma[,truth[,is_outlier]]`. Rows are sorted by psi;
    /// provenance is External.
    pub fn from_csv_str(text: &str, origin: &str) -> Result<Dataset> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines
            .next()
            .ok_or_else(|| Error::parse(origin, "empty file"))?;
        let cols: Vec<&str> = header.trim().split(',').map(str::trim).collect();
        let expected = ["psi", "y", "sigma", "truth", "is_outlier"];
        if cols.len() < 3 || cols.len() > 5 || cols != expected[..cols.len()] {
            return Err(Error::parse(
                origin,
                format!("header must be a prefix of `psi,y,sigma,truth,is_outlier`, got {header:?}"),
            ));
        }
        let ncols = cols.len();
        let mut rows: Vec<(f64, f64, f64, Option<f64>, Option<bool>)> = Vec::new();
        for (lineno, line) in lines {
            let fields: Vec<&str> = line.trim().split(',').map(str::trim).collect();
            if fields.len() != ncols {
                return Err(Error::parse(
                    origin,
                    format!("line {}: expected {ncols} fields, got {}", lineno + 1, fields.len()),
                ));
            }
            let num = |s: &str, what: &str| -> Result<f64> {
                let v: f64 = s.parse().map_err(|_| {
                    Error::parse(origin, format!("line {}: bad {what} value {s:?}", lineno + 1))
                })?;
                if !v.is_finite() {
                    return Err(Error::parse(
                        origin,
                        format!("line {}: non-finite {what}", lineno + 1),
                    ));
                }
                Ok(v)
            };
            let psi = num(fields[0], "psi")?;
            let y = num(fields[1], "y")?;
            let sigma = num(fields[2], "sigma")?;
            let truth = if ncols >= 4 { Some(num(fields[3], "truth")?) } else { None };
            let flag = if ncols == 5 {
                Some(match fields[4] {
                    "0" | "false" => false,
                    "1" | "true" => true,
                    other => {
                        return Err(Error::parse(
                            origin,
                            format!("line {}: bad is_outlier value {other:?}", lineno + 1),
                        ))
                    }
                })
            } else {
                None
            };
            rows.push((psi, y, sigma, truth, flag));
        }
        rows.sort_by(|a, b| a.0.total_cmp(&b.0));
        let has_truth = rows.iter().all(|r| r.3.is_some()) && !rows.is_empty();
        let has_mask = rows.iter().all(|r| r.4.is_some()) && !rows.is_empty();
        let ds = Dataset {
            psi: rows.iter().map(|r| r.0).collect(),
            y: rows.iter().map(|r| r.1).collect(),
            sigma_reported: rows.iter().map(|r| r.2).collect(),
            truth: has_truth.then(|| rows.iter().map(|r| r.3.unwrap()).collect()),
            outlier_mask: has_mask.then(|| rows.iter().map(|r| r.4.unwrap()).collect()),
            provenance: Provenance::External,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn read_csv(path: &Path) -> Result<Dataset> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        Dataset::from_csv_str(&text, &path.display().to_string())
    }
}

impl Error {
    fn rename(self, what: &'static str) -> Error {
        match self {
            Error::LengthMismatch { got, expected, .. } => {
                Error::LengthMismatch { what, got, expected }
            }
            e => e,
        }
    }
}

pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n)
        .map(|i| lo + (hi - lo) * (i as f64) / ((n - 1) as f64))
        .collect()
}

/// Observation grid: `n_core` points uniform on [0, 1.1] plus `n_ped` points
/// uniform on [0.9, 1.0], concatenated and sorted. Defaults (48, 40) give the
/// canonical 88-point grid with half its points in the pedestal band.
pub fn make_grid(n_core: usize, n_ped: usize) -> Result<Vec<f64>> {
    if n_core < 2 {
        return Err(Error::invalid("make_grid", "n_core must be >= 2"));
    }
    let mut grid = linspace(0.0, 1.1, n_core);
    grid.extend(linspace(0.9, 1.0, n_ped));
    grid.sort_by(f64::total_cmp);
    Ok(grid)
}

pub fn default_grid() -> Vec<f64> {
    make_grid(48, 40).expect("static arguments are valid")
}

/// Synthesize a noisy dataset on `grid`.
///
/// Draw order (fixed; part of the reproducibility contract): one standard
/// normal per grid point for the base noise, then the outlier index
/// selection by partial Fisher-Yates, then one normal per outlier in
/// selection order. Base observations are
/// |truth*(1+shift_frac) + N(0, (sigma_frac*truth)^2)| and outliers are
/// overwritten with |N(truth, (outlier_scale*truth)^2)|; the absolute value
/// keeps every observation positive (it only touches the far tail of the
/// noise distribution at the amplitudes used here).
pub fn generate_dataset(spec: &ProfileSpec, noise: &NoiseSpec, grid: &[f64]) -> Result<Dataset> {
    spec.validate()?;
    noise.validate()?;
    if grid.is_empty() {
        return Err(Error::invalid("grid", "must be nonempty"));
    }
    if noise.n_outliers >= grid.len() {
        return Err(Error::invalid(
            "NoiseSpec",
            format!("n_outliers = {} but grid has {} points", noise.n_outliers, grid.len()),
        ));
    }
    let truth: Vec<f64> = grid
        .iter()
        .map(|&p| eval_profile(spec, p))
        .collect::<Result<_>>()?;
    if let Some(t) = truth.iter().find(|t| **t <= 0.0) {
        return Err(Error::invalid(
            "ProfileSpec",
            format!("truth must be > 0 everywhere so noise scales are positive, got {t}"),
        ));
    }
    let n = grid.len();
    let mut rng = rng_from_seed(noise.seed);
    let mut y = Vec::with_capacity(n);
    let mut sigma = Vec::with_capacity(n);
    for &t in &truth {
        let eps: f64 = rng.sample(StandardNormal);
        y.push((t * (1.0 + noise.shift_frac) + noise.sigma_frac * t * eps).abs());
        sigma.push(noise.sigma_frac * t);
    }
    let mut mask = vec![false; n];
    if noise.n_outliers > 0 {
        let mut indices: Vec<usize> = (0..n).collect();
        for i in 0..noise.n_outliers {
            let j = i + rng.random_range(0..n - i);
            indices.swap(i, j);
        }
        for &idx in &indices[..noise.n_outliers] {
            let eps: f64 = rng.sample(StandardNormal);
            y[idx] = (truth[idx] + noise.outlier_scale * truth[idx] * eps).abs();
            mask[idx] = true;
        }
    }
    let ds = Dataset {
        psi: grid.to_vec(),
        y,
        sigma_reported: sigma,
        truth: Some(truth),
        outlier_mask: Some(mask),
        provenance: Provenance::Generated { profile: *spec, noise: *noise },
    };
    // Generated grids are sorted; duplicate coordinates would trip this.
    ds.validate()?;
    Ok(ds)
}

/// One benchmark case: a profile, its noise settings, and a stable index in
/// the full enumeration order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCase {
    pub index: usize,
    pub profile: ProfileSpec,
    pub noise: NoiseSpec,
}

pub const SWEEP_SIGMA_FRAC: [f64; 5] = [0.1, 0.15, 0.2, 0.25, 0.33];
pub const SWEEP_SHIFT_FRAC: [f64; 4] = [0.0, 0.02, 0.05, 0.10];
pub const SWEEP_N_OUTLIERS: [usize; 4] = [0, 3, 5, 10];
pub const SWEEP_OUTLIER_SCALE: [f64; 3] = [2.0, 3.0, 4.0];
pub const SWEEP_N_EDGE: [f64; 4] = [0.01, 0.05, 0.1, 0.2];
pub const SWEEP_W_PED: [f64; 3] = [0.01, 0.015, 0.02];
pub const SWEEP_W_ITB: [f64; 3] = [0.01, 0.015, 0.02];
pub const SWEEP_N_ITB: [f64; 3] = [0.5, 1.0, 1.5];

/// Deterministic per-case seed: FNV-1a over the canonical decimal rendering
/// of every profile and noise parameter. Independent of method list and
/// enumeration order, so datasets never reshuffle when either changes.
pub fn case_seed(profile: &ProfileSpec, noise_sans_seed: &NoiseSpec) -> u64 {
    let parts: Vec<String> = vec![
        "case".to_string(),
        profile.regime.slug().to_string(),
        profile.f_o.to_string(),
        profile.f_edge.to_string(),
        profile.alpha1.to_string(),
        profile.alpha2.to_string(),
        profile.f_ped.to_string(),
        profile.w_ped.to_string(),
        profile.psi_ped.to_string(),
        profile.n_itb.to_string(),
        profile.w_itb.to_string(),
        profile.psi_itb.to_string(),
        noise_sans_seed.sigma_frac.to_string(),
        noise_sans_seed.shift_frac.to_string(),
        noise_sans_seed.n_outliers.to_string(),
        noise_sans_seed.outlier_scale.to_string(),
    ];
    let refs: Vec<&str> = parts.iter().map(String::as_str).collect();
    stable_hash64(&refs)
}

fn noise_grid() -> Vec<NoiseSpec> {
    let mut out = Vec::with_capacity(240);
    for &sigma_frac in &SWEEP_SIGMA_FRAC {
        for &shift_frac in &SWEEP_SHIFT_FRAC {
            for &n_outliers in &SWEEP_N_OUTLIERS {
                for &outlier_scale in &SWEEP_OUTLIER_SCALE {
                    out.push(NoiseSpec {
                        sigma_frac,
                        shift_frac,
                        n_outliers,
                        outlier_scale,
                        seed: 0,
                    });
                }
            }
        }
    }
    out
}

/// The full benchmark enumeration: 240 L-mode + 2880 H-mode + 2160 ITB
/// = 5280 cases. Shape parameters vary outermost, then the noise grid
/// (sigma_frac, shift_frac, n_outliers, outlier_scale) innermost. Degenerate
/// combinations (n_outliers = 0 with different outlier_scale) are retained
/// as distinct cases.
pub fn sweep_space() -> Vec<SweepCase> {
    let noises = noise_grid();
    let mut shapes: Vec<ProfileSpec> = Vec::new();
    shapes.push(ProfileSpec::with_regime(Regime::Lmode));
    for &n_edge in &SWEEP_N_EDGE {
        for &w_ped in &SWEEP_W_PED {
            shapes.push(ProfileSpec {
                f_edge: n_edge,
                w_ped,
                ..ProfileSpec::with_regime(Regime::Hmode)
            });
        }
    }
    for &w_itb in &SWEEP_W_ITB {
        for &n_itb in &SWEEP_N_ITB {
            shapes.push(ProfileSpec {
                w_itb,
                n_itb,
                ..ProfileSpec::with_regime(Regime::HmodeItb)
            });
        }
    }
    let mut cases = Vec::with_capacity(shapes.len() * noises.len());
    for shape in &shapes {
        for noise in &noises {
            let mut noise = *noise;
            noise.seed = case_seed(shape, &noise);
            cases.push(SweepCase {
                index: cases.len(),
                profile: *shape,
                noise,
            });
        }
    }
    cases
}
