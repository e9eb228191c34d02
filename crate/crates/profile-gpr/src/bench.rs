//! The four-method benchmark: run each fitting method over the synthetic
//! profile space, score every fit by RMSE against the known truth, and keep
//! an append-only results database that an interrupted sweep can resume.
//!
//! The database is a plain CSV with a fixed header plus a JSON sidecar of
//! run metadata. Every worker derives its chain and optimizer seeds from
//! the case seed and method name, so results are independent of the number
//! of workers and of completion order; after a sweep finishes, the file is
//! rewritten in a canonical row order so repeated runs are byte-identical.

use crate::error::{Error, Result};
use crate::inference::{
    fit_empirical_bayes, fit_full_bayes, ChainConfig, EbConfig, FbConfig, FitResult,
};
use crate::kernels::Kernel;
use crate::likelihoods::Likelihood;
use crate::profiles::{
    case_seed, default_grid, generate_dataset, sweep_space, Dataset, NoiseSpec, ProfileSpec,
    Regime, SweepCase, SWEEP_N_OUTLIERS, SWEEP_SIGMA_FRAC,
};
use crate::rng::{derive_seed, rng_from_seed};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::io::Write;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;

/// The four benchmark methods.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MethodSpec {
    /// Empirical Bayes, Gibbs-tanh kernel (the reference approach).
    EbGibbs,
    /// Empirical Bayes, change-point kernel.
    EbChangePoint,
    /// Full Bayes, change-point kernel, Gaussian likelihood.
    FbChangePointGaussian,
    /// Full Bayes, change-point kernel, Student's-t likelihood.
    FbChangePointStudentT,
}

impl MethodSpec {
    pub const ALL: [MethodSpec; 4] = [
        MethodSpec::EbGibbs,
        MethodSpec::EbChangePoint,
        MethodSpec::FbChangePointGaussian,
        MethodSpec::FbChangePointStudentT,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            MethodSpec::EbGibbs => "eb-gibbs",
            MethodSpec::EbChangePoint => "eb-cp",
            MethodSpec::FbChangePointGaussian => "fb-cp-gauss",
            MethodSpec::FbChangePointStudentT => "fb-cp-t",
        }
    }

    pub fn parse(s: &str) -> Result<MethodSpec> {
        MethodSpec::ALL
            .iter()
            .copied()
            .find(|m| m.name() == s)
            .ok_or_else(|| {
                Error::invalid(
                    "method",
                    format!(
                        "unknown method {s:?}; expected one of {}",
                        MethodSpec::ALL.map(|m| m.name()).join(", ")
                    ),
                )
            })
    }

    /// Stable position used for canonical row ordering.
    fn order(&self) -> usize {
        MethodSpec::ALL.iter().position(|m| m == self).unwrap()
    }
}

/// Root-mean-square error between a fit curve and the truth, evaluated
/// pointwise on matching coordinates.
pub fn rmse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::LengthMismatch {
            what: "rmse inputs",
            got: pred.len(),
            expected: truth.len(),
        });
    }
    if pred.is_empty() {
        return Err(Error::invalid("rmse", "empty inputs"));
    }
    let ss: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok((ss / pred.len() as f64).sqrt())
}

/// Engine settings shared by every fit in a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOptions {
    pub chain: ChainConfig,
    pub eb: EbConfig,
    /// Display-grid override passed to the engines (RMSE always uses the
    /// data coordinates regardless).
    pub grid: Option<Vec<f64>>,
    /// Pin the likelihood scale in both engines instead of learning it.
    pub fixed_noise_scale: Option<f64>,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            chain: ChainConfig::default(),
            eb: EbConfig::default(),
            grid: None,
            fixed_noise_scale: None,
        }
    }
}

/// Dispatch one method on one dataset. The `method` field of the result is
/// the benchmark slug, not the engine's internal label.
pub fn run_method(method: MethodSpec, data: &Dataset, opts: &RunOptions) -> Result<FitResult> {
    let mut fit = match method {
        MethodSpec::EbGibbs | MethodSpec::EbChangePoint => {
            let kernel = if method == MethodSpec::EbGibbs {
                Kernel::default_gibbs()
            } else {
                Kernel::default_changepoint()
            };
            let cfg = EbConfig {
                grid: opts.grid.clone(),
                fixed_noise_scale: opts.fixed_noise_scale,
                ..opts.eb.clone()
            };
            fit_empirical_bayes(&kernel, data, &cfg)?
        }
        MethodSpec::FbChangePointGaussian | MethodSpec::FbChangePointStudentT => {
            let lik = if method == MethodSpec::FbChangePointGaussian {
                Likelihood::Gaussian { sigma_n: 0.1 }
            } else {
                Likelihood::StudentT { sigma_t: 0.1, nu: 3.0 }
            };
            let cfg = FbConfig {
                chain: opts.chain,
                grid: opts.grid.clone(),
                fixed_noise_scale: opts.fixed_noise_scale,
                ..Default::default()
            };
            fit_full_bayes(&Kernel::default_changepoint(), &lik, data, &cfg)?
        }
    };
    fit.method = method.name().to_string();
    Ok(fit)
}

/// One row of the results database.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub method: String,
    pub regime: Regime,
    pub sigma_frac: f64,
    pub shift_frac: f64,
    pub n_outliers: usize,
    pub outlier_scale: f64,
    pub n_edge: f64,
    pub w_ped: f64,
    pub w_itb: f64,
    pub n_itb: f64,
    pub seed: u64,
    /// Absent when the fit failed; the reason is in `flags`.
    pub rmse: Option<f64>,
    /// Zero unless the sweep ran with timing collection on.
    pub runtime_s: f64,
    /// Empty on a clean fit; `;`-joined diagnostics otherwise.
    pub flags: String,
}

pub const RECORD_HEADER: &str =
    "method,regime,sigma_frac,shift_frac,n_outliers,outlier_scale,n_edge,w_ped,w_itb,n_itb,seed,rmse,runtime_s,flags";

/// Flags ride in one unquoted CSV field, so strip the delimiters.
fn sanitize_flag(s: &str) -> String {
    s.replace([',', '\n', '\r'], ";")
}

impl SweepRecord {
    fn for_case(case: &SweepCase, method: MethodSpec) -> SweepRecord {
        SweepRecord {
            method: method.name().to_string(),
            regime: case.profile.regime,
            sigma_frac: case.noise.sigma_frac,
            shift_frac: case.noise.shift_frac,
            n_outliers: case.noise.n_outliers,
            outlier_scale: case.noise.outlier_scale,
            n_edge: case.profile.f_edge,
            w_ped: case.profile.w_ped,
            w_itb: case.profile.w_itb,
            n_itb: case.profile.n_itb,
            seed: case.noise.seed,
            rmse: None,
            runtime_s: 0.0,
            flags: String::new(),
        }
    }

    pub fn to_csv_row(&self) -> String {
        let rmse = self.rmse.map(|v| v.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.method,
            self.regime.slug(),
            self.sigma_frac,
            self.shift_frac,
            self.n_outliers,
            self.outlier_scale,
            self.n_edge,
            self.w_ped,
            self.w_itb,
            self.n_itb,
            self.seed,
            rmse,
            self.runtime_s,
            sanitize_flag(&self.flags)
        )
    }

    pub fn from_csv_row(line: &str, origin: &str) -> Result<SweepRecord> {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 14 {
            return Err(Error::Parse {
                path: origin.to_string(),
                why: format!("expected 14 fields, got {}: {line:?}", fields.len()),
            });
        }
        let num = |i: usize, what: &str| -> Result<f64> {
            fields[i].parse::<f64>().map_err(|_| Error::Parse {
                path: origin.to_string(),
                why: format!("bad {what}: {:?}", fields[i]),
            })
        };
        Ok(SweepRecord {
            method: fields[0].to_string(),
            regime: Regime::from_slug(fields[1])?,
            sigma_frac: num(2, "sigma_frac")?,
            shift_frac: num(3, "shift_frac")?,
            n_outliers: num(4, "n_outliers")? as usize,
            outlier_scale: num(5, "outlier_scale")?,
            n_edge: num(6, "n_edge")?,
            w_ped: num(7, "w_ped")?,
            w_itb: num(8, "w_itb")?,
            n_itb: num(9, "n_itb")?,
            seed: fields[10].parse::<u64>().map_err(|_| Error::Parse {
                path: origin.to_string(),
                why: format!("bad seed: {:?}", fields[10]),
            })?,
            rmse: if fields[11].is_empty() { None } else { Some(num(11, "rmse")?) },
            runtime_s: num(12, "runtime_s")?,
            flags: fields[13].to_string(),
        })
    }

    /// Canonical database order: method, then regime, then every swept
    /// parameter, then seed. Independent of completion order.
    fn canonical_cmp(&self, other: &SweepRecord) -> std::cmp::Ordering {
        let m = |r: &SweepRecord| {
            MethodSpec::parse(&r.method).map(|m| m.order()).unwrap_or(usize::MAX)
        };
        let reg = |r: &SweepRecord| match r.regime {
            Regime::Lmode => 0,
            Regime::Hmode => 1,
            Regime::HmodeItb => 2,
        };
        m(self)
            .cmp(&m(other))
            .then_with(|| self.method.cmp(&other.method))
            .then_with(|| reg(self).cmp(&reg(other)))
            .then_with(|| self.sigma_frac.total_cmp(&other.sigma_frac))
            .then_with(|| self.shift_frac.total_cmp(&other.shift_frac))
            .then_with(|| self.n_outliers.cmp(&other.n_outliers))
            .then_with(|| self.outlier_scale.total_cmp(&other.outlier_scale))
            .then_with(|| self.n_edge.total_cmp(&other.n_edge))
            .then_with(|| self.w_ped.total_cmp(&other.w_ped))
            .then_with(|| self.w_itb.total_cmp(&other.w_itb))
            .then_with(|| self.n_itb.total_cmp(&other.n_itb))
            .then_with(|| self.seed.cmp(&other.seed))
    }
}

/// Read a results database back into memory.
pub fn read_records(path: &Path) -> Result<Vec<SweepRecord>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    let origin = path.display().to_string();
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == RECORD_HEADER => {}
        Some(h) => {
            return Err(Error::Parse {
                path: origin,
                why: format!("unexpected header {h:?}"),
            })
        }
        None => return Ok(Vec::new()),
    }
    lines.map(|l| SweepRecord::from_csv_row(l, &origin)).collect()
}

/// Benchmark presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepPreset {
    /// The full 5280-case space.
    Paper,
    /// Stratified 120-case subset: two cases from every
    /// (regime, outlier count, noise fraction) stratum.
    Desk,
}

impl SweepPreset {
    pub fn parse(s: &str) -> Result<SweepPreset> {
        match s {
            "paper" => Ok(SweepPreset::Paper),
            "desk" => Ok(SweepPreset::Desk),
            other => Err(Error::invalid(
                "preset",
                format!("unknown preset {other:?}; expected paper or desk"),
            )),
        }
    }

    pub fn cases(&self) -> Vec<SweepCase> {
        match self {
            SweepPreset::Paper => sweep_space(),
            SweepPreset::Desk => desk_cases(),
        }
    }
}

const DESK_SEED: u64 = 0xDE5C;

/// The desk preset: from each of the 3 x 4 x 5 strata over
/// (regime, n_outliers, sigma_frac), draw two distinct cases with a fixed
/// generator, yielding 120 cases that cover every regime, outlier level,
/// and noise level at least twice.
pub fn desk_cases() -> Vec<SweepCase> {
    let space = sweep_space();
    let mut rng = rng_from_seed(DESK_SEED);
    let mut picked = Vec::with_capacity(120);
    for regime in [Regime::Lmode, Regime::Hmode, Regime::HmodeItb] {
        for &n_outliers in &SWEEP_N_OUTLIERS {
            for &sigma_frac in &SWEEP_SIGMA_FRAC {
                let stratum: Vec<&SweepCase> = space
                    .iter()
                    .filter(|c| {
                        c.profile.regime == regime
                            && c.noise.n_outliers == n_outliers
                            && c.noise.sigma_frac == sigma_frac
                    })
                    .collect();
                let a = rng.random_range(0..stratum.len());
                let b = loop {
                    let b = rng.random_range(0..stratum.len());
                    if b != a {
                        break b;
                    }
                };
                picked.push(stratum[a].clone());
                picked.push(stratum[b].clone());
            }
        }
    }
    picked.sort_by_key(|c| c.index);
    picked
}

/// Sweep execution settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepOptions {
    pub run: RunOptions,
    pub parallelism: usize,
    /// Record wall-clock runtimes and sidecar timestamps. Off by default so
    /// repeated sweeps produce byte-identical files.
    pub timings: bool,
}

impl Default for SweepOptions {
    fn default() -> Self {
        // Batch fits use shortened chains, capped optimizer iterations and a
        // coarse display grid: the sweep only persists RMSE at the data
        // coordinates, and the budget is thousands of fits. Single-dataset
        // fits default to the full ChainConfig / EbConfig instead.
        SweepOptions {
            run: RunOptions {
                chain: ChainConfig {
                    n_burn: 2400,
                    n_samples: 600,
                    thin: 3,
                    ..Default::default()
                },
                eb: EbConfig { max_iter: 150, grad_tol: 1e-5, ..Default::default() },
                grid: Some(vec![0.0, 0.55, 1.1]),
                fixed_noise_scale: None,
            },
            parallelism: 8,
            timings: false,
        }
    }
}

/// Sidecar metadata written next to the database.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepMeta {
    pub version: String,
    pub n_cases: usize,
    pub methods: Vec<String>,
    pub options: SweepOptions,
    pub started_unix_s: Option<u64>,
    pub finished_unix_s: Option<u64>,
}

fn unix_now() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn sidecar_path(out: &Path) -> std::path::PathBuf {
    out.with_extension("meta.json")
}

/// Per-fit seeds are mixed from the run seed, the case seed, and the method
/// name, so every fit is reproducible in isolation and results do not
/// depend on worker count or scheduling.
fn per_fit_options(base: &RunOptions, case_seed: u64, method: MethodSpec) -> RunOptions {
    let tag = format!("{}/{case_seed}", method.name());
    let mut opts = base.clone();
    opts.chain.seed = derive_seed(base.chain.seed, &tag);
    opts.eb.seed = derive_seed(base.eb.seed, &tag);
    opts
}

fn fit_one(case: &SweepCase, method: MethodSpec, opts: &SweepOptions) -> SweepRecord {
    let mut rec = SweepRecord::for_case(case, method);
    let grid = default_grid();
    let data = match generate_dataset(&case.profile, &case.noise, &grid) {
        Ok(d) => d,
        Err(e) => {
            rec.flags = format!("error:dataset:{e}");
            return rec;
        }
    };
    let fit_opts = per_fit_options(&opts.run, case.noise.seed, method);
    let start = std::time::Instant::now();
    match run_method(method, &data, &fit_opts) {
        Ok(fit) => {
            rec.rmse = fit.rmse;
            if fit.rmse.is_none() {
                rec.flags = "error:no_truth".to_string();
            } else if !fit.warnings.is_empty() {
                rec.flags = fit.warnings.join(";");
            }
        }
        Err(e) => rec.flags = format!("error:fit:{e}"),
    }
    if opts.timings {
        rec.runtime_s = start.elapsed().as_secs_f64();
    }
    rec
}

/// Run `methods` over `cases`, appending one record per (case, method) to
/// the CSV database at `out`. Existing (method, seed) pairs are skipped, so
/// an interrupted sweep resumes where it stopped. On completion the file is
/// rewritten in canonical order and the metadata sidecar is refreshed.
pub fn run_sweep(
    cases: &[SweepCase],
    methods: &[MethodSpec],
    out: &Path,
    opts: &SweepOptions,
) -> Result<Vec<SweepRecord>> {
    if cases.is_empty() || methods.is_empty() {
        return Err(Error::invalid("run_sweep", "empty case or method list"));
    }
    if opts.parallelism == 0 {
        return Err(Error::invalid("run_sweep", "parallelism must be positive"));
    }
    opts.run.chain.validate()?;
    let started = opts.timings.then(unix_now);

    let done: HashSet<(String, u64)> = if out.exists() {
        read_records(out)?
            .into_iter()
            .map(|r| (r.method, r.seed))
            .collect()
    } else {
        HashSet::new()
    };

    // Work items: every (case, method) not already in the database.
    let todo: Vec<(usize, MethodSpec)> = cases
        .iter()
        .enumerate()
        .flat_map(|(i, c)| {
            methods
                .iter()
                .filter(|m| !done.contains(&(m.name().to_string(), c.noise.seed)))
                .map(move |m| (i, *m))
                .collect::<Vec<_>>()
        })
        .collect();

    let mut file = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(out)
        .map_err(|e| Error::io(out.display().to_string(), e))?;
    let fresh = file
        .metadata()
        .map_err(|e| Error::io(out.display().to_string(), e))?
        .len()
        == 0;
    if fresh {
        writeln!(file, "{RECORD_HEADER}").map_err(|e| Error::io(out.display().to_string(), e))?;
        file.flush().map_err(|e| Error::io(out.display().to_string(), e))?;
    }

    let next = AtomicUsize::new(0);
    let (tx, rx) = mpsc::channel::<SweepRecord>();
    std::thread::scope(|s| -> Result<()> {
        for _ in 0..opts.parallelism.min(todo.len().max(1)) {
            let tx = tx.clone();
            let todo = &todo;
            let next = &next;
            s.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some((case_idx, method)) = todo.get(i).copied() else { break };
                let rec = fit_one(&cases[case_idx], method, opts);
                if tx.send(rec).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        // This thread is the single writer: each record is appended and
        // flushed before the next, so a kill loses at most one fit.
        for rec in rx {
            writeln!(file, "{}", rec.to_csv_row())
                .and_then(|_| file.flush())
                .map_err(|e| Error::io(out.display().to_string(), e))?;
        }
        Ok(())
    })?;
    drop(file);

    // Canonical rewrite: row order must not leak scheduling.
    let mut records = read_records(out)?;
    records.sort_by(|a, b| a.canonical_cmp(b));
    let mut text = String::from(RECORD_HEADER);
    text.push('\n');
    for r in &records {
        text.push_str(&r.to_csv_row());
        text.push('\n');
    }
    let tmp = out.with_extension("csv.tmp");
    std::fs::write(&tmp, &text).map_err(|e| Error::io(tmp.display().to_string(), e))?;
    std::fs::rename(&tmp, out).map_err(|e| Error::io(out.display().to_string(), e))?;

    let meta = SweepMeta {
        version: env!("CARGO_PKG_VERSION").to_string(),
        n_cases: cases.len(),
        methods: methods.iter().map(|m| m.name().to_string()).collect(),
        options: opts.clone(),
        started_unix_s: started,
        finished_unix_s: opts.timings.then(unix_now),
    };
    let meta_text = serde_json::to_string_pretty(&meta)
        .map_err(|e| Error::Numerical(format!("serializing sweep metadata: {e}")))?;
    let meta_path = sidecar_path(out);
    std::fs::write(&meta_path, meta_text)
        .map_err(|e| Error::io(meta_path.display().to_string(), e))?;

    Ok(records)
}

/// One summary row: RMSE statistics for one (group value, method) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub group: String,
    pub method: String,
    pub mean_rmse: f64,
    /// Population standard deviation (zero for a single record).
    pub std_rmse: f64,
    pub count: usize,
}

pub const GROUP_KEYS: [&str; 9] = [
    "regime",
    "sigma_frac",
    "shift_frac",
    "n_outliers",
    "outlier_scale",
    "n_edge",
    "w_ped",
    "w_itb",
    "n_itb",
];

/// Group value and a sort key that orders regimes canonically and numbers
/// numerically.
fn group_value(rec: &SweepRecord, key: &str) -> (String, f64) {
    match key {
        "regime" => {
            let ord = match rec.regime {
                Regime::Lmode => 0.0,
                Regime::Hmode => 1.0,
                Regime::HmodeItb => 2.0,
            };
            (rec.regime.slug().to_string(), ord)
        }
        "sigma_frac" => (rec.sigma_frac.to_string(), rec.sigma_frac),
        "shift_frac" => (rec.shift_frac.to_string(), rec.shift_frac),
        "n_outliers" => (rec.n_outliers.to_string(), rec.n_outliers as f64),
        "outlier_scale" => (rec.outlier_scale.to_string(), rec.outlier_scale),
        "n_edge" => (rec.n_edge.to_string(), rec.n_edge),
        "w_ped" => (rec.w_ped.to_string(), rec.w_ped),
        "w_itb" => (rec.w_itb.to_string(), rec.w_itb),
        "n_itb" => (rec.n_itb.to_string(), rec.n_itb),
        _ => unreachable!("group keys validated by summarize"),
    }
}

/// Mean and population std of RMSE per (group value, method). Records
/// without an RMSE (failed fits) are excluded. `group_by = None` collapses
/// everything into one "all" group per method.
pub fn summarize(records: &[SweepRecord], group_by: Option<&str>) -> Result<Vec<SummaryRow>> {
    if records.is_empty() {
        return Err(Error::invalid("summarize", "empty database"));
    }
    if let Some(key) = group_by {
        if !GROUP_KEYS.contains(&key) {
            return Err(Error::invalid(
                "summarize",
                format!("unknown group key {key:?}; expected one of {}", GROUP_KEYS.join(", ")),
            ));
        }
    }
    // cell key -> (sort key, rmse values)
    let mut cells: Vec<((String, String), f64, Vec<f64>)> = Vec::new();
    for rec in records {
        let Some(rmse) = rec.rmse else { continue };
        let (group, ord) = match group_by {
            Some(key) => group_value(rec, key),
            None => ("all".to_string(), 0.0),
        };
        let cell_key = (group, rec.method.clone());
        match cells.iter_mut().find(|(k, _, _)| *k == cell_key) {
            Some((_, _, vals)) => vals.push(rmse),
            None => cells.push((cell_key, ord, vec![rmse])),
        }
    }
    if cells.is_empty() {
        return Err(Error::invalid("summarize", "no records carry an RMSE"));
    }
    let method_ord = |m: &str| MethodSpec::parse(m).map(|m| m.order()).unwrap_or(usize::MAX);
    cells.sort_by(|a, b| {
        a.1.total_cmp(&b.1)
            .then_with(|| a.0 .0.cmp(&b.0 .0))
            .then_with(|| method_ord(&a.0 .1).cmp(&method_ord(&b.0 .1)))
            .then_with(|| a.0 .1.cmp(&b.0 .1))
    });
    Ok(cells
        .into_iter()
        .map(|((group, method), _, vals)| {
            let n = vals.len() as f64;
            let mean = vals.iter().sum::<f64>() / n;
            let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            SummaryRow {
                group,
                method,
                mean_rmse: mean,
                std_rmse: var.sqrt(),
                count: vals.len(),
            }
        })
        .collect())
}

pub fn summaries_to_csv(rows: &[SummaryRow]) -> String {
    let mut out = String::from("group,method,mean_rmse,std_rmse,count\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.group, r.method, r.mean_rmse, r.std_rmse, r.count
        ));
    }
    out
}

/// Equal-width RMSE histogram for one (method, regime) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RmseHistogram {
    pub method: String,
    pub regime: Regime,
    pub bin_lo: Vec<f64>,
    pub bin_hi: Vec<f64>,
    pub count: Vec<u64>,
}

/// Histogram the RMSE distribution per method per regime.
pub fn rmse_histograms(records: &[SweepRecord], bins: usize) -> Result<Vec<RmseHistogram>> {
    if bins == 0 {
        return Err(Error::invalid("rmse_histograms", "bins must be positive"));
    }
    let mut out = Vec::new();
    let methods: Vec<String> = {
        let mut seen = Vec::new();
        for r in records {
            if !seen.contains(&r.method) {
                seen.push(r.method.clone());
            }
        }
        let ord = |m: &str| MethodSpec::parse(m).map(|m| m.order()).unwrap_or(usize::MAX);
        seen.sort_by(|a, b| ord(a).cmp(&ord(b)).then_with(|| a.cmp(b)));
        seen
    };
    for method in &methods {
        for regime in [Regime::Lmode, Regime::Hmode, Regime::HmodeItb] {
            let vals: Vec<f64> = records
                .iter()
                .filter(|r| &r.method == method && r.regime == regime)
                .filter_map(|r| r.rmse)
                .collect();
            if vals.is_empty() {
                continue;
            }
            let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if lo == hi {
                out.push(RmseHistogram {
                    method: method.clone(),
                    regime,
                    bin_lo: vec![lo],
                    bin_hi: vec![hi],
                    count: vec![vals.len() as u64],
                });
                continue;
            }
            let width = (hi - lo) / bins as f64;
            let mut count = vec![0u64; bins];
            for v in &vals {
                let idx = (((v - lo) / width) as usize).min(bins - 1);
                count[idx] += 1;
            }
            out.push(RmseHistogram {
                method: method.clone(),
                regime,
                bin_lo: (0..bins).map(|b| lo + b as f64 * width).collect(),
                bin_hi: (0..bins).map(|b| lo + (b + 1) as f64 * width).collect(),
                count,
            });
        }
    }
    Ok(out)
}

pub fn rmse_histograms_to_csv(tables: &[RmseHistogram]) -> String {
    let mut out = String::from("method,regime,bin_lo,bin_hi,count\n");
    for t in tables {
        for i in 0..t.count.len() {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                t.method,
                t.regime.slug(),
                t.bin_lo[i],
                t.bin_hi[i],
                t.count[i]
            ));
        }
    }
    out
}

/// A worst-case bundle: the highest-RMSE record of one method, refit by
/// every requested method on the same regenerated dataset for side-by-side
/// comparison.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WorstFitBundle {
    pub method: String,
    pub seed: u64,
    pub rmse: f64,
    pub fits: Vec<FitResult>,
}

/// Rebuild the generating case from a database record. The stored seed must
/// equal the canonical hash of the rebuilt parameters, which holds for
/// every record produced from the benchmark enumeration.
pub fn reconstruct_case(rec: &SweepRecord) -> Result<SweepCase> {
    let mut profile = ProfileSpec::with_regime(rec.regime);
    profile.f_edge = rec.n_edge;
    profile.w_ped = rec.w_ped;
    profile.w_itb = rec.w_itb;
    profile.n_itb = rec.n_itb;
    let mut noise = NoiseSpec {
        sigma_frac: rec.sigma_frac,
        shift_frac: rec.shift_frac,
        n_outliers: rec.n_outliers,
        outlier_scale: rec.outlier_scale,
        seed: 0,
    };
    let expect = case_seed(&profile, &noise);
    if expect != rec.seed {
        return Err(Error::invalid(
            "record",
            format!(
                "seed {} does not match the rebuilt case parameters (expected {expect}); \
                 the database row was not produced from the benchmark enumeration",
                rec.seed
            ),
        ));
    }
    noise.seed = rec.seed;
    Ok(SweepCase { index: 0, profile, noise })
}

/// For each method present, find its `per_method` highest-RMSE records
/// (ties break toward the lower seed) and refit those datasets with every
/// method in `refit`. Seeds are derived exactly as in the sweep, so the
/// refits reproduce the recorded fits.
pub fn worst_fits(
    records: &[SweepRecord],
    per_method: usize,
    refit: &[MethodSpec],
    opts: &RunOptions,
) -> Result<Vec<WorstFitBundle>> {
    if records.is_empty() {
        return Err(Error::invalid("worst_fits", "empty database"));
    }
    if per_method == 0 {
        return Err(Error::invalid("worst_fits", "per_method must be positive"));
    }
    let mut methods: Vec<String> = Vec::new();
    for r in records {
        if !methods.contains(&r.method) {
            methods.push(r.method.clone());
        }
    }
    let ord = |m: &str| MethodSpec::parse(m).map(|m| m.order()).unwrap_or(usize::MAX);
    methods.sort_by(|a, b| ord(a).cmp(&ord(b)).then_with(|| a.cmp(b)));

    let mut bundles = Vec::new();
    for method in &methods {
        let mut scored: Vec<&SweepRecord> = records
            .iter()
            .filter(|r| &r.method == method && r.rmse.is_some())
            .collect();
        scored.sort_by(|a, b| {
            b.rmse
                .unwrap()
                .total_cmp(&a.rmse.unwrap())
                .then_with(|| a.seed.cmp(&b.seed))
        });
        for rec in scored.into_iter().take(per_method) {
            let case = reconstruct_case(rec)?;
            let data = generate_dataset(&case.profile, &case.noise, &default_grid())?;
            let mut fits = Vec::with_capacity(refit.len());
            for m in refit {
                let fit_opts = per_fit_options(opts, case.noise.seed, *m);
                fits.push(run_method(*m, &data, &fit_opts)?);
            }
            bundles.push(WorstFitBundle {
                method: method.clone(),
                seed: rec.seed,
                rmse: rec.rmse.unwrap(),
                fits,
            });
        }
    }
    Ok(bundles)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::HyperSummary;

    #[test]
    fn rmse_frozen_examples() {
        let truth = vec![1.0, 1.0, 1.0];
        assert_eq!(rmse(&truth, &truth).unwrap(), 0.0);
        let shifted: Vec<f64> = truth.iter().map(|v| v + 0.1).collect();
        assert!((rmse(&shifted, &truth).unwrap() - 0.1).abs() < 1e-15);
        // sqrt(5/3), 40-digit evaluation: 1.290994448735805628393088466594133203611
        let v = rmse(&[1.0, 2.0, 3.0], &[1.0, 1.0, 1.0]).unwrap();
        assert!((v - 1.2909944487358056).abs() < 1e-15);
        assert!(rmse(&[1.0], &[1.0, 2.0]).is_err());
        assert!(rmse(&[], &[]).is_err());
    }

    #[test]
    fn method_slugs_round_trip() {
        for m in MethodSpec::ALL {
            assert_eq!(MethodSpec::parse(m.name()).unwrap(), m);
        }
        assert_eq!(MethodSpec::EbGibbs.name(), "eb-gibbs");
        assert_eq!(MethodSpec::FbChangePointStudentT.name(), "fb-cp-t");
        assert!(MethodSpec::parse("eb_gibbs").is_err());
    }

    #[test]
    fn desk_preset_is_stratified_and_stable() {
        let desk = desk_cases();
        assert_eq!(desk.len(), 120);
        assert_eq!(desk, desk_cases(), "preset must be identical across calls");
        // Every (regime, n_outliers, sigma_frac) stratum appears exactly twice.
        for regime in [Regime::Lmode, Regime::Hmode, Regime::HmodeItb] {
            for &n_ol in &SWEEP_N_OUTLIERS {
                for &sf in &SWEEP_SIGMA_FRAC {
                    let hits = desk
                        .iter()
                        .filter(|c| {
                            c.profile.regime == regime
                                && c.noise.n_outliers == n_ol
                                && c.noise.sigma_frac == sf
                        })
                        .count();
                    assert_eq!(hits, 2, "stratum {regime:?}/{n_ol}/{sf}");
                }
            }
        }
        // Members come straight from the full enumeration.
        let space = sweep_space();
        let seeds: HashSet<u64> = space.iter().map(|c| c.noise.seed).collect();
        assert!(desk.iter().all(|c| seeds.contains(&c.noise.seed)));
        assert_eq!(
            desk.iter().map(|c| c.noise.seed).collect::<HashSet<_>>().len(),
            120,
            "cases must be distinct"
        );
    }

    #[test]
    fn record_csv_round_trip() {
        let space = sweep_space();
        for case in [&space[0], &space[300], &space[5279]] {
            let mut rec = SweepRecord::for_case(case, MethodSpec::FbChangePointStudentT);
            rec.rmse = Some(0.0123456789012345);
            rec.runtime_s = 1.5;
            rec.flags = "acceptance rate 0.9, outside healthy band".to_string();
            let row = rec.to_csv_row();
            let back = SweepRecord::from_csv_row(&row, "test").unwrap();
            // The comma in flags is sanitized on write.
            assert_eq!(back.flags, "acceptance rate 0.9; outside healthy band");
            assert_eq!(back.rmse, rec.rmse);
            assert_eq!(back.seed, rec.seed);
            assert_eq!(back.regime, rec.regime);
            // Reconstruction recovers the generating case.
            let rebuilt = reconstruct_case(&back).unwrap();
            assert_eq!(rebuilt.profile, case.profile);
            assert_eq!(rebuilt.noise, case.noise);
        }
        // Absent RMSE round-trips as the empty field.
        let mut rec = SweepRecord::for_case(&space[0], MethodSpec::EbGibbs);
        rec.flags = "error:fit:test".into();
        let back = SweepRecord::from_csv_row(&rec.to_csv_row(), "test").unwrap();
        assert_eq!(back.rmse, None);
        assert!(SweepRecord::from_csv_row("too,few,fields", "test").is_err());
    }

    fn tiny_cases(n: usize) -> Vec<SweepCase> {
        desk_cases().into_iter().take(n).collect()
    }

    fn fast_opts(parallelism: usize) -> SweepOptions {
        SweepOptions {
            run: RunOptions {
                chain: ChainConfig {
                    n_burn: 40,
                    n_samples: 20,
                    thin: 1,
                    ..Default::default()
                },
                eb: EbConfig { restarts: 2, max_iter: 60, ..Default::default() },
                grid: Some(vec![0.0, 1.1]),
                fixed_noise_scale: None,
            },
            parallelism,
            timings: false,
        }
    }

    #[test]
    fn sweep_writes_resumes_and_is_parallelism_invariant() {
        let dir = tempfile::tempdir().unwrap();
        let cases = tiny_cases(2);
        let methods = [MethodSpec::EbChangePoint, MethodSpec::FbChangePointGaussian];

        let p1 = dir.path().join("serial.csv");
        let recs = run_sweep(&cases, &methods, &p1, &fast_opts(1)).unwrap();
        assert_eq!(recs.len(), 4);
        assert!(recs.iter().all(|r| r.rmse.is_some()));
        assert!(recs.iter().all(|r| r.runtime_s == 0.0));
        let bytes1 = std::fs::read(&p1).unwrap();

        // Rerun: everything is already done, file must not change.
        let again = run_sweep(&cases, &methods, &p1, &fast_opts(1)).unwrap();
        assert_eq!(again.len(), 4);
        assert_eq!(std::fs::read(&p1).unwrap(), bytes1, "resume must not duplicate");

        // Same sweep at higher parallelism lands on identical bytes.
        let p3 = dir.path().join("threaded.csv");
        run_sweep(&cases, &methods, &p3, &fast_opts(3)).unwrap();
        assert_eq!(std::fs::read(&p3).unwrap(), bytes1, "worker count must not matter");

        // Sidecar exists and echoes the configuration.
        let meta: SweepMeta =
            serde_json::from_str(&std::fs::read_to_string(sidecar_path(&p1)).unwrap()).unwrap();
        assert_eq!(meta.n_cases, 2);
        assert_eq!(meta.methods, vec!["eb-cp", "fb-cp-gauss"]);
        assert_eq!(meta.started_unix_s, None, "timestamps off by default");
    }

    #[test]
    fn sweep_resumes_partial_database() {
        let dir = tempfile::tempdir().unwrap();
        let cases = tiny_cases(2);
        let methods = [MethodSpec::EbChangePoint];
        let path = dir.path().join("partial.csv");

        // Simulate an interrupted run: only the first case is recorded.
        run_sweep(&cases[..1], &methods, &path, &fast_opts(1)).unwrap();
        let partial = read_records(&path).unwrap();
        assert_eq!(partial.len(), 1);

        let full = run_sweep(&cases, &methods, &path, &fast_opts(1)).unwrap();
        assert_eq!(full.len(), 2);
        let seeds: HashSet<u64> = full.iter().map(|r| r.seed).collect();
        assert_eq!(seeds.len(), 2);
        // The resumed record matches what a fresh sweep would have produced.
        let fresh_path = dir.path().join("fresh.csv");
        run_sweep(&cases, &methods, &fresh_path, &fast_opts(1)).unwrap();
        assert_eq!(
            std::fs::read(&path).unwrap(),
            std::fs::read(&fresh_path).unwrap(),
            "resumed and fresh sweeps must agree byte-for-byte"
        );
    }

    #[test]
    fn sweep_records_dataset_failures_without_aborting() {
        let dir = tempfile::tempdir().unwrap();
        let mut cases = tiny_cases(1);
        // More outliers than points: dataset generation must fail.
        cases[0].noise.n_outliers = 200;
        let path = dir.path().join("failed.csv");
        let recs =
            run_sweep(&cases, &[MethodSpec::EbChangePoint], &path, &fast_opts(1)).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].rmse, None);
        assert!(recs[0].flags.starts_with("error:dataset:"), "flags: {}", recs[0].flags);
    }

    fn fake_record(method: &str, n_outliers: usize, rmse: f64, seed: u64) -> SweepRecord {
        SweepRecord {
            method: method.to_string(),
            regime: Regime::Lmode,
            sigma_frac: 0.1,
            shift_frac: 0.0,
            n_outliers,
            outlier_scale: 2.0,
            n_edge: 0.01,
            w_ped: 0.015,
            w_itb: 0.015,
            n_itb: 1.0,
            seed,
            rmse: Some(rmse),
            runtime_s: 0.0,
            flags: String::new(),
        }
    }

    #[test]
    fn summarize_groups_and_orders() {
        let recs = vec![
            fake_record("eb-cp", 0, 0.10, 1),
            fake_record("eb-cp", 0, 0.30, 2),
            fake_record("eb-cp", 10, 0.50, 3),
            fake_record("fb-cp-t", 0, 0.05, 1),
        ];
        let rows = summarize(&recs, Some("n_outliers")).unwrap();
        assert_eq!(rows.len(), 3);
        // Ordered by group value, then method order.
        assert_eq!((rows[0].group.as_str(), rows[0].method.as_str()), ("0", "eb-cp"));
        assert_eq!((rows[1].group.as_str(), rows[1].method.as_str()), ("0", "fb-cp-t"));
        assert_eq!((rows[2].group.as_str(), rows[2].method.as_str()), ("10", "eb-cp"));
        assert!((rows[0].mean_rmse - 0.2).abs() < 1e-15);
        assert!((rows[0].std_rmse - 0.1).abs() < 1e-15);
        assert_eq!(rows[0].count, 2);
        // Single-record cell: std is zero.
        assert_eq!(rows[2].std_rmse, 0.0);
        assert_eq!(rows[2].count, 1);

        // Permutation invariance.
        let mut shuffled = recs.clone();
        shuffled.reverse();
        assert_eq!(summarize(&shuffled, Some("n_outliers")).unwrap(), rows);

        // Ungrouped: one row per method.
        let all = summarize(&recs, None).unwrap();
        assert_eq!(all.len(), 2);
        assert_eq!(all[0].group, "all");
        assert_eq!(all[0].method, "eb-cp");
        assert_eq!(all[0].count, 3);

        assert!(summarize(&recs, Some("flux_capacitor")).is_err());
        assert!(summarize(&[], None).is_err());

        let csv = summaries_to_csv(&rows);
        assert!(csv.starts_with("group,method,mean_rmse,std_rmse,count\n"));
        assert!(csv.contains("0,eb-cp,0.2"));
    }

    #[test]
    fn rmse_histograms_schema() {
        let recs = vec![
            fake_record("eb-cp", 0, 0.1, 1),
            fake_record("eb-cp", 0, 0.2, 2),
            fake_record("eb-cp", 0, 0.4, 3),
            fake_record("fb-cp-t", 0, 0.25, 1),
        ];
        let tables = rmse_histograms(&recs, 3).unwrap();
        assert_eq!(tables.len(), 2);
        assert_eq!(tables[0].method, "eb-cp");
        assert_eq!(tables[0].count.iter().sum::<u64>(), 3);
        assert_eq!(tables[0].count.len(), 3);
        // Single value collapses to one bin.
        assert_eq!(tables[1].count, vec![1]);
        let csv = rmse_histograms_to_csv(&tables);
        assert!(csv.starts_with("method,regime,bin_lo,bin_hi,count\n"));
        assert!(csv.contains("eb-cp,lmode,"));
        assert!(rmse_histograms(&recs, 0).is_err());
    }

    #[test]
    fn worst_fits_reruns_all_requested_methods() {
        let dir = tempfile::tempdir().unwrap();
        let cases = tiny_cases(2);
        let methods = [MethodSpec::EbGibbs, MethodSpec::EbChangePoint];
        let path = dir.path().join("db.csv");
        let opts = fast_opts(2);
        let recs = run_sweep(&cases, &methods, &path, &opts).unwrap();

        let bundles = worst_fits(&recs, 1, &methods, &opts.run).unwrap();
        assert_eq!(bundles.len(), 2, "one bundle per method in the database");
        for b in &bundles {
            assert_eq!(b.fits.len(), 2, "each bundle refits every requested method");
            // The refit of the bundle's own method reproduces the recorded RMSE.
            let own = b.fits.iter().find(|f| f.method == b.method).unwrap();
            assert!(
                (own.rmse.unwrap() - b.rmse).abs() < 1e-12,
                "method {}: refit rmse {} vs recorded {}",
                b.method,
                own.rmse.unwrap(),
                b.rmse
            );
            // And it is the worst recorded RMSE for that method.
            let max = recs
                .iter()
                .filter(|r| r.method == b.method)
                .map(|r| r.rmse.unwrap())
                .fold(f64::NEG_INFINITY, f64::max);
            assert_eq!(b.rmse, max);
        }
        // Point estimates carry positive hyperparameters.
        for f in bundles.iter().flat_map(|b| &b.fits) {
            let HyperSummary::PointEstimate { values, .. } = &f.hypers else {
                panic!("EB refits must be point estimates");
            };
            assert!(values.iter().all(|v| *v > 0.0));
        }
    }

    #[test]
    fn worst_fits_rejects_foreign_records() {
        // A record whose seed does not hash from its parameters cannot be
        // regenerated and must be reported, not silently refit.
        let rec = fake_record("eb-cp", 0, 0.5, 12345);
        let err = worst_fits(&[rec], 1, &[MethodSpec::EbChangePoint], &RunOptions::default());
        assert!(err.is_err());
    }

    #[test]
    fn paper_preset_counts() {
        let cases = SweepPreset::Paper.cases();
        assert_eq!(cases.len(), 5280);
        let count = |r: Regime| cases.iter().filter(|c| c.profile.regime == r).count();
        assert_eq!(count(Regime::Lmode), 240);
        assert_eq!(count(Regime::Hmode), 2880);
        assert_eq!(count(Regime::HmodeItb), 2160);
        assert!(SweepPreset::parse("desk").unwrap() == SweepPreset::Desk);
        assert!(SweepPreset::parse("weekend").is_err());
    }
}
