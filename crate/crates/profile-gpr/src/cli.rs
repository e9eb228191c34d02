//! Command-line plumbing: `generate`, `fit`, `sweep`, and `report`.
//!
//! Every knob can come from a flat key-value config file (`key = value`,
//! `#` comments) or a command-line flag; flags win, unknown config keys are
//! rejected. Each command writes a `.run.json` provenance file recording
//! the fully resolved configuration, so any output can be reproduced from
//! that file alone. Commands exit 0 only when every requested output was
//! written.

use crate::bench::{
    read_records, rmse_histograms, rmse_histograms_to_csv, run_method, run_sweep, summaries_to_csv,
    summarize, worst_fits, MethodSpec, RunOptions, SweepOptions, SweepPreset,
};
use crate::error::{Error, Result};
use crate::inference::{extract_histograms, histograms_to_csv, ChainConfig, EbConfig, HyperSummary};
use crate::profiles::{default_grid, generate_dataset, Dataset, NoiseSpec, ProfileSpec, Regime};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

#[derive(Parser)]
#[command(
    name = "profile-gpr",
    version,
    about = "Gaussian-process regression for edge-localized 1-D profiles"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic dataset CSV from a profile and noise spec.
    Generate(GenerateArgs),
    /// Fit one dataset with one method and write the fit artifacts.
    Fit(FitArgs),
    /// Run the multi-method benchmark sweep into a results database.
    Sweep(SweepArgs),
    /// Summarize a results database into plot-ready tables.
    Report(ReportArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Flat key-value config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Profile regime: lmode, hmode, or hmode_itb.
    #[arg(long)]
    regime: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Noise width as a fraction of the local truth.
    #[arg(long)]
    sigma_frac: Option<f64>,
    /// Systematic shift as a fraction of the local truth.
    #[arg(long)]
    shift_frac: Option<f64>,
    #[arg(long)]
    n_outliers: Option<usize>,
    /// Outlier width as a multiple of the local truth.
    #[arg(long)]
    outlier_scale: Option<f64>,
    /// Edge offset of the profile shape.
    #[arg(long)]
    n_edge: Option<f64>,
    /// Pedestal width.
    #[arg(long)]
    w_ped: Option<f64>,
    /// Barrier width.
    #[arg(long)]
    w_itb: Option<f64>,
    /// Barrier height.
    #[arg(long)]
    n_itb: Option<f64>,
    /// Output CSV path.
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset CSV (`psi,y,sigma[,truth,is_outlier]`).
    data: Option<PathBuf>,
    /// One of: eb-gibbs, eb-cp, fb-cp-gauss, fb-cp-t.
    #[arg(short, long)]
    method: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    n_burn: Option<usize>,
    #[arg(long)]
    n_samples: Option<usize>,
    #[arg(long)]
    thin: Option<usize>,
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long)]
    max_iter: Option<usize>,
    /// Histogram bins for posterior-sample tables.
    #[arg(long)]
    bins: Option<usize>,
    /// Pin the likelihood scale instead of learning it.
    #[arg(long)]
    fixed_noise: Option<f64>,
    /// Output stem; artifacts are `<prefix>.json`, `<prefix>_grid.csv`, ...
    #[arg(short, long)]
    out_prefix: Option<String>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Case enumeration: paper (5280 cases) or desk (stratified 120).
    #[arg(long)]
    preset: Option<String>,
    /// Worker threads.
    #[arg(short = 'j', long)]
    parallelism: Option<usize>,
    /// Comma-separated method list; all four by default.
    #[arg(long)]
    methods: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    n_burn: Option<usize>,
    #[arg(long)]
    n_samples: Option<usize>,
    #[arg(long)]
    thin: Option<usize>,
    #[arg(long)]
    restarts: Option<usize>,
    /// Truncate the enumeration to its first N cases.
    #[arg(long)]
    limit: Option<usize>,
    /// Enumerate and count the cases, then exit without fitting.
    #[arg(long)]
    dry_run: bool,
    /// Record wall-clock runtimes (makes outputs non-reproducible).
    #[arg(long)]
    timings: bool,
    /// Database CSV path.
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Results database CSV from `sweep`.
    db: Option<PathBuf>,
    /// Group summaries by one swept parameter (e.g. n-outliers, regime).
    #[arg(long)]
    group: Option<String>,
    /// Also refit the worst K cases per method with every method.
    #[arg(long)]
    worst: Option<usize>,
    #[arg(long)]
    bins: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    n_burn: Option<usize>,
    #[arg(long)]
    n_samples: Option<usize>,
    #[arg(long)]
    thin: Option<usize>,
    #[arg(long)]
    restarts: Option<usize>,
    /// Output stem for the report tables.
    #[arg(short, long)]
    out_prefix: Option<String>,
}

/// Config-file overlay: parsed key-value pairs plus the record of every
/// resolved effective value, which becomes the provenance JSON.
struct Cfg {
    file: BTreeMap<String, String>,
    resolved: BTreeMap<String, String>,
}

impl Cfg {
    fn load(path: Option<&PathBuf>, known: &[&str]) -> Result<Cfg> {
        let mut file = BTreeMap::new();
        if let Some(path) = path {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::io(path.display().to_string(), e))?;
            for (lineno, raw) in text.lines().enumerate() {
                let line = raw.split('#').next().unwrap_or("").trim();
                if line.is_empty() {
                    continue;
                }
                let Some((k, v)) = line.split_once('=') else {
                    return Err(Error::parse(
                        path.display().to_string(),
                        format!("line {}: expected `key = value`, got {raw:?}", lineno + 1),
                    ));
                };
                let key = k.trim().to_string();
                if !known.contains(&key.as_str()) {
                    return Err(Error::parse(
                        path.display().to_string(),
                        format!("unknown key {key:?}; known keys: {}", known.join(", ")),
                    ));
                }
                file.insert(key, v.trim().to_string());
            }
        }
        Ok(Cfg { file, resolved: BTreeMap::new() })
    }

    fn lookup<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: Display,
    {
        match self.file.get(key) {
            None => Ok(None),
            Some(raw) => raw.parse::<T>().map(Some).map_err(|e| {
                Error::invalid("config", format!("key {key}: cannot parse {raw:?}: {e}"))
            }),
        }
    }

    /// Flag beats file beats default; the effective value is recorded.
    fn resolve<T: FromStr + ToString>(&mut self, key: &str, flag: Option<T>, default: T) -> Result<T>
    where
        T::Err: Display,
    {
        let value = match flag {
            Some(v) => v,
            None => self.lookup::<T>(key)?.unwrap_or(default),
        };
        self.resolved.insert(key.to_string(), value.to_string());
        Ok(value)
    }

    /// Optional setting: absent everywhere stays absent.
    fn resolve_opt<T: FromStr + ToString>(&mut self, key: &str, flag: Option<T>) -> Result<Option<T>>
    where
        T::Err: Display,
    {
        let value = match flag {
            Some(v) => Some(v),
            None => self.lookup::<T>(key)?,
        };
        if let Some(v) = &value {
            self.resolved.insert(key.to_string(), v.to_string());
        }
        Ok(value)
    }

    /// Boolean switch: true if either the flag or the file says so.
    fn resolve_flag(&mut self, key: &str, flag: bool) -> Result<bool> {
        let value = flag || self.lookup::<bool>(key)?.unwrap_or(false);
        self.resolved.insert(key.to_string(), value.to_string());
        Ok(value)
    }
}

#[derive(Serialize)]
struct RunProvenance<'a> {
    command: &'a str,
    version: &'a str,
    config: &'a BTreeMap<String, String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    dataset_provenance: Option<&'a crate::profiles::Provenance>,
}

fn write_run_json(
    path: &Path,
    command: &str,
    cfg: &Cfg,
    dataset_provenance: Option<&crate::profiles::Provenance>,
) -> Result<()> {
    let prov = RunProvenance {
        command,
        version: env!("CARGO_PKG_VERSION"),
        config: &cfg.resolved,
        dataset_provenance,
    };
    let text = serde_json::to_string_pretty(&prov)
        .map_err(|e| Error::Numerical(format!("serializing provenance: {e}")))?;
    std::fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
}

fn parse_methods(spec: &str) -> Result<Vec<MethodSpec>> {
    let methods: Result<Vec<MethodSpec>> = spec
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(MethodSpec::parse)
        .collect();
    let methods = methods?;
    if methods.is_empty() {
        return Err(Error::invalid("methods", "empty method list"));
    }
    Ok(methods)
}

const GENERATE_KEYS: [&str; 12] = [
    "regime", "seed", "sigma-frac", "shift-frac", "n-outliers", "outlier-scale", "n-edge",
    "w-ped", "w-itb", "n-itb", "out", "config",
];

fn cmd_generate(args: GenerateArgs) -> Result<()> {
    let mut cfg = Cfg::load(args.config.as_ref(), &GENERATE_KEYS)?;
    let regime = cfg.resolve("regime", args.regime, "lmode".to_string())?;
    let regime = Regime::from_slug(&regime)?;
    let seed = cfg.resolve("seed", args.seed, 0u64)?;

    let mut profile = ProfileSpec::with_regime(regime);
    if let Some(v) = cfg.resolve_opt("n-edge", args.n_edge)? {
        profile.f_edge = v;
    }
    if let Some(v) = cfg.resolve_opt("w-ped", args.w_ped)? {
        profile.w_ped = v;
    }
    if let Some(v) = cfg.resolve_opt("w-itb", args.w_itb)? {
        profile.w_itb = v;
    }
    if let Some(v) = cfg.resolve_opt("n-itb", args.n_itb)? {
        profile.n_itb = v;
    }
    let noise = NoiseSpec {
        sigma_frac: cfg.resolve("sigma-frac", args.sigma_frac, 0.1)?,
        shift_frac: cfg.resolve("shift-frac", args.shift_frac, 0.0)?,
        n_outliers: cfg.resolve("n-outliers", args.n_outliers, 0usize)?,
        outlier_scale: cfg.resolve("outlier-scale", args.outlier_scale, 3.0)?,
        seed,
    };
    let out = cfg.resolve(
        "out",
        args.out.map(|p| p.display().to_string()),
        format!("{}_{}.csv", regime.slug(), seed),
    )?;
    let out = PathBuf::from(out);

    let data = generate_dataset(&profile, &noise, &default_grid())?;
    data.write_csv(&out)?;
    write_run_json(&out.with_extension("run.json"), "generate", &cfg, Some(&data.provenance))?;
    println!(
        "wrote {}-point {} dataset to {} (provenance: {})",
        data.len(),
        regime.slug(),
        out.display(),
        out.with_extension("run.json").display()
    );
    Ok(())
}

const FIT_KEYS: [&str; 12] = [
    "data", "method", "seed", "n-burn", "n-samples", "thin", "restarts", "max-iter", "bins",
    "fixed-noise", "out-prefix", "config",
];

fn cmd_fit(args: FitArgs) -> Result<()> {
    let mut cfg = Cfg::load(args.config.as_ref(), &FIT_KEYS)?;
    let data_path = cfg
        .resolve_opt("data", args.data.map(|p| p.display().to_string()))?
        .ok_or_else(|| Error::invalid("fit", "no dataset given (positional arg or `data` key)"))?;
    let data_path = PathBuf::from(data_path);
    let method_name = cfg
        .resolve_opt("method", args.method)?
        .ok_or_else(|| Error::invalid("fit", "no method given (--method or `method` key)"))?;
    let method = MethodSpec::parse(&method_name)?;
    let seed = cfg.resolve("seed", args.seed, 0u64)?;
    let chain_default = ChainConfig::default();
    let eb_default = EbConfig::default();
    let opts = RunOptions {
        chain: ChainConfig {
            n_burn: cfg.resolve("n-burn", args.n_burn, chain_default.n_burn)?,
            n_samples: cfg.resolve("n-samples", args.n_samples, chain_default.n_samples)?,
            thin: cfg.resolve("thin", args.thin, chain_default.thin)?,
            seed,
            ..chain_default
        },
        eb: EbConfig {
            restarts: cfg.resolve("restarts", args.restarts, eb_default.restarts)?,
            max_iter: cfg.resolve("max-iter", args.max_iter, eb_default.max_iter)?,
            seed,
            ..eb_default
        },
        grid: None,
        fixed_noise_scale: cfg.resolve_opt("fixed-noise", args.fixed_noise)?,
    };
    let bins = cfg.resolve("bins", args.bins, 20usize)?;
    let stem = data_path
        .file_stem()
        .map(|s| s.to_string_lossy().to_string())
        .unwrap_or_else(|| "fit".to_string());
    let default_prefix = match data_path.parent() {
        Some(dir) if dir != Path::new("") => {
            dir.join(format!("{stem}_{}", method.name())).display().to_string()
        }
        _ => format!("{stem}_{}", method.name()),
    };
    let prefix = cfg.resolve("out-prefix", args.out_prefix, default_prefix)?;

    let data = Dataset::read_csv(&data_path)?;
    let fit = run_method(method, &data, &opts)?;

    let json_path = PathBuf::from(format!("{prefix}.json"));
    fit.write_json(&json_path)?;
    let grid_path = PathBuf::from(format!("{prefix}_grid.csv"));
    fit.grid.write_csv(&grid_path)?;
    let mut outputs = vec![json_path.display().to_string(), grid_path.display().to_string()];
    if matches!(fit.hypers, HyperSummary::Samples { .. }) {
        let tables = extract_histograms(&fit, bins)?;
        let hist_path = PathBuf::from(format!("{prefix}_hypers.csv"));
        std::fs::write(&hist_path, histograms_to_csv(&tables))
            .map_err(|e| Error::io(hist_path.display().to_string(), e))?;
        outputs.push(hist_path.display().to_string());
    }
    write_run_json(&PathBuf::from(format!("{prefix}.run.json")), "fit", &cfg, None)?;

    for w in &fit.warnings {
        eprintln!("warning: {w}");
    }
    let rmse = fit
        .rmse
        .map(|r| format!("rmse {r:.6}"))
        .unwrap_or_else(|| "rmse n/a (no truth column)".to_string());
    println!("{}: {rmse}; wrote {}", method.name(), outputs.join(", "));
    Ok(())
}

const SWEEP_KEYS: [&str; 13] = [
    "preset", "parallelism", "methods", "seed", "n-burn", "n-samples", "thin", "restarts",
    "limit", "dry-run", "timings", "out", "config",
];

fn cmd_sweep(args: SweepArgs) -> Result<()> {
    let mut cfg = Cfg::load(args.config.as_ref(), &SWEEP_KEYS)?;
    let preset_name = cfg.resolve("preset", args.preset, "desk".to_string())?;
    let preset = SweepPreset::parse(&preset_name)?;
    let methods = parse_methods(&cfg.resolve(
        "methods",
        args.methods,
        "eb-gibbs,eb-cp,fb-cp-gauss,fb-cp-t".to_string(),
    )?)?;
    let dry_run = cfg.resolve_flag("dry-run", args.dry_run)?;

    let mut cases = preset.cases();
    if let Some(limit) = cfg.resolve_opt("limit", args.limit)? {
        cases.truncate(limit);
    }
    if dry_run {
        let count = |r: Regime| cases.iter().filter(|c| c.profile.regime == r).count();
        println!("preset {preset_name}: {} cases", cases.len());
        for regime in [Regime::Lmode, Regime::Hmode, Regime::HmodeItb] {
            println!("  {}: {}", regime.slug(), count(regime));
        }
        println!(
            "methods: {}",
            methods.iter().map(|m| m.name()).collect::<Vec<_>>().join(", ")
        );
        println!("records: {}", cases.len() * methods.len());
        return Ok(());
    }

    let defaults = SweepOptions::default();
    let seed = cfg.resolve("seed", args.seed, 0u64)?;
    let opts = SweepOptions {
        run: RunOptions {
            chain: ChainConfig {
                n_burn: cfg.resolve("n-burn", args.n_burn, defaults.run.chain.n_burn)?,
                n_samples: cfg.resolve("n-samples", args.n_samples, defaults.run.chain.n_samples)?,
                thin: cfg.resolve("thin", args.thin, defaults.run.chain.thin)?,
                seed,
                ..defaults.run.chain
            },
            eb: EbConfig {
                restarts: cfg.resolve("restarts", args.restarts, defaults.run.eb.restarts)?,
                seed,
                ..defaults.run.eb
            },
            grid: defaults.run.grid,
            fixed_noise_scale: None,
        },
        parallelism: cfg.resolve("parallelism", args.parallelism, defaults.parallelism)?,
        timings: cfg.resolve_flag("timings", args.timings)?,
    };
    let out = cfg.resolve(
        "out",
        args.out.map(|p| p.display().to_string()),
        format!("sweep_{preset_name}.csv"),
    )?;
    let out = PathBuf::from(out);

    let records = run_sweep(&cases, &methods, &out, &opts)?;
    write_run_json(&out.with_extension("run.json"), "sweep", &cfg, None)?;
    let flagged = records.iter().filter(|r| r.rmse.is_none()).count();
    println!(
        "wrote {} records to {} ({} flagged failures)",
        records.len(),
        out.display(),
        flagged
    );
    Ok(())
}

const REPORT_KEYS: [&str; 12] = [
    "db", "group", "worst", "bins", "seed", "n-burn", "n-samples", "thin", "restarts",
    "out-prefix", "methods", "config",
];

fn cmd_report(args: ReportArgs) -> Result<()> {
    let mut cfg = Cfg::load(args.config.as_ref(), &REPORT_KEYS)?;
    let db = cfg
        .resolve_opt("db", args.db.map(|p| p.display().to_string()))?
        .ok_or_else(|| Error::invalid("report", "no database given (positional arg or `db` key)"))?;
    let db = PathBuf::from(db);
    let group = cfg.resolve_opt("group", args.group)?.map(|g| g.replace('-', "_"));
    let worst = cfg.resolve_opt("worst", args.worst)?;
    let bins = cfg.resolve("bins", args.bins, 20usize)?;
    let stem = db
        .file_stem()
        .map(|s| s.to_string_lossy().to_string())
        .unwrap_or_else(|| "report".to_string());
    let default_prefix = match db.parent() {
        Some(dir) if dir != Path::new("") => dir.join(format!("{stem}_report")).display().to_string(),
        _ => format!("{stem}_report"),
    };
    let prefix = cfg.resolve("out-prefix", args.out_prefix, default_prefix)?;

    let records = read_records(&db)?;
    let rows = summarize(&records, group.as_deref())?;
    let summary_path = PathBuf::from(format!("{prefix}_summary.csv"));
    std::fs::write(&summary_path, summaries_to_csv(&rows))
        .map_err(|e| Error::io(summary_path.display().to_string(), e))?;
    let tables = rmse_histograms(&records, bins)?;
    let hist_path = PathBuf::from(format!("{prefix}_hist.csv"));
    std::fs::write(&hist_path, rmse_histograms_to_csv(&tables))
        .map_err(|e| Error::io(hist_path.display().to_string(), e))?;
    let mut outputs = vec![summary_path.display().to_string(), hist_path.display().to_string()];

    // Plain-text echo of the summary for terminal use.
    println!("{:<12} {:<12} {:>12} {:>12} {:>7}", "group", "method", "mean_rmse", "std_rmse", "count");
    for r in &rows {
        println!(
            "{:<12} {:<12} {:>12.6} {:>12.6} {:>7}",
            r.group, r.method, r.mean_rmse, r.std_rmse, r.count
        );
    }

    if let Some(k) = worst {
        let defaults = SweepOptions::default();
        let seed = cfg.resolve("seed", args.seed, 0u64)?;
        let opts = RunOptions {
            chain: ChainConfig {
                n_burn: cfg.resolve("n-burn", args.n_burn, defaults.run.chain.n_burn)?,
                n_samples: cfg.resolve("n-samples", args.n_samples, defaults.run.chain.n_samples)?,
                thin: cfg.resolve("thin", args.thin, defaults.run.chain.thin)?,
                seed,
                ..defaults.run.chain
            },
            eb: EbConfig {
                restarts: cfg.resolve("restarts", args.restarts, defaults.run.eb.restarts)?,
                seed,
                ..defaults.run.eb
            },
            grid: None,
            fixed_noise_scale: None,
        };
        let refit = parse_methods(&cfg.resolve(
            "methods",
            None::<String>,
            "eb-gibbs,eb-cp,fb-cp-gauss,fb-cp-t".to_string(),
        )?)?;
        let bundles = worst_fits(&records, k, &refit, &opts)?;
        for b in &bundles {
            let bundle_path = PathBuf::from(format!("{prefix}_worst_{}_{}.json", b.method, b.seed));
            let text = serde_json::to_string_pretty(b)
                .map_err(|e| Error::Numerical(format!("serializing worst-fit bundle: {e}")))?;
            std::fs::write(&bundle_path, text)
                .map_err(|e| Error::io(bundle_path.display().to_string(), e))?;
            outputs.push(bundle_path.display().to_string());
            for f in &b.fits {
                let grid_path = PathBuf::from(format!(
                    "{prefix}_worst_{}_{}_{}_grid.csv",
                    b.method, b.seed, f.method
                ));
                f.grid.write_csv(&grid_path)?;
                outputs.push(grid_path.display().to_string());
            }
            println!(
                "worst {}: seed {} rmse {:.6} ({} refits)",
                b.method,
                b.seed,
                b.rmse,
                b.fits.len()
            );
        }
    }
    write_run_json(&PathBuf::from(format!("{prefix}.run.json")), "report", &cfg, None)?;
    println!("wrote {}", outputs.join(", "));
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Generate(a) => cmd_generate(a),
        Cmd::Fit(a) => cmd_fit(a),
        Cmd::Sweep(a) => cmd_sweep(a),
        Cmd::Report(a) => cmd_report(a),
    }
}

/// Entry point used by the binary and by tests: parse, run, exit code.
pub fn run<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => match dispatch(cli) {
            Ok(()) => 0,
            Err(e) => {
                eprintln!("error: {e}");
                1
            }
        },
        // --help/--version land here too, with exit code 0.
        Err(e) => {
            let _ = e.print();
            e.exit_code()
        }
    }
}

pub fn run_from_args() -> i32 {
    run(std::env::args())
}
