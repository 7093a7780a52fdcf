#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod data;
mod svg;

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use consistent_core::eval::{self, AttackReport, AttackTransform, Metric, SweepSpec};
use consistent_core::ingest::IdMaps;
use consistent_core::{
    complete, sc_canonicalize, uc_canonicalize, DenseMatrix, Execution, FillPolicy, Mode, PipelineConfig,
    SvdBlackbox,
};
use serde::Serialize;
use serde_json::json;
use thiserror::Error;

use crate::data::{declared_range, DataArgs, Fingerprint, Loaded};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] consistent_core::Error),
    #[error("{0}")]
    Invalid(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) if e.is_numerical() => 3,
            _ => 2,
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "consistent", version, about = "Unit- and shift-consistent SVD matrix completion")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write the shift or scale canonical form of a rating matrix.
    Canonicalize(CanonicalizeArgs),
    /// Predict every cell of a rating matrix.
    Complete(CompleteArgs),
    /// Evaluate RMSE/MAE over a grid of modes and ranks on a held-out split.
    Sweep(SweepArgs),
    /// Measure how one user's rescaled or shifted ratings move everyone else's predictions.
    Attack(AttackArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum CanonicalMode {
    Sc,
    Uc,
}

#[derive(Debug, Args)]
struct CanonicalizeArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_enum)]
    mode: CanonicalMode,
    #[arg(long, default_value_t = consistent_core::canonical::DEFAULT_TOL)]
    tol: f64,
    #[arg(long, default_value_t = consistent_core::canonical::DEFAULT_MAX_ITER)]
    max_iter: usize,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

/// Options shared by every command that runs the completion pipeline.
#[derive(Debug, Args)]
struct PipelineArgs {
    /// Absent-cell fill for plain mode.
    #[arg(long, default_value = "item_mean", value_parser = FillPolicy::from_str)]
    fill_policy: FillPolicy,
    /// Refinement passes of the SVD completer (0 = single pass).
    #[arg(long, default_value_t = 0)]
    refine_iters: usize,
    #[arg(long, default_value_t = consistent_core::canonical::DEFAULT_TOL)]
    canonical_tol: f64,
    #[arg(long, default_value_t = consistent_core::canonical::DEFAULT_MAX_ITER)]
    canonical_max_iter: usize,
    #[arg(long, default_value_t = consistent_core::svd::DEFAULT_OVERSAMPLE)]
    oversample: usize,
    #[arg(long, default_value_t = consistent_core::svd::DEFAULT_POWER_ITERS)]
    power_iters: usize,
    /// Seeds the split and the randomized SVD.
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

impl PipelineArgs {
    fn config(&self, mode: Mode, k: usize, clamp: Option<(f64, f64)>) -> PipelineConfig {
        PipelineConfig {
            mode,
            k,
            fill_policy: Some(self.fill_policy),
            clamp,
            canonical_tol: self.canonical_tol,
            canonical_max_iter: self.canonical_max_iter,
            refine_iters: self.refine_iters,
            oversample: self.oversample,
            power_iters: self.power_iters,
            seed: self.seed,
        }
    }
}

/// `off`, `auto` (the dataset's rating range), or `MIN:MAX`.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Clamp {
    Off,
    Auto,
    Range(f64, f64),
}

impl FromStr for Clamp {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim() {
            "off" | "none" => Ok(Clamp::Off),
            "auto" => Ok(Clamp::Auto),
            other => data::parse_range(other).map(|(lo, hi)| Clamp::Range(lo, hi)),
        }
    }
}

impl Clamp {
    fn resolve(self, loaded: &Loaded) -> Option<(f64, f64)> {
        match self {
            Clamp::Off => None,
            Clamp::Auto => declared_range(loaded),
            Clamp::Range(lo, hi) => Some((lo, hi)),
        }
    }
}

#[derive(Debug, Args)]
struct CompleteArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    pipeline: PipelineArgs,
    #[arg(long, default_value = "uc", value_parser = Mode::from_str)]
    mode: Mode,
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[arg(long, default_value = "auto")]
    clamp: Clamp,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct KList(Vec<usize>);

impl FromStr for KList {
    type Err = String;

    /// `START:END:STEP` (inclusive) or a comma-separated list.
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let num = |t: &str| t.trim().parse::<usize>().map_err(|_| format!("bad rank `{t}`"));
        let ks = if s.contains(':') {
            let parts: Vec<&str> = s.split(':').collect();
            let [start, end, step] = parts[..] else {
                return Err(format!("expected START:END:STEP, got `{s}`"));
            };
            let (start, end, step) = (num(start)?, num(end)?, num(step)?);
            if step == 0 || start > end {
                return Err(format!("empty rank range `{s}`"));
            }
            (start..=end).step_by(step).collect()
        } else {
            s.split(',').map(num).collect::<std::result::Result<Vec<_>, _>>()?
        };
        if ks.is_empty() || ks.contains(&0) {
            return Err(format!("ranks must be positive, got `{s}`"));
        }
        Ok(KList(ks))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct ModeList(Vec<Mode>);

impl FromStr for ModeList {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        s.split(',')
            .map(|m| Mode::from_str(m).map_err(|e| e.to_string()))
            .collect::<std::result::Result<Vec<_>, _>>()
            .map(ModeList)
    }
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    pipeline: PipelineArgs,
    #[arg(long, default_value = "5:50:5")]
    ks: KList,
    #[arg(long, default_value = "plain,sc,uc")]
    modes: ModeList,
    /// Fraction of ratings kept for training.
    #[arg(long, default_value_t = eval::DEFAULT_SPLIT_RATIO)]
    ratio: f64,
    #[arg(long, default_value = "auto")]
    clamp: Clamp,
    /// Evaluate cells one at a time.
    #[arg(long)]
    sequential: bool,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("transform").required(true).args(["scale", "shift"])))]
struct AttackArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    pipeline: PipelineArgs,
    /// Original id of the attacking user.
    #[arg(long)]
    user: String,
    /// Multiply the user's ratings by this factor.
    #[arg(long, allow_negative_numbers = true)]
    scale: Option<f64>,
    /// Add this offset to the user's ratings.
    #[arg(long, allow_negative_numbers = true)]
    shift: Option<f64>,
    #[arg(long, default_value = "uc", value_parser = Mode::from_str)]
    mode: Mode,
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[arg(long, default_value_t = eval::DEFAULT_TOP_N)]
    top_n: usize,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Debug, Serialize)]
struct RunManifest<C: Serialize> {
    command: &'static str,
    config: C,
    seed: Option<u64>,
    dataset: Fingerprint,
    tool_version: &'static str,
}

fn manifest<C: Serialize>(command: &'static str, config: C, seed: Option<u64>, loaded: &Loaded) -> RunManifest<C> {
    RunManifest {
        command,
        config,
        seed,
        dataset: loaded.fingerprint.clone(),
        tool_version: env!("CARGO_PKG_VERSION"),
    }
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|source| CliError::Io {
        path: path.to_owned(),
        source,
    })
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_file(path, text)
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|source| CliError::Io {
        path: dir.to_owned(),
        source,
    })
}

/// Header row of item ids, then one row per user led by the user id.
fn dense_csv(m: &DenseMatrix, ids: &IdMaps) -> String {
    let mut out = String::from("user");
    for item in &ids.item_ids {
        out.push(',');
        out.push_str(item);
    }
    out.push('\n');
    for (i, user) in ids.user_ids.iter().enumerate() {
        out.push_str(user);
        for j in 0..m.n_cols() {
            let _ = write!(out, ",{}", m.get(i, j));
        }
        out.push('\n');
    }
    out
}

fn vectors_csv(column: &str, ids: &IdMaps, rows: &[f64], cols: &[f64]) -> String {
    let mut out = format!("axis,id,{column}\n");
    for (id, x) in ids.user_ids.iter().zip(rows) {
        let _ = writeln!(out, "user,{id},{x}");
    }
    for (id, x) in ids.item_ids.iter().zip(cols) {
        let _ = writeln!(out, "item,{id},{x}");
    }
    out
}

/// Reports a non-positive rating by its original ids.
fn name_cell(err: consistent_core::Error, ids: &IdMaps) -> CliError {
    match err {
        consistent_core::Error::NonPositiveEntry { row, col, value } => CliError::Invalid(format!(
            "rating {value} for user `{}`, item `{}` is not strictly positive; uc mode needs positive ratings",
            ids.user_ids[row], ids.item_ids[col]
        )),
        other => CliError::Core(other),
    }
}

fn cmd_canonicalize(args: CanonicalizeArgs) -> Result<()> {
    let loaded = args.data.load()?;
    let m = &loaded.matrix;
    create_dir(&args.out_dir)?;
    let (mode, canonical, vectors, file, iterations, residual) = match args.mode {
        CanonicalMode::Sc => {
            let r = sc_canonicalize(m, args.tol, args.max_iter)?;
            let v = vectors_csv("offset", &loaded.ids, &r.transform.u, &r.transform.v);
            ("sc", r.canonical, v, "shifts.csv", r.iterations, r.residual)
        }
        CanonicalMode::Uc => {
            let r = uc_canonicalize(m, args.tol, args.max_iter).map_err(|e| name_cell(e, &loaded.ids))?;
            let v = vectors_csv("scale", &loaded.ids, &r.transform.d, &r.transform.e);
            ("uc", r.canonical, v, "scales.csv", r.iterations, r.residual)
        }
    };
    write_file(&args.out_dir.join("canonical.csv"), dense_csv(&canonical, &loaded.ids))?;
    write_file(&args.out_dir.join(file), vectors)?;
    write_json(
        &args.out_dir.join("diagnostics.json"),
        &json!({ "mode": mode, "iterations": iterations, "residual": residual }),
    )?;
    let config = json!({ "mode": mode, "tol": args.tol, "max_iter": args.max_iter });
    write_json(&args.out_dir.join("manifest.json"), &manifest("canonicalize", config, None, &loaded))?;
    println!("{mode} canonical form: {iterations} sweeps, residual {residual:e}");
    Ok(())
}

fn cmd_complete(args: CompleteArgs) -> Result<()> {
    let loaded = args.data.load()?;
    let cfg = args.pipeline.config(args.mode, args.k, args.clamp.resolve(&loaded));
    let pred = complete(&loaded.matrix, &cfg, &SvdBlackbox::from_config(&cfg)).map_err(|e| name_cell(e, &loaded.ids))?;
    create_dir(&args.out_dir)?;
    write_file(&args.out_dir.join("predictions.csv"), dense_csv(&pred.full, &loaded.ids))?;
    write_json(
        &args.out_dir.join("diagnostics.json"),
        &json!({ "mode": cfg.mode, "k": cfg.k, "canonical": pred.diagnostics }),
    )?;
    write_json(&args.out_dir.join("manifest.json"), &manifest("complete", &cfg, Some(cfg.seed), &loaded))?;
    println!(
        "{} predictions for {} users x {} items written to {}",
        cfg.mode,
        pred.full.n_rows(),
        pred.full.n_cols(),
        args.out_dir.display()
    );
    Ok(())
}

fn cmd_sweep(args: SweepArgs) -> Result<()> {
    if !(args.ratio > 0.0 && args.ratio < 1.0) {
        return Err(CliError::Invalid(format!("--ratio must be in (0, 1), got {}", args.ratio)));
    }
    let loaded = args.data.load()?;
    let clamp = args.clamp.resolve(&loaded);
    let template = args.pipeline.config(Mode::Plain, 1, clamp);
    let mut spec = SweepSpec::new(args.ks.0.clone(), args.modes.0.clone(), template);
    spec.ratio = args.ratio;
    spec.execution = if args.sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    };
    let report = eval::sweep(&loaded.matrix, &spec, &SvdBlackbox::from_config(&spec.template))
        .map_err(|e| name_cell(e, &loaded.ids))?;

    create_dir(&args.out_dir)?;
    write_file(&args.out_dir.join("sweep.csv"), report.to_csv())?;
    write_file(&args.out_dir.join("rmse.svg"), svg::metric_chart(&report, Metric::Rmse))?;
    write_file(&args.out_dir.join("mae.svg"), svg::metric_chart(&report, Metric::Mae))?;
    let t = &spec.template;
    let config = json!({
        "ks": args.ks.0,
        "modes": args.modes.0,
        "ratio": args.ratio,
        "clamp": t.clamp,
        "fill_policy": t.fill_policy,
        "refine_iters": t.refine_iters,
        "canonical_tol": t.canonical_tol,
        "canonical_max_iter": t.canonical_max_iter,
        "oversample": t.oversample,
        "power_iters": t.power_iters,
    });
    write_json(&args.out_dir.join("manifest.json"), &manifest("sweep", config, Some(t.seed), &loaded))?;

    println!("{:<6} {:>7} {:>8} {:>7} {:>8}", "mode", "rmse k", "rmse", "mae k", "mae");
    for mode in Mode::ALL {
        if let (Some(r), Some(a)) = (report.argmin(mode, Metric::Rmse), report.argmin(mode, Metric::Mae)) {
            println!("{:<6} {:>7} {:>8.4} {:>7} {:>8.4}", mode.as_str(), r.k, r.value, a.k, a.value);
        }
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct AttackOutput<'a> {
    user: &'a str,
    #[serde(flatten)]
    report: &'a AttackReport,
}

fn cmd_attack(args: AttackArgs) -> Result<()> {
    let transform = match (args.scale, args.shift) {
        (Some(a), None) => AttackTransform::Scale(a),
        (None, Some(d)) => AttackTransform::Shift(d),
        _ => return Err(CliError::Invalid("pass exactly one of --scale and --shift".into())),
    };
    let loaded = args.data.load()?;
    let user = loaded
        .ids
        .user_index(&args.user)
        .ok_or_else(|| CliError::Invalid(format!("unknown user `{}`", args.user)))?;
    let cfg = args.pipeline.config(args.mode, args.k, None);
    let report = eval::attack(
        &loaded.matrix,
        user,
        transform,
        &cfg,
        &SvdBlackbox::from_config(&cfg),
        args.top_n,
    )
    .map_err(|e| name_cell(e, &loaded.ids))?;

    create_dir(&args.out_dir)?;
    write_json(
        &args.out_dir.join("attack.json"),
        &AttackOutput {
            user: &args.user,
            report: &report,
        },
    )?;
    let config = json!({ "pipeline": &cfg, "transform": transform, "top_n": args.top_n });
    write_json(&args.out_dir.join("manifest.json"), &manifest("attack", config, Some(cfg.seed), &loaded))?;

    let transform_text = match transform {
        AttackTransform::Scale(a) => format!("scale x{a}"),
        AttackTransform::Shift(d) => format!("shift {d:+}"),
    };
    println!("{:<28} {}", "attacked user", args.user);
    println!("{:<28} {}", "transform", transform_text);
    println!("{:<28} {} (k={})", "mode", report.mode, report.k);
    println!("{:<28} {:.3e}", "max |delta| other users", report.max_abs_delta_others);
    println!("{:<28} {:.3e}", "max |delta| attacked user", report.max_abs_delta_attacked);
    println!(
        "{:<28} {} of {}",
        format!("top-{} lists changed", report.top_n),
        report.topn_changes,
        loaded.matrix.n_rows() - 1
    );
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Canonicalize(a) => cmd_canonicalize(a),
        Command::Complete(a) => cmd_complete(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Attack(a) => cmd_attack(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
