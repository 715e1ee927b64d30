//! Command-line front end.
//!
//! Every subcommand reads an optional flat `key = value` file (`--config`),
//! applies command-line flags on top, rejects unknown keys, and writes the
//! resolved settings next to its outputs so the run can be repeated exactly.
//!
//! Exit codes: 0 success, 1 I/O or parse failure, 2 configuration error,
//! 3 training divergence, 4 calibration impossible.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::arbitrage::{penalty_metric, scaled_rows_report, ArbitrageReport, OraclePricer};
use crate::calibrator::{calibrate, relabel_with_direct, QuoteSet, WeightSource};
use crate::dataset::{
    apply_scaling, format_float, generate, load_csv, save_csv, scale_direct, scale_inverse, split,
    Bounds, SamplingRanges, ScaledRow, Scaling,
};
use crate::error::{Error, Result};
use crate::net::{batch_matrix, load_model, save_model, Network};
use crate::trainer::{
    evaluate, penalty_sweep, sweep_table, train, write_metrics_csv, write_timing_csv, ClipPolicy,
    Metrics, OptimizerKind, PenaltyConfig, PlateauConfig, SweepConfig, TrainConfig, TrainReport,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DIVERGENCE: i32 = 3;
pub const EXIT_DEGENERATE: i32 = 4;

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::Domain(_) | Error::Shape { .. } => EXIT_CONFIG,
        Error::Divergence { .. } => EXIT_DIVERGENCE,
        Error::Degenerate(_) => EXIT_DEGENERATE,
        Error::Io(_) | Error::Csv(_) | Error::Parse { .. } | Error::ModelLoad { .. } | Error::NoSolution(_) => {
            EXIT_IO
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "annpricer", version, about = "Neural-network option pricer and calibrator")]
struct Cli {
    /// Log progress (repeat for more detail).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample inputs, price them and write a filtered CSV dataset.
    Generate(GenerateArgs),
    /// Train a direct pricer (optionally penalised) or an inverse map.
    Train(TrainArgs),
    /// Arbitrage counts, scatter data and error histograms for a model.
    Report(ReportArgs),
    /// Calibrate σ to a quote file with the inverse map.
    Calibrate(CalibrateArgs),
    /// Run the penalty sweep and print a table of violations and errors.
    #[command(name = "reproduce-table1")]
    ReproduceTable1(Table1Args),
}

#[derive(Debug, Args)]
struct GenerateArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    n: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    out: Option<String>,
    /// Sampling range override, e.g. `--range sigma=0.1:0.5` (repeatable).
    #[arg(long = "range", value_name = "NAME=LO:HI")]
    ranges: Vec<String>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    data: Option<String>,
    #[arg(long)]
    out: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    epochs: Option<String>,
    #[arg(long)]
    batch: Option<String>,
    #[arg(long)]
    lr: Option<String>,
    /// adam or rmsprop.
    #[arg(long)]
    optimizer: Option<String>,
    /// Penalty scales, one value or `a,b,c` (butterfly, calendar, vertical).
    #[arg(long)]
    lambda: Option<String>,
    /// Penalty exponents, one value or `a,b,c`.
    #[arg(long)]
    m: Option<String>,
    /// Train the inverse map instead of the direct pricer.
    #[arg(long)]
    inverse: bool,
    /// off, dynamic, or a fixed threshold.
    #[arg(long)]
    clip: Option<String>,
    #[arg(long = "no-clip")]
    no_clip: bool,
    /// on or off.
    #[arg(long)]
    plateau: Option<String>,
    #[arg(long)]
    split: Option<String>,
    #[arg(long = "eps-atm")]
    eps_atm: Option<String>,
    /// Hidden widths, e.g. `128,128,128`.
    #[arg(long)]
    hidden: Option<String>,
    /// Direct model whose prices feed the inverse map.
    #[arg(long = "direct-model")]
    direct_model: Option<String>,
    /// Prices for inverse training: `direct` (surrogate) or `model` (dataset).
    #[arg(long = "price-source")]
    price_source: Option<String>,
    /// Start from the weights of an existing model.
    #[arg(long = "init-model")]
    init_model: Option<String>,
}

#[derive(Debug, Args)]
struct ReportArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    data: Option<String>,
    #[arg(long)]
    model: Option<String>,
    /// Audit the closed-form pricer instead of a model.
    #[arg(long)]
    oracle: bool,
    /// Output directory.
    #[arg(long)]
    out: Option<String>,
    #[arg(long)]
    split: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    slack: Option<String>,
    #[arg(long)]
    bins: Option<String>,
}

#[derive(Debug, Args)]
struct CalibrateArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    quotes: Option<String>,
    #[arg(long = "inverse-model")]
    inverse_model: Option<String>,
    #[arg(long = "direct-model")]
    direct_model: Option<String>,
    /// direct (network ∂C/∂σ), vega (closed form) or uniform.
    #[arg(long)]
    weights: Option<String>,
    #[arg(long)]
    out: Option<String>,
}

#[derive(Debug, Args)]
struct Table1Args {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    data: Option<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    epochs: Option<String>,
    #[arg(long)]
    batch: Option<String>,
    #[arg(long)]
    lr: Option<String>,
    #[arg(long)]
    lambdas: Option<String>,
    #[arg(long)]
    m: Option<String>,
    #[arg(long)]
    split: Option<String>,
    #[arg(long)]
    hidden: Option<String>,
    /// Initialise penalised runs from the unconstrained model (true/false).
    #[arg(long = "warm-start")]
    warm_start: Option<String>,
    /// Learning rate of the warm-started penalised runs.
    #[arg(long = "warm-lr")]
    warm_lr: Option<String>,
}

/// Resolved `key = value` settings of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

impl RunConfig {
    /// Defaults, then the config file, then command-line overrides.
    fn resolve(
        defaults: Vec<(&str, String)>,
        file: Option<&Path>,
        overrides: Vec<(&str, Option<String>)>,
    ) -> Result<Self> {
        let mut values: BTreeMap<String, String> =
            defaults.into_iter().map(|(k, v)| (k.to_string(), v)).collect();
        if let Some(path) = file {
            let text = fs::read_to_string(path)?;
            for (key, value) in parse_config(&text)? {
                if !values.contains_key(&key) {
                    return Err(Error::Config(format!(
                        "unknown key '{key}' in {}",
                        path.display()
                    )));
                }
                values.insert(key, value);
            }
        }
        for (key, value) in overrides {
            if let Some(v) = value {
                debug_assert!(values.contains_key(key), "flag {key} lacks a default");
                values.insert(key.to_string(), v);
            }
        }
        Ok(Self { values })
    }

    fn raw(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or("")
    }

    fn required(&self, key: &str) -> Result<&str> {
        match self.raw(key) {
            "" => Err(Error::Config(format!("missing required setting '{key}'"))),
            v => Ok(v),
        }
    }

    fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let v = self.required(key)?;
        v.parse()
            .map_err(|_| Error::Config(format!("invalid value '{v}' for '{key}'")))
    }

    fn flag(&self, key: &str) -> Result<bool> {
        match self.raw(key) {
            "true" | "on" | "yes" | "1" => Ok(true),
            "false" | "off" | "no" | "0" | "" => Ok(false),
            v => Err(Error::Config(format!("invalid boolean '{v}' for '{key}'"))),
        }
    }

    fn list<T: std::str::FromStr>(&self, key: &str) -> Result<Vec<T>> {
        self.required(key)?
            .split(',')
            .map(|p| {
                p.trim()
                    .parse()
                    .map_err(|_| Error::Config(format!("invalid list entry '{p}' for '{key}'")))
            })
            .collect()
    }

    fn triple<T: std::str::FromStr + Copy>(&self, key: &str) -> Result<[T; 3]> {
        match self.list::<T>(key)?[..] {
            [v] => Ok([v; 3]),
            [a, b, c] => Ok([a, b, c]),
            _ => Err(Error::Config(format!("'{key}' needs one or three values"))),
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.values {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text())?;
        Ok(())
    }
}

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_config(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            Error::Config(format!("config line {}: expected 'key = value'", i + 1))
        })?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(fs::File::create(path)?))
}

/// Runs the command line in `args` (program name first) and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .try_init();
    let result = match cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Train(a) => cmd_train(a),
        Command::Report(a) => cmd_report(a),
        Command::Calibrate(a) => cmd_calibrate(a),
        Command::ReproduceTable1(a) => cmd_table1(a),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            if matches!(e, Error::Divergence { .. }) {
                eprintln!("hint: check the clip policy (--clip dynamic) and the learning rate");
            }
            exit_code(&e)
        }
    }
}

fn range_text(b: Bounds) -> String {
    format!("{}:{}", b.lower, b.upper)
}

fn parse_range(name: &str, text: &str) -> Result<Bounds> {
    let (lo, hi) = text
        .split_once(':')
        .ok_or_else(|| Error::Config(format!("range for {name} must look like LO:HI, got '{text}'")))?;
    let p = |v: &str| {
        v.trim()
            .parse::<f64>()
            .map_err(|_| Error::Config(format!("invalid bound '{v}' for {name}")))
    };
    Ok(Bounds::new(p(lo)?, p(hi)?))
}

fn cmd_generate(a: GenerateArgs) -> Result<()> {
    let d = SamplingRanges::default();
    let mut defaults = vec![
        ("n", "300000".to_string()),
        ("seed", "42".to_string()),
        ("out", "data.csv".to_string()),
    ];
    let names = ["S", "K", "T", "r", "q", "sigma"];
    for (name, b) in d.fields() {
        defaults.push((name, range_text(b)));
    }
    let mut overrides = vec![("n", a.n), ("seed", a.seed), ("out", a.out)];
    for r in &a.ranges {
        let (name, value) = r
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--range expects NAME=LO:HI, got '{r}'")))?;
        let key = names
            .iter()
            .find(|n| **n == name.trim())
            .ok_or_else(|| Error::Config(format!("unknown range '{name}'")))?;
        overrides.push((key, Some(value.to_string())));
    }
    let cfg = RunConfig::resolve(defaults, a.config.as_deref(), overrides)?;

    let n: usize = cfg.parse("n")?;
    let seed: u64 = cfg.parse("seed")?;
    let out = PathBuf::from(cfg.required("out")?);
    let b = |k: &str| parse_range(k, cfg.raw(k));
    let ranges = SamplingRanges {
        spot: b("S")?,
        strike: b("K")?,
        maturity: b("T")?,
        rate: b("r")?,
        dividend: b("q")?,
        vol: b("sigma")?,
    };
    let ds = generate(n, &ranges, seed)?;
    save_csv(&ds, &out)?;

    let stats = ds.provenance.as_ref().map(|p| p.stats).unwrap_or_default();
    let mut meta = format!("seed = {seed}\n");
    for (name, bounds) in ranges.fields() {
        let _ = writeln!(meta, "range.{name} = {}", range_text(bounds));
    }
    let _ = write!(
        meta,
        "requested = {}\nkept = {}\nbelow_floor = {}\nabove_cap = {}\n",
        stats.requested, stats.kept, stats.below_floor, stats.above_cap
    );
    fs::write(sidecar(&out, ".meta"), meta)?;
    cfg.write(&sidecar(&out, ".config"))?;
    println!(
        "kept {} of {} samples ({} below floor, {} above cap) -> {}",
        stats.kept,
        stats.requested,
        stats.below_floor,
        stats.above_cap,
        out.display()
    );
    Ok(())
}

fn parse_hidden(cfg: &RunConfig) -> Result<Vec<usize>> {
    let hidden: Vec<usize> = cfg.list("hidden")?;
    if hidden.is_empty() || hidden.contains(&0) {
        return Err(Error::Config("hidden widths must be positive".into()));
    }
    Ok(hidden)
}

fn optimizer(name: &str) -> Result<OptimizerKind> {
    match name {
        "adam" => Ok(OptimizerKind::adam()),
        "rmsprop" => Ok(OptimizerKind::rmsprop()),
        other => Err(Error::Config(format!("unknown optimizer '{other}'"))),
    }
}

fn clip_policy(text: &str) -> Result<ClipPolicy> {
    match text {
        "off" => Ok(ClipPolicy::Off),
        "dynamic" => Ok(ClipPolicy::Dynamic),
        v => v
            .parse::<f64>()
            .map(ClipPolicy::Fixed)
            .map_err(|_| Error::Config(format!("clip must be off, dynamic or a number, got '{v}'"))),
    }
}

fn metrics_line(label: &str, m: &Metrics) -> String {
    let p = m
        .penalty_value
        .map(|p| format!("{p}"))
        .unwrap_or_else(|| "-".into());
    format!(
        "{label:<14} samples {:>7}  mse_bps {:>12.6}  mean_pct_error {:>10.5}  P10 {p}\n",
        m.samples, m.mse_bps, m.mean_pct_error
    )
}

fn report_block(kind: &str, model: &Path, report: &TrainReport) -> String {
    let mut s = format!("model {} ({kind}), {} epochs\n", model.display(), report.history.len());
    s.push_str(&metrics_line("in-sample", &report.train));
    if let Some(t) = &report.test {
        s.push_str(&metrics_line("out-of-sample", t));
    }
    s
}

fn train_defaults() -> Vec<(&'static str, String)> {
    [
        ("data", ""),
        ("out", "model.txt"),
        ("seed", "42"),
        ("epochs", ""),
        ("batch", "64"),
        ("lr", "0.001"),
        ("optimizer", "adam"),
        ("lambda", "0"),
        ("m", "4"),
        ("inverse", "false"),
        ("clip", ""),
        ("plateau", ""),
        ("plateau_factor", "0.5"),
        ("plateau_patience", "2"),
        ("plateau_min_lr", "1e-6"),
        ("split", "0.8"),
        ("eps_atm", "0.001"),
        ("hidden", "128,128,128"),
        ("direct_model", ""),
        ("price_source", "direct"),
        ("init_model", ""),
    ]
    .into_iter()
    .map(|(k, v)| (k, v.to_string()))
    .collect()
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let clip = if a.no_clip { Some("off".to_string()) } else { a.clip };
    let overrides = vec![
        ("data", a.data),
        ("out", a.out),
        ("seed", a.seed),
        ("epochs", a.epochs),
        ("batch", a.batch),
        ("lr", a.lr),
        ("optimizer", a.optimizer),
        ("lambda", a.lambda),
        ("m", a.m),
        ("inverse", a.inverse.then(|| "true".to_string())),
        ("clip", clip),
        ("plateau", a.plateau),
        ("split", a.split),
        ("eps_atm", a.eps_atm),
        ("hidden", a.hidden),
        ("direct_model", a.direct_model),
        ("price_source", a.price_source),
        ("init_model", a.init_model),
    ];
    let mut cfg = RunConfig::resolve(train_defaults(), a.config.as_deref(), overrides)?;
    let inverse = cfg.flag("inverse")?;
    // Mode-dependent defaults are filled in so the sidecar shows what ran.
    let auto = |v: &mut BTreeMap<String, String>, k: &str, direct: &str, inv: &str| {
        if v[k].is_empty() {
            v.insert(k.to_string(), if inverse { inv } else { direct }.to_string());
        }
    };
    auto(&mut cfg.values, "epochs", "15", "30");
    auto(&mut cfg.values, "clip", "off", "dynamic");
    auto(&mut cfg.values, "plateau", "off", "on");

    let seed: u64 = cfg.parse("seed")?;
    let tcfg = TrainConfig {
        optimizer: optimizer(cfg.required("optimizer")?)?,
        epochs: cfg.parse("epochs")?,
        batch_size: cfg.parse("batch")?,
        learning_rate: cfg.parse("lr")?,
        clip: clip_policy(cfg.required("clip")?)?,
        plateau: if cfg.flag("plateau")? {
            Some(PlateauConfig {
                factor: cfg.parse("plateau_factor")?,
                patience: cfg.parse("plateau_patience")?,
                min_lr: cfg.parse("plateau_min_lr")?,
                ..PlateauConfig::default()
            })
        } else {
            None
        },
        seed,
    };
    tcfg.validate()?;
    let pcfg = PenaltyConfig {
        lambda: cfg.triple("lambda")?,
        power: cfg.triple("m")?,
    };
    pcfg.validate_for_training()?;
    if inverse && pcfg.is_active() {
        return Err(Error::Config("penalties apply to the direct pricer only".into()));
    }
    let fraction: f64 = cfg.parse("split")?;
    let eps_atm: f64 = cfg.parse("eps_atm")?;
    let hidden = parse_hidden(&cfg)?;
    let out = PathBuf::from(cfg.required("out")?);
    let price_source = cfg.required("price_source")?.to_string();
    if !matches!(price_source.as_str(), "direct" | "model") {
        return Err(Error::Config(format!(
            "price_source must be 'direct' or 'model', got '{price_source}'"
        )));
    }
    let direct_path = cfg.raw("direct_model").to_string();
    if inverse && price_source == "direct" && direct_path.is_empty() {
        return Err(Error::Config(
            "inverse training on surrogate prices needs --direct-model (or --price-source model)".into(),
        ));
    }
    let init_path = cfg.raw("init_model").to_string();

    let ds = split(load_csv(cfg.required("data")?)?, fraction, seed)?;
    let mut net = if init_path.is_empty() {
        Network::standard_with_hidden(&hidden, seed)?
    } else {
        load_model(&init_path)?
    };
    let (data, kind) = if inverse {
        let ds = if price_source == "direct" {
            relabel_with_direct(&ds, &load_model(&direct_path)?)?
        } else {
            ds
        };
        (scale_inverse(&ds, eps_atm)?, "inverse")
    } else {
        (scale_direct(&ds)?, "direct")
    };
    cfg.write(&sidecar(&out, ".config"))?;

    let report = train(&mut net, &data, &tcfg, Some(&pcfg))?;
    save_model(&net, &out)?;
    write_metrics_csv(&report.history, create(&sidecar(&out, ".metrics.csv"))?)?;
    write_timing_csv(&report.history, create(&sidecar(&out, ".timing.csv"))?)?;
    let block = report_block(kind, &out, &report);
    fs::write(sidecar(&out, ".summary.txt"), &block)?;
    print!("{block}");
    Ok(())
}

fn report_defaults() -> Vec<(&'static str, String)> {
    [
        ("data", ""),
        ("model", ""),
        ("oracle", "false"),
        ("out", "report"),
        ("split", "0.8"),
        ("seed", "42"),
        ("slack", "0"),
        ("bins", "50"),
    ]
    .into_iter()
    .map(|(k, v)| (k, v.to_string()))
    .collect()
}

fn write_report_csv(report: &ArbitrageReport, path: &Path) -> Result<()> {
    report.write_csv(create(path)?)
}

/// `(y, ŷ)` pairs for the scatter file.
fn predictions(net: &Network, rows: &[ScaledRow]) -> Result<Vec<(f64, f64)>> {
    let pred = net.forward_batch(batch_matrix(rows.iter().map(|r| r.features)).view())?;
    Ok(rows.iter().map(|r| r.target).zip(pred).collect())
}

/// Equal-width histogram of `values`: `(lower, upper, count, density)`.
pub fn histogram(values: &[f64], bins: usize) -> Vec<(f64, f64, usize, f64)> {
    if values.is_empty() || bins == 0 {
        return Vec::new();
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
    let mut counts = vec![0usize; bins];
    for v in values {
        let k = (((v - lo) / width) as usize).min(bins - 1);
        counts[k] += 1;
    }
    let n = values.len() as f64;
    counts
        .into_iter()
        .enumerate()
        .map(|(k, c)| {
            let a = lo + k as f64 * width;
            (a, a + width, c, c as f64 / (n * width))
        })
        .collect()
}

fn cmd_report(a: ReportArgs) -> Result<()> {
    let overrides = vec![
        ("data", a.data),
        ("model", a.model),
        ("oracle", a.oracle.then(|| "true".to_string())),
        ("out", a.out),
        ("split", a.split),
        ("seed", a.seed),
        ("slack", a.slack),
        ("bins", a.bins),
    ];
    let cfg = RunConfig::resolve(report_defaults(), a.config.as_deref(), overrides)?;
    let oracle = cfg.flag("oracle")?;
    let fraction: f64 = cfg.parse("split")?;
    let seed: u64 = cfg.parse("seed")?;
    let slack: f64 = cfg.parse("slack")?;
    let bins: usize = cfg.parse("bins")?;
    let out = PathBuf::from(cfg.required("out")?);
    let ds = split(load_csv(cfg.required("data")?)?, fraction, seed)?;
    fs::create_dir_all(&out)?;
    cfg.write(&out.join("report.config"))?;
    let counting = PenaltyConfig::counting();
    let mut summary = String::new();

    if oracle {
        let rep = penalty_metric(&OraclePricer, &ds.samples, &counting, slack)?;
        write_report_csv(&rep, &out.join("arbitrage.csv"))?;
        summary.push_str("closed-form pricer, all samples\n");
        summary.push_str(&rep.summary());
    } else {
        let net = load_model(cfg.required("model")?)?;
        let scaling = net.scaling.ok_or_else(|| {
            Error::Config("model file carries no scaling metadata".into())
        })?;
        let data = apply_scaling(&ds, scaling);
        let train_rows = data.train_rows();
        let test_rows = data.test_rows();
        if let Scaling::Direct { shift } = scaling {
            for (name, rows) in [("train", &train_rows), ("test", &test_rows)] {
                if rows.is_empty() {
                    continue;
                }
                let rep = scaled_rows_report(&net, rows, shift, &counting, slack)?;
                write_report_csv(&rep, &out.join(format!("arbitrage_{name}.csv")))?;
                let _ = writeln!(summary, "{name} split");
                summary.push_str(&rep.summary());
            }
        }
        for (name, rows) in [("in-sample", &train_rows), ("out-of-sample", &test_rows)] {
            if !rows.is_empty() {
                summary.push_str(&metrics_line(name, &evaluate(&net, rows, scaling)?));
            }
        }
        let eval_rows = if test_rows.is_empty() { &train_rows } else { &test_rows };
        let pairs = predictions(&net, eval_rows)?;
        let mut w = create(&out.join("scatter.csv"))?;
        writeln!(w, "y_true,y_pred")?;
        for (y, p) in &pairs {
            writeln!(w, "{},{}", format_float(*y), format_float(*p))?;
        }
        w.flush()?;
        let errors: Vec<f64> = pairs.iter().map(|(y, p)| y - p).collect();
        let mut w = create(&out.join("error_hist.csv"))?;
        writeln!(w, "lower,upper,count,density")?;
        for (lo, hi, c, d) in histogram(&errors, bins) {
            writeln!(w, "{},{},{c},{}", format_float(lo), format_float(hi), format_float(d))?;
        }
        w.flush()?;
    }
    fs::write(out.join("summary.txt"), &summary)?;
    print!("{summary}");
    Ok(())
}

fn cmd_calibrate(a: CalibrateArgs) -> Result<()> {
    let defaults = [
        ("quotes", ""),
        ("inverse_model", ""),
        ("direct_model", ""),
        ("weights", "direct"),
        ("out", "calibration.csv"),
    ]
    .into_iter()
    .map(|(k, v)| (k, v.to_string()))
    .collect();
    let overrides = vec![
        ("quotes", a.quotes),
        ("inverse_model", a.inverse_model),
        ("direct_model", a.direct_model),
        ("weights", a.weights),
        ("out", a.out),
    ];
    let cfg = RunConfig::resolve(defaults, a.config.as_deref(), overrides)?;
    let out = PathBuf::from(cfg.required("out")?);
    let quotes = QuoteSet::load_csv(cfg.required("quotes")?)?;
    let inverse = load_model(cfg.required("inverse_model")?)?;
    let direct;
    let weights = match cfg.required("weights")? {
        "direct" => {
            direct = load_model(cfg.required("direct_model")?)?;
            WeightSource::Direct(&direct)
        }
        "vega" => WeightSource::OracleVega,
        "uniform" => WeightSource::Uniform,
        other => {
            return Err(Error::Config(format!(
                "weights must be direct, vega or uniform, got '{other}'"
            )))
        }
    };
    cfg.write(&sidecar(&out, ".config"))?;
    let result = calibrate(&inverse, weights, &quotes)?;
    result.write_csv(create(&out)?)?;
    let summary = result.summary();
    fs::write(sidecar(&out, ".summary.txt"), &summary)?;
    print!("{summary}");
    if result.warnings() > 0 {
        eprintln!("warning: {} quotes were clamped or excluded", result.warnings());
    }
    Ok(())
}

fn cmd_table1(a: Table1Args) -> Result<()> {
    let defaults = [
        ("data", ""),
        ("out", "table1"),
        ("seed", "42"),
        ("epochs", "30"),
        ("batch", "64"),
        ("lr", "0.001"),
        ("lambdas", "0,1,10,50,100"),
        ("m", "4"),
        ("split", "0.8"),
        ("hidden", "128,128,128"),
        ("warm_start", "true"),
        ("warm_lr", "0.0001"),
    ]
    .into_iter()
    .map(|(k, v)| (k, v.to_string()))
    .collect();
    let overrides = vec![
        ("data", a.data),
        ("out", a.out),
        ("seed", a.seed),
        ("epochs", a.epochs),
        ("batch", a.batch),
        ("lr", a.lr),
        ("lambdas", a.lambdas),
        ("m", a.m),
        ("split", a.split),
        ("hidden", a.hidden),
        ("warm_start", a.warm_start),
        ("warm_lr", a.warm_lr),
    ];
    let cfg = RunConfig::resolve(defaults, a.config.as_deref(), overrides)?;
    let seed: u64 = cfg.parse("seed")?;
    let sweep = SweepConfig {
        lambdas: cfg.list("lambdas")?,
        power: cfg.parse("m")?,
        hidden: parse_hidden(&cfg)?,
        train: TrainConfig {
            epochs: cfg.parse("epochs")?,
            batch_size: cfg.parse("batch")?,
            learning_rate: cfg.parse("lr")?,
            seed,
            ..TrainConfig::default()
        },
        warm_start: cfg.flag("warm_start")?,
        warm_learning_rate: cfg.parse("warm_lr")?,
    };
    sweep.validate()?;
    let fraction: f64 = cfg.parse("split")?;
    let out = PathBuf::from(cfg.required("out")?);
    let ds = split(load_csv(cfg.required("data")?)?, fraction, seed)?;
    let data = scale_direct(&ds)?;
    fs::create_dir_all(&out)?;
    cfg.write(&out.join("table1.config"))?;

    let points = penalty_sweep(&data, &sweep)?;
    for p in &points {
        let stem = out.join(format!("lambda_{}", p.row.lambda));
        save_model(&p.net, sidecar(&stem, ".model"))?;
        write_metrics_csv(&p.report.history, create(&sidecar(&stem, ".metrics.csv"))?)?;
    }
    let rows: Vec<_> = points.iter().map(|p| p.row).collect();
    let mut w = create(&out.join("table1.csv"))?;
    writeln!(w, "lambda,m,p10_in_sample,p10_out_of_sample,mse_bps_in_sample,mse_bps_out_of_sample")?;
    for r in &rows {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            r.lambda,
            r.power,
            r.in_sample_p10,
            r.out_sample_p10,
            format_float(r.in_sample_mse_bps),
            format_float(r.out_sample_mse_bps)
        )?;
    }
    w.flush()?;
    print!("{}", sweep_table(&rows));
    Ok(())
}
