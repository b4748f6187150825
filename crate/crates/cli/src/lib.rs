//! Command implementations for the `accrue-calib` binary.
//!
//! Data artifacts go to files (or stdout when `--out` is omitted); progress
//! and reports go to the log writer, which is stderr in the binary.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use accrue_core::io as fmt_io;
use accrue_core::neural::TrainingConfig;
use accrue_core::pipeline::{
    self, AutoOutcome, CalibrationModel, DataSource, MetricsReport, ProtocolConfig,
    ProtocolOutcome,
};
use accrue_core::synthetic::{self, Scenario};
use accrue_core::{BetaWeight, Dataset, DistributionFamily};
use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "accrue-calib", version, about = "Calibrate measurement-error distributions with the ACCRUE loss")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic scenario dataset as CSV.
    Generate(GenerateArgs),
    /// Run the beta search and ensemble and save the median member.
    Calibrate(CalibrateArgs),
    /// Predict median and 50%/95% intervals for every row of a CSV file.
    Predict(PredictArgs),
    /// Score a saved model on a CSV file.
    Evaluate(EvaluateArgs),
    /// Export predicted (and optionally true) interval curves over x in [lo, hi].
    Curves(CurvesArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub scenario: Scenario,
    #[arg(long, default_value_t = 10_000)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output CSV; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FamilyChoice {
    Gaussian,
    Tpg,
    Al,
    Auto,
}

impl FamilyChoice {
    fn family(self) -> Option<DistributionFamily> {
        match self {
            FamilyChoice::Gaussian => Some(DistributionFamily::Gaussian),
            FamilyChoice::Tpg => Some(DistributionFamily::TwoPieceGaussian),
            FamilyChoice::Al => Some(DistributionFamily::AsymmetricLaplace),
            FamilyChoice::Auto => None,
        }
    }
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    /// CSV file with header x_1..x_d,m,y.
    #[arg(long, conflicts_with = "scenario", required_unless_present = "scenario")]
    pub data: Option<PathBuf>,
    /// Draw fresh synthetic data for every member instead of reading a file.
    #[arg(long)]
    pub scenario: Option<Scenario>,
    /// Pairs per member in scenario mode.
    #[arg(long, default_value_t = 10_000)]
    pub n: usize,
    /// Size of the shared test set in scenario mode.
    #[arg(long, default_value_t = 2000)]
    pub test_n: usize,
    #[arg(long, value_enum, default_value_t = FamilyChoice::Auto)]
    pub family: FamilyChoice,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 100)]
    pub members: usize,
    /// Fixed accuracy weight; skips the grid search.
    #[arg(long)]
    pub beta: Option<f64>,
    /// Worker threads (default: all logical cores).
    #[arg(long, env = "ACCRUE_CALIB_THREADS")]
    pub jobs: Option<usize>,
    #[arg(long, default_value_t = TrainingConfig::default().max_epochs)]
    pub max_epochs: usize,
    /// Model file to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the report to this file.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Output CSV; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
}

#[derive(Debug, Args)]
pub struct CurvesArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Add the true quantiles of this scenario.
    #[arg(long)]
    pub scenario: Option<Scenario>,
    #[arg(long, default_value_t = 101)]
    pub points: usize,
    #[arg(long, default_value_t = 0.0)]
    pub lo: f64,
    #[arg(long, default_value_t = 1.0)]
    pub hi: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Runs one parsed command. Reports and progress are written to `log`.
pub fn run(cli: Cli, log: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Generate(a) => cmd_generate(&a),
        Command::Calibrate(a) => cmd_calibrate(&a, log),
        Command::Predict(a) => cmd_predict(&a),
        Command::Evaluate(a) => cmd_evaluate(&a, log),
        Command::Curves(a) => cmd_curves(&a),
    }
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("cannot create {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn read_data(path: &Path) -> Result<Dataset> {
    fmt_io::read_pairs_file(path).with_context(|| format!("reading {}", path.display()))
}

fn load_model(path: &Path) -> Result<CalibrationModel> {
    fmt_io::load_model(path).with_context(|| format!("loading model {}", path.display()))
}

pub fn cmd_generate(a: &GenerateArgs) -> Result<()> {
    let data = synthetic::generate(a.scenario, a.n, a.seed)?;
    fmt_io::write_pairs(output(a.out.as_deref())?, &data)?;
    Ok(())
}

pub fn cmd_calibrate(a: &CalibrateArgs, log: &mut dyn Write) -> Result<()> {
    if a.members == 0 {
        bail!("--members must be at least 1");
    }
    if a.members == 1 {
        writeln!(log, "warning: --members 1 disables ensembling; the single member is used as the median")?;
    }
    let beta_override = a
        .beta
        .map(|b| {
            let ok = (1..=9).any(|i| (b - i as f64 / 10.0).abs() < 1e-12);
            if !ok {
                bail!("--beta must be one of 0.1, 0.2, ..., 0.9");
            }
            Ok(BetaWeight::new((b * 10.0).round() / 10.0)?)
        })
        .transpose()?;
    let cfg = ProtocolConfig {
        members: a.members,
        test_n: a.test_n,
        training: TrainingConfig {
            max_epochs: a.max_epochs,
            ..TrainingConfig::default()
        },
        seed: a.seed,
        beta_override,
    };
    let (source, data_desc) = match (&a.data, a.scenario) {
        (Some(path), _) => {
            let data = read_data(path)?;
            let desc = format!("{} (n={}, d={})", path.display(), data.len(), data.dim());
            (DataSource::fixed(&data, a.seed)?, desc)
        }
        (None, Some(sc)) => (
            DataSource::Synthetic { scenario: sc, n: a.n },
            format!("scenario {sc} (n={} per member, shared test n={})", a.n, a.test_n),
        ),
        (None, None) => bail!("one of --data or --scenario is required"),
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(j) = a.jobs {
        if j == 0 {
            bail!("--jobs must be at least 1");
        }
        pool = pool.num_threads(j);
    }
    let pool = pool.build()?;

    writeln!(log, "calibrating {} members on {data_desc}", a.members)?;
    let (model, report) = pool.install(|| -> Result<(CalibrationModel, String)> {
        match a.family.family() {
            Some(family) => {
                let out = pipeline::run_protocol(&source, family, &cfg)?;
                Ok((out.median.clone(), single_report(&data_desc, &cfg, &out)))
            }
            None => {
                let out = pipeline::run_auto(&source, &cfg)?;
                Ok((out.selection.chosen.clone(), auto_report(&data_desc, &cfg, &out)))
            }
        }
    })?;
    fmt_io::save_model(&a.out, &model)
        .with_context(|| format!("writing model {}", a.out.display()))?;
    log.write_all(report.as_bytes())?;
    if let Some(p) = &a.report {
        std::fs::write(p, &report).with_context(|| format!("writing report {}", p.display()))?;
    }
    Ok(())
}

pub fn cmd_predict(a: &PredictArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let data = read_data(&a.data)?;
    if data.dim() != model.input_dim() {
        bail!(
            "dimension mismatch: model expects {} inputs, data has {}",
            model.input_dim(),
            data.dim()
        );
    }
    let preds = data
        .records()
        .iter()
        .map(|r| model.predict_intervals(&r.x, r.m))
        .collect::<accrue_core::Result<Vec<_>>>()?;
    fmt_io::write_predictions(output(a.out.as_deref())?, &preds)?;
    Ok(())
}

pub fn cmd_evaluate(a: &EvaluateArgs, log: &mut dyn Write) -> Result<()> {
    let model = load_model(&a.model)?;
    let data = read_data(&a.data)?;
    if data.dim() != model.input_dim() {
        bail!(
            "dimension mismatch: model expects {} inputs, data has {}",
            model.input_dim(),
            data.dim()
        );
    }
    let m = model.evaluate(&data)?;
    let mut s = String::new();
    writeln!(s, "model: {} ({})", a.model.display(), model.family).unwrap();
    writeln!(s, "data: {}", a.data.display()).unwrap();
    s.push_str(&metrics_block("", &m));
    log.write_all(s.as_bytes())?;
    Ok(())
}

pub fn cmd_curves(a: &CurvesArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    if model.input_dim() != 1 {
        bail!("curves needs a one-input model, this one has {}", model.input_dim());
    }
    if a.points < 2 || !(a.lo < a.hi) {
        bail!("need --points >= 2 and --lo < --hi");
    }
    let mut out = output(a.out.as_deref())?;
    let mut header = "x,median,lo50,hi50,lo95,hi95".to_string();
    if a.scenario.is_some() {
        header.push_str(",true_median,true_lo50,true_hi50,true_lo95,true_hi95");
    }
    writeln!(out, "{header}")?;
    for i in 0..a.points {
        let x = a.lo + (a.hi - a.lo) * i as f64 / (a.points - 1) as f64;
        let p = model.predict_intervals(&[x], 0.0)?;
        let mut row = format!("{x},{},{},{},{},{}", p.median, p.lo50, p.hi50, p.lo95, p.hi95);
        if let Some(sc) = a.scenario {
            for q in [0.5, 0.25, 0.75, 0.025, 0.975] {
                write!(row, ",{}", sc.true_error_quantile(x, q)?).unwrap();
            }
        }
        writeln!(out, "{row}")?;
    }
    out.flush()?;
    Ok(())
}

/// Quartiles with linear interpolation between order statistics.
pub fn quartiles(values: &[f64]) -> [f64; 5] {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let q = |p: f64| {
        let h = p * (v.len() - 1) as f64;
        let lo = h.floor() as usize;
        let hi = h.ceil() as usize;
        v[lo] + (h - lo as f64) * (v[hi] - v[lo])
    };
    [q(0.0), q(0.25), q(0.5), q(0.75), q(1.0)]
}

/// Aligned table followed by `prefix`-qualified key=value lines with full
/// precision.
pub fn metrics_block(prefix: &str, m: &MetricsReport) -> String {
    let rows: [(&str, String); 8] = [
        ("n", m.n.to_string()),
        ("beta", m.beta.to_string()),
        ("crps", m.crps.to_string()),
        ("rs", m.rs.to_string()),
        ("accrue", m.accrue.to_string()),
        ("mae", m.mae.to_string()),
        ("coverage50", m.coverage50.to_string()),
        ("coverage95", m.coverage95.to_string()),
    ];
    let mut s = String::new();
    writeln!(s, "  {:<12} {:>12}", "metric", "value").unwrap();
    for (k, v) in &rows[..2] {
        writeln!(s, "  {k:<12} {v:>12}").unwrap();
    }
    let vals = [m.crps, m.rs, m.accrue, m.mae, m.coverage50, m.coverage95];
    for ((k, _), v) in rows[2..].iter().zip(vals) {
        writeln!(s, "  {k:<12} {v:>12.6}").unwrap();
    }
    for (k, v) in &rows {
        writeln!(s, "{prefix}{k}={v}").unwrap();
    }
    s
}

fn outcome_section(out: &ProtocolOutcome) -> String {
    let mut s = String::new();
    let tag = out.family.tag();
    writeln!(s, "[{tag}]").unwrap();
    match &out.beta_search {
        Some(bs) => {
            writeln!(s, "beta search (validation scores decide):").unwrap();
            writeln!(
                s,
                "  {:>4} {:>10} {:>10} {:>10} {:>10} {:>10}",
                "beta", "val_crps", "val_rs", "distance", "train_crps", "train_rs"
            )
            .unwrap();
            for c in &bs.cells {
                writeln!(
                    s,
                    "  {:>4.1} {:>10.6} {:>10.6} {:>10.6} {:>10.6} {:>10.6}",
                    c.beta.value(),
                    c.validation.crps_mean,
                    c.validation.rs,
                    c.distance(),
                    c.training.crps_mean,
                    c.training.rs
                )
                .unwrap();
            }
            for c in &bs.cells {
                writeln!(
                    s,
                    "{tag}.grid beta={} crps={} rs={} distance={}",
                    c.beta.value(),
                    c.validation.crps_mean,
                    c.validation.rs,
                    c.distance()
                )
                .unwrap();
            }
        }
        None => writeln!(s, "beta search skipped (fixed weight)").unwrap(),
    }
    writeln!(s, "{tag}.beta_star={}", out.beta.value()).unwrap();
    let losses: Vec<f64> = out.members.iter().map(|m| m.test_loss).collect();
    let q = quartiles(&losses);
    writeln!(
        s,
        "member test loss: min {:.6}  q1 {:.6}  median {:.6}  q3 {:.6}  max {:.6}",
        q[0], q[1], q[2], q[3], q[4]
    )
    .unwrap();
    let idx = out
        .members
        .iter()
        .position(|m| m == &out.median)
        .expect("median is a member");
    writeln!(s, "{tag}.median_member={idx}").unwrap();
    writeln!(s, "{tag}.median_seed={}", out.median.seed).unwrap();
    writeln!(s, "{tag}.median_test_loss={}", out.median.test_loss).unwrap();
    writeln!(s, "test metrics of the median member:").unwrap();
    s.push_str(&metrics_block(&format!("{tag}."), &out.metrics));
    s
}

fn header(data_desc: &str, cfg: &ProtocolConfig) -> String {
    format!(
        "accrue-calib calibration report\ndata: {data_desc}\nseed: {}\nmembers: {}\n",
        cfg.seed, cfg.members
    )
}

pub fn single_report(data_desc: &str, cfg: &ProtocolConfig, out: &ProtocolOutcome) -> String {
    let mut s = header(data_desc, cfg);
    writeln!(s, "family: {}", out.family.tag()).unwrap();
    s.push_str(&outcome_section(out));
    s
}

pub fn auto_report(data_desc: &str, cfg: &ProtocolConfig, out: &AutoOutcome) -> String {
    let mut s = header(data_desc, cfg);
    writeln!(s, "family: auto (tpg vs al)").unwrap();
    s.push_str(&outcome_section(&out.tpg));
    s.push_str(&outcome_section(&out.al));
    writeln!(s, "[selection]").unwrap();
    writeln!(s, "tpg_loss={}", out.tpg.median.test_loss).unwrap();
    writeln!(s, "al_loss={}", out.al.median.test_loss).unwrap();
    writeln!(s, "selected_family={}", out.selection.chosen.family.tag()).unwrap();
    writeln!(s, "tie={}", out.selection.tie).unwrap();
    s
}
