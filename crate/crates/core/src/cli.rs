//! Command-line front end: argument parsing, result files and run manifests.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{draw_channel, snr_db_to_power};
use crate::codec::{split_bits, unrank_permutation, usable_permutations, word_to_bits};
use crate::detect::{complexity_row, ComplexityRow, Detector};
use crate::error::{Error, Result};
use crate::gmm::uniform_weights;
use crate::harness::{self, derive_stream, PowerPreset, SnrGrid, SweepSpec};
use crate::optpower::{optimize_power, OptimizerConfig};
use crate::rate::{csit_refined, Scheme};

pub const CSV_HEADER: &str = "scheme,N,M,Q,detector,power,snr_db,metric,value,stderr,count,seed";

#[derive(Parser, Debug)]
#[command(
    name = "pmm",
    version,
    about = "Permutation matrix modulation link simulator"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Ensemble-average achievable rate or capacity per SNR point.
    Rate(RateArgs),
    /// Monte Carlo symbol error rate per SNR point.
    Ser(SerArgs),
    /// Generic versus optimized power on the SVD-precoded link.
    Optimize(OptimizeArgs),
    /// ML and ZF flop counts over antenna or modulation-order sweeps.
    Complexity(ComplexityArgs),
    /// Print the bits-to-permutation table for N antennas.
    Codec(CodecArgs),
    /// Rerun a previous command from its manifest.
    Replay(ReplayArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum PowerChoice {
    Table2,
    Pa2,
    Optimized,
    File,
}

#[derive(Args, Debug, Clone)]
pub struct OutputArgs {
    /// Data file to write; a manifest is written next to it.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
}

#[derive(Args, Debug, Clone)]
pub struct PowerArgs {
    #[arg(long, value_enum, default_value = "table2")]
    pub power: PowerChoice,
    /// Power fractions, one per line, used with `--power file`.
    #[arg(long)]
    pub power_file: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct RateArgs {
    #[arg(long, default_value = "pmm")]
    pub scheme: Scheme,
    #[arg(long)]
    pub tx: usize,
    #[arg(long)]
    pub rx: usize,
    #[arg(long, default_value_t = 4)]
    pub mod_order: usize,
    #[command(flatten)]
    pub power: PowerArgs,
    #[arg(long, default_value = "0:20:2", allow_hyphen_values = true)]
    pub snr_db: SnrGrid,
    #[arg(long, default_value_t = 500)]
    pub channels: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Evaluate PMM on the SVD-precoded parallel channel.
    #[arg(long)]
    pub csit: bool,
    /// Active antennas for the GSM baseline (default N/2).
    #[arg(long)]
    pub gsm_active: Option<usize>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args, Debug, Clone)]
pub struct SerArgs {
    #[arg(long)]
    pub tx: usize,
    #[arg(long)]
    pub rx: usize,
    #[arg(long, default_value_t = 4)]
    pub mod_order: usize,
    #[arg(long, default_value = "ml")]
    pub detector: Detector,
    #[command(flatten)]
    pub power: PowerArgs,
    #[arg(long, default_value = "0:30:5", allow_hyphen_values = true)]
    pub snr_db: SnrGrid,
    #[arg(long, default_value_t = 100_000)]
    pub bits: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args, Debug, Clone)]
pub struct OptimizeArgs {
    /// Transmit antennas; the link is square, so this is also M.
    #[arg(long)]
    pub tx: usize,
    #[arg(long, default_value = "0:20:2", allow_hyphen_values = true)]
    pub snr_db: SnrGrid,
    #[arg(long, default_value_t = 200)]
    pub channels: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args, Debug, Clone)]
pub struct ComplexityArgs {
    /// Transmit antennas: a value or an inclusive range `a:b`.
    #[arg(long, default_value = "2:8")]
    pub tx: String,
    #[arg(long, default_value_t = 4)]
    pub rx: u32,
    /// Modulation orders: a value or a comma-separated list.
    #[arg(long, default_value = "4")]
    pub mod_order: String,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args, Debug, Clone)]
pub struct CodecArgs {
    #[arg(long)]
    pub tx: usize,
}

#[derive(Args, Debug, Clone)]
pub struct ReplayArgs {
    pub manifest: PathBuf,
    /// Write to this data file instead of the recorded one.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// One row of a rate, SER or optimization result file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub scheme: String,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "Q")]
    pub q: usize,
    pub detector: String,
    pub power: String,
    pub snr_db: f64,
    pub metric: String,
    pub value: f64,
    pub stderr: f64,
    pub count: u64,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunKind {
    Rate,
    Ser,
    Optimize,
}

/// Everything needed to rerun a command bit-exactly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: RunKind,
    pub spec: SweepSpec,
    pub format: Format,
    pub timestamp: u64,
    pub master_seed: u64,
    pub outputs: Vec<String>,
}

pub fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

/// Reads power fractions, one positive number per line; blank lines are skipped.
pub fn read_power_file(path: &Path) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        let v: f64 = t.parse().map_err(|_| {
            Error::InvalidPower(format!("{}:{}: not a number: '{t}'", path.display(), i + 1))
        })?;
        if !v.is_finite() || v <= 0.0 {
            return Err(Error::InvalidPower(format!(
                "{}:{}: power fraction must be positive",
                path.display(),
                i + 1
            )));
        }
        out.push(v);
    }
    Ok(out)
}

fn resolve_power(args: &PowerArgs, n: usize) -> Result<PowerPreset> {
    let preset = match args.power {
        PowerChoice::Table2 => PowerPreset::Table2,
        PowerChoice::Pa2 => PowerPreset::Pa2,
        PowerChoice::Optimized => PowerPreset::Optimized,
        PowerChoice::File => {
            let path = args
                .power_file
                .as_ref()
                .ok_or_else(|| Error::InvalidArgument("--power file needs --power-file".into()))?;
            PowerPreset::File {
                path: path.display().to_string(),
                fractions: read_power_file(path)?,
            }
        }
    };
    if args.power_file.is_some() && args.power != PowerChoice::File {
        return Err(Error::InvalidArgument(
            "--power-file is only used with --power file".into(),
        ));
    }
    // Checks length, sum and distinctness up front.
    preset.allocation(n, 1.0)?;
    Ok(preset)
}

impl RateArgs {
    pub fn to_spec(&self) -> Result<SweepSpec> {
        let mut spec = SweepSpec::new(self.tx, self.rx);
        spec.scheme = self.scheme;
        spec.mod_order = self.mod_order;
        spec.power = resolve_power(&self.power, self.tx)?;
        spec.snr = self.snr_db;
        spec.channels_per_point = self.channels;
        spec.master_seed = self.seed;
        spec.csit = self.csit;
        spec.gsm_active = self.gsm_active;
        spec.validate_rate()?;
        Ok(spec)
    }
}

impl SerArgs {
    pub fn to_spec(&self) -> Result<SweepSpec> {
        let mut spec = SweepSpec::new(self.tx, self.rx);
        spec.mod_order = self.mod_order;
        spec.detector = self.detector;
        spec.power = resolve_power(&self.power, self.tx)?;
        spec.snr = self.snr_db;
        spec.bits_per_point = self.bits;
        spec.master_seed = self.seed;
        spec.validate_ser()?;
        Ok(spec)
    }
}

impl OptimizeArgs {
    pub fn to_spec(&self) -> Result<SweepSpec> {
        let mut spec = SweepSpec::new(self.tx, self.tx);
        spec.power = PowerPreset::Optimized;
        spec.csit = true;
        spec.snr = self.snr_db;
        spec.channels_per_point = self.channels;
        spec.master_seed = self.seed;
        spec.validate_rate()?;
        Ok(spec)
    }
}

fn record(
    spec: &SweepSpec,
    detector: &str,
    snr_db: f64,
    metric: &str,
    value: f64,
    stderr: f64,
    count: u64,
) -> RunRecord {
    RunRecord {
        scheme: spec.scheme.as_str().to_string(),
        n: spec.tx,
        m: spec.rx,
        q: spec.mod_order,
        detector: detector.to_string(),
        power: spec.power.label().to_string(),
        snr_db,
        metric: metric.to_string(),
        value,
        stderr,
        count,
        seed: spec.master_seed,
    }
}

pub fn rate_records(spec: &SweepSpec) -> Result<Vec<RunRecord>> {
    let results = harness::run_rate(spec)?;
    Ok(results
        .iter()
        .map(|r| {
            record(
                spec,
                "none",
                r.snr_db,
                "rate",
                r.bits_per_channel_use,
                r.stderr,
                r.channel_count as u64,
            )
        })
        .collect())
}

pub fn ser_records(spec: &SweepSpec) -> Result<Vec<RunRecord>> {
    let points = harness::run_ser(spec)?;
    let det = spec.detector.as_str();
    let binomial_se = |p: f64, n: u64| (p * (1.0 - p) / n as f64).sqrt();
    let mut out = Vec::new();
    for p in &points {
        let n = p.symbols_sent;
        out.push(record(
            spec,
            det,
            p.snr_db,
            "ser",
            p.ser,
            binomial_se(p.ser, n),
            n,
        ));
        out.push(record(
            spec,
            det,
            p.snr_db,
            "ser_wilson_low",
            p.wilson_low,
            0.0,
            n,
        ));
        out.push(record(
            spec,
            det,
            p.snr_db,
            "ser_wilson_high",
            p.wilson_high,
            0.0,
            n,
        ));
        let pe = p.permutation_error_rate();
        out.push(record(
            spec,
            det,
            p.snr_db,
            "permutation_error_rate",
            pe,
            binomial_se(pe, n),
            n,
        ));
        let se = p.entry_error_rate();
        out.push(record(
            spec,
            det,
            p.snr_db,
            "entry_error_rate",
            se,
            binomial_se(se, p.entries_sent),
            p.entries_sent,
        ));
    }
    Ok(out)
}

fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

pub fn optimize_records(spec: &SweepSpec) -> Result<Vec<RunRecord>> {
    spec.validate_rate()?;
    let set = usable_permutations(spec.tx)?;
    let weights = uniform_weights(set.len());
    let channels: Vec<_> = (0..spec.channels_per_point)
        .map(|c| {
            draw_channel(
                spec.rx,
                spec.tx,
                &mut derive_stream(spec.master_seed, 0, c as u64),
            )
        })
        .collect();
    let cfg = OptimizerConfig::default();
    let count = channels.len() as u64;
    let mut out = Vec::new();
    for snr_db in spec.snr.points() {
        let rho = snr_db_to_power(snr_db);
        let rows = channels
            .par_iter()
            .map(|ch| -> Result<(f64, f64, f64)> {
                let generic = spec.power.allocation(spec.tx, rho)?;
                let (generic_rate, _) = csit_refined(ch, &set, generic.gamma(), &weights)?;
                let opt = optimize_power(ch, &set, &weights, rho, &cfg)?;
                Ok((generic_rate, opt.rate, opt.kkt_residual))
            })
            .collect::<Result<Vec<_>>>()?;
        let generic: Vec<f64> = rows.iter().map(|r| r.0).collect();
        let optimized: Vec<f64> = rows.iter().map(|r| r.1).collect();
        let gain: Vec<f64> = rows.iter().map(|r| r.1 - r.0).collect();
        let kkt = rows.iter().map(|r| r.2).fold(0.0, f64::max);
        for (metric, values) in [
            ("rate_generic", &generic),
            ("rate_optimized", &optimized),
            ("gain", &gain),
        ] {
            let (m, se) = mean_and_stderr(values);
            out.push(record(spec, "none", snr_db, metric, m, se, count));
        }
        out.push(record(
            spec,
            "none",
            snr_db,
            "kkt_residual_max",
            kkt,
            0.0,
            count,
        ));
    }
    Ok(out)
}

pub fn write_records<W: Write>(records: &[RunRecord], format: Format, w: W) -> Result<()> {
    match format {
        Format::Csv => {
            let mut wr = csv::Writer::from_writer(w);
            if records.is_empty() {
                wr.write_record(CSV_HEADER.split(','))?;
            }
            for r in records {
                wr.serialize(r)?;
            }
            wr.flush()?;
        }
        Format::Json => {
            let mut w = w;
            serde_json::to_writer_pretty(&mut w, records)?;
            writeln!(w)?;
        }
    }
    Ok(())
}

pub fn read_records(path: &Path, format: Format) -> Result<Vec<RunRecord>> {
    match format {
        Format::Csv => {
            let mut rd = csv::Reader::from_path(path)?;
            Ok(rd.deserialize().collect::<std::result::Result<_, _>>()?)
        }
        Format::Json => Ok(serde_json::from_str(&fs::read_to_string(path)?)?),
    }
}

fn emit<T>(out: Option<&Path>, write: impl FnOnce(&mut dyn Write) -> Result<T>) -> Result<T> {
    match out {
        Some(path) => {
            let mut f = std::io::BufWriter::new(fs::File::create(path)?);
            let v = write(&mut f)?;
            f.flush()?;
            Ok(v)
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            write(&mut lock)
        }
    }
}

fn run_sweep(kind: RunKind, spec: &SweepSpec, output: &OutputArgs) -> Result<()> {
    let records = match kind {
        RunKind::Rate => rate_records(spec)?,
        RunKind::Ser => ser_records(spec)?,
        RunKind::Optimize => optimize_records(spec)?,
    };
    emit(output.out.as_deref(), |w| {
        write_records(&records, output.format, w)
    })?;
    if let Some(out) = &output.out {
        let manifest = RunManifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: kind,
            spec: spec.clone(),
            format: output.format,
            timestamp: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            master_seed: spec.master_seed,
            outputs: vec![out.display().to_string()],
        };
        fs::write(
            manifest_path(out),
            serde_json::to_string_pretty(&manifest)? + "\n",
        )?;
    }
    Ok(())
}

/// Inclusive `a:b` range or a single value.
fn parse_range(s: &str) -> Result<Vec<u32>> {
    let bad = || Error::InvalidArgument(format!("bad range '{s}'"));
    match s.split_once(':') {
        Some((a, b)) => {
            let a: u32 = a.trim().parse().map_err(|_| bad())?;
            let b: u32 = b.trim().parse().map_err(|_| bad())?;
            if a == 0 || b < a {
                return Err(bad());
            }
            Ok((a..=b).collect())
        }
        None => Ok(vec![s.trim().parse().map_err(|_| bad())?]),
    }
}

fn parse_list(s: &str) -> Result<Vec<u32>> {
    s.split(',')
        .map(|p| {
            p.trim()
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("bad list '{s}'")))
        })
        .collect()
}

pub fn complexity_rows(args: &ComplexityArgs) -> Result<Vec<ComplexityRow>> {
    let mut rows = Vec::new();
    for n in parse_range(&args.tx)? {
        for q in parse_list(&args.mod_order)? {
            rows.push(complexity_row(n, args.rx, q)?);
        }
    }
    Ok(rows)
}

pub fn write_complexity<W: Write>(rows: &[ComplexityRow], format: Format, mut w: W) -> Result<()> {
    match format {
        Format::Csv => {
            writeln!(w, "N,M,Q,r,ml_flops,zf_flops,zf_flops_direct,ratio")?;
            for r in rows {
                let direct = r.zf_flops_direct.map(|v| v.to_string()).unwrap_or_default();
                writeln!(
                    w,
                    "{},{},{},{},{},{},{},{}",
                    r.n, r.m, r.q, r.r, r.ml_flops, r.zf_flops, direct, r.ratio
                )?;
            }
        }
        Format::Json => {
            serde_json::to_writer_pretty(&mut w, rows)?;
            writeln!(w)?;
        }
    }
    Ok(())
}

/// Bit words and their permutation matrices, in word order.
pub fn codec_table(n: usize) -> Result<Vec<(String, Vec<Vec<u8>>)>> {
    let split = split_bits(n, 2)?;
    if split.permutation_bits == 0 {
        return Err(Error::InvalidArgument(format!(
            "{n} antenna(s) carry no permutation bits"
        )));
    }
    (0..split.usable_permutations)
        .map(|w| {
            let bits: String = word_to_bits(w, split.permutation_bits)
                .iter()
                .map(|b| char::from(b'0' + b))
                .collect();
            let p = unrank_permutation(w, n)?;
            let rows = p
                .as_slice()
                .iter()
                .map(|&col| (0..n).map(|c| u8::from(c == col)).collect())
                .collect();
            Ok((bits, rows))
        })
        .collect()
}

pub fn write_codec_table<W: Write>(n: usize, mut w: W) -> Result<()> {
    for (bits, rows) in codec_table(n)? {
        let body: Vec<String> = rows
            .iter()
            .map(|r| {
                r.iter()
                    .map(|v| v.to_string())
                    .collect::<Vec<_>>()
                    .join(" ")
            })
            .collect();
        writeln!(w, "{bits}: [{}]", body.join("; "))?;
    }
    Ok(())
}

pub fn replay(manifest_file: &Path, out: Option<&Path>) -> Result<()> {
    let manifest: RunManifest = serde_json::from_str(&fs::read_to_string(manifest_file)?)?;
    let target = match out {
        Some(p) => p.to_path_buf(),
        None => PathBuf::from(
            manifest
                .outputs
                .first()
                .ok_or_else(|| Error::InvalidArgument("manifest lists no output file".into()))?,
        ),
    };
    let output = OutputArgs {
        out: Some(target),
        format: manifest.format,
    };
    match manifest.command {
        RunKind::Rate | RunKind::Optimize => manifest.spec.validate_rate()?,
        RunKind::Ser => manifest.spec.validate_ser()?,
    }
    run_sweep(manifest.command, &manifest.spec, &output)
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Rate(args) => run_sweep(RunKind::Rate, &args.to_spec()?, &args.output),
        Command::Ser(args) => run_sweep(RunKind::Ser, &args.to_spec()?, &args.output),
        Command::Optimize(args) => run_sweep(RunKind::Optimize, &args.to_spec()?, &args.output),
        Command::Complexity(args) => {
            let rows = complexity_rows(&args)?;
            emit(args.output.out.as_deref(), |w| {
                write_complexity(&rows, args.output.format, w)
            })
        }
        Command::Codec(args) => emit(None, |w| write_codec_table(args.tx, w)),
        Command::Replay(args) => replay(&args.manifest, args.out.as_deref()),
    }
}
