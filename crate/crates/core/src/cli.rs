//! Command-line front end: `gen`, `simulate`, `certify`, `adaptive`, `opt`.
//!
//! Every subcommand accepts `--config FILE`, a JSON object whose keys are
//! the subcommand's long flag names. Flags given on the command line win.
//! Reports go to `--output`, else to `$RMIX_OUT_DIR/<command>.<ext>` when
//! that variable is set, else to stdout.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::algorithms::Scheduler;
use crate::analysis::{
    run_adaptive, step_certificate_with_tolerance, AdaptiveOptions, AdversaryStrategy,
    StepCertificate, DEFAULT_TOLERANCE, RATIO_BOUND,
};
use crate::error::{Error, Result};
use crate::gen::{generate, random_buffer, tightness_buffer, GenConfig, SpanDist, WeightDist};
use crate::model::{
    read_trace, write_trace, BufferState, DeadlineKey, DeadlineModel, Packet, PacketId, Trace,
};
use crate::opt::{numeric_instance, opt_greedy};
use crate::sim::{run_trials, write_adaptive_csv};

pub const OUT_DIR_ENV: &str = "RMIX_OUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "rmix", version, about = "RMix buffer management laboratory")]
#[command(args_override_self = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a trace file.
    Gen(GenArgs),
    /// Replay a trace with a scheduler and compare against the offline optimum.
    Simulate(SimulateArgs),
    /// Check the per-step ratio certificate on buffers.
    Certify(CertifyArgs),
    /// Play RMix against an adaptive adversary.
    Adaptive(AdaptiveArgs),
    /// Offline optimal schedule of a trace.
    Opt(OptArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutFormat {
    Csv,
    Json,
}

impl OutFormat {
    fn ext(self) -> &'static str {
        match self {
            OutFormat::Csv => "csv",
            OutFormat::Json => "json",
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct ConfigArg {
    /// JSON file whose keys are flag names.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct OutputArgs {
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct GenFlags {
    #[arg(long, default_value_t = 100)]
    pub steps: u64,
    #[arg(long, default_value_t = 1.0)]
    pub arrival_rate: f64,
    /// `log-uniform:LO:HI`, `uniform:LO:HI` or `grid:K`.
    #[arg(long, default_value = "log-uniform:0.001:1")]
    pub weight_dist: String,
    /// `uniform:S` (spans 1..=S) or `constant:S`.
    #[arg(long, default_value = "uniform:8")]
    pub span_dist: String,
    #[arg(long)]
    pub s_bounded: Option<u64>,
    #[arg(long, default_value = "numeric")]
    pub model: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl GenFlags {
    pub fn to_config(&self) -> Result<GenConfig> {
        Ok(GenConfig {
            steps: self.steps,
            arrival_rate: self.arrival_rate,
            weight_dist: parse_weight_dist(&self.weight_dist)?,
            span_dist: parse_span_dist(&self.span_dist)?,
            s_bounded: self.s_bounded,
            model: self.model.parse()?,
            seed: self.seed,
        })
    }
}

#[derive(Debug, Clone, Args)]
pub struct GenArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    #[command(flatten)]
    pub gen: GenFlags,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    #[arg(long)]
    pub trace: PathBuf,
    #[arg(long, default_value = "rmix")]
    pub scheduler: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1000)]
    pub trials: u64,
    #[arg(long, value_enum, default_value_t = OutFormat::Json)]
    pub out: OutFormat,
    /// Run trials on one thread.
    #[arg(long)]
    pub serial: bool,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct CertifyArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    /// JSON buffer file: `{"model": "numeric", "packets": [{"id":0,"w":0.5,"d":1}]}`.
    #[arg(long, conflicts_with_all = ["random", "tightness"])]
    pub buffer: Option<PathBuf>,
    /// Number of random buffers (sizes 1-20, weights log-uniform on [1e-3, 1]).
    #[arg(long, conflicts_with = "tightness")]
    pub random: Option<u64>,
    #[arg(long)]
    pub tightness: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = DEFAULT_TOLERANCE)]
    pub tolerance: f64,
    #[arg(long, value_enum, default_value_t = OutFormat::Json)]
    pub out: OutFormat,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct AdaptiveArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    /// Replay this trace instead of generating one.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    #[command(flatten)]
    pub gen: GenFlags,
    #[arg(long, default_value = "min-ratio")]
    pub strategy: String,
    /// JSON object mapping step to packet id, for `--strategy scripted`.
    #[arg(long)]
    pub script: Option<PathBuf>,
    /// Seed of RMix's draws (the generator uses `--seed`).
    #[arg(long, default_value_t = 0)]
    pub rmix_seed: u64,
    /// Track both players' buffers and check they stay identical.
    #[arg(long)]
    pub dual_buffer: bool,
    #[arg(long, default_value_t = DEFAULT_TOLERANCE)]
    pub tolerance: f64,
    #[arg(long, value_enum, default_value_t = OutFormat::Json)]
    pub out: OutFormat,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct OptArgs {
    #[command(flatten)]
    pub config: ConfigArg,
    #[arg(long)]
    pub trace: PathBuf,
    #[arg(long, value_enum, default_value_t = OutFormat::Json)]
    pub out: OutFormat,
    #[command(flatten)]
    pub output: OutputArgs,
}

pub fn parse_weight_dist(s: &str) -> Result<WeightDist> {
    let parts: Vec<&str> = s.split(':').collect();
    let num = |t: &str| -> Result<f64> {
        t.parse()
            .map_err(|_| Error::Config(format!("bad number {t:?} in weight distribution {s:?}")))
    };
    match parts.as_slice() {
        ["log-uniform", lo, hi] => Ok(WeightDist::LogUniform {
            lo: num(lo)?,
            hi: num(hi)?,
        }),
        ["uniform", lo, hi] => Ok(WeightDist::Uniform {
            lo: num(lo)?,
            hi: num(hi)?,
        }),
        ["grid", k] => Ok(WeightDist::GeometricGrid {
            k: k.parse()
                .map_err(|_| Error::Config(format!("bad grid size in {s:?}")))?,
        }),
        _ => Err(Error::Config(format!(
            "unrecognized weight distribution {s:?}"
        ))),
    }
}

pub fn parse_span_dist(s: &str) -> Result<SpanDist> {
    let (kind, n) = s
        .split_once(':')
        .ok_or_else(|| Error::Config(format!("unrecognized span distribution {s:?}")))?;
    let n: u64 = n
        .parse()
        .map_err(|_| Error::Config(format!("bad span in {s:?}")))?;
    match kind {
        "uniform" => Ok(SpanDist::Uniform { max: n }),
        "constant" => Ok(SpanDist::Constant { span: n }),
        _ => Err(Error::Config(format!(
            "unrecognized span distribution {s:?}"
        ))),
    }
}

/// Replaces `--config FILE` by the flags it contains, placed before the
/// command-line flags so those take precedence.
pub fn expand_config(args: Vec<String>) -> Result<Vec<String>> {
    let Some(pos) = args.iter().position(|a| a == "--config") else {
        return Ok(args);
    };
    let path = args
        .get(pos + 1)
        .ok_or_else(|| Error::Config("--config needs a file".into()))?;
    let text = std::fs::read_to_string(path)?;
    let obj: serde_json::Map<String, serde_json::Value> =
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{path}: {e}")))?;
    let mut injected = Vec::new();
    for (key, value) in obj {
        let flag = format!("--{}", key.replace('_', "-"));
        match value {
            serde_json::Value::Bool(true) => injected.push(flag),
            serde_json::Value::Bool(false) | serde_json::Value::Null => {}
            serde_json::Value::String(s) => injected.extend([flag, s]),
            serde_json::Value::Number(n) => injected.extend([flag, n.to_string()]),
            other => {
                return Err(Error::Config(format!(
                    "{path}: value of {key:?} must be a scalar, got {other}"
                )))
            }
        }
    }
    let mut out: Vec<String> = args[..pos].to_vec();
    // subcommand name sits right before the first flag; keep it ahead of the injected flags
    let insert_at = out.len().min(2);
    let tail = out.split_off(insert_at);
    out.extend(injected);
    out.extend(tail);
    out.extend_from_slice(&args[pos + 2..]);
    Ok(out)
}

fn open_output(output: &OutputArgs, command: &str, ext: &str) -> Result<Box<dyn Write>> {
    if let Some(path) = &output.output {
        return Ok(Box::new(io::BufWriter::new(File::create(path)?)));
    }
    if let Some(dir) = std::env::var_os(OUT_DIR_ENV) {
        let dir = PathBuf::from(dir);
        std::fs::create_dir_all(&dir)?;
        let path = dir.join(format!("{command}.{ext}"));
        return Ok(Box::new(io::BufWriter::new(File::create(path)?)));
    }
    Ok(Box::new(io::stdout().lock()))
}

fn write_json<T: Serialize>(mut out: impl Write, value: &T) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

fn load_trace(path: &Path) -> Result<Trace> {
    read_trace(BufReader::new(File::open(path)?))
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BufferFile {
    pub model: DeadlineModel,
    pub packets: Vec<BufferFilePacket>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BufferFilePacket {
    pub id: u64,
    pub w: f64,
    pub d: u64,
}

impl BufferFile {
    pub fn from_buffer(buffer: &BufferState) -> Self {
        BufferFile {
            model: buffer.model().unwrap_or(DeadlineModel::Numeric),
            packets: buffer
                .iter()
                .map(|p| BufferFilePacket {
                    id: p.id.0,
                    w: p.weight,
                    d: p.deadline.value(),
                })
                .collect(),
        }
    }

    pub fn to_buffer(&self) -> Result<BufferState> {
        BufferState::from_packets(
            self.packets
                .iter()
                .map(|p| Packet::new(p.id, p.w, DeadlineKey::with_model(self.model, p.d), 0))
                .collect::<Result<Vec<_>>>()?,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertifySummary {
    pub buffers: u64,
    pub frontier_rows: u64,
    pub min_ratio: f64,
    pub worst_digest: Option<String>,
    pub bound: f64,
    pub tolerance: f64,
    pub failures: u64,
    pub passed: bool,
}

/// Certifies `count` random buffers drawn from one seeded stream. Returns
/// the summary and the failing buffers.
pub fn certify_random(
    count: u64,
    seed: u64,
    tolerance: f64,
) -> Result<(CertifySummary, Vec<(BufferState, StepCertificate)>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut summary = CertifySummary {
        buffers: 0,
        frontier_rows: 0,
        min_ratio: f64::INFINITY,
        worst_digest: None,
        bound: RATIO_BOUND,
        tolerance,
        failures: 0,
        passed: true,
    };
    let mut failing = Vec::new();
    for _ in 0..count {
        let n = rng.random_range(1..=20);
        let buffer = random_buffer(&mut rng, n, 1e-3, 1.0);
        let cert = step_certificate_with_tolerance(&buffer, tolerance)?;
        summary.buffers += 1;
        summary.frontier_rows += cert.rows.len() as u64;
        if cert.min_ratio < summary.min_ratio {
            summary.min_ratio = cert.min_ratio;
            summary.worst_digest = Some(cert.buffer_digest.clone());
        }
        if !cert.passed {
            summary.failures += 1;
            summary.passed = false;
            failing.push((buffer, cert));
        }
    }
    Ok((summary, failing))
}

fn dump_failure(buffer: &BufferState, cert: &StepCertificate) {
    eprintln!(
        "certificate FAILED: min ratio {} < {} for buffer {}",
        cert.min_ratio, RATIO_BOUND, cert.buffer_digest
    );
    if let Ok(s) = serde_json::to_string(&BufferFile::from_buffer(buffer)) {
        eprintln!("{s}");
    }
}

fn load_script(path: &Path) -> Result<BTreeMap<u64, PacketId>> {
    let text = std::fs::read_to_string(path)?;
    let raw: BTreeMap<String, u64> = serde_json::from_str(&text)?;
    raw.into_iter()
        .map(|(k, v)| {
            k.parse::<u64>()
                .map(|s| (s, PacketId(v)))
                .map_err(|_| Error::Config(format!("script step {k:?} is not an integer")))
        })
        .collect()
}

/// Runs the CLI on `args` (including the program name). Returns the exit code.
pub fn run(args: Vec<String>) -> Result<i32> {
    let args = expand_config(args)?;
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            e.print()?;
            return Ok(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match cli.command {
        Command::Gen(a) => {
            let trace = generate(&a.gen.to_config()?)?;
            write_trace(&trace, open_output(&a.output, "gen", "jsonl")?)?;
            Ok(0)
        }
        Command::Simulate(a) => {
            let trace = load_trace(&a.trace)?;
            let scheduler: Scheduler = a.scheduler.parse()?;
            let report = run_trials(&trace, scheduler, a.seed, a.trials, !a.serial)?;
            let out = open_output(&a.output, "simulate", a.out.ext())?;
            match a.out {
                OutFormat::Json => write_json(out, &report)?,
                OutFormat::Csv => report.write_csv(out)?,
            }
            eprintln!(
                "{}: mean ratio {:.6} ± {:.6} (bound {:.6}); OPT/ALG {:.6} vs e/(e-1) = {:.6}",
                report.scheduler,
                report.mean_ratio,
                report.ci_half_width,
                RATIO_BOUND,
                report.reciprocal_ratio,
                1.0 / RATIO_BOUND
            );
            Ok(0)
        }
        Command::Certify(a) => run_certify(a),
        Command::Adaptive(a) => {
            let trace = match &a.trace {
                Some(p) => load_trace(p)?,
                None => generate(&a.gen.to_config()?)?,
            };
            let strategy = match a.strategy.as_str() {
                "scripted" => {
                    let path = a.script.as_ref().ok_or_else(|| {
                        Error::Config("--strategy scripted needs --script".into())
                    })?;
                    AdversaryStrategy::Scripted(load_script(path)?)
                }
                s => s.parse()?,
            };
            let opts = AdaptiveOptions {
                seed: a.rmix_seed,
                dual_buffers: a.dual_buffer,
                tolerance: a.tolerance,
            };
            let report = run_adaptive(&trace, &strategy, &opts)?;
            let out = open_output(&a.output, "adaptive", a.out.ext())?;
            match a.out {
                OutFormat::Json => write_json(out, &report)?,
                OutFormat::Csv => write_adaptive_csv(&report, out)?,
            }
            eprintln!(
                "{}: aggregate expected ratio {:.6} (bound {:.6}), min step ratio {:.6}",
                report.strategy,
                report.aggregate_expected_ratio,
                RATIO_BOUND,
                report.min_step_ratio
            );
            Ok(if report.passed(a.tolerance) { 0 } else { 1 })
        }
        Command::Opt(a) => {
            let trace = load_trace(&a.trace)?;
            let schedule = opt_greedy(numeric_instance(&trace)?.as_ref())?;
            let out = open_output(&a.output, "opt", a.out.ext())?;
            match a.out {
                OutFormat::Json => write_json(out, &schedule)?,
                OutFormat::Csv => schedule.write_csv(out)?,
            }
            Ok(0)
        }
    }
}

fn run_certify(a: CertifyArgs) -> Result<i32> {
    let out = open_output(&a.output, "certify", a.out.ext())?;
    let certs: Vec<(BufferState, StepCertificate)> = if let Some(n) = a.random {
        let (summary, failing) = certify_random(n, a.seed, a.tolerance)?;
        for (b, c) in &failing {
            dump_failure(b, c);
        }
        match a.out {
            OutFormat::Json => write_json(out, &summary)?,
            OutFormat::Csv => {
                let mut w = csv::Writer::from_writer(out);
                w.serialize(&summary)?;
                w.flush()?;
            }
        }
        eprintln!(
            "{} buffers, {} frontier choices, min ratio {:.9}, {} failures",
            summary.buffers, summary.frontier_rows, summary.min_ratio, summary.failures
        );
        return Ok(if summary.passed { 0 } else { 1 });
    } else if let Some(k) = a.tightness {
        let b = tightness_buffer(k)?;
        let c = step_certificate_with_tolerance(&b, a.tolerance)?;
        vec![(b, c)]
    } else if let Some(path) = &a.buffer {
        let file: BufferFile = serde_json::from_reader(BufReader::new(File::open(path)?))?;
        let b = file.to_buffer()?;
        let c = step_certificate_with_tolerance(&b, a.tolerance)?;
        vec![(b, c)]
    } else {
        return Err(Error::Config(
            "certify needs one of --buffer, --random or --tightness".into(),
        ));
    };

    match a.out {
        OutFormat::Json => {
            let just: Vec<&StepCertificate> = certs.iter().map(|(_, c)| c).collect();
            write_json(out, &just)?
        }
        OutFormat::Csv => {
            let mut w = csv::Writer::from_writer(out);
            w.write_record(["buffer", "j", "y", "e_rmix", "e_adv", "ratio"])?;
            for (_, c) in &certs {
                for r in &c.rows {
                    w.write_record([
                        c.buffer_digest.clone(),
                        r.j.0.to_string(),
                        r.y.to_string(),
                        c.e_rmix.to_string(),
                        r.e_adv_amortized.to_string(),
                        r.ratio.to_string(),
                    ])?;
                }
            }
            w.flush()?;
        }
    }
    let mut code = 0;
    for (b, c) in &certs {
        if !c.passed {
            dump_failure(b, c);
            code = 1;
        }
    }
    Ok(code)
}
