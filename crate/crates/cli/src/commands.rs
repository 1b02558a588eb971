use std::f64::consts::PI;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, ValueEnum};
use lz_landscape::noise::{noise_report, qsl_time, NoiseKind, NoiseSpec};
use lz_landscape::objectives::{
    classify_critical, evaluate_pulse, second_order_expansion, CriticalityTolerances, CriticalityVerdict, Variation,
};
use lz_landscape::optimizer::{
    landscape_scan, maximize, trap_probability, AxisRange, OptimizerConfig, ScanGrid, Termination, TrapExperiment,
    TrapReport, TrapRunRecord,
};
use lz_landscape::seeding::task_seed;
use lz_landscape::{propagate, ControlPulse, ObjectiveSpec, DEFAULT_NODES_PER_SEGMENT};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, CliError, CliResult};
use crate::inputs::{parse_counts, parse_floats, parse_range, parse_state, ObjectiveArgs, PulseFile};
use crate::manifest::RunManifest;

pub struct Context {
    pub workers: usize,
    pub timestamp: String,
}

/// Rendered output and the exit status it implies.
pub struct Output {
    pub text: String,
    pub exit: u8,
}

impl Output {
    fn ok(text: String) -> Self {
        Self { text, exit: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FloatList(pub Vec<f64>);

impl FromStr for FloatList {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        parse_floats(s).map(Self)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CountList(pub Vec<usize>);

impl FromStr for CountList {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        parse_counts(s).map(Self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Range(pub [f64; 2]);

impl FromStr for Range {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        parse_range(s).map(Self)
    }
}

impl fmt::Display for Range {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.0[0], self.0[1])
    }
}

/// Floats in CSV cells: 17 significant digits, round-trip exact.
fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn csv_document(
    manifest: &RunManifest,
    header: &[&str],
    rows: Vec<Vec<String>>,
    footer: &[String],
) -> CliResult<String> {
    let mut buf = format!("{}\n", manifest.csv_line()).into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        let io = |e: csv::Error| CliError::Io(e.to_string());
        w.write_record(header).map_err(io)?;
        for row in rows {
            w.write_record(&row).map_err(io)?;
        }
        w.flush().map_err(|e| CliError::Io(e.to_string()))?;
    }
    let mut text = String::from_utf8(buf).expect("csv output is UTF-8");
    for line in footer {
        text.push_str(line);
        text.push('\n');
    }
    Ok(text)
}

#[derive(Serialize)]
struct JsonDocument<'a, T: Serialize> {
    manifest: &'a RunManifest,
    #[serde(flatten)]
    body: T,
}

fn json_document<T: Serialize>(manifest: &RunManifest, body: T) -> String {
    let mut text = serde_json::to_string_pretty(&JsonDocument { manifest, body }).expect("output serializes");
    text.push('\n');
    text
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct ScanArgs {
    /// Number of segments: 1 or 2.
    #[arg(long = "N", default_value_t = 2)]
    pub segments: usize,
    #[arg(long = "T", default_value_t = 10.0)]
    pub total_time: f64,
    #[arg(long, default_value_t = 1.0)]
    pub delta: f64,
    /// Amplitude range `lo:hi` of the first axis.
    #[arg(long, default_value = "-2:2", allow_hyphen_values = true)]
    pub range: Range,
    /// Range of the second axis; defaults to the first.
    #[arg(long, allow_hyphen_values = true)]
    pub range2: Option<Range>,
    /// Grid points per axis.
    #[arg(long = "res", default_value_t = 401)]
    pub resolution: usize,
    #[command(flatten)]
    pub objective: ObjectiveArgs,
}

pub fn scan(p: &ScanArgs, ctx: &Context) -> CliResult<Output> {
    let spec = p.objective.spec()?;
    let axis = |r: Range| AxisRange::new(r.0[0], r.0[1], p.resolution);
    let grid = match p.segments {
        1 => ScanGrid::One(axis(p.range)?),
        2 => ScanGrid::Two(axis(p.range)?, axis(p.range2.unwrap_or(p.range))?),
        n => return Err(invalid(format!("scan supports 1 or 2 segments, got {n}"))),
    };
    let scan = landscape_scan(&spec, p.total_time, p.delta, &grid)?;
    let manifest = RunManifest::new("scan", None, &ctx.timestamp, p);
    if scan.axes.len() == 1 {
        let cf = scan.closed_form.as_ref();
        let mut header = vec!["a1", "J"];
        if cf.is_some() {
            header.push("closed_form");
        }
        let rows = scan.axes[0]
            .iter()
            .enumerate()
            .map(|(k, &a)| {
                let mut row = vec![num(a), num(scan.values[k])];
                if let Some(cf) = cf {
                    row.push(num(cf[k]));
                }
                row
            })
            .collect();
        let footer: Vec<String> = scan
            .max_discrepancy
            .iter()
            .map(|d| format!("# max_discrepancy: {}", num(*d)))
            .collect();
        return Ok(Output::ok(csv_document(&manifest, &header, rows, &footer)?));
    }
    let n1 = scan.axes[1].len();
    let rows = scan
        .values
        .iter()
        .enumerate()
        .map(|(k, &j)| vec![num(scan.axes[0][k / n1]), num(scan.axes[1][k % n1]), num(j)])
        .collect();
    Ok(Output::ok(csv_document(&manifest, &["a1", "a2", "J"], rows, &[])?))
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct OptimizeArgs {
    #[command(flatten)]
    pub objective: ObjectiveArgs,
    /// Number of segments (default 40, or the length of --init).
    #[arg(long = "N")]
    pub segments: Option<usize>,
    #[arg(long = "T", default_value_t = 10.0)]
    pub total_time: f64,
    #[arg(long, default_value_t = 1.0)]
    pub delta: f64,
    /// Master seed for the random start.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Explicit initial amplitudes, comma separated.
    #[arg(long, allow_hyphen_values = true)]
    pub init: Option<FloatList>,
    /// Random start is uniform in [-A, A].
    #[arg(long = "A", default_value_t = 10.0)]
    pub half_width: f64,
    #[arg(long, default_value_t = 10_000)]
    pub max_iterations: usize,
    #[arg(long, default_value_t = 1e-8)]
    pub grad_tolerance: f64,
    /// Runs ending below this value count as trapped.
    #[arg(long, default_value_t = 0.99)]
    pub threshold: f64,
}

#[derive(Serialize)]
struct OptimizeBody {
    record: TrapRunRecord,
    trajectory: Vec<f64>,
    criticality: CriticalityVerdict,
    pulse: PulseFile,
}

pub fn optimize(p: &OptimizeArgs, ctx: &Context) -> CliResult<Output> {
    let spec = p.objective.spec()?;
    let segments = match (&p.init, p.segments) {
        (Some(init), Some(n)) if init.0.len() != n => {
            return Err(invalid(format!(
                "--init has {} amplitudes but --N is {n}",
                init.0.len()
            )))
        }
        (Some(init), _) => init.0.len(),
        (None, n) => n.unwrap_or(40),
    };
    let exp = TrapExperiment {
        segments,
        total_time: p.total_time,
        delta: p.delta,
        half_width: p.half_width,
        runs: 1,
        base_seed: p.seed,
        threshold: p.threshold,
        config: OptimizerConfig {
            max_iterations: p.max_iterations,
            grad_tolerance: p.grad_tolerance,
            ..OptimizerConfig::default()
        },
    };
    let initial = match &p.init {
        Some(init) => init.0.clone(),
        None => exp.initial_amplitudes(0),
    };
    let start = ControlPulse::uniform(p.total_time, initial.clone())?;
    let run = maximize(&spec, &start, p.delta, &exp.config)?;
    let trace = propagate(&run.pulse, p.delta, DEFAULT_NODES_PER_SEGMENT)?;
    let criticality = classify_critical(&spec, &trace, &CriticalityTolerances::default());
    let exit = match run.termination {
        Termination::Converged => 0,
        Termination::LineSearchFailure => 5,
        Termination::IterationCap => 6,
    };
    let record = TrapRunRecord {
        run_index: 0,
        seed: task_seed(p.seed, 0),
        segments,
        total_time: p.total_time,
        delta: p.delta,
        half_width: p.half_width,
        initial_amplitudes: initial,
        final_amplitudes: run.pulse.amplitudes().to_vec(),
        final_value: run.value,
        iterations: run.iterations,
        gradient_sup: run.gradient_sup,
        termination: run.termination,
        trapped: run.value < p.threshold,
    };
    let seed = p.init.is_none().then_some(p.seed);
    let manifest = RunManifest::new("optimize", seed, &ctx.timestamp, p);
    let body = OptimizeBody {
        record,
        trajectory: run.trajectory,
        criticality,
        pulse: PulseFile::from_pulse(&run.pulse),
    };
    Ok(Output {
        text: json_document(&manifest, body),
        exit,
    })
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct TrapProbArgs {
    /// Segment counts, comma separated.
    #[arg(long = "N", default_value = "1,2,4,6,8,10,15")]
    pub segments: CountList,
    #[arg(long = "T", default_value_t = 10.0)]
    pub total_time: f64,
    #[arg(long, default_value_t = 1.0)]
    pub delta: f64,
    /// Random starts are uniform in [-A, A].
    #[arg(long = "A", default_value_t = 10.0)]
    pub half_width: f64,
    #[arg(long, default_value_t = 1000)]
    pub runs: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.99)]
    pub threshold: f64,
    #[command(flatten)]
    pub objective: ObjectiveArgs,
}

/// Per-N statistics as CSV, plus the full per-run reports.
pub fn trap_prob(p: &TrapProbArgs, ctx: &Context) -> CliResult<(Output, String)> {
    let spec = p.objective.spec()?;
    if p.segments.0.is_empty() {
        return Err(invalid("at least one segment count is required"));
    }
    let mut reports: Vec<TrapReport> = Vec::new();
    for &n in &p.segments.0 {
        let exp = TrapExperiment {
            segments: n,
            total_time: p.total_time,
            delta: p.delta,
            half_width: p.half_width,
            runs: p.runs,
            base_seed: p.seed,
            threshold: p.threshold,
            config: OptimizerConfig::default(),
        };
        let report = trap_probability(&spec, &exp, ctx.workers)?;
        log::info!(
            "N = {n}: p = {} ({} aborted)",
            report.stats.probability,
            report.stats.aborted
        );
        reports.push(report);
    }
    let manifest = RunManifest::new("trap-prob", Some(p.seed), &ctx.timestamp, p);
    let rows = reports
        .iter()
        .map(|r| {
            let s = r.stats;
            vec![
                s.segments.to_string(),
                s.runs.to_string(),
                s.trapped.to_string(),
                num(s.probability),
                num(s.standard_error),
                s.aborted.to_string(),
            ]
        })
        .collect();
    let csv = csv_document(
        &manifest,
        &["N", "runs", "trapped", "probability", "standard_error", "aborted"],
        rows,
        &[],
    )?;
    #[derive(Serialize)]
    struct Records<'a> {
        reports: &'a [TrapReport],
    }
    let records = json_document(&manifest, Records { reports: &reports });
    Ok((Output::ok(csv), records))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKindArg {
    Additive,
    Multiplicative,
    Both,
}

#[derive(Debug, Clone, PartialEq, Args)]
pub struct NoiseArgs {
    /// Pulse file, or the JSON output of `optimize`.
    #[arg(long)]
    pub pulse: PathBuf,
    #[command(flatten)]
    pub objective: ObjectiveArgs,
    #[arg(long, default_value_t = 1.0)]
    pub delta: f64,
    #[arg(long, value_enum, default_value = "both")]
    pub kind: NoiseKindArg,
    /// Noise amplitudes, comma separated.
    #[arg(long = "sigma", default_value = "0,0.01,0.02,0.05")]
    pub sigmas: FloatList,
    #[arg(long, default_value_t = 10_000)]
    pub samples: usize,
    /// Noise step; must divide every segment (default: a quarter of the shortest segment).
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

/// Resolved noise run; the pulse travels inside the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseParams {
    pub pulse_source: String,
    pub pulse: PulseFile,
    pub objective: ObjectiveArgs,
    pub delta: f64,
    pub kind: NoiseKindArg,
    pub sigmas: FloatList,
    pub samples: usize,
    pub dt: f64,
    pub seed: u64,
}

impl NoiseArgs {
    pub fn resolve(&self) -> CliResult<NoiseParams> {
        let pulse = PulseFile::read(&self.pulse)?;
        let shortest = pulse
            .to_pulse()?
            .segments()
            .map(|s| s.duration())
            .fold(f64::INFINITY, f64::min);
        Ok(NoiseParams {
            pulse_source: self.pulse.display().to_string(),
            pulse,
            objective: self.objective.clone(),
            delta: self.delta,
            kind: self.kind,
            sigmas: self.sigmas.clone(),
            samples: self.samples,
            dt: self.dt.unwrap_or(shortest / 4.0),
            seed: self.seed,
        })
    }
}

pub fn noise(p: &NoiseParams, ctx: &Context) -> CliResult<Output> {
    let spec = p.objective.spec()?;
    let pulse = p.pulse.to_pulse()?;
    let trace = propagate(&pulse, p.delta, DEFAULT_NODES_PER_SEGMENT)?;
    let kinds: &[NoiseKind] = match p.kind {
        NoiseKindArg::Additive => &[NoiseKind::Additive],
        NoiseKindArg::Multiplicative => &[NoiseKind::Multiplicative],
        NoiseKindArg::Both => &[NoiseKind::Additive, NoiseKind::Multiplicative],
    };
    let mut rows = Vec::new();
    for &kind in kinds {
        for &sigma in &p.sigmas.0 {
            let r = noise_report(
                &spec,
                &trace,
                &NoiseSpec::new(kind, sigma)?,
                p.samples,
                p.dt,
                p.seed,
                ctx.workers,
            )?;
            if let Some(w) = &r.prediction.warning {
                log::warn!("{w}");
            }
            rows.push(vec![
                kind.label().to_string(),
                num(sigma),
                num(r.prediction.decrease),
                num(r.prediction.bound),
                num(r.prediction.energy),
                num(r.monte_carlo.base_value),
                num(r.monte_carlo.mean),
                num(r.monte_carlo.standard_error),
                num(r.observed_decrease()),
                r.monte_carlo.samples.to_string(),
                r.prediction.warning.clone().unwrap_or_default(),
            ]);
        }
    }
    let manifest = RunManifest::new("noise", Some(p.seed), &ctx.timestamp, p);
    let header = [
        "kind",
        "sigma",
        "predicted_decrease",
        "bound",
        "energy",
        "base_value",
        "mc_mean",
        "mc_stderr",
        "observed_decrease",
        "samples",
        "warning",
    ];
    Ok(Output::ok(csv_document(&manifest, &header, rows, &[])?))
}

const WITNESS_TARGET: &str = "0.7071067811865476,0,0.5,0.5";

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct AppendixArgs {
    /// Final time; at least pi.
    #[arg(long = "T", default_value_t = PI)]
    pub total_time: f64,
    #[arg(long = "i", default_value = "0", allow_hyphen_values = true)]
    pub initial: String,
    #[arg(long = "f", default_value = WITNESS_TARGET, allow_hyphen_values = true)]
    pub target: String,
    #[arg(long, default_value_t = 1.0)]
    pub delta: f64,
    /// Variation amplitudes for the propagation estimates, comma separated.
    #[arg(long, default_value = "1e-2,1e-3")]
    pub scales: FloatList,
    /// Piecewise-constant steps resolving each variation.
    #[arg(long, default_value_t = 4096)]
    pub steps: usize,
}

#[derive(Serialize)]
struct ScaleQuotient {
    scale: f64,
    /// `(J(sδε) − J(0))/s²`.
    quotient: f64,
}

#[derive(Serialize)]
struct RichardsonEstimate {
    scales: [f64; 2],
    estimate: f64,
    relative_error_printed: f64,
    relative_error_derived: f64,
    pass_printed: bool,
    pass_derived: bool,
}

#[derive(Serialize)]
struct VariationRow {
    variation: &'static str,
    first_variation: f64,
    second_variation: f64,
    /// Constant as printed, in units of πα.
    printed_coefficient: f64,
    printed_value: f64,
    /// Constant of the second-order expansion, in units of πα.
    derived_coefficient: f64,
    derived_value: f64,
    propagation: Vec<ScaleQuotient>,
    richardson: Vec<RichardsonEstimate>,
}

#[derive(Serialize)]
struct AppendixBody {
    alpha: f64,
    base_value: f64,
    tolerance: f64,
    variations: Vec<VariationRow>,
}

pub fn appendix(p: &AppendixArgs, ctx: &Context) -> CliResult<Output> {
    if !(p.total_time >= PI * (1.0 - 1e-12)) {
        return Err(invalid(format!("T must be at least pi, got {}", p.total_time)));
    }
    if p.scales.0.len() < 2 || p.scales.0.contains(&0.0) {
        return Err(invalid("--scales needs at least two nonzero amplitudes"));
    }
    let spec = ObjectiveSpec::transition(parse_state(&p.initial)?, parse_state(&p.target)?);
    let tol = 1e-3;
    let mut rows = Vec::new();
    let mut alpha = 0.0;
    let mut base_value = 0.0;
    let cases: [(&str, Variation, f64, f64); 2] = [
        ("indicator[0,pi]", Variation::indicator(PI)?, -1.0, 0.5),
        (
            "cos(4t)indicator[0,pi]",
            Variation::cosine(4.0, PI)?,
            1.0 / 6.0,
            -1.0 / 12.0,
        ),
    ];
    for (name, var, printed, derived) in cases {
        let e = second_order_expansion(&spec, &var, p.total_time, p.delta)?;
        alpha = e.alpha;
        base_value = e.base_value;
        let (printed_value, derived_value) = (printed * PI * alpha, derived * PI * alpha);
        let propagation = p
            .scales
            .0
            .iter()
            .map(|&s| -> CliResult<ScaleQuotient> {
                let pulse = var.scaled(s).to_pulse(p.total_time, p.steps)?;
                let j = evaluate_pulse(&spec, &pulse, p.delta)?;
                Ok(ScaleQuotient {
                    scale: s,
                    quotient: (j - e.base_value) / (s * s),
                })
            })
            .collect::<CliResult<Vec<_>>>()?;
        let rel = |x: f64, t: f64| (x - t).abs() / t.abs();
        let richardson = propagation
            .windows(2)
            .map(|w| {
                let (s1, q1, s2, q2) = (w[0].scale, w[0].quotient, w[1].scale, w[1].quotient);
                let estimate = (q2 * s1 - q1 * s2) / (s1 - s2);
                RichardsonEstimate {
                    scales: [s1, s2],
                    estimate,
                    relative_error_printed: rel(estimate, printed_value),
                    relative_error_derived: rel(estimate, derived_value),
                    pass_printed: rel(estimate, printed_value) < tol,
                    pass_derived: rel(estimate, derived_value) < tol,
                }
            })
            .collect();
        rows.push(VariationRow {
            variation: name,
            first_variation: e.first,
            second_variation: e.second,
            printed_coefficient: printed,
            printed_value,
            derived_coefficient: derived,
            derived_value,
            propagation,
            richardson,
        });
    }
    if alpha.abs() < 1e-12 {
        log::warn!("alpha vanishes for these states; relative comparisons are meaningless");
    }
    let manifest = RunManifest::new("appendix", None, &ctx.timestamp, p);
    Ok(Output::ok(json_document(
        &manifest,
        AppendixBody {
            alpha,
            base_value,
            tolerance: tol,
            variations: rows,
        },
    )))
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct QslArgs {
    #[arg(long = "i", default_value = "0", allow_hyphen_values = true)]
    pub initial: String,
    #[arg(long = "f", default_value = "1", allow_hyphen_values = true)]
    pub target: String,
    #[arg(long, default_value_t = 1.0)]
    pub delta: f64,
}

pub fn qsl(p: &QslArgs, ctx: &Context) -> CliResult<Output> {
    let t = qsl_time(&parse_state(&p.initial)?, &parse_state(&p.target)?, p.delta)?;
    #[derive(Serialize)]
    struct Body {
        t_qsl: f64,
    }
    let manifest = RunManifest::new("qsl", None, &ctx.timestamp, p);
    Ok(Output::ok(json_document(&manifest, Body { t_qsl: t })))
}

/// Reruns the computation recorded in a manifest.
pub fn replay(manifest: &RunManifest, workers: usize) -> CliResult<Output> {
    if manifest.version != env!("CARGO_PKG_VERSION") {
        log::warn!(
            "manifest written by version {}, replaying with {}",
            manifest.version,
            env!("CARGO_PKG_VERSION")
        );
    }
    let ctx = Context {
        workers,
        timestamp: manifest.timestamp.clone(),
    };
    match manifest.subcommand.as_str() {
        "scan" => scan(&manifest.parameters()?, &ctx),
        "optimize" => optimize(&manifest.parameters()?, &ctx),
        "trap-prob" => trap_prob(&manifest.parameters()?, &ctx).map(|(csv, _)| csv),
        "noise" => noise(&manifest.parameters()?, &ctx),
        "appendix" => appendix(&manifest.parameters()?, &ctx),
        "qsl" => qsl(&manifest.parameters()?, &ctx),
        other => Err(invalid(format!("manifest names unknown subcommand `{other}`"))),
    }
}
