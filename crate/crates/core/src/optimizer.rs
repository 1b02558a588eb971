//! Dense BFGS ascent over the amplitudes of a piecewise-constant pulse, the
//! random-restart trapping experiment, and brute-force landscape scans.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{final_propagator_unchecked, propagate, ControlPulse};
use crate::error::{LzError, Result};
use crate::linalg2::State2;
use crate::objectives::{evaluate_pulse_unchecked, gradient, ObjectiveSpec};
use crate::seeding::{task_rng, task_seed, with_workers};

/// Final objective below which a run counts as trapped.
pub const DEFAULT_TRAP_THRESHOLD: f64 = 0.99;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub max_iterations: usize,
    /// Stop once `max_k |∂J/∂a_k|` falls below this.
    pub grad_tolerance: f64,
    /// Sufficient-increase constant `c` of the Armijo test.
    pub armijo: f64,
    /// Step shrink factor per backtrack.
    pub shrink: f64,
    pub max_backtracks: usize,
    /// Initial inverse-Hessian scale; `None` means `1/max(1, ‖g₀‖)`.
    pub initial_scale: Option<f64>,
    pub nodes_per_segment: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            max_iterations: 10_000,
            grad_tolerance: 1e-8,
            armijo: 1e-4,
            shrink: 0.5,
            max_backtracks: 40,
            initial_scale: None,
            nodes_per_segment: crate::dynamics::DEFAULT_NODES_PER_SEGMENT,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(LzError::InvalidParameter(msg));
        if self.max_iterations < 1 {
            return bad("max_iterations must be at least 1".into());
        }
        if !(self.armijo > 0.0 && self.armijo < 0.5) {
            return bad(format!("Armijo constant must lie in (0, 0.5), got {}", self.armijo));
        }
        if !(self.shrink > 0.0 && self.shrink < 1.0) {
            return bad(format!("shrink factor must lie in (0, 1), got {}", self.shrink));
        }
        if !(self.grad_tolerance >= 0.0) {
            return bad(format!(
                "gradient tolerance must be non-negative, got {}",
                self.grad_tolerance
            ));
        }
        if let Some(s) = self.initial_scale {
            if !(s.is_finite() && s > 0.0) {
                return bad(format!("initial inverse-Hessian scale must be positive, got {s}"));
            }
        }
        if self.nodes_per_segment == 0 {
            return bad("nodes_per_segment must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    LineSearchFailure,
    IterationCap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Maximization {
    pub pulse: ControlPulse,
    pub value: f64,
    /// `J` at the start and after every accepted step.
    pub trajectory: Vec<f64>,
    pub termination: Termination,
    pub iterations: usize,
    /// Final `max_k |∂J/∂a_k|`.
    pub gradient_sup: f64,
}

struct Evaluator<'a> {
    spec: &'a ObjectiveSpec,
    template: &'a ControlPulse,
    delta: f64,
    nodes: usize,
}

impl Evaluator<'_> {
    fn pulse(&self, amps: &[f64]) -> ControlPulse {
        self.template
            .with_amplitudes(amps.to_vec())
            .expect("geometry fixed by the template")
    }

    /// `(J, max J − J)`.
    fn value(&self, amps: &[f64]) -> (f64, f64) {
        let u = final_propagator_unchecked(&self.pulse(amps), self.delta);
        (self.spec.value(&u), self.spec.deficit(&u))
    }

    fn value_and_gradient(&self, amps: &[f64]) -> (f64, f64, Vec<f64>) {
        let trace = propagate(&self.pulse(amps), self.delta, self.nodes).expect("validated inputs");
        let u = trace.final_propagator();
        (
            self.spec.value(u),
            self.spec.deficit(u),
            gradient(self.spec, &trace).segment_gradient,
        )
    }
}

/// Increase of `J` between two evaluations, measured through the deficit when
/// both sit in the upper half of the range where it is the precise quantity.
fn increase(old: (f64, f64), new: (f64, f64), midpoint: f64) -> f64 {
    if old.0 > midpoint && new.0 > midpoint {
        old.1 - new.1
    } else {
        new.0 - old.0
    }
}

impl Evaluator<'_> {
    fn midpoint(&self) -> f64 {
        0.5 * (self.spec.max_value() + self.spec.min_value())
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn scaled_identity(n: usize, scale: f64) -> Vec<f64> {
    let mut h = vec![0.0; n * n];
    for i in 0..n {
        h[i * n + i] = scale;
    }
    h
}

fn mat_vec(h: &[f64], v: &[f64]) -> Vec<f64> {
    let n = v.len();
    (0..n).map(|i| dot(&h[i * n..(i + 1) * n], v)).collect()
}

/// `H ← (I − ρsyᵀ)H(I − ρysᵀ) + ρssᵀ`, `ρ = 1/sᵀy`.
fn bfgs_update(h: &mut [f64], s: &[f64], y: &[f64], sy: f64) {
    let n = s.len();
    let rho = 1.0 / sy;
    let hy = mat_vec(h, y);
    let yhy = dot(y, &hy);
    let coeff = (1.0 + rho * yhy) * rho;
    for i in 0..n {
        for j in 0..n {
            h[i * n + j] += coeff * s[i] * s[j] - rho * (hy[i] * s[j] + s[i] * hy[j]);
        }
    }
}

#[cfg(debug_assertions)]
fn is_positive_definite(h: &[f64], n: usize) -> bool {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = 0.5 * (h[i * n + j] + h[j * n + i]);
            for k in 0..j {
                sum -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if sum <= 0.0 {
                    return false;
                }
                l[i * n + i] = sum.sqrt();
            } else {
                l[i * n + j] = sum / l[j * n + j];
            }
        }
    }
    true
}

/// BFGS ascent of `J` over the amplitudes of `initial` (geometry fixed,
/// amplitudes unconstrained). Armijo backtracking; the inverse-Hessian update
/// is skipped whenever `sᵀy ≤ 1e−12‖s‖‖y‖`.
pub fn maximize(
    spec: &ObjectiveSpec,
    initial: &ControlPulse,
    delta: f64,
    config: &OptimizerConfig,
) -> Result<Maximization> {
    config.validate()?;
    if !(delta.is_finite() && delta > 0.0) {
        return Err(LzError::InvalidParameter(format!(
            "coupling delta must be positive, got {delta}"
        )));
    }
    let eval = Evaluator {
        spec,
        template: initial,
        delta,
        nodes: config.nodes_per_segment,
    };
    let n = initial.segment_count();
    let mut x = initial.amplitudes().to_vec();
    let midpoint = eval.midpoint();
    let (mut value, mut deficit, mut grad) = eval.value_and_gradient(&x);
    check_finite(value, &grad, 0)?;
    let initial_scale = |g: &[f64]| config.initial_scale.unwrap_or(1.0 / dot(g, g).sqrt().max(1.0));
    let mut h = scaled_identity(n, initial_scale(&grad));
    let mut fresh = true;
    let mut trajectory = vec![value];
    let mut iterations = 0;

    let termination = loop {
        if sup(&grad) < config.grad_tolerance {
            break Termination::Converged;
        }
        if iterations >= config.max_iterations {
            break Termination::IterationCap;
        }
        let mut direction = mat_vec(&h, &grad);
        let mut slope = dot(&grad, &direction);
        if !(slope > 0.0) {
            h = scaled_identity(n, initial_scale(&grad));
            fresh = true;
            direction = mat_vec(&h, &grad);
            slope = dot(&grad, &direction);
        }

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..=config.max_backtracks {
            let trial: Vec<f64> = x.iter().zip(&direction).map(|(xi, di)| xi + step * di).collect();
            let (trial_value, trial_deficit) = eval.value(&trial);
            if !(trial_value.is_finite() && trial_deficit.is_finite()) {
                return Err(LzError::NumericalAbort {
                    iteration: iterations,
                    detail: format!("non-finite objective at step length {step}"),
                });
            }
            if increase((value, deficit), (trial_value, trial_deficit), midpoint) >= config.armijo * step * slope {
                accepted = Some((trial, step));
                break;
            }
            step *= config.shrink;
        }
        let Some((x_new, step)) = accepted else {
            if fresh {
                break Termination::LineSearchFailure;
            }
            // retry once along the plain gradient
            h = scaled_identity(n, initial_scale(&grad));
            fresh = true;
            continue;
        };

        iterations += 1;
        let (value_new, deficit_new, grad_new) = eval.value_and_gradient(&x_new);
        check_finite(value_new, &grad_new, iterations)?;
        let s: Vec<f64> = direction.iter().map(|d| step * d).collect();
        // gradient difference of −J
        let y: Vec<f64> = grad.iter().zip(&grad_new).map(|(g0, g1)| g0 - g1).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            bfgs_update(&mut h, &s, &y, sy);
            fresh = false;
            #[cfg(debug_assertions)]
            assert!(
                is_positive_definite(&h, n),
                "inverse Hessian lost positive definiteness"
            );
        }
        x = x_new;
        value = value_new;
        deficit = deficit_new;
        grad = grad_new;
        trajectory.push(value);
    };

    Ok(Maximization {
        pulse: eval.pulse(&x),
        value,
        trajectory,
        termination,
        iterations,
        gradient_sup: sup(&grad),
    })
}

fn check_finite(value: f64, grad: &[f64], iteration: usize) -> Result<()> {
    if value.is_finite() && grad.iter().all(|g| g.is_finite()) {
        Ok(())
    } else {
        Err(LzError::NumericalAbort {
            iteration,
            detail: "non-finite objective or gradient".into(),
        })
    }
}

/// Parameters of one random-restart experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrapExperiment {
    pub segments: usize,
    pub total_time: f64,
    pub delta: f64,
    /// Initial amplitudes are uniform in `[−half_width, half_width]`.
    pub half_width: f64,
    pub runs: usize,
    pub base_seed: u64,
    pub threshold: f64,
    pub config: OptimizerConfig,
}

impl TrapExperiment {
    /// Defaults `T = 10`, `Δ = 1`, `A = 10`, 1000 runs, threshold 0.99.
    pub fn new(segments: usize, base_seed: u64) -> Self {
        Self {
            segments,
            total_time: 10.0,
            delta: 1.0,
            half_width: 10.0,
            runs: 1000,
            base_seed,
            threshold: DEFAULT_TRAP_THRESHOLD,
            config: OptimizerConfig::default(),
        }
    }

    /// Uniform draw in `[−A, A]` from the stream of run `run_index`.
    pub fn initial_amplitudes(&self, run_index: usize) -> Vec<f64> {
        let mut rng = task_rng(self.base_seed, run_index as u64);
        let a = self.half_width;
        (0..self.segments)
            .map(|_| if a > 0.0 { rng.gen_range(-a..=a) } else { 0.0 })
            .collect()
    }

    fn validate(&self) -> Result<()> {
        if self.runs < 1 {
            return Err(LzError::InvalidParameter("runs must be at least 1".into()));
        }
        if self.segments < 1 {
            return Err(LzError::InvalidParameter("segment count must be at least 1".into()));
        }
        if !(self.half_width.is_finite() && self.half_width >= 0.0) {
            return Err(LzError::InvalidParameter(format!(
                "initial range half-width must be non-negative, got {}",
                self.half_width
            )));
        }
        self.config.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrapRunRecord {
    pub run_index: usize,
    pub seed: u64,
    pub segments: usize,
    pub total_time: f64,
    pub delta: f64,
    pub half_width: f64,
    pub initial_amplitudes: Vec<f64>,
    pub final_amplitudes: Vec<f64>,
    pub final_value: f64,
    pub iterations: usize,
    pub gradient_sup: f64,
    pub termination: Termination,
    pub trapped: bool,
}

/// A run that ended in a numerical abort.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunAbort {
    pub run_index: usize,
    pub seed: u64,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrapStats {
    pub segments: usize,
    /// Completed runs (aborts excluded).
    pub runs: usize,
    pub trapped: usize,
    pub probability: f64,
    pub standard_error: f64,
    pub aborted: usize,
}

impl TrapStats {
    pub fn from_counts(segments: usize, runs: usize, trapped: usize, aborted: usize) -> Self {
        let p = if runs == 0 { 0.0 } else { trapped as f64 / runs as f64 };
        let se = if runs == 0 {
            0.0
        } else {
            (p * (1.0 - p) / runs as f64).sqrt()
        };
        Self {
            segments,
            runs,
            trapped,
            probability: p,
            standard_error: se,
            aborted,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrapReport {
    pub stats: TrapStats,
    /// Sorted by run index.
    pub records: Vec<TrapRunRecord>,
    pub aborts: Vec<RunAbort>,
}

/// Runs one seeded optimization of the experiment.
pub fn trap_run(
    spec: &ObjectiveSpec,
    exp: &TrapExperiment,
    run_index: usize,
) -> std::result::Result<TrapRunRecord, RunAbort> {
    let seed = task_seed(exp.base_seed, run_index as u64);
    let initial_amplitudes = exp.initial_amplitudes(run_index);
    let abort = |message: String| RunAbort {
        run_index,
        seed,
        message,
    };
    let pulse = ControlPulse::uniform(exp.total_time, initial_amplitudes.clone()).map_err(|e| abort(e.to_string()))?;
    let result = maximize(spec, &pulse, exp.delta, &exp.config).map_err(|e| abort(e.to_string()))?;
    Ok(TrapRunRecord {
        run_index,
        seed,
        segments: exp.segments,
        total_time: exp.total_time,
        delta: exp.delta,
        half_width: exp.half_width,
        initial_amplitudes,
        final_amplitudes: result.pulse.amplitudes().to_vec(),
        final_value: result.value,
        iterations: result.iterations,
        gradient_sup: result.gradient_sup,
        termination: result.termination,
        trapped: result.value < exp.threshold,
    })
}

/// Fraction of random starts whose BFGS ascent ends below the threshold.
/// Output depends only on the experiment parameters, never on `workers`.
pub fn trap_probability(spec: &ObjectiveSpec, exp: &TrapExperiment, workers: usize) -> Result<TrapReport> {
    exp.validate()?;
    ControlPulse::zero(exp.segments, exp.total_time)?;
    if !(exp.delta.is_finite() && exp.delta > 0.0) {
        return Err(LzError::InvalidParameter(format!(
            "coupling delta must be positive, got {}",
            exp.delta
        )));
    }
    let outcomes: Vec<_> = with_workers(workers, || {
        (0..exp.runs).into_par_iter().map(|k| trap_run(spec, exp, k)).collect()
    })?;
    let mut records = Vec::with_capacity(exp.runs);
    let mut aborts = Vec::new();
    for outcome in outcomes {
        match outcome {
            Ok(r) => records.push(r),
            Err(a) => {
                log::warn!("run {} aborted: {}", a.run_index, a.message);
                aborts.push(a);
            }
        }
    }
    let trapped = records.iter().filter(|r| r.trapped).count();
    Ok(TrapReport {
        stats: TrapStats::from_counts(exp.segments, records.len(), trapped, aborts.len()),
        records,
        aborts,
    })
}

/// Evenly spaced axis; `lo == hi` yields a single point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisRange {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl AxisRange {
    pub fn new(lo: f64, hi: f64, points: usize) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite()) || hi < lo {
            return Err(LzError::InvalidParameter(format!("invalid range {lo}:{hi}")));
        }
        if points == 0 {
            return Err(LzError::InvalidParameter("a range needs at least one point".into()));
        }
        Ok(Self { lo, hi, points })
    }

    pub fn values(&self) -> Vec<f64> {
        if self.lo == self.hi || self.points == 1 {
            return vec![self.lo];
        }
        let step = (self.hi - self.lo) / (self.points - 1) as f64;
        (0..self.points)
            .map(|k| {
                if k + 1 == self.points {
                    self.hi
                } else {
                    self.lo + k as f64 * step
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanGrid {
    One(AxisRange),
    Two(AxisRange, AxisRange),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandscapeScan {
    pub axes: Vec<Vec<f64>>,
    /// Row-major over the axes (first axis slowest).
    pub values: Vec<f64>,
    /// `J_{0→1}` closed form for single-segment scans of the `|0⟩ → |1⟩` transition.
    pub closed_form: Option<Vec<f64>>,
    pub max_discrepancy: Option<f64>,
}

impl LandscapeScan {
    pub fn value_at(&self, index: &[usize]) -> f64 {
        match index {
            [i] => self.values[*i],
            [i, j] => self.values[i * self.axes[1].len() + j],
            _ => panic!("scan index must have one or two components"),
        }
    }

    /// Grid points strictly above all their (8-connected) neighbours, excluding the border.
    pub fn strict_local_maxima(&self) -> Vec<Vec<usize>> {
        match self.axes.len() {
            1 => {
                let v = &self.values;
                (1..v.len().saturating_sub(1))
                    .filter(|&i| v[i] > v[i - 1] && v[i] > v[i + 1])
                    .map(|i| vec![i])
                    .collect()
            }
            _ => {
                let (n0, n1) = (self.axes[0].len(), self.axes[1].len());
                let mut out = Vec::new();
                for i in 1..n0.saturating_sub(1) {
                    for j in 1..n1.saturating_sub(1) {
                        let c = self.value_at(&[i, j]);
                        let strict = (i - 1..=i + 1)
                            .flat_map(|a| (j - 1..=j + 1).map(move |b| (a, b)))
                            .filter(|&(a, b)| (a, b) != (i, j))
                            .all(|(a, b)| c > self.value_at(&[a, b]));
                        if strict {
                            out.push(vec![i, j]);
                        }
                    }
                }
                out
            }
        }
    }

    /// Amplitudes of a grid point.
    pub fn point(&self, index: &[usize]) -> Vec<f64> {
        index.iter().zip(&self.axes).map(|(&k, axis)| axis[k]).collect()
    }
}

/// `J_{0→1}(a) = Δ² sin²(T√(Δ²+a²))/(Δ²+a²)` for a constant control `a`.
pub fn constant_control_transition(total_time: f64, delta: f64, a: f64) -> f64 {
    let r2 = delta * delta + a * a;
    delta * delta * (total_time * r2.sqrt()).sin().powi(2) / r2
}

fn is_zero_to_one(spec: &ObjectiveSpec) -> bool {
    match spec {
        ObjectiveSpec::Transition { initial, target } => {
            (initial.inner(&State2::basis(0)).norm() - 1.0).abs() < 1e-12
                && (target.inner(&State2::basis(1)).norm() - 1.0).abs() < 1e-12
        }
        _ => false,
    }
}

/// Dense objective grid over uniform one- or two-segment pulses.
pub fn landscape_scan(spec: &ObjectiveSpec, total_time: f64, delta: f64, grid: &ScanGrid) -> Result<LandscapeScan> {
    ControlPulse::zero(1, total_time)?;
    if !(delta.is_finite() && delta > 0.0) {
        return Err(LzError::InvalidParameter(format!(
            "coupling delta must be positive, got {delta}"
        )));
    }
    let axes: Vec<Vec<f64>> = match grid {
        ScanGrid::One(a) => vec![AxisRange::new(a.lo, a.hi, a.points)?.values()],
        ScanGrid::Two(a, b) => vec![
            AxisRange::new(a.lo, a.hi, a.points)?.values(),
            AxisRange::new(b.lo, b.hi, b.points)?.values(),
        ],
    };
    let points: Vec<Vec<f64>> = match axes.as_slice() {
        [a] => a.iter().map(|&x| vec![x]).collect(),
        [a, b] => a.iter().flat_map(|&x| b.iter().map(move |&y| vec![x, y])).collect(),
        _ => unreachable!(),
    };
    let values = points
        .par_iter()
        .map(|amps| {
            let pulse = ControlPulse::uniform(total_time, amps.clone()).expect("validated geometry");
            evaluate_pulse_unchecked(spec, &pulse, delta)
        })
        .collect::<Vec<f64>>();
    let (closed_form, max_discrepancy) = if axes.len() == 1 && is_zero_to_one(spec) {
        let cf: Vec<f64> = axes[0]
            .iter()
            .map(|&a| constant_control_transition(total_time, delta, a))
            .collect();
        let worst = cf.iter().zip(&values).fold(0.0f64, |m, (c, v)| m.max((c - v).abs()));
        (Some(cf), Some(worst))
    } else {
        (None, None)
    };
    Ok(LandscapeScan {
        axes,
        values,
        closed_form,
        max_discrepancy,
    })
}
