//! Control objectives on `U_T`, their functional gradients and Hessian
//! diagonals, the critical-point classifier, and the second-order expansion
//! of the transition probability around the zero control.
//!
//! All three objectives share one first-order variation: perturbing the
//! control by `δε(t)` moves the final propagator by
//! `δU_T = −i U_T ∫ V_t δε(t) dt` with `V_t = U_t†σzU_t`. Each objective maps
//! `δU_T` linearly to `δJ`, which we write as `l(t) = Re tr(G V_t)` for a
//! fixed sensitivity matrix `G` computed from `U_T`.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dynamics::{final_propagator_unchecked, propagate, ControlPulse, PropagationTrace};
use crate::error::{LzError, Result};
use crate::linalg2::{conjugate_by, expm_su2, pauli, Axis, Complex2x2, State2, Unitary2};
use crate::quadrature::gauss_legendre_on;

/// Fixed data of one objective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ObjectiveSpec {
    /// `J = |⟨f|U_T|i⟩|²`.
    Transition { initial: State2, target: State2 },
    /// `J = Tr[U_T ρ₀ U_T† O]`.
    Observable { rho0: Complex2x2, observable: Complex2x2 },
    /// `J = ¼|Tr(W†U_T)|²`.
    Gate { target: Unitary2 },
}

impl ObjectiveSpec {
    pub fn transition(initial: State2, target: State2) -> Self {
        Self::Transition { initial, target }
    }

    /// Validates `ρ₀` (Hermitian, PSD, unit trace) and `O` (Hermitian).
    pub fn observable(rho0: Complex2x2, observable: Complex2x2) -> Result<Self> {
        if !rho0.is_hermitian(1e-12) {
            return Err(LzError::InvalidObjective("rho0 is not Hermitian".into()));
        }
        if (rho0.trace() - Complex64::new(1.0, 0.0)).norm() > 1e-10 {
            return Err(LzError::InvalidObjective(format!(
                "rho0 trace is {}, expected 1",
                rho0.trace()
            )));
        }
        let (lo, _) = hermitian_eigenvalues(&rho0);
        if lo < -1e-10 {
            return Err(LzError::InvalidObjective(format!(
                "rho0 is not positive semidefinite (eigenvalue {lo})"
            )));
        }
        if !observable.is_hermitian(1e-12) {
            return Err(LzError::InvalidObjective("observable is not Hermitian".into()));
        }
        Ok(Self::Observable { rho0, observable })
    }

    pub fn gate(target: Unitary2) -> Self {
        Self::Gate { target }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Self::Transition { .. } => "transition",
            Self::Observable { .. } => "observable",
            Self::Gate { .. } => "gate",
        }
    }

    /// Largest value the objective takes over SU(2).
    pub fn max_value(&self) -> f64 {
        match self {
            Self::Observable { rho0, observable } => {
                let (r0, r1) = hermitian_eigenvalues(rho0);
                let (o0, o1) = hermitian_eigenvalues(observable);
                r1 * o1 + r0 * o0
            }
            _ => 1.0,
        }
    }

    /// Smallest value the objective takes over SU(2).
    pub fn min_value(&self) -> f64 {
        match self {
            Self::Observable { rho0, observable } => {
                let (r0, r1) = hermitian_eigenvalues(rho0);
                let (o0, o1) = hermitian_eigenvalues(observable);
                r1 * o0 + r0 * o1
            }
            _ => 0.0,
        }
    }

    /// `J` as a function of the final propagator. Near the maximum, transition
    /// and gate values are taken as `1 − deficit` so they keep full precision
    /// and never exceed 1.
    pub fn value(&self, u: &Unitary2) -> f64 {
        let um = u.matrix();
        match self {
            Self::Transition { initial, target } => {
                let j = um.matrix_element(target, initial).norm_sqr();
                if j > 0.5 {
                    1.0 - self.deficit(u)
                } else {
                    j
                }
            }
            Self::Observable { rho0, observable } => (*um * *rho0 * um.dagger() * *observable).trace().re,
            Self::Gate { target } => {
                let j = 0.25 * (target.matrix().dagger() * *um).trace().norm_sqr();
                if j > 0.5 {
                    1.0 - self.deficit(u)
                } else {
                    j
                }
            }
        }
    }

    /// `max J − J`, computed without cancellation for transition and gate objectives.
    pub fn deficit(&self, u: &Unitary2) -> f64 {
        let um = u.matrix();
        match self {
            // |⟨f|U|i⟩|² + |⟨f⊥|U|i⟩|² = 1
            Self::Transition { initial, target } => {
                um.matrix_element(&target.orthogonal_complement(), initial).norm_sqr()
            }
            Self::Observable { .. } => self.max_value() - self.value(u),
            // W†U = e^{iφ}[[a, b], [−b̄, ā]]: J = (Re a)², 1 − J = (Im a)² + |b|²
            Self::Gate { target } => {
                let v = target.matrix().dagger() * *um;
                0.25 * (v.get(0, 0) - v.get(1, 1)).norm_sqr() + v.get(0, 1).norm_sqr()
            }
        }
    }

    /// Sensitivity `G` with `l(t) = Re tr(G V_t)`.
    fn sensitivity(&self, u: &Unitary2) -> Complex2x2 {
        let um = *u.matrix();
        let minus_i = Complex64::new(0.0, -1.0);
        match self {
            Self::Transition { initial, target } => {
                let c = um.matrix_element(target, initial);
                // −2i c̄ |i⟩⟨f|U_T
                (Complex2x2::outer(initial, target) * um).scale(minus_i * 2.0 * c.conj())
            }
            Self::Observable { rho0, observable } => {
                // −2i ρ₀ U_T† O U_T
                (*rho0 * um.dagger() * *observable * um).scale(minus_i * 2.0)
            }
            Self::Gate { target } => {
                // −(i/2) conj(tr W†U_T) W†U_T
                let wu = target.matrix().dagger() * um;
                wu.scale(minus_i * 0.5 * wu.trace().conj())
            }
        }
    }
}

impl fmt::Display for ObjectiveSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.kind_name())
    }
}

/// Ascending eigenvalues of a Hermitian 2×2 matrix.
pub fn hermitian_eigenvalues(h: &Complex2x2) -> (f64, f64) {
    let a = h.get(0, 0).re;
    let d = h.get(1, 1).re;
    let mean = 0.5 * (a + d);
    let radius = (0.25 * (a - d) * (a - d) + h.get(0, 1).norm_sqr()).sqrt();
    (mean - radius, mean + radius)
}

/// Objective value at the end of a trace.
pub fn evaluate(spec: &ObjectiveSpec, trace: &PropagationTrace) -> f64 {
    spec.value(trace.final_propagator())
}

/// Objective value of a pulse without building quadrature nodes.
pub fn evaluate_pulse(spec: &ObjectiveSpec, pulse: &ControlPulse, delta: f64) -> Result<f64> {
    let u = crate::dynamics::final_propagator(pulse, delta)?;
    Ok(spec.value(&u))
}

#[inline]
pub(crate) fn evaluate_pulse_unchecked(spec: &ObjectiveSpec, pulse: &ControlPulse, delta: f64) -> f64 {
    spec.value(&final_propagator_unchecked(pulse, delta))
}

/// Functional gradient `l(t) = δJ/δε(t)` sampled at the trace's quadrature
/// nodes, plus its per-segment integrals `∂J/∂a_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientSample {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub weights: Vec<f64>,
    pub segments: Vec<usize>,
    pub segment_gradient: Vec<f64>,
}

impl GradientSample {
    /// `max_t |l(t)|` over the nodes.
    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `max_k |∂J/∂a_k|`.
    pub fn segment_sup_norm(&self) -> f64 {
        self.segment_gradient.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

pub fn gradient(spec: &ObjectiveSpec, trace: &PropagationTrace) -> GradientSample {
    let g = spec.sensitivity(trace.final_propagator());
    let n = trace.nodes().len();
    let mut sample = GradientSample {
        times: Vec::with_capacity(n),
        values: Vec::with_capacity(n),
        weights: Vec::with_capacity(n),
        segments: Vec::with_capacity(n),
        segment_gradient: vec![0.0; trace.pulse().segment_count()],
    };
    for node in trace.nodes() {
        // Re tr(G U†σzU) = Re[(U G U†)_00 − (U G U†)_11]
        let u = node.propagator.matrix();
        let m = *u * g * u.dagger();
        let l = (m.get(0, 0) - m.get(1, 1)).re;
        sample.times.push(node.t);
        sample.values.push(l);
        sample.weights.push(node.weight);
        sample.segments.push(node.segment);
        sample.segment_gradient[node.segment] += node.weight * l;
    }
    sample
}

/// Objective value and segment gradient in one pass.
pub fn value_and_gradient(
    spec: &ObjectiveSpec,
    pulse: &ControlPulse,
    delta: f64,
    nodes_per_segment: usize,
) -> Result<(f64, GradientSample)> {
    let trace = propagate(pulse, delta, nodes_per_segment)?;
    Ok((evaluate(spec, &trace), gradient(spec, &trace)))
}

/// Equal-time Hessian diagonal `H₀(t,t)` at the quadrature nodes.
///
/// Transition: `−2|⟨i|V_t|i⊥⟩|²`; gate: `−2`. Both are the second variation at
/// a global maximum of the objective, so the trace should sit at (or very near)
/// an optimal control.
pub fn hessian_diagonal(spec: &ObjectiveSpec, trace: &PropagationTrace) -> Result<Vec<(f64, f64)>> {
    match spec {
        ObjectiveSpec::Transition { initial, .. } => {
            let perp = initial.orthogonal_complement();
            let z = pauli(Axis::Z);
            Ok(trace
                .nodes()
                .iter()
                .map(|node| {
                    let v = conjugate_by(&node.propagator, &z);
                    (node.t, -2.0 * v.matrix_element(initial, &perp).norm_sqr())
                })
                .collect())
        }
        ObjectiveSpec::Gate { .. } => Ok(trace.nodes().iter().map(|n| (n.t, -2.0)).collect()),
        ObjectiveSpec::Observable { .. } => Err(LzError::UnsupportedObjective {
            operation: "Hessian diagonal",
            objective: "observable",
        }),
    }
}

/// Thresholds for [`classify_critical`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalityTolerances {
    /// Node sup-norm of `l(t)` below which the control counts as critical.
    pub grad: f64,
    /// Distance of `J` from its extreme values.
    pub value: f64,
    /// Pulse sup-norm below which the control counts as zero.
    pub zero_control: f64,
}

impl Default for CriticalityTolerances {
    fn default() -> Self {
        Self {
            grad: 1e-8,
            value: 1e-6,
            zero_control: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criticality {
    GlobalMax,
    GlobalMin,
    ZeroControl,
    NotCritical,
    /// Critical, yet neither extreme nor zero control.
    Unresolved,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalityVerdict {
    pub classification: Criticality,
    pub objective: f64,
    /// `|⟨i|U_T†|f⟩|` for transition objectives.
    pub transition_overlap: Option<f64>,
    pub gradient_sup: f64,
    pub pulse_sup: f64,
}

/// Sorts a control into the only allowed kinds of critical points: global
/// maximum, global minimum, or the zero control.
pub fn classify_critical(
    spec: &ObjectiveSpec,
    trace: &PropagationTrace,
    tol: &CriticalityTolerances,
) -> CriticalityVerdict {
    let objective = evaluate(spec, trace);
    let gradient_sup = gradient(spec, trace).sup_norm();
    let pulse_sup = trace.pulse().sup_norm();
    let transition_overlap = match spec {
        ObjectiveSpec::Transition { initial, target } => {
            Some(trace.final_propagator().matrix().matrix_element(target, initial).norm())
        }
        _ => None,
    };
    let classification = if gradient_sup >= tol.grad {
        Criticality::NotCritical
    } else if objective >= spec.max_value() - tol.value {
        Criticality::GlobalMax
    } else if objective <= spec.min_value() + tol.value {
        Criticality::GlobalMin
    } else if pulse_sup < tol.zero_control {
        Criticality::ZeroControl
    } else {
        log::warn!(
            "unresolved critical control for {spec} objective: J = {objective}, \
             sup|l| = {gradient_sup:e}, sup|eps| = {pulse_sup}"
        );
        Criticality::Unresolved
    };
    CriticalityVerdict {
        classification,
        objective,
        transition_overlap,
        gradient_sup,
        pulse_sup,
    }
}

/// Control variation `δε(t)` supported on `[0, support_end]`.
#[derive(Clone)]
pub struct Variation {
    support_end: f64,
    shape: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl fmt::Debug for Variation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Variation")
            .field("support_end", &self.support_end)
            .finish()
    }
}

impl Variation {
    /// `shape` must be smooth on `[0, support_end]`.
    pub fn new(support_end: f64, shape: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Result<Self> {
        if !(support_end.is_finite() && support_end > 0.0) {
            return Err(LzError::InvalidParameter(format!(
                "variation support must be positive, got {support_end}"
            )));
        }
        Ok(Self {
            support_end,
            shape: Arc::new(shape),
        })
    }

    /// `χ[0, support_end](t)`.
    pub fn indicator(support_end: f64) -> Result<Self> {
        Self::new(support_end, |_| 1.0)
    }

    /// `cos(ωt) χ[0, support_end](t)`.
    pub fn cosine(frequency: f64, support_end: f64) -> Result<Self> {
        Self::new(support_end, move |t| (frequency * t).cos())
    }

    pub fn support_end(&self) -> f64 {
        self.support_end
    }

    pub fn value(&self, t: f64) -> f64 {
        if (0.0..=self.support_end).contains(&t) {
            (self.shape)(t)
        } else {
            0.0
        }
    }

    pub fn scaled(&self, s: f64) -> Variation {
        let shape = Arc::clone(&self.shape);
        Variation {
            support_end: self.support_end,
            shape: Arc::new(move |t| s * shape(t)),
        }
    }

    /// Piecewise-constant approximation with `steps` midpoint samples over the
    /// support, padded with a zero segment up to `total_time`.
    pub fn to_pulse(&self, total_time: f64, steps: usize) -> Result<ControlPulse> {
        if total_time < self.support_end {
            return Err(LzError::InvalidParameter(format!(
                "total time {total_time} shorter than variation support {}",
                self.support_end
            )));
        }
        let h = self.support_end / steps as f64;
        let amps = (0..steps).map(|k| (self.shape)((k as f64 + 0.5) * h)).collect();
        let head = ControlPulse::uniform(self.support_end, amps)?;
        let tail = total_time - self.support_end;
        if tail > 1e-12 * total_time {
            Ok(head.concat(&ControlPulse::constant(tail, 0.0)?))
        } else {
            Ok(head)
        }
    }
}

/// First and second variations of the transition probability around `ε ≡ 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SecondOrderExpansion {
    /// `J(0)`.
    pub base_value: f64,
    /// `δJ₁ = 2Re(c̄⟨f'|A₁|i⟩)`.
    pub first: f64,
    /// `δJ₂ = |⟨f'|A₁|i⟩|² + 2Re(c̄⟨f'|A₂|i⟩)`.
    pub second: f64,
    /// `α = L(σx)`.
    pub alpha: f64,
}

/// Gauss-Legendre nodes per axis for the ordered double integral.
pub const EXPANSION_NODES: usize = 64;

fn transition_states(spec: &ObjectiveSpec) -> Result<(&State2, &State2)> {
    match spec {
        ObjectiveSpec::Transition { initial, target } => Ok((initial, target)),
        other => Err(LzError::UnsupportedObjective {
            operation: "second-order expansion",
            objective: other.kind_name(),
        }),
    }
}

/// `L(A) = 2 Im[⟨i|U_T†|f⟩⟨f|U_T A|i⟩]` for the free propagator `U_T = e^{−iTΔσx}`.
pub fn zero_control_functional(spec: &ObjectiveSpec, total_time: f64, delta: f64, a: &Complex2x2) -> Result<f64> {
    let (initial, target) = transition_states(spec)?;
    let u = expm_su2(delta, 0.0, total_time)?;
    let c = u.matrix().matrix_element(target, initial);
    let fa = (*u.matrix() * *a).matrix_element(target, initial);
    Ok(2.0 * (c.conj() * fa).im)
}

/// Expands `J(δε) = J(0) + δJ₁ + δJ₂ + o(‖δε‖²)` in the interaction frame of
/// the free evolution, `U_T^{δε} = U_T^0 W_T` with `Ẇ = −iδε(t)V_tW`,
/// `V_t = U_t^{0†}σzU_t^0`. `A₁` and `A₂` are integrated with iterated
/// Gauss-Legendre over the ordered simplex `t₂ < t₁`.
pub fn second_order_expansion(
    spec: &ObjectiveSpec,
    variation: &Variation,
    total_time: f64,
    delta: f64,
) -> Result<SecondOrderExpansion> {
    let (initial, target) = transition_states(spec)?;
    if !(total_time.is_finite() && total_time >= variation.support_end()) {
        return Err(LzError::InvalidParameter(format!(
            "total time {total_time} must cover the variation support [0, {}]",
            variation.support_end()
        )));
    }
    let z = pauli(Axis::Z);
    let v_at = |t: f64| -> Result<Complex2x2> { Ok(conjugate_by(&expm_su2(delta, 0.0, t)?, &z)) };

    let (outer_t, outer_w) = gauss_legendre_on(EXPANSION_NODES, 0.0, variation.support_end());
    let mut a1 = Complex2x2::zero();
    let mut a2 = Complex2x2::zero();
    for (&t1, &w1) in outer_t.iter().zip(&outer_w) {
        let d1 = variation.value(t1);
        let v1 = v_at(t1)?;
        a1 = a1 + v1.scale_re(w1 * d1);
        let (inner_t, inner_w) = gauss_legendre_on(EXPANSION_NODES, 0.0, t1);
        let mut inner = Complex2x2::zero();
        for (&t2, &w2) in inner_t.iter().zip(&inner_w) {
            inner = inner + v_at(t2)?.scale_re(w2 * variation.value(t2));
        }
        a2 = a2 + (v1 * inner).scale_re(w1 * d1);
    }
    let a1 = a1.scale(Complex64::new(0.0, -1.0));
    let a2 = -a2;

    let u = expm_su2(delta, 0.0, total_time)?;
    let um = u.matrix();
    // ⟨f'| = ⟨f|U_T^0
    let c = um.matrix_element(target, initial);
    let f_a1 = (*um * a1).matrix_element(target, initial);
    let f_a2 = (*um * a2).matrix_element(target, initial);
    Ok(SecondOrderExpansion {
        base_value: c.norm_sqr(),
        first: 2.0 * (c.conj() * f_a1).re,
        second: f_a1.norm_sqr() + 2.0 * (c.conj() * f_a2).re,
        alpha: zero_control_functional(spec, total_time, delta, &pauli(Axis::X))?,
    })
}

/// Second variation from full nonlinear propagation: `q(s) = (J(sδε) − J(0))/s²`
/// at two scales, Richardson-extrapolated to remove the `O(s)` term.
/// Only valid when the first variation vanishes.
pub fn richardson_second_variation(
    spec: &ObjectiveSpec,
    variation: &Variation,
    total_time: f64,
    delta: f64,
    scales: (f64, f64),
    steps: usize,
) -> Result<f64> {
    transition_states(spec)?;
    let base = evaluate_pulse(spec, &ControlPulse::zero(1, total_time)?, delta)?;
    let q = |s: f64| -> Result<f64> {
        let pulse = variation.scaled(s).to_pulse(total_time, steps)?;
        Ok((evaluate_pulse(spec, &pulse, delta)? - base) / (s * s))
    };
    let (s1, s2) = scales;
    let (q1, q2) = (q(s1)?, q(s2)?);
    Ok((q2 * s1 - q1 * s2) / (s1 - s2))
}
