//! Weak white noise on an optimized control.
//!
//! The control fluctuates as `ε(t) = ε₀(t) + ϱ(t)ξ(t)` with `E[ξ(t)ξ(t′)] =
//! σ²δ(t − t′)`, `ϱ ≡ 1` for additive and `ϱ = ε₀` for multiplicative noise.
//! To second order the averaged objective drops by
//! `D = −(σ²/2)∫ H₀(t,t) ϱ(t)² dt ≥ 0`, and `|H₀(t,t)| ≤ 2` bounds it by
//! `σ²T` (additive) or `σ²E` (multiplicative, `E` the pulse energy).

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{final_propagator_unchecked, ControlPulse, PropagationTrace};
use crate::error::{LzError, Result};
use crate::linalg2::State2;
use crate::objectives::{gradient, hessian_diagonal, ObjectiveSpec};
use crate::seeding::{task_rng, with_workers};

/// Node gradient sup-norm above which the trace is not treated as optimal.
pub const OPTIMALITY_WARNING_GRADIENT: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    Additive,
    Multiplicative,
}

impl NoiseKind {
    pub fn label(&self) -> &'static str {
        match self {
            Self::Additive => "additive",
            Self::Multiplicative => "multiplicative",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub sigma: f64,
}

impl NoiseSpec {
    pub fn new(kind: NoiseKind, sigma: f64) -> Result<Self> {
        if !(sigma.is_finite() && sigma >= 0.0) {
            return Err(LzError::InvalidParameter(format!(
                "noise sigma must be non-negative, got {sigma}"
            )));
        }
        Ok(Self { kind, sigma })
    }

    /// `ϱ` for a segment of amplitude `a`.
    #[inline]
    fn profile(&self, amplitude: f64) -> f64 {
        match self.kind {
            NoiseKind::Additive => 1.0,
            NoiseKind::Multiplicative => amplitude,
        }
    }
}

/// Second-order prediction for one noise setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecreasePrediction {
    pub decrease: f64,
    /// `σ²T` or `σ²E`.
    pub bound: f64,
    pub energy: f64,
    pub gradient_sup: f64,
    /// Set when the trace is visibly off-optimum.
    pub warning: Option<String>,
}

/// `D = −(σ²/2)∫ H₀(t,t)ϱ(t)² dt` from the closed-form Hessian diagonal.
pub fn predicted_decrease(
    spec: &ObjectiveSpec,
    trace: &PropagationTrace,
    noise: &NoiseSpec,
) -> Result<DecreasePrediction> {
    let diag = hessian_diagonal(spec, trace)?;
    let pulse = trace.pulse();
    let sigma2 = noise.sigma * noise.sigma;
    let integral: f64 = diag
        .iter()
        .zip(trace.nodes())
        .map(|(&(_, h), node)| {
            let rho = noise.profile(pulse.amplitudes()[node.segment]);
            node.weight * h * rho * rho
        })
        .sum();
    let energy = pulse.energy();
    let bound = match noise.kind {
        NoiseKind::Additive => sigma2 * pulse.total_time(),
        NoiseKind::Multiplicative => sigma2 * energy,
    };
    let gradient_sup = gradient(spec, trace).sup_norm();
    let warning = (gradient_sup > OPTIMALITY_WARNING_GRADIENT).then(|| {
        format!(
            "gradient sup-norm {gradient_sup:e} exceeds {OPTIMALITY_WARNING_GRADIENT:e}; \
             the Hessian-diagonal formula holds at optimal controls only"
        )
    });
    Ok(DecreasePrediction {
        decrease: -0.5 * sigma2 * integral,
        bound,
        energy,
        gradient_sup,
        warning,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloEstimate {
    /// Noiseless `J(ε₀)`.
    pub base_value: f64,
    pub mean: f64,
    pub standard_error: f64,
    pub samples: usize,
}

/// Averages `J` over `samples` noisy realizations. Noise is held constant on
/// steps of length `dt_noise` (which must divide every segment) with variance
/// `σ²/dt_noise`, the discretization of `σ²δ(t − t′)`.
#[allow(clippy::too_many_arguments)]
pub fn monte_carlo_noisy_objective(
    spec: &ObjectiveSpec,
    pulse: &ControlPulse,
    delta: f64,
    noise: &NoiseSpec,
    samples: usize,
    dt_noise: f64,
    seed: u64,
    workers: usize,
) -> Result<MonteCarloEstimate> {
    if samples < 2 {
        return Err(LzError::InvalidParameter(format!(
            "need at least 2 samples, got {samples}"
        )));
    }
    if !(delta.is_finite() && delta > 0.0) {
        return Err(LzError::InvalidParameter(format!(
            "coupling delta must be positive, got {delta}"
        )));
    }
    let (fine, _) = pulse.subdivide(dt_noise)?;
    let base_value = spec.value(&final_propagator_unchecked(&fine, delta));
    let draw = |k: usize| -> f64 {
        let mut rng = task_rng(seed, k as u64);
        let amps: Vec<f64> = fine
            .segments()
            .map(|s| {
                let z: f64 = StandardNormal.sample(&mut rng);
                s.amplitude + noise.profile(s.amplitude) * noise.sigma / s.duration().sqrt() * z
            })
            .collect();
        let noisy = fine.with_amplitudes(amps).expect("finite amplitudes on a valid grid");
        spec.value(&final_propagator_unchecked(&noisy, delta))
    };
    let values: Vec<f64> = with_workers(workers, || (0..samples).into_par_iter().map(draw).collect())?;
    let n = values.len() as f64;
    let shift = values.iter().map(|v| v - base_value).sum::<f64>() / n;
    let var = values.iter().map(|v| (v - base_value - shift).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(MonteCarloEstimate {
        base_value,
        mean: base_value + shift,
        standard_error: (var / n).sqrt(),
        samples,
    })
}

/// Prediction and Monte Carlo side by side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseReport {
    pub noise: NoiseSpec,
    pub prediction: DecreasePrediction,
    pub monte_carlo: MonteCarloEstimate,
}

impl NoiseReport {
    /// `J(ε₀) − E[J]` from the samples.
    pub fn observed_decrease(&self) -> f64 {
        self.monte_carlo.base_value - self.monte_carlo.mean
    }
}

#[allow(clippy::too_many_arguments)]
pub fn noise_report(
    spec: &ObjectiveSpec,
    trace: &PropagationTrace,
    noise: &NoiseSpec,
    samples: usize,
    dt_noise: f64,
    seed: u64,
    workers: usize,
) -> Result<NoiseReport> {
    let prediction = predicted_decrease(spec, trace, noise)?;
    let monte_carlo = monte_carlo_noisy_objective(
        spec,
        trace.pulse(),
        trace.delta(),
        noise,
        samples,
        dt_noise,
        seed,
        workers,
    )?;
    Ok(NoiseReport {
        noise: *noise,
        prediction,
        monte_carlo,
    })
}

/// `T_QSL = arccos(|⟨i|f⟩|)/ΔE₀` with `ΔE₀` the spread of `H₀ = Δσx` in `|i⟩`.
pub fn qsl_time(initial: &State2, target: &State2, delta: f64) -> Result<f64> {
    if !(delta.is_finite() && delta > 0.0) {
        return Err(LzError::InvalidParameter(format!(
            "coupling delta must be positive, got {delta}"
        )));
    }
    let [a, b] = initial.amplitudes();
    // ⟨σx⟩ = 2 Re(ā b), ⟨σx²⟩ = 1
    let mean_x = 2.0 * (a.conj() * b).re;
    let spread = delta * (1.0 - mean_x * mean_x).max(0.0).sqrt();
    if spread <= 1e-12 * delta {
        return Err(LzError::UndefinedSpeedLimit);
    }
    Ok(initial.inner(target).norm().min(1.0).acos() / spread)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::propagate;
    use crate::linalg2::Unitary2;
    use num_complex::Complex64;
    use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2};

    #[test]
    fn sigma_validation() {
        assert!(NoiseSpec::new(NoiseKind::Additive, -0.1).is_err());
        assert!(NoiseSpec::new(NoiseKind::Additive, f64::NAN).is_err());
        assert!(NoiseSpec::new(NoiseKind::Multiplicative, 0.0).is_ok());
    }

    #[test]
    fn gate_decrease_is_exact_bound() {
        let pulse = ControlPulse::uniform(4.0, vec![0.3, -1.5, 2.2, 0.0]).unwrap();
        let trace = propagate(&pulse, 1.0, 16).unwrap();
        let spec = ObjectiveSpec::gate(*trace.final_propagator());
        let sigma = 0.03;
        let awn = predicted_decrease(&spec, &trace, &NoiseSpec::new(NoiseKind::Additive, sigma).unwrap()).unwrap();
        assert!((awn.decrease - sigma * sigma * 4.0).abs() < 1e-15);
        assert!(awn.warning.is_none());
        let mwn = predicted_decrease(
            &spec,
            &trace,
            &NoiseSpec::new(NoiseKind::Multiplicative, sigma).unwrap(),
        )
        .unwrap();
        assert!((mwn.decrease - sigma * sigma * pulse.energy()).abs() < 1e-15);
        let zero = predicted_decrease(&spec, &trace, &NoiseSpec::new(NoiseKind::Additive, 0.0).unwrap()).unwrap();
        assert_eq!(zero.decrease, 0.0);
    }

    #[test]
    fn observable_is_unsupported() {
        let trace = propagate(&ControlPulse::zero(1, 1.0).unwrap(), 1.0, 4).unwrap();
        let spec = ObjectiveSpec::observable(State2::basis(0).projector(), crate::pauli(crate::Axis::Z)).unwrap();
        let noise = NoiseSpec::new(NoiseKind::Additive, 0.1).unwrap();
        assert!(predicted_decrease(&spec, &trace, &noise).is_err());
    }

    #[test]
    fn off_optimum_warning() {
        let trace = propagate(&ControlPulse::constant(3.0, 0.4).unwrap(), 1.0, 16).unwrap();
        let spec = ObjectiveSpec::transition(State2::basis(0), State2::basis(1));
        let p = predicted_decrease(&spec, &trace, &NoiseSpec::new(NoiseKind::Additive, 0.1).unwrap()).unwrap();
        assert!(p.warning.is_some());
    }

    #[test]
    fn noiseless_monte_carlo() {
        let pulse = ControlPulse::uniform(2.0, vec![0.5, -0.5]).unwrap();
        let spec = ObjectiveSpec::gate(Unitary2::named("x").unwrap());
        let mc = monte_carlo_noisy_objective(
            &spec,
            &pulse,
            1.0,
            &NoiseSpec::new(NoiseKind::Additive, 0.0).unwrap(),
            16,
            0.25,
            3,
            1,
        )
        .unwrap();
        assert_eq!(mc.mean, mc.base_value);
        assert_eq!(mc.standard_error, 0.0);
        assert!(monte_carlo_noisy_objective(
            &spec,
            &pulse,
            1.0,
            &NoiseSpec::new(NoiseKind::Additive, 0.1).unwrap(),
            16,
            0.3,
            3,
            1
        )
        .is_err());
        assert!(monte_carlo_noisy_objective(
            &spec,
            &pulse,
            1.0,
            &NoiseSpec::new(NoiseKind::Additive, 0.1).unwrap(),
            1,
            0.25,
            3,
            1
        )
        .is_err());
    }

    #[test]
    fn monte_carlo_is_worker_independent() {
        let pulse = ControlPulse::uniform(2.0, vec![0.5, -0.5]).unwrap();
        let spec = ObjectiveSpec::gate(Unitary2::named("x").unwrap());
        let noise = NoiseSpec::new(NoiseKind::Multiplicative, 0.05).unwrap();
        let a = monte_carlo_noisy_objective(&spec, &pulse, 1.0, &noise, 64, 0.25, 11, 1).unwrap();
        let b = monte_carlo_noisy_objective(&spec, &pulse, 1.0, &noise, 64, 0.25, 11, 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn speed_limit_cases() {
        let (zero, one) = (State2::basis(0), State2::basis(1));
        assert!((qsl_time(&zero, &one, 1.0).unwrap() - FRAC_PI_2).abs() < 1e-12);
        assert!((qsl_time(&zero, &one, 2.0).unwrap() - FRAC_PI_2 / 2.0).abs() < 1e-12);
        assert_eq!(qsl_time(&zero, &zero, 1.0).unwrap(), 0.0);
        let plus = State2::new(Complex64::new(FRAC_1_SQRT_2, 0.0), Complex64::new(FRAC_1_SQRT_2, 0.0)).unwrap();
        assert_eq!(qsl_time(&plus, &one, 1.0), Err(LzError::UndefinedSpeedLimit));
    }

    #[test]
    fn energy_is_additive_under_concatenation() {
        let a = ControlPulse::uniform(1.5, vec![0.25, -2.0, 1.0]).unwrap();
        let b = ControlPulse::uniform(0.5, vec![4.0, 0.5]).unwrap();
        assert_eq!(a.concat(&b).energy(), a.energy() + b.energy());
    }
}
