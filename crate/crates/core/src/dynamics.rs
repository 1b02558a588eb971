//! Time-ordered propagation of the Landau-Zener system
//! `dU/dt = −i(Δσx + ε(t)σz)U`, `U(0) = 𝕀`, under piecewise-constant controls.
//!
//! Every segment is propagated with the closed-form SU(2) exponential, so
//! propagators at boundaries and at quadrature nodes are exact up to rounding.

use serde::{Deserialize, Serialize};

use crate::error::{LzError, Result};
use crate::linalg2::{conjugate_by, pauli, segment_propagator, Axis, Complex2x2, State2, Unitary2};
use crate::quadrature::gauss_legendre;

/// Gauss-Legendre nodes per quadrature panel.
pub const DEFAULT_NODES_PER_SEGMENT: usize = 16;

/// Largest rotation phase `r·h` a single quadrature panel may cover. Segments
/// with a larger `r·τ` are split into equal panels.
pub const MAX_PANEL_PHASE: f64 = 3.0;

/// Piecewise-constant control `ε(t) = Σ a_k χ[t_k, t_{k+1}](t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlPulse {
    boundaries: Vec<f64>,
    amplitudes: Vec<f64>,
}

/// One constant piece of a [`ControlPulse`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub index: usize,
    pub start: f64,
    pub end: f64,
    pub amplitude: f64,
}

impl Segment {
    #[inline]
    pub fn duration(&self) -> f64 {
        self.end - self.start
    }
}

impl ControlPulse {
    /// General pulse; boundaries must start at 0 and increase strictly.
    pub fn new(boundaries: Vec<f64>, amplitudes: Vec<f64>) -> Result<Self> {
        if boundaries.len() < 2 {
            return Err(LzError::InvalidPulse("at least one segment is required".into()));
        }
        if amplitudes.len() + 1 != boundaries.len() {
            return Err(LzError::InvalidPulse(format!(
                "{} amplitudes for {} segments",
                amplitudes.len(),
                boundaries.len() - 1
            )));
        }
        if boundaries.iter().chain(&amplitudes).any(|v| !v.is_finite()) {
            return Err(LzError::InvalidPulse("non-finite boundary or amplitude".into()));
        }
        if boundaries[0] != 0.0 {
            return Err(LzError::InvalidPulse(format!(
                "first boundary must be 0, got {}",
                boundaries[0]
            )));
        }
        if let Some(w) = boundaries.windows(2).find(|w| w[1] <= w[0]) {
            return Err(LzError::InvalidPulse(format!(
                "boundaries not strictly increasing at {} -> {}",
                w[0], w[1]
            )));
        }
        Ok(Self { boundaries, amplitudes })
    }

    /// `N = amplitudes.len()` equal segments over `[0, T]`, `t_i = iT/N`.
    pub fn uniform(total_time: f64, amplitudes: Vec<f64>) -> Result<Self> {
        let n = amplitudes.len();
        if n == 0 {
            return Err(LzError::InvalidPulse("at least one segment is required".into()));
        }
        if !(total_time.is_finite() && total_time > 0.0) {
            return Err(LzError::InvalidPulse(format!(
                "total time must be positive, got {total_time}"
            )));
        }
        let boundaries = (0..=n)
            .map(|i| {
                if i == n {
                    total_time
                } else {
                    i as f64 * total_time / n as f64
                }
            })
            .collect();
        Self::new(boundaries, amplitudes)
    }

    pub fn zero(segments: usize, total_time: f64) -> Result<Self> {
        Self::uniform(total_time, vec![0.0; segments])
    }

    pub fn constant(total_time: f64, amplitude: f64) -> Result<Self> {
        Self::uniform(total_time, vec![amplitude])
    }

    /// Same geometry, new amplitudes.
    pub fn with_amplitudes(&self, amplitudes: Vec<f64>) -> Result<Self> {
        Self::new(self.boundaries.clone(), amplitudes)
    }

    pub fn boundaries(&self) -> &[f64] {
        &self.boundaries
    }

    pub fn amplitudes(&self) -> &[f64] {
        &self.amplitudes
    }

    pub fn segment_count(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn total_time(&self) -> f64 {
        *self.boundaries.last().expect("validated non-empty")
    }

    pub fn segments(&self) -> impl Iterator<Item = Segment> + '_ {
        self.amplitudes
            .iter()
            .enumerate()
            .map(move |(index, &amplitude)| Segment {
                index,
                start: self.boundaries[index],
                end: self.boundaries[index + 1],
                amplitude,
            })
    }

    pub fn segment(&self, index: usize) -> Segment {
        Segment {
            index,
            start: self.boundaries[index],
            end: self.boundaries[index + 1],
            amplitude: self.amplitudes[index],
        }
    }

    /// `ε(t)`; boundary points belong to the segment on their right, `T` to the last one.
    pub fn amplitude_at(&self, t: f64) -> f64 {
        let k = self.boundaries[1..].partition_point(|&b| b <= t);
        self.amplitudes[k.min(self.amplitudes.len() - 1)]
    }

    pub fn sup_norm(&self) -> f64 {
        self.amplitudes.iter().fold(0.0, |m, a| m.max(a.abs()))
    }

    /// Pulse energy `∫ ε(t)² dt = Σ a_k² (t_{k+1} − t_k)`.
    pub fn energy(&self) -> f64 {
        self.segments().map(|s| s.amplitude * s.amplitude * s.duration()).sum()
    }

    /// Concatenates `other` after `self` in time.
    pub fn concat(&self, other: &ControlPulse) -> ControlPulse {
        let offset = self.total_time();
        let mut boundaries = self.boundaries.clone();
        boundaries.extend(other.boundaries[1..].iter().map(|b| b + offset));
        let mut amplitudes = self.amplitudes.clone();
        amplitudes.extend_from_slice(&other.amplitudes);
        ControlPulse { boundaries, amplitudes }
    }

    /// Splits every segment into steps of length `step`, which must divide each
    /// segment duration. Returns the refined pulse and the parent segment of each step.
    pub fn subdivide(&self, step: f64) -> Result<(ControlPulse, Vec<usize>)> {
        if !(step.is_finite() && step > 0.0) {
            return Err(LzError::InvalidParameter(format!("step must be positive, got {step}")));
        }
        let mut boundaries = vec![0.0];
        let mut amplitudes = Vec::new();
        let mut parent = Vec::new();
        for seg in self.segments() {
            let ratio = seg.duration() / step;
            let count = ratio.round();
            if count < 1.0 || (ratio - count).abs() > 1e-9 * ratio.max(1.0) {
                return Err(LzError::InvalidParameter(format!(
                    "step {step} does not divide segment {} of duration {}",
                    seg.index,
                    seg.duration()
                )));
            }
            let count = count as usize;
            for j in 1..=count {
                let t = if j == count {
                    seg.end
                } else {
                    seg.start + j as f64 * seg.duration() / count as f64
                };
                boundaries.push(t);
                amplitudes.push(seg.amplitude);
                parent.push(seg.index);
            }
        }
        Ok((ControlPulse::new(boundaries, amplitudes)?, parent))
    }
}

/// Quadrature node with its cumulative propagator `U_t`.
#[derive(Debug, Clone, Copy)]
pub struct QuadratureNode {
    pub t: f64,
    pub weight: f64,
    pub segment: usize,
    pub propagator: Unitary2,
}

/// Cached cumulative propagators of one pulse.
#[derive(Debug, Clone)]
pub struct PropagationTrace {
    pulse: ControlPulse,
    delta: f64,
    nodes_per_panel: usize,
    boundary_propagators: Vec<Unitary2>,
    nodes: Vec<QuadratureNode>,
    segment_node_offsets: Vec<usize>,
}

impl PropagationTrace {
    pub fn pulse(&self) -> &ControlPulse {
        &self.pulse
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn total_time(&self) -> f64 {
        self.pulse.total_time()
    }

    pub fn nodes_per_panel(&self) -> usize {
        self.nodes_per_panel
    }

    /// `U_{t_k}` for `k = 0..=N`.
    pub fn boundary_propagators(&self) -> &[Unitary2] {
        &self.boundary_propagators
    }

    /// `U_T`.
    pub fn final_propagator(&self) -> &Unitary2 {
        self.boundary_propagators.last().expect("at least two boundaries")
    }

    /// All quadrature nodes ordered by time.
    pub fn nodes(&self) -> &[QuadratureNode] {
        &self.nodes
    }

    pub fn segment_nodes(&self, segment: usize) -> &[QuadratureNode] {
        &self.nodes[self.segment_node_offsets[segment]..self.segment_node_offsets[segment + 1]]
    }
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta.is_finite() && delta > 0.0) {
        return Err(LzError::InvalidParameter(format!(
            "coupling delta must be positive and finite, got {delta}"
        )));
    }
    Ok(())
}

/// Panels used to cover a segment of rotation rate `r` and duration `tau`.
#[inline]
pub(crate) fn panel_count(delta: f64, amplitude: f64, tau: f64) -> usize {
    let phase = delta.hypot(amplitude) * tau;
    ((phase / MAX_PANEL_PHASE).ceil() as usize).max(1)
}

/// Builds the full trace: boundary propagators plus Gauss-Legendre node
/// propagators (`nodes_per_segment` per panel).
pub fn propagate(pulse: &ControlPulse, delta: f64, nodes_per_segment: usize) -> Result<PropagationTrace> {
    check_delta(delta)?;
    if nodes_per_segment == 0 {
        return Err(LzError::InvalidParameter("nodes_per_segment must be at least 1".into()));
    }
    let (ref_nodes, ref_weights) = gauss_legendre(nodes_per_segment);
    let n = pulse.segment_count();
    let mut boundary_propagators = Vec::with_capacity(n + 1);
    let mut nodes = Vec::with_capacity(n * nodes_per_segment);
    let mut segment_node_offsets = Vec::with_capacity(n + 1);
    let mut u = Complex2x2::identity();
    boundary_propagators.push(Unitary2::identity());
    for seg in pulse.segments() {
        segment_node_offsets.push(nodes.len());
        let tau = seg.duration();
        let panels = panel_count(delta, seg.amplitude, tau);
        let h = tau / panels as f64;
        for p in 0..panels {
            let mid = (p as f64 + 0.5) * h;
            for (x, w) in ref_nodes.iter().zip(&ref_weights) {
                let offset = mid + 0.5 * h * x;
                let step = segment_propagator(delta, seg.amplitude, offset);
                nodes.push(QuadratureNode {
                    t: seg.start + offset,
                    weight: 0.5 * h * w,
                    segment: seg.index,
                    propagator: Unitary2::from_trusted(step * u),
                });
            }
        }
        u = segment_propagator(delta, seg.amplitude, tau) * u;
        boundary_propagators.push(Unitary2::from_trusted(u));
    }
    segment_node_offsets.push(nodes.len());
    Ok(PropagationTrace {
        pulse: pulse.clone(),
        delta,
        nodes_per_panel: nodes_per_segment,
        boundary_propagators,
        nodes,
        segment_node_offsets,
    })
}

/// `U_T` alone, without quadrature nodes.
pub fn final_propagator(pulse: &ControlPulse, delta: f64) -> Result<Unitary2> {
    check_delta(delta)?;
    Ok(final_propagator_unchecked(pulse, delta))
}

#[inline]
pub(crate) fn final_propagator_unchecked(pulse: &ControlPulse, delta: f64) -> Unitary2 {
    let u = pulse.segments().fold(Complex2x2::identity(), |u, s| {
        segment_propagator(delta, s.amplitude, s.duration()) * u
    });
    Unitary2::from_trusted(u)
}

/// `U_T|ψ₀⟩`.
pub fn evolve_state(trace: &PropagationTrace, psi0: &State2) -> State2 {
    trace.final_propagator().apply(psi0)
}

/// `(t, V_t = U_t†σzU_t)` at every quadrature node, ordered by `t`.
pub fn sample_v(trace: &PropagationTrace) -> Vec<(f64, Complex2x2)> {
    let z = pauli(Axis::Z);
    trace
        .nodes()
        .iter()
        .map(|node| (node.t, conjugate_by(&node.propagator, &z)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg2::expm_su2;
    use num_complex::Complex64;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::FRAC_PI_2;

    fn random_pulse(rng: &mut ChaCha8Rng, n: usize, t: f64, amp: f64) -> ControlPulse {
        ControlPulse::uniform(t, (0..n).map(|_| rng.gen_range(-amp..amp)).collect()).unwrap()
    }

    #[test]
    fn pulse_geometry() {
        let p = ControlPulse::uniform(10.0, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(p.boundaries(), &[0.0, 2.5, 5.0, 7.5, 10.0]);
        assert_eq!(p.amplitude_at(0.0), 1.0);
        assert_eq!(p.amplitude_at(2.5), 2.0);
        assert_eq!(p.amplitude_at(10.0), 4.0);
        assert_eq!(p.sup_norm(), 4.0);
        assert!((p.energy() - 2.5 * 30.0).abs() < 1e-12);
    }

    #[test]
    fn invalid_pulses() {
        assert!(ControlPulse::new(vec![0.0], vec![]).is_err());
        assert!(ControlPulse::new(vec![0.1, 1.0], vec![0.0]).is_err());
        assert!(ControlPulse::new(vec![0.0, 1.0, 1.0], vec![0.0, 0.0]).is_err());
        assert!(ControlPulse::new(vec![0.0, 1.0], vec![0.0, 0.0]).is_err());
        assert!(ControlPulse::new(vec![0.0, 1.0], vec![f64::NAN]).is_err());
        assert!(ControlPulse::uniform(-1.0, vec![0.0]).is_err());
        assert!(ControlPulse::uniform(1.0, vec![]).is_err());
        let p = ControlPulse::zero(2, 1.0).unwrap();
        assert!(propagate(&p, 0.0, 16).is_err());
        assert!(propagate(&p, 1.0, 0).is_err());
    }

    #[test]
    fn subdivide_and_concat() {
        let p = ControlPulse::uniform(2.0, vec![1.0, -3.0]).unwrap();
        let (fine, parent) = p.subdivide(0.25).unwrap();
        assert_eq!(fine.segment_count(), 8);
        assert_eq!(parent, vec![0, 0, 0, 0, 1, 1, 1, 1]);
        assert!((fine.energy() - p.energy()).abs() < 1e-12);
        assert!(p.subdivide(0.3).is_err());
        let q = p.concat(&ControlPulse::constant(1.0, 2.0).unwrap());
        assert_eq!(q.boundaries(), &[0.0, 1.0, 2.0, 3.0]);
        assert_eq!(q.energy(), p.energy() + 4.0);
    }

    #[test]
    fn zero_pulse_is_free_evolution() {
        let t = 3.3;
        let trace = propagate(&ControlPulse::zero(1, t).unwrap(), 1.0, 16).unwrap();
        let expect = expm_su2(1.0, 0.0, t).unwrap();
        assert!(trace.final_propagator().matrix().max_abs_diff(expect.matrix()) < 1e-14);
    }

    #[test]
    fn constant_pulse_closed_form() {
        let t = 10.0;
        for a in [-2.5, -0.4, 0.0, 0.7, 3.0] {
            let trace = propagate(&ControlPulse::constant(t, a).unwrap(), 1.0, 16).unwrap();
            let amp = trace.final_propagator().matrix().get(1, 0).norm_sqr();
            let r2: f64 = 1.0 + a * a;
            let closed = (t * r2.sqrt()).sin().powi(2) / r2;
            assert!((amp - closed).abs() < 1e-13, "a = {a}");
        }
    }

    #[test]
    fn long_pulse_matches_direct_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let pulse = random_pulse(&mut rng, 100, 10.0, 5.0);
        let trace = propagate(&pulse, 1.0, 16).unwrap();
        let mut direct = Unitary2::identity();
        for s in pulse.segments() {
            direct = expm_su2(1.0, s.amplitude, s.duration()).unwrap() * direct;
        }
        assert!(trace.final_propagator().matrix().max_abs_diff(direct.matrix()) < 1e-9);
        let cheap = final_propagator(&pulse, 1.0).unwrap();
        assert!(cheap.matrix().max_abs_diff(direct.matrix()) < 1e-12);
    }

    #[test]
    fn half_rabi_flip() {
        let trace = propagate(&ControlPulse::zero(1, FRAC_PI_2).unwrap(), 1.0, 16).unwrap();
        let out = evolve_state(&trace, &State2::basis(0));
        assert!((out.amplitudes()[1].norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn evolve_state_is_matrix_vector_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pulse = random_pulse(&mut rng, 12, 4.0, 3.0);
        let trace = propagate(&pulse, 1.3, 16).unwrap();
        let psi = State2::normalized(Complex64::new(0.3, -0.2), Complex64::new(0.1, 0.9)).unwrap();
        let out = evolve_state(&trace, &psi);
        let u = trace.final_propagator().matrix();
        let [a, b] = psi.amplitudes();
        let direct = [u.get(0, 0) * a + u.get(0, 1) * b, u.get(1, 0) * a + u.get(1, 1) * b];
        for k in 0..2 {
            assert!((out.amplitudes()[k] - direct[k]).norm() < 1e-12);
        }
        assert!((out.norm() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn zero_pulse_v_is_rotating_sigma_z() {
        let trace = propagate(&ControlPulse::zero(3, 5.0).unwrap(), 1.0, 16).unwrap();
        let (y, z) = (pauli(Axis::Y), pauli(Axis::Z));
        for (t, v) in sample_v(&trace) {
            let expect = z.scale_re((2.0 * t).cos()) + y.scale_re((2.0 * t).sin());
            assert!(v.approx_eq(&expect, 1e-13), "t = {t}");
        }
        // node at t = 0 is not sampled by Gauss-Legendre; U_0 is the identity boundary
        assert!(conjugate_by(&trace.boundary_propagators()[0], &z).approx_eq(&z, 0.0));
    }

    #[test]
    fn strong_segments_are_split_into_panels() {
        let pulse = ControlPulse::constant(10.0, 10.0).unwrap();
        let trace = propagate(&pulse, 1.0, 16).unwrap();
        let panels = panel_count(1.0, 10.0, 10.0);
        assert!(panels > 1);
        assert_eq!(trace.nodes().len(), panels * 16);
        let total: f64 = trace.nodes().iter().map(|n| n.weight).sum();
        assert!((total - 10.0).abs() < 1e-12);
        assert!(trace.nodes().windows(2).all(|w| w[0].t < w[1].t));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn trace_invariants(seed in any::<u64>(), n in 1usize..30, t in 0.1..12.0f64, delta in 0.2..3.0f64) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pulse = random_pulse(&mut rng, n, t, 6.0);
            let coarse = propagate(&pulse, delta, 2).unwrap();
            let fine = propagate(&pulse, delta, 16).unwrap();
            let ident = Complex2x2::identity();
            prop_assert!(coarse.boundary_propagators()[0].matrix().approx_eq(&ident, 0.0));
            prop_assert!(coarse.final_propagator().matrix().max_abs_diff(fine.final_propagator().matrix()) < 1e-12);
            let uu = *fine.final_propagator().matrix() * fine.final_propagator().matrix().dagger();
            prop_assert!(uu.approx_eq(&ident, 1e-10));
            for (k, seg) in pulse.segments().enumerate() {
                let step = expm_su2(delta, seg.amplitude, seg.duration()).unwrap();
                let next = step * fine.boundary_propagators()[k];
                prop_assert!(next.matrix().max_abs_diff(fine.boundary_propagators()[k + 1].matrix()) < 1e-10);
            }
            let psi = State2::basis(0);
            for node in fine.nodes() {
                prop_assert!(Unitary2::new(*node.propagator.matrix()).is_ok());
                prop_assert!((node.propagator.apply(&psi).norm() - 1.0).abs() < 1e-10);
            }
            for (_, v) in sample_v(&fine) {
                prop_assert!(v.trace().norm() < 1e-12);
                prop_assert!(v.is_hermitian(1e-12));
            }
        }
    }
}
