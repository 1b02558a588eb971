use std::f64::consts::FRAC_1_SQRT_2;
use std::path::Path;

use clap::{Args, ValueEnum};
use lz_landscape::{pauli, Axis, ControlPulse, ObjectiveSpec, State2, Unitary2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, CliError, CliResult};

/// `0`, `1`, `+`, `-`, `+i`, `-i`, or explicit amplitudes `re0,im0,re1,im1`
/// (two numbers are taken as real amplitudes). Explicit amplitudes must be normalized.
pub fn parse_state(text: &str) -> CliResult<State2> {
    let h = FRAC_1_SQRT_2;
    let c = Complex64::new;
    let (a0, a1) = match text.trim() {
        "0" => (c(1.0, 0.0), c(0.0, 0.0)),
        "1" => (c(0.0, 0.0), c(1.0, 0.0)),
        "+" => (c(h, 0.0), c(h, 0.0)),
        "-" => (c(h, 0.0), c(-h, 0.0)),
        "+i" => (c(h, 0.0), c(0.0, h)),
        "-i" => (c(h, 0.0), c(0.0, -h)),
        other => {
            let v = parse_floats(other).map_err(|e| invalid(format!("state `{other}`: {e}")))?;
            match v.as_slice() {
                [x, y] => (c(*x, 0.0), c(*y, 0.0)),
                [r0, i0, r1, i1] => (c(*r0, *i0), c(*r1, *i1)),
                _ => {
                    return Err(invalid(format!(
                        "state `{other}` needs a name (0, 1, +, -, +i, -i) or 2 or 4 amplitude components"
                    )))
                }
            }
        }
    };
    State2::new(a0, a1).map_err(|e| invalid(format!("state `{text}`: {e}")))
}

pub fn parse_floats(text: &str) -> Result<Vec<f64>, String> {
    text.split(',')
        .map(|s| {
            let s = s.trim();
            s.parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| format!("`{s}` is not a finite number"))
        })
        .collect()
}

pub fn parse_counts(text: &str) -> Result<Vec<usize>, String> {
    text.split(',')
        .map(|s| s.trim().parse::<usize>().map_err(|_| format!("`{s}` is not a count")))
        .collect()
}

/// `lo:hi`.
pub fn parse_range(text: &str) -> Result<[f64; 2], String> {
    let (lo, hi) = text
        .split_once(':')
        .ok_or_else(|| format!("range `{text}` must look like lo:hi"))?;
    let num = |s: &str| {
        s.trim()
            .parse::<f64>()
            .ok()
            .filter(|x| x.is_finite())
            .ok_or_else(|| format!("range bound `{s}` is not a finite number"))
    };
    let (lo, hi) = (num(lo)?, num(hi)?);
    if hi < lo {
        return Err(format!("range `{text}` has hi < lo"));
    }
    Ok([lo, hi])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveKind {
    Transition,
    Observable,
    Gate,
}

/// Objective selection shared by all subcommands.
#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct ObjectiveArgs {
    #[arg(long, value_enum, default_value = "transition")]
    pub objective: ObjectiveKind,
    /// Initial state of a transition objective.
    #[arg(long = "i", default_value = "0", allow_hyphen_values = true)]
    pub initial: String,
    /// Target state of a transition objective.
    #[arg(long = "f", default_value = "1", allow_hyphen_values = true)]
    pub target: String,
    /// Pure initial state of an observable objective.
    #[arg(long, default_value = "0", allow_hyphen_values = true)]
    pub rho0: String,
    /// Observable: x, y or z.
    #[arg(long, default_value = "z")]
    pub observable: String,
    /// Target gate: identity, x, y, z, hadamard, s, t.
    #[arg(long, default_value = "x")]
    pub gate: String,
}

impl ObjectiveArgs {
    #[cfg(test)]
    pub fn flip() -> Self {
        Self {
            objective: ObjectiveKind::Transition,
            initial: "0".into(),
            target: "1".into(),
            rho0: "0".into(),
            observable: "z".into(),
            gate: "x".into(),
        }
    }

    pub fn spec(&self) -> CliResult<ObjectiveSpec> {
        match self.objective {
            ObjectiveKind::Transition => Ok(ObjectiveSpec::transition(
                parse_state(&self.initial)?,
                parse_state(&self.target)?,
            )),
            ObjectiveKind::Observable => {
                let axis = match self.observable.as_str() {
                    "x" => Axis::X,
                    "y" => Axis::Y,
                    "z" => Axis::Z,
                    other => return Err(invalid(format!("unknown observable `{other}` (use x, y or z)"))),
                };
                Ok(ObjectiveSpec::observable(
                    parse_state(&self.rho0)?.projector(),
                    pauli(axis),
                )?)
            }
            ObjectiveKind::Gate => Unitary2::named(&self.gate)
                .map(ObjectiveSpec::gate)
                .ok_or_else(|| invalid(format!("unknown gate `{}`", self.gate))),
        }
    }
}

pub const PULSE_FORMAT_VERSION: u32 = 1;

/// On-disk piecewise-constant pulse.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseFile {
    pub version: u32,
    #[serde(rename = "T")]
    pub total_time: f64,
    pub boundaries: Vec<f64>,
    pub amplitudes: Vec<f64>,
}

impl PulseFile {
    pub fn from_pulse(p: &ControlPulse) -> Self {
        Self {
            version: PULSE_FORMAT_VERSION,
            total_time: p.total_time(),
            boundaries: p.boundaries().to_vec(),
            amplitudes: p.amplitudes().to_vec(),
        }
    }

    pub fn to_pulse(&self) -> CliResult<ControlPulse> {
        if self.version != PULSE_FORMAT_VERSION {
            return Err(invalid(format!("unsupported pulse file version {}", self.version)));
        }
        let pulse = ControlPulse::new(self.boundaries.clone(), self.amplitudes.clone())?;
        if (pulse.total_time() - self.total_time).abs() > 1e-12 * self.total_time.abs().max(1.0) {
            return Err(invalid(format!(
                "pulse file T = {} disagrees with the last boundary {}",
                self.total_time,
                pulse.total_time()
            )));
        }
        Ok(pulse)
    }

    /// Reads a pulse file, or the `pulse` member of an `optimize` output.
    pub fn read(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        let value: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| invalid(format!("{}: not JSON: {e}", path.display())))?;
        let inner = match value.get("pulse") {
            Some(p) => p.clone(),
            None => value,
        };
        let file: Self =
            serde_json::from_value(inner).map_err(|e| invalid(format!("{}: pulse schema: {e}", path.display())))?;
        file.to_pulse()?;
        Ok(file)
    }
}
