//! External loading: base excitation signals, kinematic driving of flagged
//! particles, and gravity preload by dynamic relaxation.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dynamics::Simulation;
use crate::error::{Error, Result};
use crate::tensor::Vec2;

pub const STANDARD_GRAVITY: f64 = 9.81;

/// Ground acceleration record sampled in units of g.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Accelerogram {
    pub time: Vec<f64>,
    pub horizontal: Vec<f64>,
    pub vertical: Option<Vec<f64>>,
}

impl Accelerogram {
    pub fn new(time: Vec<f64>, horizontal: Vec<f64>, vertical: Option<Vec<f64>>) -> Result<Self> {
        if time.is_empty() {
            return Err(Error::Config("accelerogram has no samples".into()));
        }
        if horizontal.len() != time.len() || vertical.as_ref().is_some_and(|v| v.len() != time.len()) {
            return Err(Error::Config("accelerogram columns differ in length".into()));
        }
        if let Some(k) = time.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(Error::Config(format!(
                "accelerogram times not strictly increasing at sample {}",
                k + 1
            )));
        }
        Ok(Self {
            time,
            horizontal,
            vertical,
        })
    }

    /// Parses `time_s, horiz_g[, vert_g]` records. A first line whose first
    /// token is not numeric is treated as a header; blank lines and lines
    /// starting with `#` are skipped.
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let err = |line: usize, message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let mut time = Vec::new();
        let mut horizontal = Vec::new();
        let mut vertical: Vec<f64> = Vec::new();
        let mut columns = None;
        let mut first = true;
        for (k, raw) in text.lines().enumerate() {
            let line_no = k + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let tokens: Vec<&str> = line.split(',').map(str::trim).collect();
            if first {
                first = false;
                if tokens[0].parse::<f64>().is_err() {
                    continue;
                }
            }
            let values = tokens
                .iter()
                .map(|t| t.parse::<f64>())
                .collect::<std::result::Result<Vec<f64>, _>>()
                .map_err(|e| err(line_no, format!("bad number: {e}")))?;
            if !(2..=3).contains(&values.len()) {
                return Err(err(line_no, format!("expected 2 or 3 columns, got {}", values.len())));
            }
            match columns {
                None => columns = Some(values.len()),
                Some(c) if c != values.len() => {
                    return Err(err(line_no, format!("expected {c} columns, got {}", values.len())))
                }
                _ => {}
            }
            if let Some(&last) = time.last() {
                if !(values[0] > last) {
                    return Err(err(line_no, format!(
                        "times must be strictly increasing ({} after {last})",
                        values[0]
                    )));
                }
            }
            time.push(values[0]);
            horizontal.push(values[1]);
            if values.len() == 3 {
                vertical.push(values[2]);
            }
        }
        if time.is_empty() {
            return Err(err(0, "no samples".into()));
        }
        let vertical = (columns == Some(3)).then_some(vertical);
        Self::new(time, horizontal, vertical)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        match &self.vertical {
            Some(_) => out.push_str("time_s,horiz_g,vert_g\n"),
            None => out.push_str("time_s,horiz_g\n"),
        }
        for k in 0..self.time.len() {
            let _ = write!(out, "{},{}", self.time[k], self.horizontal[k]);
            if let Some(v) = &self.vertical {
                let _ = write!(out, ",{}", v[k]);
            }
            out.push('\n');
        }
        out
    }

    pub fn duration(&self) -> f64 {
        *self.time.last().expect("non-empty")
    }

    /// Linearly interpolated (horizontal, vertical) in g; zero outside the record.
    pub fn sample_g(&self, t: f64) -> (f64, f64) {
        let n = self.time.len();
        if t < self.time[0] || t > self.time[n - 1] {
            return (0.0, 0.0);
        }
        let k = self.time.partition_point(|&x| x <= t);
        let vert = |k: usize| self.vertical.as_ref().map_or(0.0, |v| v[k]);
        if k >= n {
            return (self.horizontal[n - 1], vert(n - 1));
        }
        let k0 = k - 1;
        let w = (t - self.time[k0]) / (self.time[k] - self.time[k0]);
        let lerp = |a: f64, b: f64| a + w * (b - a);
        (
            lerp(self.horizontal[k0], self.horizontal[k]),
            lerp(vert(k0), vert(k)),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub enum ExcitationSignal {
    #[default]
    None,
    Sinusoid {
        amplitude_g: f64,
        period_s: f64,
        direction: Vec2,
    },
    Accelerogram(Accelerogram),
}

impl ExcitationSignal {
    pub fn sinusoid(amplitude_g: f64, period_s: f64, direction: Vec2) -> Result<Self> {
        if !(period_s > 0.0) {
            return Err(Error::Config(format!("sinusoid period must be positive, got {period_s}")));
        }
        let norm = direction.norm();
        if !(norm > 0.0) {
            return Err(Error::Config("sinusoid direction must be non-zero".into()));
        }
        Ok(Self::Sinusoid {
            amplitude_g,
            period_s,
            direction: direction / norm,
        })
    }

    /// Acceleration (m/s²) at time `t` for gravitational acceleration `g`.
    pub fn sample(&self, t: f64, g: f64) -> Vec2 {
        match self {
            Self::None => Vec2::zeros(),
            Self::Sinusoid {
                amplitude_g,
                period_s,
                direction,
            } => {
                // Reduce the phase first so sample(t) == sample(t + T).
                let phase = (t / period_s).rem_euclid(1.0);
                direction * (amplitude_g * g * (2.0 * PI * phase).sin())
            }
            Self::Accelerogram(rec) => {
                let (ax, ay) = rec.sample_g(t);
                Vec2::new(ax * g, ay * g)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryKind {
    /// Flagged particles follow the excitation signal.
    #[default]
    PrescribedMotion,
    /// Flagged particles are held at rest.
    Fixed,
}

/// How flagged particles are driven.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BaseDrive {
    pub signal: ExcitationSignal,
    pub kind: BoundaryKind,
    pub g: f64,
}

impl BaseDrive {
    pub fn new(signal: ExcitationSignal, kind: BoundaryKind, g: f64) -> Self {
        Self { signal, kind, g }
    }

    pub fn fixed() -> Self {
        Self::new(ExcitationSignal::None, BoundaryKind::Fixed, STANDARD_GRAVITY)
    }

    pub fn boundary_acceleration(&self, t: f64) -> Vec2 {
        match self.kind {
            BoundaryKind::Fixed => Vec2::zeros(),
            BoundaryKind::PrescribedMotion => self.signal.sample(t, self.g),
        }
    }
}

/// Overrides the accelerations of flagged particles with the prescribed base
/// acceleration at the current time. The integrator then advances them like
/// any other particle, so their motion is the double integral of the signal.
/// Returns the number of driven particles.
pub fn apply_base_motion(sim: &mut Simulation) -> usize {
    let a = sim.drive.boundary_acceleration(sim.state.time);
    let mut n = 0;
    for (acc, &flag) in sim.state.acceleration.iter_mut().zip(&sim.particles.boundary) {
        if flag {
            *acc = a;
            n += 1;
        }
    }
    n
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PreloadParams {
    #[serde(rename = "relax_damping_per_s")]
    pub damping: f64,
    #[serde(rename = "ke_tolerance_J_per_kg")]
    pub ke_tolerance: f64,
    pub max_steps: u64,
    /// Kinetic energy must have decreased over this many consecutive steps.
    pub window: usize,
}

impl Default for PreloadParams {
    fn default() -> Self {
        Self {
            damping: 80.0,
            ke_tolerance: 1e-6,
            max_steps: 200_000,
            window: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreloadReport {
    pub steps: u64,
    pub ke_per_mass: f64,
    /// Kinetic energy per unit mass over the final `window + 1` steps.
    pub tail: Vec<f64>,
}

/// Settles the structure under gravity with heavy mass-proportional damping,
/// no base excitation and frozen damage, then restarts the clock at rest.
pub fn gravity_preload(sim: &mut Simulation, params: &PreloadParams) -> Result<PreloadReport> {
    if sim.params.gravity.norm() == 0.0 {
        return Ok(PreloadReport {
            steps: 0,
            ke_per_mass: sim.kinetic_energy() / sim.particles.total_mass(),
            tail: Vec::new(),
        });
    }
    let saved_params = sim.params;
    let saved_drive = sim.drive.clone();
    sim.params.freeze_damage = true;
    sim.params.rayleigh.alpha = params.damping;
    sim.drive = BaseDrive::new(ExcitationSignal::None, BoundaryKind::Fixed, saved_drive.g);
    sim.refresh_accelerations()?;

    let total_mass = sim.particles.total_mass();
    let mut history: std::collections::VecDeque<f64> = std::collections::VecDeque::new();
    let result = loop {
        if let Err(e) = sim.step() {
            break Err(e);
        }
        let ke = sim.kinetic_energy() / total_mass;
        history.push_back(ke);
        if history.len() > params.window + 1 {
            history.pop_front();
        }
        let monotone = history.len() == params.window + 1
            && history.iter().zip(history.iter().skip(1)).all(|(a, b)| b < a);
        if monotone && ke < params.ke_tolerance {
            break Ok(PreloadReport {
                steps: sim.state.step,
                ke_per_mass: ke,
                tail: history.iter().copied().collect(),
            });
        }
        if sim.state.step >= params.max_steps {
            break Err(Error::PreloadFailure {
                steps: sim.state.step,
                ke_per_mass: ke,
            });
        }
    };

    sim.params = saved_params;
    sim.drive = saved_drive;
    let report = result?;
    sim.restart_clock()?;
    Ok(report)
}
