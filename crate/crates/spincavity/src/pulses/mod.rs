//! Control pulse families.
//!
//! All programs describe the transverse rotation rate (rad/s) felt by a spin
//! at the nominal coupling; the intracavity quadrature target is this
//! waveform divided by the coupling. Three shaped families exist: hard-edged
//! square drives (including their cavity ring-up and ring-down), compactly
//! supported bump pulses, and Fourier-phase pulses whose amplitude envelope
//! is a smooth bump and whose phase is a truncated Fourier series. Ideal
//! instantaneous rotations round out the set as the zero-duration limit.

pub mod deconvolve;
pub mod tables;

use crate::error::{Error, Result};
use crate::num::adaptive_simpson;
use std::sync::OnceLock;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
}

/// Normalization of the bump shape: the integral of exp(1/(u^2 - 1)) over
/// (-1, 1), about 0.44400. Computed once by adaptive quadrature.
pub fn bump_norm() -> f64 {
    static NORM: OnceLock<f64> = OnceLock::new();
    *NORM.get_or_init(|| {
        adaptive_simpson(
            |u| {
                let d = u * u - 1.0;
                if d < 0.0 {
                    (1.0 / d).exp()
                } else {
                    0.0
                }
            },
            -1.0,
            1.0,
            1e-13,
        )
    })
}

/// Normalized bump centered at 0 with support (-1/k, 1/k): the shape
/// (k / norm) exp(1/((k t)^2 - 1)) integrates to exactly 1 for every k.
pub fn bump_shape(k: f64, t: f64) -> f64 {
    let u = k * t;
    if u.abs() >= 1.0 {
        return 0.0;
    }
    (k / bump_norm()) * (1.0 / (u * u - 1.0)).exp()
}

/// Time derivative of `bump_shape`.
pub fn bump_shape_deriv(k: f64, t: f64) -> f64 {
    let u = k * t;
    if u.abs() >= 1.0 {
        return 0.0;
    }
    let s = bump_shape(k, t);
    if s == 0.0 {
        return 0.0; // envelope underflowed; the true derivative is below 1e-300 too
    }
    let d = u * u - 1.0;
    s * (-2.0 * u * k / (d * d))
}

/// Unit-amplitude Fourier-phase waveform on s in [0, 1]: envelope
/// exp(1/((2s-1)^p - 1)) with even p, phase a0/2 + sum_n a_n cos(2 pi n s)
/// + b_n sin(2 pi n s). The controls are x = env cos(phase),
/// y = env sin(phase), so |(x, y)| always equals the envelope.
#[derive(Clone, Debug)]
pub struct FourierShape {
    p: u32,
    a: Vec<f64>,
    b: Vec<f64>,
}

impl FourierShape {
    pub fn new(p: u32, a: Vec<f64>, b: Vec<f64>) -> Result<FourierShape> {
        if p == 0 || p % 2 != 0 {
            return Err(Error::invalid(format!(
                "envelope exponent must be a positive even integer, got {p}"
            )));
        }
        if a.is_empty() {
            return Err(Error::invalid("phase series needs at least the constant term"));
        }
        if b.len() != a.len() {
            return Err(Error::invalid(format!(
                "cosine and sine series lengths differ: {} vs {}",
                a.len(),
                b.len()
            )));
        }
        if b[0] != 0.0 {
            return Err(Error::invalid("b_0 multiplies sin(0) and must be zero"));
        }
        if a.iter().chain(b.iter()).any(|c| !c.is_finite()) {
            return Err(Error::invalid("non-finite Fourier coefficient"));
        }
        Ok(FourierShape { p, a, b })
    }

    pub fn exponent(&self) -> u32 {
        self.p
    }

    pub fn coeffs(&self) -> (&[f64], &[f64]) {
        (&self.a, &self.b)
    }

    pub fn harmonics(&self) -> usize {
        self.a.len() - 1
    }

    pub fn envelope(&self, s: f64) -> f64 {
        let u = 2.0 * s - 1.0;
        if u.abs() >= 1.0 {
            return 0.0;
        }
        (1.0 / (u.powi(self.p as i32) - 1.0)).exp()
    }

    fn envelope_deriv(&self, s: f64) -> f64 {
        let u = 2.0 * s - 1.0;
        if u.abs() >= 1.0 {
            return 0.0;
        }
        let env = self.envelope(s);
        if env == 0.0 {
            return 0.0;
        }
        let p = self.p as f64;
        let d = u.powi(self.p as i32) - 1.0;
        env * (-2.0 * p * u.powi(self.p as i32 - 1) / (d * d))
    }

    pub fn phase(&self, s: f64) -> f64 {
        let mut ph = 0.5 * self.a[0];
        for n in 1..self.a.len() {
            let w = std::f64::consts::TAU * n as f64 * s;
            ph += self.a[n] * w.cos() + self.b[n] * w.sin();
        }
        ph
    }

    fn phase_deriv(&self, s: f64) -> f64 {
        let mut d = 0.0;
        for n in 1..self.a.len() {
            let wn = std::f64::consts::TAU * n as f64;
            let w = wn * s;
            d += wn * (-self.a[n] * w.sin() + self.b[n] * w.cos());
        }
        d
    }

    pub fn xy(&self, s: f64) -> (f64, f64) {
        let env = self.envelope(s);
        if env == 0.0 {
            return (0.0, 0.0);
        }
        let ph = self.phase(s);
        (env * ph.cos(), env * ph.sin())
    }

    /// d/ds of the control pair, analytic.
    pub fn xy_deriv(&self, s: f64) -> (f64, f64) {
        let env = self.envelope(s);
        if env == 0.0 {
            return (0.0, 0.0);
        }
        let denv = self.envelope_deriv(s);
        let ph = self.phase(s);
        let dph = self.phase_deriv(s);
        let (c, sn) = (ph.cos(), ph.sin());
        (denv * c - env * sn * dph, denv * sn + env * c * dph)
    }

    /// Rotate the control frame: phase -> phase + dphi. A table designed for
    /// a y rotation becomes an x rotation under dphi = -pi/2.
    #[must_use]
    pub fn phase_shifted(&self, dphi: f64) -> FourierShape {
        let mut out = self.clone();
        out.a[0] += 2.0 * dphi;
        out
    }
}

/// A placed control pulse. Times handed to `rotation_xy` are relative to the
/// pulse start; every shape is zero outside [0, footprint].
#[derive(Clone, Debug)]
pub enum PulseProgram {
    /// Instantaneous rotation, the hard-pulse limit. Carries no waveform;
    /// sequence engines apply it as a rotation matrix.
    Ideal { theta: f64, axis: Axis },
    /// Constant drive for `duration`. The spins see the cavity-filtered
    /// field: exponential ring-up during the pulse and a ring-down tail
    /// afterwards. The tail repays the ring-up deficit exactly, so the
    /// integrated rotation angle is still `theta`.
    Square { theta: f64, duration: f64, axis: Axis },
    /// Normalized bump of integrated angle `theta`, support `duration` = 2/k.
    Bump { theta: f64, k: f64, axis: Axis },
    /// Fourier-phase waveform scaled to `duration`: rotation rate
    /// (a0 / duration) * shape(t / duration).
    Fourier { shape: FourierShape, a0: f64, duration: f64 },
}

/// Cavity ring-down allowance after a hard-edged pulse, in units of 1/kappa.
/// exp(-14/2) ~ 9e-4 leaves the residual field at the per-mille level.
pub const RING_DOWN_KAPPA: f64 = 14.0;

impl PulseProgram {
    pub fn square(theta: f64, duration: f64, axis: Axis) -> Result<PulseProgram> {
        check_angle_duration(theta, duration)?;
        Ok(PulseProgram::Square { theta, duration, axis })
    }

    pub fn bump(theta: f64, duration: f64, axis: Axis) -> Result<PulseProgram> {
        check_angle_duration(theta, duration)?;
        Ok(PulseProgram::Bump { theta, k: 2.0 / duration, axis })
    }

    pub fn fourier(shape: FourierShape, a0: f64, duration: f64) -> Result<PulseProgram> {
        if !a0.is_finite() {
            return Err(Error::invalid("non-finite amplitude"));
        }
        check_angle_duration(1.0, duration)?;
        Ok(PulseProgram::Fourier { shape, a0, duration })
    }

    pub fn ideal(theta: f64, axis: Axis) -> PulseProgram {
        PulseProgram::Ideal { theta, axis }
    }

    pub fn is_ideal(&self) -> bool {
        matches!(self, PulseProgram::Ideal { .. })
    }

    /// Nominal drive window (excludes any ring-down tail).
    pub fn duration(&self) -> f64 {
        match *self {
            PulseProgram::Ideal { .. } => 0.0,
            PulseProgram::Square { duration, .. } => duration,
            PulseProgram::Bump { k, .. } => 2.0 / k,
            PulseProgram::Fourier { duration, .. } => duration,
        }
    }

    /// Time until the rotation rate is negligible: the duration, plus the
    /// cavity ring-down for hard-edged drives.
    pub fn footprint(&self, kappa: f64) -> f64 {
        match *self {
            PulseProgram::Square { duration, .. } => duration + RING_DOWN_KAPPA / kappa,
            _ => self.duration(),
        }
    }

    /// Peak of the nominal rotation rate, used to set detection bandwidths.
    pub fn peak_rate(&self) -> f64 {
        match *self {
            PulseProgram::Ideal { .. } => f64::INFINITY,
            PulseProgram::Square { theta, duration, .. } => theta.abs() / duration,
            PulseProgram::Bump { theta, k, .. } => {
                theta.abs() * k / (bump_norm() * std::f64::consts::E)
            }
            PulseProgram::Fourier { a0, duration, .. } => {
                a0.abs() / (std::f64::consts::E * duration)
            }
        }
    }

    /// Rotation-rate pair at time `t` past the pulse start. Zero outside the
    /// footprint; identically zero for ideal pulses, which carry no waveform.
    pub fn rotation_xy(&self, t: f64, kappa: f64) -> (f64, f64) {
        match *self {
            PulseProgram::Ideal { .. } => (0.0, 0.0),
            PulseProgram::Square { theta, duration, axis } => {
                let foot = duration + RING_DOWN_KAPPA / kappa;
                if !(0.0..=foot).contains(&t) {
                    return (0.0, 0.0);
                }
                let amp = theta / duration;
                let v = if t <= duration {
                    amp * (1.0 - (-0.5 * kappa * t).exp())
                } else {
                    amp * (1.0 - (-0.5 * kappa * duration).exp())
                        * (-0.5 * kappa * (t - duration)).exp()
                };
                on_axis(v, axis)
            }
            PulseProgram::Bump { theta, k, axis } => on_axis(theta * bump_shape(k, t - 1.0 / k), axis),
            PulseProgram::Fourier { ref shape, a0, duration } => {
                // sin^p(pi s) is periodic, not compactly supported; clamp.
                if !(0.0..=duration).contains(&t) {
                    return (0.0, 0.0);
                }
                let (x, y) = shape.xy(t / duration);
                (a0 / duration * x, a0 / duration * y)
            }
        }
    }

    /// Whether the waveform is smooth enough to serve as an intracavity
    /// target for deconvolution (continuously differentiable, compactly
    /// supported).
    pub fn is_smooth(&self) -> bool {
        matches!(self, PulseProgram::Bump { .. } | PulseProgram::Fourier { .. })
    }

    /// Analytic time derivative of `rotation_xy`; only defined for smooth
    /// kinds.
    pub(crate) fn rotation_xy_dot(&self, t: f64) -> (f64, f64) {
        match *self {
            PulseProgram::Bump { theta, k, axis } => {
                on_axis(theta * bump_shape_deriv(k, t - 1.0 / k), axis)
            }
            PulseProgram::Fourier { ref shape, a0, duration } => {
                if !(0.0..=duration).contains(&t) {
                    return (0.0, 0.0);
                }
                let (dx, dy) = shape.xy_deriv(t / duration);
                let c = a0 / (duration * duration);
                (c * dx, c * dy)
            }
            _ => {
                debug_assert!(false, "derivative requested for a non-smooth pulse");
                (0.0, 0.0)
            }
        }
    }
}

fn on_axis(v: f64, axis: Axis) -> (f64, f64) {
    match axis {
        Axis::X => (v, 0.0),
        Axis::Y => (0.0, v),
    }
}

fn check_angle_duration(theta: f64, duration: f64) -> Result<()> {
    if !theta.is_finite() {
        return Err(Error::invalid("non-finite rotation angle"));
    }
    if !(duration.is_finite() && duration > 0.0) {
        return Err(Error::invalid(format!("duration must be positive, got {duration}")));
    }
    Ok(())
}
