//! Tabulated Fourier-phase pulses shipped with the crate, plus the CSV codec
//! used to exchange pulse parameter tables.
//!
//! Two families: offset-robust pulses (flat gate quality across a wide
//! detuning band) and coupling-robust pulses (flat across a spread of drive
//! amplitudes). Each comes as a pi/2 and a pi rotation about y; an x-axis
//! version is a -pi/2 phase shift away. Amplitudes A0 are calibrated for the
//! dimensionless frame t_f = 1 and rescale as A0 / duration.

use super::{Axis, FourierShape, PulseProgram};
use crate::error::{Error, Result};
use crate::su2::Su2;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RotTarget {
    HalfPi,
    Pi,
}

impl RotTarget {
    /// The target propagator, natively a rotation about y.
    pub fn su2(&self) -> Su2 {
        match self {
            RotTarget::HalfPi => Su2::rot_y(std::f64::consts::FRAC_PI_2),
            RotTarget::Pi => Su2::rot_y(std::f64::consts::PI),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RobustAxis {
    Offset,
    Coupling,
}

#[derive(Clone, Debug)]
pub struct Fixture {
    pub name: &'static str,
    pub shape: FourierShape,
    pub a0: f64,
    pub t_f: f64,
    pub target: RotTarget,
    pub robust: RobustAxis,
}

impl Fixture {
    /// Instantiate at a physical duration. The native tables rotate about y;
    /// requesting Axis::X shifts the control phase by -pi/2.
    pub fn program(&self, duration: f64, axis: Axis) -> Result<PulseProgram> {
        let shape = match axis {
            Axis::Y => self.shape.clone(),
            Axis::X => self.shape.phase_shifted(-std::f64::consts::FRAC_PI_2),
        };
        PulseProgram::fourier(shape, self.a0, duration)
    }
}

/// Parsed contents of a pulse parameter table.
#[derive(Clone, Debug)]
pub struct PulseTable {
    pub p: u32,
    pub t_f: f64,
    pub a0: f64,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl PulseTable {
    pub fn shape(&self) -> Result<FourierShape> {
        FourierShape::new(self.p, self.a.clone(), self.b.clone())
    }
}

/// Parse the pulse CSV format: `p=`, `t_f=`, `A0=` headers, then an
/// `n,a_n,b_n` table with consecutive harmonic indices from 0.
pub fn parse_pulse_csv(text: &str) -> Result<PulseTable> {
    let mut p = None;
    let mut t_f = None;
    let mut a0 = None;
    let mut a = Vec::new();
    let mut b = Vec::new();
    let mut in_table = false;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if !in_table {
            if line.eq_ignore_ascii_case("n,a_n,b_n") {
                in_table = true;
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::invalid(format!("line {}: expected key=value", lineno + 1)))?;
            let value: f64 = value.trim().parse().map_err(|_| {
                Error::invalid(format!("line {}: bad number {:?}", lineno + 1, value))
            })?;
            match key.trim() {
                "p" => p = Some(value),
                "t_f" => t_f = Some(value),
                "A0" => a0 = Some(value),
                other => {
                    return Err(Error::invalid(format!(
                        "line {}: unknown header {other:?}",
                        lineno + 1
                    )))
                }
            }
            continue;
        }
        let mut cols = line.split(',');
        let (n, an, bn) = (cols.next(), cols.next(), cols.next());
        let (n, an, bn) = match (n, an, bn, cols.next()) {
            (Some(n), Some(an), Some(bn), None) => (n, an, bn),
            _ => return Err(Error::invalid(format!("line {}: expected n,a_n,b_n", lineno + 1))),
        };
        let n: usize = n
            .trim()
            .parse()
            .map_err(|_| Error::invalid(format!("line {}: bad index", lineno + 1)))?;
        if n != a.len() {
            return Err(Error::invalid(format!(
                "line {}: harmonic index {n} out of order (expected {})",
                lineno + 1,
                a.len()
            )));
        }
        let parse = |v: &str| -> Result<f64> {
            v.trim()
                .parse()
                .map_err(|_| Error::invalid(format!("line {}: bad coefficient {v:?}", lineno + 1)))
        };
        a.push(parse(an)?);
        b.push(parse(bn)?);
    }
    let p = p.ok_or_else(|| Error::invalid("missing p= header"))?;
    if p <= 0.0 || p.fract() != 0.0 {
        return Err(Error::invalid(format!("p must be a positive integer, got {p}")));
    }
    if a.is_empty() {
        return Err(Error::invalid("table has no coefficient rows"));
    }
    Ok(PulseTable {
        p: p as u32,
        t_f: t_f.ok_or_else(|| Error::invalid("missing t_f= header"))?,
        a0: a0.ok_or_else(|| Error::invalid("missing A0= header"))?,
        a,
        b,
    })
}

pub fn format_pulse_csv(table: &PulseTable) -> String {
    let mut out = String::new();
    out.push_str(&format!("p={}\n", table.p));
    out.push_str(&format!("t_f={}\n", fmt(table.t_f)));
    out.push_str(&format!("A0={}\n", fmt(table.a0)));
    out.push_str("n,a_n,b_n\n");
    for n in 0..table.a.len() {
        out.push_str(&format!("{},{},{}\n", n, fmt(table.a[n]), fmt(table.b[n])));
    }
    out
}

fn fmt(v: f64) -> String {
    // Shortest representation that round-trips.
    let s = format!("{v}");
    if s.parse::<f64>() == Ok(v) {
        s
    } else {
        format!("{v:.17e}")
    }
}

const PI2_OFFSET: &str = include_str!("../../fixtures/pi2_offset_robust.csv");
const PI_OFFSET: &str = include_str!("../../fixtures/pi_offset_robust.csv");
const PI2_COUPLING: &str = include_str!("../../fixtures/pi2_coupling_robust.csv");
const PI_COUPLING: &str = include_str!("../../fixtures/pi_coupling_robust.csv");

fn load(name: &'static str, text: &str, target: RotTarget, robust: RobustAxis) -> Fixture {
    let table = parse_pulse_csv(text).unwrap_or_else(|e| panic!("builtin table {name}: {e}"));
    let shape = table.shape().unwrap_or_else(|e| panic!("builtin table {name}: {e}"));
    Fixture {
        name,
        shape,
        a0: table.a0,
        t_f: table.t_f,
        target,
        robust,
    }
}

/// The four tables shipped with the crate.
pub fn builtin() -> Vec<Fixture> {
    vec![
        load("pi2_offset_robust", PI2_OFFSET, RotTarget::HalfPi, RobustAxis::Offset),
        load("pi_offset_robust", PI_OFFSET, RotTarget::Pi, RobustAxis::Offset),
        load("pi2_coupling_robust", PI2_COUPLING, RotTarget::HalfPi, RobustAxis::Coupling),
        load("pi_coupling_robust", PI_COUPLING, RotTarget::Pi, RobustAxis::Coupling),
    ]
}

pub fn find(name: &str) -> Result<Fixture> {
    builtin()
        .into_iter()
        .find(|f| f.name == name)
        .ok_or_else(|| Error::invalid(format!("unknown pulse table {name:?}")))
}
