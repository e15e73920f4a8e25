//! Echo sequences and detection metrics in the low-cooperativity regime.
//!
//! The engine tracks a binned spin ensemble through pulses and free
//! evolution. Free evolution is applied analytically per bin (z rotation,
//! transverse decay, longitudinal recovery toward s_z = -1/2 at the Bloch
//! plus cavity-induced rate). Pulses are applied as SU(2) rotations
//! accumulated over the drive waveform the spins see: the cavity-filtered
//! field for square drives, the designed intracavity target for smooth ones.
//! Detection windows evaluate the linear cavity response to the freely
//! precessing spins in closed form; the radiated field is not fed back onto
//! the spins, which is the low-cooperativity approximation.

use std::f64::consts::{FRAC_PI_2, PI};

use rayon::prelude::*;

use crate::dynamics::{validate_bins, Relaxation, SpinBin, SystemParams};
use crate::ensemble::purcell_rate;
use crate::error::{Error, Result};
use crate::num::{linspace, trapezoid, Accum};
use crate::pulses::deconvolve::BackAction;
use crate::pulses::{tables, Axis, PulseProgram};
use crate::su2::Su2;

pub mod cpmg;
pub mod highcoop;

/// Detection window width in units of the inverse peak rotation rate: the
/// refocused magnetization stays aligned for a time of order 8 over the
/// slower of the pulse bandwidth and the radiating-profile width.
const WINDOW_FACTOR: f64 = 8.0;

/// Free-evolution slack inserted around kinematic deadlines (s).
const TAU_MARGIN: f64 = 1e-6;

/// Time resolution of echo detection traces (s).
const TRACE_DT: f64 = 5e-9;

/// Cap on samples per detection trace.
const TRACE_MAX: usize = 40_000;

/// Drive calibration and detection bandwidth shared by the echo engines.
#[derive(Clone, Copy, Debug)]
pub struct RunContext {
    /// Coupling the pulse amplitudes are calibrated for; a bin at coupling g
    /// sees the waveform scaled by g / nominal_g.
    pub nominal_g: f64,
    /// Width of the radiating profile; bounds the detection bandwidth.
    pub effective_fwhm: f64,
}

impl RunContext {
    fn validate(&self) -> Result<()> {
        if !(self.nominal_g.is_finite() && self.nominal_g > 0.0) {
            return Err(Error::invalid("nominal_g must be positive"));
        }
        if !(self.effective_fwhm.is_finite() && self.effective_fwhm > 0.0) {
            return Err(Error::invalid("effective_fwhm must be positive"));
        }
        Ok(())
    }
}

/// One echo experiment: excitation, a train of identical refocusing pulses,
/// and the timing knobs. `tau` and `period` default to the minimal values
/// that keep pulses and detection windows from overlapping.
#[derive(Clone, Debug)]
pub struct SequenceSpec {
    pub excitation: PulseProgram,
    pub refocusing: PulseProgram,
    /// Half-echo delay override (s). None picks the kinematic minimum.
    pub tau: Option<f64>,
    /// Number of refocusing pulses; 1 is a Hahn echo.
    pub n_echoes: usize,
    /// Repetition period override for echo trains (s). None picks the
    /// minimum that separates adjacent windows.
    pub period: Option<f64>,
    pub relaxation: Relaxation,
    /// Off runs the fast linear-response engine. On integrates the coupled
    /// cavity-spin equations with a compensated drive (single echo only).
    pub back_action: BackAction,
}

impl SequenceSpec {
    pub fn hahn(excitation: PulseProgram, refocusing: PulseProgram) -> SequenceSpec {
        SequenceSpec {
            excitation,
            refocusing,
            tau: None,
            n_echoes: 1,
            period: None,
            relaxation: Relaxation::Bloch,
            back_action: BackAction::Off,
        }
    }

    pub fn cpmg(excitation: PulseProgram, refocusing: PulseProgram, n_echoes: usize) -> SequenceSpec {
        SequenceSpec { n_echoes, ..SequenceSpec::hahn(excitation, refocusing) }
    }

    fn validate(&self) -> Result<()> {
        if self.n_echoes == 0 {
            return Err(Error::invalid("n_echoes must be at least 1"));
        }
        let dmax = self.excitation.duration().max(self.refocusing.duration());
        if let Some(tau) = self.tau {
            if !(tau.is_finite() && tau > dmax) {
                return Err(Error::invalid(format!(
                    "tau = {tau:e} must exceed the pulse durations ({dmax:e})"
                )));
            }
        }
        if let Some(period) = self.period {
            if !(period.is_finite() && period > 2.0 * dmax) {
                return Err(Error::invalid(format!(
                    "period = {period:e} must exceed twice the pulse durations"
                )));
            }
        }
        Ok(())
    }
}

/// Cavity quadrature trace stitched from the recorded segments of a run.
/// Pulse intervals are gaps: while a drive is imposed the linear-response
/// form does not apply.
#[derive(Clone, Debug, Default)]
pub struct EchoTrace {
    pub t: Vec<f64>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl EchoTrace {
    fn extend(&mut self, seg: EchoTrace) {
        self.t.extend(seg.t);
        self.x.extend(seg.x);
        self.y.extend(seg.y);
    }
}

/// Detection summary of one sequence run.
#[derive(Clone, Debug)]
pub struct EchoMetrics {
    /// One value per echo; zero when that window shows nothing above noise.
    pub per_echo_snr: Vec<f64>,
    /// Euclidean norm of the per-echo values.
    pub snr_total: f64,
    /// Spins moved by the excitation pulse: 2 * (change of collective s_z).
    pub n_spins: f64,
    /// Polarized spins available before excitation.
    pub n_eff: f64,
    /// n_spins / snr_total; infinite when nothing was detected.
    pub n_min: f64,
    /// Integration window per echo (absolute start, end).
    pub windows: Vec<(f64, f64)>,
    /// Signed X at the largest |X| inside the windows.
    pub peak_x: f64,
    /// Number of leading echoes with SNR >= 1.
    pub m_r: usize,
    /// False when the first echo window has no sample above the noise
    /// threshold 3 dX / sqrt(samples).
    pub detected: bool,
}

impl EchoMetrics {
    fn from_snrs(
        snrs: Vec<f64>,
        n_spins: f64,
        n_eff: f64,
        windows: Vec<(f64, f64)>,
        peak_x: f64,
        detected: bool,
    ) -> EchoMetrics {
        let snr_total = accumulate(&snrs);
        let m_r = snrs.iter().take_while(|&&s| s >= 1.0).count();
        EchoMetrics {
            n_min: if snr_total > 0.0 { n_spins / snr_total } else { f64::INFINITY },
            per_echo_snr: snrs,
            snr_total,
            n_spins,
            n_eff,
            windows,
            peak_x,
            m_r,
            detected,
        }
    }
}

/// Windowed signal-to-noise of a quadrature trace: the square root of the
/// integrated squared signal over the noise level.
pub fn snr(ts: &[f64], xs: &[f64], noise_dx: f64) -> Result<f64> {
    if !(noise_dx.is_finite() && noise_dx > 0.0) {
        return Err(Error::invalid(format!("noise_dx must be positive, got {noise_dx}")));
    }
    if ts.len() != xs.len() || ts.len() < 2 {
        return Err(Error::invalid(format!(
            "window needs matching time and signal arrays of length >= 2, got {} and {}",
            ts.len(),
            xs.len()
        )));
    }
    let sq: Vec<f64> = xs.iter().map(|x| x * x).collect();
    Ok(trapezoid(ts, &sq).sqrt() / noise_dx)
}

/// Per-echo detection SNR: the window integral of X^2 counted at the
/// effective sampling bandwidth kappa / 8, normalized by the noise level.
pub fn echo_snr(ts: &[f64], xs: &[f64], kappa: f64, noise_dx: f64) -> Result<f64> {
    Ok(snr(ts, xs, noise_dx)? * (kappa / 8.0).sqrt())
}

/// Total SNR of an echo train: Euclidean norm of the per-echo values.
pub fn cpmg_accumulate(per_echo: &[f64]) -> Result<f64> {
    if per_echo.is_empty() {
        return Err(Error::invalid("per-echo SNR list is empty"));
    }
    if per_echo.iter().any(|&s| !(s >= 0.0) || !s.is_finite()) {
        return Err(Error::invalid("per-echo SNR values must be finite and nonnegative"));
    }
    Ok(accumulate(per_echo))
}

fn accumulate(per_echo: &[f64]) -> f64 {
    let mut acc = Accum::new();
    for &s in per_echo {
        acc.add(s * s);
    }
    acc.value().sqrt()
}

/// Detection window width for a refocused line: WINDOW_FACTOR over the
/// slower of the pulse peak rate and the radiating-profile width.
pub fn window_width(pulse: &PulseProgram, effective_fwhm: f64) -> f64 {
    WINDOW_FACTOR / pulse.peak_rate().min(effective_fwhm)
}

/// Binned ensemble marched through a pulse sequence.
pub struct EnsembleState {
    bins: Vec<SpinBin>,
    initial: Vec<SpinBin>,
    t: f64,
    params: SystemParams,
    nominal_g: f64,
    relax: Relaxation,
}

impl EnsembleState {
    pub fn new(
        bins: Vec<SpinBin>,
        params: SystemParams,
        nominal_g: f64,
        relax: Relaxation,
    ) -> Result<EnsembleState> {
        validate_bins(&bins)?;
        if bins.is_empty() {
            return Err(Error::invalid("ensemble must contain at least one bin"));
        }
        if !(nominal_g.is_finite() && nominal_g > 0.0) {
            return Err(Error::invalid("nominal_g must be positive"));
        }
        Ok(EnsembleState {
            initial: bins.clone(),
            bins,
            t: 0.0,
            params,
            nominal_g,
            relax,
        })
    }

    pub fn bins(&self) -> &[SpinBin] {
        &self.bins
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn reset(&mut self) {
        self.bins.clone_from(&self.initial);
        self.t = 0.0;
    }

    pub fn s_z_bar(&self) -> f64 {
        let mut acc = Accum::new();
        for b in &self.bins {
            acc.add(b.weight * b.s[2]);
        }
        acc.value()
    }

    /// Polarized spins available at the start: 2 |sum w s_z(0)|.
    pub fn n_eff(&self) -> f64 {
        crate::ensemble::n_eff(&self.initial)
    }

    /// Spins moved since the start: 2 * (current - initial collective s_z).
    pub fn n_spins(&self) -> f64 {
        let mut acc = Accum::new();
        for (b, b0) in self.bins.iter().zip(&self.initial) {
            acc.add(b.weight * (b.s[2] - b0.s[2]));
        }
        2.0 * acc.value()
    }

    /// Analytic free evolution: z rotation by delta * dt, transverse decay
    /// exp(-dt/T2), longitudinal recovery toward -1/2 at 1/T1 plus the
    /// cavity-induced rate.
    pub fn free(&mut self, dt: f64) {
        assert!(dt >= 0.0, "free evolution runs forward, got dt = {dt}");
        if dt == 0.0 {
            return;
        }
        let kappa = self.params.kappa;
        let relax = self.relax == Relaxation::Bloch;
        for b in &mut self.bins {
            let (sn, cs) = (b.delta * dt).sin_cos();
            let sx = b.s[0] * cs - b.s[1] * sn;
            let sy = b.s[0] * sn + b.s[1] * cs;
            if relax {
                let e2 = (-dt / b.t2).exp();
                let g1 = 1.0 / b.t1 + purcell_rate(b.delta, b.g, kappa);
                let e1 = (-g1 * dt).exp();
                b.s = [sx * e2, sy * e2, -0.5 + (b.s[2] + 0.5) * e1];
            } else {
                b.s[0] = sx;
                b.s[1] = sy;
            }
        }
        self.t += dt;
    }

    /// Instantaneous rotation of every bin; takes no time.
    pub fn rotate_ideal(&mut self, axis: Axis, angle: f64) {
        let u = match axis {
            Axis::X => Su2::rot_x(angle),
            Axis::Y => Su2::rot_y(angle),
        };
        for b in &mut self.bins {
            b.s = u.apply_bloch(b.s);
        }
    }

    /// March every bin through the pulse waveform with a midpoint SU(2)
    /// integrator, then apply crude transverse decay over the drive span.
    /// Square drives march over the full footprint (ring-up and ring-down);
    /// smooth drives over their nominal duration.
    pub fn apply_pulse(&mut self, pulse: &PulseProgram) -> Result<()> {
        if let PulseProgram::Ideal { theta, axis } = *pulse {
            self.rotate_ideal(axis, theta);
            return Ok(());
        }
        let kappa = self.params.kappa;
        let (span, nstep) = if pulse.is_smooth() {
            (pulse.duration(), 2999)
        } else {
            (pulse.footprint(kappa), 3999)
        };
        let h = span / nstep as f64;
        let wave: Vec<(f64, f64)> = (0..nstep)
            .map(|i| pulse.rotation_xy((i as f64 + 0.5) * h, kappa))
            .collect();
        let g0 = self.nominal_g;
        self.bins.par_iter_mut().for_each(|b| {
            let scale = b.g / g0;
            let mut u = Su2::IDENTITY;
            for &(wx, wy) in &wave {
                u = Su2::step(wx * scale, wy * scale, b.delta, h).mul(&u);
            }
            b.s = u.apply_bloch(b.s);
        });
        if self.relax == Relaxation::Bloch {
            for b in &mut self.bins {
                let e2 = (-span / b.t2).exp();
                b.s[0] *= e2;
                b.s[1] *= e2;
            }
        }
        self.t += span;
        Ok(())
    }

    /// Record the cavity response over the next `span` of free evolution:
    /// X(t) = x0 e^{-kappa t/2} - Im sum_j w_j 2 g_j resp_j(t) s+_j and the
    /// matching real part for Y, with resp the driven-cavity kernel
    /// (e^{lam t} - e^{-kappa t/2}) / (lam + kappa/2), lam = i delta - 1/T2.
    /// Advances the state by `span`. Times in the returned trace are
    /// absolute.
    pub fn observe(&mut self, span: f64, ns: usize, x0: f64, y0: f64) -> EchoTrace {
        let ns = ns.max(2);
        let ts = linspace(0.0, span, ns);
        let kappa = self.params.kappa;
        let relax = self.relax == Relaxation::Bloch;
        // Per bin: lam and inv = 1/(lam + kappa/2) folded with the source
        // w 2g s+ into a single complex weight.
        let pre: Vec<(f64, f64, f64, f64)> = self
            .bins
            .iter()
            .map(|b| {
                let lam_re = if relax { -1.0 / b.t2 } else { 0.0 };
                let lam_im = b.delta;
                let den_re = lam_re + 0.5 * kappa;
                let den_im = lam_im;
                let den_sq = den_re * den_re + den_im * den_im;
                let src_re = b.weight * 2.0 * b.g * b.s[0];
                let src_im = b.weight * 2.0 * b.g * b.s[1];
                let pre_re = (src_re * den_re + src_im * den_im) / den_sq;
                let pre_im = (src_im * den_re - src_re * den_im) / den_sq;
                (lam_re, lam_im, pre_re, pre_im)
            })
            .collect();
        let xy: Vec<(f64, f64)> = ts
            .par_iter()
            .map(|&t| {
                let d = (-0.5 * kappa * t).exp();
                let mut re = Accum::new();
                let mut im = Accum::new();
                for &(lam_re, lam_im, pre_re, pre_im) in &pre {
                    let er = (lam_re * t).exp();
                    let (sn, cs) = (lam_im * t).sin_cos();
                    let zr = er * cs - d;
                    let zi = er * sn;
                    re.add(zr * pre_re - zi * pre_im);
                    im.add(zr * pre_im + zi * pre_re);
                }
                (x0 * d - im.value(), y0 * d + re.value())
            })
            .collect();
        let t0 = self.t;
        self.free(span);
        EchoTrace {
            t: ts.iter().map(|&u| u + t0).collect(),
            x: xy.iter().map(|p| p.0).collect(),
            y: xy.iter().map(|p| p.1).collect(),
        }
    }

    /// Transverse phase atan2(s_y, s_x) per bin, in (-pi, pi].
    pub fn transverse_phases(&self) -> Vec<f64> {
        self.bins.iter().map(|b| b.s[1].atan2(b.s[0])).collect()
    }
}

/// Outcome of one windowed detection: the SNR, the window actually
/// integrated, and whether anything rose above the noise threshold.
struct WindowOutcome {
    snr: f64,
    window: (f64, f64),
    peak_x: f64,
    detected: bool,
}

/// Integrate one detection window: carve [center - width/2, center + width/2]
/// out of the trace, then trim to the contiguous region around the in-window
/// |X| peak where |X| exceeds 3 dX / sqrt(samples). The full window is the
/// fallback when nothing exceeds the threshold, in which case the echo counts
/// as undetected and its SNR is zero.
fn detect_window(
    ts: &[f64],
    xs: &[f64],
    center: f64,
    width: f64,
    kappa: f64,
    noise_dx: f64,
) -> Result<WindowOutcome> {
    let lo_t = center - 0.5 * width;
    let hi_t = center + 0.5 * width;
    let idx: Vec<usize> = (0..ts.len()).filter(|&i| ts[i] >= lo_t && ts[i] <= hi_t).collect();
    if idx.len() < 2 {
        return Err(Error::numeric(
            center,
            format!("detection window [{lo_t:e}, {hi_t:e}] holds fewer than two samples"),
        ));
    }
    let (first, last) = (idx[0], *idx.last().unwrap());
    let threshold = 3.0 * noise_dx / (idx.len() as f64).sqrt();
    let peak_rel = idx
        .iter()
        .map(|&i| xs[i].abs())
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap()
        .0;
    let peak = idx[peak_rel];
    if xs[peak].abs() <= threshold {
        return Ok(WindowOutcome {
            snr: 0.0,
            window: (ts[first], ts[last]),
            peak_x: xs[peak],
            detected: false,
        });
    }
    let mut lo = peak;
    while lo > first && xs[lo - 1].abs() > threshold {
        lo -= 1;
    }
    let mut hi = peak;
    while hi < last && xs[hi + 1].abs() > threshold {
        hi += 1;
    }
    let snr = echo_snr(&ts[lo..=hi], &xs[lo..=hi], kappa, noise_dx)?;
    Ok(WindowOutcome {
        snr,
        window: (ts[lo], ts[hi]),
        peak_x: xs[peak],
        detected: true,
    })
}

/// Hahn-echo outcome: the stitched trace, detection metrics, and the timing
/// actually used.
#[derive(Clone, Debug)]
pub struct HahnOutcome {
    pub trace: EchoTrace,
    pub metrics: EchoMetrics,
    pub tau: f64,
    pub t_echo: f64,
    pub window_width: f64,
}

/// Run excitation - tau - refocusing - tau and integrate the echo around
/// t = 2 tau (plus the excitation center offset for pulses of finite span).
/// The minimal tau parks the refocusing pulse right after the excitation
/// footprint while keeping the detection window clear of the refocusing
/// footprint.
pub fn hahn(
    spec: &SequenceSpec,
    bins: &[SpinBin],
    params: &SystemParams,
    ctx: &RunContext,
) -> Result<HahnOutcome> {
    spec.validate()?;
    ctx.validate()?;
    let mut state = EnsembleState::new(bins.to_vec(), *params, ctx.nominal_g, spec.relaxation)?;
    let kappa = params.kappa;
    let exc = &spec.excitation;
    let refoc = &spec.refocusing;
    let width = window_width(exc, ctx.effective_fwhm);

    let c1 = if exc.is_ideal() { 0.0 } else { 0.5 * exc.duration() };
    let mut trace = EchoTrace::default();
    state.apply_pulse(exc)?;
    let n_spins = state.n_spins();

    let ref_half = if refoc.is_ideal() { 0.0 } else { 0.5 * refoc.duration() };
    let min_tau = if exc.is_ideal() && refoc.is_ideal() {
        0.5 * width + TAU_MARGIN
    } else {
        let after_exc = exc.footprint(kappa) - c1 + ref_half;
        let clear_window = refoc.footprint(kappa) - ref_half + 0.5 * width;
        after_exc.max(clear_window) + TAU_MARGIN
    };
    let tau = match spec.tau {
        None => min_tau,
        Some(t) if t >= min_tau => t,
        Some(t) => {
            return Err(Error::invalid(format!(
                "tau = {t:e} leaves pulses or windows overlapping; minimum here is {min_tau:e}"
            )))
        }
    };

    let t_pi_start = c1 + tau - ref_half;
    if t_pi_start > state.time() {
        let span = t_pi_start - state.time();
        let ns = ((span / 1e-7) as usize + 2).min(2000);
        trace.extend(state.observe(span, ns, 0.0, 0.0));
    }
    state.apply_pulse(refoc)?;

    let t_echo = c1 + 2.0 * tau;
    let span = t_echo + 0.75 * width - state.time();
    if span <= 0.0 {
        return Err(Error::numeric(state.time(), "echo window ends inside the refocusing pulse"));
    }
    let ns = ((span / TRACE_DT) as usize + 2).min(TRACE_MAX);
    let seg = state.observe(span, ns, 0.0, 0.0);
    let win = detect_window(&seg.t, &seg.x, t_echo, width, kappa, params.noise_dx)?;
    trace.extend(seg);

    let metrics = EchoMetrics::from_snrs(
        vec![win.snr],
        n_spins,
        state.n_eff(),
        vec![win.window],
        win.peak_x,
        win.detected,
    );
    Ok(HahnOutcome { trace, metrics, tau, t_echo, window_width: width })
}

/// Run the sequence described by `spec`: a Hahn echo for n_echoes = 1, a
/// CPMG train otherwise. With back-action on the single echo goes through
/// the coupled cavity-spin integrator instead of the linear-response engine.
pub fn run_sequence(
    spec: &SequenceSpec,
    bins: &[SpinBin],
    params: &SystemParams,
    ctx: &RunContext,
) -> Result<(EchoTrace, EchoMetrics)> {
    match (spec.back_action, spec.n_echoes) {
        (BackAction::Off, 1) => {
            let out = hahn(spec, bins, params, ctx)?;
            Ok((out.trace, out.metrics))
        }
        (BackAction::Off, _) => {
            let out = cpmg::run_cpmg(spec, bins, params, ctx)?;
            Ok((out.trace, out.metrics))
        }
        (BackAction::On, 1) => {
            let out = highcoop::run_full_echo(spec, bins, params, ctx)?;
            Ok((out.trace, out.metrics))
        }
        (BackAction::On, _) => Err(Error::invalid(
            "back-action echo trains are not supported; run echoes one at a time",
        )),
    }
}

/// Pulse family for echo comparisons: each builds a pi/2 excitation and a pi
/// refocusing pulse about x at a common duration. The square pi keeps the
/// duration and doubles the amplitude.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EchoFamily {
    Ideal,
    Square,
    Bump,
    CouplingRobust,
}

impl EchoFamily {
    pub fn pair(&self, duration: f64) -> Result<(PulseProgram, PulseProgram)> {
        match self {
            EchoFamily::Ideal => Ok((
                PulseProgram::ideal(FRAC_PI_2, Axis::X),
                PulseProgram::ideal(PI, Axis::X),
            )),
            EchoFamily::Square => Ok((
                PulseProgram::square(FRAC_PI_2, duration, Axis::X)?,
                PulseProgram::square(PI, duration, Axis::X)?,
            )),
            EchoFamily::Bump => Ok((
                PulseProgram::bump(FRAC_PI_2, duration, Axis::X)?,
                PulseProgram::bump(PI, duration, Axis::X)?,
            )),
            EchoFamily::CouplingRobust => Ok((
                tables::find("pi2_coupling_robust")?.program(duration, Axis::X)?,
                tables::find("pi_coupling_robust")?.program(duration, Axis::X)?,
            )),
        }
    }
}

/// One point of an N_min(duration) curve.
#[derive(Clone, Copy, Debug)]
pub struct NminPoint {
    pub duration: f64,
    pub n_min: f64,
    pub snr: f64,
    pub n_spins: f64,
}

/// Hahn-echo N_min as a function of pulse duration for one family.
pub fn nmin_vs_duration(
    family: EchoFamily,
    durations: &[f64],
    bins: &[SpinBin],
    params: &SystemParams,
    ctx: &RunContext,
    relaxation: Relaxation,
) -> Result<Vec<NminPoint>> {
    if durations.iter().any(|&d| !(d.is_finite() && d > 0.0)) {
        return Err(Error::invalid("durations must be positive"));
    }
    durations
        .iter()
        .map(|&duration| {
            let (excitation, refocusing) = family.pair(duration)?;
            let spec = SequenceSpec { relaxation, ..SequenceSpec::hahn(excitation, refocusing) };
            let out = hahn(&spec, bins, params, ctx)?;
            Ok(NminPoint {
                duration,
                n_min: out.metrics.n_min,
                snr: out.metrics.snr_total,
                n_spins: out.metrics.n_spins,
            })
        })
        .collect()
}

/// The low-cooperativity bench: a flat ensemble of 13.5k spins over
/// +-2 pi 1.9 MHz, kappa = 9.8e5, g = 2 pi 424, hyperpolarized at 10
/// repetitions per second, T1 = 3 s, T2 = 1.7 ms, read out against a noise
/// floor of half a quadrature unit.
#[derive(Clone, Copy, Debug)]
pub struct LowCoopSetup {
    pub n_total: f64,
    pub kappa: f64,
    pub g0: f64,
    pub gamma_rep: f64,
    pub halfwidth: f64,
    pub t1: f64,
    pub t2: f64,
    pub noise_dx: f64,
    pub n_bins: usize,
    pub g_spread: f64,
    pub g_points: usize,
}

impl Default for LowCoopSetup {
    fn default() -> Self {
        LowCoopSetup {
            n_total: 13_500.0,
            kappa: 9.8e5,
            g0: std::f64::consts::TAU * 424.0,
            gamma_rep: 10.0,
            halfwidth: std::f64::consts::TAU * 1.9e6,
            t1: 3.0,
            t2: 1.7e-3,
            noise_dx: 0.5,
            n_bins: 1201,
            g_spread: 0.0,
            g_points: 1,
        }
    }
}

impl LowCoopSetup {
    pub fn ensemble_spec(&self) -> crate::ensemble::EnsembleSpec {
        crate::ensemble::EnsembleSpec {
            n_total: self.n_total,
            dist: crate::ensemble::OffsetDist::Uniform { halfwidth: self.halfwidth },
            n_bins: self.n_bins,
            g0: self.g0,
            g_spread: self.g_spread,
            g_points: self.g_points,
            gamma_rep: self.gamma_rep,
            t1: self.t1,
            t2: self.t2,
        }
    }

    pub fn build(&self) -> Result<(Vec<SpinBin>, SystemParams, RunContext)> {
        let params = SystemParams::new(self.kappa)?.with_noise(self.noise_dx)?;
        let spec = self.ensemble_spec();
        let bins = crate::ensemble::build_bins(&spec, &params)?;
        let fwhm = crate::ensemble::effective_fwhm(&spec, &params)?;
        Ok((bins, params, RunContext { nominal_g: self.g0, effective_fwhm: fwhm }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn small_setup(n_bins: usize) -> (Vec<SpinBin>, SystemParams, RunContext) {
        LowCoopSetup { n_bins, ..LowCoopSetup::default() }.build().unwrap()
    }

    fn single_bin(delta: f64, g: f64, s: [f64; 3]) -> Vec<SpinBin> {
        vec![SpinBin { delta, g, weight: 1.0, s, t1: f64::INFINITY, t2: f64::INFINITY }]
    }

    #[test]
    fn snr_examples() {
        let ts = linspace(0.0, 2.0, 101);
        let zero = vec![0.0; 101];
        assert_eq!(snr(&ts, &zero, 0.5).unwrap(), 0.0);
        // Constant c over length L: |c| sqrt(L) / dX.
        let c = vec![3.0; 101];
        assert_relative_eq!(snr(&ts, &c, 0.5).unwrap(), 3.0 * 2.0f64.sqrt() / 0.5, epsilon = 1e-12);
        let half = snr(&ts, &c, 0.25).unwrap();
        let full = snr(&ts, &c, 0.5).unwrap();
        assert_relative_eq!(half, 2.0 * full, epsilon = 1e-12);
        assert!(snr(&ts, &c, 0.0).is_err());
        assert!(snr(&ts[..50], &c, 0.5).is_err());
    }

    #[test]
    fn accumulate_examples() {
        assert_relative_eq!(cpmg_accumulate(&[3.0, 4.0]).unwrap(), 5.0);
        assert_relative_eq!(cpmg_accumulate(&[2.5]).unwrap(), 2.5);
        let m = 9;
        let same = vec![1.7; m];
        assert_relative_eq!(cpmg_accumulate(&same).unwrap(), 1.7 * 3.0, epsilon = 1e-12);
        assert!(cpmg_accumulate(&[]).is_err());
        assert!(cpmg_accumulate(&[1.0, -0.1]).is_err());
    }

    #[test]
    fn free_evolution_is_analytic() {
        let params = SystemParams::new(9.8e5).unwrap();
        let mut bins = single_bin(1.0e4, 0.0, [1.0, 0.0, 0.3]);
        bins[0].t1 = 2.0;
        bins[0].t2 = 0.5;
        let mut state = EnsembleState::new(bins, params, 1.0, Relaxation::Bloch).unwrap();
        let dt = 0.25;
        state.free(dt);
        let b = &state.bins()[0];
        let e2 = (-dt / 0.5f64).exp();
        assert_relative_eq!(b.s[0], (1.0e4 * dt).cos() * e2, epsilon = 1e-12);
        assert_relative_eq!(b.s[1], (1.0e4 * dt).sin() * e2, epsilon = 1e-12);
        // g = 0 kills the cavity-induced rate; pure T1 toward -1/2.
        let e1 = (-dt / 2.0f64).exp();
        assert_relative_eq!(b.s[2], -0.5 + 0.8 * e1, epsilon = 1e-12);
        assert_relative_eq!(state.time(), dt);
    }

    #[test]
    fn ideal_rotations_match_free_phase_convention() {
        // pi/2 about x takes -z to +y; then free evolution advances the
        // transverse phase by +delta t.
        let params = SystemParams::new(9.8e5).unwrap();
        let bins = single_bin(2.0e3, 0.0, [0.0, 0.0, -0.5]);
        let mut state = EnsembleState::new(bins, params, 1.0, Relaxation::Off).unwrap();
        state.rotate_ideal(Axis::X, FRAC_PI_2);
        let s = state.bins()[0].s;
        assert_relative_eq!(s[1], 0.5, epsilon = 1e-12);
        assert!(s[0].abs() < 1e-15 && s[2].abs() < 1e-15);
        state.free(1.0e-4);
        let ph = state.transverse_phases()[0];
        assert_relative_eq!(ph, FRAC_PI_2 + 2.0e3 * 1.0e-4, epsilon = 1e-12);
    }

    #[test]
    fn bump_pulse_rotates_on_resonance() {
        let params = SystemParams::new(9.8e5).unwrap();
        let bins = single_bin(0.0, 1.0, [0.0, 0.0, -0.5]);
        let mut state = EnsembleState::new(bins, params, 1.0, Relaxation::Off).unwrap();
        let pulse = PulseProgram::bump(FRAC_PI_2, 10e-6, Axis::X).unwrap();
        state.apply_pulse(&pulse).unwrap();
        let s = state.bins()[0].s;
        assert!((s[1] - 0.5).abs() < 1e-8, "s = {s:?}");
        assert!(s[2].abs() < 1e-8);
        assert_relative_eq!(state.time(), 10e-6);
    }

    #[test]
    fn square_ring_down_repays_the_angle() {
        // Cavity-filtered square: the ring-down tail completes the area, so
        // an on-resonance spin still turns by theta.
        let kappa = 9.8e5;
        let params = SystemParams::new(kappa).unwrap();
        let bins = single_bin(0.0, 1.0, [0.0, 0.0, -0.5]);
        let mut state = EnsembleState::new(bins, params, 1.0, Relaxation::Off).unwrap();
        let pulse = PulseProgram::square(PI, 1e-6, Axis::X).unwrap();
        state.apply_pulse(&pulse).unwrap();
        let s = state.bins()[0].s;
        // Residual tail beyond the footprint leaves ~exp(-7) of the area.
        assert!((s[2] - 0.5).abs() < 5e-3, "s = {s:?}");
        assert_relative_eq!(state.time(), pulse.footprint(kappa));
    }

    #[test]
    fn coupling_scale_shifts_rotation_angle() {
        let params = SystemParams::new(9.8e5).unwrap();
        let mut bins = single_bin(0.0, 1.3, [0.0, 0.0, -0.5]);
        bins.extend(single_bin(0.0, 1.0, [0.0, 0.0, -0.5]));
        let mut state = EnsembleState::new(bins, params, 1.0, Relaxation::Off).unwrap();
        let pulse = PulseProgram::bump(PI, 5e-6, Axis::X).unwrap();
        state.apply_pulse(&pulse).unwrap();
        // The overdriven bin turns by 1.3 pi: s_z = -cos(1.3 pi)/2.
        assert_relative_eq!(state.bins()[0].s[2], -0.5 * (1.3 * PI).cos(), epsilon = 1e-6);
        assert_relative_eq!(state.bins()[1].s[2], 0.5, epsilon = 1e-8);
    }

    #[test]
    fn observe_decays_initial_field_and_radiates() {
        let kappa = 1.0e6;
        let params = SystemParams::new(kappa).unwrap();
        // No transverse moment: X is pure initial-field decay.
        let bins = single_bin(1.0e5, 100.0, [0.0, 0.0, -0.5]);
        let mut state = EnsembleState::new(bins, params, 100.0, Relaxation::Off).unwrap();
        let trace = state.observe(1e-5, 201, 2.0, -1.0);
        for (i, &t) in trace.t.iter().enumerate() {
            assert_relative_eq!(trace.x[i], 2.0 * (-0.5 * kappa * t).exp(), epsilon = 1e-12);
            assert_relative_eq!(trace.y[i], -1.0 * (-0.5 * kappa * t).exp(), epsilon = 1e-12);
        }
        // A transverse moment radiates: Y responds to s_x at short times.
        let bins = single_bin(0.0, 100.0, [0.3, 0.0, 0.0]);
        let mut state = EnsembleState::new(bins, params, 100.0, Relaxation::Off).unwrap();
        let trace = state.observe(1e-5, 201, 0.0, 0.0);
        // dY/dt = -kappa Y/2 + 2 g w s_x rings up toward 2 g w s_x / (kappa/2).
        let y_ss = 2.0 * 100.0 * 0.3 / (0.5 * kappa);
        let t_end = *trace.t.last().unwrap();
        let expect = y_ss * (1.0 - (-0.5 * kappa * t_end).exp());
        assert_relative_eq!(*trace.y.last().unwrap(), expect, max_relative = 1e-9);
        assert!(trace.x.iter().all(|&x| x.abs() < 1e-12));
    }

    #[test]
    fn hahn_refocuses_ideal_pulses() {
        let (bins, params, ctx) = small_setup(201);
        let mut state = EnsembleState::new(bins, params, ctx.nominal_g, Relaxation::Off).unwrap();
        state.rotate_ideal(Axis::X, FRAC_PI_2);
        let tau = 20e-6;
        state.free(tau);
        state.rotate_ideal(Axis::X, PI);
        state.free(tau);
        let phases = state.transverse_phases();
        let (lo, hi) = phases
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &p| (a.min(p), b.max(p)));
        assert!(hi - lo < 1e-10, "phase spread {} at 2 tau", hi - lo);
    }

    #[test]
    fn phase_variance_is_minimized_at_the_echo() {
        let (bins, params, ctx) = small_setup(101);
        let spread = |off: f64| -> f64 {
            let mut state =
                EnsembleState::new(bins.clone(), params, ctx.nominal_g, Relaxation::Off).unwrap();
            state.rotate_ideal(Axis::X, FRAC_PI_2);
            let tau = 20e-6;
            state.free(tau);
            state.rotate_ideal(Axis::X, PI);
            state.free(tau + off);
            let ph = state.transverse_phases();
            let mean = ph.iter().sum::<f64>() / ph.len() as f64;
            ph.iter().map(|p| (p - mean) * (p - mean)).sum::<f64>() / ph.len() as f64
        };
        let step = 5e-9;
        let at_echo = spread(0.0);
        for k in [-3i32, -2, -1, 1, 2, 3] {
            assert!(at_echo < spread(k as f64 * step), "offset {k} steps");
        }
    }

    #[test]
    fn hahn_detects_an_ideal_echo() {
        let (bins, params, ctx) = small_setup(151);
        let (exc, refoc) = EchoFamily::Ideal.pair(0.0).unwrap();
        let spec = SequenceSpec::hahn(exc, refoc);
        let out = hahn(&spec, &bins, &params, &ctx).unwrap();
        let m = &out.metrics;
        assert!(m.detected);
        assert_eq!(m.per_echo_snr.len(), 1);
        assert!(m.snr_total > 1.0);
        assert!(m.n_min.is_finite() && m.n_min > 0.0);
        // Ideal pi/2 moves every polarized spin.
        assert_relative_eq!(m.n_spins, m.n_eff, max_relative = 1e-9);
        // The detected window brackets the kinematic echo time.
        let (a, b) = m.windows[0];
        assert!(a <= out.t_echo && out.t_echo <= b, "window ({a}, {b}) vs {}", out.t_echo);
        assert_relative_eq!(m.snr_total, m.per_echo_snr[0]);
        // Trace is time ordered across stitched segments.
        assert!(out.trace.t.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn hahn_rejects_short_tau() {
        let (bins, params, ctx) = small_setup(51);
        let (exc, refoc) = EchoFamily::Bump.pair(10e-6).unwrap();
        let mut spec = SequenceSpec::hahn(exc, refoc);
        spec.tau = Some(10.5e-6);
        let err = hahn(&spec, &bins, &params, &ctx).unwrap_err();
        assert!(matches!(err, Error::Invalid(_)), "{err}");
    }

    #[test]
    fn no_excitation_means_no_detection() {
        let (bins, params, ctx) = small_setup(51);
        // Zero-angle excitation leaves the ensemble along -z: nothing radiates.
        let spec = SequenceSpec::hahn(
            PulseProgram::ideal(0.0, Axis::X),
            PulseProgram::ideal(PI, Axis::X),
        );
        let out = hahn(&spec, &bins, &params, &ctx).unwrap();
        assert!(!out.metrics.detected);
        assert_eq!(out.metrics.per_echo_snr, vec![0.0]);
        assert_eq!(out.metrics.snr_total, 0.0);
        assert!(out.metrics.n_min.is_infinite());
    }

    #[test]
    fn window_width_rule() {
        let fwhm = 1.2499e6;
        let ideal = PulseProgram::ideal(PI, Axis::X);
        assert_relative_eq!(window_width(&ideal, fwhm), 8.0 / fwhm);
        // Slow bump: pulse bandwidth below the line width.
        let bump = PulseProgram::bump(FRAC_PI_2, 15e-6, Axis::X).unwrap();
        assert_relative_eq!(window_width(&bump, fwhm), 8.0 / bump.peak_rate());
        assert!((window_width(&bump, fwhm) - 46.1e-6).abs() < 0.2e-6);
        // Fast square: line width limited.
        let sq = PulseProgram::square(FRAC_PI_2, 1e-6, Axis::X).unwrap();
        assert_relative_eq!(window_width(&sq, fwhm), 8.0 / fwhm);
    }
}
