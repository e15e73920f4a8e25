//! CPMG echo trains: excitation, a train of identical refocusing pulses at
//! the minimal repetition period, and one detection window per echo.
//!
//! A real refocusing pulse is not an instantaneous mirror: to first order in
//! the offset its propagator is a mirror displaced from the waveform center
//! by a shift chi extracted from the offset derivative of the accumulated
//! phase. The schedule places the effective mirror, not the waveform, at the
//! half-period points, so echoes land at multiples of the period.

use super::{
    window_width, EchoMetrics, EchoTrace, EnsembleState, RunContext, SequenceSpec, WINDOW_FACTOR,
};
use crate::dynamics::{propagate_su2, SpinBin, SystemParams};
use crate::error::{Error, Result};
use crate::pulses::PulseProgram;

/// Scheduling slack (s) separating pulse footprints from detection windows.
const SCHEDULE_MARGIN: f64 = 0.5e-6;

/// Offset used for the finite-difference mirror-shift probe (rad/s).
const CHI_PROBE: f64 = 2.0e4;

/// Steps of the SU(2) march used by the probe.
const CHI_STEPS: usize = 60_000;

/// Sample spacing inside detection windows (s).
const WINDOW_DT: f64 = 2.0e-8;

/// Effective mirror-center shift of a refocusing pulse relative to its
/// waveform start: d(accumulated z phase)/d(offset) / 2 across +-CHI_PROBE.
/// Zero for ideal pulses and for waveforms symmetric about their center.
pub fn mirror_shift(pulse: &PulseProgram, kappa: f64) -> f64 {
    if pulse.is_ideal() {
        return 0.0;
    }
    let foot = pulse.footprint(kappa);
    let phase = |delta: f64| -> f64 {
        let u = propagate_su2(delta, |t| pulse.rotation_xy(t, kappa), 0.0, foot, CHI_STEPS);
        2.0 * u.0[2].atan2(u.0[1])
    };
    let d = phase(CHI_PROBE) - phase(-CHI_PROBE);
    let wrapped = (d + std::f64::consts::PI).rem_euclid(std::f64::consts::TAU) - std::f64::consts::PI;
    wrapped / (2.0 * CHI_PROBE)
}

/// A CPMG run with its schedule.
#[derive(Clone, Debug)]
pub struct CpmgOutcome {
    pub trace: EchoTrace,
    pub metrics: EchoMetrics,
    /// Repetition period actually used.
    pub period: f64,
    /// Detection window width.
    pub window_width: f64,
    /// Mirror-center shift of the refocusing pulse.
    pub mirror_shift: f64,
}

/// Run a CPMG train: excitation at t = 0, refocusing pulse k with its
/// effective mirror at (k + 1/2) T past the excitation center, detection
/// window k centered at (k + 1) T. The minimal T packs the window, the pulse
/// footprint, and the mirror shift with SCHEDULE_MARGIN slack; an explicit
/// `spec.period` below that minimum is rejected.
pub fn run_cpmg(
    spec: &SequenceSpec,
    bins: &[SpinBin],
    params: &SystemParams,
    ctx: &RunContext,
) -> Result<CpmgOutcome> {
    spec.validate()?;
    ctx.validate()?;
    let mut state = EnsembleState::new(bins.to_vec(), *params, ctx.nominal_g, spec.relaxation)?;
    let kappa = params.kappa;
    let exc = &spec.excitation;
    let refoc = &spec.refocusing;

    let c1 = if exc.is_ideal() { 0.0 } else { 0.5 * exc.duration() };
    let mut trace = EchoTrace::default();
    state.apply_pulse(exc)?;
    let n_spins = state.n_spins();

    let (width, t_pi, foot, chi, m_off);
    if refoc.is_ideal() {
        width = WINDOW_FACTOR / ctx.effective_fwhm;
        t_pi = 0.0;
        foot = 0.0;
        chi = 0.0;
        m_off = 0.0;
    } else {
        width = window_width(refoc, ctx.effective_fwhm);
        t_pi = refoc.duration();
        foot = refoc.footprint(kappa);
        chi = mirror_shift(refoc, kappa);
        m_off = 0.5 * (foot - chi);
    }

    let mut gap = (width + foot + chi.abs() - 2.0 * t_pi + 2.0 * SCHEDULE_MARGIN)
        .max(SCHEDULE_MARGIN);
    if !exc.is_ideal() {
        // The first refocusing pulse must clear the excitation footprint.
        let lead = 2.0 * (exc.footprint(kappa) - c1 + m_off) - 2.0 * t_pi + 2.0 * SCHEDULE_MARGIN;
        gap = gap.max(lead);
    }
    let minimal = 2.0 * t_pi + gap;
    let period = match spec.period {
        None => minimal,
        Some(p) if p >= minimal => p,
        Some(p) => {
            return Err(Error::invalid(format!(
                "period = {p:e} packs pulses and windows too tightly; minimum here is {minimal:e}"
            )))
        }
    };

    let mut snrs = Vec::with_capacity(spec.n_echoes);
    let mut windows = Vec::with_capacity(spec.n_echoes);
    let mut peak_x = 0.0f64;
    let mut first_detected = false;
    for k in 0..spec.n_echoes {
        let t_start = c1 + (k as f64 + 0.5) * period - m_off;
        let lead = t_start - state.time();
        if lead < -1e-12 {
            return Err(Error::numeric(state.time(), "refocusing pulse overlaps the schedule"));
        }
        if lead > 0.0 {
            let ns = ((lead / 1e-7) as usize + 2).min(2000);
            trace.extend(state.observe(lead, ns, 0.0, 0.0));
        }
        state.apply_pulse(refoc)?;
        let t_c = c1 + (k as f64 + 1.0) * period;
        let a = t_c - 0.5 * width;
        let b = t_c + 0.5 * width;
        if a < state.time() - 1e-12 {
            return Err(Error::numeric(
                state.time(),
                "detection window begins inside the refocusing footprint",
            ));
        }
        if a > state.time() {
            let span = a - state.time();
            let ns = ((span / 1e-7) as usize + 2).min(2000);
            trace.extend(state.observe(span, ns, 0.0, 0.0));
        }
        let ns = (((b - a) / WINDOW_DT) as usize).clamp(64, 4000);
        let seg = state.observe(b - state.time(), ns, 0.0, 0.0);
        let threshold = 3.0 * params.noise_dx / (seg.t.len() as f64).sqrt();
        let (pk_idx, pk_abs) = seg
            .x
            .iter()
            .map(|x| x.abs())
            .enumerate()
            .max_by(|u, v| u.1.total_cmp(&v.1))
            .unwrap();
        let detected = pk_abs > threshold;
        let s = if detected {
            super::echo_snr(&seg.t, &seg.x, kappa, params.noise_dx)?
        } else {
            0.0
        };
        if pk_abs > peak_x.abs() {
            peak_x = seg.x[pk_idx];
        }
        if k == 0 {
            first_detected = detected;
        }
        snrs.push(s);
        windows.push((a, b));
        trace.extend(seg);
    }

    let metrics =
        EchoMetrics::from_snrs(snrs, n_spins, state.n_eff(), windows, peak_x, first_detected);
    Ok(CpmgOutcome {
        trace,
        metrics,
        period,
        window_width: width,
        mirror_shift: chi,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::Relaxation;
    use crate::pulses::Axis;
    use crate::sequences::LowCoopSetup;
    use std::f64::consts::{FRAC_PI_2, PI};

    #[test]
    fn bump_mirror_sits_at_center() {
        // Symmetric waveform applied on resonance: no mirror displacement.
        let p = PulseProgram::bump(PI, 1e-6, Axis::X).unwrap();
        let chi = mirror_shift(&p, 9.8e5);
        assert!(chi.abs() < 2e-9, "chi = {chi:e}");
    }

    #[test]
    fn raw_square_mirror_lags_far_behind() {
        // The ring-up/ring-down asymmetric tail drags the effective mirror
        // roughly ten microseconds past the drive window.
        let p = PulseProgram::square(PI, 1e-6, Axis::X).unwrap();
        let chi = mirror_shift(&p, 9.8e5);
        assert!((chi - 10.9e-6).abs() < 0.1e-6, "chi = {chi:e}");
    }

    #[test]
    fn ideal_train_schedule_and_monotone_snr() {
        let (bins, params, ctx) =
            LowCoopSetup { n_bins: 151, ..LowCoopSetup::default() }.build().unwrap();
        let mut spec = SequenceSpec::cpmg(
            PulseProgram::ideal(FRAC_PI_2, Axis::X),
            PulseProgram::ideal(PI, Axis::X),
            12,
        );
        spec.relaxation = Relaxation::Bloch;
        let out = run_cpmg(&spec, &bins, &params, &ctx).unwrap();
        // Minimal period for instantaneous mirrors: window + margins.
        let w = WINDOW_FACTOR / ctx.effective_fwhm;
        assert!((out.period - (w + 2.0 * SCHEDULE_MARGIN)).abs() < 1e-12);
        assert_eq!(out.metrics.per_echo_snr.len(), 12);
        assert!(out.metrics.detected);
        // T2 decay with perfect mirrors: non-increasing per-echo SNR.
        for pair in out.metrics.per_echo_snr.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-12, "snr rose: {pair:?}");
        }
        let manual =
            (out.metrics.per_echo_snr.iter().map(|s| s * s).sum::<f64>()).sqrt();
        assert!((manual - out.metrics.snr_total).abs() < 1e-10);
        // Windows are disjoint and ordered.
        for pair in out.metrics.windows.windows(2) {
            assert!(pair[0].1 < pair[1].0);
        }
    }

    #[test]
    fn too_small_period_is_rejected() {
        let (bins, params, ctx) =
            LowCoopSetup { n_bins: 51, ..LowCoopSetup::default() }.build().unwrap();
        let mut spec = SequenceSpec::cpmg(
            PulseProgram::ideal(FRAC_PI_2, Axis::X),
            PulseProgram::bump(PI, 1e-6, Axis::X).unwrap(),
            3,
        );
        spec.period = Some(3e-6);
        let err = run_cpmg(&spec, &bins, &params, &ctx).unwrap_err();
        assert!(matches!(err, Error::Invalid(_)), "{err}");
    }
}
