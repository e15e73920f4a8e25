//! High-cooperativity echo bench. When the collective coupling is strong the
//! field the spins radiate is comparable to the drive itself, so holding the
//! intracavity quadratures on a designed pulse means compensating that
//! back-action. The drive is synthesized by deconvolution with the spin term
//! co-integrated, verified by integrating the full model, and compared
//! against a raw square input carrying the same nominal rotation areas.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use crate::dynamics::{
    integrate, CavityQuadratures, IntegrateOpts, Relaxation, SpinBin, StepSize, SystemParams,
    Trajectory,
};
use crate::ensemble;
use crate::error::{Error, Result};
use crate::pulses::deconvolve::{drive_for, BackAction, DriveFields, TargetShape};
use crate::pulses::{tables, Axis, PulseProgram};

use super::{
    detect_window, window_width, EchoMetrics, EchoTrace, HahnOutcome, RunContext, SequenceSpec,
    TAU_MARGIN,
};

/// Guard band around the pulse supports when scanning the between-pulse gap
/// for residual drive (s).
const GAP_MARGIN: f64 = 5e-8;

/// Guard band around the pulse supports for free-evolution metrics (s).
const FREE_MARGIN: f64 = 1e-7;

/// The high-cooperativity bench: 135k spins spread uniformly over
/// +-2 pi 1.9 MHz, kappa = 9.8e5, g = 2 pi 4240, hyperpolarized at 100
/// repetitions per second. Relaxation stays off over the ~100 us run.
#[derive(Clone, Copy, Debug)]
pub struct HighCoopSetup {
    pub n_total: f64,
    pub kappa: f64,
    pub g0: f64,
    pub gamma_rep: f64,
    pub halfwidth: f64,
    pub noise_dx: f64,
    pub n_bins: usize,
    /// Duration of both designed pulses (s).
    pub t_pulse: f64,
    /// Echo time (s). The refocusing pulse sits halfway between the
    /// excitation center and the echo.
    pub t_echo: f64,
    /// Full-model step (s); the control grid runs at half this, so RK4 stage
    /// times land exactly on grid points.
    pub h: f64,
    /// Recorded span past the echo (s).
    pub tail: f64,
}

impl Default for HighCoopSetup {
    fn default() -> Self {
        HighCoopSetup {
            n_total: 135_000.0,
            kappa: 9.8e5,
            g0: TAU * 4240.0,
            gamma_rep: 100.0,
            halfwidth: TAU * 1.9e6,
            noise_dx: 0.5,
            n_bins: 801,
            t_pulse: 1e-6,
            t_echo: 1e-4,
            h: 1e-9,
            tail: 8e-6,
        }
    }
}

impl HighCoopSetup {
    /// Center of the refocusing pulse: halfway between the excitation center
    /// and the echo, so the dephasing accumulated on each side matches.
    pub fn pi_center(&self) -> f64 {
        0.5 * (self.t_echo + 0.5 * self.t_pulse)
    }

    pub fn pi_start(&self) -> f64 {
        self.pi_center() - 0.5 * self.t_pulse
    }

    pub fn pi_end(&self) -> f64 {
        self.pi_center() + 0.5 * self.t_pulse
    }

    pub fn t_end(&self) -> f64 {
        self.t_echo + self.tail
    }

    pub fn control_dt(&self) -> f64 {
        0.5 * self.h
    }

    fn validate(&self) -> Result<()> {
        if !(self.t_pulse.is_finite() && self.t_pulse > 0.0) {
            return Err(Error::invalid(format!(
                "t_pulse must be positive, got {:e}",
                self.t_pulse
            )));
        }
        if !(self.t_echo.is_finite() && self.pi_start() > self.t_pulse) {
            return Err(Error::invalid(format!(
                "t_echo = {:e} leaves no free gap between the pulses",
                self.t_echo
            )));
        }
        if !(self.h.is_finite() && self.h > 0.0) {
            return Err(Error::invalid(format!("step must be positive, got {:e}", self.h)));
        }
        if !(self.tail.is_finite() && self.tail >= 0.0) {
            return Err(Error::invalid(format!("tail must be nonnegative, got {:e}", self.tail)));
        }
        Ok(())
    }

    pub fn ensemble_spec(&self) -> ensemble::EnsembleSpec {
        ensemble::EnsembleSpec {
            n_total: self.n_total,
            dist: ensemble::OffsetDist::Uniform { halfwidth: self.halfwidth },
            n_bins: self.n_bins,
            g0: self.g0,
            g_spread: 0.0,
            g_points: 1,
            gamma_rep: self.gamma_rep,
            t1: f64::INFINITY,
            t2: f64::INFINITY,
        }
    }

    pub fn build(&self) -> Result<(Vec<SpinBin>, SystemParams, RunContext)> {
        self.validate()?;
        let params = SystemParams::new(self.kappa)?.with_noise(self.noise_dx)?;
        let spec = self.ensemble_spec();
        let bins = ensemble::build_bins(&spec, &params)?;
        let fwhm = ensemble::effective_fwhm(&spec, &params)?;
        Ok((bins, params, RunContext { nominal_g: self.g0, effective_fwhm: fwhm }))
    }
}

/// The intracavity target: the offset-robust pi/2 at the origin and the
/// offset-robust pi in the refocusing slot, both about x.
pub fn echo_target(setup: &HighCoopSetup) -> Result<TargetShape> {
    let pi2 = tables::find("pi2_offset_robust")?.program(setup.t_pulse, Axis::X)?;
    let pi = tables::find("pi_offset_robust")?.program(setup.t_pulse, Axis::X)?;
    let mut target = TargetShape::new(setup.g0)?;
    target.push(pi2, 0.0)?;
    target.push(pi, setup.pi_start())?;
    Ok(target)
}

/// Synthesize the back-action-compensated drive realizing the echo target
/// over [0, pi_end]; past that the drive is zero and the field rings down.
pub fn design_robust_drive(
    setup: &HighCoopSetup,
    bins: &[SpinBin],
    params: &SystemParams,
) -> Result<DriveFields> {
    let target = echo_target(setup)?;
    drive_for(&target, bins, params, BackAction::On, 0.0, setup.pi_end(), setup.control_dt())
}

/// Raw square input on the same grid: constant omega of the amplitude whose
/// steady-state intracavity field gives the nominal rotation area, pi/2 in
/// the excitation slot and pi in the refocusing slot, no compensation.
pub fn square_comparison_drive(setup: &HighCoopSetup) -> DriveFields {
    let dt = setup.control_dt();
    let n = (setup.pi_end() / dt).round() as usize + 1;
    let amp = |theta: f64| theta * setup.kappa / (2.0 * setup.g0 * setup.t_pulse);
    let (amp_h, amp_p) = (amp(FRAC_PI_2), amp(PI));
    let t_pi0 = setup.pi_start();
    let wx = (0..n)
        .map(|i| {
            let t = dt * i as f64;
            if t <= setup.t_pulse {
                amp_h
            } else if t >= t_pi0 {
                amp_p
            } else {
                0.0
            }
        })
        .collect();
    DriveFields { t0: 0.0, dt, wx, wy: vec![0.0; n] }
}

/// Integrate the full model under `drive` from the polarized start, every
/// step recorded.
pub fn verify_drive(
    setup: &HighCoopSetup,
    bins: &[SpinBin],
    params: &SystemParams,
    drive: &DriveFields,
) -> Result<Trajectory> {
    let opts = IntegrateOpts {
        step: StepSize::Fixed(setup.h),
        relax: Relaxation::Off,
        record_every: 1,
        record_bins: false,
    };
    integrate(CavityQuadratures::default(), bins, drive, 0.0, setup.t_end(), params, &opts)
}

/// Comparison of the compensated drive against the raw square input, all
/// measured on full-model runs.
#[derive(Clone, Debug)]
pub struct HighCoopMetrics {
    /// Echo SNR of each run over its trimmed detection window.
    pub snr_robust: f64,
    pub snr_square: f64,
    /// Largest |X| inside each detection window.
    pub peak_robust: f64,
    pub peak_square: f64,
    /// Detection window widths.
    pub window_robust: f64,
    pub window_square: f64,
    /// Largest |drive| overall and between the pulse supports; a nonzero gap
    /// value is the back-action compensation still at work.
    pub drive_peak: f64,
    pub gap_drive_peak: f64,
    /// Collective |s_z| between the pulses over its initial value; small when
    /// the excitation put the ensemble into the transverse plane and the
    /// compensation kept it there.
    pub sz_gap_ratio: f64,
    /// Same from the end of the refocusing pulse to just before the echo.
    pub sz_post_ratio: f64,
    /// Where collective s_z changes fastest after refocusing; superradiant
    /// decay concentrates at the echo.
    pub fastest_sz_change_t: f64,
    /// Per-bin |s| conservation over each run (relaxation is off).
    pub norm_drift_robust: f64,
    pub norm_drift_square: f64,
    /// Spins moved by the excitation and the detection quota they imply.
    pub n_spins: f64,
    pub n_min_robust: f64,
}

#[derive(Clone, Debug)]
pub struct HighCoopOutcome {
    pub drive: DriveFields,
    pub square_drive: DriveFields,
    pub robust: Trajectory,
    pub square: Trajectory,
    pub metrics: HighCoopMetrics,
}

/// Design, verify, compare. Heavy: two full-model runs at step `h` over the
/// whole echo plus the drive synthesis.
pub fn run_highcoop(setup: &HighCoopSetup) -> Result<HighCoopOutcome> {
    let (bins, params, ctx) = setup.build()?;
    let drive = design_robust_drive(setup, &bins, &params)?;
    let square_drive = square_comparison_drive(setup);
    let robust = verify_drive(setup, &bins, &params, &drive)?;
    let square = verify_drive(setup, &bins, &params, &square_drive)?;
    let metrics = measure(setup, &params, &ctx, &drive, &robust, &square)?;
    Ok(HighCoopOutcome { drive, square_drive, robust, square, metrics })
}

/// One echo through the coupled cavity-spin integrator. A smooth pulse pair
/// becomes a deconvolved drive honoring `spec.back_action`; a square pair
/// goes in raw at the steady-state amplitude of its nominal rotation rate.
/// The trace is the integrated cavity X, Y over the whole run, pulses
/// included.
pub fn run_full_echo(
    spec: &SequenceSpec,
    bins: &[SpinBin],
    params: &SystemParams,
    ctx: &RunContext,
) -> Result<HahnOutcome> {
    spec.validate()?;
    ctx.validate()?;
    let exc = &spec.excitation;
    let refoc = &spec.refocusing;
    if exc.is_ideal() || refoc.is_ideal() {
        return Err(Error::invalid("ideal pulses have no waveform to drive through the cavity"));
    }
    let kappa = params.kappa;
    let width = window_width(exc, ctx.effective_fwhm);
    let c1 = 0.5 * exc.duration();
    let ref_half = 0.5 * refoc.duration();
    let after_exc = exc.footprint(kappa) - c1 + ref_half;
    let clear_window = refoc.footprint(kappa) - ref_half + 0.5 * width;
    let min_tau = after_exc.max(clear_window) + TAU_MARGIN;
    let tau = match spec.tau {
        None => min_tau,
        Some(t) if t >= min_tau => t,
        Some(t) => {
            return Err(Error::invalid(format!(
                "tau = {t:e} leaves pulses or windows overlapping; minimum here is {min_tau:e}"
            )))
        }
    };
    let t_echo = c1 + 2.0 * tau;
    let pi_start = c1 + tau - ref_half;
    let pi_end = pi_start + refoc.duration();
    let t_end = t_echo + 0.75 * width;

    // Resolve the cavity pole and keep ~1000 steps across the shorter pulse.
    let h = (0.02 / kappa).min(exc.duration().min(refoc.duration()) / 1000.0);
    let drive = if exc.is_smooth() && refoc.is_smooth() {
        let mut target = TargetShape::new(ctx.nominal_g)?;
        target.push(exc.clone(), 0.0)?;
        target.push(refoc.clone(), pi_start)?;
        drive_for(&target, bins, params, spec.back_action, 0.0, pi_end, 0.5 * h)?
    } else if !exc.is_smooth() && !refoc.is_smooth() {
        raw_slot_drive(exc, refoc, pi_start, pi_end, kappa, ctx.nominal_g, 0.5 * h)?
    } else {
        return Err(Error::invalid("coupled-model echoes need two smooth or two square pulses"));
    };

    let opts = IntegrateOpts {
        step: StepSize::Fixed(h),
        relax: spec.relaxation,
        record_every: 1,
        record_bins: false,
    };
    let run = integrate(CavityQuadratures::default(), bins, &drive, 0.0, t_end, params, &opts)?;

    let i_exc = run.t.iter().position(|&t| t >= exc.duration()).unwrap_or(0);
    let n_spins = 2.0 * (run.sbar[i_exc][2] - run.sbar[0][2]);
    let win = detect_window(&run.t, &run.x, t_echo, width, kappa, params.noise_dx)?;
    let metrics = EchoMetrics::from_snrs(
        vec![win.snr],
        n_spins,
        ensemble::n_eff(bins),
        vec![win.window],
        win.peak_x,
        win.detected,
    );
    let trace = EchoTrace { t: run.t, x: run.x, y: run.y };
    Ok(HahnOutcome { trace, metrics, tau, t_echo, window_width: width })
}

/// Constant slots at the steady-state drive of the nominal rotation rate,
/// omega = kappa theta / (2 g duration), no derivative or back-action terms.
fn raw_slot_drive(
    exc: &PulseProgram,
    refoc: &PulseProgram,
    pi_start: f64,
    pi_end: f64,
    kappa: f64,
    g0: f64,
    dt: f64,
) -> Result<DriveFields> {
    let slot = |p: &PulseProgram| -> Result<(f64, f64, f64)> {
        match *p {
            PulseProgram::Square { theta, duration, axis } => {
                let v = 0.5 * kappa * theta / (g0 * duration);
                let (x, y) = match axis {
                    Axis::X => (v, 0.0),
                    Axis::Y => (0.0, v),
                };
                Ok((x, y, duration))
            }
            _ => Err(Error::invalid("raw drive slots need square pulses")),
        }
    };
    let (ex, ey, ed) = slot(exc)?;
    let (rx, ry, _) = slot(refoc)?;
    let n = (pi_end / dt).round() as usize + 1;
    let mut wx = Vec::with_capacity(n);
    let mut wy = Vec::with_capacity(n);
    for i in 0..n {
        let t = dt * i as f64;
        let (x, y) = if t <= ed {
            (ex, ey)
        } else if t >= pi_start {
            (rx, ry)
        } else {
            (0.0, 0.0)
        };
        wx.push(x);
        wy.push(y);
    }
    Ok(DriveFields { t0: 0.0, dt, wx, wy })
}

fn measure(
    setup: &HighCoopSetup,
    params: &SystemParams,
    ctx: &RunContext,
    drive: &DriveFields,
    robust: &Trajectory,
    square: &Trajectory,
) -> Result<HighCoopMetrics> {
    let kappa = params.kappa;
    let rob_pi2 = tables::find("pi2_offset_robust")?.program(setup.t_pulse, Axis::X)?;
    let sq_pi2 = PulseProgram::square(FRAC_PI_2, setup.t_pulse, Axis::X)?;
    let w_rob = window_width(&rob_pi2, ctx.effective_fwhm);
    let w_sq = window_width(&sq_pi2, ctx.effective_fwhm);
    let win_r = detect_window(&robust.t, &robust.x, setup.t_echo, w_rob, kappa, params.noise_dx)?;
    let win_s = detect_window(&square.t, &square.x, setup.t_echo, w_sq, kappa, params.noise_dx)?;

    let mut gap_drive_peak = 0.0f64;
    for i in 0..drive.len() {
        let t = drive.time(i);
        if t > setup.t_pulse + GAP_MARGIN && t < setup.pi_start() - GAP_MARGIN {
            gap_drive_peak = gap_drive_peak.max(drive.wx[i].hypot(drive.wy[i]));
        }
    }

    let sz0 = robust.sbar[0][2];
    let mut gap_max = 0.0f64;
    let mut post_max = 0.0f64;
    for (i, &t) in robust.t.iter().enumerate() {
        let v = robust.sbar[i][2].abs();
        if t > setup.t_pulse + FREE_MARGIN && t < setup.pi_start() - FREE_MARGIN {
            gap_max = gap_max.max(v);
        }
        if t > setup.pi_end() + FREE_MARGIN && t < 0.96 * setup.t_echo {
            post_max = post_max.max(v);
        }
    }

    // Fastest change of collective s_z after the refocusing pulse, centered
    // differences on the recorded grid.
    let mut best = -1.0f64;
    let mut best_t = setup.pi_end();
    for i in 1..robust.t.len().saturating_sub(1) {
        if robust.t[i] <= setup.pi_end() + 2.0 * FREE_MARGIN {
            continue;
        }
        let rate = ((robust.sbar[i + 1][2] - robust.sbar[i - 1][2])
            / (robust.t[i + 1] - robust.t[i - 1]))
            .abs();
        if rate > best {
            best = rate;
            best_t = robust.t[i];
        }
    }

    let i_exc = robust.t.iter().position(|&t| t >= setup.t_pulse).unwrap_or(0);
    let n_spins = 2.0 * (robust.sbar[i_exc][2] - sz0);

    Ok(HighCoopMetrics {
        snr_robust: win_r.snr,
        snr_square: win_s.snr,
        peak_robust: win_r.peak_x.abs(),
        peak_square: win_s.peak_x.abs(),
        window_robust: w_rob,
        window_square: w_sq,
        drive_peak: drive.peak(),
        gap_drive_peak,
        sz_gap_ratio: gap_max / sz0.abs(),
        sz_post_ratio: post_max / sz0.abs(),
        fastest_sz_change_t: best_t,
        norm_drift_robust: robust.max_norm_drift,
        norm_drift_square: square.max_norm_drift,
        n_spins,
        n_min_robust: if win_r.snr > 0.0 { n_spins / win_r.snr } else { f64::INFINITY },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::Drive;
    use crate::pulses::deconvolve::QuadratureTarget;
    use approx::assert_relative_eq;

    fn tiny() -> HighCoopSetup {
        HighCoopSetup { n_bins: 51, ..HighCoopSetup::default() }
    }

    #[test]
    fn schedule_mirrors_the_excitation_center() {
        let s = HighCoopSetup::default();
        assert_relative_eq!(s.pi_center(), 50.25e-6);
        assert_relative_eq!(s.pi_start(), 49.75e-6);
        assert_relative_eq!(s.pi_end(), 50.75e-6);
        // Mirror rule: the echo lands twice the center gap past the
        // excitation center.
        let c_exc = 0.5 * s.t_pulse;
        assert_relative_eq!(c_exc + 2.0 * (s.pi_center() - c_exc), s.t_echo);
        assert_relative_eq!(s.t_end(), 108e-6);
        assert_relative_eq!(s.control_dt(), 0.5e-9);
    }

    #[test]
    fn bad_timing_is_rejected() {
        let s = HighCoopSetup { t_echo: 2e-6, ..HighCoopSetup::default() };
        assert!(s.build().is_err());
    }

    #[test]
    fn square_drive_slots_and_areas() {
        let s = HighCoopSetup::default();
        let d = square_comparison_drive(&s);
        assert_eq!(d.at(25e-6), (0.0, 0.0));
        let (h, _) = d.at(0.5e-6);
        let (p, _) = d.at(50.25e-6);
        assert_relative_eq!(p / h, 2.0, epsilon = 1e-12);
        // Steady state X = 2 wx / kappa; rotation area g0 X t_pulse = theta.
        assert_relative_eq!(s.g0 * (2.0 * h / s.kappa) * s.t_pulse, FRAC_PI_2, epsilon = 1e-12);
        assert!(d.wy.iter().all(|&v| v == 0.0));
        assert_relative_eq!(d.time(d.len() - 1), s.pi_end(), epsilon = 1e-15);
    }

    #[test]
    fn compensation_keeps_driving_between_pulses() {
        let s = tiny();
        let (bins, params, _) = s.build().unwrap();
        let d = design_robust_drive(&s, &bins, &params).unwrap();
        let mut gap = 0.0f64;
        for i in 0..d.len() {
            let t = d.time(i);
            if t > s.t_pulse + GAP_MARGIN && t < s.pi_start() - GAP_MARGIN {
                gap = gap.max(d.wx[i].hypot(d.wy[i]));
            }
        }
        assert!(gap > 0.0, "no compensation drive in the gap");
        assert!(gap < 0.2 * d.peak(), "gap drive {gap:e} vs peak {:e}", d.peak());
    }

    fn toy_lowcoop() -> (Vec<SpinBin>, SystemParams, RunContext) {
        let spec = ensemble::EnsembleSpec {
            n_total: 13_500.0,
            dist: ensemble::OffsetDist::Uniform { halfwidth: TAU * 1.9e6 },
            n_bins: 31,
            g0: TAU * 424.0,
            g_spread: 0.0,
            g_points: 1,
            gamma_rep: 10.0,
            t1: f64::INFINITY,
            t2: f64::INFINITY,
        };
        let params = SystemParams::new(9.8e5).unwrap().with_noise(0.5).unwrap();
        let bins = ensemble::build_bins(&spec, &params).unwrap();
        let fwhm = ensemble::effective_fwhm(&spec, &params).unwrap();
        (bins, params, RunContext { nominal_g: spec.g0, effective_fwhm: fwhm })
    }

    #[test]
    fn full_echo_forms_under_a_compensated_bump_pair() {
        let (bins, params, ctx) = toy_lowcoop();
        let exc = PulseProgram::bump(FRAC_PI_2, 1e-6, Axis::X).unwrap();
        let refoc = PulseProgram::bump(PI, 1e-6, Axis::X).unwrap();
        let mut spec = SequenceSpec::hahn(exc, refoc);
        spec.relaxation = Relaxation::Off;
        spec.back_action = BackAction::On;
        let out = run_full_echo(&spec, &bins, &params, &ctx).unwrap();
        assert_eq!(out.t_echo, 0.5e-6 + 2.0 * out.tau);
        assert_eq!(out.metrics.per_echo_snr.len(), 1);
        assert!(out.metrics.detected, "no echo above threshold");
        assert_relative_eq!(out.metrics.snr_total, out.metrics.per_echo_snr[0]);
        assert!(out.metrics.peak_x.abs() > 0.0);
        let t_last = *out.trace.t.last().unwrap();
        assert!(t_last >= out.t_echo + 0.5 * out.window_width);
    }

    #[test]
    fn full_echo_dispatch_rejects_trains_and_mixed_pairs() {
        let (bins, params, ctx) = toy_lowcoop();
        let bump = PulseProgram::bump(PI, 1e-6, Axis::X).unwrap();
        let square = PulseProgram::square(FRAC_PI_2, 1e-6, Axis::X).unwrap();
        let mut train = SequenceSpec::cpmg(square.clone(), bump.clone(), 4);
        train.back_action = BackAction::On;
        assert!(crate::sequences::run_sequence(&train, &bins, &params, &ctx).is_err());
        let mut mixed = SequenceSpec::hahn(square, bump);
        mixed.back_action = BackAction::On;
        mixed.relaxation = Relaxation::Off;
        assert!(run_full_echo(&mixed, &bins, &params, &ctx).is_err());
    }

    #[test]
    fn full_echo_square_pair_matches_the_linear_engine_peak() {
        // Low cooperativity: back-action is negligible, so the coupled
        // integrator and the linear-response engine should find nearly the
        // same echo amplitude.
        let (bins, params, ctx) = toy_lowcoop();
        let exc = PulseProgram::square(FRAC_PI_2, 1e-6, Axis::X).unwrap();
        let refoc = PulseProgram::square(PI, 1e-6, Axis::X).unwrap();
        let mut spec = SequenceSpec::hahn(exc, refoc);
        spec.relaxation = Relaxation::Off;
        let linear = crate::sequences::hahn(&spec, &bins, &params, &ctx).unwrap();
        spec.back_action = BackAction::On;
        let full = run_full_echo(&spec, &bins, &params, &ctx).unwrap();
        assert_relative_eq!(
            full.metrics.peak_x.abs(),
            linear.metrics.peak_x.abs(),
            max_relative = 0.05
        );
    }

    #[test]
    fn full_model_tracks_the_designed_field_through_excitation() {
        // Integrate just past the pi/2 and check the cavity X, Y ride the
        // designed quadratures to integrator precision.
        let s = tiny();
        let (bins, params, _) = s.build().unwrap();
        let target = echo_target(&s).unwrap();
        let d = design_robust_drive(&s, &bins, &params).unwrap();
        let opts = IntegrateOpts {
            step: StepSize::Fixed(s.h),
            relax: Relaxation::Off,
            record_every: 1,
            record_bins: false,
        };
        let run = integrate(
            CavityQuadratures::default(),
            &bins,
            &d,
            0.0,
            s.t_pulse,
            &params,
            &opts,
        )
        .unwrap();
        let mut worst = 0.0f64;
        let mut scale = 0.0f64;
        for (i, &t) in run.t.iter().enumerate() {
            let (xt, yt) = target.xy(t);
            worst = worst.max((run.x[i] - xt).abs()).max((run.y[i] - yt).abs());
            scale = scale.max(xt.abs()).max(yt.abs());
        }
        assert!(scale > 0.0);
        assert!(worst < 1e-6 * scale, "max deviation {worst:e} of scale {scale:e}");
        // The offset-robust pi/2 leaves almost no collective s_z.
        let sz0 = run.sbar[0][2];
        let szf = run.sbar.last().unwrap()[2];
        assert!(szf.abs() < 0.1 * sz0.abs(), "sz {szf:e} from {sz0:e}");
    }
}
