//! Discretization of the inhomogeneous ensemble into weighted bins.
//!
//! Spins are distributed over detuning with either a flat or a Lorentzian
//! profile. Repeated-shot hyperpolarization through the cavity leaves each
//! detuning class with steady-state polarization p(delta) set by the ratio of
//! its cavity-induced decay rate to the experiment repetition rate. Bins are
//! laid out with equal effective (polarization-weighted) mass so that every
//! bin contributes equally to the collective signal; bin centers are the
//! polarization-weighted centroids.

use crate::dynamics::{SpinBin, SystemParams};
use crate::error::{Error, Result};
use crate::num::{csum, linspace, Accum};

/// Cavity-induced decay rate of a spin at offset `delta` with coupling `g`:
/// kappa g^2 / (delta^2 + kappa^2/4). At resonance this is 4 g^2 / kappa.
pub fn purcell_rate(delta: f64, g: f64, kappa: f64) -> f64 {
    kappa * g * g / (delta * delta + 0.25 * kappa * kappa)
}

/// Steady-state polarization reached when cavity-induced relaxation at rate
/// `purcell_rate` competes with re-shuffling at the repetition rate
/// `gamma_rep`. A zero repetition rate means the ensemble is given unlimited
/// time and polarizes fully.
pub fn polarization(delta: f64, g: f64, kappa: f64, gamma_rep: f64) -> f64 {
    if gamma_rep == 0.0 {
        return 1.0;
    }
    1.0 - (-purcell_rate(delta, g, kappa) / gamma_rep).exp()
}

/// Offset distribution of the bare ensemble. The Lorentzian is truncated at
/// +-10 FWHM, which carries 96.8% of the ideal mass; the truncated density is
/// renormalized over its support.
#[derive(Clone, Copy, Debug)]
pub enum OffsetDist {
    Uniform { halfwidth: f64 },
    Lorentzian { fwhm: f64 },
}

impl OffsetDist {
    pub fn support(&self) -> (f64, f64) {
        match *self {
            OffsetDist::Uniform { halfwidth } => (-halfwidth, halfwidth),
            OffsetDist::Lorentzian { fwhm } => (-10.0 * fwhm, 10.0 * fwhm),
        }
    }

    /// Unnormalized density shape.
    fn shape(&self, delta: f64) -> f64 {
        match *self {
            OffsetDist::Uniform { .. } => 1.0,
            OffsetDist::Lorentzian { fwhm } => {
                let u = 2.0 * delta / fwhm;
                1.0 / (1.0 + u * u)
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            OffsetDist::Uniform { halfwidth } => halfwidth.is_finite() && halfwidth > 0.0,
            OffsetDist::Lorentzian { fwhm } => fwhm.is_finite() && fwhm > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("degenerate offset distribution {self:?}")))
        }
    }
}

/// Everything needed to discretize one ensemble.
#[derive(Clone, Copy, Debug)]
pub struct EnsembleSpec {
    pub n_total: f64,
    pub dist: OffsetDist,
    pub n_bins: usize,
    pub g0: f64,
    /// Fractional half-range of the coupling spread; 0 disables the coupling
    /// axis entirely.
    pub g_spread: f64,
    /// Grid points along the coupling axis when g_spread > 0.
    pub g_points: usize,
    /// Experiment repetition rate (1/s) limiting hyperpolarization.
    pub gamma_rep: f64,
    pub t1: f64,
    pub t2: f64,
}

impl EnsembleSpec {
    fn validate(&self) -> Result<()> {
        self.dist.validate()?;
        if !(self.n_total.is_finite() && self.n_total > 0.0) {
            return Err(Error::invalid("n_total must be positive".to_string()));
        }
        if self.n_bins == 0 {
            return Err(Error::invalid("n_bins must be at least 1".to_string()));
        }
        if !(self.g0.is_finite() && self.g0 > 0.0) {
            return Err(Error::invalid("g0 must be positive".to_string()));
        }
        if !(0.0..1.0).contains(&self.g_spread) {
            return Err(Error::invalid(format!(
                "g_spread must lie in [0, 1), got {}",
                self.g_spread
            )));
        }
        if self.g_spread > 0.0 && self.g_points < 2 {
            return Err(Error::invalid("g_points must be >= 2 when g_spread > 0".to_string()));
        }
        if self.gamma_rep < 0.0 || !self.gamma_rep.is_finite() {
            return Err(Error::invalid("gamma_rep must be finite and >= 0".to_string()));
        }
        if !(self.t1 > 0.0 && self.t2 > 0.0) {
            return Err(Error::invalid("relaxation times must be positive".to_string()));
        }
        Ok(())
    }
}

const CDF_GRID: usize = 800_001;
const BIN_QUAD: usize = 64;

/// Discretize the ensemble into `n_bins` equal-effective-mass offset bins,
/// optionally crossed with a uniform coupling-spread grid. Every bin starts
/// at s = (0, 0, -p/2) with p its mean polarization, and carries weight
/// n_total * (bare mass) * p, so that 2 |sum w s_z| counts the effective
/// (polarized) spin number.
///
/// Polarization is evaluated at the nominal coupling g0 even for bins whose
/// coupling is offset by the spread; the spread models pulse-field
/// inhomogeneity, while the steady-state repolarization bookkeeping uses the
/// ensemble-average coupling.
pub fn build_bins(spec: &EnsembleSpec, params: &SystemParams) -> Result<Vec<SpinBin>> {
    spec.validate()?;
    let (lo, hi) = spec.dist.support();
    let grid = linspace(lo, hi, CDF_GRID);
    let rho: Vec<f64> = grid.iter().map(|&d| spec.dist.shape(d)).collect();
    let pol: Vec<f64> = grid
        .iter()
        .map(|&d| polarization(d, spec.g0, params.kappa, spec.gamma_rep))
        .collect();

    // Cumulative integrals of rho and rho*p on the dense grid (trapezoid).
    let h = grid[1] - grid[0];
    let mut cdf_rho = Vec::with_capacity(CDF_GRID);
    let mut cdf_eff = Vec::with_capacity(CDF_GRID);
    let mut ar = Accum::new();
    let mut ae = Accum::new();
    cdf_rho.push(0.0);
    cdf_eff.push(0.0);
    for i in 1..CDF_GRID {
        ar.add(0.5 * h * (rho[i] + rho[i - 1]));
        ae.add(0.5 * h * (rho[i] * pol[i] + rho[i - 1] * pol[i - 1]));
        cdf_rho.push(ar.value());
        cdf_eff.push(ae.value());
    }
    let rho_total = *cdf_rho.last().unwrap();
    let eff_total = *cdf_eff.last().unwrap();
    if !(eff_total > 0.0) {
        return Err(Error::invalid("ensemble has zero polarized mass".to_string()));
    }

    // Equal effective mass edges: invert the rho*p CDF at uniform levels.
    let mut edges = Vec::with_capacity(spec.n_bins + 1);
    edges.push(lo);
    let mut k = 0usize;
    for i in 1..spec.n_bins {
        let target = eff_total * i as f64 / spec.n_bins as f64;
        while k + 1 < CDF_GRID && cdf_eff[k + 1] < target {
            k += 1;
        }
        let frac = (target - cdf_eff[k]) / (cdf_eff[k + 1] - cdf_eff[k]);
        edges.push(grid[k] + frac * h);
    }
    edges.push(hi);

    let interp_cdf = |x: f64, cdf: &[f64]| -> f64 {
        let pos = ((x - lo) / h).clamp(0.0, (CDF_GRID - 1) as f64);
        let i = (pos as usize).min(CDF_GRID - 2);
        let frac = pos - i as f64;
        cdf[i] + frac * (cdf[i + 1] - cdf[i])
    };

    let mut offset_bins = Vec::with_capacity(spec.n_bins);
    for i in 0..spec.n_bins {
        let (a, b) = (edges[i], edges[i + 1]);
        // Bare mass from the dense CDF so bin masses telescope exactly.
        let mass = (interp_cdf(b, &cdf_rho) - interp_cdf(a, &cdf_rho)) / rho_total;
        // Mean polarization and centroid from a local quadrature.
        let xs = linspace(a, b, BIN_QUAD);
        let mut qr = 0.0;
        let mut qe = 0.0;
        let mut qc = 0.0;
        let hq = xs[1] - xs[0];
        let mut prev: Option<(f64, f64, f64)> = None;
        for &x in &xs {
            let r = spec.dist.shape(x);
            let e = r * polarization(x, spec.g0, params.kappa, spec.gamma_rep);
            let c = e * x;
            if let Some((pr, pe, pc)) = prev {
                qr += 0.5 * hq * (r + pr);
                qe += 0.5 * hq * (e + pe);
                qc += 0.5 * hq * (c + pc);
            }
            prev = Some((r, e, c));
        }
        let pbar = qe / qr;
        let center = qc / qe;
        offset_bins.push((center, mass, pbar));
    }

    let mut bins = Vec::new();
    if spec.g_spread > 0.0 {
        let alphas = linspace(-spec.g_spread, spec.g_spread, spec.g_points);
        for &alpha in &alphas {
            for &(center, mass, pbar) in &offset_bins {
                bins.push(SpinBin {
                    delta: center,
                    g: spec.g0 * (1.0 + alpha),
                    weight: spec.n_total * mass * pbar / spec.g_points as f64,
                    s: [0.0, 0.0, -0.5 * pbar],
                    t1: spec.t1,
                    t2: spec.t2,
                });
            }
        }
    } else {
        for &(center, mass, pbar) in &offset_bins {
            bins.push(SpinBin {
                delta: center,
                g: spec.g0,
                weight: spec.n_total * mass * pbar,
                s: [0.0, 0.0, -0.5 * pbar],
                t1: spec.t1,
                t2: spec.t2,
            });
        }
    }
    Ok(bins)
}

/// Effective number of participating spins: 2 |sum w s_z|. On freshly built
/// bins this counts polarized spins; after excitation it tracks what is left.
pub fn n_eff(bins: &[SpinBin]) -> f64 {
    2.0 * csum(bins.iter().map(|b| b.weight * b.s[2])).abs()
}

/// Number of spins actually moved by a pulse: twice the change of the
/// collective s_z between two snapshots of the same binning.
pub fn n_spins(before: &[SpinBin], after: &[SpinBin]) -> Result<f64> {
    if before.len() != after.len() {
        return Err(Error::invalid(format!(
            "bin count mismatch: {} vs {}",
            before.len(),
            after.len()
        )));
    }
    for (i, (b, a)) in before.iter().zip(after).enumerate() {
        let same = (b.delta - a.delta).abs() <= 1e-9 * b.delta.abs().max(1.0)
            && (b.g - a.g).abs() <= 1e-9 * b.g.abs()
            && (b.weight - a.weight).abs() <= 1e-9 * b.weight.abs().max(1.0);
        if !same {
            return Err(Error::invalid(format!(
                "bin {i} differs between snapshots; spin counting needs a common grid"
            )));
        }
    }
    let before_z = csum(before.iter().map(|b| b.weight * b.s[2]));
    let after_z = csum(after.iter().map(|b| b.weight * b.s[2]));
    Ok(2.0 * (after_z - before_z))
}

/// Collective cooperativity 2 N g^2 / (kappa * width) for an effective spin
/// number N and an ensemble width in angular frequency.
pub fn cooperativity(n_eff: f64, g: f64, kappa: f64, width: f64) -> f64 {
    2.0 * n_eff * g * g / (kappa * width)
}

/// Full width at half maximum of the radiating profile rho(delta) p(delta)^2,
/// the transverse-amplitude density right after an ideal excitation. Falls
/// back to the full support width when the profile never drops to half.
pub fn effective_fwhm(spec: &EnsembleSpec, params: &SystemParams) -> Result<f64> {
    spec.validate()?;
    let (lo, hi) = spec.dist.support();
    let n = 200_001;
    let grid = linspace(lo, hi, n);
    let prof: Vec<f64> = grid
        .iter()
        .map(|&d| {
            let p = polarization(d, spec.g0, params.kappa, spec.gamma_rep);
            spec.dist.shape(d) * p * p
        })
        .collect();
    let (imax, &pmax) = prof
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .unwrap();
    let half = 0.5 * pmax;
    let cross = |mut i: usize, step: isize| -> Option<f64> {
        loop {
            let j = i as isize + step;
            if j < 0 || j as usize >= n {
                return None;
            }
            let j = j as usize;
            if prof[j] <= half {
                let frac = (prof[i] - half) / (prof[i] - prof[j]);
                return Some(grid[i] + frac * (grid[j] - grid[i]));
            }
            i = j;
        }
    };
    match (cross(imax, -1), cross(imax, 1)) {
        (Some(a), Some(b)) => Ok(b - a),
        _ => Ok(hi - lo),
    }
}
