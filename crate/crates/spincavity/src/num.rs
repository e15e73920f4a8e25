//! Small numerical utilities shared across the crate: compensated summation,
//! quadrature, bracketed 1-d maximization, grid helpers.

/// Neumaier-compensated accumulator. Summation order is still significant for
/// the last ~1 ulp, so callers that promise order-independent results must
/// feed bins in a fixed order; the compensation keeps the residual at the
/// 1e-16 level even for badly scaled terms.
#[derive(Clone, Copy, Debug, Default)]
pub struct Accum {
    sum: f64,
    comp: f64,
}

impl Accum {
    pub fn new() -> Self {
        Accum { sum: 0.0, comp: 0.0 }
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Compensated sum of an iterator.
pub fn csum(xs: impl IntoIterator<Item = f64>) -> f64 {
    let mut a = Accum::new();
    for x in xs {
        a.add(x);
    }
    a.value()
}

/// Trapezoid rule on a uniform grid with spacing `h`.
pub fn trapezoid_uniform(h: f64, ys: &[f64]) -> f64 {
    if ys.len() < 2 {
        return 0.0;
    }
    let mut a = Accum::new();
    a.add(0.5 * ys[0]);
    for &y in &ys[1..ys.len() - 1] {
        a.add(y);
    }
    a.add(0.5 * ys[ys.len() - 1]);
    h * a.value()
}

/// Trapezoid rule on an arbitrary monotone grid.
pub fn trapezoid(ts: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(ts.len(), ys.len());
    let mut a = Accum::new();
    for i in 1..ts.len() {
        a.add(0.5 * (ys[i] + ys[i - 1]) * (ts[i] - ts[i - 1]));
    }
    a.value()
}

fn simpson_slice(f: &impl Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
    let m = 0.5 * (a + b);
    let fm = f(m);
    ((b - a) / 6.0 * (fa + 4.0 * fm + fb), m, fm)
}

fn simpson_rec(
    f: &impl Fn(f64) -> f64,
    a: f64,
    fa: f64,
    b: f64,
    fb: f64,
    whole: f64,
    m: f64,
    fm: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let (left, lm, flm) = simpson_slice(f, a, fa, m, fm);
    let (right, rm, frm) = simpson_slice(f, m, fm, b, fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        left + right + delta / 15.0
    } else {
        simpson_rec(f, a, fa, m, fm, left, lm, flm, 0.5 * tol, depth - 1)
            + simpson_rec(f, m, fm, b, fb, right, rm, frm, 0.5 * tol, depth - 1)
    }
}

/// Adaptive Simpson quadrature with Richardson correction.
pub fn adaptive_simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    let fa = f(a);
    let fb = f(b);
    let (whole, m, fm) = simpson_slice(&f, a, fa, b, fb);
    simpson_rec(&f, a, fa, b, fb, whole, m, fm, tol, 48)
}

/// Golden-section search for the maximum of a unimodal function on [a, b].
/// Returns (argmax, max). `iters` halving steps shrink the bracket by
/// 0.618^iters.
pub fn golden_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, iters: u32) -> (f64, f64) {
    let r = (5.0_f64.sqrt() - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..iters {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    let fx = f(x);
    if fc > fd && fc > fx {
        (c, fc)
    } else if fd >= fc && fd > fx {
        (d, fd)
    } else {
        (x, fx)
    }
}

/// `n` evenly spaced points from `a` to `b` inclusive.
pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    assert!(n >= 2);
    let h = (b - a) / (n - 1) as f64;
    (0..n).map(|i| a + h * i as f64).collect()
}
