//! Adaptive Gauss–Kronrod quadrature with compensated accumulation, plus
//! logarithmic substitutions for radial integrals with algebraic behavior
//! at the origin and at infinity.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// Neumaier-compensated running sum.
#[derive(Debug, Default, Clone, Copy)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl std::iter::FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = CompensatedSum::new();
        for x in iter {
            s.add(x);
        }
        s
    }
}

/// Compensated sum of an iterator of terms.
pub fn csum<I: IntoIterator<Item = f64>>(terms: I) -> f64 {
    terms.into_iter().collect::<CompensatedSum>().value()
}

#[derive(Debug, Clone, Copy)]
pub struct Tolerance {
    pub rel: f64,
    pub abs: f64,
    /// Maximum number of subintervals kept by the adaptive scheme.
    pub max_intervals: usize,
}

impl Tolerance {
    pub fn relative(rel: f64) -> Self {
        Self {
            rel,
            abs: 0.0,
            max_intervals: 20_000,
        }
    }
}

impl Default for Tolerance {
    fn default() -> Self {
        Self::relative(1e-12)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
}

#[derive(Debug, Clone, Copy)]
struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
    abs_value: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}

impl Eq for Panel {}

impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Panel {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    let mut abs_value = fc.abs() * WGK[7];
    for j in 0..7 {
        let dx = half * XGK[j];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        kronrod += WGK[j] * (f1 + f2);
        abs_value += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            gauss += WG[j / 2] * (f1 + f2);
        }
    }
    let value = kronrod * half;
    let abs_value = abs_value * half.abs();
    let mut error = ((kronrod - gauss) * half).abs();
    let floor = 50.0 * f64::EPSILON * abs_value;
    if error < floor {
        error = floor;
    }
    Panel {
        a,
        b,
        value,
        error,
        abs_value,
    }
}

/// Integrates `f` over the union of the consecutive intervals defined by
/// `points` (which must be sorted) with a single global error budget.
pub fn integrate_points<F: Fn(f64) -> f64>(f: F, points: &[f64], tol: Tolerance) -> Result<Estimate> {
    if points.len() < 2 {
        return Err(Error::Quadrature("need at least two break points".into()));
    }
    let mut heap = BinaryHeap::new();
    let mut evaluations = 0;
    for w in points.windows(2) {
        if w[1] > w[0] {
            heap.push(gk15(&f, w[0], w[1]));
            evaluations += 15;
        } else if w[1] < w[0] {
            return Err(Error::Quadrature("break points must be increasing".into()));
        }
    }
    let mut value_run: f64 = heap.iter().map(|p| p.value).sum();
    let mut err_run: f64 = heap.iter().map(|p| p.error).sum();
    let mut abs_run: f64 = heap.iter().map(|p| p.abs_value).sum();
    loop {
        if !value_run.is_finite() || !err_run.is_finite() {
            return Err(Error::Quadrature(format!(
                "non-finite integrand on [{}, {}]",
                points[0],
                points[points.len() - 1]
            )));
        }
        let target = |value: f64, abs_total: f64| {
            tol.abs
                .max(tol.rel * value.abs())
                .max(100.0 * f64::EPSILON * abs_total)
        };
        if err_run <= target(value_run, abs_run) {
            // Confirm with exact sums before accepting.
            let total = csum(heap.iter().map(|p| p.value));
            let err: f64 = heap.iter().map(|p| p.error).sum();
            let abs_total: f64 = heap.iter().map(|p| p.abs_value).sum();
            if err <= target(total, abs_total) {
                return Ok(Estimate {
                    value: total,
                    error: err,
                    evaluations,
                });
            }
            value_run = total;
            err_run = err;
            abs_run = abs_total;
        }
        if heap.len() >= tol.max_intervals {
            let total = csum(heap.iter().map(|p| p.value));
            return Err(Error::Quadrature(format!(
                "interval limit reached: value {total:.6e}, error {err_run:.3e}"
            )));
        }
        let worst = heap.pop().expect("non-empty heap");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b || worst.error == 0.0 {
            // The panel cannot be split further in floating point.
            err_run -= worst.error;
            heap.push(Panel {
                error: 0.0,
                ..worst
            });
            if heap.iter().all(|p| p.error == 0.0) {
                err_run = 0.0;
            }
            continue;
        }
        let left = gk15(&f, worst.a, mid);
        let right = gk15(&f, mid, worst.b);
        value_run += left.value + right.value - worst.value;
        err_run += left.error + right.error - worst.error;
        abs_run += left.abs_value + right.abs_value - worst.abs_value;
        heap.push(left);
        heap.push(right);
        evaluations += 30;
    }
}

/// Integrates `f` over `[a, b]`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: Tolerance) -> Result<Estimate> {
    if a == b {
        return Ok(Estimate {
            value: 0.0,
            error: 0.0,
            evaluations: 0,
        });
    }
    if a > b {
        let e = integrate_points(f, &[b, a], tol)?;
        return Ok(Estimate {
            value: -e.value,
            ..e
        });
    }
    integrate_points(f, &[a, b], tol)
}

/// ∫_a^b g(r) dr for 0 < a < b through τ = ln r, with extra break points
/// given in the r variable.
pub fn integrate_log<F: Fn(f64) -> f64>(
    g: F,
    a: f64,
    b: f64,
    breaks: &[f64],
    tol: Tolerance,
) -> Result<Estimate> {
    if !(a > 0.0 && b > a) {
        return Err(Error::domain(format!("log quadrature needs 0 < a < b, got [{a}, {b}]")));
    }
    let (ta, tb) = (a.ln(), b.ln());
    let mut pts: Vec<f64> = vec![ta];
    for &r in breaks {
        if r > a && r < b {
            pts.push(r.ln());
        }
    }
    pts.push(tb);
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let pts = refine_points(&pts, 2.0);
    integrate_points(
        |t| {
            let r = t.exp();
            g(r) * r
        },
        &pts,
        tol,
    )
}

/// ∫_0^b g(r) dr for integrands that vanish algebraically at the origin.
/// The lower cut is located by scanning down from `scale` until the
/// log-measure integrand is negligible.
pub fn integrate_from_zero<F: Fn(f64) -> f64>(
    g: F,
    b: f64,
    scale: f64,
    breaks: &[f64],
    tol: Tolerance,
) -> Result<Estimate> {
    let h = |t: f64| {
        let r = t.exp();
        g(r) * r
    };
    let t_start = scale.min(b).ln();
    let peak = scan_peak(&h, t_start, b.ln());
    let t_lo = scan_until_negligible(&h, t_start, -1.0, peak, -745.0)?;
    let mut pts = vec![t_lo, b.ln()];
    for &r in breaks.iter().chain(std::iter::once(&scale)) {
        if r > 0.0 && r < b && r.ln() > t_lo {
            pts.push(r.ln());
        }
    }
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let pts = refine_points(&pts, 2.0);
    integrate_points(h, &pts, tol)
}

/// ∫_0^∞ g(r) dr for integrands with algebraic decay at both ends. The
/// finite τ-window is found by scanning; the neglected tails are bounded by
/// the last scanned value and are added back through an exponential model.
pub fn integrate_half_line<F: Fn(f64) -> f64>(g: F, scale: f64, tol: Tolerance) -> Result<Estimate> {
    let h = |t: f64| {
        let r = t.exp();
        g(r) * r
    };
    let t0 = scale.ln();
    let peak = scan_peak(&h, t0 - 40.0, t0 + 40.0);
    let t_lo = scan_until_negligible(&h, t0, -1.0, peak, -745.0)?;
    let t_hi = scan_until_negligible(&h, t0, 1.0, peak, 709.0)?;
    let pts = refine_points(&[t_lo, t0, t_hi], 2.0);
    let body = integrate_points(&h, &pts, tol)?;
    let tail = exp_tail(&h, t_hi, 1.0) + exp_tail(&h, t_lo, -1.0);
    Ok(Estimate {
        value: body.value + tail,
        error: body.error + tail.abs(),
        evaluations: body.evaluations,
    })
}

fn scan_peak<H: Fn(f64) -> f64>(h: &H, t_a: f64, t_b: f64) -> f64 {
    let steps = 160;
    (0..=steps)
        .map(|k| h(t_a + (t_b - t_a) * k as f64 / steps as f64).abs())
        .filter(|v| v.is_finite())
        .fold(0.0, f64::max)
}

/// Walks from `t0` in direction `dir` in unit steps until |h| stays below
/// 1e-19 of the running maximum for several consecutive steps.
fn scan_until_negligible<H: Fn(f64) -> f64>(h: &H, t0: f64, dir: f64, peak: f64, limit: f64) -> Result<f64> {
    let mut max = peak;
    let mut quiet = 0;
    let mut t = t0;
    loop {
        t += dir;
        if (dir < 0.0 && t < limit) || (dir > 0.0 && t > limit) {
            return Ok(limit);
        }
        let v = h(t).abs();
        if !v.is_finite() {
            return Err(Error::Quadrature(format!("non-finite integrand at ln r = {t}")));
        }
        max = max.max(v);
        if v <= 1e-19 * max {
            quiet += 1;
            if quiet >= 4 {
                return Ok(t);
            }
        } else {
            quiet = 0;
        }
    }
}

fn exp_tail<H: Fn(f64) -> f64>(h: &H, t: f64, dir: f64) -> f64 {
    let v1 = h(t);
    let v0 = h(t - dir);
    if v1 == 0.0 || v0 == 0.0 || v1.signum() != v0.signum() {
        return 0.0;
    }
    let rate = (v0 / v1).ln();
    if rate <= 0.0 {
        return 0.0;
    }
    v1 / rate
}

/// Inserts points so that no panel is longer than `max_len`.
fn refine_points(pts: &[f64], max_len: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(pts.len());
    for w in pts.windows(2) {
        let len = w[1] - w[0];
        let pieces = (len / max_len).ceil().max(1.0) as usize;
        for k in 0..pieces {
            out.push(w[0] + len * k as f64 / pieces as f64);
        }
    }
    out.push(*pts.last().expect("non-empty"));
    out
}

/// Gauss–Legendre nodes and weights on (-1, 1), by Newton iteration on the
/// three-term recurrence.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    let nf = n as f64;
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, 0.0);
            for j in 0..n {
                let p2 = p1;
                p1 = p0;
                let jf = j as f64;
                p0 = ((2.0 * jf + 1.0) * z * p1 - jf * p2) / (jf + 1.0);
            }
            dp = nf * (z * p0 - p1) / (z * z - 1.0);
            let dz = p0 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}
