//! One-dimensional kernels shared by every analysis step: golden-section
//! maximization, bisection, and adaptive Simpson quadrature.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Numerical tolerances, all absolute.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ToleranceSet {
    /// Argument tolerance of the concave maximizer.
    pub opt: f64,
    /// Absolute error target of the quadrature.
    pub integ: f64,
    /// Bracket width at which bisection stops.
    pub root: f64,
    /// Equivalence band of the incentive order and knife-edge band of equilibria.
    pub eq: f64,
    /// Value band used to collect dual-reply maximizers.
    pub reply: f64,
    /// Deviation gain below which a profile still counts as an equilibrium.
    pub gap: f64,
}

impl Default for ToleranceSet {
    fn default() -> Self {
        Self { opt: 1e-9, integ: 1e-8, root: 1e-10, eq: 1e-6, reply: 1e-10, gap: 1e-11 }
    }
}

impl ToleranceSet {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("tol.opt", self.opt),
            ("tol.integ", self.integ),
            ("tol.root", self.root),
            ("tol.eq", self.eq),
            ("tol.reply", self.reply),
            ("tol.gap", self.gap),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::param(name, format!("must be strictly positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Closed real interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite()) || lo > hi {
            return Err(Error::param("interval", format!("[{lo}, {hi}] is not a valid closed interval")));
        }
        Ok(Self { lo, hi })
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }

    /// Membership with an absolute slack proportional to the width.
    pub fn contains_approx(&self, x: f64) -> bool {
        let slack = 1e-9 * self.width().max(1.0);
        x >= self.lo - slack && x <= self.hi + slack
    }

    pub fn clamp(&self, x: f64) -> f64 {
        x.clamp(self.lo, self.hi)
    }

    /// `n` evenly spaced points including both endpoints (`n >= 2`, or the
    /// single point `lo` for degenerate intervals / `n == 1`).
    pub fn grid(&self, n: usize) -> Vec<f64> {
        linspace(self.lo, self.hi, n)
    }
}

pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n <= 1 || hi == lo {
        return vec![lo];
    }
    let step = (hi - lo) / (n - 1) as f64;
    let mut out: Vec<f64> = (0..n).map(|i| lo + step * i as f64).collect();
    out[n - 1] = hi;
    out
}

fn finite(x: f64, at: f64) -> Result<f64> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(Error::NonFinite { at })
    }
}

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Golden-section maximization of a unimodal function.
///
/// Returns `(argmax, max)`. Endpoints are compared against the interior
/// candidate at the end, so corner solutions come back exactly at `lo`/`hi`.
pub fn maximize_concave_1d<F>(f: F, interval: Interval, tol: f64) -> Result<(f64, f64)>
where
    F: Fn(f64) -> f64,
{
    let (mut a, mut b) = (interval.lo, interval.hi);
    if b - a <= tol {
        let x = 0.5 * (a + b);
        let fx = finite(f(x), x)?;
        return Ok((x, fx));
    }
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = finite(f(c), c)?;
    let mut fd = finite(f(d), d)?;
    while b - a > tol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = finite(f(c), c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = finite(f(d), d)?;
        }
    }
    let (mut best_x, mut best_f) = if fc >= fd { (c, fc) } else { (d, fd) };
    let mid = 0.5 * (a + b);
    let fm = finite(f(mid), mid)?;
    if fm > best_f {
        best_x = mid;
        best_f = fm;
    }
    for x in [interval.lo, interval.hi] {
        let fx = finite(f(x), x)?;
        if fx >= best_f {
            best_x = x;
            best_f = fx;
        }
    }
    Ok((best_x, best_f))
}

/// Bisection on a bracket with a sign change. Exact zeros at the endpoints
/// are returned as-is.
pub fn find_root_1d<G>(g: G, lo: f64, hi: f64, tol: f64) -> Result<f64>
where
    G: Fn(f64) -> f64,
{
    let (mut a, mut b) = if lo <= hi { (lo, hi) } else { (hi, lo) };
    let mut ga = finite(g(a), a)?;
    let gb = finite(g(b), b)?;
    if ga == 0.0 {
        return Ok(a);
    }
    if gb == 0.0 {
        return Ok(b);
    }
    if ga.signum() == gb.signum() {
        return Err(Error::NoSignChange { lo: a, hi: b, g_lo: ga, g_hi: gb });
    }
    // 200 halvings exhaust f64 resolution on any finite bracket.
    for _ in 0..200 {
        if b - a <= tol {
            break;
        }
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        let gm = finite(g(m), m)?;
        if gm == 0.0 {
            return Ok(m);
        }
        if gm.signum() == ga.signum() {
            a = m;
            ga = gm;
        } else {
            b = m;
        }
    }
    Ok(0.5 * (a + b))
}

const SIMPSON_MAX_DEPTH: u32 = 48;

/// Adaptive Simpson quadrature over `[lo, hi]` with absolute error target
/// `tol`. Interior kink locations split the range into smooth pieces first.
pub fn integrate_1d<F>(f: F, lo: f64, hi: f64, kinks: &[f64], tol: f64) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    if lo == hi {
        return Ok(0.0);
    }
    if hi < lo {
        return integrate_1d(f, hi, lo, kinks, tol).map(|v| -v);
    }
    let mut cuts: Vec<f64> = kinks.iter().copied().filter(|&k| k > lo && k < hi).collect();
    cuts.sort_by(|x, y| x.total_cmp(y));
    cuts.dedup();
    let mut nodes = Vec::with_capacity(cuts.len() + 2);
    nodes.push(lo);
    nodes.extend(cuts);
    nodes.push(hi);

    let total = hi - lo;
    let mut sum = 0.0;
    for w in nodes.windows(2) {
        let (a, b) = (w[0], w[1]);
        let piece_tol = tol * (b - a) / total;
        sum += simpson_piece(&f, a, b, piece_tol)?;
    }
    Ok(sum)
}

fn simpson_piece<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> Result<f64> {
    let m = 0.5 * (a + b);
    let fa = finite(f(a), a)?;
    let fm = finite(f(m), m)?;
    let fb = finite(f(b), b)?;
    let whole = (b - a) * (fa + 4.0 * fm + fb) / 6.0;
    simpson_recurse(f, a, m, b, fa, fm, fb, whole, tol, SIMPSON_MAX_DEPTH)
}

#[allow(clippy::too_many_arguments)]
fn simpson_recurse<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    m: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> Result<f64> {
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = finite(f(lm), lm)?;
    let frm = finite(f(rm), rm)?;
    let left = (m - a) * (fa + 4.0 * flm + fm) / 6.0;
    let right = (b - m) * (fm + 4.0 * frm + fb) / 6.0;
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return Ok(left + right + delta / 15.0);
    }
    Ok(simpson_recurse(f, a, lm, m, fa, flm, fm, left, 0.5 * tol, depth - 1)?
        + simpson_recurse(f, m, rm, b, fm, frm, fb, right, 0.5 * tol, depth - 1)?)
}

/// Index of the last grid point `<= x` (grid sorted ascending, non-empty).
pub(crate) fn floor_index(grid: &[f64], x: f64) -> usize {
    match grid.binary_search_by(|g| g.total_cmp(&x)) {
        Ok(i) => i,
        Err(0) => 0,
        Err(i) => i - 1,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit() -> Interval {
        Interval::new(0.0, 1.0).unwrap()
    }

    #[test]
    fn quadratic_vertex() {
        let (x, _) = maximize_concave_1d(|r| -(r - 0.3) * (r - 0.3), unit(), 1e-9).unwrap();
        assert!((x - 0.3).abs() < 1e-8);
    }

    #[test]
    fn cournot_reply_at_nash_point() {
        let (x, _) = maximize_concave_1d(|r| r * (1.0 - 1.0 / 3.0 - r), unit(), 1e-9).unwrap();
        assert!((x - 1.0 / 3.0).abs() < 1e-8);
    }

    #[test]
    fn corner_is_exact() {
        let (x, fx) = maximize_concave_1d(|r| r, unit(), 1e-9).unwrap();
        assert_eq!(x, 1.0);
        assert_eq!(fx, 1.0);
        let (x, _) = maximize_concave_1d(|r| -r, unit(), 1e-9).unwrap();
        assert_eq!(x, 0.0);
    }

    #[test]
    fn non_finite_is_an_error() {
        let err = maximize_concave_1d(|r| if r > 0.5 { f64::NAN } else { r }, unit(), 1e-9);
        assert!(matches!(err, Err(Error::NonFinite { .. })));
    }

    #[test]
    fn quadrature_examples() {
        let v = integrate_1d(|a| 0.5 - 1.5 * a, 1.0 / 3.0, 0.5, &[], 1e-12).unwrap();
        assert!((v + 1.0 / 48.0).abs() < 1e-14);
        let v = integrate_1d(|a| 2.0 / 3.0 - 2.0 * a, 1.0 / 3.0, 0.5, &[], 1e-12).unwrap();
        assert!((v + 1.0 / 36.0).abs() < 1e-14);
        assert_eq!(integrate_1d(|_| 0.0, 0.0, 1.0, &[], 1e-8).unwrap(), 0.0);
    }

    #[test]
    fn quadrature_with_kink() {
        let f = |x: f64| (x - 0.3).abs();
        let exact = 0.3 * 0.3 / 2.0 + 0.7 * 0.7 / 2.0;
        let v = integrate_1d(f, 0.0, 1.0, &[0.3], 1e-12).unwrap();
        assert!((v - exact).abs() < 1e-13);
    }

    #[test]
    fn reversed_bounds_flip_sign() {
        let v = integrate_1d(|x| x, 1.0, 0.0, &[], 1e-10).unwrap();
        assert!((v + 0.5).abs() < 1e-14);
    }

    #[test]
    fn bisection() {
        let x = find_root_1d(|x| x - 0.25, 0.0, 1.0, 1e-10).unwrap();
        assert!((x - 0.25).abs() < 1e-10);
        assert!(matches!(find_root_1d(|x| x + 1.0, 0.0, 1.0, 1e-10), Err(Error::NoSignChange { .. })));
        assert_eq!(find_root_1d(|x| x, 0.0, 1.0, 1e-10).unwrap(), 0.0);
    }

    #[test]
    fn tolerances_must_be_positive() {
        assert!(ToleranceSet::default().validate().is_ok());
        let bad = ToleranceSet { eq: 0.0, ..Default::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn grid_endpoints_exact() {
        let g = linspace(1.0 / 3.0, 1.0, 2001);
        assert_eq!(g[0], 1.0 / 3.0);
        assert_eq!(g[2000], 1.0);
        assert_eq!(floor_index(&g, 1.0), 2000);
        assert_eq!(floor_index(&g, 0.0), 0);
    }
}
