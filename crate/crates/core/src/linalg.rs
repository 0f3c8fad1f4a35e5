//! Symmetric tridiagonal helpers.
//!
//! Every Lyapunov matrix built by the synthesis is symmetric tridiagonal,
//! stored as a diagonal `d[0..m]` and an off-diagonal `e[0..m−1]`
//! (`e[i]` couples rows `i` and `i+1`).

use nalgebra::DMatrix;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive};

/// `out = P·w`.
pub fn tri_matvec(d: &[f64], e: &[f64], w: &[f64], out: &mut [f64]) {
    let m = d.len();
    for i in 0..m {
        let mut v = d[i] * w[i];
        if i > 0 {
            v += e[i - 1] * w[i - 1];
        }
        if i + 1 < m {
            v += e[i] * w[i + 1];
        }
        out[i] = v;
    }
}

/// `w′·P·w`.
pub fn tri_quad(d: &[f64], e: &[f64], w: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..d.len() {
        s += d[i] * w[i] * w[i];
        if i + 1 < d.len() {
            s += 2.0 * e[i] * w[i] * w[i + 1];
        }
    }
    s
}

/// Solves `P·x = b` by the Thomas algorithm (no pivoting; intended for
/// positive definite `P`).
pub fn tri_solve(d: &[f64], e: &[f64], b: &[f64]) -> Vec<f64> {
    let m = d.len();
    let mut c = vec![0.0; m];
    let mut x = vec![0.0; m];
    let mut denom = d[0];
    if m > 1 {
        c[0] = e[0] / denom;
    }
    x[0] = b[0] / denom;
    for i in 1..m {
        denom = d[i] - e[i - 1] * c[i - 1];
        if i + 1 < m {
            c[i] = e[i] / denom;
        }
        x[i] = (b[i] - e[i - 1] * x[i - 1]) / denom;
    }
    for i in (0..m.saturating_sub(1)).rev() {
        x[i] -= c[i] * x[i + 1];
    }
    x
}

/// Determinants of the trailing principal submatrices of `P − c·I`:
/// entry `k` (`k = 1..=m`) is the determinant of the lower-right `k×k`
/// block; entry 0 is 1.
pub fn trailing_dets(d: &[f64], e: &[f64], c: f64) -> Vec<f64> {
    let m = d.len();
    let mut out = vec![1.0; m + 1];
    out[1] = d[m - 1] - c;
    for k in 2..=m {
        let i = m - k;
        out[k] = (d[i] - c) * out[k - 1] - e[i] * e[i] * out[k - 2];
    }
    out
}

/// As [`trailing_dets`], but evaluated exactly in rational arithmetic on
/// the stored `f64` entries and rounded once at the end.  This is the
/// determinant of the matrix actually held in memory, free of the
/// cancellation the floating-point recurrence suffers for large entries.
pub fn exact_trailing_dets(d: &[f64], e: &[f64], c: f64) -> Vec<f64> {
    let q = |v: f64| BigRational::from_float(v).expect("finite matrix entry");
    let m = d.len();
    let c = q(c);
    let mut out = vec![1.0; m + 1];
    let mut prev2 = BigRational::one();
    let mut prev = q(d[m - 1]) - &c;
    out[1] = prev.to_f64().unwrap_or(f64::NAN);
    for k in 2..=m {
        let i = m - k;
        let ei = q(e[i]);
        let next = (q(d[i]) - &c) * &prev - &ei * &ei * &prev2;
        out[k] = ratio_to_f64(&next);
        prev2 = prev;
        prev = next;
    }
    out
}

fn ratio_to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or_else(|| {
        // Huge numerators/denominators: scale both to f64 range first.
        let shift = r.numer().bits().max(r.denom().bits()).saturating_sub(1000);
        let n: BigInt = r.numer() >> shift;
        let dd: BigInt = r.denom() >> shift;
        n.to_f64().unwrap_or(f64::NAN) / dd.to_f64().unwrap_or(f64::NAN)
    })
}

/// Double-double number `hi + lo` with `|lo| ≤ ½ulp(hi)`, for the few
/// recurrences whose cancellation exceeds what `f64` can carry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dd {
    pub hi: f64,
    pub lo: f64,
}

impl Dd {
    pub fn new(v: f64) -> Self {
        Dd { hi: v, lo: 0.0 }
    }

    /// Exact product of two `f64`.
    pub fn prod(a: f64, b: f64) -> Self {
        let p = a * b;
        Dd { hi: p, lo: a.mul_add(b, -p) }
    }

    fn two_sum(a: f64, b: f64) -> Self {
        let s = a + b;
        let bb = s - a;
        Dd { hi: s, lo: (a - (s - bb)) + (b - bb) }
    }

    fn renorm(hi: f64, lo: f64) -> Self {
        let s = hi + lo;
        Dd { hi: s, lo: lo - (s - hi) }
    }

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }
}

impl std::ops::Add for Dd {
    type Output = Dd;
    fn add(self, o: Dd) -> Dd {
        let s = Dd::two_sum(self.hi, o.hi);
        Dd::renorm(s.hi, s.lo + self.lo + o.lo)
    }
}

impl std::ops::Neg for Dd {
    type Output = Dd;
    fn neg(self) -> Dd {
        Dd { hi: -self.hi, lo: -self.lo }
    }
}

impl std::ops::Sub for Dd {
    type Output = Dd;
    fn sub(self, o: Dd) -> Dd {
        self + (-o)
    }
}

impl std::ops::Mul for Dd {
    type Output = Dd;
    fn mul(self, o: Dd) -> Dd {
        let p = Dd::prod(self.hi, o.hi);
        Dd::renorm(p.hi, p.lo + self.hi * o.lo + self.lo * o.hi)
    }
}

impl std::ops::Div for Dd {
    type Output = Dd;
    /// Long division with three quotient digits.
    fn div(self, o: Dd) -> Dd {
        let q1 = self.hi / o.hi;
        let r = self - o * Dd::new(q1);
        let q2 = r.hi / o.hi;
        let r = r - o * Dd::new(q2);
        let q3 = r.hi / o.hi;
        Dd::renorm(q1, q2) + Dd::new(q3)
    }
}

/// Bottom-up `U·D·U′` pivots of `P − c·I`; all positive iff `P − c·I > 0`.
pub fn shifted_pivots(d: &[f64], e: &[f64], c: f64) -> Vec<f64> {
    let m = d.len();
    let mut piv = vec![0.0; m];
    piv[m - 1] = d[m - 1] - c;
    for i in (0..m - 1).rev() {
        piv[i] = d[i] - c - e[i] * e[i] / piv[i + 1];
    }
    piv
}

/// Whether `P − c·I` is positive definite (pivot test).
pub fn is_above(d: &[f64], e: &[f64], c: f64) -> bool {
    shifted_pivots(d, e, c).iter().all(|&p| p > 0.0)
}

/// Number of eigenvalues strictly below `x` (Sturm count).
fn sturm_count(d: &[f64], e: &[f64], x: f64) -> usize {
    let mut count = 0;
    let mut q = d[0] - x;
    if q < 0.0 {
        count += 1;
    }
    for i in 1..d.len() {
        let qq = if q == 0.0 { f64::EPSILON * (e[i - 1].abs() + 1.0) } else { q };
        q = d[i] - x - e[i - 1] * e[i - 1] / qq;
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

/// Gershgorin interval containing the spectrum.
pub fn gershgorin(d: &[f64], e: &[f64]) -> (f64, f64) {
    let m = d.len();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..m {
        let r = if i > 0 { e[i - 1].abs() } else { 0.0 } + if i + 1 < m { e[i].abs() } else { 0.0 };
        lo = lo.min(d[i] - r);
        hi = hi.max(d[i] + r);
    }
    (lo, hi)
}

/// Smallest eigenvalue by Sturm bisection.
pub fn min_eigenvalue(d: &[f64], e: &[f64]) -> f64 {
    let (mut lo, mut hi) = gershgorin(d, e);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if sturm_count(d, e, mid) >= 1 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Spectral norm (largest absolute eigenvalue) of a symmetric tridiagonal matrix.
pub fn spectral_norm(d: &[f64], e: &[f64]) -> f64 {
    let m = d.len();
    if m == 1 {
        return d[0].abs();
    }
    let mut dense = DMatrix::<f64>::zeros(m, m);
    for i in 0..m {
        dense[(i, i)] = d[i];
        if i + 1 < m {
            dense[(i, i + 1)] = e[i];
            dense[(i + 1, i)] = e[i];
        }
    }
    dense
        .symmetric_eigenvalues()
        .iter()
        .fold(0.0f64, |acc, v| acc.max(v.abs()))
}
