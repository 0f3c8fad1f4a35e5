//! The output-injection lemma: given `P`, `d̄` and the q-ball, find φ with
//! `D(t,q,w) ≤ φ(t)·|Hw|²` for all unit `w` and all `q ∈ Q(t−τ)`, where
//!
//! ```text
//! D(t,q,w) = w′P A(t−τ,q,y_τ,u_τ) w + ½ w′Ṗ w + d̄ w′P w
//! ```
//!
//! and `A` has the couplings on its superdiagonal and the free entries `q`
//! on and below the diagonal.  Because `A` is affine in `q`, the supremum
//! over the ball `|q| ≤ ρ` is `D(t,0,w) + ρ·‖(Pw)_i w_j‖_{i≥j}` in closed
//! form.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{spectral_norm, tri_matvec};
use crate::plant::PhiRule;

/// Safety factor applied to the sampled ω.
pub const OMEGA_SAFETY: f64 = 0.9;
/// Multiplicative inflation of the bound C.
pub const PHI_INFLATION: f64 = 1.05;
/// Additive floor of φ.
pub const PHI_FLOOR: f64 = 1.0;

/// Everything the lemma needs at one time instant, for an `m×m` block.
#[derive(Debug, Clone, Copy)]
pub struct LemmaPoint<'a> {
    pub t: f64,
    /// Diagonal of `P` (length m).
    pub p_diag: &'a [f64],
    /// Off-diagonal of `P` (length m−1).
    pub p_off: &'a [f64],
    /// Diagonal of `Ṗ`.
    pub dp_diag: &'a [f64],
    /// Off-diagonal of `Ṗ`.
    pub dp_off: &'a [f64],
    /// Superdiagonal couplings of `A` (length m−1).
    pub a_sup: &'a [f64],
    /// The rate `d̄(t)`.
    pub d_bar: f64,
    /// q-ball radius `σ_R(t−τ)`.
    pub rho: f64,
    /// Bound on `|A|`, `σ̄_R(t)`.
    pub sigma_bar: f64,
}

impl LemmaPoint<'_> {
    pub fn m(&self) -> usize {
        self.p_diag.len()
    }

    /// `D(t, 0, w)` and the gradient norm of `D` with respect to `q`.
    fn parts(&self, w: &[f64], pw: &mut [f64]) -> (f64, f64) {
        let m = self.m();
        tri_matvec(self.p_diag, self.p_off, w, pw);
        let mut base = 0.0;
        let mut wpw = 0.0;
        let mut wdw = 0.0;
        for i in 0..m {
            wpw += w[i] * pw[i];
            wdw += self.dp_diag[i] * w[i] * w[i];
            if i + 1 < m {
                base += pw[i] * self.a_sup[i] * w[i + 1];
                wdw += 2.0 * self.dp_off[i] * w[i] * w[i + 1];
            }
        }
        base += 0.5 * wdw + self.d_bar * wpw;
        let mut grad2 = 0.0;
        let mut prefix = 0.0;
        for i in 0..m {
            prefix += w[i] * w[i];
            grad2 += pw[i] * pw[i] * prefix;
        }
        (base, grad2.sqrt())
    }

    /// `sup_{|q| ≤ ρ} D(t, q, w)`.
    pub fn sup_d(&self, w: &[f64]) -> f64 {
        let (mut stack, mut heap) = ([0.0f64; 16], Vec::new());
        let pw = scratch(&mut stack, &mut heap, self.m());
        let (base, grad) = self.parts(w, pw);
        base + self.rho * grad
    }

    /// `D(t, q, w)` for an explicit lower-triangular `q` stored row by row
    /// (`q_{1,1}; q_{2,1}, q_{2,2}; …`).
    pub fn d_at(&self, w: &[f64], q: &[f64]) -> f64 {
        let m = self.m();
        let (mut stack, mut heap) = ([0.0f64; 16], Vec::new());
        let pw = scratch(&mut stack, &mut heap, m);
        let (base, _) = self.parts(w, pw);
        let mut qpart = 0.0;
        let mut idx = 0;
        for i in 0..m {
            for j in 0..=i {
                qpart += q[idx] * pw[i] * w[j];
                idx += 1;
            }
        }
        base + qpart
    }
}

/// Stack scratch space for small blocks, heap beyond.
fn scratch<'a>(stack: &'a mut [f64; 16], heap: &'a mut Vec<f64>, m: usize) -> &'a mut [f64] {
    if m <= stack.len() {
        &mut stack[..m]
    } else {
        heap.resize(m, 0.0);
        heap
    }
}

/// Deterministic point set on the unit sphere of `R^m`.
#[derive(Debug, Clone)]
pub struct SphereLattice {
    pub m: usize,
    points: Vec<f64>,
}

impl SphereLattice {
    /// `per_dim·m` points: an equispaced half circle for `m = 2`, a
    /// Fibonacci lattice for `m = 3`, seeded Gaussian directions beyond.
    pub fn new(m: usize, per_dim: usize) -> Self {
        let count = per_dim * m;
        let mut points = Vec::with_capacity(count * m);
        match m {
            1 => points.push(1.0),
            2 => {
                for k in 0..count {
                    let th = std::f64::consts::PI * k as f64 / count as f64;
                    points.extend_from_slice(&[th.cos(), th.sin()]);
                }
            }
            3 => {
                let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
                for k in 0..count {
                    let z = 1.0 - 2.0 * (k as f64 + 0.5) / count as f64;
                    let r = (1.0 - z * z).sqrt();
                    let th = golden * k as f64;
                    points.extend_from_slice(&[z, r * th.cos(), r * th.sin()]);
                }
            }
            _ => {
                let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0000 + m as u64);
                for _ in 0..count {
                    let v: Vec<f64> = (0..m).map(|_| StandardNormal.sample(&mut rng)).collect();
                    let nv = v.iter().map(|a| a * a).sum::<f64>().sqrt();
                    points.extend(v.iter().map(|a| a / nv));
                }
            }
        }
        Self { m, points }
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.m
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, k: usize) -> &[f64] {
        &self.points[k * self.m..(k + 1) * self.m]
    }
}

/// Outcome of the lemma at one time instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LemmaBound {
    /// The bound `C(t)` (zero when `K^c(t)` is empty).
    pub c: f64,
    /// The sampled ω (after the safety factor), for the literal rule.
    pub omega: Option<f64>,
    /// Whether any sampled direction fell in `K^c(t)`.
    pub kc_nonempty: bool,
}

fn normalize(v: &mut [f64]) {
    let n = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    v.iter_mut().for_each(|a| *a /= n);
}

/// Literal construction: probe `K^c` on the lattice, refine ω along paths
/// towards `ker H`, and set `C = ω̄(|P|σ̄ + ½|Ṗ| + |d̄||P|)`.
fn lattice_bound(pt: &LemmaPoint, lattice: &SphereLattice, nu: usize) -> Result<LemmaBound> {
    let mut kc: Vec<(f64, usize)> = Vec::new();
    for k in 0..lattice.len() {
        let w = lattice.point(k);
        if pt.sup_d(w) >= 0.0 {
            kc.push((w[0].abs(), k));
        }
    }
    if kc.is_empty() {
        return Ok(LemmaBound {
            c: 0.0,
            omega: None,
            kc_nonempty: false,
        });
    }
    kc.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut omega = kc[0].0;
    // Walk from the kernel direction (always in K) towards each of the
    // best K^c samples and bisect the first crossing.
    for &(_, k) in kc.iter().take(8) {
        let w = lattice.point(k);
        let point_at = |s: f64| -> Vec<f64> {
            let mut v = w.to_vec();
            v[0] *= s;
            normalize(&mut v);
            v
        };
        if w[1..].iter().all(|&a| a == 0.0) {
            continue;
        }
        let steps = 64;
        let mut lo = 0.0;
        let mut hi = None;
        for j in 1..=steps {
            let s = j as f64 / steps as f64;
            if pt.sup_d(&point_at(s)) >= 0.0 {
                hi = Some(s);
                break;
            }
            lo = s;
        }
        let Some(mut hi) = hi else { continue };
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if pt.sup_d(&point_at(mid)) >= 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        omega = omega.min(point_at(hi)[0].abs());
    }
    let omega = OMEGA_SAFETY * omega;
    if !(omega > 10.0 * f64::EPSILON) {
        return Err(Error::IllConditioned { nu, t: pt.t, omega });
    }
    let p_norm = spectral_norm(pt.p_diag, pt.p_off);
    let dp_norm = spectral_norm(pt.dp_diag, pt.dp_off);
    let c = (p_norm * pt.sigma_bar + 0.5 * dp_norm + pt.d_bar.abs() * p_norm) / (omega * omega);
    Ok(LemmaBound {
        c,
        omega: Some(omega),
        kc_nonempty: true,
    })
}

/// `S(v) = sup_q D(t, q, (1, v))`, the homogeneous form in the chart `w₁ = 1`.
fn chart(pt: &LemmaPoint, v: &[f64], buf: &mut Vec<f64>) -> f64 {
    buf.clear();
    buf.push(1.0);
    buf.extend_from_slice(v);
    pt.sup_d(buf)
}

/// Sharper bound: `C = max(0, sup_v S(v))`.  Since `D` is homogeneous of
/// degree two, `sup_{w ∉ ker H} D/|Hw|²` equals the supremum of the chart
/// function; it is finite because `S(0, ŵ) < 0` on the kernel.
fn tight_bound(pt: &LemmaPoint) -> LemmaBound {
    let m = pt.m();
    let mut buf = Vec::with_capacity(m);
    let mut best = chart(pt, &vec![0.0; m - 1], &mut buf);
    let mut best_v = vec![0.0; m - 1];
    let exps: Vec<f64> = (0..=(18 * 32)).map(|k| -6.0 + k as f64 / 32.0).collect();
    if m == 2 {
        let mut samples: Vec<(f64, f64)> = Vec::with_capacity(2 * exps.len() + 1);
        samples.push((0.0, best));
        for &e in &exps {
            for sgn in [-1.0, 1.0] {
                let v = sgn * 10f64.powf(e);
                samples.push((v, chart(pt, &[v], &mut buf)));
            }
        }
        samples.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (ib, _) = samples
            .iter()
            .enumerate()
            .max_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
            .expect("non-empty");
        best = samples[ib].1;
        // Golden-section refinement on the bracketing samples.
        let lo = samples[ib.saturating_sub(1)].0;
        let hi = samples[(ib + 1).min(samples.len() - 1)].0;
        let g = 0.5 * (5f64.sqrt() - 1.0);
        let (mut a, mut b) = (lo, hi);
        let mut x1 = b - g * (b - a);
        let mut x2 = a + g * (b - a);
        let mut f1 = chart(pt, &[x1], &mut buf);
        let mut f2 = chart(pt, &[x2], &mut buf);
        for _ in 0..80 {
            if f1 > f2 {
                b = x2;
                x2 = x1;
                f2 = f1;
                x1 = b - g * (b - a);
                f1 = chart(pt, &[x1], &mut buf);
            } else {
                a = x1;
                x1 = x2;
                f1 = f2;
                x2 = a + g * (b - a);
                f2 = chart(pt, &[x2], &mut buf);
            }
        }
        best = best.max(f1).max(f2);
    } else {
        let dirs = SphereLattice::new(m - 1, if m == 3 { 64 } else { 100 });
        let radial: Vec<f64> = exps.iter().step_by(4).map(|e| 10f64.powf(*e)).collect();
        let mut v = vec![0.0; m - 1];
        for k in 0..dirs.len() {
            let d = dirs.point(k);
            for &r in &radial {
                for (vi, di) in v.iter_mut().zip(d) {
                    *vi = r * di;
                }
                let s = chart(pt, &v, &mut buf);
                if s > best {
                    best = s;
                    best_v.copy_from_slice(&v);
                }
            }
        }
        // Compass search around the best sample.
        let mut step = 0.1 * best_v.iter().map(|a| a * a).sum::<f64>().sqrt().max(1e-6);
        let mut trial = best_v.clone();
        for _ in 0..400 {
            let mut improved = false;
            for j in 0..m - 1 {
                for sgn in [-1.0, 1.0] {
                    trial.copy_from_slice(&best_v);
                    trial[j] += sgn * step;
                    let s = chart(pt, &trial, &mut buf);
                    if s > best {
                        best = s;
                        best_v.copy_from_slice(&trial);
                        improved = true;
                    }
                }
            }
            if !improved {
                step *= 0.5;
                if step < 1e-10 * best_v.iter().map(|a| a.abs()).sum::<f64>().max(1e-12) {
                    break;
                }
            }
        }
    }
    LemmaBound {
        c: best.max(0.0),
        omega: None,
        kc_nonempty: best >= 0.0,
    }
}

/// The bound `C(t)` at one instant under the chosen rule.
pub fn lemma_bound(pt: &LemmaPoint, rule: PhiRule, lattice: &SphereLattice, nu: usize) -> Result<LemmaBound> {
    let finite = pt.p_diag.iter().chain(pt.p_off).chain(pt.dp_diag).chain(pt.dp_off).chain(pt.a_sup);
    if finite.clone().any(|v| !v.is_finite()) || !pt.d_bar.is_finite() || !pt.rho.is_finite() {
        return Err(Error::NonFinite(format!("lemma input at t = {}", pt.t)));
    }
    match rule {
        PhiRule::Lattice => lattice_bound(pt, lattice, nu),
        PhiRule::Tight => Ok(tight_bound(pt)),
    }
}

/// Turns per-knot bounds into C¹ knot data for φ: each knot takes
/// `1.05·max(C_{k−1}, C_k, C_{k+1}) + 1` with zero slope (so every cell is
/// a monotone zero-slope bridge between two values that both dominate the
/// cell's end-point bounds); knots flagged in `forced_floor` get exactly 1.
pub fn smooth_phi(c: &[f64], forced_floor: &[bool]) -> Vec<f64> {
    let n = c.len();
    (0..n)
        .map(|k| {
            if forced_floor[k] {
                return PHI_FLOOR;
            }
            let lo = k.saturating_sub(1);
            let hi = (k + 1).min(n - 1);
            let m = c[lo..=hi].iter().cloned().fold(0.0f64, f64::max);
            PHI_INFLATION * m + PHI_FLOOR
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn point<'a>(pd: &'a [f64], po: &'a [f64], z: &'a [f64], zo: &'a [f64], a: &'a [f64], d_bar: f64, rho: f64) -> LemmaPoint<'a> {
        LemmaPoint {
            t: 0.0,
            p_diag: pd,
            p_off: po,
            dp_diag: z,
            dp_off: zo,
            a_sup: a,
            d_bar,
            rho,
            sigma_bar: (1.0 + rho * rho).sqrt(),
        }
    }

    #[test]
    fn hand_evaluated_quadratic_form() {
        // P = diag(2,2), a = 1, q = 0, d̄ = −1, w = (0,1): D = −2.
        let p = point(&[2.0, 2.0], &[0.0], &[0.0, 0.0], &[0.0], &[1.0], -1.0, 0.0);
        assert_eq!(p.sup_d(&[0.0, 1.0]), -2.0);
        assert_eq!(p.d_at(&[0.0, 1.0], &[0.0, 0.0, 0.0]), -2.0);
    }

    #[test]
    fn closed_form_sup_dominates_ball_samples() {
        let p = point(&[5.0, 2.0], &[1.5], &[0.3, 0.0], &[-0.2], &[0.8], -0.5, 1.3);
        let w = [0.6, 0.8];
        let s = p.sup_d(&w);
        for k in 0..200 {
            let th = k as f64 * 0.1;
            let q = [th.cos() * 0.7, th.sin() * 0.5, (0.3 * th).cos() * 0.5];
            let nq = q.iter().map(|v| v * v).sum::<f64>().sqrt();
            let q: Vec<f64> = q.iter().map(|v| v * 1.3 / nq).collect();
            assert!(p.d_at(&w, &q) <= s + 1e-12);
        }
    }

    #[test]
    fn empty_kc_gives_zero_bound() {
        // P = 2I, a = 1, ρ = 1, d̄ = −(σ̄ + 1): strongly negative everywhere.
        let sb = 2f64.sqrt();
        let p = point(&[2.0, 2.0], &[0.0], &[0.0, 0.0], &[0.0], &[1.0], -(sb + 1.0), 1.0);
        let lat = SphereLattice::new(2, 2000);
        for rule in [PhiRule::Lattice, PhiRule::Tight] {
            let b = lemma_bound(&p, rule, &lat, 1).unwrap();
            assert_eq!(b.c, 0.0);
            assert!(!b.kc_nonempty);
        }
    }

    #[test]
    fn tight_bound_is_sufficient_and_lattice_dominates() {
        let p = point(&[40.0, 2.0], &[-8.0], &[3.0, 0.0], &[-1.0], &[0.9], -3.0, 1.0);
        let lat = SphereLattice::new(2, 2000);
        let tight = lemma_bound(&p, PhiRule::Tight, &lat, 1).unwrap().c;
        let coarse = lemma_bound(&p, PhiRule::Lattice, &lat, 1).unwrap().c;
        assert!(coarse >= tight);
        let phi = PHI_INFLATION * tight + PHI_FLOOR;
        for k in 0..10_000 {
            let th = std::f64::consts::PI * k as f64 / 10_000.0;
            let w = [th.cos(), th.sin()];
            assert!(p.sup_d(&w) <= phi * w[0] * w[0] + 1e-9);
        }
    }
}
