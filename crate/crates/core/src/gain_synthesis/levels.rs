//! Per-window construction: the ε-ladder, the level-2 start, the induction
//! `m → m+1` and the final injection gain on `A_ν`.
//!
//! All window quantities live on the observer-grid knots of `J_ν`.  The
//! level-`m` Lyapunov matrix `P_{R,m}` is symmetric tridiagonal with
//! diagonal `(p_{m,1}, p_{m−1,1}, …, p_{2,1}, L)` and off-diagonal
//! `(p_m, …, p_2)`; its trailing `k×k` block is `P_{R,k}`.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::linalg::Dd;
use crate::plant::{Scenario, Window};
use crate::signals::{integrate, smoothstep, SignalTrace, TimeGrid};

use super::envelopes::BoundEnvelopes;
use super::lemma::{lemma_bound, smooth_phi, LemmaPoint, SphereLattice};

/// Knot values with exact knot slopes.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Knots {
    pub values: Vec<f64>,
    pub slopes: Vec<f64>,
}

impl Knots {
    fn with_len(n: usize) -> Self {
        Self {
            values: vec![0.0; n],
            slopes: vec![0.0; n],
        }
    }

    /// Sub-range `[lo, hi]` (inclusive).
    pub fn slice(&self, lo: usize, hi: usize) -> Knots {
        Knots {
            values: self.values[lo..=hi].to_vec(),
            slopes: self.slopes[lo..=hi].to_vec(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Plant-derived and envelope data at every knot of `J_ν`.
#[derive(Debug, Clone)]
pub struct KnotData {
    /// Observer times.
    pub t: Vec<f64>,
    pub sigma_bar: Vec<f64>,
    pub sigma_bar_dot: Vec<f64>,
    /// q-ball radius `σ_R(t−τ)`.
    pub rho: Vec<f64>,
    /// `ã_i(t) = a_i(t−τ, y_τ(t), u_τ(t))`, indexed `[i][knot]`.
    pub a: Vec<Vec<f64>>,
    /// Time derivatives of `ã_i`.
    pub a_dot: Vec<Vec<f64>>,
}

/// Collects the knot data of a window from the delayed traces.
pub fn knot_data(
    scenario: &Scenario,
    env: &BoundEnvelopes,
    obs: &TimeGrid,
    y: &SignalTrace,
    u: &SignalTrace,
    window: &Window,
) -> Result<KnotData> {
    let sys = &scenario.system;
    let tau = scenario.params.tau;
    let (k0, k1) = window.kj;
    let len = k1 - k0 + 1;
    let mut kd = KnotData {
        t: Vec::with_capacity(len),
        sigma_bar: Vec::with_capacity(len),
        sigma_bar_dot: Vec::with_capacity(len),
        rho: Vec::with_capacity(len),
        a: vec![Vec::with_capacity(len); sys.n() - 1],
        a_dot: vec![Vec::with_capacity(len); sys.n() - 1],
    };
    for k in k0..=k1 {
        let t = obs.time(k);
        let tp = y.grid().time(k);
        let (yv, uv) = (y.at(k)[0], u.at(k)[0]);
        let (yd, ud) = (y.slope_at(k, 0), u.slope_at(k, 0));
        let (sb, sbd) = env.sigma_bar.eval_d(t)?;
        kd.t.push(t);
        kd.sigma_bar.push(sb);
        kd.sigma_bar_dot.push(sbd);
        kd.rho.push(env.q_radius(t - tau)?);
        for i in 0..sys.n() - 1 {
            let a = |tt: f64, yy: f64, uu: f64| sys.coupling(i, tt, yy, uu);
            let st = 1e-6 * tp.abs().max(1.0);
            let sy = 1e-6 * yv.abs().max(1.0);
            let su = 1e-6 * uv.abs().max(1.0);
            let dt = (a(tp + st, yv, uv) - a(tp - st, yv, uv)) / (2.0 * st);
            let dy = (a(tp, yv + sy, uv) - a(tp, yv - sy, uv)) / (2.0 * sy);
            let du = (a(tp, yv, uv + su) - a(tp, yv, uv - su)) / (2.0 * su);
            let av = a(tp, yv, uv);
            if !av.is_finite() || !dt.is_finite() || !dy.is_finite() || !du.is_finite() {
                return Err(Error::NonFinite(format!("coupling a_{} at t = {t}", i + 1)));
            }
            kd.a[i].push(av);
            kd.a_dot[i].push(dt + dy * yd + du * ud);
        }
    }
    Ok(kd)
}

/// One induction level on one window.
#[derive(Debug, Clone)]
pub struct LevelRecord {
    /// Level index `m` (block size).
    pub m: usize,
    /// Collar width `ε_{m,ν}`.
    pub eps: f64,
    /// Collar width in grid steps.
    pub eps_steps: usize,
    /// The level maximum `M_{m,ν}` that entered the ε formula.
    pub level_max: f64,
    pub d: Knots,
    /// `d̄_{R,m} = d_{R,m} − 1`.
    pub d_bar: Knots,
    /// Off-diagonal entry `p_{R,m}` (zero outside the collar).
    pub p_off: Knots,
    /// Diagonal entry `p_{R,m,1}`.
    pub p_diag: Knots,
    /// Injection gain `φ_{R,m}` on `J_ν` (absent on the top level).
    pub phi: Option<Knots>,
    /// Raw lemma bound `C` at the knots (zero where not evaluated).
    pub bound: Vec<f64>,
}

/// Final gains on `A_ν`.
#[derive(Debug, Clone)]
pub struct FinalRecord {
    /// Local knot range of `A_ν` within `J_ν`.
    pub range: (usize, usize),
    /// `d̄_R = d_R − 2/(π(1+t²))` on `A_ν`.
    pub d_bar: Knots,
    /// `φ_R` on `A_ν`.
    pub phi: Knots,
    /// Raw lemma bound at the knots of `A_ν`.
    pub bound: Vec<f64>,
}

/// The complete construction for one window.
#[derive(Debug, Clone)]
pub struct WindowPlan {
    pub window: Window,
    /// `ε_{m,ν}`, `m = 2..n`.
    pub eps: Vec<f64>,
    /// Observer-grid indices of `A_ν = [a_ν − ε_n, b_ν + ε_n]`.
    pub ka: (usize, usize),
    /// `A_ν` in observer time.
    pub a: (f64, f64),
    /// Plateau of `d_{R,2}` on `I_ν`.
    pub plateau: f64,
    pub knots: KnotData,
    /// Levels `m = 2..n`.
    pub levels: Vec<LevelRecord>,
    pub final_: FinalRecord,
}

impl WindowPlan {
    /// Diagonal/off-diagonal of `P_{R,m}` and its derivative at local knot `j`.
    pub fn block(&self, m: usize, j: usize, l: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
        block_at(&self.levels, m, j, l)
    }
}

fn block_at(levels: &[LevelRecord], m: usize, j: usize, l: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut diag = Vec::with_capacity(m);
    let mut ddiag = Vec::with_capacity(m);
    let mut off = Vec::with_capacity(m - 1);
    let mut doff = Vec::with_capacity(m - 1);
    for level in (2..=m).rev() {
        let rec = &levels[level - 2];
        diag.push(rec.p_diag.values[j]);
        ddiag.push(rec.p_diag.slopes[j]);
        off.push(rec.p_off.values[j]);
        doff.push(rec.p_off.slopes[j]);
    }
    diag.push(l);
    ddiag.push(0.0);
    (diag, off, ddiag, doff)
}

/// The four-term ε formula (first level) snapped down to the grid.
///
/// `ε_2 = min{1/(2nM_2), (b̄−b)/2, (a−ā)/2, 1/(2n²)}`.
pub fn first_epsilon(n: usize, m2: f64, window: &Window, h: f64) -> Result<(f64, usize)> {
    let nf = n as f64;
    let raw = (1.0 / (2.0 * nf * m2))
        .min((window.j.1 - window.i.1) / 2.0)
        .min((window.i.0 - window.j.0) / 2.0)
        .min(1.0 / (2.0 * nf * nf));
    snap(raw, h, window.nu, 2)
}

/// The increment `δε_{m+1} = min{1/(4nM_{m+1}), 1/(4n²), (a−ε_m−ā)/2, (b̄−b−ε_m)/2}`
/// snapped down to the grid.
pub fn next_epsilon_increment(
    n: usize,
    m_next: f64,
    eps_m: f64,
    window: &Window,
    h: f64,
    level: usize,
) -> Result<(f64, usize)> {
    let nf = n as f64;
    let raw = (1.0 / (4.0 * nf * m_next))
        .min(1.0 / (4.0 * nf * nf))
        .min((window.i.0 - eps_m - window.j.0) / 2.0)
        .min((window.j.1 - window.i.1 - eps_m) / 2.0);
    snap(raw, h, window.nu, level)
}

fn snap(raw: f64, h: f64, nu: usize, m: usize) -> Result<(f64, usize)> {
    if !(raw > h * (1.0 + 1e-9)) {
        return Err(Error::Resolution { nu, m, delta: raw, h });
    }
    let steps = ((raw / h) * (1.0 + 1e-12)).floor() as usize;
    Ok((steps as f64 * h, steps))
}

/// Collar blend of a level: 1 on the inner span `[lo_in, hi_in]`, a
/// smoothstep over `[lo_out, lo_in]` and `[hi_in, hi_out]`, 0 outside
/// (local knot indices; `w` = band width in steps; `h` = step).
fn blend(j: usize, lo_in: usize, hi_in: usize, w: usize, h: f64) -> (f64, f64) {
    let (jf, w_f) = (j as f64, w as f64);
    if j >= lo_in && j <= hi_in {
        (1.0, 0.0)
    } else if j < lo_in {
        let start = lo_in as f64 - w_f;
        let (s, ds) = smoothstep((jf - start) / w_f);
        (s, ds / (w_f * h))
    } else {
        let end = hi_in as f64 + w_f;
        let (s, ds) = smoothstep((end - jf) / w_f);
        (s, -ds / (w_f * h))
    }
}

/// Plateau of `d_{R,2}` on `I_ν`: the next period's `∫σ̄` plus 2, spread
/// over `I_ν`, plus `n − 2` (the first window also pays the first period).
pub fn plateau_height(
    n: usize,
    window: &Window,
    t_seq: &[f64],
    tau: f64,
    t_bar0: f64,
    env: &BoundEnvelopes,
) -> Result<f64> {
    let nu = window.nu;
    if nu + 1 >= t_seq.len() {
        return Err(Error::Scenario(format!(
            "T sequence too short: window {nu} needs T_{}",
            nu + 1
        )));
    }
    let span = if nu == 1 {
        integrate(&env.sigma_bar, t_bar0, t_seq[2] + tau)?
    } else {
        integrate(&env.sigma_bar, t_seq[nu] + tau, t_seq[nu + 1] + tau)?
    };
    Ok((span + 2.0) / (window.i.1 - window.i.0) + n as f64 - 2.0)
}

/// Inputs shared by all windows of one synthesis run.
pub struct WindowContext<'a> {
    pub scenario: &'a Scenario,
    pub env: &'a BoundEnvelopes,
    pub obs: &'a TimeGrid,
    pub y: &'a SignalTrace,
    pub u: &'a SignalTrace,
    pub t_seq: &'a [f64],
    pub t_bar0: f64,
    pub lattices: &'a [SphereLattice],
}

/// Diagonal of the bordered block `P_m` (and its time derivative) from its
/// off-diagonal entries `off = (p_m, …, p_2)`, bottom-up:
/// `p_{k,1} = p_k²·D_{k−2}/D_{k−1} + L` with `D_k = det(P_k − I)` of the
/// entries already built, and the last entry `L`.
///
/// The determinants are carried in double-double arithmetic from the
/// rounded entries, so each new diagonal entry compensates the rounding of
/// the ones below it; the identity `D_m = (L−1)^m` then holds for the
/// stored matrix up to half an ulp of the top entry (relative to
/// `D_{m−1}/D_m`).  Evaluated pointwise, it keeps `P > I` for any
/// interpolant of the off-diagonals.  The derivative treats the ratio as
/// constant, as it is exactly.
pub fn bordered_diag(off: &[f64], off_dot: &[f64], l: f64) -> (Vec<f64>, Vec<f64>) {
    let m = off.len() + 1;
    let mut diag = vec![l; m];
    let mut ddiag = vec![0.0; m];
    let (mut d_prev2, mut d_prev) = (Dd::new(1.0), Dd::new(l) - Dd::new(1.0));
    for i in (0..m - 1).rev() {
        let ratio = d_prev2 / d_prev;
        let (p, pd) = (off[i], off_dot[i]);
        let p2 = Dd::prod(p, p);
        diag[i] = (p2 * ratio + Dd::new(l)).to_f64();
        ddiag[i] = 2.0 * p * pd * ratio.to_f64();
        let next = (Dd::new(diag[i]) - Dd::new(1.0)) * d_prev - p2 * d_prev2;
        d_prev2 = d_prev;
        d_prev = next;
    }
    (diag, ddiag)
}

/// Builds level 2: `d_{R,2}`, `p_{R,2}`, `p_{R,2,1}` on `J_ν`.
pub fn build_level2(
    ctx: &WindowContext,
    window: &Window,
    kd: &KnotData,
    plateau: f64,
) -> Result<LevelRecord> {
    let p = &ctx.scenario.params;
    let n = ctx.scenario.system.n();
    let (l, h) = (p.l, p.h);
    let len = kd.t.len();
    let m2 = kd.sigma_bar.iter().cloned().fold(0.0f64, f64::max);
    let (eps, e2) = first_epsilon(n, m2, window, h)?;
    let (ia, ib) = (window.ki.0 - window.kj.0, window.ki.1 - window.kj.0);
    let ai = n - 2; // a_{n−1}
    let mut d = Knots::with_len(len);
    let mut p_off = Knots::with_len(len);
    let mut p_diag = Knots::with_len(len);
    for j in 0..len {
        let (sb, sbd) = (kd.sigma_bar[j], kd.sigma_bar_dot[j]);
        let (s, ds) = if j + e2 < ia || j > ib + e2 { (0.0, 0.0) } else { blend(j, ia, ib, e2, h) };
        let lift = plateau + sb;
        d.values[j] = -sb + s * lift;
        d.slopes[j] = -sbd + ds * lift + s * sbd;
        if s > 0.0 {
            let a = kd.a[ai][j];
            if a.abs() < p.delta_a {
                return Err(Error::Division {
                    index: ai + 1,
                    t: kd.t[j],
                    value: a.abs(),
                    threshold: p.delta_a,
                });
            }
            let num = -l * s * lift;
            let dnum = -l * (ds * lift + s * sbd);
            let ad = kd.a_dot[ai][j];
            p_off.values[j] = num / a;
            p_off.slopes[j] = (dnum * a - num * ad) / (a * a);
        }
        let (pv, pd) = (p_off.values[j], p_off.slopes[j]);
        let (dg, dd) = bordered_diag(&[pv], &[pd], l);
        p_diag.values[j] = dg[0];
        p_diag.slopes[j] = dd[0];
    }
    let d_bar = Knots {
        values: d.values.iter().map(|v| v - 1.0).collect(),
        slopes: d.slopes.clone(),
    };
    Ok(LevelRecord {
        m: 2,
        eps,
        eps_steps: e2,
        level_max: m2,
        d,
        d_bar,
        p_off,
        p_diag,
        phi: None,
        bound: vec![0.0; len],
    })
}

/// Local knot range of the level-`m` collar `[a − ε_m, b + ε_m]`.
fn collar(window: &Window, steps: usize) -> (usize, usize) {
    let (ia, ib) = (window.ki.0 - window.kj.0, window.ki.1 - window.kj.0);
    (ia - steps, ib + steps)
}

/// Applies the lemma on the open collar of a level and returns (φ knots on
/// `J_ν`, raw bounds).  Outside the open collar `P = L·I` and
/// `d̄ ≤ −σ̄ − 1`, so `K^c` is empty and `φ = 1` exactly.
fn level_phi(
    ctx: &WindowContext,
    window: &Window,
    kd: &KnotData,
    levels: &[LevelRecord],
    m: usize,
    d_bar: &Knots,
    range: (usize, usize),
) -> Result<(Knots, Vec<f64>)> {
    let p = &ctx.scenario.params;
    let n = ctx.scenario.system.n();
    let len = kd.t.len();
    let mut bound = vec![0.0; len];
    let lattice = &ctx.lattices[m - 2];
    for j in (range.0 + 1)..range.1 {
        let (diag, off, ddiag, doff) = block_at(levels, m, j, p.l);
        let a_sup: Vec<f64> = (0..m - 1).map(|r| kd.a[n - m + r][j]).collect();
        let pt = LemmaPoint {
            t: kd.t[j],
            p_diag: &diag,
            p_off: &off,
            dp_diag: &ddiag,
            dp_off: &doff,
            a_sup: &a_sup,
            d_bar: d_bar.values[j],
            rho: kd.rho[j],
            sigma_bar: kd.sigma_bar[j],
        };
        bound[j] = lemma_bound(&pt, p.phi_rule, lattice, window.nu)?.c;
    }
    let forced: Vec<bool> = (0..len).map(|j| j <= range.0 || j >= range.1).collect();
    let values = smooth_phi(&bound, &forced);
    Ok((
        Knots {
            slopes: vec![0.0; len],
            values,
        },
        bound,
    ))
}

/// Induction step `m → m+1`: computes `φ_{R,m}`, `M_{m+1,ν}`, `ε_{m+1,ν}`
/// and the level-`(m+1)` record; stores `φ_{R,m}` into `levels[m−2]`.
pub fn induction_step(
    ctx: &WindowContext,
    window: &Window,
    kd: &KnotData,
    levels: &mut Vec<LevelRecord>,
) -> Result<()> {
    let p = &ctx.scenario.params;
    let n = ctx.scenario.system.n();
    let (l, h) = (p.l, p.h);
    let len = kd.t.len();
    let m = levels.len() + 1;
    let cur = levels.last().expect("level 2 present").clone();
    let range_m = collar(window, cur.eps_steps);
    let (phi, bound) = level_phi(ctx, window, kd, levels, m, &cur.d_bar, range_m)?;

    // M_{m+1}: deviation |d̄_m| + φ_m over J minus the open inner collar,
    // which is where the band integrals of the next level live.
    let m_next = (0..len)
        .filter(|&j| j <= range_m.0 || j >= range_m.1)
        .map(|j| cur.d_bar.values[j].abs() + phi.values[j])
        .fold(0.0f64, f64::max);
    let (delta, dsteps) = next_epsilon_increment(n, m_next, cur.eps, window, h, m + 1)?;
    let eps_steps = cur.eps_steps + dsteps;
    let eps = cur.eps + delta;
    {
        let last = levels.last_mut().expect("present");
        last.phi = Some(phi.clone());
        last.bound = bound;
    }

    let (ia, ib) = (window.ki.0 - window.kj.0, window.ki.1 - window.kj.0);
    let (lo_in, hi_in) = (ia - cur.eps_steps, ib + cur.eps_steps);
    let ai = n - m - 1; // a_{n−m}
    let mut d = Knots::with_len(len);
    let mut p_off = Knots::with_len(len);
    let p_diag = Knots::with_len(len);
    for j in 0..len {
        let (s, ds) = if j + eps_steps < ia || j > ib + eps_steps {
            (0.0, 0.0)
        } else {
            blend(j, lo_in, hi_in, dsteps, h)
        };
        let (dbv, dbs) = (cur.d_bar.values[j], cur.d_bar.slopes[j]);
        let (fv, fs) = (phi.values[j], phi.slopes[j]);
        d.values[j] = dbv - (1.0 - s) * fv;
        d.slopes[j] = dbs - (1.0 - s) * fs + ds * fv;
        if s > 0.0 {
            let a = kd.a[ai][j];
            if a.abs() < p.delta_a {
                return Err(Error::Division {
                    index: ai + 1,
                    t: kd.t[j],
                    value: a.abs(),
                    threshold: p.delta_a,
                });
            }
            let num = -s * fv;
            let dnum = -(ds * fv + s * fs);
            let ad = kd.a_dot[ai][j];
            p_off.values[j] = num / a;
            p_off.slopes[j] = (dnum * a - num * ad) / (a * a);
        }
    }
    let d_bar = Knots {
        values: d.values.iter().map(|v| v - 1.0).collect(),
        slopes: d.slopes.clone(),
    };
    levels.push(LevelRecord {
        m: m + 1,
        eps,
        eps_steps,
        level_max: m_next,
        d,
        d_bar,
        p_off,
        p_diag,
        phi: None,
        bound: vec![0.0; len],
    });
    for j in 0..len {
        let (_, off, _, doff) = block_at(levels, m + 1, j, l);
        let (dg, dd) = bordered_diag(&off, &doff, l);
        let rec = levels.last_mut().expect("present");
        rec.p_diag.values[j] = dg[0];
        rec.p_diag.slopes[j] = dd[0];
    }
    Ok(())
}

/// Runs the whole construction for one window.
pub fn plan_window(ctx: &WindowContext, window: &Window) -> Result<WindowPlan> {
    let p = &ctx.scenario.params;
    let n = ctx.scenario.system.n();
    let kd = knot_data(ctx.scenario, ctx.env, ctx.obs, ctx.y, ctx.u, window)?;
    let plateau = plateau_height(n, window, ctx.t_seq, p.tau, ctx.t_bar0, ctx.env)?;
    let mut levels = vec![build_level2(ctx, window, &kd, plateau)?];
    while levels.len() < n - 1 {
        induction_step(ctx, window, &kd, &mut levels)?;
    }
    let top = levels.last().expect("present");
    let range = collar(window, top.eps_steps);
    let len = range.1 - range.0 + 1;

    let mut d_bar = Knots::with_len(len);
    for (jj, j) in (range.0..=range.1).enumerate() {
        let t = kd.t[j];
        let g = 2.0 / (PI * (1.0 + t * t));
        let dg = -4.0 * t / (PI * (1.0 + t * t).powi(2));
        d_bar.values[jj] = top.d.values[j] - g;
        d_bar.slopes[jj] = top.d.slopes[j] - dg;
    }
    let mut bound = vec![0.0; len];
    let lattice = &ctx.lattices[n - 2];
    for jj in 1..len - 1 {
        let j = range.0 + jj;
        let (diag, off, ddiag, doff) = block_at(&levels, n, j, p.l);
        let a_sup: Vec<f64> = (0..n - 1).map(|r| kd.a[r][j]).collect();
        let pt = LemmaPoint {
            t: kd.t[j],
            p_diag: &diag,
            p_off: &off,
            dp_diag: &ddiag,
            dp_off: &doff,
            a_sup: &a_sup,
            d_bar: d_bar.values[jj],
            rho: kd.rho[j],
            sigma_bar: kd.sigma_bar[j],
        };
        bound[jj] = lemma_bound(&pt, p.phi_rule, lattice, window.nu)?.c;
    }
    let forced: Vec<bool> = (0..len).map(|jj| jj == 0 || jj == len - 1).collect();
    let phi = Knots {
        values: smooth_phi(&bound, &forced),
        slopes: vec![0.0; len],
    };
    let ka = (window.kj.0 + range.0, window.kj.0 + range.1);
    let eps = levels.iter().map(|r| r.eps).collect();
    Ok(WindowPlan {
        window: window.clone(),
        eps,
        ka,
        a: (ctx.obs.time(ka.0), ctx.obs.time(ka.1)),
        plateau,
        knots: kd,
        levels,
        final_: FinalRecord {
            range,
            d_bar,
            phi,
            bound,
        },
    })
}
