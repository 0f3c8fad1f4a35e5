//! CSV artifacts.  Every writer emits a fixed header followed by one row
//! per grid point; numbers use Rust's shortest round-trip exponent format,
//! so equal runs give byte-identical files.

use std::io::Write;

use delobs_core::{CompositeEstimate, GainSchedule, ObserverRun, PlantRun};

use crate::error::Result;

fn f(v: f64) -> String {
    format!("{v:e}")
}

fn numbered(prefix: &str, n: usize) -> impl Iterator<Item = String> + '_ {
    (1..=n).map(move |i| format!("{prefix}{i}"))
}

/// Columns `t, x1..xn, y, u`.
pub fn write_plant<W: Write>(out: W, plant: &PlantRun) -> Result<()> {
    let n = plant.x.dim();
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string()];
    header.extend(numbered("x", n));
    header.extend(["y".to_string(), "u".to_string()]);
    w.write_record(&header)?;
    let g = plant.x.grid();
    for k in 0..g.count() {
        let mut row = vec![f(g.time(k))];
        row.extend(plant.x.at(k).iter().map(|&v| f(v)));
        row.push(f(plant.y.at(k)[0]));
        row.push(f(plant.u.at(k)[0]));
        w.write_record(&row)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Columns `t, P11..Pnn` (row-major), `d, d_bar, phi, kappa, window_id`
/// where `window_id` is the ν of the support `A_ν` containing `t` (0 off
/// the supports).
pub fn write_schedule<W: Write>(out: W, sched: &GainSchedule) -> Result<()> {
    let n = sched.n;
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string()];
    for i in 1..=n {
        for j in 1..=n {
            header.push(format!("P{i}{j}"));
        }
    }
    header.extend(["d", "d_bar", "phi", "kappa", "window_id"].map(String::from));
    w.write_record(&header)?;
    for t in sched.grid.times().filter(|&t| t >= sched.t_bar0 - 1e-9 && t <= sched.t_end + 1e-9) {
        let (diag, off) = sched.p_at(t)?;
        let mut row = vec![f(t)];
        for i in 0..n {
            for j in 0..n {
                let v = if i == j {
                    diag[i]
                } else if j == i + 1 {
                    off[i]
                } else if i == j + 1 {
                    off[j]
                } else {
                    0.0
                };
                row.push(f(v));
            }
        }
        row.push(f(sched.d.eval(t)?));
        row.push(f(sched.d_bar.eval(t)?));
        row.push(f(sched.phi.eval(t)?));
        row.push(f(sched.kappa.eval(t)?));
        row.push(sched.window_at(t).map_or(0, |p| p.window.nu).to_string());
        w.write_record(&row)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Columns `t, z1..zn, e_norm, envelope, xi, in_tube`.
pub fn write_observer<W: Write>(out: W, run: &ObserverRun) -> Result<()> {
    let n = run.z.dim();
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string()];
    header.extend(numbered("z", n));
    header.extend(["e_norm", "envelope", "xi", "in_tube"].map(String::from));
    w.write_record(&header)?;
    let g = run.z.grid();
    let tube = run.in_tube();
    for k in 0..g.count() {
        let mut row = vec![f(g.time(k))];
        row.extend(run.z.at(k).iter().map(|&v| f(v)));
        row.push(f(run.e_norm[k]));
        row.push(f(run.bound.at(k)[0]));
        row.push(f(run.xi_used));
        row.push(if tube[k] { "1" } else { "0" }.to_string());
        w.write_record(&row)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Columns `t, Z1..Zn, active_m, e_norm, stage_bound`, where `stage_bound`
/// is the guaranteed error level `1/m` of the active stage.
pub fn write_switching<W: Write>(out: W, est: &CompositeEstimate) -> Result<()> {
    let n = est.z.dim();
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string()];
    header.extend(numbered("Z", n));
    header.extend(["active_m", "e_norm", "stage_bound"].map(String::from));
    w.write_record(&header)?;
    let g = est.z.grid();
    for k in 0..g.count() {
        let m = est.active[k];
        let mut row = vec![f(g.time(k))];
        row.extend(est.z.at(k).iter().map(|&v| f(v)));
        row.push(m.to_string());
        row.push(f(est.e_norm[k]));
        row.push(f(1.0 / m as f64));
        w.write_record(&row)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}
