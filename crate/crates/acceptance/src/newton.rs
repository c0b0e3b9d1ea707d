//! Full Newton–Raphson load flow in polar form on the nodal admittance
//! matrix. Shares nothing with the sweep solver but the grid document.

use nalgebra::{Complex, DMatrix, DVector};
use syngrid_core::gridmodel::BusRole;
use syngrid_core::Syngrid;

type C = Complex<f64>;

#[derive(Debug, Clone)]
pub struct NewtonSolution {
    pub v: Vec<C>,
    pub iterations: usize,
    pub max_mismatch: f64,
}

/// Series impedance of every branch in per unit on a 1 MVA base, as
/// (from, to, z).
fn branches(grid: &Syngrid) -> Result<Vec<(usize, usize, C)>, String> {
    let mut out = Vec::new();
    for l in &grid.lines {
        let name = l.cable.as_ref().ok_or(format!("line {} unsized", l.id))?;
        let c = grid
            .cables
            .iter()
            .find(|c| &c.name == name)
            .ok_or(format!("line {}: unknown cable", l.id))?;
        let vn = grid.buses[l.from_bus].vn_kv;
        let ohm = C::new(c.r_ohm_per_km, c.x_ohm_per_km) * (l.length_m / 1000.0 / f64::from(l.parallel));
        out.push((l.from_bus, l.to_bus, ohm / (vn * vn)));
    }
    for t in &grid.transformers {
        // |z| = v_k on the rating, resistive part from copper losses
        let zk = t.v_k_percent / 100.0;
        let rk = t.p_cu_percent / 100.0;
        let xk = (zk * zk - rk * rk).max(0.0).sqrt();
        out.push((t.hv_bus, t.lv_bus, C::new(rk, xk) / t.s_r_mva));
    }
    Ok(out)
}

pub fn admittance_matrix(grid: &Syngrid) -> Result<DMatrix<C>, String> {
    let n = grid.buses.len();
    let mut y = DMatrix::from_element(n, n, C::new(0.0, 0.0));
    for (a, b, z) in branches(grid)? {
        let yb = C::new(1.0, 0.0) / z;
        y[(a, a)] += yb;
        y[(b, b)] += yb;
        y[(a, b)] -= yb;
        y[(b, a)] -= yb;
    }
    Ok(y)
}

/// Solve with the slack at 1∠0 pu and loads as constant net active power.
pub fn newton_power_flow(grid: &Syngrid, tol: f64, max_iter: usize) -> Result<NewtonSolution, String> {
    let n = grid.buses.len();
    let slack = grid
        .buses
        .iter()
        .position(|b| b.role == BusRole::HvSlack)
        .ok_or("no slack bus")?;
    let y = admittance_matrix(grid)?;
    let (g, b) = (y.map(|c| c.re), y.map(|c| c.im));

    let mut p_spec = vec![0.0; n];
    for l in &grid.loads {
        p_spec[l.bus] -= (l.p_kw - l.pv_kw) / 1000.0;
    }
    let pq: Vec<usize> = (0..n).filter(|&i| i != slack).collect();
    let m = pq.len();
    let mut vm = vec![1.0; n];
    let mut va = vec![0.0; n];

    let injections = |vm: &[f64], va: &[f64]| -> (Vec<f64>, Vec<f64>) {
        let mut p = vec![0.0; n];
        let mut q = vec![0.0; n];
        for i in 0..n {
            for k in 0..n {
                if g[(i, k)] == 0.0 && b[(i, k)] == 0.0 {
                    continue;
                }
                let t = va[i] - va[k];
                p[i] += vm[i] * vm[k] * (g[(i, k)] * t.cos() + b[(i, k)] * t.sin());
                q[i] += vm[i] * vm[k] * (g[(i, k)] * t.sin() - b[(i, k)] * t.cos());
            }
        }
        (p, q)
    };

    for it in 0..=max_iter {
        let (p, q) = injections(&vm, &va);
        let mut f = DVector::zeros(2 * m);
        for (r, &i) in pq.iter().enumerate() {
            f[r] = p[i] - p_spec[i];
            f[m + r] = q[i];
        }
        let worst = f.amax();
        if worst < tol {
            let v = (0..n).map(|i| C::from_polar(vm[i], va[i])).collect();
            return Ok(NewtonSolution {
                v,
                iterations: it,
                max_mismatch: worst,
            });
        }
        if it == max_iter {
            break;
        }
        // Jacobian blocks dP/dθ, dP/d|V|, dQ/dθ, dQ/d|V|
        let mut j = DMatrix::zeros(2 * m, 2 * m);
        for (r, &i) in pq.iter().enumerate() {
            for (c, &k) in pq.iter().enumerate() {
                if i == k {
                    j[(r, c)] = -q[i] - b[(i, i)] * vm[i] * vm[i];
                    j[(r, m + c)] = p[i] / vm[i] + g[(i, i)] * vm[i];
                    j[(m + r, c)] = p[i] - g[(i, i)] * vm[i] * vm[i];
                    j[(m + r, m + c)] = q[i] / vm[i] - b[(i, i)] * vm[i];
                } else {
                    let t = va[i] - va[k];
                    let (gs, bc) = (g[(i, k)] * t.sin(), b[(i, k)] * t.cos());
                    let (gc, bs) = (g[(i, k)] * t.cos(), b[(i, k)] * t.sin());
                    j[(r, c)] = vm[i] * vm[k] * (gs - bc);
                    j[(r, m + c)] = vm[i] * (gc + bs);
                    j[(m + r, c)] = -vm[i] * vm[k] * (gc + bs);
                    j[(m + r, m + c)] = vm[i] * (gs - bc);
                }
            }
        }
        let dx = j.lu().solve(&(-f)).ok_or("singular Jacobian")?;
        for (r, &i) in pq.iter().enumerate() {
            va[i] += dx[r];
            vm[i] += dx[m + r];
        }
    }
    Err(format!("no convergence in {max_iter} iterations"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::random_radial;

    /// Two buses through one impedance: |V2| solves
    /// u^2 - u + r P = 0 for a purely resistive branch with unit sending voltage.
    #[test]
    fn resistive_two_bus_closed_form() {
        let mut g = random_radial(1, 5);
        // collapse to slack -> one LV bus through the HV/MV transformer only
        g.lines.clear();
        g.lv_grids.clear();
        g.loads.clear();
        g.transformers.truncate(1);
        g.buses.truncate(2);
        g.transformers[0].v_k_percent = 1.0;
        g.transformers[0].p_cu_percent = 1.0;
        g.transformers[0].s_r_mva = 1.0;
        g.loads.push(syngrid_core::gridmodel::Load {
            id: 0,
            bus: 1,
            n_consumers: 1,
            s_r_kva_per_consumer: 5.0,
            p_kw: 500.0,
            has_pv: false,
            pv_kw: 0.0,
            building: None,
        });
        let sol = newton_power_flow(&g, 1e-13, 30).unwrap();
        let r = 0.01;
        let u = (1.0 + (1.0 - 4.0 * r * 0.5f64).sqrt()) / 2.0;
        assert!((sol.v[1].norm() - u).abs() < 1e-12);
        assert!(sol.v[1].im.abs() < 1e-12);
    }
}
