//! Backward/forward sweep power flow and three-phase short-circuit currents.
//!
//! Per-unit system: 1 MVA base, voltage base per bus equal to `vn_kv`.
//! Loads are constant power at unity power factor; PV is negative load.
//! The network below each MV/LV transformer is swept as an independent
//! block, in parallel when the `parallel` feature is enabled.

use crate::error::{Error, Result};
use crate::gridmodel::{Branch, Syngrid, Topology, VoltageLevel};
use crate::par;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

pub const S_BASE_MVA: f64 = 1.0;
const SQRT3: f64 = 1.732_050_807_568_877_2;

/// Series impedance of a transformer on the system base.
pub fn transformer_z_pu(s_r_mva: f64, v_k_percent: f64, p_cu_percent: f64) -> Complex64 {
    let r = p_cu_percent / 100.0;
    let z = v_k_percent / 100.0;
    let x = (z * z - r * r).max(0.0).sqrt();
    Complex64::new(r, x) * (S_BASE_MVA / s_r_mva)
}

/// Impedance base in ohm for a nominal voltage in kV.
pub fn z_base_ohm(vn_kv: f64) -> f64 {
    vn_kv * vn_kv / S_BASE_MVA
}

/// Branch data in tree form, shared by power flow and short circuit.
#[derive(Debug, Clone)]
pub struct RadialNetwork {
    pub topo: Topology,
    /// Impedance of the branch feeding each bus (zero at the slack).
    pub z: Vec<Complex64>,
    /// Resistance share of `z` that belongs to cables.
    pub r_line: Vec<f64>,
    /// Net complex load per bus, pu.
    pub s_load: Vec<Complex64>,
    upper: Vec<usize>,
    blocks: Vec<Vec<usize>>,
    pos: Vec<usize>,
}

impl RadialNetwork {
    pub fn new(grid: &Syngrid) -> Result<RadialNetwork> {
        let topo = grid.topology()?;
        let n = grid.buses.len();
        let mut z = vec![Complex64::new(0.0, 0.0); n];
        let mut r_line = vec![0.0; n];
        for &b in &topo.order {
            let Some((_, br)) = topo.parent[b] else { continue };
            match br {
                Branch::Line(id) => {
                    let l = &grid.lines[id];
                    let name = l.cable.as_deref().ok_or_else(|| {
                        Error::validation(format!("line {id} has no cable type; size the grid first"))
                    })?;
                    let c = grid
                        .cable(name)
                        .ok_or_else(|| Error::validation(format!("line {id}: unknown cable type {name:?}")))?;
                    let zb = z_base_ohm(grid.buses[b].vn_kv);
                    let km = l.length_m / 1000.0 / l.parallel as f64;
                    z[b] = Complex64::new(c.r_ohm_per_km * km, c.x_ohm_per_km * km) / zb;
                    r_line[b] = z[b].re;
                }
                Branch::Transformer(id) => {
                    let t = &grid.transformers[id];
                    if !(t.s_r_mva > 0.0) {
                        return Err(Error::validation(format!("transformer {id} has no rating; size the grid first")));
                    }
                    z[b] = transformer_z_pu(t.s_r_mva, t.v_k_percent, t.p_cu_percent);
                }
            }
        }
        let mut s_load = vec![Complex64::new(0.0, 0.0); n];
        for l in &grid.loads {
            s_load[l.bus] += Complex64::new(l.net_kw() / 1000.0 / S_BASE_MVA, 0.0);
        }

        // blocks: subtrees below MV/LV transformers, in breadth-first order
        let mut block_of = vec![usize::MAX; n];
        let mut blocks: Vec<Vec<usize>> = Vec::new();
        let mut upper = Vec::new();
        for &b in &topo.order {
            let parent_block = topo.parent[b].map(|(p, _)| block_of[p]);
            match (parent_block, topo.parent[b]) {
                (Some(k), _) if k != usize::MAX => {
                    block_of[b] = k;
                    blocks[k].push(b);
                }
                (_, Some((_, Branch::Transformer(_)))) if grid.buses[b].level == VoltageLevel::LV => {
                    block_of[b] = blocks.len();
                    blocks.push(vec![b]);
                }
                _ => upper.push(b),
            }
        }
        let mut pos = vec![0; n];
        for blk in &blocks {
            for (i, &b) in blk.iter().enumerate() {
                pos[b] = i;
            }
        }
        Ok(RadialNetwork {
            topo,
            z,
            r_line,
            s_load,
            upper,
            blocks,
            pos,
        })
    }

    fn parent(&self, b: usize) -> Option<usize> {
        self.topo.parent[b].map(|(p, _)| p)
    }

    /// Branch currents from bus voltages (leaves to root).
    fn backward(&self, v: &[Complex64]) -> Vec<Complex64> {
        let inj = |b: usize| (self.s_load[b] / v[b]).conj();
        let block_j = par::map(&self.blocks, |blk| {
            let mut j: Vec<Complex64> = blk.iter().map(|&b| inj(b)).collect();
            for &b in blk.iter().skip(1).rev() {
                let p = self.pos[self.parent(b).unwrap()];
                let jb = j[self.pos[b]];
                j[p] += jb;
            }
            j
        });
        let mut j = vec![Complex64::new(0.0, 0.0); v.len()];
        for &b in &self.upper {
            j[b] = inj(b);
        }
        for (blk, bj) in self.blocks.iter().zip(block_j) {
            for (&b, x) in blk.iter().zip(bj) {
                j[b] = x;
            }
            let (root, jr) = (blk[0], j[blk[0]]);
            j[self.parent(root).unwrap()] += jr;
        }
        for &b in self.upper.iter().skip(1).rev() {
            let p = self.parent(b).unwrap();
            let jb = j[b];
            j[p] += jb;
        }
        j
    }

    /// Bus voltages from branch currents (root to leaves).
    fn forward(&self, j: &[Complex64], v_slack: Complex64) -> Vec<Complex64> {
        let mut v = vec![Complex64::new(0.0, 0.0); j.len()];
        v[self.topo.root] = v_slack;
        for &b in self.upper.iter().skip(1) {
            v[b] = v[self.parent(b).unwrap()] - self.z[b] * j[b];
        }
        let block_v = par::map(&self.blocks, |blk| {
            let mut out = Vec::with_capacity(blk.len());
            let head = v[self.parent(blk[0]).unwrap()];
            for (i, &b) in blk.iter().enumerate() {
                let up = if i == 0 { head } else { out[self.pos[self.parent(b).unwrap()]] };
                out.push(up - self.z[b] * j[b]);
            }
            out
        });
        for (blk, bv) in self.blocks.iter().zip(block_v) {
            for (&b, x) in blk.iter().zip(bv) {
                v[b] = x;
            }
        }
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerFlowOptions {
    /// Convergence threshold on the largest voltage update, pu.
    pub tolerance: f64,
    pub max_iter: u32,
    /// Extra sweeps after convergence, tightening the final state.
    pub polish_sweeps: u32,
}

impl Default for PowerFlowOptions {
    fn default() -> Self {
        PowerFlowOptions {
            tolerance: 1e-6,
            max_iter: 100,
            polish_sweeps: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSummary {
    /// `"0.4 kV"` for a voltage level, `"16.0/0.4 kV"` for a transformer class.
    pub label: String,
    pub load_mw: f64,
    pub load_mvar: f64,
    pub generation_mw: f64,
    pub generation_mvar: f64,
    pub flow_mw: f64,
    pub flow_mvar: f64,
    pub losses_mw: f64,
    pub losses_mvar: f64,
}

impl LevelSummary {
    fn new(label: String) -> Self {
        LevelSummary {
            label,
            load_mw: 0.0,
            load_mvar: 0.0,
            generation_mw: 0.0,
            generation_mvar: 0.0,
            flow_mw: 0.0,
            flow_mvar: 0.0,
            losses_mw: 0.0,
            losses_mvar: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub converged: bool,
    pub iterations: u32,
    pub max_mismatch_pu: f64,
    /// Bus with the largest final voltage update.
    pub worst_bus: usize,
    pub vm_pu: Vec<f64>,
    pub va_deg: Vec<f64>,
    /// Per line: current in kA and percent of the installed ampacity.
    pub line_current_ka: Vec<f64>,
    pub line_loading_pct: Vec<f64>,
    pub transformer_loading_pct: Vec<f64>,
    pub slack_p_mw: f64,
    pub slack_q_mvar: f64,
    pub total_load_mw: f64,
    pub total_generation_mw: f64,
    pub total_losses_mw: f64,
    pub total_losses_mvar: f64,
    pub levels: Vec<LevelSummary>,
}

impl SolveReport {
    /// `slack + generation - load - losses`, in MW.
    pub fn balance_residual_mw(&self) -> f64 {
        self.slack_p_mw + self.total_generation_mw - self.total_load_mw - self.total_losses_mw
    }

    /// Plain-text summary grouped as Load / Generation / Flow / Losses.
    pub fn table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "Power flow: converged={} iterations={} max_mismatch={:.3e} pu", self.converged, self.iterations, self.max_mismatch_pu);
        let _ = writeln!(s, "{:<12} {:<14} {:>14} {:>14}", "Quantity", "Level", "P", "Q");
        let rows: [(&str, fn(&LevelSummary) -> (f64, f64)); 4] = [
            ("Load", |l| (l.load_mw, l.load_mvar)),
            ("Generation", |l| (l.generation_mw, l.generation_mvar)),
            ("Flow", |l| (l.flow_mw, l.flow_mvar)),
            ("Losses", |l| (l.losses_mw, l.losses_mvar)),
        ];
        for (name, f) in rows {
            for l in &self.levels {
                let (p, q) = f(l);
                if p == 0.0 && q == 0.0 {
                    continue;
                }
                let _ = writeln!(s, "{:<12} {:<14} {:>14} {:>14}", name, l.label, fmt_p(p), fmt_q(q));
            }
        }
        let _ = writeln!(s, "{:<12} {:<14} {:>14} {:>14}", "Losses", "All levels", fmt_p(self.total_losses_mw), fmt_q(self.total_losses_mvar));
        let _ = writeln!(s, "{:<12} {:<14} {:>14} {:>14}", "Slack", "", fmt_p(self.slack_p_mw), fmt_q(self.slack_q_mvar));
        s
    }
}

fn fmt_p(mw: f64) -> String {
    if mw.abs() >= 1.0 {
        format!("{mw:.2} MW")
    } else {
        format!("{:.2} kW", mw * 1000.0)
    }
}

fn fmt_q(mvar: f64) -> String {
    if mvar.abs() >= 1.0 {
        format!("{mvar:.2} Mvar")
    } else {
        format!("{:.2} kvar", mvar * 1000.0)
    }
}

fn kv_label(kv: f64) -> String {
    format!("{kv:.1} kV")
}

/// Radial power flow from a flat start with the slack at 1.0 pu.
pub fn power_flow(grid: &Syngrid, opts: &PowerFlowOptions) -> Result<SolveReport> {
    let net = RadialNetwork::new(grid)?;
    let n = grid.buses.len();
    let v_slack = Complex64::new(1.0, 0.0);
    let mut v = vec![v_slack; n];
    let mut j = vec![Complex64::new(0.0, 0.0); n];
    let mut iterations = 0;
    let mut converged = false;
    let (mut mismatch, mut worst) = (f64::INFINITY, net.topo.root);
    let mut polish = 0;
    while iterations < opts.max_iter || converged {
        j = net.backward(&v);
        let v_new = net.forward(&j, v_slack);
        let (m, w) = v_new
            .iter()
            .zip(&v)
            .enumerate()
            .map(|(i, (a, b))| ((a - b).norm(), i))
            .fold((0.0, net.topo.root), |acc, x| if x.0 > acc.0 { x } else { acc });
        v = v_new;
        if converged {
            polish += 1;
            if polish >= opts.polish_sweeps || m == 0.0 {
                break;
            }
            continue;
        }
        iterations += 1;
        (mismatch, worst) = (m, w);
        if m < opts.tolerance {
            converged = true;
            if opts.polish_sweeps == 0 {
                break;
            }
        }
    }
    // currents consistent with the final voltages
    if converged {
        j = net.backward(&v);
        v = net.forward(&j, v_slack);
    }
    Ok(summarize(grid, &net, &v, &j, converged, iterations, mismatch, worst))
}

#[allow(clippy::too_many_arguments)]
fn summarize(
    grid: &Syngrid,
    net: &RadialNetwork,
    v: &[Complex64],
    j: &[Complex64],
    converged: bool,
    iterations: u32,
    mismatch: f64,
    worst: usize,
) -> SolveReport {
    let mut levels: Vec<LevelSummary> = Vec::new();
    let level_idx = |label: String, levels: &mut Vec<LevelSummary>| -> usize {
        match levels.iter().position(|l| l.label == label) {
            Some(i) => i,
            None => {
                levels.push(LevelSummary::new(label));
                levels.len() - 1
            }
        }
    };
    let mut vkv: Vec<f64> = grid.buses.iter().map(|b| b.vn_kv).collect();
    vkv.sort_by(|a, b| a.total_cmp(b));
    vkv.dedup();
    for kv in &vkv {
        level_idx(kv_label(*kv), &mut levels);
    }

    let (mut total_load, mut total_gen) = (0.0, 0.0);
    for l in &grid.loads {
        let k = level_idx(kv_label(grid.buses[l.bus].vn_kv), &mut levels);
        levels[k].load_mw += l.p_kw / 1000.0;
        levels[k].generation_mw += l.pv_kw / 1000.0;
        total_load += l.p_kw / 1000.0;
        total_gen += l.pv_kw / 1000.0;
    }

    let mut line_current_ka = vec![0.0; grid.lines.len()];
    let mut line_loading_pct = vec![0.0; grid.lines.len()];
    let mut transformer_loading_pct = vec![0.0; grid.transformers.len()];
    let (mut loss_p, mut loss_q) = (0.0, 0.0);
    for &b in &net.topo.order {
        let Some((p, br)) = net.topo.parent[b] else { continue };
        let loss = net.z[b] * j[b].norm_sqr() * S_BASE_MVA;
        let send = v[p] * j[b].conj() * S_BASE_MVA;
        loss_p += loss.re;
        loss_q += loss.im;
        let k = match br {
            Branch::Line(id) => {
                let kv = grid.buses[b].vn_kv;
                let i_ka = j[b].norm() * S_BASE_MVA / (SQRT3 * kv);
                line_current_ka[id] = i_ka;
                let l = &grid.lines[id];
                if let Some(c) = l.cable.as_deref().and_then(|c| grid.cable(c)) {
                    line_loading_pct[id] = 100.0 * i_ka / (c.i_m_ka * l.parallel as f64);
                }
                level_idx(kv_label(kv), &mut levels)
            }
            Branch::Transformer(id) => {
                let t = &grid.transformers[id];
                transformer_loading_pct[id] = 100.0 * send.norm() / t.s_r_mva;
                let label = format!("{:.1}/{:.1} kV", grid.buses[t.hv_bus].vn_kv, grid.buses[t.lv_bus].vn_kv);
                level_idx(label, &mut levels)
            }
        };
        levels[k].flow_mw += send.re;
        levels[k].flow_mvar += send.im;
        levels[k].losses_mw += loss.re;
        levels[k].losses_mvar += loss.im;
    }

    let root = net.topo.root;
    let slack = v[root] * j[root].conj() * S_BASE_MVA;
    SolveReport {
        converged,
        iterations,
        max_mismatch_pu: mismatch,
        worst_bus: worst,
        vm_pu: v.iter().map(|x| x.norm()).collect(),
        va_deg: v.iter().map(|x| x.arg().to_degrees()).collect(),
        line_current_ka,
        line_loading_pct,
        transformer_loading_pct,
        slack_p_mw: slack.re,
        slack_q_mvar: slack.im,
        total_load_mw: total_load,
        total_generation_mw: total_gen,
        total_losses_mw: loss_p,
        total_losses_mvar: loss_q,
        levels,
    }
}

/// Peak factor `1.02 + 0.98 * exp(-3 R / X)`.
pub fn kappa(r: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return if r > 0.0 { 1.02 } else { 2.0 };
    }
    1.02 + 0.98 * (-3.0 * r / x).exp()
}

/// Initial symmetrical short-circuit current in kA: `c * V_n / (sqrt(3) |Z|)`.
pub fn initial_current_ka(c: f64, vn_kv: f64, z_ohm: f64) -> f64 {
    c * vn_kv / (SQRT3 * z_ohm)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourceImpedance {
    /// Short-circuit power of the upstream network at the slack bus.
    pub s_k_mva: f64,
    pub r_over_x: f64,
}

impl Default for SourceImpedance {
    fn default() -> Self {
        SourceImpedance {
            s_k_mva: 3000.0,
            r_over_x: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShortCircuitOptions {
    pub c_min: f64,
    pub c_max: f64,
    /// Cable resistance multiplier for the minimum current.
    pub hot_conductor_factor: f64,
    /// `None` models an ideal slack, making a fault there singular.
    pub source: Option<SourceImpedance>,
}

impl Default for ShortCircuitOptions {
    fn default() -> Self {
        ShortCircuitOptions {
            c_min: 0.95,
            c_max: 1.10,
            hot_conductor_factor: 1.5,
            source: Some(SourceImpedance::default()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BusFault {
    pub bus: usize,
    pub vn_kv: f64,
    /// Thevenin impedance, pu on the system base.
    pub z_pu: [f64; 2],
    pub z_ohm: f64,
    pub ik_max_ka: f64,
    pub ik_min_ka: f64,
    pub ip_ka: f64,
    pub kappa: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultLevel {
    pub label: String,
    pub grounding: String,
    pub min_current_ka: f64,
    pub max_peak_current_ka: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultReport {
    pub grounding: String,
    pub buses: Vec<BusFault>,
    pub levels: Vec<FaultLevel>,
}

impl FaultReport {
    pub fn table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<10} {:<10} {:>20} {:>26}", "Level", "Grounding", "Minimum current [kA]", "Maximum peak current [kA]");
        for l in &self.levels {
            let _ = writeln!(s, "{:<10} {:<10} {:>20.3} {:>26.3}", l.label, l.grounding, l.min_current_ka, l.max_peak_current_ka);
        }
        s
    }
}

/// Three-phase bolted fault at every bus.
pub fn short_circuit(grid: &Syngrid, opts: &ShortCircuitOptions) -> Result<FaultReport> {
    let net = RadialNetwork::new(grid)?;
    let n = grid.buses.len();
    let z_src = match opts.source {
        Some(s) => {
            let mag = S_BASE_MVA / s.s_k_mva;
            let x = mag / (1.0 + s.r_over_x * s.r_over_x).sqrt();
            Complex64::new(x * s.r_over_x, x)
        }
        None => Complex64::new(0.0, 0.0),
    };
    let mut z_max = vec![Complex64::new(0.0, 0.0); n];
    let mut z_min = vec![Complex64::new(0.0, 0.0); n];
    for &b in &net.topo.order {
        match net.topo.parent[b] {
            None => {
                z_max[b] = z_src;
                z_min[b] = z_src;
            }
            Some((p, _)) => {
                z_max[b] = z_max[p] + net.z[b];
                z_min[b] = z_min[p] + net.z[b] + net.r_line[b] * (opts.hot_conductor_factor - 1.0);
            }
        }
    }
    let mut buses = Vec::with_capacity(n);
    for b in 0..n {
        let zm = z_max[b].norm();
        if zm == 0.0 {
            return Err(Error::SingularFault { bus: b });
        }
        let kv = grid.buses[b].vn_kv;
        let zb = z_base_ohm(kv);
        let ik_max = initial_current_ka(opts.c_max, kv, zm * zb);
        let ik_min = initial_current_ka(opts.c_min, kv, z_min[b].norm() * zb);
        let k = kappa(z_max[b].re, z_max[b].im);
        buses.push(BusFault {
            bus: b,
            vn_kv: kv,
            z_pu: [z_max[b].re, z_max[b].im],
            z_ohm: zm * zb,
            ik_max_ka: ik_max,
            ik_min_ka: ik_min,
            ip_ka: k * 2f64.sqrt() * ik_max,
            kappa: k,
        });
    }
    let mut kvs: Vec<f64> = grid.buses.iter().map(|b| b.vn_kv).collect();
    kvs.sort_by(|a, b| a.total_cmp(b));
    kvs.dedup();
    let levels = kvs
        .iter()
        .map(|&kv| {
            let at = buses.iter().filter(|f| f.vn_kv == kv);
            FaultLevel {
                label: kv_label(kv),
                grounding: "Direct".into(),
                min_current_ka: at.clone().map(|f| f.ik_min_ka).fold(f64::INFINITY, f64::min),
                max_peak_current_ka: at.map(|f| f.ip_ka).fold(0.0, f64::max),
            }
        })
        .collect();
    Ok(FaultReport {
        grounding: "Direct".into(),
        buses,
        levels,
    })
}
