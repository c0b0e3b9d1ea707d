//! Electrical parameters from peak demand.
//!
//! Consumer counts are aggregated from the leaves towards the slack. Each
//! branch carries the diversified peak `P_m = n * S_r * CF(n)` of the
//! consumers below it; lines get the smallest adequate catalog cable and
//! transformers an empirical rating.

use crate::error::{Error, Result};
use crate::gridmodel::{Branch, CableType, Syngrid, Topology};
use crate::profiles::CfTable;
use log::warn;
use serde::{Deserialize, Serialize};

const DEFAULT_CATALOG: &str = include_str!("../data/cable_catalog.json");

pub fn default_catalog() -> Vec<CableType> {
    serde_json::from_str(DEFAULT_CATALOG).expect("bundled catalog is valid")
}

/// Parse a catalog file: a JSON array of cable types.
pub fn load_catalog(json: &str) -> Result<Vec<CableType>> {
    let cables: Vec<CableType> = serde_json::from_str(json)?;
    if cables.is_empty() {
        return Err(Error::validation("cable catalog is empty"));
    }
    for c in &cables {
        if !(c.i_m_ka > 0.0) || c.r_ohm_per_km < 0.0 || c.x_ohm_per_km < 0.0 || !(c.v_op_kv > 0.0) {
            return Err(Error::validation(format!("cable {}: needs i_m, v_op > 0 and r, x >= 0", c.name)));
        }
    }
    Ok(cables)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizingParams {
    pub s_r_kva: f64,
    pub cod: f64,
    /// Maximum voltage drop per line at peak load, percent per km.
    pub typical_drop_pct_per_km: f64,
    pub max_parallel: u32,
}

impl Default for SizingParams {
    fn default() -> Self {
        SizingParams {
            s_r_kva: 5.0,
            cod: 1.25,
            typical_drop_pct_per_km: 10.0,
            max_parallel: 4,
        }
    }
}

/// Subtree sums over a rooted tree. `order` lists parents before children;
/// the edge into node v carries `out[v]`.
pub fn aggregate_subtree(order: &[usize], parent: &[Option<usize>], own: &[u64]) -> Vec<u64> {
    let mut out = own.to_vec();
    for &v in order.iter().rev() {
        if let Some(p) = parent[v] {
            out[p] += out[v];
        }
    }
    out
}

/// Consumers below each bus (inclusive), i.e. carried by the branch feeding it.
pub fn aggregate_consumers(grid: &Syngrid, topo: &Topology) -> Result<Vec<u64>> {
    let mut own = vec![0u64; grid.buses.len()];
    for l in &grid.loads {
        if l.bus >= own.len() {
            return Err(Error::Integrity(format!("load {} references missing bus {}", l.id, l.bus)));
        }
        own[l.bus] += l.n_consumers as u64;
    }
    let parent: Vec<Option<usize>> = topo.parent.iter().map(|p| p.map(|(b, _)| b)).collect();
    Ok(aggregate_subtree(&topo.order, &parent, &own))
}

/// Diversified peak `n * s_r * CF(n)` in kW.
pub fn peak_power(n: u64, s_r_kva: f64, cf: &CfTable) -> Result<f64> {
    if n == 0 {
        return Err(Error::Domain("peak power needs at least one consumer".into()));
    }
    Ok(n as f64 * s_r_kva * cf.cf_at(n)?)
}

/// Per-phase current in A for a three-phase active power in kW at `v_n_kv`.
pub fn line_current(p_kw: f64, v_n_kv: f64) -> f64 {
    (p_kw * 1000.0) / (3f64.sqrt() * v_n_kv * 1000.0)
}

/// Whether a cable's operating voltage suits a nominal voltage.
pub fn in_voltage_window(cable: &CableType, v_n_kv: f64) -> bool {
    0.5 * v_n_kv <= cable.v_op_kv && cable.v_op_kv <= 1.5 * v_n_kv
}

/// Cables in the voltage window with `i_m >= cod * i`, smallest `i_m` first
/// (ties by name).
fn adequate<'a>(i_a: f64, v_n_kv: f64, cod: f64, parallel: u32, catalog: &'a [CableType]) -> Vec<&'a CableType> {
    let mut c: Vec<&CableType> = catalog
        .iter()
        .filter(|c| in_voltage_window(c, v_n_kv) && c.i_m_ka * 1000.0 * parallel as f64 >= cod * i_a)
        .collect();
    c.sort_by(|a, b| a.i_m_ka.total_cmp(&b.i_m_ka).then_with(|| a.name.cmp(&b.name)));
    c
}

/// Cheapest single cable satisfying the voltage window and `i_m >= cod * i`.
pub fn select_cable<'a>(i_a: f64, v_n_kv: f64, cod: f64, catalog: &'a [CableType]) -> Result<&'a CableType> {
    adequate(i_a, v_n_kv, cod, 1, catalog)
        .first()
        .copied()
        .ok_or(Error::Sizing {
            element: "line".into(),
            required_a: cod * i_a,
        })
}

/// Modeled voltage drop at `p_kw` in percent per km: `100 * P * r / V^2`.
pub fn drop_pct_per_km(p_kw: f64, v_n_kv: f64, r_ohm_per_km: f64, parallel: u32) -> f64 {
    let r = r_ohm_per_km / parallel as f64;
    100.0 * (p_kw * 1e3) * r / (v_n_kv * 1e3).powi(2)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CableChoice {
    pub cable: CableType,
    pub parallel: u32,
    pub drop_pct_per_km: f64,
    /// False when even the strongest option exceeds the drop threshold.
    pub drop_ok: bool,
}

/// Cable and parallel count for one line.
///
/// Parallel counts are tried in increasing order; within a count, adequate
/// cables are tried from the smallest up until the drop threshold holds.
/// Without any option meeting the threshold, the lowest-drop adequate option
/// is returned with `drop_ok = false`.
pub fn choose_cable(
    element: &str,
    p_kw: f64,
    v_n_kv: f64,
    params: &SizingParams,
    catalog: &[CableType],
) -> Result<CableChoice> {
    let i_a = line_current(p_kw, v_n_kv);
    let mut fallback: Option<CableChoice> = None;
    for parallel in 1..=params.max_parallel.max(1) {
        for c in adequate(i_a, v_n_kv, params.cod, parallel, catalog) {
            let d = drop_pct_per_km(p_kw, v_n_kv, c.r_ohm_per_km, parallel);
            let choice = CableChoice {
                cable: c.clone(),
                parallel,
                drop_pct_per_km: d,
                drop_ok: d <= params.typical_drop_pct_per_km,
            };
            if choice.drop_ok {
                return Ok(choice);
            }
            if fallback.as_ref().map_or(true, |f| d < f.drop_pct_per_km) {
                fallback = Some(choice);
            }
        }
    }
    fallback.ok_or(Error::Sizing {
        element: element.to_string(),
        required_a: params.cod * i_a,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransformerRating {
    pub s_r_mva: f64,
    pub p_cu_percent: f64,
    pub v_k_percent: f64,
    pub clamped: bool,
}

/// `S_r = P_m * cod / 1000` with empirical copper losses and short-circuit
/// voltage in percent of the rating, clamped to [0.5, 3] and [2, 15].
pub fn size_transformer(p_m_kw: f64, cod: f64) -> Result<TransformerRating> {
    if !(p_m_kw > 0.0) {
        return Err(Error::Domain(format!("transformer peak must be positive, got {p_m_kw} kW")));
    }
    let s_r_mva = p_m_kw * cod / 1000.0;
    let lg = (10.0 * s_r_mva).log10();
    let p_cu = 1.5 + (-0.7 / 3.0) * lg;
    let v_k = 4.0 + (8.0 / 3.0) * lg;
    let p_cu_c = p_cu.clamp(0.5, 3.0);
    let v_k_c = v_k.clamp(2.0, 15.0);
    let clamped = p_cu_c != p_cu || v_k_c != v_k;
    if clamped {
        warn!("transformer of {s_r_mva:.4} MVA outside empirical range; P_Cu {p_cu:.3} -> {p_cu_c}, V_k {v_k:.3} -> {v_k_c}");
    }
    Ok(TransformerRating {
        s_r_mva,
        p_cu_percent: p_cu_c,
        v_k_percent: v_k_c,
        clamped,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizingRow {
    /// `line:<id>` or `transformer:<id>`.
    pub element: String,
    pub n_consumers: u64,
    pub p_m_kw: f64,
    pub current_a: f64,
    pub rating: String,
    pub parallel: u32,
    pub capacity: f64,
    pub drop_pct_per_km: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SizingReport {
    pub rows: Vec<SizingRow>,
    pub warnings: Vec<String>,
}

impl SizingReport {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.rows {
            w.serialize(r).map_err(|e| Error::Io(std::io::Error::other(e)))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

/// Size every line and transformer of `grid` in place.
pub fn size_grid(grid: &mut Syngrid, cf: &CfTable, params: &SizingParams, catalog: &[CableType]) -> Result<SizingReport> {
    if !(params.cod >= 1.0) {
        return Err(Error::validation(format!("cod must be >= 1, got {}", params.cod)));
    }
    let topo = grid.topology()?;
    let below = aggregate_consumers(grid, &topo)?;
    if below[topo.root] == 0 {
        return Err(Error::Integrity("grid has no consumers to size for".into()));
    }
    grid.cables = catalog.to_vec();
    let mut report = SizingReport::default();

    for &bus in &topo.order {
        let Some((_, branch)) = topo.parent[bus] else {
            continue;
        };
        let n = below[bus];
        let p_m = if n == 0 { 0.0 } else { peak_power(n, params.s_r_kva, cf)? };
        match branch {
            Branch::Line(id) => {
                let element = format!("line:{id}");
                let v_n = grid.buses[bus].vn_kv;
                let choice = choose_cable(&element, p_m, v_n, params, catalog)?;
                if !choice.drop_ok {
                    let msg = format!(
                        "{element}: drop {:.2} %/km exceeds {} %/km with the strongest option",
                        choice.drop_pct_per_km, params.typical_drop_pct_per_km
                    );
                    warn!("{msg}");
                    report.warnings.push(msg);
                }
                let line = &mut grid.lines[id];
                line.cable = Some(choice.cable.name.clone());
                line.parallel = choice.parallel;
                report.rows.push(SizingRow {
                    element,
                    n_consumers: n,
                    p_m_kw: p_m,
                    current_a: line_current(p_m, v_n),
                    rating: choice.cable.name,
                    parallel: choice.parallel,
                    capacity: choice.cable.i_m_ka * 1000.0 * choice.parallel as f64,
                    drop_pct_per_km: choice.drop_pct_per_km,
                });
            }
            Branch::Transformer(id) => {
                let element = format!("transformer:{id}");
                if n == 0 {
                    return Err(Error::Integrity(format!("{element} feeds no consumers")));
                }
                let r = size_transformer(p_m, params.cod)?;
                if r.clamped {
                    report.warnings.push(format!("{element}: empirical parameters clamped"));
                }
                let t = &mut grid.transformers[id];
                t.s_r_mva = r.s_r_mva;
                t.p_cu_percent = r.p_cu_percent;
                t.v_k_percent = r.v_k_percent;
                report.rows.push(SizingRow {
                    element,
                    n_consumers: n,
                    p_m_kw: p_m,
                    current_a: line_current(p_m, grid.buses[bus].vn_kv),
                    rating: format!("{:.4} MVA", r.s_r_mva),
                    parallel: 1,
                    capacity: r.s_r_mva,
                    drop_pct_per_km: 0.0,
                });
            }
        }
    }
    Ok(report)
}
