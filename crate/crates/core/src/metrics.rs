//! Topological statistics for comparing synthetic and real grids.

use crate::error::{Error, Result};
use crate::gridmodel::Syngrid;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fmt::Write as _;

/// Customers per km of line (all levels).
pub fn customers_per_km(grid: &Syngrid) -> Result<f64> {
    let km: f64 = grid.lines.iter().map(|l| l.length_m).sum::<f64>() / 1000.0;
    if !(km > 0.0) {
        return Err(Error::Domain("grid has zero total line length".into()));
    }
    Ok(grid.total_consumers() as f64 / km)
}

/// Number of MV/LV transformers.
pub fn lv_grid_count(grid: &Syngrid) -> usize {
    grid.mv_lv_transformers().count()
}

/// Weighted diameter of a tree given as `(u, v, length)` edges over nodes `0..n`.
///
/// Two passes: the farthest node from any start is one end of a diameter.
pub fn tree_diameter(n: usize, edges: &[(usize, usize, f64)]) -> f64 {
    if n <= 1 {
        return 0.0;
    }
    let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for &(a, b, w) in edges {
        adj[a].push((b, w));
        adj[b].push((a, w));
    }
    let farthest = |start: usize| -> (usize, f64) {
        let mut dist = vec![f64::NAN; n];
        dist[start] = 0.0;
        let mut stack = vec![start];
        let mut best = (start, 0.0);
        while let Some(u) = stack.pop() {
            for &(v, w) in &adj[u] {
                if dist[v].is_nan() {
                    dist[v] = dist[u] + w;
                    if dist[v] > best.1 {
                        best = (v, dist[v]);
                    }
                    stack.push(v);
                }
            }
        }
        best
    };
    let (end, _) = farthest(0);
    farthest(end).1
}

/// Mean over LV grids of the tree diameter, in km.
pub fn avg_lv_diameter(grid: &Syngrid) -> Result<f64> {
    if grid.lv_grids.is_empty() {
        return Err(Error::Domain("grid has no LV grids".into()));
    }
    let total: f64 = grid
        .lv_grids
        .iter()
        .map(|lv| {
            let local: HashMap<usize, usize> = lv.buses.iter().enumerate().map(|(i, &b)| (b, i)).collect();
            let edges: Vec<(usize, usize, f64)> = lv
                .lines
                .iter()
                .map(|&l| {
                    let line = &grid.lines[l];
                    (local[&line.from_bus], local[&line.to_bus], line.length_m / 1000.0)
                })
                .collect();
            tree_diameter(lv.buses.len(), &edges)
        })
        .sum();
    Ok(total / grid.lv_grids.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub customers: u64,
    pub total_line_km: f64,
    pub customers_per_km: f64,
    pub lv_grid_count: usize,
    pub avg_lv_diameter_km: f64,
    pub buses: usize,
    pub transformers: usize,
}

impl MetricsReport {
    pub fn compute(grid: &Syngrid) -> Result<MetricsReport> {
        Ok(MetricsReport {
            customers: grid.total_consumers(),
            total_line_km: grid.lines.iter().map(|l| l.length_m).sum::<f64>() / 1000.0,
            customers_per_km: customers_per_km(grid)?,
            lv_grid_count: lv_grid_count(grid),
            avg_lv_diameter_km: avg_lv_diameter(grid)?,
            buses: grid.buses.len(),
            transformers: grid.transformers.len(),
        })
    }

    pub fn table(&self) -> String {
        let mut s = String::new();
        let rows = [
            ("Number of customers per km", format!("{:.2}", self.customers_per_km)),
            ("Number of LV grids", self.lv_grid_count.to_string()),
            ("Average LV grid diameter [km]", format!("{:.3}", self.avg_lv_diameter_km)),
            ("Customers", self.customers.to_string()),
            ("Total line length [km]", format!("{:.3}", self.total_line_km)),
            ("Buses", self.buses.to_string()),
            ("Transformers", self.transformers.to_string()),
        ];
        for (k, v) in rows {
            let _ = writeln!(s, "{k:<32} {v:>12}");
        }
        s
    }
}
