//! One radial LV grid per polytope.
//!
//! Buildings connect to their nearest road by a service stub; the largest
//! connected component is pruned to the union of shortest paths from every
//! building to the highest-degree node, which hosts the MV/LV transformer.

use crate::error::{Error, Result};
use crate::geodata::{Building, GeoDataset};
use crate::geometry::GeoPoint;
use crate::gridmodel::{BusRole, LineKind, Load, LvGrid, Syngrid, VoltageLevel};
use crate::spatial::{EdgeKind, RadialTree, SpatialGraph};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Spatial graph of the cropped roads with one stub per building centroid.
///
/// Terminal i of the result is `dataset.buildings[i]`.
pub fn snap_buildings(dataset: &GeoDataset) -> Result<SpatialGraph> {
    if dataset.roads.is_empty() {
        return Err(Error::validation("no roads in polytope"));
    }
    let mut g = SpatialGraph::from_roads(&dataset.roads);
    let centroids: Vec<GeoPoint> = dataset.buildings.iter().map(|b| b.centroid).collect();
    g.snap_terminals(&centroids, None)?;
    Ok(g)
}

/// One consumer per `m2_per_customer` of footprint, at least one.
pub fn allocate_consumers(building: &Building, m2_per_customer: f64) -> u32 {
    ((building.area_m2 / m2_per_customer).floor() as u32).max(1)
}

/// Flag exactly `round(penetration * N)` loads, chosen by a seeded shuffle,
/// with PV at half their demand. Other loads are reset to no PV.
pub fn assign_pv(mut loads: Vec<Load>, penetration: f64, seed: u64) -> Vec<Load> {
    let count = (penetration * loads.len() as f64).round() as usize;
    let mut idx: Vec<usize> = (0..loads.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    for l in loads.iter_mut() {
        l.has_pv = false;
        l.pv_kw = 0.0;
    }
    for &i in idx.iter().take(count) {
        loads[i].has_pv = true;
        loads[i].pv_kw = 0.5 * loads[i].p_kw;
    }
    loads
}

/// Shortest-path tree over the largest component.
pub fn build_radial(graph: &SpatialGraph) -> Result<RadialTree> {
    graph
        .radial_tree()
        .map_err(|_| Error::validation("largest road component contains no buildings"))
}

/// LV grid in local indices, before merging into a [`Syngrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct LvFragment {
    pub polytope: usize,
    /// Local bus 0 is the root.
    pub buses: Vec<(GeoPoint, BusRole)>,
    /// (upstream bus, downstream bus, kind, geometry upstream to downstream).
    pub lines: Vec<(usize, usize, LineKind, Vec<GeoPoint>)>,
    /// (bus, consumers, building id).
    pub loads: Vec<(usize, u32, String)>,
    pub dropped_buildings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LvOutcome {
    Built(LvFragment),
    Skipped { polytope: usize, reason: String, buildings: usize },
}

/// Run the LV steps for one cropped polytope.
pub fn synthesize(polytope: usize, dataset: &GeoDataset, m2_per_customer: f64) -> LvOutcome {
    let skipped = |reason: &str| LvOutcome::Skipped {
        polytope,
        reason: reason.to_string(),
        buildings: dataset.buildings.len(),
    };
    if dataset.buildings.is_empty() {
        return skipped("no buildings");
    }
    let graph = match snap_buildings(dataset) {
        Ok(g) => g,
        Err(_) => return skipped("no roads in polytope"),
    };
    let tree = match build_radial(&graph) {
        Ok(t) => t,
        Err(_) => return skipped("largest road component contains no buildings"),
    };
    LvOutcome::Built(fragment_from_tree(polytope, dataset, &graph, &tree, m2_per_customer))
}

fn fragment_from_tree(
    polytope: usize,
    dataset: &GeoDataset,
    graph: &SpatialGraph,
    tree: &RadialTree,
    m2_per_customer: f64,
) -> LvFragment {
    let mut local = vec![usize::MAX; graph.nodes.len()];
    for (i, &n) in tree.nodes.iter().enumerate() {
        local[n] = i;
    }
    let mut hosts_building = vec![false; graph.nodes.len()];
    for &t in &tree.served {
        hosts_building[graph.terminals[t].expect("served terminal is snapped")] = true;
    }
    let buses = tree
        .nodes
        .iter()
        .map(|&n| {
            let role = if n == tree.root {
                BusRole::LvRoot
            } else if hosts_building[n] {
                BusRole::Consumer
            } else {
                BusRole::Junction
            };
            (graph.nodes[n], role)
        })
        .collect();
    let lines = tree
        .edges
        .iter()
        .map(|te| {
            let e = &graph.edges[te.edge];
            let mut geom = e.polyline.clone();
            if e.a != te.parent {
                geom.reverse();
            }
            let kind = match e.kind {
                EdgeKind::Road => LineKind::Feeder,
                EdgeKind::Stub => LineKind::Service,
            };
            (local[te.parent], local[te.child], kind, geom)
        })
        .collect();
    let loads = tree
        .served
        .iter()
        .map(|&t| {
            let b = &dataset.buildings[t];
            let node = graph.terminals[t].expect("served terminal is snapped");
            (local[node], allocate_consumers(b, m2_per_customer), b.id.clone())
        })
        .collect();
    let dropped_buildings = tree
        .dropped
        .iter()
        .map(|&t| dataset.buildings[t].id.clone())
        .collect();
    LvFragment {
        polytope,
        buses,
        lines,
        loads,
        dropped_buildings,
    }
}

/// Merge a fragment into `grid` and feed its root through a new MV/LV
/// transformer from an MV bus at the root's location.
///
/// Returns the MV bus. Loads get zero demand; demand is set during sizing.
pub fn attach_transformer(grid: &mut Syngrid, fragment: &LvFragment, lv_kv: f64, mv_kv: f64, s_r_kva: f64) -> usize {
    let ids: Vec<usize> = fragment
        .buses
        .iter()
        .map(|&(p, role)| grid.add_bus(VoltageLevel::LV, lv_kv, p, role))
        .collect();
    let lines = fragment
        .lines
        .iter()
        .map(|(a, b, kind, geom)| grid.add_line(ids[*a], ids[*b], *kind, geom.clone()))
        .collect();
    for (bus, n, building) in &fragment.loads {
        grid.loads.push(Load {
            id: grid.loads.len(),
            bus: ids[*bus],
            n_consumers: *n,
            s_r_kva_per_consumer: s_r_kva,
            p_kw: 0.0,
            has_pv: false,
            pv_kw: 0.0,
            building: Some(building.clone()),
        });
    }
    let root = ids[0];
    let mv = grid.add_bus(VoltageLevel::MV, mv_kv, grid.buses[root].location, BusRole::Junction);
    let t = grid.add_transformer(mv, root);
    grid.lv_grids.push(LvGrid {
        polytope: fragment.polytope,
        transformer: t,
        root_bus: root,
        buses: ids,
        lines,
    });
    mv
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geodata::RoadSegment;

    fn p(x: f64, y: f64) -> GeoPoint {
        GeoPoint::new(x, y)
    }

    fn building(id: &str, cx: f64, cy: f64, w: f64, h: f64) -> Building {
        let ring = vec![
            p(cx - w / 2.0, cy - h / 2.0),
            p(cx + w / 2.0, cy - h / 2.0),
            p(cx + w / 2.0, cy + h / 2.0),
            p(cx - w / 2.0, cy + h / 2.0),
        ];
        Building::from_footprint(id, ring).unwrap()
    }

    fn dataset(roads: Vec<RoadSegment>, buildings: Vec<Building>) -> GeoDataset {
        GeoDataset {
            roads,
            buildings,
            boundary: vec![p(-1e4, -1e4), p(1e4, -1e4), p(1e4, 1e4), p(-1e4, 1e4)],
            crs_code: 32632,
        }
    }

    fn load(p_kw: f64) -> Load {
        Load {
            id: 0,
            bus: 0,
            n_consumers: 1,
            s_r_kva_per_consumer: 5.0,
            p_kw,
            has_pv: false,
            pv_kw: 0.0,
            building: None,
        }
    }

    #[test]
    fn consumer_allocation() {
        assert_eq!(allocate_consumers(&building("a", 0.0, 0.0, 20.0, 15.0), 50.0), 6);
        assert_eq!(allocate_consumers(&building("b", 0.0, 0.0, 7.0, 7.0), 50.0), 1);
        assert_eq!(allocate_consumers(&building("c", 0.0, 0.0, 25.0, 11.0), 50.0), 5);
    }

    #[test]
    fn pv_penetration_is_exact() {
        let loads: Vec<Load> = (0..100).map(|i| load(1.0 + i as f64)).collect();
        let out = assign_pv(loads.clone(), 0.1, 42);
        assert_eq!(out.iter().filter(|l| l.has_pv).count(), 10);
        assert!(out.iter().all(|l| l.pv_kw == if l.has_pv { 0.5 * l.p_kw } else { 0.0 }));
        assert_eq!(assign_pv(loads.clone(), 0.0, 42), loads);
        assert_eq!(assign_pv(loads.clone(), 0.1, 42), out);
        assert_ne!(assign_pv(loads, 0.1, 43), out);
        let one = assign_pv(vec![load(8.0)], 1.0, 0);
        assert_eq!(one[0].pv_kw, 4.0);
    }

    /// All simple paths from `s` to `t` by DFS; returns the shortest length.
    fn brute_force_shortest(g: &SpatialGraph, s: usize, t: usize) -> f64 {
        fn dfs(g: &SpatialGraph, adj: &[Vec<usize>], cur: usize, t: usize, seen: &mut Vec<bool>, len: f64, best: &mut f64) {
            if cur == t {
                *best = best.min(len);
                return;
            }
            for &e in &adj[cur] {
                let m = g.edges[e].other(cur);
                if !seen[m] {
                    seen[m] = true;
                    dfs(g, adj, m, t, seen, len + g.edges[e].length_m, best);
                    seen[m] = false;
                }
            }
        }
        let adj = g.adjacency();
        let mut seen = vec![false; g.nodes.len()];
        seen[s] = true;
        let mut best = f64::INFINITY;
        dfs(g, &adj, s, t, &mut seen, 0.0, &mut best);
        best
    }

    #[test]
    fn cycle_pruned_to_shortest_path_tree() {
        let roads = vec![RoadSegment::new("ring", vec![p(0.0, 0.0), p(100.0, 0.0), p(100.0, 60.0), p(0.0, 60.0), p(0.0, 0.0)])];
        let ds = dataset(roads, vec![building("a", 30.0, -10.0, 8.0, 8.0), building("b", 110.0, 40.0, 8.0, 8.0)]);
        let g = snap_buildings(&ds).unwrap();
        let tree = build_radial(&g).unwrap();
        assert_eq!(tree.edges.len(), tree.nodes.len() - 1);
        for &t in &tree.served {
            let n = g.terminals[t].unwrap();
            let oracle = brute_force_shortest(&g, n, tree.root);
            assert!((tree.tree_distance(&g, n).unwrap() - oracle).abs() < 1e-9);
        }
        assert_eq!(tree.served, vec![0, 1]);
    }

    #[test]
    fn only_largest_cluster_is_served() {
        let roads = vec![
            RoadSegment::new("big1", vec![p(0.0, 0.0), p(100.0, 0.0)]),
            RoadSegment::new("big2", vec![p(100.0, 0.0), p(100.0, 100.0)]),
            RoadSegment::new("small", vec![p(500.0, 0.0), p(520.0, 0.0)]),
        ];
        let ds = dataset(roads, vec![building("near", 50.0, 10.0, 6.0, 6.0), building("far", 510.0, 10.0, 6.0, 6.0)]);
        match synthesize(0, &ds, 50.0) {
            LvOutcome::Built(f) => {
                assert_eq!(f.loads.len(), 1);
                assert_eq!(f.loads[0].2, "near");
                assert_eq!(f.dropped_buildings, vec!["far".to_string()]);
                assert_eq!(f.lines.len(), f.buses.len() - 1);
                assert_eq!(f.buses[0].1, BusRole::LvRoot);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn path_graph_is_its_own_tree() {
        let roads = vec![
            RoadSegment::new("ab", vec![p(0.0, 0.0), p(50.0, 0.0)]),
            RoadSegment::new("bc", vec![p(50.0, 0.0), p(120.0, 0.0)]),
        ];
        let ds = dataset(roads, vec![building("a", 0.0, -8.0, 4.0, 4.0)]);
        let g = snap_buildings(&ds).unwrap();
        let tree = build_radial(&g).unwrap();
        // terminal at A by a stub: every node lies on the path to the root or is dropped
        assert_eq!(tree.edges.len(), tree.nodes.len() - 1);
        let n = g.terminals[0].unwrap();
        assert!((tree.tree_distance(&g, n).unwrap() - tree.dist[n]).abs() < 1e-12);
    }

    #[test]
    fn skips_without_buildings_or_roads() {
        let ds = dataset(vec![RoadSegment::new("r", vec![p(0.0, 0.0), p(10.0, 0.0)])], vec![]);
        assert!(matches!(synthesize(3, &ds, 50.0), LvOutcome::Skipped { polytope: 3, .. }));
        let ds = dataset(vec![], vec![building("a", 0.0, 0.0, 5.0, 5.0)]);
        assert!(matches!(synthesize(3, &ds, 50.0), LvOutcome::Skipped { buildings: 1, .. }));
    }

    #[test]
    fn transformer_colocated_with_root() {
        let roads = vec![RoadSegment::new("r", vec![p(0.0, 0.0), p(100.0, 0.0)])];
        let ds = dataset(roads, vec![building("a", 20.0, 10.0, 10.0, 10.0), building("b", 70.0, -10.0, 10.0, 30.0)]);
        let LvOutcome::Built(f) = synthesize(0, &ds, 50.0) else { panic!() };
        let mut g = Syngrid::empty(32632);
        let mv = attach_transformer(&mut g, &f, 0.4, 16.0, 5.0);
        assert_eq!(g.transformers.len(), 1);
        let t = &g.transformers[0];
        assert_eq!(t.hv_bus, mv);
        assert_eq!(g.buses[mv].location, g.buses[t.lv_bus].location);
        assert_eq!(g.buses[t.lv_bus].role, BusRole::LvRoot);
        assert_eq!(g.total_consumers(), 2 + 6);
    }
}
