//! Radial MV grid over a translated copy of the road network.

use crate::error::{Error, Result};
use crate::geodata::RoadSegment;
use crate::geometry::GeoPoint;
use crate::gridmodel::{BusRole, LineKind, Syngrid, VoltageLevel};
use crate::spatial::{RadialTree, SpatialGraph};
use log::warn;

pub const DEFAULT_OFFSET_M: (f64, f64) = (25.0, 25.0);

/// Shift every road vertex by `offset`; lengths are unchanged.
pub fn translate_network(roads: &[RoadSegment], offset: (f64, f64)) -> Vec<RoadSegment> {
    let d = GeoPoint::new(offset.0, offset.1);
    roads
        .iter()
        .map(|r| RoadSegment {
            id: r.id.clone(),
            polyline: r.polyline.iter().map(|p| *p + d).collect(),
            length_m: r.length_m,
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct MvTree {
    pub graph: SpatialGraph,
    pub tree: RadialTree,
    /// Terminals whose nearest road lay outside the largest component.
    pub rerouted: Vec<usize>,
}

/// Shortest-path tree connecting every terminal to the MV root.
///
/// Terminals snap to the nearest road of the largest road component, so
/// every terminal is served; a terminal nearer to a smaller component is
/// reported in `rerouted`.
pub fn build_mv(terminals: &[GeoPoint], roads: &[RoadSegment]) -> Result<MvTree> {
    if terminals.is_empty() {
        return Err(Error::validation("MV synthesis needs at least one transformer bus"));
    }
    let mut graph = SpatialGraph::from_roads(roads);
    if graph.road_edge_count() == 0 {
        let ids: Vec<String> = (0..terminals.len()).map(|i| i.to_string()).collect();
        return Err(Error::generation(
            "mv_synth",
            format!("no translated roads reachable; orphaned transformer buses: {}", ids.join(", ")),
        ));
    }
    let comp = graph.largest_component();
    let mut mask = vec![false; graph.nodes.len()];
    comp.iter().for_each(|&n| mask[n] = true);

    let rerouted: Vec<usize> = terminals
        .iter()
        .enumerate()
        .filter(|(_, p)| {
            let (e, ..) = graph.nearest_road_point(**p, None).expect("roads exist");
            !mask[graph.edges[e].a]
        })
        .map(|(i, _)| i)
        .collect();
    if !rerouted.is_empty() {
        warn!("{} transformer bus(es) rerouted to the largest MV road component", rerouted.len());
    }
    graph.snap_terminals(terminals, Some(&mask))?;

    let comp = graph.largest_component();
    let root = graph.select_root(&comp).expect("component is non-empty");
    let tree = graph.radial_tree_from(root, &comp)?;
    if !tree.dropped.is_empty() {
        return Err(Error::generation(
            "mv_synth",
            format!("transformer buses not connected to the MV root: {:?}", tree.dropped),
        ));
    }
    Ok(MvTree { graph, tree, rerouted })
}

/// Add MV buses and lines for `mv` to `grid`. `terminal_buses[i]` is the
/// existing MV bus of terminal i. Returns the MV root bus.
pub fn attach_mv(grid: &mut Syngrid, mv: &MvTree, terminal_buses: &[usize], mv_kv: f64) -> Result<usize> {
    let g = &mv.graph;
    let mut bus_of = vec![usize::MAX; g.nodes.len()];
    for (t, &bus) in terminal_buses.iter().enumerate() {
        let node = g.terminals[t].expect("terminal snapped");
        if bus_of[node] != usize::MAX {
            return Err(Error::Integrity(format!(
                "MV buses {} and {bus} coincide",
                bus_of[node]
            )));
        }
        bus_of[node] = bus;
    }
    for &n in &mv.tree.nodes {
        if bus_of[n] == usize::MAX {
            bus_of[n] = grid.add_bus(VoltageLevel::MV, mv_kv, g.nodes[n], BusRole::Junction);
        }
    }
    for te in &mv.tree.edges {
        let e = &g.edges[te.edge];
        let mut geom = e.polyline.clone();
        if e.a != te.parent {
            geom.reverse();
        }
        // terminal buses sit at their original location, not the snapped node
        let (from, to) = (bus_of[te.parent], bus_of[te.child]);
        *geom.first_mut().unwrap() = grid.buses[from].location;
        *geom.last_mut().unwrap() = grid.buses[to].location;
        grid.add_line(from, to, LineKind::Feeder, geom);
    }
    let root = bus_of[mv.tree.root];
    grid.buses[root].role = BusRole::MvRoot;
    Ok(root)
}

/// HV slack bus co-located with the MV root, fed through one HV/MV transformer.
/// Returns (slack bus, transformer).
pub fn attach_hv_feeder(grid: &mut Syngrid, mv_root: usize, hv_kv: f64) -> (usize, usize) {
    let loc = grid.buses[mv_root].location;
    let hv = grid.add_bus(VoltageLevel::HV, hv_kv, loc, BusRole::HvSlack);
    let t = grid.add_transformer(hv, mv_root);
    (hv, t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::polyline_length;

    fn p(x: f64, y: f64) -> GeoPoint {
        GeoPoint::new(x, y)
    }

    #[test]
    fn translation_is_an_isometry() {
        let roads = vec![RoadSegment::new("a", vec![p(0.0, 0.0), p(30.0, 40.0), p(30.0, 100.0)])];
        assert_eq!(translate_network(&roads, (0.0, 0.0)), roads);
        let moved = translate_network(&roads, (10.0, 10.0));
        assert_eq!(moved[0].polyline[1], p(40.0, 50.0));
        assert!((polyline_length(&moved[0].polyline) - roads[0].length_m).abs() < 1e-9);
        let back = translate_network(&moved, (-10.0, -10.0));
        for (a, b) in back[0].polyline.iter().zip(&roads[0].polyline) {
            assert!(a.dist(*b) < 1e-9);
        }
    }

    /// Exhaustive simple-path search on the MV graph.
    fn brute_force(g: &SpatialGraph, s: usize, t: usize) -> f64 {
        let adj = g.adjacency();
        let mut best = f64::INFINITY;
        let mut stack = vec![(s, 0.0, vec![s])];
        while let Some((n, d, path)) = stack.pop() {
            if n == t {
                best = best.min(d);
                continue;
            }
            for &e in &adj[n] {
                let m = g.edges[e].other(n);
                if !path.contains(&m) {
                    let mut next = path.clone();
                    next.push(m);
                    stack.push((m, d + g.edges[e].length_m, next));
                }
            }
        }
        best
    }

    #[test]
    fn y_network_matches_exhaustive_paths() {
        let roads = vec![
            RoadSegment::new("a", vec![p(0.0, 0.0), p(-100.0, 80.0)]),
            RoadSegment::new("b", vec![p(0.0, 0.0), p(110.0, 70.0)]),
            RoadSegment::new("c", vec![p(0.0, 0.0), p(0.0, -150.0)]),
            RoadSegment::new("d", vec![p(-100.0, 80.0), p(110.0, 70.0)]),
        ];
        let terms = [p(-90.0, 90.0), p(100.0, 60.0), p(10.0, -140.0)];
        let mv = build_mv(&terms, &roads).unwrap();
        assert_eq!(mv.tree.served, vec![0, 1, 2]);
        assert_eq!(mv.tree.edges.len(), mv.tree.nodes.len() - 1);
        for t in 0..3 {
            let n = mv.graph.terminals[t].unwrap();
            let oracle = brute_force(&mv.graph, n, mv.tree.root);
            assert!((mv.tree.tree_distance(&mv.graph, n).unwrap() - oracle).abs() < 1e-9);
        }
    }

    #[test]
    fn single_terminal_is_one_path() {
        let roads = vec![RoadSegment::new("a", vec![p(0.0, 0.0), p(100.0, 0.0)])];
        let mv = build_mv(&[p(30.0, 20.0)], &roads).unwrap();
        assert_eq!(mv.tree.served, vec![0]);
        let n = mv.graph.terminals[0].unwrap();
        assert!(mv.tree.tree_distance(&mv.graph, n).is_some());
    }

    #[test]
    fn equidistant_terminal_snaps_to_lower_segment() {
        let roads = vec![
            RoadSegment::new("low", vec![p(0.0, 0.0), p(100.0, 0.0)]),
            RoadSegment::new("high", vec![p(0.0, 20.0), p(100.0, 20.0)]),
            RoadSegment::new("link", vec![p(100.0, 0.0), p(100.0, 20.0)]),
        ];
        let mv = build_mv(&[p(50.0, 10.0)], &roads).unwrap();
        let host = mv.graph.attach[0].unwrap();
        assert!((mv.graph.nodes[host].y - 0.0).abs() < 1e-9);
    }

    #[test]
    fn no_roads_lists_orphans() {
        let err = build_mv(&[p(0.0, 0.0), p(5.0, 5.0)], &[]).unwrap_err().to_string();
        assert!(err.contains("orphaned transformer buses: 0, 1"), "{err}");
    }

    #[test]
    fn far_cluster_terminal_is_rerouted() {
        let roads = vec![
            RoadSegment::new("big", vec![p(0.0, 0.0), p(100.0, 0.0), p(100.0, 100.0)]),
            RoadSegment::new("small", vec![p(500.0, 0.0), p(510.0, 0.0)]),
        ];
        let mv = build_mv(&[p(50.0, 5.0), p(505.0, 5.0)], &roads).unwrap();
        assert_eq!(mv.rerouted, vec![1]);
        assert_eq!(mv.tree.served, vec![0, 1]);
    }

    #[test]
    fn feeder_adds_one_slack_and_one_transformer() {
        let mut g = Syngrid::empty(32632);
        let root = g.add_bus(VoltageLevel::MV, 16.0, p(1.0, 2.0), BusRole::MvRoot);
        let (hv, t) = attach_hv_feeder(&mut g, root, 110.0);
        assert_eq!(g.buses.iter().filter(|b| b.role == BusRole::HvSlack).count(), 1);
        assert_eq!(g.transformers.len(), 1);
        assert_eq!(g.transformers[t].hv_bus, hv);
        assert_eq!(g.buses[hv].vn_kv, 110.0);
        assert_eq!(g.buses[hv].location, p(1.0, 2.0));
    }
}
