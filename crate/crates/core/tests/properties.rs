use proptest::prelude::*;
use std::collections::HashSet;
use syngrid_core::geodata::{Building, Crs, GeoDataset, LonLat, RoadSegment};
use syngrid_core::gridmodel::VoltageLevel;
use syngrid_core::pipeline::{generate_from_osm, GenerationParams};
use syngrid_core::spatial::SpatialGraph;
use syngrid_core::synth_map::{synth_town, TownOptions};
use syngrid_core::tessellate::{crop_all, tessellate};
use syngrid_core::GeoPoint;

/// Floyd–Warshall over the spatial graph.
fn all_pairs(g: &SpatialGraph) -> Vec<Vec<f64>> {
    let n = g.nodes.len();
    let mut d = vec![vec![f64::INFINITY; n]; n];
    for (i, row) in d.iter_mut().enumerate() {
        row[i] = 0.0;
    }
    for e in &g.edges {
        d[e.a][e.b] = d[e.a][e.b].min(e.length_m);
        d[e.b][e.a] = d[e.b][e.a].min(e.length_m);
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                let via = d[i][k] + d[k][j];
                if via < d[i][j] {
                    d[i][j] = via;
                }
            }
        }
    }
    d
}

fn is_tree(n_nodes: usize, edges: &[(usize, usize)]) -> bool {
    if edges.len() + 1 != n_nodes {
        return false;
    }
    let mut parent: Vec<usize> = (0..n_nodes).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for &(a, b) in edges {
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        if ra == rb {
            return false;
        }
        parent[ra] = rb;
    }
    true
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn projection_round_trip(lon in 6.0f64..12.0, lat in -79.0f64..83.0) {
        let code = if lat >= 0.0 { 32632 } else { 32732 };
        let crs = Crs::from_epsg(code).unwrap();
        let p = crs.project(LonLat::new(lon, lat)).unwrap();
        let back = crs.unproject(p);
        prop_assert!((back.lon - lon).abs() < 1e-9);
        prop_assert!((back.lat - lat).abs() < 1e-9);
    }

    #[test]
    fn buildings_land_in_exactly_one_polytope(
        centers in proptest::collection::vec((0.0f64..900.0, 0.0f64..600.0), 1..80),
        radius in 40.0f64..250.0,
    ) {
        let boundary = vec![
            GeoPoint::new(0.0, 0.0),
            GeoPoint::new(900.0, 0.0),
            GeoPoint::new(900.0, 600.0),
            GeoPoint::new(0.0, 600.0),
        ];
        let buildings: Vec<Building> = centers
            .iter()
            .enumerate()
            .map(|(i, &(x, y))| {
                let ring = vec![
                    GeoPoint::new(x - 1.0, y - 1.0),
                    GeoPoint::new(x + 1.0, y - 1.0),
                    GeoPoint::new(x + 1.0, y + 1.0),
                    GeoPoint::new(x - 1.0, y + 1.0),
                ];
                Building::from_footprint(format!("b{i}"), ring).unwrap()
            })
            .collect();
        let ds = GeoDataset { roads: vec![], buildings, boundary: boundary.clone(), crs_code: 32632 };
        let polys = tessellate(&boundary, radius).unwrap();
        let (cropped, orphans) = crop_all(&ds, &polys);
        prop_assert!(orphans.is_empty());
        let mut seen = HashSet::new();
        for c in &cropped {
            for b in &c.buildings {
                prop_assert!(seen.insert(b.id.clone()), "{} assigned twice", b.id);
            }
        }
        prop_assert_eq!(seen.len(), ds.buildings.len());
    }

    #[test]
    fn radial_tree_paths_are_shortest(
        pts in proptest::collection::vec((0.0f64..200.0, 0.0f64..200.0), 4..12),
        links in proptest::collection::vec((any::<prop::sample::Index>(), any::<prop::sample::Index>()), 3..20),
        terms in proptest::collection::vec((0.0f64..200.0, 0.0f64..200.0), 1..6),
    ) {
        let nodes: Vec<GeoPoint> = pts.iter().map(|&(x, y)| GeoPoint::new(x, y)).collect();
        let roads: Vec<RoadSegment> = links
            .iter()
            .enumerate()
            .filter_map(|(k, (a, b))| {
                let (a, b) = (a.index(nodes.len()), b.index(nodes.len()));
                (nodes[a].dist(nodes[b]) > 1.0).then(|| RoadSegment::new(format!("r{k}"), vec![nodes[a], nodes[b]]))
            })
            .collect();
        prop_assume!(!roads.is_empty());
        let mut g = SpatialGraph::from_roads(&roads);
        let terminals: Vec<GeoPoint> = terms.iter().map(|&(x, y)| GeoPoint::new(x, y)).collect();
        g.snap_terminals(&terminals, None).unwrap();
        let tree = match g.radial_tree() {
            Ok(t) => t,
            Err(_) => {
                // only legitimate when every terminal sits off the largest component
                let comp = g.largest_component();
                prop_assert!(g.terminals.iter().flatten().all(|n| !comp.contains(n)));
                return Ok(());
            }
        };
        let edges: Vec<(usize, usize)> = tree.edges.iter().map(|e| (e.parent, e.child)).collect();
        let index: std::collections::HashMap<usize, usize> =
            tree.nodes.iter().enumerate().map(|(i, &n)| (n, i)).collect();
        let local: Vec<(usize, usize)> = edges.iter().map(|(a, b)| (index[a], index[b])).collect();
        prop_assert!(is_tree(tree.nodes.len(), &local));
        let d = all_pairs(&g);
        for &t in &tree.served {
            let n = g.terminals[t].unwrap();
            let along = tree.tree_distance(&g, n).unwrap();
            prop_assert!((along - d[n][tree.root]).abs() < 1e-6, "{along} vs {}", d[n][tree.root]);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn generated_grids_are_radial(seed in 0u64..10_000) {
        let town = synth_town(&TownOptions { seed, ..Default::default() });
        let mut params = GenerationParams::new(town.boundary.clone());
        params.radius_m = 150.0;
        params.seed = seed;
        let (grid, _) = generate_from_osm(&params, town.osm_xml.as_bytes()).unwrap();
        for lv in &grid.lv_grids {
            let edges: Vec<(usize, usize)> = lv
                .lines
                .iter()
                .map(|&l| {
                    let line = &grid.lines[l];
                    let pos = |b: usize| lv.buses.iter().position(|&x| x == b).unwrap();
                    (pos(line.from_bus), pos(line.to_bus))
                })
                .collect();
            prop_assert!(is_tree(lv.buses.len(), &edges));
        }
        let mv: Vec<usize> = (0..grid.buses.len()).filter(|&b| grid.buses[b].level == VoltageLevel::MV).collect();
        let mv_edges: Vec<(usize, usize)> = grid
            .lines
            .iter()
            .filter(|l| grid.buses[l.from_bus].level == VoltageLevel::MV)
            .map(|l| {
                let pos = |b: usize| mv.iter().position(|&x| x == b).unwrap();
                (pos(l.from_bus), pos(l.to_bus))
            })
            .collect();
        prop_assert!(is_tree(mv.len(), &mv_edges));
    }
}
