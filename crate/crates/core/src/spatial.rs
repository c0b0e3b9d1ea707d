//! Planar road graph with terminal stubs, and its radial (shortest-path) pruning.
//!
//! Shared by LV synthesis (terminals are buildings) and MV synthesis
//! (terminals are MV/LV transformer buses).

use crate::error::{Error, Result};
use crate::geodata::RoadSegment;
use crate::geometry::{self, BBox, GeoPoint};
use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap, HashSet};

/// Snapping tolerance for node merging and intersection detection, meters.
pub const SNAP_TOL_M: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeKind {
    Road,
    /// Connection from a terminal to the road it snapped onto.
    Stub,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpatialEdge {
    pub a: usize,
    pub b: usize,
    pub length_m: f64,
    /// Geometry from node `a` to node `b`.
    pub polyline: Vec<GeoPoint>,
    pub kind: EdgeKind,
}

impl SpatialEdge {
    pub fn other(&self, n: usize) -> usize {
        if self.a == n {
            self.b
        } else {
            self.a
        }
    }
}

/// Undirected spatial graph weighted by geometric length.
#[derive(Debug, Clone, Default)]
pub struct SpatialGraph {
    pub nodes: Vec<GeoPoint>,
    pub edges: Vec<SpatialEdge>,
    /// Terminal index -> node hosting it. `None` until snapped.
    pub terminals: Vec<Option<usize>>,
    /// Terminal index -> node where its stub meets the road network.
    pub attach: Vec<Option<usize>>,
}

struct NodeIndex {
    cells: HashMap<(i64, i64), Vec<usize>>,
    tol: f64,
}

impl NodeIndex {
    fn new(tol: f64) -> Self {
        NodeIndex {
            cells: HashMap::new(),
            tol,
        }
    }

    fn key(&self, p: GeoPoint) -> (i64, i64) {
        ((p.x / self.tol).floor() as i64, (p.y / self.tol).floor() as i64)
    }

    fn find(&self, nodes: &[GeoPoint], p: GeoPoint) -> Option<usize> {
        let (kx, ky) = self.key(p);
        let mut best: Option<usize> = None;
        for dx in -1..=1 {
            for dy in -1..=1 {
                if let Some(ids) = self.cells.get(&(kx + dx, ky + dy)) {
                    for &id in ids {
                        if nodes[id].dist(p) <= self.tol && best.map_or(true, |b| id < b) {
                            best = Some(id);
                        }
                    }
                }
            }
        }
        best
    }

    fn get_or_insert(&mut self, nodes: &mut Vec<GeoPoint>, p: GeoPoint) -> usize {
        if let Some(id) = self.find(nodes, p) {
            return id;
        }
        let id = nodes.len();
        nodes.push(p);
        let k = self.key(p);
        self.cells.entry(k).or_default().push(id);
        id
    }
}

#[derive(Clone, Copy)]
struct Seg {
    a: GeoPoint,
    b: GeoPoint,
    road: usize,
    idx: usize,
}

impl SpatialGraph {
    /// Split roads at every mutual contact and build the graph.
    pub fn from_roads(roads: &[RoadSegment]) -> SpatialGraph {
        let tol = SNAP_TOL_M;
        let mut segs: Vec<Seg> = Vec::new();
        for (ri, road) in roads.iter().enumerate() {
            for (k, w) in road.polyline.windows(2).enumerate() {
                segs.push(Seg {
                    a: w[0],
                    b: w[1],
                    road: ri,
                    idx: k,
                });
            }
        }

        // uniform grid over segment bounding boxes
        let cell = 50.0;
        let mut grid: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
        for (si, s) in segs.iter().enumerate() {
            let bb = BBox::of(&[s.a, s.b]).unwrap().expand(tol);
            for gx in (bb.min.x / cell).floor() as i64..=(bb.max.x / cell).floor() as i64 {
                for gy in (bb.min.y / cell).floor() as i64..=(bb.max.y / cell).floor() as i64 {
                    grid.entry((gx, gy)).or_default().push(si);
                }
            }
        }

        let mut splits: Vec<Vec<f64>> = vec![Vec::new(); segs.len()];
        let mut seen: HashSet<(usize, usize)> = HashSet::new();
        let mut keys: Vec<_> = grid.keys().copied().collect();
        keys.sort_unstable();
        for key in keys {
            let ids = &grid[&key];
            for (x, &i) in ids.iter().enumerate() {
                for &j in &ids[x + 1..] {
                    let (i, j) = (i.min(j), i.max(j));
                    if !seen.insert((i, j)) {
                        continue;
                    }
                    let (si, sj) = (segs[i], segs[j]);
                    if si.road == sj.road && si.idx.abs_diff(sj.idx) == 1 {
                        continue;
                    }
                    splits[i].extend(geometry::segment_contact_params(si.a, si.b, sj.a, sj.b, tol));
                    splits[j].extend(geometry::segment_contact_params(sj.a, sj.b, si.a, si.b, tol));
                }
            }
        }

        let mut g = SpatialGraph::default();
        let mut index = NodeIndex::new(tol);
        let mut seg_cursor = 0;
        for road in roads {
            let n_seg = road.polyline.len().saturating_sub(1);
            if n_seg == 0 {
                continue;
            }
            // (segment, t) cut points along the road, in order
            let mut cuts: Vec<(usize, f64)> = vec![(0, 0.0)];
            for k in 0..n_seg {
                let mut ts = splits[seg_cursor + k].clone();
                ts.sort_by(f64::total_cmp);
                for t in ts {
                    if t > 0.0 && t < 1.0 {
                        cuts.push((k, t));
                    } else if t >= 1.0 && k + 1 < n_seg {
                        cuts.push((k + 1, 0.0));
                    } else if t <= 0.0 && k > 0 {
                        cuts.push((k, 0.0));
                    }
                }
            }
            cuts.push((n_seg - 1, 1.0));
            if road.polyline[0].dist(road.polyline[n_seg]) <= tol {
                // closed way: two interior cuts keep the loop as a simple cycle
                cuts.extend(arc_fraction_cut(&road.polyline, 1.0 / 3.0));
                cuts.extend(arc_fraction_cut(&road.polyline, 2.0 / 3.0));
            }
            cuts.sort_by(|x, y| x.0.cmp(&y.0).then(x.1.total_cmp(&y.1)));
            cuts.dedup();

            let pt = |(k, t): (usize, f64)| road.polyline[k].lerp(road.polyline[k + 1], t);
            let mut prev = cuts[0];
            let mut prev_node = index.get_or_insert(&mut g.nodes, pt(prev));
            for &cut in &cuts[1..] {
                let p = pt(cut);
                let mut line = vec![g.nodes[prev_node]];
                // polyline vertices strictly between the two cuts
                for v in (prev.0 + 1)..=cut.0 {
                    if v == cut.0 && cut.1 == 0.0 {
                        continue;
                    }
                    let q = road.polyline[v];
                    if q.dist(*line.last().unwrap()) > tol && q.dist(p) > tol {
                        line.push(q);
                    }
                }
                let node = index.get_or_insert(&mut g.nodes, p);
                line.push(g.nodes[node]);
                if node != prev_node {
                    let length_m = geometry::polyline_length(&line);
                    if length_m > tol {
                        g.edges.push(SpatialEdge {
                            a: prev_node,
                            b: node,
                            length_m,
                            polyline: line,
                            kind: EdgeKind::Road,
                        });
                    }
                }
                prev = cut;
                prev_node = node;
            }
            seg_cursor += n_seg;
        }
        g.dedup_parallel_edges();
        g
    }

    fn dedup_parallel_edges(&mut self) {
        let mut best: HashMap<(usize, usize), usize> = HashMap::new();
        let mut keep = vec![true; self.edges.len()];
        for (i, e) in self.edges.iter().enumerate() {
            let key = (e.a.min(e.b), e.a.max(e.b));
            match best.get(&key) {
                Some(&j) if self.edges[j].length_m <= e.length_m => keep[i] = false,
                Some(&j) => {
                    keep[j] = false;
                    best.insert(key, i);
                }
                None => {
                    best.insert(key, i);
                }
            }
        }
        let mut k = 0;
        self.edges.retain(|_| {
            k += 1;
            keep[k - 1]
        });
    }

    pub fn road_edge_count(&self) -> usize {
        self.edges.iter().filter(|e| e.kind == EdgeKind::Road).count()
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut d = vec![0; self.nodes.len()];
        for e in &self.edges {
            d[e.a] += 1;
            d[e.b] += 1;
        }
        d
    }

    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.nodes.len()];
        for (i, e) in self.edges.iter().enumerate() {
            adj[e.a].push(i);
            adj[e.b].push(i);
        }
        adj
    }

    /// Nearest point on any road edge: (edge, segment, t, point, distance).
    /// Ties go to the lower edge id, then the lower segment index.
    pub fn nearest_road_point(&self, p: GeoPoint, allowed: Option<&[bool]>) -> Option<(usize, usize, f64, GeoPoint, f64)> {
        let mut best: Option<(usize, usize, f64, GeoPoint, f64)> = None;
        for (ei, e) in self.edges.iter().enumerate() {
            if e.kind != EdgeKind::Road {
                continue;
            }
            if let Some(mask) = allowed {
                if !mask[e.a] {
                    continue;
                }
            }
            for (si, w) in e.polyline.windows(2).enumerate() {
                let (t, q, d) = geometry::closest_on_segment(p, w[0], w[1]);
                if best.map_or(true, |b| d < b.4) {
                    best = Some((ei, si, t, q, d));
                }
            }
        }
        best
    }

    /// Connect each terminal point to its nearest road, splitting the road there.
    ///
    /// Terminals within the snapping tolerance of the road are hosted directly
    /// by the inserted node; others get a stub edge. `allowed` optionally
    /// restricts snapping to roads whose nodes are flagged.
    pub fn snap_terminals(&mut self, points: &[GeoPoint], allowed: Option<&[bool]>) -> Result<()> {
        if self.road_edge_count() == 0 {
            return Err(Error::validation("no roads to snap onto"));
        }
        let tol = SNAP_TOL_M;
        let hits: Vec<_> = points
            .iter()
            .map(|p| self.nearest_road_point(*p, allowed).expect("roads exist"))
            .collect();

        let mut index = NodeIndex::new(tol);
        for (i, p) in self.nodes.iter().enumerate() {
            let k = index.key(*p);
            index.cells.entry(k).or_default().push(i);
        }

        let mut per_edge: HashMap<usize, Vec<(usize, f64, GeoPoint)>> = HashMap::new();
        for &(e, s, t, q, _) in &hits {
            per_edge.entry(e).or_default().push((s, t, q));
        }
        let old_edges = std::mem::take(&mut self.edges);
        for (ei, edge) in old_edges.into_iter().enumerate() {
            let Some(mut cuts) = per_edge.remove(&ei) else {
                self.edges.push(edge);
                continue;
            };
            cuts.sort_by(|x, y| x.0.cmp(&y.0).then(x.1.total_cmp(&y.1)));
            let mut prev_node = edge.a;
            let mut line = vec![edge.polyline[0]];
            let mut seg = 0;
            for (s, _t, q) in cuts {
                while seg < s {
                    seg += 1;
                    let v = edge.polyline[seg];
                    if v.dist(*line.last().unwrap()) > tol {
                        line.push(v);
                    }
                }
                let node = index.get_or_insert(&mut self.nodes, q);
                if node == prev_node {
                    continue;
                }
                line.push(self.nodes[node]);
                self.push_road_piece(prev_node, node, std::mem::take(&mut line));
                line.push(self.nodes[node]);
                prev_node = node;
            }
            for v in &edge.polyline[seg + 1..] {
                if v.dist(*line.last().unwrap()) > tol {
                    line.push(*v);
                }
            }
            let end = *edge.polyline.last().unwrap();
            if line.last().map_or(true, |l| l.dist(end) > 0.0) {
                if line.last().unwrap().dist(end) <= tol {
                    line.pop();
                }
                line.push(end);
            }
            if prev_node != edge.b {
                self.push_road_piece(prev_node, edge.b, line);
            }
        }

        self.terminals = vec![None; points.len()];
        self.attach = vec![None; points.len()];
        for (ti, (p, hit)) in points.iter().zip(&hits).enumerate() {
            let host = index.find(&self.nodes, hit.3).expect("split node exists");
            self.attach[ti] = Some(host);
            if hit.4 <= tol {
                self.terminals[ti] = Some(host);
                continue;
            }
            let node = index.get_or_insert(&mut self.nodes, *p);
            self.terminals[ti] = Some(node);
            if node != host {
                self.edges.push(SpatialEdge {
                    a: host,
                    b: node,
                    length_m: hit.4,
                    polyline: vec![self.nodes[host], self.nodes[node]],
                    kind: EdgeKind::Stub,
                });
            }
        }
        Ok(())
    }

    fn push_road_piece(&mut self, a: usize, b: usize, mut line: Vec<GeoPoint>) {
        if let Some(first) = line.first_mut() {
            *first = self.nodes[a];
        }
        if let Some(last) = line.last_mut() {
            *last = self.nodes[b];
        }
        let length_m = geometry::polyline_length(&line);
        if a != b && length_m > SNAP_TOL_M {
            self.edges.push(SpatialEdge {
                a,
                b,
                length_m,
                polyline: line,
                kind: EdgeKind::Road,
            });
        }
    }

    /// Connected components as node lists, each sorted ascending.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let adj = self.adjacency();
        let mut seen = vec![false; self.nodes.len()];
        let mut out = Vec::new();
        for start in 0..self.nodes.len() {
            if seen[start] {
                continue;
            }
            let mut comp = vec![start];
            seen[start] = true;
            let mut i = 0;
            while i < comp.len() {
                let n = comp[i];
                for &e in &adj[n] {
                    let m = self.edges[e].other(n);
                    if !seen[m] {
                        seen[m] = true;
                        comp.push(m);
                    }
                }
                i += 1;
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out
    }

    fn component_length(&self, mask: &[bool]) -> f64 {
        self.edges
            .iter()
            .filter(|e| mask[e.a])
            .map(|e| e.length_m)
            .sum()
    }

    /// Largest component by node count, then by total edge length.
    pub fn largest_component(&self) -> Vec<usize> {
        let comps = self.components();
        let mut best: Option<(Vec<usize>, f64)> = None;
        for c in comps {
            let mut mask = vec![false; self.nodes.len()];
            c.iter().for_each(|&n| mask[n] = true);
            let len = self.component_length(&mask);
            let better = match &best {
                None => true,
                Some((b, bl)) => c.len() > b.len() || (c.len() == b.len() && len > *bl),
            };
            if better {
                best = Some((c, len));
            }
        }
        best.map(|b| b.0).unwrap_or_default()
    }

    /// Highest-degree node; ties go to the node nearest the component
    /// centroid, then the lowest id.
    pub fn select_root(&self, component: &[usize]) -> Option<usize> {
        if component.is_empty() {
            return None;
        }
        let deg = self.degrees();
        let n = component.len() as f64;
        let centroid = component
            .iter()
            .fold(GeoPoint::default(), |acc, &i| acc + self.nodes[i])
            * (1.0 / n);
        component.iter().copied().min_by(|&x, &y| {
            deg[y]
                .cmp(&deg[x])
                .then(self.nodes[x].dist(centroid).total_cmp(&self.nodes[y].dist(centroid)))
                .then(x.cmp(&y))
        })
    }

    /// Length-weighted Dijkstra from `root`: (distance, predecessor (node, edge)).
    pub fn shortest_paths(&self, root: usize) -> (Vec<f64>, Vec<Option<(usize, usize)>>) {
        let adj = self.adjacency();
        let mut dist = vec![f64::INFINITY; self.nodes.len()];
        let mut pred = vec![None; self.nodes.len()];
        let mut heap = BinaryHeap::new();
        dist[root] = 0.0;
        heap.push(HeapItem { dist: 0.0, node: root });
        while let Some(HeapItem { dist: d, node }) = heap.pop() {
            if d > dist[node] {
                continue;
            }
            for &ei in &adj[node] {
                let e = &self.edges[ei];
                let m = e.other(node);
                let nd = d + e.length_m;
                if nd < dist[m] {
                    dist[m] = nd;
                    pred[m] = Some((node, ei));
                    heap.push(HeapItem { dist: nd, node: m });
                }
            }
        }
        (dist, pred)
    }

    /// Union of shortest paths from each terminal in the largest component to its root.
    pub fn radial_tree(&self) -> Result<RadialTree> {
        let comp = self.largest_component();
        let root = self
            .select_root(&comp)
            .ok_or_else(|| Error::validation("empty graph"))?;
        self.radial_tree_from(root, &comp)
    }

    /// Shortest-path tree of the given component rooted at `root`.
    pub fn radial_tree_from(&self, root: usize, component: &[usize]) -> Result<RadialTree> {
        let mut in_comp = vec![false; self.nodes.len()];
        component.iter().for_each(|&n| in_comp[n] = true);
        let (dist, pred) = self.shortest_paths(root);

        let mut served = Vec::new();
        let mut dropped = Vec::new();
        let mut parent: HashMap<usize, (usize, usize)> = HashMap::new();
        for (ti, t) in self.terminals.iter().enumerate() {
            match t {
                Some(n) if in_comp[*n] && dist[*n].is_finite() => {
                    served.push(ti);
                    let mut cur = *n;
                    while cur != root && !parent.contains_key(&cur) {
                        let (p, e) = pred[cur].expect("reachable node has predecessor");
                        parent.insert(cur, (p, e));
                        cur = p;
                    }
                }
                _ => dropped.push(ti),
            }
        }
        if served.is_empty() {
            return Err(Error::validation("largest component serves no terminals"));
        }

        // breadth-first order from the root, children by node id
        let mut children: HashMap<usize, Vec<(usize, usize)>> = HashMap::new();
        for (&c, &(p, e)) in &parent {
            children.entry(p).or_default().push((c, e));
        }
        for v in children.values_mut() {
            v.sort_unstable();
        }
        let mut order = vec![root];
        let mut edges = Vec::new();
        let mut i = 0;
        while i < order.len() {
            let n = order[i];
            if let Some(ch) = children.get(&n) {
                for &(c, e) in ch {
                    order.push(c);
                    edges.push(TreeEdge {
                        parent: n,
                        child: c,
                        edge: e,
                    });
                }
            }
            i += 1;
        }
        Ok(RadialTree {
            root,
            nodes: order,
            edges,
            served,
            dropped,
            dist,
        })
    }
}

/// (segment, t) at the given fraction of a polyline's length.
fn arc_fraction_cut(line: &[GeoPoint], frac: f64) -> Option<(usize, f64)> {
    let total = geometry::polyline_length(line);
    if total <= SNAP_TOL_M {
        return None;
    }
    let mut target = frac * total;
    for (k, w) in line.windows(2).enumerate() {
        let l = w[0].dist(w[1]);
        if target <= l && l > 0.0 {
            return Some((k, target / l));
        }
        target -= l;
    }
    None
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct HeapItem {
    dist: f64,
    node: usize,
}

impl Eq for HeapItem {}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TreeEdge {
    pub parent: usize,
    pub child: usize,
    /// Index into `SpatialGraph::edges`.
    pub edge: usize,
}

/// Radial subgraph: `nodes` in breadth-first order starting at `root`;
/// `edges[i]` connects `nodes[i + 1]` to its parent.
#[derive(Debug, Clone)]
pub struct RadialTree {
    pub root: usize,
    pub nodes: Vec<usize>,
    pub edges: Vec<TreeEdge>,
    pub served: Vec<usize>,
    pub dropped: Vec<usize>,
    /// Graph shortest-path distance from the root, per graph node.
    pub dist: Vec<f64>,
}

impl RadialTree {
    /// Path length from `node` to the root along tree edges.
    pub fn tree_distance(&self, graph: &SpatialGraph, node: usize) -> Option<f64> {
        let parent: HashMap<usize, &TreeEdge> = self.edges.iter().map(|e| (e.child, e)).collect();
        let mut cur = node;
        let mut d = 0.0;
        while cur != self.root {
            let e = parent.get(&cur)?;
            d += graph.edges[e.edge].length_m;
            cur = e.parent;
        }
        Some(d)
    }
}
