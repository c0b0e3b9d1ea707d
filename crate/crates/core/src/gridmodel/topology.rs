use super::Syngrid;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Branch {
    Line(usize),
    Transformer(usize),
}

/// The grid as a tree rooted at the slack bus.
#[derive(Debug, Clone)]
pub struct Topology {
    pub root: usize,
    /// Breadth-first order; parents precede children.
    pub order: Vec<usize>,
    pub parent: Vec<Option<(usize, Branch)>>,
    pub children: Vec<Vec<(usize, Branch)>>,
    /// Hops from the root.
    pub depth: Vec<usize>,
}

impl Topology {
    pub fn new(grid: &Syngrid) -> Result<Topology> {
        let n = grid.buses.len();
        let root = grid
            .slack_bus()
            .ok_or_else(|| Error::validation("grid has no hv_slack bus"))?;
        let mut adj: Vec<Vec<(usize, Branch)>> = vec![Vec::new(); n];
        for l in &grid.lines {
            adj[l.from_bus].push((l.to_bus, Branch::Line(l.id)));
            adj[l.to_bus].push((l.from_bus, Branch::Line(l.id)));
        }
        for t in &grid.transformers {
            adj[t.hv_bus].push((t.lv_bus, Branch::Transformer(t.id)));
            adj[t.lv_bus].push((t.hv_bus, Branch::Transformer(t.id)));
        }
        let mut parent: Vec<Option<(usize, Branch)>> = vec![None; n];
        let mut children: Vec<Vec<(usize, Branch)>> = vec![Vec::new(); n];
        let mut depth = vec![usize::MAX; n];
        let mut order = Vec::with_capacity(n);
        depth[root] = 0;
        order.push(root);
        let mut i = 0;
        while i < order.len() {
            let b = order[i];
            for &(m, br) in &adj[b] {
                if parent[b].map(|(_, pb)| pb) == Some(br) {
                    continue;
                }
                if depth[m] != usize::MAX {
                    return Err(Error::validation(format!(
                        "radiality violation: bus {m} is reachable over more than one path"
                    )));
                }
                depth[m] = depth[b] + 1;
                parent[m] = Some((b, br));
                children[b].push((m, br));
                order.push(m);
            }
            i += 1;
        }
        if order.len() != n {
            let orphan = (0..n).find(|&b| depth[b] == usize::MAX).unwrap();
            return Err(Error::validation(format!(
                "bus {orphan} is not connected to the slack bus"
            )));
        }
        Ok(Topology {
            root,
            order,
            parent,
            children,
            depth,
        })
    }

    /// Buses from `bus` up to (and including) the root.
    pub fn path_to_root(&self, bus: usize) -> Vec<usize> {
        let mut out = vec![bus];
        let mut cur = bus;
        while let Some((p, _)) = self.parent[cur] {
            out.push(p);
            cur = p;
        }
        out
    }

    pub fn leaves(&self) -> impl Iterator<Item = usize> + '_ {
        self.order
            .iter()
            .copied()
            .filter(|&b| self.children[b].is_empty())
    }
}
