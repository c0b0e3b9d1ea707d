use super::{BusRole, Syngrid, VoltageLevel, SCHEMA_VERSION};
use crate::error::{Error, Result};
use std::collections::{HashMap, HashSet};

fn invalid(msg: String) -> Error {
    Error::Validation(msg)
}

pub(super) fn validate(g: &Syngrid) -> Result<()> {
    if g.syngrid_schema != SCHEMA_VERSION {
        return Err(invalid(format!(
            "unsupported syngrid_schema {}, expected {SCHEMA_VERSION}",
            g.syngrid_schema
        )));
    }
    let nb = g.buses.len();
    for (i, b) in g.buses.iter().enumerate() {
        if b.id != i {
            return Err(invalid(format!("bus at position {i} has id {}; ids must be dense", b.id)));
        }
        if !(b.vn_kv > 0.0) || !b.vn_kv.is_finite() {
            return Err(invalid(format!("bus {i}: vn_kv must be positive")));
        }
        if !b.location.is_finite() {
            return Err(invalid(format!("bus {i}: non-finite location")));
        }
    }
    let slack = g.buses.iter().filter(|b| b.role == BusRole::HvSlack).count();
    if nb > 0 && slack != 1 {
        return Err(invalid(format!("expected exactly one hv_slack bus, found {slack}")));
    }

    let mut cable_names = HashSet::new();
    for c in &g.cables {
        if !cable_names.insert(c.name.as_str()) {
            return Err(invalid(format!("cable {}: duplicate catalog name", c.name)));
        }
        if !(c.i_m_ka > 0.0) || c.r_ohm_per_km < 0.0 || c.x_ohm_per_km < 0.0 {
            return Err(invalid(format!("cable {}: needs i_m > 0 and r, x >= 0", c.name)));
        }
    }

    for (i, l) in g.lines.iter().enumerate() {
        if l.id != i {
            return Err(invalid(format!("line at position {i} has id {}; ids must be dense", l.id)));
        }
        if l.from_bus >= nb || l.to_bus >= nb {
            return Err(invalid(format!("line {i}: references a missing bus")));
        }
        let (a, b) = (&g.buses[l.from_bus], &g.buses[l.to_bus]);
        if a.level != b.level {
            return Err(invalid(format!(
                "line {i}: connects {} bus {} to {} bus {}",
                a.level.as_str(),
                a.id,
                b.level.as_str(),
                b.id
            )));
        }
        if !(l.length_m > 0.0) {
            return Err(invalid(format!("line {i}: length_m must be positive")));
        }
        if l.parallel == 0 {
            return Err(invalid(format!("line {i}: parallel count must be at least 1")));
        }
        if let Some(name) = &l.cable {
            if !cable_names.contains(name.as_str()) {
                return Err(invalid(format!("line {i}: unknown cable type {name:?}")));
            }
        }
    }

    for (i, t) in g.transformers.iter().enumerate() {
        if t.id != i {
            return Err(invalid(format!("transformer at position {i} has id {}", t.id)));
        }
        if t.hv_bus >= nb || t.lv_bus >= nb {
            return Err(invalid(format!("transformer {i}: references a missing bus")));
        }
        if g.buses[t.hv_bus].level <= g.buses[t.lv_bus].level {
            return Err(invalid(format!("transformer {i}: hv side must be above lv side")));
        }
        if !(t.s_r_mva > 0.0) {
            return Err(invalid(format!("transformer {i}: s_r_mva must be positive")));
        }
    }

    for (i, l) in g.loads.iter().enumerate() {
        if l.id != i {
            return Err(invalid(format!("load at position {i} has id {}", l.id)));
        }
        if l.bus >= nb {
            return Err(invalid(format!("load {i}: references missing bus {}", l.bus)));
        }
        if l.n_consumers < 1 {
            return Err(invalid(format!("load {i}: needs at least one consumer")));
        }
        let expected_pv = if l.has_pv { 0.5 * l.p_kw } else { 0.0 };
        if l.pv_kw != expected_pv {
            return Err(invalid(format!("load {i}: pv_kw must be {expected_pv}")));
        }
    }

    // LV grids: one root each, tree law, disjoint membership
    let mut lv_owner: HashMap<usize, usize> = HashMap::new();
    for (k, lv) in g.lv_grids.iter().enumerate() {
        if lv.transformer >= g.transformers.len() || lv.root_bus >= nb {
            return Err(invalid(format!("lv grid {k}: references a missing element")));
        }
        if g.transformers[lv.transformer].lv_bus != lv.root_bus {
            return Err(invalid(format!("lv grid {k}: transformer does not feed the root bus")));
        }
        let roots = lv
            .buses
            .iter()
            .filter(|&&b| b < nb && g.buses[b].role == BusRole::LvRoot)
            .count();
        if roots != 1 || g.buses[lv.root_bus].role != BusRole::LvRoot {
            return Err(invalid(format!("lv grid {k}: expected exactly one lv_root bus, found {roots}")));
        }
        for &b in &lv.buses {
            if b >= nb || g.buses[b].level != VoltageLevel::LV {
                return Err(invalid(format!("lv grid {k}: bus {b} is not an LV bus")));
            }
            if let Some(other) = lv_owner.insert(b, k) {
                return Err(invalid(format!("bus {b} belongs to lv grids {other} and {k}")));
            }
        }
        if lv.lines.iter().any(|&l| l >= g.lines.len()) {
            return Err(invalid(format!("lv grid {k}: references a missing line")));
        }
        check_tree(
            &format!("LV grid {k} (polytope {})", lv.polytope),
            &lv.buses,
            lv.lines.iter().map(|&l| (g.lines[l].from_bus, g.lines[l].to_bus, l)),
        )?;
    }
    for b in &g.buses {
        if b.level == VoltageLevel::LV && !lv_owner.contains_key(&b.id) {
            return Err(invalid(format!("bus {}: LV bus outside every lv grid", b.id)));
        }
    }

    let mv_buses: Vec<usize> = g
        .buses
        .iter()
        .filter(|b| b.level == VoltageLevel::MV)
        .map(|b| b.id)
        .collect();
    let mv_lines = g
        .lines
        .iter()
        .filter(|l| g.buses[l.from_bus].level == VoltageLevel::MV)
        .map(|l| (l.from_bus, l.to_bus, l.id));
    if !mv_buses.is_empty() {
        check_tree("MV grid", &mv_buses, mv_lines)?;
    }

    if nb > 0 {
        // whole network: connected and acyclic through transformers
        g.topology()?;
    }
    Ok(())
}

fn check_tree(what: &str, buses: &[usize], lines: impl Iterator<Item = (usize, usize, usize)>) -> Result<()> {
    let index: HashMap<usize, usize> = buses.iter().enumerate().map(|(i, &b)| (b, i)).collect();
    let mut uf: Vec<usize> = (0..buses.len()).collect();
    fn find(uf: &mut [usize], mut x: usize) -> usize {
        while uf[x] != x {
            uf[x] = uf[uf[x]];
            x = uf[x];
        }
        x
    }
    let mut count = 0usize;
    for (a, b, id) in lines {
        let (Some(&ia), Some(&ib)) = (index.get(&a), index.get(&b)) else {
            return Err(invalid(format!("{what}: line {id} leaves the grid")));
        };
        let (ra, rb) = (find(&mut uf, ia), find(&mut uf, ib));
        if ra == rb {
            return Err(invalid(format!("{what}: radiality violation, line {id} closes a cycle")));
        }
        uf[ra] = rb;
        count += 1;
    }
    if count + 1 != buses.len() {
        return Err(invalid(format!(
            "{what}: tree law violated ({} buses, {count} lines)",
            buses.len()
        )));
    }
    Ok(())
}
