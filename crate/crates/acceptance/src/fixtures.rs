//! Hand-built and seeded random grids.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use syngrid_core::geometry::GeoPoint;
use syngrid_core::gridmodel::{BusRole, LineKind, Load, LvGrid, VoltageLevel};
use syngrid_core::sizing::default_catalog;
use syngrid_core::Syngrid;

pub const LV_CABLE: &str = "NAYY 4x150 SE";
pub const MV_CABLE: &str = "NA2XS2Y 1x185 RM/25 12/20 kV";

fn at(x: f64, y: f64) -> GeoPoint {
    GeoPoint::new(500_000.0 + x, 5_200_000.0 + y)
}

fn rate(g: &mut Syngrid, t: usize, s_r_mva: f64, v_k: f64, p_cu: f64) {
    let tr = &mut g.transformers[t];
    tr.s_r_mva = s_r_mva;
    tr.v_k_percent = v_k;
    tr.p_cu_percent = p_cu;
}

fn line(g: &mut Syngrid, a: usize, b: usize, cable: &str) -> usize {
    let geom = vec![g.buses[a].location, g.buses[b].location];
    let id = g.add_line(a, b, LineKind::Feeder, geom);
    g.lines[id].cable = Some(cable.into());
    id
}

fn load(g: &mut Syngrid, bus: usize, n: u32, p_kw: f64, pv: bool) {
    g.loads.push(Load {
        id: g.loads.len(),
        bus,
        n_consumers: n,
        s_r_kva_per_consumer: 5.0,
        p_kw,
        has_pv: pv,
        pv_kw: if pv { 0.5 * p_kw } else { 0.0 },
        building: None,
    });
}

/// Radial HV/MV/LV grid with exactly `n_buses` buses (at least 5):
/// slack, MV root, a random MV tree, and one to three LV trees hanging off
/// random MV buses. Every non-root LV bus carries a load.
pub fn random_radial(seed: u64, n_buses: usize) -> Syngrid {
    assert!(n_buses >= 5, "need slack, MV root and one LV grid of at least 2 buses");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = Syngrid::empty(32632);
    g.cables = default_catalog();

    let hv = g.add_bus(VoltageLevel::HV, 110.0, at(0.0, 0.0), BusRole::HvSlack);
    let mv_root = g.add_bus(VoltageLevel::MV, 16.0, at(0.0, 0.0), BusRole::MvRoot);
    let t = g.add_transformer(hv, mv_root);
    rate(&mut g, t, 40.0, 12.0, 0.5);

    let rest = n_buses - 2;
    let max_grids = (rest / 2).min(3);
    let n_grids = rng.gen_range(1..=max_grids);
    let n_mv_extra = rng.gen_range(0..=(rest - 2 * n_grids));
    let n_lv = rest - n_mv_extra;

    let mut mv = vec![mv_root];
    for _ in 0..n_mv_extra {
        let parent = mv[rng.gen_range(0..mv.len())];
        let p = g.buses[parent].location;
        let len = rng.gen_range(200.0..1500.0);
        let ang: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        let b = g.add_bus(VoltageLevel::MV, 16.0, p + GeoPoint::new(len * ang.cos(), len * ang.sin()), BusRole::Junction);
        line(&mut g, parent, b, MV_CABLE);
        mv.push(b);
    }

    // split the LV buses, at least two per grid
    let mut sizes = vec![2usize; n_grids];
    for _ in 0..(n_lv - 2 * n_grids) {
        let k = rng.gen_range(0..n_grids);
        sizes[k] += 1;
    }
    for (k, size) in sizes.into_iter().enumerate() {
        let feeder = mv[rng.gen_range(0..mv.len())];
        let loc = g.buses[feeder].location;
        let root = g.add_bus(VoltageLevel::LV, 0.4, loc, BusRole::LvRoot);
        let t = g.add_transformer(feeder, root);
        let s_r = rng.gen_range(0.25..0.63);
        rate(&mut g, t, s_r, rng.gen_range(4.0..6.0), rng.gen_range(0.8..1.6));
        let mut buses = vec![root];
        let mut lines = Vec::new();
        for _ in 1..size {
            let parent = buses[rng.gen_range(0..buses.len())];
            let p = g.buses[parent].location;
            let len = rng.gen_range(20.0..150.0);
            let ang: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            let b = g.add_bus(VoltageLevel::LV, 0.4, p + GeoPoint::new(len * ang.cos(), len * ang.sin()), BusRole::Consumer);
            lines.push(line(&mut g, parent, b, LV_CABLE));
            buses.push(b);
            let n = rng.gen_range(1..=4u32);
            let p_kw = n as f64 * rng.gen_range(1.5..4.0);
            let pv = rng.gen_bool(0.3);
            load(&mut g, b, n, p_kw, pv);
        }
        g.lv_grids.push(LvGrid {
            polytope: k,
            transformer: t,
            root_bus: root,
            buses,
            lines,
        });
    }
    debug_assert_eq!(g.buses.len(), n_buses);
    g
}

/// Slack, MV root and a single LV path with the given segment lengths (m),
/// `consumers[i]` consumers at the end of segment i.
pub fn lv_path(segments_m: &[f64], consumers: &[u32]) -> Syngrid {
    let mut g = Syngrid::empty(32632);
    g.cables = default_catalog();
    let hv = g.add_bus(VoltageLevel::HV, 110.0, at(0.0, 0.0), BusRole::HvSlack);
    let mv = g.add_bus(VoltageLevel::MV, 16.0, at(0.0, 0.0), BusRole::MvRoot);
    let t1 = g.add_transformer(hv, mv);
    rate(&mut g, t1, 40.0, 12.0, 0.5);
    let root = g.add_bus(VoltageLevel::LV, 0.4, at(0.0, 0.0), BusRole::LvRoot);
    let t2 = g.add_transformer(mv, root);
    rate(&mut g, t2, 0.4, 4.0, 1.2);
    let mut buses = vec![root];
    let mut lines = Vec::new();
    let mut x = 0.0;
    for (&len, &n) in segments_m.iter().zip(consumers) {
        x += len;
        let b = g.add_bus(VoltageLevel::LV, 0.4, at(x, 0.0), BusRole::Consumer);
        lines.push(line(&mut g, *buses.last().unwrap(), b, LV_CABLE));
        buses.push(b);
        load(&mut g, b, n, 3.0 * n as f64, false);
    }
    g.lv_grids.push(LvGrid {
        polytope: 0,
        transformer: t2,
        root_bus: root,
        buses,
        lines,
    });
    g
}
