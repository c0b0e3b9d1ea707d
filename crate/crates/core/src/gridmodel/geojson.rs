use super::Syngrid;
use crate::geodata::Crs;
use crate::geometry::GeoPoint;
use serde_json::{json, Value};

/// FeatureCollection in lon/lat: one feature per line, bus and transformer.
///
/// Coordinates stay projected if the grid's CRS code is not supported.
pub fn to_geojson(grid: &Syngrid) -> Value {
    let crs = Crs::from_epsg(grid.crs_code).ok();
    let coord = |p: GeoPoint| -> Value {
        match &crs {
            Some(c) => {
                let ll = c.unproject(p);
                json!([ll.lon, ll.lat])
            }
            None => json!([p.x, p.y]),
        }
    };
    let mut features = Vec::with_capacity(grid.lines.len() + grid.buses.len() + grid.transformers.len());
    for l in &grid.lines {
        let level = grid.buses[l.from_bus].level;
        features.push(json!({
            "type": "Feature",
            "geometry": {
                "type": "LineString",
                "coordinates": l.geometry.iter().map(|p| coord(*p)).collect::<Vec<_>>(),
            },
            "properties": {
                "element": "line",
                "id": l.id,
                "level": level.as_str(),
                "kind": l.kind,
                "from_bus": l.from_bus,
                "to_bus": l.to_bus,
                "length_m": l.length_m,
                "cable": l.cable,
                "parallel": l.parallel,
            },
        }));
    }
    let mut load_of = vec![None; grid.buses.len()];
    for ld in &grid.loads {
        load_of[ld.bus] = Some(ld);
    }
    for b in &grid.buses {
        let mut props = json!({
            "element": "bus",
            "id": b.id,
            "level": b.level.as_str(),
            "vn_kv": b.vn_kv,
            "role": b.role,
        });
        if let Some(ld) = load_of[b.id] {
            props["n_consumers"] = ld.n_consumers.into();
            props["p_kw"] = ld.p_kw.into();
            props["has_pv"] = ld.has_pv.into();
            props["pv_kw"] = ld.pv_kw.into();
            if let Some(bld) = &ld.building {
                props["building"] = bld.clone().into();
            }
        }
        features.push(json!({
            "type": "Feature",
            "geometry": { "type": "Point", "coordinates": coord(b.location) },
            "properties": props,
        }));
    }
    for t in &grid.transformers {
        features.push(json!({
            "type": "Feature",
            "geometry": { "type": "Point", "coordinates": coord(grid.buses[t.lv_bus].location) },
            "properties": {
                "element": "transformer",
                "id": t.id,
                "level": format!("{}/{}", grid.buses[t.hv_bus].level.as_str(), grid.buses[t.lv_bus].level.as_str()),
                "hv_bus": t.hv_bus,
                "lv_bus": t.lv_bus,
                "s_r_mva": t.s_r_mva,
                "v_k_percent": t.v_k_percent,
                "p_cu_percent": t.p_cu_percent,
            },
        }));
    }
    json!({ "type": "FeatureCollection", "features": features })
}
