use super::{Boundary, Building, Crs, GeoDataset, LonLat, RoadSegment};
use crate::error::{Error, Result};
use crate::geometry::{self, GeoPoint};
use log::warn;
use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;
use std::collections::HashMap;

/// `highway=*` values that carry distribution cables.
pub const ACCEPTED_HIGHWAYS: &[&str] = &[
    "residential",
    "tertiary",
    "secondary",
    "primary",
    "unclassified",
    "service",
    "living_street",
];

#[derive(Default)]
struct RawWay {
    id: i64,
    refs: Vec<i64>,
    tags: HashMap<String, String>,
}

#[derive(Default)]
struct RawRelation {
    id: i64,
    members: Vec<(String, i64, String)>,
    tags: HashMap<String, String>,
}

enum Open {
    None,
    Way(RawWay),
    Relation(RawRelation),
}

/// Parse an OSM XML v0.6 extract into a projected dataset clipped to `boundary`.
pub fn parse_osm(raw: &[u8], boundary: &Boundary, crs_code: u32) -> Result<GeoDataset> {
    let crs = Crs::from_epsg(crs_code)?;
    let boundary_xy = boundary.project(&crs)?;

    let mut nodes: HashMap<i64, LonLat> = HashMap::new();
    let mut ways: Vec<RawWay> = Vec::new();
    let mut relations: Vec<RawRelation> = Vec::new();

    let mut reader = Reader::from_reader(raw);
    reader.config_mut().check_end_names = true;
    let mut depth = 0usize;
    let mut saw_root = false;
    let mut open = Open::None;

    loop {
        let pos = reader.buffer_position() as usize;
        let event = reader.read_event().map_err(|e| {
            let at = reader.error_position() as usize;
            parse_error(raw, at, e.to_string())
        })?;
        match event {
            Event::Start(ref e) | Event::Empty(ref e) => {
                let is_empty = matches!(event, Event::Empty(_));
                let name = e.name();
                let name = name.as_ref();
                if depth == 0 {
                    if name != b"osm" {
                        return Err(parse_error(raw, pos, "root element must be <osm>".into()));
                    }
                    saw_root = true;
                }
                match name {
                    b"node" => {
                        let id = attr_i64(e, b"id", raw, pos)?;
                        let lat = attr_f64(e, b"lat", raw, pos)?;
                        let lon = attr_f64(e, b"lon", raw, pos)?;
                        nodes.insert(id, LonLat::new(lon, lat));
                    }
                    b"way" => {
                        let way = RawWay {
                            id: attr_i64(e, b"id", raw, pos)?,
                            ..Default::default()
                        };
                        if is_empty {
                            ways.push(way);
                        } else {
                            open = Open::Way(way);
                        }
                    }
                    b"relation" => {
                        let rel = RawRelation {
                            id: attr_i64(e, b"id", raw, pos)?,
                            ..Default::default()
                        };
                        if is_empty {
                            relations.push(rel);
                        } else {
                            open = Open::Relation(rel);
                        }
                    }
                    b"nd" => {
                        if let Open::Way(w) = &mut open {
                            w.refs.push(attr_i64(e, b"ref", raw, pos)?);
                        }
                    }
                    b"tag" => {
                        let k = attr_str(e, b"k", raw, pos)?;
                        let v = attr_str(e, b"v", raw, pos)?;
                        match &mut open {
                            Open::Way(w) => {
                                w.tags.insert(k, v);
                            }
                            Open::Relation(r) => {
                                r.tags.insert(k, v);
                            }
                            Open::None => {}
                        }
                    }
                    b"member" => {
                        if let Open::Relation(r) = &mut open {
                            let kind = attr_str(e, b"type", raw, pos)?;
                            let member_ref = attr_i64(e, b"ref", raw, pos)?;
                            let role = attr_opt(e, b"role").unwrap_or_default();
                            r.members.push((kind, member_ref, role));
                        }
                    }
                    _ => {}
                }
                if !is_empty {
                    depth += 1;
                }
            }
            Event::End(ref e) => {
                depth = depth.saturating_sub(1);
                match e.name().as_ref() {
                    b"way" => {
                        if let Open::Way(w) = std::mem::replace(&mut open, Open::None) {
                            ways.push(w);
                        }
                    }
                    b"relation" => {
                        if let Open::Relation(r) = std::mem::replace(&mut open, Open::None) {
                            relations.push(r);
                        }
                    }
                    _ => {}
                }
            }
            Event::Eof => {
                if depth != 0 {
                    return Err(parse_error(raw, raw.len(), "unexpected end of document".into()));
                }
                if !saw_root {
                    return Err(parse_error(raw, raw.len(), "missing <osm> root element".into()));
                }
                break;
            }
            _ => {}
        }
    }

    let mut projected: HashMap<i64, GeoPoint> = HashMap::new();
    let mut resolve = |refs: &[i64], what: i64| -> Result<Option<Vec<GeoPoint>>> {
        let mut pts = Vec::with_capacity(refs.len());
        for r in refs {
            if let Some(p) = projected.get(r) {
                pts.push(*p);
                continue;
            }
            let Some(ll) = nodes.get(r) else {
                warn!("way {what}: node {r} missing from extract, way skipped");
                return Ok(None);
            };
            let p = crs.project(*ll)?;
            projected.insert(*r, p);
            pts.push(p);
        }
        Ok(Some(pts))
    };

    ways.sort_by_key(|w| w.id);
    relations.sort_by_key(|r| r.id);

    let mut roads = Vec::new();
    let mut buildings = Vec::new();
    let mut way_index: HashMap<i64, usize> = HashMap::new();
    for (i, w) in ways.iter().enumerate() {
        way_index.insert(w.id, i);
    }

    for w in &ways {
        if let Some(hw) = w.tags.get("highway") {
            if !ACCEPTED_HIGHWAYS.contains(&hw.as_str()) || w.refs.len() < 2 {
                continue;
            }
            let Some(line) = resolve(&w.refs, w.id)? else { continue };
            let pieces = geometry::clip_polyline(&line, &boundary_xy);
            let multi = pieces.len() > 1;
            for (k, piece) in pieces.into_iter().enumerate() {
                let id = if multi {
                    format!("w{}.{}", w.id, k)
                } else {
                    format!("w{}", w.id)
                };
                roads.push(RoadSegment::new(id, piece));
            }
        } else if is_building(&w.tags) {
            if w.refs.len() < 4 || w.refs.first() != w.refs.last() {
                continue;
            }
            let Some(ring) = resolve(&w.refs, w.id)? else { continue };
            push_building(&mut buildings, format!("w{}", w.id), ring, &boundary_xy);
        }
    }

    for r in &relations {
        let multipolygon = r.tags.get("type").map(|t| t == "multipolygon").unwrap_or(false);
        if !multipolygon || !is_building(&r.tags) {
            continue;
        }
        let outers: Vec<&RawWay> = r
            .members
            .iter()
            .filter(|(kind, _, role)| kind == "way" && (role == "outer" || role.is_empty()))
            .filter_map(|(_, id, _)| way_index.get(id).map(|&i| &ways[i]))
            .collect();
        let Some(refs) = largest_outer_ring(&outers, &nodes) else {
            warn!("relation {}: could not assemble an outer ring", r.id);
            continue;
        };
        let Some(ring) = resolve(&refs, r.id)? else { continue };
        push_building(&mut buildings, format!("r{}", r.id), ring, &boundary_xy);
    }

    Ok(GeoDataset {
        roads,
        buildings,
        boundary: boundary_xy,
        crs_code,
    })
}

fn is_building(tags: &HashMap<String, String>) -> bool {
    tags.get("building").map(|v| v != "no").unwrap_or(false)
}

fn push_building(out: &mut Vec<Building>, id: String, ring: Vec<GeoPoint>, boundary: &[GeoPoint]) {
    match Building::from_footprint(id, ring) {
        Ok(b) => {
            if geometry::ring_contains(boundary, b.centroid) {
                out.push(b);
            }
        }
        Err(e) => warn!("{e}; building skipped"),
    }
}

/// Join outer member ways end-to-end and return the ring with the largest area.
fn largest_outer_ring(outers: &[&RawWay], nodes: &HashMap<i64, LonLat>) -> Option<Vec<i64>> {
    let mut pending: Vec<Vec<i64>> = outers
        .iter()
        .filter(|w| w.refs.len() >= 2)
        .map(|w| w.refs.clone())
        .collect();
    let mut rings: Vec<Vec<i64>> = Vec::new();
    while let Some(mut chain) = pending.first().cloned() {
        pending.remove(0);
        loop {
            if chain.len() >= 4 && chain.first() == chain.last() {
                rings.push(chain);
                break;
            }
            let tail = *chain.last().unwrap();
            let next = pending
                .iter()
                .position(|w| w.first() == Some(&tail) || w.last() == Some(&tail));
            let Some(i) = next else { break };
            let mut w = pending.remove(i);
            if w.first() != Some(&tail) {
                w.reverse();
            }
            chain.extend_from_slice(&w[1..]);
        }
    }
    let area = |ring: &Vec<i64>| -> f64 {
        let pts: Vec<GeoPoint> = ring
            .iter()
            .filter_map(|r| nodes.get(r))
            .map(|ll| GeoPoint::new(ll.lon, ll.lat))
            .collect();
        geometry::ring_area(&pts)
    };
    rings
        .into_iter()
        .max_by(|a, b| area(a).total_cmp(&area(b)))
}

fn attr_opt(e: &BytesStart, key: &[u8]) -> Option<String> {
    e.attributes()
        .flatten()
        .find(|a| a.key.as_ref() == key)
        .and_then(|a| a.unescape_value().ok().map(|v| v.into_owned()))
}

fn attr_str(e: &BytesStart, key: &[u8], raw: &[u8], pos: usize) -> Result<String> {
    for a in e.attributes() {
        let a = a.map_err(|err| parse_error(raw, pos, err.to_string()))?;
        if a.key.as_ref() == key {
            return a
                .unescape_value()
                .map(|v| v.into_owned())
                .map_err(|err| parse_error(raw, pos, err.to_string()));
        }
    }
    Err(parse_error(
        raw,
        pos,
        format!(
            "<{}> is missing attribute `{}`",
            String::from_utf8_lossy(e.name().as_ref()),
            String::from_utf8_lossy(key)
        ),
    ))
}

fn attr_i64(e: &BytesStart, key: &[u8], raw: &[u8], pos: usize) -> Result<i64> {
    let s = attr_str(e, key, raw, pos)?;
    s.parse()
        .map_err(|_| parse_error(raw, pos, format!("attribute `{}` is not an integer: {s:?}", String::from_utf8_lossy(key))))
}

fn attr_f64(e: &BytesStart, key: &[u8], raw: &[u8], pos: usize) -> Result<f64> {
    let s = attr_str(e, key, raw, pos)?;
    s.parse()
        .map_err(|_| parse_error(raw, pos, format!("attribute `{}` is not a number: {s:?}", String::from_utf8_lossy(key))))
}

fn parse_error(raw: &[u8], offset: usize, message: String) -> Error {
    let offset = offset.min(raw.len());
    let before = &raw[..offset];
    let line = before.iter().filter(|&&b| b == b'\n').count() + 1;
    let column = offset - before.iter().rposition(|&b| b == b'\n').map(|i| i + 1).unwrap_or(0) + 1;
    Error::Parse {
        line,
        column,
        message,
    }
}
