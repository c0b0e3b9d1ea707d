//! Hexagonal partition of the study polygon.
//!
//! Pointy-top hexagons on an axial lattice anchored at the boundary centroid.
//! `radius_m` is the center-to-vertex distance, so adjacent centers sit
//! `sqrt(3) * radius_m` apart.

use crate::error::{Error, Result};
use crate::geodata::{Building, Crs, GeoDataset, RoadSegment};
use crate::geometry::{self, BBox, GeoPoint};
use crate::par;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

const SQRT3: f64 = 1.732_050_807_568_877_2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polytope {
    pub index: usize,
    /// Six vertices, counter-clockwise, starting at 30 degrees.
    pub hexagon: Vec<GeoPoint>,
    pub center: GeoPoint,
    pub radius_m: f64,
    /// Axial lattice coordinate (q, r).
    pub axial: (i64, i64),
}

#[derive(Debug, Clone, Copy)]
pub struct HexLattice {
    pub anchor: GeoPoint,
    pub radius_m: f64,
}

impl HexLattice {
    pub fn center(&self, q: i64, r: i64) -> GeoPoint {
        let rad = self.radius_m;
        self.anchor
            + GeoPoint::new(SQRT3 * rad * (q as f64 + r as f64 / 2.0), 1.5 * rad * r as f64)
    }

    pub fn hexagon(&self, q: i64, r: i64) -> Vec<GeoPoint> {
        let c = self.center(q, r);
        (0..6)
            .map(|k| {
                let a = (30.0 + 60.0 * k as f64).to_radians();
                c + GeoPoint::new(self.radius_m * a.cos(), self.radius_m * a.sin())
            })
            .collect()
    }

    /// Fractional axial coordinates of a point.
    fn fractional(&self, p: GeoPoint) -> (f64, f64) {
        let d = p - self.anchor;
        let r = d.y / (1.5 * self.radius_m);
        let q = d.x / (SQRT3 * self.radius_m) - r / 2.0;
        (q, r)
    }

    /// The lattice cell whose hexagon contains `p` (ties resolved arbitrarily).
    pub fn cell_of(&self, p: GeoPoint) -> (i64, i64) {
        let (q, r) = self.fractional(p);
        let s = -q - r;
        let (mut rq, mut rr, rs) = (q.round(), r.round(), s.round());
        let (dq, dr, ds) = ((rq - q).abs(), (rr - r).abs(), (rs - s).abs());
        if dq > dr && dq > ds {
            rq = -rr - rs;
        } else if dr > ds {
            rr = -rq - rs;
        }
        (rq as i64, rr as i64)
    }
}

/// Cover `boundary` with lattice hexagons that overlap it with positive area.
pub fn tessellate(boundary: &[GeoPoint], radius_m: f64) -> Result<Vec<Polytope>> {
    if !(radius_m > 0.0) || !radius_m.is_finite() {
        return Err(Error::validation(format!("radius_m must be positive, got {radius_m}")));
    }
    let boundary = geometry::ensure_ccw(boundary.to_vec());
    let area = geometry::ring_area(&boundary);
    if boundary.len() < 3 || area <= 0.0 {
        return Err(Error::validation("boundary polygon has zero area"));
    }
    let lattice = HexLattice {
        anchor: geometry::ring_centroid(&boundary),
        radius_m,
    };
    let bb = BBox::of(&boundary).expect("non-empty boundary");
    let row_h = 1.5 * radius_m;
    let col_w = SQRT3 * radius_m;
    let r_lo = ((bb.min.y - lattice.anchor.y) / row_h).floor() as i64 - 1;
    let r_hi = ((bb.max.y - lattice.anchor.y) / row_h).ceil() as i64 + 1;
    let min_overlap = 1e-9 * radius_m * radius_m;

    let mut out = Vec::new();
    for r in r_lo..=r_hi {
        let q_lo = ((bb.min.x - lattice.anchor.x) / col_w - r as f64 / 2.0).floor() as i64 - 1;
        let q_hi = ((bb.max.x - lattice.anchor.x) / col_w - r as f64 / 2.0).ceil() as i64 + 1;
        for q in q_lo..=q_hi {
            let hex = lattice.hexagon(q, r);
            let overlap = geometry::clip_by_convex(&boundary, &hex);
            if geometry::ring_area(&overlap) > min_overlap {
                out.push(Polytope {
                    index: out.len(),
                    center: lattice.center(q, r),
                    hexagon: hex,
                    radius_m,
                    axial: (q, r),
                });
            }
        }
    }
    Ok(out)
}

fn clip_roads(roads: &[RoadSegment], hex: &[GeoPoint]) -> Vec<RoadSegment> {
    let hb = BBox::of(hex).expect("hexagon");
    let mut out = Vec::new();
    for road in roads {
        match BBox::of(&road.polyline) {
            Some(rb) if rb.intersects(&hb) => {}
            _ => continue,
        }
        let pieces = geometry::clip_polyline(&road.polyline, hex);
        let multi = pieces.len() > 1;
        for (k, piece) in pieces.into_iter().enumerate() {
            let id = if multi {
                format!("{}#{k}", road.id)
            } else {
                road.id.clone()
            };
            out.push(RoadSegment::new(id, piece));
        }
    }
    out
}

/// Roads clipped to the hexagon and buildings whose centroid lies in it (closed set).
pub fn crop(dataset: &GeoDataset, polytope: &Polytope) -> GeoDataset {
    GeoDataset {
        roads: clip_roads(&dataset.roads, &polytope.hexagon),
        buildings: dataset
            .buildings
            .iter()
            .filter(|b| geometry::ring_contains(&polytope.hexagon, b.centroid))
            .cloned()
            .collect(),
        boundary: polytope.hexagon.clone(),
        crs_code: dataset.crs_code,
    }
}

/// Crop for every polytope, assigning each building to exactly one cell.
///
/// A centroid on a shared edge or vertex goes to the lowest polytope index.
/// Buildings whose centroid falls in no polytope are returned separately.
pub fn crop_all(dataset: &GeoDataset, polytopes: &[Polytope]) -> (Vec<GeoDataset>, Vec<Building>) {
    let mut by_axial: HashMap<(i64, i64), usize> = HashMap::new();
    for p in polytopes {
        by_axial.insert(p.axial, p.index);
    }
    let lattice = polytopes.first().map(|p| HexLattice {
        anchor: p.center - offset_of(p.axial, p.radius_m),
        radius_m: p.radius_m,
    });

    let mut assigned: Vec<Vec<Building>> = vec![Vec::new(); polytopes.len()];
    let mut orphans = Vec::new();
    for b in &dataset.buildings {
        let hit = lattice.and_then(|lat| {
            let (q, r) = lat.cell_of(b.centroid);
            let candidates = [
                (q, r),
                (q + 1, r),
                (q - 1, r),
                (q, r + 1),
                (q, r - 1),
                (q + 1, r - 1),
                (q - 1, r + 1),
            ];
            candidates
                .iter()
                .filter_map(|c| by_axial.get(c).copied())
                .filter(|&i| geometry::ring_contains(&polytopes[i].hexagon, b.centroid))
                .min()
        });
        match hit {
            Some(i) => assigned[i].push(b.clone()),
            None => orphans.push(b.clone()),
        }
    }

    let roads = par::map(polytopes, |p| clip_roads(&dataset.roads, &p.hexagon));
    let cropped = roads
        .into_iter()
        .zip(assigned)
        .zip(polytopes)
        .map(|((roads, buildings), p)| GeoDataset {
            roads,
            buildings,
            boundary: p.hexagon.clone(),
            crs_code: dataset.crs_code,
        })
        .collect();
    (cropped, orphans)
}

fn offset_of((q, r): (i64, i64), radius: f64) -> GeoPoint {
    GeoPoint::new(SQRT3 * radius * (q as f64 + r as f64 / 2.0), 1.5 * radius * r as f64)
}

/// Debug export of the hexagons as a GeoJSON FeatureCollection in lon/lat.
pub fn polytopes_geojson(polytopes: &[Polytope], crs: &Crs) -> serde_json::Value {
    let features: Vec<serde_json::Value> = polytopes
        .iter()
        .map(|p| {
            let mut ring: Vec<[f64; 2]> = p
                .hexagon
                .iter()
                .map(|v| {
                    let ll = crs.unproject(*v);
                    [ll.lon, ll.lat]
                })
                .collect();
            ring.push(ring[0]);
            serde_json::json!({
                "type": "Feature",
                "geometry": { "type": "Polygon", "coordinates": [ring] },
                "properties": { "index": p.index, "q": p.axial.0, "r": p.axial.1, "radius_m": p.radius_m },
            })
        })
        .collect();
    serde_json::json!({ "type": "FeatureCollection", "features": features })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_lattice_hexagon_gives_one_polytope() {
        let lat = HexLattice {
            anchor: GeoPoint::new(0.0, 0.0),
            radius_m: 100.0,
        };
        let hex = lat.hexagon(0, 0);
        let polys = tessellate(&hex, 100.0).unwrap();
        assert_eq!(polys.len(), 1);
        assert_eq!(polys[0].axial, (0, 0));
    }

    #[test]
    fn degenerate_boundary_rejected() {
        let line = vec![
            GeoPoint::new(0.0, 0.0),
            GeoPoint::new(10.0, 0.0),
            GeoPoint::new(20.0, 0.0),
        ];
        assert!(matches!(tessellate(&line, 10.0), Err(Error::Validation(_))));
        let sq = vec![
            GeoPoint::new(0.0, 0.0),
            GeoPoint::new(1.0, 0.0),
            GeoPoint::new(1.0, 1.0),
        ];
        assert!(tessellate(&sq, 0.0).is_err());
    }

    #[test]
    fn adjacent_centers_are_sqrt3_r_apart() {
        let sq = vec![
            GeoPoint::new(0.0, 0.0),
            GeoPoint::new(1000.0, 0.0),
            GeoPoint::new(1000.0, 1000.0),
            GeoPoint::new(0.0, 1000.0),
        ];
        let polys = tessellate(&sq, 80.0).unwrap();
        let index: HashMap<_, _> = polys.iter().map(|p| (p.axial, p)).collect();
        let mut checked = 0;
        for p in &polys {
            for d in [(1, 0), (0, 1), (-1, 1)] {
                if let Some(n) = index.get(&(p.axial.0 + d.0, p.axial.1 + d.1)) {
                    let dist = p.center.dist(n.center);
                    assert!((dist - SQRT3 * 80.0).abs() < 1e-9);
                    checked += 1;
                }
            }
            for i in 0..6 {
                let e = p.hexagon[i].dist(p.hexagon[(i + 1) % 6]);
                assert!((e - 80.0).abs() < 1e-9);
            }
        }
        assert!(checked > 10);
        // indices contiguous in row-major order
        for (i, w) in polys.windows(2).enumerate() {
            assert_eq!(polys[i].index, i);
            assert!((w[0].axial.1, w[0].axial.0) < (w[1].axial.1, w[1].axial.0));
        }
    }

    #[test]
    fn lattice_cell_of_center() {
        let lat = HexLattice {
            anchor: GeoPoint::new(10.0, -5.0),
            radius_m: 50.0,
        };
        for q in -3..3 {
            for r in -3..3 {
                assert_eq!(lat.cell_of(lat.center(q, r)), (q, r));
            }
        }
    }
}
