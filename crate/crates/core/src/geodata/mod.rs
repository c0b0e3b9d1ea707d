//! Map ingestion: OSM XML parsing, projection and clipping to the study polygon.

mod osm;
pub mod overpass;
pub mod projection;

pub use osm::{parse_osm, ACCEPTED_HIGHWAYS};
pub use overpass::{fetch_overpass, OverpassClient};
pub use projection::{project, unproject, Crs, LonLat};

use crate::error::{Error, Result};
use crate::geometry::{self, GeoPoint};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoadSegment {
    pub id: String,
    pub polyline: Vec<GeoPoint>,
    pub length_m: f64,
}

impl RoadSegment {
    pub fn new(id: impl Into<String>, polyline: Vec<GeoPoint>) -> Self {
        let length_m = geometry::polyline_length(&polyline);
        RoadSegment {
            id: id.into(),
            polyline,
            length_m,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Building {
    pub id: String,
    /// Open ring (first vertex not repeated).
    pub footprint: Vec<GeoPoint>,
    pub area_m2: f64,
    pub centroid: GeoPoint,
}

impl Building {
    /// Builds from a footprint ring, rejecting self-intersecting or zero-area rings.
    pub fn from_footprint(id: impl Into<String>, ring: Vec<GeoPoint>) -> Result<Self> {
        let id = id.into();
        let ring = geometry::open_ring(ring);
        if !geometry::ring_is_simple(&ring) {
            return Err(Error::validation(format!("building {id}: footprint is not a simple ring")));
        }
        let area_m2 = geometry::ring_area(&ring);
        if area_m2 <= 0.0 {
            return Err(Error::validation(format!("building {id}: zero footprint area")));
        }
        let centroid = geometry::ring_centroid(&ring);
        Ok(Building {
            id,
            footprint: ring,
            area_m2,
            centroid,
        })
    }
}

/// Projected roads and buildings clipped to a boundary polygon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeoDataset {
    pub roads: Vec<RoadSegment>,
    pub buildings: Vec<Building>,
    /// Counter-clockwise open ring in the projected CRS.
    pub boundary: Vec<GeoPoint>,
    pub crs_code: u32,
}

impl GeoDataset {
    pub fn total_road_length(&self) -> f64 {
        self.roads.iter().map(|r| r.length_m).sum()
    }
}

/// A lon/lat polygon in EPSG:4326, stored as an open ring.
#[derive(Debug, Clone, PartialEq)]
pub struct Boundary {
    ring: Vec<LonLat>,
}

impl Boundary {
    pub fn new(mut ring: Vec<LonLat>) -> Result<Self> {
        if ring.len() >= 2 && ring[0] == ring[ring.len() - 1] {
            ring.pop();
        }
        if ring.len() < 3 {
            return Err(Error::validation(format!(
                "boundary needs at least 3 vertices, got {}",
                ring.len()
            )));
        }
        if ring.iter().any(|p| !p.lon.is_finite() || !p.lat.is_finite()) {
            return Err(Error::validation("boundary contains non-finite coordinates"));
        }
        Ok(Boundary { ring })
    }

    pub fn vertices(&self) -> &[LonLat] {
        &self.ring
    }

    /// Parse a GeoJSON `Polygon` geometry (outer ring only).
    pub fn from_geojson(value: &serde_json::Value) -> Result<Self> {
        let poly: GeoJsonPolygon = serde_json::from_value(value.clone())
            .map_err(|e| Error::validation(format!("boundary is not a GeoJSON Polygon: {e}")))?;
        if poly.kind != "Polygon" {
            return Err(Error::validation(format!(
                "boundary geometry type must be Polygon, got {}",
                poly.kind
            )));
        }
        let outer = poly
            .coordinates
            .into_iter()
            .next()
            .ok_or_else(|| Error::validation("boundary polygon has no rings"))?;
        Boundary::new(outer.into_iter().map(|[lon, lat]| LonLat::new(lon, lat)).collect())
    }

    pub fn to_geojson(&self) -> serde_json::Value {
        let mut coords: Vec<[f64; 2]> = self.ring.iter().map(|p| [p.lon, p.lat]).collect();
        coords.push(coords[0]);
        serde_json::json!({ "type": "Polygon", "coordinates": [coords] })
    }

    pub fn project(&self, crs: &Crs) -> Result<Vec<GeoPoint>> {
        let ring = self
            .ring
            .iter()
            .map(|p| crs.project(*p))
            .collect::<Result<Vec<_>>>()?;
        let ring = geometry::ensure_ccw(ring);
        if geometry::ring_area(&ring) <= 0.0 {
            return Err(Error::validation("boundary polygon has zero area"));
        }
        Ok(ring)
    }

    /// Canonical key used for the map cache.
    pub fn cache_key(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        for p in &self.ring {
            h.update(format!("{:.9},{:.9};", p.lon, p.lat).as_bytes());
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn translated(&self, dlon: f64, dlat: f64) -> Boundary {
        Boundary {
            ring: self
                .ring
                .iter()
                .map(|p| LonLat::new(p.lon + dlon, p.lat + dlat))
                .collect(),
        }
    }
}

impl Serialize for Boundary {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_geojson().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Boundary {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = serde_json::Value::deserialize(d)?;
        Boundary::from_geojson(&v).map_err(serde::de::Error::custom)
    }
}

#[derive(Deserialize)]
struct GeoJsonPolygon {
    #[serde(rename = "type")]
    kind: String,
    coordinates: Vec<Vec<[f64; 2]>>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn boundary_geojson_round_trip() {
        let b = Boundary::new(vec![
            LonLat::new(7.0, 46.0),
            LonLat::new(7.1, 46.0),
            LonLat::new(7.1, 46.1),
        ])
        .unwrap();
        let v = b.to_geojson();
        assert_eq!(v["coordinates"][0].as_array().unwrap().len(), 4);
        assert_eq!(Boundary::from_geojson(&v).unwrap(), b);
    }

    #[test]
    fn boundary_needs_three_vertices() {
        let err = Boundary::new(vec![LonLat::new(7.0, 46.0), LonLat::new(7.1, 46.0)]).unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
    }

    #[test]
    fn building_area_by_shoelace() {
        let b = Building::from_footprint(
            "w1",
            vec![
                GeoPoint::new(100.0, 200.0),
                GeoPoint::new(120.0, 200.0),
                GeoPoint::new(120.0, 215.0),
                GeoPoint::new(100.0, 215.0),
                GeoPoint::new(100.0, 200.0),
            ],
        )
        .unwrap();
        assert_eq!(b.area_m2, 300.0);
        assert_eq!(b.footprint.len(), 4);
    }
}
