//! Transverse Mercator for the UTM family, via the 6th-order Krüger series.

use crate::error::{Error, Result};
use crate::geometry::GeoPoint;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LonLat {
    pub lon: f64,
    pub lat: f64,
}

impl LonLat {
    pub const fn new(lon: f64, lat: f64) -> Self {
        LonLat { lon, lat }
    }
}

#[derive(Debug, Clone, Copy)]
struct Ellipsoid {
    a: f64,
    inv_f: f64,
}

const WGS84: Ellipsoid = Ellipsoid {
    a: 6_378_137.0,
    inv_f: 298.257_223_563,
};
const GRS80: Ellipsoid = Ellipsoid {
    a: 6_378_137.0,
    inv_f: 298.257_222_101,
};

const UTM_K0: f64 = 0.9996;
const UTM_FALSE_EASTING: f64 = 500_000.0;
const UTM_FALSE_NORTHING_SOUTH: f64 = 10_000_000.0;
/// Accepted longitude distance from the central meridian, degrees.
const ZONE_HALF_WIDTH_DEG: f64 = 6.0;

/// A supported projected CRS.
#[derive(Debug, Clone, Copy)]
pub struct Crs {
    code: u32,
    lon0_deg: f64,
    south: bool,
    tm: TmSeries,
}

#[derive(Debug, Clone, Copy)]
struct TmSeries {
    e: f64,
    k0_a: f64,
    alpha: [f64; 6],
    beta: [f64; 6],
}

impl TmSeries {
    fn new(ell: Ellipsoid, k0: f64) -> Self {
        let f = 1.0 / ell.inv_f;
        let e = (f * (2.0 - f)).sqrt();
        let n = f / (2.0 - f);
        let n2 = n * n;
        let n3 = n2 * n;
        let n4 = n3 * n;
        let n5 = n4 * n;
        let n6 = n5 * n;
        let big_a = ell.a / (1.0 + n) * (1.0 + n2 / 4.0 + n4 / 64.0 + n6 / 256.0);
        let alpha = [
            n / 2.0 - 2.0 * n2 / 3.0 + 5.0 * n3 / 16.0 + 41.0 * n4 / 180.0 - 127.0 * n5 / 288.0
                + 7891.0 * n6 / 37800.0,
            13.0 * n2 / 48.0 - 3.0 * n3 / 5.0 + 557.0 * n4 / 1440.0 + 281.0 * n5 / 630.0
                - 1_983_433.0 * n6 / 1_935_360.0,
            61.0 * n3 / 240.0 - 103.0 * n4 / 140.0 + 15061.0 * n5 / 26880.0
                + 167_603.0 * n6 / 181_440.0,
            49561.0 * n4 / 161_280.0 - 179.0 * n5 / 168.0 + 6_601_661.0 * n6 / 7_257_600.0,
            34729.0 * n5 / 80640.0 - 3_418_889.0 * n6 / 1_995_840.0,
            212_378_941.0 * n6 / 319_334_400.0,
        ];
        let beta = [
            n / 2.0 - 2.0 * n2 / 3.0 + 37.0 * n3 / 96.0 - n4 / 360.0 - 81.0 * n5 / 512.0
                + 96199.0 * n6 / 604_800.0,
            n2 / 48.0 + n3 / 15.0 - 437.0 * n4 / 1440.0 + 46.0 * n5 / 105.0
                - 1_118_711.0 * n6 / 3_870_720.0,
            17.0 * n3 / 480.0 - 37.0 * n4 / 840.0 - 209.0 * n5 / 4480.0 + 5569.0 * n6 / 90720.0,
            4397.0 * n4 / 161_280.0 - 11.0 * n5 / 504.0 - 830_251.0 * n6 / 7_257_600.0,
            4583.0 * n5 / 161_280.0 - 108_847.0 * n6 / 3_991_680.0,
            20_648_693.0 * n6 / 638_668_800.0,
        ];
        TmSeries {
            e,
            k0_a: k0 * big_a,
            alpha,
            beta,
        }
    }

    /// (easting, northing) relative to the natural origin.
    fn forward(&self, dlon: f64, lat: f64) -> (f64, f64) {
        let e = self.e;
        let sin_phi = lat.sin();
        let t = (sin_phi.atanh() - e * (e * sin_phi).atanh()).sinh();
        let xi_p = t.atan2(dlon.cos());
        let eta_p = (dlon.sin() / (1.0 + t * t).sqrt()).atanh();
        let mut xi = xi_p;
        let mut eta = eta_p;
        for (j, a) in self.alpha.iter().enumerate() {
            let k = 2.0 * (j + 1) as f64;
            xi += a * (k * xi_p).sin() * (k * eta_p).cosh();
            eta += a * (k * xi_p).cos() * (k * eta_p).sinh();
        }
        (self.k0_a * eta, self.k0_a * xi)
    }

    /// (dlon, lat) in radians.
    fn inverse(&self, x: f64, y: f64) -> (f64, f64) {
        let xi = y / self.k0_a;
        let eta = x / self.k0_a;
        let mut xi_p = xi;
        let mut eta_p = eta;
        for (j, b) in self.beta.iter().enumerate() {
            let k = 2.0 * (j + 1) as f64;
            xi_p -= b * (k * xi).sin() * (k * eta).cosh();
            eta_p -= b * (k * xi).cos() * (k * eta).sinh();
        }
        let sinh_eta = eta_p.sinh();
        let tau_p = xi_p.sin() / (sinh_eta * sinh_eta + xi_p.cos().powi(2)).sqrt();
        let dlon = sinh_eta.atan2(xi_p.cos());

        let e = self.e;
        let e2m = 1.0 - e * e;
        let mut tau = tau_p;
        for _ in 0..10 {
            let s1 = (1.0 + tau * tau).sqrt();
            let sigma = (e * (e * tau / s1).atanh()).sinh();
            let tau_i = tau * (1.0 + sigma * sigma).sqrt() - sigma * s1;
            let dtau = (tau_p - tau_i) / (1.0 + tau_i * tau_i).sqrt()
                * (1.0 + e2m * tau * tau)
                / (e2m * s1);
            tau += dtau;
            if dtau.abs() < 1e-15 * tau.abs().max(1.0) {
                break;
            }
        }
        (dlon, tau.atan())
    }
}

impl Crs {
    /// Resolve a projected CRS. Supports WGS84 UTM (326xx/327xx) and
    /// ETRS89 UTM (25828..=25838).
    pub fn from_epsg(code: u32) -> Result<Crs> {
        let (zone, south, ell) = match code {
            32601..=32660 => (code - 32600, false, WGS84),
            32701..=32760 => (code - 32700, true, WGS84),
            25828..=25838 => (code - 25800, false, GRS80),
            _ => {
                return Err(Error::Config(format!(
                    "EPSG:{code} is not a supported projected CRS (UTM 326xx/327xx, ETRS89 258xx)"
                )))
            }
        };
        Ok(Crs {
            code,
            lon0_deg: -183.0 + 6.0 * zone as f64,
            south,
            tm: TmSeries::new(ell, UTM_K0),
        })
    }

    pub fn code(&self) -> u32 {
        self.code
    }

    pub fn central_meridian(&self) -> f64 {
        self.lon0_deg
    }

    pub fn false_origin(&self) -> (f64, f64) {
        let fnorth = if self.south {
            UTM_FALSE_NORTHING_SOUTH
        } else {
            0.0
        };
        (UTM_FALSE_EASTING, fnorth)
    }

    pub fn in_zone(&self, ll: LonLat) -> bool {
        if !ll.lon.is_finite() || !ll.lat.is_finite() {
            return false;
        }
        let dlon = wrap_deg(ll.lon - self.lon0_deg);
        let lat_ok = if self.south {
            (-80.0..=0.0).contains(&ll.lat)
        } else {
            (0.0..=84.0).contains(&ll.lat)
        };
        lat_ok && dlon.abs() <= ZONE_HALF_WIDTH_DEG
    }

    pub fn project(&self, ll: LonLat) -> Result<GeoPoint> {
        if !(-180.0..=180.0).contains(&ll.lon) || !(-90.0..=90.0).contains(&ll.lat) || !self.in_zone(ll) {
            return Err(Error::OutOfZone {
                lon: ll.lon,
                lat: ll.lat,
                crs: self.code,
            });
        }
        let dlon = wrap_deg(ll.lon - self.lon0_deg).to_radians();
        let (x, y) = self.tm.forward(dlon, ll.lat.to_radians());
        let (fe, fnorth) = self.false_origin();
        Ok(GeoPoint::new(fe + x, fnorth + y))
    }

    pub fn unproject(&self, p: GeoPoint) -> LonLat {
        let (fe, fnorth) = self.false_origin();
        let (dlon, lat) = self.tm.inverse(p.x - fe, p.y - fnorth);
        LonLat::new(wrap_deg(self.lon0_deg + dlon.to_degrees()), lat.to_degrees())
    }
}

fn wrap_deg(d: f64) -> f64 {
    let mut d = d % 360.0;
    if d > 180.0 {
        d -= 360.0;
    } else if d < -180.0 {
        d += 360.0;
    }
    d
}

/// Project a WGS84 lon/lat pair into `crs_code`.
pub fn project(lon: f64, lat: f64, crs_code: u32) -> Result<GeoPoint> {
    Crs::from_epsg(crs_code)?.project(LonLat::new(lon, lat))
}

pub fn unproject(p: GeoPoint, crs_code: u32) -> Result<LonLat> {
    Ok(Crs::from_epsg(crs_code)?.unproject(p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn central_meridian_on_equator() {
        let p = project(9.0, 0.0, 32632).unwrap();
        assert!((p.x - 500_000.0).abs() < 1e-9);
        assert!(p.y.abs() < 1e-9);
    }

    #[test]
    fn natural_origin_south() {
        let p = project(15.0, 0.0, 32733).unwrap();
        assert!((p.x - 500_000.0).abs() < 1e-9);
        assert!((p.y - 10_000_000.0).abs() < 1e-9);
    }

    #[test]
    fn matches_external_geodesy_values() {
        // reference values from PROJ (pyproj 3.7.1)
        let cases = [
            (32632, 7.44, 46.95, 381290.48381474323, 5200788.906851891),
            (32632, 9.5, 47.5, 537656.6739560353, 5260850.87529444),
            (32733, 16.0, -33.9, 592457.6939830318, 6248481.692273125),
            (25832, 7.44, 46.95, 381290.4838137011, 5200788.906730581),
        ];
        for (code, lon, lat, x, y) in cases {
            let p = project(lon, lat, code).unwrap();
            assert!((p.x - x).abs() < 1e-4, "{code} x {} vs {x}", p.x);
            assert!((p.y - y).abs() < 1e-4, "{code} y {} vs {y}", p.y);
        }
    }

    #[test]
    fn rejects_unsupported_and_out_of_zone() {
        assert!(matches!(project(7.0, 46.0, 2056), Err(Error::Config(_))));
        assert!(matches!(project(30.0, 46.0, 32632), Err(Error::OutOfZone { .. })));
        assert!(matches!(project(9.0, -10.0, 32632), Err(Error::OutOfZone { .. })));
    }

    proptest! {
        #[test]
        fn round_trip(dlon in -6.0f64..6.0, lat in 0.0f64..84.0) {
            let crs = Crs::from_epsg(32632).unwrap();
            let ll = LonLat::new(9.0 + dlon, lat);
            let back = crs.unproject(crs.project(ll).unwrap());
            prop_assert!((back.lon - ll.lon).abs() < 1e-7);
            prop_assert!((back.lat - ll.lat).abs() < 1e-7);
        }
    }
}
