//! Geodesic primitives, station-position estimation, radar grids and label
//! binning.
//!
//! Coordinates are WGS84 degrees on a spherical Earth of radius
//! [`EARTH_RADIUS_KM`]. No projection is ever applied: interpolation works
//! directly in lat/lon.

mod binning;
mod cluster;
mod radar;

pub use binning::LabelBinning;
pub use cluster::{cluster_stations, nearest_neighbors, ClusterOptions, Clustering, StationCluster};
pub use radar::{read_radar_series, write_radar_series, CellSize, RadarGrid};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mean Earth radius used by every distance computation in the crate.
pub const EARTH_RADIUS_KM: f64 = 6371.0;

/// A validated latitude/longitude pair in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPoint", into = "RawPoint")]
pub struct GeoPoint {
    lat: f64,
    lon: f64,
}

#[derive(Serialize, Deserialize)]
struct RawPoint {
    lat: f64,
    lon: f64,
}

impl TryFrom<RawPoint> for GeoPoint {
    type Error = Error;
    fn try_from(raw: RawPoint) -> Result<Self> {
        GeoPoint::new(raw.lat, raw.lon)
    }
}

impl From<GeoPoint> for RawPoint {
    fn from(p: GeoPoint) -> Self {
        RawPoint { lat: p.lat, lon: p.lon }
    }
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Result<Self> {
        if !lat.is_finite() || !(-90.0..=90.0).contains(&lat) {
            return Err(Error::OutOfRange(format!("latitude {lat} not in [-90, 90]")));
        }
        if !lon.is_finite() || !(-180.0..=180.0).contains(&lon) {
            return Err(Error::OutOfRange(format!("longitude {lon} not in [-180, 180]")));
        }
        Ok(GeoPoint { lat, lon })
    }

    #[inline]
    pub fn lat(&self) -> f64 {
        self.lat
    }

    #[inline]
    pub fn lon(&self) -> f64 {
        self.lon
    }

    /// Unit vector on the sphere (x towards lon 0 on the equator, z to the north pole).
    pub(crate) fn to_unit(self) -> [f64; 3] {
        let (sp, cp) = self.lat.to_radians().sin_cos();
        let (sl, cl) = self.lon.to_radians().sin_cos();
        [cp * cl, cp * sl, sp]
    }

    pub(crate) fn from_unit(v: [f64; 3]) -> Self {
        let norm = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        let z = (v[2] / norm).clamp(-1.0, 1.0);
        let lat = z.asin().to_degrees();
        let lon = v[1].atan2(v[0]).to_degrees();
        GeoPoint {
            lat: lat.clamp(-90.0, 90.0),
            lon: lon.clamp(-180.0, 180.0),
        }
    }

    /// Point displaced by `north_m` / `east_m` metres using a local
    /// equirectangular approximation. Only meant for sub-kilometre offsets.
    pub fn offset_m(&self, north_m: f64, east_m: f64) -> Result<Self> {
        let dlat = (north_m / 1000.0 / EARTH_RADIUS_KM).to_degrees();
        let dlon = (east_m / 1000.0 / (EARTH_RADIUS_KM * self.lat.to_radians().cos())).to_degrees();
        GeoPoint::new(self.lat + dlat, self.lon + dlon)
    }
}

/// Great-circle distance in kilometres (haversine form).
pub fn haversine_km(a: GeoPoint, b: GeoPoint) -> f64 {
    let phi1 = a.lat.to_radians();
    let phi2 = b.lat.to_radians();
    let dphi = phi2 - phi1;
    let dlambda = (b.lon - a.lon).to_radians();
    let s1 = (dphi * 0.5).sin();
    let s2 = (dlambda * 0.5).sin();
    let h = (s1 * s1 + phi1.cos() * phi2.cos() * s2 * s2).clamp(0.0, 1.0);
    2.0 * EARTH_RADIUS_KM * h.sqrt().asin()
}

/// Axis-aligned lat/lon box, inclusive on all edges.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub min_lat: f64,
    pub min_lon: f64,
    pub max_lat: f64,
    pub max_lon: f64,
}

impl BoundingBox {
    pub fn validate(&self) -> Result<()> {
        GeoPoint::new(self.min_lat, self.min_lon)?;
        GeoPoint::new(self.max_lat, self.max_lon)?;
        if !(self.min_lat < self.max_lat && self.min_lon < self.max_lon) {
            return Err(Error::InvalidInput(format!("degenerate bounding box {self:?}")));
        }
        Ok(())
    }

    pub fn contains(&self, p: GeoPoint) -> bool {
        (self.min_lat..=self.max_lat).contains(&p.lat) && (self.min_lon..=self.max_lon).contains(&p.lon)
    }

    pub fn contains_box(&self, other: &BoundingBox) -> bool {
        self.min_lat <= other.min_lat
            && self.min_lon <= other.min_lon
            && self.max_lat >= other.max_lat
            && self.max_lon >= other.max_lon
    }

    /// Roughly the extent of Yanqing district, north-west of Beijing.
    pub fn yanqing() -> Self {
        BoundingBox {
            min_lat: 40.30,
            min_lon: 115.80,
            max_lat: 40.65,
            max_lon: 116.30,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cosine_law_km(a: GeoPoint, b: GeoPoint) -> f64 {
        let (p1, p2) = (a.lat.to_radians(), b.lat.to_radians());
        let dl = (b.lon - a.lon).to_radians();
        let c = p1.sin() * p2.sin() + p1.cos() * p2.cos() * dl.cos();
        EARTH_RADIUS_KM * c.clamp(-1.0, 1.0).acos()
    }

    #[test]
    fn identical_points_are_zero_apart() {
        let p = GeoPoint::new(40.35, 115.98).unwrap();
        assert_eq!(haversine_km(p, p), 0.0);
    }

    #[test]
    fn one_degree_of_longitude_matches_cosine_law() {
        let a = GeoPoint::new(40.0, 116.0).unwrap();
        let b = GeoPoint::new(40.0, 117.0).unwrap();
        let h = haversine_km(a, b);
        let c = cosine_law_km(a, b);
        assert!((h - c).abs() < 1e-6, "{h} vs {c}");
        assert!((h - 85.18).abs() < 0.05, "{h}");
    }

    #[test]
    fn rejects_out_of_range_coordinates() {
        assert!(GeoPoint::new(91.0, 0.0).is_err());
        assert!(GeoPoint::new(0.0, -180.5).is_err());
        assert!(GeoPoint::new(f64::NAN, 0.0).is_err());
        assert!(serde_json::from_str::<GeoPoint>(r#"{"lat": 95.0, "lon": 1.0}"#).is_err());
    }

    #[test]
    fn unit_vector_round_trip() {
        let p = GeoPoint::new(40.4, 116.1).unwrap();
        let q = GeoPoint::from_unit(p.to_unit());
        assert!((p.lat - q.lat).abs() < 1e-12 && (p.lon - q.lon).abs() < 1e-12);
    }

    fn point() -> impl Strategy<Value = GeoPoint> {
        (-89.9f64..89.9, -179.9f64..179.9).prop_map(|(la, lo)| GeoPoint::new(la, lo).unwrap())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn symmetric_and_nonnegative(a in point(), b in point()) {
            let d1 = haversine_km(a, b);
            prop_assert!(d1 >= 0.0);
            prop_assert_eq!(d1, haversine_km(b, a));
        }

        #[test]
        fn triangle_inequality(a in point(), b in point(), c in point()) {
            prop_assert!(haversine_km(a, c) <= haversine_km(a, b) + haversine_km(b, c) + 1e-9);
        }
    }
}
