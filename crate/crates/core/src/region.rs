//! Polygon region masks with an optional distance buffer.

use std::fs;
use std::path::Path;

use serde_json::Value;

use crate::error::{EngineError, Result};
use crate::grid::PointTable;

/// Mean Earth radius in km used for all buffer distances.
pub const EARTH_RADIUS_KM: f64 = 6371.0088;

/// A polygon in lon/lat degrees. Ring 0 is the outer boundary, the rest are
/// holes. Rings are stored without the closing vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub name: String,
    rings: Vec<Vec<(f64, f64)>>,
}

/// Buffer distance around a region, in kilometres.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BufferSpec {
    distance_km: f64,
}

impl BufferSpec {
    pub fn new(distance_km: f64) -> Result<Self> {
        if !(distance_km >= 0.0) || !distance_km.is_finite() {
            return Err(EngineError::usage(format!(
                "buffer distance must be a finite non-negative number of km, got {distance_km}"
            )));
        }
        Ok(BufferSpec { distance_km })
    }

    pub fn none() -> Self {
        BufferSpec { distance_km: 0.0 }
    }

    pub fn distance_km(&self) -> f64 {
        self.distance_km
    }
}

fn ring_area(ring: &[(f64, f64)]) -> f64 {
    let n = ring.len();
    (0..n)
        .map(|i| {
            let (x0, y0) = ring[i];
            let (x1, y1) = ring[(i + 1) % n];
            x0 * y1 - x1 * y0
        })
        .sum::<f64>()
        / 2.0
}

impl Region {
    /// Build a region from rings; a trailing vertex equal to the first is
    /// dropped.
    pub fn new(name: impl Into<String>, rings: Vec<Vec<(f64, f64)>>) -> Result<Self> {
        if rings.is_empty() {
            return Err(EngineError::usage("region needs an outer ring"));
        }
        let mut stored = Vec::with_capacity(rings.len());
        for (i, mut ring) in rings.into_iter().enumerate() {
            if ring.len() > 1 && ring.first() == ring.last() {
                ring.pop();
            }
            if ring.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
                return Err(EngineError::usage(format!("ring {i} has a non-finite vertex")));
            }
            let mut distinct = ring.clone();
            distinct.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
            distinct.dedup();
            if distinct.len() < 3 {
                return Err(EngineError::usage(format!(
                    "ring {i} has fewer than 3 distinct vertices"
                )));
            }
            stored.push(ring);
        }
        if ring_area(&stored[0]).abs() <= 0.0 {
            return Err(EngineError::usage("outer ring encloses zero area"));
        }
        Ok(Region {
            name: name.into(),
            rings: stored,
        })
    }

    /// Axis-aligned rectangle.
    pub fn rectangle(name: impl Into<String>, xmin: f64, ymin: f64, xmax: f64, ymax: f64) -> Result<Self> {
        Region::new(
            name,
            vec![vec![(xmin, ymin), (xmax, ymin), (xmax, ymax), (xmin, ymax)]],
        )
    }

    pub fn rings(&self) -> &[Vec<(f64, f64)>] {
        &self.rings
    }

    /// Even-odd membership; points on any edge or vertex count as inside.
    pub fn contains(&self, lon: f64, lat: f64) -> bool {
        if self.rings.iter().any(|r| on_ring_boundary(r, lon, lat)) {
            return true;
        }
        ray_cast(&self.rings[0], lon, lat)
            && !self.rings[1..].iter().any(|h| ray_cast(h, lon, lat))
    }

    /// Distance in km from a point to the nearest boundary segment.
    pub fn boundary_distance_km(&self, lon: f64, lat: f64) -> f64 {
        self.rings
            .iter()
            .flat_map(|ring| {
                let n = ring.len();
                (0..n).map(move |i| (ring[i], ring[(i + 1) % n]))
            })
            .map(|(a, b)| segment_distance_km((lon, lat), a, b))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn within_buffer(&self, lon: f64, lat: f64, buffer: BufferSpec) -> bool {
        self.contains(lon, lat)
            || (buffer.distance_km > 0.0
                && self.boundary_distance_km(lon, lat) <= buffer.distance_km)
    }

    /// Records inside the buffered region, in their original order.
    pub fn clip_points(&self, points: &PointTable, buffer: BufferSpec) -> PointTable {
        PointTable {
            covariate_names: points.covariate_names.clone(),
            records: points
                .records
                .iter()
                .filter(|r| self.within_buffer(r.lon, r.lat, buffer))
                .cloned()
                .collect(),
        }
    }

    pub fn to_geojson(&self) -> Value {
        let rings: Vec<Value> = self
            .rings
            .iter()
            .map(|ring| {
                let mut pts: Vec<Value> = ring.iter().map(|(x, y)| serde_json::json!([x, y])).collect();
                pts.push(serde_json::json!([ring[0].0, ring[0].1]));
                Value::Array(pts)
            })
            .collect();
        serde_json::json!({
            "type": "FeatureCollection",
            "features": [{
                "type": "Feature",
                "properties": { "name": self.name },
                "geometry": { "type": "Polygon", "coordinates": rings }
            }]
        })
    }
}

fn on_segment(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> bool {
    let cross = (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0);
    cross == 0.0
        && p.0 >= a.0.min(b.0)
        && p.0 <= a.0.max(b.0)
        && p.1 >= a.1.min(b.1)
        && p.1 <= a.1.max(b.1)
}

fn on_ring_boundary(ring: &[(f64, f64)], x: f64, y: f64) -> bool {
    let n = ring.len();
    (0..n).any(|i| on_segment((x, y), ring[i], ring[(i + 1) % n]))
}

fn ray_cast(ring: &[(f64, f64)], x: f64, y: f64) -> bool {
    let n = ring.len();
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (xi, yi) = ring[i];
        let (xj, yj) = ring[j];
        if (yi > y) != (yj > y) && x < (xj - xi) * (y - yi) / (yj - yi) + xi {
            inside = !inside;
        }
        j = i;
    }
    inside
}

/// Point-to-segment distance on a local equirectangular plane centred at the
/// segment midpoint.
pub fn segment_distance_km(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let lon0 = (a.0 + b.0) / 2.0;
    let lat0 = ((a.1 + b.1) / 2.0).to_radians();
    let kx = lat0.cos() * EARTH_RADIUS_KM;
    let project = |q: (f64, f64)| {
        (
            (q.0 - lon0).to_radians() * kx,
            q.1.to_radians() * EARTH_RADIUS_KM,
        )
    };
    let (px, py) = project(p);
    let (ax, ay) = project(a);
    let (bx, by) = project(b);
    let (dx, dy) = (bx - ax, by - ay);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((px - ax) * dx + (py - ay) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let (cx, cy) = (ax + t * dx, ay + t * dy);
    ((px - cx).powi(2) + (py - cy).powi(2)).sqrt()
}

/// Read the first Polygon from a GeoJSON `FeatureCollection`, `Feature` or
/// bare geometry.
pub fn read_region(path: impl AsRef<Path>) -> Result<Region> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| EngineError::io(path, e))?;
    parse_region(&text, path)
}

pub(crate) fn parse_region(text: &str, path: &Path) -> Result<Region> {
    let err = |msg: String| EngineError::parse(path, 0, msg);
    let doc: Value = serde_json::from_str(text)
        .map_err(|e| EngineError::parse(path, e.line(), e.to_string()))?;

    let (geometry, props) = match doc.get("type").and_then(Value::as_str) {
        Some("FeatureCollection") => {
            let feature = doc
                .get("features")
                .and_then(Value::as_array)
                .and_then(|f| f.first())
                .ok_or_else(|| err("FeatureCollection has no features".into()))?;
            (feature.get("geometry"), feature.get("properties"))
        }
        Some("Feature") => (doc.get("geometry"), doc.get("properties")),
        Some(_) => (Some(&doc), None),
        None => return Err(err("document has no `type`".into())),
    };
    let geometry = geometry.ok_or_else(|| err("feature has no geometry".into()))?;
    match geometry.get("type").and_then(Value::as_str) {
        Some("Polygon") => {}
        Some(other) => return Err(err(format!("unsupported geometry type `{other}`, expected Polygon"))),
        None => return Err(err("geometry has no `type`".into())),
    }
    let coords = geometry
        .get("coordinates")
        .and_then(Value::as_array)
        .ok_or_else(|| err("Polygon has no coordinates".into()))?;

    let mut rings = Vec::with_capacity(coords.len());
    for (i, ring) in coords.iter().enumerate() {
        let pts = ring
            .as_array()
            .ok_or_else(|| err(format!("ring {i} is not an array")))?;
        if pts.len() < 4 {
            return Err(err(format!("ring {i} has {} vertices, at least 4 required", pts.len())));
        }
        let mut out = Vec::with_capacity(pts.len());
        for pt in pts {
            let xy = pt
                .as_array()
                .filter(|a| a.len() >= 2)
                .and_then(|a| Some((a[0].as_f64()?, a[1].as_f64()?)))
                .ok_or_else(|| err(format!("ring {i} has a malformed position")))?;
            out.push(xy);
        }
        rings.push(out);
    }
    let name = props
        .and_then(|p| p.get("name"))
        .and_then(Value::as_str)
        .unwrap_or("")
        .to_string();
    Region::new(name, rings).map_err(|e| err(e.to_string()))
}

pub fn write_region(region: &Region, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(&region.to_geojson()).expect("geojson serializes");
    fs::write(path, text).map_err(|e| EngineError::io(path, e))
}
