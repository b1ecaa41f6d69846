//! Planar polygons and contiguity detection.

use std::io::Read;

use serde_json::Value;

use super::{SpatialWeights, WeightsError};

pub type Point = [f64; 2];

/// A closed ring without its repeated closing vertex.
pub type Ring = Vec<Point>;

#[derive(Debug, Clone, PartialEq)]
pub struct Polygon {
    pub exterior: Ring,
    pub holes: Vec<Ring>,
}

impl Polygon {
    pub fn new(exterior: Ring) -> Self {
        Self {
            exterior,
            holes: Vec::new(),
        }
    }

    /// Axis-aligned rectangle `[x0, x1] × [y0, y1]`.
    pub fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Self::new(vec![[x0, y0], [x1, y0], [x1, y1], [x0, y1]])
    }

    fn rings(&self) -> impl Iterator<Item = &Ring> {
        std::iter::once(&self.exterior).chain(self.holes.iter())
    }
}

/// All polygons belonging to one region.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionGeometry {
    pub id: String,
    pub polygons: Vec<Polygon>,
}

#[derive(Debug, Clone, Copy)]
struct BBox {
    min: Point,
    max: Point,
}

impl BBox {
    fn empty() -> Self {
        Self {
            min: [f64::INFINITY; 2],
            max: [f64::NEG_INFINITY; 2],
        }
    }

    fn add(&mut self, p: Point) {
        for k in 0..2 {
            self.min[k] = self.min[k].min(p[k]);
            self.max[k] = self.max[k].max(p[k]);
        }
    }

    fn merge(&mut self, other: &BBox) {
        self.add(other.min);
        self.add(other.max);
    }

    fn near(&self, other: &BBox, tol: f64) -> bool {
        (0..2).all(|k| self.min[k] <= other.max[k] + tol && other.min[k] <= self.max[k] + tol)
    }

    fn diagonal(&self) -> f64 {
        (self.max[0] - self.min[0]).hypot(self.max[1] - self.min[1])
    }
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    a: Point,
    b: Point,
    bbox: BBox,
}

impl Segment {
    fn new(a: Point, b: Point) -> Self {
        let mut bbox = BBox::empty();
        bbox.add(a);
        bbox.add(b);
        Self { a, b, bbox }
    }
}

fn sub(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1]]
}

fn cross(a: Point, b: Point) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

fn dot(a: Point, b: Point) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

fn orient(a: Point, b: Point, c: Point) -> f64 {
    cross(sub(b, a), sub(c, a))
}

fn on_segment(a: Point, b: Point, p: Point) -> bool {
    p[0] >= a[0].min(b[0]) && p[0] <= a[0].max(b[0]) && p[1] >= a[1].min(b[1]) && p[1] <= a[1].max(b[1])
}

fn segments_intersect(a: Point, b: Point, c: Point, d: Point) -> bool {
    let o1 = orient(a, b, c);
    let o2 = orient(a, b, d);
    let o3 = orient(c, d, a);
    let o4 = orient(c, d, b);
    if ((o1 > 0.0 && o2 < 0.0) || (o1 < 0.0 && o2 > 0.0)) && ((o3 > 0.0 && o4 < 0.0) || (o3 < 0.0 && o4 > 0.0)) {
        return true;
    }
    (o1 == 0.0 && on_segment(a, b, c))
        || (o2 == 0.0 && on_segment(a, b, d))
        || (o3 == 0.0 && on_segment(c, d, a))
        || (o4 == 0.0 && on_segment(c, d, b))
}

fn point_segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let ab = sub(b, a);
    let len2 = dot(ab, ab);
    let t = if len2 == 0.0 {
        0.0
    } else {
        (dot(sub(p, a), ab) / len2).clamp(0.0, 1.0)
    };
    let q = [a[0] + t * ab[0], a[1] + t * ab[1]];
    (p[0] - q[0]).hypot(p[1] - q[1])
}

fn segment_distance(s: &Segment, t: &Segment) -> f64 {
    if segments_intersect(s.a, s.b, t.a, t.b) {
        return 0.0;
    }
    point_segment_distance(s.a, t.a, t.b)
        .min(point_segment_distance(s.b, t.a, t.b))
        .min(point_segment_distance(t.a, s.a, s.b))
        .min(point_segment_distance(t.b, s.a, s.b))
}

/// Length of the collinear overlap of two segments, zero if they are not
/// collinear within `tol`.
fn collinear_overlap(s: &Segment, t: &Segment, tol: f64) -> f64 {
    let d = sub(s.b, s.a);
    let len = dot(d, d).sqrt();
    if len == 0.0 {
        return 0.0;
    }
    let dist_to_line = |p: Point| cross(d, sub(p, s.a)).abs() / len;
    if dist_to_line(t.a) > tol || dist_to_line(t.b) > tol {
        return 0.0;
    }
    let u = [d[0] / len, d[1] / len];
    let ta = dot(sub(t.a, s.a), u);
    let tb = dot(sub(t.b, s.a), u);
    let lo = ta.min(tb).max(0.0);
    let hi = ta.max(tb).min(len);
    (hi - lo).max(0.0)
}

fn normalize_ring(ring: &[Point]) -> Ring {
    let mut out: Ring = Vec::with_capacity(ring.len());
    for &p in ring {
        if out.last() != Some(&p) {
            out.push(p);
        }
    }
    while out.len() > 1 && out.first() == out.last() {
        out.pop();
    }
    out
}

fn signed_area(ring: &[Point]) -> f64 {
    let n = ring.len();
    (0..n)
        .map(|i| cross(ring[i], ring[(i + 1) % n]))
        .sum::<f64>()
        * 0.5
}

fn check_ring(ring: &[Point]) -> Result<(), String> {
    if ring.len() < 3 {
        return Err(format!("ring has {} distinct vertices, need 3", ring.len()));
    }
    if ring.iter().any(|p| !p[0].is_finite() || !p[1].is_finite()) {
        return Err(String::from("non-finite coordinate"));
    }
    let mut bbox = BBox::empty();
    ring.iter().for_each(|&p| bbox.add(p));
    let scale = bbox.diagonal();
    if signed_area(ring).abs() <= f64::EPSILON * scale * scale {
        return Err(String::from("ring has zero area"));
    }
    let n = ring.len();
    let segs: Vec<Segment> = (0..n).map(|i| Segment::new(ring[i], ring[(i + 1) % n])).collect();
    for i in 0..n {
        for j in i + 2..n {
            if i == 0 && j == n - 1 {
                continue;
            }
            let (s, t) = (&segs[i], &segs[j]);
            if s.bbox.near(&t.bbox, 0.0) && segments_intersect(s.a, s.b, t.a, t.b) {
                return Err(format!("ring self-intersects between edges {i} and {j}"));
            }
        }
    }
    Ok(())
}

struct Prepared {
    bbox: BBox,
    segments: Vec<Segment>,
}

fn prepare(regions: &[RegionGeometry]) -> Result<(Vec<Prepared>, f64), WeightsError> {
    let mut all = BBox::empty();
    let mut out = Vec::with_capacity(regions.len());
    for region in regions {
        let mut bbox = BBox::empty();
        let mut segments = Vec::new();
        for polygon in &region.polygons {
            for ring in polygon.rings() {
                let ring = normalize_ring(ring);
                check_ring(&ring).map_err(|reason| WeightsError::InvalidRing {
                    region: region.id.clone(),
                    reason,
                })?;
                let n = ring.len();
                for i in 0..n {
                    let s = Segment::new(ring[i], ring[(i + 1) % n]);
                    bbox.merge(&s.bbox);
                    segments.push(s);
                }
            }
        }
        if segments.is_empty() {
            return Err(WeightsError::EmptyGeometry(region.id.clone()));
        }
        all.merge(&bbox);
        out.push(Prepared { bbox, segments });
    }
    Ok((out, 1e-9 * all.diagonal()))
}

#[derive(Clone, Copy, PartialEq)]
enum Contiguity {
    Queen,
    Rook,
}

fn contiguity(regions: &[RegionGeometry], kind: Contiguity) -> Result<SpatialWeights, WeightsError> {
    let (prepared, tol) = prepare(regions)?;
    let n = regions.len();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        for j in i + 1..n {
            let (a, b) = (&prepared[i], &prepared[j]);
            if !a.bbox.near(&b.bbox, tol) {
                continue;
            }
            let touching = a.segments.iter().any(|s| {
                b.segments.iter().any(|t| {
                    s.bbox.near(&t.bbox, tol)
                        && match kind {
                            Contiguity::Queen => segment_distance(s, t) <= tol,
                            Contiguity::Rook => collinear_overlap(s, t, tol) > tol,
                        }
                })
            });
            if touching {
                adj[i].push(j);
                adj[j].push(i);
            }
        }
    }
    let ids = regions.iter().map(|r| r.id.clone()).collect();
    SpatialWeights::from_adjacency(ids, adj)
}

/// Binary queen contiguity: regions sharing at least one boundary point.
///
/// Points closer than `1e-9` of the dataset's bounding-box diagonal count as
/// shared.
pub fn queen_contiguity(regions: &[RegionGeometry]) -> Result<SpatialWeights, WeightsError> {
    contiguity(regions, Contiguity::Queen)
}

/// Binary rook contiguity: regions sharing a boundary segment of positive
/// length.
pub fn rook_contiguity(regions: &[RegionGeometry]) -> Result<SpatialWeights, WeightsError> {
    contiguity(regions, Contiguity::Rook)
}

fn parse_ring(v: &Value) -> Option<Ring> {
    v.as_array()?
        .iter()
        .map(|p| {
            let p = p.as_array()?;
            Some([p.first()?.as_f64()?, p.get(1)?.as_f64()?])
        })
        .collect()
}

fn parse_polygon(v: &Value) -> Option<Polygon> {
    let rings: Vec<Ring> = v.as_array()?.iter().map(parse_ring).collect::<Option<_>>()?;
    let mut rings = rings.into_iter();
    Some(Polygon {
        exterior: rings.next()?,
        holes: rings.collect(),
    })
}

fn property_string(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.as_i64().map_or_else(|| n.to_string(), |i| i.to_string())),
        _ => None,
    }
}

/// Read Polygon and MultiPolygon features from a GeoJSON FeatureCollection,
/// keyed by the `id_property` of each feature.
pub fn load_geojson<R: Read>(source: R, id_property: &str) -> Result<Vec<RegionGeometry>, WeightsError> {
    let root: Value = serde_json::from_reader(source).map_err(|e| WeightsError::Format {
        line: e.line(),
        message: e.to_string(),
    })?;
    let bad = |message: String| WeightsError::Format { line: 0, message };
    let features = root
        .get("features")
        .and_then(Value::as_array)
        .ok_or_else(|| bad(String::from("expected a FeatureCollection")))?;
    let mut out = Vec::with_capacity(features.len());
    for (k, feature) in features.iter().enumerate() {
        let id = feature
            .get("properties")
            .and_then(|p| p.get(id_property))
            .and_then(property_string)
            .ok_or_else(|| bad(format!("feature {k} lacks property `{id_property}`")))?;
        let geometry = feature.get("geometry").filter(|g| !g.is_null());
        let Some(geometry) = geometry else {
            return Err(WeightsError::EmptyGeometry(id));
        };
        let coords = geometry.get("coordinates");
        let polygons = match geometry.get("type").and_then(Value::as_str) {
            Some("Polygon") => coords.and_then(parse_polygon).map(|p| vec![p]),
            Some("MultiPolygon") => coords
                .and_then(Value::as_array)
                .and_then(|ps| ps.iter().map(parse_polygon).collect::<Option<Vec<_>>>()),
            other => {
                return Err(bad(format!("feature {id}: unsupported geometry type {other:?}")));
            }
        }
        .ok_or_else(|| bad(format!("feature {id}: malformed coordinates")))?;
        if polygons.is_empty() {
            return Err(WeightsError::EmptyGeometry(id));
        }
        out.push(RegionGeometry { id, polygons });
    }
    Ok(out)
}
