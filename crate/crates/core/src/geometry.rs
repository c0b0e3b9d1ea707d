//! Planar geometry on projected coordinates (meters).
//!
//! Rings are stored open: the first vertex is not repeated at the end.

use serde::{Deserialize, Serialize};
use std::ops::{Add, Mul, Sub};

/// Distance below which two points are considered the same location.
pub const EPS_M: f64 = 1e-9;

/// A point in a projected, meter-based CRS.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct GeoPoint {
    pub x: f64,
    pub y: f64,
}

impl GeoPoint {
    pub const fn new(x: f64, y: f64) -> Self {
        GeoPoint { x, y }
    }

    pub fn dist(self, other: GeoPoint) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn dot(self, other: GeoPoint) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn cross(self, other: GeoPoint) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn lerp(self, other: GeoPoint, t: f64) -> GeoPoint {
        GeoPoint::new(
            self.x + (other.x - self.x) * t,
            self.y + (other.y - self.y) * t,
        )
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for GeoPoint {
    type Output = GeoPoint;
    fn add(self, o: GeoPoint) -> GeoPoint {
        GeoPoint::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for GeoPoint {
    type Output = GeoPoint;
    fn sub(self, o: GeoPoint) -> GeoPoint {
        GeoPoint::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for GeoPoint {
    type Output = GeoPoint;
    fn mul(self, s: f64) -> GeoPoint {
        GeoPoint::new(self.x * s, self.y * s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub min: GeoPoint,
    pub max: GeoPoint,
}

impl BBox {
    pub fn of(points: &[GeoPoint]) -> Option<BBox> {
        let first = *points.first()?;
        let mut b = BBox {
            min: first,
            max: first,
        };
        for p in &points[1..] {
            b.min.x = b.min.x.min(p.x);
            b.min.y = b.min.y.min(p.y);
            b.max.x = b.max.x.max(p.x);
            b.max.y = b.max.y.max(p.y);
        }
        Some(b)
    }

    pub fn intersects(&self, other: &BBox) -> bool {
        self.min.x <= other.max.x
            && other.min.x <= self.max.x
            && self.min.y <= other.max.y
            && other.min.y <= self.max.y
    }

    pub fn expand(&self, by: f64) -> BBox {
        BBox {
            min: GeoPoint::new(self.min.x - by, self.min.y - by),
            max: GeoPoint::new(self.max.x + by, self.max.y + by),
        }
    }
}

pub fn polyline_length(points: &[GeoPoint]) -> f64 {
    points.windows(2).map(|w| w[0].dist(w[1])).sum()
}

/// Signed shoelace area; positive for counter-clockwise rings.
pub fn ring_signed_area(ring: &[GeoPoint]) -> f64 {
    let n = ring.len();
    if n < 3 {
        return 0.0;
    }
    let mut acc = 0.0;
    for i in 0..n {
        let a = ring[i];
        let b = ring[(i + 1) % n];
        acc += a.x * b.y - b.x * a.y;
    }
    acc / 2.0
}

pub fn ring_area(ring: &[GeoPoint]) -> f64 {
    ring_signed_area(ring).abs()
}

/// Area centroid of a ring. Falls back to the vertex mean for degenerate rings.
pub fn ring_centroid(ring: &[GeoPoint]) -> GeoPoint {
    let n = ring.len();
    if n == 0 {
        return GeoPoint::default();
    }
    // shift to the first vertex to keep the products small for projected coords
    let o = ring[0];
    let mut a2 = 0.0;
    let mut cx = 0.0;
    let mut cy = 0.0;
    for i in 0..n {
        let p = ring[i] - o;
        let q = ring[(i + 1) % n] - o;
        let c = p.cross(q);
        a2 += c;
        cx += (p.x + q.x) * c;
        cy += (p.y + q.y) * c;
    }
    if a2.abs() < 1e-12 {
        let s = ring.iter().fold(GeoPoint::default(), |acc, p| acc + (*p - o));
        return o + s * (1.0 / n as f64);
    }
    o + GeoPoint::new(cx / (3.0 * a2), cy / (3.0 * a2))
}

/// Closest point on segment `a`-`b` to `p`: (parameter, point, distance).
pub fn closest_on_segment(p: GeoPoint, a: GeoPoint, b: GeoPoint) -> (f64, GeoPoint, f64) {
    let ab = b - a;
    let len2 = ab.dot(ab);
    let t = if len2 == 0.0 {
        0.0
    } else {
        ((p - a).dot(ab) / len2).clamp(0.0, 1.0)
    };
    let q = a.lerp(b, t);
    (t, q, p.dist(q))
}

pub fn point_segment_distance(p: GeoPoint, a: GeoPoint, b: GeoPoint) -> f64 {
    closest_on_segment(p, a, b).2
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Containment {
    Inside,
    Boundary,
    Outside,
}

/// Classify `p` against a simple ring. Points within `tol` of an edge are on the boundary.
pub fn locate_point(p: GeoPoint, ring: &[GeoPoint], tol: f64) -> Containment {
    let n = ring.len();
    if n < 3 {
        return Containment::Outside;
    }
    for i in 0..n {
        if point_segment_distance(p, ring[i], ring[(i + 1) % n]) <= tol {
            return Containment::Boundary;
        }
    }
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (ring[i], ring[j]);
        if (a.y > p.y) != (b.y > p.y) {
            let x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if p.x < x {
                inside = !inside;
            }
        }
        j = i;
    }
    if inside {
        Containment::Inside
    } else {
        Containment::Outside
    }
}

/// Closed-set containment (boundary counts as inside).
pub fn ring_contains(ring: &[GeoPoint], p: GeoPoint) -> bool {
    locate_point(p, ring, EPS_M) != Containment::Outside
}

/// Parameters `t` in [0, 1] along `a`-`b` where segment `c`-`d` touches it.
///
/// Covers proper crossings, T-contacts at either segment's endpoints and the
/// endpoints of collinear overlaps.
pub fn segment_contact_params(a: GeoPoint, b: GeoPoint, c: GeoPoint, d: GeoPoint, tol: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let r = b - a;
    let s = d - c;
    let rr = r.dot(r);
    if rr == 0.0 {
        return out;
    }
    let denom = r.cross(s);
    let scale = r.dot(r).sqrt() * s.dot(s).sqrt();
    if denom.abs() > 1e-12 * scale.max(1e-300) {
        let t = (c - a).cross(s) / denom;
        let u = (c - a).cross(r) / denom;
        let len_r = rr.sqrt();
        let len_s = s.dot(s).sqrt();
        let t_tol = tol / len_r;
        let u_tol = if len_s > 0.0 { tol / len_s } else { 0.0 };
        if t >= -t_tol && t <= 1.0 + t_tol && u >= -u_tol && u <= 1.0 + u_tol {
            out.push(t.clamp(0.0, 1.0));
        }
    }
    // endpoint contacts also resolve collinear overlaps
    for q in [c, d] {
        let (t, _, dist) = closest_on_segment(q, a, b);
        if dist <= tol {
            out.push(t);
        }
    }
    for (t, q) in [(0.0, a), (1.0, b)] {
        if point_segment_distance(q, c, d) <= tol {
            out.push(t);
        }
    }
    out.sort_by(f64::total_cmp);
    out.dedup_by(|x, y| (*x - *y).abs() * rr.sqrt() <= tol);
    out
}

/// Pieces of `line` lying inside the closed polygon `ring`.
pub fn clip_polyline(line: &[GeoPoint], ring: &[GeoPoint]) -> Vec<Vec<GeoPoint>> {
    let mut pieces: Vec<Vec<GeoPoint>> = Vec::new();
    let mut current: Vec<GeoPoint> = Vec::new();
    let n = ring.len();
    for w in line.windows(2) {
        let (a, b) = (w[0], w[1]);
        let len = a.dist(b);
        if len == 0.0 {
            continue;
        }
        let mut ts = vec![0.0, 1.0];
        for i in 0..n {
            ts.extend(segment_contact_params(a, b, ring[i], ring[(i + 1) % n], EPS_M));
        }
        ts.sort_by(f64::total_cmp);
        ts.dedup_by(|x, y| (*x - *y).abs() * len <= EPS_M);
        for iv in ts.windows(2) {
            let (t0, t1) = (iv[0], iv[1]);
            let p0 = a.lerp(b, t0);
            let p1 = a.lerp(b, t1);
            let mid = a.lerp(b, 0.5 * (t0 + t1));
            if ring_contains(ring, mid) {
                match current.last() {
                    Some(last) if last.dist(p0) <= EPS_M => {}
                    _ => {
                        flush(&mut current, &mut pieces);
                        current.push(p0);
                    }
                }
                current.push(p1);
            } else {
                flush(&mut current, &mut pieces);
            }
        }
    }
    flush(&mut current, &mut pieces);
    pieces
}

fn flush(current: &mut Vec<GeoPoint>, pieces: &mut Vec<Vec<GeoPoint>>) {
    if current.len() >= 2 && polyline_length(current) > EPS_M {
        pieces.push(std::mem::take(current));
    } else {
        current.clear();
    }
}

/// Sutherland–Hodgman clip of `subject` by a convex, counter-clockwise `clip` ring.
pub fn clip_by_convex(subject: &[GeoPoint], clip: &[GeoPoint]) -> Vec<GeoPoint> {
    let mut output = subject.to_vec();
    let m = clip.len();
    for i in 0..m {
        if output.is_empty() {
            break;
        }
        let e0 = clip[i];
        let e1 = clip[(i + 1) % m];
        let edge = e1 - e0;
        let side = |p: GeoPoint| edge.cross(p - e0);
        let input = std::mem::take(&mut output);
        let k = input.len();
        for j in 0..k {
            let cur = input[j];
            let prev = input[(j + k - 1) % k];
            let (sc, sp) = (side(cur), side(prev));
            if sc >= 0.0 {
                if sp < 0.0 {
                    output.push(prev.lerp(cur, sp / (sp - sc)));
                }
                output.push(cur);
            } else if sp >= 0.0 {
                output.push(prev.lerp(cur, sp / (sp - sc)));
            }
        }
    }
    output
}

/// True when no two non-adjacent edges of the ring touch.
pub fn ring_is_simple(ring: &[GeoPoint]) -> bool {
    let n = ring.len();
    if n < 3 {
        return false;
    }
    for i in 0..n {
        let (a, b) = (ring[i], ring[(i + 1) % n]);
        if a.dist(b) <= EPS_M {
            return false;
        }
        for j in (i + 1)..n {
            let adjacent = j == i + 1 || (i == 0 && j == n - 1);
            if adjacent {
                continue;
            }
            let (c, d) = (ring[j], ring[(j + 1) % n]);
            if !segment_contact_params(a, b, c, d, EPS_M).is_empty() {
                return false;
            }
        }
    }
    true
}

/// Drop a trailing vertex equal to the first one.
pub fn open_ring(mut ring: Vec<GeoPoint>) -> Vec<GeoPoint> {
    if ring.len() >= 2 && ring[0].dist(ring[ring.len() - 1]) <= EPS_M {
        ring.pop();
    }
    ring
}

pub fn ensure_ccw(mut ring: Vec<GeoPoint>) -> Vec<GeoPoint> {
    if ring_signed_area(&ring) < 0.0 {
        ring.reverse();
    }
    ring
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(side: f64) -> Vec<GeoPoint> {
        vec![
            GeoPoint::new(0.0, 0.0),
            GeoPoint::new(side, 0.0),
            GeoPoint::new(side, side),
            GeoPoint::new(0.0, side),
        ]
    }

    #[test]
    fn shoelace_rectangle() {
        let r = vec![
            GeoPoint::new(0.0, 0.0),
            GeoPoint::new(20.0, 0.0),
            GeoPoint::new(20.0, 15.0),
            GeoPoint::new(0.0, 15.0),
        ];
        assert_eq!(ring_area(&r), 300.0);
        let c = ring_centroid(&r);
        assert!((c.x - 10.0).abs() < 1e-12 && (c.y - 7.5).abs() < 1e-12);
    }

    #[test]
    fn locate_boundary_and_inside() {
        let sq = square(10.0);
        assert_eq!(locate_point(GeoPoint::new(5.0, 5.0), &sq, EPS_M), Containment::Inside);
        assert_eq!(locate_point(GeoPoint::new(10.0, 5.0), &sq, EPS_M), Containment::Boundary);
        assert_eq!(locate_point(GeoPoint::new(11.0, 5.0), &sq, EPS_M), Containment::Outside);
    }

    #[test]
    fn clip_line_crossing_square() {
        let sq = square(10.0);
        let line = vec![GeoPoint::new(-5.0, 5.0), GeoPoint::new(15.0, 5.0)];
        let pieces = clip_polyline(&line, &sq);
        assert_eq!(pieces.len(), 1);
        assert!((polyline_length(&pieces[0]) - 10.0).abs() < 1e-9);
    }

    #[test]
    fn clip_line_in_and_out_twice() {
        // U-shaped polygon, straight line crosses both arms
        let u = vec![
            GeoPoint::new(0.0, 0.0),
            GeoPoint::new(30.0, 0.0),
            GeoPoint::new(30.0, 20.0),
            GeoPoint::new(20.0, 20.0),
            GeoPoint::new(20.0, 5.0),
            GeoPoint::new(10.0, 5.0),
            GeoPoint::new(10.0, 20.0),
            GeoPoint::new(0.0, 20.0),
        ];
        let line = vec![GeoPoint::new(-5.0, 10.0), GeoPoint::new(35.0, 10.0)];
        let pieces = clip_polyline(&line, &u);
        assert_eq!(pieces.len(), 2);
        let total: f64 = pieces.iter().map(|p| polyline_length(p)).sum();
        assert!((total - 20.0).abs() < 1e-9);
    }

    #[test]
    fn clip_convex_overlap() {
        let a = square(10.0);
        let b: Vec<GeoPoint> = square(10.0).into_iter().map(|p| p + GeoPoint::new(5.0, 5.0)).collect();
        let out = clip_by_convex(&a, &b);
        assert!((ring_area(&out) - 25.0).abs() < 1e-9);
    }

    #[test]
    fn simple_ring_detection() {
        assert!(ring_is_simple(&square(1.0)));
        let bowtie = vec![
            GeoPoint::new(0.0, 0.0),
            GeoPoint::new(1.0, 1.0),
            GeoPoint::new(1.0, 0.0),
            GeoPoint::new(0.0, 1.0),
        ];
        assert!(!ring_is_simple(&bowtie));
    }

    #[test]
    fn contact_params_t_junction() {
        let ts = segment_contact_params(
            GeoPoint::new(0.0, 0.0),
            GeoPoint::new(10.0, 0.0),
            GeoPoint::new(4.0, 0.0),
            GeoPoint::new(4.0, 5.0),
            1e-6,
        );
        assert_eq!(ts.len(), 1);
        assert!((ts[0] - 0.4).abs() < 1e-12);
    }
}
