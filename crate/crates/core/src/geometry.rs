//! Polyline geometry in the ego-centric bird's-eye-view frame.
//!
//! Coordinates are meters with x pointing right and y pointing forward.
//! Everything here is a pure function on immutable inputs.

use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Minimum spacing between consecutive polyline points.
pub const MIN_SPACING: f64 = 1e-9;

/// Point count every map element is resampled to before Chamfer comparison.
pub const CHAMFER_POINTS: usize = 20;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("insufficient points: need at least {needed}, got {got}")]
    InsufficientPoints { needed: usize, got: usize },
    #[error("window length must be odd and >= 1, got {0}")]
    InvalidWindow(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    pub fn cross(self, o: Vec2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dist(self, o: Vec2) -> f64 {
        (self - o).norm()
    }

    /// Unit vector, or zero for a zero-length input.
    pub fn normalized(self) -> Vec2 {
        let n = self.norm();
        if n > 0.0 {
            self * (1.0 / n)
        } else {
            Vec2::default()
        }
    }

    /// Counter-clockwise perpendicular (left normal when facing along `self`).
    pub fn perp(self) -> Vec2 {
        Vec2::new(-self.y, self.x)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn lerp(self, o: Vec2, t: f64) -> Vec2 {
        self + (o - self) * t
    }
}

impl From<[f64; 2]> for Vec2 {
    fn from(a: [f64; 2]) -> Self {
        Vec2::new(a[0], a[1])
    }
}

impl From<Vec2> for [f64; 2] {
    fn from(v: Vec2) -> Self {
        [v.x, v.y]
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl AddAssign for Vec2 {
    fn add_assign(&mut self, o: Vec2) {
        self.x += o.x;
        self.y += o.y;
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

impl fmt::Display for Vec2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({:.3}, {:.3})", self.x, self.y)
    }
}

/// Semantic class of a vectorized map element.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassTag {
    Boundary,
    Divider,
    PedCrossing,
}

impl ClassTag {
    pub const ALL: [ClassTag; 3] = [ClassTag::Boundary, ClassTag::Divider, ClassTag::PedCrossing];

    pub fn as_str(self) -> &'static str {
        match self {
            ClassTag::Boundary => "boundary",
            ClassTag::Divider => "divider",
            ClassTag::PedCrossing => "ped_crossing",
        }
    }
}

impl fmt::Display for ClassTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// An ordered set of BEV points tagged with a map class.
///
/// Always holds at least two finite points with no two consecutive points
/// closer than [`MIN_SPACING`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPolyline")]
pub struct Polyline2D {
    points: Vec<Vec2>,
    class: ClassTag,
}

#[derive(Deserialize)]
struct RawPolyline {
    points: Vec<Vec2>,
    class: ClassTag,
}

impl TryFrom<RawPolyline> for Polyline2D {
    type Error = GeometryError;
    fn try_from(raw: RawPolyline) -> Result<Self, Self::Error> {
        Polyline2D::new(raw.points, raw.class)
    }
}

impl Polyline2D {
    pub fn new(points: Vec<Vec2>, class: ClassTag) -> Result<Self, GeometryError> {
        if points.len() < 2 {
            return Err(GeometryError::InsufficientPoints {
                needed: 2,
                got: points.len(),
            });
        }
        if let Some(p) = points.iter().find(|p| !p.is_finite()) {
            return Err(GeometryError::InvalidGeometry(format!(
                "non-finite point {p:?}"
            )));
        }
        for (i, w) in points.windows(2).enumerate() {
            if w[0].dist(w[1]) <= MIN_SPACING {
                return Err(GeometryError::InvalidGeometry(format!(
                    "points {i} and {} coincide",
                    i + 1
                )));
            }
        }
        Ok(Self { points, class })
    }

    /// Builds a polyline after dropping consecutive near-duplicates.
    pub fn new_dedup(points: Vec<Vec2>, class: ClassTag) -> Result<Self, GeometryError> {
        let mut out: Vec<Vec2> = Vec::with_capacity(points.len());
        for p in points {
            if out.last().is_none_or(|q| q.dist(p) > 1e-6) {
                out.push(p);
            }
        }
        Self::new(out, class)
    }

    pub fn points(&self) -> &[Vec2] {
        &self.points
    }

    pub fn class(&self) -> ClassTag {
        self.class
    }

    pub fn with_class(mut self, class: ClassTag) -> Self {
        self.class = class;
        self
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn first(&self) -> Vec2 {
        self.points[0]
    }

    pub fn last(&self) -> Vec2 {
        self.points[self.points.len() - 1]
    }

    pub fn length(&self) -> f64 {
        self.points.windows(2).map(|w| w[0].dist(w[1])).sum()
    }

    /// Cumulative arc length at every vertex, starting at 0.
    pub fn cumulative_lengths(&self) -> Vec<f64> {
        cumulative(&self.points)
    }

    /// Point at arc length `s`, clamped to the polyline extent.
    pub fn point_at(&self, s: f64) -> Vec2 {
        let cum = self.cumulative_lengths();
        point_at_cum(&self.points, &cum, s)
    }

    /// Unit tangent at every vertex (central direction, one-sided at the ends).
    pub fn tangents(&self) -> Vec<Vec2> {
        let n = self.points.len();
        (0..n)
            .map(|i| {
                let a = self.points[i.saturating_sub(1)];
                let b = self.points[(i + 1).min(n - 1)];
                (b - a).normalized()
            })
            .collect()
    }

    /// Left unit normal at every vertex.
    pub fn left_normals(&self) -> Vec<Vec2> {
        self.tangents().into_iter().map(Vec2::perp).collect()
    }

    pub fn translate(&self, t: Vec2) -> Polyline2D {
        Polyline2D {
            points: self.points.iter().map(|&p| p + t).collect(),
            class: self.class,
        }
    }

    /// Rotation by `angle` (radians, counter-clockwise) followed by translation.
    pub fn rigid_transform(&self, angle: f64, t: Vec2) -> Polyline2D {
        let (s, c) = angle.sin_cos();
        let points = self
            .points
            .iter()
            .map(|p| Vec2::new(c * p.x - s * p.y + t.x, s * p.x + c * p.y + t.y))
            .collect();
        Polyline2D {
            points,
            class: self.class,
        }
    }

    pub fn reversed(&self) -> Polyline2D {
        let mut points = self.points.clone();
        points.reverse();
        Polyline2D {
            points,
            class: self.class,
        }
    }

    /// Mirror across the vertical axis x = 0.
    pub fn mirrored_x(&self) -> Polyline2D {
        Polyline2D {
            points: self.points.iter().map(|p| Vec2::new(-p.x, p.y)).collect(),
            class: self.class,
        }
    }

    /// Offsets every vertex along its left normal by `d` meters.
    pub fn offset_left(&self, d: f64) -> Result<Polyline2D, GeometryError> {
        let normals = self.left_normals();
        let pts = self
            .points
            .iter()
            .zip(normals)
            .map(|(&p, n)| p + n * d)
            .collect();
        Polyline2D::new_dedup(pts, self.class)
    }

    /// Closest point on the polyline to `q`.
    pub fn project(&self, q: Vec2) -> Projection {
        project_onto(&self.points, q)
    }

    pub fn distance_to(&self, q: Vec2) -> f64 {
        self.project(q).distance
    }
}

/// Result of projecting a point onto a polyline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub point: Vec2,
    pub distance: f64,
    pub segment: usize,
    /// Arc length of the foot point along the polyline.
    pub arc_length: f64,
}

fn cumulative(points: &[Vec2]) -> Vec<f64> {
    let mut cum = Vec::with_capacity(points.len());
    let mut acc = 0.0;
    cum.push(0.0);
    for w in points.windows(2) {
        acc += w[0].dist(w[1]);
        cum.push(acc);
    }
    cum
}

fn point_at_cum(points: &[Vec2], cum: &[f64], s: f64) -> Vec2 {
    let total = *cum.last().unwrap();
    if s <= 0.0 {
        return points[0];
    }
    if s >= total {
        return points[points.len() - 1];
    }
    let seg = match cum.binary_search_by(|c| c.partial_cmp(&s).unwrap()) {
        Ok(i) => return points[i],
        Err(i) => i - 1,
    };
    let len = cum[seg + 1] - cum[seg];
    points[seg].lerp(points[seg + 1], (s - cum[seg]) / len)
}

pub fn project_onto(points: &[Vec2], q: Vec2) -> Projection {
    let mut best = Projection {
        point: points[0],
        distance: points[0].dist(q),
        segment: 0,
        arc_length: 0.0,
    };
    let mut acc = 0.0;
    for (i, w) in points.windows(2).enumerate() {
        let d = w[1] - w[0];
        let len2 = d.dot(d);
        let t = if len2 > 0.0 {
            ((q - w[0]).dot(d) / len2).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let foot = w[0] + d * t;
        let dist = foot.dist(q);
        if dist < best.distance {
            best = Projection {
                point: foot,
                distance: dist,
                segment: i,
                arc_length: acc + t * len2.sqrt(),
            };
        }
        acc += len2.sqrt();
    }
    best
}

/// Resamples `poly` to `n` points at equal arc-length spacing.
///
/// Endpoints are kept exactly. Arc length is preserved only where the
/// original vertices fall on sample positions (e.g. collinear input).
pub fn resample_polyline(poly: &Polyline2D, n: usize) -> Result<Polyline2D, GeometryError> {
    if n < 2 {
        return Err(GeometryError::InsufficientPoints { needed: 2, got: n });
    }
    let cum = poly.cumulative_lengths();
    let total = *cum.last().unwrap();
    if total < MIN_SPACING {
        return Err(GeometryError::InvalidGeometry(format!(
            "degenerate polyline of length {total}"
        )));
    }
    let mut out = Vec::with_capacity(n);
    let mut seg = 0usize;
    let pts = poly.points();
    for j in 0..n {
        if j == 0 {
            out.push(pts[0]);
            continue;
        }
        if j == n - 1 {
            out.push(pts[pts.len() - 1]);
            continue;
        }
        let s = total * j as f64 / (n - 1) as f64;
        while seg + 1 < cum.len() - 1 && cum[seg + 1] < s {
            seg += 1;
        }
        let len = cum[seg + 1] - cum[seg];
        let t = ((s - cum[seg]) / len).clamp(0.0, 1.0);
        out.push(pts[seg].lerp(pts[seg + 1], t));
    }
    Polyline2D::new(out, poly.class())
}

/// Resamples to points spaced at most `spacing` meters apart.
pub fn resample_by_spacing(poly: &Polyline2D, spacing: f64) -> Result<Polyline2D, GeometryError> {
    let n = ((poly.length() / spacing).ceil() as usize + 1).max(2);
    resample_polyline(poly, n)
}

/// Curvature along a polyline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvatureProfile {
    pub pointwise: Vec<f64>,
    pub regional: Vec<f64>,
    pub window_len: usize,
}

impl CurvatureProfile {
    pub fn of(poly: &Polyline2D, window_len: usize) -> Result<Self, GeometryError> {
        let pointwise = pointwise_curvature(poly)?;
        let regional = regional_curvature(&pointwise, window_len)?;
        Ok(Self {
            pointwise,
            regional,
            window_len,
        })
    }
}

/// Quadratic-fit derivatives of `f` at `s[at]` using samples at indices `idx`.
fn quad_derivs(s: [f64; 3], f: [f64; 3], at: f64) -> (f64, f64) {
    // Newton form of the interpolating quadratic.
    let d01 = (f[1] - f[0]) / (s[1] - s[0]);
    let d12 = (f[2] - f[1]) / (s[2] - s[1]);
    let d012 = (d12 - d01) / (s[2] - s[0]);
    let first = d01 + d012 * ((at - s[0]) + (at - s[1]));
    (first, 2.0 * d012)
}

/// Pointwise curvature k = |x'y'' - y'x''| / (x'^2 + y'^2)^(3/2).
///
/// Derivatives are taken with respect to cumulative arc length using
/// three-point differences (central inside, one-sided at the ends).
pub fn pointwise_curvature(poly: &Polyline2D) -> Result<Vec<f64>, GeometryError> {
    let n = poly.len();
    if n < 3 {
        return Err(GeometryError::InsufficientPoints { needed: 3, got: n });
    }
    let pts = poly.points();
    let cum = poly.cumulative_lengths();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let c = i.clamp(1, n - 2);
        let s = [cum[c - 1], cum[c], cum[c + 1]];
        let (x1, x2) = quad_derivs(s, [pts[c - 1].x, pts[c].x, pts[c + 1].x], cum[i]);
        let (y1, y2) = quad_derivs(s, [pts[c - 1].y, pts[c].y, pts[c + 1].y], cum[i]);
        let speed2 = x1 * x1 + y1 * y1;
        let k = if speed2 > 0.0 {
            (x1 * y2 - y1 * x2).abs() / speed2.powf(1.5)
        } else {
            0.0
        };
        out.push(k);
    }
    Ok(out)
}

/// Sliding-window mean of `pointwise`, with windows truncated at the ends.
pub fn regional_curvature(pointwise: &[f64], window_len: usize) -> Result<Vec<f64>, GeometryError> {
    if window_len == 0 || window_len % 2 == 0 {
        return Err(GeometryError::InvalidWindow(window_len));
    }
    let half = window_len / 2;
    let n = pointwise.len();
    Ok((0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half).min(n - 1);
            pointwise[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
        })
        .collect())
}

/// Symmetric Chamfer distance between two point sets: the mean
/// nearest-neighbour distance from `a` to `b`, averaged with the reverse.
pub fn chamfer_point_sets(a: &[Vec2], b: &[Vec2]) -> Result<f64, GeometryError> {
    if a.is_empty() || b.is_empty() {
        return Err(GeometryError::InvalidGeometry("empty point set".into()));
    }
    let directed = |from: &[Vec2], to: &[Vec2]| {
        from.iter()
            .map(|p| to.iter().map(|q| p.dist(*q)).fold(f64::INFINITY, f64::min))
            .sum::<f64>()
            / from.len() as f64
    };
    Ok(0.5 * (directed(a, b) + directed(b, a)))
}

/// Chamfer distance between two polylines resampled to [`CHAMFER_POINTS`].
pub fn chamfer_distance(a: &Polyline2D, b: &Polyline2D) -> Result<f64, GeometryError> {
    let ra = resample_polyline(a, CHAMFER_POINTS)?;
    let rb = resample_polyline(b, CHAMFER_POINTS)?;
    chamfer_point_sets(ra.points(), rb.points())
}

/// Closed segment intersection test (touching counts), with tolerance `eps`.
pub fn segments_intersect(a0: Vec2, a1: Vec2, b0: Vec2, b1: Vec2, eps: f64) -> bool {
    segment_distance(a0, a1, b0, b1) <= eps
}

/// Minimum distance between two segments.
pub fn segment_distance(a0: Vec2, a1: Vec2, b0: Vec2, b1: Vec2) -> f64 {
    let da = a1 - a0;
    let db = b1 - b0;
    let denom = da.cross(db);
    if denom.abs() > 1e-15 {
        let t = (b0 - a0).cross(db) / denom;
        let u = (b0 - a0).cross(da) / denom;
        if (0.0..=1.0).contains(&t) && (0.0..=1.0).contains(&u) {
            return 0.0;
        }
    }
    let p = |q: Vec2, s0: Vec2, s1: Vec2| project_onto(&[s0, s1], q).distance;
    p(a0, b0, b1)
        .min(p(a1, b0, b1))
        .min(p(b0, a0, a1))
        .min(p(b1, a0, a1))
}

/// Even-odd point-in-polygon test; the ring is implicitly closed.
pub fn point_in_polygon(q: Vec2, ring: &[Vec2]) -> bool {
    let mut inside = false;
    let n = ring.len();
    let mut j = n - 1;
    for i in 0..n {
        let (pi, pj) = (ring[i], ring[j]);
        if (pi.y > q.y) != (pj.y > q.y) && q.x < (pj.x - pi.x) * (q.y - pi.y) / (pj.y - pi.y) + pi.x
        {
            inside = !inside;
        }
        j = i;
    }
    inside
}

/// True when any polyline segment touches the closed polygon `ring`
/// (crossing an edge, within `eps` of an edge, or lying inside).
pub fn polyline_hits_polygon(points: &[Vec2], ring: &[Vec2], eps: f64) -> bool {
    if points.iter().any(|&p| point_in_polygon(p, ring)) {
        return true;
    }
    let n = ring.len();
    points
        .windows(2)
        .any(|w| (0..n).any(|i| segments_intersect(w[0], w[1], ring[i], ring[(i + 1) % n], eps)))
}
