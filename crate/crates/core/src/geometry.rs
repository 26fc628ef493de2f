//! Oriented-box representations and exact rotated IoU.
//!
//! Three views of the same rectangle are supported:
//!
//! - [`ObbParams`]: center, length along the heading axis, width across it and
//!   the heading angle folded into `[0, π)`.
//! - [`Quad`]: four counter-clockwise corners, as found in DOTA annotations.
//! - [`KeypointBox`]: center point, head point and width. The tail is always
//!   derived as the head reflected through the center.
//!
//! The heading axis is the longer side of the rectangle. Angles are measured
//! counter-clockwise from the +x axis in the coordinate frame of the points,
//! so with image coordinates (y pointing down) "counter-clockwise" is
//! clockwise on screen.

use std::cmp::Ordering;
use std::f64::consts::PI;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Maximum angle between two edges treated as parallel when deciding whether a
/// quad is an exact rectangle.
pub const PARALLEL_TOLERANCE_RAD: f64 = 1e-6;

/// Polygons with an area at or below this value are degenerate.
pub const DEGENERATE_AREA_PX2: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("non-finite coordinate in {0}")]
    NonFinite(&'static str),
    #[error("box extents must be positive (length {length}, width {width})")]
    NonPositiveExtent { length: f64, width: f64 },
    #[error("degenerate keypoints: head coincides with center")]
    DegenerateKeypoints,
    #[error("degenerate quad: area {0} is not positive")]
    DegenerateQuad(f64),
    #[error("quad corners do not form a convex quadrilateral")]
    NonConvexQuad,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn dot(self, other: Self) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// z-component of the 3D cross product.
    pub fn cross(self, other: Self) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dist_sq(self, other: Self) -> f64 {
        (self - other).norm_sq()
    }

    /// Counter-clockwise perpendicular.
    pub fn perp(self) -> Self {
        Self::new(-self.y, self.x)
    }

    /// Rotation about the origin by `angle` radians.
    pub fn rotated(self, angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }
}

impl Add for Point2 {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Point2 {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Self::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Point2 {
    type Output = Self;
    fn mul(self, k: f64) -> Self {
        Self::new(self.x * k, self.y * k)
    }
}

impl Neg for Point2 {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.x, -self.y)
    }
}

/// Folds an angle into `[0, π)`.
pub fn fold_heading(theta: f64) -> f64 {
    let t = theta.rem_euclid(PI);
    // rem_euclid can round up to exactly π for tiny negative inputs
    if t >= PI {
        0.0
    } else {
        t
    }
}

/// Oriented rectangle in canonical form: `length >= width > 0` and
/// `theta ∈ [0, π)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObbParams {
    pub cx: f64,
    pub cy: f64,
    pub length: f64,
    pub width: f64,
    pub theta: f64,
}

impl ObbParams {
    /// Builds a canonical box. When `length < width` the extents are swapped
    /// and the heading rotated by π/2 so that the heading axis stays the
    /// longer side.
    pub fn new(cx: f64, cy: f64, length: f64, width: f64, theta: f64) -> Result<Self, GeometryError> {
        if ![cx, cy, length, width, theta].iter().all(|v| v.is_finite()) {
            return Err(GeometryError::NonFinite("ObbParams"));
        }
        if length <= 0.0 || width <= 0.0 {
            return Err(GeometryError::NonPositiveExtent { length, width });
        }
        let (length, width, theta) =
            if length < width { (width, length, theta + PI / 2.0) } else { (length, width, theta) };
        Ok(Self { cx, cy, length, width, theta: fold_heading(theta) })
    }

    pub fn center(&self) -> Point2 {
        Point2::new(self.cx, self.cy)
    }

    pub fn area(&self) -> f64 {
        self.length * self.width
    }

    /// Unit vector along the heading axis.
    pub fn axis(&self) -> Point2 {
        let (s, c) = self.theta.sin_cos();
        Point2::new(c, s)
    }

    /// True when `p` lies inside or on the boundary of the box.
    pub fn contains(&self, p: Point2) -> bool {
        let d = p - self.center();
        let u = self.axis();
        d.dot(u).abs() <= 0.5 * self.length && d.cross(u).abs() <= 0.5 * self.width
    }

    pub fn to_keypoints(&self) -> KeypointBox {
        obb_to_keypoints(self)
    }

    pub fn to_quad(&self) -> Quad {
        obb_to_quad(self)
    }

    /// Applies the rigid motion `p ↦ R(angle)·p + shift`.
    pub fn transformed(&self, angle: f64, shift: Point2) -> Self {
        let c = self.center().rotated(angle) + shift;
        Self { cx: c.x, cy: c.y, length: self.length, width: self.width, theta: fold_heading(self.theta + angle) }
    }

    fn total_cmp(&self, other: &Self) -> Ordering {
        self.cx
            .total_cmp(&other.cx)
            .then(self.cy.total_cmp(&other.cy))
            .then(self.length.total_cmp(&other.length))
            .then(self.width.total_cmp(&other.width))
            .then(self.theta.total_cmp(&other.theta))
    }
}

/// Four corners in counter-clockwise order with positive signed area.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[Point2; 4]", into = "[Point2; 4]")]
pub struct Quad {
    corners: [Point2; 4],
}

impl Quad {
    /// Accepts corners listed either clockwise or counter-clockwise and stores
    /// them counter-clockwise, starting from the first listed corner. Corners
    /// given in a self-intersecting order are re-ordered around their convex
    /// hull when all four are hull vertices.
    pub fn new(corners: [Point2; 4]) -> Result<Self, GeometryError> {
        if !corners.iter().all(|p| p.is_finite()) {
            return Err(GeometryError::NonFinite("Quad"));
        }
        let area = signed_area(&corners);
        let mut ordered = corners;
        if area < 0.0 {
            ordered = [corners[0], corners[3], corners[2], corners[1]];
        }
        if !is_strictly_convex_ccw(&ordered) {
            let hull = convex_hull(&corners);
            if hull.len() != 4 {
                let hull_area = signed_area(&hull);
                return Err(if hull_area <= DEGENERATE_AREA_PX2 {
                    GeometryError::DegenerateQuad(hull_area)
                } else {
                    GeometryError::NonConvexQuad
                });
            }
            let start = hull.iter().position(|p| *p == corners[0]).unwrap_or(0);
            for (i, slot) in ordered.iter_mut().enumerate() {
                *slot = hull[(start + i) % 4];
            }
        }
        let area = signed_area(&ordered);
        if area <= DEGENERATE_AREA_PX2 {
            return Err(GeometryError::DegenerateQuad(area));
        }
        Ok(Self { corners: ordered })
    }

    pub fn corners(&self) -> &[Point2; 4] {
        &self.corners
    }

    pub fn area(&self) -> f64 {
        signed_area(&self.corners)
    }

    pub fn centroid(&self) -> Point2 {
        let s = self.corners.iter().fold(Point2::default(), |acc, &p| acc + p);
        s * 0.25
    }

    pub fn to_obb(&self) -> Result<ObbParams, GeometryError> {
        quad_to_obb(self)
    }
}

impl TryFrom<[Point2; 4]> for Quad {
    type Error = GeometryError;
    fn try_from(corners: [Point2; 4]) -> Result<Self, Self::Error> {
        Quad::new(corners)
    }
}

impl From<Quad> for [Point2; 4] {
    fn from(q: Quad) -> Self {
        q.corners
    }
}

/// Center/head keypoint form of an oriented box.
///
/// `tail()` is derived as `2·center − head` and is never stored, so a box and
/// its head/tail-swapped twin describe the same undirected object.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KeypointBox {
    pub center: Point2,
    pub head: Point2,
    pub width: f64,
}

impl KeypointBox {
    pub fn new(center: Point2, head: Point2, width: f64) -> Result<Self, GeometryError> {
        if !center.is_finite() || !head.is_finite() || !width.is_finite() {
            return Err(GeometryError::NonFinite("KeypointBox"));
        }
        if head == center {
            return Err(GeometryError::DegenerateKeypoints);
        }
        if width <= 0.0 {
            return Err(GeometryError::NonPositiveExtent { length: 2.0 * (head - center).norm(), width });
        }
        Ok(Self { center, head, width })
    }

    pub fn tail(&self) -> Point2 {
        self.center * 2.0 - self.head
    }

    /// The same box with head and tail exchanged.
    pub fn flipped(&self) -> Self {
        Self { center: self.center, head: self.tail(), width: self.width }
    }

    /// Vector from center to head.
    pub fn axis(&self) -> Point2 {
        self.head - self.center
    }

    pub fn to_obb(&self) -> Result<ObbParams, GeometryError> {
        keypoints_to_obb(self)
    }
}

/// Image dimensions in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ImageSize {
    pub width_px: u32,
    pub height_px: u32,
}

impl ImageSize {
    pub fn new(width_px: u32, height_px: u32) -> Result<Self, GeometryError> {
        if width_px == 0 || height_px == 0 {
            return Err(GeometryError::NonPositiveExtent { length: width_px as f64, width: height_px as f64 });
        }
        Ok(Self { width_px, height_px })
    }

    pub fn square(side: u32) -> Result<Self, GeometryError> {
        Self::new(side, side)
    }

    /// Pixel count `W·H`, the default loss normalizer.
    pub fn pixel_count(&self) -> f64 {
        self.width_px as f64 * self.height_px as f64
    }

    /// Squared diagonal `W² + H²`.
    pub fn diag_sq(&self) -> f64 {
        let (w, h) = (self.width_px as f64, self.height_px as f64);
        w * w + h * h
    }
}

pub fn obb_to_keypoints(b: &ObbParams) -> KeypointBox {
    let center = b.center();
    KeypointBox { center, head: center + b.axis() * (0.5 * b.length), width: b.width }
}

/// Inverse of [`obb_to_keypoints`] up to the head/tail ambiguity, which the
/// heading fold into `[0, π)` removes.
pub fn keypoints_to_obb(k: &KeypointBox) -> Result<ObbParams, GeometryError> {
    let axis = k.axis();
    if axis.x == 0.0 && axis.y == 0.0 {
        return Err(GeometryError::DegenerateKeypoints);
    }
    ObbParams::new(k.center.x, k.center.y, 2.0 * axis.norm(), k.width, axis.y.atan2(axis.x))
}

pub fn obb_to_quad(b: &ObbParams) -> Quad {
    let c = b.center();
    let u = b.axis() * (0.5 * b.length);
    let v = b.axis().perp() * (0.5 * b.width);
    Quad { corners: [c + u + v, c - u + v, c - u - v, c + u - v] }
}

/// Fits canonical box parameters to a quad. Exact rectangles (opposite edges
/// parallel and adjacent edges perpendicular within
/// [`PARALLEL_TOLERANCE_RAD`]) map directly; any other quad is replaced by its
/// minimum-area enclosing rectangle.
pub fn quad_to_obb(q: &Quad) -> Result<ObbParams, GeometryError> {
    quad_to_obb_with_tolerance(q, PARALLEL_TOLERANCE_RAD)
}

pub fn quad_to_obb_with_tolerance(q: &Quad, parallel_tol: f64) -> Result<ObbParams, GeometryError> {
    let area = q.area();
    if area <= DEGENERATE_AREA_PX2 {
        return Err(GeometryError::DegenerateQuad(area));
    }
    let c = &q.corners;
    let edges = [c[1] - c[0], c[2] - c[1], c[3] - c[2], c[0] - c[3]];
    let is_rect = (0..4).all(|i| {
        let a = edges[i];
        let b = edges[(i + 1) % 4];
        let opposite = edges[(i + 2) % 4];
        angle_between_lines(a, opposite) <= parallel_tol && (0.5 * PI - angle_between_lines(a, b)) <= parallel_tol
    });
    if is_rect {
        let center = q.centroid();
        let along = 0.5 * (edges[0].norm() + edges[2].norm());
        let across = 0.5 * (edges[1].norm() + edges[3].norm());
        // average the two opposite edges pointing the same way
        let dir0 = edges[0] - edges[2];
        let dir1 = edges[1] - edges[3];
        // ties keep the edge leaving the first corner as the heading
        let (length, width, dir) = if along >= across { (along, across, dir0) } else { (across, along, dir1) };
        return ObbParams::new(center.x, center.y, length, width, dir.y.atan2(dir.x));
    }
    min_area_rect(c)
}

/// Acute angle between the undirected lines spanned by `a` and `b`.
fn angle_between_lines(a: Point2, b: Point2) -> f64 {
    a.cross(b).abs().atan2(a.dot(b).abs())
}

/// Minimum-area enclosing rectangle. One side of the optimum is collinear with
/// a hull edge, so every hull edge direction is tried.
pub fn min_area_rect(points: &[Point2]) -> Result<ObbParams, GeometryError> {
    let hull = convex_hull(points);
    let hull_area = signed_area(&hull);
    if hull.len() < 3 || hull_area <= DEGENERATE_AREA_PX2 {
        return Err(GeometryError::DegenerateQuad(hull_area.max(0.0)));
    }
    let mut best: Option<(f64, Point2, f64, f64, f64, f64)> = None;
    for i in 0..hull.len() {
        let e = hull[(i + 1) % hull.len()] - hull[i];
        let u = e * (1.0 / e.norm());
        let v = u.perp();
        let (mut lo_u, mut hi_u, mut lo_v, mut hi_v) =
            (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for &p in &hull {
            let (a, b) = (p.dot(u), p.dot(v));
            lo_u = lo_u.min(a);
            hi_u = hi_u.max(a);
            lo_v = lo_v.min(b);
            hi_v = hi_v.max(b);
        }
        let area = (hi_u - lo_u) * (hi_v - lo_v);
        if best.is_none_or(|b| area < b.0) {
            best = Some((area, u, lo_u, hi_u, lo_v, hi_v));
        }
    }
    let (_, u, lo_u, hi_u, lo_v, hi_v) = best.expect("hull has at least three edges");
    let v = u.perp();
    let center = u * (0.5 * (lo_u + hi_u)) + v * (0.5 * (lo_v + hi_v));
    ObbParams::new(center.x, center.y, hi_u - lo_u, hi_v - lo_v, u.y.atan2(u.x))
}

/// Shoelace signed area; positive for counter-clockwise polygons.
pub fn signed_area(poly: &[Point2]) -> f64 {
    let n = poly.len();
    if n < 3 {
        return 0.0;
    }
    // relative to the first vertex to avoid cancellation far from the origin
    let o = poly[0];
    let twice: f64 = (1..n - 1).map(|i| (poly[i] - o).cross(poly[i + 1] - o)).sum();
    0.5 * twice
}

fn is_strictly_convex_ccw(poly: &[Point2]) -> bool {
    let n = poly.len();
    (0..n).all(|i| {
        let a = poly[i];
        let b = poly[(i + 1) % n];
        let c = poly[(i + 2) % n];
        (b - a).cross(c - b) > 0.0
    })
}

/// Andrew's monotone chain; counter-clockwise, collinear points dropped.
pub fn convex_hull(points: &[Point2]) -> Vec<Point2> {
    let mut pts: Vec<Point2> = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<Point2> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &Point2>> =
            if pass == 0 { Box::new(pts.iter()) } else { Box::new(pts.iter().rev()) };
        for &p in iter {
            while hull.len() >= start + 2 {
                let a = hull[hull.len() - 2];
                let b = hull[hull.len() - 1];
                if (b - a).cross(p - b) <= 0.0 {
                    hull.pop();
                } else {
                    break;
                }
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull
}

/// Clips the convex polygon `subject` against each edge of the convex
/// counter-clockwise polygon `clip`.
pub fn clip_convex(subject: &[Point2], clip: &[Point2]) -> Vec<Point2> {
    let mut output = subject.to_vec();
    let n = clip.len();
    for i in 0..n {
        if output.is_empty() {
            break;
        }
        let a = clip[i];
        let b = clip[(i + 1) % n];
        let edge = b - a;
        let input = std::mem::take(&mut output);
        let side = |p: Point2| edge.cross(p - a);
        for j in 0..input.len() {
            let cur = input[j];
            let prev = input[(j + input.len() - 1) % input.len()];
            let (s_cur, s_prev) = (side(cur), side(prev));
            if s_cur >= 0.0 {
                if s_prev < 0.0 {
                    output.push(prev + (cur - prev) * (s_prev / (s_prev - s_cur)));
                }
                output.push(cur);
            } else if s_prev >= 0.0 {
                output.push(prev + (cur - prev) * (s_prev / (s_prev - s_cur)));
            }
        }
    }
    output
}

/// Area of the intersection of two convex quads.
pub fn polygon_intersection_area(a: &Quad, b: &Quad) -> f64 {
    let clipped = clip_convex(&a.corners, &b.corners);
    let area = signed_area(&clipped).max(0.0);
    area.min(a.area()).min(b.area())
}

/// Exact intersection-over-union of two oriented boxes.
///
/// The arguments are put in a fixed order before clipping so the result is
/// bit-for-bit symmetric.
pub fn rotated_iou(a: &ObbParams, b: &ObbParams) -> f64 {
    let (a, b) = match a.total_cmp(b) {
        Ordering::Equal => return 1.0,
        Ordering::Less => (a, b),
        Ordering::Greater => (b, a),
    };
    let (area_a, area_b) = (a.area(), b.area());
    // circumscribed circles do not touch
    let reach = 0.5 * (a.length.hypot(a.width) + b.length.hypot(b.width));
    if a.center().dist_sq(b.center()) > reach * reach {
        return 0.0;
    }
    let inter = polygon_intersection_area(&a.to_quad(), &b.to_quad()).min(area_a).min(area_b);
    let union = area_a + area_b - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

/// IoU estimated by counting lattice points. The `grid × grid` lattice of cell
/// centers spans the joint axis-aligned bounding region of both boxes.
///
/// This is a test oracle: slow, approximate, and independent of polygon
/// clipping.
pub fn raster_iou_oracle(a: &ObbParams, b: &ObbParams, grid: usize) -> f64 {
    assert!(grid >= 100, "raster oracle needs grid >= 100, got {grid}");
    let bounds = |o: &ObbParams| {
        let c = o.to_quad();
        c.corners
            .iter()
            .fold((f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY), |(x0, y0, x1, y1), p| {
                (x0.min(p.x), y0.min(p.y), x1.max(p.x), y1.max(p.y))
            })
    };
    let (ax0, ay0, ax1, ay1) = bounds(a);
    let (bx0, by0, bx1, by1) = bounds(b);
    let (x0, y0) = (ax0.min(bx0), ay0.min(by0));
    let (x1, y1) = (ax1.max(bx1), ay1.max(by1));
    let (dx, dy) = ((x1 - x0) / grid as f64, (y1 - y0) / grid as f64);

    let local = |o: &ObbParams| {
        let u = o.axis();
        (o.center(), u, 0.5 * o.length, 0.5 * o.width)
    };
    let (ca, ua, la, wa) = local(a);
    let (cb, ub, lb, wb) = local(b);

    let (mut in_a, mut in_b, mut in_both) = (0u64, 0u64, 0u64);
    for j in 0..grid {
        let y = y0 + (j as f64 + 0.5) * dy;
        for i in 0..grid {
            let p = Point2::new(x0 + (i as f64 + 0.5) * dx, y);
            let pa = p - ca;
            let hit_a = pa.dot(ua).abs() <= la && pa.cross(ua).abs() <= wa;
            let pb = p - cb;
            let hit_b = pb.dot(ub).abs() <= lb && pb.cross(ub).abs() <= wb;
            in_a += hit_a as u64;
            in_b += hit_b as u64;
            in_both += (hit_a && hit_b) as u64;
        }
    }
    let union = in_a + in_b - in_both;
    if union == 0 {
        0.0
    } else {
        in_both as f64 / union as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obb(cx: f64, cy: f64, l: f64, w: f64, t: f64) -> ObbParams {
        ObbParams::new(cx, cy, l, w, t).unwrap()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    fn same_corner_set(q: &Quad, expected: &[(f64, f64)]) -> bool {
        expected.iter().all(|&(x, y)| q.corners().iter().any(|p| close(p.x, x, 1e-12) && close(p.y, y, 1e-12)))
    }

    #[test]
    fn keypoints_of_axis_aligned_box() {
        let k = obb(0.0, 0.0, 10.0, 2.0, 0.0).to_keypoints();
        assert_eq!(k.center, Point2::new(0.0, 0.0));
        assert_eq!(k.head, Point2::new(5.0, 0.0));
        assert_eq!(k.tail(), Point2::new(-5.0, 0.0));
        assert_eq!(k.width, 2.0);

        let k = obb(0.0, 0.0, 10.0, 2.0, PI / 2.0).to_keypoints();
        assert!(close(k.head.x, 0.0, 1e-12) && close(k.head.y, 5.0, 1e-12));
    }

    #[test]
    fn keypoints_match_rotation_matrix() {
        let k = obb(3.0, 4.0, 2.0, 1.0, PI / 4.0).to_keypoints();
        // rotate (1, 0) by 45° with an explicit matrix
        let (c, s) = ((PI / 4.0).cos(), (PI / 4.0).sin());
        let expected = Point2::new(3.0 + c * 1.0 - s * 0.0, 4.0 + s * 1.0 + c * 0.0);
        assert!(close(k.head.x, expected.x, 1e-12) && close(k.head.y, expected.y, 1e-12));
        assert!(close(k.head.x, 3.0 + 0.5f64.sqrt(), 1e-12));
    }

    #[test]
    fn keypoints_to_obb_folds_heading() {
        let c = Point2::new(0.0, 0.0);
        let b = KeypointBox::new(c, Point2::new(5.0, 0.0), 2.0).unwrap().to_obb().unwrap();
        assert_eq!(b, obb(0.0, 0.0, 10.0, 2.0, 0.0));
        let b = KeypointBox::new(c, Point2::new(-5.0, 0.0), 2.0).unwrap().to_obb().unwrap();
        assert_eq!((b.length, b.width, b.theta), (10.0, 2.0, 0.0));
    }

    #[test]
    fn keypoints_to_obb_keeps_longer_axis() {
        let k = KeypointBox::new(Point2::new(1.0, 1.0), Point2::new(1.0, 4.0), 4.0).unwrap();
        let b = k.to_obb().unwrap();
        assert_eq!((b.length, b.width), (6.0, 4.0));
        assert!(close(b.theta, PI / 2.0, 1e-15));

        // head closer than half the width: the long axis becomes the width axis
        let k = KeypointBox::new(Point2::new(0.0, 0.0), Point2::new(1.0, 0.0), 6.0).unwrap();
        let b = k.to_obb().unwrap();
        assert_eq!((b.length, b.width), (6.0, 2.0));
        assert!(close(b.theta, PI / 2.0, 1e-15));
    }

    #[test]
    fn degenerate_keypoints_rejected() {
        let c = Point2::new(2.0, 2.0);
        assert_eq!(KeypointBox::new(c, c, 1.0), Err(GeometryError::DegenerateKeypoints));
        let k = KeypointBox { center: c, head: c, width: 1.0 };
        assert_eq!(k.to_obb(), Err(GeometryError::DegenerateKeypoints));
    }

    #[test]
    fn obb_constructor_validates() {
        assert!(ObbParams::new(0.0, 0.0, 0.0, 1.0, 0.0).is_err());
        assert!(ObbParams::new(0.0, 0.0, 1.0, -1.0, 0.0).is_err());
        assert!(ObbParams::new(f64::NAN, 0.0, 1.0, 1.0, 0.0).is_err());
        let b = obb(0.0, 0.0, 2.0, 4.0, 0.0);
        assert_eq!((b.length, b.width), (4.0, 2.0));
        assert!(close(b.theta, PI / 2.0, 1e-15));
        assert_eq!(obb(0.0, 0.0, 2.0, 1.0, -1e-300).theta, 0.0);
        assert!(obb(0.0, 0.0, 2.0, 1.0, 7.0 * PI).theta < PI);
    }

    #[test]
    fn quad_corners() {
        let q = obb(0.0, 0.0, 2.0, 2.0, 0.0).to_quad();
        assert!(same_corner_set(&q, &[(1.0, 1.0), (-1.0, 1.0), (-1.0, -1.0), (1.0, -1.0)]));
        assert!(q.area() > 0.0);

        let q = obb(0.0, 0.0, 4.0, 2.0, 0.0).to_quad();
        assert!(same_corner_set(&q, &[(2.0, 1.0), (-2.0, 1.0), (-2.0, -1.0), (2.0, -1.0)]));

        let q = obb(0.0, 0.0, 2.0, 2.0, PI / 4.0).to_quad();
        let r = 2f64.sqrt();
        for p in q.corners() {
            assert!(close(p.norm(), r, 1e-12));
            assert!(close(p.x, 0.0, 1e-12) || close(p.y, 0.0, 1e-12));
        }
        let c = q.centroid();
        assert!(close(c.x, 0.0, 1e-9) && close(c.y, 0.0, 1e-9));
    }

    #[test]
    fn quad_to_obb_examples() {
        let pts = |v: [(f64, f64); 4]| v.map(|(x, y)| Point2::new(x, y));
        let q = Quad::new(pts([(2.0, 1.0), (-2.0, 1.0), (-2.0, -1.0), (2.0, -1.0)])).unwrap();
        assert_eq!(q.to_obb().unwrap(), obb(0.0, 0.0, 4.0, 2.0, 0.0));

        let q = Quad::new(pts([(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)])).unwrap();
        let b = q.to_obb().unwrap();
        assert_eq!((b.cx, b.cy, b.length, b.width, b.theta), (0.5, 0.5, 1.0, 1.0, 0.0));
        // same square listed from another corner: the edge leaving it wins the tie
        let q = Quad::new(pts([(1.0, 0.0), (1.0, 1.0), (0.0, 1.0), (0.0, 0.0)])).unwrap();
        assert!(close(q.to_obb().unwrap().theta, PI / 2.0, 1e-15));

        let q = Quad::new(pts([(100.0, 100.0), (200.0, 100.0), (200.0, 150.0), (100.0, 150.0)])).unwrap();
        assert_eq!(q.to_obb().unwrap(), obb(150.0, 125.0, 100.0, 50.0, 0.0));
    }

    #[test]
    fn quad_orientation_and_validation() {
        let pts = |v: [(f64, f64); 4]| v.map(|(x, y)| Point2::new(x, y));
        let cw = Quad::new(pts([(0.0, 0.0), (0.0, 1.0), (1.0, 1.0), (1.0, 0.0)])).unwrap();
        assert!(cw.area() > 0.0);
        assert_eq!(cw.corners()[0], Point2::new(0.0, 0.0));
        // bow-tie order is repaired through the hull
        let bow = Quad::new(pts([(0.0, 0.0), (1.0, 1.0), (1.0, 0.0), (0.0, 1.0)])).unwrap();
        assert_eq!(bow.area(), 1.0);
        assert!(matches!(
            Quad::new(pts([(0.0, 0.0), (1.0, 0.0), (2.0, 0.0), (3.0, 0.0)])),
            Err(GeometryError::DegenerateQuad(_))
        ));
        assert!(matches!(
            Quad::new(pts([(0.0, 0.0), (4.0, 0.0), (1.0, 1.0), (0.0, 4.0)])),
            Err(GeometryError::NonConvexQuad)
        ));
    }

    #[test]
    fn general_quad_uses_min_area_rect() {
        let pts = [(0.0, 0.0), (4.0, 0.2), (4.0, 2.0), (0.0, 2.0)].map(|(x, y)| Point2::new(x, y));
        let q = Quad::new(pts).unwrap();
        let b = q.to_obb().unwrap();
        // the enclosing rectangle covers every corner
        for p in q.corners() {
            let d = *p - b.center();
            assert!(d.dot(b.axis()).abs() <= 0.5 * b.length + 1e-9);
            assert!(d.cross(b.axis()).abs() <= 0.5 * b.width + 1e-9);
        }
        assert!(b.area() >= q.area());
        assert!(b.area() <= 8.0 + 1e-9);
    }

    #[test]
    fn intersection_examples() {
        let unit = obb(0.5, 0.5, 1.0, 1.0, 0.0).to_quad();
        assert!(close(polygon_intersection_area(&unit, &unit), 1.0, 1e-12));
        let shifted = obb(1.0, 0.5, 1.0, 1.0, 0.0).to_quad();
        assert!(close(polygon_intersection_area(&unit, &shifted), 0.5, 1e-12));
        let rotated = obb(0.5, 0.5, 1.0, 1.0, PI / 4.0).to_quad();
        let expected = 2.0 * (2f64.sqrt() - 1.0);
        assert!(close(polygon_intersection_area(&unit, &rotated), expected, 1e-12));
        let far = obb(10.0, 10.0, 1.0, 1.0, 0.3).to_quad();
        assert_eq!(polygon_intersection_area(&unit, &far), 0.0);
    }

    #[test]
    fn rotated_iou_examples() {
        let a = obb(0.0, 0.0, 1.0, 1.0, 0.0);
        assert_eq!(rotated_iou(&a, &a), 1.0);
        assert_eq!(rotated_iou(&a, &obb(5.0, 0.0, 1.0, 1.0, 0.0)), 0.0);
        // touching edges only
        assert_eq!(rotated_iou(&a, &obb(1.0, 0.0, 1.0, 1.0, 0.0)), 0.0);
        let r = obb(0.0, 0.0, 1.0, 1.0, PI / 4.0);
        let inter = 2.0 * (2f64.sqrt() - 1.0);
        assert!(close(rotated_iou(&a, &r), inter / (2.0 - inter), 1e-12));
        assert!(close(rotated_iou(&a, &r), std::f64::consts::FRAC_1_SQRT_2, 1e-12));
    }

    #[test]
    fn raster_oracle_examples() {
        let a = obb(0.0, 0.0, 3.0, 1.0, 0.4);
        assert_eq!(raster_iou_oracle(&a, &a, 500), 1.0);
        assert_eq!(raster_iou_oracle(&a, &obb(10.0, 0.0, 3.0, 1.0, 0.0), 200), 0.0);
        let u = obb(0.0, 0.0, 1.0, 1.0, 0.0);
        let r = obb(0.0, 0.0, 1.0, 1.0, PI / 4.0);
        assert!(close(raster_iou_oracle(&u, &r, 2000), std::f64::consts::FRAC_1_SQRT_2, 1e-3));
    }

    #[test]
    fn intersection_area_matches_raster_for_rotated_squares() {
        // rasterize the unit square ∩ its 45° twin on a 2000² grid
        let u = obb(0.0, 0.0, 1.0, 1.0, 0.0);
        let r = obb(0.0, 0.0, 1.0, 1.0, PI / 4.0);
        let n = 2000;
        let cell = 1.0 / n as f64;
        let mut count = 0u64;
        for j in 0..n {
            for i in 0..n {
                let p = Point2::new(-0.5 + (i as f64 + 0.5) * cell, -0.5 + (j as f64 + 0.5) * cell);
                if r.contains(p) {
                    count += 1;
                }
            }
        }
        let raster = count as f64 * cell * cell;
        let exact = polygon_intersection_area(&u.to_quad(), &r.to_quad());
        assert!(close(raster, exact, 1e-3));
        assert!(close(exact, 0.828427, 1e-6));
    }

    #[test]
    fn convex_hull_drops_interior_and_collinear() {
        let pts =
            [(0.0, 0.0), (2.0, 0.0), (1.0, 0.0), (2.0, 2.0), (0.0, 2.0), (1.0, 1.0)].map(|(x, y)| Point2::new(x, y));
        let hull = convex_hull(&pts);
        assert_eq!(hull.len(), 4);
        assert_eq!(signed_area(&hull), 4.0);
    }
}
