//! Discrete differential geometry of meridian curves in the `(x, r)` half-plane.
//!
//! A rotationally symmetric hypersurface of `R^{n+1}` is stored through its
//! profile: a polyline in `{r > 0}` that is revolved about the `x` axis by
//! `SO(n)`. Profiles are traversed counterclockwise and carry the outward unit
//! normal `ν = (τ_r, -τ_x)`, so that a round sphere of radius `R` has
//! `H = n/R` and `<X, ν> = R`.
//!
//! Three topologies are supported:
//!
//! * [`Topology::Closed`]: a closed curve away from the axis (torus profiles).
//! * [`Topology::AxisCapped`]: an arc whose two ends meet the axis
//!   perpendicularly (sphere profiles). All quantities are computed on the
//!   curve doubled by the reflection `r -> -r`, which is a closed curve.
//! * [`Topology::Open`]: a free polyline, only used for calibration fixtures.

use std::collections::HashMap;

use crate::error::{LabError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point {
    pub x: f64,
    pub r: f64,
}

impl Point {
    pub const fn new(x: f64, r: f64) -> Self {
        Self { x, r }
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.r)
    }

    pub fn dot(self, o: Point) -> f64 {
        self.x * o.x + self.r * o.r
    }

    pub fn cross(self, o: Point) -> f64 {
        self.x * o.r - self.r * o.x
    }

    pub fn scale(self, s: f64) -> Point {
        Point::new(self.x * s, self.r * s)
    }

    pub fn dist(self, o: Point) -> f64 {
        (self - o).norm()
    }
}

impl std::ops::Add for Point {
    type Output = Point;
    fn add(self, o: Point) -> Point {
        Point::new(self.x + o.x, self.r + o.r)
    }
}

impl std::ops::Sub for Point {
    type Output = Point;
    fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.r - o.r)
    }
}

impl std::ops::Mul<f64> for Point {
    type Output = Point;
    fn mul(self, s: f64) -> Point {
        self.scale(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Topology {
    Closed,
    AxisCapped,
    Open,
}

/// Meridian of a rotationally symmetric hypersurface of dimension `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileCurve {
    n: usize,
    topology: Topology,
    nodes: Vec<Point>,
}

pub const MIN_NODES: usize = 3;

impl ProfileCurve {
    /// Builds a curve and runs the full validation (finite, `r > 0`,
    /// counterclockwise, simple).
    pub fn new(n: usize, topology: Topology, nodes: Vec<Point>) -> Result<Self> {
        let c = Self::new_unchecked(n, topology, nodes);
        c.validate()?;
        Ok(c)
    }

    pub fn closed(n: usize, nodes: Vec<Point>) -> Result<Self> {
        Self::new(n, Topology::Closed, nodes)
    }

    pub(crate) fn new_unchecked(n: usize, topology: Topology, nodes: Vec<Point>) -> Self {
        Self { n, topology, nodes }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn topology(&self) -> Topology {
        self.topology
    }

    pub fn nodes(&self) -> &[Point] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 1 {
            return Err(LabError::InvalidArgument(format!("dimension n = {}", self.n)));
        }
        self.validate_local()?;
        if self.topology != Topology::Open {
            let a = self.signed_area();
            if a <= 0.0 {
                return Err(LabError::WrongOrientation { signed_area: a });
            }
        }
        if let Some((first, second)) = self.first_self_intersection() {
            return Err(LabError::SelfIntersection { first, second });
        }
        Ok(())
    }

    /// Node count, finiteness and positivity of `r`; `O(N)`.
    pub fn validate_local(&self) -> Result<()> {
        if self.nodes.len() < MIN_NODES {
            return Err(LabError::TooFewNodes {
                found: self.nodes.len(),
                required: MIN_NODES,
            });
        }
        for (index, p) in self.nodes.iter().enumerate() {
            if !p.x.is_finite() || !p.r.is_finite() {
                return Err(LabError::NonFinite { index });
            }
            if p.r <= 0.0 {
                return Err(LabError::NonPositiveRadius { index, r: p.r });
            }
        }
        Ok(())
    }

    /// The closed polygon the geometry is computed on. Axis-capped arcs are
    /// doubled by reflection across the axis; the first `len()` entries are
    /// always the curve's own nodes.
    pub fn closed_view(&self) -> Vec<Point> {
        match self.topology {
            Topology::Closed | Topology::Open => self.nodes.clone(),
            Topology::AxisCapped => {
                let mut v = Vec::with_capacity(2 * self.nodes.len());
                v.extend_from_slice(&self.nodes);
                v.extend(self.nodes.iter().rev().map(|p| Point::new(p.x, -p.r)));
                v
            }
        }
    }

    fn view_is_cyclic(&self) -> bool {
        self.topology != Topology::Open
    }

    /// Factor applied to integrals over the closed view.
    pub(crate) fn view_weight(&self) -> f64 {
        match self.topology {
            Topology::AxisCapped => 0.5,
            _ => 1.0,
        }
    }

    /// Polyline length of the profile (for axis-capped arcs, including the two
    /// half-segments that reach the axis).
    pub fn length(&self) -> f64 {
        let v = self.closed_view();
        polyline_length(&v, self.view_is_cyclic()) * self.view_weight()
    }

    /// Length with each chord replaced by the circular arc through its
    /// endpoints' discrete curvature. Exact on circles.
    pub fn arc_length_estimate(&self) -> Result<f64> {
        let g = geometry_bundle_with_floor(self, 0.0)?;
        let v = self.closed_view();
        let m = v.len();
        let kappa_at = |j: usize| -> f64 {
            if j < self.len() {
                g.kappa[j]
            } else {
                g.kappa[m - 1 - j]
            }
        };
        let segs = if self.view_is_cyclic() { m } else { m - 1 };
        let mut total = 0.0;
        for j in 0..segs {
            let k = (j + 1) % m;
            let c = v[j].dist(v[k]);
            let kap = 0.5 * (kappa_at(j) + kappa_at(k));
            let x = 0.5 * c * kap;
            total += if x.abs() < 1e-8 {
                c
            } else {
                2.0 * x.clamp(-1.0, 1.0).asin() / kap
            };
        }
        Ok(total * self.view_weight())
    }

    /// Shoelace area enclosed in the profile plane (for axis-capped arcs, the
    /// area between the arc and the axis). Positive for counterclockwise
    /// traversal.
    pub fn signed_area(&self) -> f64 {
        let v = self.closed_view();
        shoelace(&v) * self.view_weight()
    }

    pub fn area(&self) -> f64 {
        self.signed_area().abs()
    }

    /// Chord lengths between consecutive nodes of the closed view.
    pub fn segment_lengths(&self) -> Vec<f64> {
        let v = self.closed_view();
        let m = v.len();
        let segs = if self.view_is_cyclic() { m } else { m - 1 };
        (0..segs).map(|j| v[j].dist(v[(j + 1) % m])).collect()
    }

    /// `max h / min h` over consecutive spacings.
    pub fn spacing_ratio(&self) -> f64 {
        let h = self.segment_lengths();
        let (lo, hi) = h
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), &s| (lo.min(s), hi.max(s)));
        hi / lo
    }

    pub fn min_spacing(&self) -> f64 {
        self.segment_lengths()
            .into_iter()
            .fold(f64::INFINITY, f64::min)
    }

    pub fn min_r(&self) -> f64 {
        self.nodes.iter().map(|p| p.r).fold(f64::INFINITY, f64::min)
    }

    /// Largest distance between two nodes of the profile.
    pub fn diameter(&self) -> f64 {
        // Strided for large curves: exact up to one spacing stride.
        let mut best = 0.0f64;
        let m = self.nodes.len();
        let stride = (m / 256).max(1);
        for i in (0..m).step_by(stride) {
            for j in (i + 1..m).step_by(stride) {
                best = best.max(self.nodes[i].dist(self.nodes[j]));
            }
        }
        best
    }

    /// Arc-length weighted centroid of the profile polyline.
    pub fn centroid(&self) -> Point {
        let m = self.nodes.len();
        let segs = if self.topology == Topology::Closed { m } else { m - 1 };
        let mut acc = Point::default();
        let mut total = 0.0;
        for j in 0..segs {
            let a = self.nodes[j];
            let b = self.nodes[(j + 1) % m];
            let l = a.dist(b);
            acc = acc + (a + b).scale(0.5 * l);
            total += l;
        }
        if total > 0.0 {
            acc.scale(1.0 / total)
        } else {
            self.nodes[0]
        }
    }

    /// Homothety about the origin.
    pub fn scaled(&self, s: f64) -> ProfileCurve {
        Self::new_unchecked(
            self.n,
            self.topology,
            self.nodes.iter().map(|p| p.scale(s)).collect(),
        )
    }

    pub(crate) fn with_nodes(&self, nodes: Vec<Point>) -> ProfileCurve {
        Self::new_unchecked(self.n, self.topology, nodes)
    }

    /// Reflection `x -> -x`, re-ordered so the traversal stays counterclockwise.
    pub fn reflected_x(&self) -> ProfileCurve {
        let mut nodes: Vec<Point> = self.nodes.iter().map(|p| Point::new(-p.x, p.r)).collect();
        nodes.reverse();
        Self::new_unchecked(self.n, self.topology, nodes)
    }

    pub fn first_self_intersection(&self) -> Option<(usize, usize)> {
        let v = self.closed_view();
        first_self_intersection(&v, self.view_is_cyclic())
    }
}

pub(crate) fn polyline_length(v: &[Point], cyclic: bool) -> f64 {
    let m = v.len();
    let segs = if cyclic { m } else { m.saturating_sub(1) };
    (0..segs).map(|j| v[j].dist(v[(j + 1) % m])).sum()
}

pub(crate) fn shoelace(v: &[Point]) -> f64 {
    let m = v.len();
    0.5 * (0..m).map(|j| v[j].cross(v[(j + 1) % m])).sum::<f64>()
}

fn orient(a: Point, b: Point, c: Point) -> f64 {
    (b - a).cross(c - a)
}

fn on_segment(a: Point, b: Point, p: Point) -> bool {
    p.x >= a.x.min(b.x) && p.x <= a.x.max(b.x) && p.r >= a.r.min(b.r) && p.r <= a.r.max(b.r)
}

/// Closed-segment intersection test, collinear overlaps included.
pub fn segments_intersect(a: Point, b: Point, c: Point, d: Point) -> bool {
    let d1 = orient(c, d, a);
    let d2 = orient(c, d, b);
    let d3 = orient(a, b, c);
    let d4 = orient(a, b, d);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    (d1 == 0.0 && on_segment(c, d, a))
        || (d2 == 0.0 && on_segment(c, d, b))
        || (d3 == 0.0 && on_segment(a, b, c))
        || (d4 == 0.0 && on_segment(a, b, d))
}

/// Uniform-grid broad phase over segment bounding boxes.
struct SegmentGrid {
    cell: f64,
    origin: Point,
    cells: HashMap<(i64, i64), Vec<usize>>,
}

impl SegmentGrid {
    fn build(v: &[Point], segs: usize, cell: f64) -> Self {
        let origin = v.iter().fold(
            Point::new(f64::INFINITY, f64::INFINITY),
            |acc, p| Point::new(acc.x.min(p.x), acc.r.min(p.r)),
        );
        let mut grid = Self {
            cell,
            origin,
            cells: HashMap::new(),
        };
        let m = v.len();
        for j in 0..segs {
            let (a, b) = (v[j], v[(j + 1) % m]);
            let (i0, k0) = grid.key(Point::new(a.x.min(b.x), a.r.min(b.r)));
            let (i1, k1) = grid.key(Point::new(a.x.max(b.x), a.r.max(b.r)));
            for i in i0..=i1 {
                for k in k0..=k1 {
                    grid.cells.entry((i, k)).or_default().push(j);
                }
            }
        }
        grid
    }

    fn key(&self, p: Point) -> (i64, i64) {
        (
            ((p.x - self.origin.x) / self.cell).floor() as i64,
            ((p.r - self.origin.r) / self.cell).floor() as i64,
        )
    }
}

pub(crate) fn first_self_intersection(v: &[Point], cyclic: bool) -> Option<(usize, usize)> {
    let m = v.len();
    if m < 4 {
        return None;
    }
    let segs = if cyclic { m } else { m - 1 };
    let mean = polyline_length(v, cyclic) / segs as f64;
    let cell = if mean > 0.0 { 2.0 * mean } else { 1.0 };
    let grid = SegmentGrid::build(v, segs, cell);
    let adjacent = |a: usize, b: usize| -> bool {
        let d = a.abs_diff(b);
        d <= 1 || (cyclic && d == segs - 1)
    };
    let mut keys: Vec<_> = grid.cells.keys().copied().collect();
    keys.sort_unstable();
    let mut best: Option<(usize, usize)> = None;
    for key in keys {
        let list = &grid.cells[&key];
        for (ia, &a) in list.iter().enumerate() {
            for &b in &list[ia + 1..] {
                let (a, b) = (a.min(b), a.max(b));
                if adjacent(a, b) {
                    continue;
                }
                if segments_intersect(v[a], v[(a + 1) % m], v[b], v[(b + 1) % m])
                    && best.is_none_or(|cur| (a, b) < cur)
                {
                    best = Some((a, b));
                }
            }
        }
    }
    best
}

/// Per-node differential geometry of the profile and of the revolved
/// hypersurface.
#[derive(Debug, Clone, PartialEq)]
pub struct GeometryBundle {
    /// Unit tangent `(τ_x, τ_r)`.
    pub tangent: Vec<Point>,
    /// Outward unit normal `(ν_x, ν_r)`.
    pub normal: Vec<Point>,
    /// Signed profile curvature, positive where a counterclockwise profile is convex.
    pub kappa: Vec<f64>,
    /// `H = κ + (n-1) ν_r / r`.
    pub mean_curvature: Vec<f64>,
    /// `|A|^2 = κ^2 + (n-1) (ν_r / r)^2`.
    pub a_squared: Vec<f64>,
    /// `<X, ν> = x ν_x + r ν_r`.
    pub support: Vec<f64>,
}

impl GeometryBundle {
    pub fn max_abs_a(&self) -> f64 {
        self.a_squared.iter().copied().fold(0.0, f64::max).sqrt()
    }
}

/// Three-point first and second derivatives on a non-uniform stencil with
/// spacings `hm` (behind) and `hp` (ahead).
#[inline]
pub(crate) fn fd_weights(hm: f64, hp: f64) -> ([f64; 3], [f64; 3]) {
    let den = hm * hp * (hm + hp);
    let d1 = [-hp * hp / den, (hp * hp - hm * hm) / den, hm * hm / den];
    let d2 = [2.0 * hp / den, -2.0 * (hp + hm) / den, 2.0 * hm / den];
    (d1, d2)
}

/// Neighbours of node `i` on the closed view; open curves get reflected
/// ghost points at their ends.
#[inline]
fn stencil(v: &[Point], i: usize, cyclic: bool) -> (Point, Point, Point) {
    let m = v.len();
    let p = v[i];
    if cyclic {
        (v[(i + m - 1) % m], p, v[(i + 1) % m])
    } else {
        let prev = if i == 0 { p * 2.0 - v[1] } else { v[i - 1] };
        let next = if i + 1 == m { p * 2.0 - v[m - 2] } else { v[i + 1] };
        (prev, p, next)
    }
}

/// Geometry bundle with the default axis floor `1e-6 · d_max`.
pub fn geometry_bundle(curve: &ProfileCurve) -> Result<GeometryBundle> {
    let (_, d_max) = radial_extent(curve);
    geometry_bundle_with_floor(curve, 1e-6 * d_max)
}

pub fn geometry_bundle_with_floor(curve: &ProfileCurve, r_floor: f64) -> Result<GeometryBundle> {
    let v = curve.closed_view();
    let cyclic = curve.view_is_cyclic();
    let n1 = (curve.n() - 1) as f64;
    let m = curve.len();
    let mut g = GeometryBundle {
        tangent: Vec::with_capacity(m),
        normal: Vec::with_capacity(m),
        kappa: Vec::with_capacity(m),
        mean_curvature: Vec::with_capacity(m),
        a_squared: Vec::with_capacity(m),
        support: Vec::with_capacity(m),
    };
    for i in 0..m {
        let (pm, p, pp) = stencil(&v, i, cyclic);
        if p.r <= r_floor {
            return Err(LabError::AxisContact {
                index: i,
                r: p.r,
                floor: r_floor,
            });
        }
        let hm = p.dist(pm);
        let hp = p.dist(pp);
        let (w1, w2) = fd_weights(hm, hp);
        let d1 = pm * w1[0] + p * w1[1] + pp * w1[2];
        let d2 = pm * w2[0] + p * w2[1] + pp * w2[2];
        let speed = d1.norm();
        let tau = d1.scale(1.0 / speed);
        let nu = Point::new(tau.r, -tau.x);
        let kappa = d1.cross(d2) / (speed * speed * speed);
        let rot = nu.r / p.r;
        g.tangent.push(tau);
        g.normal.push(nu);
        g.kappa.push(kappa);
        g.mean_curvature.push(kappa + n1 * rot);
        g.a_squared.push(kappa * kappa + n1 * rot * rot);
        g.support.push(p.dot(nu));
    }
    Ok(g)
}

/// First and second arc-length derivatives of a nodal scalar field. On
/// axis-capped arcs the field is continued evenly across the axis.
pub fn scalar_derivatives(curve: &ProfileCurve, values: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let v = curve.closed_view();
    let m = curve.len();
    let cyclic = curve.view_is_cyclic();
    let mut f_view: Vec<f64> = values.to_vec();
    if curve.topology() == Topology::AxisCapped {
        f_view.extend(values.iter().rev());
    }
    let mv = v.len();
    let mut fs = Vec::with_capacity(m);
    let mut fss = Vec::with_capacity(m);
    for i in 0..m {
        let (pm, p, pp) = stencil(&v, i, cyclic);
        let (fm, fp) = if cyclic {
            (f_view[(i + mv - 1) % mv], f_view[(i + 1) % mv])
        } else {
            let f0 = f_view[i];
            let fm = if i == 0 { 2.0 * f0 - f_view[1] } else { f_view[i - 1] };
            let fp = if i + 1 == mv { 2.0 * f0 - f_view[mv - 2] } else { f_view[i + 1] };
            (fm, fp)
        };
        let (w1, w2) = fd_weights(p.dist(pm), p.dist(pp));
        let f0 = f_view[i];
        fs.push(w1[0] * fm + w1[1] * f0 + w1[2] * fp);
        fss.push(w2[0] * fm + w2[1] * f0 + w2[2] * fp);
    }
    (fs, fss)
}

/// `H - <X, ν>/2` per node.
pub fn shrinker_residual(curve: &ProfileCurve) -> Result<Vec<f64>> {
    let g = geometry_bundle(curve)?;
    Ok(g.mean_curvature
        .iter()
        .zip(&g.support)
        .map(|(h, s)| h - 0.5 * s)
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParabolicResidual {
    /// `S = H - <X, ν>/(-2t)`.
    pub s: Vec<f64>,
    /// `F = <X, ν> + 2tH`.
    pub f: Vec<f64>,
}

impl ParabolicResidual {
    pub fn min_s(&self) -> f64 {
        self.s.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_f(&self) -> f64 {
        self.f.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

pub fn parabolic_residual(curve: &ProfileCurve, t: f64) -> Result<ParabolicResidual> {
    let g = geometry_bundle(curve)?;
    parabolic_from_bundle(&g, t)
}

pub(crate) fn parabolic_from_bundle(g: &GeometryBundle, t: f64) -> Result<ParabolicResidual> {
    if !(t < 0.0) {
        return Err(LabError::InvalidArgument(format!(
            "parabolic residual needs t < 0, got {t}"
        )));
    }
    let mut s = Vec::with_capacity(g.support.len());
    let mut f = Vec::with_capacity(g.support.len());
    for (&h, &sup) in g.mean_curvature.iter().zip(&g.support) {
        let fi = sup + 2.0 * t * h;
        s.push(fi / (2.0 * t));
        f.push(fi);
    }
    Ok(ParabolicResidual { s, f })
}

/// Moves every node by `a · ν`. Negative `a` is an inward offset.
pub fn normal_offset(curve: &ProfileCurve, a: f64) -> Result<ProfileCurve> {
    if a == 0.0 {
        return Ok(curve.clone());
    }
    let g = geometry_bundle(curve)?;
    // Focal points of the profile lie on the concave side at distance 1/|κ|.
    let worst = g
        .kappa
        .iter()
        .map(|&k| if a < 0.0 { k } else { -k })
        .fold(0.0f64, f64::max);
    if worst > 0.0 && a.abs() >= 1.0 / worst {
        return Err(LabError::FocalDistance {
            offset: a,
            focal: 1.0 / worst,
        });
    }
    let nodes: Vec<Point> = curve
        .nodes()
        .iter()
        .zip(&g.normal)
        .map(|(&p, &nu)| p + nu * a)
        .collect();
    for (index, p) in nodes.iter().enumerate() {
        if p.r <= 0.0 {
            return Err(LabError::FocalDistance {
                offset: a,
                focal: curve.nodes()[index].r,
            });
        }
    }
    ProfileCurve::new(curve.n(), curve.topology(), nodes)
}

/// Even-odd point-in-polygon on a closed polygon.
pub fn point_in_polygon(poly: &[Point], p: Point) -> bool {
    let m = poly.len();
    let mut inside = false;
    let mut j = m - 1;
    for i in 0..m {
        let (a, b) = (poly[i], poly[j]);
        if (a.r > p.r) != (b.r > p.r) {
            let x_cross = a.x + (p.r - a.r) * (b.x - a.x) / (b.r - a.r);
            if p.x < x_cross {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Enclosure {
    pub enclosed: bool,
    pub intersecting: bool,
}

/// Whether `inner` lies in the region bounded by `outer`.
pub fn enclosure_test(inner: &ProfileCurve, outer: &ProfileCurve) -> Enclosure {
    let vi = inner.closed_view();
    let vo = outer.closed_view();
    let intersecting = curves_intersect(&vi, &vo);
    let all_inside = inner
        .nodes()
        .iter()
        .all(|&p| point_in_polygon(&vo, p));
    Enclosure {
        enclosed: all_inside && !intersecting,
        intersecting,
    }
}

fn curves_intersect(a: &[Point], b: &[Point]) -> bool {
    let ma = a.len();
    let mb = b.len();
    let mean = (polyline_length(a, true) / ma as f64).max(polyline_length(b, true) / mb as f64);
    let grid = SegmentGrid::build(b, mb, 2.0 * mean.max(1e-300));
    for j in 0..ma {
        let (p, q) = (a[j], a[(j + 1) % ma]);
        let (i0, k0) = grid.key(Point::new(p.x.min(q.x), p.r.min(q.r)));
        let (i1, k1) = grid.key(Point::new(p.x.max(q.x), p.r.max(q.r)));
        for i in i0..=i1 {
            for k in k0..=k1 {
                if let Some(list) = grid.cells.get(&(i, k)) {
                    for &s in list {
                        if segments_intersect(p, q, b[s], b[(s + 1) % mb]) {
                            return true;
                        }
                    }
                }
            }
        }
    }
    false
}

/// Closest point on segment `[a, b]` to `p`: `(parameter in [0,1], distance)`.
#[inline]
pub fn closest_on_segment(a: Point, b: Point, p: Point) -> (f64, f64) {
    let d = b - a;
    let len2 = d.dot(d);
    let u = if len2 > 0.0 {
        ((p - a).dot(d) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (u, (a + d * u).dist(p))
}

/// Closest point of a polygon to `p`: `(segment index, parameter, distance)`.
pub fn closest_on_polygon(poly: &[Point], cyclic: bool, p: Point) -> (usize, f64, f64) {
    let m = poly.len();
    let segs = if cyclic { m } else { m - 1 };
    let mut best = (0, 0.0, f64::INFINITY);
    for j in 0..segs {
        let (u, d) = closest_on_segment(poly[j], poly[(j + 1) % m], p);
        if d < best.2 {
            best = (j, u, d);
        }
    }
    best
}

fn directed_hausdorff(a: &[Point], a_cyclic: bool, b: &[Point], b_cyclic: bool) -> f64 {
    let m = a.len();
    let segs = if a_cyclic { m } else { m - 1 };
    let mut worst = 0.0f64;
    for &p in a {
        worst = worst.max(closest_on_polygon(b, b_cyclic, p).2);
    }
    for j in 0..segs {
        let mid = (a[j] + a[(j + 1) % m]).scale(0.5);
        worst = worst.max(closest_on_polygon(b, b_cyclic, mid).2);
    }
    worst
}

/// Symmetric Hausdorff distance between two polylines, sampled at vertices and
/// segment midpoints against exact point-to-segment distances.
pub fn hausdorff_distance(a: &ProfileCurve, b: &ProfileCurve) -> f64 {
    let va = a.closed_view();
    let vb = b.closed_view();
    let ca = a.topology() != Topology::Open;
    let cb = b.topology() != Topology::Open;
    directed_hausdorff(&va, ca, &vb, cb).max(directed_hausdorff(&vb, cb, &va, ca))
}

/// `(d_min, d_max)`: extreme node distances of the revolved hypersurface to the origin.
pub fn radial_extent(curve: &ProfileCurve) -> (f64, f64) {
    curve
        .nodes()
        .iter()
        .map(|p| p.norm())
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), d| (lo.min(d), hi.max(d)))
}

/// Nearest node of `other` for each node of `curve`.
pub fn closest_node_matching(curve: &ProfileCurve, other: &ProfileCurve) -> Vec<usize> {
    curve
        .nodes()
        .iter()
        .map(|&p| {
            other
                .nodes()
                .iter()
                .enumerate()
                .map(|(j, &q)| (j, p.dist(q)))
                .fold((0, f64::INFINITY), |acc, c| if c.1 < acc.1 { c } else { acc })
                .0
        })
        .collect()
}

/// Proximity of two curves: Hausdorff distance plus sup-differences of the
/// normal and the profile curvature under closest-node matching.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Proximity {
    pub hausdorff: f64,
    pub normal_sup: f64,
    pub kappa_sup: f64,
}

pub fn proximity(a: &ProfileCurve, b: &ProfileCurve) -> Result<Proximity> {
    let ga = geometry_bundle(a)?;
    let gb = geometry_bundle(b)?;
    let matching = closest_node_matching(a, b);
    let mut normal_sup = 0.0f64;
    let mut kappa_sup = 0.0f64;
    for (i, &j) in matching.iter().enumerate() {
        normal_sup = normal_sup.max(ga.normal[i].dist(gb.normal[j]));
        kappa_sup = kappa_sup.max((ga.kappa[i] - gb.kappa[j]).abs());
    }
    Ok(Proximity {
        hausdorff: hausdorff_distance(a, b),
        normal_sup,
        kappa_sup,
    })
}

/// Periodic cubic spline through points parameterised by cumulative chord length.
struct PeriodicSpline {
    knots: Vec<f64>,
    pts: Vec<Point>,
    second: Vec<Point>,
    period: f64,
}

impl PeriodicSpline {
    fn new(pts: &[Point]) -> Self {
        let m = pts.len();
        let h: Vec<f64> = (0..m).map(|j| pts[j].dist(pts[(j + 1) % m])).collect();
        let mut knots = Vec::with_capacity(m);
        let mut acc = 0.0;
        for &hj in &h {
            knots.push(acc);
            acc += hj;
        }
        let period = acc;
        // Cyclic tridiagonal system for the second derivatives.
        let sub: Vec<f64> = (0..m).map(|i| h[(i + m - 1) % m]).collect();
        let diag: Vec<f64> = (0..m).map(|i| 2.0 * (h[(i + m - 1) % m] + h[i])).collect();
        let sup: Vec<f64> = h.clone();
        let rhs_for = |sel: fn(Point) -> f64| -> Vec<f64> {
            (0..m)
                .map(|i| {
                    let prev = pts[(i + m - 1) % m];
                    let next = pts[(i + 1) % m];
                    let cur = pts[i];
                    6.0 * ((sel(next) - sel(cur)) / h[i]
                        - (sel(cur) - sel(prev)) / h[(i + m - 1) % m])
                })
                .collect()
        };
        let mx = solve_cyclic(&sub, &diag, &sup, &rhs_for(|p| p.x));
        let mr = solve_cyclic(&sub, &diag, &sup, &rhs_for(|p| p.r));
        Self {
            knots,
            pts: pts.to_vec(),
            second: mx.into_iter().zip(mr).map(|(x, r)| Point::new(x, r)).collect(),
            period,
        }
    }

    fn eval(&self, u: f64) -> Point {
        let m = self.pts.len();
        let u = u.rem_euclid(self.period);
        let j = match self.knots.binary_search_by(|k| k.partial_cmp(&u).unwrap()) {
            Ok(j) => j,
            Err(j) => j - 1,
        }
        .min(m - 1);
        let k = (j + 1) % m;
        let u0 = self.knots[j];
        let h = if k == 0 { self.period - u0 } else { self.knots[k] - u0 };
        let a = (h - (u - u0)) / h;
        let b = (u - u0) / h;
        if b == 0.0 {
            return self.pts[j];
        }
        let (y0, y1, m0, m1) = (self.pts[j], self.pts[k], self.second[j], self.second[k]);
        let c = h * h / 6.0;
        y0 * a + y1 * b + m0 * ((a * a * a - a) * c) + m1 * ((b * b * b - b) * c)
    }
}

/// Solves a cyclic tridiagonal system (Sherman–Morrison on the Thomas algorithm).
fn solve_cyclic(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &[f64]) -> Vec<f64> {
    let m = diag.len();
    let alpha = sup[m - 1];
    let beta = sub[0];
    let gamma = -diag[0];
    let mut d = diag.to_vec();
    d[0] -= gamma;
    d[m - 1] -= alpha * beta / gamma;
    let x = thomas(sub, &d, sup, rhs);
    let mut u = vec![0.0; m];
    u[0] = gamma;
    u[m - 1] = alpha;
    let z = thomas(sub, &d, sup, &u);
    let fact = (x[0] + beta * x[m - 1] / gamma) / (1.0 + z[0] + beta * z[m - 1] / gamma);
    x.iter().zip(&z).map(|(xi, zi)| xi - fact * zi).collect()
}

fn thomas(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &[f64]) -> Vec<f64> {
    let m = diag.len();
    let mut c = vec![0.0; m];
    let mut d = vec![0.0; m];
    c[0] = sup[0] / diag[0];
    d[0] = rhs[0] / diag[0];
    for i in 1..m {
        let den = diag[i] - sub[i] * c[i - 1];
        c[i] = sup[i] / den;
        d[i] = (rhs[i] - sub[i] * d[i - 1]) / den;
    }
    let mut x = vec![0.0; m];
    x[m - 1] = d[m - 1];
    for i in (0..m - 1).rev() {
        x[i] = d[i] - c[i] * x[i + 1];
    }
    x
}

pub const RESAMPLE_MIN_NODES: usize = 8;

/// Redistributes nodes at equal spacing of the chord-length parameter of a
/// periodic cubic spline through the current nodes. Open curves are
/// interpolated linearly.
pub fn resample(curve: &ProfileCurve, target_spacing: f64) -> Result<ProfileCurve> {
    if curve.len() < RESAMPLE_MIN_NODES {
        return Err(LabError::TooFewNodes {
            found: curve.len(),
            required: RESAMPLE_MIN_NODES,
        });
    }
    if !(target_spacing > 0.0) {
        return Err(LabError::InvalidArgument(format!(
            "target spacing must be positive, got {target_spacing}"
        )));
    }
    let nodes = match curve.topology() {
        Topology::Closed => {
            let spline = PeriodicSpline::new(curve.nodes());
            let count = ((spline.period / target_spacing).round() as usize).max(RESAMPLE_MIN_NODES);
            (0..count)
                .map(|k| spline.eval(spline.period * k as f64 / count as f64))
                .collect()
        }
        Topology::AxisCapped => {
            let view = curve.closed_view();
            let spline = PeriodicSpline::new(&view);
            let half = 0.5 * spline.period;
            // The axis crossing sits mid-way along the chord from the mirrored
            // first node to the first node.
            let start = -0.5 * view[0].dist(view[view.len() - 1]);
            let count = ((half / target_spacing).round() as usize).max(RESAMPLE_MIN_NODES);
            (0..count)
                .map(|k| spline.eval(start + half * (k as f64 + 0.5) / count as f64))
                .collect()
        }
        Topology::Open => {
            let v = curve.nodes();
            let total = polyline_length(v, false);
            let count = ((total / target_spacing).round() as usize + 1).max(RESAMPLE_MIN_NODES);
            let mut out = Vec::with_capacity(count);
            let mut seg = 0;
            let mut seg_start = 0.0;
            for k in 0..count {
                let s = total * k as f64 / (count - 1) as f64;
                while seg + 1 < v.len() - 1 && seg_start + v[seg].dist(v[seg + 1]) < s {
                    seg_start += v[seg].dist(v[seg + 1]);
                    seg += 1;
                }
                let l = v[seg].dist(v[seg + 1]);
                let u = if l > 0.0 { ((s - seg_start) / l).clamp(0.0, 1.0) } else { 0.0 };
                out.push(v[seg] + (v[seg + 1] - v[seg]) * u);
            }
            out
        }
    };
    ProfileCurve::new(curve.n(), curve.topology(), nodes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reference::{circle, cylinder_segment, ellipse, sphere};
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn max_abs(v: &[f64]) -> f64 {
        v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
    }

    #[test]
    fn sphere_calibration_signs() {
        let s = sphere(2, 2.0, 128).unwrap();
        let g = geometry_bundle(&s).unwrap();
        for i in 0..s.len() {
            assert!((g.mean_curvature[i] - 1.0).abs() < 1e-3, "H = {}", g.mean_curvature[i]);
            assert!((g.support[i] - 2.0).abs() < 1e-12);
            assert!((g.normal[i].norm() - 1.0).abs() < 1e-14);
        }
        let eq = s.len() / 2;
        assert!((g.kappa[eq] - 0.5).abs() < 1e-3);
    }

    #[test]
    fn cylinder_line_has_zero_curvature() {
        let c = cylinder_segment(2, 2f64.sqrt(), 1.0, 33).unwrap();
        let g = geometry_bundle(&c).unwrap();
        assert!(max_abs(&g.kappa) < 1e-12);
        // Left-to-right traversal of the line puts ν = (0, -1).
        for h in &g.mean_curvature {
            assert!((h.abs() - 1.0 / 2f64.sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn shrinker_residual_on_spheres() {
        let unit = sphere(2, 1.0, 256).unwrap();
        for v in shrinker_residual(&unit).unwrap() {
            assert!((v - 1.5).abs() < 1e-4);
        }
        // Second-order convergence to zero on the shrinking sphere.
        let r = 4f64.sqrt();
        let errs: Vec<f64> = [32, 64, 128]
            .iter()
            .map(|&m| max_abs(&shrinker_residual(&sphere(2, r, m).unwrap()).unwrap()))
            .collect();
        for w in errs.windows(2) {
            let ratio = w[0] / w[1];
            assert!(ratio > 3.5 && ratio < 4.5, "ratio {ratio}");
        }
    }

    #[test]
    fn parabolic_residual_vanishes_on_shrinking_sphere() {
        for &t in &[-1.0, -0.5, -0.1] {
            let s = sphere(2, (-4.0f64 * t).sqrt(), 512).unwrap();
            let p = parabolic_residual(&s, t).unwrap();
            assert!(max_abs(&p.s) < 1e-4 / (-t));
            assert!(max_abs(&p.f) < 1e-4);
        }
        assert!(parabolic_residual(&sphere(2, 1.0, 16).unwrap(), 0.0).is_err());
    }

    #[test]
    fn parabolic_residual_at_minus_one_is_shrinker_residual() {
        let c = ellipse(3, Point::new(0.3, 2.0), 1.0, 0.6, 64).unwrap();
        let p = parabolic_residual(&c, -1.0).unwrap();
        let s = shrinker_residual(&c).unwrap();
        for (a, b) in p.s.iter().zip(&s) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn offsets_of_circles() {
        let c = circle(2, Point::new(0.0, 3.0), 2.0, 200).unwrap();
        let o = normal_offset(&c, -0.5).unwrap();
        for p in o.nodes() {
            assert!(((*p - Point::new(0.0, 3.0)).norm() - 1.5).abs() < 1e-12);
        }
        assert_eq!(normal_offset(&c, 0.0).unwrap(), c);
        assert!(matches!(normal_offset(&c, -2.5), Err(LabError::FocalDistance { .. })));
    }

    #[test]
    fn enclosure_examples() {
        let small = circle(2, Point::new(0.0, 3.0), 1.0, 64).unwrap();
        let big = circle(2, Point::new(0.0, 3.0), 2.0, 64).unwrap();
        let far = circle(2, Point::new(5.0, 3.0), 1.0, 64).unwrap();
        assert!(enclosure_test(&small, &big).enclosed);
        assert!(!enclosure_test(&big, &small).enclosed);
        assert!(!enclosure_test(&far, &big).enclosed);
    }

    #[test]
    fn hausdorff_examples() {
        let a = circle(2, Point::new(0.0, 3.0), 1.0, 256).unwrap();
        let b = circle(2, Point::new(0.0, 3.0), 2.0, 256).unwrap();
        assert!((hausdorff_distance(&a, &b) - 1.0).abs() < 1e-3);
        assert!(hausdorff_distance(&a, &a) < 1e-12);
    }

    #[test]
    fn resample_fixes_uniform_polygon() {
        let c = circle(2, Point::new(0.5, 3.0), 1.0, 80).unwrap();
        let again = resample(&c, c.length() / 80.0).unwrap();
        assert_eq!(again.len(), 80);
        for (p, q) in c.nodes().iter().zip(again.nodes()) {
            assert!(p.dist(*q) < 1e-12);
        }
    }

    #[test]
    fn radial_extent_examples() {
        let s = sphere(2, 2.0, 64).unwrap();
        let (lo, hi) = radial_extent(&s);
        assert!((lo - 2.0).abs() < 1e-12 && (hi - 2.0).abs() < 1e-12);
        let c = circle(2, Point::new(0.0, 3.0), 1.0, 400).unwrap();
        let (lo, hi) = radial_extent(&c);
        assert!((lo - 2.0).abs() < 1e-12 && (hi - 4.0).abs() < 1e-12);
    }

    #[test]
    fn resample_circle_to_finer_mesh() {
        let c = circle(2, Point::new(0.0, 3.0), 1.0, 16).unwrap();
        let fine = resample(&c, 2.0 * PI / 64.0).unwrap();
        assert_eq!(fine.len(), 64);
        assert!((fine.arc_length_estimate().unwrap() - 2.0 * PI).abs() < 1e-3);
    }

    #[test]
    fn resample_uniform_curve_is_identity() {
        let c = circle(2, Point::new(0.0, 3.0), 1.0, 48).unwrap();
        let again = resample(&c, c.length() / 48.0).unwrap();
        for (p, q) in c.nodes().iter().zip(again.nodes()) {
            assert!(p.dist(*q) < 1e-12);
        }
        let s = sphere(2, 1.5, 40).unwrap();
        let again = resample(&s, s.length() / 40.0).unwrap();
        for (p, q) in s.nodes().iter().zip(again.nodes()) {
            assert!(p.dist(*q) < 1e-12);
        }
    }

    #[test]
    fn resample_ellipse_area_converges() {
        let e = ellipse(2, Point::new(0.0, 4.0), 2.0, 1.0, 400).unwrap();
        let exact = 2.0 * PI;
        let errs: Vec<f64> = [0.2, 0.1, 0.05]
            .iter()
            .map(|&h| (resample(&e, h).unwrap().area() - exact).abs())
            .collect();
        for w in errs.windows(2) {
            let ratio = w[0] / w[1];
            assert!(ratio > 3.2 && ratio < 4.8, "ratio {ratio}");
        }
    }

    #[test]
    fn bundle_converges_at_second_order() {
        // Ellipse curvature at parameter angle φ: ab / (a²sin²φ + b²cos²φ)^{3/2}.
        let (a, b) = (1.5, 1.0);
        let errs: Vec<f64> = [64usize, 128, 256]
            .iter()
            .map(|&m| {
                let e = ellipse(2, Point::new(0.0, 4.0), a, b, m).unwrap();
                let g = geometry_bundle(&e).unwrap();
                (0..m)
                    .map(|k| {
                        let phi = 2.0 * PI * k as f64 / m as f64;
                        let (s, c) = phi.sin_cos();
                        let exact = a * b / (a * a * s * s + b * b * c * c).powf(1.5);
                        (g.kappa[k] - exact).abs()
                    })
                    .fold(0.0, f64::max)
            })
            .collect();
        for w in errs.windows(2) {
            let ratio = w[0] / w[1];
            assert!(ratio > 3.5 && ratio < 4.5, "ratio {ratio}");
        }
    }

    #[test]
    fn validation_rejects_bad_curves() {
        let pts = vec![Point::new(0.0, 1.0), Point::new(1.0, 1.0), Point::new(1.0, -0.5), Point::new(0.0, 2.0)];
        assert!(matches!(
            ProfileCurve::closed(2, pts),
            Err(LabError::NonPositiveRadius { index: 2, .. })
        ));
        let cw: Vec<Point> = circle(2, Point::new(0.0, 3.0), 1.0, 16).unwrap().nodes().iter().rev().copied().collect();
        assert!(matches!(ProfileCurve::closed(2, cw), Err(LabError::WrongOrientation { .. })));
        let bow = vec![
            Point::new(0.0, 1.0),
            Point::new(2.0, 3.0),
            Point::new(2.0, 1.0),
            Point::new(0.0, 3.0),
            Point::new(-0.5, 2.0),
        ];
        assert!(ProfileCurve::closed(2, bow).is_err());
        assert!(matches!(
            ProfileCurve::closed(2, vec![Point::new(0.0, 1.0), Point::new(1.0, 1.0)]),
            Err(LabError::TooFewNodes { .. })
        ));
    }

    fn arb_ellipse() -> impl Strategy<Value = ProfileCurve> {
        (0.5f64..2.0, 0.5f64..2.0, -1.0f64..1.0, 24usize..96).prop_map(|(a, b, cx, m)| {
            ellipse(2, Point::new(cx, 3.0), a, b, m).unwrap()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn f_is_two_t_s(c in arb_ellipse(), t in -3.0f64..-0.01) {
            let p = parabolic_residual(&c, t).unwrap();
            for (f, s) in p.f.iter().zip(&p.s) {
                prop_assert!((f - 2.0 * t * s).abs() <= 1e-12 * f.abs().max(1.0));
            }
        }

        #[test]
        fn offset_round_trip(c in arb_ellipse(), a in -0.1f64..0.1) {
            let back = normal_offset(&normal_offset(&c, a).unwrap(), -a).unwrap();
            let kmax = max_abs(&geometry_bundle(&c).unwrap().kappa);
            let h = c.segment_lengths().into_iter().fold(0.0, f64::max);
            prop_assert!(hausdorff_distance(&c, &back) <= 2.0 * a * a * kmax * kmax + 0.1 * h * h * kmax);
        }

        #[test]
        fn resample_is_idempotent(
            c in (0.5f64..2.0, 0.5f64..2.0, 64usize..160)
                .prop_map(|(a, b, m)| ellipse(2, Point::new(0.0, 3.0), a, b, m).unwrap())
        ) {
            let once = resample(&c, c.length() / c.len() as f64).unwrap();
            let h = once.length() / once.len() as f64;
            let twice = resample(&once, h).unwrap();
            prop_assert_eq!(once.len(), twice.len());
            // Chord-length parameterisation: chords differ from arcs by
            // κ²h²/24, which accumulates to at most L·κ²h²/24 along the curve.
            let kmax = max_abs(&geometry_bundle(&c).unwrap().kappa);
            let bound = once.length() * kmax * kmax * h * h / 24.0;
            for (p, q) in once.nodes().iter().zip(twice.nodes()) {
                prop_assert!(p.dist(*q) <= bound, "drift {} above {}", p.dist(*q), bound);
            }
        }

        #[test]
        fn enclosure_is_antisymmetric(c in arb_ellipse(), frac in 0.05f64..0.8) {
            let kmax = max_abs(&geometry_bundle(&c).unwrap().kappa);
            let a = frac / kmax;
            let inner = normal_offset(&c, -a).unwrap();
            prop_assert!(enclosure_test(&inner, &c).enclosed);
            prop_assert!(!enclosure_test(&c, &inner).enclosed);
        }
    }
}
