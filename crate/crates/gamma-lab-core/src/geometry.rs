//! Grids, fields, distance functions, interfaces, and the trace row.
//!
//! All grids are uniform lattices. The singular gradient weight h^{2-p} is
//! never sampled pointwise; every cell carries the exact integral of the
//! weight over the cell with respect to the distance to the cell's reference
//! side, computed in closed form:
//!
//!   int_cell h^{2-p} = delta * ((a + delta)^{3-p} - a^{3-p}) / (3 - p)
//!
//! where [a, a + delta] is the distance band the cell occupies. This is
//! finite for p in (2,3) even when the band starts at the boundary (a = 0).
//! The bounded bulk weight h^{(p-2)/(p-1)} is sampled at cell centers, which
//! for the reference-side convention below coincides with the band midpoint.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("weight exponent must lie in (-1, 0), got {0}")]
    ExponentOutOfRange(f64),
    #[error("grid extents must be positive multiples of the spacing: {0}")]
    BadGridSpec(String),
    #[error("point ({0}, {1}) lies outside the closed domain")]
    PointOutsideDomain(f64, f64),
    #[error("polyline needs at least 2 distinct vertices")]
    DegeneratePolyline,
    #[error("polyline self-intersects near segment {0}")]
    SelfIntersectingPolyline(usize),
    #[error("field length {got} does not match grid node count {want}")]
    FieldShapeMismatch { got: usize, want: usize },
}

/// Exact integral of t^{2-p} over the band [y0, y0 + delta], times the cell
/// cross-width delta. Rejects exponents outside (-1, 0); p = 2 cross-check
/// grids use the internal closed form that extends continuously to 0.
pub fn weight_cell_integral(y0: f64, delta: f64, p: f64) -> Result<f64, GeometryError> {
    let expo = 2.0 - p;
    if !(expo > -1.0 && expo < 0.0) {
        return Err(GeometryError::ExponentOutOfRange(expo));
    }
    Ok(band_integral(y0, delta, p))
}

/// Closed-form band integral, valid for 2 - p in (-1, 0]. At p = 2 it
/// degenerates to the unweighted cell area delta^2.
#[inline]
pub(crate) fn band_integral(y0: f64, delta: f64, p: f64) -> f64 {
    debug_assert!(y0 >= 0.0 && delta > 0.0);
    let e = 3.0 - p;
    delta * ((y0 + delta).powf(e) - y0.powf(e)) / e
}

/// Nodal scalar field on a 2D lattice, row-major with the row index running
/// along increasing y.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Field {
    pub nx: usize,
    pub ny: usize,
    pub values: Vec<f64>,
}

impl Field {
    pub fn constant(nx: usize, ny: usize, value: f64) -> Self {
        Self { nx, ny, values: vec![value; nx * ny] }
    }

    pub fn from_values(nx: usize, ny: usize, values: Vec<f64>) -> Result<Self, GeometryError> {
        if values.len() != nx * ny {
            return Err(GeometryError::FieldShapeMismatch { got: values.len(), want: nx * ny });
        }
        Ok(Self { nx, ny, values })
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        debug_assert!(i < self.nx && j < self.ny);
        self.values[j * self.nx + i]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i < self.nx && j < self.ny);
        self.values[j * self.nx + i] = v;
    }

    /// Bilinear interpolation in local lattice coordinates (fi, fj) measured
    /// in units of the spacing; clamps to the lattice hull.
    pub fn bilinear(&self, fi: f64, fj: f64) -> f64 {
        let fi = fi.clamp(0.0, (self.nx - 1) as f64);
        let fj = fj.clamp(0.0, (self.ny - 1) as f64);
        let i0 = (fi.floor() as usize).min(self.nx.saturating_sub(2));
        let j0 = (fj.floor() as usize).min(self.ny.saturating_sub(2));
        let tx = fi - i0 as f64;
        let ty = fj - j0 as f64;
        let i1 = (i0 + 1).min(self.nx - 1);
        let j1 = (j0 + 1).min(self.ny - 1);
        let v00 = self.at(i0, j0);
        let v10 = self.at(i1, j0);
        let v01 = self.at(i0, j1);
        let v11 = self.at(i1, j1);
        v00 * (1.0 - tx) * (1.0 - ty) + v10 * tx * (1.0 - ty) + v01 * (1.0 - tx) * ty + v11 * tx * ty
    }
}

/// Nodal scalar field on the 3D half-box lattice, index (i, j, k) -> x, y, z
/// with z the distance direction.
#[derive(Debug, Clone, PartialEq)]
pub struct Field3 {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub values: Vec<f64>,
}

impl Field3 {
    pub fn constant(nx: usize, ny: usize, nz: usize, value: f64) -> Self {
        Self { nx, ny, nz, values: vec![value; nx * ny * nz] }
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize, k: usize) -> usize {
        (k * self.ny + j) * self.nx + i
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[self.idx(i, j, k)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, v: f64) {
        let id = self.idx(i, j, k);
        self.values[id] = v;
    }
}

/// Sides of the rectangle, indexed in boundary-walk order. Ties in the
/// reference-side choice resolve to the lowest index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    Bottom = 0,
    Right = 1,
    Top = 2,
    Left = 3,
}

impl Side {
    pub const ALL: [Side; 4] = [Side::Bottom, Side::Right, Side::Top, Side::Left];
}

/// Which parts of the boundary carry the trace term (the active boundary
/// subset in the localized functional).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundaryMask {
    pub sides: [bool; 4],
}

impl BoundaryMask {
    pub fn full() -> Self {
        Self { sides: [true; 4] }
    }
    pub fn empty() -> Self {
        Self { sides: [false; 4] }
    }
    pub fn only(side: Side) -> Self {
        let mut sides = [false; 4];
        sides[side as usize] = true;
        Self { sides }
    }
    pub fn contains(&self, side: Side) -> bool {
        self.sides[side as usize]
    }
}

/// Uniform lattice on an axis-aligned rectangle [0, lx] x [0, ly].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RectDomainGrid {
    pub lx: f64,
    pub ly: f64,
    pub delta: f64,
    pub nx: usize,
    pub ny: usize,
}

fn check_extent(name: &str, len: f64, delta: f64) -> Result<usize, GeometryError> {
    if !(len > 0.0 && delta > 0.0) {
        return Err(GeometryError::BadGridSpec(format!("{name} = {len}, delta = {delta}")));
    }
    let n = (len / delta).round();
    if n < 1.0 || ((n * delta - len).abs() > 1e-9 * len.max(1.0)) {
        return Err(GeometryError::BadGridSpec(format!(
            "{name} = {len} is not an integer multiple of delta = {delta}"
        )));
    }
    Ok(n as usize)
}

impl RectDomainGrid {
    pub fn new(lx: f64, ly: f64, delta: f64) -> Result<Self, GeometryError> {
        let ncx = check_extent("lx", lx, delta)?;
        let ncy = check_extent("ly", ly, delta)?;
        Ok(Self { lx, ly, delta, nx: ncx + 1, ny: ncy + 1 })
    }

    pub fn unit_square(delta: f64) -> Result<Self, GeometryError> {
        Self::new(1.0, 1.0, delta)
    }

    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        i as f64 * self.delta
    }
    #[inline]
    pub fn y(&self, j: usize) -> f64 {
        j as f64 * self.delta
    }
    #[inline]
    pub fn ncells_x(&self) -> usize {
        self.nx - 1
    }
    #[inline]
    pub fn ncells_y(&self) -> usize {
        self.ny - 1
    }
    pub fn node_count(&self) -> usize {
        self.nx * self.ny
    }

    /// Exact distance to the boundary of the rectangle; zero on the boundary.
    pub fn distance_to_boundary(&self, x: f64, y: f64) -> Result<f64, GeometryError> {
        let tol = 1e-12 * self.lx.max(self.ly);
        if x < -tol || y < -tol || x > self.lx + tol || y > self.ly + tol {
            return Err(GeometryError::PointOutsideDomain(x, y));
        }
        let d = (x.max(0.0))
            .min(self.lx - x.min(self.lx))
            .min(y.max(0.0))
            .min(self.ly - y.min(self.ly));
        Ok(d.max(0.0))
    }

    /// Reference side of a cell: the side nearest the cell center, ties to
    /// the lowest side index. Returns (side, band start a), where the cell
    /// occupies the distance band [a, a + delta] from that side.
    pub fn cell_reference_side(&self, ci: usize, cj: usize) -> (Side, f64) {
        let xc = (ci as f64 + 0.5) * self.delta;
        let yc = (cj as f64 + 0.5) * self.delta;
        let d = [yc, self.lx - xc, self.ly - yc, xc]; // bottom, right, top, left
        let mut best = 0usize;
        for s in 1..4 {
            if d[s] < d[best] {
                best = s;
            }
        }
        let a = d[best] - 0.5 * self.delta;
        let side = Side::ALL[best];
        (side, a.max(0.0))
    }

    /// Boundary node loop in arclength order: bottom left corner, bottom row
    /// rightward, right column upward, top row leftward, left column downward.
    /// Each node appears once; the loop has 2 (nx-1) + 2 (ny-1) nodes.
    pub fn boundary_loop(&self) -> Vec<(usize, usize)> {
        let mut nodes = Vec::with_capacity(2 * (self.nx - 1) + 2 * (self.ny - 1));
        for i in 0..self.nx - 1 {
            nodes.push((i, 0));
        }
        for j in 0..self.ny - 1 {
            nodes.push((self.nx - 1, j));
        }
        for i in (1..self.nx).rev() {
            nodes.push((i, self.ny - 1));
        }
        for j in (1..self.ny).rev() {
            nodes.push((0, j));
        }
        nodes
    }

    /// Node indices along one side, in arclength order (corners included).
    pub fn side_nodes(&self, side: Side) -> Vec<(usize, usize)> {
        match side {
            Side::Bottom => (0..self.nx).map(|i| (i, 0)).collect(),
            Side::Right => (0..self.ny).map(|j| (self.nx - 1, j)).collect(),
            Side::Top => (0..self.nx).rev().map(|i| (i, self.ny - 1)).collect(),
            Side::Left => (0..self.ny).rev().map(|j| (0, j)).collect(),
        }
    }

    /// Length of one side.
    pub fn side_length(&self, side: Side) -> f64 {
        match side {
            Side::Bottom | Side::Top => self.lx,
            Side::Right | Side::Left => self.ly,
        }
    }

    pub fn perimeter(&self) -> f64 {
        2.0 * (self.lx + self.ly)
    }
}

/// Uniform lattice on the truncated half plane [-r, r] x [0, h]; the trace
/// row sits at y = 0 and the weight measures distance to it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HalfPlaneGrid {
    pub r: f64,
    pub h: f64,
    pub delta: f64,
    pub nx: usize,
    pub ny: usize,
}

impl HalfPlaneGrid {
    pub fn new(r: f64, h: f64, delta: f64) -> Result<Self, GeometryError> {
        let ncx = check_extent("2r", 2.0 * r, delta)?;
        let ncy = check_extent("h", h, delta)?;
        Ok(Self { r, h, delta, nx: ncx + 1, ny: ncy + 1 })
    }

    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        -self.r + i as f64 * self.delta
    }
    #[inline]
    pub fn y(&self, j: usize) -> f64 {
        j as f64 * self.delta
    }
    pub fn node_count(&self) -> usize {
        self.nx * self.ny
    }

    /// Trapezoid weights for the trace row integral over [-r, r].
    pub fn trace_weights(&self) -> Vec<f64> {
        let mut w = vec![self.delta; self.nx];
        w[0] = 0.5 * self.delta;
        w[self.nx - 1] = 0.5 * self.delta;
        w
    }
}

/// Minimal 3D half-box lattice on [-1, 1]^2 x [0, 1]; exists to exercise the
/// slice inequality. The weight direction is z (distance to the bottom face).
#[derive(Debug, Clone)]
pub struct Box3Grid {
    pub delta: f64,
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
}

impl Box3Grid {
    pub fn new(delta: f64) -> Result<Self, GeometryError> {
        let ncx = check_extent("2 (box x)", 2.0, delta)?;
        let ncz = check_extent("1 (box z)", 1.0, delta)?;
        let n = ncx + 1;
        let nz = ncz + 1;
        if n * n * nz > 48 * 48 * 48 + 3 * 48 * 48 + 3 * 48 + 1 {
            return Err(GeometryError::BadGridSpec(format!(
                "3D lattice {n}x{n}x{nz} exceeds the 48^3 design budget"
            )));
        }
        Ok(Self { delta, nx: n, ny: n, nz })
    }

    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        -1.0 + i as f64 * self.delta
    }
    #[inline]
    pub fn z(&self, k: usize) -> f64 {
        k as f64 * self.delta
    }
}

/// Oriented simple polyline describing a bulk interface. The high phase lies
/// to the right of the direction of travel.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Polyline {
    pub vertices: Vec<[f64; 2]>,
}

fn seg_intersect(a: [f64; 2], b: [f64; 2], c: [f64; 2], d: [f64; 2]) -> bool {
    let cross = |o: [f64; 2], p: [f64; 2], q: [f64; 2]| {
        (p[0] - o[0]) * (q[1] - o[1]) - (p[1] - o[1]) * (q[0] - o[0])
    };
    let d1 = cross(c, d, a);
    let d2 = cross(c, d, b);
    let d3 = cross(a, b, c);
    let d4 = cross(a, b, d);
    ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
}

impl Polyline {
    pub fn new(vertices: Vec<[f64; 2]>) -> Result<Self, GeometryError> {
        if vertices.len() < 2 {
            return Err(GeometryError::DegeneratePolyline);
        }
        for w in vertices.windows(2) {
            if w[0] == w[1] {
                return Err(GeometryError::DegeneratePolyline);
            }
        }
        // simplicity: non-adjacent segments must not cross
        for i in 0..vertices.len() - 1 {
            for j in i + 2..vertices.len() - 1 {
                if seg_intersect(vertices[i], vertices[i + 1], vertices[j], vertices[j + 1]) {
                    return Err(GeometryError::SelfIntersectingPolyline(i));
                }
            }
        }
        Ok(Self { vertices })
    }

    pub fn length(&self) -> f64 {
        self.vertices
            .windows(2)
            .map(|w| ((w[1][0] - w[0][0]).powi(2) + (w[1][1] - w[0][1]).powi(2)).sqrt())
            .sum()
    }

    /// Nearest point on the polyline: returns (closest point, distance,
    /// segment index). Ties resolve to the lowest segment index.
    pub fn project(&self, x: f64, y: f64) -> ([f64; 2], f64, usize) {
        let mut best = ([0.0, 0.0], f64::INFINITY, 0usize);
        for (s, w) in self.vertices.windows(2).enumerate() {
            let (ax, ay) = (w[0][0], w[0][1]);
            let (bx, by) = (w[1][0], w[1][1]);
            let (dx, dy) = (bx - ax, by - ay);
            let len2 = dx * dx + dy * dy;
            let t = (((x - ax) * dx + (y - ay) * dy) / len2).clamp(0.0, 1.0);
            let (px, py) = (ax + t * dx, ay + t * dy);
            let d = ((x - px).powi(2) + (y - py).powi(2)).sqrt();
            if d < best.1 {
                best = ([px, py], d, s);
            }
        }
        best
    }

    /// Signed distance: positive on the high-phase side (right of travel),
    /// negative on the low-phase side, zero on the polyline.
    pub fn signed_distance(&self, x: f64, y: f64) -> f64 {
        let (_, d, s) = self.project(x, y);
        if d == 0.0 {
            return 0.0;
        }
        let a = self.vertices[s];
        let b = self.vertices[s + 1];
        let cross = (b[0] - a[0]) * (y - a[1]) - (b[1] - a[1]) * (x - a[0]);
        if cross < 0.0 {
            d
        } else if cross > 0.0 {
            -d
        } else {
            // beyond an endpoint along the segment line: use the endpoint fan
            let mid = [(a[0] + b[0]) * 0.5, (a[1] + b[1]) * 0.5];
            let cross2 = (b[0] - a[0]) * (y - mid[1]) - (b[1] - a[1]) * (x - mid[0]);
            if cross2 <= 0.0 {
                d
            } else {
                -d
            }
        }
    }
}

/// Interface data: a bulk interface curve or a set of boundary jump points.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum InterfaceSpec {
    /// Jump set of the bulk phase: a simple polyline with finite length.
    Curve(Polyline),
    /// Jump set of the boundary phase: arclength positions along the
    /// boundary walk plus jump orientations (+1: low to high).
    BoundaryPoints { positions: Vec<f64>, orientations: Vec<i8> },
}

impl InterfaceSpec {
    /// Length for curves, cardinality for boundary point sets.
    pub fn measure(&self) -> f64 {
        match self {
            InterfaceSpec::Curve(p) => p.length(),
            InterfaceSpec::BoundaryPoints { positions, .. } => positions.len() as f64,
        }
    }
}

/// Restrict a field to the rectangle boundary loop, in arclength order.
pub fn trace_rect(field: &Field, grid: &RectDomainGrid) -> Vec<f64> {
    assert_eq!(field.nx, grid.nx, "field and grid column counts must agree");
    assert_eq!(field.ny, grid.ny, "field and grid row counts must agree");
    grid.boundary_loop().iter().map(|&(i, j)| field.at(i, j)).collect()
}

/// Restrict a field on the half-plane grid to the trace row y = 0,
/// left to right.
pub fn trace_halfplane(field: &Field) -> Vec<f64> {
    field.values[..field.nx].to_vec()
}
