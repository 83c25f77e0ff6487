//! Polygonal domains and conforming triangulations.
//!
//! The two stock domains are the unit square and the L-shape
//! (-1,1)² \ [0,1)×(-1,0], whose reentrant corner at the origin is the
//! interesting case for every mesh-uniform bound measured downstream.
//! Structured meshes split each grid cell along the bottom-left →
//! top-right diagonal; `uniform_refine` quarters every triangle through
//! edge midpoints, which preserves shape regularity exactly.

use crate::error::{Error, Result};
use std::collections::HashMap;
use std::fmt::Write as _;

pub type Point2 = nalgebra::Point2<f64>;
pub type Vector2 = nalgebra::Vector2<f64>;

fn cross(a: Vector2, b: Vector2) -> f64 {
    a.x * b.y - a.y * b.x
}

/// Distance from `p` to the segment [a, b].
/// Distance from `p` to the closed segment [a, b].
pub fn segment_distance(p: Point2, a: Point2, b: Point2) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 == 0.0 {
        return (p - a).norm();
    }
    let t = ((p - a).dot(&ab) / len2).clamp(0.0, 1.0);
    (p - (a + ab * t)).norm()
}

/// Proper (interior) segment intersection test, used by the simplicity check.
fn segments_cross(a: Point2, b: Point2, c: Point2, d: Point2) -> bool {
    let d1 = cross(b - a, c - a);
    let d2 = cross(b - a, d - a);
    let d3 = cross(d - c, a - c);
    let d4 = cross(d - c, b - c);
    (d1 * d2 < 0.0) && (d3 * d4 < 0.0)
}

// ---------------------------------------------------------------------------
// Polygonal domains
// ---------------------------------------------------------------------------

/// A simple polygon with counterclockwise-ordered vertices.
#[derive(Debug, Clone)]
pub struct PolygonalDomain {
    name: String,
    vertices: Vec<Point2>,
    convex: bool,
}

impl PolygonalDomain {
    /// Validates simplicity, orientation, and vertex distinctness.
    pub fn new(name: &str, vertices: Vec<Point2>) -> Result<Self> {
        let n = vertices.len();
        if n < 3 {
            return Err(Error::InvalidArgument(format!(
                "polygon '{name}' needs at least 3 vertices, got {n}"
            )));
        }
        for i in 0..n {
            let j = (i + 1) % n;
            if (vertices[i] - vertices[j]).norm() == 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "polygon '{name}': consecutive vertices {i} and {j} coincide"
                )));
            }
        }
        // signed area must be positive for ccw ordering
        let area2: f64 = (0..n)
            .map(|i| {
                let j = (i + 1) % n;
                cross(vertices[i].coords, vertices[j].coords)
            })
            .sum();
        if area2 <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "polygon '{name}' is not counterclockwise (signed area {})",
                0.5 * area2
            )));
        }
        // simplicity: no two non-adjacent edges may cross
        for i in 0..n {
            for j in (i + 1)..n {
                if j == i || (j + 1) % n == i || (i + 1) % n == j {
                    continue;
                }
                let (a, b) = (vertices[i], vertices[(i + 1) % n]);
                let (c, d) = (vertices[j], vertices[(j + 1) % n]);
                if segments_cross(a, b, c, d) {
                    return Err(Error::InvalidArgument(format!(
                        "polygon '{name}' self-intersects: edges {i} and {j} cross"
                    )));
                }
            }
        }
        let convex = (0..n).all(|i| {
            let p = vertices[i];
            let q = vertices[(i + 1) % n];
            let r = vertices[(i + 2) % n];
            cross(q - p, r - q) >= -1e-14
        });
        Ok(Self { name: name.to_string(), vertices, convex })
    }

    /// The unit square (0,1)².
    pub fn unit_square() -> Self {
        Self::new(
            "square",
            vec![
                Point2::new(0.0, 0.0),
                Point2::new(1.0, 0.0),
                Point2::new(1.0, 1.0),
                Point2::new(0.0, 1.0),
            ],
        )
        .expect("unit square is a valid polygon")
    }

    /// The L-shape (-1,1)² \ [0,1)×(-1,0], reentrant corner at the origin.
    pub fn l_shape() -> Self {
        Self::new(
            "lshape",
            vec![
                Point2::new(-1.0, -1.0),
                Point2::new(0.0, -1.0),
                Point2::new(0.0, 0.0),
                Point2::new(1.0, 0.0),
                Point2::new(1.0, 1.0),
                Point2::new(-1.0, 1.0),
            ],
        )
        .expect("l-shape is a valid polygon")
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn vertices(&self) -> &[Point2] {
        &self.vertices
    }

    pub fn is_convex(&self) -> bool {
        self.convex
    }

    pub fn area(&self) -> f64 {
        let n = self.vertices.len();
        0.5 * (0..n)
            .map(|i| cross(self.vertices[i].coords, self.vertices[(i + 1) % n].coords))
            .sum::<f64>()
    }

    /// Distance from `p` to the polygon boundary.
    pub fn boundary_distance(&self, p: Point2) -> f64 {
        let n = self.vertices.len();
        (0..n)
            .map(|i| segment_distance(p, self.vertices[i], self.vertices[(i + 1) % n]))
            .fold(f64::INFINITY, f64::min)
    }

    /// Point-in-polygon test, boundary inclusive.
    pub fn contains(&self, p: Point2) -> bool {
        if self.boundary_distance(p) < 1e-12 {
            return true;
        }
        // ray cast toward +x
        let n = self.vertices.len();
        let mut inside = false;
        for i in 0..n {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % n];
            if (a.y > p.y) != (b.y > p.y) {
                let x_cross = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
                if p.x < x_cross {
                    inside = !inside;
                }
            }
        }
        inside
    }
}

// ---------------------------------------------------------------------------
// Triangulations
// ---------------------------------------------------------------------------

/// Shape-quality summary of a mesh.
#[derive(Debug, Clone, Copy)]
pub struct MeshQuality {
    pub h_max: f64,
    pub h_min: f64,
    pub rho_min: f64,
    /// max(h_max/h_min, h_max/rho_min)
    pub k_quasi: f64,
}

/// A conforming triangulation with counterclockwise elements.
#[derive(Debug, Clone)]
pub struct TriMesh {
    points: Vec<Point2>,
    triangles: Vec<[usize; 3]>,
    boundary: Vec<bool>,
    /// Max element diameter.
    h: f64,
    /// Dyadic refinement generation: structured builders with n = 2^k
    /// start at level k, `uniform_refine` adds one.
    level: u32,
}

impl TriMesh {
    pub fn from_parts(
        points: Vec<Point2>,
        triangles: Vec<[usize; 3]>,
        boundary: Vec<bool>,
    ) -> Result<Self> {
        if boundary.len() != points.len() {
            return Err(Error::InvalidArgument(format!(
                "boundary flag count {} does not match point count {}",
                boundary.len(),
                points.len()
            )));
        }
        for (t, tri) in triangles.iter().enumerate() {
            for &v in tri {
                if v >= points.len() {
                    return Err(Error::InvalidInput(format!(
                        "triangle {t} references point {v} out of range"
                    )));
                }
            }
        }
        let mut mesh = Self { points, triangles, boundary, h: 0.0, level: 0 };
        mesh.h = mesh.compute_h();
        Ok(mesh)
    }

    /// Structured mesh of the unit square: n×n cells, each split along the
    /// bottom-left → top-right diagonal. (n+1)² points, 2n² triangles.
    pub fn structured_square(n: usize) -> Self {
        assert!(n >= 1, "structured_square needs n >= 1");
        let nf = n as f64;
        let idx = |i: usize, j: usize| j * (n + 1) + i;
        let mut points = Vec::with_capacity((n + 1) * (n + 1));
        let mut boundary = Vec::with_capacity((n + 1) * (n + 1));
        for j in 0..=n {
            for i in 0..=n {
                points.push(Point2::new(i as f64 / nf, j as f64 / nf));
                boundary.push(i == 0 || i == n || j == 0 || j == n);
            }
        }
        let mut triangles = Vec::with_capacity(2 * n * n);
        for j in 0..n {
            for i in 0..n {
                let (p00, p10) = (idx(i, j), idx(i + 1, j));
                let (p01, p11) = (idx(i, j + 1), idx(i + 1, j + 1));
                triangles.push([p00, p10, p11]);
                triangles.push([p00, p11, p01]);
            }
        }
        let level = if n.is_power_of_two() { n.trailing_zeros() } else { 0 };
        let mut mesh = Self { points, triangles, boundary, h: 0.0, level };
        mesh.h = mesh.compute_h();
        mesh
    }

    /// Structured mesh of the L-shape with n cells per unit edge:
    /// 3n²+4n+1 points, 6n² triangles, reentrant corner at the origin.
    pub fn structured_l_shape(n: usize) -> Self {
        assert!(n >= 1, "structured_l_shape needs n >= 1");
        let nf = n as f64;
        let coord = |i: usize| i as f64 / nf - 1.0;
        // lattice over [-1,1]²; drop points strictly inside the removed quadrant
        let mut index = vec![usize::MAX; (2 * n + 1) * (2 * n + 1)];
        let mut points = Vec::new();
        let mut boundary = Vec::new();
        for j in 0..=(2 * n) {
            for i in 0..=(2 * n) {
                let excluded = i > n && j < n; // x > 0 and y < 0
                if excluded {
                    continue;
                }
                let (x, y) = (coord(i), coord(j));
                index[j * (2 * n + 1) + i] = points.len();
                points.push(Point2::new(x, y));
                let on_outer = x == -1.0 || x == 1.0 || y == -1.0 || y == 1.0;
                let on_reentrant = (x == 0.0 && y <= 0.0) || (y == 0.0 && x >= 0.0);
                boundary.push(on_outer || on_reentrant);
            }
        }
        let idx = |i: usize, j: usize| index[j * (2 * n + 1) + i];
        let mut triangles = Vec::with_capacity(6 * n * n);
        for j in 0..(2 * n) {
            for i in 0..(2 * n) {
                let cell_excluded = i >= n && j + 1 <= n; // cell in [0,1)×(-1,0]
                if cell_excluded {
                    continue;
                }
                let (p00, p10) = (idx(i, j), idx(i + 1, j));
                let (p01, p11) = (idx(i, j + 1), idx(i + 1, j + 1));
                triangles.push([p00, p10, p11]);
                triangles.push([p00, p11, p01]);
            }
        }
        let level = if n.is_power_of_two() { n.trailing_zeros() } else { 0 };
        let mut mesh = Self { points, triangles, boundary, h: 0.0, level };
        mesh.h = mesh.compute_h();
        mesh
    }

    /// Builds the stock structured mesh for a named domain at a dyadic level
    /// (n = 2^level cells per unit edge).
    pub fn structured_for(domain: &PolygonalDomain, level: u32) -> Result<Self> {
        let n = 1usize << level;
        match domain.name() {
            "square" => Ok(Self::structured_square(n)),
            "lshape" => Ok(Self::structured_l_shape(n)),
            other => Err(Error::InvalidArgument(format!(
                "no structured mesh builder for domain '{other}'"
            ))),
        }
    }

    /// Quarters every triangle through edge midpoints. Children are similar
    /// to their parent at ratio 1/2, so h halves exactly and shape constants
    /// are preserved.
    pub fn uniform_refine(&self) -> Self {
        let mut points = self.points.clone();
        let mut midpoint: HashMap<(usize, usize), usize> = HashMap::new();
        let incidence = self.edge_incidence();
        let mut boundary = self.boundary.clone();
        let mut mid = |a: usize, b: usize,
                       points: &mut Vec<Point2>,
                       boundary: &mut Vec<bool>|
         -> usize {
            let key = (a.min(b), a.max(b));
            *midpoint.entry(key).or_insert_with(|| {
                let p = Point2::from((points[a].coords + points[b].coords) * 0.5);
                points.push(p);
                // a midpoint lies on the domain boundary iff its edge does
                let on_boundary = incidence.get(&key).copied() == Some(1);
                boundary.push(on_boundary);
                points.len() - 1
            })
        };
        let mut triangles = Vec::with_capacity(4 * self.triangles.len());
        for &[v0, v1, v2] in &self.triangles {
            let m01 = mid(v0, v1, &mut points, &mut boundary);
            let m12 = mid(v1, v2, &mut points, &mut boundary);
            let m20 = mid(v2, v0, &mut points, &mut boundary);
            triangles.push([v0, m01, m20]);
            triangles.push([v1, m12, m01]);
            triangles.push([v2, m20, m12]);
            triangles.push([m01, m12, m20]);
        }
        let mut mesh =
            Self { points, triangles, boundary, h: 0.0, level: self.level + 1 };
        mesh.h = mesh.compute_h();
        mesh
    }

    pub fn num_points(&self) -> usize {
        self.points.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn points(&self) -> &[Point2] {
        &self.points
    }

    pub fn point(&self, i: usize) -> Point2 {
        self.points[i]
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn triangle(&self, t: usize) -> [usize; 3] {
        self.triangles[t]
    }

    pub fn is_boundary_node(&self, i: usize) -> bool {
        self.boundary[i]
    }

    /// Sorted list of boundary node indices.
    pub fn boundary_nodes(&self) -> Vec<usize> {
        (0..self.points.len()).filter(|&i| self.boundary[i]).collect()
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    /// Structured cell scale (shortest edge of the right-angled elements);
    /// h/√2 on the stock meshes.
    pub fn cell_size(&self) -> f64 {
        self.h / std::f64::consts::SQRT_2
    }

    pub fn tri_vertices(&self, t: usize) -> [Point2; 3] {
        let [a, b, c] = self.triangles[t];
        [self.points[a], self.points[b], self.points[c]]
    }

    pub fn tri_area(&self, t: usize) -> f64 {
        let [p0, p1, p2] = self.tri_vertices(t);
        0.5 * cross(p1 - p0, p2 - p0)
    }

    pub fn tri_diameter(&self, t: usize) -> f64 {
        let [p0, p1, p2] = self.tri_vertices(t);
        (p1 - p0).norm().max((p2 - p1).norm()).max((p0 - p2).norm())
    }

    /// Inradius = 2·area / perimeter.
    pub fn tri_inradius(&self, t: usize) -> f64 {
        let [p0, p1, p2] = self.tri_vertices(t);
        let per = (p1 - p0).norm() + (p2 - p1).norm() + (p0 - p2).norm();
        2.0 * self.tri_area(t) / per
    }

    /// Incenter (weighted by opposite edge lengths).
    pub fn tri_incenter(&self, t: usize) -> Point2 {
        let [p0, p1, p2] = self.tri_vertices(t);
        let a = (p2 - p1).norm();
        let b = (p0 - p2).norm();
        let c = (p1 - p0).norm();
        Point2::from((p0.coords * a + p1.coords * b + p2.coords * c) / (a + b + c))
    }

    /// Gradients of the barycentric coordinates (constant on the triangle).
    pub fn bary_gradients(&self, t: usize) -> [Vector2; 3] {
        let [p0, p1, p2] = self.tri_vertices(t);
        let inv2a = 1.0 / (2.0 * self.tri_area(t));
        let rot = |v: Vector2| Vector2::new(-v.y, v.x);
        [rot(p2 - p1) * inv2a, rot(p0 - p2) * inv2a, rot(p1 - p0) * inv2a]
    }

    /// Barycentric coordinates of `p` with respect to triangle `t`.
    pub fn bary_of_point(&self, t: usize, p: Point2) -> [f64; 3] {
        let [p0, p1, p2] = self.tri_vertices(t);
        let inv2a = 1.0 / (2.0 * self.tri_area(t));
        let l1 = cross(p - p0, p2 - p0) * inv2a;
        let l2 = cross(p1 - p0, p - p0) * inv2a;
        [1.0 - l1 - l2, l1, l2]
    }

    pub fn point_from_bary(&self, t: usize, b: [f64; 3]) -> Point2 {
        let [p0, p1, p2] = self.tri_vertices(t);
        Point2::from(p0.coords * b[0] + p1.coords * b[1] + p2.coords * b[2])
    }

    /// Finds the triangle whose closure contains `p`. Linear scan in index
    /// order, so a point on a shared edge resolves to the lowest-indexed
    /// adjacent triangle.
    pub fn locate(&self, p: Point2) -> Result<(usize, [f64; 3])> {
        let tol = 1e-12;
        for t in 0..self.triangles.len() {
            let b = self.bary_of_point(t, p);
            if b.iter().all(|&l| l >= -tol) {
                return Ok((t, b));
            }
        }
        Err(Error::PointOutsideDomain(p.x, p.y))
    }

    /// Unique undirected edges (a < b), sorted lexicographically. The order
    /// is deterministic and is what quadratic spaces number edge dofs by.
    pub fn unique_edges(&self) -> Vec<[usize; 2]> {
        let mut edges: Vec<[usize; 2]> = self
            .triangles
            .iter()
            .flat_map(|&[a, b, c]| {
                [[a.min(b), a.max(b)], [b.min(c), b.max(c)], [c.min(a), c.max(a)]]
            })
            .collect();
        edges.sort_unstable();
        edges.dedup();
        edges
    }

    /// How many triangles contain each undirected edge.
    pub fn edge_incidence(&self) -> HashMap<(usize, usize), u32> {
        let mut map = HashMap::new();
        for &[a, b, c] in &self.triangles {
            for (u, v) in [(a, b), (b, c), (c, a)] {
                *map.entry((u.min(v), u.max(v))).or_insert(0u32) += 1;
            }
        }
        map
    }

    pub fn quality(&self) -> MeshQuality {
        let mut h_max: f64 = 0.0;
        let mut h_min = f64::INFINITY;
        let mut rho_min = f64::INFINITY;
        for t in 0..self.triangles.len() {
            let d = self.tri_diameter(t);
            h_max = h_max.max(d);
            h_min = h_min.min(d);
            rho_min = rho_min.min(self.tri_inradius(t));
        }
        MeshQuality { h_max, h_min, rho_min, k_quasi: (h_max / h_min).max(h_max / rho_min) }
    }

    fn compute_h(&self) -> f64 {
        (0..self.triangles.len())
            .map(|t| self.tri_diameter(t))
            .fold(0.0, f64::max)
    }

    /// Structural validation against the domain polygon: positive areas,
    /// conformity, exact boundary labeling, and h consistency.
    pub fn validate(&self, domain: &PolygonalDomain) -> Result<()> {
        for t in 0..self.triangles.len() {
            let a = self.tri_area(t);
            if !(a > 0.0) {
                return Err(Error::Validation(format!(
                    "triangle {t} has non-positive area {a}"
                )));
            }
        }
        // conformity: each directed edge at most once, undirected at most twice
        let mut directed = HashMap::new();
        for (t, &[a, b, c]) in self.triangles.iter().enumerate() {
            for (u, v) in [(a, b), (b, c), (c, a)] {
                if directed.insert((u, v), t).is_some() {
                    return Err(Error::Validation(format!(
                        "directed edge ({u},{v}) appears twice; inconsistent orientation"
                    )));
                }
            }
        }
        for (&(u, v), &count) in &self.edge_incidence() {
            if count > 2 {
                return Err(Error::Validation(format!(
                    "edge ({u},{v}) shared by {count} > 2 triangles"
                )));
            }
        }
        // boundary labels must coincide with geometric boundary membership
        let tol = 1e-12 * self.h;
        for (i, &p) in self.points.iter().enumerate() {
            if !domain.contains(p) {
                return Err(Error::Validation(format!(
                    "node {i} at ({}, {}) lies outside the domain",
                    p.x, p.y
                )));
            }
            let on_boundary = domain.boundary_distance(p) < tol;
            if on_boundary != self.boundary[i] {
                return Err(Error::Validation(format!(
                    "node {i} boundary flag {} disagrees with geometry",
                    self.boundary[i]
                )));
            }
        }
        // every single-incidence edge must connect two boundary nodes
        for (&(u, v), &count) in &self.edge_incidence() {
            if count == 1 && !(self.boundary[u] && self.boundary[v]) {
                return Err(Error::Validation(format!(
                    "boundary edge ({u},{v}) has an interior endpoint"
                )));
            }
        }
        if (self.h - self.compute_h()).abs() > 1e-14 * self.h {
            return Err(Error::Validation("stored h is stale".into()));
        }
        Ok(())
    }

    // -- text format --------------------------------------------------------

    /// Serializes to the whitespace/LF text format:
    /// `NV NT`, NV point lines, NT 0-based triangle lines, and a final line
    /// with the boundary count followed by the boundary node indices.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{} {}", self.points.len(), self.triangles.len());
        for p in &self.points {
            let _ = writeln!(s, "{:.16e} {:.16e}", p.x, p.y);
        }
        for t in &self.triangles {
            let _ = writeln!(s, "{} {} {}", t[0], t[1], t[2]);
        }
        let bnodes = self.boundary_nodes();
        let _ = write!(s, "{}", bnodes.len());
        for b in bnodes {
            let _ = write!(s, " {b}");
        }
        s.push('\n');
        s
    }

    /// Parses the text format; errors carry 1-based line numbers.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut tokens = text.lines().enumerate().flat_map(|(ln, line)| {
            line.split('#').next().unwrap_or("").split_whitespace().map(move |tok| (ln + 1, tok))
        });
        let mut next = |what: &str| -> Result<(usize, &str)> {
            tokens.next().ok_or_else(|| Error::Parse {
                line: text.lines().count(),
                msg: format!("unexpected end of input, expected {what}"),
            })
        };
        let parse_usize = |(line, tok): (usize, &str), what: &str| -> Result<usize> {
            tok.parse().map_err(|_| Error::Parse {
                line,
                msg: format!("expected {what}, got '{tok}'"),
            })
        };
        let parse_f64 = |(line, tok): (usize, &str), what: &str| -> Result<f64> {
            tok.parse().map_err(|_| Error::Parse {
                line,
                msg: format!("expected {what}, got '{tok}'"),
            })
        };
        let nv = parse_usize(next("point count")?, "point count")?;
        let nt = parse_usize(next("triangle count")?, "triangle count")?;
        let mut points = Vec::with_capacity(nv);
        for _ in 0..nv {
            let x = parse_f64(next("x coordinate")?, "x coordinate")?;
            let y = parse_f64(next("y coordinate")?, "y coordinate")?;
            points.push(Point2::new(x, y));
        }
        let mut triangles = Vec::with_capacity(nt);
        for _ in 0..nt {
            let mut tri = [0usize; 3];
            for v in &mut tri {
                let (line, tok) = next("triangle vertex index")?;
                *v = parse_usize((line, tok), "triangle vertex index")?;
                if *v >= nv {
                    return Err(Error::Parse {
                        line,
                        msg: format!("vertex index {v} out of range (NV = {nv})"),
                    });
                }
            }
            triangles.push(tri);
        }
        let nb = parse_usize(next("boundary count")?, "boundary count")?;
        let mut boundary = vec![false; nv];
        for _ in 0..nb {
            let (line, tok) = next("boundary node index")?;
            let b = parse_usize((line, tok), "boundary node index")?;
            if b >= nv {
                return Err(Error::Parse {
                    line,
                    msg: format!("boundary index {b} out of range (NV = {nv})"),
                });
            }
            boundary[b] = true;
        }
        if let Some((line, tok)) = tokens.next() {
            return Err(Error::Parse { line, msg: format!("trailing token '{tok}'") });
        }
        Self::from_parts(points, triangles, boundary)
    }

    pub fn write_file(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn read_file(path: &std::path::Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn stock_domains() {
        let sq = PolygonalDomain::unit_square();
        assert!(sq.is_convex());
        assert_abs_diff_eq!(sq.area(), 1.0);
        let l = PolygonalDomain::l_shape();
        assert!(!l.is_convex());
        assert_abs_diff_eq!(l.area(), 3.0);
        assert!(l.vertices().iter().any(|v| v.x == 0.0 && v.y == 0.0));
        // membership around the reentrant corner
        assert!(l.contains(Point2::new(-0.5, -0.5)));
        assert!(l.contains(Point2::new(0.5, 0.5)));
        assert!(!l.contains(Point2::new(0.5, -0.5)));
    }

    #[test]
    fn bowtie_rejected() {
        let r = PolygonalDomain::new(
            "bowtie",
            vec![
                Point2::new(0.0, 0.0),
                Point2::new(1.0, 1.0),
                Point2::new(1.0, 0.0),
                Point2::new(0.0, 1.0),
            ],
        );
        assert!(r.is_err());
    }

    #[test]
    fn square_mesh_n2_enumeration() {
        let m = TriMesh::structured_square(2);
        assert_eq!(m.num_points(), 9);
        assert_eq!(m.num_triangles(), 8);
        let interior: Vec<usize> =
            (0..9).filter(|&i| !m.is_boundary_node(i)).collect();
        assert_eq!(interior.len(), 1);
        let p = m.point(interior[0]);
        assert_eq!((p.x, p.y), (0.5, 0.5));
        m.validate(&PolygonalDomain::unit_square()).unwrap();
    }

    #[test]
    fn square_mesh_h_and_area() {
        let m = TriMesh::structured_square(4);
        assert_abs_diff_eq!(m.h(), 2.0_f64.sqrt() / 4.0, epsilon = 1e-15);
        let total: f64 = (0..m.num_triangles()).map(|t| m.tri_area(t)).sum();
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-12);
        assert_eq!(m.level(), 2);
    }

    #[test]
    fn lshape_mesh_counts_and_corner() {
        for n in [1usize, 2, 3] {
            let m = TriMesh::structured_l_shape(n);
            assert_eq!(m.num_triangles(), 6 * n * n);
            assert_eq!(m.num_points(), 3 * n * n + 4 * n + 1);
            let total: f64 = (0..m.num_triangles()).map(|t| m.tri_area(t)).sum();
            assert_abs_diff_eq!(total, 3.0, epsilon = 1e-12);
            // the reentrant corner is a boundary vertex
            let corner = (0..m.num_points())
                .find(|&i| m.point(i) == Point2::new(0.0, 0.0))
                .expect("corner vertex present");
            assert!(m.is_boundary_node(corner));
            m.validate(&PolygonalDomain::l_shape()).unwrap();
        }
        // interior dof count formula: 3n² - 4n + 1
        let m = TriMesh::structured_l_shape(4);
        let interior = (0..m.num_points()).filter(|&i| !m.is_boundary_node(i)).count();
        assert_eq!(interior, 3 * 16 - 16 + 1);
    }

    #[test]
    fn refine_matches_rebuild() {
        // dyadic n keeps all coordinates exact, so equality is bitwise
        let canon = |m: &TriMesh| {
            let mut tris: Vec<[(u64, u64); 3]> = m
                .triangles()
                .iter()
                .map(|&tri| {
                    let mut verts: Vec<(u64, u64)> = tri
                        .iter()
                        .map(|&v| {
                            let p = m.point(v);
                            (p.x.to_bits(), p.y.to_bits())
                        })
                        .collect();
                    verts.sort_unstable();
                    [verts[0], verts[1], verts[2]]
                })
                .collect();
            tris.sort_unstable();
            let mut bnd: Vec<(u64, u64)> = (0..m.num_points())
                .filter(|&i| m.is_boundary_node(i))
                .map(|i| {
                    let p = m.point(i);
                    (p.x.to_bits(), p.y.to_bits())
                })
                .collect();
            bnd.sort_unstable();
            (tris, bnd)
        };
        let refined = TriMesh::structured_square(2).uniform_refine();
        assert_eq!(canon(&refined), canon(&TriMesh::structured_square(4)));
        assert_eq!(refined.level(), 2);
        let refined = TriMesh::structured_l_shape(1).uniform_refine();
        assert_eq!(canon(&refined), canon(&TriMesh::structured_l_shape(2)));
        refined.validate(&PolygonalDomain::l_shape()).unwrap();
    }

    #[test]
    fn refine_halves_h_exactly() {
        let m = TriMesh::structured_square(3);
        let r = m.uniform_refine();
        assert_abs_diff_eq!(r.h(), 0.5 * m.h(), epsilon = 1e-15);
        assert_eq!(r.num_triangles(), 4 * m.num_triangles());
        r.validate(&PolygonalDomain::unit_square()).unwrap();
    }

    #[test]
    fn inradius_of_structured_element() {
        // right isoceles triangle with legs 1/n: inradius = (2-√2)/2 · (1/n)
        let m = TriMesh::structured_square(1);
        let expect = (2.0 - 2.0_f64.sqrt()) / 2.0;
        assert_abs_diff_eq!(m.tri_inradius(0), expect, epsilon = 1e-14);
        // quality constants are level-independent on structured meshes
        let q1 = TriMesh::structured_square(2).quality();
        let q2 = TriMesh::structured_square(2).uniform_refine().quality();
        assert_abs_diff_eq!(q1.k_quasi, q2.k_quasi, epsilon = 1e-12);
        assert_abs_diff_eq!(
            q1.k_quasi,
            2.0 * 2.0_f64.sqrt() / (2.0 - 2.0_f64.sqrt()),
            epsilon = 1e-12
        );
    }

    #[test]
    fn euler_relation() {
        for m in [TriMesh::structured_square(3), TriMesh::structured_l_shape(2)] {
            let v = m.num_points() as i64;
            let e = m.unique_edges().len() as i64;
            let t = m.num_triangles() as i64;
            assert_eq!(v - e + t, 1, "simply connected planar mesh");
        }
    }

    #[test]
    fn locate_tie_breaks_to_lowest_index() {
        let m = TriMesh::structured_square(2);
        // midpoint of the diagonal shared by triangles 0 and 1
        let p = Point2::new(0.25, 0.25);
        let (t, b) = m.locate(p).unwrap();
        assert_eq!(t, 0);
        let q = m.point_from_bary(t, b);
        assert_abs_diff_eq!((q - p).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn locate_reconstructs_and_rejects() {
        let m = TriMesh::structured_l_shape(2);
        for p in [
            Point2::new(-0.3, 0.7),
            Point2::new(0.62, 0.11),
            Point2::new(-0.51, -0.97),
        ] {
            let (t, b) = m.locate(p).unwrap();
            let q = m.point_from_bary(t, b);
            assert!((q - p).norm() < 1e-12);
        }
        match m.locate(Point2::new(0.5, -0.5)) {
            Err(Error::PointOutsideDomain(..)) => {}
            other => panic!("expected point-outside-domain, got {other:?}"),
        }
    }

    #[test]
    fn bary_gradients_sum_to_zero() {
        let m = TriMesh::structured_l_shape(1);
        for t in 0..m.num_triangles() {
            let g = m.bary_gradients(t);
            let s = g[0] + g[1] + g[2];
            assert!(s.norm() < 1e-13);
            // gradient of λ_i dotted with edge from vertex i has value -1 etc.
            let [p0, p1, _] = m.tri_vertices(t);
            assert_abs_diff_eq!(g[0].dot(&(p1 - p0)), -1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn text_roundtrip_is_exact() {
        let m = TriMesh::structured_l_shape(2);
        let text = m.to_text();
        let back = TriMesh::from_text(&text).unwrap();
        assert_eq!(m.num_points(), back.num_points());
        for i in 0..m.num_points() {
            assert_eq!(m.point(i), back.point(i), "point {i} roundtrip");
        }
        assert_eq!(m.triangles(), back.triangles());
        assert_eq!(m.boundary_nodes(), back.boundary_nodes());
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let bad = "2 1\n0.0 0.0\n1.0 zzz\n0 1 0\n0\n";
        match TriMesh::from_text(bad) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
        let out_of_range = "3 1\n0 0\n1 0\n0 1\n0 1 7\n0\n";
        match TriMesh::from_text(out_of_range) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 5),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn structured_mesh_invariants(n in 1usize..=5, lshape in proptest::bool::ANY) {
            let (m, domain) = if lshape {
                (TriMesh::structured_l_shape(n), PolygonalDomain::l_shape())
            } else {
                (TriMesh::structured_square(n), PolygonalDomain::unit_square())
            };
            m.validate(&domain).unwrap();
            prop_assert!((m.h() - 2.0_f64.sqrt() / n as f64).abs() < 1e-14);
            let refined = m.uniform_refine();
            refined.validate(&domain).unwrap();
            prop_assert_eq!(refined.num_triangles(), 4 * m.num_triangles());
            prop_assert!((refined.h() - 0.5 * m.h()).abs() < 1e-15);
            let total: f64 = (0..refined.num_triangles()).map(|t| refined.tri_area(t)).sum();
            prop_assert!((total - domain.area()).abs() < 1e-11);
        }
    }
}
