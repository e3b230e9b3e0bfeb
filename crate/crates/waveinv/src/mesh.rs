//! Tetrahedral meshes of an axis-aligned box.
//!
//! The domain is a box split into cubes of side `h0`, each cube into six
//! tetrahedra sharing the cube's main diagonal (the classical Kuhn split, so
//! neighbouring cubes always agree on shared faces). Refinement is red
//! (edge-midpoint) subdivision into eight children; the Kuhn tetrahedra are
//! self-similar under this rule, so every child's diameter is exactly half of
//! its parent's. Conformity is restored by subdividing any tetrahedron that
//! acquired a hanging node, repeated to a fixed point, so the result never
//! carries constrained vertices.
//!
//! The mesh also records an inner box: the subregion where the reconstructed
//! coefficient is allowed to vary. Vertices outside it (and on the outer
//! boundary) are frozen to the background value by the projection step.

use crate::error::{Error, Result};
use crate::geo::{self, Vec3};
use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};

static NEXT_MESH_ID: AtomicU64 = AtomicU64::new(1);

/// Axis-aligned box `[min, max]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxBounds {
    pub min: Vec3,
    pub max: Vec3,
}

impl BoxBounds {
    pub fn new(min: Vec3, max: Vec3) -> Result<Self> {
        for ax in 0..3 {
            if !(max[ax] > min[ax]) {
                return Err(Error::config(format!(
                    "box has non-positive extent along {}: [{}, {}]",
                    AXIS_NAMES[ax], min[ax], max[ax]
                )));
            }
        }
        Ok(BoxBounds { min, max })
    }

    pub fn edges(&self) -> Vec3 {
        geo::sub(self.max, self.min)
    }

    pub fn diameter(&self) -> f64 {
        geo::norm(self.edges())
    }

    pub fn contains(&self, p: Vec3, tol: f64) -> bool {
        (0..3).all(|ax| p[ax] >= self.min[ax] - tol && p[ax] <= self.max[ax] + tol)
    }

    /// True when `p` lies strictly inside (componentwise margin `tol`).
    pub fn strictly_inside(&self, p: Vec3, tol: f64) -> bool {
        (0..3).all(|ax| p[ax] > self.min[ax] + tol && p[ax] < self.max[ax] - tol)
    }
}

const AXIS_NAMES: [&str; 3] = ["x", "y", "z"];

/// Geometric location of a boundary face. The wave source enters through the
/// front (minimum-z) face or the back (maximum-z) face; the remaining four
/// sides are lateral. Which faces illuminate and which are observed is a
/// per-run choice, not a mesh property, since one face may do both.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryTag {
    Front,
    Back,
    Lateral,
}

/// A triangular face of the mesh with its owner/neighbour tets.
#[derive(Debug, Clone)]
pub struct Face {
    pub verts: [usize; 3],
    pub owner: usize,
    pub neighbor: Option<usize>,
    /// Unit normal pointing out of the owner tet.
    pub normal: Vec3,
    pub area: f64,
    /// Set for boundary faces only.
    pub tag: Option<BoundaryTag>,
}

/// Conforming tetrahedral mesh of a box with per-tet refinement levels.
#[derive(Debug, Clone)]
pub struct TetMesh {
    id: u64,
    pub outer_box: BoxBounds,
    pub inner_box: BoxBounds,
    pub vertices: Vec<Vec3>,
    /// Vertex indices per tet; ordering follows the subdivision rule and is
    /// preserved by refinement (children of path tets are path tets).
    pub tets: Vec<[usize; 4]>,
    /// Refinement generation per tet (0 for the uniform base mesh).
    pub levels: Vec<u32>,
    pub faces: Vec<Face>,
    /// The four face indices of each tet (opposite local vertex 0..3).
    pub tet_faces: Vec<[usize; 4]>,
}

const LOCAL_EDGES: [(usize, usize); 6] = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];

/// Local faces opposite each vertex of a tet.
const LOCAL_FACES: [[usize; 3]; 4] = [[1, 2, 3], [0, 2, 3], [0, 1, 3], [0, 1, 2]];

impl TetMesh {
    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_tets(&self) -> usize {
        self.tets.len()
    }

    pub fn tet_vertices(&self, t: usize) -> [Vec3; 4] {
        let tet = self.tets[t];
        [
            self.vertices[tet[0]],
            self.vertices[tet[1]],
            self.vertices[tet[2]],
            self.vertices[tet[3]],
        ]
    }

    pub fn tet_volume(&self, t: usize) -> f64 {
        let [p0, p1, p2, p3] = self.tet_vertices(t);
        let d = geo::dot(
            geo::sub(p1, p0),
            geo::cross(geo::sub(p2, p0), geo::sub(p3, p0)),
        );
        d.abs() / 6.0
    }

    pub fn tet_centroid(&self, t: usize) -> Vec3 {
        let [p0, p1, p2, p3] = self.tet_vertices(t);
        [
            0.25 * (p0[0] + p1[0] + p2[0] + p3[0]),
            0.25 * (p0[1] + p1[1] + p2[1] + p3[1]),
            0.25 * (p0[2] + p1[2] + p2[2] + p3[2]),
        ]
    }

    pub fn total_volume(&self) -> f64 {
        (0..self.n_tets()).map(|t| self.tet_volume(t)).sum()
    }

    /// Boundary faces carrying the given tag.
    pub fn boundary_faces(&self, tag: BoundaryTag) -> impl Iterator<Item = &Face> {
        self.faces.iter().filter(move |f| f.tag == Some(tag))
    }

    /// Sorted, deduplicated vertex indices of all boundary faces with `tag`.
    pub fn boundary_vertices(&self, tag: BoundaryTag) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .boundary_faces(tag)
            .flat_map(|f| f.verts.into_iter())
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    /// True for vertices where the coefficient is frozen to the background:
    /// on the outer boundary or not strictly inside the inner box.
    pub fn frozen_mask(&self) -> Vec<bool> {
        let tol = 1e-9 * self.outer_box.diameter();
        self.vertices
            .iter()
            .map(|&p| {
                let on_outer = (0..3).any(|ax| {
                    (p[ax] - self.outer_box.min[ax]).abs() <= tol
                        || (p[ax] - self.outer_box.max[ax]).abs() <= tol
                });
                on_outer || !self.inner_box.strictly_inside(p, tol)
            })
            .collect()
    }

    /// Checks the structural invariants: positive volumes, two-sided interior
    /// faces, tagged boundary faces on the box surface (watertight), and no
    /// hanging nodes (no vertex sits at the midpoint of an existing edge).
    pub fn validate(&self) -> Result<()> {
        if self.tets.is_empty() {
            return Err(Error::geometry("mesh has no tets"));
        }
        let diag = self.outer_box.diameter();
        for (t, tet) in self.tets.iter().enumerate() {
            for &v in tet {
                if v >= self.vertices.len() {
                    return Err(Error::geometry(format!("tet {t} references vertex {v}")));
                }
            }
            if self.tet_volume(t) <= 1e-14 * diag.powi(3) {
                return Err(Error::geometry(format!("tet {t} is degenerate")));
            }
        }
        // Boundary faces must lie on the outer box surface; their total area
        // must equal the box surface area.
        let e = self.outer_box.edges();
        let expect_area = 2.0 * (e[0] * e[1] + e[0] * e[2] + e[1] * e[2]);
        let mut area = 0.0;
        let tol = 1e-9 * diag;
        for f in &self.faces {
            match f.neighbor {
                Some(_) => {
                    if f.tag.is_some() {
                        return Err(Error::geometry("interior face carries a boundary tag"));
                    }
                }
                None => {
                    let tag = f
                        .tag
                        .ok_or_else(|| Error::geometry("untagged boundary face"))?;
                    let on_plane = |ax: usize, val: f64| {
                        f.verts
                            .iter()
                            .all(|&v| (self.vertices[v][ax] - val).abs() <= tol)
                    };
                    let planar = (0..3).any(|ax| {
                        on_plane(ax, self.outer_box.min[ax]) || on_plane(ax, self.outer_box.max[ax])
                    });
                    if !planar {
                        return Err(Error::geometry("boundary face off the box surface"));
                    }
                    let expect_tag = boundary_tag_for(&self.outer_box, self.face_points(f), tol);
                    if Some(tag) != expect_tag {
                        return Err(Error::geometry("boundary face tag does not match plane"));
                    }
                    area += f.area;
                }
            }
        }
        if (area - expect_area).abs() > 1e-8 * expect_area {
            return Err(Error::geometry(format!(
                "boundary is not watertight: area {area}, expected {expect_area}"
            )));
        }
        // Hanging nodes: a vertex coinciding with an edge midpoint of a tet
        // that does not contain it means a neighbour was refined without
        // closure.
        let key = |p: Vec3| quantize(p, diag);
        let vert_at: HashMap<[i64; 3], usize> = self
            .vertices
            .iter()
            .enumerate()
            .map(|(i, &p)| (key(p), i))
            .collect();
        for tet in &self.tets {
            for (a, b) in LOCAL_EDGES {
                let mid = geo::midpoint(self.vertices[tet[a]], self.vertices[tet[b]]);
                if vert_at.contains_key(&key(mid)) {
                    return Err(Error::geometry("hanging node on a tet edge"));
                }
            }
        }
        Ok(())
    }

    fn face_points(&self, f: &Face) -> [Vec3; 3] {
        [
            self.vertices[f.verts[0]],
            self.vertices[f.verts[1]],
            self.vertices[f.verts[2]],
        ]
    }
}

fn quantize(p: Vec3, scale: f64) -> [i64; 3] {
    let q = 1e-9 * scale.max(1e-30);
    [
        (p[0] / q).round() as i64,
        (p[1] / q).round() as i64,
        (p[2] / q).round() as i64,
    ]
}

fn boundary_tag_for(outer: &BoxBounds, pts: [Vec3; 3], tol: f64) -> Option<BoundaryTag> {
    let all_at = |ax: usize, val: f64| pts.iter().all(|p| (p[ax] - val).abs() <= tol);
    if all_at(2, outer.min[2]) {
        Some(BoundaryTag::Front)
    } else if all_at(2, outer.max[2]) {
        Some(BoundaryTag::Back)
    } else if (0..2).any(|ax| all_at(ax, outer.min[ax]) || all_at(ax, outer.max[ax])) {
        Some(BoundaryTag::Lateral)
    } else {
        None
    }
}

/// Per-tet mesh size: the diameter (largest vertex distance) of each tet.
pub fn mesh_function(mesh: &TetMesh) -> Vec<f64> {
    (0..mesh.n_tets())
        .map(|t| {
            let p = mesh.tet_vertices(t);
            let mut d: f64 = 0.0;
            for i in 0..4 {
                for j in (i + 1)..4 {
                    d = d.max(geo::dist(p[i], p[j]));
                }
            }
            d
        })
        .collect()
}

/// Smallest tet diameter, used by the time-step stability rule.
pub fn min_diameter(mesh: &TetMesh) -> f64 {
    mesh_function(mesh).into_iter().fold(f64::INFINITY, f64::min)
}

/// Builds the uniform Kuhn mesh of `outer` with cube side `h0`.
///
/// Every box edge must be an integer multiple of `h0`; the six tets of each
/// cube share the cube's main diagonal, which makes the mesh conforming and
/// keeps it conforming under uniform red refinement.
pub fn build_uniform_mesh(outer: BoxBounds, inner: BoxBounds, h0: f64) -> Result<TetMesh> {
    if !(h0 > 0.0) {
        return Err(Error::config(format!("h0 must be positive, got {h0}")));
    }
    for ax in 0..3 {
        if inner.min[ax] < outer.min[ax] - 1e-12 || inner.max[ax] > outer.max[ax] + 1e-12 {
            return Err(Error::config("inner box must lie inside the outer box"));
        }
    }
    let edges = outer.edges();
    let mut n = [0usize; 3];
    for ax in 0..3 {
        let ratio = edges[ax] / h0;
        let rounded = ratio.round();
        if (ratio - rounded).abs() > 1e-9 * ratio.max(1.0) || rounded < 1.0 {
            return Err(Error::config(format!(
                "edge along {} (length {}) is not divisible by h0 = {}",
                AXIS_NAMES[ax], edges[ax], h0
            )));
        }
        n[ax] = rounded as usize;
    }
    let (nx, ny, nz) = (n[0], n[1], n[2]);
    let vid = |i: usize, j: usize, k: usize| (i * (ny + 1) + j) * (nz + 1) + k;
    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1) * (nz + 1));
    for i in 0..=nx {
        for j in 0..=ny {
            for k in 0..=nz {
                vertices.push([
                    outer.min[0] + h0 * i as f64,
                    outer.min[1] + h0 * j as f64,
                    outer.min[2] + h0 * k as f64,
                ]);
            }
        }
    }
    // The six axis orderings of the path from a cube's low corner to its
    // high corner; each ordering contributes one tet.
    const AXIS_ORDERS: [[usize; 3]; 6] = [
        [0, 1, 2],
        [0, 2, 1],
        [1, 0, 2],
        [1, 2, 0],
        [2, 0, 1],
        [2, 1, 0],
    ];
    let mut tets = Vec::with_capacity(6 * nx * ny * nz);
    for i in 0..nx {
        for j in 0..ny {
            for k in 0..nz {
                for order in AXIS_ORDERS {
                    let mut d = [0usize; 3];
                    let mut tet = [vid(i, j, k), 0, 0, 0];
                    for (step, &ax) in order.iter().enumerate() {
                        d[ax] = 1;
                        tet[step + 1] = vid(i + d[0], j + d[1], k + d[2]);
                    }
                    tets.push(tet);
                }
            }
        }
    }
    let levels = vec![0u32; tets.len()];
    assemble_mesh(outer, inner, vertices, tets, levels)
}

/// Builds face connectivity and tags, producing a finished mesh.
fn assemble_mesh(
    outer: BoxBounds,
    inner: BoxBounds,
    vertices: Vec<Vec3>,
    tets: Vec<[usize; 4]>,
    levels: Vec<u32>,
) -> Result<TetMesh> {
    let mut face_map: HashMap<[usize; 3], usize> = HashMap::new();
    let mut faces: Vec<Face> = Vec::new();
    let mut tet_faces = vec![[usize::MAX; 4]; tets.len()];
    for (t, tet) in tets.iter().enumerate() {
        for (lf, local) in LOCAL_FACES.iter().enumerate() {
            let mut key = [tet[local[0]], tet[local[1]], tet[local[2]]];
            key.sort_unstable();
            match face_map.get(&key) {
                Some(&fi) => {
                    if faces[fi].neighbor.is_some() {
                        return Err(Error::geometry("face shared by more than two tets"));
                    }
                    faces[fi].neighbor = Some(t);
                    tet_faces[t][lf] = fi;
                }
                None => {
                    let fi = faces.len();
                    face_map.insert(key, fi);
                    faces.push(Face {
                        verts: key,
                        owner: t,
                        neighbor: None,
                        normal: [0.0; 3],
                        area: 0.0,
                        tag: None,
                    });
                    tet_faces[t][lf] = fi;
                }
            }
        }
    }
    let tol = 1e-9 * outer.diameter();
    let centroid = |tet: &[usize; 4]| -> Vec3 {
        let mut c = [0.0; 3];
        for &v in tet {
            c = geo::add(c, vertices[v]);
        }
        geo::scale(c, 0.25)
    };
    for f in faces.iter_mut() {
        let [a, b, c] = f.verts;
        let n = geo::cross(
            geo::sub(vertices[b], vertices[a]),
            geo::sub(vertices[c], vertices[a]),
        );
        let len = geo::norm(n);
        if len < 1e-14 {
            return Err(Error::geometry("degenerate face"));
        }
        f.area = 0.5 * len;
        let mut unit = geo::scale(n, 1.0 / len);
        let fc = geo::scale(
            geo::add(geo::add(vertices[a], vertices[b]), vertices[c]),
            1.0 / 3.0,
        );
        if geo::dot(unit, geo::sub(fc, centroid(&tets[f.owner]))) < 0.0 {
            unit = geo::scale(unit, -1.0);
        }
        f.normal = unit;
        if f.neighbor.is_none() {
            f.tag = boundary_tag_for(&outer, [vertices[a], vertices[b], vertices[c]], tol);
            if f.tag.is_none() {
                return Err(Error::geometry("boundary face off the box surface"));
            }
        }
    }
    Ok(TetMesh {
        id: NEXT_MESH_ID.fetch_add(1, Ordering::Relaxed),
        outer_box: outer,
        inner_box: inner,
        vertices,
        tets,
        levels,
        faces,
        tet_faces,
    })
}

/// Red refinement of the marked tets with conformity closure.
///
/// Each refined tet is replaced by the eight edge-midpoint children. Any tet
/// left with a hanging node (a split edge) is itself subdivided, repeated to
/// a fixed point, so the output is conforming. On a connected mesh this
/// closure spreads widely; that is the price of staying red-only, and the
/// invariants stay simple in return. Children get `level + 1`.
pub fn refine(mesh: &TetMesh, marked: &[usize]) -> Result<TetMesh> {
    for &t in marked {
        if t >= mesh.n_tets() {
            return Err(Error::mismatch(format!(
                "marked tet {t} out of range ({} tets)",
                mesh.n_tets()
            )));
        }
    }
    if marked.is_empty() {
        return Ok(mesh.clone());
    }
    let mut to_refine = vec![false; mesh.n_tets()];
    for &t in marked {
        to_refine[t] = true;
    }
    // Closure: a tet whose edge is split by any refined tet must be refined
    // too, otherwise the midpoint would hang on its edge.
    loop {
        let mut split: HashMap<(usize, usize), ()> = HashMap::new();
        for (t, tet) in mesh.tets.iter().enumerate() {
            if to_refine[t] {
                for (a, b) in LOCAL_EDGES {
                    split.insert(edge_key(tet[a], tet[b]), ());
                }
            }
        }
        let mut changed = false;
        for (t, tet) in mesh.tets.iter().enumerate() {
            if !to_refine[t]
                && LOCAL_EDGES
                    .iter()
                    .any(|&(a, b)| split.contains_key(&edge_key(tet[a], tet[b])))
            {
                to_refine[t] = true;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    let mut vertices = mesh.vertices.clone();
    let mut midpoint_of: HashMap<(usize, usize), usize> = HashMap::new();
    let mut tets = Vec::with_capacity(mesh.n_tets() + 7 * marked.len());
    let mut levels = Vec::with_capacity(tets.capacity());
    for (t, tet) in mesh.tets.iter().enumerate() {
        if !to_refine[t] {
            tets.push(*tet);
            levels.push(mesh.levels[t]);
            continue;
        }
        let mut mid = [[usize::MAX; 4]; 4];
        for (a, b) in LOCAL_EDGES {
            let key = edge_key(tet[a], tet[b]);
            let m = *midpoint_of.entry(key).or_insert_with(|| {
                vertices.push(geo::midpoint(mesh.vertices[key.0], mesh.vertices[key.1]));
                vertices.len() - 1
            });
            mid[a][b] = m;
            mid[b][a] = m;
        }
        let v = *tet;
        let m = |a: usize, b: usize| mid[a][b];
        // Four corner children plus four around the m02-m13 diagonal of the
        // inner octahedron. For path tets this diagonal is a shortest one and
        // all eight children are half-size path tets again.
        let children: [[usize; 4]; 8] = [
            [v[0], m(0, 1), m(0, 2), m(0, 3)],
            [m(0, 1), v[1], m(1, 2), m(1, 3)],
            [m(0, 2), m(1, 2), v[2], m(2, 3)],
            [m(0, 3), m(1, 3), m(2, 3), v[3]],
            [m(0, 1), m(0, 2), m(0, 3), m(1, 3)],
            [m(0, 1), m(0, 2), m(1, 2), m(1, 3)],
            [m(0, 2), m(0, 3), m(1, 3), m(2, 3)],
            [m(0, 2), m(1, 2), m(1, 3), m(2, 3)],
        ];
        for child in children {
            tets.push(child);
            levels.push(mesh.levels[t] + 1);
        }
    }
    assemble_mesh(mesh.outer_box, mesh.inner_box, vertices, tets, levels)
}

fn edge_key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Locates points in a mesh through a uniform spatial bin index.
pub struct PointLocator<'a> {
    mesh: &'a TetMesh,
    bins: Vec<Vec<usize>>,
    n: [usize; 3],
    cell: Vec3,
    tol: f64,
}

impl<'a> PointLocator<'a> {
    pub fn new(mesh: &'a TetMesh) -> Self {
        let diam = mesh_function(mesh).into_iter().fold(0.0f64, f64::max);
        let edges = mesh.outer_box.edges();
        let mut n = [1usize; 3];
        let mut cell = [0.0; 3];
        for ax in 0..3 {
            n[ax] = ((edges[ax] / diam).round() as usize).max(1);
            cell[ax] = edges[ax] / n[ax] as f64;
        }
        let mut bins = vec![Vec::new(); n[0] * n[1] * n[2]];
        let clamp_bin = |x: f64, ax: usize| -> usize {
            let i = ((x - mesh.outer_box.min[ax]) / cell[ax]).floor() as isize;
            i.clamp(0, n[ax] as isize - 1) as usize
        };
        for t in 0..mesh.n_tets() {
            let pts = mesh.tet_vertices(t);
            let mut lo = [usize::MAX; 3];
            let mut hi = [0usize; 3];
            for ax in 0..3 {
                let min_c = pts.iter().map(|p| p[ax]).fold(f64::INFINITY, f64::min);
                let max_c = pts.iter().map(|p| p[ax]).fold(f64::NEG_INFINITY, f64::max);
                lo[ax] = clamp_bin(min_c, ax);
                hi[ax] = clamp_bin(max_c, ax);
            }
            for i in lo[0]..=hi[0] {
                for j in lo[1]..=hi[1] {
                    for k in lo[2]..=hi[2] {
                        bins[(i * n[1] + j) * n[2] + k].push(t);
                    }
                }
            }
        }
        let tol = 1e-9 * mesh.outer_box.diameter().max(1.0);
        PointLocator {
            mesh,
            bins,
            n,
            cell,
            tol,
        }
    }

    /// Finds a tet containing `p` and its barycentric coordinates there.
    pub fn locate(&self, p: Vec3) -> Result<(usize, [f64; 4])> {
        if !self.mesh.outer_box.contains(p, self.tol) {
            return Err(Error::geometry(format!(
                "point ({}, {}, {}) lies outside the mesh box",
                p[0], p[1], p[2]
            )));
        }
        let mut bin = [0usize; 3];
        for ax in 0..3 {
            let i = ((p[ax] - self.mesh.outer_box.min[ax]) / self.cell[ax]).floor() as isize;
            bin[ax] = i.clamp(0, self.n[ax] as isize - 1) as usize;
        }
        // Scan the home bin first, then its neighbourhood for points that sit
        // on bin borders.
        let mut best: Option<(usize, [f64; 4], f64)> = None;
        for radius in 0..2 {
            let range = |c: usize, ax: usize| {
                let lo = c.saturating_sub(radius);
                let hi = (c + radius).min(self.n[ax] - 1);
                lo..=hi
            };
            for i in range(bin[0], 0) {
                for j in range(bin[1], 1) {
                    for k in range(bin[2], 2) {
                        if radius == 1 && i != 0 && j != 0 && k != 0 {
                            // Inner cells were already scanned at radius 0;
                            // only the shell is new, but re-testing is cheap
                            // and correctness matters more here.
                        }
                        for &t in &self.bins[(i * self.n[1] + j) * self.n[2] + k] {
                            if let Some(bary) = self.barycentric(t, p) {
                                let worst = bary.iter().fold(f64::INFINITY, |m, &b| m.min(b));
                                if worst >= -1e-12 {
                                    return Ok((t, snap_bary(bary)));
                                }
                                if best.map_or(true, |(_, _, w)| worst > w) {
                                    best = Some((t, bary, worst));
                                }
                            }
                        }
                    }
                }
            }
            if let Some((t, bary, worst)) = best {
                if worst >= -1e-7 {
                    return Ok((t, snap_bary(bary)));
                }
            }
        }
        Err(Error::geometry(format!(
            "no tet contains point ({}, {}, {})",
            p[0], p[1], p[2]
        )))
    }

    fn barycentric(&self, t: usize, p: Vec3) -> Option<[f64; 4]> {
        let [p0, p1, p2, p3] = self.mesh.tet_vertices(t);
        let cols = [geo::sub(p1, p0), geo::sub(p2, p0), geo::sub(p3, p0)];
        let lam = geo::solve3(cols, geo::sub(p, p0))?;
        Some([1.0 - lam[0] - lam[1] - lam[2], lam[0], lam[1], lam[2]])
    }
}

/// Clamp barycentric round-off so that nodal evaluation is exact at vertices.
fn snap_bary(mut bary: [f64; 4]) -> [f64; 4] {
    for b in bary.iter_mut() {
        if b.abs() < 1e-12 {
            *b = 0.0;
        }
        if (*b - 1.0).abs() < 1e-12 {
            *b = 1.0;
        }
    }
    let sum: f64 = bary.iter().sum();
    if sum > 0.0 {
        for b in bary.iter_mut() {
            *b /= sum;
        }
    }
    bary
}

/// Interpolates a nodal scalar field from `src` onto the vertices of `dst`.
pub fn interpolate_nodal(src: &TetMesh, values: &[f64], dst: &TetMesh) -> Result<Vec<f64>> {
    if values.len() != src.n_vertices() {
        return Err(Error::mismatch(format!(
            "field has {} values but the source mesh has {} vertices",
            values.len(),
            src.n_vertices()
        )));
    }
    let locator = PointLocator::new(src);
    dst.vertices
        .iter()
        .map(|&p| {
            let (t, bary) = locator.locate(p)?;
            let tet = src.tets[t];
            Ok((0..4).map(|a| bary[a] * values[tet[a]]).sum())
        })
        .collect()
}
