//! Discrete operators for piecewise-linear vector fields on a tet mesh.
//!
//! The spatial bilinear form behind both wave solvers is, for vector fields
//! `v, w` and a nodal coefficient field `eps`,
//!
//! ```text
//! a(v, w) = (grad v, grad w) - (div v, div w) + s * (eps_bar div v, div w)
//! ```
//!
//! where `eps_bar` is the element average (the one-point barycentre value of
//! the linear interpolant). With that quadrature the form is symmetric in
//! `(v, w)` for every coefficient, and its derivative with respect to a nodal
//! coefficient value is exactly the lumped element-average scatter used by
//! the gradient. The same exactness holds for the mass term: the lumped
//! coefficient mass is `m_i(eps) = eps_i * m_i` with `m_i` the integral of
//! the hat function (the vertex-quadrature / row-sum lumping of the mass
//! matrix assembled with the nodal rule), so its coefficient derivative is
//! diagonal. Both choices are what make the discrete misfit gradient agree
//! with finite differences to round-off rather than to discretisation error.
//!
//! The stiffness action is evaluated matrix-free in two passes: a loop over
//! tets for divergences, then a gather over vertices. Every output entry is
//! written by exactly one task, so results are identical for any thread
//! count.

use crate::error::{Error, Result};
use crate::geo::{self, Vec3};
use crate::mesh::{BoundaryTag, TetMesh};
use crate::par;

/// Precomputed geometry and connectivity for operator application.
pub struct DiscreteOperators {
    mesh_id: u64,
    n_vertices: usize,
    pub tets: Vec<[usize; 4]>,
    /// P1 basis gradients per tet (constant vectors).
    pub grads: Vec<[Vec3; 4]>,
    pub vols: Vec<f64>,
    /// Hat-function integrals: `m_i = sum of vol/4 over incident tets`.
    pub vertex_mass: Vec<f64>,
    /// Gauge parameter of the divergence penalty (>= 1).
    pub s: f64,
    /// Element diameters (largest vertex distance) and their minimum,
    /// used by the error indicators and the step-size bound.
    pub diameters: Vec<f64>,
    pub min_diameter: f64,
    // CSR incidence: vertex -> (tet, local index) pairs.
    inc_offsets: Vec<usize>,
    inc: Vec<(u32, u8)>,
    // Boundary faces: vertex triple, area, tag.
    boundary: Vec<([usize; 3], f64, BoundaryTag)>,
}

/// Reusable per-element buffers for the stiffness action.
pub struct StiffnessScratch {
    div: Vec<f64>,
    pen: Vec<f64>,
}

impl StiffnessScratch {
    pub fn new(ops: &DiscreteOperators) -> Self {
        StiffnessScratch {
            div: vec![0.0; ops.n_tets()],
            pen: vec![0.0; ops.n_tets()],
        }
    }
}

impl DiscreteOperators {
    pub fn assemble(mesh: &TetMesh, s: f64) -> Result<Self> {
        if !(s >= 1.0) {
            return Err(Error::config(format!(
                "divergence penalty s must be >= 1, got {s}"
            )));
        }
        let nt = mesh.n_tets();
        let nv = mesh.n_vertices();
        let mut grads = Vec::with_capacity(nt);
        let mut vols = Vec::with_capacity(nt);
        let mut vertex_mass = vec![0.0; nv];
        for t in 0..nt {
            let [p0, p1, p2, p3] = mesh.tet_vertices(t);
            let c1 = geo::sub(p1, p0);
            let c2 = geo::sub(p2, p0);
            let c3 = geo::sub(p3, p0);
            let det = geo::dot(c1, geo::cross(c2, c3));
            if det.abs() < 1e-300 {
                return Err(Error::geometry(format!("tet {t} is degenerate")));
            }
            let g1 = geo::scale(geo::cross(c2, c3), 1.0 / det);
            let g2 = geo::scale(geo::cross(c3, c1), 1.0 / det);
            let g3 = geo::scale(geo::cross(c1, c2), 1.0 / det);
            let g0 = [
                -g1[0] - g2[0] - g3[0],
                -g1[1] - g2[1] - g3[1],
                -g1[2] - g2[2] - g3[2],
            ];
            grads.push([g0, g1, g2, g3]);
            let vol = det.abs() / 6.0;
            vols.push(vol);
            for &v in &mesh.tets[t] {
                vertex_mass[v] += 0.25 * vol;
            }
        }
        // Vertex-to-tet incidence in CSR form, filled in tet order.
        let mut counts = vec![0usize; nv];
        for tet in &mesh.tets {
            for &v in tet {
                counts[v] += 1;
            }
        }
        let mut inc_offsets = vec![0usize; nv + 1];
        for i in 0..nv {
            inc_offsets[i + 1] = inc_offsets[i] + counts[i];
        }
        let mut cursor = inc_offsets.clone();
        let mut inc = vec![(0u32, 0u8); inc_offsets[nv]];
        for (t, tet) in mesh.tets.iter().enumerate() {
            for (local, &v) in tet.iter().enumerate() {
                inc[cursor[v]] = (t as u32, local as u8);
                cursor[v] += 1;
            }
        }
        let boundary = mesh
            .faces
            .iter()
            .filter_map(|f| f.tag.map(|tag| (f.verts, f.area, tag)))
            .collect();
        let diameters = crate::mesh::mesh_function(mesh);
        let min_diameter = diameters.iter().cloned().fold(f64::INFINITY, f64::min);
        Ok(DiscreteOperators {
            mesh_id: mesh.id(),
            n_vertices: nv,
            tets: mesh.tets.clone(),
            grads,
            vols,
            vertex_mass,
            s,
            diameters,
            min_diameter,
            inc_offsets,
            inc,
            boundary,
        })
    }

    pub fn n_tets(&self) -> usize {
        self.tets.len()
    }

    pub fn n_vertices(&self) -> usize {
        self.n_vertices
    }

    pub fn mesh_id(&self) -> u64 {
        self.mesh_id
    }

    pub fn check_field(&self, eps: &[f64]) -> Result<()> {
        if eps.len() != self.n_vertices {
            return Err(Error::mismatch(format!(
                "coefficient field has {} values, mesh has {} vertices",
                eps.len(),
                self.n_vertices
            )));
        }
        Ok(())
    }

    /// Element average of a nodal field (its barycentre value).
    #[inline]
    pub fn element_mean(&self, values: &[f64], t: usize) -> f64 {
        let tet = self.tets[t];
        0.25 * (values[tet[0]] + values[tet[1]] + values[tet[2]] + values[tet[3]])
    }

    /// Element divergence of a nodal vector field.
    #[inline]
    pub fn element_div(&self, v: &[Vec3], t: usize) -> f64 {
        let tet = self.tets[t];
        let g = &self.grads[t];
        geo::dot(v[tet[0]], g[0])
            + geo::dot(v[tet[1]], g[1])
            + geo::dot(v[tet[2]], g[2])
            + geo::dot(v[tet[3]], g[3])
    }

    /// Element gradient (rows are gradients of the three components).
    pub fn element_grad(&self, v: &[Vec3], t: usize) -> [Vec3; 3] {
        let tet = self.tets[t];
        let g = &self.grads[t];
        let mut out = [[0.0; 3]; 3];
        for (a, &vert) in tet.iter().enumerate() {
            for c in 0..3 {
                for d in 0..3 {
                    out[c][d] += v[vert][c] * g[a][d];
                }
            }
        }
        out
    }

    /// Coefficient-weighted lumped mass: `m_i(eps) = eps_i * m_i`, one weight
    /// per vertex shared by the three components.
    pub fn lumped_mass(&self, eps: &[f64]) -> Result<Vec<f64>> {
        self.check_field(eps)?;
        Ok(self
            .vertex_mass
            .iter()
            .zip(eps)
            .map(|(&m, &e)| m * e)
            .collect())
    }

    /// Applies the stiffness form: `out_b = sum_K vol_K [ sum_a (g_a . g_b) v_a
    /// + (s eps_bar - 1) (div v) g_b ]` gathered over the tets incident to
    /// each vertex.
    pub fn apply_stiffness(
        &self,
        eps: &[f64],
        v: &[Vec3],
        out: &mut [Vec3],
        scratch: &mut StiffnessScratch,
    ) {
        debug_assert_eq!(v.len(), self.n_vertices);
        debug_assert_eq!(out.len(), self.n_vertices);
        let tets = &self.tets;
        let grads = &self.grads;
        let vols = &self.vols;
        let s = self.s;
        {
            let pen = &mut scratch.pen;
            par::fill_chunks(&mut scratch.div, |start, chunk| {
                for (off, d) in chunk.iter_mut().enumerate() {
                    let t = start + off;
                    let tet = tets[t];
                    let g = &grads[t];
                    *d = geo::dot(v[tet[0]], g[0])
                        + geo::dot(v[tet[1]], g[1])
                        + geo::dot(v[tet[2]], g[2])
                        + geo::dot(v[tet[3]], g[3]);
                }
            });
            let ebar: Vec<f64> = (0..self.n_tets())
                .map(|t| self.element_mean(eps, t))
                .collect();
            par::fill_chunks(pen, |start, chunk| {
                for (off, p) in chunk.iter_mut().enumerate() {
                    let t = start + off;
                    *p = (s * ebar[t] - 1.0) * vols[t];
                }
            });
        }
        let div = &scratch.div;
        let pen = &scratch.pen;
        let inc_offsets = &self.inc_offsets;
        let inc = &self.inc;
        par::fill_chunks(out, |start, chunk| {
            for (off, o) in chunk.iter_mut().enumerate() {
                let b = start + off;
                let mut acc = [0.0f64; 3];
                for &(t, local) in &inc[inc_offsets[b]..inc_offsets[b + 1]] {
                    let t = t as usize;
                    let tet = tets[t];
                    let g = &grads[t];
                    let gb = g[local as usize];
                    let vol = vols[t];
                    for a in 0..4 {
                        let w = vol * geo::dot(g[a], gb);
                        let va = v[tet[a]];
                        acc[0] += w * va[0];
                        acc[1] += w * va[1];
                        acc[2] += w * va[2];
                    }
                    let w = pen[t] * div[t];
                    acc[0] += w * gb[0];
                    acc[1] += w * gb[1];
                    acc[2] += w * gb[2];
                }
                *o = acc;
            }
        });
    }

    /// Lumped boundary quadrature weights (`area/3` per incident face) over
    /// the faces carrying one of `tags`; zero elsewhere.
    pub fn boundary_vertex_weights(&self, tags: &[BoundaryTag]) -> Vec<f64> {
        let mut w = vec![0.0; self.n_vertices];
        for &(verts, area, tag) in &self.boundary {
            if tags.contains(&tag) {
                for &v in &verts {
                    w[v] += area / 3.0;
                }
            }
        }
        w
    }

    /// Dense stiffness matrix (tests and small oracles only).
    pub fn dense_stiffness(&self, eps: &[f64]) -> Vec<Vec<f64>> {
        let n = 3 * self.n_vertices;
        let mut mat = vec![vec![0.0; n]; n];
        let mut scratch = StiffnessScratch::new(self);
        let mut basis = vec![[0.0; 3]; self.n_vertices];
        let mut out = vec![[0.0; 3]; self.n_vertices];
        for j in 0..n {
            basis[j / 3][j % 3] = 1.0;
            self.apply_stiffness(eps, &basis, &mut out, &mut scratch);
            for i in 0..self.n_vertices {
                for c in 0..3 {
                    mat[3 * i + c][j] = out[i][c];
                }
            }
            basis[j / 3][j % 3] = 0.0;
        }
        mat
    }
}
