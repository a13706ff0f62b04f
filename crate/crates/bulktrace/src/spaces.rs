//! Lagrange bases on Gauss-Lobatto nodes and the three-field DOF layout.
//!
//! Displacements are C0 and shared through mesh nodes. Moments are element
//! local. Hybrid rotations live on facet nodes and are keyed by the pair
//! (facet, global node), so they are shared by the two elements of a facet and
//! by nothing else.

use std::collections::HashMap;

use crate::error::{BtError, Result};
use crate::mesh::quadrature::{gauss_lobatto, QuadratureRule};
use crate::mesh::{BulkMesh, FacetTag};

/// Values, reference gradients and reference Hessians of all basis functions
/// at one reference point.
#[derive(Debug, Clone)]
pub struct ShapeValues {
    pub n: Vec<f64>,
    pub dn: Vec<[f64; 3]>,
    pub d2n: Vec<[[f64; 3]; 3]>,
}

#[derive(Debug, Clone)]
pub struct ShapeBasis {
    pub dim: usize,
    pub p: usize,
    pub nodes_1d: Vec<f64>,
}

impl ShapeBasis {
    pub fn new(dim: usize, p: usize) -> Self {
        Self { dim, p, nodes_1d: gauss_lobatto(p) }
    }

    pub fn n_nodes(&self) -> usize {
        (self.p + 1).pow(self.dim as u32)
    }

    pub fn n_face_nodes(&self) -> usize {
        (self.p + 1).pow(self.dim as u32 - 1)
    }

    pub fn n_faces(&self) -> usize {
        2 * self.dim
    }

    /// 1D Lagrange values and first two derivatives at `x`.
    pub fn eval_1d(&self, x: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let z = &self.nodes_1d;
        let m = z.len();
        let mut v = vec![0.0; m];
        let mut d1 = vec![0.0; m];
        let mut d2 = vec![0.0; m];
        for i in 0..m {
            let mut prod = 1.0;
            for j in 0..m {
                if j != i {
                    prod *= (x - z[j]) / (z[i] - z[j]);
                }
            }
            v[i] = prod;
            let mut s1 = 0.0;
            let mut s2 = 0.0;
            for k in 0..m {
                if k == i {
                    continue;
                }
                let mut pk = 1.0 / (z[i] - z[k]);
                for j in 0..m {
                    if j != i && j != k {
                        pk *= (x - z[j]) / (z[i] - z[j]);
                    }
                }
                s1 += pk;
                for l in 0..m {
                    if l == i || l == k {
                        continue;
                    }
                    let mut pkl = 1.0 / ((z[i] - z[k]) * (z[i] - z[l]));
                    for j in 0..m {
                        if j != i && j != k && j != l {
                            pkl *= (x - z[j]) / (z[i] - z[j]);
                        }
                    }
                    s2 += pkl;
                }
            }
            d1[i] = s1;
            d2[i] = s2;
        }
        (v, d1, d2)
    }

    /// Lexicographic multi-index of node `a`, first axis fastest.
    pub fn node_index(&self, a: usize) -> [usize; 3] {
        let m = self.p + 1;
        let mut idx = [0; 3];
        let mut r = a;
        for item in idx.iter_mut().take(self.dim) {
            *item = r % m;
            r /= m;
        }
        idx
    }

    pub fn node_ref_coords(&self, a: usize) -> [f64; 3] {
        let idx = self.node_index(a);
        let mut x = [0.0; 3];
        for d in 0..self.dim {
            x[d] = self.nodes_1d[idx[d]];
        }
        x
    }

    pub fn eval(&self, xi: &[f64; 3]) -> ShapeValues {
        let dim = self.dim;
        let tabs: Vec<_> = (0..dim).map(|d| self.eval_1d(xi[d])).collect();
        let nn = self.n_nodes();
        let mut n = vec![0.0; nn];
        let mut dn = vec![[0.0; 3]; nn];
        let mut d2n = vec![[[0.0; 3]; 3]; nn];
        for a in 0..nn {
            let idx = self.node_index(a);
            // order[d] = (value, first, second) for axis d
            let f = |d: usize, o: usize| -> f64 {
                let (v, d1, d2) = &tabs[d];
                match o {
                    0 => v[idx[d]],
                    1 => d1[idx[d]],
                    _ => d2[idx[d]],
                }
            };
            let mut val = 1.0;
            for d in 0..dim {
                val *= f(d, 0);
            }
            n[a] = val;
            for i in 0..dim {
                let mut g = 1.0;
                for d in 0..dim {
                    g *= f(d, if d == i { 1 } else { 0 });
                }
                dn[a][i] = g;
                for j in 0..dim {
                    let mut h = 1.0;
                    for d in 0..dim {
                        let o = (d == i) as usize + (d == j) as usize;
                        h *= f(d, o);
                    }
                    d2n[a][i][j] = h;
                }
            }
        }
        ShapeValues { n, dn, d2n }
    }

    pub fn tabulate(&self, rule: &QuadratureRule) -> Vec<ShapeValues> {
        rule.points.iter().map(|x| self.eval(x)).collect()
    }

    /// Element-local node indices on a face, ordered lexicographically over
    /// the remaining axes. Faces are numbered axis-major: `2*axis` at -1 and
    /// `2*axis+1` at +1.
    pub fn face_nodes(&self, face: usize) -> Vec<usize> {
        let axis = face / 2;
        let fixed = if face % 2 == 0 { 0 } else { self.p };
        (0..self.n_nodes()).filter(|&a| self.node_index(a)[axis] == fixed).collect()
    }

    /// Corner nodes of a face (element-local), used to identify facets.
    pub fn face_corners(&self, face: usize) -> Vec<usize> {
        let p = self.p;
        self.face_nodes(face)
            .into_iter()
            .filter(|&a| {
                let idx = self.node_index(a);
                (0..self.dim).all(|d| idx[d] == 0 || idx[d] == p)
            })
            .collect()
    }

    /// Maps a point of the (dim-1)-cube onto a face of the reference cube.
    pub fn face_point(&self, face: usize, s: &[f64; 3]) -> [f64; 3] {
        let axis = face / 2;
        let mut x = [0.0; 3];
        let mut k = 0;
        for (d, item) in x.iter_mut().enumerate().take(self.dim) {
            if d == axis {
                *item = if face % 2 == 0 { -1.0 } else { 1.0 };
            } else {
                *item = s[k];
                k += 1;
            }
        }
        x
    }
}

/// Prescribed value or free, per displacement component.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RegionBc {
    /// `Some(v)` fixes the component to `v`.
    pub u: [Option<f64>; 3],
    /// `Some(w)` fixes the hybrid rotation around t to `w` (beams: the
    /// global rotation around z, converted with t_z).
    pub omega: Option<f64>,
    /// Boundary traction on free components.
    pub traction: [f64; 3],
    /// Prescribed boundary moment around t (beams: around z).
    pub moment: f64,
}

impl RegionBc {
    pub fn simply_supported(dim: usize) -> Self {
        let mut u = [None; 3];
        for c in u.iter_mut().take(dim) {
            *c = Some(0.0);
        }
        Self { u, ..Default::default() }
    }

    pub fn clamped(dim: usize) -> Self {
        Self { omega: Some(0.0), ..Self::simply_supported(dim) }
    }

    pub fn free() -> Self {
        Self::default()
    }
}

/// Boundary conditions per superset-boundary region id.
#[derive(Debug, Clone, Default)]
pub struct BcSpec {
    pub regions: HashMap<usize, RegionBc>,
}

impl BcSpec {
    pub fn region(&self, id: usize) -> RegionBc {
        self.regions.get(&id).cloned().unwrap_or_default()
    }

    /// Dirichlet and Neumann data of one field may not share a region.
    pub fn validate(&self, dim: usize) -> Result<()> {
        for (id, r) in &self.regions {
            for c in 0..dim {
                if r.u[c].is_some() && r.traction[c] != 0.0 {
                    return Err(BtError::InconsistentBc(format!(
                        "region {id}: displacement component {c} is both prescribed and loaded"
                    )));
                }
            }
            if r.omega.is_some() && r.moment != 0.0 {
                return Err(BtError::InconsistentBc(format!(
                    "region {id}: rotation is both prescribed and loaded"
                )));
            }
        }
        Ok(())
    }
}

/// Three-field DOF map. Global condensed unknowns are ordered as all
/// displacement DOFs (`node * dim + component`) followed by all hybrid
/// rotation DOFs.
#[derive(Debug, Clone)]
pub struct DofLayout {
    pub dim: usize,
    /// Voigt components of the moment tensor.
    pub s: usize,
    pub n_u: usize,
    pub n_m: usize,
    pub n_w: usize,
    /// Rotation DOFs per facet, indexed like `BulkMesh::facets`, ordered as the
    /// facet's global node list. Empty for level-limit facets.
    pub facet_dofs: Vec<Vec<usize>>,
    /// Local rotation DOFs of each element: (face, dofs in face-node order).
    pub element_w: Vec<Vec<(usize, Vec<usize>)>>,
    /// Prescribed value per condensed DOF.
    pub fixed: Vec<Option<f64>>,
}

impl DofLayout {
    pub fn n_condensed(&self) -> usize {
        self.n_u + self.n_w
    }

    pub fn u_dof(&self, node: usize, comp: usize) -> usize {
        node * self.dim + comp
    }

    /// Global condensed DOFs of an element: displacements (node-major) then
    /// rotations face by face.
    pub fn element_dofs(&self, mesh: &BulkMesh, e: usize) -> Vec<usize> {
        let mut out = Vec::new();
        for &node in &mesh.elements[e] {
            for c in 0..self.dim {
                out.push(self.u_dof(node, c));
            }
        }
        for (_, dofs) in &self.element_w[e] {
            out.extend_from_slice(dofs);
        }
        out
    }

    pub fn n_fixed(&self) -> usize {
        self.fixed.iter().filter(|f| f.is_some()).count()
    }
}

pub fn voigt_size(dim: usize) -> usize {
    if dim == 2 {
        3
    } else {
        6
    }
}

pub fn build_layout(mesh: &BulkMesh, bc: &BcSpec) -> Result<DofLayout> {
    bc.validate(mesh.dim)?;
    let dim = mesh.dim;
    let s = voigt_size(dim);
    let n_u = mesh.nodes.len() * dim;
    let nn = mesh.basis.n_nodes();
    let n_m = s * nn * mesh.elements.len();

    let mut facet_dofs = Vec::with_capacity(mesh.facets.len());
    let mut next = n_u;
    for f in &mesh.facets {
        if f.carries_rotation() {
            let d: Vec<usize> = (next..next + f.nodes.len()).collect();
            next += f.nodes.len();
            facet_dofs.push(d);
        } else {
            facet_dofs.push(Vec::new());
        }
    }
    let n_w = next - n_u;

    let mut element_w = Vec::with_capacity(mesh.elements.len());
    for (e, faces) in mesh.element_faces.iter().enumerate() {
        let mut list = Vec::new();
        for (lf, &fid) in faces.iter().enumerate() {
            let facet = &mesh.facets[fid];
            if !facet.carries_rotation() {
                continue;
            }
            let dofs = mesh
                .basis
                .face_nodes(lf)
                .iter()
                .map(|&a| {
                    let pos = facet.nodes.binary_search(&mesh.elements[e][a]).expect("facet node");
                    facet_dofs[fid][pos]
                })
                .collect();
            list.push((lf, dofs));
        }
        element_w.push(list);
    }

    let mut fixed = vec![None; n_u + n_w];
    for (fid, f) in mesh.facets.iter().enumerate() {
        if let Some(FacetTag::SupersetBoundary(r)) = f.tag {
            let rb = bc.region(r);
            for &g in &f.nodes {
                for c in 0..dim {
                    if let Some(v) = rb.u[c] {
                        fixed[g * dim + c] = Some(v);
                    }
                }
            }
            if rb.omega.is_some() {
                for &d in &facet_dofs[fid] {
                    // Values are set per quadrature-free nodal interpolation;
                    // beams convert with t_z during assembly of the lifting.
                    fixed[d] = rb.omega;
                }
            }
        }
    }
    Ok(DofLayout { dim, s, n_u, n_m, n_w, facet_dofs, element_w, fixed })
}
