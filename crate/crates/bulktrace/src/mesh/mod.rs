//! Higher-order quad/hex meshes built from smooth block maps, with facet
//! extraction and isoparametric geometry.

pub mod blocks;
pub mod quadrature;
pub mod vtk;

use std::collections::HashMap;

use crate::error::{BtError, Result};
use crate::levelset::{Mat3, Vec3};
use crate::spaces::{ShapeBasis, ShapeValues};

pub use blocks::{build_benchmark_mesh, rectangle_mesh, unit_square_mesh, BenchmarkId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FacetTag {
    SupersetBoundary(usize),
    LevelLimitMin,
    LevelLimitMax,
}

/// An element face. Interface facets have `minus` set and no tag; boundary
/// facets have a tag and no `minus`. `plus` is the lower element index.
#[derive(Debug, Clone)]
pub struct Facet {
    /// (element, local face)
    pub plus: (usize, usize),
    pub minus: Option<(usize, usize)>,
    /// Global node ids on the facet, sorted.
    pub nodes: Vec<usize>,
    pub tag: Option<FacetTag>,
}

impl Facet {
    pub fn is_interface(&self) -> bool {
        self.minus.is_some()
    }

    /// Level-limit facets carry neither boundary terms nor hybrid DOFs.
    pub fn carries_rotation(&self) -> bool {
        matches!(self.tag, None | Some(FacetTag::SupersetBoundary(_)))
    }
}

#[derive(Debug, Clone)]
pub struct BulkMesh {
    pub dim: usize,
    pub p: usize,
    pub basis: ShapeBasis,
    pub nodes: Vec<Vec3>,
    pub elements: Vec<Vec<usize>>,
    pub facets: Vec<Facet>,
    /// Facet id of each local face of each element.
    pub element_faces: Vec<Vec<usize>>,
}

/// Isoparametric data at one reference point. In 2D the Jacobian is padded
/// with a unit (3,3) entry so it stays invertible.
#[derive(Debug, Clone, Copy)]
pub struct GeomPoint {
    pub x: Vec3,
    pub jac: Mat3,
    pub jinv: Mat3,
    pub det: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct FacetPoint {
    pub geom: GeomPoint,
    /// Reference coordinates inside the element.
    pub xi: [f64; 3],
    /// Surface measure per unit reference face measure.
    pub ds: f64,
    /// Unit outward normal of the element at this face.
    pub m: Vec3,
    /// Tangent vectors along the face's reference axes.
    pub tangents: [Vec3; 2],
}

/// One smooth map of `[0,1]^dim` into the domain with its subdivision and
/// the tags of its faces. Untagged faces must be shared with another block.
pub struct Block {
    pub map: Box<dyn Fn(&[f64; 3]) -> Vec3 + Send + Sync>,
    pub divisions: [usize; 3],
    pub face_tags: [Option<FacetTag>; 6],
}

struct NodeHash {
    quantum: f64,
    tol: f64,
    cells: HashMap<[i64; 3], Vec<usize>>,
}

impl NodeHash {
    fn key(&self, x: &Vec3) -> [i64; 3] {
        [
            (x[0] / self.quantum).round() as i64,
            (x[1] / self.quantum).round() as i64,
            (x[2] / self.quantum).round() as i64,
        ]
    }

    fn find_or_insert(&mut self, x: Vec3, nodes: &mut Vec<Vec3>) -> usize {
        let k = self.key(&x);
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(list) = self.cells.get(&[k[0] + dx, k[1] + dy, k[2] + dz]) {
                        for &id in list {
                            if (nodes[id] - x).norm() <= self.tol {
                                return id;
                            }
                        }
                    }
                }
            }
        }
        let id = nodes.len();
        nodes.push(x);
        self.cells.entry(k).or_default().push(id);
        id
    }
}

fn block_orientation(map: &dyn Fn(&[f64; 3]) -> Vec3, dim: usize) -> f64 {
    let c = [0.5, 0.5, if dim == 3 { 0.5 } else { 0.0 }];
    let h = 1e-6;
    let mut j = Mat3::identity();
    for d in 0..dim {
        let mut a = c;
        let mut b = c;
        a[d] += h;
        b[d] -= h;
        let col = (map(&a) - map(&b)) / (2.0 * h);
        for i in 0..dim {
            j[(i, d)] = col[i];
        }
    }
    j.determinant()
}

/// Meshes a set of blocks with Lagrange elements of order `p` whose nodes sit
/// at Gauss-Lobatto points of each element's parameter box.
pub fn build_block_mesh(dim: usize, p: usize, blocks: Vec<Block>, length_scale: f64) -> Result<BulkMesh> {
    let basis = ShapeBasis::new(dim, p);
    let nn = basis.n_nodes();
    let mut hash = NodeHash { quantum: 1e-7 * length_scale, tol: 1e-9 * length_scale, cells: HashMap::new() };
    let mut nodes = Vec::new();
    let mut elements = Vec::new();
    // (element, local face) -> tag for block-boundary faces
    let mut face_tag_of: HashMap<(usize, usize), Option<FacetTag>> = HashMap::new();

    for block in blocks {
        let flip = block_orientation(&*block.map, dim) < 0.0;
        let mut tags = block.face_tags;
        if flip {
            tags.swap(0, 1);
        }
        let map = &block.map;
        let eval = |s: &[f64; 3]| -> Vec3 {
            let mut t = *s;
            if flip {
                t[0] = 1.0 - t[0];
            }
            map(&t)
        };
        let div = [block.divisions[0], block.divisions[1], if dim == 3 { block.divisions[2] } else { 1 }];
        for k in 0..div[2] {
            for j in 0..div[1] {
                for i in 0..div[0] {
                    let eidx = [i, j, k];
                    let e = elements.len();
                    let mut conn = Vec::with_capacity(nn);
                    for a in 0..nn {
                        let r = basis.node_ref_coords(a);
                        let mut s = [0.0; 3];
                        for d in 0..dim {
                            s[d] = (eidx[d] as f64 + 0.5 * (r[d] + 1.0)) / div[d] as f64;
                        }
                        conn.push(hash.find_or_insert(eval(&s), &mut nodes));
                    }
                    elements.push(conn);
                    for f in 0..2 * dim {
                        let axis = f / 2;
                        let on_block_face = if f % 2 == 0 { eidx[axis] == 0 } else { eidx[axis] == div[axis] - 1 };
                        if on_block_face {
                            face_tag_of.insert((e, f), tags[f]);
                        }
                    }
                }
            }
        }
    }

    // Facet extraction by sorted corner ids.
    let mut by_key: HashMap<Vec<usize>, Vec<(usize, usize)>> = HashMap::new();
    for (e, conn) in elements.iter().enumerate() {
        for f in 0..2 * dim {
            let mut key: Vec<usize> = basis.face_corners(f).iter().map(|&a| conn[a]).collect();
            key.sort_unstable();
            by_key.entry(key).or_default().push((e, f));
        }
    }
    let mut keys: Vec<_> = by_key.into_iter().collect();
    // Deterministic facet order: by the lowest (element, face) incidence.
    for (_, inc) in keys.iter_mut() {
        inc.sort_unstable();
    }
    keys.sort_by_key(|(_, inc)| inc[0]);

    let mut facets = Vec::with_capacity(keys.len());
    let mut element_faces = vec![vec![usize::MAX; 2 * dim]; elements.len()];
    for (_, inc) in keys {
        let (e, f) = inc[0];
        let mut fnodes: Vec<usize> = basis.face_nodes(f).iter().map(|&a| elements[e][a]).collect();
        fnodes.sort_unstable();
        let id = facets.len();
        match inc.len() {
            1 => {
                let tag = face_tag_of.get(&(e, f)).copied().flatten().ok_or_else(|| {
                    BtError::InconsistentBc(format!("untagged boundary face {f} of element {e}"))
                })?;
                facets.push(Facet { plus: (e, f), minus: None, nodes: fnodes, tag: Some(tag) });
                element_faces[e][f] = id;
            }
            2 => {
                let other = inc[1];
                facets.push(Facet { plus: (e, f), minus: Some(other), nodes: fnodes, tag: None });
                element_faces[e][f] = id;
                element_faces[other.0][other.1] = id;
            }
            _ => {
                return Err(BtError::InconsistentBc(format!("non-manifold facet at element {e}")));
            }
        }
    }

    let mesh = BulkMesh { dim, p, basis, nodes, elements, facets, element_faces };
    mesh.check_jacobians()?;
    Ok(mesh)
}

impl BulkMesh {
    pub fn n_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn boundary_facets(&self) -> impl Iterator<Item = (usize, &Facet)> {
        self.facets.iter().enumerate().filter(|(_, f)| !f.is_interface())
    }

    pub fn interface_facets(&self) -> impl Iterator<Item = (usize, &Facet)> {
        self.facets.iter().enumerate().filter(|(_, f)| f.is_interface())
    }

    /// Quadrature points per direction for element integrals of order p.
    pub fn assembly_points(&self) -> usize {
        self.p + 2
    }

    fn check_jacobians(&self) -> Result<()> {
        let rule = quadrature::tensor_rule(self.dim, self.assembly_points(), 2 * self.p + 2);
        let tab = self.basis.tabulate(&rule);
        for e in 0..self.n_elements() {
            for sv in &tab {
                let g = self.geometry(e, sv);
                if !(g.det > 0.0) {
                    return Err(BtError::InvertedElement { element: e, det: g.det });
                }
            }
        }
        Ok(())
    }

    pub fn geometry(&self, e: usize, sv: &ShapeValues) -> GeomPoint {
        let conn = &self.elements[e];
        let mut x = Vec3::zeros();
        let mut jac = Mat3::zeros();
        for (a, &g) in conn.iter().enumerate() {
            let xa = self.nodes[g];
            x += xa * sv.n[a];
            for j in 0..self.dim {
                for i in 0..self.dim {
                    jac[(i, j)] += xa[i] * sv.dn[a][j];
                }
            }
        }
        if self.dim == 2 {
            jac[(2, 2)] = 1.0;
        }
        let det = jac.determinant();
        let jinv = jac.try_inverse().unwrap_or_else(Mat3::zeros);
        GeomPoint { x, jac, jinv, det }
    }

    pub fn isoparametric_map(&self, e: usize, xi: &[f64; 3]) -> (Vec3, Mat3, f64) {
        let sv = self.basis.eval(xi);
        let g = self.geometry(e, &sv);
        (g.x, g.jac, g.det)
    }

    /// Physical gradients of all basis functions.
    pub fn gradients(&self, sv: &ShapeValues, g: &GeomPoint) -> Vec<Vec3> {
        let jt = g.jinv.transpose();
        sv.dn.iter().map(|d| jt * Vec3::new(d[0], d[1], d[2])).collect()
    }

    /// Physical Hessians of all basis functions, exact for the curved map.
    pub fn hessians(&self, e: usize, sv: &ShapeValues, g: &GeomPoint, grads: &[Vec3]) -> Vec<Mat3> {
        let conn = &self.elements[e];
        let dim = self.dim;
        // Hessian of each physical coordinate with respect to reference coords.
        let mut hx = [Mat3::zeros(); 3];
        for (a, &gid) in conn.iter().enumerate() {
            let xa = self.nodes[gid];
            for (i, h) in hx.iter_mut().enumerate().take(dim) {
                for r in 0..dim {
                    for s in 0..dim {
                        h[(r, s)] += xa[i] * sv.d2n[a][r][s];
                    }
                }
            }
        }
        let jinv = g.jinv;
        let jinv_t = jinv.transpose();
        (0..conn.len())
            .map(|a| {
                let mut hr = Mat3::zeros();
                for r in 0..dim {
                    for s in 0..dim {
                        hr[(r, s)] = sv.d2n[a][r][s];
                    }
                }
                for (i, h) in hx.iter().enumerate().take(dim) {
                    hr -= h * grads[a][i];
                }
                jinv_t * hr * jinv
            })
            .collect()
    }

    /// Geometry of a point on local face `face` of element `e`, given face
    /// coordinates `s` in `[-1,1]^(dim-1)`.
    pub fn facet_map(&self, e: usize, face: usize, s: &[f64; 3]) -> FacetPoint {
        let xi = self.basis.face_point(face, s);
        let sv = self.basis.eval(&xi);
        self.facet_point(e, face, xi, &sv)
    }

    pub fn facet_point(&self, e: usize, face: usize, xi: [f64; 3], sv: &ShapeValues) -> FacetPoint {
        let geom = self.geometry(e, sv);
        let axis = face / 2;
        let sign = if face % 2 == 0 { -1.0 } else { 1.0 };
        // Nanson: n ds = det J J^{-T} e_axis dS_ref
        let mut ea = Vec3::zeros();
        ea[axis] = 1.0;
        let nv = geom.jinv.transpose() * ea;
        let len = nv.norm();
        let m = nv * (sign / len);
        let mut tangents = [Vec3::zeros(); 2];
        let mut k = 0;
        for d in 0..self.dim {
            if d != axis {
                tangents[k] = geom.jac.column(d).into_owned();
                k += 1;
            }
        }
        FacetPoint { geom, xi, ds: geom.det * len, m, tangents }
    }

    pub fn bounding_size(&self) -> f64 {
        let mut lo = Vec3::repeat(f64::INFINITY);
        let mut hi = Vec3::repeat(f64::NEG_INFINITY);
        for x in &self.nodes {
            lo = lo.inf(x);
            hi = hi.sup(x);
        }
        (hi - lo).norm()
    }
}
