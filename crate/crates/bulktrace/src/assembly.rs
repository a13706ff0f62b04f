//! Element blocks of the hybridized mixed weak form, static condensation and
//! the global condensed system.
//!
//! Local moment DOFs are ordered component-major (`k * n_nodes + a`), local
//! displacement DOFs node-major (`a * dim + i`), and rotation DOFs face by
//! face in the order of [`DofLayout::element_w`]. `K_mm` is negative definite,
//! so the condensed matrix `diag(K_uu, 0) - B^T K_mm^-1 B` is SPD once
//! Dirichlet data removes the rigid modes.

use faer::linalg::matmul::matmul;
use faer::linalg::triangular_solve::{solve_lower_triangular_in_place, solve_upper_triangular_in_place};
use faer::{Accum, Mat, Par, Side};
use rayon::prelude::*;

use crate::error::{BtError, Result};
use crate::levelset::{boundary_frame, tdc_frame, LevelSetField, Mat3, Vec3};
use crate::mechanics::{voigt_basis, Material};
use crate::mesh::quadrature::tensor_rule;
use crate::mesh::{BulkMesh, FacetTag};
use crate::spaces::{build_layout, voigt_size, BcSpec, DofLayout, ShapeBasis, ShapeValues};

pub type LoadFn = dyn Fn(&Vec3) -> Vec3 + Send + Sync;

/// A discretized family problem: mesh, level-set field, material, body load
/// and boundary data.
pub struct Problem {
    pub mesh: BulkMesh,
    pub field: Box<dyn LevelSetField>,
    pub material: Material,
    pub load: Box<LoadFn>,
    pub bc: BcSpec,
    pub layout: DofLayout,
}

impl Problem {
    pub fn new(
        mesh: BulkMesh,
        field: Box<dyn LevelSetField>,
        material: Material,
        load: Box<LoadFn>,
        bc: BcSpec,
    ) -> Result<Self> {
        if material.dim() != mesh.dim || field.dim() != mesh.dim {
            return Err(BtError::UnsupportedCase(format!(
                "dimension mismatch: mesh {}, material {}, level set {}",
                mesh.dim,
                material.dim(),
                field.dim()
            )));
        }
        let mut layout = build_layout(&mesh, &bc)?;
        if mesh.dim == 2 {
            // Beams prescribe the global rotation about z; the multiplier is
            // the rotation about t, so omega_t = omega_z t_z.
            for (fid, f) in mesh.facets.iter().enumerate() {
                let Some(FacetTag::SupersetBoundary(r)) = f.tag else { continue };
                let Some(w) = bc.region(r).omega else { continue };
                if w == 0.0 || layout.facet_dofs[fid].is_empty() {
                    continue;
                }
                let (e, lf) = f.plus;
                let fp = mesh.facet_map(e, lf, &[0.0; 3]);
                let frame = tdc_frame(field.as_ref(), &fp.geom.x)?;
                let bf = boundary_frame(&frame, &fp.m)?;
                for &d in &layout.facet_dofs[fid] {
                    layout.fixed[d] = Some(w * bf.t_z);
                }
            }
        }
        Ok(Problem { mesh, field, material, load, bc, layout })
    }

    pub fn dim(&self) -> usize {
        self.mesh.dim
    }
}

/// Shape functions tabulated at a volume rule and at the face rules of every
/// local face.
pub struct QuadTables {
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
    pub vol: Vec<ShapeValues>,
    /// Per local face: reference points, weights, shape values.
    pub faces: Vec<FaceTable>,
}

pub struct FaceTable {
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
    pub vals: Vec<ShapeValues>,
}

impl QuadTables {
    /// `npts` Gauss points per direction.
    pub fn new(basis: &ShapeBasis, npts: usize) -> Self {
        let dim = basis.dim;
        let rule = tensor_rule(dim, npts, 2 * npts - 1);
        let vol = basis.tabulate(&rule);
        let frule = tensor_rule(dim - 1, npts, 2 * npts - 1);
        let faces = (0..basis.n_faces())
            .map(|f| {
                let points: Vec<[f64; 3]> = frule.points.iter().map(|s| basis.face_point(f, s)).collect();
                let vals = points.iter().map(|x| basis.eval(x)).collect();
                FaceTable { points, weights: frule.weights.clone(), vals }
            })
            .collect();
        QuadTables { points: rule.points, weights: rule.weights, vol, faces }
    }
}

/// Dense element blocks before condensation.
#[derive(Debug, Clone)]
pub struct LocalBlocks {
    pub kmm: Mat<f64>,
    pub kmu: Mat<f64>,
    pub kmw: Mat<f64>,
    pub kuu: Mat<f64>,
    pub bu: Vec<f64>,
    pub bw: Vec<f64>,
}

impl LocalBlocks {
    pub fn n_m(&self) -> usize {
        self.kmm.nrows()
    }
    pub fn n_u(&self) -> usize {
        self.kuu.nrows()
    }
    pub fn n_w(&self) -> usize {
        self.kmw.ncols()
    }
}

fn frob(a: &Mat3, b: &Mat3) -> f64 {
    a.dot(b)
}

/// Volume terms of the element: `K_mm`, `K_mu`, `K_uu` and the body load.
/// Facet couplings are added by [`assemble_facets`].
pub fn assemble_element(pb: &Problem, tabs: &QuadTables, e: usize) -> Result<LocalBlocks> {
    let mesh = &pb.mesh;
    let dim = mesh.dim;
    let nn = mesh.basis.n_nodes();
    let s = voigt_size(dim);
    let nq = tabs.vol.len();
    let ebasis = voigt_basis(dim);
    let (ca, cb) = pb.material.bending_compliance();
    let (c1, c2) = pb.material.membrane_coeffs();
    let n_w: usize = pb.layout.element_w[e].iter().map(|(_, d)| d.len()).sum();

    let mut nmat = Mat::<f64>::zeros(nq, nn);
    let mut gq: Vec<Vec<Vec3>> = Vec::with_capacity(nq);
    let mut frames = Vec::with_capacity(nq);
    let mut wq = vec![0.0; nq];
    let mut bu = vec![0.0; nn * dim];
    for (q, sv) in tabs.vol.iter().enumerate() {
        let geom = mesh.geometry(e, sv);
        let frame = tdc_frame(pb.field.as_ref(), &geom.x)?;
        let w = frame.grad_norm * geom.det * tabs.weights[q];
        let grads = mesh.gradients(sv, &geom);
        gq.push(grads.iter().map(|g| frame.p * g).collect());
        let f = (pb.load)(&geom.x);
        for a in 0..nn {
            nmat[(q, a)] = sv.n[a];
            for i in 0..dim {
                bu[a * dim + i] += w * sv.n[a] * f[i];
            }
        }
        wq[q] = w;
        frames.push(frame);
    }

    // K_mm: block (k, l) = -N^T diag(w C_kl) N.
    let mut kmm = Mat::<f64>::zeros(s * nn, s * nn);
    let mut scaled = Mat::<f64>::zeros(nq, nn);
    let mut block = Mat::<f64>::zeros(nn, nn);
    for k in 0..s {
        for l in k..s {
            let ekl = frob(&ebasis[k], &ebasis[l]);
            let mut any = false;
            for q in 0..nq {
                let p = &frames[q].p;
                let c = ca * ekl - cb * frob(p, &ebasis[k]) * frob(p, &ebasis[l]);
                let f = -wq[q] * c;
                any |= f != 0.0;
                for a in 0..nn {
                    scaled[(q, a)] = nmat[(q, a)] * f;
                }
            }
            if !any {
                continue;
            }
            matmul(block.as_mut(), Accum::Replace, nmat.transpose(), scaled.as_ref(), 1.0, Par::Seq);
            for a in 0..nn {
                for b in 0..nn {
                    kmm[(k * nn + a, l * nn + b)] = block[(a, b)];
                    kmm[(l * nn + b, k * nn + a)] = block[(a, b)];
                }
            }
        }
    }

    // Test-side features [N_a, g_a1..g_ad] per quadrature point.
    let nf = 1 + dim;
    let mut lmat = Mat::<f64>::zeros(nn, nq * nf);
    for q in 0..nq {
        for a in 0..nn {
            lmat[(a, q * nf)] = nmat[(q, a)];
            for i in 0..dim {
                lmat[(a, q * nf + 1 + i)] = gq[q][a][i];
            }
        }
    }

    // K_mu: the test moment V = N_a E_k enters through
    // V : (H grad_dir u) + div(P V P) . (grad_dir u)^T n, with
    // div(P E P) = -(H E n + (E:H) n + kappa P E n).
    let mut kmu = Mat::<f64>::zeros(s * nn, nn * dim);
    let mut rk = Mat::<f64>::zeros(nq * nf, nn * dim);
    let mut out = Mat::<f64>::zeros(nn, nn * dim);
    for k in 0..s {
        let ek = &ebasis[k];
        for q in 0..nq {
            let fr = &frames[q];
            let w = wq[q];
            let n = fr.n;
            let hek = fr.h * ek;
            let r = fr.h * ek * n + n * frob(ek, &fr.h) + fr.p * ek * n * fr.kappa;
            for b in 0..nn {
                let g = &gq[q][b];
                let hg = hek * g;
                let rg = r.dot(g);
                let eg = ek * g;
                for l in 0..dim {
                    rk[(q * nf, b * dim + l)] = w * (hg[l] - n[l] * rg);
                    for i in 0..dim {
                        rk[(q * nf + 1 + i, b * dim + l)] = w * n[l] * eg[i];
                    }
                }
            }
        }
        matmul(out.as_mut(), Accum::Replace, lmat.as_ref(), rk.as_ref(), 1.0, Par::Seq);
        for a in 0..nn {
            for c in 0..nn * dim {
                kmu[(k * nn + a, c)] = out[(a, c)];
            }
        }
    }

    // K_uu: grad_dir v : n~(u) with n~ = c1 eps + c2 tr(eps) P.
    let mut amat = Mat::<f64>::zeros(nn, nq * dim);
    for q in 0..nq {
        for a in 0..nn {
            for m in 0..dim {
                amat[(a, q * dim + m)] = gq[q][a][m];
            }
        }
    }
    let mut kuu = Mat::<f64>::zeros(nn * dim, nn * dim);
    let mut ri = Mat::<f64>::zeros(nq * dim, nn * dim);
    for i in 0..dim {
        for q in 0..nq {
            let w = wq[q];
            let p = &frames[q].p;
            for b in 0..nn {
                let g = &gq[q][b];
                for j in 0..dim {
                    for m in 0..dim {
                        let mut v = 0.5 * c1 * p[(i, j)] * g[m];
                        if j == m {
                            v += 0.5 * c1 * g[i];
                        }
                        if i == m {
                            v += c2 * g[j];
                        }
                        ri[(q * dim + m, b * dim + j)] = w * v;
                    }
                }
            }
        }
        matmul(out.as_mut(), Accum::Replace, amat.as_ref(), ri.as_ref(), 1.0, Par::Seq);
        for a in 0..nn {
            for c in 0..nn * dim {
                kuu[(a * dim + i, c)] = out[(a, c)];
            }
        }
    }

    Ok(LocalBlocks { kmm, kmu, kmw: Mat::zeros(s * nn, n_w), kuu, bu, bw: vec![0.0; n_w] })
}

/// Sign of the jump contribution of element `e` on a facet: `+1` on the
/// canonical side and on boundary facets, `-1` on the other side.
pub fn jump_sign(mesh: &BulkMesh, fid: usize, e: usize, lf: usize) -> f64 {
    if mesh.facets[fid].minus == Some((e, lf)) {
        -1.0
    } else {
        1.0
    }
}

/// Facet terms of element `e`: the jumped `m_t` coupling to the rotation
/// multiplier, the shell `m_q omega_q(u)` coupling, and Neumann data on
/// boundary facets.
pub fn assemble_facets(pb: &Problem, tabs: &QuadTables, e: usize, blocks: &mut LocalBlocks) -> Result<()> {
    let mesh = &pb.mesh;
    let dim = mesh.dim;
    let nn = mesh.basis.n_nodes();
    let s = voigt_size(dim);
    let ebasis = voigt_basis(dim);
    let mut off = 0;
    for (lf, wdofs) in &pb.layout.element_w[e] {
        let lf = *lf;
        let fid = mesh.element_faces[e][lf];
        let facet = &mesh.facets[fid];
        let sign = jump_sign(mesh, fid, e, lf);
        let fnodes = mesh.basis.face_nodes(lf);
        let region = match facet.tag {
            Some(FacetTag::SupersetBoundary(r)) => Some(pb.bc.region(r)),
            _ => None,
        };
        let ft = &tabs.faces[lf];
        for (qi, sv) in ft.vals.iter().enumerate() {
            let fp = mesh.facet_point(e, lf, ft.points[qi], sv);
            let frame = tdc_frame(pb.field.as_ref(), &fp.geom.x)?;
            let bf = boundary_frame(&frame, &fp.m)?;
            let wf = frame.grad_norm * fp.ds * ft.weights[qi] * bf.qm;
            let q = bf.q;
            for k in 0..s {
                let mt = q.dot(&(ebasis[k] * q));
                if mt == 0.0 {
                    continue;
                }
                for a in 0..nn {
                    let va = sign * sv.n[a] * mt * wf;
                    if va == 0.0 {
                        continue;
                    }
                    for (c, &fa) in fnodes.iter().enumerate() {
                        blocks.kmw[(k * nn + a, off + c)] += va * sv.n[fa];
                    }
                }
            }
            if dim == 3 {
                let t = bf.t;
                let grads = mesh.gradients(sv, &fp.geom);
                let gt: Vec<f64> = grads.iter().map(|g| (frame.p * g).dot(&t)).collect();
                let n = frame.n;
                for k in 0..s {
                    let mq = q.dot(&(ebasis[k] * t));
                    if mq == 0.0 {
                        continue;
                    }
                    for a in 0..nn {
                        let va = sv.n[a] * mq * wf;
                        if va == 0.0 {
                            continue;
                        }
                        for b in 0..nn {
                            for l in 0..3 {
                                blocks.kmu[(k * nn + a, b * 3 + l)] -= va * n[l] * gt[b];
                            }
                        }
                    }
                }
            }
            if let Some(rb) = &region {
                for i in 0..dim {
                    if rb.u[i].is_none() && rb.traction[i] != 0.0 {
                        for a in 0..nn {
                            blocks.bu[a * dim + i] += sv.n[a] * rb.traction[i] * wf;
                        }
                    }
                }
                if rb.omega.is_none() && rb.moment != 0.0 {
                    let mhat = if dim == 2 { rb.moment * bf.t_z } else { rb.moment };
                    for (c, &fa) in fnodes.iter().enumerate() {
                        blocks.bw[off + c] += sv.n[fa] * mhat * wf;
                    }
                }
            }
        }
        off += wdofs.len();
    }
    Ok(())
}

/// Volume and facet blocks of one element.
pub fn element_blocks(pb: &Problem, tabs: &QuadTables, e: usize) -> Result<LocalBlocks> {
    let mut b = assemble_element(pb, tabs, e)?;
    assemble_facets(pb, tabs, e, &mut b)?;
    Ok(b)
}

/// Condensed element: `K~` over (u, omega) local DOFs, its right-hand side,
/// and optionally the recovery operator `G = -K_mm^-1 [K_mu K_mw]`.
#[derive(Debug, Clone)]
pub struct CondensedElement {
    pub k: Mat<f64>,
    pub b: Vec<f64>,
    pub recovery: Option<Mat<f64>>,
}

/// Cholesky factor of `S = -K_mm` and `Y = L^-1 [K_mu K_mw]`.
fn factor_coupling(blocks: &LocalBlocks, e: usize) -> Result<(Mat<f64>, Mat<f64>)> {
    let nm = blocks.n_m();
    let (nu, nw) = (blocks.n_u(), blocks.n_w());
    let s = Mat::from_fn(nm, nm, |i, j| -blocks.kmm[(i, j)]);
    let llt = s.llt(Side::Lower).map_err(|_| BtError::SingularMomentBlock(e))?;
    let l = llt.L().to_owned();
    let mut y = Mat::<f64>::zeros(nm, nu + nw);
    for i in 0..nm {
        for j in 0..nu {
            y[(i, j)] = blocks.kmu[(i, j)];
        }
        for j in 0..nw {
            y[(i, nu + j)] = blocks.kmw[(i, j)];
        }
    }
    solve_lower_triangular_in_place(l.as_ref(), y.as_mut(), Par::Seq);
    Ok((l, y))
}

/// Static condensation `K~ = diag(K_uu, 0) - B^T K_mm^-1 B` with
/// `B = [K_mu K_mw]`, computed as `diag(K_uu, 0) + Y^T Y`, `Y = L^-1 B`.
pub fn condense(blocks: &LocalBlocks, e: usize, keep_recovery: bool) -> Result<CondensedElement> {
    let (nu, nw) = (blocks.n_u(), blocks.n_w());
    let (l, y) = factor_coupling(blocks, e)?;
    let mut k = Mat::<f64>::zeros(nu + nw, nu + nw);
    matmul(k.as_mut(), Accum::Replace, y.transpose(), y.as_ref(), 1.0, Par::Seq);
    for i in 0..nu {
        for j in 0..nu {
            k[(i, j)] += blocks.kuu[(i, j)];
        }
    }
    // Enforce exact symmetry of the Gram product.
    for i in 0..nu + nw {
        for j in 0..i {
            let v = 0.5 * (k[(i, j)] + k[(j, i)]);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    let mut b = blocks.bu.clone();
    b.extend_from_slice(&blocks.bw);
    let recovery = if keep_recovery {
        let mut g = y;
        solve_upper_triangular_in_place(l.transpose(), g.as_mut(), Par::Seq);
        Some(g)
    } else {
        None
    };
    Ok(CondensedElement { k, b, recovery })
}

/// Moment DOFs of an element from its local (u, omega) values.
pub fn recover_from_blocks(blocks: &LocalBlocks, e: usize, x_loc: &[f64]) -> Result<Vec<f64>> {
    let (l, y) = factor_coupling(blocks, e)?;
    let mut v = Mat::<f64>::zeros(y.nrows(), 1);
    let xm = Mat::from_fn(x_loc.len(), 1, |i, _| x_loc[i]);
    matmul(v.as_mut(), Accum::Replace, y.as_ref(), xm.as_ref(), 1.0, Par::Seq);
    solve_upper_triangular_in_place(l.transpose(), v.as_mut(), Par::Seq);
    Ok((0..v.nrows()).map(|i| v[(i, 0)]).collect())
}

pub fn apply_recovery(g: &Mat<f64>, x_loc: &[f64]) -> Vec<f64> {
    (0..g.nrows()).map(|i| (0..g.ncols()).map(|j| g[(i, j)] * x_loc[j]).sum()).collect()
}

/// How moment recovery obtains the element operators.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecoveryMode {
    Cache,
    Reassemble,
    /// Cache when the estimated memory stays below [`CACHE_BUDGET`].
    Auto,
}

pub const CACHE_BUDGET: usize = 1 << 30;

/// Reduced global system in lower-triangular CSC form over the free DOFs.
#[derive(Debug, Clone)]
pub struct CondensedSystem {
    pub n_full: usize,
    pub n: usize,
    /// Reduced index per global (u, omega) DOF, `None` when prescribed.
    pub free_index: Vec<Option<usize>>,
    /// Prescribed values, zero at free DOFs.
    pub fixed_values: Vec<f64>,
    pub col_ptr: Vec<u32>,
    pub row_idx: Vec<u32>,
    pub values: Vec<f64>,
    pub rhs: Vec<f64>,
}

impl CondensedSystem {
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// `y = K x` using the stored lower triangle.
    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for j in 0..self.n {
            for p in self.col_ptr[j] as usize..self.col_ptr[j + 1] as usize {
                let i = self.row_idx[p] as usize;
                let v = self.values[p];
                y[i] += v * x[j];
                if i != j {
                    y[j] += v * x[i];
                }
            }
        }
        y
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        let rows = &self.row_idx[self.col_ptr[j] as usize..self.col_ptr[j + 1] as usize];
        match rows.binary_search(&(i as u32)) {
            Ok(p) => self.values[self.col_ptr[j] as usize + p],
            Err(_) => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct AssemblyOptions {
    pub recovery: RecoveryMode,
    /// Elements computed concurrently before merging.
    pub batch: usize,
}

impl Default for AssemblyOptions {
    fn default() -> Self {
        AssemblyOptions { recovery: RecoveryMode::Auto, batch: 64 }
    }
}

pub struct Assembled {
    pub system: CondensedSystem,
    /// Per-element recovery operators when cached.
    pub recovery: Option<Vec<Mat<f64>>>,
}

fn estimate_cache_bytes(pb: &Problem) -> usize {
    let nn = pb.mesh.basis.n_nodes();
    let nm = voigt_size(pb.dim()) * nn;
    (0..pb.mesh.n_elements())
        .map(|e| {
            let nw: usize = pb.layout.element_w[e].iter().map(|(_, d)| d.len()).sum();
            nm * (nn * pb.dim() + nw) * 8
        })
        .sum()
}

/// Lower-triangular sparsity over the free DOFs, from node/rotation-DOF
/// adjacency through shared elements.
fn sparsity(pb: &Problem, free_index: &[Option<usize>], n: usize) -> Result<(Vec<u32>, Vec<u32>)> {
    let mesh = &pb.mesh;
    let lay = &pb.layout;
    let dim = mesh.dim;
    let n_nodes = mesh.nodes.len();
    let n_ent = n_nodes + lay.n_w;
    let entities = |e: usize| -> Vec<usize> {
        let mut v: Vec<usize> = mesh.elements[e].clone();
        for (_, d) in &lay.element_w[e] {
            v.extend(d.iter().map(|&w| n_nodes + (w - lay.n_u)));
        }
        v
    };
    let mut ent_elems: Vec<Vec<u32>> = vec![Vec::new(); n_ent];
    for e in 0..mesh.n_elements() {
        for en in entities(e) {
            ent_elems[en].push(e as u32);
        }
    }
    let elem_ents: Vec<Vec<usize>> = (0..mesh.n_elements()).map(entities).collect();
    let ent_dofs = |en: usize| -> Vec<usize> {
        if en < n_nodes {
            (0..dim).map(|c| en * dim + c).collect()
        } else {
            vec![lay.n_u + (en - n_nodes)]
        }
    };
    let mut col_ptr = Vec::with_capacity(n + 1);
    let mut row_idx: Vec<u32> = Vec::new();
    col_ptr.push(0u32);
    let mut nbrs: Vec<usize> = Vec::new();
    for en in 0..n_ent {
        nbrs.clear();
        for &e in &ent_elems[en] {
            nbrs.extend_from_slice(&elem_ents[e as usize]);
        }
        nbrs.sort_unstable();
        nbrs.dedup();
        let rows: Vec<usize> = nbrs
            .iter()
            .flat_map(|&nb| ent_dofs(nb))
            .filter_map(|d| free_index[d])
            .collect();
        for d in ent_dofs(en) {
            let Some(j) = free_index[d] else { continue };
            let start = rows.partition_point(|&r| r < j);
            row_idx.extend(rows[start..].iter().map(|&r| r as u32));
            if row_idx.len() > u32::MAX as usize {
                return Err(BtError::UnsupportedCase("system too large for 32-bit indices".into()));
            }
            col_ptr.push(row_idx.len() as u32);
        }
    }
    debug_assert_eq!(col_ptr.len(), n + 1);
    Ok((col_ptr, row_idx))
}

/// Condenses every element (concurrently, in batches) and merges the
/// results in element order, eliminating Dirichlet DOFs with a lifting term.
pub fn assemble_global(pb: &Problem, opts: &AssemblyOptions) -> Result<Assembled> {
    let mesh = &pb.mesh;
    let lay = &pb.layout;
    let n_full = lay.n_u + lay.n_w;
    let mut free_index = vec![None; n_full];
    let mut fixed_values = vec![0.0; n_full];
    let mut n = 0;
    for d in 0..n_full {
        match lay.fixed[d] {
            Some(v) => fixed_values[d] = v,
            None => {
                free_index[d] = Some(n);
                n += 1;
            }
        }
    }
    let (col_ptr, row_idx) = sparsity(pb, &free_index, n)?;
    let mut values = vec![0.0; row_idx.len()];
    let mut rhs = vec![0.0; n];
    let keep = match opts.recovery {
        RecoveryMode::Cache => true,
        RecoveryMode::Reassemble => false,
        RecoveryMode::Auto => estimate_cache_bytes(pb) <= CACHE_BUDGET,
    };
    let mut cache = if keep { Some(Vec::with_capacity(mesh.n_elements())) } else { None };
    let tabs = QuadTables::new(&mesh.basis, mesh.assembly_points());
    let ne = mesh.n_elements();
    let batch = opts.batch.max(1);
    let mut start = 0;
    while start < ne {
        let end = (start + batch).min(ne);
        let done: Vec<Result<CondensedElement>> = (start..end)
            .into_par_iter()
            .map(|e| {
                let b = element_blocks(pb, &tabs, e)?;
                condense(&b, e, keep)
            })
            .collect();
        for (off, ce) in done.into_iter().enumerate() {
            let e = start + off;
            let ce = ce?;
            merge_element(lay, mesh, e, &ce, &free_index, &fixed_values, &col_ptr, &row_idx, &mut values, &mut rhs);
            if let Some(c) = cache.as_mut() {
                c.push(ce.recovery.expect("recovery operator"));
            }
        }
        start = end;
    }
    let system = CondensedSystem { n_full, n, free_index, fixed_values, col_ptr, row_idx, values, rhs };
    Ok(Assembled { system, recovery: cache })
}

#[allow(clippy::too_many_arguments)]
fn merge_element(
    lay: &DofLayout,
    mesh: &BulkMesh,
    e: usize,
    ce: &CondensedElement,
    free_index: &[Option<usize>],
    fixed_values: &[f64],
    col_ptr: &[u32],
    row_idx: &[u32],
    values: &mut [f64],
    rhs: &mut [f64],
) {
    let dofs = lay.element_dofs(mesh, e);
    let mut free: Vec<(usize, usize)> = Vec::with_capacity(dofs.len());
    let mut fixed: Vec<(usize, f64)> = Vec::new();
    for (loc, &d) in dofs.iter().enumerate() {
        match free_index[d] {
            Some(r) => free.push((r, loc)),
            None => fixed.push((loc, fixed_values[d])),
        }
    }
    free.sort_unstable();
    for &(r, a) in &free {
        let mut v = ce.b[a];
        for &(b, val) in &fixed {
            v -= ce.k[(a, b)] * val;
        }
        rhs[r] += v;
    }
    for (t, &(j, b)) in free.iter().enumerate() {
        let lo = col_ptr[j] as usize;
        let hi = col_ptr[j + 1] as usize;
        let rows = &row_idx[lo..hi];
        let mut p = 0;
        for &(i, a) in &free[t..] {
            while rows[p] as usize != i {
                p += 1;
            }
            values[lo + p] += ce.k[(a, b)];
        }
    }
}

/// Dense unreduced condensed matrix and right-hand side over all (u, omega)
/// DOFs, for audits on small meshes.
pub fn assemble_dense_unreduced(pb: &Problem) -> Result<(Mat<f64>, Vec<f64>)> {
    let mesh = &pb.mesh;
    let lay = &pb.layout;
    let n = lay.n_u + lay.n_w;
    let mut k = Mat::<f64>::zeros(n, n);
    let mut b = vec![0.0; n];
    let tabs = QuadTables::new(&mesh.basis, mesh.assembly_points());
    for e in 0..mesh.n_elements() {
        let ce = condense(&element_blocks(pb, &tabs, e)?, e, false)?;
        let dofs = lay.element_dofs(mesh, e);
        for (a, &da) in dofs.iter().enumerate() {
            b[da] += ce.b[a];
            for (c, &dc) in dofs.iter().enumerate() {
                k[(da, dc)] += ce.k[(a, c)];
            }
        }
    }
    Ok((k, b))
}
