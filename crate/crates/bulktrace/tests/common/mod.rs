//! Checks shared by the property tests and the acceptance suite. Each returns
//! the measured quantity so callers can apply their own tolerance.
#![allow(dead_code)]

use std::f64::consts::PI;

use bulktrace::assembly::{assemble_dense_unreduced, element_blocks, AssemblyOptions, Problem, QuadTables};
use bulktrace::levelset::{tdc_frame, LevelSetField, Mat3, PlanarField, RadialField, Vec3};
use bulktrace::mechanics::{Material, MaterialBeam, MaterialShell};
use bulktrace::mesh::blocks::{box_mesh, rectangle_mesh};
use bulktrace::mesh::quadrature::gauss_rule;
use bulktrace::mesh::{build_benchmark_mesh, BenchmarkId, BulkMesh, FacetTag};
use bulktrace::solve::{solve_problem, Solution};
use bulktrace::spaces::{BcSpec, RegionBc};
use nalgebra::{DMatrix, DVector};

pub const ARC_THETA: f64 = 7.0 * PI / 18.0;

/// Largest absolute entry of a 3x3 matrix.
pub fn max_abs(m: &Mat3) -> f64 {
    m.iter().fold(0.0, |a, v| a.max(v.abs()))
}

/// Worst violation of the frame identities at `x`: `P^2 = P`, `P^T = P`,
/// `P n = 0`, `tr P = d - 1`, `H = H^T`, `H n = 0`.
pub fn frame_identity_error(field: &dyn LevelSetField, x: &Vec3) -> f64 {
    let f = tdc_frame(field, x).unwrap();
    let d = field.dim() as f64;
    let hs = max_abs(&f.h).max(1.0);
    [
        max_abs(&(f.p * f.p - f.p)),
        max_abs(&(f.p - f.p.transpose())),
        (f.p * f.n).amax(),
        (f.p.trace() - (d - 1.0)).abs(),
        max_abs(&(f.h - f.h.transpose())) / hs,
        (f.h * f.n).amax() / hs,
    ]
    .into_iter()
    .fold(0.0, f64::max)
}

/// Relative difference between `H` and `Dn P` from central differences of
/// the unit normal.
pub fn weingarten_fd_error(field: &dyn LevelSetField, x: &Vec3) -> f64 {
    let f = tdc_frame(field, x).unwrap();
    let h = 1e-5 * field.scale().max(1.0);
    let normal = |y: &Vec3| {
        let g = field.gradient(y);
        g / g.norm()
    };
    let mut dn = Mat3::zeros();
    for c in 0..field.dim() {
        let mut e = Vec3::zeros();
        e[c] = h;
        let col = (normal(&(x + e)) - normal(&(x - e))) / (2.0 * h);
        dn.set_column(c, &col);
    }
    max_abs(&(dn * f.p - f.h)) / max_abs(&f.h).max(1e-3)
}

/// Mean curvature of the graph `z = a sin(x y / 4)` for the level-set field
/// `z - a sin(x y / 4)`, from the classical graph formula.
pub fn sine_graph_curvature(amp: f64, x: &Vec3) -> f64 {
    let (u, v) = (x[0], x[1]);
    let t = u * v / 4.0;
    let fx = amp * t.cos() * v / 4.0;
    let fy = amp * t.cos() * u / 4.0;
    let fxx = -amp * t.sin() * v * v / 16.0;
    let fyy = -amp * t.sin() * u * u / 16.0;
    let fxy = amp * (t.cos() / 4.0 - t.sin() * u * v / 16.0);
    let w = (1.0 + fx * fx + fy * fy).sqrt();
    -((1.0 + fy * fy) * fxx - 2.0 * fx * fy * fxy + (1.0 + fx * fx) * fyy) / (w * w * w)
}

/// `int_Omega g(phi) |grad phi| dOmega` over a mesh with a Gauss rule exact
/// for degree `2p + 4` per direction.
pub fn coarea_integral(mesh: &BulkMesh, field: &dyn LevelSetField, g: impl Fn(f64) -> f64) -> f64 {
    let rule = gauss_rule(mesh.dim, 2 * mesh.p + 4);
    let vals = mesh.basis.tabulate(&rule);
    let mut total = 0.0;
    for e in 0..mesh.n_elements() {
        for (sv, w) in vals.iter().zip(&rule.weights) {
            let geo = mesh.geometry(e, sv);
            total += g(field.eval(&geo.x)) * field.gradient(&geo.x).norm() * geo.det * w;
        }
    }
    total
}

/// Coarea integral of the arc-family mesh and its error against
/// `int_2^4 theta c dc = 6 theta = 7 pi / 3`.
pub fn arc_coarea_error(n: usize, p: usize) -> f64 {
    let mesh = build_benchmark_mesh(BenchmarkId::ArcFamily, n, p).unwrap();
    let field = RadialField::new(2, Vec3::zeros(), 0.0);
    (coarea_integral(&mesh, &field, |_| 1.0) - 7.0 * PI / 3.0).abs()
}

fn flat_beam(div: [usize; 2], p: usize, bc: BcSpec) -> Problem {
    let mesh = rectangle_mesh(
        2.0,
        1.0,
        div,
        p,
        [
            FacetTag::SupersetBoundary(0),
            FacetTag::SupersetBoundary(1),
            FacetTag::LevelLimitMin,
            FacetTag::LevelLimitMax,
        ],
        0.5,
    );
    let field = PlanarField { dim: 2, a: Vec3::new(0.0, 1.0, 0.0), b: 0.0 };
    let mat = Material::Beam(MaterialBeam { e: 100.0, a: 0.5, i: 0.02 });
    Problem::new(mesh, Box::new(field), mat, Box::new(|_| Vec3::zeros()), bc).unwrap()
}

/// Worst nodal errors of a patch test, relative to the exact field's scale:
/// `(displacement, moment, rotation)`.
pub struct PatchErrors {
    pub u: f64,
    pub m: f64,
    pub omega: f64,
}

impl PatchErrors {
    pub fn max(&self) -> f64 {
        self.u.max(self.m).max(self.omega)
    }
}

fn nodal_u_error(pb: &Problem, sol: &Solution, exact: impl Fn(&Vec3) -> Vec3) -> (f64, f64) {
    let dim = pb.dim();
    let (mut err, mut scale) = (0.0f64, 0.0f64);
    for (i, x) in pb.mesh.nodes.iter().enumerate() {
        let ue = exact(x);
        for c in 0..dim {
            err = err.max((sol.x[i * dim + c] - ue[c]).abs());
            scale = scale.max(ue[c].abs());
        }
    }
    (err, scale)
}

/// Flat beams `phi = y` on a tilted rectangle, `u = (a x, 0)` from Dirichlet
/// data at both ends: the discrete solution must be exactly linear with
/// `m = 0` and `omega = 0`. The mesh has a single element row across the
/// level sets; stacked rows of a flat family leave rotation multipliers on the
/// stacked facets that no moment sees, so the condensed matrix is singular.
pub fn membrane_patch_2d(p: usize) -> PatchErrors {
    let a = 1e-3;
    let mut bc = BcSpec::default();
    bc.regions.insert(0, RegionBc::simply_supported(2));
    bc.regions.insert(1, RegionBc { u: [Some(2.0 * a), Some(0.0), None], ..Default::default() });
    let pb = flat_beam([3, 1], p, bc);
    let (sol, _) = solve_problem(&pb, &AssemblyOptions::default()).unwrap();
    let (eu, su) = nodal_u_error(&pb, &sol, |x| Vec3::new(a * x[0], 0.0, 0.0));
    let force = 100.0 * 0.5 * a;
    let m = sol.m.iter().flatten().fold(0.0f64, |s, v| s.max(v.abs()));
    let w = sol.x[pb.layout.n_u..].iter().fold(0.0f64, |s, v| s.max(v.abs()));
    PatchErrors { u: eu / su, m: m / force, omega: w / a }
}

/// Flat beams under end rotations: `u = (a x, b x^2 / 2)`, rotation `b x`
/// and constant moment `EI b`.
pub fn bending_patch_2d(p: usize) -> PatchErrors {
    let (a, b) = (1e-3, 2e-3);
    let mut bc = BcSpec::default();
    bc.regions.insert(0, RegionBc::clamped(2));
    bc.regions
        .insert(1, RegionBc { u: [Some(2.0 * a), Some(2.0 * b), None], omega: Some(2.0 * b), ..Default::default() });
    let pb = flat_beam([3, 1], p, bc);
    let (sol, _) = solve_problem(&pb, &AssemblyOptions::default()).unwrap();
    let (eu, su) = nodal_u_error(&pb, &sol, |x| Vec3::new(a * x[0], b * x[0] * x[0] / 2.0, 0.0));
    // Voigt (xx, yy, xy) coefficients per node: only m_xx = EI b survives.
    let ei_b = 100.0 * 0.02 * b;
    let nn = pb.mesh.basis.n_nodes();
    let mut em = 0.0f64;
    for me in &sol.m {
        for k in 0..3 {
            let target = if k == 0 { ei_b } else { 0.0 };
            for a in 0..nn {
                em = em.max((me[k * nn + a].abs() - target).abs());
            }
        }
    }
    PatchErrors { u: eu / su, m: em / ei_b, omega: 0.0 }
}

/// Flat shells `phi = z` with `nu = 0` in a tilted box, `u = (a x, 0, 0)`.
pub fn membrane_patch_3d(p: usize) -> PatchErrors {
    let a = 1e-3;
    let mesh = box_mesh(
        [2.0, 1.0, 1.0],
        [2, 2, 1],
        p,
        [
            FacetTag::SupersetBoundary(0),
            FacetTag::SupersetBoundary(1),
            FacetTag::SupersetBoundary(2),
            FacetTag::SupersetBoundary(2),
            FacetTag::LevelLimitMin,
            FacetTag::LevelLimitMax,
        ],
        0.5,
    );
    let field = PlanarField { dim: 3, a: Vec3::new(0.0, 0.0, 1.0), b: 0.0 };
    let mat = Material::Shell(MaterialShell { e: 100.0, nu: 0.0, t: 0.1 });
    let mut bc = BcSpec::default();
    bc.regions.insert(0, RegionBc::simply_supported(3));
    bc.regions.insert(1, RegionBc { u: [Some(2.0 * a), Some(0.0), Some(0.0)], ..Default::default() });
    bc.regions.insert(2, RegionBc { u: [None, Some(0.0), None], ..Default::default() });
    let pb = Problem::new(mesh, Box::new(field), mat, Box::new(|_| Vec3::zeros()), bc).unwrap();
    let (sol, _) = solve_problem(&pb, &AssemblyOptions::default()).unwrap();
    let (eu, su) = nodal_u_error(&pb, &sol, |x| Vec3::new(a * x[0], 0.0, 0.0));
    let force = 100.0 * 0.1 * a;
    let m = sol.m.iter().flatten().fold(0.0f64, |s, v| s.max(v.abs()));
    let w = sol.x[pb.layout.n_u..].iter().fold(0.0f64, |s, v| s.max(v.abs()));
    PatchErrors { u: eu / su, m: m / force, omega: w / a }
}

/// One-element sphere-family shell cantilever in a unit box, clamped on
/// `x = 0` and free elsewhere.
pub fn one_element_shell(p: usize) -> Problem {
    let mesh = box_mesh(
        [1.0, 1.0, 1.0],
        [1, 1, 1],
        p,
        [
            FacetTag::SupersetBoundary(0),
            FacetTag::SupersetBoundary(1),
            FacetTag::SupersetBoundary(1),
            FacetTag::SupersetBoundary(1),
            FacetTag::LevelLimitMin,
            FacetTag::LevelLimitMax,
        ],
        0.0,
    );
    let field = RadialField::new(3, Vec3::new(0.3, 0.2, -2.0), 0.0);
    let mat = Material::Shell(MaterialShell { e: 1.0e3, nu: 0.3, t: 0.1 });
    let mut bc = BcSpec::default();
    bc.regions.insert(0, RegionBc::clamped(3));
    Problem::new(mesh, Box::new(field), mat, Box::new(|_| Vec3::new(0.0, 0.0, -1.0)), bc).unwrap()
}

/// Solves a one-element problem twice: through condensation and the sparse
/// solver, and as the full saddle-point system in (m, u, omega) with a dense
/// LU. Returns the relative differences `(u and omega, m)`.
pub fn hybrid_vs_unhybridized(pb: &Problem) -> (f64, f64) {
    assert_eq!(pb.mesh.n_elements(), 1);
    let (sol, _) = solve_problem(pb, &AssemblyOptions::default()).unwrap();
    let tabs = QuadTables::new(&pb.mesh.basis, pb.mesh.assembly_points());
    let b = element_blocks(pb, &tabs, 0).unwrap();
    let (nm, nu, nw) = (b.n_m(), b.n_u(), b.n_w());
    let dofs = pb.layout.element_dofs(&pb.mesh, 0);
    let n = nm + pb.layout.n_condensed();
    let mut a = DMatrix::<f64>::zeros(n, n);
    let mut rhs = DVector::<f64>::zeros(n);
    for i in 0..nm {
        for j in 0..nm {
            a[(i, j)] = b.kmm[(i, j)];
        }
        for (j, &g) in dofs.iter().enumerate() {
            let v = if j < nu { b.kmu[(i, j)] } else { b.kmw[(i, j - nu)] };
            a[(i, nm + g)] += v;
            a[(nm + g, i)] += v;
        }
    }
    for (i, &gi) in dofs.iter().enumerate().take(nu) {
        for (j, &gj) in dofs.iter().enumerate().take(nu) {
            a[(nm + gi, nm + gj)] += b.kuu[(i, j)];
        }
        rhs[nm + gi] += b.bu[i];
    }
    for j in 0..nw {
        rhs[nm + dofs[nu + j]] += b.bw[j];
    }
    // Move prescribed values to the right-hand side and keep identity rows.
    for (g, f) in pb.layout.fixed.iter().enumerate() {
        if let Some(v) = f {
            let r = nm + g;
            for i in 0..n {
                if i != r {
                    rhs[i] -= a[(i, r)] * v;
                    a[(i, r)] = 0.0;
                    a[(r, i)] = 0.0;
                }
            }
            a[(r, r)] = 1.0;
            rhs[r] = *v;
        }
    }
    let x = a.full_piv_lu().solve(&rhs).expect("saddle-point system is nonsingular");
    let rel = |xs: &[f64], ys: &[f64]| {
        let s = ys.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        xs.iter().zip(ys).fold(0.0f64, |a, (p, q)| a.max((p - q).abs())) / s
    };
    let full: Vec<f64> = x.iter().copied().collect();
    (rel(&full[nm..], &sol.x), rel(&full[..nm], &sol.m[0]))
}

/// Dense condensed matrix restricted to free DOFs.
pub fn reduced_dense(pb: &Problem) -> DMatrix<f64> {
    let (k, _) = assemble_dense_unreduced(pb).unwrap();
    let free: Vec<usize> = (0..k.nrows()).filter(|&i| pb.layout.fixed[i].is_none()).collect();
    DMatrix::from_fn(free.len(), free.len(), |i, j| k[(free[i], free[j])])
}

/// `(min eigenvalue / max eigenvalue, Cholesky succeeded)` of the reduced
/// condensed matrix.
pub fn spd_after_elimination(pb: &Problem) -> (f64, bool) {
    let k = reduced_dense(pb);
    let chol = k.clone().cholesky().is_some();
    let ev = k.symmetric_eigenvalues();
    (ev.min() / ev.max(), chol)
}

/// Symmetry defect `|K - K^T|_max / |K|_max` of the global matrix assembled
/// from per-element Schur complements `K_uu - B^T K_mm^-1 B` computed with a
/// general LU, without the symmetrization done in production assembly.
pub fn naive_global_symmetry(pb: &Problem) -> f64 {
    let mesh = &pb.mesh;
    let n = pb.layout.n_condensed();
    let mut k = DMatrix::<f64>::zeros(n, n);
    let tabs = QuadTables::new(&mesh.basis, mesh.assembly_points());
    for e in 0..mesh.n_elements() {
        let b = element_blocks(pb, &tabs, e).unwrap();
        let (nm, nu, nw) = (b.n_m(), b.n_u(), b.n_w());
        let kmm = DMatrix::from_fn(nm, nm, |i, j| b.kmm[(i, j)]);
        let bb = DMatrix::from_fn(nm, nu + nw, |i, j| if j < nu { b.kmu[(i, j)] } else { b.kmw[(i, j - nu)] });
        let y = kmm.lu().solve(&bb).unwrap();
        let mut ke = -(bb.transpose() * y);
        for i in 0..nu {
            for j in 0..nu {
                ke[(i, j)] += b.kuu[(i, j)];
            }
        }
        let dofs = pb.layout.element_dofs(mesh, e);
        for (i, &gi) in dofs.iter().enumerate() {
            for (j, &gj) in dofs.iter().enumerate() {
                k[(gi, gj)] += ke[(i, j)];
            }
        }
    }
    (&k - k.transpose()).amax() / k.amax()
}

/// Interpolates a continuous moment field into every element's discontinuous
/// moment space and returns the largest interface entry of `sum_e K_mw^T m_e`
/// relative to the largest single-element contribution.
pub fn jump_of_continuous_moment(pb: &Problem, m: impl Fn(&Vec3) -> Mat3) -> f64 {
    let mesh = &pb.mesh;
    let dim = mesh.dim;
    let nn = mesh.basis.n_nodes();
    let pairs: Vec<(usize, usize)> =
        if dim == 2 { vec![(0, 0), (1, 1), (0, 1)] } else { vec![(0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2)] };
    let tabs = QuadTables::new(&mesh.basis, mesh.assembly_points());
    let mut acc = vec![0.0; pb.layout.n_condensed()];
    let mut scale = 0.0f64;
    for e in 0..mesh.n_elements() {
        let b = element_blocks(pb, &tabs, e).unwrap();
        let mut me = vec![0.0; pairs.len() * nn];
        for (a, &g) in mesh.elements[e].iter().enumerate() {
            let t = m(&mesh.nodes[g]);
            for (k, &(i, j)) in pairs.iter().enumerate() {
                me[k * nn + a] = t[(i, j)];
            }
        }
        let dofs = pb.layout.element_dofs(mesh, e);
        let nu = b.n_u();
        for j in 0..b.n_w() {
            let v: f64 = (0..b.n_m()).map(|i| b.kmw[(i, j)] * me[i]).sum();
            acc[dofs[nu + j]] += v;
            scale = scale.max(v.abs());
        }
    }
    let mut worst = 0.0f64;
    for (fid, f) in mesh.facets.iter().enumerate() {
        if f.is_interface() {
            for &d in &pb.layout.facet_dofs[fid] {
                worst = worst.max(acc[d].abs());
            }
        }
    }
    worst / scale
}

/// Mesh conformity: each interface facet's nodes equal the face nodes of
/// both neighbours, every local face points back to its facet, and
/// level-limit facets own no rotation DOFs. Returns the number of violations.
pub fn conformity_violations(pb: &Problem) -> usize {
    let mesh = &pb.mesh;
    let mut bad = 0;
    let face_nodes = |e: usize, lf: usize| {
        let mut v: Vec<usize> = mesh.basis.face_nodes(lf).iter().map(|&a| mesh.elements[e][a]).collect();
        v.sort_unstable();
        v
    };
    for (fid, f) in mesh.facets.iter().enumerate() {
        let mut sides = vec![f.plus];
        sides.extend(f.minus);
        for (e, lf) in sides {
            if face_nodes(e, lf) != f.nodes || mesh.element_faces[e][lf] != fid {
                bad += 1;
            }
        }
        let level_limit = matches!(f.tag, Some(FacetTag::LevelLimitMin | FacetTag::LevelLimitMax));
        if level_limit != pb.layout.facet_dofs[fid].is_empty() {
            bad += 1;
        }
    }
    let mut count = vec![0usize; mesh.facets.len()];
    for faces in &mesh.element_faces {
        for &f in faces {
            count[f] += 1;
        }
    }
    for (fid, f) in mesh.facets.iter().enumerate() {
        if count[fid] != if f.is_interface() { 2 } else { 1 } {
            bad += 1;
        }
    }
    bad
}
