//! Sparse Cholesky solve of the condensed system, element-wise moment
//! recovery and pointwise evaluation of derived quantities.

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::LltError;
use faer::sparse::{SparseColMat, SymbolicSparseColMat};
use faer::{Mat, Side};
use rayon::prelude::*;

use crate::assembly::{
    apply_recovery, assemble_global, element_blocks, recover_from_blocks, AssemblyOptions, CondensedSystem, Problem,
    QuadTables,
};
use crate::error::{BtError, Result};
use crate::levelset::{tdc_frame, tdc_jet, Mat3, TdcFrame, Vec3};
use crate::mechanics::{
    effective_normal_force, energy_density, membrane_strain, physical_normal_force, principal_value,
    surface_div_tensor, voigt_basis, FieldJet,
};
use crate::mesh::GeomPoint;
use crate::spaces::ShapeValues;

/// Target relative residual of the refined direct solve.
pub const RESIDUAL_TOL: f64 = 1e-10;

/// Relative residuals above this are reported as a numerical failure. Between
/// the two limits the residual is at the rounding floor
/// `eps |K| |x| / |b|` of badly scaled systems and is only reported.
pub const RESIDUAL_FAIL: f64 = 1e-6;

const MAX_REFINEMENT: usize = 4;

/// Solves the reduced system and returns the full (u, omega) vector with
/// Dirichlet values inserted, plus the relative residual.
pub fn solve_condensed(sys: &CondensedSystem) -> Result<(Vec<f64>, f64)> {
    let mut full = sys.fixed_values.clone();
    if sys.n == 0 {
        return Ok((full, 0.0));
    }
    let symbolic = SymbolicSparseColMat::<u32>::new_checked(sys.n, sys.n, sys.col_ptr.clone(), None, sys.row_idx.clone());
    let mat = SparseColMat::<u32, f64>::new(symbolic, sys.values.clone());
    let llt = mat.sp_cholesky(Side::Lower).map_err(|e| match e {
        LltError::Numeric(_) => BtError::NotPositiveDefinite,
        LltError::Generic(g) => BtError::FactorizationFailed(format!("{g:?}")),
    })?;
    let bn = sys.rhs.iter().map(|v| v * v).sum::<f64>().sqrt();
    let residual = |x: &[f64]| -> Vec<f64> { sys.mul(x).iter().zip(&sys.rhs).map(|(a, b)| b - a).collect() };
    let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
    let mut xr = vec![0.0; sys.n];
    let mut r = sys.rhs.clone();
    let mut rel = f64::INFINITY;
    // Iterative refinement with the same factor: badly scaled systems (thin
    // members, EA >> EI) lose a few digits in a single solve.
    for _ in 0..MAX_REFINEMENT {
        let mut d = Mat::from_fn(sys.n, 1, |i, _| r[i]);
        llt.solve_in_place(d.as_mut());
        let trial: Vec<f64> = (0..sys.n).map(|i| xr[i] + d[(i, 0)]).collect();
        if trial.iter().any(|v| !v.is_finite()) {
            return Err(BtError::NotPositiveDefinite);
        }
        let rt = residual(&trial);
        let rel_t = if bn > 0.0 { norm(&rt) / bn } else { norm(&rt) };
        if rel_t >= rel {
            break;
        }
        xr = trial;
        r = rt;
        rel = rel_t;
        if rel <= 1e-3 * RESIDUAL_TOL {
            break;
        }
    }
    for (d, fi) in sys.free_index.iter().enumerate() {
        if let Some(r) = fi {
            full[d] = xr[*r];
        }
    }
    Ok((full, rel))
}

/// Discrete displacement, rotation and moment fields.
#[derive(Debug, Clone)]
pub struct Solution {
    /// Condensed unknowns: displacements (`node * dim + c`) then rotations.
    pub x: Vec<f64>,
    /// Moment DOFs per element, component-major.
    pub m: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy)]
pub struct SolveStats {
    /// Free condensed unknowns.
    pub n_free: usize,
    /// All unknowns of the three fields, including moments and prescribed DOFs.
    pub n_dof: usize,
    pub nnz: usize,
    pub rel_residual: f64,
}

/// Moment DOFs of every element from the condensed solution.
pub fn recover_moments(pb: &Problem, x: &[f64], cache: Option<&[Mat<f64>]>) -> Result<Vec<Vec<f64>>> {
    let mesh = &pb.mesh;
    let tabs = if cache.is_none() { Some(QuadTables::new(&mesh.basis, mesh.assembly_points())) } else { None };
    (0..mesh.n_elements())
        .into_par_iter()
        .map(|e| {
            let xl: Vec<f64> = pb.layout.element_dofs(mesh, e).iter().map(|&d| x[d]).collect();
            match cache {
                Some(c) => Ok(apply_recovery(&c[e], &xl)),
                None => {
                    let b = element_blocks(pb, tabs.as_ref().expect("tables"), e)?;
                    recover_from_blocks(&b, e, &xl)
                }
            }
        })
        .collect()
}

/// Assembles, solves and recovers moments.
pub fn solve_problem(pb: &Problem, opts: &AssemblyOptions) -> Result<(Solution, SolveStats)> {
    let asm = assemble_global(pb, opts)?;
    let (x, rel) = solve_condensed(&asm.system)?;
    if !(rel <= RESIDUAL_FAIL) {
        return Err(BtError::InaccurateSolve(rel));
    }
    let m = recover_moments(pb, &x, asm.recovery.as_deref())?;
    let stats = SolveStats {
        n_free: asm.system.n,
        n_dof: pb.layout.n_u + pb.layout.n_m + pb.layout.n_w,
        nnz: asm.system.nnz(),
        rel_residual: rel,
    };
    Ok((Solution { x, m }, stats))
}

/// Discrete fields and their physical derivatives at one element point.
#[derive(Debug, Clone, Copy)]
pub struct PointState {
    pub geom: GeomPoint,
    pub u: Vec3,
    pub jet: FieldJet,
}

/// Evaluates u, m and their first and second physical derivatives.
/// `with_second` skips the basis Hessians when only first derivatives are
/// needed.
pub fn point_state(pb: &Problem, sol: &Solution, e: usize, sv: &ShapeValues, with_second: bool) -> PointState {
    let mesh = &pb.mesh;
    let dim = mesh.dim;
    let nn = mesh.basis.n_nodes();
    let geom = mesh.geometry(e, sv);
    let grads = mesh.gradients(sv, &geom);
    let hess = if with_second { mesh.hessians(e, sv, &geom, &grads) } else { Vec::new() };
    let eb = voigt_basis(dim);
    let mut jet = FieldJet::zero();
    let mut u = Vec3::zeros();
    for (a, &node) in mesh.elements[e].iter().enumerate() {
        for i in 0..dim {
            let ua = sol.x[node * dim + i];
            if ua == 0.0 {
                continue;
            }
            u[i] += ua * sv.n[a];
            for j in 0..dim {
                jet.jac_u[(i, j)] += ua * grads[a][j];
            }
            if with_second {
                jet.hess_u[i] += hess[a] * ua;
            }
        }
    }
    let me = &sol.m[e];
    for (k, ek) in eb.iter().enumerate() {
        let mut v = 0.0;
        let mut g = Vec3::zeros();
        let mut h = Mat3::zeros();
        for a in 0..nn {
            let c = me[k * nn + a];
            v += c * sv.n[a];
            g += grads[a] * c;
            if with_second {
                h += hess[a] * c;
            }
        }
        jet.m += ek * v;
        for c in 0..3 {
            jet.dm[c] += ek * g[c];
            if with_second {
                for d in 0..3 {
                    jet.ddm[c][d] += ek * h[(c, d)];
                }
            }
        }
    }
    PointState { geom, u, jet }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quantity {
    U,
    UNorm,
    MVoigt,
    MPrincipal,
    NRealPrincipal,
    ShearQ,
    EnergyDensity,
}

impl Quantity {
    pub fn all() -> [Quantity; 7] {
        use Quantity::*;
        [U, UNorm, MVoigt, MPrincipal, NRealPrincipal, ShearQ, EnergyDensity]
    }

    pub fn name(self) -> &'static str {
        match self {
            Quantity::U => "u",
            Quantity::UNorm => "u_norm",
            Quantity::MVoigt => "m_voigt",
            Quantity::MPrincipal => "m_principal",
            Quantity::NRealPrincipal => "n_real_principal",
            Quantity::ShearQ => "shear_q",
            Quantity::EnergyDensity => "energy_density",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FieldValue {
    Scalar(f64),
    Vector(Vec3),
    /// Voigt components `xx, yy, (zz,) xy, (xz, yz)`.
    Voigt(Vec<f64>),
}

impl FieldValue {
    pub fn components(&self) -> Vec<f64> {
        match self {
            FieldValue::Scalar(v) => vec![*v],
            FieldValue::Vector(v) => vec![v[0], v[1], v[2]],
            FieldValue::Voigt(v) => v.clone(),
        }
    }
}

/// Voigt components of a symmetric tensor, in the order of [`voigt_basis`].
pub fn mat_to_voigt(dim: usize, m: &Mat3) -> Vec<f64> {
    if dim == 2 {
        vec![m[(0, 0)], m[(1, 1)], m[(0, 1)]]
    } else {
        vec![m[(0, 0)], m[(1, 1)], m[(2, 2)], m[(0, 1)], m[(0, 2)], m[(1, 2)]]
    }
}

/// Shear force from the moment jet: in 2D the scalar `[-n_y, n_x] . P div m`,
/// in 3D the vector `P div m`.
pub fn shear_force(frame: &TdcFrame, dm: &[Mat3; 3]) -> FieldValue {
    let v = frame.p * surface_div_tensor(&frame.p, dm);
    if frame.dim == 2 {
        FieldValue::Scalar(-frame.n[1] * v[0] + frame.n[0] * v[1])
    } else {
        FieldValue::Vector(v)
    }
}

/// Value of a derived quantity at reference point `xi` of element `e`.
pub fn evaluate_field(pb: &Problem, sol: &Solution, e: usize, xi: &[f64; 3], q: Quantity) -> Result<FieldValue> {
    let sv = pb.mesh.basis.eval(xi);
    let st = point_state(pb, sol, e, &sv, false);
    evaluate_at(pb, &st, q)
}

pub fn evaluate_at(pb: &Problem, st: &PointState, q: Quantity) -> Result<FieldValue> {
    let dim = pb.dim();
    Ok(match q {
        Quantity::U => FieldValue::Vector(st.u),
        Quantity::UNorm => FieldValue::Scalar(st.u.norm()),
        Quantity::MVoigt => FieldValue::Voigt(mat_to_voigt(dim, &st.jet.m)),
        _ => {
            let frame = tdc_frame(pb.field.as_ref(), &st.geom.x)?;
            let m = frame.p * st.jet.m * frame.p;
            match q {
                Quantity::MPrincipal => FieldValue::Scalar(principal_value(&m)),
                Quantity::NRealPrincipal => {
                    let nt = effective_normal_force(&pb.material, &frame, &membrane_strain(&frame, &st.jet.jac_u));
                    FieldValue::Scalar(principal_value(&physical_normal_force(&frame, &nt, &st.jet.m)))
                }
                Quantity::ShearQ => {
                    // div(P m P) needs the frame derivatives.
                    let jet = tdc_jet(pb.field.as_ref(), &st.geom.x)?;
                    let mut d = [Mat3::zeros(); 3];
                    for (c, dc) in d.iter_mut().enumerate() {
                        *dc = jet.dp[c] * st.jet.m * frame.p + frame.p * st.jet.dm[c] * frame.p
                            + frame.p * st.jet.m * jet.dp[c];
                    }
                    shear_force(&frame, &d)
                }
                _ => FieldValue::Scalar(energy_density(&pb.material, &frame, &st.jet.jac_u, &st.jet.m)),
            }
        }
    })
}

/// Nodal values of a quantity at every element-local node, for VTK output.
pub fn nodal_values(pb: &Problem, sol: &Solution, q: Quantity) -> Result<(usize, Vec<f64>)> {
    let mesh = &pb.mesh;
    let nn = mesh.basis.n_nodes();
    let per: Vec<Result<Vec<Vec<f64>>>> = (0..mesh.n_elements())
        .into_par_iter()
        .map(|e| {
            (0..nn)
                .map(|a| evaluate_field(pb, sol, e, &mesh.basis.node_ref_coords(a), q).map(|v| v.components()))
                .collect()
        })
        .collect();
    let mut out = Vec::new();
    let mut ncomp = 1;
    for r in per {
        for v in r? {
            ncomp = v.len();
            out.extend(v);
        }
    }
    Ok((ncomp, out))
}
