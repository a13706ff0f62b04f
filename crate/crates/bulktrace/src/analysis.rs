//! Error measures, stored energy and convergence studies.
//!
//! All integrals run over the bulk domain with the coarea weight `|grad phi|`
//! and use `p + 3` Gauss points per direction, one more than assembly plus a
//! margin so quadrature does not mask the discretization error.

use std::fmt::Write as _;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;

use crate::assembly::{AssemblyOptions, Problem};
use crate::bench::{build_problem, case, ArcExact, Provenance};
use crate::error::{BtError, Result};
use crate::levelset::{tdc_frame, tdc_jet, Vec3};
use crate::mechanics::strong_residuals;
use crate::mesh::quadrature::tensor_rule;
use crate::mesh::{BenchmarkId, BulkMesh};
use crate::solve::{evaluate_at, point_state, solve_problem, FieldValue, PointState, Quantity, Solution};
use crate::spaces::ShapeValues;

/// Quantities with an L2 error column.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum L2Quantity {
    U,
    MPrincipal,
    NRealPrincipal,
    ShearQ,
}

impl L2Quantity {
    pub fn all() -> [L2Quantity; 4] {
        [L2Quantity::U, L2Quantity::MPrincipal, L2Quantity::NRealPrincipal, L2Quantity::ShearQ]
    }

    fn quantity(self) -> Quantity {
        match self {
            L2Quantity::U => Quantity::U,
            L2Quantity::MPrincipal => Quantity::MPrincipal,
            L2Quantity::NRealPrincipal => Quantity::NRealPrincipal,
            L2Quantity::ShearQ => Quantity::ShearQ,
        }
    }
}

/// Reference fields for L2 errors.
pub trait ExactSolution: Send + Sync {
    fn provenance(&self) -> Provenance;
    fn supports(&self, q: L2Quantity) -> bool;
    fn value(&self, q: L2Quantity, x: &Vec3) -> Result<FieldValue>;
}

impl ExactSolution for ArcExact {
    fn provenance(&self) -> Provenance {
        Provenance::Published
    }

    fn supports(&self, _q: L2Quantity) -> bool {
        true
    }

    fn value(&self, q: L2Quantity, x: &Vec3) -> Result<FieldValue> {
        Ok(match q {
            L2Quantity::U => FieldValue::Vector(self.displacement(x)),
            L2Quantity::MPrincipal => FieldValue::Scalar(self.moment(x)),
            L2Quantity::NRealPrincipal => FieldValue::Scalar(self.normal_force(x)),
            L2Quantity::ShearQ => FieldValue::Scalar(self.shear(x)),
        })
    }
}

/// Finds the element and reference coordinates of a physical point by a
/// bucket grid over element bounding boxes and Newton inversion of the
/// element map.
pub struct PointLocator {
    lo: Vec3,
    cell: Vec3,
    dims: [usize; 3],
    buckets: Vec<Vec<u32>>,
}

impl PointLocator {
    pub fn new(mesh: &BulkMesh) -> Self {
        let dim = mesh.dim;
        let mut lo = Vec3::repeat(f64::INFINITY);
        let mut hi = Vec3::repeat(f64::NEG_INFINITY);
        let boxes: Vec<(Vec3, Vec3)> = mesh
            .elements
            .iter()
            .map(|conn| {
                let mut a = Vec3::repeat(f64::INFINITY);
                let mut b = Vec3::repeat(f64::NEG_INFINITY);
                for &g in conn {
                    a = a.inf(&mesh.nodes[g]);
                    b = b.sup(&mesh.nodes[g]);
                }
                // Curved edges may bulge past the nodes.
                let pad = (b - a) * 0.1;
                (a - pad, b + pad)
            })
            .collect();
        for (a, b) in &boxes {
            lo = lo.inf(a);
            hi = hi.sup(b);
        }
        let ne = mesh.n_elements().max(1) as f64;
        let per = ne.powf(1.0 / dim as f64).ceil() as usize;
        let mut dims = [1usize; 3];
        let mut cell = Vec3::repeat(1.0);
        for d in 0..dim {
            dims[d] = per.max(1);
            cell[d] = ((hi[d] - lo[d]) / dims[d] as f64).max(1e-300);
        }
        let mut buckets = vec![Vec::new(); dims[0] * dims[1] * dims[2]];
        let idx = |v: f64, d: usize| (((v - lo[d]) / cell[d]).floor().max(0.0) as usize).min(dims[d] - 1);
        for (e, (a, b)) in boxes.iter().enumerate() {
            let r: Vec<(usize, usize)> = (0..3)
                .map(|d| if d < dim { (idx(a[d], d), idx(b[d], d)) } else { (0, 0) })
                .collect();
            for k in r[2].0..=r[2].1 {
                for j in r[1].0..=r[1].1 {
                    for i in r[0].0..=r[0].1 {
                        buckets[i + dims[0] * (j + dims[1] * k)].push(e as u32);
                    }
                }
            }
        }
        PointLocator { lo, cell, dims, buckets }
    }

    pub fn locate(&self, mesh: &BulkMesh, x: &Vec3) -> Option<(usize, [f64; 3])> {
        let dim = mesh.dim;
        let mut c = [0usize; 3];
        for d in 0..dim {
            let v = ((x[d] - self.lo[d]) / self.cell[d]).floor();
            if v < 0.0 || v >= self.dims[d] as f64 {
                return None;
            }
            c[d] = v as usize;
        }
        let b = &self.buckets[c[0] + self.dims[0] * (c[1] + self.dims[1] * c[2])];
        for &e in b {
            if let Some(xi) = invert_map(mesh, e as usize, x) {
                return Some((e as usize, xi));
            }
        }
        None
    }
}

fn invert_map(mesh: &BulkMesh, e: usize, x: &Vec3) -> Option<[f64; 3]> {
    let dim = mesh.dim;
    let mut xi = [0.0; 3];
    for _ in 0..30 {
        let (y, jac, _) = mesh.isoparametric_map(e, &xi);
        let r = x - y;
        let jinv = jac.try_inverse()?;
        let dxi = jinv * r;
        for d in 0..dim {
            xi[d] += dxi[d];
            if !xi[d].is_finite() || xi[d].abs() > 3.0 {
                return None;
            }
        }
        if dxi.norm() < 1e-14 {
            break;
        }
    }
    let tol = 1e-9;
    if (0..dim).all(|d| xi[d].abs() <= 1.0 + tol) {
        Some(xi)
    } else {
        None
    }
}

/// A discrete solution used as the reference on nested coarser meshes.
pub struct OverkillSolution {
    pub problem: Arc<Problem>,
    pub solution: Arc<Solution>,
    locator: PointLocator,
}

impl OverkillSolution {
    pub fn new(problem: Arc<Problem>, solution: Arc<Solution>) -> Self {
        let locator = PointLocator::new(&problem.mesh);
        OverkillSolution { problem, solution, locator }
    }
}

impl ExactSolution for OverkillSolution {
    fn provenance(&self) -> Provenance {
        Provenance::Overkill
    }

    fn supports(&self, _q: L2Quantity) -> bool {
        true
    }

    fn value(&self, q: L2Quantity, x: &Vec3) -> Result<FieldValue> {
        let pb = &self.problem;
        let (e, xi) = self
            .locator
            .locate(&pb.mesh, x)
            .ok_or_else(|| BtError::MissingExact(format!("point {x:?} outside the reference mesh")))?;
        let sv = pb.mesh.basis.eval(&xi);
        let st = point_state(pb, &self.solution, e, &sv, false);
        evaluate_at(pb, &st, q.quantity())
    }
}

/// Gauss points per direction for error integrals.
pub fn error_points(mesh: &BulkMesh) -> usize {
    mesh.p + 3
}

struct ErrorQuad {
    weights: Vec<f64>,
    vals: Vec<ShapeValues>,
}

impl ErrorQuad {
    fn new(mesh: &BulkMesh, n: usize) -> Self {
        let rule = tensor_rule(mesh.dim, n, 2 * n - 1);
        let vals = mesh.basis.tabulate(&rule);
        ErrorQuad { weights: rule.weights, vals }
    }
}

/// Sums `f(state, weight)` over `npts^dim` Gauss points per element,
/// elementwise in parallel and in a fixed order.
fn integrate_with<T, F>(pb: &Problem, sol: &Solution, npts: usize, second: bool, zero: T, f: F) -> Result<T>
where
    T: Send + Sync + Copy + std::ops::Add<Output = T>,
    F: Fn(&PointState, f64) -> Result<T> + Sync,
{
    let q = ErrorQuad::new(&pb.mesh, npts);
    let parts: Vec<Result<T>> = (0..pb.mesh.n_elements())
        .into_par_iter()
        .map(|e| {
            let mut acc = zero;
            for (sv, w) in q.vals.iter().zip(&q.weights) {
                let st = point_state(pb, sol, e, sv, second);
                acc = acc + f(&st, st.geom.det * w)?;
            }
            Ok(acc)
        })
        .collect();
    let mut total = zero;
    for p in parts {
        total = total + p?;
    }
    Ok(total)
}

#[derive(Clone, Copy)]
struct Pair(f64, f64);

impl std::ops::Add for Pair {
    type Output = Pair;
    fn add(self, o: Pair) -> Pair {
        Pair(self.0 + o.0, self.1 + o.1)
    }
}

fn sq_diff(a: &FieldValue, b: &FieldValue) -> (f64, f64) {
    let ca = a.components();
    let cb = b.components();
    let d: f64 = ca.iter().zip(&cb).map(|(x, y)| (x - y) * (x - y)).sum();
    let n: f64 = ca.iter().map(|x| x * x).sum();
    (d, n)
}

/// Relative L2 error of a quantity against a reference solution.
pub fn l2_error(pb: &Problem, sol: &Solution, exact: &dyn ExactSolution, q: L2Quantity) -> Result<f64> {
    l2_error_with(pb, sol, exact, q, error_points(&pb.mesh))
}

/// [`l2_error`] with `npts` Gauss points per direction.
pub fn l2_error_with(
    pb: &Problem,
    sol: &Solution,
    exact: &dyn ExactSolution,
    q: L2Quantity,
    npts: usize,
) -> Result<f64> {
    if !exact.supports(q) {
        return Err(BtError::MissingExact(format!("{q:?}")));
    }
    let Pair(num, den) = integrate_with(pb, sol, npts, false, Pair(0.0, 0.0), |st, w| {
        let gn = pb.field.gradient(&st.geom.x).norm();
        let ex = exact.value(q, &st.geom.x)?;
        let h = evaluate_at(pb, st, q.quantity())?;
        let (d, n) = sq_diff(&ex, &h);
        Ok(Pair(d * gn * w, n * gn * w))
    })?;
    if den == 0.0 {
        return Ok(if num == 0.0 { 0.0 } else { f64::INFINITY });
    }
    Ok((num / den).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualErrors {
    pub res1: f64,
    pub res2: f64,
    /// `res2 / sqrt(int |f|^2 |grad phi|)`, absent for zero load.
    pub res2_rel: Option<f64>,
}

impl ResidualErrors {
    pub fn relative2(&self) -> Result<f64> {
        self.res2_rel.ok_or(BtError::ZeroLoadRelativeResidual)
    }
}

#[derive(Clone, Copy)]
struct Triple(f64, f64, f64);

impl std::ops::Add for Triple {
    type Output = Triple;
    fn add(self, o: Triple) -> Triple {
        Triple(self.0 + o.0, self.1 + o.1, self.2 + o.2)
    }
}

/// Strong-form residual errors of the discrete fields.
pub fn residual_errors(pb: &Problem, sol: &Solution) -> Result<ResidualErrors> {
    residual_errors_with(pb, sol, error_points(&pb.mesh))
}

/// [`residual_errors`] with `npts` Gauss points per direction.
pub fn residual_errors_with(pb: &Problem, sol: &Solution, npts: usize) -> Result<ResidualErrors> {
    let Triple(r1, r2, ff) = integrate_with(pb, sol, npts, true, Triple(0.0, 0.0, 0.0), |st, w| {
        let jet = tdc_jet(pb.field.as_ref(), &st.geom.x)?;
        let f = (pb.load)(&st.geom.x);
        let (a, b) = strong_residuals(&pb.material, &jet, &st.jet, &f);
        let wg = w * jet.frame.grad_norm;
        Ok(Triple(a.norm_squared() * wg, b.norm_squared() * wg, f.norm_squared() * wg))
    })?;
    let (res1, res2) = (r1.sqrt(), r2.sqrt());
    let res2_rel = if ff > 0.0 { Some(res2 / ff.sqrt()) } else { None };
    Ok(ResidualErrors { res1, res2, res2_rel })
}

/// Stored energy `1/2 int (eps_memb : n~ + eps_bend(m) : m) |grad phi|`.
pub fn stored_energy(pb: &Problem, sol: &Solution) -> Result<f64> {
    stored_energy_with(pb, sol, error_points(&pb.mesh))
}

/// Stored energy with `npts` Gauss points per direction.
pub fn stored_energy_with(pb: &Problem, sol: &Solution, npts: usize) -> Result<f64> {
    integrate_with(pb, sol, npts, false, 0.0, |st, w| {
        let frame = tdc_frame(pb.field.as_ref(), &st.geom.x)?;
        let FieldValue::Scalar(d) = evaluate_at(pb, st, Quantity::EnergyDensity)? else { unreachable!() };
        Ok(d * frame.grad_norm * w)
    })
}

pub fn energy_error(e_h: f64, e_ref: f64) -> f64 {
    (e_ref - e_h).abs() / e_ref
}

/// Errors of one (p, n) run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub case: String,
    pub p: usize,
    pub n: usize,
    pub n_dof: usize,
    pub n_elements: usize,
    /// L2 errors of u, m^(1), n_real^(1) and q, when a reference exists.
    pub l2: [Option<f64>; 4],
    pub res1: f64,
    /// Relative second residual error (absolute when the load vanishes).
    pub res2: f64,
    pub energy: f64,
    pub eps_energy: Option<f64>,
    pub rel_residual: f64,
    pub seconds: f64,
}

impl RunRecord {
    /// Values of the error columns, in CSV order.
    pub fn errors(&self) -> [Option<f64>; 7] {
        [self.l2[0], self.l2[1], self.l2[2], self.l2[3], Some(self.res1), Some(self.res2), self.eps_energy]
    }
}

pub const ERROR_COLUMNS: [&str; 7] =
    ["eps_L2_u", "eps_L2_m", "eps_L2_n", "eps_L2_q", "eps_res1", "eps_res2", "eps_energy"];

/// Per-(p, n) records and consecutive-pair slopes.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ErrorReport {
    pub rows: Vec<RunRecord>,
}

/// `log2(e_prev / e_next)`: the rate per halving of the mesh size.
pub fn slope(e_prev: f64, e_next: f64) -> Option<f64> {
    if e_prev > 0.0 && e_next > 0.0 && e_prev.is_finite() && e_next.is_finite() {
        Some((e_prev / e_next).log2())
    } else {
        None
    }
}

impl ErrorReport {
    /// The run of the same case and `p` at refinement `n - 1`.
    fn previous(&self, r: &RunRecord) -> Option<&RunRecord> {
        if r.n == 0 {
            return None;
        }
        self.rows.iter().find(|o| o.case == r.case && o.p == r.p && o.n + 1 == r.n)
    }

    /// Slopes of the seven error columns from the previous refinement.
    pub fn slopes(&self, r: &RunRecord) -> [Option<f64>; 7] {
        let mut out = [None; 7];
        if let Some(prev) = self.previous(r) {
            let (a, b) = (prev.errors(), r.errors());
            for i in 0..7 {
                if let (Some(x), Some(y)) = (a[i], b[i]) {
                    out[i] = slope(x, y);
                }
            }
        }
        out
    }

    /// Slopes of column `col` for one `p`, ordered by `n`.
    pub fn slope_series(&self, p: usize, col: usize) -> Vec<Option<f64>> {
        let mut rows: Vec<&RunRecord> = self.rows.iter().filter(|r| r.p == p).collect();
        rows.sort_by_key(|r| r.n);
        rows.iter().skip(1).map(|r| self.slopes(r)[col]).collect()
    }

    pub fn csv_header() -> String {
        let mut h = String::from("case,p,n,n_dof");
        for c in ERROR_COLUMNS.iter().take(6) {
            h.push(',');
            h.push_str(c);
        }
        h.push_str(",energy,eps_energy");
        for c in ERROR_COLUMNS {
            let _ = write!(h, ",slope_{}", c.trim_start_matches("eps_"));
        }
        h
    }

    pub fn to_csv(&self) -> String {
        let fmt = |v: Option<f64>| v.map(|x| format!("{x:.12e}")).unwrap_or_default();
        let mut s = Self::csv_header();
        s.push('\n');
        for r in &self.rows {
            let e = r.errors();
            let _ = write!(s, "{},{},{},{}", r.case, r.p, r.n, r.n_dof);
            for v in e.iter().take(6) {
                let _ = write!(s, ",{}", fmt(*v));
            }
            let _ = write!(s, ",{:.15e},{}", r.energy, fmt(r.eps_energy));
            for v in self.slopes(r) {
                let _ = write!(s, ",{}", v.map(|x| format!("{x:.4}")).unwrap_or_default());
            }
            s.push('\n');
        }
        s
    }

    /// Human-readable slope table.
    pub fn slope_table(&self) -> String {
        let mut s = String::new();
        let _ = write!(s, "{:>3} {:>2} {:>9}", "p", "n", "n_dof");
        for c in ERROR_COLUMNS {
            let _ = write!(s, " {:>10}", c.trim_start_matches("eps_"));
        }
        s.push('\n');
        for r in &self.rows {
            let _ = write!(s, "{:>3} {:>2} {:>9}", r.p, r.n, r.n_dof);
            for v in self.slopes(r) {
                match v {
                    Some(x) => {
                        let _ = write!(s, " {x:>10.3}");
                    }
                    None => {
                        let _ = write!(s, " {:>10}", "-");
                    }
                }
            }
            s.push('\n');
        }
        s
    }
}

#[derive(Clone, Copy)]
pub struct StudyOptions {
    pub assembly: AssemblyOptions,
    /// Runs in flight at once.
    pub workers: usize,
    /// Skip the L2 columns even when a reference exists.
    pub skip_l2: bool,
}

impl Default for StudyOptions {
    fn default() -> Self {
        StudyOptions { assembly: AssemblyOptions::default(), workers: 1, skip_l2: false }
    }
}

/// Solves one benchmark run and evaluates every available error measure.
pub fn run_single(
    id: BenchmarkId,
    p: usize,
    n: usize,
    exact: Option<&dyn ExactSolution>,
    opts: &StudyOptions,
) -> Result<(RunRecord, Problem, Solution)> {
    let t0 = Instant::now();
    let pb = build_problem(id, n, p)?;
    let (sol, stats) = solve_problem(&pb, &opts.assembly)?;
    let mut l2 = [None; 4];
    if let (Some(ex), false) = (exact, opts.skip_l2) {
        for (i, q) in L2Quantity::all().into_iter().enumerate() {
            if ex.supports(q) {
                l2[i] = Some(l2_error(&pb, &sol, ex, q)?);
            }
        }
    }
    let res = residual_errors(&pb, &sol)?;
    let energy = stored_energy(&pb, &sol)?;
    let e_ref = case(id).e_ref.value;
    let rec = RunRecord {
        case: id.name().to_string(),
        p,
        n,
        n_dof: stats.n_dof,
        n_elements: pb.mesh.n_elements(),
        l2,
        res1: res.res1,
        res2: res.res2_rel.unwrap_or(res.res2),
        energy,
        eps_energy: if e_ref.is_finite() { Some(energy_error(energy, e_ref)) } else { None },
        rel_residual: stats.rel_residual,
        seconds: t0.elapsed().as_secs_f64(),
    };
    Ok((rec, pb, sol))
}

/// Runs every (p, n) pair. The arc family uses its closed-form solution for
/// the L2 columns; the other families report residual and energy errors.
pub fn run_convergence_study(id: BenchmarkId, ps: &[usize], ns: &[usize], opts: &StudyOptions) -> Result<ErrorReport> {
    let arc = ArcExact::default();
    let exact: Option<&dyn ExactSolution> = if id == BenchmarkId::ArcFamily { Some(&arc) } else { None };
    let pairs: Vec<(usize, usize)> = ps.iter().flat_map(|&p| ns.iter().map(move |&n| (p, n))).collect();
    let run = |&(p, n): &(usize, usize)| run_single(id, p, n, exact, opts).map(|r| r.0);
    let rows: Vec<Result<RunRecord>> = if opts.workers > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(opts.workers)
            .build()
            .map_err(|e| BtError::Io(e.to_string()))?;
        pool.install(|| pairs.par_iter().map(run).collect())
    } else {
        pairs.iter().map(run).collect()
    };
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(ErrorReport { rows })
}
