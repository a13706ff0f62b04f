//! Level-set fields and the tangential differential calculus built on them.
//!
//! Geometry is always carried in 3-vectors. Two-dimensional fields keep the
//! z-component at zero, so the projector of a 2D field is `diag(1,1,0) - n n^T`
//! and the same algebra serves beams and shells.

use nalgebra::{Matrix3, Vector3};

use crate::error::{BtError, Result};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Below this gradient norm a point is treated as degenerate.
pub const GRAD_TOL: f64 = 1e-10;

/// Identity restricted to the first `dim` coordinates.
pub fn ident(dim: usize) -> Mat3 {
    let mut m = Mat3::zeros();
    for i in 0..dim {
        m[(i, i)] = 1.0;
    }
    m
}

/// A twice (and, for residuals, three times) differentiable scalar field.
///
/// `third(x)[k]` is the derivative of the Hessian along coordinate `k`.
pub trait LevelSetField: Send + Sync {
    fn dim(&self) -> usize;
    fn eval(&self, x: &Vec3) -> f64;
    fn gradient(&self, x: &Vec3) -> Vec3;
    fn hessian(&self, x: &Vec3) -> Mat3;

    /// Characteristic length used to size finite-difference steps.
    fn scale(&self) -> f64 {
        1.0
    }

    fn is_analytic(&self) -> bool {
        true
    }

    fn third(&self, x: &Vec3) -> [Mat3; 3] {
        let h = 1e-4 * self.scale();
        let mut out = [Mat3::zeros(); 3];
        for (k, o) in out.iter_mut().enumerate().take(self.dim()) {
            let mut e = Vec3::zeros();
            e[k] = h;
            *o = (self.hessian(&(x + e)) - self.hessian(&(x - e))) / (2.0 * h);
        }
        out
    }
}

/// `phi = |x - center| - offset`, restricted to the first `dim` coordinates.
#[derive(Debug, Clone)]
pub struct RadialField {
    pub dim: usize,
    pub center: Vec3,
    pub offset: f64,
}

impl RadialField {
    pub fn new(dim: usize, center: Vec3, offset: f64) -> Self {
        let mut center = center;
        if dim == 2 {
            center[2] = 0.0;
        }
        Self { dim, center, offset }
    }

    fn rel(&self, x: &Vec3) -> Vec3 {
        let mut r = x - self.center;
        if self.dim == 2 {
            r[2] = 0.0;
        }
        r
    }
}

impl LevelSetField for RadialField {
    fn dim(&self) -> usize {
        self.dim
    }
    fn eval(&self, x: &Vec3) -> f64 {
        self.rel(x).norm() - self.offset
    }
    fn gradient(&self, x: &Vec3) -> Vec3 {
        let r = self.rel(x);
        let n = r.norm();
        if n == 0.0 {
            Vec3::zeros()
        } else {
            r / n
        }
    }
    fn hessian(&self, x: &Vec3) -> Mat3 {
        let r = self.rel(x);
        let len = r.norm();
        let e = r / len;
        (ident(self.dim) - e * e.transpose()) / len
    }
    fn third(&self, x: &Vec3) -> [Mat3; 3] {
        let r = self.rel(x);
        let len = r.norm();
        let e = r / len;
        let id = ident(self.dim);
        let mut out = [Mat3::zeros(); 3];
        for (k, o) in out.iter_mut().enumerate().take(self.dim) {
            for i in 0..3 {
                for j in 0..3 {
                    o[(i, j)] = (-id[(i, j)] * e[k] - id[(i, k)] * e[j] - id[(j, k)] * e[i]
                        + 3.0 * e[i] * e[j] * e[k])
                        / (len * len);
                }
            }
        }
        out
    }
}

/// `phi = a . x + b`; flat level sets.
#[derive(Debug, Clone)]
pub struct PlanarField {
    pub dim: usize,
    pub a: Vec3,
    pub b: f64,
}

impl LevelSetField for PlanarField {
    fn dim(&self) -> usize {
        self.dim
    }
    fn eval(&self, x: &Vec3) -> f64 {
        self.a.dot(x) + self.b
    }
    fn gradient(&self, _x: &Vec3) -> Vec3 {
        self.a
    }
    fn hessian(&self, _x: &Vec3) -> Mat3 {
        Mat3::zeros()
    }
    fn third(&self, _x: &Vec3) -> [Mat3; 3] {
        [Mat3::zeros(); 3]
    }
}

/// `phi = z - amp * sin(x y / 4)`.
#[derive(Debug, Clone)]
pub struct SineField {
    pub amp: f64,
}

impl LevelSetField for SineField {
    fn dim(&self) -> usize {
        3
    }
    fn eval(&self, x: &Vec3) -> f64 {
        x[2] - self.amp * (x[0] * x[1] / 4.0).sin()
    }
    fn gradient(&self, x: &Vec3) -> Vec3 {
        let (px, py) = (x[0], x[1]);
        let c = (px * py / 4.0).cos();
        let a = self.amp / 2.0;
        Vec3::new(-a * py / 2.0 * c, -a * px / 2.0 * c, 1.0)
    }
    fn hessian(&self, x: &Vec3) -> Mat3 {
        let (px, py) = (x[0], x[1]);
        let s = px * py / 4.0;
        let a = self.amp / 2.0;
        let hxx = a * py * py / 8.0 * s.sin();
        let hyy = a * px * px / 8.0 * s.sin();
        let hxy = a * (-0.5 * s.cos() + px * py / 8.0 * s.sin());
        Mat3::new(hxx, hxy, 0.0, hxy, hyy, 0.0, 0.0, 0.0, 0.0)
    }
    fn third(&self, x: &Vec3) -> [Mat3; 3] {
        let (px, py) = (x[0], x[1]);
        let s = px * py / 4.0;
        let (sn, cs) = s.sin_cos();
        let a = self.amp / 2.0;
        let fxxx = a * py.powi(3) / 32.0 * cs;
        let fxxy = a * (py / 4.0 * sn + px * py * py / 32.0 * cs);
        let fxyy = a * (px / 4.0 * sn + px * px * py / 32.0 * cs);
        let fyyy = a * px.powi(3) / 32.0 * cs;
        [
            Mat3::new(fxxx, fxxy, 0.0, fxxy, fxyy, 0.0, 0.0, 0.0, 0.0),
            Mat3::new(fxxy, fxyy, 0.0, fxyy, fyyy, 0.0, 0.0, 0.0, 0.0),
            Mat3::zeros(),
        ]
    }
}

/// User-supplied field known only through point values; derivatives come
/// from central differences.
pub struct FdField<F: Fn(&Vec3) -> f64 + Send + Sync> {
    pub dim: usize,
    pub scale: f64,
    pub f: F,
}

impl<F: Fn(&Vec3) -> f64 + Send + Sync> LevelSetField for FdField<F> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn scale(&self) -> f64 {
        self.scale
    }
    fn is_analytic(&self) -> bool {
        false
    }
    fn eval(&self, x: &Vec3) -> f64 {
        (self.f)(x)
    }
    fn gradient(&self, x: &Vec3) -> Vec3 {
        let h = 1e-5 * self.scale;
        let mut g = Vec3::zeros();
        for k in 0..self.dim {
            let mut e = Vec3::zeros();
            e[k] = h;
            g[k] = ((self.f)(&(x + e)) - (self.f)(&(x - e))) / (2.0 * h);
        }
        g
    }
    fn hessian(&self, x: &Vec3) -> Mat3 {
        // A wider step keeps the second difference clear of cancellation.
        let h = 1e-4 * self.scale;
        let f0 = (self.f)(x);
        let mut m = Mat3::zeros();
        for i in 0..self.dim {
            let mut ei = Vec3::zeros();
            ei[i] = h;
            m[(i, i)] = ((self.f)(&(x + ei)) - 2.0 * f0 + (self.f)(&(x - ei))) / (h * h);
            for j in 0..i {
                let mut ej = Vec3::zeros();
                ej[j] = h;
                let v = ((self.f)(&(x + ei + ej)) - (self.f)(&(x + ei - ej))
                    - (self.f)(&(x - ei + ej))
                    + (self.f)(&(x - ei - ej)))
                    / (4.0 * h * h);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        m
    }
    fn third(&self, x: &Vec3) -> [Mat3; 3] {
        let h = 1e-3 * self.scale;
        let mut out = [Mat3::zeros(); 3];
        for (k, o) in out.iter_mut().enumerate().take(self.dim) {
            let mut e = Vec3::zeros();
            e[k] = h;
            *o = (self.hessian(&(x + e)) - self.hessian(&(x - e))) / (2.0 * h);
        }
        out
    }
}

/// Geometric quantities of the level set through a point.
#[derive(Debug, Clone, Copy)]
pub struct TdcFrame {
    pub dim: usize,
    pub n: Vec3,
    pub p: Mat3,
    /// Weingarten map `P Hess(phi) P / |grad phi|`.
    pub h: Mat3,
    pub kappa: f64,
    pub grad_norm: f64,
}

/// Frame plus its spatial derivatives, needed by the strong residuals.
#[derive(Debug, Clone, Copy)]
pub struct TdcJet {
    pub frame: TdcFrame,
    pub dn: [Vec3; 3],
    pub dp: [Mat3; 3],
    pub dh: [Mat3; 3],
}

fn degenerate(x: &Vec3, norm: f64) -> BtError {
    BtError::DegenerateGradient { norm, point: [x[0], x[1], x[2]] }
}

pub fn tdc_frame(field: &dyn LevelSetField, x: &Vec3) -> Result<TdcFrame> {
    let g = field.gradient(x);
    let s = g.norm();
    if s.is_nan() || s <= GRAD_TOL {
        return Err(degenerate(x, s));
    }
    let dim = field.dim();
    let n = g / s;
    let p = ident(dim) - n * n.transpose();
    let hess = field.hessian(x);
    let h = p * hess * p / s;
    Ok(TdcFrame { dim, n, p, h, kappa: h.trace(), grad_norm: s })
}

pub fn tdc_jet(field: &dyn LevelSetField, x: &Vec3) -> Result<TdcJet> {
    let frame = tdc_frame(field, x)?;
    let s = frame.grad_norm;
    let hess = field.hessian(x);
    let third = field.third(x);
    let (n, p) = (frame.n, frame.p);
    // Full gradient of the unit normal: d n_i / d x_k = (P Hess)_ik / s.
    let grad_n = p * hess / s;
    let mut dn = [Vec3::zeros(); 3];
    let mut dp = [Mat3::zeros(); 3];
    let mut dh = [Mat3::zeros(); 3];
    for k in 0..frame.dim {
        dn[k] = grad_n.column(k).into_owned();
        dp[k] = -(dn[k] * n.transpose() + n * dn[k].transpose());
        let ds = n.dot(&hess.column(k));
        dh[k] = (dp[k] * hess * p + p * third[k] * p + p * hess * dp[k]) / s - frame.h * (ds / s);
    }
    Ok(TdcJet { frame, dn, dp, dh })
}

pub fn surface_gradient(frame: &TdcFrame, grad_f: &Vec3) -> Vec3 {
    frame.p * grad_f
}

/// `grad v . P`
pub fn directional_surface_gradient(frame: &TdcFrame, jac_v: &Mat3) -> Mat3 {
    jac_v * frame.p
}

/// `P . grad v . P`
pub fn covariant_surface_gradient(frame: &TdcFrame, jac_v: &Mat3) -> Mat3 {
    frame.p * jac_v * frame.p
}

/// Vectors attached to a boundary or interface point.
#[derive(Debug, Clone, Copy)]
pub struct BoundaryFrame {
    pub m: Vec3,
    pub q: Vec3,
    /// Tangent in 3D; `(0,0,t_z)` in 2D.
    pub t: Vec3,
    pub t_z: f64,
    pub qm: f64,
}

pub fn boundary_frame(frame: &TdcFrame, m: &Vec3) -> Result<BoundaryFrame> {
    let n = frame.n;
    if frame.dim == 2 {
        let cross = n[0] * m[1] - n[1] * m[0];
        let t_z = if cross >= 0.0 { 1.0 } else { -1.0 };
        let q = Vec3::new(-n[1], n[0], 0.0) * t_z;
        Ok(BoundaryFrame { m: *m, q, t: Vec3::new(0.0, 0.0, t_z), t_z, qm: q.dot(m) })
    } else {
        let ts = n.cross(m);
        let len = ts.norm();
        if len <= GRAD_TOL {
            return Err(BtError::TangentialBoundary { point: [m[0], m[1], m[2]] });
        }
        let t = ts / len;
        let q = t.cross(&n);
        Ok(BoundaryFrame { m: *m, q, t, t_z: t[2], qm: q.dot(m) })
    }
}
