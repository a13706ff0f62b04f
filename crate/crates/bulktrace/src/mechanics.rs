//! Pointwise kinematics, constitutive laws, boundary quantities and strong
//! residuals of the Kirchhoff beam (2D) and Kirchhoff-Love shell (3D).
//!
//! All tensors are 3x3 with a zero third row and column in 2D. Jacobians use
//! the convention `jac_u[(i, j)] = d u_i / d x_j`, and `hess_u[i]` is the
//! Hessian of component `u_i`.

use crate::levelset::{BoundaryFrame, Mat3, TdcFrame, TdcJet, Vec3};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaterialBeam {
    pub e: f64,
    pub a: f64,
    pub i: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaterialShell {
    pub e: f64,
    pub nu: f64,
    pub t: f64,
}

impl MaterialShell {
    pub fn mu(&self) -> f64 {
        self.e / (2.0 * (1.0 + self.nu))
    }

    /// Plane-stress Lame parameter.
    pub fn lambda(&self) -> f64 {
        self.e * self.nu / (1.0 - self.nu * self.nu)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Material {
    Beam(MaterialBeam),
    Shell(MaterialShell),
}

impl Material {
    pub fn dim(&self) -> usize {
        match self {
            Material::Beam(_) => 2,
            Material::Shell(_) => 3,
        }
    }

    /// `(c1, c2)` with `n~ = c1 eps + c2 tr(eps) P`.
    pub fn membrane_coeffs(&self) -> (f64, f64) {
        match self {
            Material::Beam(b) => (b.e * b.a, 0.0),
            Material::Shell(s) => (2.0 * s.mu() * s.t, s.lambda() * s.t),
        }
    }

    /// `(a, b)` with `eps_bend(m) = a m - b (P:m) P`.
    pub fn bending_compliance(&self) -> (f64, f64) {
        match self {
            Material::Beam(b) => (1.0 / (b.e * b.i), 0.0),
            Material::Shell(s) => {
                let c = 12.0 / (s.e * s.t.powi(3));
                (c * (1.0 + s.nu), c * s.nu)
            }
        }
    }
}

/// Symmetric basis tensors in Voigt order: 2D (11, 22, 12), 3D (11, 22, 33,
/// 12, 13, 23). Off-diagonal entries are `e_i e_j^T + e_j e_i^T`.
pub fn voigt_basis(dim: usize) -> Vec<Mat3> {
    let pairs: &[(usize, usize)] = if dim == 2 {
        &[(0, 0), (1, 1), (0, 1)]
    } else {
        &[(0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2)]
    };
    pairs
        .iter()
        .map(|&(i, j)| {
            let mut e = Mat3::zeros();
            e[(i, j)] = 1.0;
            e[(j, i)] = 1.0;
            e
        })
        .collect()
}

pub fn voigt_to_mat(dim: usize, v: &[f64]) -> Mat3 {
    voigt_basis(dim).iter().zip(v).map(|(e, &c)| e * c).sum()
}

fn sym(a: &Mat3) -> Mat3 {
    (a + a.transpose()) * 0.5
}

pub fn membrane_strain(frame: &TdcFrame, jac_u: &Mat3) -> Mat3 {
    frame.p * sym(jac_u) * frame.p
}

/// Bending strain of a smooth displacement, `-sum_i cov_grad(grad_G u_i) n_i`.
///
/// Expanding the covariant gradient of `P grad u_i` leaves
/// `H (n . grad u . n) - P (sum_i n_i Hess u_i) P`, so no frame derivatives
/// are needed.
pub fn bending_strain_from_u(frame: &TdcFrame, jac_u: &Mat3, hess_u: &[Mat3; 3]) -> Mat3 {
    let n = frame.n;
    let z: Mat3 = (0..3).map(|i| hess_u[i] * n[i]).sum();
    frame.h * n.dot(&(jac_u * n)) - frame.p * sym(&z) * frame.p
}

pub fn moment_from_strain(material: &Material, frame: &TdcFrame, eps: &Mat3) -> Mat3 {
    match material {
        Material::Beam(b) => eps * (b.e * b.i),
        Material::Shell(s) => {
            let d = s.t.powi(3) / 12.0;
            (eps * (2.0 * s.mu()) + frame.p * (s.lambda() * frame.p.dot(eps))) * d
        }
    }
}

pub fn strain_from_moment(material: &Material, frame: &TdcFrame, m: &Mat3) -> Mat3 {
    let (a, b) = material.bending_compliance();
    m * a - frame.p * (b * frame.p.dot(m))
}

pub fn effective_normal_force(material: &Material, frame: &TdcFrame, eps_memb: &Mat3) -> Mat3 {
    let (c1, c2) = material.membrane_coeffs();
    eps_memb * c1 + frame.p * (c2 * frame.p.dot(eps_memb))
}

pub fn physical_normal_force(frame: &TdcFrame, n_tilde: &Mat3, m: &Mat3) -> Mat3 {
    n_tilde + frame.h * m
}

/// Row-wise surface divergence `(div T)_i = sum_jk dT_ij/dx_k P_kj`.
pub fn surface_div_tensor(p: &Mat3, dt: &[Mat3; 3]) -> Vec3 {
    let mut out = Vec3::zeros();
    for k in 0..3 {
        out += dt[k] * p.row(k).transpose();
    }
    out
}

/// Surface divergence of a vector field from its Jacobian.
pub fn surface_div_vector(p: &Mat3, jac_v: &Mat3) -> f64 {
    jac_v.dot(p)
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BoundaryQuantities {
    pub omega_t: f64,
    /// Zero for beams.
    pub omega_q: f64,
    /// Beams only.
    pub omega_z: f64,
    pub p_n: f64,
    pub p_q: f64,
    pub p_t: f64,
    pub m_t: f64,
    pub m_q: f64,
    pub m_z: f64,
    pub p: Vec3,
    /// Effective boundary force, shells only.
    pub p_eff: Vec3,
}

/// State of the fields at a boundary point.
#[derive(Debug, Clone, Copy)]
pub struct BoundaryState {
    pub jac_u: Mat3,
    pub m: Mat3,
    pub n_real: Mat3,
    pub div_m: Vec3,
    /// Surface gradient of `m_q` along the boundary, shells only.
    pub grad_mq: Vec3,
}

pub fn boundary_quantities(frame: &TdcFrame, bf: &BoundaryFrame, st: &BoundaryState) -> BoundaryQuantities {
    let n = frame.n;
    let q = bf.q;
    let grad_dir = st.jac_u * frame.p;
    let rot = grad_dir.transpose() * n;
    let omega_t = -rot.dot(&q);
    let m_t = q.dot(&(st.m * q));
    let p_n = (frame.p * st.div_m).dot(&q);
    let nq = st.n_real * q;
    let p_q = nq.dot(&q);
    let mut out = BoundaryQuantities { omega_t, m_t, p_n, p_q, ..Default::default() };
    if frame.dim == 2 {
        out.omega_z = omega_t * bf.t_z;
        out.m_z = m_t * bf.t_z;
        out.p = n * p_n + q * p_q;
    } else {
        let t = bf.t;
        out.omega_q = -rot.dot(&t);
        out.m_q = t.dot(&(st.m * q));
        out.p_t = nq.dot(&t);
        out.p = n * p_n + q * out.p_q + t * out.p_t;
        let ht = frame.h * t;
        let pn = p_n + st.grad_mq.dot(&t);
        let pq = out.p_q + ht.dot(&q) * out.m_q;
        let pt = out.p_t + ht.dot(&t) * out.m_q;
        out.p_eff = n * pn + q * pq + t * pt;
    }
    out
}

/// Discrete or exact fields with derivatives up to second order at a point.
#[derive(Debug, Clone, Copy)]
pub struct FieldJet {
    pub jac_u: Mat3,
    pub hess_u: [Mat3; 3],
    pub m: Mat3,
    pub dm: [Mat3; 3],
    /// `ddm[k][l] = d^2 m / dx_k dx_l`.
    pub ddm: [[Mat3; 3]; 3],
}

impl FieldJet {
    pub fn zero() -> Self {
        FieldJet {
            jac_u: Mat3::zeros(),
            hess_u: [Mat3::zeros(); 3],
            m: Mat3::zeros(),
            dm: [Mat3::zeros(); 3],
            ddm: [[Mat3::zeros(); 3]; 3],
        }
    }
}

/// Strong-form residuals `(r1, r2)`:
/// `r1 = -eps_bend(m) + eps_bend(u)` and
/// `r2 = div(n~ + H m) + n div(P div m) + H div m + f`.
pub fn strong_residuals(material: &Material, jet: &TdcJet, fj: &FieldJet, f: &Vec3) -> (Mat3, Vec3) {
    let fr = &jet.frame;
    let (p, h, n) = (fr.p, fr.h, fr.n);
    let r1 = -strain_from_moment(material, fr, &fj.m) + bending_strain_from_u(fr, &fj.jac_u, &fj.hess_u);

    let s = sym(&fj.jac_u);
    let eps = p * s * p;
    let (c1, c2) = material.membrane_coeffs();
    let tr = p.dot(&eps);
    let mut d_nreal = [Mat3::zeros(); 3];
    for k in 0..3 {
        let mut djac = Mat3::zeros();
        for i in 0..3 {
            djac.set_row(i, &fj.hess_u[i].column(k).transpose());
        }
        let ds = sym(&djac);
        let dp = jet.dp[k];
        let deps = dp * s * p + p * ds * p + p * s * dp;
        let dtr = dp.dot(&eps) + p.dot(&deps);
        let dnt = deps * c1 + (p * dtr + dp * tr) * c2;
        d_nreal[k] = dnt + jet.dh[k] * fj.m + h * fj.dm[k];
    }
    let div_nreal = surface_div_tensor(&p, &d_nreal);
    let div_m = surface_div_tensor(&p, &fj.dm);

    // d/dx_l of (div m), then the Jacobian of v = P div m.
    let mut jac_v = Mat3::zeros();
    for l in 0..3 {
        let mut d_divm = Vec3::zeros();
        for k in 0..3 {
            d_divm += fj.ddm[l][k] * p.row(k).transpose() + fj.dm[k] * jet.dp[l].row(k).transpose();
        }
        let dv = jet.dp[l] * div_m + p * d_divm;
        jac_v.set_column(l, &dv);
    }
    let div_v = surface_div_vector(&p, &jac_v);
    let r2 = div_nreal + n * div_v + h * div_m + f;
    (r1, r2)
}

/// Largest-magnitude eigenvalue (with sign) of a symmetric tensor.
pub fn principal_value(a: &Mat3) -> f64 {
    let ev = sym(a).symmetric_eigenvalues();
    ev.iter().copied().fold(0.0, |acc: f64, v| if v.abs() > acc.abs() { v } else { acc })
}

/// Stored energy density `1/2 (eps_memb : n~ + eps_bend(m) : m)`.
pub fn energy_density(material: &Material, frame: &TdcFrame, jac_u: &Mat3, m: &Mat3) -> f64 {
    let eps = membrane_strain(frame, jac_u);
    let nt = effective_normal_force(material, frame, &eps);
    0.5 * (eps.dot(&nt) + strain_from_moment(material, frame, m).dot(m))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levelset::{boundary_frame, tdc_frame, tdc_jet, PlanarField, RadialField};
    use proptest::prelude::*;

    fn flat2() -> TdcFrame {
        let f = PlanarField { dim: 2, a: Vec3::new(0.0, 1.0, 0.0), b: 0.0 };
        tdc_frame(&f, &Vec3::new(0.3, 0.1, 0.0)).unwrap()
    }

    fn shell() -> Material {
        Material::Shell(MaterialShell { e: 2.1e7, nu: 0.3, t: 0.1 })
    }

    fn beam() -> Material {
        Material::Beam(MaterialBeam { e: 2.1e8, a: 0.1, i: 1e-3 / 12.0 })
    }

    fn random_frame(dim: usize, c: [f64; 3], x: [f64; 3]) -> TdcFrame {
        let f = RadialField::new(dim, Vec3::new(c[0], c[1], if dim == 3 { c[2] } else { 0.0 }), 0.0);
        let p = Vec3::new(x[0], x[1], if dim == 3 { x[2] } else { 0.0 });
        tdc_frame(&f, &p).unwrap()
    }

    fn mat_from(v: &[f64], dim: usize) -> Mat3 {
        let mut a = Mat3::zeros();
        for i in 0..dim {
            for j in 0..dim {
                a[(i, j)] = v[i * 3 + j];
            }
        }
        a
    }

    #[test]
    fn membrane_strain_examples() {
        let fr = flat2();
        assert_eq!(membrane_strain(&fr, &Mat3::zeros()), Mat3::zeros());
        let mut j = Mat3::zeros();
        j[(0, 0)] = 1.0;
        let e = membrane_strain(&fr, &j);
        assert!((e[(0, 0)] - 1.0).abs() < 1e-15);
        assert!(e.iter().enumerate().all(|(k, v)| k == 0 || v.abs() < 1e-15));
    }

    #[test]
    fn bending_strain_flat_beam_parabola() {
        // u = (0, -x^2/2): Hess u_y has -1 in xx.
        let fr = flat2();
        let mut hess = [Mat3::zeros(); 3];
        hess[1][(0, 0)] = -1.0;
        let mut jac = Mat3::zeros();
        jac[(1, 0)] = -0.3;
        let e = bending_strain_from_u(&fr, &jac, &hess);
        assert!((e[(0, 0)] - 1.0).abs() < 1e-15);
        assert!(e[(1, 1)].abs() < 1e-15 && e[(0, 1)].abs() < 1e-15);
        assert_eq!(bending_strain_from_u(&fr, &jac, &[Mat3::zeros(); 3]), Mat3::zeros());
    }

    #[test]
    fn bending_strain_of_normal_translation_on_circle() {
        // u = c n on a circle of radius r. Since H n = 0, the definition
        // reduces to eps_bend = c H^2 = c/r^2 tau tau.
        let c = 0.7;
        let r: f64 = 1.3;
        let x = Vec3::new(r * 0.6, r * 0.8, 0.0);
        let fr = random_frame(2, [0.0; 3], [x[0], x[1], 0.0]);
        // u_i = c x_i / |x|; grad and Hessian in closed form.
        let mut jac = Mat3::zeros();
        let mut hess = [Mat3::zeros(); 3];
        for i in 0..2 {
            for j in 0..2 {
                let dij = if i == j { 1.0 } else { 0.0 };
                jac[(i, j)] = c * (dij / r - x[i] * x[j] / r.powi(3));
                for k in 0..2 {
                    let djk = if j == k { 1.0 } else { 0.0 };
                    let dik = if i == k { 1.0 } else { 0.0 };
                    hess[i][(j, k)] = c
                        * (-(dij * x[k] + dik * x[j] + djk * x[i]) / r.powi(3)
                            + 3.0 * x[i] * x[j] * x[k] / r.powi(5));
                }
            }
        }
        let e = bending_strain_from_u(&fr, &jac, &hess);
        let tau = Vec3::new(-0.8, 0.6, 0.0);
        let expect = tau * tau.transpose() * (c / (r * r));
        assert!((e - expect).norm() < 1e-12, "{e} vs {expect}");
    }

    #[test]
    fn constitutive_examples() {
        let fr = flat2();
        assert_eq!(moment_from_strain(&beam(), &fr, &Mat3::zeros()), Mat3::zeros());
        let mut e = Mat3::zeros();
        e[(0, 0)] = 2.0;
        let m = moment_from_strain(&beam(), &fr, &e);
        assert!((m[(0, 0)] - 2.0 * 2.1e8 * 1e-3 / 12.0).abs() < 1e-6);
        let s0 = Material::Shell(MaterialShell { e: 3.0, nu: 0.0, t: 0.5 });
        let f3 = PlanarField { dim: 3, a: Vec3::new(0.0, 0.0, 1.0), b: 0.0 };
        let fr3 = tdc_frame(&f3, &Vec3::zeros()).unwrap();
        let mut e3 = Mat3::zeros();
        e3[(0, 1)] = 0.4;
        e3[(1, 0)] = 0.4;
        e3[(0, 0)] = -1.0;
        let m3 = moment_from_strain(&s0, &fr3, &e3);
        assert!((m3 - e3 * (3.0 * 0.125 / 12.0)).norm() < 1e-15);
    }

    #[test]
    fn normal_force_examples() {
        let fr = flat2();
        let mut e = Mat3::zeros();
        e[(0, 0)] = 1.0;
        let nt = effective_normal_force(&beam(), &fr, &e);
        assert!((nt[(0, 0)] - 2.1e7).abs() < 1e-6);
        let s = MaterialShell { e: 2.1e7, nu: 0.3, t: 0.1 };
        let f3 = PlanarField { dim: 3, a: Vec3::new(0.0, 0.0, 1.0), b: 0.0 };
        let fr3 = tdc_frame(&f3, &Vec3::zeros()).unwrap();
        let nt = effective_normal_force(&Material::Shell(s), &fr3, &fr3.p);
        let expect = fr3.p * (s.t * (2.0 * s.mu() + 2.0 * s.lambda()));
        assert!((nt - expect).norm() < 1e-6 * expect.norm());
        assert_eq!(physical_normal_force(&fr, &nt, &Mat3::zeros()), nt);
    }

    #[test]
    fn physical_normal_force_on_circle() {
        let r = 2.5;
        let fr = random_frame(2, [0.0; 3], [0.0, r, 0.0]);
        let d = physical_normal_force(&fr, &Mat3::zeros(), &fr.p);
        assert!((d - fr.p / r).norm() < 1e-14);
    }

    #[test]
    fn boundary_quantity_examples() {
        let fr = flat2();
        let bf = boundary_frame(&fr, &Vec3::new(1.0, 0.0, 0.0)).unwrap();
        let q = bf.q;
        let st = BoundaryState {
            jac_u: Mat3::zeros(),
            m: q * q.transpose(),
            n_real: Mat3::zeros(),
            div_m: Vec3::zeros(),
            grad_mq: Vec3::zeros(),
        };
        let b = boundary_quantities(&fr, &bf, &st);
        assert_eq!(b.omega_t, 0.0);
        assert!((b.m_t - 1.0).abs() < 1e-15 && b.m_q == 0.0);
        assert!((b.m_z - bf.t_z).abs() < 1e-15);

        // u = (0, w(x)) with w' = 0.25: the rotation about z is +w'.
        let mut jac = Mat3::zeros();
        jac[(1, 0)] = 0.25;
        for m in [Vec3::new(1.0, 0.0, 0.0), Vec3::new(-1.0, 0.0, 0.0)] {
            let bf = boundary_frame(&fr, &m).unwrap();
            let b = boundary_quantities(&fr, &bf, &BoundaryState { jac_u: jac, ..st });
            assert!((b.omega_z - 0.25).abs() < 1e-15, "{}", b.omega_z);
        }
    }

    #[test]
    fn shell_boundary_quantities() {
        let f3 = PlanarField { dim: 3, a: Vec3::new(0.0, 0.0, 1.0), b: 0.0 };
        let fr = tdc_frame(&f3, &Vec3::zeros()).unwrap();
        let bf = boundary_frame(&fr, &Vec3::new(1.0, 0.0, 0.0)).unwrap();
        let (q, t) = (bf.q, bf.t);
        let st = BoundaryState {
            jac_u: Mat3::zeros(),
            m: q * t.transpose() + t * q.transpose(),
            n_real: Mat3::zeros(),
            div_m: Vec3::zeros(),
            grad_mq: t * 2.0,
        };
        let b = boundary_quantities(&fr, &bf, &st);
        assert!((b.m_q - 1.0).abs() < 1e-15 && b.m_t.abs() < 1e-15);
        assert!((b.p_eff - fr.n * 2.0).norm() < 1e-15);
    }

    #[test]
    fn zero_fields_have_zero_residuals() {
        let f = RadialField::new(2, Vec3::zeros(), 0.0);
        let jet = tdc_jet(&f, &Vec3::new(1.0, 2.0, 0.0)).unwrap();
        let (r1, r2) = strong_residuals(&beam(), &jet, &FieldJet::zero(), &Vec3::zeros());
        assert_eq!(r1.norm(), 0.0);
        assert_eq!(r2.norm(), 0.0);
    }

    fn dsin(k: usize, t: f64) -> f64 {
        match k % 4 {
            0 => t.sin(),
            1 => t.cos(),
            2 => -t.sin(),
            _ => -t.cos(),
        }
    }

    #[test]
    fn manufactured_plate_residuals() {
        // Flat family phi = z, u = (0, 0, w), w = sin(pi x) sin(pi y). The
        // plate equation D lap^2 w = f_z gives the load that makes r2 vanish.
        use std::f64::consts::PI;
        let s = MaterialShell { e: 2.1e7, nu: 0.3, t: 0.1 };
        let mat = Material::Shell(s);
        let f3 = PlanarField { dim: 3, a: Vec3::new(0.0, 0.0, 1.0), b: 0.0 };
        let x = Vec3::new(0.23, 0.61, 0.4);
        let jet = tdc_jet(&f3, &x).unwrap();
        let w = |i: usize, j: usize| PI.powi((i + j) as i32) * dsin(i, PI * x[0]) * dsin(j, PI * x[1]);
        let idx = |a: usize| if a == 0 { (1usize, 0usize) } else { (0, 1) };
        let mut fj = FieldJet::zero();
        fj.jac_u[(2, 0)] = w(1, 0);
        fj.jac_u[(2, 1)] = w(0, 1);
        for a in 0..2 {
            for b in 0..2 {
                let (i1, j1) = idx(a);
                let (i2, j2) = idx(b);
                fj.hess_u[2][(a, b)] = w(i1 + i2, j1 + j2);
            }
        }
        // m_ab = -(t^3/12) [2 mu w_ab + lambda lap(w) delta_ab], differentiated.
        let d = s.t.powi(3) / 12.0;
        let mfield = |extra: &[usize]| {
            let (mut ei, mut ej) = (0, 0);
            for &k in extra {
                let (a, b) = idx(k);
                ei += a;
                ej += b;
            }
            let mut m = Mat3::zeros();
            let lap = w(ei + 2, ej) + w(ei, ej + 2);
            for a in 0..2 {
                for b in 0..2 {
                    let (i1, j1) = idx(a);
                    let (i2, j2) = idx(b);
                    let delta = if a == b { 1.0 } else { 0.0 };
                    m[(a, b)] = -d * (2.0 * s.mu() * w(ei + i1 + i2, ej + j1 + j2) + s.lambda() * lap * delta);
                }
            }
            m
        };
        fj.m = mfield(&[]);
        for k in 0..2 {
            fj.dm[k] = mfield(&[k]);
            for l in 0..2 {
                fj.ddm[k][l] = mfield(&[k, l]);
            }
        }
        let dplate = s.e * s.t.powi(3) / (12.0 * (1.0 - s.nu * s.nu));
        let fz = dplate * 4.0 * PI.powi(4) * w(0, 0);
        let (r1, r2) = strong_residuals(&mat, &jet, &fj, &Vec3::new(0.0, 0.0, fz));
        assert!(r1.norm() < 1e-12 * fj.hess_u[2].norm(), "r1 = {r1}");
        assert!(r2.norm() < 1e-9 * fz.abs(), "r2 = {r2}");
    }

    #[test]
    fn principal_value_picks_largest_magnitude() {
        let a = Mat3::new(1.0, 0.0, 0.0, 0.0, -3.0, 0.0, 0.0, 0.0, 0.0);
        assert_eq!(principal_value(&a), -3.0);
        let fr = random_frame(3, [0.0; 3], [1.0, 2.0, 0.5]);
        assert!((principal_value(&(fr.p * 2.5)) - 2.5).abs() < 1e-13);
    }

    #[test]
    fn voigt_roundtrip() {
        let m = voigt_to_mat(3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(m, Mat3::new(1.0, 4.0, 5.0, 4.0, 2.0, 6.0, 5.0, 6.0, 3.0));
        let m2 = voigt_to_mat(2, &[1.0, 2.0, 3.0]);
        assert_eq!(m2, Mat3::new(1.0, 3.0, 0.0, 3.0, 2.0, 0.0, 0.0, 0.0, 0.0));
    }

    proptest! {
        #[test]
        fn kernels_are_in_plane(
            dim in 2usize..=3,
            c in prop::array::uniform3(-1.0f64..1.0),
            x in prop::array::uniform3(1.5f64..3.0),
            ju in prop::collection::vec(-1.0f64..1.0, 9),
            hu in prop::collection::vec(-1.0f64..1.0, 27),
        ) {
            let fr = random_frame(dim, c, x);
            let jac = mat_from(&ju, dim);
            let mut hess = [Mat3::zeros(); 3];
            for i in 0..dim {
                let h = mat_from(&hu[i * 9..i * 9 + 9], dim);
                hess[i] = (h + h.transpose()) * 0.5;
            }
            let mat = if dim == 2 { beam() } else { shell() };
            let em = membrane_strain(&fr, &jac);
            let eb = bending_strain_from_u(&fr, &jac, &hess);
            let nt = effective_normal_force(&mat, &fr, &em);
            let mm = moment_from_strain(&mat, &fr, &eb);
            for t in [em, eb, nt, mm] {
                prop_assert!((t * fr.n).norm() <= 1e-10 * t.norm().max(1e-300));
                prop_assert!((t - t.transpose()).norm() <= 1e-12 * t.norm().max(1e-300));
            }
            // Oracle: membrane strain is P sym(grad u) P.
            let alt = (fr.p * jac * fr.p + fr.p * jac.transpose() * fr.p) * 0.5;
            prop_assert!((em - alt).norm() <= 1e-12 * alt.norm().max(1.0));
        }

        #[test]
        fn material_roundtrip(
            dim in 2usize..=3,
            c in prop::array::uniform3(-1.0f64..1.0),
            x in prop::array::uniform3(1.5f64..3.0),
            a in prop::collection::vec(-1.0f64..1.0, 9),
            nu in 0.0f64..0.49,
        ) {
            let fr = random_frame(dim, c, x);
            let raw = mat_from(&a, dim);
            let eps = fr.p * (raw + raw.transpose()) * fr.p;
            let mat = if dim == 2 { beam() } else { Material::Shell(MaterialShell { e: 1.0e4, nu, t: 0.3 }) };
            let m = moment_from_strain(&mat, &fr, &eps);
            let back = strain_from_moment(&mat, &fr, &m);
            prop_assert!((back - eps).norm() <= 1e-12 * eps.norm().max(1e-300));
            let mt = moment_from_strain(&mat, &fr, &eps.transpose());
            // eps is symmetric only up to rounding on the scale of `raw`.
            let tol = 1e-14 * (1.0 + raw.norm() / eps.norm().max(1e-300));
            prop_assert!((mt - m).norm() <= tol * m.norm().max(1e-300));
        }
    }

    #[test]
    fn shell_with_zero_poisson_matches_beam_per_unit_width() {
        // Flat strip, bending about one axis: shell with thickness h and
        // nu = 0 against a beam with b = 1, A = h, I = h^3/12.
        let h = 0.02;
        let e = 2.1e8;
        let sh = Material::Shell(MaterialShell { e, nu: 0.0, t: h });
        let bm = Material::Beam(MaterialBeam { e, a: h, i: h.powi(3) / 12.0 });
        let f3 = PlanarField { dim: 3, a: Vec3::new(0.0, 0.0, 1.0), b: 0.0 };
        let fr3 = tdc_frame(&f3, &Vec3::zeros()).unwrap();
        let fr2 = flat2();
        let mut eps3 = Mat3::zeros();
        eps3[(0, 0)] = 0.37;
        let mut eps2 = Mat3::zeros();
        eps2[(0, 0)] = 0.37;
        let m3 = moment_from_strain(&sh, &fr3, &eps3)[(0, 0)];
        let m2 = moment_from_strain(&bm, &fr2, &eps2)[(0, 0)];
        assert!((m3 - m2).abs() < 1e-12 * m2.abs());
        let n3 = effective_normal_force(&sh, &fr3, &eps3)[(0, 0)];
        let n2 = effective_normal_force(&bm, &fr2, &eps2)[(0, 0)];
        assert!((n3 - n2).abs() < 1e-12 * n2.abs());
    }
}
