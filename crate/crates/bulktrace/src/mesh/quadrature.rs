use std::f64::consts::PI;

/// Tensor-product rule on the reference cube `[-1,1]^dim`.
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    pub dim: usize,
    pub degree: usize,
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Gauss-Legendre points and weights on `[-1,1]`, ascending.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n {
        let mut z = -(PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_with_derivative(n, z);
            let dz = p / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, dp) = legendre_with_derivative(n, z);
        x[i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    (x, w)
}

/// Gauss-Lobatto-Legendre nodes on `[-1,1]` (p+1 points, endpoints included).
pub fn gauss_lobatto(p: usize) -> Vec<f64> {
    assert!(p >= 1);
    let n = p + 1;
    let mut x = vec![0.0; n];
    x[0] = -1.0;
    x[p] = 1.0;
    // Interior nodes are the roots of P'_p; Newton on P'_p with its derivative
    // from the Legendre ODE.
    for i in 1..p {
        let mut z = -(PI * i as f64 / p as f64).cos();
        for _ in 0..100 {
            let (pp, dp) = legendre_with_derivative(p, z);
            let d2p = (2.0 * z * dp - (p * (p + 1)) as f64 * pp) / (1.0 - z * z);
            let dz = dp / d2p;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = z;
    }
    if n % 2 == 1 {
        x[p / 2] = 0.0;
    }
    x
}

/// Rule exact for tensor polynomials of the given degree per direction.
pub fn gauss_rule(dim: usize, degree: usize) -> QuadratureRule {
    let n = degree / 2 + 1;
    tensor_rule(dim, n, degree)
}

/// Tensor rule with `n` points per direction.
pub fn tensor_rule(dim: usize, n: usize, degree: usize) -> QuadratureRule {
    let (x, w) = gauss_legendre(n);
    let mut points = Vec::new();
    let mut weights = Vec::new();
    let nk = if dim == 3 { n } else { 1 };
    let nj = if dim >= 2 { n } else { 1 };
    for k in 0..nk {
        for j in 0..nj {
            for i in 0..n {
                let mut pt = [0.0; 3];
                let mut wt = w[i];
                pt[0] = x[i];
                if dim >= 2 {
                    pt[1] = x[j];
                    wt *= w[j];
                }
                if dim == 3 {
                    pt[2] = x[k];
                    wt *= w[k];
                }
                points.push(pt);
                weights.push(wt);
            }
        }
    }
    QuadratureRule { dim, degree, points, weights }
}
