//! Block maps of the benchmark domains.
//!
//! Every map sends `[0,1]^dim` onto the exact domain, so mesh nodes on the
//! boundary lie on the analytic boundary. The last parameter is the level
//! direction. Its iso-lines are tilted against the level sets on purpose: an
//! interior facet lying inside a level set has `q . m = 0`, which leaves its
//! hybrid rotation DOFs without stiffness.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};
use std::str::FromStr;

use super::{build_block_mesh, Block, BulkMesh, FacetTag};
use crate::error::{BtError, Result};
use crate::levelset::Vec3;

/// Tilt amplitude of level-direction grid lines, `|A| < 1` keeps the map monotone.
pub const TILT: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BenchmarkId {
    ArcFamily,
    CircularBeams,
    SineShells,
    Cupolas,
}

impl BenchmarkId {
    pub fn name(self) -> &'static str {
        match self {
            BenchmarkId::ArcFamily => "arc_family",
            BenchmarkId::CircularBeams => "circular_beams",
            BenchmarkId::SineShells => "sine_shells",
            BenchmarkId::Cupolas => "cupolas",
        }
    }

    pub fn dim(self) -> usize {
        match self {
            BenchmarkId::ArcFamily | BenchmarkId::CircularBeams => 2,
            _ => 3,
        }
    }

    pub fn all() -> [BenchmarkId; 4] {
        [BenchmarkId::ArcFamily, BenchmarkId::CircularBeams, BenchmarkId::SineShells, BenchmarkId::Cupolas]
    }
}

impl FromStr for BenchmarkId {
    type Err = BtError;
    fn from_str(s: &str) -> Result<Self> {
        BenchmarkId::all()
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| BtError::UnsupportedCase(s.to_string()))
    }
}

pub fn max_order(dim: usize) -> usize {
    if dim == 2 {
        8
    } else {
        6
    }
}

pub fn check_order(dim: usize, p: usize) -> Result<()> {
    if p < 1 || p > max_order(dim) {
        Err(BtError::UnsupportedOrder { p, dim })
    } else {
        Ok(())
    }
}

/// Level coordinate with tilted iso-lines; `w` in `[-1,1]` varies across the
/// level direction.
fn tilt(t: f64, w: f64) -> f64 {
    t + TILT * t * (1.0 - t) * w
}

pub const ARC_THETA: f64 = 7.0 * PI / 18.0;

fn arc_family_block(div: usize) -> Block {
    let a0 = FRAC_PI_2 - ARC_THETA / 2.0;
    Block {
        map: Box::new(move |s: &[f64; 3]| {
            let lam = tilt(s[1], 2.0 * s[0] - 1.0);
            let r = 2.0 + 2.0 * lam;
            let a = a0 + ARC_THETA * s[0];
            Vec3::new(r * a.cos(), r * a.sin(), 0.0)
        }),
        divisions: [div, div, 1],
        face_tags: [
            Some(FacetTag::SupersetBoundary(1)),
            Some(FacetTag::SupersetBoundary(0)),
            Some(FacetTag::LevelLimitMin),
            Some(FacetTag::LevelLimitMax),
            None,
            None,
        ],
    }
}

pub const CIRC_RC: f64 = 0.3;
pub const CIRC_DISK: f64 = 0.28;

/// Centre of the circular level sets, `-(x_c, y_c)`.
pub fn circular_center() -> Vec3 {
    let ang = 11.0 * PI / 9.0;
    let xc = -CIRC_RC * ang.sin();
    let yc = CIRC_RC * ang.cos();
    Vec3::new(-xc, -yc, 0.0)
}

fn circular_block(div: usize) -> Block {
    let c = circular_center();
    let dir = c[1].atan2(c[0]) + PI;
    let cc = c.norm_squared();
    let d2 = CIRC_DISK * CIRC_DISK;
    Block {
        map: Box::new(move |s: &[f64; 3]| {
            let lam = tilt(s[1], 2.0 * s[0] - 1.0);
            let rho = 0.2 + 0.3 * lam;
            let half = ((cc + rho * rho - d2) / (2.0 * c.norm() * rho)).clamp(-1.0, 1.0).acos();
            let b = dir + (2.0 * s[0] - 1.0) * half;
            Vec3::new(c[0] + rho * b.cos(), c[1] + rho * b.sin(), 0.0)
        }),
        divisions: [2 * div, div, 1],
        face_tags: [
            Some(FacetTag::SupersetBoundary(0)),
            Some(FacetTag::SupersetBoundary(0)),
            Some(FacetTag::LevelLimitMin),
            Some(FacetTag::LevelLimitMax),
            None,
            None,
        ],
    }
}

/// Point of a five-block O-grid over a star-shaped planar region whose
/// boundary radius at polar angle `alpha` is `radius(alpha)`. Block 0 is the
/// central square of half-size `a`; blocks 1..=4 are ring sectors.
pub fn ogrid_point(block: usize, xi: f64, eta: f64, a: f64, radius: &dyn Fn(f64) -> f64) -> (f64, f64) {
    if block == 0 {
        return (a * (2.0 * xi - 1.0), a * (2.0 * eta - 1.0));
    }
    let rot = (block - 1) as f64 * FRAC_PI_2;
    let inner = (a, a * (2.0 * xi - 1.0));
    let al = (2.0 * xi - 1.0) * FRAC_PI_4;
    let r = radius(al + rot);
    let outer = (r * al.cos(), r * al.sin());
    let lx = (1.0 - eta) * inner.0 + eta * outer.0;
    let ly = (1.0 - eta) * inner.1 + eta * outer.1;
    let (sr, cr) = rot.sin_cos();
    (cr * lx - sr * ly, sr * lx + cr * ly)
}

fn ogrid_tags(block: usize) -> [Option<FacetTag>; 6] {
    let outer = if block == 0 { None } else { Some(FacetTag::SupersetBoundary(0)) };
    [None, None, None, outer, Some(FacetTag::LevelLimitMin), Some(FacetTag::LevelLimitMax)]
}

/// Smooth scalar on the unit O-grid used to tilt the level direction.
fn ogrid_tilt_coordinate(block: usize, xi: f64, eta: f64) -> f64 {
    ogrid_point(block, xi, eta, 0.4, &|_| 1.0).0
}

/// Radius of the planar section of `|x| = 1` through the level set
/// `z = 2 sin(xy/4) + c` at polar angle `alpha`.
pub fn sine_section_radius(alpha: f64, c: f64) -> f64 {
    let k = alpha.sin() * alpha.cos() / 4.0;
    let mut r: f64 = (1.0 - c * c).max(0.1).sqrt();
    for _ in 0..60 {
        let arg = r * r * k;
        let z = 2.0 * arg.sin() + c;
        let f = r * r + z * z - 1.0;
        let df = 2.0 * r + 2.0 * z * 2.0 * arg.cos() * 2.0 * r * k;
        let dr = f / df;
        r -= dr;
        if dr.abs() < 1e-15 {
            break;
        }
    }
    r
}

fn sine_blocks(div: usize) -> Vec<Block> {
    (0..5)
        .map(|b| Block {
            map: Box::new(move |s: &[f64; 3]| {
                let w = ogrid_tilt_coordinate(b, s[0], s[1]);
                let c = -0.2 + 0.6 * tilt(s[2], w);
                let (x, y) = ogrid_point(b, s[0], s[1], 0.35, &|al| sine_section_radius(al, c));
                Vec3::new(x, y, 2.0 * (x * y / 4.0).sin() + c)
            }),
            divisions: [div, div, div],
            face_tags: ogrid_tags(b),
        })
        .collect()
}

/// Restriction field of the cupola case, `z - sin(x/3) - cos(y/6) + 1`.
pub fn cupola_psi(x: &Vec3) -> f64 {
    x[2] - (x[0] / 3.0).sin() - (x[1] / 6.0).cos() + 1.0
}

fn sphere_point(r: f64, theta: f64, alpha: f64) -> Vec3 {
    Vec3::new(r * theta.sin() * alpha.cos(), r * theta.sin() * alpha.sin(), -r * theta.cos())
}

/// Polar angle (from the south pole) of the cupola rim on the sphere of
/// radius `r` at azimuth `alpha`.
pub fn cupola_rim(alpha: f64, r: f64) -> f64 {
    let f = |th: f64| cupola_psi(&sphere_point(r, th, alpha));
    let (mut lo, mut hi) = (0.0, PI);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut th = 0.5 * (lo + hi);
    for _ in 0..20 {
        let h = 1e-7;
        let d = (f(th + h) - f(th - h)) / (2.0 * h);
        let step = f(th) / d;
        th -= step;
        if step.abs() < 1e-15 {
            break;
        }
    }
    th
}

fn cupola_blocks(div: usize) -> Vec<Block> {
    (0..5)
        .map(|b| Block {
            map: Box::new(move |s: &[f64; 3]| {
                let w = ogrid_tilt_coordinate(b, s[0], s[1]);
                let r = 8.0 + 2.0 * tilt(s[2], w);
                let (u, v) = ogrid_point(b, s[0], s[1], 0.55, &|al| cupola_rim(al, r));
                let th = (u * u + v * v).sqrt();
                let sinc = if th < 1e-8 { 1.0 - th * th / 6.0 } else { th.sin() / th };
                Vec3::new(r * sinc * u, r * sinc * v, -r * th.cos())
            }),
            divisions: [div, div, div],
            face_tags: ogrid_tags(b),
        })
        .collect()
}

/// Mesh of a benchmark domain at refinement `n` (element count grows as 2^(dim n)).
pub fn build_benchmark_mesh(case: BenchmarkId, n: usize, p: usize) -> Result<BulkMesh> {
    let dim = case.dim();
    check_order(dim, p)?;
    let div = 1usize << n;
    match case {
        BenchmarkId::ArcFamily => build_block_mesh(2, p, vec![arc_family_block(div)], 4.0),
        BenchmarkId::CircularBeams => build_block_mesh(2, p, vec![circular_block(div)], 0.5),
        BenchmarkId::SineShells => build_block_mesh(3, p, sine_blocks(div), 1.0),
        BenchmarkId::Cupolas => build_block_mesh(3, p, cupola_blocks(div), 10.0),
    }
}

/// Rectangle `[0,lx] x [0,ly]`. Faces: 0 at x=0, 1 at x=lx, 2 at y=0, 3 at y=ly.
/// With `tilt_amp != 0` the interior horizontal grid lines are tilted.
pub fn rectangle_mesh(lx: f64, ly: f64, div: [usize; 2], p: usize, tags: [FacetTag; 4], tilt_amp: f64) -> BulkMesh {
    let block = Block {
        map: Box::new(move |s: &[f64; 3]| {
            let t = s[1] + tilt_amp * s[1] * (1.0 - s[1]) * (2.0 * s[0] - 1.0);
            Vec3::new(lx * s[0], ly * t, 0.0)
        }),
        divisions: [div[0], div[1], 1],
        face_tags: [Some(tags[0]), Some(tags[1]), Some(tags[2]), Some(tags[3]), None, None],
    };
    build_block_mesh(2, p, vec![block], lx.max(ly)).expect("rectangle mesh")
}

/// Unit square with `2^n x 2^n` elements and region tags 0..=3 on its sides.
pub fn unit_square_mesh(n: usize, p: usize) -> BulkMesh {
    let d = 1 << n;
    rectangle_mesh(
        1.0,
        1.0,
        [d, d],
        p,
        [
            FacetTag::SupersetBoundary(0),
            FacetTag::SupersetBoundary(1),
            FacetTag::SupersetBoundary(2),
            FacetTag::SupersetBoundary(3),
        ],
        0.0,
    )
}

/// Box `[0,l]^3` with tagged faces, tilting the third direction.
pub fn box_mesh(l: [f64; 3], div: [usize; 3], p: usize, tags: [FacetTag; 6], tilt_amp: f64) -> BulkMesh {
    let block = Block {
        map: Box::new(move |s: &[f64; 3]| {
            let t = s[2] + tilt_amp * s[2] * (1.0 - s[2]) * (2.0 * s[0] - 1.0);
            Vec3::new(l[0] * s[0], l[1] * s[1], l[2] * t)
        }),
        divisions: div,
        face_tags: tags.map(Some),
    };
    build_block_mesh(3, p, vec![block], l[0].max(l[1]).max(l[2])).expect("box mesh")
}
