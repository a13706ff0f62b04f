//! Legacy ASCII VTK output.
//!
//! Points are duplicated per element (moments are discontinuous), and each
//! element of order p is split into p^dim linear quads or hexes whose corners
//! are the element's own Lagrange nodes.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use super::BulkMesh;
use crate::error::Result;

/// Point data with `ncomp` components for every element-local node, element
/// by element.
#[derive(Debug, Clone)]
pub struct VtkField {
    pub name: String,
    pub ncomp: usize,
    pub values: Vec<f64>,
}

pub fn write_vtk(path: &Path, mesh: &BulkMesh, title: &str, fields: &[VtkField]) -> Result<()> {
    let s = vtk_string(mesh, title, fields);
    let mut f = std::fs::File::create(path)?;
    f.write_all(s.as_bytes())?;
    Ok(())
}

pub fn vtk_string(mesh: &BulkMesh, title: &str, fields: &[VtkField]) -> String {
    let nn = mesh.basis.n_nodes();
    let ne = mesh.n_elements();
    let p = mesh.p;
    let m = p + 1;
    let dim = mesh.dim;
    let mut s = String::new();
    let _ = writeln!(s, "# vtk DataFile Version 3.0\n{title}\nASCII\nDATASET UNSTRUCTURED_GRID");
    let _ = writeln!(s, "POINTS {} double", ne * nn);
    for conn in &mesh.elements {
        for &g in conn {
            let x = mesh.nodes[g];
            let _ = writeln!(s, "{:.16e} {:.16e} {:.16e}", x[0], x[1], x[2]);
        }
    }
    let sub = p.pow(dim as u32);
    let corners = if dim == 2 { 4 } else { 8 };
    let _ = writeln!(s, "CELLS {} {}", ne * sub, ne * sub * (corners + 1));
    let idx = |i: usize, j: usize, k: usize| i + m * (j + m * k);
    for e in 0..ne {
        let base = e * nn;
        for k in 0..(if dim == 3 { p } else { 1 }) {
            for j in 0..p {
                for i in 0..p {
                    let mut c = vec![idx(i, j, k), idx(i + 1, j, k), idx(i + 1, j + 1, k), idx(i, j + 1, k)];
                    if dim == 3 {
                        c.extend([idx(i, j, k + 1), idx(i + 1, j, k + 1), idx(i + 1, j + 1, k + 1), idx(i, j + 1, k + 1)]);
                    }
                    let _ = write!(s, "{corners}");
                    for v in c {
                        let _ = write!(s, " {}", base + v);
                    }
                    s.push('\n');
                }
            }
        }
    }
    let _ = writeln!(s, "CELL_TYPES {}", ne * sub);
    let ct = if dim == 2 { 9 } else { 12 };
    for _ in 0..ne * sub {
        let _ = writeln!(s, "{ct}");
    }
    if !fields.is_empty() {
        let _ = writeln!(s, "POINT_DATA {}", ne * nn);
        for f in fields {
            if f.ncomp == 1 {
                let _ = writeln!(s, "SCALARS {} double 1\nLOOKUP_TABLE default", f.name);
                for v in &f.values {
                    let _ = writeln!(s, "{v:.16e}");
                }
            } else {
                let _ = writeln!(s, "FIELD attributes 1\n{} {} {} double", f.name, f.ncomp, ne * nn);
                for chunk in f.values.chunks(f.ncomp) {
                    let line: Vec<String> = chunk.iter().map(|v| format!("{v:.16e}")).collect();
                    let _ = writeln!(s, "{}", line.join(" "));
                }
            }
        }
    }
    s
}
