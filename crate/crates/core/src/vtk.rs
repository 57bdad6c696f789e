//! Legacy ASCII VTK output of a mesh with vertex values and cell indicators.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::Result;
use crate::fespace::FeFunction;

/// Writes the mesh of `u` with its vertex values and, if given, one value
/// per element.
pub fn write_level(path: &Path, u: &FeFunction, cell_values: Option<&[f64]>) -> Result<()> {
    let mesh = u.space().mesh();
    let dim = mesh.dim();
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "# vtk DataFile Version 3.0")?;
    writeln!(w, "space-time solution")?;
    writeln!(w, "ASCII")?;
    writeln!(w, "DATASET UNSTRUCTURED_GRID")?;
    writeln!(w, "POINTS {} double", mesh.n_vertices())?;
    for p in mesh.vertices() {
        let z = if dim == 3 { p[2] } else { 0.0 };
        writeln!(w, "{:.16e} {:.16e} {:.16e}", p[0], p[1], z)?;
    }
    let nv = dim + 1;
    let ne = mesh.n_elements();
    writeln!(w, "CELLS {} {}", ne, ne * (nv + 1))?;
    for e in 0..ne {
        let vs = mesh.oriented_vertices(e);
        write!(w, "{nv}")?;
        for v in vs {
            write!(w, " {v}")?;
        }
        writeln!(w)?;
    }
    writeln!(w, "CELL_TYPES {ne}")?;
    let cell_type = if dim == 2 { 5 } else { 10 };
    for _ in 0..ne {
        writeln!(w, "{cell_type}")?;
    }
    writeln!(w, "POINT_DATA {}", mesh.n_vertices())?;
    writeln!(w, "SCALARS u double 1")?;
    writeln!(w, "LOOKUP_TABLE default")?;
    for c in &u.coeffs[..mesh.n_vertices()] {
        writeln!(w, "{c:.16e}")?;
    }
    writeln!(w, "CELL_DATA {ne}")?;
    writeln!(w, "SCALARS generation int 1")?;
    writeln!(w, "LOOKUP_TABLE default")?;
    for el in mesh.elements() {
        writeln!(w, "{}", el.generation)?;
    }
    if let Some(eta) = cell_values {
        writeln!(w, "SCALARS eta double 1")?;
        writeln!(w, "LOOKUP_TABLE default")?;
        for x in eta {
            writeln!(w, "{x:.16e}")?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fespace::{build_space, interpolate};
    use crate::mesh::build_box_mesh;
    use std::sync::Arc;

    #[test]
    fn writes_legacy_file() {
        let s = build_space(Arc::new(build_box_mesh(1, 2).unwrap()), 1).unwrap();
        let u = interpolate(&s, |x| x[0] + x[1]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.vtk");
        let eta = vec![1.0; s.n_elements()];
        write_level(&path, &u, Some(&eta)).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("# vtk DataFile Version 3.0"));
        assert!(text.contains("CELLS 8 32"));
        assert!(text.contains("SCALARS eta double 1"));
        assert_eq!(text.lines().filter(|l| *l == "5").count(), 8);
    }
}
