//! File output: legacy VTK dumps for the mesh and cut surface, OBJ surface
//! dumps, JSON-lines diagnostics.

use crate::cut::CutSurface;
use crate::mesh::BackgroundMesh;
use crate::stepper::StepDiagnostic;
use crate::Result;
use std::io::Write;
use std::path::Path;

/// Legacy VTK unstructured grid (cell type 10) of the background mesh.
pub fn write_mesh_vtk(path: &Path, mesh: &BackgroundMesh) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "# vtk DataFile Version 3.0")?;
    writeln!(f, "background mesh h={}", mesh.h())?;
    writeln!(f, "ASCII")?;
    writeln!(f, "DATASET UNSTRUCTURED_GRID")?;
    writeln!(f, "POINTS {} double", mesh.n_vertices())?;
    for v in 0..mesh.n_vertices() as u32 {
        let p = mesh.vertex(v);
        writeln!(f, "{} {} {}", p[0], p[1], p[2])?;
    }
    writeln!(f, "CELLS {} {}", mesh.n_tets(), 5 * mesh.n_tets())?;
    for t in 0..mesh.n_tets() {
        let tet = mesh.tet(t);
        writeln!(f, "4 {} {} {} {}", tet[0], tet[1], tet[2], tet[3])?;
    }
    writeln!(f, "CELL_TYPES {}", mesh.n_tets())?;
    for _ in 0..mesh.n_tets() {
        writeln!(f, "10")?;
    }
    Ok(())
}

/// Wavefront OBJ dump of the triangulated cut surface.
pub fn write_surface_obj(path: &Path, cut: &CutSurface) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "# cut surface, {} triangles", cut.triangles.len())?;
    for tri in &cut.triangles {
        for v in tri.vertices {
            writeln!(f, "v {} {} {}", v[0], v[1], v[2])?;
        }
    }
    for (i, _) in cut.triangles.iter().enumerate() {
        writeln!(f, "f {} {} {}", 3 * i + 1, 3 * i + 2, 3 * i + 3)?;
    }
    Ok(())
}

/// Legacy VTK polydata dump (triangle cells, type 5) of the cut surface with
/// parent element ids as cell data.
pub fn write_surface_vtk(path: &Path, cut: &CutSurface) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "# vtk DataFile Version 3.0")?;
    writeln!(f, "cut surface")?;
    writeln!(f, "ASCII")?;
    writeln!(f, "DATASET UNSTRUCTURED_GRID")?;
    writeln!(f, "POINTS {} double", 3 * cut.triangles.len())?;
    for tri in &cut.triangles {
        for v in tri.vertices {
            writeln!(f, "{} {} {}", v[0], v[1], v[2])?;
        }
    }
    writeln!(f, "CELLS {} {}", cut.triangles.len(), 4 * cut.triangles.len())?;
    for (i, _) in cut.triangles.iter().enumerate() {
        writeln!(f, "3 {} {} {}", 3 * i, 3 * i + 1, 3 * i + 2)?;
    }
    writeln!(f, "CELL_TYPES {}", cut.triangles.len())?;
    for _ in &cut.triangles {
        writeln!(f, "5")?;
    }
    writeln!(f, "CELL_DATA {}", cut.triangles.len())?;
    writeln!(f, "SCALARS parent_element int 1")?;
    writeln!(f, "LOOKUP_TABLE default")?;
    for tri in &cut.triangles {
        writeln!(f, "{}", tri.parent)?;
    }
    Ok(())
}

/// Appending JSON-lines writer for step diagnostics.
pub struct DiagnosticsLog {
    file: std::io::BufWriter<std::fs::File>,
}

impl DiagnosticsLog {
    pub fn create(path: &Path) -> Result<Self> {
        Ok(DiagnosticsLog {
            file: std::io::BufWriter::new(std::fs::File::create(path)?),
        })
    }

    pub fn record(&mut self, diag: &StepDiagnostic) -> Result<()> {
        let line = serde_json::to_string(diag).expect("diagnostics serialize");
        writeln!(self.file, "{line}")?;
        Ok(())
    }

    pub fn flush(&mut self) -> Result<()> {
        self.file.flush()?;
        Ok(())
    }
}
