//! Plain-text voxel fields and legacy VTK export.
//!
//! Voxel text format: optional `#` comment lines, a header line
//! `nx ny [nz] [element|node]` (mode defaults to `element`), then the values
//! with `x` varying fastest, whitespace separated. Masks are element fields
//! of 0/1 or real densities; entries `>= 0.5` are active.

use crate::error::{Error, Result};
use crate::grid::GridShape;
use crate::timefield::{FieldMode, TimeField};
use std::fmt::Write as _;
use std::path::Path;

/// Density at or above which a mask entry counts as material.
pub const MASK_THRESHOLD: f64 = 0.5;

/// A scalar field on a structured grid.
#[derive(Clone, Debug, PartialEq)]
pub struct VoxelField {
    pub shape: GridShape,
    pub mode: FieldMode,
    pub values: Vec<f64>,
}

fn expected_len(shape: &GridShape, mode: FieldMode) -> usize {
    match mode {
        FieldMode::Element => shape.n_elements(),
        FieldMode::Node => shape.n_nodes(),
    }
}

fn row_len(shape: &GridShape, mode: FieldMode) -> usize {
    match mode {
        FieldMode::Element => shape.nx(),
        FieldMode::Node => shape.nx() + 1,
    }
}

impl VoxelField {
    pub fn new(shape: GridShape, mode: FieldMode, values: Vec<f64>) -> Result<Self> {
        let n = expected_len(&shape, mode);
        if values.len() != n {
            return Err(Error::InvalidField(format!(
                "{} values for a {:?} field that needs {n}",
                values.len(),
                mode
            )));
        }
        Ok(Self { shape, mode, values })
    }

    pub fn from_time_field(shape: GridShape, field: &TimeField) -> Result<Self> {
        Self::new(shape, field.mode(), field.values().to_vec())
    }

    pub fn into_time_field(self) -> TimeField {
        TimeField::new(self.mode, self.values)
    }

    /// Parses the text format; `origin` only labels errors.
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let err = |reason: String| Error::Format { path: origin.to_path_buf(), reason };
        let mut lines = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'));
        let header = lines.next().ok_or_else(|| err("missing header".into()))?;
        let mut words: Vec<&str> = header.split_whitespace().collect();
        let mode = match words.last() {
            Some(&"element") => {
                words.pop();
                FieldMode::Element
            }
            Some(&"node") => {
                words.pop();
                FieldMode::Node
            }
            _ => FieldMode::Element,
        };
        let extents = words
            .iter()
            .map(|w| w.parse::<usize>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| err(format!("bad header `{header}`: {e}")))?;
        let shape = GridShape::from_extents(&extents).map_err(|e| err(e.to_string()))?;
        let mut values = Vec::with_capacity(expected_len(&shape, mode));
        for line in lines {
            for w in line.split_whitespace() {
                values.push(w.parse::<f64>().map_err(|e| err(format!("bad value `{w}`: {e}")))?);
            }
        }
        let n = expected_len(&shape, mode);
        if values.len() != n {
            return Err(err(format!("expected {n} values, found {}", values.len())));
        }
        Ok(Self { shape, mode, values })
    }

    /// Serializes with shortest round-trip float formatting.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let ext = self.shape.extents();
        let dims: Vec<String> = ext.iter().map(|n| n.to_string()).collect();
        let mode = match self.mode {
            FieldMode::Element => "element",
            FieldMode::Node => "node",
        };
        let _ = writeln!(out, "{} {mode}", dims.join(" "));
        for row in self.values.chunks(row_len(&self.shape, self.mode)) {
            let words: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
            let _ = writeln!(out, "{}", words.join(" "));
        }
        out
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, path)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }
}

/// Reads an element mask, thresholding real densities at
/// [`MASK_THRESHOLD`].
pub fn read_mask(path: &Path) -> Result<(GridShape, Vec<bool>)> {
    let f = VoxelField::read(path)?;
    if f.mode != FieldMode::Element {
        return Err(Error::Format {
            path: path.to_path_buf(),
            reason: "masks must be element fields".into(),
        });
    }
    Ok((f.shape, f.values.iter().map(|&v| v >= MASK_THRESHOLD).collect()))
}

/// One array in a VTK export.
#[derive(Clone, Debug, PartialEq)]
pub enum VtkField {
    /// One value per element.
    CellScalar { name: String, values: Vec<f64> },
    /// One value per node.
    PointScalar { name: String, values: Vec<f64> },
    /// `dim` components per node (e.g. a displacement vector).
    PointVector { name: String, values: Vec<f64> },
}

impl VtkField {
    fn name(&self) -> &str {
        match self {
            VtkField::CellScalar { name, .. }
            | VtkField::PointScalar { name, .. }
            | VtkField::PointVector { name, .. } => name,
        }
    }
}

fn vtk_name(name: &str) -> String {
    name.chars().map(|c| if c.is_whitespace() { '_' } else { c }).collect()
}

/// Legacy ASCII `STRUCTURED_POINTS` dataset with unit spacing.
pub fn vtk_text(shape: &GridShape, fields: &[VtkField]) -> Result<String> {
    let dim = shape.dim();
    let (nc, np) = (shape.n_elements(), shape.n_nodes());
    for f in fields {
        let (got, want) = match f {
            VtkField::CellScalar { values, .. } => (values.len(), nc),
            VtkField::PointScalar { values, .. } => (values.len(), np),
            VtkField::PointVector { values, .. } => (values.len(), np * dim),
        };
        if got != want {
            return Err(Error::InvalidField(format!(
                "VTK field `{}` has {got} values, expected {want}",
                f.name()
            )));
        }
    }
    let ext = shape.extents();
    let pdims = [ext[0] + 1, ext[1] + 1, if dim == 3 { ext[2] + 1 } else { 1 }];
    let mut out = String::new();
    let _ = writeln!(out, "# vtk DataFile Version 3.0\nfabseq fields\nASCII\nDATASET STRUCTURED_POINTS");
    let _ = writeln!(out, "DIMENSIONS {} {} {}", pdims[0], pdims[1], pdims[2]);
    let _ = writeln!(out, "ORIGIN 0 0 0\nSPACING 1 1 1");
    let cells: Vec<&VtkField> = fields.iter().filter(|f| matches!(f, VtkField::CellScalar { .. })).collect();
    let points: Vec<&VtkField> = fields.iter().filter(|f| !matches!(f, VtkField::CellScalar { .. })).collect();
    if !cells.is_empty() {
        let _ = writeln!(out, "CELL_DATA {nc}");
        for f in cells {
            if let VtkField::CellScalar { name, values } = f {
                let _ = writeln!(out, "SCALARS {} double 1\nLOOKUP_TABLE default", vtk_name(name));
                for v in values {
                    let _ = writeln!(out, "{v:?}");
                }
            }
        }
    }
    if !points.is_empty() {
        let _ = writeln!(out, "POINT_DATA {np}");
        for f in points {
            match f {
                VtkField::PointScalar { name, values } => {
                    let _ = writeln!(out, "SCALARS {} double 1\nLOOKUP_TABLE default", vtk_name(name));
                    for v in values {
                        let _ = writeln!(out, "{v:?}");
                    }
                }
                VtkField::PointVector { name, values } => {
                    let _ = writeln!(out, "VECTORS {} double", vtk_name(name));
                    for c in values.chunks(dim) {
                        let z = if dim == 3 { c[2] } else { 0.0 };
                        let _ = writeln!(out, "{:?} {:?} {:?}", c[0], c[1], z);
                    }
                }
                VtkField::CellScalar { .. } => unreachable!(),
            }
        }
    }
    Ok(out)
}

/// Writes fields to `path` in the given format. An empty list writes
/// nothing.
pub fn export_fields(shape: &GridShape, fields: &[VtkField], format: ExportFormat, path: &Path) -> Result<()> {
    if fields.is_empty() {
        return Ok(());
    }
    match format {
        ExportFormat::Vtk => std::fs::write(path, vtk_text(shape, fields)?)?,
        ExportFormat::Voxel => {
            let stem = path.with_extension("");
            for f in fields {
                let (mode, values) = match f {
                    VtkField::CellScalar { values, .. } => (FieldMode::Element, values.clone()),
                    VtkField::PointScalar { values, .. } => (FieldMode::Node, values.clone()),
                    VtkField::PointVector { values, .. } => {
                        // voxel files are scalar: write the magnitude
                        let mag = values
                            .chunks(shape.dim())
                            .map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt())
                            .collect();
                        (FieldMode::Node, mag)
                    }
                };
                let file = if fields.len() == 1 {
                    path.to_path_buf()
                } else {
                    stem.with_file_name(format!(
                        "{}_{}.txt",
                        stem.file_name().and_then(|s| s.to_str()).unwrap_or("field"),
                        vtk_name(f.name())
                    ))
                };
                VoxelField::new(*shape, mode, values)?.write(&file)?;
            }
        }
    }
    Ok(())
}

/// Output format of [`export_fields`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExportFormat {
    /// Plain-text voxel files, one per field (vectors as magnitudes).
    Voxel,
    /// One legacy ASCII VTK file.
    Vtk,
}
