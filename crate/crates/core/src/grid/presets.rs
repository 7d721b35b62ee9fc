//! Benchmark components rasterized onto structured grids.
//!
//! All geometry is defined on a reference frame (given per preset) and
//! scaled to the requested resolution. Cells are included when their
//! centroid lies inside the outline. Supports are every node on the build
//! plate (vertical coordinate 0) that touches an active element.

use super::{DomainGrid, GridShape};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Fraction of each axis removed by the L-shape notch.
pub const LSHAPE_NOTCH_FRACTION: f64 = 0.5;

/// Reference frame of the bracket outline.
pub const BRACKET_REFERENCE: [f64; 2] = [144.0, 96.0];
/// Vertical column `[x0, x1] x [y0, y1]` standing on the plate.
pub const BRACKET_COLUMN: [f64; 4] = [0.0, 48.0, 0.0, 96.0];
/// Horizontal arm `[x0, x1] x [y0, y1]` cantilevered from the column.
pub const BRACKET_ARM: [f64; 4] = [48.0, 118.0, 48.0, 96.0];
/// Gusset triangle under the arm.
pub const BRACKET_GUSSET: [[f64; 2]; 3] = [[48.0, 0.0], [96.0, 48.0], [48.0, 48.0]];
/// Centre of the lug and its hole.
pub const BRACKET_HOLE_CENTER: [f64; 2] = [118.0, 72.0];
/// Outer radius of the rounded lug at the arm tip.
pub const BRACKET_LUG_RADIUS: f64 = 24.0;
/// Radius of the circular hole.
pub const BRACKET_HOLE_RADIUS: f64 = 12.0;

/// Named benchmark geometry or an explicit element mask.
#[derive(Clone, Debug, PartialEq)]
pub enum Preset {
    /// 2D L-shape: column on the plate with an overhanging arm to the right.
    LShape2d,
    /// 2D bracket with a circular hole in an overhanging lug.
    Bracket2d,
    /// 3D extrusion of the L-shape along `y`.
    LShape3d,
    /// Full 2D rectangle.
    Rectangle,
    /// Full 3D box.
    Box3d,
    /// Explicit occupancy mask, element order.
    Mask(Vec<bool>),
}

impl Preset {
    pub fn from_name(name: &str) -> Result<Self> {
        Ok(match name {
            "lshape2d" => Preset::LShape2d,
            "bracket2d" => Preset::Bracket2d,
            "lshape3d" => Preset::LShape3d,
            "rectangle" => Preset::Rectangle,
            "box3d" => Preset::Box3d,
            other => return Err(Error::UnknownPreset(other.to_string())),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Preset::LShape2d => "lshape2d",
            Preset::Bracket2d => "bracket2d",
            Preset::LShape3d => "lshape3d",
            Preset::Rectangle => "rectangle",
            Preset::Box3d => "box3d",
            Preset::Mask(_) => "external-mask",
        }
    }

    fn expected_dim(&self) -> Option<usize> {
        match self {
            Preset::LShape2d | Preset::Bracket2d | Preset::Rectangle => Some(2),
            Preset::LShape3d | Preset::Box3d => Some(3),
            Preset::Mask(_) => None,
        }
    }

    fn default_start(&self) -> StartRegion {
        match self {
            Preset::Rectangle | Preset::Box3d => StartRegion::BottomEdge,
            _ => StartRegion::Corner,
        }
    }
}

/// Prescribed region where fabrication begins (time zero).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StartRegion {
    /// The lowest active element with the smallest `x` (then `y` in 3D).
    Corner,
    /// Every active element in the lowest layer.
    BottomEdge,
    /// Explicit element indices.
    Elements(Vec<usize>),
}

impl StartRegion {
    pub fn resolve(&self, shape: &GridShape, active: &[bool]) -> Result<Vec<usize>> {
        let bottom: Vec<usize> = (0..shape.n_elements())
            .filter(|&e| active[e] && shape.element_ijk(e)[shape.vertical_axis()] == 0)
            .collect();
        match self {
            StartRegion::Corner => {
                // element order is x-fastest, so the first bottom cell has min x
                // for 2D; in 3D prefer min x, then min y.
                let e = bottom
                    .iter()
                    .copied()
                    .min_by_key(|&e| {
                        let [i, j, _] = shape.element_ijk(e);
                        (i, j)
                    })
                    .ok_or_else(|| Error::InvalidGrid("no active element on the plate".into()))?;
                Ok(vec![e])
            }
            StartRegion::BottomEdge => {
                if bottom.is_empty() {
                    Err(Error::InvalidGrid("no active element on the plate".into()))
                } else {
                    Ok(bottom)
                }
            }
            StartRegion::Elements(list) => Ok(list.clone()),
        }
    }
}

/// Builds a benchmark grid at the given resolution.
///
/// `start` overrides the preset's default start region (corner for shaped
/// components, bottom layer for full boxes).
pub fn build_preset(
    preset: &Preset,
    resolution: &[usize],
    start: Option<&StartRegion>,
) -> Result<DomainGrid> {
    let bad = |reason: &str| Error::Resolution {
        preset: preset.name().to_string(),
        resolution: resolution.to_vec(),
        reason: reason.to_string(),
    };
    if resolution.contains(&0) {
        return Err(bad("extents must be positive"));
    }
    if let Some(d) = preset.expected_dim() {
        if resolution.len() != d {
            return Err(bad(&format!("expected {d} extents")));
        }
    }
    let shape = GridShape::from_extents(resolution)?;
    let active = match preset {
        Preset::Rectangle | Preset::Box3d => vec![true; shape.n_elements()],
        Preset::LShape2d | Preset::LShape3d => {
            let nx = shape.nx();
            let nv = shape.extents()[shape.vertical_axis()];
            if nx % 2 != 0 || nv % 2 != 0 {
                return Err(bad("horizontal and vertical extents must be even"));
            }
            let cut_x = (nx as f64 * LSHAPE_NOTCH_FRACTION) as usize;
            let cut_v = (nv as f64 * LSHAPE_NOTCH_FRACTION) as usize;
            (0..shape.n_elements())
                .map(|e| {
                    let ijk = shape.element_ijk(e);
                    !(ijk[0] >= cut_x && ijk[shape.vertical_axis()] < cut_v)
                })
                .collect()
        }
        Preset::Bracket2d => {
            let sx = shape.nx() as f64 / BRACKET_REFERENCE[0];
            let sy = shape.ny() as f64 / BRACKET_REFERENCE[1];
            if (sx - sy).abs() > 1e-12 {
                return Err(bad("aspect ratio must be 3:2"));
            }
            (0..shape.n_elements())
                .map(|e| {
                    let c = shape.element_centroid(e);
                    bracket_contains(c[0] / sx, c[1] / sy)
                })
                .collect()
        }
        Preset::Mask(mask) => {
            if mask.len() != shape.n_elements() {
                return Err(bad(&format!(
                    "mask has {} entries, expected {}",
                    mask.len(),
                    shape.n_elements()
                )));
            }
            mask.clone()
        }
    };
    let fixed = plate_nodes(&shape, &active);
    let start = start
        .cloned()
        .unwrap_or_else(|| preset.default_start())
        .resolve(&shape, &active)?;
    DomainGrid::new(shape, active, fixed, start)
}

/// Nodes at vertical coordinate 0 that belong to an active element.
pub fn plate_nodes(shape: &GridShape, active: &[bool]) -> Vec<usize> {
    let va = shape.vertical_axis();
    let npe = shape.nodes_per_element();
    let mut out: Vec<usize> = (0..shape.n_elements())
        .filter(|&e| active[e] && shape.element_ijk(e)[va] == 0)
        .flat_map(|e| shape.element_nodes(e).into_iter().take(npe))
        .filter(|&v| shape.node_ijk(v)[va] == 0)
        .collect();
    out.sort_unstable();
    out.dedup();
    out
}

/// Point membership for the bracket outline in its reference frame.
pub fn bracket_contains(x: f64, y: f64) -> bool {
    let in_rect = |r: [f64; 4]| x >= r[0] && x <= r[1] && y >= r[2] && y <= r[3];
    let [cx, cy] = BRACKET_HOLE_CENTER;
    let r2 = (x - cx).powi(2) + (y - cy).powi(2);
    if r2 <= BRACKET_HOLE_RADIUS * BRACKET_HOLE_RADIUS {
        return false;
    }
    if in_rect(BRACKET_COLUMN) || in_rect(BRACKET_ARM) {
        return true;
    }
    if r2 <= BRACKET_LUG_RADIUS * BRACKET_LUG_RADIUS {
        return true;
    }
    in_triangle([x, y], BRACKET_GUSSET)
}

fn in_triangle(p: [f64; 2], t: [[f64; 2]; 3]) -> bool {
    let cross = |a: [f64; 2], b: [f64; 2], c: [f64; 2]| {
        (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
    };
    let d1 = cross(t[0], t[1], p);
    let d2 = cross(t[1], t[2], p);
    let d3 = cross(t[2], t[0], p);
    let neg = d1 < 0.0 || d2 < 0.0 || d3 < 0.0;
    let pos = d1 > 0.0 || d2 > 0.0 || d3 > 0.0;
    !(neg && pos)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lshape_is_gamma_shaped_with_supports_under_the_column() {
        let g = build_preset(&Preset::LShape2d, &[120, 80], None).unwrap();
        assert_eq!(g.n_active(), 120 * 80 - 60 * 40);
        let s = g.shape();
        assert!(!g.is_active(s.element_id(119, 0, 0)));
        assert!(g.is_active(s.element_id(119, 79, 0)));
        // bottom nodes x = 0..=60 at y = 0
        assert_eq!(g.fixed_nodes().len(), 61);
        assert!(g.fixed_nodes().iter().all(|&v| s.node_ijk(v)[1] == 0));
        assert_eq!(g.start_elements(), &[0]);
    }

    #[test]
    fn all_true_mask_gives_full_rectangle() {
        let g = build_preset(&Preset::Mask(vec![true; 16]), &[4, 4], None).unwrap();
        assert_eq!(g.n_active(), 16);
        assert_eq!(g.fixed_nodes().len(), 5);
    }

    #[test]
    fn rejects_bad_names_and_resolutions() {
        assert!(matches!(
            Preset::from_name("teapot"),
            Err(Error::UnknownPreset(_))
        ));
        assert!(build_preset(&Preset::LShape2d, &[121, 80], None).is_err());
        assert!(build_preset(&Preset::Bracket2d, &[144, 100], None).is_err());
        assert!(build_preset(&Preset::LShape2d, &[120, 80, 4], None).is_err());
        assert!(build_preset(&Preset::Rectangle, &[0, 4], None).is_err());
    }

    #[test]
    fn presets_are_deterministic() {
        use std::collections::hash_map::DefaultHasher;
        use std::hash::{Hash, Hasher};
        let h = |g: &DomainGrid| {
            let mut s = DefaultHasher::new();
            g.hash(&mut s);
            s.finish()
        };
        let a = build_preset(&Preset::Bracket2d, &[72, 48], None).unwrap();
        let b = build_preset(&Preset::Bracket2d, &[72, 48], None).unwrap();
        assert_eq!(h(&a), h(&b));
    }

    #[test]
    fn lshape3d_extents() {
        let g = build_preset(&Preset::LShape3d, &[12, 4, 8], None).unwrap();
        assert_eq!(g.n_active(), 12 * 4 * 8 - 6 * 4 * 4);
        assert_eq!(g.start_elements(), &[0]);
        // plate nodes under the column: 7 x 5
        assert_eq!(g.fixed_nodes().len(), 35);
    }

    #[test]
    fn bottom_edge_start() {
        let g = build_preset(&Preset::Bracket2d, &[144, 96], Some(&StartRegion::BottomEdge))
            .unwrap();
        let s = g.shape();
        assert!(g.start_elements().iter().all(|&e| s.element_ijk(e)[1] == 0));
        assert!(g.start_elements().len() > 1);
    }
}
