use super::DomainGrid;
use crate::error::{Error, Result};
use crate::timefield::{FieldMode, TimeField};
use std::cmp::Ordering;
use std::collections::BinaryHeap;

#[derive(PartialEq)]
struct Entry(f64, usize);

impl Eq for Entry {}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Entry {
    // min-heap on distance, ties by index for determinism
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .0
            .total_cmp(&self.0)
            .then_with(|| other.1.cmp(&self.1))
    }
}

fn dijkstra(
    n: usize,
    sources: &[usize],
    mut neighbors: impl FnMut(usize, &mut Vec<(usize, f64)>),
) -> Vec<f64> {
    let mut dist = vec![f64::INFINITY; n];
    let mut heap = BinaryHeap::new();
    for &s in sources {
        dist[s] = 0.0;
        heap.push(Entry(0.0, s));
    }
    let mut buf = Vec::new();
    while let Some(Entry(d, u)) = heap.pop() {
        if d > dist[u] {
            continue;
        }
        neighbors(u, &mut buf);
        for &(v, w) in &buf {
            let nd = d + w;
            if nd < dist[v] {
                dist[v] = nd;
                heap.push(Entry(nd, v));
            }
        }
    }
    dist
}

fn normalize(dist: &mut [f64], include: impl Fn(usize) -> bool) {
    let max = (0..dist.len())
        .filter(|&i| include(i))
        .map(|i| dist[i])
        .fold(0.0, f64::max);
    for (i, d) in dist.iter_mut().enumerate() {
        if !include(i) {
            *d = 0.0;
        } else if max > 0.0 {
            *d /= max;
        }
    }
}

/// Element-wise time field initialized with the normalized geodesic
/// distance from the start region through active elements.
///
/// Neighbours share at least a corner; edge weights are centroid
/// distances (1, sqrt 2, sqrt 3).
pub fn init_time_field(grid: &DomainGrid) -> Result<TimeField> {
    let shape = *grid.shape();
    let mut nbrs = Vec::new();
    let mut dist = dijkstra(shape.n_elements(), grid.start_elements(), |e, out| {
        out.clear();
        shape.element_neighbors(e, &mut nbrs);
        let ce = shape.element_ijk(e);
        for &f in &nbrs {
            if grid.is_active(f) {
                let cf = shape.element_ijk(f);
                let steps = (0..3).filter(|&a| ce[a] != cf[a]).count();
                out.push((f, (steps as f64).sqrt()));
            }
        }
    });
    if let Some(e) = grid.active_elements().find(|&e| !dist[e].is_finite()) {
        return Err(Error::Unreachable { element: e });
    }
    normalize(&mut dist, |e| grid.is_active(e));
    for &e in grid.start_elements() {
        dist[e] = 0.0;
    }
    Ok(TimeField::new(FieldMode::Element, dist))
}

/// Node-wise variant of [`init_time_field`]: geodesic distance over nodes
/// of active elements, from the bottom-face nodes of the start region.
pub fn init_node_time_field(grid: &DomainGrid) -> Result<TimeField> {
    let shape = *grid.shape();
    let npe = shape.nodes_per_element();
    let active_nodes = grid.active_nodes();
    let starts = grid.start_nodes();
    let mut elems = Vec::new();
    let mut dist = dijkstra(shape.n_nodes(), &starts, |v, out| {
        out.clear();
        shape.node_elements(v, &mut elems);
        let cv = shape.node_ijk(v);
        for &e in &elems {
            if !grid.is_active(e) {
                continue;
            }
            for &w in &shape.element_nodes(e)[..npe] {
                if w == v {
                    continue;
                }
                let cw = shape.node_ijk(w);
                let steps = (0..3).filter(|&a| cv[a] != cw[a]).count();
                out.push((w, (steps as f64).sqrt()));
            }
        }
    });
    if let Some(v) = (0..shape.n_nodes()).find(|&v| active_nodes[v] && !dist[v].is_finite()) {
        let mut elems = Vec::new();
        shape.node_elements(v, &mut elems);
        let e = elems.into_iter().find(|&e| grid.is_active(e)).unwrap_or(0);
        return Err(Error::Unreachable { element: e });
    }
    normalize(&mut dist, |v| active_nodes[v]);
    for &v in &starts {
        dist[v] = 0.0;
    }
    Ok(TimeField::new(FieldMode::Node, dist))
}

/// Horizontal (planar) layers: time proportional to height, normalized over
/// the active region. Start elements are still pinned to zero.
pub fn planar_time_field(grid: &DomainGrid, mode: FieldMode) -> TimeField {
    let shape = *grid.shape();
    let va = shape.vertical_axis();
    match mode {
        FieldMode::Element => {
            let (lo, hi) = grid
                .active_elements()
                .map(|e| shape.element_ijk(e)[va])
                .fold((usize::MAX, 0), |(lo, hi), h| (lo.min(h), hi.max(h)));
            let span = (hi - lo).max(1) as f64;
            let mut values: Vec<f64> = (0..shape.n_elements())
                .map(|e| {
                    if grid.is_active(e) {
                        (shape.element_ijk(e)[va] - lo) as f64 / span
                    } else {
                        0.0
                    }
                })
                .collect();
            for &e in grid.start_elements() {
                values[e] = 0.0;
            }
            TimeField::new(mode, values)
        }
        FieldMode::Node => {
            let active = grid.active_nodes();
            let hi = (0..shape.n_nodes())
                .filter(|&v| active[v])
                .map(|v| shape.node_ijk(v)[va])
                .max()
                .unwrap_or(1)
                .max(1) as f64;
            let mut values: Vec<f64> = (0..shape.n_nodes())
                .map(|v| {
                    if active[v] {
                        shape.node_ijk(v)[va] as f64 / hi
                    } else {
                        0.0
                    }
                })
                .collect();
            for v in grid.start_nodes() {
                values[v] = 0.0;
            }
            TimeField::new(mode, values)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_preset, GridShape, Preset, StartRegion};
    use std::collections::VecDeque;

    #[test]
    fn bottom_edge_start_gives_planar_rows() {
        let g = build_preset(&Preset::Rectangle, &[6, 5], None).unwrap();
        let t = init_time_field(&g).unwrap();
        for e in 0..30 {
            let row = g.shape().element_ijk(e)[1] as f64;
            assert!((t.values()[e] - row / 4.0).abs() < 1e-14);
        }
        assert_eq!(t.values(), planar_time_field(&g, FieldMode::Element).values());
    }

    #[test]
    fn single_element_is_zero() {
        let g = DomainGrid::new(GridShape::planar(1, 1), vec![true], vec![0, 1], vec![0]).unwrap();
        assert_eq!(init_time_field(&g).unwrap().values(), &[0.0]);
    }

    /// Bellman-Ford style relaxation sweep as an independent shortest-path oracle.
    fn relaxation_oracle(g: &DomainGrid) -> Vec<f64> {
        let s = g.shape();
        let n = s.n_elements();
        let mut d = vec![f64::INFINITY; n];
        let mut queue: VecDeque<usize> = g.start_elements().iter().copied().collect();
        for &e in g.start_elements() {
            d[e] = 0.0;
        }
        while let Some(e) = queue.pop_front() {
            let [i, j, _] = s.element_ijk(e);
            for dj in -1i64..=1 {
                for di in -1i64..=1 {
                    let (a, b) = (i as i64 + di, j as i64 + dj);
                    if (di, dj) == (0, 0) || a < 0 || b < 0 || a >= s.nx() as i64 || b >= s.ny() as i64 {
                        continue;
                    }
                    let f = s.element_id(a as usize, b as usize, 0);
                    if !g.is_active(f) {
                        continue;
                    }
                    let w = ((di * di + dj * dj) as f64).sqrt();
                    if d[e] + w < d[f] - 1e-15 {
                        d[f] = d[e] + w;
                        queue.push_back(f);
                    }
                }
            }
        }
        let max = g.active_elements().map(|e| d[e]).fold(0.0, f64::max);
        (0..n).map(|e| if g.is_active(e) { d[e] / max } else { 0.0 }).collect()
    }

    #[test]
    fn lshape_distance_matches_relaxation_oracle() {
        let g = build_preset(&Preset::LShape2d, &[24, 16], None).unwrap();
        let t = init_time_field(&g).unwrap();
        let oracle = relaxation_oracle(&g);
        for e in g.active_elements() {
            assert!((t.values()[e] - oracle[e]).abs() < 1e-12, "element {e}");
        }
        let max = g.active_elements().map(|e| t.values()[e]).fold(0.0, f64::max);
        assert_eq!(max, 1.0);
    }

    #[test]
    fn bracket_bottom_edge_matches_oracle() {
        let g = build_preset(&Preset::Bracket2d, &[36, 24], Some(&StartRegion::BottomEdge)).unwrap();
        let t = init_time_field(&g).unwrap();
        let oracle = relaxation_oracle(&g);
        for e in g.active_elements() {
            assert!((t.values()[e] - oracle[e]).abs() < 1e-12);
        }
    }

    #[test]
    fn node_field_bounds() {
        let g = build_preset(&Preset::LShape2d, &[8, 8], None).unwrap();
        let t = init_node_time_field(&g).unwrap();
        let active = g.active_nodes();
        let vals: Vec<f64> = (0..active.len()).filter(|&v| active[v]).map(|v| t.values()[v]).collect();
        assert!(vals.iter().all(|&v| (0.0..=1.0).contains(&v)));
        assert_eq!(vals.iter().cloned().fold(0.0, f64::max), 1.0);
        for v in g.start_nodes() {
            assert_eq!(t.values()[v], 0.0);
        }
    }
}
