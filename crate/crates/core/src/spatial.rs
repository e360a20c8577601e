//! Uniform hash grid for radius and nearest-within-radius queries.

use crate::geom::Vec3;
use crate::hash::IntMap;
use crate::scalar::Real;

type Cell = (i64, i64, i64);

/// Points bucketed by cube cells of side `cell_size`. Query results are
/// exact; the grid only prunes the search.
#[derive(Debug, Clone)]
pub struct HashGrid<S> {
    cell_size: S,
    points: Vec<Vec3<S>>,
    /// Point indices ordered by cell, ascending index within a cell.
    order: Vec<u32>,
    cells: IntMap<Cell, (u32, u32)>,
}

impl<S: Real> HashGrid<S> {
    pub fn new(points: &[Vec3<S>], cell_size: S) -> Self {
        assert!(cell_size > S::zero(), "cell size must be positive");
        let mut keyed: Vec<(Cell, u32)> = points
            .iter()
            .enumerate()
            .map(|(i, p)| (cell_of(p, cell_size), i as u32))
            .collect();
        keyed.sort_unstable();
        let mut cells = IntMap::default();
        let mut start = 0usize;
        while start < keyed.len() {
            let key = keyed[start].0;
            let mut end = start + 1;
            while end < keyed.len() && keyed[end].0 == key {
                end += 1;
            }
            cells.insert(key, (start as u32, (end - start) as u32));
            start = end;
        }
        Self {
            cell_size,
            points: points.to_vec(),
            order: keyed.into_iter().map(|(_, i)| i).collect(),
            cells,
        }
    }

    pub fn cell_size(&self) -> S {
        self.cell_size
    }

    pub fn points(&self) -> &[Vec3<S>] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    #[inline]
    fn visit_cells(&self, q: &Vec3<S>, radius: S, mut f: impl FnMut(u32)) {
        let reach = (radius / self.cell_size).ceil().to_i64().unwrap_or(0).max(0);
        let c = cell_of(q, self.cell_size);
        for dx in -reach..=reach {
            for dy in -reach..=reach {
                for dz in -reach..=reach {
                    if let Some(&(s, n)) = self.cells.get(&(c.0 + dx, c.1 + dy, c.2 + dz)) {
                        for &i in &self.order[s as usize..(s + n) as usize] {
                            f(i);
                        }
                    }
                }
            }
        }
    }

    /// Calls `f(index, squared_distance)` for every point within `radius`.
    pub fn for_each_within(&self, q: &Vec3<S>, radius: S, mut f: impl FnMut(usize, S)) {
        let r2 = radius * radius;
        self.visit_cells(q, radius, |i| {
            let d2 = self.points[i as usize].distance_squared(q);
            if d2 <= r2 {
                f(i as usize, d2);
            }
        });
    }

    /// Indices within `radius`, ascending.
    pub fn within(&self, q: &Vec3<S>, radius: S) -> Vec<usize> {
        let mut out = Vec::new();
        self.for_each_within(q, radius, |i, _| out.push(i));
        out.sort_unstable();
        out
    }

    /// Nearest point within `radius` as `(index, squared distance)`; ties go
    /// to the lower index.
    pub fn nearest_within(&self, q: &Vec3<S>, radius: S) -> Option<(usize, S)> {
        let r2 = radius * radius;
        let reach = (radius / self.cell_size).ceil().to_i64().unwrap_or(0).max(0);
        let c = cell_of(q, self.cell_size);
        let mut best: Option<(usize, S)> = None;
        // Shells of growing Chebyshev radius; every point in shell `k` is at
        // least `(k - 1) * cell_size` away from `q`.
        for k in 0..=reach {
            for dx in -k..=k {
                for dy in -k..=k {
                    let edge = dx.abs() == k || dy.abs() == k;
                    let mut dz = -k;
                    while dz <= k {
                        if let Some(&(s, n)) = self.cells.get(&(c.0 + dx, c.1 + dy, c.2 + dz)) {
                            for &i in &self.order[s as usize..(s + n) as usize] {
                                let d2 = self.points[i as usize].distance_squared(q);
                                if d2 > r2 {
                                    continue;
                                }
                                match best {
                                    Some((bi, bd)) if d2 > bd || (d2 == bd && i as usize > bi) => {}
                                    _ => best = Some((i as usize, d2)),
                                }
                            }
                        }
                        dz += if edge || k == 0 { 1 } else { 2 * k };
                    }
                }
            }
            if let Some((_, bd)) = best {
                let lb = S::from_i64(k).unwrap() * self.cell_size;
                if bd < lb * lb {
                    break;
                }
            }
        }
        best
    }
}

#[inline]
fn cell_of<S: Real>(p: &Vec3<S>, size: S) -> Cell {
    let f = |v: S| (v / size).floor().to_i64().unwrap_or(i64::MAX);
    (f(p.x), f(p.y), f(p.z))
}
