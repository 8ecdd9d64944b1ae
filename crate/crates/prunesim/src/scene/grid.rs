//! Uniform-grid spatial index over capsule primitives.
//!
//! The index only prunes candidates; every surviving candidate goes through
//! the same exact primitive test as a brute-force scan, so query results are
//! identical to the linear scan by construction.

use nalgebra::{Point3, Vector3};

use super::geom::Capsule;

#[derive(Debug, Clone)]
pub(crate) struct UniformGrid {
    origin: Point3<f64>,
    cell: f64,
    dims: [usize; 3],
    cells: Vec<Vec<u32>>,
    n_items: usize,
}

impl UniformGrid {
    pub fn build(capsules: &[Capsule], cell: f64) -> Self {
        let mut lo = Point3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY);
        let mut hi = Point3::new(f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        for c in capsules {
            let (clo, chi) = c.aabb();
            for i in 0..3 {
                lo[i] = lo[i].min(clo[i]);
                hi[i] = hi[i].max(chi[i]);
            }
        }
        if capsules.is_empty() {
            lo = Point3::origin();
            hi = Point3::new(1.0, 1.0, 1.0);
        }
        // pad so boundary items land strictly inside
        let pad = cell * 0.5;
        for i in 0..3 {
            lo[i] -= pad;
            hi[i] += pad;
        }
        let dims = [0, 1, 2].map(|i| (((hi[i] - lo[i]) / cell).ceil() as usize).max(1));
        let mut grid = Self {
            origin: lo,
            cell,
            dims,
            cells: vec![Vec::new(); dims[0] * dims[1] * dims[2]],
            n_items: capsules.len(),
        };
        for (id, c) in capsules.iter().enumerate() {
            let (clo, chi) = c.aabb();
            let (i0, i1) = (grid.cell_of(&clo), grid.cell_of(&chi));
            for x in i0[0]..=i1[0] {
                for y in i0[1]..=i1[1] {
                    for z in i0[2]..=i1[2] {
                        let idx = grid.flat([x, y, z]);
                        grid.cells[idx].push(id as u32);
                    }
                }
            }
        }
        grid
    }

    fn flat(&self, c: [usize; 3]) -> usize {
        (c[2] * self.dims[1] + c[1]) * self.dims[0] + c[0]
    }

    fn cell_of(&self, p: &Point3<f64>) -> [usize; 3] {
        [0, 1, 2].map(|i| {
            (((p[i] - self.origin[i]) / self.cell).floor().max(0.0) as usize)
                .min(self.dims[i] - 1)
        })
    }

    /// Candidate primitive ids whose cells overlap the AABB, deduplicated
    /// and sorted.
    pub fn candidates_in_aabb(&self, lo: &Point3<f64>, hi: &Point3<f64>) -> Vec<u32> {
        let (i0, i1) = (self.cell_of(lo), self.cell_of(hi));
        let mut seen = vec![false; self.n_items];
        let mut out = Vec::new();
        for x in i0[0]..=i1[0] {
            for y in i0[1]..=i1[1] {
                for z in i0[2]..=i1[2] {
                    for &id in &self.cells[self.flat([x, y, z])] {
                        if !seen[id as usize] {
                            seen[id as usize] = true;
                            out.push(id);
                        }
                    }
                }
            }
        }
        out.sort_unstable();
        out
    }

    /// Walk the ray through grid cells, calling `visit(id, t_cell_entry)` for
    /// each candidate once. `visit` returns the current best hit parameter;
    /// traversal stops once the next cell's entry exceeds it.
    pub fn traverse_ray<F: FnMut(u32) -> f64>(
        &self,
        origin: &Point3<f64>,
        dir: &Vector3<f64>,
        mut visit: F,
    ) {
        // entry/exit of the grid box
        let mut t0: f64 = 0.0;
        let mut t1 = f64::INFINITY;
        for i in 0..3 {
            let lo = self.origin[i];
            let hi = self.origin[i] + self.cell * self.dims[i] as f64;
            if dir[i].abs() < 1e-15 {
                if origin[i] < lo || origin[i] > hi {
                    return;
                }
            } else {
                let (a, b) = ((lo - origin[i]) / dir[i], (hi - origin[i]) / dir[i]);
                let (a, b) = if a <= b { (a, b) } else { (b, a) };
                t0 = t0.max(a);
                t1 = t1.min(b);
            }
        }
        if t0 > t1 {
            return;
        }
        let start = origin + dir * (t0 + 1e-12);
        let mut cell = self.cell_of(&start);
        let step: [isize; 3] = [0, 1, 2].map(|i| if dir[i] > 0.0 { 1 } else { -1 });
        let mut t_next = [f64::INFINITY; 3];
        let mut t_delta = [f64::INFINITY; 3];
        for i in 0..3 {
            if dir[i].abs() >= 1e-15 {
                let next_boundary = self.origin[i]
                    + self.cell * (cell[i] as f64 + if dir[i] > 0.0 { 1.0 } else { 0.0 });
                t_next[i] = (next_boundary - origin[i]) / dir[i];
                t_delta[i] = self.cell / dir[i].abs();
            }
        }

        let mut seen = vec![false; self.n_items];
        let mut best = f64::INFINITY;
        let mut t_entry;
        loop {
            for &id in &self.cells[self.flat(cell)] {
                if !seen[id as usize] {
                    seen[id as usize] = true;
                    best = visit(id);
                }
            }
            // advance to the next cell
            let axis =
                if t_next[0] <= t_next[1] && t_next[0] <= t_next[2] { 0 } else if t_next[1] <= t_next[2] { 1 } else { 2 };
            t_entry = t_next[axis];
            if t_entry > t1 || t_entry > best {
                return;
            }
            let next = cell[axis] as isize + step[axis];
            if next < 0 || next as usize >= self.dims[axis] {
                return;
            }
            cell[axis] = next as usize;
            t_next[axis] += t_delta[axis];
        }
    }
}
