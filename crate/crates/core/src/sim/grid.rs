//! Uniform cell grid over the torus used to restrict membership scans to
//! apexes that can possibly reach the query site.

/// Upper bound on the number of cells in a grid.
const MAX_CELLS: usize = 1 << 22;

#[derive(Debug, Clone)]
pub(crate) struct CellGrid {
    d: usize,
    per_dim: usize,
    width: f64,
    cells: Vec<Vec<u32>>,
}

impl CellGrid {
    /// Grid whose cell width is `side / ceil(side / (2 * reach_hint))`, coarsened
    /// when the cell count would exceed [`MAX_CELLS`].
    pub(crate) fn new(d: usize, side: f64, reach_hint: f64) -> Self {
        let mut per_dim = if reach_hint.is_finite() && reach_hint > 0.0 {
            (side / (2.0 * reach_hint)).ceil().max(1.0)
        } else {
            1.0
        };
        let cap = (MAX_CELLS as f64).powf(1.0 / d as f64).floor().max(1.0);
        per_dim = per_dim.min(cap);
        let per_dim = per_dim as usize;
        CellGrid {
            d,
            per_dim,
            width: side / per_dim as f64,
            cells: vec![Vec::new(); per_dim.pow(d as u32)],
        }
    }

    fn cell_coord(&self, c: f64) -> usize {
        ((c / self.width) as usize).min(self.per_dim - 1)
    }

    pub(crate) fn insert(&mut self, location: &[f64], id: u32) {
        let mut flat = 0usize;
        for &c in location {
            flat = flat * self.per_dim + self.cell_coord(c);
        }
        self.cells[flat].push(id);
    }

    /// Calls `visit` for every id stored in a cell within `radius` of `x`,
    /// stopping early when `visit` returns true. Returns whether it stopped.
    pub(crate) fn any_within<F>(&self, x: &[f64], radius: f64, mut visit: F) -> bool
    where
        F: FnMut(u32) -> bool,
    {
        let m = self.per_dim;
        let reach = if radius.is_finite() {
            (radius / self.width).ceil() as usize + 1
        } else {
            m
        };
        // per-dimension list of cell coordinates to visit
        let axes: Vec<Vec<usize>> = x
            .iter()
            .map(|&c| {
                if 2 * reach + 1 >= m {
                    (0..m).collect()
                } else {
                    let home = self.cell_coord(c) + m;
                    (home - reach..=home + reach).map(|i| i % m).collect()
                }
            })
            .collect();
        let mut odometer = vec![0usize; self.d];
        loop {
            let mut flat = 0usize;
            for (axis, &pos) in axes.iter().zip(&odometer) {
                flat = flat * m + axis[pos];
            }
            if self.cells[flat].iter().any(|&id| visit(id)) {
                return true;
            }
            let mut dim = self.d;
            loop {
                if dim == 0 {
                    return false;
                }
                dim -= 1;
                odometer[dim] += 1;
                if odometer[dim] < axes[dim].len() {
                    break;
                }
                odometer[dim] = 0;
            }
        }
    }

    #[cfg(test)]
    pub(crate) fn per_dim(&self) -> usize {
        self.per_dim
    }
}
