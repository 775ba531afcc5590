//! Point-region quadtree with per-cell centres of mass.

/// Subdivision stops at this depth; coincident points share a leaf.
const MAX_DEPTH: usize = 48;

#[derive(Clone, Debug)]
pub struct Cell {
    pub center: [f64; 2],
    pub half: f64,
    pub count: usize,
    /// Sum of member coordinates.
    pub sum: [f64; 2],
    pub children: Option<[usize; 4]>,
    /// Members of a leaf.
    pub points: Vec<usize>,
}

impl Cell {
    pub fn center_of_mass(&self) -> [f64; 2] {
        [
            self.sum[0] / self.count as f64,
            self.sum[1] / self.count as f64,
        ]
    }

    /// Side length of the cell.
    pub fn width(&self) -> f64 {
        2.0 * self.half
    }

    fn new(center: [f64; 2], half: f64) -> Self {
        Cell {
            center,
            half,
            count: 0,
            sum: [0.0; 2],
            children: None,
            points: Vec::new(),
        }
    }

    fn quadrant(&self, p: [f64; 2]) -> usize {
        usize::from(p[0] >= self.center[0]) + 2 * usize::from(p[1] >= self.center[1])
    }
}

#[derive(Clone, Debug)]
pub struct QuadTree {
    pub cells: Vec<Cell>,
}

/// Repulsive sums for one point.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Repulsion {
    /// `Σ_j (1 + d²)⁻² (y_i − y_j)`.
    pub force: [f64; 2],
    /// `Σ_j (1 + d²)⁻¹`.
    pub z: f64,
}

impl QuadTree {
    pub fn build(points: &[[f64; 2]]) -> Self {
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for p in points {
            for a in 0..2 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        if points.is_empty() {
            lo = [0.0; 2];
            hi = [0.0; 2];
        }
        let center = [(lo[0] + hi[0]) / 2.0, (lo[1] + hi[1]) / 2.0];
        let half = ((hi[0] - lo[0]).max(hi[1] - lo[1]) / 2.0).max(1e-12) * (1.0 + 1e-9);
        let mut tree = QuadTree {
            cells: vec![Cell::new(center, half)],
        };
        for (i, &p) in points.iter().enumerate() {
            tree.insert(points, i, p);
        }
        tree
    }

    fn insert(&mut self, points: &[[f64; 2]], idx: usize, p: [f64; 2]) {
        let mut c = 0;
        let mut depth = 0;
        loop {
            let cell = &mut self.cells[c];
            cell.count += 1;
            cell.sum[0] += p[0];
            cell.sum[1] += p[1];
            match cell.children {
                Some(ch) => {
                    c = ch[cell.quadrant(p)];
                    depth += 1;
                }
                None => {
                    if cell.points.is_empty() || depth >= MAX_DEPTH {
                        cell.points.push(idx);
                        return;
                    }
                    self.split(points, c);
                    // the split cell already counts `p`; continue into its child
                    let cell = &self.cells[c];
                    let next = cell.children.expect("just split")[cell.quadrant(p)];
                    c = next;
                    depth += 1;
                }
            }
        }
    }

    fn split(&mut self, points: &[[f64; 2]], c: usize) {
        let (center, half) = (self.cells[c].center, self.cells[c].half / 2.0);
        let base = self.cells.len();
        for q in 0..4 {
            let dx = if q & 1 == 1 { half } else { -half };
            let dy = if q & 2 == 2 { half } else { -half };
            self.cells
                .push(Cell::new([center[0] + dx, center[1] + dy], half));
        }
        self.cells[c].children = Some([base, base + 1, base + 2, base + 3]);
        for i in std::mem::take(&mut self.cells[c].points) {
            let p = points[i];
            let child = base + self.cells[c].quadrant(p);
            let cell = &mut self.cells[child];
            cell.count += 1;
            cell.sum[0] += p[0];
            cell.sum[1] += p[1];
            cell.points.push(i);
        }
    }

    pub fn root(&self) -> &Cell {
        &self.cells[0]
    }

    /// Total members over all leaves.
    pub fn leaf_point_count(&self) -> usize {
        self.cells
            .iter()
            .filter(|c| c.children.is_none())
            .map(|c| c.points.len())
            .sum()
    }

    /// Barnes-Hut repulsion on point `i` at `y`. A cell is summarised by its
    /// centre of mass when `width / distance < theta`; leaves are summed
    /// point by point, skipping `i`.
    pub fn repulsion(&self, points: &[[f64; 2]], i: usize, theta: f64) -> Repulsion {
        let y = points[i];
        let mut out = Repulsion::default();
        let mut stack = vec![0usize];
        while let Some(c) = stack.pop() {
            let cell = &self.cells[c];
            if cell.count == 0 {
                continue;
            }
            match cell.children {
                None => {
                    for &j in &cell.points {
                        if j != i {
                            accumulate(&mut out, y, points[j], 1.0);
                        }
                    }
                }
                Some(ch) => {
                    let com = cell.center_of_mass();
                    let d2 = (y[0] - com[0]).powi(2) + (y[1] - com[1]).powi(2);
                    if theta > 0.0 && cell.width() < theta * d2.sqrt() {
                        accumulate(&mut out, y, com, cell.count as f64);
                    } else {
                        stack.extend(ch.iter().rev());
                    }
                }
            }
        }
        out
    }
}

fn accumulate(out: &mut Repulsion, y: [f64; 2], other: [f64; 2], weight: f64) {
    let (dx, dy) = (y[0] - other[0], y[1] - other[1]);
    let q = 1.0 / (1.0 + dx * dx + dy * dy);
    out.z += weight * q;
    let f = weight * q * q;
    out.force[0] += f * dx;
    out.force[1] += f * dy;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coincident_points_share_a_leaf() {
        let pts = [[1.0, 1.0]; 5];
        let t = QuadTree::build(&pts);
        assert_eq!(t.leaf_point_count(), 5);
        let r = t.repulsion(&pts, 0, 0.5);
        assert_eq!(r.z, 4.0);
        assert_eq!(r.force, [0.0, 0.0]);
    }

    #[test]
    fn root_mass_is_the_mean() {
        let pts = [[0.0, 0.0], [2.0, 0.0], [1.0, 3.0], [-1.0, 1.0]];
        let t = QuadTree::build(&pts);
        assert_eq!(t.root().count, 4);
        let com = t.root().center_of_mass();
        assert!((com[0] - 0.5).abs() < 1e-12 && (com[1] - 1.0).abs() < 1e-12);
    }
}
