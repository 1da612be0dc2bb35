//! Static 2-D k-d tree over integer pixel positions.

/// Nearest stored point to a query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub col: usize,
    pub row: usize,
    pub distance: f64,
}

/// Balanced k-d tree stored implicitly in one array: the median of every
/// sub-range is its node, and the split axis alternates col/row with depth.
#[derive(Debug, Clone, Default)]
pub struct KdTree {
    points: Vec<(usize, usize)>,
}

impl KdTree {
    pub fn build(points: &[(usize, usize)]) -> Self {
        let mut points = points.to_vec();
        // Sort first so the layout does not depend on input order.
        points.sort_unstable_by_key(|&(c, r)| (r, c));
        points.dedup();
        let len = points.len();
        split(&mut points, 0, len, 0);
        Self { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Nearest point to `(col, row)`, `None` when the tree is empty.
    /// Equidistant points resolve to the smaller `(row, col)`.
    pub fn nearest(&self, col: f64, row: f64) -> Option<Neighbor> {
        let mut best: Option<(f64, usize)> = None;
        self.search(0, self.points.len(), 0, col, row, &mut best);
        best.map(|(d2, i)| {
            let (c, r) = self.points[i];
            Neighbor {
                col: c,
                row: r,
                distance: d2.sqrt(),
            }
        })
    }

    fn search(
        &self,
        lo: usize,
        hi: usize,
        depth: usize,
        qc: f64,
        qr: f64,
        best: &mut Option<(f64, usize)>,
    ) {
        if lo >= hi {
            return;
        }
        let mid = lo + (hi - lo) / 2;
        let (c, r) = self.points[mid];
        let d2 = squared_distance(qc, qr, c, r);
        let better = match *best {
            None => true,
            Some((bd2, bi)) => {
                let (bc, br) = self.points[bi];
                d2 < bd2 || (d2 == bd2 && (r, c) < (br, bc))
            }
        };
        if better {
            *best = Some((d2, mid));
        }

        let diff = if depth.is_multiple_of(2) {
            qc - c as f64
        } else {
            qr - r as f64
        };
        let (near, far) = if diff < 0.0 {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        self.search(near.0, near.1, depth + 1, qc, qr, best);
        // Equal plane distance still descends so ties can be resolved.
        if best.is_none_or(|(bd2, _)| diff * diff <= bd2) {
            self.search(far.0, far.1, depth + 1, qc, qr, best);
        }
    }
}

pub(crate) fn squared_distance(qc: f64, qr: f64, c: usize, r: usize) -> f64 {
    let dc = qc - c as f64;
    let dr = qr - r as f64;
    dc * dc + dr * dr
}

fn split(points: &mut [(usize, usize)], lo: usize, hi: usize, depth: usize) {
    if hi - lo <= 1 {
        return;
    }
    let mid = lo + (hi - lo) / 2;
    let slice = &mut points[lo..hi];
    if depth.is_multiple_of(2) {
        slice.select_nth_unstable_by_key(mid - lo, |&(c, r)| (c, r));
    } else {
        slice.select_nth_unstable_by_key(mid - lo, |&(c, r)| (r, c));
    }
    split(points, lo, mid, depth + 1);
    split(points, mid + 1, hi, depth + 1);
}
