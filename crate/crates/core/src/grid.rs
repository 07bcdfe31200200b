//! Pixel grid as a graph.
//!
//! Node ids are row-major (`row * w + col`). A [`Stencil`] enumerates the
//! neighbor offsets of a [`Neighborhood`] in raster order; the position of an
//! offset in that list is its *neighbor index* `c`, which is the same for every
//! node. Offsets falling outside the grid are skipped at the border but never
//! renumber the remaining neighbors.

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GridShape {
    pub h: usize,
    pub w: usize,
}

impl GridShape {
    pub fn new(h: usize, w: usize) -> Result<Self> {
        if h == 0 || w == 0 {
            return Err(invalid(format!("grid must be non-empty, got {h}x{w}")));
        }
        Ok(Self { h, w })
    }

    /// Number of nodes `h * w`.
    pub fn len(&self) -> usize {
        self.h * self.w
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, row: i64, col: i64) -> bool {
        row >= 0 && col >= 0 && (row as usize) < self.h && (col as usize) < self.w
    }

    /// Row-major node id of an in-grid coordinate.
    pub fn nid(&self, row: i64, col: i64) -> Result<NodeId> {
        if !self.contains(row, col) {
            return Err(Error::OutOfGrid {
                row,
                col,
                h: self.h,
                w: self.w,
            });
        }
        Ok(NodeId(row as usize * self.w + col as usize))
    }

    /// Inverse of [`GridShape::nid`].
    pub fn coord(&self, id: NodeId) -> (usize, usize) {
        (id.0 / self.w, id.0 % self.w)
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> {
        (0..self.len()).map(NodeId)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Stencil shape. The center pixel is never part of the neighborhood.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Neighborhood {
    /// `side x side` square, `side` odd.
    Square { side: usize },
    /// Lattice disk `dr^2 + dc^2 <= radius^2`.
    Disk { radius: usize },
}

impl Neighborhood {
    pub fn square(side: usize) -> Result<Self> {
        if side.is_multiple_of(2) {
            return Err(invalid(format!(
                "square stencil side must be odd, got {side}"
            )));
        }
        Ok(Neighborhood::Square { side })
    }

    pub fn disk(radius: usize) -> Result<Self> {
        if radius == 0 {
            return Err(invalid("disk stencil radius must be >= 1"));
        }
        Ok(Neighborhood::Disk { radius })
    }

    /// Half-width of the bounding box.
    pub fn reach(&self) -> usize {
        match *self {
            Neighborhood::Square { side } => (side - 1) / 2,
            Neighborhood::Disk { radius } => radius,
        }
    }

    fn admits(&self, dr: i64, dc: i64) -> bool {
        if dr == 0 && dc == 0 {
            return false;
        }
        match *self {
            Neighborhood::Square { side } => {
                let half = ((side - 1) / 2) as i64;
                dr.abs().max(dc.abs()) <= half
            }
            Neighborhood::Disk { radius } => {
                let r = radius as i64;
                dr * dr + dc * dc <= r * r
            }
        }
    }
}

/// Raster-ordered offsets of a [`Neighborhood`] with O(1) offset-to-index lookup.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stencil {
    kind: Neighborhood,
    offsets: Vec<(i64, i64)>,
    // (2*reach+1)^2 table, usize::MAX where the offset is not in the stencil
    lookup: Vec<usize>,
    opposite: Vec<usize>,
}

impl Stencil {
    pub fn new(kind: Neighborhood) -> Self {
        let reach = kind.reach() as i64;
        let span = (2 * reach + 1) as usize;
        let mut offsets = Vec::new();
        let mut lookup = vec![usize::MAX; span * span];
        for dr in -reach..=reach {
            for dc in -reach..=reach {
                if kind.admits(dr, dc) {
                    lookup[((dr + reach) as usize) * span + (dc + reach) as usize] = offsets.len();
                    offsets.push((dr, dc));
                }
            }
        }
        let mut stencil = Stencil {
            kind,
            offsets,
            lookup,
            opposite: Vec::new(),
        };
        // both stencil families are point-symmetric, so the negated offset is always present
        stencil.opposite = stencil
            .offsets
            .iter()
            .map(|&(dr, dc)| {
                stencil
                    .index_of(-dr, -dc)
                    .expect("stencil is point-symmetric")
            })
            .collect();
        stencil
    }

    pub fn kind(&self) -> Neighborhood {
        self.kind
    }

    /// Offsets `(dr, dc)` in raster order. Its length is the neighbor count `n`.
    pub fn offsets(&self) -> &[(i64, i64)] {
        &self.offsets
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    /// Neighbor index of an offset, if the offset belongs to the stencil.
    pub fn index_of(&self, dr: i64, dc: i64) -> Option<usize> {
        let reach = self.kind.reach() as i64;
        if dr.abs() > reach || dc.abs() > reach {
            return None;
        }
        let span = 2 * reach + 1;
        let idx = self.lookup[((dr + reach) * span + dc + reach) as usize];
        (idx != usize::MAX).then_some(idx)
    }

    /// Index of the negated offset: if `j` is the `c`-th neighbor of `i`, then
    /// `i` is the `opposite(c)`-th neighbor of `j`.
    pub fn opposite(&self, c: usize) -> usize {
        self.opposite[c]
    }

    /// In-grid neighbors of `node` as `(c, neighbor)` pairs, in stencil order.
    pub fn neighbors(
        &self,
        node: NodeId,
        shape: GridShape,
    ) -> impl Iterator<Item = (usize, NodeId)> + '_ {
        let (row, col) = shape.coord(node);
        let (row, col) = (row as i64, col as i64);
        self.offsets
            .iter()
            .enumerate()
            .filter_map(move |(c, &(dr, dc))| {
                let (r, q) = (row + dr, col + dc);
                shape
                    .contains(r, q)
                    .then(|| (c, NodeId(r as usize * shape.w + q as usize)))
            })
    }

    /// Neighbor at stencil position `c`, if in grid.
    pub fn neighbor_at(&self, node: NodeId, c: usize, shape: GridShape) -> Option<NodeId> {
        let (row, col) = shape.coord(node);
        let (dr, dc) = self.offsets[c];
        let (r, q) = (row as i64 + dr, col as i64 + dc);
        shape
            .contains(r, q)
            .then(|| NodeId(r as usize * shape.w + q as usize))
    }
}

/// Free-function form of [`Stencil::new`] followed by [`Stencil::offsets`].
pub fn stencil_offsets(kind: Neighborhood) -> Vec<(i64, i64)> {
    Stencil::new(kind).offsets
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn lattice_count(bound: i64) -> usize {
        let mut n = 0;
        for x in -bound..=bound {
            for y in -bound..=bound {
                if x * x + y * y <= bound * bound && (x, y) != (0, 0) {
                    n += 1;
                }
            }
        }
        n
    }

    #[test]
    fn nid_examples() {
        let s = GridShape::new(3, 4).unwrap();
        assert_eq!(s.nid(0, 0).unwrap(), NodeId(0));
        assert_eq!(s.nid(1, 2).unwrap(), NodeId(6));
        assert_eq!(s.nid(2, 3).unwrap(), NodeId(11));
        assert!(matches!(s.nid(3, 0), Err(Error::OutOfGrid { .. })));
        assert!(matches!(s.nid(0, -1), Err(Error::OutOfGrid { .. })));
    }

    #[test]
    fn empty_grid_rejected() {
        assert!(GridShape::new(0, 3).is_err());
        assert!(GridShape::new(3, 0).is_err());
    }

    #[test]
    fn nid_is_bijective_on_small_grids() {
        for h in 1..6 {
            for w in 1..6 {
                let s = GridShape::new(h, w).unwrap();
                let mut seen = vec![false; s.len()];
                for r in 0..h {
                    for c in 0..w {
                        let id = s.nid(r as i64, c as i64).unwrap();
                        assert!(!seen[id.0]);
                        seen[id.0] = true;
                        assert_eq!(s.coord(id), (r, c));
                    }
                }
                assert!(seen.iter().all(|&b| b));
            }
        }
    }

    #[test]
    fn stencil_cardinalities() {
        assert_eq!(stencil_offsets(Neighborhood::square(3).unwrap()).len(), 8);
        assert_eq!(
            stencil_offsets(Neighborhood::square(17).unwrap()).len(),
            288
        );
        assert_eq!(lattice_count(4), 48);
        assert_eq!(lattice_count(5), 80);
        assert_eq!(stencil_offsets(Neighborhood::disk(4).unwrap()).len(), 48);
        assert_eq!(stencil_offsets(Neighborhood::disk(5).unwrap()).len(), 80);
    }

    #[test]
    fn stencil_is_raster_ordered() {
        for kind in [
            Neighborhood::square(5).unwrap(),
            Neighborhood::disk(3).unwrap(),
        ] {
            let offs = stencil_offsets(kind);
            assert!(offs.windows(2).all(|p| p[0] < p[1]));
            assert!(!offs.contains(&(0, 0)));
        }
    }

    #[test]
    fn invalid_stencils() {
        assert!(Neighborhood::square(4).is_err());
        assert!(Neighborhood::square(0).is_err());
        assert!(Neighborhood::disk(0).is_err());
    }

    #[test]
    fn interior_and_corner_neighbors() {
        let shape = GridShape::new(5, 5).unwrap();
        let st = Stencil::new(Neighborhood::square(3).unwrap());
        let inner: Vec<_> = st.neighbors(shape.nid(2, 2).unwrap(), shape).collect();
        assert_eq!(
            inner.iter().map(|p| p.0).collect::<Vec<_>>(),
            (0..8).collect::<Vec<_>>()
        );

        // Offsets surviving at (0,0): (0,1), (1,0), (1,1) -> raster positions 4, 6, 7.
        let expected: Vec<usize> = st
            .offsets()
            .iter()
            .enumerate()
            .filter(|(_, &(dr, dc))| dr >= 0 && dc >= 0)
            .map(|(c, _)| c)
            .collect();
        assert_eq!(expected, vec![4, 6, 7]);
        let corner: Vec<_> = st.neighbors(NodeId(0), shape).collect();
        assert_eq!(corner, vec![(4, NodeId(1)), (6, NodeId(5)), (7, NodeId(6))]);
    }

    #[test]
    fn disk4_interior_count() {
        let shape = GridShape::new(64, 96).unwrap();
        let st = Stencil::new(Neighborhood::disk(4).unwrap());
        assert_eq!(st.neighbors(shape.nid(30, 40).unwrap(), shape).count(), 48);
    }

    #[test]
    fn opposite_negates_offset() {
        let st = Stencil::new(Neighborhood::disk(5).unwrap());
        for c in 0..st.len() {
            let (dr, dc) = st.offsets()[c];
            assert_eq!(st.offsets()[st.opposite(c)], (-dr, -dc));
            assert_eq!(st.opposite(st.opposite(c)), c);
        }
    }

    proptest! {
        #[test]
        fn neighbor_symmetry_and_index_stability(
            h in 1usize..12, w in 1usize..12, side in 0usize..3, disk in any::<bool>(),
            seed in any::<u64>()
        ) {
            let shape = GridShape::new(h, w).unwrap();
            let kind = if disk {
                Neighborhood::disk(side + 1).unwrap()
            } else {
                Neighborhood::square(2 * side + 1).unwrap()
            };
            let st = Stencil::new(kind);
            let i = NodeId((seed as usize) % shape.len());
            for (c, j) in st.neighbors(i, shape) {
                let (ri, ci) = shape.coord(i);
                let (rj, cj) = shape.coord(j);
                // index depends only on the offset
                prop_assert_eq!(st.index_of(rj as i64 - ri as i64, cj as i64 - ci as i64), Some(c));
                // j in N(i) <=> i in N(j)
                prop_assert!(st.neighbors(j, shape).any(|(c2, k)| k == i && c2 == st.opposite(c)));
            }
        }
    }
}
