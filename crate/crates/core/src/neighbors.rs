//! Fixed-radius neighbor search on a uniform background grid.
//!
//! Both routes use the same strict predicate `|x_i − x_j|² < r²`, so the grid
//! search and the brute-force scan agree bit for bit on the pair set.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor::Vec2;

/// Compressed per-particle neighbor lists, each sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct NeighborList {
    offsets: Vec<usize>,
    indices: Vec<usize>,
}

impl NeighborList {
    fn from_lists(lists: Vec<Vec<usize>>) -> Self {
        let mut offsets = Vec::with_capacity(lists.len() + 1);
        offsets.push(0);
        let mut indices = Vec::with_capacity(lists.iter().map(Vec::len).sum());
        for l in lists {
            indices.extend_from_slice(&l);
            offsets.push(indices.len());
        }
        Self { offsets, indices }
    }

    pub fn len(&self) -> usize {
        self.offsets.len().saturating_sub(1)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.indices[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.neighbors(i).binary_search(&j).is_ok()
    }

    pub fn pair_count(&self) -> usize {
        self.indices.len() / 2
    }

    /// Canonical pairs (i < j), ordered by i then j.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.len()).flat_map(move |i| {
            self.neighbors(i)
                .iter()
                .copied()
                .filter(move |&j| j > i)
                .map(move |j| (i, j))
        })
    }
}

#[inline]
fn within(a: &Vec2, b: &Vec2, r2: f64) -> bool {
    let dx = a.x - b.x;
    let dy = a.y - b.y;
    dx * dx + dy * dy < r2
}

/// O(N²) reference enumeration.
pub fn brute_force(positions: &[Vec2], radius: f64) -> Result<NeighborList> {
    if !(radius > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "search radius must be positive, got {radius}"
        )));
    }
    let r2 = radius * radius;
    let lists = (0..positions.len())
        .map(|i| {
            (0..positions.len())
                .filter(|&j| j != i && within(&positions[i], &positions[j], r2))
                .collect()
        })
        .collect();
    Ok(NeighborList::from_lists(lists))
}

/// Grid search with cells of size `cell_size ≥ radius`, scanning the 3×3 block
/// of cells around each particle.
pub fn build_grid(positions: &[Vec2], radius: f64, cell_size: f64) -> Result<NeighborList> {
    if !(radius > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "search radius must be positive, got {radius}"
        )));
    }
    if !(cell_size >= radius) || !cell_size.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "cell size {cell_size} must be at least the search radius {radius}"
        )));
    }
    if let Some(i) = positions.iter().position(|p| !p.x.is_finite() || !p.y.is_finite()) {
        return Err(Error::DataCorruption(format!(
            "non-finite position for particle {i}: ({}, {})",
            positions[i].x, positions[i].y
        )));
    }
    if positions.is_empty() {
        return Ok(NeighborList::from_lists(Vec::new()));
    }

    let (mut x0, mut y0) = (f64::INFINITY, f64::INFINITY);
    for p in positions {
        x0 = x0.min(p.x);
        y0 = y0.min(p.y);
    }
    let cell_of = |p: &Vec2| -> (i64, i64) {
        (
            ((p.x - x0) / cell_size).floor() as i64,
            ((p.y - y0) / cell_size).floor() as i64,
        )
    };

    // Sort particles by (cy, cx); `cells` holds the distinct keys with start offsets.
    let keys: Vec<(i64, i64)> = positions.iter().map(|p| {
        let (cx, cy) = cell_of(p);
        (cy, cx)
    }).collect();
    let mut order: Vec<usize> = (0..positions.len()).collect();
    order.sort_unstable_by_key(|&i| (keys[i], i));
    let mut cells: Vec<((i64, i64), usize)> = Vec::new();
    for (k, &i) in order.iter().enumerate() {
        if cells.last().map(|c| c.0) != Some(keys[i]) {
            cells.push((keys[i], k));
        }
    }
    let cell_range = |key: (i64, i64)| -> Option<&[usize]> {
        let c = cells.binary_search_by(|probe| probe.0.cmp(&key)).ok()?;
        let start = cells[c].1;
        let end = cells.get(c + 1).map_or(order.len(), |n| n.1);
        Some(&order[start..end])
    };

    let r2 = radius * radius;
    let lists: Vec<Vec<usize>> = (0..positions.len())
        .into_par_iter()
        .map(|i| {
            let (cy, cx) = keys[i];
            let mut found = Vec::new();
            for dy in -1..=1 {
                for dx in -1..=1 {
                    if let Some(members) = cell_range((cy + dy, cx + dx)) {
                        found.extend(
                            members
                                .iter()
                                .copied()
                                .filter(|&j| j != i && within(&positions[i], &positions[j], r2)),
                        );
                    }
                }
            }
            found.sort_unstable();
            found
        })
        .collect();
    Ok(NeighborList::from_lists(lists))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lattice(n: usize, spacing: f64) -> Vec<Vec2> {
        let mut v = Vec::new();
        for j in 0..n {
            for i in 0..n {
                v.push(Vec2::new(i as f64 * spacing, j as f64 * spacing));
            }
        }
        v
    }

    #[test]
    fn pair_inside_support() {
        let pts = [Vec2::new(0.0, 0.0), Vec2::new(0.5, 0.0)];
        let nl = build_grid(&pts, 0.9, 0.9).unwrap();
        assert_eq!(nl.neighbors(0), &[1]);
        assert_eq!(nl.neighbors(1), &[0]);
    }

    #[test]
    fn pair_at_support_excluded() {
        let pts = [Vec2::new(0.0, 0.0), Vec2::new(0.9, 0.0)];
        let nl = build_grid(&pts, 0.9, 0.9).unwrap();
        assert!(nl.neighbors(0).is_empty());
        assert_eq!(nl.pair_count(), 0);
    }

    #[test]
    fn empty_and_triangle() {
        assert!(brute_force(&[], 1.0).unwrap().is_empty());
        let s = 0.8;
        let tri = [
            Vec2::new(0.0, 0.0),
            Vec2::new(s, 0.0),
            Vec2::new(0.5 * s, 0.5 * 3f64.sqrt() * s),
        ];
        let nl = brute_force(&tri, 1.0).unwrap();
        assert_eq!(nl.pairs().collect::<Vec<_>>(), vec![(0, 1), (0, 2), (1, 2)]);
    }

    #[test]
    fn interior_lattice_particle_has_eight_neighbors() {
        let pts = lattice(10, 0.5);
        let nl = brute_force(&pts, 0.9).unwrap();
        for j in 1..9 {
            for i in 1..9 {
                assert_eq!(nl.neighbors(j * 10 + i).len(), 8);
            }
        }
        assert_eq!(nl.neighbors(0).len(), 3);
        assert_eq!(build_grid(&pts, 0.9, 0.9).unwrap(), nl);
    }

    #[test]
    fn rejects_bad_input() {
        let pts = [Vec2::new(0.0, f64::NAN)];
        assert!(matches!(build_grid(&pts, 1.0, 1.0), Err(Error::DataCorruption(_))));
        assert!(build_grid(&[Vec2::zeros()], 1.0, 0.5).is_err());
        assert!(brute_force(&[], 0.0).is_err());
    }

    #[test]
    fn rebuild_is_identical() {
        let pts = lattice(7, 0.5);
        let a = build_grid(&pts, 0.9, 0.9).unwrap();
        let b = build_grid(&pts, 0.9, 0.9).unwrap();
        assert_eq!(a, b);
    }
}
