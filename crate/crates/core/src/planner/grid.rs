use serde::{Deserialize, Serialize};

use crate::geometry::{Aabb, Point2, Region};

/// Cell index `(col, row)`; `col` grows with world x, `row` with world y.
pub type Cell = (usize, usize);

/// Binary occupancy raster. Cell `(0, 0)` has its lower-left corner at `origin`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupancyGrid {
    resolution: f64,
    width: usize,
    height: usize,
    origin: Point2,
    cells: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GridError {
    #[error("grid resolution must be positive and finite, got {0}")]
    Resolution(f64),
    #[error("grid must have at least one cell, got {width}x{height}")]
    Empty { width: usize, height: usize },
}

impl OccupancyGrid {
    pub fn new(resolution: f64, width: usize, height: usize, origin: Point2) -> Result<Self, GridError> {
        if !(resolution > 0.0 && resolution.is_finite()) {
            return Err(GridError::Resolution(resolution));
        }
        if width == 0 || height == 0 {
            return Err(GridError::Empty { width, height });
        }
        Ok(Self {
            resolution,
            width,
            height,
            origin,
            cells: vec![false; width * height],
        })
    }

    /// Grid covering `bounds` (expanded to whole cells).
    pub fn covering(bounds: &Aabb, resolution: f64) -> Result<Self, GridError> {
        let width = ((bounds.max.x - bounds.min.x) / resolution - 1e-9).ceil().max(1.0) as usize;
        let height = ((bounds.max.y - bounds.min.y) / resolution - 1e-9).ceil().max(1.0) as usize;
        Self::new(resolution, width, height, bounds.min)
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn origin(&self) -> Point2 {
        self.origin
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn index(&self, cell: Cell) -> usize {
        cell.1 * self.width + cell.0
    }

    pub fn cell_of_index(&self, index: usize) -> Cell {
        (index % self.width, index / self.width)
    }

    pub fn in_bounds(&self, col: i64, row: i64) -> bool {
        col >= 0 && row >= 0 && (col as usize) < self.width && (row as usize) < self.height
    }

    /// Cell containing `p`, or `None` outside the grid.
    pub fn world_to_cell(&self, p: &Point2) -> Option<Cell> {
        if !p.is_finite() {
            return None;
        }
        let col = ((p.x - self.origin.x) / self.resolution).floor();
        let row = ((p.y - self.origin.y) / self.resolution).floor();
        if col < 0.0 || row < 0.0 {
            return None;
        }
        let (col, row) = (col as usize, row as usize);
        (col < self.width && row < self.height).then_some((col, row))
    }

    pub fn cell_center(&self, cell: Cell) -> Point2 {
        Point2::new(
            self.origin.x + (cell.0 as f64 + 0.5) * self.resolution,
            self.origin.y + (cell.1 as f64 + 0.5) * self.resolution,
        )
    }

    pub fn cell_bounds(&self, cell: Cell) -> Aabb {
        let min = Point2::new(
            self.origin.x + cell.0 as f64 * self.resolution,
            self.origin.y + cell.1 as f64 * self.resolution,
        );
        Aabb {
            min,
            max: Point2::new(min.x + self.resolution, min.y + self.resolution),
        }
    }

    pub fn bounds(&self) -> Aabb {
        Aabb {
            min: self.origin,
            max: Point2::new(
                self.origin.x + self.width as f64 * self.resolution,
                self.origin.y + self.height as f64 * self.resolution,
            ),
        }
    }

    pub fn is_occupied(&self, cell: Cell) -> bool {
        self.cells[self.index(cell)]
    }

    /// Occupancy lookup that treats everything outside the grid as occupied.
    pub fn is_occupied_signed(&self, col: i64, row: i64) -> bool {
        !self.in_bounds(col, row) || self.cells[row as usize * self.width + col as usize]
    }

    pub fn set(&mut self, cell: Cell, occupied: bool) {
        let i = self.index(cell);
        self.cells[i] = occupied;
    }

    pub fn occupied_at_index(&self, index: usize) -> bool {
        self.cells[index]
    }

    pub fn occupied_count(&self) -> usize {
        self.cells.iter().filter(|&&c| c).count()
    }

    /// Marks every cell whose square overlaps the region's interior.
    pub fn rasterize(&mut self, region: &Region) {
        const EPS: f64 = 1e-9;
        let b = region.bounds();
        let c0 = (((b.min.x - self.origin.x) / self.resolution).floor() as i64).max(0);
        let r0 = (((b.min.y - self.origin.y) / self.resolution).floor() as i64).max(0);
        let c1 = (((b.max.x - self.origin.x) / self.resolution).ceil() as i64).min(self.width as i64 - 1);
        let r1 = (((b.max.y - self.origin.y) / self.resolution).ceil() as i64).min(self.height as i64 - 1);
        for row in r0..=r1 {
            for col in c0..=c1 {
                let cell = (col as usize, row as usize);
                if region.overlaps_aabb(&self.cell_bounds(cell), EPS) {
                    self.set(cell, true);
                }
            }
        }
    }

    /// Cell-wise union with another grid of identical geometry.
    pub fn union_with(&mut self, other: &OccupancyGrid) {
        assert_eq!((self.width, self.height), (other.width, other.height));
        for (a, b) in self.cells.iter_mut().zip(&other.cells) {
            *a |= *b;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_and_world_mapping_are_bijective() {
        let g = OccupancyGrid::new(0.1, 7, 5, Point2::new(-1.0, 2.0)).unwrap();
        for row in 0..5 {
            for col in 0..7 {
                let c = g.cell_center((col, row));
                assert_eq!(g.world_to_cell(&c), Some((col, row)));
                assert_eq!(g.cell_of_index(g.index((col, row))), (col, row));
            }
        }
        assert_eq!(g.world_to_cell(&Point2::new(-1.01, 2.0)), None);
    }

    #[test]
    fn rasterize_aligned_box_does_not_bleed() {
        let mut g = OccupancyGrid::new(0.5, 10, 10, Point2::new(0.0, 0.0)).unwrap();
        g.rasterize(&Region::Rect {
            bounds: Aabb::new(Point2::new(1.0, 1.0), Point2::new(2.0, 1.5)),
        });
        assert_eq!(g.occupied_count(), 2);
        assert!(g.is_occupied((2, 2)) && g.is_occupied((3, 2)));
    }

    #[test]
    fn rejects_bad_resolution() {
        assert!(OccupancyGrid::new(0.0, 1, 1, Point2::default()).is_err());
    }
}
