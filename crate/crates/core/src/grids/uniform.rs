//! Uniform Cartesian grids on periodic boxes and scalar fields on them.

use crate::error::{Error, Result};
use ndarray::Array3;

/// Uniform Cartesian grid. Nodes sit at `lower + j*spacing`; there is no
/// node at the upper box face (periodic identification).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniformGrid {
    lower: [f64; 3],
    extents: [f64; 3],
    shape: [usize; 3],
}

impl UniformGrid {
    pub fn new(lower: [f64; 3], extents: [f64; 3], shape: [usize; 3]) -> Result<Self> {
        for a in 0..3 {
            if shape[a] == 0 {
                return Err(Error::invalid("uniform grid needs at least one point per axis"));
            }
            if !(extents[a] > 0.0) {
                return Err(Error::invalid("uniform grid extents must be positive"));
            }
        }
        Ok(UniformGrid {
            lower,
            extents,
            shape,
        })
    }

    pub fn lower(&self) -> [f64; 3] {
        self.lower
    }

    pub fn extents(&self) -> [f64; 3] {
        self.extents
    }

    pub fn shape(&self) -> [usize; 3] {
        self.shape
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn spacing(&self) -> [f64; 3] {
        [
            self.extents[0] / self.shape[0] as f64,
            self.extents[1] / self.shape[1] as f64,
            self.extents[2] / self.shape[2] as f64,
        ]
    }

    /// Volume element of the grid quadrature (trapezoid on a periodic box).
    pub fn volume_element(&self) -> f64 {
        let s = self.spacing();
        s[0] * s[1] * s[2]
    }

    pub fn volume(&self) -> f64 {
        self.extents.iter().product()
    }

    pub fn axis_coords(&self, axis: usize) -> Vec<f64> {
        let h = self.spacing()[axis];
        (0..self.shape[axis])
            .map(|j| self.lower[axis] + j as f64 * h)
            .collect()
    }

    pub fn node_position(&self, idx: [usize; 3]) -> [f64; 3] {
        let s = self.spacing();
        [
            self.lower[0] + idx[0] as f64 * s[0],
            self.lower[1] + idx[1] as f64 * s[1],
            self.lower[2] + idx[2] as f64 * s[2],
        ]
    }
}

/// Real scalar field sampled on a uniform grid.
#[derive(Debug, Clone)]
pub struct UniformField {
    grid: UniformGrid,
    values: Array3<f64>,
}

impl UniformField {
    pub fn zeros(grid: UniformGrid) -> Self {
        let s = grid.shape();
        UniformField {
            grid,
            values: Array3::zeros((s[0], s[1], s[2])),
        }
    }

    pub fn constant(grid: UniformGrid, c: f64) -> Self {
        let s = grid.shape();
        UniformField {
            grid,
            values: Array3::from_elem((s[0], s[1], s[2]), c),
        }
    }

    pub fn from_values(grid: UniformGrid, values: Array3<f64>) -> Result<Self> {
        let s = grid.shape();
        if values.dim() != (s[0], s[1], s[2]) {
            return Err(Error::invalid(format!(
                "field shape {:?} does not match grid shape {:?}",
                values.dim(),
                s
            )));
        }
        Ok(UniformField { grid, values })
    }

    /// Samples `f` at every node position.
    pub fn from_fn(grid: UniformGrid, mut f: impl FnMut([f64; 3]) -> f64) -> Self {
        let s = grid.shape();
        let mut values = Array3::zeros((s[0], s[1], s[2]));
        for i in 0..s[0] {
            for j in 0..s[1] {
                for k in 0..s[2] {
                    values[[i, j, k]] = f(grid.node_position([i, j, k]));
                }
            }
        }
        UniformField { grid, values }
    }

    pub fn grid(&self) -> &UniformGrid {
        &self.grid
    }

    pub fn values(&self) -> &Array3<f64> {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut Array3<f64> {
        &mut self.values
    }

    pub fn into_values(self) -> Array3<f64> {
        self.values
    }

    /// Grid-quadrature integral over the periodic box.
    pub fn integrate(&self) -> f64 {
        self.grid.volume_element() * self.values.sum()
    }

    pub fn mean(&self) -> f64 {
        self.values.sum() / self.values.len() as f64
    }

    /// Grid-quadrature inner product against another field on the same grid.
    pub fn inner(&self, other: &UniformField) -> f64 {
        debug_assert_eq!(self.grid, other.grid);
        self.grid.volume_element()
            * self
                .values
                .iter()
                .zip(other.values.iter())
                .map(|(a, b)| a * b)
                .sum::<f64>()
    }

    /// Grid-quadrature L2 norm.
    pub fn norm(&self) -> f64 {
        (self.grid.volume_element() * self.values.iter().map(|v| v * v).sum::<f64>()).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn spacing_and_nodes() {
        let g = UniformGrid::new([0.0, 0.0, 1.0], [2.0, 2.0, 4.0], [4, 4, 8]).unwrap();
        assert_eq!(g.spacing(), [0.5, 0.5, 0.5]);
        let xs = g.axis_coords(2);
        assert_eq!(xs.len(), 8);
        assert_abs_diff_eq!(xs[0], 1.0);
        assert_abs_diff_eq!(xs[7], 4.5);
    }

    #[test]
    fn integrate_constant_gives_volume() {
        let g = UniformGrid::new([0.0; 3], [2.0, 3.0, 4.0], [5, 6, 7]).unwrap();
        let f = UniformField::constant(g, 1.5);
        assert_abs_diff_eq!(f.integrate(), 1.5 * 24.0, epsilon = 1e-12);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let g = UniformGrid::new([0.0; 3], [1.0; 3], [2, 2, 2]).unwrap();
        assert!(UniformField::from_values(g, Array3::zeros((2, 2, 3))).is_err());
    }
}
