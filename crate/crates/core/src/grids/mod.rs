//! Discretization grids and the interpolation operators between them:
//! the global uniform grid, uniform grids restricted to extended elements,
//! and per-element Legendre-Gauss-Lobatto grids.

pub mod fourier;
pub mod lgl;
mod uniform;

pub use lgl::{lgl_1d, Lgl1d, LglField, LglGrid};
pub use uniform::{UniformField, UniformGrid};

use crate::error::{Error, Result};
use crate::geometry::{ExtendedElement, Partition};
use ndarray::Array3;

/// Restriction of a global field to an extended element grid: a pure copy
/// of the wrapped subset of global node values, no arithmetic.
pub fn restrict_to_extended(global: &UniformField, q: &ExtendedElement) -> UniformField {
    let gshape = global.grid().shape();
    let idx: [Vec<usize>; 3] = [
        q.global_axis_indices(0, gshape[0]),
        q.global_axis_indices(1, gshape[1]),
        q.global_axis_indices(2, gshape[2]),
    ];
    let shape = q.grid.shape();
    let src = global.values();
    let mut out = Array3::zeros((shape[0], shape[1], shape[2]));
    for i in 0..shape[0] {
        for j in 0..shape[1] {
            for k in 0..shape[2] {
                out[[i, j, k]] = src[[idx[0][i], idx[1][j], idx[2][k]]];
            }
        }
    }
    UniformField::from_values(q.grid, out).expect("restriction shape")
}

/// Assembles per-element LGL fields into a field on the global uniform grid
/// by Lagrange interpolation, dimension by dimension. Uniform nodes shared
/// by several element boundaries receive the arithmetic mean of all
/// incident contributions.
pub fn lgl_to_uniform(
    partition: &Partition,
    fields: &[LglField],
    global: &UniformGrid,
) -> Result<UniformField> {
    if fields.len() != partition.len() {
        return Err(Error::invalid(format!(
            "expected one LGL field per element ({}), got {}",
            partition.len(),
            fields.len()
        )));
    }
    let gshape = global.shape();
    let spacing = global.spacing();
    let elem_ext = partition.element_extents();

    // Elements are congruent and grid-aligned, so the per-axis interpolation
    // matrix from LGL nodes to the covered uniform nodes (both element faces
    // included) is shared by all elements.
    let mut mats = Vec::with_capacity(3);
    let mut pts_per_elem = [0usize; 3];
    for a in 0..3 {
        let n_e = (elem_ext[a] / spacing[a]).round() as usize;
        if ((elem_ext[a] / spacing[a]) - n_e as f64).abs() > 1e-9 {
            return Err(Error::invalid(format!(
                "global grid spacing does not divide the element edge along axis {a}"
            )));
        }
        pts_per_elem[a] = n_e;
        let ref_targets: Vec<f64> = (0..=n_e)
            .map(|t| 2.0 * (t as f64 * spacing[a]) / elem_ext[a] - 1.0)
            .collect();
        let lgl = fields[0].grid().axis(a);
        mats.push(lgl.interpolation_matrix(&ref_targets));
    }

    let mut sum = Array3::<f64>::zeros((gshape[0], gshape[1], gshape[2]));
    let mut count = Array3::<f64>::zeros((gshape[0], gshape[1], gshape[2]));

    for (k, field) in fields.iter().enumerate() {
        let elem = partition.element(k);
        let mut vals = field.values().clone();
        for a in 0..3 {
            vals = fourier::apply_axis(&vals, &mats[a].view(), a);
        }
        let mut start = [0usize; 3];
        for a in 0..3 {
            start[a] = (elem.lower[a] / spacing[a]).round() as usize;
        }
        for i in 0..=pts_per_elem[0] {
            let gi = (start[0] + i) % gshape[0];
            for j in 0..=pts_per_elem[1] {
                let gj = (start[1] + j) % gshape[1];
                for l in 0..=pts_per_elem[2] {
                    let gl = (start[2] + l) % gshape[2];
                    sum[[gi, gj, gl]] += vals[[i, j, l]];
                    count[[gi, gj, gl]] += 1.0;
                }
            }
        }
    }

    let values = &sum / &count;
    UniformField::from_values(*global, values)
}
