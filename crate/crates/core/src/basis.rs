//! Adaptive local basis construction: a periodic spectral Hamiltonian on
//! each buffered extended element is diagonalized, its lowest eigenfunctions
//! are restricted to the element's LGL grid by trigonometric interpolation,
//! and the restrictions are SVD-filtered into a set orthonormal under the
//! LGL-weighted discrete inner product (which is what turns the DG mass
//! matrix into the identity).

use crate::error::{Error, Result};
use crate::geometry::{extended_element, ExtendedElement, Partition, Side};
use crate::grids::fourier::trig_interp_matrix;
use crate::grids::{restrict_to_extended, LglGrid, UniformField, UniformGrid};
use crate::hamiltonian::PseudoPotential;
use crate::reference::{lobpcg, random_block, EigenSolution, LobpcgOptions, SpectralHamiltonian};
use nalgebra::DMatrix;
use ndarray::Array2;
use rand::SeedableRng;
use std::sync::Arc;

/// Flattened (row-major) node indices of one element face inside the full
/// LGL node ordering, tangential axes ascending.
pub(crate) fn face_node_rows(shape: [usize; 3], side: Side) -> Vec<usize> {
    let fixed = if side.upper { shape[side.axis] - 1 } else { 0 };
    let (t1, t2) = crate::grids::lgl::tangential_axes(side.axis);
    let mut rows = Vec::with_capacity(shape[t1] * shape[t2]);
    let mut idx = [0usize; 3];
    idx[side.axis] = fixed;
    for a in 0..shape[t1] {
        idx[t1] = a;
        for b in 0..shape[t2] {
            idx[t2] = b;
            rows.push((idx[0] * shape[1] + idx[1]) * shape[2] + idx[2]);
        }
    }
    rows
}

fn gather_rows(m: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(rows.len(), m.ncols());
    for (r, &src) in rows.iter().enumerate() {
        for c in 0..m.ncols() {
            out[(r, c)] = m[(src, c)];
        }
    }
    out
}

/// Per-side restriction of the basis: nodal values and the normal-axis
/// derivative on the face grid (sign convention: plain d/d axis, outward
/// normals are applied during assembly).
#[derive(Debug, Clone)]
pub struct FaceTraces {
    pub values: DMatrix<f64>,
    pub normal_deriv: DMatrix<f64>,
}

/// Orthonormal adaptive basis of one element.
#[derive(Debug, Clone)]
pub struct LocalBasisSet {
    pub element_index: usize,
    /// Number of retained basis functions (J_k after filtering).
    pub count: usize,
    pub grid: Arc<LglGrid>,
    /// Nodal values, one column per basis function.
    pub values: DMatrix<f64>,
    /// Nodal gradients per Cartesian axis.
    pub gradients: [DMatrix<f64>; 3],
    /// Traces on the 6 element faces, indexed `axis * 2 + upper as usize`.
    pub traces: Vec<FaceTraces>,
    /// Flattened LGL quadrature weights (shared node ordering).
    pub weights: Vec<f64>,
    /// Local eigenvalues of the extended-element solve (provenance).
    pub local_eigenvalues: Vec<f64>,
    pub buffer: [f64; 3],
    /// Singular values of the filtering step, descending.
    pub singular_values: Vec<f64>,
}

impl LocalBasisSet {
    /// Max |Gram - I| under the LGL-weighted inner product.
    pub fn gram_deviation(&self) -> f64 {
        let j = self.count;
        let mut dev: f64 = 0.0;
        for a in 0..j {
            for b in a..j {
                let mut g = 0.0;
                for (r, &w) in self.weights.iter().enumerate() {
                    g += w * self.values[(r, a)] * self.values[(r, b)];
                }
                let target = if a == b { 1.0 } else { 0.0 };
                dev = dev.max((g - target).abs());
            }
        }
        dev
    }

    pub fn trace(&self, side: Side) -> &FaceTraces {
        &self.traces[side.axis * 2 + side.upper as usize]
    }
}

/// SVD filtering of a raw basis under the weighted discrete inner product:
/// columns are scaled by sqrt(weight), the left singular vectors above the
/// threshold are kept, and the same linear map is applied to the gradients.
pub fn svd_filter(
    element_index: usize,
    grid: Arc<LglGrid>,
    raw_values: DMatrix<f64>,
    raw_gradients: [DMatrix<f64>; 3],
    threshold: f64,
    local_eigenvalues: Vec<f64>,
    buffer: [f64; 3],
) -> Result<LocalBasisSet> {
    let n = raw_values.nrows();
    let j_in = raw_values.ncols();
    let weights: Vec<f64> = grid.weights().iter().cloned().collect();
    debug_assert_eq!(weights.len(), n);

    let mut scaled = raw_values.clone();
    let sqrt_w: Vec<f64> = weights.iter().map(|w| w.sqrt()).collect();
    for r in 0..n {
        for c in 0..j_in {
            scaled[(r, c)] *= sqrt_w[r];
        }
    }

    let svd = scaled.svd(true, true);
    let u = svd.u.as_ref().expect("u requested");
    let vt = svd.v_t.as_ref().expect("v_t requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));

    let kept: Vec<usize> = order
        .iter()
        .cloned()
        .filter(|&i| svd.singular_values[i] > threshold)
        .collect();
    if kept.is_empty() {
        return Err(Error::config(
            "dg.svd_threshold",
            format!(
                "all {} singular values fall at or below the threshold {}",
                j_in, threshold
            ),
        ));
    }
    let j_out = kept.len();
    let singular_values: Vec<f64> = kept.iter().map(|&i| svd.singular_values[i]).collect();

    // New nodal values: unscale the kept left singular vectors.
    let mut values = DMatrix::zeros(n, j_out);
    for (c, &i) in kept.iter().enumerate() {
        for r in 0..n {
            values[(r, c)] = u[(r, i)] / sqrt_w[r];
        }
    }
    // The same map expressed on the inputs: values = raw * (V S^-1).
    let mut map = DMatrix::zeros(j_in, j_out);
    for (c, &i) in kept.iter().enumerate() {
        let s_inv = 1.0 / svd.singular_values[i];
        for r in 0..j_in {
            map[(r, c)] = vt[(i, r)] * s_inv;
        }
    }

    // Polish: one Cholesky orthonormalization pass under the weighted
    // product pins the Gram matrix to the identity at machine precision.
    let mut gram = DMatrix::zeros(j_out, j_out);
    for a in 0..j_out {
        for b in 0..j_out {
            let mut g = 0.0;
            for r in 0..n {
                g += weights[r] * values[(r, a)] * values[(r, b)];
            }
            gram[(a, b)] = g;
        }
    }
    let gram_t = gram.transpose();
    gram = 0.5 * (gram + gram_t);
    if let Some(ch) = gram.cholesky() {
        // values <- values * L^{-T}.
        let l_inv_t = ch
            .l()
            .solve_lower_triangular(&DMatrix::identity(j_out, j_out))
            .expect("unit-diagonal solvable")
            .transpose();
        values *= &l_inv_t;
        map *= &l_inv_t;
    }

    let gradients = [
        &raw_gradients[0] * &map,
        &raw_gradients[1] * &map,
        &raw_gradients[2] * &map,
    ];

    let shape = grid.shape();
    let traces = Side::ALL
        .iter()
        .map(|&side| {
            let rows = face_node_rows(shape, side);
            FaceTraces {
                values: gather_rows(&values, &rows),
                normal_deriv: gather_rows(&gradients[side.axis], &rows),
            }
        })
        .collect();

    Ok(LocalBasisSet {
        element_index,
        count: j_out,
        grid,
        values,
        gradients,
        traces,
        weights,
        local_eigenvalues,
        buffer,
        singular_values,
    })
}

/// Periodic spectral Hamiltonian on an extended element: the restricted
/// effective potential plus every projector whose atom lies inside Q_k.
pub fn local_hamiltonian(
    q: &ExtendedElement,
    v_eff_global: &UniformField,
    pseudo: &PseudoPotential,
) -> SpectralHamiltonian {
    let v_q = restrict_to_extended(v_eff_global, q);
    let lower = q.grid.lower();
    let proj = pseudo.projectors_with_atom_in_box(lower, q.grid.extents());
    SpectralHamiltonian::from_potential(&v_q, pseudo.domain(), pseudo, &proj)
}

/// Per-element generator state that persists across SCF iterations:
/// geometry, interpolation matrices, and the warm-start eigenvector block.
pub struct BasisGenerator {
    pub extended: ExtendedElement,
    pub lgl: Arc<LglGrid>,
    /// Requested number of basis functions J_k.
    pub count: usize,
    /// Extra trailing states solved and discarded for stability.
    pub extra: usize,
    pub svd_threshold: f64,
    seed: u64,
    interp: [Array2<f64>; 3],
    warm: Option<DMatrix<f64>>,
}

impl BasisGenerator {
    pub fn new(
        partition: &Partition,
        k: usize,
        buffer: [f64; 3],
        global: &UniformGrid,
        lgl_orders: [usize; 3],
        count: usize,
        svd_threshold: f64,
        seed: u64,
    ) -> Result<Self> {
        if count == 0 {
            return Err(Error::invalid("basis count must be at least 1"));
        }
        let extended = extended_element(partition, k, buffer, global)?;
        let elem = partition.element(k);
        let lgl = LglGrid::new(elem.lower, elem.extents(), lgl_orders)?;
        let mut interp: [Array2<f64>; 3] = Default::default();
        for a in 0..3 {
            interp[a] = trig_interp_matrix(
                extended.grid.shape()[a],
                extended.grid.lower()[a],
                extended.grid.extents()[a],
                lgl.axis_coords(a),
            );
        }
        Ok(BasisGenerator {
            extended,
            lgl,
            count,
            extra: (count / 10).max(2),
            svd_threshold,
            seed,
            interp,
            warm: None,
        })
    }

    pub fn element_index(&self) -> usize {
        self.extended.element_index
    }

    fn interpolate_to_lgl(&self, field: &ndarray::Array3<f64>) -> Vec<f64> {
        let mut out = field.clone();
        for a in 0..3 {
            out = crate::grids::fourier::apply_axis(&out, &self.interp[a].view(), a);
        }
        out.into_iter().collect()
    }

    /// One basis pass: local eigensolve (warm-started), restriction to the
    /// element LGL grid with spectral gradients, SVD filtering.
    pub fn generate(
        &mut self,
        v_eff_global: &UniformField,
        pseudo: &PseudoPotential,
        inner_iterations: usize,
        solver_tol: f64,
    ) -> Result<LocalBasisSet> {
        let k = self.extended.element_index;
        let h_local = local_hamiltonian(&self.extended, v_eff_global, pseudo);
        let n_solve = self.count + self.extra;
        let n_grid = self.extended.grid.len();
        if n_solve > n_grid {
            return Err(Error::config(
                "dg.basis_per_atom",
                format!(
                    "element {k}: {n_solve} local states exceed the {n_grid} \
                     extended-element grid points"
                ),
            ));
        }
        let x0 = match self.warm.take() {
            Some(w) if w.ncols() == n_solve => w,
            _ => {
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(self.seed);
                random_block(n_grid, n_solve, &mut rng)
            }
        };
        let opts = LobpcgOptions {
            tol: solver_tol,
            max_iter: inner_iterations,
        };
        let sol: EigenSolution =
            lobpcg(&h_local, n_solve, x0, &opts).map_err(|e| Error::Eigensolver {
                element: Some(k),
                message: e.to_string(),
            })?;
        self.warm = Some(sol.orbitals.clone());

        let qshape = self.extended.grid.shape();
        let n_lgl = self.lgl.len();
        let mut raw_values = DMatrix::zeros(n_lgl, self.count);
        let mut raw_grads = [
            DMatrix::zeros(n_lgl, self.count),
            DMatrix::zeros(n_lgl, self.count),
            DMatrix::zeros(n_lgl, self.count),
        ];
        for j in 0..self.count {
            let field = ndarray::Array3::from_shape_vec(
                (qshape[0], qshape[1], qshape[2]),
                sol.orbitals.column(j).as_slice().to_vec(),
            )
            .expect("column length");
            let vals = self.interpolate_to_lgl(&field);
            for (r, v) in vals.iter().enumerate() {
                raw_values[(r, j)] = *v;
            }
            // Differentiate spectrally on Q_k (smooth), then interpolate.
            let grads = h_local.gradient_field(&field);
            for a in 0..3 {
                let gv = self.interpolate_to_lgl(&grads[a]);
                for (r, v) in gv.iter().enumerate() {
                    raw_grads[a][(r, j)] = *v;
                }
            }
        }

        svd_filter(
            k,
            self.lgl.clone(),
            raw_values,
            raw_grads,
            self.svd_threshold,
            sol.eigenvalues[..self.count].to_vec(),
            self.extended.buffer,
        )
    }
}
