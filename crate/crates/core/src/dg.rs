//! Interior-penalty DG assembly of the stiffness matrix, the dense
//! eigenproblem, and density reconstruction back onto the global grid.
//!
//! The mass matrix is the identity by construction (SVD-filtered bases are
//! orthonormal under the element LGL quadrature and element supports are
//! disjoint), so the generalized problem reduces to a standard one.

use crate::basis::{BasisGenerator, LocalBasisSet};
use crate::error::{Error, Result};
use crate::geometry::{Face, Partition, Side};
use crate::grids::fourier::fourier_interpolate;
use crate::grids::{lgl_to_uniform, LglField, UniformField, UniformGrid};
use crate::hamiltonian::{EffectivePotential, PseudoPotential};
use crate::runtime::{parallel_map, parallel_map_mut};
use crate::scf::{EigenStep, StepDiagnostics};
use nalgebra::DMatrix;
use ndarray::Array2;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::time::{Duration, Instant};

/// Row layout of the DG system: basis function (k, j) maps to row
/// `offsets[k] + j`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DgIndexMap {
    pub offsets: Vec<usize>,
    pub counts: Vec<usize>,
    pub dim: usize,
}

impl DgIndexMap {
    pub fn new(counts: Vec<usize>) -> Self {
        let mut offsets = Vec::with_capacity(counts.len());
        let mut acc = 0usize;
        for &c in &counts {
            offsets.push(acc);
            acc += c;
        }
        DgIndexMap {
            offsets,
            counts,
            dim: acc,
        }
    }

    pub fn row(&self, element: usize, j: usize) -> usize {
        self.offsets[element] + j
    }
}

/// Assembled DG system. `matrix` is the dense symmetric stiffness matrix;
/// the mass matrix is the identity and is kept only as this statement.
#[derive(Debug, Clone)]
pub struct DgSystem {
    pub matrix: DMatrix<f64>,
    pub index_map: DgIndexMap,
    pub alpha: f64,
    pub h: f64,
}

/// Jump and average face operators for one scalar function, acting on the
/// two side traces of a shared face. `lo` is the trace from the element
/// whose outward normal on this face is +e_axis. The jump is reported as
/// the coefficient of +e_axis: [[u]] . e_axis = u_lo - u_hi; the mean of
/// the normal derivative is (g_lo + g_hi) / 2. Self-paired wrap faces pass
/// the element's own opposite-side traces.
pub fn jump_and_mean(
    _face: &Face,
    values_lo: &Array2<f64>,
    values_hi: &Array2<f64>,
    normal_grad_lo: &Array2<f64>,
    normal_grad_hi: &Array2<f64>,
) -> (Array2<f64>, Array2<f64>) {
    let jump = values_lo - values_hi;
    let mean = 0.5 * (normal_grad_lo + normal_grad_hi);
    (jump, mean)
}

/// A^T diag(w) B with w given as a flat slice over rows.
fn weighted_gram(a: &DMatrix<f64>, w: &[f64], b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut aw = a.clone();
    for (r, &wr) in w.iter().enumerate() {
        for c in 0..aw.ncols() {
            aw[(r, c)] *= wr;
        }
    }
    aw.transpose() * b
}

struct ElementContribution {
    /// Diagonal block: bulk kinetic + local potential terms.
    volume: DMatrix<f64>,
    /// (projector index, <b_l, phi_{k,j}> per basis function).
    projector_overlaps: Vec<(usize, Vec<f64>)>,
}

/// Assembles the DG stiffness matrix from the per-element bases.
///
/// Bulk terms are evaluated by element LGL quadrature (block diagonal);
/// surface and penalty terms by face quadrature on the shared face grids;
/// the separable nonlocal term by LGL quadrature of the projectors sampled
/// in real space on every overlapping element. V_eff comes to each element
/// grid by trigonometric interpolation from the global uniform grid.
pub fn assemble_stiffness(
    partition: &Partition,
    bases: &[LocalBasisSet],
    v_eff: &EffectivePotential,
    pseudo: &PseudoPotential,
    alpha: f64,
    h: f64,
    workers: usize,
) -> Result<DgSystem> {
    if !(alpha > 0.0) {
        return Err(Error::invalid("penalty parameter alpha must be positive"));
    }
    if !(h > 0.0) {
        return Err(Error::invalid("penalty mesh size h must be positive"));
    }
    if bases.len() != partition.len() {
        return Err(Error::invalid("one basis set per element required"));
    }
    let index_map = DgIndexMap::new(bases.iter().map(|b| b.count).collect());
    let dim = index_map.dim;
    let domain = partition.domain();

    // Element-parallel phase: diagonal blocks and projector inner products.
    let contributions: Vec<ElementContribution> = parallel_map(workers, bases.len(), |k| {
        let basis = &bases[k];
        let grid = basis.grid.as_ref();
        let w = &basis.weights;

        // 1/2 <grad phi, grad phi> + <phi, V_eff phi> on the element.
        let mut volume = DMatrix::zeros(basis.count, basis.count);
        for a in 0..3 {
            volume += 0.5 * weighted_gram(&basis.gradients[a], w, &basis.gradients[a]);
        }
        let v_lgl = fourier_interpolate(
            &v_eff.total,
            [
                grid.axis_coords(0),
                grid.axis_coords(1),
                grid.axis_coords(2),
            ],
        );
        let wv: Vec<f64> = w
            .iter()
            .zip(v_lgl.iter())
            .map(|(&wr, &vr)| wr * vr)
            .collect();
        volume += weighted_gram(&basis.values, &wv, &basis.values);

        // <b_l, phi_{k,j}> for projectors whose support touches the element.
        let elem = partition.element(k);
        let mut projector_overlaps = Vec::new();
        for (l, proj) in pseudo.projectors().iter().enumerate() {
            if !proj.overlaps_box(domain, elem.lower, elem.extents()) {
                continue;
            }
            let b = proj.sample(
                domain,
                [
                    grid.axis_coords(0),
                    grid.axis_coords(1),
                    grid.axis_coords(2),
                ],
            );
            let wb: Vec<f64> = w
                .iter()
                .zip(b.iter())
                .map(|(&wr, &br)| wr * br)
                .collect();
            let mut overlaps = vec![0.0; basis.count];
            for (j, o) in overlaps.iter_mut().enumerate() {
                *o = (0..basis.values.nrows())
                    .map(|r| wb[r] * basis.values[(r, j)])
                    .sum();
            }
            projector_overlaps.push((l, overlaps));
        }

        Ok(ElementContribution {
            volume,
            projector_overlaps,
        })
    })?;

    let mut a = DMatrix::zeros(dim, dim);
    for (k, contrib) in contributions.iter().enumerate() {
        let o = index_map.offsets[k];
        let c = index_map.counts[k];
        a.view_mut((o, o), (c, c)).copy_from(&contrib.volume);
    }

    // Surface terms, one shared face at a time.
    for face in partition.faces() {
        let b_lo = &bases[face.elem_lo];
        let b_hi = &bases[face.elem_hi];
        let t_lo = b_lo.trace(Side {
            axis: face.axis,
            upper: true,
        });
        let t_hi = b_hi.trace(Side {
            axis: face.axis,
            upper: false,
        });
        // Congruent partition: both elements carry identical face grids.
        debug_assert_eq!(t_lo.values.nrows(), t_hi.values.nrows());
        let wf: Vec<f64> = b_lo
            .grid
            .face_weights(face.axis)
            .iter()
            .cloned()
            .collect();

        let sides = [
            (face.elem_lo, 1.0, &t_lo.values, &t_lo.normal_deriv),
            (face.elem_hi, -1.0, &t_hi.values, &t_hi.normal_deriv),
        ];
        for &(ea, sa, ta, da) in &sides {
            for &(eb, sb, tb, db) in &sides {
                // -1/2 <[[v]], {{grad u}}> - 1/2 <{{grad v}}, [[u]]>
                // + (alpha/h) <[[v]], [[u]]> expands into these pieces.
                let mut block = weighted_gram(ta, &wf, db) * (-0.25 * sa);
                block += weighted_gram(da, &wf, tb) * (-0.25 * sb);
                block += weighted_gram(ta, &wf, tb) * (alpha / h * sa * sb);
                let (oa, ob) = (index_map.offsets[ea], index_map.offsets[eb]);
                let mut view =
                    a.view_mut((oa, ob), (index_map.counts[ea], index_map.counts[eb]));
                view += &block;
            }
        }
    }

    // Separable nonlocal term: gamma_l c_l q_l q_l^T with
    // q_l[(k, j)] = <b_l, phi_{k,j}> summed over overlapping elements.
    for (l, proj) in pseudo.projectors().iter().enumerate() {
        let mut q = vec![0.0; dim];
        let mut touched = false;
        for (k, contrib) in contributions.iter().enumerate() {
            for (pl, overlaps) in &contrib.projector_overlaps {
                if *pl == l {
                    touched = true;
                    for (j, &v) in overlaps.iter().enumerate() {
                        q[index_map.row(k, j)] = v;
                    }
                }
            }
        }
        if !touched {
            continue;
        }
        let weight = proj.sign * proj.coupling;
        for (r, &qr) in q.iter().enumerate() {
            if qr == 0.0 {
                continue;
            }
            for (cc, &qc) in q.iter().enumerate() {
                a[(r, cc)] += weight * qr * qc;
            }
        }
    }

    Ok(DgSystem {
        matrix: a,
        index_map,
        alpha,
        h,
    })
}

#[derive(Debug, Clone)]
pub struct DgEigenSolution {
    pub eigenvalues: Vec<f64>,
    /// Coefficient vectors, one column per state (B = I).
    pub coefficients: DMatrix<f64>,
    pub residual_norms: Vec<f64>,
}

/// Lowest `n_states` eigenpairs of the dense symmetric stiffness matrix.
pub fn solve_dg(system: &DgSystem, n_states: usize, max_dense_dim: usize) -> Result<DgEigenSolution> {
    let dim = system.index_map.dim;
    if dim > max_dense_dim {
        return Err(Error::invalid(format!(
            "DG matrix dimension {dim} exceeds the dense-solve cap {max_dense_dim}; \
             reduce the number of basis functions per element"
        )));
    }
    if n_states > dim {
        return Err(Error::invalid(format!(
            "{n_states} states requested from a {dim}-dimensional DG space"
        )));
    }
    let sym = 0.5 * (&system.matrix + system.matrix.transpose());
    let eig = sym.symmetric_eigen();
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&x, &y| eig.eigenvalues[x].total_cmp(&eig.eigenvalues[y]));

    let eigenvalues: Vec<f64> = order[..n_states].iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut coefficients = DMatrix::zeros(dim, n_states);
    for (c, &i) in order[..n_states].iter().enumerate() {
        coefficients.set_column(c, &eig.eigenvectors.column(i));
    }
    let residual_norms: Vec<f64> = (0..n_states)
        .map(|i| {
            let c = coefficients.column(i);
            (&system.matrix * c - c * eigenvalues[i]).norm()
        })
        .collect();
    Ok(DgEigenSolution {
        eigenvalues,
        coefficients,
        residual_norms,
    })
}

/// Occupation-weighted density on the global uniform grid, renormalized so
/// its grid quadrature integrates to exactly the electron count. Also
/// returns the pre-renormalization integral as a diagnostic.
pub fn reconstruct_density(
    partition: &Partition,
    bases: &[LocalBasisSet],
    solution: &DgEigenSolution,
    occupations: &[f64],
    global: &UniformGrid,
) -> Result<(UniformField, f64)> {
    let index_map = DgIndexMap::new(bases.iter().map(|b| b.count).collect());
    let n_states = solution.coefficients.ncols().min(occupations.len());
    let mut fields = Vec::with_capacity(bases.len());
    for (k, basis) in bases.iter().enumerate() {
        let o = index_map.offsets[k];
        let c = index_map.counts[k];
        let coeff_block = solution.coefficients.view((o, 0), (c, n_states));
        // Orbital values on the element grid: Phi_k * c_{i;k}.
        let orbitals = &basis.values * coeff_block;
        let n = basis.values.nrows();
        let mut rho = vec![0.0; n];
        for i in 0..n_states {
            let f = occupations[i];
            if f == 0.0 {
                continue;
            }
            for r in 0..n {
                let v = orbitals[(r, i)];
                rho[r] += f * v * v;
            }
        }
        let shape = basis.grid.shape();
        let arr = ndarray::Array3::from_shape_vec((shape[0], shape[1], shape[2]), rho)
            .expect("shape");
        fields.push(LglField::from_values(basis.grid.clone(), arr)?);
    }
    let mut density = lgl_to_uniform(partition, &fields, global)?;
    let raw = density.integrate();
    let n_electrons: f64 = occupations.iter().sum();
    if raw > 0.0 && n_electrons > 0.0 {
        let s = n_electrons / raw;
        density.values_mut().mapv_inplace(|v| v * s);
    }
    Ok((density, raw))
}

const DUMP_MAGIC: &[u8; 4] = b"DGA1";

impl DgSystem {
    /// Binary dump for offline inspection. Layout (little endian):
    /// magic "DGA1", u64 dim, f64 alpha, f64 h, u64 element count,
    /// u64 basis count per element, then dim*dim f64 entries row-major.
    pub fn write_binary(&self, path: &std::path::Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        f.write_all(DUMP_MAGIC)?;
        f.write_all(&(self.index_map.dim as u64).to_le_bytes())?;
        f.write_all(&self.alpha.to_le_bytes())?;
        f.write_all(&self.h.to_le_bytes())?;
        f.write_all(&(self.index_map.counts.len() as u64).to_le_bytes())?;
        for &c in &self.index_map.counts {
            f.write_all(&(c as u64).to_le_bytes())?;
        }
        for r in 0..self.index_map.dim {
            for c in 0..self.index_map.dim {
                f.write_all(&self.matrix[(r, c)].to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_binary(path: &std::path::Path) -> Result<Self> {
        let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut magic = [0u8; 4];
        f.read_exact(&mut magic)?;
        if &magic != DUMP_MAGIC {
            return Err(Error::invalid("not a DG matrix dump"));
        }
        let mut u8buf = [0u8; 8];
        let mut read_u64 = |f: &mut dyn Read| -> Result<u64> {
            f.read_exact(&mut u8buf)?;
            Ok(u64::from_le_bytes(u8buf))
        };
        let dim = read_u64(&mut f)? as usize;
        let mut f8 = [0u8; 8];
        f.read_exact(&mut f8)?;
        let alpha = f64::from_le_bytes(f8);
        f.read_exact(&mut f8)?;
        let h = f64::from_le_bytes(f8);
        let n_elem = {
            let mut b = [0u8; 8];
            f.read_exact(&mut b)?;
            u64::from_le_bytes(b) as usize
        };
        let mut counts = Vec::with_capacity(n_elem);
        for _ in 0..n_elem {
            let mut b = [0u8; 8];
            f.read_exact(&mut b)?;
            counts.push(u64::from_le_bytes(b) as usize);
        }
        let mut matrix = DMatrix::zeros(dim, dim);
        for r in 0..dim {
            for c in 0..dim {
                f.read_exact(&mut f8)?;
                matrix[(r, c)] = f64::from_le_bytes(f8);
            }
        }
        Ok(DgSystem {
            matrix,
            index_map: DgIndexMap::new(counts),
            alpha,
            h,
        })
    }
}

/// Parameters of the DG pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DgParams {
    pub alpha: f64,
    pub n_states: usize,
    /// LOBPCG expansions per SCF pass when generating the basis.
    pub inner_iterations: usize,
    pub solver_tol: f64,
    pub svd_threshold: f64,
    pub max_dense_dim: usize,
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct DgTimings {
    pub basis_generation: Duration,
    pub assembly: Duration,
    pub eigensolve: Duration,
}

/// The DG eigenstep of the SCF loop: regenerate the adaptive basis from
/// the current effective potential (warm-started per element), assemble,
/// solve the dense eigenproblem, and reconstruct the density.
pub struct DgEigenStep<'a> {
    partition: &'a Partition,
    pseudo: &'a PseudoPotential,
    global: UniformGrid,
    generators: Vec<BasisGenerator>,
    params: DgParams,
    workers: usize,
    h: f64,
    bases: Option<Vec<LocalBasisSet>>,
    solution: Option<DgEigenSolution>,
    diagnostics: StepDiagnostics,
    pub timings: DgTimings,
}

impl<'a> DgEigenStep<'a> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        partition: &'a Partition,
        pseudo: &'a PseudoPotential,
        global: UniformGrid,
        buffer: [f64; 3],
        lgl_orders: [usize; 3],
        basis_per_element: usize,
        params: DgParams,
        workers: usize,
        seed: u64,
    ) -> Result<Self> {
        let mut generators = Vec::with_capacity(partition.len());
        for k in 0..partition.len() {
            let elem_seed = seed ^ (0x9e37_79b9_7f4a_7c15u64.wrapping_mul(k as u64 + 1));
            generators.push(BasisGenerator::new(
                partition,
                k,
                buffer,
                &global,
                lgl_orders,
                basis_per_element,
                params.svd_threshold,
                elem_seed,
            )?);
        }
        Ok(DgEigenStep {
            partition,
            pseudo,
            global,
            generators,
            params,
            workers,
            h: partition.min_edge(),
            bases: None,
            solution: None,
            diagnostics: StepDiagnostics::default(),
            timings: DgTimings::default(),
        })
    }

    pub fn last_bases(&self) -> Option<&[LocalBasisSet]> {
        self.bases.as_deref()
    }

    pub fn last_system_dim(&self) -> usize {
        self.generators.iter().map(|g| g.count).sum()
    }

    /// One basis-generation pass without the DG solve (used by timing
    /// studies and tests).
    pub fn generate_bases(&mut self, v_eff: &UniformField) -> Result<Vec<LocalBasisSet>> {
        let pseudo = self.pseudo;
        let inner = self.params.inner_iterations;
        let tol = self.params.solver_tol;
        parallel_map_mut(self.workers, &mut self.generators, |_, gen| {
            gen.generate(v_eff, pseudo, inner, tol)
        })
    }
}

impl EigenStep for DgEigenStep<'_> {
    fn diagonalize(&mut self, v_eff: &EffectivePotential) -> Result<Vec<f64>> {
        let t0 = Instant::now();
        let bases = self.generate_bases(&v_eff.total.clone())?;
        self.timings.basis_generation += t0.elapsed();

        let gram_dev = bases
            .iter()
            .map(LocalBasisSet::gram_deviation)
            .fold(0.0f64, f64::max);
        self.diagnostics.basis_gram_deviation = Some(gram_dev);

        let t1 = Instant::now();
        let system = assemble_stiffness(
            self.partition,
            &bases,
            v_eff,
            self.pseudo,
            self.params.alpha,
            self.h,
            self.workers,
        )?;
        self.timings.assembly += t1.elapsed();

        let t2 = Instant::now();
        let solution = solve_dg(&system, self.params.n_states, self.params.max_dense_dim)?;
        self.timings.eigensolve += t2.elapsed();

        let eigenvalues = solution.eigenvalues.clone();
        self.bases = Some(bases);
        self.solution = Some(solution);
        Ok(eigenvalues)
    }

    fn density(&mut self, occupations: &[f64]) -> Result<UniformField> {
        let bases = self
            .bases
            .as_ref()
            .ok_or_else(|| Error::invalid("density requested before diagonalization"))?;
        let solution = self
            .solution
            .as_ref()
            .ok_or_else(|| Error::invalid("density requested before diagonalization"))?;
        let (density, raw) =
            reconstruct_density(self.partition, bases, solution, occupations, &self.global)?;
        self.diagnostics.raw_electron_count = Some(raw);
        Ok(density)
    }

    fn diagnostics(&self) -> StepDiagnostics {
        self.diagnostics
    }
}
