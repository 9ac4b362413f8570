//! Spectral Hamiltonian on a periodic uniform grid (kinetic term applied in
//! Fourier space, local potential pointwise, separable nonlocal projectors
//! by grid quadrature) and the LOBPCG driver used on both the global domain
//! and the extended elements.

mod lobpcg;

pub use lobpcg::{
    eigen_residual, gram_deviation, lobpcg, random_block, EigenSolution, LobpcgOptions,
    SpectralOperator,
};

use crate::geometry::Domain;
use crate::grids::fourier::{wavevectors, Fft3};
use crate::grids::{UniformField, UniformGrid};
use crate::hamiltonian::PseudoPotential;
use nalgebra::DMatrix;
use ndarray::Array3;
use num_complex::Complex64;

/// One sampled nonlocal term gamma * coupling |b><b| on a specific grid.
pub struct ProjectorTerm {
    /// gamma * coupling.
    pub weight: f64,
    /// Normalized projector values at the grid nodes.
    pub values: Array3<f64>,
}

/// H = -1/2 lap + V_local + sum_l gamma_l c_l |b_l><b_l| on a uniform
/// periodic grid.
pub struct SpectralHamiltonian {
    grid: UniformGrid,
    v_local: Array3<f64>,
    projectors: Vec<ProjectorTerm>,
    fft: Fft3,
    /// 1/2 |k|^2 at every Fourier bin.
    kinetic_symbol: Array3<f64>,
}

impl SpectralHamiltonian {
    pub fn new(grid: UniformGrid, v_local: Array3<f64>, projectors: Vec<ProjectorTerm>) -> Self {
        let shape = grid.shape();
        let ks = wavevectors(&grid);
        let mut kinetic_symbol = Array3::zeros((shape[0], shape[1], shape[2]));
        for ((i, j, k), v) in kinetic_symbol.indexed_iter_mut() {
            *v = 0.5 * (ks[0][i] * ks[0][i] + ks[1][j] * ks[1][j] + ks[2][k] * ks[2][k]);
        }
        let fft = Fft3::new(shape);
        SpectralHamiltonian {
            grid,
            v_local,
            projectors,
            fft,
            kinetic_symbol,
        }
    }

    /// Builds the Hamiltonian from an effective-potential field and the
    /// listed projectors, sampled in real space on this grid.
    pub fn from_potential(
        v_eff: &UniformField,
        domain: &Domain,
        pseudo: &PseudoPotential,
        projector_indices: &[usize],
    ) -> Self {
        let grid = *v_eff.grid();
        let axes = [
            grid.axis_coords(0),
            grid.axis_coords(1),
            grid.axis_coords(2),
        ];
        let projectors = projector_indices
            .iter()
            .map(|&l| {
                let p = &pseudo.projectors()[l];
                ProjectorTerm {
                    weight: p.sign * p.coupling,
                    values: p.sample(domain, [&axes[0], &axes[1], &axes[2]]),
                }
            })
            .collect();
        SpectralHamiltonian::new(grid, v_eff.values().clone(), projectors)
    }

    pub fn grid(&self) -> &UniformGrid {
        &self.grid
    }

    pub fn fft(&self) -> &Fft3 {
        &self.fft
    }

    pub fn projector_count(&self) -> usize {
        self.projectors.len()
    }

    fn column_to_field(&self, col: &[f64]) -> Array3<f64> {
        let s = self.grid.shape();
        Array3::from_shape_vec((s[0], s[1], s[2]), col.to_vec()).expect("column length")
    }

    /// Applies H to a single field.
    pub fn apply_field(&self, psi: &Array3<f64>) -> Array3<f64> {
        let mut hat = self.fft.forward(psi);
        for (h, &t) in hat.iter_mut().zip(self.kinetic_symbol.iter()) {
            *h *= t;
        }
        let mut out = self.fft.inverse_real(hat);
        out += &(&self.v_local * psi);
        let dv = self.grid.volume_element();
        for term in &self.projectors {
            let overlap = dv
                * term
                    .values
                    .iter()
                    .zip(psi.iter())
                    .map(|(b, p)| b * p)
                    .sum::<f64>();
            let coef = term.weight * overlap;
            out.zip_mut_with(&term.values, |o, &b| *o += coef * b);
        }
        out
    }

    /// Spectral gradient of a field on this grid.
    pub fn gradient_field(&self, psi: &Array3<f64>) -> [Array3<f64>; 3] {
        crate::grids::fourier::spectral_gradient(&self.fft, &self.grid, psi)
    }
}

/// The global-domain eigenstep of the SCF loop: LOBPCG on the full uniform
/// grid with all projectors, warm-started from the previous SCF iteration.
pub struct GlobalEigenStep<'a> {
    pseudo: &'a PseudoPotential,
    grid: UniformGrid,
    n_states: usize,
    inner_iterations: usize,
    solver_tol: f64,
    warm: Option<DMatrix<f64>>,
    seed: u64,
    orbitals: Option<DMatrix<f64>>,
    pub last_residuals: Vec<f64>,
}

impl<'a> GlobalEigenStep<'a> {
    pub fn new(
        pseudo: &'a PseudoPotential,
        grid: UniformGrid,
        n_states: usize,
        inner_iterations: usize,
        solver_tol: f64,
        seed: u64,
    ) -> Self {
        GlobalEigenStep {
            pseudo,
            grid,
            n_states,
            inner_iterations,
            solver_tol,
            warm: None,
            seed,
            orbitals: None,
            last_residuals: Vec::new(),
        }
    }

    /// Orbitals of the last diagonalization as fields on the global grid.
    pub fn orbital_fields(&self) -> Option<Vec<Array3<f64>>> {
        let orbitals = self.orbitals.as_ref()?;
        let s = self.grid.shape();
        Some(
            (0..orbitals.ncols())
                .map(|c| {
                    Array3::from_shape_vec(
                        (s[0], s[1], s[2]),
                        orbitals.column(c).as_slice().to_vec(),
                    )
                    .expect("column length")
                })
                .collect(),
        )
    }
}

impl crate::scf::EigenStep for GlobalEigenStep<'_> {
    fn diagonalize(
        &mut self,
        v_eff: &crate::hamiltonian::EffectivePotential,
    ) -> crate::error::Result<Vec<f64>> {
        let all: Vec<usize> = (0..self.pseudo.projectors().len()).collect();
        let h = SpectralHamiltonian::from_potential(
            &v_eff.total,
            self.pseudo.domain(),
            self.pseudo,
            &all,
        );
        let x0 = match self.warm.take() {
            Some(w) if w.ncols() == self.n_states => w,
            _ => {
                use rand::SeedableRng;
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(self.seed);
                random_block(self.grid.len(), self.n_states, &mut rng)
            }
        };
        let opts = LobpcgOptions {
            tol: self.solver_tol,
            max_iter: self.inner_iterations,
        };
        let sol = lobpcg(&h, self.n_states, x0, &opts)?;
        self.warm = Some(sol.orbitals.clone());
        self.last_residuals = sol.residual_norms.clone();
        self.orbitals = Some(sol.orbitals);
        Ok(sol.eigenvalues)
    }

    fn density(&mut self, occupations: &[f64]) -> crate::error::Result<UniformField> {
        let orbitals = self
            .orbitals
            .as_ref()
            .ok_or_else(|| crate::error::Error::invalid("density before diagonalization"))?;
        let s = self.grid.shape();
        let mut rho = Array3::<f64>::zeros((s[0], s[1], s[2]));
        let flat = rho.as_slice_mut().expect("contiguous");
        for (i, &f) in occupations.iter().enumerate().take(orbitals.ncols()) {
            if f == 0.0 {
                continue;
            }
            let col = orbitals.column(i);
            for (r, v) in col.iter().enumerate() {
                flat[r] += f * v * v;
            }
        }
        let mut field = UniformField::from_values(self.grid, rho)?;
        // Orbitals are normalized; pin the electron count exactly anyway.
        let n: f64 = occupations.iter().sum();
        let q = field.integrate();
        if q > 0.0 && n > 0.0 {
            let scale = n / q;
            field.values_mut().mapv_inplace(|v| v * scale);
        }
        Ok(field)
    }
}

/// Rational low-pass filter of the preconditioner, evaluated at
/// x = (1/2)|k|^2 / kinetic_scale. K(0) = 1 and K(x) ~ 1/(2x) for large x.
pub fn kinetic_filter(x: f64) -> f64 {
    let num = 27.0 + 18.0 * x + 12.0 * x * x + 8.0 * x * x * x;
    num / (num + 16.0 * x * x * x * x)
}

impl SpectralOperator for SpectralHamiltonian {
    fn len(&self) -> usize {
        self.grid.len()
    }

    fn ip_weight(&self) -> f64 {
        self.grid.volume_element()
    }

    fn apply(&self, block: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(block.nrows(), block.ncols());
        for c in 0..block.ncols() {
            let field = self.column_to_field(block.column(c).as_slice());
            let applied = self.apply_field(&field);
            for (r, v) in applied.iter().enumerate() {
                out[(r, c)] = *v;
            }
        }
        out
    }

    fn kinetic_energies(&self, block: &DMatrix<f64>) -> Vec<f64> {
        let dv = self.grid.volume_element();
        let n_total = self.grid.len() as f64;
        (0..block.ncols())
            .map(|c| {
                let field = self.column_to_field(block.column(c).as_slice());
                let hat = self.fft.forward(&field);
                let sum: f64 = hat
                    .iter()
                    .zip(self.kinetic_symbol.iter())
                    .map(|(h, &t)| t * h.norm_sqr())
                    .sum();
                dv * sum / n_total
            })
            .collect()
    }

    fn precondition(&self, residuals: &DMatrix<f64>, scales: &[f64]) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(residuals.nrows(), residuals.ncols());
        for c in 0..residuals.ncols() {
            let field = self.column_to_field(residuals.column(c).as_slice());
            let mut hat = self.fft.forward(&field);
            let scale = scales[c];
            for (h, &t) in hat.iter_mut().zip(self.kinetic_symbol.iter()) {
                let k = kinetic_filter(t / scale);
                *h *= Complex64::new(k, 0.0);
            }
            let filtered = self.fft.inverse_real(hat);
            for (r, v) in filtered.iter().enumerate() {
                out[(r, c)] = *v;
            }
        }
        out
    }
}
