//! Self-consistent field loop shared by the global spectral solver and the
//! DG solver: occupations, chemical potential, density mixing, and
//! convergence bookkeeping.

use crate::error::{Error, Result};
use crate::grids::fourier::Fft3;
use crate::grids::UniformField;
use crate::hamiltonian::{
    effective_potential, total_energy, EffectivePotential, EnergyReport, HamiltonianOptions,
};
use crate::BOLTZMANN_AU_PER_K;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

/// Density mixing scheme. `alpha` is the weight kept on the input density,
/// rho_next = alpha rho_in + (1 - alpha) rho_out.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "lowercase")]
pub enum MixingScheme {
    Linear { alpha: f64 },
    Anderson { depth: usize, alpha: f64 },
}

impl Default for MixingScheme {
    fn default() -> Self {
        MixingScheme::Anderson {
            depth: 4,
            alpha: 0.3,
        }
    }
}

/// Fermi-Dirac occupations summing to `n_electrons`, and the chemical
/// potential located by bisection. T = 0 degenerates to integer filling.
pub fn fermi_occupations(
    eigenvalues: &[f64],
    n_electrons: f64,
    temperature_k: f64,
) -> Result<(Vec<f64>, f64)> {
    let n_states = eigenvalues.len();
    if n_electrons > n_states as f64 + 1e-12 {
        return Err(Error::invalid(format!(
            "{n_electrons} electrons cannot be placed in {n_states} states \
             with occupations in [0, 1]"
        )));
    }
    if temperature_k < 0.0 {
        return Err(Error::invalid("temperature must be nonnegative"));
    }

    if temperature_k == 0.0 {
        let filled = n_electrons.round() as usize;
        if (n_electrons - filled as f64).abs() > 1e-9 {
            return Err(Error::invalid(
                "zero-temperature filling needs an integer electron count",
            ));
        }
        let mut f = vec![0.0; n_states];
        for fi in f.iter_mut().take(filled) {
            *fi = 1.0;
        }
        let mu = if filled == 0 {
            eigenvalues.first().copied().unwrap_or(0.0) - 1.0
        } else if filled < n_states {
            0.5 * (eigenvalues[filled - 1] + eigenvalues[filled])
        } else {
            eigenvalues[n_states - 1]
        };
        return Ok((f, mu));
    }

    let kt = BOLTZMANN_AU_PER_K * temperature_k;
    let fermi = |x: f64| -> f64 {
        // 1 / (1 + e^x), overflow-safe.
        if x > 0.0 {
            let e = (-x).exp();
            e / (1.0 + e)
        } else {
            1.0 / (1.0 + x.exp())
        }
    };
    let total = |mu: f64| -> f64 {
        eigenvalues.iter().map(|&e| fermi((e - mu) / kt)).sum()
    };

    let e_min = eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    let e_max = eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut lo = e_min - 50.0 * kt - 1.0;
    let mut hi = e_max + 50.0 * kt + 1.0;
    let mut mu = 0.5 * (lo + hi);
    for _ in 0..500 {
        mu = 0.5 * (lo + hi);
        let s = total(mu);
        if (s - n_electrons).abs() <= 1e-12 {
            break;
        }
        if s < n_electrons {
            lo = mu;
        } else {
            hi = mu;
        }
    }
    let f: Vec<f64> = eigenvalues.iter().map(|&e| fermi((e - mu) / kt)).collect();
    Ok((f, mu))
}

/// Density mixer with bounded history of (rho_in, residual) pairs.
pub struct Mixer {
    scheme: MixingScheme,
    history: VecDeque<(DVector<f64>, DVector<f64>)>,
}

impl Mixer {
    pub fn new(scheme: MixingScheme) -> Self {
        Mixer {
            scheme,
            history: VecDeque::new(),
        }
    }

    /// Next input density from the current (input, output) pair.
    pub fn next_density(&mut self, rho_in: &[f64], rho_out: &[f64]) -> Vec<f64> {
        let n = rho_in.len();
        let r_n: DVector<f64> =
            DVector::from_iterator(n, rho_in.iter().zip(rho_out).map(|(a, b)| b - a));
        let x_n = DVector::from_column_slice(rho_in);

        let (alpha, depth) = match self.scheme {
            MixingScheme::Linear { alpha } => (alpha, 0),
            MixingScheme::Anderson { depth, alpha } => (alpha, depth),
        };

        let q = self.history.len().min(depth);
        let next = if q == 0 {
            // Plain linear step on the raw pair.
            rho_in
                .iter()
                .zip(rho_out)
                .map(|(a, b)| alpha * a + (1.0 - alpha) * b)
                .collect()
        } else {
            // Least squares over residual differences, ridge-regularized,
            // then the linear step on the extrapolated pair.
            let mut d = DMatrix::zeros(n, q);
            let mut dx = DMatrix::zeros(n, q);
            for (col, (x_j, r_j)) in self.history.iter().rev().take(q).enumerate() {
                d.set_column(col, &(&r_n - r_j));
                dx.set_column(col, &(&x_n - x_j));
            }
            let mut gram = d.transpose() * &d;
            let ridge = 1e-12
                * gram
                    .diagonal()
                    .iter()
                    .cloned()
                    .fold(0.0f64, f64::max)
                    .max(1e-300);
            for i in 0..q {
                gram[(i, i)] += ridge;
            }
            let rhs = d.transpose() * &r_n;
            let theta = gram
                .clone()
                .cholesky()
                .map(|ch| ch.solve(&rhs))
                .unwrap_or_else(|| gram.svd(true, true).solve(&rhs, 1e-12).unwrap_or(rhs));
            let x_bar = &x_n - &dx * &theta;
            let r_bar = &r_n - &d * &theta;
            let mut out = Vec::with_capacity(n);
            for i in 0..n {
                let xin = x_bar[i];
                let xout = x_bar[i] + r_bar[i];
                out.push(alpha * xin + (1.0 - alpha) * xout);
            }
            out
        };

        self.history.push_back((x_n, r_n));
        while self.history.len() > depth.max(1) {
            self.history.pop_front();
        }
        next
    }
}

/// Per-iteration diagnostics an eigenstep may report.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct StepDiagnostics {
    /// Max |Gram - I| over all post-filter local basis sets (DG only).
    pub basis_gram_deviation: Option<f64>,
    /// Pre-renormalization electron count of the reconstructed density
    /// (DG only).
    pub raw_electron_count: Option<f64>,
}

/// One eigensolve stage of the SCF loop. The global solver and the DG
/// solver both implement this: diagonalize with a given effective
/// potential, then build the density for given occupations.
pub trait EigenStep {
    /// Eigenvalues ascending; at least the configured number of states.
    fn diagonalize(&mut self, v_eff: &EffectivePotential) -> Result<Vec<f64>>;

    /// Density on the global uniform grid from the last diagonalization,
    /// integrating to the sum of the occupations.
    fn density(&mut self, occupations: &[f64]) -> Result<UniformField>;

    fn diagnostics(&self) -> StepDiagnostics {
        StepDiagnostics::default()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScfParams {
    /// Stopping threshold on ||rho_in - rho_out|| in the grid L2 norm.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub mixing: MixingScheme,
    pub temperature_k: f64,
    pub n_electrons: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ScfIterationRecord {
    pub iteration: usize,
    pub residual: f64,
    pub total_energy: f64,
    pub chemical_potential: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub basis_gram_deviation: Option<f64>,
}

/// Converged (or flagged) SCF state.
#[derive(Debug, Clone)]
pub struct ScfOutcome {
    pub converged: bool,
    pub iterations: usize,
    pub energy: EnergyReport,
    pub eigenvalues: Vec<f64>,
    pub occupations: Vec<f64>,
    pub chemical_potential: f64,
    /// Output density of the final eigenstep.
    pub density: UniformField,
    pub history: Vec<ScfIterationRecord>,
    /// Max basis Gram deviation seen over all iterations (DG pipelines).
    pub max_gram_deviation: f64,
}

/// Runs the SCF fixed-point iteration. With a density-independent
/// Hamiltonian (Hartree and XC both disabled) the map is constant and the
/// loop returns after its first eigenstep.
pub fn scf_loop(
    step: &mut dyn EigenStep,
    params: &ScfParams,
    v_ext: &UniformField,
    opts: HamiltonianOptions,
    rho0: UniformField,
    fft: &Fft3,
) -> Result<ScfOutcome> {
    let grid = *rho0.grid();
    let n = params.n_electrons;
    let mut rho = rho0;
    // Exact electron count on the grid quadrature.
    let q0 = rho.integrate();
    if q0 <= 0.0 {
        return Err(Error::invalid("initial density must carry positive charge"));
    }
    let scale = n / q0;
    rho.values_mut().mapv_inplace(|v| v * scale);

    let mut mixer = Mixer::new(params.mixing);
    let mut history = Vec::new();
    let mut max_gram: f64 = 0.0;
    let mut converged = false;
    let mut outcome: Option<(Vec<f64>, Vec<f64>, f64, UniformField, EnergyReport)> = None;

    for it in 1..=params.max_iterations {
        let v_eff = effective_potential(&rho, v_ext, opts, fft);
        let eigenvalues = step.diagonalize(&v_eff)?;
        let (occupations, mu) = fermi_occupations(&eigenvalues, n, params.temperature_k)?;
        let rho_out = step.density(&occupations)?;
        let diag = step.diagnostics();
        if let Some(g) = diag.basis_gram_deviation {
            max_gram = max_gram.max(g);
        }

        let diff = UniformField::from_values(grid, rho_out.values() - rho.values())
            .expect("densities share the global grid");
        let residual = diff.norm();
        let energy = total_energy(&eigenvalues, &occupations, &rho_out, n, opts, fft)?;
        history.push(ScfIterationRecord {
            iteration: it,
            residual,
            total_energy: energy.total,
            chemical_potential: mu,
            basis_gram_deviation: diag.basis_gram_deviation,
        });
        log::info!(
            "scf iter {it}: residual {residual:.3e}, E_tot {:.10} au, mu {mu:.6}",
            energy.total
        );

        let finite = residual.is_finite() && energy.total.is_finite();
        outcome = Some((eigenvalues, occupations, mu, rho_out.clone(), energy));
        if !finite {
            log::warn!("scf diverged to non-finite values at iteration {it}");
            break;
        }
        if residual <= params.tolerance || !opts.density_dependent() {
            converged = true;
            break;
        }
        if it == params.max_iterations {
            break;
        }
        let mixed = mixer.next_density(
            rho.values().as_slice().expect("contiguous"),
            rho_out.values().as_slice().expect("contiguous"),
        );
        let mut next = UniformField::from_values(
            grid,
            ndarray::Array3::from_shape_vec(rho.values().dim(), mixed).expect("shape"),
        )
        .expect("shape");
        // Mixing preserves the charge up to roundoff; re-pin it exactly.
        let q = next.integrate();
        if q > 0.0 {
            let s = n / q;
            next.values_mut().mapv_inplace(|v| v * s);
        }
        rho = next;
    }

    let (eigenvalues, occupations, chemical_potential, density, energy) =
        outcome.expect("at least one SCF iteration runs");
    let iterations = history.len();
    if !converged {
        log::warn!("scf did not converge in {iterations} iterations");
    }
    Ok(ScfOutcome {
        converged,
        iterations,
        energy,
        eigenvalues,
        occupations,
        chemical_potential,
        density,
        history,
        max_gram_deviation: max_gram,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn fermi_half_filling_at_mu() {
        let (f, mu) = fermi_occupations(&[0.3, 0.3], 1.0, 2000.0).unwrap();
        assert_abs_diff_eq!(f[0], 0.5, epsilon = 1e-9);
        assert_abs_diff_eq!(f[1], 0.5, epsilon = 1e-9);
        assert_abs_diff_eq!(mu, 0.3, epsilon = 1e-9);
    }

    #[test]
    fn zero_temperature_step_filling() {
        let (f, mu) = fermi_occupations(&[-1.0, -0.5, 0.2, 0.9], 2.0, 0.0).unwrap();
        assert_eq!(f, vec![1.0, 1.0, 0.0, 0.0]);
        assert!(mu > -0.5 && mu < 0.2);
    }

    #[test]
    fn bisection_three_states() {
        let eigenvalues = [0.0, 0.01, 0.5];
        let (f, mu) = fermi_occupations(&eigenvalues, 2.0, 2000.0).unwrap();
        let total: f64 = f.iter().sum();
        assert_abs_diff_eq!(total, 2.0, epsilon = 1e-12);
        assert!(mu > 0.01 && mu < 0.5, "mu = {mu}");
    }

    #[test]
    fn mu_monotone_in_electron_count() {
        let eigenvalues = [-0.3, -0.1, 0.0, 0.2, 0.5];
        let mut prev = f64::NEG_INFINITY;
        for n in [1.0, 2.0, 3.0, 4.0] {
            let (_, mu) = fermi_occupations(&eigenvalues, n, 1500.0).unwrap();
            assert!(mu >= prev);
            prev = mu;
        }
    }

    #[test]
    fn too_many_electrons_rejected() {
        assert!(fermi_occupations(&[0.0, 1.0], 3.0, 2000.0).is_err());
    }

    #[test]
    fn fixed_point_is_preserved_by_both_schemes() {
        let rho = vec![0.4, 0.6, 1.0];
        for scheme in [
            MixingScheme::Linear { alpha: 0.3 },
            MixingScheme::Anderson {
                depth: 3,
                alpha: 0.3,
            },
        ] {
            let mut mixer = Mixer::new(scheme);
            let next = mixer.next_density(&rho, &rho);
            for (a, b) in next.iter().zip(&rho) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn anderson_depth_zero_is_linear_bitwise() {
        let rho_in = vec![0.5, 1.5, 2.5, 0.25];
        let rho_out = vec![0.7, 1.1, 2.9, 0.5];
        let mut linear = Mixer::new(MixingScheme::Linear { alpha: 0.3 });
        let mut anderson = Mixer::new(MixingScheme::Anderson {
            depth: 0,
            alpha: 0.3,
        });
        let a = linear.next_density(&rho_in, &rho_out);
        let b = anderson.next_density(&rho_in, &rho_out);
        assert_eq!(a, b);
    }

    #[test]
    fn anderson_accelerates_scalar_affine_map() {
        // rho <- c rho + d with c close to 1: linear mixing crawls,
        // Anderson(depth 1) lands on the fixed point after two residuals.
        let c = 0.9;
        let d = 0.1;
        let fixed = d / (1.0 - c);
        let g = |x: f64| c * x + d;

        let run = |scheme: MixingScheme, iters: usize| -> f64 {
            let mut mixer = Mixer::new(scheme);
            let mut x: f64 = 0.0;
            for _ in 0..iters {
                let out = g(x);
                if (out - x).abs() < 1e-13 {
                    return x;
                }
                x = mixer.next_density(&[x], &[out])[0];
            }
            x
        };

        let anderson = run(
            MixingScheme::Anderson {
                depth: 1,
                alpha: 0.5,
            },
            3,
        );
        assert_abs_diff_eq!(anderson, fixed, epsilon = 1e-10);

        let linear = run(MixingScheme::Linear { alpha: 0.5 }, 3);
        assert!((linear - fixed).abs() > 1e-3, "linear converged too fast");
    }
}
