//! Model pseudopotential, Hartree and exchange-correlation potentials,
//! effective-potential assembly, and total-energy evaluation.

pub mod hartree;
pub mod pseudo;
pub mod xc;

pub use pseudo::{AtomSpec, Projector, ProjectorKind, ProjectorSpec, PseudoPotential};

use crate::error::{Error, Result};
use crate::grids::fourier::Fft3;
use crate::grids::UniformField;
use serde::{Deserialize, Serialize};

/// Which density-dependent terms enter the effective potential. Disabling
/// both makes the Hamiltonian independent of the density (non-interacting).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HamiltonianOptions {
    pub hartree: bool,
    pub xc: bool,
}

impl Default for HamiltonianOptions {
    fn default() -> Self {
        HamiltonianOptions {
            hartree: true,
            xc: true,
        }
    }
}

impl HamiltonianOptions {
    pub fn density_dependent(&self) -> bool {
        self.hartree || self.xc
    }
}

/// The effective one-body potential and its components, all on the global
/// uniform grid. The total is the pointwise sum of the three components.
#[derive(Debug, Clone)]
pub struct EffectivePotential {
    pub total: UniformField,
    pub external: UniformField,
    pub hartree: UniformField,
    pub xc: UniformField,
    /// Negative charge clamped before the XC evaluation (diagnostic).
    pub xc_clamped_charge: f64,
}

/// Assembles V_eff = V_ext + V_H + V_xc from a density and the precomputed
/// external potential.
pub fn effective_potential(
    rho: &UniformField,
    v_ext: &UniformField,
    opts: HamiltonianOptions,
    fft: &Fft3,
) -> EffectivePotential {
    let grid = *rho.grid();
    let v_h = if opts.hartree {
        hartree::hartree_potential(rho, fft)
    } else {
        UniformField::zeros(grid)
    };
    let (v_xc, clamped) = if opts.xc {
        let out = xc::xc_lda(rho);
        (out.v, out.clamped_charge)
    } else {
        (UniformField::zeros(grid), 0.0)
    };
    let total = UniformField::from_values(
        grid,
        v_ext.values() + v_h.values() + v_xc.values(),
    )
    .expect("component grids match");
    EffectivePotential {
        total,
        external: v_ext.clone(),
        hartree: v_h,
        xc: v_xc,
        xc_clamped_charge: clamped,
    }
}

/// Occupation-weighted total energy decomposition:
/// total = sum_i f_i E_i - E_H,dc + E_xc - E_xc,dc.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    /// Occupation-weighted eigenvalue sum.
    pub band_energy: f64,
    /// Hartree double count (1/2) int V_H rho.
    pub hartree_double_count: f64,
    pub xc_energy: f64,
    /// Double count int v_xc rho.
    pub xc_double_count: f64,
    pub total: f64,
}

impl EnergyReport {
    /// Re-evaluates the defining identity from the stored components.
    pub fn identity_residual(&self) -> f64 {
        (self.band_energy - self.hartree_double_count + self.xc_energy - self.xc_double_count
            - self.total)
            .abs()
    }
}

/// Total energy from eigenvalues, occupations, and the density they
/// produce. The Hartree double count is evaluated spectrally as
/// (1/2) int V_H[rho] rho.
pub fn total_energy(
    eigenvalues: &[f64],
    occupations: &[f64],
    rho: &UniformField,
    n_electrons: f64,
    opts: HamiltonianOptions,
    fft: &Fft3,
) -> Result<EnergyReport> {
    if eigenvalues.len() != occupations.len() {
        return Err(Error::invalid(
            "eigenvalue and occupation counts differ",
        ));
    }
    let f_sum: f64 = occupations.iter().sum();
    if (f_sum - n_electrons).abs() > 1e-8 {
        return Err(Error::invalid(format!(
            "occupations sum to {f_sum}, expected {n_electrons}"
        )));
    }
    let band_energy: f64 = eigenvalues
        .iter()
        .zip(occupations.iter())
        .map(|(e, f)| f * e)
        .sum();
    let hartree_double_count = if opts.hartree {
        let v_h = hartree::hartree_potential(rho, fft);
        hartree::hartree_energy(rho, &v_h)
    } else {
        0.0
    };
    let (xc_energy, xc_double_count) = if opts.xc {
        let out = xc::xc_lda(rho);
        (out.energy, out.double_count)
    } else {
        (0.0, 0.0)
    };
    let total = band_energy - hartree_double_count + xc_energy - xc_double_count;
    Ok(EnergyReport {
        band_energy,
        hartree_double_count,
        xc_energy,
        xc_double_count,
        total,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Domain;
    use crate::grids::UniformGrid;
    use approx::assert_abs_diff_eq;

    fn setup() -> (PseudoPotential, UniformGrid, Fft3) {
        let domain = Domain::new([6.0, 6.0, 6.0]).unwrap();
        let grid = UniformGrid::new([0.0; 3], [6.0; 3], [12, 12, 12]).unwrap();
        let atom = AtomSpec {
            position: [3.0; 3],
            depth: 2.0,
            width: 0.8,
            projectors: vec![],
        };
        let ps = PseudoPotential::compile(domain, vec![atom], &grid).unwrap();
        let fft = Fft3::new(grid.shape());
        (ps, grid, fft)
    }

    #[test]
    fn zero_density_gives_external_only() {
        let (ps, grid, fft) = setup();
        let v_ext = ps.external_potential(&grid);
        let rho = UniformField::zeros(grid);
        let v = effective_potential(&rho, &v_ext, HamiltonianOptions::default(), &fft);
        for (a, b) in v.total.values().iter().zip(v_ext.values().iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-13);
        }
    }

    #[test]
    fn component_sum_recheck() {
        let (ps, grid, fft) = setup();
        let v_ext = ps.external_potential(&grid);
        let rho = UniformField::from_fn(grid, |p| {
            0.01 + 0.005 * (std::f64::consts::PI * p[0] / 3.0).cos().powi(2)
        });
        let v = effective_potential(&rho, &v_ext, HamiltonianOptions::default(), &fft);
        for (((t, e), h), x) in v
            .total
            .values()
            .iter()
            .zip(v.external.values().iter())
            .zip(v.hartree.values().iter())
            .zip(v.xc.values().iter())
        {
            assert_abs_diff_eq!(*t, e + h + x, epsilon = 1e-13);
        }
    }

    #[test]
    fn changing_width_touches_only_external_component() {
        let (ps, grid, fft) = setup();
        let rho = UniformField::from_fn(grid, |p| 0.02 + 0.01 * (p[2] - 3.0).tanh().powi(2));
        let opts = HamiltonianOptions::default();
        let v1 = effective_potential(&rho, &ps.external_potential(&grid), opts, &fft);

        let domain = Domain::new([6.0; 3]).unwrap();
        let wide = PseudoPotential::compile(
            domain,
            vec![AtomSpec {
                position: [3.0; 3],
                depth: 2.0,
                width: 1.0,
                projectors: vec![],
            }],
            &grid,
        )
        .unwrap();
        let v2 = effective_potential(&rho, &wide.external_potential(&grid), opts, &fft);
        for (a, b) in v1.hartree.values().iter().zip(v2.hartree.values().iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-14);
        }
        for (a, b) in v1.xc.values().iter().zip(v2.xc.values().iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-14);
        }
        let diff: f64 = v1
            .external
            .values()
            .iter()
            .zip(v2.external.values().iter())
            .map(|(a, b)| (a - b).abs())
            .sum();
        assert!(diff > 1e-3);
    }

    #[test]
    fn non_interacting_total_is_band_energy() {
        let (_, grid, fft) = setup();
        let rho = UniformField::constant(grid, 2.0 / grid.volume());
        let opts = HamiltonianOptions {
            hartree: false,
            xc: false,
        };
        let report =
            total_energy(&[-0.5, -0.2, 0.1], &[1.0, 1.0, 0.0], &rho, 2.0, opts, &fft).unwrap();
        assert_abs_diff_eq!(report.total, -0.7, epsilon = 1e-14);
        assert_eq!(report.identity_residual(), 0.0);
    }

    #[test]
    fn zero_occupations_with_zero_density() {
        let (_, grid, fft) = setup();
        let rho = UniformField::zeros(grid);
        let report = total_energy(
            &[-0.5, 0.3],
            &[0.0, 0.0],
            &rho,
            0.0,
            HamiltonianOptions::default(),
            &fft,
        )
        .unwrap();
        assert_abs_diff_eq!(report.total, 0.0, epsilon = 1e-14);
    }

    #[test]
    fn occupation_sum_mismatch_rejected() {
        let (_, grid, fft) = setup();
        let rho = UniformField::zeros(grid);
        assert!(total_energy(
            &[0.0],
            &[0.5],
            &rho,
            1.0,
            HamiltonianOptions::default(),
            &fft
        )
        .is_err());
    }

    #[test]
    fn effective_potential_translation_invariance() {
        // Shifting atoms and density together by a whole grid step leaves
        // the potential field shifted by the same step.
        let domain = Domain::new([6.0; 3]).unwrap();
        let grid = UniformGrid::new([0.0; 3], [6.0; 3], [12, 12, 12]).unwrap();
        let fft = Fft3::new(grid.shape());
        let h = grid.spacing()[2];
        let mk = |z: f64| {
            PseudoPotential::compile(
                domain,
                vec![AtomSpec {
                    position: [3.0, 3.0, z],
                    depth: 1.5,
                    width: 0.7,
                    projectors: vec![],
                }],
                &grid,
            )
            .unwrap()
        };
        let rho0 = UniformField::from_fn(grid, |p| {
            let d = domain.min_image([p[0] - 3.0, p[1] - 3.0, p[2] - 3.0]);
            0.05 * (-0.5 * (d[0] * d[0] + d[1] * d[1] + d[2] * d[2])).exp()
        });
        let mut rho1 = UniformField::zeros(grid);
        // Roll by one grid step along z.
        let s = grid.shape();
        for i in 0..s[0] {
            for j in 0..s[1] {
                for k in 0..s[2] {
                    rho1.values_mut()[[i, j, k]] = rho0.values()[[i, j, (k + s[2] - 1) % s[2]]];
                }
            }
        }
        let opts = HamiltonianOptions::default();
        let v0 = effective_potential(&rho0, &mk(3.0).external_potential(&grid), opts, &fft);
        let v1 = effective_potential(&rho1, &mk(3.0 + h).external_potential(&grid), opts, &fft);
        for i in 0..s[0] {
            for j in 0..s[1] {
                for k in 0..s[2] {
                    assert_abs_diff_eq!(
                        v1.total.values()[[i, j, k]],
                        v0.total.values()[[i, j, (k + s[2] - 1) % s[2]]],
                        epsilon = 1e-10
                    );
                }
            }
        }
    }
}
