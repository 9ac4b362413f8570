//! Spectral solution of the periodic Poisson problem for the Hartree
//! potential: -lap V_H = 4 pi (rho - mean rho), zero-mean convention
//! (neutralizing background).

use crate::grids::fourier::{wavevectors, Fft3};
use crate::grids::UniformField;
use num_complex::Complex64;

pub fn hartree_potential(rho: &UniformField, fft: &Fft3) -> UniformField {
    let grid = *rho.grid();
    let ks = wavevectors(&grid);
    let mut hat = fft.forward(rho.values());
    for ((i, j, k), v) in hat.indexed_iter_mut() {
        let k2 = ks[0][i] * ks[0][i] + ks[1][j] * ks[1][j] + ks[2][k] * ks[2][k];
        if k2 == 0.0 {
            *v = Complex64::ZERO;
        } else {
            *v *= 4.0 * std::f64::consts::PI / k2;
        }
    }
    UniformField::from_values(grid, fft.inverse_real(hat)).expect("grid shape preserved")
}

/// Hartree energy (1/2) integral of V_H[rho] rho.
pub fn hartree_energy(rho: &UniformField, v_h: &UniformField) -> f64 {
    0.5 * v_h.inner(rho)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grids::{UniformField, UniformGrid};
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn grid() -> UniformGrid {
        UniformGrid::new([0.0; 3], [2.0, 3.0, 5.0], [8, 10, 12]).unwrap()
    }

    #[test]
    fn uniform_density_gives_zero() {
        let g = grid();
        let fft = Fft3::new(g.shape());
        let v = hartree_potential(&UniformField::constant(g, 0.3), &fft);
        for x in v.values().iter() {
            assert_abs_diff_eq!(*x, 0.0, epsilon = 1e-13);
        }
    }

    #[test]
    fn single_mode_analytic_solution() {
        // rho = cos(2 pi z / Lz) solves -lap V = 4 pi rho with
        // V = (Lz^2 / pi) cos(2 pi z / Lz).
        let g = grid();
        let lz = g.extents()[2];
        let fft = Fft3::new(g.shape());
        let rho = UniformField::from_fn(g, |p| (2.0 * PI * p[2] / lz).cos());
        let v = hartree_potential(&rho, &fft);
        let s = g.shape();
        for i in 0..s[0] {
            for j in 0..s[1] {
                for k in 0..s[2] {
                    let z = g.node_position([i, j, k])[2];
                    assert_abs_diff_eq!(
                        v.values()[[i, j, k]],
                        lz * lz / PI * (2.0 * PI * z / lz).cos(),
                        epsilon = 1e-12
                    );
                }
            }
        }
    }

    #[test]
    fn linearity_and_self_adjointness() {
        use rand::{Rng, SeedableRng};
        let g = grid();
        let fft = Fft3::new(g.shape());
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let shape = g.shape();
        let mut rand_field = || {
            let mut f = UniformField::zeros(g);
            for v in f.values_mut().iter_mut() {
                *v = rng.random_range(-1.0..1.0);
            }
            f
        };
        let r1 = rand_field();
        let r2 = rand_field();
        let _ = shape;

        let v1 = hartree_potential(&r1, &fft);
        let v2 = hartree_potential(&r2, &fft);
        let combo = UniformField::from_values(g, 2.0 * r1.values() + 0.5 * r2.values()).unwrap();
        let vc = hartree_potential(&combo, &fft);
        for ((c, a), b) in vc.values().iter().zip(v1.values().iter()).zip(v2.values().iter()) {
            assert_abs_diff_eq!(*c, 2.0 * a + 0.5 * b, epsilon = 1e-11);
        }
        // Self-adjointness of the Hartree operator.
        assert_abs_diff_eq!(v1.inner(&r2), v2.inner(&r1), epsilon = 1e-10);
    }
}
