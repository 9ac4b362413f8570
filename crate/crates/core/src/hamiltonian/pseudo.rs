//! Analytic model pseudopotential: local Gaussian wells plus separable
//! nonlocal projectors with signs +/-1, generated directly in real space on
//! whatever grid asks for them.
//!
//! Periodic images of the local part are handled by minimal-image evaluation
//! plus one full shell of lattice shifts; widths are capped at extent/6 so
//! the truncated shells contribute below 1e-12. Projectors are compactly
//! supported (hard cutoff radius at most half the shortest extent), so the
//! minimal image alone covers them.

use crate::error::{Error, Result};
use crate::geometry::Domain;
use crate::grids::{UniformField, UniformGrid};
use ndarray::Array3;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProjectorKind {
    /// Spherical Gaussian.
    S,
    /// Gaussian times one Cartesian coordinate, three components.
    P,
}

/// One nonlocal channel of an atom, before normalization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectorSpec {
    /// gamma = +1 or -1.
    pub sign: f64,
    /// Nonnegative strength multiplying the normalized rank-one term.
    pub coupling: f64,
    /// Gaussian width (au).
    pub width: f64,
    /// Hard support cutoff radius (au).
    pub cutoff: f64,
    pub kind: ProjectorKind,
}

/// One atom of the model: a local Gaussian well and a list of projectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomSpec {
    pub position: [f64; 3],
    /// Local well depth A > 0; the local potential is -A exp(-r^2/2 sigma^2).
    pub depth: f64,
    /// Local well width sigma > 0.
    pub width: f64,
    pub projectors: Vec<ProjectorSpec>,
}

/// A single compiled projector component with its wrapped center and the
/// amplitude that makes its discrete norm on the global grid equal to one.
#[derive(Debug, Clone)]
pub struct Projector {
    pub atom: usize,
    pub sign: f64,
    pub coupling: f64,
    pub center: [f64; 3],
    pub width: f64,
    pub cutoff: f64,
    /// For S: none; for P: the Cartesian component axis.
    pub p_axis: Option<usize>,
    amplitude: f64,
}

impl Projector {
    fn shape(&self, d: [f64; 3]) -> f64 {
        let r2 = d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
        if r2 >= self.cutoff * self.cutoff {
            return 0.0;
        }
        let g = (-0.5 * r2 / (self.width * self.width)).exp();
        match self.p_axis {
            None => g,
            Some(a) => d[a] / self.width * g,
        }
    }

    /// Normalized projector value at a point (unit discrete norm on the
    /// global grid used at compile time).
    pub fn evaluate(&self, domain: &Domain, point: [f64; 3]) -> f64 {
        let d = domain.min_image([
            point[0] - self.center[0],
            point[1] - self.center[1],
            point[2] - self.center[2],
        ]);
        self.amplitude * self.shape(d)
    }

    /// Samples the projector at the tensor product of per-axis coordinates.
    pub fn sample(&self, domain: &Domain, axes: [&[f64]; 3]) -> Array3<f64> {
        let mut out = Array3::zeros((axes[0].len(), axes[1].len(), axes[2].len()));
        for (i, &x) in axes[0].iter().enumerate() {
            for (j, &y) in axes[1].iter().enumerate() {
                for (k, &z) in axes[2].iter().enumerate() {
                    out[[i, j, k]] = self.evaluate(domain, [x, y, z]);
                }
            }
        }
        out
    }

    /// Shortest periodic distance squared from the projector center to an
    /// axis-aligned box given by its lower corner and extents.
    pub fn box_distance2(&self, domain: &Domain, lower: [f64; 3], extents: [f64; 3]) -> f64 {
        let mut d2 = 0.0;
        for a in 0..3 {
            // Wrapped offset of the center from the box lower corner.
            let off = domain.wrap_axis(self.center[a] - lower[a], a);
            if off < extents[a] {
                continue; // inside the slab along this axis
            }
            // Distance to the nearer box face under wrap.
            let ext_a = domain.extents()[a];
            let d = (off - extents[a]).min(ext_a - off);
            d2 += d * d;
        }
        d2
    }

    /// Whether the support ball can intersect the (wrapped) box.
    pub fn overlaps_box(&self, domain: &Domain, lower: [f64; 3], extents: [f64; 3]) -> bool {
        self.box_distance2(domain, lower, extents) < self.cutoff * self.cutoff
    }
}

/// Atoms compiled against a domain and a global grid: wrapped positions,
/// flattened projector components, and fixed normalization amplitudes.
#[derive(Debug, Clone)]
pub struct PseudoPotential {
    domain: Domain,
    atoms: Vec<AtomSpec>,
    projectors: Vec<Projector>,
}

impl PseudoPotential {
    pub fn compile(domain: Domain, atoms: Vec<AtomSpec>, global: &UniformGrid) -> Result<Self> {
        let min_ext = domain
            .extents()
            .iter()
            .fold(f64::INFINITY, |m, &e| m.min(e));
        let mut wrapped = atoms;
        for atom in &mut wrapped {
            if !(atom.depth > 0.0) || !(atom.width > 0.0) {
                return Err(Error::invalid(
                    "atom local depth and width must be positive",
                ));
            }
            if atom.width > min_ext / 6.0 {
                return Err(Error::invalid(format!(
                    "local width {} exceeds extent/6 = {}; the one-shell image sum \
                     would no longer be accurate to 1e-12",
                    atom.width,
                    min_ext / 6.0
                )));
            }
            atom.position = domain.wrap_point(atom.position);
        }

        let mut projectors = Vec::new();
        for (atom_id, atom) in wrapped.iter().enumerate() {
            for spec in &atom.projectors {
                if !(spec.width > 0.0) {
                    return Err(Error::invalid("projector width must be positive"));
                }
                if spec.sign != 1.0 && spec.sign != -1.0 {
                    return Err(Error::invalid("projector sign must be +1 or -1"));
                }
                if spec.coupling < 0.0 {
                    return Err(Error::invalid("projector coupling must be nonnegative"));
                }
                if spec.cutoff > 0.5 * min_ext {
                    return Err(Error::invalid(format!(
                        "projector cutoff {} exceeds half the shortest domain extent {}",
                        spec.cutoff,
                        0.5 * min_ext
                    )));
                }
                let components: Vec<Option<usize>> = match spec.kind {
                    ProjectorKind::S => vec![None],
                    ProjectorKind::P => vec![Some(0), Some(1), Some(2)],
                };
                for p_axis in components {
                    let mut proj = Projector {
                        atom: atom_id,
                        sign: spec.sign,
                        coupling: spec.coupling,
                        center: atom.position,
                        width: spec.width,
                        cutoff: spec.cutoff,
                        p_axis,
                        amplitude: 1.0,
                    };
                    // Unit discrete norm on the global grid.
                    let axes = [
                        global.axis_coords(0),
                        global.axis_coords(1),
                        global.axis_coords(2),
                    ];
                    let raw = proj.sample(&domain, [&axes[0], &axes[1], &axes[2]]);
                    let norm2 = global.volume_element() * raw.iter().map(|v| v * v).sum::<f64>();
                    if norm2 <= 0.0 {
                        return Err(Error::invalid(
                            "projector support does not touch the global grid",
                        ));
                    }
                    proj.amplitude = 1.0 / norm2.sqrt();
                    projectors.push(proj);
                }
            }
        }

        Ok(PseudoPotential {
            domain,
            atoms: wrapped,
            projectors,
        })
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn atoms(&self) -> &[AtomSpec] {
        &self.atoms
    }

    pub fn projectors(&self) -> &[Projector] {
        &self.projectors
    }

    /// Local external potential on a uniform grid: Gaussian wells summed
    /// over the minimal image plus one shell of lattice shifts.
    pub fn external_potential(&self, grid: &UniformGrid) -> UniformField {
        let ext = self.domain.extents();
        UniformField::from_fn(*grid, |p| {
            let mut v = 0.0;
            for atom in &self.atoms {
                let d = self.domain.min_image([
                    p[0] - atom.position[0],
                    p[1] - atom.position[1],
                    p[2] - atom.position[2],
                ]);
                let inv2w2 = 0.5 / (atom.width * atom.width);
                for sx in -1i32..=1 {
                    for sy in -1i32..=1 {
                        for sz in -1i32..=1 {
                            let dx = d[0] + sx as f64 * ext[0];
                            let dy = d[1] + sy as f64 * ext[1];
                            let dz = d[2] + sz as f64 * ext[2];
                            let r2 = dx * dx + dy * dy + dz * dz;
                            v -= atom.depth * (-r2 * inv2w2).exp();
                        }
                    }
                }
            }
            v
        })
    }

    /// Indices of projectors whose atom's wrapped position lies inside the
    /// (possibly wrapping) box, half-open per axis.
    pub fn projectors_with_atom_in_box(&self, lower: [f64; 3], extents: [f64; 3]) -> Vec<usize> {
        self.projectors
            .iter()
            .enumerate()
            .filter(|(_, p)| {
                (0..3).all(|a| {
                    let off = self.domain.wrap_axis(p.center[a] - lower[a], a);
                    off < extents[a]
                })
            })
            .map(|(i, _)| i)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn domain() -> Domain {
        Domain::new([8.0, 8.0, 8.0]).unwrap()
    }

    fn grid() -> UniformGrid {
        UniformGrid::new([0.0; 3], [8.0; 3], [16, 16, 16]).unwrap()
    }

    fn single_atom(projectors: Vec<ProjectorSpec>) -> PseudoPotential {
        let atom = AtomSpec {
            position: [4.0, 4.0, 4.0],
            depth: 2.0,
            width: 0.7,
            projectors,
        };
        PseudoPotential::compile(domain(), vec![atom], &grid()).unwrap()
    }

    #[test]
    fn external_potential_peak_value() {
        // sigma much smaller than the extent: the center value is -A to 1e-12.
        let ps = single_atom(vec![]);
        let v = ps.external_potential(&grid());
        assert_abs_diff_eq!(v.values()[[8, 8, 8]], -2.0, epsilon = 1e-12);
    }

    #[test]
    fn external_potential_lattice_translation_invariance() {
        let ps = single_atom(vec![]);
        let moved = PseudoPotential::compile(
            domain(),
            vec![AtomSpec {
                position: [4.0, 4.0 + 8.0, 4.0 - 16.0],
                depth: 2.0,
                width: 0.7,
                projectors: vec![],
            }],
            &grid(),
        )
        .unwrap();
        let a = ps.external_potential(&grid());
        let b = moved.external_potential(&grid());
        for (x, y) in a.values().iter().zip(b.values().iter()) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-14);
        }
    }

    #[test]
    fn external_potential_superposition() {
        let mk = |pos: [f64; 3]| AtomSpec {
            position: pos,
            depth: 1.5,
            width: 0.6,
            projectors: vec![],
        };
        let both = PseudoPotential::compile(domain(), vec![mk([2.0; 3]), mk([6.0; 3])], &grid())
            .unwrap()
            .external_potential(&grid());
        let one = PseudoPotential::compile(domain(), vec![mk([2.0; 3])], &grid())
            .unwrap()
            .external_potential(&grid());
        let two = PseudoPotential::compile(domain(), vec![mk([6.0; 3])], &grid())
            .unwrap()
            .external_potential(&grid());
        for ((b, o), t) in both
            .values()
            .iter()
            .zip(one.values().iter())
            .zip(two.values().iter())
        {
            assert_abs_diff_eq!(*b, o + t, epsilon = 1e-14);
        }
    }

    #[test]
    fn projector_normalization_and_truncation() {
        let ps = single_atom(vec![ProjectorSpec {
            sign: 1.0,
            coupling: 1.0,
            width: 0.5,
            cutoff: 3.0,
            kind: ProjectorKind::S,
        }]);
        let proj = &ps.projectors()[0];
        let g = grid();
        let axes = [g.axis_coords(0), g.axis_coords(1), g.axis_coords(2)];
        let b = proj.sample(ps.domain(), [&axes[0], &axes[1], &axes[2]]);
        let norm2 = g.volume_element() * b.iter().map(|v| v * v).sum::<f64>();
        assert_abs_diff_eq!(norm2, 1.0, epsilon = 1e-12);
        // Peak at the center, exact zero at and beyond the cutoff.
        assert!(proj.evaluate(ps.domain(), [4.0, 4.0, 4.0]) > 0.0);
        assert_eq!(proj.evaluate(ps.domain(), [4.0, 4.0, 7.0]), 0.0);
        assert_eq!(proj.evaluate(ps.domain(), [4.0, 4.0, 7.5]), 0.0);
    }

    #[test]
    fn p_projector_is_odd() {
        let ps = single_atom(vec![ProjectorSpec {
            sign: -1.0,
            coupling: 0.5,
            width: 0.6,
            cutoff: 3.0,
            kind: ProjectorKind::P,
        }]);
        assert_eq!(ps.projectors().len(), 3);
        let pz = &ps.projectors()[2];
        assert_eq!(pz.p_axis, Some(2));
        let up = pz.evaluate(ps.domain(), [4.0, 4.0, 5.1]);
        let dn = pz.evaluate(ps.domain(), [4.0, 4.0, 2.9]);
        assert_abs_diff_eq!(up, -dn, epsilon = 1e-14);
        assert!(up != 0.0);
    }

    #[test]
    fn cutoff_larger_than_half_domain_rejected() {
        let atom = AtomSpec {
            position: [0.0; 3],
            depth: 1.0,
            width: 0.5,
            projectors: vec![ProjectorSpec {
                sign: 1.0,
                coupling: 1.0,
                width: 0.5,
                cutoff: 4.5,
                kind: ProjectorKind::S,
            }],
        };
        assert!(PseudoPotential::compile(domain(), vec![atom], &grid()).is_err());
    }

    #[test]
    fn box_overlap_and_containment() {
        let ps = single_atom(vec![ProjectorSpec {
            sign: 1.0,
            coupling: 1.0,
            width: 0.5,
            cutoff: 2.0,
            kind: ProjectorKind::S,
        }]);
        let proj = &ps.projectors()[0];
        // Box far from the atom at (4,4,4) under wrap.
        assert!(!proj.overlaps_box(ps.domain(), [0.0, 0.0, 0.0], [1.0, 1.0, 1.0]));
        // Box containing the atom.
        assert!(proj.overlaps_box(ps.domain(), [3.0, 3.0, 3.0], [2.0, 2.0, 2.0]));
        // Box within cutoff distance across the wrap boundary.
        assert!(proj.overlaps_box(ps.domain(), [5.5, 3.5, 3.5], [1.0, 1.0, 1.0]));
        let inside = ps.projectors_with_atom_in_box([3.5, 3.5, 3.5], [1.0, 1.0, 1.0]);
        assert_eq!(inside, vec![0]);
        let outside = ps.projectors_with_atom_in_box([5.0, 5.0, 5.0], [1.0, 1.0, 1.0]);
        assert!(outside.is_empty());
    }
}
