//! Periodic computational domain, its partition into congruent rectangular
//! elements, buffered extended elements, and the face/neighbor topology.
//!
//! Every quantity lives on a periodic box, so every element face is an
//! interior face; with a single element along an axis the element is its own
//! neighbor and the face pairs the element with itself under wrap.

use crate::error::{Error, Result};
use crate::grids::UniformGrid;
use serde::{Deserialize, Serialize};

pub const AXIS_NAMES: [&str; 3] = ["x", "y", "z"];

/// Periodic rectangular computational domain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    extents: [f64; 3],
}

impl Domain {
    pub fn new(extents: [f64; 3]) -> Result<Self> {
        for (a, &e) in extents.iter().enumerate() {
            if !(e > 0.0) || !e.is_finite() {
                return Err(Error::invalid(format!(
                    "domain extent along {} must be positive, got {e}",
                    AXIS_NAMES[a]
                )));
            }
        }
        Ok(Domain { extents })
    }

    pub fn extents(&self) -> [f64; 3] {
        self.extents
    }

    pub fn volume(&self) -> f64 {
        self.extents.iter().product()
    }

    /// Reduce a coordinate into [0, extent) under periodic wrap.
    pub fn wrap_axis(&self, x: f64, axis: usize) -> f64 {
        let ext = self.extents[axis];
        let r = x.rem_euclid(ext);
        if r >= ext {
            0.0
        } else {
            r
        }
    }

    pub fn wrap_point(&self, p: [f64; 3]) -> [f64; 3] {
        [
            self.wrap_axis(p[0], 0),
            self.wrap_axis(p[1], 1),
            self.wrap_axis(p[2], 2),
        ]
    }

    /// Minimal-image displacement, componentwise in [-extent/2, extent/2).
    pub fn min_image(&self, d: [f64; 3]) -> [f64; 3] {
        let mut out = [0.0; 3];
        for a in 0..3 {
            let ext = self.extents[a];
            let mut r = d[a].rem_euclid(ext);
            if r >= ext {
                r = 0.0;
            }
            if r >= 0.5 * ext {
                r -= ext;
            }
            out[a] = r;
        }
        out
    }
}

/// One box of the partition. Atom ids are indices into the run's atom list;
/// membership uses wrapped positions and half-open boxes [lo, hi).
#[derive(Debug, Clone)]
pub struct Element {
    pub index: usize,
    pub lower: [f64; 3],
    pub upper: [f64; 3],
    pub atom_ids: Vec<usize>,
}

impl Element {
    pub fn extents(&self) -> [f64; 3] {
        [
            self.upper[0] - self.lower[0],
            self.upper[1] - self.lower[1],
            self.upper[2] - self.lower[2],
        ]
    }

    pub fn volume(&self) -> f64 {
        self.extents().iter().product()
    }
}

/// Which side of a face an element sits on. `Lo` is the element whose
/// upper face (along the face axis) coincides with the face plane.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaceSide {
    Lo,
    Hi,
}

/// A shared face between two elements (possibly the same element under
/// periodic wrap). The outward unit normal of `elem_lo` on the face is
/// +e_axis and the outward normal of `elem_hi` is -e_axis, so the two
/// normals sum to zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Face {
    pub index: usize,
    pub axis: usize,
    /// Element whose upper face (along `axis`) this is.
    pub elem_lo: usize,
    /// Neighboring element in the +axis direction (wrapped).
    pub elem_hi: usize,
}

impl Face {
    pub fn is_self_paired(&self) -> bool {
        self.elem_lo == self.elem_hi
    }

    /// Outward unit normals of (elem_lo, elem_hi) on this face.
    pub fn normals(&self) -> ([f64; 3], [f64; 3]) {
        let mut n1 = [0.0; 3];
        let mut n2 = [0.0; 3];
        n1[self.axis] = 1.0;
        n2[self.axis] = -1.0;
        (n1, n2)
    }
}

/// One of the six sides of an element box.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Side {
    pub axis: usize,
    pub upper: bool,
}

impl Side {
    pub const ALL: [Side; 6] = [
        Side { axis: 0, upper: false },
        Side { axis: 0, upper: true },
        Side { axis: 1, upper: false },
        Side { axis: 1, upper: true },
        Side { axis: 2, upper: false },
        Side { axis: 2, upper: true },
    ];
}

/// Quasi-uniform rectangular partition of the periodic domain into
/// `counts[0] * counts[1] * counts[2]` congruent elements.
#[derive(Debug, Clone)]
pub struct Partition {
    domain: Domain,
    counts: [usize; 3],
    elements: Vec<Element>,
    faces: Vec<Face>,
}

impl Partition {
    /// Builds the partition and assigns each atom to the element containing
    /// its wrapped position (half-open boxes, ties go to the upper element).
    pub fn build(domain: Domain, counts: [usize; 3], atoms: &[[f64; 3]]) -> Result<Self> {
        for (a, &c) in counts.iter().enumerate() {
            if c == 0 {
                return Err(Error::invalid(format!(
                    "partition count along {} must be at least 1",
                    AXIS_NAMES[a]
                )));
            }
        }
        let ext = domain.extents();
        let edge = [
            ext[0] / counts[0] as f64,
            ext[1] / counts[1] as f64,
            ext[2] / counts[2] as f64,
        ];

        let total = counts[0] * counts[1] * counts[2];
        let mut elements: Vec<Element> = (0..total)
            .map(|idx| {
                let ijk = coords_of(idx, counts);
                let lower = [
                    ijk[0] as f64 * edge[0],
                    ijk[1] as f64 * edge[1],
                    ijk[2] as f64 * edge[2],
                ];
                let upper = [lower[0] + edge[0], lower[1] + edge[1], lower[2] + edge[2]];
                Element {
                    index: idx,
                    lower,
                    upper,
                    atom_ids: Vec::new(),
                }
            })
            .collect();

        for (atom_id, &pos) in atoms.iter().enumerate() {
            let w = domain.wrap_point(pos);
            let mut ijk = [0usize; 3];
            for a in 0..3 {
                let i = (w[a] / edge[a]).floor() as isize;
                ijk[a] = (i.max(0) as usize).min(counts[a] - 1);
            }
            elements[flat_index(ijk, counts)].atom_ids.push(atom_id);
        }

        let faces = (0..total)
            .flat_map(|idx| {
                let ijk = coords_of(idx, counts);
                (0..3).map(move |axis| {
                    let mut nb = ijk;
                    nb[axis] = (ijk[axis] + 1) % counts[axis];
                    Face {
                        index: idx * 3 + axis,
                        axis,
                        elem_lo: idx,
                        elem_hi: flat_index(nb, counts),
                    }
                })
            })
            .collect();

        Ok(Partition {
            domain,
            counts,
            elements,
            faces,
        })
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn counts(&self) -> [usize; 3] {
        self.counts
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn elements(&self) -> &[Element] {
        &self.elements
    }

    pub fn element(&self, k: usize) -> &Element {
        &self.elements[k]
    }

    pub fn faces(&self) -> &[Face] {
        &self.faces
    }

    pub fn element_extents(&self) -> [f64; 3] {
        self.elements[0].extents()
    }

    /// Shortest element edge, the `h` of the interior penalty term.
    pub fn min_edge(&self) -> f64 {
        let e = self.element_extents();
        e[0].min(e[1]).min(e[2])
    }

    pub fn element_coords(&self, k: usize) -> [usize; 3] {
        coords_of(k, self.counts)
    }

    pub fn flat_index(&self, ijk: [usize; 3]) -> usize {
        flat_index(ijk, self.counts)
    }

    /// Neighbor element index one step along `axis` (dir = +1 or -1), wrapped.
    pub fn neighbor(&self, k: usize, axis: usize, dir: isize) -> usize {
        let mut ijk = self.element_coords(k);
        let c = self.counts[axis] as isize;
        ijk[axis] = ((ijk[axis] as isize + dir).rem_euclid(c)) as usize;
        self.flat_index(ijk)
    }

    /// Face incident to element `k` on the given side, and which side of
    /// that face the element occupies. Total over all (element, side) pairs.
    pub fn face_of(&self, k: usize, side: Side) -> (&Face, FaceSide) {
        if side.upper {
            (&self.faces[k * 3 + side.axis], FaceSide::Lo)
        } else {
            let nb = self.neighbor(k, side.axis, -1);
            (&self.faces[nb * 3 + side.axis], FaceSide::Hi)
        }
    }
}

/// An element enlarged symmetrically by the buffer, carrying the restriction
/// of the global uniform grid. The box is kept unwrapped (its lower corner
/// may be negative); node ownership in the global grid is tracked through
/// `start_index`, the (possibly negative) global index of the first node
/// along each axis.
#[derive(Debug, Clone)]
pub struct ExtendedElement {
    pub element_index: usize,
    pub buffer: [f64; 3],
    pub grid: UniformGrid,
    pub start_index: [isize; 3],
}

impl ExtendedElement {
    /// Global (wrapped) node indices along one axis.
    pub fn global_axis_indices(&self, axis: usize, global_points: usize) -> Vec<usize> {
        (0..self.grid.shape()[axis])
            .map(|j| {
                (self.start_index[axis] + j as isize).rem_euclid(global_points as isize) as usize
            })
            .collect()
    }
}

/// Builds the extended element `Q_k`: the element box enlarged symmetrically
/// by `buffer` per axis, with the grid copied (wrapped) from `global`.
///
/// The buffer is capped at (domain extent - element extent)/2 per axis so the
/// wrapped restriction stays single-valued, and must be a whole number of
/// global grid spacings so restriction is a pure copy.
pub fn extended_element(
    partition: &Partition,
    k: usize,
    buffer: [f64; 3],
    global: &UniformGrid,
) -> Result<ExtendedElement> {
    let elem = partition.element(k);
    let dom_ext = partition.domain().extents();
    let elem_ext = elem.extents();
    let spacing = global.spacing();

    let mut shape = [0usize; 3];
    let mut start_index = [0isize; 3];
    let mut lower = [0.0f64; 3];
    for a in 0..3 {
        let b = buffer[a];
        if b < 0.0 {
            return Err(Error::invalid(format!(
                "buffer along {} must be nonnegative, got {b}",
                AXIS_NAMES[a]
            )));
        }
        let cap = 0.5 * (dom_ext[a] - elem_ext[a]);
        if b > cap + 1e-12 {
            return Err(Error::invalid(format!(
                "buffer {b} along {} exceeds the admissible maximum {cap} \
                 (half of domain extent minus element extent)",
                AXIS_NAMES[a]
            )));
        }
        let steps = b / spacing[a];
        let steps_round = steps.round();
        if (steps - steps_round).abs() > 1e-9 {
            return Err(Error::invalid(format!(
                "buffer {b} along {} is not a whole number of global grid \
                 spacings ({})",
                AXIS_NAMES[a], spacing[a]
            )));
        }
        let buf_pts = steps_round as isize;
        let elem_pts = (elem_ext[a] / spacing[a]).round() as isize;
        let elem_start = (elem.lower[a] / spacing[a]).round() as isize;
        shape[a] = (elem_pts + 2 * buf_pts) as usize;
        start_index[a] = elem_start - buf_pts;
        lower[a] = elem.lower[a] - b;
    }

    let extents = [
        shape[0] as f64 * spacing[0],
        shape[1] as f64 * spacing[1],
        shape[2] as f64 * spacing[2],
    ];
    let grid = UniformGrid::new(lower, extents, shape)?;
    Ok(ExtendedElement {
        element_index: k,
        buffer,
        grid,
        start_index,
    })
}

fn flat_index(ijk: [usize; 3], counts: [usize; 3]) -> usize {
    (ijk[0] * counts[1] + ijk[1]) * counts[2] + ijk[2]
}

fn coords_of(idx: usize, counts: [usize; 3]) -> [usize; 3] {
    let k = idx % counts[2];
    let j = (idx / counts[2]) % counts[1];
    let i = idx / (counts[1] * counts[2]);
    [i, j, k]
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn quasi_1d_domain() -> Domain {
        Domain::new([7.994, 7.994, 4.0 * 7.994]).unwrap()
    }

    #[test]
    fn partition_quasi_1d_chain() {
        let domain = quasi_1d_domain();
        let part = Partition::build(domain, [1, 1, 4], &[]).unwrap();
        assert_eq!(part.len(), 4);
        for elem in part.elements() {
            assert_abs_diff_eq!(elem.extents()[2], 7.994, epsilon = 1e-12);
            assert_abs_diff_eq!(elem.extents()[0], 7.994, epsilon = 1e-12);
        }
    }

    #[test]
    fn partition_identity() {
        let domain = quasi_1d_domain();
        let part = Partition::build(domain, [1, 1, 1], &[]).unwrap();
        assert_eq!(part.len(), 1);
        assert_eq!(part.faces().len(), 3);
        for face in part.faces() {
            assert!(face.is_self_paired());
        }
    }

    #[test]
    fn tiling_volume_sums_exactly() {
        for counts in [[1, 1, 4], [2, 2, 2], [3, 1, 5]] {
            let domain = Domain::new([6.0, 7.5, 9.0]).unwrap();
            let part = Partition::build(domain, counts, &[]).unwrap();
            let sum: f64 = part.elements().iter().map(Element::volume).sum();
            assert_abs_diff_eq!(sum, domain.volume(), epsilon = 1e-12 * domain.volume());
        }
    }

    #[test]
    fn face_count_and_normals() {
        let domain = Domain::new([4.0, 4.0, 4.0]).unwrap();
        let part = Partition::build(domain, [2, 2, 2], &[]).unwrap();
        assert_eq!(part.faces().len(), 24);
        for face in part.faces() {
            let (n1, n2) = face.normals();
            for a in 0..3 {
                assert_eq!(n1[a] + n2[a], 0.0);
            }
        }
    }

    #[test]
    fn face_lookup_is_total_and_consistent() {
        let domain = Domain::new([4.0, 4.0, 8.0]).unwrap();
        let part = Partition::build(domain, [1, 1, 4], &[]).unwrap();
        for k in 0..part.len() {
            for side in Side::ALL {
                let (face, fs) = part.face_of(k, side);
                assert_eq!(face.axis, side.axis);
                match fs {
                    FaceSide::Lo => assert_eq!(face.elem_lo, k),
                    FaceSide::Hi => assert_eq!(face.elem_hi, k),
                }
            }
        }
        // z-faces pair consecutive elements; x and y faces are self-paired.
        let z_faces: Vec<_> = part.faces().iter().filter(|f| f.axis == 2).collect();
        assert_eq!(z_faces.len(), 4);
        for f in z_faces {
            assert_eq!(f.elem_hi, (f.elem_lo + 1) % 4);
        }
        assert!(part
            .faces()
            .iter()
            .filter(|f| f.axis != 2)
            .all(Face::is_self_paired));
    }

    #[test]
    fn atom_assignment_half_open() {
        let domain = Domain::new([2.0, 2.0, 4.0]).unwrap();
        // One atom exactly on the z-boundary between elements 0 and 1: it
        // belongs to the upper element. One wrapped atom at z = 4 -> z = 0.
        let atoms = [[0.5, 0.5, 2.0], [0.1, 0.1, 4.0], [1.0, 1.0, 0.5]];
        let part = Partition::build(domain, [1, 1, 2], &atoms).unwrap();
        assert_eq!(part.element(0).atom_ids, vec![1, 2]);
        assert_eq!(part.element(1).atom_ids, vec![0]);
    }

    #[test]
    fn extended_element_zero_buffer_is_element() {
        let domain = Domain::new([4.0, 4.0, 8.0]).unwrap();
        let part = Partition::build(domain, [1, 1, 2], &[]).unwrap();
        let global = UniformGrid::new([0.0; 3], domain.extents(), [8, 8, 16]).unwrap();
        let q = extended_element(&part, 1, [0.0; 3], &global).unwrap();
        assert_eq!(q.grid.shape(), [8, 8, 8]);
        assert_abs_diff_eq!(q.grid.lower()[2], 4.0, epsilon = 1e-12);
        assert_eq!(q.start_index, [0, 0, 8]);
    }

    #[test]
    fn extended_element_buffer_spans_cells() {
        // Quasi-1D chain with buffer of half an element edge along z.
        let domain = quasi_1d_domain();
        let part = Partition::build(domain, [1, 1, 4], &[]).unwrap();
        let global = UniformGrid::new([0.0; 3], domain.extents(), [20, 20, 80]).unwrap();
        let b = 0.5 * 7.994;
        let q = extended_element(&part, 0, [0.0, 0.0, b], &global).unwrap();
        assert_eq!(q.grid.shape(), [20, 20, 40]);
        assert_abs_diff_eq!(q.grid.extents()[2], 2.0 * 7.994, epsilon = 1e-12);
        // Wrapped start: element 0 starts at global index 0, buffer 10 steps.
        assert_eq!(q.start_index[2], -10);
        let idx = q.global_axis_indices(2, 80);
        assert_eq!(idx[0], 70);
        assert_eq!(idx[10], 0);
    }

    #[test]
    fn extended_element_max_buffer_covers_2x2x2() {
        let domain = Domain::new([8.0, 8.0, 8.0]).unwrap();
        let part = Partition::build(domain, [4, 4, 4], &[]).unwrap();
        let global = UniformGrid::new([0.0; 3], domain.extents(), [32, 32, 32]).unwrap();
        // Max admissible buffer: (8 - 2)/2 = 3, i.e. 1.5 element edges.
        let q = extended_element(&part, 0, [3.0; 3], &global).unwrap();
        for a in 0..3 {
            assert_abs_diff_eq!(q.grid.extents()[a], 8.0, epsilon = 1e-12);
        }
        // 2 + 2*1.5 = 5 element edges would self-overlap; reject.
        let err = extended_element(&part, 0, [3.5, 0.0, 0.0], &global).unwrap_err();
        assert!(err.to_string().contains('x'), "message names the axis: {err}");
    }

    #[test]
    fn extended_element_translation_equivariance() {
        let domain = Domain::new([4.0, 4.0, 12.0]).unwrap();
        let part = Partition::build(domain, [1, 1, 3], &[]).unwrap();
        let global = UniformGrid::new([0.0; 3], domain.extents(), [8, 8, 24]).unwrap();
        let b = [0.0, 0.0, 2.0];
        let q0 = extended_element(&part, 0, b, &global).unwrap();
        let q1 = extended_element(&part, 1, b, &global).unwrap();
        let edge = part.element_extents()[2];
        assert_abs_diff_eq!(
            q1.grid.lower()[2] - q0.grid.lower()[2],
            edge,
            epsilon = 1e-12
        );
        assert_eq!(
            q1.start_index[2] - q0.start_index[2],
            (edge / global.spacing()[2]).round() as isize
        );
    }

    #[test]
    fn wrap_and_min_image() {
        let domain = Domain::new([2.0, 3.0, 4.0]).unwrap();
        let w = domain.wrap_point([-0.5, 3.5, 8.0]);
        assert_abs_diff_eq!(w[0], 1.5, epsilon = 1e-12);
        assert_abs_diff_eq!(w[1], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(w[2], 0.0, epsilon = 1e-12);
        let d = domain.min_image([1.5, -2.0, 2.0]);
        assert_abs_diff_eq!(d[0], -0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(d[1], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(d[2], -2.0, epsilon = 1e-12);
    }

    #[test]
    fn zero_count_rejected() {
        let domain = Domain::new([1.0, 1.0, 1.0]).unwrap();
        assert!(Partition::build(domain, [0, 1, 1], &[]).is_err());
    }
}
