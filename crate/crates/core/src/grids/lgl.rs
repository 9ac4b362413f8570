//! Legendre-Gauss-Lobatto nodes, quadrature weights, differentiation
//! matrices, and tensorized element grids.

use crate::error::{Error, Result};
use ndarray::{Array2, Array3};
use std::sync::Arc;

/// 1D LGL rule with `n` nodes on [-1, 1], exact for polynomials up to
/// degree 2n-3.
#[derive(Debug, Clone)]
pub struct Lgl1d {
    pub n: usize,
    /// Nodes ascending, first -1, last +1.
    pub nodes: Vec<f64>,
    /// Positive quadrature weights summing to 2.
    pub weights: Vec<f64>,
    /// Nodal differentiation matrix; rows sum to zero.
    pub diff: Array2<f64>,
    /// Barycentric weights of the node set (normalized to unit max).
    pub bary: Vec<f64>,
}

/// Legendre P_n(x) and its derivative by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    if n == 0 {
        return (1.0, 0.0);
    }
    let mut p_prev = 1.0;
    let mut p = x;
    for k in 1..n {
        let kf = k as f64;
        let p_next = ((2.0 * kf + 1.0) * x * p - kf * p_prev) / (kf + 1.0);
        p_prev = p;
        p = p_next;
    }
    // P'_n from P_n, P_{n-1}; at x = ±1 use the closed form n(n+1)/2.
    let dp = if (1.0 - x * x).abs() < 1e-14 {
        0.5 * n as f64 * (n as f64 + 1.0) * x.powi(n as i32 + 1)
    } else {
        n as f64 * (x * p - p_prev) / (x * x - 1.0)
    };
    (p, dp)
}

/// Builds the `n`-node LGL rule by Newton iteration on P'_{n-1} with
/// Chebyshev-Lobatto initial guesses.
pub fn lgl_1d(n: usize) -> Result<Lgl1d> {
    if n < 2 {
        return Err(Error::invalid(format!(
            "LGL rule needs at least 2 nodes, got {n}"
        )));
    }
    let deg = n - 1;
    let mut nodes = vec![0.0; n];
    nodes[0] = -1.0;
    nodes[deg] = 1.0;
    for i in 1..deg {
        // Chebyshev-Lobatto guess, indexed so nodes come out ascending.
        let mut x = -(std::f64::consts::PI * i as f64 / deg as f64).cos();
        for _ in 0..100 {
            let (p, dp) = legendre(deg, x);
            // f = P'_deg, f' = P''_deg from the Legendre ODE.
            let f = dp;
            let fp = (2.0 * x * dp - (deg * (deg + 1)) as f64 * p) / (1.0 - x * x);
            let step = f / fp;
            x -= step;
            if step.abs() < 1e-14 {
                break;
            }
        }
        nodes[i] = x;
    }
    // Symmetrize: the rule is symmetric about 0.
    for i in 0..n / 2 {
        let s = 0.5 * (nodes[i] - nodes[deg - i]);
        nodes[i] = s;
        nodes[deg - i] = -s;
    }

    let scale = 2.0 / (deg as f64 * (deg as f64 + 1.0));
    let weights: Vec<f64> = nodes
        .iter()
        .map(|&x| {
            let (p, _) = legendre(deg, x);
            scale / (p * p)
        })
        .collect();

    // Barycentric weights, normalized to avoid over/underflow.
    let mut bary = vec![0.0; n];
    for i in 0..n {
        let mut b = 1.0;
        for j in 0..n {
            if j != i {
                b *= nodes[i] - nodes[j];
            }
        }
        bary[i] = 1.0 / b;
    }
    let bmax = bary.iter().fold(0.0f64, |m, &b| m.max(b.abs()));
    for b in &mut bary {
        *b /= bmax;
    }

    // Differentiation matrix from barycentric weights, with the diagonal
    // chosen so that rows sum to zero exactly.
    let mut diff = Array2::zeros((n, n));
    for i in 0..n {
        let mut row_sum = 0.0;
        for j in 0..n {
            if i != j {
                let d = (bary[j] / bary[i]) / (nodes[i] - nodes[j]);
                diff[[i, j]] = d;
                row_sum += d;
            }
        }
        diff[[i, i]] = -row_sum;
    }

    Ok(Lgl1d {
        n,
        nodes,
        weights,
        diff,
        bary,
    })
}

impl Lgl1d {
    /// Row-stochastic-free interpolation matrix evaluating the nodal
    /// Lagrange basis at arbitrary points (barycentric form).
    pub fn interpolation_matrix(&self, targets: &[f64]) -> Array2<f64> {
        let mut m = Array2::zeros((targets.len(), self.n));
        for (r, &x) in targets.iter().enumerate() {
            let mut hit = None;
            for (j, &xj) in self.nodes.iter().enumerate() {
                if (x - xj).abs() < 1e-13 {
                    hit = Some(j);
                    break;
                }
            }
            if let Some(j) = hit {
                m[[r, j]] = 1.0;
                continue;
            }
            let mut denom = 0.0;
            for j in 0..self.n {
                denom += self.bary[j] / (x - self.nodes[j]);
            }
            for j in 0..self.n {
                m[[r, j]] = (self.bary[j] / (x - self.nodes[j])) / denom;
            }
        }
        m
    }
}

/// Tensor LGL grid on an element box.
#[derive(Debug, Clone)]
pub struct LglGrid {
    lower: [f64; 3],
    extents: [f64; 3],
    axes: [Arc<Lgl1d>; 3],
    coords: [Vec<f64>; 3],
    /// Tensorized quadrature weights including the box Jacobian.
    weights3: Array3<f64>,
}

impl LglGrid {
    pub fn new(lower: [f64; 3], extents: [f64; 3], orders: [usize; 3]) -> Result<Arc<Self>> {
        let ax = lgl_1d(orders[0])?;
        let ay = if orders[1] == orders[0] {
            ax.clone()
        } else {
            lgl_1d(orders[1])?
        };
        let az = if orders[2] == orders[0] {
            ax.clone()
        } else if orders[2] == orders[1] {
            ay.clone()
        } else {
            lgl_1d(orders[2])?
        };
        let axes = [Arc::new(ax), Arc::new(ay), Arc::new(az)];
        let mut coords: [Vec<f64>; 3] = Default::default();
        for a in 0..3 {
            coords[a] = axes[a]
                .nodes
                .iter()
                .map(|&t| lower[a] + 0.5 * (t + 1.0) * extents[a])
                .collect();
        }
        let jac = 0.125 * extents[0] * extents[1] * extents[2];
        let (n0, n1, n2) = (orders[0], orders[1], orders[2]);
        let mut weights3 = Array3::zeros((n0, n1, n2));
        for i in 0..n0 {
            for j in 0..n1 {
                for k in 0..n2 {
                    weights3[[i, j, k]] =
                        jac * axes[0].weights[i] * axes[1].weights[j] * axes[2].weights[k];
                }
            }
        }
        Ok(Arc::new(LglGrid {
            lower,
            extents,
            axes,
            coords,
            weights3,
        }))
    }

    pub fn lower(&self) -> [f64; 3] {
        self.lower
    }

    pub fn extents(&self) -> [f64; 3] {
        self.extents
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.axes[0].n, self.axes[1].n, self.axes[2].n]
    }

    pub fn len(&self) -> usize {
        self.shape().iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn axis(&self, a: usize) -> &Lgl1d {
        &self.axes[a]
    }

    /// Mapped node coordinates along an axis (both element faces included).
    pub fn axis_coords(&self, a: usize) -> &[f64] {
        &self.coords[a]
    }

    pub fn node_position(&self, idx: [usize; 3]) -> [f64; 3] {
        [
            self.coords[0][idx[0]],
            self.coords[1][idx[1]],
            self.coords[2][idx[2]],
        ]
    }

    pub fn weights(&self) -> &Array3<f64> {
        &self.weights3
    }

    pub fn integrate(&self, values: &Array3<f64>) -> f64 {
        (&self.weights3 * values).sum()
    }

    pub fn inner(&self, a: &Array3<f64>, b: &Array3<f64>) -> f64 {
        self.weights3
            .iter()
            .zip(a.iter().zip(b.iter()))
            .map(|(w, (x, y))| w * x * y)
            .sum()
    }

    /// Nodal gradient: 1D differentiation along each axis with the
    /// chain-rule factor 2/extent of the reference-box map.
    pub fn gradient(&self, values: &Array3<f64>) -> [Array3<f64>; 3] {
        let mut out: [Array3<f64>; 3] = [
            Array3::zeros(values.dim()),
            Array3::zeros(values.dim()),
            Array3::zeros(values.dim()),
        ];
        for a in 0..3 {
            let scale = 2.0 / self.extents[a];
            let d = super::fourier::apply_axis(values, &self.axes[a].diff.view(), a);
            out[a] = d * scale;
        }
        out
    }

    /// Restriction of nodal values to one of the 6 element faces.
    /// The result is indexed by the two tangential axes in ascending order.
    pub fn face_trace(&self, values: &Array3<f64>, side: crate::geometry::Side) -> Array2<f64> {
        let n = self.shape();
        let fixed = if side.upper { n[side.axis] - 1 } else { 0 };
        values
            .index_axis(ndarray::Axis(side.axis), fixed)
            .to_owned()
    }

    /// Tangential quadrature weights on a face orthogonal to `axis`,
    /// including the face Jacobian. Indexed like `face_trace` output.
    pub fn face_weights(&self, axis: usize) -> Array2<f64> {
        let (t1, t2) = tangential_axes(axis);
        let j = 0.25 * self.extents[t1] * self.extents[t2];
        let w1 = &self.axes[t1].weights;
        let w2 = &self.axes[t2].weights;
        let mut w = Array2::zeros((w1.len(), w2.len()));
        for p in 0..w1.len() {
            for q in 0..w2.len() {
                w[[p, q]] = j * w1[p] * w2[q];
            }
        }
        w
    }
}

pub fn tangential_axes(axis: usize) -> (usize, usize) {
    match axis {
        0 => (1, 2),
        1 => (0, 2),
        2 => (0, 1),
        _ => panic!("axis out of range"),
    }
}

/// Real scalar field on an element LGL grid.
#[derive(Debug, Clone)]
pub struct LglField {
    grid: Arc<LglGrid>,
    values: Array3<f64>,
}

impl LglField {
    pub fn from_values(grid: Arc<LglGrid>, values: Array3<f64>) -> Result<Self> {
        let s = grid.shape();
        if values.dim() != (s[0], s[1], s[2]) {
            return Err(Error::invalid(format!(
                "field shape {:?} does not match LGL grid shape {:?}",
                values.dim(),
                s
            )));
        }
        Ok(LglField { grid, values })
    }

    pub fn from_fn(grid: Arc<LglGrid>, mut f: impl FnMut([f64; 3]) -> f64) -> Self {
        let s = grid.shape();
        let mut values = Array3::zeros((s[0], s[1], s[2]));
        for i in 0..s[0] {
            for j in 0..s[1] {
                for k in 0..s[2] {
                    values[[i, j, k]] = f(grid.node_position([i, j, k]));
                }
            }
        }
        LglField { grid, values }
    }

    pub fn grid(&self) -> &Arc<LglGrid> {
        &self.grid
    }

    pub fn values(&self) -> &Array3<f64> {
        &self.values
    }

    pub fn integrate(&self) -> f64 {
        self.grid.integrate(&self.values)
    }

    pub fn gradient(&self) -> [Array3<f64>; 3] {
        self.grid.gradient(&self.values)
    }

    pub fn face_trace(&self, side: crate::geometry::Side) -> Array2<f64> {
        self.grid.face_trace(&self.values, side)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn two_and_three_node_rules() {
        let r2 = lgl_1d(2).unwrap();
        assert_abs_diff_eq!(r2.nodes[0], -1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(r2.nodes[1], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(r2.weights[0], 1.0, epsilon = 1e-15);

        let r3 = lgl_1d(3).unwrap();
        assert_abs_diff_eq!(r3.nodes[1], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(r3.weights[0], 1.0 / 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(r3.weights[1], 4.0 / 3.0, epsilon = 1e-14);
    }

    #[test]
    fn known_rules_4_and_5() {
        let r4 = lgl_1d(4).unwrap();
        let s5 = 1.0 / 5.0_f64.sqrt();
        assert_abs_diff_eq!(r4.nodes[1], -s5, epsilon = 1e-14);
        assert_abs_diff_eq!(r4.weights[0], 1.0 / 6.0, epsilon = 1e-14);
        assert_abs_diff_eq!(r4.weights[1], 5.0 / 6.0, epsilon = 1e-14);

        let r5 = lgl_1d(5).unwrap();
        let s21 = (21.0_f64).sqrt() / 7.0;
        assert_abs_diff_eq!(r5.nodes[1], -s21, epsilon = 1e-14);
        assert_abs_diff_eq!(r5.weights[0], 0.1, epsilon = 1e-14);
        assert_abs_diff_eq!(r5.weights[1], 49.0 / 90.0, epsilon = 1e-14);
        assert_abs_diff_eq!(r5.weights[2], 32.0 / 45.0, epsilon = 1e-14);
    }

    #[test]
    fn quadrature_exactness_to_degree_2n_minus_3() {
        for n in 2..=20 {
            let r = lgl_1d(n).unwrap();
            assert_abs_diff_eq!(r.weights.iter().sum::<f64>(), 2.0, epsilon = 1e-12);
            for deg in 0..=(2 * n - 3) {
                let q: f64 = r
                    .nodes
                    .iter()
                    .zip(&r.weights)
                    .map(|(&x, &w)| w * x.powi(deg as i32))
                    .sum();
                let exact = if deg % 2 == 0 {
                    2.0 / (deg as f64 + 1.0)
                } else {
                    0.0
                };
                assert_abs_diff_eq!(q, exact, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn x_squared_integrates_to_two_thirds() {
        for n in 3..=16 {
            let r = lgl_1d(n).unwrap();
            let q: f64 = r.nodes.iter().zip(&r.weights).map(|(&x, &w)| w * x * x).sum();
            assert_abs_diff_eq!(q, 2.0 / 3.0, epsilon = 1e-13);
        }
    }

    #[test]
    fn rejects_single_node() {
        assert!(lgl_1d(1).is_err());
    }

    #[test]
    fn differentiation_matrix_is_exact_on_polynomials() {
        let r = lgl_1d(9).unwrap();
        for row in r.diff.rows() {
            assert_abs_diff_eq!(row.sum(), 0.0, epsilon = 1e-12);
        }
        for deg in 1..=8usize {
            let vals: Vec<f64> = r.nodes.iter().map(|&x| x.powi(deg as i32)).collect();
            for i in 0..r.n {
                let d: f64 = (0..r.n).map(|j| r.diff[[i, j]] * vals[j]).sum();
                let exact = deg as f64 * r.nodes[i].powi(deg as i32 - 1);
                assert_abs_diff_eq!(d, exact, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn gradient_of_coordinate_fields() {
        let grid = LglGrid::new([1.0, 0.0, -2.0], [2.0, 3.0, 4.0], [6, 5, 7]).unwrap();
        let f = LglField::from_fn(grid.clone(), |p| p[0]);
        let g = f.gradient();
        for v in g[0].iter() {
            assert_abs_diff_eq!(*v, 1.0, epsilon = 1e-11);
        }
        for v in g[1].iter().chain(g[2].iter()) {
            assert_abs_diff_eq!(*v, 0.0, epsilon = 1e-11);
        }

        let fxy = LglField::from_fn(grid.clone(), |p| p[0] * p[1]);
        let gxy = fxy.gradient();
        let s = grid.shape();
        for i in 0..s[0] {
            for j in 0..s[1] {
                for k in 0..s[2] {
                    let p = grid.node_position([i, j, k]);
                    assert_abs_diff_eq!(gxy[0][[i, j, k]], p[1], epsilon = 1e-11);
                    assert_abs_diff_eq!(gxy[1][[i, j, k]], p[0], epsilon = 1e-11);
                    assert_abs_diff_eq!(gxy[2][[i, j, k]], 0.0, epsilon = 1e-11);
                }
            }
        }
    }

    #[test]
    fn face_trace_and_weights() {
        use crate::geometry::Side;
        let grid = LglGrid::new([0.0, 0.0, 1.0], [2.0, 3.0, 2.0], [5, 6, 4]).unwrap();
        let f = LglField::from_fn(grid.clone(), |p| p[2]);
        let top = f.face_trace(Side { axis: 2, upper: true });
        for v in top.iter() {
            assert_abs_diff_eq!(*v, 3.0, epsilon = 1e-13);
        }
        // Face quadrature of 1 equals the face area.
        let w = grid.face_weights(2);
        assert_abs_diff_eq!(w.sum(), 6.0, epsilon = 1e-12);
        let wx = grid.face_weights(0);
        assert_abs_diff_eq!(wx.sum(), 6.0, epsilon = 1e-12);
    }

    #[test]
    fn trace_of_gradient_matches_tangential_derivative_of_trace() {
        use crate::geometry::Side;
        let grid = LglGrid::new([0.0; 3], [2.0, 2.0, 2.0], [6, 6, 6]).unwrap();
        let f = LglField::from_fn(grid.clone(), |p| {
            p[0] * p[0] * p[1] + 0.5 * p[1] * p[2] + p[0]
        });
        let side = Side { axis: 2, upper: true };
        let grad = f.gradient();
        let gx_trace = grid.face_trace(&grad[0], side);
        // Tangential derivative along x of the face trace.
        let trace = f.face_trace(side);
        let dx = grid.axis(0).diff.dot(&trace) * (2.0 / grid.extents()[0]);
        for (a, b) in gx_trace.iter().zip(dx.iter()) {
            assert_abs_diff_eq!(*a, *b, epsilon = 1e-10);
        }
    }

    #[test]
    fn interpolation_matrix_reproduces_polynomials() {
        let r = lgl_1d(8).unwrap();
        let targets = [-0.95, -0.3, 0.0, 0.33, 0.9, 1.0];
        let m = r.interpolation_matrix(&targets);
        for deg in 0..8usize {
            let vals: Vec<f64> = r.nodes.iter().map(|&x| x.powi(deg as i32)).collect();
            for (row, &t) in targets.iter().enumerate() {
                let interp: f64 = (0..r.n).map(|j| m[[row, j]] * vals[j]).sum();
                assert_abs_diff_eq!(interp, t.powi(deg as i32), epsilon = 1e-12);
            }
        }
    }
}
