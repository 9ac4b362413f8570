//! FFT plumbing on periodic uniform grids: diagonal Fourier multipliers,
//! spectral differentiation, and trigonometric interpolation carried out
//! dimension by dimension.
//!
//! All fields are real (Gamma-point sampling); transforms run through a
//! complex FFT and the real part is taken after inverse transforms. For even
//! grids the Nyquist mode uses the balanced convention (split equally
//! between +/-), so interpolants and derivatives of real fields stay real.

use super::uniform::{UniformField, UniformGrid};
use ndarray::{Array2, Array3, ArrayView2, Axis};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

/// Cached FFT plans for one grid shape.
pub struct Fft3 {
    shape: [usize; 3],
    fwd: [Arc<dyn Fft<f64>>; 3],
    inv: [Arc<dyn Fft<f64>>; 3],
}

impl Fft3 {
    pub fn new(shape: [usize; 3]) -> Self {
        let mut planner = FftPlanner::new();
        let fwd = [
            planner.plan_fft_forward(shape[0]),
            planner.plan_fft_forward(shape[1]),
            planner.plan_fft_forward(shape[2]),
        ];
        let inv = [
            planner.plan_fft_inverse(shape[0]),
            planner.plan_fft_inverse(shape[1]),
            planner.plan_fft_inverse(shape[2]),
        ];
        Fft3 { shape, fwd, inv }
    }

    pub fn shape(&self) -> [usize; 3] {
        self.shape
    }

    fn transform_axis(&self, data: &mut Array3<Complex64>, axis: usize, forward: bool) {
        let n = self.shape[axis];
        let plan = if forward {
            &self.fwd[axis]
        } else {
            &self.inv[axis]
        };
        let mut buf = vec![Complex64::ZERO; n];
        for mut lane in data.lanes_mut(Axis(axis)) {
            for (b, v) in buf.iter_mut().zip(lane.iter()) {
                *b = *v;
            }
            plan.process(&mut buf);
            for (v, b) in lane.iter_mut().zip(buf.iter()) {
                *v = *b;
            }
        }
    }

    /// Unnormalized forward 3D DFT of a real field.
    pub fn forward(&self, f: &Array3<f64>) -> Array3<Complex64> {
        let mut data = f.mapv(|v| Complex64::new(v, 0.0));
        for axis in 0..3 {
            self.transform_axis(&mut data, axis, true);
        }
        data
    }

    /// Normalized inverse 3D DFT, returning the real part.
    pub fn inverse_real(&self, mut data: Array3<Complex64>) -> Array3<f64> {
        for axis in 0..3 {
            self.transform_axis(&mut data, axis, false);
        }
        let scale = 1.0 / (self.shape[0] * self.shape[1] * self.shape[2]) as f64;
        data.mapv(|v| v.re * scale)
    }
}

/// Signed integer frequency of DFT bin `i` on an `n`-point grid
/// (Nyquist mapped to +n/2 for even n).
pub fn signed_freq(i: usize, n: usize) -> i64 {
    if i as i64 <= n as i64 / 2 {
        i as i64
    } else {
        i as i64 - n as i64
    }
}

/// Angular wavevectors 2*pi*freq/extent along each axis of a grid.
pub fn wavevectors(grid: &UniformGrid) -> [Vec<f64>; 3] {
    let mut out: [Vec<f64>; 3] = Default::default();
    for a in 0..3 {
        let n = grid.shape()[a];
        let l = grid.extents()[a];
        out[a] = (0..n)
            .map(|i| 2.0 * std::f64::consts::PI * signed_freq(i, n) as f64 / l)
            .collect();
    }
    out
}

/// Applies a real diagonal Fourier multiplier `mult(kx, ky, kz)`.
pub fn apply_multiplier(
    fft: &Fft3,
    grid: &UniformGrid,
    f: &Array3<f64>,
    mult: impl Fn(f64, f64, f64) -> f64,
) -> Array3<f64> {
    let ks = wavevectors(grid);
    let mut hat = fft.forward(f);
    for ((i, j, k), v) in hat.indexed_iter_mut() {
        *v *= mult(ks[0][i], ks[1][j], ks[2][k]);
    }
    fft.inverse_real(hat)
}

/// Spectral gradient of a periodic field. Derivative multipliers are i*k
/// with the Nyquist mode zeroed (the balanced interpolant of the Nyquist
/// cosine has zero nodal derivative).
pub fn spectral_gradient(fft: &Fft3, grid: &UniformGrid, f: &Array3<f64>) -> [Array3<f64>; 3] {
    let ks = wavevectors(grid);
    let shape = grid.shape();
    let hat = fft.forward(f);
    let mut out: [Array3<f64>; 3] = [
        Array3::zeros(f.dim()),
        Array3::zeros(f.dim()),
        Array3::zeros(f.dim()),
    ];
    for axis in 0..3 {
        let n = shape[axis];
        let nyquist = if n % 2 == 0 { Some(n / 2) } else { None };
        let mut dhat = hat.clone();
        for ((i, j, k), v) in dhat.indexed_iter_mut() {
            let bin = [i, j, k][axis];
            if Some(bin) == nyquist {
                *v = Complex64::ZERO;
            } else {
                *v *= Complex64::new(0.0, ks[axis][bin]);
            }
        }
        out[axis] = fft.inverse_real(dhat);
    }
    out
}

/// Matrix of the 1D trigonometric interpolant: row `d`, column `j` is the
/// weight of source node `j` when evaluating at `targets[d]`. Built from the
/// explicit cosine-series kernel with the balanced Nyquist term.
pub fn trig_interp_matrix(
    src_n: usize,
    src_lower: f64,
    src_extent: f64,
    targets: &[f64],
) -> Array2<f64> {
    let n = src_n;
    let h = src_extent / n as f64;
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut m = Array2::zeros((targets.len(), n));
    let m_max = if n % 2 == 0 { n / 2 - 1 } else { (n - 1) / 2 };
    for (d, &x) in targets.iter().enumerate() {
        for j in 0..n {
            let delta = x - (src_lower + j as f64 * h);
            let mut acc = 1.0;
            for mode in 1..=m_max {
                acc += 2.0 * (two_pi * mode as f64 * delta / src_extent).cos();
            }
            if n % 2 == 0 {
                acc += (std::f64::consts::PI * n as f64 * delta / src_extent).cos();
            }
            m[[d, j]] = acc / n as f64;
        }
    }
    m
}

/// Applies a matrix along one axis of a 3D array:
/// `out[..., d, ...] = sum_s m[d, s] values[..., s, ...]`.
pub fn apply_axis(values: &Array3<f64>, m: &ArrayView2<f64>, axis: usize) -> Array3<f64> {
    let (n0, n1, n2) = values.dim();
    let r = m.nrows();
    match axis {
        0 => {
            let v = values.view().into_shape_with_order((n0, n1 * n2)).unwrap();
            m.dot(&v).into_shape_with_order((r, n1, n2)).unwrap()
        }
        1 => {
            let mut out = Array3::zeros((n0, r, n2));
            for i in 0..n0 {
                let vi = values.index_axis(Axis(0), i);
                out.index_axis_mut(Axis(0), i).assign(&m.dot(&vi));
            }
            out
        }
        2 => {
            let v = values.view().into_shape_with_order((n0 * n1, n2)).unwrap();
            v.dot(&m.t()).into_shape_with_order((n0, n1, r)).unwrap()
        }
        _ => panic!("axis out of range"),
    }
}

/// Evaluates the trigonometric interpolant of a periodic uniform-grid field
/// at the tensor product of the given per-axis target coordinates,
/// dimension by dimension.
pub fn fourier_interpolate(src: &UniformField, dst_axes: [&[f64]; 3]) -> Array3<f64> {
    let grid = src.grid();
    let mut out = src.values().clone();
    for axis in 0..3 {
        let m = trig_interp_matrix(
            grid.shape()[axis],
            grid.lower()[axis],
            grid.extents()[axis],
            dst_axes[axis],
        );
        out = apply_axis(&out, &m.view(), axis);
    }
    out
}
