//! Discrete gradient operators and the hyper-Laplacian smoothness
//! sub-problem.
//!
//! The gradient uses forward differences with periodic wraparound so that
//! the quadratic part of the sub-problem diagonalizes under the DFT. The
//! nonquadratic part (the 2/3-power penalty) is handled per component by an
//! exact scalar shrinkage computed via root-finding on the stationarity
//! quartic.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::image::Image;

/// Per-pixel forward differences in both directions (periodic).
#[derive(Clone, Debug)]
pub struct GradientField {
    width: usize,
    height: usize,
    pub gx: Vec<f64>,
    pub gy: Vec<f64>,
}

impl GradientField {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            gx: vec![0.0; width * height],
            gy: vec![0.0; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }
}

/// Forward differences with periodic wraparound:
/// gx[i,j] = x[i,(j+1) mod W] - x[i,j], gy[i,j] = x[(i+1) mod H, j] - x[i,j].
pub fn grad(img: &Image) -> GradientField {
    let w = img.width();
    let h = img.height();
    let data = img.data();
    let mut f = GradientField::zeros(w, h);
    for i in 0..h {
        let inext = if i + 1 == h { 0 } else { i + 1 };
        for j in 0..w {
            let jnext = if j + 1 == w { 0 } else { j + 1 };
            let idx = i * w + j;
            f.gx[idx] = data[i * w + jnext] - data[idx];
            f.gy[idx] = data[inext * w + j] - data[idx];
        }
    }
    f
}

/// Discrete divergence: the exact negative adjoint of [`grad`], i.e.
/// <grad(x), f> = -<x, div(f)> for all x and f.
pub fn div(f: &GradientField) -> Image {
    let w = f.width;
    let h = f.height;
    let mut out = vec![0.0; w * h];
    for i in 0..h {
        let iprev = if i == 0 { h - 1 } else { i - 1 };
        for j in 0..w {
            let jprev = if j == 0 { w - 1 } else { j - 1 };
            let idx = i * w + j;
            out[idx] = f.gx[idx] - f.gx[i * w + jprev] + f.gy[idx] - f.gy[iprev * w + j];
        }
    }
    Image::from_raw(w, h, out)
}

/// The 2/3-power gradient penalty: sum over both directions and all pixels
/// of |g|^(2/3).
pub fn hyper_energy(img: &Image) -> f64 {
    let f = grad(img);
    f.gx.iter()
        .chain(f.gy.iter())
        .map(|&g| {
            let c = g.abs().cbrt();
            c * c
        })
        .sum()
}

/// Exact minimizer of kappa*(g - v)^2 + |g|^(2/3) over g.
///
/// The minimizer shares the sign of v (or is zero) and never exceeds |v| in
/// magnitude. On the positive branch the stationarity condition reduces to
/// the quartic s^4 - |v| s + 1/(3 kappa) = 0 in s = g^(1/3); the larger of
/// its two positive roots is the candidate local minimum, which is compared
/// against g = 0 by objective value.
pub fn shrink23(v: f64, kappa: f64) -> f64 {
    assert!(kappa > 0.0, "kappa must be positive");
    if v == 0.0 {
        return 0.0;
    }
    let a = v.abs();
    let c = 1.0 / (3.0 * kappa);

    // h(s) = s^4 - a s + c has its minimum at s_min = (a/4)^(1/3).
    let s_min = (a / 4.0).cbrt();
    let h_min = s_min * s_min * s_min * s_min - a * s_min + c;
    if h_min >= 0.0 {
        // No positive stationary point: the objective is minimized at 0.
        return 0.0;
    }

    // The larger root lies in (s_min, a^(1/3)]: h(s_min) < 0, h(a^(1/3)) = c > 0.
    let mut lo = s_min;
    let mut hi = a.cbrt();
    let mut s = 0.5 * (lo + hi);
    for _ in 0..64 {
        let h = s * s * s * s - a * s + c;
        if h > 0.0 {
            hi = s;
        } else {
            lo = s;
        }
        let dh = 4.0 * s * s * s - a;
        let newton = s - h / dh;
        s = if newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if hi - lo < 1e-14 * (1.0 + hi) {
            break;
        }
    }

    let g = s * s * s;
    // Compare the stationary candidate against zero.
    let obj_g = kappa * (g - a) * (g - a) + s * s;
    let obj_zero = kappa * a * a;
    if obj_g <= obj_zero {
        g.copysign(v)
    } else {
        0.0
    }
}

// ---------------------------------------------------------------------------
// Spectral solver for the quadratic u-step
// ---------------------------------------------------------------------------

/// FFT plans plus the Laplacian symbol for one image size; solves
/// (mu I + rho grad^T grad) u = rhs exactly under periodic boundaries.
struct SpectralSolver {
    width: usize,
    height: usize,
    fwd_row: Arc<dyn Fft<f64>>,
    inv_row: Arc<dyn Fft<f64>>,
    fwd_col: Arc<dyn Fft<f64>>,
    inv_col: Arc<dyn Fft<f64>>,
    /// |D_x(w)|^2 + |D_y(w)|^2 per frequency, row-major.
    lap_symbol: Vec<f64>,
}

impl SpectralSolver {
    fn new(width: usize, height: usize) -> Self {
        let mut planner = FftPlanner::new();
        let fwd_row = planner.plan_fft_forward(width);
        let inv_row = planner.plan_fft_inverse(width);
        let fwd_col = planner.plan_fft_forward(height);
        let inv_col = planner.plan_fft_inverse(height);
        let mut lap_symbol = vec![0.0; width * height];
        for i in 0..height {
            let sy = 2.0 - 2.0 * (std::f64::consts::TAU * i as f64 / height as f64).cos();
            for j in 0..width {
                let sx = 2.0 - 2.0 * (std::f64::consts::TAU * j as f64 / width as f64).cos();
                lap_symbol[i * width + j] = sx + sy;
            }
        }
        Self {
            width,
            height,
            fwd_row,
            inv_row,
            fwd_col,
            inv_col,
            lap_symbol,
        }
    }

    fn fft2(&self, buf: &mut [Complex<f64>], forward: bool) {
        let (row_plan, col_plan) = if forward {
            (&self.fwd_row, &self.fwd_col)
        } else {
            (&self.inv_row, &self.inv_col)
        };
        for row in buf.chunks_exact_mut(self.width) {
            row_plan.process(row);
        }
        let mut col = vec![Complex::default(); self.height];
        for j in 0..self.width {
            for i in 0..self.height {
                col[i] = buf[i * self.width + j];
            }
            col_plan.process(&mut col);
            for i in 0..self.height {
                buf[i * self.width + j] = col[i];
            }
        }
    }

    /// Solve (mu I + rho grad^T grad) u = rhs.
    fn solve(&self, rhs: &[f64], mu: f64, rho: f64) -> Vec<f64> {
        let n = self.width * self.height;
        let mut buf: Vec<Complex<f64>> = rhs.iter().map(|&v| Complex::new(v, 0.0)).collect();
        self.fft2(&mut buf, true);
        for (b, &l) in buf.iter_mut().zip(&self.lap_symbol) {
            *b /= mu + rho * l;
        }
        self.fft2(&mut buf, false);
        let scale = 1.0 / n as f64;
        buf.iter().map(|b| b.re * scale).collect()
    }
}

/// Default geometric continuation start for the splitting weight, as a
/// multiple of lambda.
pub const DEFAULT_RHO0_FACTOR: f64 = 2.0;
/// Default number of half-quadratic passes.
pub const DEFAULT_HQS_ITERS: usize = 4;

/// Approximately minimize mu1 ||u - target||^2 + lambda ||grad u||^(2/3)
/// by half-quadratic splitting with geometric continuation.
///
/// Each pass alternates a per-component [`shrink23`] on the gradient (with
/// kappa = rho/lambda) and an exact spectral solve of the coupled
/// quadratic; rho starts at `rho0_factor * lambda` and doubles every pass.
/// The returned image never has a larger objective than `target` itself.
pub fn solve_u_with(
    target: &Image,
    lambda: f64,
    mu1: f64,
    iters: usize,
    rho0_factor: f64,
) -> Image {
    assert!(lambda > 0.0 && mu1 > 0.0, "weights must be positive");
    assert!(iters >= 1, "at least one pass required");
    let w = target.width();
    let h = target.height();
    let solver = SpectralSolver::new(w, h);

    let objective = |u: &Image| -> f64 {
        let diff: f64 = u
            .data()
            .iter()
            .zip(target.data())
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        mu1 * diff + lambda * hyper_energy(u)
    };

    let mut u = target.clone();
    let mut best = target.clone();
    let mut best_obj = objective(target);
    let mut rho = rho0_factor * lambda;

    for _ in 0..iters {
        let mut field = grad(&u);
        let kappa = rho / lambda;
        for g in field.gx.iter_mut().chain(field.gy.iter_mut()) {
            *g = shrink23(*g, kappa);
        }
        // rhs of the normal equations: mu1 * target + rho * grad^T(shrunk)
        // with grad^T = -div.
        let d = div(&field);
        let rhs: Vec<f64> = target
            .data()
            .iter()
            .zip(d.data())
            .map(|(&t, &dv)| mu1 * t - rho * dv)
            .collect();
        let solved = solver.solve(&rhs, mu1, rho);
        u = Image::from_raw(w, h, solved);
        let obj = objective(&u);
        if obj < best_obj {
            best_obj = obj;
            best = u.clone();
        }
        rho *= 2.0;
    }
    best
}

/// [`solve_u_with`] at the default continuation start.
pub fn solve_u(target: &Image, lambda: f64, mu1: f64, iters: usize) -> Image {
    solve_u_with(target, lambda, mu1, iters, DEFAULT_RHO0_FACTOR)
}
