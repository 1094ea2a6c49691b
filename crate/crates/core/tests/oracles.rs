//! Oracle tests: the fast closed-form/spectral solvers are checked against
//! independent dense linear-algebra solves and exhaustive searches.

use mixdenoise_core::detect::PixelMask;
use mixdenoise_core::image::Image;
use mixdenoise_core::local::{div, grad, shrink23, solve_u_with};
use mixdenoise_core::noise::SplitMix64;
use mixdenoise_core::solver::solve_x;

fn random_image(w: usize, h: usize, seed: u64) -> Image {
    let mut rng = SplitMix64::new(seed);
    Image::from_fn(w, h, |_, _| rng.next_unit() * 255.0)
}

/// Gaussian elimination with partial pivoting; the tests' independent
/// reference for small dense systems.
fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())
            .unwrap();
        a.swap(col, pivot);
        b.swap(col, pivot);
        let diag = a[col][col];
        assert!(diag.abs() > 1e-12, "singular system");
        for row in col + 1..n {
            let factor = a[row][col] / diag;
            if factor == 0.0 {
                continue;
            }
            for k in col..n {
                a[row][k] -= factor * a[col][k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for k in row + 1..n {
            acc -= a[row][k] * x[k];
        }
        x[row] = acc / a[row][row];
    }
    x
}

#[test]
fn solve_x_matches_dense_normal_equations() {
    // (B^T B + mu I) x = B^T y + mu1 (b + u) + mu2 (c + w) on 8x8 images,
    // with B^T B the 0/1 diagonal of reliable pixels.
    let mut max_err: f64 = 0.0;
    for seed in 0..120 {
        let y = random_image(8, 8, 1000 + seed);
        let u = random_image(8, 8, 2000 + seed);
        let w = random_image(8, 8, 3000 + seed);
        let bb = random_image(8, 8, 4000 + seed);
        let cc = random_image(8, 8, 5000 + seed);
        let mut rng = SplitMix64::new(6000 + seed);
        let p = rng.next_unit();
        let mask = PixelMask::from_fn(8, 8, |_, _| rng.next_unit() < p);
        let mu1 = 0.05 + rng.next_unit() * 3.0;
        let mu2 = 0.05 + rng.next_unit() * 3.0;
        let mu = mu1 + mu2;

        let n = 64;
        let mut a = vec![vec![0.0; n]; n];
        let mut rhs = vec![0.0; n];
        for i in 0..n {
            let reliable = !mask.flags()[i];
            a[i][i] = if reliable { 1.0 } else { 0.0 } + mu;
            rhs[i] = if reliable { y.data()[i] } else { 0.0 }
                + mu1 * (bb.data()[i] + u.data()[i])
                + mu2 * (cc.data()[i] + w.data()[i]);
        }
        let expected = dense_solve(a, rhs);
        let got = solve_x(&u, &w, &bb, &cc, &y, &mask, mu1, mu2);
        for (g, e) in got.data().iter().zip(&expected) {
            max_err = max_err.max((g - e).abs());
        }
    }
    assert!(max_err <= 1e-8, "max abs error {max_err}");
}

#[test]
fn solve_u_equals_dense_alternation_on_8x8() {
    // Full fidelity check of the spectral quadratic inside solve_u: run the
    // same half-quadratic alternation with the u-step replaced by a dense
    // direct solve, and compare iterates.
    let w = 8usize;
    let h = 8usize;
    let n = w * h;
    let lambda = 1.3;
    let mu1 = 0.6;
    let iters = 4;
    let rho0_factor = 2.0;
    let target = random_image(w, h, 99);

    // Dense G^T G.
    let mut gtg = vec![vec![0.0; n]; n];
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        let img = Image::new(w, h, e).unwrap();
        let col = div(&grad(&img));
        for i in 0..n {
            gtg[i][j] = -col.data()[i];
        }
    }

    let objective = |u: &Image| -> f64 {
        let diff: f64 = u
            .data()
            .iter()
            .zip(target.data())
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        let f = grad(u);
        let energy: f64 = f
            .gx
            .iter()
            .chain(f.gy.iter())
            .map(|&g| {
                let c = g.abs().cbrt();
                c * c
            })
            .sum();
        mu1 * diff + lambda * energy
    };

    let mut u = target.clone();
    let mut best = target.clone();
    let mut best_obj = objective(&target);
    let mut rho = rho0_factor * lambda;
    for _ in 0..iters {
        let mut f = grad(&u);
        let kappa = rho / lambda;
        for g in f.gx.iter_mut().chain(f.gy.iter_mut()) {
            *g = shrink23(*g, kappa);
        }
        let dg = div(&f);
        let mut a = vec![vec![0.0; n]; n];
        let mut rhs = vec![0.0; n];
        for i in 0..n {
            for j in 0..n {
                a[i][j] = rho * gtg[i][j];
            }
            a[i][i] += mu1;
            rhs[i] = mu1 * target.data()[i] - rho * dg.data()[i];
        }
        let solved = dense_solve(a, rhs);
        u = Image::new(w, h, solved).unwrap();
        let obj = objective(&u);
        if obj < best_obj {
            best_obj = obj;
            best = u.clone();
        }
        rho *= 2.0;
    }

    let got = solve_u_with(&target, lambda, mu1, iters, rho0_factor);
    for (g, e) in got.data().iter().zip(best.data()) {
        assert!((g - e).abs() < 1e-8, "{g} vs {e}");
    }
}
