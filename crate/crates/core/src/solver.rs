//! The full restoration pipeline: a progressive-detection outer loop
//! wrapping a split-Bregman inner loop over three sub-problems.
//!
//! Each inner pass solves, in order: the masked least-squares fit for x
//! (closed form per pixel), the hyper-Laplacian smoothness problem for u,
//! and the nonlocal hard-threshold problem for w, then updates the two
//! Bregman variables by residual subtraction. The outer loop re-runs
//! impulse detection on the current estimate and grows the suspect set by
//! union before the next round of inner passes.

use crate::detect::{
    acwmf_detect_with, amf_detect, progressive_union, MaskOperator, PixelMask,
    DEFAULT_CWM_DELTAS, DEFAULT_CWM_SCALE,
};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::local::{hyper_energy, solve_u_with};
use crate::noise::ImpulseKind;
use crate::nonlocal::{phi_nc, solve_w, NonlocalConfig};

/// Iterates and Bregman variables of the splitting scheme.
#[derive(Clone, Debug)]
pub struct SolverState {
    pub x: Image,
    pub u: Image,
    pub w: Image,
    pub b: Image,
    pub c: Image,
    pub inner_iter: usize,
    pub outer_iter: usize,
}

impl SolverState {
    /// Initialization: x = u = w = y and b = c = 0.
    pub fn init(y: &Image) -> Self {
        Self {
            x: y.clone(),
            u: y.clone(),
            w: y.clone(),
            b: Image::zeros(y.width(), y.height()),
            c: Image::zeros(y.width(), y.height()),
            inner_iter: 0,
            outer_iter: 0,
        }
    }
}

/// Local-prior sub-solver knobs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LocalConfig {
    /// Half-quadratic passes per u-solve.
    pub hqs_iters: usize,
    /// Continuation start as a multiple of lambda.
    pub rho0_factor: f64,
}

impl Default for LocalConfig {
    fn default() -> Self {
        Self {
            hqs_iters: crate::local::DEFAULT_HQS_ITERS,
            rho0_factor: crate::local::DEFAULT_RHO0_FACTOR,
        }
    }
}

/// Default weight factors, as multiples of sigma^2. Tuned on the benchmark
/// suite; see the README for the tuning procedure.
pub const DEFAULT_LAMBDA_FACTOR: f64 = 0.01;
pub const DEFAULT_BETA_FACTOR: f64 = 0.8;
pub const DEFAULT_MU1_FACTOR: f64 = 0.025;
pub const DEFAULT_MU2_FACTOR: f64 = 0.008;
/// Default detection window cap for the adaptive median filter.
pub const DEFAULT_WMAX: usize = 39;
/// Default per-outer-iteration threshold scale for random-valued detection;
/// decreasing so later rounds admit more candidates.
pub const DEFAULT_DELTA_SCHEDULE: [f64; 4] = [1.0, 0.8, 0.6, 0.4];

/// Full solver configuration.
#[derive(Clone, Debug)]
pub struct SolverConfig {
    /// Assumed Gaussian noise standard deviation.
    pub sigma: f64,
    pub kind: ImpulseKind,
    /// Local-prior weight.
    pub lambda: f64,
    /// Nonlocal-prior weight.
    pub beta: f64,
    /// Bregman penalty weights for the u and w couplings.
    pub mu1: f64,
    pub mu2: f64,
    /// Inner passes per outer iteration.
    pub inner_iters: usize,
    pub outer_iters: usize,
    /// Adaptive-median window cap (salt-and-pepper detection).
    pub w_max: usize,
    /// Threshold scales per outer iteration (random-valued detection).
    pub delta_schedule: Vec<f64>,
    /// Robust-scale weight in the random-valued detector thresholds.
    pub acwmf_scale: f64,
    /// Base threshold offsets of the random-valued detector.
    pub acwmf_deltas: [f64; 4],
    pub local: LocalConfig,
    pub nonlocal: NonlocalConfig,
}

impl SolverConfig {
    /// Defaults for a given noise level: weights scale with sigma^2.
    pub fn for_sigma(sigma: f64, kind: ImpulseKind) -> Self {
        let s2 = sigma * sigma;
        Self {
            sigma,
            kind,
            lambda: DEFAULT_LAMBDA_FACTOR * s2,
            beta: DEFAULT_BETA_FACTOR * s2,
            mu1: DEFAULT_MU1_FACTOR * s2,
            mu2: DEFAULT_MU2_FACTOR * s2,
            inner_iters: 16,
            outer_iters: 4,
            w_max: DEFAULT_WMAX,
            delta_schedule: DEFAULT_DELTA_SCHEDULE.to_vec(),
            acwmf_scale: DEFAULT_CWM_SCALE,
            acwmf_deltas: DEFAULT_CWM_DELTAS,
            local: LocalConfig::default(),
            nonlocal: NonlocalConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda", self.lambda),
            ("beta", self.beta),
            ("mu1", self.mu1),
            ("mu2", self.mu2),
        ] {
            if v <= 0.0 || !v.is_finite() {
                return Err(Error::InvalidConfig(format!(
                    "{name} must be strictly positive, got {v}"
                )));
            }
        }
        if self.inner_iters < 1 || self.outer_iters < 1 {
            return Err(Error::InvalidConfig(
                "iteration counts must be at least 1".to_string(),
            ));
        }
        if self.w_max < 3 || self.w_max % 2 == 0 {
            return Err(Error::InvalidConfig(format!(
                "w_max must be odd and >= 3, got {}",
                self.w_max
            )));
        }
        if self.delta_schedule.is_empty() || self.delta_schedule.iter().any(|&d| d < 0.0) {
            return Err(Error::InvalidConfig(
                "delta schedule must be non-empty and nonnegative".to_string(),
            ));
        }
        if self.acwmf_scale < 0.0 || self.acwmf_deltas.iter().any(|&d| d < 0.0) {
            return Err(Error::InvalidConfig(
                "detector thresholds must be nonnegative".to_string(),
            ));
        }
        Ok(())
    }
}

/// Exact minimizer of the x sub-problem
/// ||B x - y_B||^2 + mu1 ||x - u - b||^2 + mu2 ||x - w - c||^2.
///
/// Per pixel: (y + mu1 (b+u) + mu2 (c+w)) / (1 + mu) on reliable pixels and
/// (mu1 (b+u) + mu2 (c+w)) / mu on suspect pixels, with mu = mu1 + mu2.
#[allow(clippy::too_many_arguments)]
pub fn solve_x(
    u: &Image,
    w: &Image,
    b: &Image,
    c: &Image,
    y: &Image,
    mask: &PixelMask,
    mu1: f64,
    mu2: f64,
) -> Image {
    debug_assert!(mask.matches_image(y));
    let mu = mu1 + mu2;
    let data: Vec<f64> = (0..y.len())
        .map(|i| {
            let prior = mu1 * (b.data()[i] + u.data()[i]) + mu2 * (c.data()[i] + w.data()[i]);
            if mask.flags()[i] {
                prior / mu
            } else {
                (y.data()[i] + prior) / (1.0 + mu)
            }
        })
        .collect();
    Image::from_raw(y.width(), y.height(), data)
}

/// The same minimizer in operator form,
/// x = (1/mu) (s - P s / (1 + mu)) with s = B^T y_B + mu1 (b+u) + mu2 (c+w)
/// and P the reliable-pixel projector. Used to cross-check [`solve_x`].
#[allow(clippy::too_many_arguments)]
pub fn solve_x_operator_form(
    u: &Image,
    w: &Image,
    b: &Image,
    c: &Image,
    y: &Image,
    mask: &PixelMask,
    mu1: f64,
    mu2: f64,
) -> Result<Image> {
    let op = MaskOperator::new(mask.clone());
    let mu = mu1 + mu2;
    let projected_y = op.project(y)?;
    let s: Vec<f64> = (0..y.len())
        .map(|i| {
            projected_y.data()[i]
                + mu1 * (b.data()[i] + u.data()[i])
                + mu2 * (c.data()[i] + w.data()[i])
        })
        .collect();
    let s_img = Image::from_raw(y.width(), y.height(), s);
    let ps = op.project(&s_img)?;
    let data: Vec<f64> = s_img
        .data()
        .iter()
        .zip(ps.data())
        .map(|(&sv, &pv)| (sv - pv / (1.0 + mu)) / mu)
        .collect();
    Ok(Image::from_raw(y.width(), y.height(), data))
}

/// Bregman residual updates: b -= (x - u), c -= (x - w).
pub fn bregman_update(state: &mut SolverState) {
    for i in 0..state.x.len() {
        let x = state.x.data()[i];
        state.b.data_mut()[i] -= x - state.u.data()[i];
        state.c.data_mut()[i] -= x - state.w.data()[i];
    }
}

/// One record of the per-iteration diagnostic trace.
#[derive(Clone, Debug)]
pub struct IterationTrace {
    pub outer: usize,
    pub inner: usize,
    pub fidelity: f64,
    pub local_energy: f64,
    pub nonlocal_count: usize,
    pub objective: f64,
    /// ||x - u||_2 and ||x - w||_2 consensus residuals.
    pub residual_u: f64,
    pub residual_w: f64,
}

/// The composite objective
/// ||B x - y_B||^2 + lambda * Phi_LC(x) + beta * Phi_NC(x).
/// The fidelity term counts reliable pixels only.
pub fn objective(x: &Image, y: &Image, mask: &PixelMask, cfg: &SolverConfig) -> Result<f64> {
    if !x.same_size(y) {
        return Err(Error::DimensionMismatch(
            x.width(),
            x.height(),
            y.width(),
            y.height(),
        ));
    }
    let fidelity = masked_fidelity(x, y, mask);
    let local = hyper_energy(x);
    let nonlocal = phi_nc(x, &cfg.nonlocal)? as f64;
    Ok(fidelity + cfg.lambda * local + cfg.beta * nonlocal)
}

fn masked_fidelity(x: &Image, y: &Image, mask: &PixelMask) -> f64 {
    x.data()
        .iter()
        .zip(y.data())
        .zip(mask.flags())
        .filter(|(_, &suspect)| !suspect)
        .map(|((&a, &b), _)| (a - b) * (a - b))
        .sum()
}

fn l2_distance(a: &Image, b: &Image) -> f64 {
    a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Run `cfg.inner_iters` split-Bregman passes against a fixed mask.
pub fn inner_loop(
    state: &mut SolverState,
    y: &Image,
    mask: &PixelMask,
    cfg: &SolverConfig,
    mut trace: Option<&mut Vec<IterationTrace>>,
) -> Result<()> {
    for _ in 0..cfg.inner_iters {
        state.x = solve_x(
            &state.u, &state.w, &state.b, &state.c, y, mask, cfg.mu1, cfg.mu2,
        );

        let u_target = Image::from_raw(
            y.width(),
            y.height(),
            state
                .x
                .data()
                .iter()
                .zip(state.b.data())
                .map(|(&x, &b)| x - b)
                .collect(),
        );
        state.u = solve_u_with(
            &u_target,
            cfg.lambda,
            cfg.mu1,
            cfg.local.hqs_iters,
            cfg.local.rho0_factor,
        );

        let w_target = Image::from_raw(
            y.width(),
            y.height(),
            state
                .x
                .data()
                .iter()
                .zip(state.c.data())
                .map(|(&x, &c)| x - c)
                .collect(),
        );
        state.w = solve_w(&w_target, cfg.beta, cfg.mu2, &cfg.nonlocal)?;

        bregman_update(state);
        state.inner_iter += 1;

        if let Some(records) = trace.as_deref_mut() {
            let fidelity = masked_fidelity(&state.x, y, mask);
            let local = hyper_energy(&state.x);
            let nonlocal = phi_nc(&state.x, &cfg.nonlocal)?;
            records.push(IterationTrace {
                outer: state.outer_iter,
                inner: state.inner_iter,
                fidelity,
                local_energy: local,
                nonlocal_count: nonlocal,
                objective: fidelity + cfg.lambda * local + cfg.beta * nonlocal as f64,
                residual_u: l2_distance(&state.x, &state.u),
                residual_w: l2_distance(&state.x, &state.w),
            });
        }
    }
    Ok(())
}

/// Detect impulse candidates on the current estimate, per the configured
/// noise kind and outer iteration.
fn detect_candidates(estimate: &Image, cfg: &SolverConfig, outer: usize) -> PixelMask {
    match cfg.kind {
        ImpulseKind::SaltPepper => amf_detect(estimate, cfg.w_max),
        ImpulseKind::RandomValued => {
            let idx = outer.min(cfg.delta_schedule.len() - 1);
            acwmf_detect_with(
                estimate,
                cfg.delta_schedule[idx],
                cfg.acwmf_scale,
                &cfg.acwmf_deltas,
            )
        }
    }
}

/// Full pipeline: progressive detection wrapped around the inner loop.
/// Returns the restored image clipped to the dynamic range.
pub fn denoise(y: &Image, cfg: &SolverConfig) -> Result<Image> {
    Ok(denoise_traced(y, cfg, false)?.0)
}

/// [`denoise`], optionally collecting the per-iteration objective trace
/// (tracing costs an extra grouping pass per inner iteration).
pub fn denoise_traced(
    y: &Image,
    cfg: &SolverConfig,
    with_trace: bool,
) -> Result<(Image, Vec<IterationTrace>)> {
    cfg.validate()?;
    cfg.nonlocal.validate(y.width(), y.height())?;

    let mut state = SolverState::init(y);
    let mut candidates = PixelMask::empty(y.width(), y.height());
    let mut trace = Vec::new();

    for outer in 0..cfg.outer_iters {
        state.outer_iter = outer;
        let fresh = detect_candidates(&state.x, cfg, outer);
        candidates = progressive_union(&candidates, &fresh)?;
        inner_loop(
            &mut state,
            y,
            &candidates,
            cfg,
            with_trace.then_some(&mut trace),
        )?;
    }

    Ok((state.x.clip(), trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::SplitMix64;

    fn random_image(w: usize, h: usize, seed: u64) -> Image {
        let mut rng = SplitMix64::new(seed);
        Image::from_fn(w, h, |_, _| rng.next_unit() * 255.0)
    }

    fn random_mask(w: usize, h: usize, p: f64, seed: u64) -> PixelMask {
        let mut rng = SplitMix64::new(seed);
        PixelMask::from_fn(w, h, |_, _| rng.next_unit() < p)
    }

    #[test]
    fn solve_x_fixed_point_when_consistent() {
        let y = random_image(8, 8, 1);
        let zeros = Image::zeros(8, 8);
        let mask = PixelMask::empty(8, 8);
        let x = solve_x(&y, &y, &zeros, &zeros, &y, &mask, 0.3, 0.7);
        for (a, b) in x.data().iter().zip(y.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn solve_x_all_suspect_averages_priors() {
        let y = random_image(6, 6, 2);
        let u = random_image(6, 6, 3);
        let w = random_image(6, 6, 4);
        let zeros = Image::zeros(6, 6);
        let mask = PixelMask::from_fn(6, 6, |_, _| true);
        let (mu1, mu2) = (0.4, 1.6);
        let x = solve_x(&u, &w, &zeros, &zeros, &y, &mask, mu1, mu2);
        for i in 0..x.len() {
            let want = (mu1 * u.data()[i] + mu2 * w.data()[i]) / (mu1 + mu2);
            assert!((x.data()[i] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn solve_x_matches_operator_form() {
        for seed in 0..5 {
            let y = random_image(8, 8, 10 + seed);
            let u = random_image(8, 8, 20 + seed);
            let w = random_image(8, 8, 30 + seed);
            let b = random_image(8, 8, 40 + seed);
            let c = random_image(8, 8, 50 + seed);
            let mask = random_mask(8, 8, 0.35, 60 + seed);
            let direct = solve_x(&u, &w, &b, &c, &y, &mask, 0.7, 0.2);
            let op_form = solve_x_operator_form(&u, &w, &b, &c, &y, &mask, 0.7, 0.2).unwrap();
            for (a, d) in direct.data().iter().zip(op_form.data()) {
                assert!((a - d).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn bregman_update_formula() {
        let y = random_image(5, 5, 7);
        let mut state = SolverState::init(&y);
        // x == u == w: consensus, so b and c stay zero.
        bregman_update(&mut state);
        assert!(state.b.data().iter().all(|&v| v == 0.0));
        assert!(state.c.data().iter().all(|&v| v == 0.0));

        let d = random_image(5, 5, 8);
        state.u = Image::from_raw(
            5,
            5,
            state
                .x
                .data()
                .iter()
                .zip(d.data())
                .map(|(&x, &dv)| x - dv)
                .collect(),
        );
        bregman_update(&mut state);
        // b was zero, x - u = d, so b becomes -d.
        for (bv, dv) in state.b.data().iter().zip(d.data()) {
            assert!((bv + dv).abs() < 1e-12);
        }
    }

    fn tiny_cfg(kind: ImpulseKind) -> SolverConfig {
        let mut cfg = SolverConfig::for_sigma(10.0, kind);
        cfg.nonlocal = NonlocalConfig {
            block_size: 4,
            group_size: 4,
            window: 12,
            step: 2,
            weights: crate::nonlocal::AggregationWeights::Uniform,
        };
        cfg.inner_iters = 2;
        cfg.outer_iters = 2;
        cfg
    }

    #[test]
    fn inner_loop_zero_iters_is_noop() {
        let y = random_image(16, 16, 70);
        let mut cfg = tiny_cfg(ImpulseKind::SaltPepper);
        cfg.inner_iters = 0;
        let mut state = SolverState::init(&y);
        let before = state.x.clone();
        // validate() rejects 0 iters for the public pipeline; the loop
        // itself must still behave as an empty loop.
        inner_loop(&mut state, &y, &PixelMask::empty(16, 16), &cfg, None).unwrap();
        assert_eq!(state.x, before);
    }

    #[test]
    fn inner_loop_vanishing_regularization_keeps_input() {
        let y = random_image(16, 16, 71);
        let mut cfg = tiny_cfg(ImpulseKind::SaltPepper);
        cfg.lambda = 1e-12;
        cfg.beta = 1e-12;
        cfg.inner_iters = 5;
        let mut state = SolverState::init(&y);
        inner_loop(&mut state, &y, &PixelMask::empty(16, 16), &cfg, None).unwrap();
        for (a, b) in state.x.data().iter().zip(y.data()) {
            assert!((a - b).abs() < 1e-4, "drifted by {}", (a - b).abs());
        }
    }

    #[test]
    fn objective_zero_case_and_composition() {
        let y = random_image(16, 16, 72);
        let mask = PixelMask::empty(16, 16);
        let mut cfg = tiny_cfg(ImpulseKind::SaltPepper);
        cfg.lambda = 1e-300;
        cfg.beta = 1e-300;
        let obj = objective(&y, &y, &mask, &cfg).unwrap();
        assert!(obj < 1e-280, "objective {obj}");

        // Compositional cross-check against the three module terms.
        cfg.lambda = 2.0;
        cfg.beta = 0.5;
        let x = random_image(16, 16, 73);
        let mask = random_mask(16, 16, 0.3, 74);
        let got = objective(&x, &y, &mask, &cfg).unwrap();
        let want = masked_fidelity(&x, &y, &mask)
            + 2.0 * hyper_energy(&x)
            + 0.5 * phi_nc(&x, &cfg.nonlocal).unwrap() as f64;
        assert!((got - want).abs() < 1e-9);
    }

    #[test]
    fn objective_fidelity_ignores_suspect_pixels() {
        let y = random_image(8, 8, 75);
        let mut x = y.clone();
        // Corrupt one pixel and mark it suspect: fidelity must not see it.
        x.set(3, 3, 999.0_f64.min(255.0));
        let mask = PixelMask::from_fn(8, 8, |r, c| (r, c) == (3, 3));
        let mut cfg = tiny_cfg(ImpulseKind::SaltPepper);
        cfg.lambda = 1e-300;
        cfg.beta = 1e-300;
        let obj = objective(&x, &y, &mask, &cfg).unwrap();
        assert!(obj < 1e-280, "suspect residual leaked: {obj}");
    }

    #[test]
    fn denoise_output_in_range_and_deterministic() {
        let clean = Image::from_fn(24, 24, |r, c| {
            if (r / 6 + c / 6) % 2 == 0 {
                80.0
            } else {
                170.0
            }
        });
        let noisy = {
            let spec = crate::noise::NoiseSpec {
                sigma: 10.0,
                rate: 0.2,
                kind: ImpulseKind::SaltPepper,
                seed: 9,
            };
            crate::noise::corrupt(&clean, &spec).unwrap().noisy
        };
        let cfg = tiny_cfg(ImpulseKind::SaltPepper);
        let a = denoise(&noisy, &cfg).unwrap();
        let b = denoise(&noisy, &cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.data().iter().all(|&v| (0.0..=255.0).contains(&v)));
        // And it should actually help.
        let before = crate::image::psnr(&clean, &noisy).unwrap();
        let after = crate::image::psnr(&clean, &a).unwrap();
        assert!(after > before, "psnr {before} -> {after}");
    }

    #[test]
    fn denoise_candidate_sets_grow_monotonically() {
        let clean = Image::from_fn(24, 24, |r, c| 60.0 + ((r * 5 + c * 11) % 120) as f64);
        let spec = crate::noise::NoiseSpec {
            sigma: 5.0,
            rate: 0.15,
            kind: ImpulseKind::RandomValued,
            seed: 4,
        };
        let noisy = crate::noise::corrupt(&clean, &spec).unwrap().noisy;
        let cfg = tiny_cfg(ImpulseKind::RandomValued);

        // Re-run the outer loop manually, checking the union invariant.
        let mut state = SolverState::init(&noisy);
        let mut candidates = PixelMask::empty(24, 24);
        for outer in 0..cfg.outer_iters {
            state.outer_iter = outer;
            let fresh = detect_candidates(&state.x, &cfg, outer);
            let next = progressive_union(&candidates, &fresh).unwrap();
            assert!(candidates.subset_of(&next));
            candidates = next;
            inner_loop(&mut state, &noisy, &candidates, &cfg, None).unwrap();
        }
    }

    #[test]
    fn trace_records_per_inner_iteration() {
        let y = random_image(16, 16, 90);
        let cfg = tiny_cfg(ImpulseKind::SaltPepper);
        let (_, trace) = denoise_traced(&y, &cfg, true).unwrap();
        assert_eq!(trace.len(), cfg.outer_iters * cfg.inner_iters);
        assert!(trace.iter().all(|t| t.objective.is_finite()));
    }
}
