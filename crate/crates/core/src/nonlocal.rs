//! Nonlocal self-similarity prior: block matching, 3D group transforms, the
//! l0 sparsity measure, and the hard-threshold sub-problem with overlapping
//! block aggregation.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::Image;
use crate::transform::Transform3d;

/// Coefficients with magnitude at or below this are counted as zero by the
/// sparsity measure.
pub const SPARSITY_EPS: f64 = 1e-12;

/// How overlapping block estimates are combined back into an image.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AggregationWeights {
    /// Every block estimate contributes with weight 1.
    Uniform,
    /// Each group weighted by 1 / (1 + number of surviving coefficients).
    InverseSparsity,
}

impl AggregationWeights {
    pub fn as_str(&self) -> &'static str {
        match self {
            AggregationWeights::Uniform => "uniform",
            AggregationWeights::InverseSparsity => "inverse_sparsity",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(AggregationWeights::Uniform),
            "inverse_sparsity" => Ok(AggregationWeights::InverseSparsity),
            other => Err(Error::InvalidConfig(format!(
                "unknown aggregation weights '{other}'"
            ))),
        }
    }
}

/// Grouping geometry and matching parameters.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NonlocalConfig {
    /// Block side length.
    pub block_size: usize,
    /// Blocks per group (the reference plus its best matches).
    pub group_size: usize,
    /// Search-window side length in pixels.
    pub window: usize,
    /// Stride of the reference-block grid.
    pub step: usize,
    pub weights: AggregationWeights,
}

impl Default for NonlocalConfig {
    fn default() -> Self {
        Self {
            block_size: 8,
            group_size: 16,
            window: 39,
            step: 4,
            weights: AggregationWeights::Uniform,
        }
    }
}

impl NonlocalConfig {
    /// Validate against an image size; in particular the clipped search
    /// window of every reference block must hold at least `group_size`
    /// candidates.
    pub fn validate(&self, width: usize, height: usize) -> Result<()> {
        if self.block_size < 2 {
            return Err(Error::InvalidConfig(
                "block_size must be at least 2".to_string(),
            ));
        }
        if self.group_size < 1 {
            return Err(Error::InvalidConfig(
                "group_size must be at least 1".to_string(),
            ));
        }
        if self.window < self.block_size {
            return Err(Error::InvalidConfig(format!(
                "window {} smaller than block_size {}",
                self.window, self.block_size
            )));
        }
        if self.step < 1 {
            return Err(Error::InvalidConfig("step must be at least 1".to_string()));
        }
        if width < self.block_size || height < self.block_size {
            return Err(Error::InvalidConfig(format!(
                "image {width}x{height} smaller than block_size {}",
                self.block_size
            )));
        }
        let min_rows = self.min_axis_candidates(height);
        let min_cols = self.min_axis_candidates(width);
        if min_rows * min_cols < self.group_size {
            return Err(Error::InvalidConfig(format!(
                "window holds only {} candidate blocks, need group_size {}",
                min_rows * min_cols,
                self.group_size
            )));
        }
        Ok(())
    }

    /// Candidate top-left range along one axis: the window is centered on
    /// the reference coordinate and clipped to the valid block positions.
    pub(crate) fn axis_range(&self, pos: usize, extent: usize) -> (usize, usize) {
        let span = self.window - self.block_size;
        let lo_off = span / 2;
        let hi_off = span - lo_off;
        let lo = pos.saturating_sub(lo_off);
        let hi = (pos + hi_off).min(extent - self.block_size);
        (lo, hi)
    }

    fn min_axis_candidates(&self, extent: usize) -> usize {
        grid_positions(extent, self.block_size, self.step)
            .into_iter()
            .map(|p| {
                let (lo, hi) = self.axis_range(p, extent);
                hi - lo + 1
            })
            .min()
            .unwrap_or(0)
    }
}

/// Reference-block coordinates along one axis: the step grid, plus a final
/// position snapped to the border so the last block touches the edge.
pub fn grid_positions(extent: usize, block_size: usize, step: usize) -> Vec<usize> {
    debug_assert!(extent >= block_size);
    let last = extent - block_size;
    let mut positions: Vec<usize> = (0..=last).step_by(step).collect();
    if *positions.last().expect("non-empty grid") != last {
        positions.push(last);
    }
    positions
}

/// One matched group: the reference position, the ordered member positions,
/// and the stacked pixels (slice-major: member index varies slowest).
#[derive(Clone, Debug)]
pub struct BlockGroup {
    pub ref_pos: (usize, usize),
    pub members: Vec<(usize, usize)>,
    pub stack: Vec<f64>,
}

/// Transform coefficients of every group, with positions retained so the
/// grouping can be inverted and aggregated.
#[derive(Clone, Debug)]
pub struct GroupSpectrum {
    pub block_size: usize,
    pub group_size: usize,
    pub groups: Vec<SpectrumGroup>,
}

#[derive(Clone, Debug)]
pub struct SpectrumGroup {
    pub ref_pos: (usize, usize),
    pub members: Vec<(usize, usize)>,
    pub coeffs: Vec<f64>,
}

impl GroupSpectrum {
    /// Total coefficient count K = block_size^2 * group_size * n.
    pub fn total_len(&self) -> usize {
        self.block_size * self.block_size * self.group_size * self.groups.len()
    }
}

#[inline]
fn block_distance_bounded(
    img: &Image,
    a: (usize, usize),
    b: (usize, usize),
    bs: usize,
    bound: f64,
) -> f64 {
    let w = img.width();
    let data = img.data();
    let mut acc = 0.0;
    for r in 0..bs {
        let ra = &data[(a.0 + r) * w + a.1..(a.0 + r) * w + a.1 + bs];
        let rb = &data[(b.0 + r) * w + b.1..(b.0 + r) * w + b.1 + bs];
        acc += ra
            .iter()
            .zip(rb)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>();
        if acc > bound {
            return acc;
        }
    }
    acc
}

/// Squared Euclidean distance between two blocks.
pub fn block_distance(img: &Image, a: (usize, usize), b: (usize, usize), bs: usize) -> f64 {
    block_distance_bounded(img, a, b, bs, f64::INFINITY)
}

/// The `group_size` best-matching block positions for the reference block,
/// searched over the clipped window.
///
/// The reference leads the list; the remaining members are ordered by
/// ascending distance with ties broken by raster order of position. The
/// reference is not eligible as its own match a second time.
pub fn match_blocks(
    img: &Image,
    ref_pos: (usize, usize),
    cfg: &NonlocalConfig,
) -> Result<Vec<(usize, usize)>> {
    let bs = cfg.block_size;
    if ref_pos.0 + bs > img.height() || ref_pos.1 + bs > img.width() {
        return Err(Error::InvalidConfig(format!(
            "reference block at {ref_pos:?} exceeds image bounds"
        )));
    }
    let (r_lo, r_hi) = cfg.axis_range(ref_pos.0, img.height());
    let (c_lo, c_hi) = cfg.axis_range(ref_pos.1, img.width());
    let candidates = (r_hi - r_lo + 1) * (c_hi - c_lo + 1);
    if candidates < cfg.group_size {
        return Err(Error::InvalidConfig(format!(
            "window at {ref_pos:?} holds {candidates} candidates, need {}",
            cfg.group_size
        )));
    }

    let keep = cfg.group_size - 1;
    let mut best: Vec<(f64, (usize, usize))> = Vec::with_capacity(keep + 1);
    if keep > 0 {
        // Scan candidates in raster order; with strictly-less replacement
        // this reproduces a stable sort by (distance, raster position).
        let mut worst = f64::INFINITY;
        for r in r_lo..=r_hi {
            for c in c_lo..=c_hi {
                if (r, c) == ref_pos {
                    continue;
                }
                let bound = if best.len() < keep { f64::INFINITY } else { worst };
                let d = block_distance_bounded(img, ref_pos, (r, c), bs, bound);
                if best.len() < keep {
                    best.push((d, (r, c)));
                    if best.len() == keep {
                        worst = best
                            .iter()
                            .map(|&(d, _)| d)
                            .fold(f64::NEG_INFINITY, f64::max);
                    }
                } else if d < worst {
                    // Evict the max by (distance, raster order).
                    let (evict, _) = best
                        .iter()
                        .enumerate()
                        .max_by(|(_, a), (_, b)| {
                            a.0.partial_cmp(&b.0)
                                .unwrap()
                                .then_with(|| a.1.cmp(&b.1))
                        })
                        .expect("non-empty");
                    best[evict] = (d, (r, c));
                    worst = best
                        .iter()
                        .map(|&(d, _)| d)
                        .fold(f64::NEG_INFINITY, f64::max);
                }
            }
        }
        best.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then_with(|| a.1.cmp(&b.1)));
    }

    let mut members = Vec::with_capacity(cfg.group_size);
    members.push(ref_pos);
    members.extend(best.into_iter().map(|(_, p)| p));
    Ok(members)
}

/// Copy the member blocks out of the image into a slice-major stack.
pub fn extract_group(img: &Image, members: &[(usize, usize)], bs: usize) -> Vec<f64> {
    let mut stack = Vec::with_capacity(members.len() * bs * bs);
    let w = img.width();
    for &(r0, c0) in members {
        for r in 0..bs {
            let row = &img.data()[(r0 + r) * w + c0..(r0 + r) * w + c0 + bs];
            stack.extend_from_slice(row);
        }
    }
    stack
}

/// Group the image on itself and forward-transform every group.
pub fn group_spectrum(img: &Image, cfg: &NonlocalConfig) -> Result<GroupSpectrum> {
    cfg.validate(img.width(), img.height())?;
    let t3d = Transform3d::new(cfg.block_size, cfg.group_size);
    let refs = reference_positions(img, cfg);
    let groups = refs
        .iter()
        .map(|&ref_pos| {
            let members = match_blocks(img, ref_pos, cfg)?;
            let mut coeffs = extract_group(img, &members, cfg.block_size);
            let mut scratch = vec![0.0; t3d.scratch_len()];
            t3d.forward(&mut coeffs, &mut scratch);
            Ok(SpectrumGroup {
                ref_pos,
                members,
                coeffs,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GroupSpectrum {
        block_size: cfg.block_size,
        group_size: cfg.group_size,
        groups,
    })
}

fn reference_positions(img: &Image, cfg: &NonlocalConfig) -> Vec<(usize, usize)> {
    let rows = grid_positions(img.height(), cfg.block_size, cfg.step);
    let cols = grid_positions(img.width(), cfg.block_size, cfg.step);
    let mut refs = Vec::with_capacity(rows.len() * cols.len());
    for &r in &rows {
        for &c in &cols {
            refs.push((r, c));
        }
    }
    refs
}

/// The nonlocal sparsity measure: how many 3D-transform coefficients across
/// all groups exceed [`SPARSITY_EPS`] in magnitude.
pub fn phi_nc(img: &Image, cfg: &NonlocalConfig) -> Result<usize> {
    let spectrum = group_spectrum(img, cfg)?;
    Ok(spectrum
        .groups
        .iter()
        .map(|g| {
            g.coeffs
                .iter()
                .filter(|c| c.abs() > SPARSITY_EPS)
                .count()
        })
        .sum())
}

/// Hard threshold in place: zero coefficients with magnitude strictly below
/// `threshold` (values exactly at the threshold are kept). Returns the
/// number of surviving nonzero coefficients.
pub fn hard_threshold(coeffs: &mut [f64], threshold: f64) -> usize {
    let mut nonzero = 0;
    for c in coeffs.iter_mut() {
        if c.abs() < threshold {
            *c = 0.0;
        } else if *c != 0.0 {
            nonzero += 1;
        }
    }
    nonzero
}

/// Number of parallel aggregation bands. Fixed (rather than derived from
/// the worker count) so outputs are bit-identical for any thread count.
const AGGREGATION_BANDS: usize = 8;

/// Solve the nonlocal sub-problem
/// min_w beta * Phi_NC(w) + mu2 * ||w - r||^2 by grouping `r` on its own
/// content, hard-thresholding every group spectrum at sqrt(2 tau) with
/// tau = K beta / (2 N mu2), inverting, and averaging the overlapping block
/// estimates.
pub fn solve_w(r_img: &Image, beta: f64, mu2: f64, cfg: &NonlocalConfig) -> Result<Image> {
    assert!(beta > 0.0 && mu2 > 0.0, "weights must be positive");
    cfg.validate(r_img.width(), r_img.height())?;

    let n_refs = reference_positions(r_img, cfg).len();
    let n_pixels = r_img.len() as f64;
    let k_total = (cfg.block_size * cfg.block_size * cfg.group_size * n_refs) as f64;
    let tau = k_total * beta / (2.0 * n_pixels * mu2);
    let threshold = (2.0 * tau).sqrt();

    solve_w_at_threshold(r_img, threshold, cfg)
}

/// Inner worker for [`solve_w`], exposed at a fixed threshold so callers
/// can study the threshold behavior directly.
pub fn solve_w_at_threshold(
    r_img: &Image,
    threshold: f64,
    cfg: &NonlocalConfig,
) -> Result<Image> {
    let bs = cfg.block_size;
    let area = bs * bs;
    let width = r_img.width();
    let n = r_img.len();
    let t3d = Transform3d::new(bs, cfg.group_size);
    let refs = reference_positions(r_img, cfg);

    let band_len = refs.len().div_ceil(AGGREGATION_BANDS).max(1);
    let bands: Vec<&[(usize, usize)]> = refs.chunks(band_len).collect();

    let partials: Vec<Result<(Vec<f64>, Vec<f64>)>> = bands
        .into_par_iter()
        .map(|band| {
            let mut acc = vec![0.0; n];
            let mut weight = vec![0.0; n];
            let mut scratch = vec![0.0; t3d.scratch_len()];
            for &ref_pos in band {
                let members = match_blocks(r_img, ref_pos, cfg)?;
                let mut stack = extract_group(r_img, &members, bs);
                t3d.forward(&mut stack, &mut scratch);
                let nonzero = hard_threshold(&mut stack, threshold);
                t3d.inverse(&mut stack, &mut scratch);
                let w = match cfg.weights {
                    AggregationWeights::Uniform => 1.0,
                    AggregationWeights::InverseSparsity => 1.0 / (1.0 + nonzero as f64),
                };
                for (m, &(r0, c0)) in members.iter().enumerate() {
                    let slice = &stack[m * area..(m + 1) * area];
                    for r in 0..bs {
                        let base = (r0 + r) * width + c0;
                        for c in 0..bs {
                            acc[base + c] += w * slice[r * bs + c];
                            weight[base + c] += w;
                        }
                    }
                }
            }
            Ok((acc, weight))
        })
        .collect();

    // Merge bands in index order so the summation order is deterministic.
    let mut acc = vec![0.0; n];
    let mut weight = vec![0.0; n];
    for partial in partials {
        let (a, w) = partial?;
        for i in 0..n {
            acc[i] += a[i];
            weight[i] += w[i];
        }
    }

    let data: Vec<f64> = acc
        .iter()
        .zip(&weight)
        .zip(r_img.data())
        .map(|((&a, &w), &orig)| if w > 0.0 { a / w } else { orig })
        .collect();
    Ok(Image::from_raw(width, r_img.height(), data))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::SplitMix64;

    fn random_image(w: usize, h: usize, seed: u64) -> Image {
        let mut rng = SplitMix64::new(seed);
        Image::from_fn(w, h, |_, _| rng.next_unit() * 255.0)
    }

    fn small_cfg() -> NonlocalConfig {
        NonlocalConfig {
            block_size: 4,
            group_size: 4,
            window: 12,
            step: 2,
            weights: AggregationWeights::Uniform,
        }
    }

    #[test]
    fn grid_positions_snap_to_border() {
        assert_eq!(grid_positions(16, 4, 4), vec![0, 4, 8, 12]);
        assert_eq!(grid_positions(18, 4, 4), vec![0, 4, 8, 12, 14]);
        assert_eq!(grid_positions(4, 4, 3), vec![0]);
    }

    #[test]
    fn constant_image_ties_break_by_raster_order() {
        let img = Image::constant(16, 16, 5.0);
        let cfg = NonlocalConfig {
            group_size: 4,
            ..small_cfg()
        };
        let members = match_blocks(&img, (6, 6), &cfg).unwrap();
        assert_eq!(members[0], (6, 6));
        // All distances tie at zero; the first window positions in raster
        // order follow the reference.
        let (r_lo, r_hi) = cfg.axis_range(6, 16);
        let (c_lo, _) = cfg.axis_range(6, 16);
        assert!(r_hi > r_lo);
        assert_eq!(members[1], (r_lo, c_lo));
        assert_eq!(members[2], (r_lo, c_lo + 1));
        assert_eq!(members[3], (r_lo, c_lo + 2));
    }

    #[test]
    fn identical_block_ranks_second() {
        let mut img = random_image(24, 24, 3);
        let bs = 4;
        // Plant an exact copy of the reference block at (10, 12).
        for r in 0..bs {
            for c in 0..bs {
                let v = img.get(4 + r, 4 + c);
                img.set(10 + r, 12 + c, v);
            }
        }
        let cfg = NonlocalConfig {
            block_size: bs,
            group_size: 3,
            window: 24,
            step: 1,
            weights: AggregationWeights::Uniform,
        };
        let members = match_blocks(&img, (4, 4), &cfg).unwrap();
        assert_eq!(members[0], (4, 4));
        assert_eq!(members[1], (10, 12));
    }

    /// Brute-force oracle: distances for every candidate, full stable sort.
    fn match_blocks_oracle(
        img: &Image,
        ref_pos: (usize, usize),
        cfg: &NonlocalConfig,
    ) -> Vec<(usize, usize)> {
        let (r_lo, r_hi) = cfg.axis_range(ref_pos.0, img.height());
        let (c_lo, c_hi) = cfg.axis_range(ref_pos.1, img.width());
        let mut all: Vec<(f64, (usize, usize))> = Vec::new();
        for r in r_lo..=r_hi {
            for c in c_lo..=c_hi {
                if (r, c) == ref_pos {
                    continue;
                }
                all.push((block_distance(img, ref_pos, (r, c), cfg.block_size), (r, c)));
            }
        }
        all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then_with(|| a.1.cmp(&b.1)));
        let mut members = vec![ref_pos];
        members.extend(all.into_iter().take(cfg.group_size - 1).map(|(_, p)| p));
        members
    }

    #[test]
    fn matcher_agrees_with_brute_force() {
        let img = random_image(64, 64, 11);
        let cfg = NonlocalConfig {
            block_size: 8,
            group_size: 8,
            window: 21,
            step: 1,
            weights: AggregationWeights::Uniform,
        };
        for &ref_pos in &[(0, 0), (3, 50), (28, 28), (56, 56), (56, 0)] {
            let got = match_blocks(&img, ref_pos, &cfg).unwrap();
            let want = match_blocks_oracle(&img, ref_pos, &cfg);
            assert_eq!(got, want, "mismatch at {ref_pos:?}");
        }
    }

    #[test]
    fn matcher_agrees_with_brute_force_on_quantized_image() {
        // Integer-valued pixels force plenty of exact distance ties.
        let mut rng = SplitMix64::new(5);
        let img = Image::from_fn(32, 32, |_, _| (rng.next_u64() % 8) as f64 * 16.0);
        let cfg = NonlocalConfig {
            block_size: 4,
            group_size: 10,
            window: 16,
            step: 1,
            weights: AggregationWeights::Uniform,
        };
        for &ref_pos in &[(0, 0), (5, 9), (14, 14), (28, 3), (28, 28)] {
            let got = match_blocks(&img, ref_pos, &cfg).unwrap();
            let want = match_blocks_oracle(&img, ref_pos, &cfg);
            assert_eq!(got, want, "mismatch at {ref_pos:?}");
        }
    }

    #[test]
    fn matching_invariant_under_constant_shift() {
        let img = random_image(32, 32, 21);
        let shifted = Image::from_fn(32, 32, |r, c| img.get(r, c) + 37.0);
        let cfg = small_cfg();
        for &ref_pos in &[(0, 0), (10, 20), (28, 28)] {
            assert_eq!(
                match_blocks(&img, ref_pos, &cfg).unwrap(),
                match_blocks(&shifted, ref_pos, &cfg).unwrap()
            );
        }
    }

    #[test]
    fn config_rejected_when_window_underfilled() {
        let cfg = NonlocalConfig {
            block_size: 4,
            group_size: 50,
            window: 8,
            step: 2,
            weights: AggregationWeights::Uniform,
        };
        assert!(cfg.validate(16, 16).is_err());
    }

    #[test]
    fn phi_nc_zero_image() {
        let img = Image::zeros(16, 16);
        assert_eq!(phi_nc(&img, &small_cfg()).unwrap(), 0);
    }

    #[test]
    fn phi_nc_constant_image_one_dc_per_group() {
        let img = Image::constant(16, 16, 33.0);
        let cfg = small_cfg();
        let spectrum = group_spectrum(&img, &cfg).unwrap();
        let n_groups = spectrum.groups.len();
        assert_eq!(phi_nc(&img, &cfg).unwrap(), n_groups);
        // And the count never exceeds K.
        let img = random_image(16, 16, 9);
        assert!(phi_nc(&img, &cfg).unwrap() <= spectrum.total_len());
    }

    #[test]
    fn hard_threshold_strictness_and_idempotence() {
        let mut coeffs = vec![-3.0, -1.0, 0.0, 0.5, 1.0, 2.0];
        let nz = hard_threshold(&mut coeffs, 1.0);
        // Values at exactly the threshold are kept.
        assert_eq!(coeffs, vec![-3.0, -1.0, 0.0, 0.0, 1.0, 2.0]);
        assert_eq!(nz, 4);
        let mut again = coeffs.clone();
        let nz2 = hard_threshold(&mut again, 1.0);
        assert_eq!(again, coeffs);
        assert_eq!(nz2, nz);
    }

    #[test]
    fn hard_threshold_is_two_candidate_minimizer() {
        // hard(theta, a) solves min 0.5 (x - theta)^2 + (a^2/2) [x != 0]:
        // compare the only two candidates x = 0 and x = theta.
        let mut rng = SplitMix64::new(77);
        for _ in 0..1000 {
            let theta = (rng.next_unit() - 0.5) * 10.0;
            let a = rng.next_unit() * 5.0;
            let mut c = [theta];
            hard_threshold(&mut c, a);
            let obj = |x: f64| {
                0.5 * (x - theta) * (x - theta) + if x != 0.0 { a * a / 2.0 } else { 0.0 }
            };
            let best = if obj(theta) <= obj(0.0) { theta } else { 0.0 };
            // At |theta| == a both candidates tie; either answer is exact.
            if (theta.abs() - a).abs() > 1e-12 {
                assert_eq!(c[0], best, "theta={theta} a={a}");
            }
        }
    }

    #[test]
    fn solve_w_threshold_zero_is_identity() {
        let img = random_image(20, 20, 50);
        let cfg = small_cfg();
        let out = solve_w_at_threshold(&img, 0.0, &cfg).unwrap();
        for (a, b) in out.data().iter().zip(img.data()) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn solve_w_huge_threshold_zeroes_image() {
        let img = random_image(20, 20, 51);
        let cfg = small_cfg();
        let out = solve_w(&img, 1e12, 1e-6, &cfg).unwrap();
        for &v in out.data() {
            assert!(v.abs() < 1e-8);
        }
    }

    #[test]
    fn solve_w_reduces_sparsity_count() {
        let img = random_image(24, 24, 52);
        let cfg = small_cfg();
        let before = phi_nc(&img, &cfg).unwrap();
        let out = solve_w(&img, 8.0, 0.05, &cfg).unwrap();
        let after = phi_nc(&out, &cfg).unwrap();
        assert!(after <= before, "sparsity grew: {after} > {before}");
    }
}
