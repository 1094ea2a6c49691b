//! Seeded, reproducible synthesis of mixed Gaussian-plus-impulse
//! degradation, with ground-truth corruption masks for scoring detectors.
//!
//! All randomness comes from SplitMix64 streams derived from a single
//! 64-bit seed. Every image row gets its own substream keyed by
//! (seed, stage, row), so outputs are bit-identical regardless of how the
//! rows are scheduled, and the Gaussian and impulse stages never share a
//! stream. Gaussian samples use the Box-Muller transform (cosine branch,
//! one sample per pixel).

use crate::detect::PixelMask;
use crate::error::{Error, Result};
use crate::image::{Image, D_MAX, D_MIN};

/// Impulse-noise model.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ImpulseKind {
    /// Pixels are replaced by d_min or d_max, each with probability rate/2.
    SaltPepper,
    /// Pixels are replaced by uniform draws from [d_min, d_max] with
    /// probability rate.
    RandomValued,
}

impl ImpulseKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ImpulseKind::SaltPepper => "sp",
            ImpulseKind::RandomValued => "rv",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "sp" | "salt-pepper" | "saltpepper" => Ok(ImpulseKind::SaltPepper),
            "rv" | "random-valued" | "randomvalued" => Ok(ImpulseKind::RandomValued),
            other => Err(Error::InvalidConfig(format!(
                "unknown impulse kind '{other}' (expected 'sp' or 'rv')"
            ))),
        }
    }
}

/// Full degradation description: Gaussian sigma, impulse rate and kind, and
/// the reproducibility seed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseSpec {
    pub sigma: f64,
    pub rate: f64,
    pub kind: ImpulseKind,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.rate) {
            return Err(Error::InvalidConfig(format!(
                "impulse rate {} outside [0, 1]",
                self.rate
            )));
        }
        if self.sigma < 0.0 || !self.sigma.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "sigma {} must be finite and nonnegative",
                self.sigma
            )));
        }
        Ok(())
    }
}

/// Result of applying a [`NoiseSpec`] to a clean image: the degraded image
/// plus the ground-truth impulse mask (suspect = pixel was hit, whether or
/// not the replacement happened to equal the original value).
#[derive(Clone, Debug)]
pub struct CorruptionRecord {
    pub noisy: Image,
    pub truth_mask: PixelMask,
    pub spec: NoiseSpec,
}

// ---------------------------------------------------------------------------
// Deterministic RNG
// ---------------------------------------------------------------------------

/// SplitMix64 (Steele, Lea, Flood 2014). Small, fast, and good enough for
/// noise synthesis; chosen so outputs are a documented pure function of the
/// seed with no external dependency.
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(state: u64) -> Self {
        Self { state }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in [0, 1) with 53-bit resolution.
    #[inline]
    pub fn next_unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in (0, 1]; safe as a logarithm argument.
    #[inline]
    fn next_unit_open_low(&mut self) -> f64 {
        ((self.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal via Box-Muller (cosine branch).
    #[inline]
    pub fn next_gaussian(&mut self) -> f64 {
        let u1 = self.next_unit_open_low();
        let u2 = self.next_unit();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }
}

/// Stage tags keeping the synthesis steps on disjoint streams.
const STAGE_GAUSSIAN: u64 = 0x47;
const STAGE_IMPULSE: u64 = 0x49;

/// Substream for one image row of one synthesis stage.
fn row_stream(seed: u64, stage: u64, row: usize) -> SplitMix64 {
    // Decorrelate (seed, stage, row) tuples with two odd 64-bit multipliers
    // before seeding the mixer.
    let key = seed
        ^ stage.wrapping_mul(0xA076_1D64_78BD_642F)
        ^ (row as u64).wrapping_mul(0xE703_7ED1_A0B4_28DB);
    SplitMix64::new(key)
}

// ---------------------------------------------------------------------------
// Synthesis operations
// ---------------------------------------------------------------------------

/// Add i.i.d. zero-mean Gaussian noise of standard deviation `sigma`.
/// The output is intentionally not clipped to the dynamic range.
pub fn add_gaussian(x: &Image, sigma: f64, seed: u64) -> Image {
    assert!(sigma >= 0.0, "sigma must be nonnegative");
    let mut out = x.clone();
    if sigma == 0.0 {
        return out;
    }
    let width = x.width();
    for r in 0..x.height() {
        let mut rng = row_stream(seed, STAGE_GAUSSIAN, r);
        for v in &mut out.data_mut()[r * width..(r + 1) * width] {
            *v += sigma * rng.next_gaussian();
        }
    }
    out
}

/// Salt-and-pepper corruption: per pixel independently, replace with d_min
/// with probability rate/2, with d_max with probability rate/2, otherwise
/// leave unchanged. The returned mask marks replaced pixels.
pub fn add_salt_pepper(y: &Image, rate: f64, seed: u64) -> (Image, PixelMask) {
    assert!((0.0..=1.0).contains(&rate), "rate must be in [0, 1]");
    let mut out = y.clone();
    let width = y.width();
    let mut hit = vec![false; y.len()];
    for r in 0..y.height() {
        let mut rng = row_stream(seed, STAGE_IMPULSE, r);
        for (v, h) in out.data_mut()[r * width..(r + 1) * width]
            .iter_mut()
            .zip(&mut hit[r * width..(r + 1) * width])
        {
            let u = rng.next_unit();
            if u < rate / 2.0 {
                *v = D_MIN;
                *h = true;
            } else if u < rate {
                *v = D_MAX;
                *h = true;
            }
        }
    }
    let mask = PixelMask::from_fn(width, y.height(), |r, c| hit[r * width + c]);
    (out, mask)
}

/// Random-valued corruption: per pixel independently, replace with a
/// uniform draw from [d_min, d_max] with probability rate. A replacement
/// that happens to equal the original value still counts as masked.
pub fn add_random_valued(y: &Image, rate: f64, seed: u64) -> (Image, PixelMask) {
    assert!((0.0..=1.0).contains(&rate), "rate must be in [0, 1]");
    let mut out = y.clone();
    let width = y.width();
    let mut hit = vec![false; y.len()];
    for r in 0..y.height() {
        let mut rng = row_stream(seed, STAGE_IMPULSE, r);
        for (v, h) in out.data_mut()[r * width..(r + 1) * width]
            .iter_mut()
            .zip(&mut hit[r * width..(r + 1) * width])
        {
            let u = rng.next_unit();
            let d = D_MIN + (D_MAX - D_MIN) * rng.next_unit();
            if u < rate {
                *v = d;
                *h = true;
            }
        }
    }
    let mask = PixelMask::from_fn(width, y.height(), |r, c| hit[r * width + c]);
    (out, mask)
}

/// Apply the two-step degradation: Gaussian noise first, then impulse
/// corruption. The Gaussian intermediate is clipped to the dynamic range
/// before impulses are injected, so the observable image is a valid
/// 8-bit-range signal.
pub fn corrupt(x: &Image, spec: &NoiseSpec) -> Result<CorruptionRecord> {
    spec.validate()?;
    let intermediate = add_gaussian(x, spec.sigma, spec.seed).clip();
    let (noisy, truth_mask) = match spec.kind {
        ImpulseKind::SaltPepper => add_salt_pepper(&intermediate, spec.rate, spec.seed),
        ImpulseKind::RandomValued => add_random_valued(&intermediate, spec.rate, spec.seed),
    };
    Ok(CorruptionRecord {
        noisy,
        truth_mask,
        spec: *spec,
    })
}
