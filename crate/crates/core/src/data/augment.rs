use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::seed;

use super::Sample;

/// Which augmentations [`augment`] applies.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AugmentPolicy {
    #[serde(default)]
    pub photometric: bool,
    #[serde(default)]
    pub crop: bool,
    #[serde(default)]
    pub flip: bool,
}

impl AugmentPolicy {
    pub const NONE: Self = Self { photometric: false, crop: false, flip: false };

    pub fn is_empty(&self) -> bool {
        !(self.photometric || self.crop || self.flip)
    }
}

/// Reverses the row order. The along-row derivative `gx` changes sign,
/// which on normalized data is `n → 1 − n`.
pub fn flip_rows(sample: &mut Sample) {
    let (h, w) = (sample.height(), sample.width());
    for x in 0..h / 2 {
        for y in 0..w {
            let (a, b) = (x * w + y, (h - 1 - x) * w + y);
            sample.labels.data_mut().swap(a, b);
            for c in 0..3 {
                sample.image.data_mut().swap(a * 3 + c, b * 3 + c);
            }
        }
    }
    negate_channel(sample, 0);
}

/// Reverses the column order and negates `gy`.
pub fn flip_cols(sample: &mut Sample) {
    let (h, w) = (sample.height(), sample.width());
    for x in 0..h {
        for y in 0..w / 2 {
            let (a, b) = (x * w + y, x * w + (w - 1 - y));
            sample.labels.data_mut().swap(a, b);
            for c in 0..3 {
                sample.image.data_mut().swap(a * 3 + c, b * 3 + c);
            }
        }
    }
    negate_channel(sample, 1);
}

fn negate_channel(sample: &mut Sample, c: usize) {
    for px in sample.image.data_mut().chunks_exact_mut(3) {
        px[c] = 1.0 - px[c];
    }
}

/// Random augmentation of a normalized sample, deterministic in `seed`.
///
/// Photometric: per-channel scale in `[0.8, 1.2]` and shift in
/// `[-0.05, 0.05]`, clamped to `[0, 1]`. Flip: rows and columns each reversed
/// with probability 0.5. Crop: a window covering 85–100% of each extent
/// stays in place and everything outside it is zeroed and labeled
/// background. The month is never touched.
pub fn augment(sample: &Sample, seed: u64, policy: AugmentPolicy) -> Sample {
    let mut out = sample.clone();
    if policy.is_empty() {
        return out;
    }
    let mut rng = seed::rng(&[seed]);
    if policy.photometric {
        let params: Vec<(f32, f32)> = (0..3).map(|_| (rng.gen_range(0.8..=1.2), rng.gen_range(-0.05..=0.05))).collect();
        for px in out.image.data_mut().chunks_exact_mut(3) {
            for (v, &(scale, shift)) in px.iter_mut().zip(&params) {
                *v = (*v * scale + shift).clamp(0.0, 1.0);
            }
        }
    }
    if policy.flip {
        if rng.gen_bool(0.5) {
            flip_rows(&mut out);
        }
        if rng.gen_bool(0.5) {
            flip_cols(&mut out);
        }
    }
    if policy.crop {
        let (h, w) = (out.height(), out.width());
        let mut window = |n: usize| {
            let len = ((rng.gen_range(0.85..=1.0) * n as f64).round() as usize).clamp(1, n);
            let start = rng.gen_range(0..=n - len);
            start..start + len
        };
        let (rows, cols) = (window(h), window(w));
        for x in 0..h {
            for y in 0..w {
                if !rows.contains(&x) || !cols.contains(&y) {
                    let i = x * w + y;
                    out.labels.data_mut()[i] = 0;
                    out.image.data_mut()[i * 3..][..3].fill(0.0);
                }
            }
        }
    }
    out
}
