use serde::{Deserialize, Serialize};

use crate::error::{arg_err, shape_err, Result};
use crate::tensor::TensorData;

/// One training example: a 3-channel gradient image, its month and a label mask.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub id: String,
    pub month: u8,
    /// `H×W×3`: `gx`, `gy`, `|g|`.
    pub image: TensorData<f32>,
    /// `H×W` class indices, 0 = background.
    pub labels: TensorData<u8>,
}

impl Sample {
    pub fn height(&self) -> usize {
        self.image.shape()[0]
    }

    pub fn width(&self) -> usize {
        self.image.shape()[1]
    }

    pub fn validate(&self, num_classes: usize) -> Result<()> {
        let &[h, w, 3] = self.image.shape() else {
            return Err(shape_err!("sample {} image must be H×W×3, got {:?}", self.id, self.image.shape()));
        };
        if self.labels.shape() != [h, w] {
            return Err(shape_err!("sample {} labels {:?} do not match image {h}×{w}", self.id, self.labels.shape()));
        }
        if !(1..=12).contains(&self.month) {
            return Err(arg_err!("sample {} has month {}", self.id, self.month));
        }
        if let Some(&l) = self.labels.data().iter().find(|&&l| usize::from(l) >= num_classes) {
            return Err(arg_err!("sample {} has label {l} ≥ {num_classes}", self.id));
        }
        if !self.image.all_finite() {
            return Err(arg_err!("sample {} has non-finite image values", self.id));
        }
        Ok(())
    }
}

/// Per-channel affine range mapped onto `[0, 1]`.
///
/// The two signed derivative channels use a symmetric range `[-a, a]`, so
/// zero gradient sits at 0.5 and negating a raw channel maps `n` to `1 - n`.
/// The magnitude channel uses its plain min and max.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub channel_min: [f32; 3],
    pub channel_max: [f32; 3],
}

impl Normalization {
    /// Statistics of raw gradient images, typically the training split.
    pub fn fit<'a>(samples: impl IntoIterator<Item = &'a Sample>) -> Self {
        let mut amax = [0.0f32; 2];
        let (mut mmin, mut mmax) = (f32::INFINITY, f32::NEG_INFINITY);
        for s in samples {
            for px in s.image.data().chunks_exact(3) {
                amax[0] = amax[0].max(px[0].abs());
                amax[1] = amax[1].max(px[1].abs());
                mmin = mmin.min(px[2]);
                mmax = mmax.max(px[2]);
            }
        }
        if mmin > mmax {
            (mmin, mmax) = (0.0, 0.0);
        }
        Self { channel_min: [-amax[0], -amax[1], mmin], channel_max: [amax[0], amax[1], mmax] }
    }

    /// Maps raw values into `[0, 1]`, clamping anything outside the fitted range.
    pub fn apply(&self, image: &mut TensorData<f32>) {
        for px in image.data_mut().chunks_exact_mut(3) {
            for (c, v) in px.iter_mut().enumerate() {
                let (lo, hi) = (self.channel_min[c], self.channel_max[c]);
                *v = if hi > lo {
                    ((*v - lo) / (hi - lo)).clamp(0.0, 1.0)
                } else if c < 2 {
                    0.5
                } else {
                    0.0
                };
            }
        }
    }
}

/// Zero-pads image and labels to `target_h × target_w`, content top-left.
pub fn pad_to(sample: &Sample, target_h: usize, target_w: usize) -> Result<Sample> {
    let (h, w) = (sample.height(), sample.width());
    if target_h < h || target_w < w {
        return Err(arg_err!("cannot pad {h}×{w} down to {target_h}×{target_w}"));
    }
    let c = sample.image.channels();
    let mut image = TensorData::zeros([target_h, target_w, c]);
    let mut labels = TensorData::filled([target_h, target_w], 0u8);
    for x in 0..h {
        image.data_mut()[x * target_w * c..][..w * c].copy_from_slice(&sample.image.data()[x * w * c..][..w * c]);
        labels.data_mut()[x * target_w..][..w].copy_from_slice(&sample.labels.data()[x * w..][..w]);
    }
    Ok(Sample { id: sample.id.clone(), month: sample.month, image, labels })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(h: usize, w: usize) -> Sample {
        Sample {
            id: "s".into(),
            month: 4,
            image: TensorData::from_fn([h, w, 3], |i| 0.25 + (i % 7) as f32 * 0.1),
            labels: TensorData::from_fn([h, w], |i| (i % 5) as u8 + 1),
        }
    }

    #[test]
    fn pad_paper_size() {
        let s = sample(340, 260);
        let p = pad_to(&s, 352, 352).unwrap();
        assert_eq!(p.image.shape(), &[352, 352, 3]);
        let padded_rows = (340..352).all(|x| p.labels.data()[x * 352..][..352].iter().all(|&l| l == 0));
        assert!(padded_rows);
        let padded_cols = (0..340).all(|x| p.labels.data()[x * 352 + 260..][..92].iter().all(|&l| l == 0));
        assert!(padded_cols);
        let bg = p.labels.data().iter().filter(|&&l| l == 0).count();
        assert_eq!(bg, 352 * 352 - 340 * 260);
        let zeros = p.image.data().iter().filter(|&&v| v == 0.0).count();
        assert_eq!(zeros, 3 * (352 * 352 - 340 * 260));
        assert_eq!(p.image.data()[(5 * 352 + 7) * 3 + 1], s.image.data()[(5 * 260 + 7) * 3 + 1]);
        assert!(pad_to(&s, 339, 352).is_err());
        assert_eq!(pad_to(&s, 340, 260).unwrap(), s);
    }

    #[test]
    fn normalization_is_symmetric_for_signed_channels() {
        let mut s = sample(2, 2);
        s.image = TensorData::new([2, 2, 3], vec![-2.0, 1.0, 0.5, 1.0, -4.0, 1.5, 0.0, 0.0, 0.0, 2.0, 2.0, 2.0]).unwrap();
        let norm = Normalization::fit([&s]);
        assert_eq!(norm.channel_min, [-2.0, -4.0, 0.0]);
        assert_eq!(norm.channel_max, [2.0, 4.0, 2.0]);
        let mut img = s.image.clone();
        norm.apply(&mut img);
        assert_eq!(&img.data()[..3], &[0.0, 0.625, 0.25]);
        assert_eq!(&img.data()[6..9], &[0.5, 0.5, 0.0]);
        let mut far = TensorData::new([1, 1, 3], vec![10.0, -10.0, 3.0]).unwrap();
        norm.apply(&mut far);
        assert_eq!(far.data(), &[1.0, 0.0, 1.0]);
    }
}
