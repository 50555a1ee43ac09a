//! Seasonal one-hot codes and spatial location encodings.

use serde::{Deserialize, Serialize};

use crate::error::{arg_err, shape_err, Result};
use crate::tensor::ops::{self, Padding};
use crate::tensor::{Scalar, Tensor, TensorData};

/// Granularity of the seasonal one-hot code.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SeasonalMode {
    /// 12 slots, one per calendar month.
    Month,
    /// 4 slots: winter (Dec–Feb), spring (Mar–May), summer (Jun–Aug), autumn (Sep–Nov).
    Season,
}

impl SeasonalMode {
    pub fn len(self) -> usize {
        match self {
            SeasonalMode::Month => 12,
            SeasonalMode::Season => 4,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SeasonalCode {
    pub mode: SeasonalMode,
    pub month: u8,
    pub vector: Vec<f32>,
}

impl SeasonalCode {
    pub fn hot_index(&self) -> usize {
        self.vector.iter().position(|&v| v == 1.0).expect("one-hot")
    }
}

/// Meteorological season index of a month (0 = winter … 3 = autumn).
pub fn season_of(month: u8) -> usize {
    match month {
        12 | 1 | 2 => 0,
        3..=5 => 1,
        6..=8 => 2,
        _ => 3,
    }
}

pub fn seasonal_one_hot(month: u8, mode: SeasonalMode) -> Result<SeasonalCode> {
    if !(1..=12).contains(&month) {
        return Err(arg_err!("month {month} outside 1..=12"));
    }
    let hot = match mode {
        SeasonalMode::Month => usize::from(month - 1),
        SeasonalMode::Season => season_of(month),
    };
    let mut vector = vec![0.0; mode.len()];
    vector[hot] = 1.0;
    Ok(SeasonalCode { mode, month, vector })
}

/// Grid and channel count of a sinusoidal 2-D positional encoding.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PositionalEncodingSpec {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub base: f64,
}

impl PositionalEncodingSpec {
    pub fn new(height: usize, width: usize, channels: usize) -> Self {
        Self { height, width, channels, base: 10_000.0 }
    }
}

/// Sinusoidal encoding of (row, column) positions, `H×W×D`.
///
/// The first `D/2` channels depend only on the row `x`: channel `2i` holds
/// `sin(x / base^(4i/D))` and `2i+1` the matching cosine. The last `D/2`
/// channels encode the column `y` the same way at offsets `2j + D/2` and
/// `2j + 1 + D/2`. Values are computed in `f64` and rounded once.
pub fn positional_encoding_2d<T: Scalar>(spec: &PositionalEncodingSpec) -> Result<TensorData<T>> {
    let PositionalEncodingSpec { height, width, channels: d, base } = *spec;
    if d == 0 || d % 4 != 0 {
        return Err(arg_err!("positional encoding needs channels divisible by 4, got {d}"));
    }
    if height == 0 || width == 0 {
        return Err(arg_err!("positional encoding grid must be non-empty"));
    }
    let half = d / 2;
    let freqs: Vec<f64> = (0..d / 4).map(|i| base.powf(-(4.0 * i as f64) / d as f64)).collect();
    let mut data = Vec::with_capacity(height * width * d);
    for x in 0..height {
        for y in 0..width {
            let start = data.len();
            data.resize(start + d, T::zero());
            let px = &mut data[start..];
            for (i, &f) in freqs.iter().enumerate() {
                let (ax, ay) = (x as f64 * f, y as f64 * f);
                px[2 * i] = T::of(ax.sin());
                px[2 * i + 1] = T::of(ax.cos());
                px[2 * i + half] = T::of(ay.sin());
                px[2 * i + 1 + half] = T::of(ay.cos());
            }
        }
    }
    TensorData::new([height, width, d], data)
}

/// Two channels holding row and column coordinates scaled to `[-1, 1]`.
pub fn coordinate_channels<T: Scalar>(height: usize, width: usize) -> TensorData<T> {
    let scale = |i: usize, n: usize| if n > 1 { -1.0 + 2.0 * i as f64 / (n - 1) as f64 } else { 0.0 };
    let mut data = Vec::with_capacity(height * width * 2);
    for x in 0..height {
        for y in 0..width {
            data.push(T::of(scale(x, height)));
            data.push(T::of(scale(y, width)));
        }
    }
    TensorData::new([height, width, 2], data).expect("coordinate shape")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LocationMode {
    Pe2d,
    #[serde(rename = "coordconv")]
    CoordConv,
    Off,
}

/// Weights of the 1×1 convolution that folds coordinate channels back to `C`.
pub struct CoordConvParams<'a, T: Scalar> {
    pub weight: &'a Tensor<T>,
    pub bias: &'a Tensor<T>,
}

/// Injects position into an `h×w×C` feature map.
///
/// `Pe2d` adds the sinusoidal encoding, `CoordConv` appends coordinate
/// channels and convolves back to `C` channels, `Off` returns the input.
pub fn apply_location_encoding<T: Scalar>(
    feature: &Tensor<T>,
    mode: LocationMode,
    coord: Option<CoordConvParams<'_, T>>,
) -> Result<Tensor<T>> {
    let &[h, w, c] = feature.shape() else {
        return Err(shape_err!("location encoding expects h×w×C, got {:?}", feature.shape()));
    };
    match mode {
        LocationMode::Off => Ok(feature.clone()),
        LocationMode::Pe2d => {
            if c % 4 != 0 {
                return Err(arg_err!("pe2d needs channels divisible by 4, got {c}"));
            }
            let pe = positional_encoding_2d::<T>(&PositionalEncodingSpec::new(h, w, c))?;
            ops::add(feature, &Tensor::constant(pe))
        }
        LocationMode::CoordConv => {
            let params = coord.ok_or_else(|| arg_err!("coordconv needs convolution parameters"))?;
            let coords = Tensor::constant(coordinate_channels::<T>(h, w));
            let stacked = ops::concat_channels(feature, &coords)?;
            ops::conv2d(&stacked, params.weight, params.bias, Padding::Same)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn month_mode_examples() {
        let code = seasonal_one_hot(3, SeasonalMode::Month).unwrap();
        assert_eq!(code.vector.len(), 12);
        assert_eq!(code.hot_index(), 2);
        assert!(seasonal_one_hot(0, SeasonalMode::Month).is_err());
        assert!(seasonal_one_hot(13, SeasonalMode::Season).is_err());
    }

    #[test]
    fn season_table_is_exhaustive() {
        let expected = [0, 0, 1, 1, 1, 2, 2, 2, 3, 3, 3, 0];
        for (m, &s) in (1..=12u8).zip(&expected) {
            let code = seasonal_one_hot(m, SeasonalMode::Season).unwrap();
            assert_eq!(code.vector.len(), 4);
            assert_eq!(code.hot_index(), s, "month {m}");
        }
        assert_eq!(seasonal_one_hot(1, SeasonalMode::Season).unwrap().hot_index(), 0);
        assert_eq!(seasonal_one_hot(7, SeasonalMode::Season).unwrap().hot_index(), 2);
    }

    #[test]
    fn month_mode_is_bijective_and_season_three_to_one() {
        let mut seen = std::collections::HashSet::new();
        let mut per_season = [0usize; 4];
        for m in 1..=12 {
            let code = seasonal_one_hot(m, SeasonalMode::Month).unwrap();
            assert_eq!(code.vector.iter().filter(|&&v| v == 1.0).count(), 1);
            assert_eq!(code.vector.iter().filter(|&&v| v == 0.0).count(), 11);
            assert!(seen.insert(code.hot_index()));
            per_season[seasonal_one_hot(m, SeasonalMode::Season).unwrap().hot_index()] += 1;
        }
        assert_eq!(per_season, [3; 4]);
    }

    #[test]
    fn pe_spot_values() {
        let pe = positional_encoding_2d::<f64>(&PositionalEncodingSpec::new(4, 3, 8)).unwrap();
        let at = |x: usize, y: usize, c: usize| pe.data()[(x * 3 + y) * 8 + c];
        for y in 0..3 {
            assert_eq!(at(0, y, 0), 0.0);
            assert_eq!(at(0, y, 1), 1.0);
        }
        assert!((at(1, 0, 0) - 0.841_470_984_807_896_5).abs() < 1e-12);
        assert!((at(1, 2, 2) - 0.009_999_833_334_166_664).abs() < 1e-12);
        assert!(positional_encoding_2d::<f32>(&PositionalEncodingSpec::new(2, 2, 6)).is_err());
    }

    #[test]
    fn pe_halves_depend_on_one_axis_only() {
        let (h, w, d) = (5, 7, 16);
        let pe = positional_encoding_2d::<f32>(&PositionalEncodingSpec::new(h, w, d)).unwrap();
        let at = |x: usize, y: usize, c: usize| pe.data()[(x * w + y) * d + c];
        for x in 0..h {
            for y in 0..w {
                for c in 0..d / 2 {
                    assert_eq!(at(x, y, c), at(x, 0, c));
                    assert_eq!(at(x, y, c + d / 2), at(0, y, c + d / 2));
                }
            }
        }
        assert!(pe.data().iter().all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn location_off_is_identity_and_pe_adds() {
        let feature = Tensor::constant(TensorData::from_fn([3, 3, 4], |i| i as f32 * 0.1));
        let y = apply_location_encoding(&feature, LocationMode::Off, None).unwrap();
        assert_eq!(y.data(), feature.data());

        let zero = Tensor::constant(TensorData::<f32>::zeros([3, 3, 4]));
        let y = apply_location_encoding(&zero, LocationMode::Pe2d, None).unwrap();
        let pe = positional_encoding_2d::<f32>(&PositionalEncodingSpec::new(3, 3, 4)).unwrap();
        assert_eq!(y.data(), pe.data());

        let odd = Tensor::constant(TensorData::<f32>::zeros([3, 3, 6]));
        assert!(apply_location_encoding(&odd, LocationMode::Pe2d, None).is_err());
    }

    #[test]
    fn coordconv_passes_coordinates_through_the_conv() {
        // 4×4×4 zero feature; weight routes coordinate x → channel 0, y → channel 3
        let (h, w, c) = (4, 4, 4);
        let zero = Tensor::constant(TensorData::<f64>::zeros([h, w, c]));
        let mut wt = vec![0.0f64; (c + 2) * c];
        wt[c * c] = 2.0; // in channel c (x) → out 0
        wt[(c + 1) * c + 3] = -1.0; // in channel c+1 (y) → out 3
        let weight = Tensor::constant(TensorData::new([1, 1, c + 2, c], wt).unwrap());
        let bias = Tensor::constant(TensorData::new([c], vec![0.0, 0.5, 0.0, 0.0]).unwrap());
        let y = apply_location_encoding(
            &zero,
            LocationMode::CoordConv,
            Some(CoordConvParams { weight: &weight, bias: &bias }),
        )
        .unwrap();
        assert_eq!(y.shape(), &[h, w, c]);
        for x in 0..h {
            for yy in 0..w {
                let px = &y.data()[(x * w + yy) * c..][..c];
                let cx = -1.0 + 2.0 * x as f64 / 3.0;
                let cy = -1.0 + 2.0 * yy as f64 / 3.0;
                assert!((px[0] - 2.0 * cx).abs() < 1e-12);
                assert_eq!(px[1], 0.5);
                assert_eq!(px[2], 0.0);
                assert!((px[3] + cy).abs() < 1e-12);
            }
        }
    }
}
