//! Synthetic SST fields with location-anchored, seasonally active fronts.
//!
//! Each front class owns a fixed anchor, orientation and shape. In a month
//! where the class is active its curve is redrawn with a random wiggle and
//! offset, a temperature step is laid across it, and pixels within
//! `front_halfwidth` of the curve are labeled with the class.

use std::f64::consts::PI;
use std::ops::Range;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;
use crate::tensor::TensorData;

use super::{sst_gradient, Sample};

const CURVE_POINTS: usize = 33;
/// Width scale of the tanh temperature step across a front, in pixels.
const STEP_WIDTH: f64 = 1.5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrontSpec {
    pub class_id: u8,
    /// Curve center as (row, column) fractions of the grid.
    pub anchor: [f64; 2],
    pub active_months: Vec<u8>,
    /// Temperature change across the front, °C; the sign picks the warm side.
    pub temperature_step: f64,
    /// Amplitude of the random perturbation, as a fraction of the grid size.
    pub curve_wiggle: f64,
    /// Angle of the curve's chord from the row axis, degrees.
    #[serde(default)]
    pub orientation_deg: f64,
    /// Chord length as a fraction of the grid size.
    #[serde(default = "default_length")]
    pub length: f64,
    /// Parabolic bow of the arc relative to its length.
    #[serde(default = "default_curvature")]
    pub curvature: f64,
}

fn default_length() -> f64 {
    0.3
}

fn default_curvature() -> f64 {
    0.4
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub grid_h: usize,
    pub grid_w: usize,
    pub classes: Vec<FrontSpec>,
    /// Meridional (row-wise) temperature change across the grid, °C.
    pub base_gradient: f64,
    /// Amplitude of the month-dependent uniform temperature offset, °C.
    #[serde(default)]
    pub seasonal_amplitude: f64,
    pub noise_sigma: f64,
    pub front_halfwidth: f64,
    pub seed: u64,
}

impl SynthConfig {
    /// Eleven front classes on an `h×w` grid. Classes 4/5 and 6/7 share a
    /// location and shape but are active in disjoint halves of the year, so
    /// only the month can tell them apart. Winter and spring carry more fronts.
    pub fn benchmark(h: usize, w: usize, seed: u64) -> Self {
        let all: Vec<u8> = (1..=12).collect();
        let front = |class_id, anchor, months: &[u8], step, orientation_deg| FrontSpec {
            class_id,
            anchor,
            active_months: months.to_vec(),
            temperature_step: step,
            curve_wiggle: 0.02,
            orientation_deg,
            length: default_length(),
            curvature: default_curvature(),
        };
        let classes = vec![
            front(1, [0.18, 0.22], &all, 2.0, 20.0),
            front(2, [0.18, 0.72], &[12, 1, 2, 3, 4, 5], -2.0, -30.0),
            front(3, [0.40, 0.45], &all, 2.0, 90.0),
            front(4, [0.50, 0.80], &[6, 7, 8, 9, 10, 11], 2.5, 60.0),
            front(5, [0.50, 0.80], &[12, 1, 2, 3, 4, 5], 2.5, 60.0),
            front(6, [0.72, 0.25], &[3, 4, 5, 6, 7, 8], -2.0, -45.0),
            front(7, [0.72, 0.25], &[9, 10, 11, 12, 1, 2], -2.0, -45.0),
            front(8, [0.86, 0.60], &all, 1.5, 10.0),
            front(9, [0.28, 0.92], &[12, 1, 2, 3, 4], 2.0, 80.0),
            front(10, [0.64, 0.52], &[11, 12, 1, 2, 3, 4, 5], -1.5, 0.0),
            front(11, [0.90, 0.88], &[3, 4, 5, 9, 10, 11], 2.0, 135.0),
        ];
        Self {
            grid_h: h,
            grid_w: w,
            classes,
            base_gradient: 4.0,
            seasonal_amplitude: 2.0,
            noise_sigma: 0.05,
            front_halfwidth: 2.0,
            seed,
        }
    }

    /// Three always-active benchmark fronts on a 32×32 grid.
    pub fn toy(seed: u64) -> Self {
        let mut cfg = Self::benchmark(32, 32, seed);
        cfg.classes.retain(|c| [1, 3, 8].contains(&c.class_id));
        for (c, id) in cfg.classes.iter_mut().zip(1..) {
            c.class_id = id;
        }
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Validation(m));
        if self.grid_h < 2 || self.grid_w < 2 {
            return fail(format!("data grid {}×{} is too small", self.grid_h, self.grid_w));
        }
        if !(self.noise_sigma >= 0.0 && self.front_halfwidth >= 0.0 && self.base_gradient.is_finite()) {
            return fail("noise_sigma and front_halfwidth must be non-negative".into());
        }
        let mut seen = std::collections::HashSet::new();
        for c in &self.classes {
            if c.class_id == 0 || !seen.insert(c.class_id) {
                return fail(format!("class_id {} is zero or repeated", c.class_id));
            }
            if !c.anchor.iter().all(|a| (0.0..=1.0).contains(a)) {
                return fail(format!("class {} anchor {:?} outside [0,1]²", c.class_id, c.anchor));
            }
            if c.active_months.is_empty() || c.active_months.iter().any(|m| !(1..=12).contains(m)) {
                return fail(format!("class {} needs active months within 1..=12", c.class_id));
            }
            if !(c.length > 0.0 && c.curve_wiggle >= 0.0 && c.temperature_step.is_finite()) {
                return fail(format!("class {} has a non-positive length or negative wiggle", c.class_id));
            }
        }
        Ok(())
    }

    pub fn num_classes(&self) -> usize {
        usize::from(self.classes.iter().map(|c| c.class_id).max().unwrap_or(0)) + 1
    }
}

/// A front's centerline as a polyline of (row, column) pixel coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct FrontCurve {
    pub class_id: u8,
    pub points: Vec<[f64; 2]>,
}

/// Distance from `p` to segment `a→b`.
fn segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let d = [b[0] - a[0], b[1] - a[1]];
    let len2 = d[0] * d[0] + d[1] * d[1];
    let t = if len2 > 0.0 { (((p[0] - a[0]) * d[0] + (p[1] - a[1]) * d[1]) / len2).clamp(0.0, 1.0) } else { 0.0 };
    (p[0] - a[0] - t * d[0]).hypot(p[1] - a[1] - t * d[1])
}

/// Euclidean distance from `p` to a polyline.
pub fn polyline_distance(p: [f64; 2], points: &[[f64; 2]]) -> f64 {
    points.windows(2).map(|s| segment_distance(p, s[0], s[1])).fold(f64::INFINITY, f64::min)
}

/// A front drawn for one sample: a bowed, wiggled curve expressed in the
/// frame of its chord (`along` the chord, `across` it).
struct FrontShape {
    center: [f64; 2],
    dir: [f64; 2],
    normal: [f64; 2],
    chord: f64,
    curvature: f64,
    harmonics: Vec<(f64, f64)>,
}

impl FrontShape {
    fn draw(spec: &FrontSpec, h: usize, w: usize, rng: &mut impl Rng) -> Self {
        let scale = (h.min(w) - 1) as f64;
        let theta = spec.orientation_deg.to_radians();
        let wiggle = spec.curve_wiggle * scale;
        let shift = [rng.gen_range(-1.0..=1.0) * wiggle, rng.gen_range(-1.0..=1.0) * wiggle];
        let harmonics =
            (1..=3).map(|k| (rng.gen_range(-1.0..=1.0) * wiggle / k as f64, rng.gen_range(0.0..2.0 * PI))).collect();
        Self {
            center: [spec.anchor[0] * (h - 1) as f64 + shift[0], spec.anchor[1] * (w - 1) as f64 + shift[1]],
            dir: [theta.cos(), theta.sin()],
            normal: [-theta.sin(), theta.cos()],
            chord: spec.length * scale,
            curvature: spec.curvature,
            harmonics,
        }
    }

    /// Offset of the curve across the chord at chord fraction `t ∈ [-0.5, 0.5]`.
    fn offset(&self, t: f64) -> f64 {
        let mut off = self.curvature * self.chord * t * t;
        for (k, &(amp, phase)) in self.harmonics.iter().enumerate() {
            off += amp * (2.0 * PI * (k + 1) as f64 * (t + 0.5) + phase).sin();
        }
        off
    }

    fn polyline(&self) -> Vec<[f64; 2]> {
        (0..CURVE_POINTS)
            .map(|i| {
                let t = i as f64 / (CURVE_POINTS - 1) as f64 - 0.5;
                let (along, off) = (t * self.chord, self.offset(t));
                [
                    self.center[0] + along * self.dir[0] + off * self.normal[0],
                    self.center[1] + along * self.dir[1] + off * self.normal[1],
                ]
            })
            .collect()
    }

    /// Chord-frame coordinates of `p`: (along, across minus the curve offset).
    /// Past the chord ends the offset is held at its end value.
    fn frame(&self, p: [f64; 2]) -> (f64, f64) {
        let rel = [p[0] - self.center[0], p[1] - self.center[1]];
        let along = rel[0] * self.dir[0] + rel[1] * self.dir[1];
        let across = rel[0] * self.normal[0] + rel[1] * self.normal[1];
        (along, across - self.offset((along / self.chord).clamp(-0.5, 0.5)))
    }
}

fn gaussian_blur(field: &mut [f64], h: usize, w: usize, sigma: f64) {
    let radius = (3.0 * sigma).ceil() as isize;
    let kernel: Vec<f64> = (-radius..=radius).map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp()).collect();
    let norm: f64 = kernel.iter().sum();
    let kernel: Vec<f64> = kernel.iter().map(|k| k / norm).collect();
    let clampi = |i: isize, n: usize| i.clamp(0, n as isize - 1) as usize;
    let mut tmp = vec![0.0; h * w];
    for x in 0..h {
        for y in 0..w {
            tmp[x * w + y] =
                kernel.iter().enumerate().map(|(k, &kv)| kv * field[x * w + clampi(y as isize + k as isize - radius, w)]).sum();
        }
    }
    for x in 0..h {
        for y in 0..w {
            field[x * w + y] =
                kernel.iter().enumerate().map(|(k, &kv)| kv * tmp[clampi(x as isize + k as isize - radius, h) * w + y]).sum();
        }
    }
}

pub fn sample_id(month: u8, rep: usize) -> String {
    format!("m{month:02}-{rep:04}")
}

/// One synthetic sample with its active front curves. The image holds raw
/// (unnormalized) gradients.
pub fn synth_sample(config: &SynthConfig, month: u8, rep: usize) -> Result<(Sample, Vec<FrontCurve>)> {
    let (h, w) = (config.grid_h, config.grid_w);
    let mut rng = seed::rng(&[config.seed, u64::from(month), rep as u64]);
    // every class draws its shape so the stream does not depend on activity
    let shapes: Vec<FrontShape> = config.classes.iter().map(|spec| FrontShape::draw(spec, h, w, &mut rng)).collect();
    let active: Vec<(&FrontSpec, FrontShape, Vec<[f64; 2]>)> = config
        .classes
        .iter()
        .zip(shapes)
        .filter(|(spec, _)| spec.active_months.contains(&month))
        .map(|(spec, shape)| {
            let line = shape.polyline();
            (spec, shape, line)
        })
        .collect();

    let fade = 0.35 * (h.min(w) - 1) as f64;
    let offset = config.seasonal_amplitude * (2.0 * PI * (f64::from(month) - 2.0) / 12.0).cos();
    let mut field = vec![0.0f64; h * w];
    let mut labels = vec![0u8; h * w];
    let mut labeled = vec![0usize; active.len()];
    let mut overwritten = vec![0usize; active.len()];
    for x in 0..h {
        for y in 0..w {
            let p = [x as f64, y as f64];
            let mut t = config.base_gradient * x as f64 / (h - 1) as f64 + offset;
            let mut owner: Option<usize> = None;
            for (k, (spec, shape, line)) in active.iter().enumerate() {
                let (along, across) = shape.frame(p);
                let beyond = (along.abs() - shape.chord / 2.0).max(0.0);
                let envelope = (-(beyond / fade).powi(2)).exp();
                t += spec.temperature_step * 0.5 * (1.0 + (across / STEP_WIDTH).tanh()) * envelope;
                if polyline_distance(p, line) <= config.front_halfwidth {
                    if let Some(prev) = owner {
                        overwritten[prev] += 1;
                    }
                    owner = Some(k);
                    labeled[k] += 1;
                    labels[x * w + y] = spec.class_id;
                }
            }
            field[x * w + y] = t;
        }
    }
    for (k, (spec, _, _)) in active.iter().enumerate() {
        if labeled[k] > 0 && 2 * overwritten[k] > labeled[k] {
            log::warn!(
                "month {month} rep {rep}: class {} lost {} of {} labeled pixels to overlapping fronts",
                spec.class_id,
                overwritten[k],
                labeled[k]
            );
        }
    }
    if config.noise_sigma > 0.0 {
        let normal = Normal::new(0.0, config.noise_sigma).map_err(|e| Error::Validation(e.to_string()))?;
        field.iter_mut().for_each(|v| *v += normal.sample(&mut rng));
    }
    gaussian_blur(&mut field, h, w, 1.0);

    let sst = TensorData::new([h, w], field.iter().map(|&v| v as f32).collect())?;
    let sample = Sample {
        id: sample_id(month, rep),
        month,
        image: sst_gradient(&sst)?,
        labels: TensorData::new([h, w], labels)?,
    };
    Ok((sample, active.into_iter().map(|(spec, _, points)| FrontCurve { class_id: spec.class_id, points }).collect()))
}

/// Samples for repetitions `reps` of every month, month-major.
pub fn synth_range(config: &SynthConfig, reps: Range<usize>) -> Result<Vec<Sample>> {
    config.validate()?;
    let keys: Vec<(u8, usize)> = (1..=12).flat_map(|m| reps.clone().map(move |r| (m, r))).collect();
    keys.par_iter().map(|&(m, r)| synth_sample(config, m, r).map(|(s, _)| s)).collect()
}

/// `n_per_month` samples for each of the twelve months.
pub fn synth_generate(config: &SynthConfig, n_per_month: usize) -> Result<Vec<Sample>> {
    synth_range(config, 0..n_per_month)
}
