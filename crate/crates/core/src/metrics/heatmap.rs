use std::fmt::Write as _;
use std::path::Path;

use crate::error::{shape_err, Error, Result};
use crate::io::write_atomic;
use crate::tensor::TensorData;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HeatmapFormat {
    /// Binary greymap, one byte `round(255·w)` per cell.
    Pgm,
    /// One line per grid row, comma separated, shortest round-trip `f32` text.
    Csv,
}

/// Writes an `h×w` weight grid. Values outside `[0, 1]` (or NaN) are clamped
/// with a warning.
pub fn export_heatmap(grid: &TensorData<f32>, path: &Path, format: HeatmapFormat) -> Result<()> {
    let &[h, w] = grid.shape() else {
        return Err(shape_err!("heatmap grid must be h×w, got {:?}", grid.shape()));
    };
    let bad = grid.data().iter().filter(|v| !(0.0..=1.0).contains(*v)).count();
    if bad > 0 {
        log::warn!("{}: clamped {bad} heatmap values outside [0, 1]", path.display());
    }
    let values: Vec<f32> = grid.data().iter().map(|&v| if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) }).collect();
    let bytes = match format {
        HeatmapFormat::Pgm => {
            let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
            out.extend(values.iter().map(|&v| (255.0 * v).round() as u8));
            out
        }
        HeatmapFormat::Csv => {
            let mut text = String::new();
            for row in values.chunks_exact(w.max(1)).take(h) {
                for (j, v) in row.iter().enumerate() {
                    if j > 0 {
                        text.push(',');
                    }
                    write!(text, "{v}").unwrap();
                }
                text.push('\n');
            }
            text.into_bytes()
        }
    };
    write_atomic(path, &bytes)
}

/// Parses a CSV grid written by [`export_heatmap`].
pub fn read_csv_grid(path: &Path) -> Result<TensorData<f32>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut data = Vec::new();
    let mut rows = 0;
    let mut width = None;
    for line in text.lines().filter(|l| !l.is_empty()) {
        let row: Vec<f32> = line
            .split(',')
            .map(|v| v.trim().parse().map_err(|_| Error::format(path, format!("bad number {v:?}"))))
            .collect::<Result<_>>()?;
        if *width.get_or_insert(row.len()) != row.len() {
            return Err(Error::format(path, "ragged rows"));
        }
        data.extend(row);
        rows += 1;
    }
    TensorData::new([rows, width.unwrap_or(0)], data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("z.pgm");
        export_heatmap(&TensorData::zeros([2, 3]), &p, HeatmapFormat::Pgm).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        let header = b"P5\n3 2\n255\n";
        assert_eq!(&bytes[..header.len()], header);
        assert_eq!(&bytes[header.len()..], &[0; 6]);

        let g = TensorData::new([1, 3], vec![1.0, 0.5, 1.7]).unwrap();
        export_heatmap(&g, &p, HeatmapFormat::Pgm).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        assert_eq!(&bytes[bytes.len() - 3..], &[255, 128, 255]);
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.csv");
        let g = TensorData::from_fn([4, 5], |i| (i as f32 * 0.137).sin().abs());
        export_heatmap(&g, &p, HeatmapFormat::Csv).unwrap();
        let back = read_csv_grid(&p).unwrap();
        assert!(back.max_abs_diff(&g).unwrap() <= 1e-6);
    }
}
