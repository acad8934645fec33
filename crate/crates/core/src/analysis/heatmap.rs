use std::path::Path;

use crate::error::{Error, Result};

/// Binary PGM (`P5`, maxval 255, row-major) of `values`, mapping `lo` to 0
/// and `hi` to 255 with clamping.
pub fn heatmap_pgm(values: &[f64], width: usize, height: usize, lo: f64, hi: f64) -> Result<Vec<u8>> {
    if values.len() != width * height || width == 0 {
        return Err(Error::dim(format!("{} values for a {width}x{height} heatmap", values.len())));
    }
    if !(hi > lo) {
        return Err(Error::Domain(format!("heatmap range [{lo}, {hi}] is empty")));
    }
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend(values.iter().map(|v| {
        let u = ((v - lo) / (hi - lo)).clamp(0.0, 1.0);
        if u.is_nan() {
            0
        } else {
            (u * 255.0).round() as u8
        }
    }));
    Ok(out)
}

pub fn write_heatmap(path: impl AsRef<Path>, values: &[f64], width: usize, height: usize, lo: f64, hi: f64) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, heatmap_pgm(values, width, height, lo, hi)?).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}
