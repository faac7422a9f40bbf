//! Heatmap rendering to binary portable pixmaps, one pixel per cell.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{EngineError, Result};
use crate::grid::Grid;

/// Reserved color for no-data cells. Neither palette produces it.
pub const NODATA_RGB: [u8; 3] = [128, 128, 128];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Palette {
    /// Linear over [min, max]; warm colors for low values.
    Sequential,
    /// Symmetric around 0 over [-m, m], m = max |value|.
    Diverging,
}

impl FromStr for Palette {
    type Err = EngineError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sequential" => Ok(Palette::Sequential),
            "diverging" => Ok(Palette::Diverging),
            other => Err(EngineError::usage(format!(
                "unknown palette `{other}` (expected sequential or diverging)"
            ))),
        }
    }
}

const SEQUENTIAL: [[u8; 3]; 5] = [
    [165, 0, 38],
    [244, 109, 67],
    [254, 224, 144],
    [116, 173, 209],
    [49, 54, 149],
];

const DIVERGING: [[u8; 3]; 3] = [[33, 102, 172], [247, 247, 247], [178, 24, 43]];

fn ramp(stops: &[[u8; 3]], t: f64) -> [u8; 3] {
    let t = t.clamp(0.0, 1.0) * (stops.len() - 1) as f64;
    let i = (t.floor() as usize).min(stops.len() - 2);
    let f = t - i as f64;
    let mut out = [0u8; 3];
    for (k, o) in out.iter_mut().enumerate() {
        let (a, b) = (stops[i][k] as f64, stops[i + 1][k] as f64);
        *o = (a + (b - a) * f).round() as u8;
    }
    out
}

/// Value range the palette spans.
pub fn color_range(grid: &Grid, palette: Palette) -> Option<(f64, f64)> {
    let mut cells = grid.data_cells().map(|(_, _, v)| v).filter(|v| v.is_finite());
    let first = cells.next()?;
    let (lo, hi) = cells.fold((first, first), |(lo, hi), v| (lo.min(v), hi.max(v)));
    Some(match palette {
        Palette::Sequential => (lo, hi),
        Palette::Diverging => {
            let m = lo.abs().max(hi.abs());
            (-m, m)
        }
    })
}

/// Color of one value given the palette range. A zero-width range maps to
/// the palette midpoint.
pub fn color_of(value: f64, range: (f64, f64), palette: Palette) -> [u8; 3] {
    let (lo, hi) = range;
    let t = if hi > lo { (value - lo) / (hi - lo) } else { 0.5 };
    match palette {
        Palette::Sequential => ramp(&SEQUENTIAL, t),
        Palette::Diverging => ramp(&DIVERGING, t),
    }
}

/// Encode as binary PPM (P6).
pub fn heatmap_ppm(grid: &Grid, palette: Palette) -> Vec<u8> {
    let range = color_range(grid, palette).unwrap_or((0.0, 0.0));
    let mut out = format!("P6\n{} {}\n255\n", grid.ncols(), grid.nrows()).into_bytes();
    out.reserve(grid.header.len() * 3);
    for r in 0..grid.nrows() {
        for c in 0..grid.ncols() {
            let rgb = match grid.value(r, c) {
                Some(v) if v.is_finite() => color_of(v, range, palette),
                _ => NODATA_RGB,
            };
            out.extend_from_slice(&rgb);
        }
    }
    out
}

pub fn legend_path(image: &Path) -> PathBuf {
    let mut name = image.as_os_str().to_owned();
    name.push(".legend.txt");
    PathBuf::from(name)
}

fn legend_text(grid: &Grid, palette: Palette) -> String {
    let name = match palette {
        Palette::Sequential => "sequential",
        Palette::Diverging => "diverging",
    };
    let range = color_range(grid, palette)
        .map_or_else(|| "min=NA max=NA".to_string(), |(lo, hi)| format!("min={lo} max={hi}"));
    let [r, g, b] = NODATA_RGB;
    format!("palette={name} {range} nodata_rgb={r},{g},{b}\n")
}

/// Write the image and its legend sidecar `<path>.legend.txt`.
pub fn render_heatmap(grid: &Grid, palette: Palette, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, heatmap_ppm(grid, palette)).map_err(|e| EngineError::io(path, e))?;
    let legend = legend_path(path);
    fs::write(&legend, legend_text(grid, palette)).map_err(|e| EngineError::io(&legend, e))
}
