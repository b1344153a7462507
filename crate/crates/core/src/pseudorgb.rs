//! Three-channel renderings of a cube from selected band windows or from
//! principal components, with 8-bit normalization and PPM export.

use serde::{Deserialize, Serialize};

use crate::bandstats::percentile;
use crate::cube_io::{parse_pnm_header, Hypercube};
use crate::error::{Error, Result};
use crate::pca::{project, PcaModel};
use crate::selection::SelectionResult;

/// Default half-width of the integration window around a chosen CWL, nm.
pub const DEFAULT_HALF_WIDTH: f64 = 27.0;

// Absorbs rounding in grid arithmetic (e.g. 450 + i * 500 / 127).
const WINDOW_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandWindow {
    pub cwl: f64,
    pub half_width: f64,
    pub band_indices: Vec<usize>,
}

/// All bands whose wavelength lies within `half_width` of `cwl`.
pub fn window_bands(grid: &[f64], cwl: f64, half_width: f64) -> Result<BandWindow> {
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidConfig(
            "wavelength grid must be strictly increasing".into(),
        ));
    }
    let band_indices: Vec<usize> = grid
        .iter()
        .enumerate()
        .filter(|(_, &w)| (w - cwl).abs() <= half_width + WINDOW_EPS)
        .map(|(i, _)| i)
        .collect();
    if band_indices.is_empty() {
        return Err(Error::EmptyWindow { cwl, half_width });
    }
    Ok(BandWindow {
        cwl,
        half_width,
        band_indices,
    })
}

/// Single-channel float raster, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FloatPlane {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

/// Unweighted mean over the window's bands at every pixel.
pub fn integrate_window(cube: &Hypercube, window: &BandWindow) -> Result<FloatPlane> {
    if window.band_indices.is_empty() {
        return Err(Error::EmptyWindow {
            cwl: window.cwl,
            half_width: window.half_width,
        });
    }
    if let Some(&index) = window.band_indices.iter().find(|&&i| i >= cube.bands()) {
        return Err(Error::IndexOutOfRange {
            index,
            bands: cube.bands(),
        });
    }
    let n = window.band_indices.len() as f64;
    let data = cube
        .pixels()
        .map(|px| window.band_indices.iter().map(|&b| px[b] as f64).sum::<f64>() / n)
        .collect();
    Ok(FloatPlane {
        width: cube.width(),
        height: cube.height(),
        data,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Normalization {
    GlobalMinmax,
    Percentile { low: f64, high: f64 },
}

impl Default for Normalization {
    fn default() -> Self {
        Normalization::Percentile { low: 1.0, high: 99.0 }
    }
}

/// Range a plane was mapped from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormRecord {
    pub low: f64,
    pub high: f64,
    pub degenerate: bool,
}

/// Affine map of the strategy's range onto 0..=255 with round-half-up and
/// clamping. A percentile range that collapses falls back to min..max; a
/// constant plane maps to 0 and is flagged degenerate.
pub fn normalize_u8(plane: &[f64], strategy: Normalization) -> (Vec<u8>, NormRecord) {
    let mut sorted = plane.to_vec();
    sorted.sort_by(f64::total_cmp);
    let min = sorted.first().copied().unwrap_or(0.0);
    let max = sorted.last().copied().unwrap_or(0.0);
    let (mut lo, mut hi) = match strategy {
        Normalization::GlobalMinmax => (min, max),
        Normalization::Percentile { low, high } => (percentile(&sorted, low), percentile(&sorted, high)),
    };
    if hi <= lo {
        lo = min;
        hi = max;
    }
    if hi <= lo || !(hi - lo).is_finite() {
        return (
            vec![0; plane.len()],
            NormRecord {
                low: lo,
                high: hi,
                degenerate: true,
            },
        );
    }
    let span = hi - lo;
    let out = plane
        .iter()
        .map(|&v| {
            let t = ((v - lo) / span).clamp(0.0, 1.0);
            (t * 255.0 + 0.5).floor().min(255.0) as u8
        })
        .collect();
    (
        out,
        NormRecord {
            low: lo,
            high: hi,
            degenerate: false,
        },
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum ChannelSource {
    Window(BandWindow),
    Component { index: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RenderConfig {
    #[serde(default = "default_half_width")]
    pub half_width: f64,
    #[serde(default)]
    pub normalization: Normalization,
}

fn default_half_width() -> f64 {
    DEFAULT_HALF_WIDTH
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self {
            half_width: DEFAULT_HALF_WIDTH,
            normalization: Normalization::default(),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub enum RenderSource<'a> {
    Selection(&'a SelectionResult),
    Pca(&'a PcaModel),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PseudoRgbImage {
    pub width: usize,
    pub height: usize,
    /// R, G, B planes, row-major.
    pub planes: [Vec<u8>; 3],
    pub provenance: [ChannelSource; 3],
    pub normalization: [NormRecord; 3],
}

/// Sidecar describing how each channel of a rendering was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderSidecar {
    pub width: usize,
    pub height: usize,
    pub config: RenderConfig,
    pub channels: Vec<SidecarChannel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SidecarChannel {
    pub channel: String,
    pub provenance: ChannelSource,
    pub normalization: NormRecord,
}

impl PseudoRgbImage {
    /// Binary PPM (P6), 8 bits per sample.
    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.reserve(self.width * self.height * 3);
        for i in 0..self.width * self.height {
            out.extend([self.planes[0][i], self.planes[1][i], self.planes[2][i]]);
        }
        out
    }

    pub fn sidecar(&self, config: &RenderConfig) -> RenderSidecar {
        RenderSidecar {
            width: self.width,
            height: self.height,
            config: config.clone(),
            channels: ["R", "G", "B"]
                .iter()
                .enumerate()
                .map(|(i, name)| SidecarChannel {
                    channel: (*name).into(),
                    provenance: self.provenance[i].clone(),
                    normalization: self.normalization[i],
                })
                .collect(),
        }
    }
}

/// Decode a binary PPM into `(width, height, interleaved RGB)`.
pub fn read_ppm(bytes: &[u8]) -> Result<(usize, usize, Vec<u8>)> {
    let (width, height, offset) = parse_pnm_header(bytes, b"P6")?;
    let count = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(3))
        .ok_or(Error::DimensionOverflow { width, height })?;
    if bytes.len() - offset < count {
        return Err(Error::DimensionOverflow { width, height });
    }
    Ok((width, height, bytes[offset..offset + count].to_vec()))
}

pub fn render_pseudo_rgb(cube: &Hypercube, source: RenderSource<'_>, cfg: &RenderConfig) -> Result<PseudoRgbImage> {
    let (planes, provenance): (Vec<Vec<f64>>, Vec<ChannelSource>) = match source {
        RenderSource::Selection(sel) => {
            if sel.chosen.len() != 3 {
                return Err(Error::InvalidConfig(format!(
                    "a selection-sourced rendering needs 3 chosen bands, got {}",
                    sel.chosen.len()
                )));
            }
            if let Some(c) = sel.chosen.iter().find(|c| c.band >= cube.bands()) {
                return Err(Error::BandMismatch {
                    expected: c.band + 1,
                    actual: cube.bands(),
                });
            }
            let mut cwls: Vec<f64> = sel.chosen.iter().map(|c| c.cwl_nm).collect();
            cwls.sort_by(|a, b| b.total_cmp(a));
            let mut planes = Vec::with_capacity(3);
            let mut provenance = Vec::with_capacity(3);
            for cwl in cwls {
                let window = window_bands(cube.wavelengths(), cwl, cfg.half_width)?;
                planes.push(integrate_window(cube, &window)?.data);
                provenance.push(ChannelSource::Window(window));
            }
            (planes, provenance)
        }
        RenderSource::Pca(model) => {
            if model.k() < 3 {
                return Err(Error::InvalidConfig(format!(
                    "a PCA-sourced rendering needs 3 components, got {}",
                    model.k()
                )));
            }
            let img = project(cube, model)?;
            (
                (0..3).map(|c| img.channel(c)).collect(),
                (0..3).map(|index| ChannelSource::Component { index }).collect(),
            )
        }
    };
    let mut out_planes: [Vec<u8>; 3] = Default::default();
    let mut records = [NormRecord {
        low: 0.0,
        high: 0.0,
        degenerate: true,
    }; 3];
    for (i, plane) in planes.iter().enumerate() {
        let (bytes, rec) = normalize_u8(plane, cfg.normalization);
        out_planes[i] = bytes;
        records[i] = rec;
    }
    let provenance: [ChannelSource; 3] = provenance.try_into().expect("three channels");
    Ok(PseudoRgbImage {
        width: cube.width(),
        height: cube.height(),
        planes: out_planes,
        provenance,
        normalization: records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cube_io::CubeHeader;
    use crate::pca::fit_pca;
    use crate::rng::Stream;
    use crate::selection::{ChosenBand, SelectionConfig};
    use proptest::prelude::*;

    fn uniform_grid() -> Vec<f64> {
        (0..128).map(|i| 450.0 + i as f64 * 500.0 / 127.0).collect()
    }

    #[test]
    fn window_on_uniform_grid() {
        let grid = uniform_grid();
        // Oracle: lambda_i = 450 + i * 500 / 127 within [470, 524].
        let oracle: Vec<usize> = (0..128)
            .filter(|&i| {
                let l = 450.0 + i as f64 * 500.0 / 127.0;
                (470.0..=524.0).contains(&l)
            })
            .collect();
        let w = window_bands(&grid, 497.0, 27.0).unwrap();
        assert_eq!(w.band_indices, oracle);
        assert_eq!(w.band_indices, (6..=18).collect::<Vec<_>>());
        assert!((grid[6] - 473.6).abs() < 0.1 && (grid[18] - 520.9).abs() < 0.1);
        assert_eq!(window_bands(&grid, 450.0, 0.0).unwrap().band_indices, vec![0]);
        assert!(matches!(
            window_bands(&grid, 2000.0, 27.0),
            Err(Error::EmptyWindow { .. })
        ));
    }

    fn cube(width: usize, height: usize, wl: Vec<f64>, data: Vec<f32>) -> Hypercube {
        Hypercube::from_parts(CubeHeader::new(height, width, wl).unwrap(), data).unwrap()
    }

    #[test]
    fn integrate_examples() {
        let c = cube(1, 1, vec![500.0, 510.0], vec![0.2, 0.4]);
        let single = BandWindow {
            cwl: 500.0,
            half_width: 0.0,
            band_indices: vec![1],
        };
        assert_eq!(integrate_window(&c, &single).unwrap().data, vec![0.4f32 as f64]);
        let both = window_bands(c.wavelengths(), 505.0, 5.0).unwrap();
        let v = integrate_window(&c, &both).unwrap().data[0];
        assert!((v - 0.3).abs() < 1e-7);
        let bad = BandWindow {
            cwl: 500.0,
            half_width: 0.0,
            band_indices: vec![5],
        };
        assert!(matches!(
            integrate_window(&c, &bad),
            Err(Error::IndexOutOfRange { index: 5, .. })
        ));
    }

    #[test]
    fn thirteen_band_window_matches_loop() {
        let grid = uniform_grid();
        let mut s = Stream::new(2);
        let data: Vec<f32> = (0..3 * 2 * 128).map(|_| s.unit() as f32).collect();
        let c = cube(3, 2, grid.clone(), data);
        let w = window_bands(&grid, 497.0, 27.0).unwrap();
        let plane = integrate_window(&c, &w).unwrap();
        for y in 0..2 {
            for x in 0..3 {
                let mut acc = 0.0;
                for b in 6..=18 {
                    acc += c.get(y, x, b) as f64;
                }
                assert!((plane.data[y * 3 + x] - acc / 13.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn normalize_examples() {
        let (out, rec) = normalize_u8(&[0.0, 0.5, 1.0], Normalization::GlobalMinmax);
        assert_eq!(out, vec![0, 128, 255]);
        assert!(!rec.degenerate);
        let (out, rec) = normalize_u8(&[0.3; 4], Normalization::default());
        assert_eq!(out, vec![0; 4]);
        assert!(rec.degenerate);
    }

    #[test]
    fn percentile_normalization_clamps_outliers() {
        // 99 interior values 1..=99 and one outlier at 100x the median.
        let mut plane: Vec<f64> = (1..=99).map(|v| v as f64).collect();
        plane.push(5000.0);
        let (out, rec) = normalize_u8(&plane, Normalization::default());
        // Hand-computed percentiles on the sorted 100 values (linear interp).
        // p1 sits at rank 0.99 (between 1 and 2), p99 at rank 98.01
        // (between 99 and 5000).
        let lo = 1.0 + 0.99 * (2.0 - 1.0);
        let hi = 99.0 + 0.01 * (5000.0 - 99.0);
        assert!((rec.low - lo).abs() < 1e-9);
        assert!((rec.high - hi).abs() < 1e-9);
        assert_eq!(out[99], 255);
        for (i, &v) in plane[..99].iter().enumerate() {
            let t = ((v - rec.low) / (rec.high - rec.low)).clamp(0.0, 1.0);
            let want = (t * 255.0 + 0.5).floor() as u8;
            assert_eq!(out[i], want);
        }
        // Interior keeps its spread instead of collapsing to the bottom.
        let distinct: std::collections::BTreeSet<u8> = out[..99].iter().copied().collect();
        assert!(distinct.len() >= 95);
    }

    fn selection(cwls: [f64; 3], grid: &[f64]) -> SelectionResult {
        let chosen = cwls
            .iter()
            .map(|&cwl| {
                let band = grid.iter().position(|&w| (w - cwl).abs() < 2.0).unwrap();
                ChosenBand {
                    band,
                    cwl_nm: cwl,
                    criterion_bits: 0.0,
                }
            })
            .collect();
        SelectionResult {
            chosen,
            pruned: vec![],
            config: SelectionConfig::default(),
            seed: 0,
            exhausted: false,
            sample_rows: 0,
        }
    }

    #[test]
    fn selection_render_orders_channels_by_wavelength() {
        let grid = uniform_grid();
        let mut s = Stream::new(3);
        let data: Vec<f32> = (0..4 * 4 * 128).map(|_| s.unit() as f32).collect();
        let c = cube(4, 4, grid.clone(), data);
        let sel = selection([497.0, 895.0, 607.0], &grid);
        let img = render_pseudo_rgb(&c, RenderSource::Selection(&sel), &RenderConfig::default()).unwrap();
        let cwls: Vec<f64> = img
            .provenance
            .iter()
            .map(|p| match p {
                ChannelSource::Window(w) => w.cwl,
                _ => panic!("window expected"),
            })
            .collect();
        assert_eq!(cwls, vec![895.0, 607.0, 497.0]);
        let again = render_pseudo_rgb(&c, RenderSource::Selection(&sel), &RenderConfig::default()).unwrap();
        assert_eq!(img.to_ppm(), again.to_ppm());
        let (w, h, rgb) = read_ppm(&img.to_ppm()).unwrap();
        assert_eq!((w, h, rgb.len()), (4, 4, 48));
        assert_eq!(rgb[0], img.planes[0][0]);
        assert_eq!(rgb[1], img.planes[1][0]);
    }

    #[test]
    fn pca_render_of_rank_one_cube() {
        let grid: Vec<f64> = (0..6).map(|i| 500.0 + 20.0 * i as f64).collect();
        let shape = [0.1, 0.4, 0.2, 0.9, 0.5, 0.3];
        let mut data = Vec::new();
        for p in 0..25 {
            let a = (p as f32) / 24.0;
            data.extend(shape.iter().map(|&v| v * a));
        }
        let c = cube(5, 5, grid, data);
        let rows: Vec<Vec<f64>> = c.pixels().map(|p| p.iter().map(|&v| v as f64).collect()).collect();
        let model = fit_pca(&crate::cube_io::PixelMatrix::from_rows(&rows).unwrap(), 3, false).unwrap();
        assert!(model.rank_deficient);
        let img = render_pseudo_rgb(&c, RenderSource::Pca(&model), &RenderConfig::default()).unwrap();
        assert!(!img.normalization[0].degenerate);
        assert!(img.normalization[1].degenerate && img.normalization[2].degenerate);
        let first: std::collections::BTreeSet<u8> = img.planes[0].iter().copied().collect();
        assert!(first.len() > 2);
    }

    #[test]
    fn selection_render_rejects_wrong_shapes() {
        let grid = uniform_grid();
        let c = cube(1, 1, grid[..10].to_vec(), vec![0.5; 10]);
        let sel = selection([497.0, 895.0, 607.0], &grid);
        assert!(matches!(
            render_pseudo_rgb(&c, RenderSource::Selection(&sel), &RenderConfig::default()),
            Err(Error::BandMismatch { .. })
        ));
    }

    proptest! {
        #[test]
        fn normalization_is_monotone(seed in any::<u64>(), n in 2usize..200) {
            let mut s = Stream::new(seed);
            let plane: Vec<f64> = (0..n).map(|_| s.normal()).collect();
            for strategy in [Normalization::GlobalMinmax, Normalization::default()] {
                let (out, _) = normalize_u8(&plane, strategy);
                for i in 0..n {
                    for j in 0..n {
                        if plane[i] < plane[j] {
                            prop_assert!(out[i] <= out[j]);
                        }
                    }
                }
            }
        }

        #[test]
        fn window_mean_is_linear_and_order_free(seed in any::<u64>(), a in -2.0f64..2.0) {
            let mut s = Stream::new(seed);
            let wl: Vec<f64> = (0..5).map(|i| 500.0 + i as f64).collect();
            let d1: Vec<f32> = (0..20).map(|_| s.unit() as f32).collect();
            let d2: Vec<f32> = (0..20).map(|_| s.unit() as f32).collect();
            let mix: Vec<f32> = d1.iter().zip(&d2).map(|(x, y)| (a as f32) * x + y).collect();
            let (c1, c2, cm) = (cube(2, 2, wl.clone(), d1), cube(2, 2, wl.clone(), d2), cube(2, 2, wl, mix));
            let fwd = BandWindow { cwl: 502.0, half_width: 2.0, band_indices: vec![0, 1, 2, 3, 4] };
            let rev = BandWindow { band_indices: vec![4, 3, 2, 1, 0], ..fwd.clone() };
            let p1 = integrate_window(&c1, &fwd).unwrap().data;
            let p2 = integrate_window(&c2, &fwd).unwrap().data;
            let pm = integrate_window(&cm, &fwd).unwrap().data;
            let pr = integrate_window(&c1, &rev).unwrap().data;
            for i in 0..4 {
                prop_assert!((pm[i] - (a * p1[i] + p2[i])).abs() < 1e-5);
                prop_assert!((pr[i] - p1[i]).abs() < 1e-12);
            }
        }
    }
}
