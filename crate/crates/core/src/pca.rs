//! Principal components of sampled spectra, and projection of whole cubes.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::cube_io::{Hypercube, PixelMatrix};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// `k` rows of length `B`, orthonormal except for zero-padded rows.
    pub components: Vec<Vec<f64>>,
    /// Eigenvalues (population variance) of each component, descending.
    pub explained_variance: Vec<f64>,
    pub sample_count: usize,
    /// Per-band standard deviations when the fit was standardized.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<Vec<f64>>,
    /// Fewer than `k` positive eigenvalues; trailing components are zero.
    #[serde(default)]
    pub rank_deficient: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples_per_cube: Option<usize>,
}

impl PcaModel {
    pub fn bands(&self) -> usize {
        self.mean.len()
    }

    pub fn k(&self) -> usize {
        self.components.len()
    }

    /// Component scores of one spectrum.
    pub fn project_pixel<I: IntoIterator<Item = f64>>(&self, spectrum: I) -> Vec<f64> {
        let centered: Vec<f64> = spectrum
            .into_iter()
            .zip(&self.mean)
            .enumerate()
            .map(|(b, (x, m))| {
                let d = x - m;
                match &self.scale {
                    Some(s) if s[b] > 0.0 => d / s[b],
                    _ => d,
                }
            })
            .collect();
        self.components
            .iter()
            .map(|row| row.iter().zip(&centered).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("pca model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Population covariance of the rows of `pixels` (optionally of the
/// standardized rows), with the column means and scales used.
pub fn covariance(pixels: &PixelMatrix, standardize: bool) -> (Vec<f64>, Option<Vec<f64>>, DMatrix<f64>) {
    let (n, b) = (pixels.rows, pixels.cols);
    let mut mean = vec![0.0; b];
    for i in 0..n {
        for (m, v) in mean.iter_mut().zip(pixels.row(i)) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut cov = DMatrix::<f64>::zeros(b, b);
    let mut centered = vec![0.0; b];
    for i in 0..n {
        for (c, (v, m)) in centered.iter_mut().zip(pixels.row(i).iter().zip(&mean)) {
            *c = v - m;
        }
        for j in 0..b {
            let cj = centered[j];
            for k in j..b {
                cov[(j, k)] += cj * centered[k];
            }
        }
    }
    for j in 0..b {
        for k in j..b {
            let v = cov[(j, k)] / n as f64;
            cov[(j, k)] = v;
            cov[(k, j)] = v;
        }
    }
    if !standardize {
        return (mean, None, cov);
    }
    let scale: Vec<f64> = (0..b).map(|j| cov[(j, j)].sqrt()).collect();
    for j in 0..b {
        for k in 0..b {
            let s = scale[j] * scale[k];
            cov[(j, k)] = if s > 0.0 { cov[(j, k)] / s } else { 0.0 };
        }
    }
    (mean, Some(scale), cov)
}

/// Flip `v` so its largest-magnitude entry (first one on ties) is positive.
fn orient(v: &mut [f64]) {
    let mut pivot = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[pivot].abs() {
            pivot = i;
        }
    }
    if v[pivot] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Fit the leading `k` principal components of `pixels`.
pub fn fit_pca(pixels: &PixelMatrix, k: usize, standardize: bool) -> Result<PcaModel> {
    if k == 0 {
        return Err(Error::InvalidConfig("k must be >= 1".into()));
    }
    if pixels.rows <= k {
        return Err(Error::TooFewRows {
            needed: k + 1,
            actual: pixels.rows,
        });
    }
    if pixels.cols < k {
        return Err(Error::BandMismatch {
            expected: k,
            actual: pixels.cols,
        });
    }
    let b = pixels.cols;
    let (mean, scale, cov) = covariance(pixels, standardize);
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..b).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]).then(i.cmp(&j)));

    let top = eig.eigenvalues[order[0]].max(0.0);
    let tol = top * b as f64 * f64::EPSILON * 16.0;
    let mut components = Vec::with_capacity(k);
    let mut explained = Vec::with_capacity(k);
    let mut rank_deficient = false;
    for &idx in order.iter().take(k) {
        let lambda = eig.eigenvalues[idx];
        if lambda > tol && lambda > 0.0 {
            let mut v: Vec<f64> = eig.eigenvectors.column(idx).iter().copied().collect();
            orient(&mut v);
            components.push(v);
            explained.push(lambda);
        } else {
            rank_deficient = true;
            components.push(vec![0.0; b]);
            explained.push(0.0);
        }
    }
    Ok(PcaModel {
        mean,
        components,
        explained_variance: explained,
        sample_count: pixels.rows,
        scale,
        rank_deficient,
        seed: None,
        samples_per_cube: None,
    })
}

/// Multi-channel float raster, pixel-interleaved.
#[derive(Debug, Clone, PartialEq)]
pub struct FloatImage {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl FloatImage {
    pub fn get(&self, y: usize, x: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    /// One channel as a row-major plane.
    pub fn channel(&self, c: usize) -> Vec<f64> {
        self.data.iter().skip(c).step_by(self.channels).copied().collect()
    }
}

/// Scores of every pixel; channel `c` holds component `c`.
pub fn project(cube: &Hypercube, model: &PcaModel) -> Result<FloatImage> {
    if cube.bands() != model.bands() {
        return Err(Error::BandMismatch {
            expected: model.bands(),
            actual: cube.bands(),
        });
    }
    let data = cube
        .pixels()
        .flat_map(|px| model.project_pixel(px.iter().map(|&v| v as f64)))
        .collect();
    Ok(FloatImage {
        width: cube.width(),
        height: cube.height(),
        channels: model.k(),
        data,
    })
}
