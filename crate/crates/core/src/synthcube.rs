//! Synthetic scenes with analytic material spectra.
//!
//! Each material's reflectance is a baseline plus Gaussian bumps, clamped to
//! `[0, 1]`. A scene assigns materials to pixels by a simple layout and adds
//! white Gaussian noise from per-row streams, so the output does not depend
//! on how rows are scheduled across threads.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cube_io::{CubeHeader, Hypercube, LabelMask, IGNORE_LABEL};
use crate::error::{Error, Result};
use crate::rng::Stream;

/// How far outside the grid a bump center may sit, in nm.
pub const CENTER_MARGIN_NM: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bump {
    pub center: f64,
    pub width: f64,
    pub amplitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialSpectrum {
    #[serde(default)]
    pub name: String,
    pub baseline: f64,
    #[serde(default)]
    pub bumps: Vec<Bump>,
}

impl MaterialSpectrum {
    pub fn reflectance(&self, wavelength: f64) -> f64 {
        let sum: f64 = self
            .bumps
            .iter()
            .map(|b| {
                let d = wavelength - b.center;
                b.amplitude * (-d * d / (2.0 * b.width * b.width)).exp()
            })
            .sum();
        (self.baseline + sum).clamp(0.0, 1.0)
    }

    pub fn sample(&self, grid: &[f64]) -> Vec<f64> {
        grid.iter().map(|&w| self.reflectance(w)).collect()
    }

    fn validate(&self, grid: &[f64]) -> Result<()> {
        if !self.baseline.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "material `{}`: non-finite baseline",
                self.name
            )));
        }
        let (lo, hi) = (grid[0] - CENTER_MARGIN_NM, grid[grid.len() - 1] + CENTER_MARGIN_NM);
        for b in &self.bumps {
            if !(b.width > 0.0 && b.width.is_finite() && b.amplitude.is_finite()) {
                return Err(Error::InvalidConfig(format!(
                    "material `{}`: bump width must be positive and finite",
                    self.name
                )));
            }
            if !(lo..=hi).contains(&b.center) {
                return Err(Error::InvalidConfig(format!(
                    "material `{}`: bump center {} nm outside {lo}..{hi} nm",
                    self.name, b.center
                )));
            }
        }
        Ok(())
    }
}

pub fn gaussian_reflectance(bumps: &[Bump], baseline: f64) -> MaterialSpectrum {
    MaterialSpectrum {
        name: String::new(),
        baseline,
        bumps: bumps.to_vec(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneMaterial {
    pub class_id: u8,
    pub spectrum: MaterialSpectrum,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    /// Equal-width vertical stripes, one per material, in list order.
    #[default]
    Stripes,
    /// Nearest-seed cells; seeds are placed from the scene seed and assigned
    /// to materials round-robin.
    Blobs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    /// Band center wavelengths in nm.
    pub grid: Vec<f64>,
    pub materials: Vec<SceneMaterial>,
    #[serde(default)]
    pub layout: Layout,
    pub noise_sigma: f64,
    pub seed: u64,
}

/// `n` evenly spaced wavelengths from `lo` to `hi` inclusive.
pub fn uniform_grid(n: usize, lo: f64, hi: f64) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let step = (hi - lo) / (n - 1) as f64;
    (0..n).map(|i| lo + i as f64 * step).collect()
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidConfig("scene width and height must be positive".into()));
        }
        CubeHeader::new(self.height, self.width, self.grid.clone())
            .map_err(|e| Error::InvalidConfig(format!("scene grid: {e}")))?;
        if self.materials.len() < 2 {
            return Err(Error::InvalidConfig("a scene needs at least 2 materials".into()));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::InvalidConfig("noise_sigma must be finite and >= 0".into()));
        }
        if self.layout == Layout::Stripes && self.width < self.materials.len() {
            return Err(Error::InvalidConfig(
                "stripes layout needs width >= number of materials".into(),
            ));
        }
        for m in &self.materials {
            if m.class_id == IGNORE_LABEL {
                return Err(Error::InvalidConfig("class id 255 is reserved".into()));
            }
            m.spectrum.validate(&self.grid)?;
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scene serializes")
    }

    /// Material index for every pixel, row-major.
    pub fn material_map(&self) -> Vec<usize> {
        let m = self.materials.len();
        match self.layout {
            Layout::Stripes => (0..self.height)
                .flat_map(|_| (0..self.width).map(move |x| x * m / self.width))
                .collect(),
            Layout::Blobs => {
                let mut rng = Stream::new(self.seed);
                let seeds: Vec<(f64, f64)> = (0..4 * m)
                    .map(|_| (rng.unit() * self.height as f64, rng.unit() * self.width as f64))
                    .collect();
                let mut map = Vec::with_capacity(self.width * self.height);
                for y in 0..self.height {
                    for x in 0..self.width {
                        let (py, px) = (y as f64 + 0.5, x as f64 + 0.5);
                        let nearest = seeds
                            .iter()
                            .map(|&(sy, sx)| (py - sy).powi(2) + (px - sx).powi(2))
                            .enumerate()
                            .min_by(|a, b| a.1.total_cmp(&b.1))
                            .map(|(i, _)| i)
                            .unwrap_or(0);
                        map.push(nearest % m);
                    }
                }
                map
            }
        }
    }
}

/// Render the cube and its class mask.
pub fn render_scene(spec: &SceneSpec) -> Result<(Hypercube, LabelMask)> {
    spec.validate()?;
    let bands = spec.grid.len();
    let spectra: Vec<Vec<f64>> = spec.materials.iter().map(|m| m.spectrum.sample(&spec.grid)).collect();
    let map = spec.material_map();
    let row_len = spec.width * bands;
    let mut data = vec![0f32; spec.height * row_len];
    data.par_chunks_mut(row_len).enumerate().for_each(|(y, row)| {
        let mut rng = Stream::substream(spec.seed, y as u64);
        for (x, px) in row.chunks_exact_mut(bands).enumerate() {
            let s = &spectra[map[y * spec.width + x]];
            for (v, &r) in px.iter_mut().zip(s) {
                let noisy = if spec.noise_sigma > 0.0 {
                    r + spec.noise_sigma * rng.normal()
                } else {
                    r
                };
                *v = noisy.clamp(0.0, 1.0) as f32;
            }
        }
    });
    let labels = map.iter().map(|&i| spec.materials[i].class_id).collect();
    let header = CubeHeader::new(spec.height, spec.width, spec.grid.clone())?;
    Ok((
        Hypercube::from_parts(header, data)?,
        LabelMask::new(spec.width, spec.height, labels)?,
    ))
}

/// The 128-band, 450-950 nm grid used by the presets.
pub fn default_grid() -> Vec<f64> {
    uniform_grid(128, 450.0, 950.0)
}

fn bump_at(center: f64, amplitude: f64) -> Bump {
    Bump {
        center,
        width: 1.5,
        amplitude,
    }
}

/// One material per planted band; material `i` differs from the common
/// baseline only by a narrow bump centered exactly on band `planted[i]`.
pub fn planted_scene(planted: &[usize], width: usize, height: usize, noise_sigma: f64, seed: u64) -> SceneSpec {
    let grid = default_grid();
    let materials = planted
        .iter()
        .enumerate()
        .map(|(i, &b)| SceneMaterial {
            class_id: i as u8,
            spectrum: MaterialSpectrum {
                name: format!("planted_{b}"),
                baseline: 0.4,
                bumps: vec![bump_at(grid[b], 0.3)],
            },
        })
        .collect();
    SceneSpec {
        width,
        height,
        grid,
        materials,
        layout: Layout::Stripes,
        noise_sigma,
        seed,
    }
}

/// Two materials sharing a broad visible-range spectrum and differing only
/// by a bump at `nir_nm`.
pub fn metameric_scene(nir_nm: f64, width: usize, height: usize, noise_sigma: f64, seed: u64) -> SceneSpec {
    let common = vec![
        Bump {
            center: 550.0,
            width: 40.0,
            amplitude: 0.3,
        },
        Bump {
            center: 650.0,
            width: 60.0,
            amplitude: 0.15,
        },
    ];
    let mut with_nir = common.clone();
    with_nir.push(Bump {
        center: nir_nm,
        width: 10.0,
        amplitude: 0.3,
    });
    let material = |class_id, name: &str, bumps| SceneMaterial {
        class_id,
        spectrum: MaterialSpectrum {
            name: name.into(),
            baseline: 0.2,
            bumps,
        },
    };
    SceneSpec {
        width,
        height,
        grid: default_grid(),
        materials: vec![material(0, "plain", common), material(1, "nir_peak", with_nir)],
        layout: Layout::Stripes,
        noise_sigma,
        seed,
    }
}

/// Three classes over six materials where band `b` alone carries no class
/// information but resolves the classes jointly with band `a`.
///
/// Level pairs (a, b) per class: 0 → (lo, lo), (mid, hi); 1 → (lo, hi),
/// (mid, lo); 2 → (hi, lo), (hi, hi).
pub fn xor_scene(a: usize, b: usize, width: usize, height: usize, noise_sigma: f64, seed: u64) -> SceneSpec {
    let grid = default_grid();
    let cells: [(u8, f64, f64); 6] = [
        (0, 0.0, 0.0),
        (0, 0.2, 0.3),
        (1, 0.0, 0.3),
        (1, 0.2, 0.0),
        (2, 0.4, 0.0),
        (2, 0.4, 0.3),
    ];
    let materials = cells
        .iter()
        .enumerate()
        .map(|(i, &(class_id, da, db))| SceneMaterial {
            class_id,
            spectrum: MaterialSpectrum {
                name: format!("xor_{i}"),
                baseline: 0.3,
                bumps: vec![bump_at(grid[a], da), bump_at(grid[b], db)],
            },
        })
        .collect();
    SceneSpec {
        width,
        height,
        grid,
        materials,
        layout: Layout::Stripes,
        noise_sigma,
        seed,
    }
}
