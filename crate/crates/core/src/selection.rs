//! Band selection: CSNR prefilter, then greedy joint mutual information
//! maximisation with inter-band correlation pruning.
//!
//! The stages run in a fixed order:
//!
//! 1. every band gets an aggregate CSNR (max over class pairs) and the
//!    `prefilter_top` best bands form the candidate pool;
//! 2. the first band is the candidate with the highest `I(f; C)`;
//! 3. each further band maximises `min_s I((f, s); C)` over the bands `s`
//!    already chosen, after dropping candidates whose `|rho|` with a chosen
//!    band exceeds `corr_max`.
//!
//! Ties go to the lower band index at every stage.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bandstats::{
    band_correlation, band_score_table, discretize, joint_mutual_information, mutual_information, BandScoreTable,
    CorrelationMatrix, DiscreteColumn,
};
use crate::cube_io::{DatasetManifest, Hypercube, LabelMask, PixelMatrix, Split, IGNORE_LABEL};
use crate::error::{Error, Result};
use crate::rng::Stream;

fn default_k() -> usize {
    3
}
fn default_prefilter_top() -> usize {
    32
}
fn default_corr_max() -> f64 {
    0.95
}
fn default_bins_marginal() -> usize {
    64
}
fn default_bins_joint() -> usize {
    16
}
fn default_clip() -> (f64, f64) {
    (1.0, 99.0)
}
fn default_samples_per_cube() -> usize {
    500
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectionConfig {
    #[serde(default = "default_k")]
    pub k: usize,
    /// Candidate pool size after the CSNR prefilter. Values above the band
    /// count keep every band.
    #[serde(default = "default_prefilter_top")]
    pub prefilter_top: usize,
    #[serde(default = "default_corr_max")]
    pub corr_max: f64,
    #[serde(default = "default_bins_marginal")]
    pub bins_marginal: usize,
    #[serde(default = "default_bins_joint")]
    pub bins_joint: usize,
    /// Percentile range used for the MI histograms.
    #[serde(default = "default_clip")]
    pub clip: (f64, f64),
    /// Restrict CSNR contrast to pairs involving these classes.
    #[serde(default)]
    pub target_classes: Option<Vec<u8>>,
    #[serde(default = "default_samples_per_cube")]
    pub samples_per_cube: usize,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            k: default_k(),
            prefilter_top: default_prefilter_top(),
            corr_max: default_corr_max(),
            bins_marginal: default_bins_marginal(),
            bins_joint: default_bins_joint(),
            clip: default_clip(),
            target_classes: None,
            samples_per_cube: default_samples_per_cube(),
        }
    }
}

impl SelectionConfig {
    /// Parse and validate; unknown keys are rejected.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.k == 0 {
            return bad("k must be >= 1".into());
        }
        if self.prefilter_top < self.k {
            return bad(format!(
                "prefilter_top ({}) must be >= k ({})",
                self.prefilter_top, self.k
            ));
        }
        if !(self.corr_max > 0.0 && self.corr_max <= 1.0) {
            return bad(format!("corr_max must be in (0, 1], got {}", self.corr_max));
        }
        if self.bins_marginal < 2 || self.bins_joint < 2 {
            return bad("histogram bins must be >= 2".into());
        }
        let (lo, hi) = self.clip;
        if !(0.0..100.0).contains(&lo) || hi <= lo || hi > 100.0 {
            return bad(format!("clip must satisfy 0 <= low < high <= 100, got ({lo}, {hi})"));
        }
        if self.samples_per_cube == 0 {
            return bad("samples_per_cube must be >= 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PruneReason {
    LowCsnr,
    HighCorrelation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChosenBand {
    pub band: usize,
    pub cwl_nm: f64,
    /// Marginal MI for the first band, min joint MI afterwards.
    pub criterion_bits: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrunedBand {
    pub band: usize,
    pub reason: PruneReason,
    /// For correlation pruning, the chosen band it correlated with.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub against: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub chosen: Vec<ChosenBand>,
    pub pruned: Vec<PrunedBand>,
    pub config: SelectionConfig,
    pub seed: u64,
    /// Set when the pool ran out before `k` bands were chosen.
    #[serde(default)]
    pub exhausted: bool,
    /// Labelled rows the selection was computed from.
    #[serde(default)]
    pub sample_rows: usize,
}

impl SelectionResult {
    pub fn bands(&self) -> Vec<usize> {
        self.chosen.iter().map(|c| c.band).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("selection serializes")
    }
}

/// The `top` bands with the highest aggregate CSNR, best first.
pub fn csnr_prefilter(scores: &BandScoreTable, top: usize) -> Result<Vec<usize>> {
    if scores.rows.is_empty() {
        return Err(Error::EmptyScoreTable);
    }
    if top == 0 {
        return Err(Error::InvalidConfig("prefilter size must be >= 1".into()));
    }
    let mut order: Vec<(usize, f64)> = scores.rows.iter().map(|r| (r.band_index, r.csnr)).collect();
    order.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(order.into_iter().take(top).map(|(band, _)| band).collect())
}

/// Index of the best score; ties resolve to the lower band.
fn argmax(scored: &[(usize, f64)]) -> Option<(usize, f64)> {
    scored.iter().copied().fold(None, |best, (band, v)| match best {
        Some((bb, bv)) if bv > v || (bv == v && bb < band) => Some((bb, bv)),
        _ => Some((band, v)),
    })
}

/// Greedy JMIM over `candidates` using labelled pixel rows.
pub fn jmim_select(
    candidates: &[usize],
    data: &PixelMatrix,
    labels: &[u8],
    wavelengths: &[f64],
    cfg: &SelectionConfig,
    corr: &CorrelationMatrix,
) -> Result<SelectionResult> {
    cfg.validate()?;
    if labels.len() != data.rows {
        return Err(Error::LengthMismatch(data.rows, labels.len()));
    }
    if wavelengths.len() != data.cols || corr.bands != data.cols {
        return Err(Error::BandMismatch {
            expected: data.cols,
            actual: wavelengths.len().min(corr.bands),
        });
    }
    if let Some(&band) = candidates.iter().find(|&&b| b >= data.cols) {
        return Err(Error::IndexOutOfRange {
            index: band,
            bands: data.cols,
        });
    }
    let mut remaining: Vec<usize> = candidates.to_vec();
    remaining.sort_unstable();
    remaining.dedup();

    let class_col = DiscreteColumn::from_labels(labels);
    let columns = |bins: usize| -> Result<BTreeMap<usize, DiscreteColumn>> {
        remaining
            .par_iter()
            .map(|&b| Ok((b, discretize(&data.column(b), bins, cfg.clip)?)))
            .collect()
    };
    let marginal = columns(cfg.bins_marginal)?;
    let joint = columns(cfg.bins_joint)?;

    let mut result = SelectionResult {
        chosen: Vec::new(),
        pruned: Vec::new(),
        config: cfg.clone(),
        seed: 0,
        exhausted: false,
        sample_rows: data.rows,
    };

    let first_scores: Vec<(usize, f64)> = remaining
        .par_iter()
        .map(|&b| Ok((b, mutual_information(&marginal[&b], &class_col)?)))
        .collect::<Result<_>>()?;
    let Some((first, first_mi)) = argmax(&first_scores) else {
        result.exhausted = true;
        return Ok(result);
    };
    result.chosen.push(ChosenBand {
        band: first,
        cwl_nm: wavelengths[first],
        criterion_bits: first_mi,
    });
    remaining.retain(|&b| b != first);

    // Running min of I((f, s); C) over the chosen s, per candidate.
    let mut worst: BTreeMap<usize, f64> = remaining.iter().map(|&b| (b, f64::INFINITY)).collect();
    while result.chosen.len() < cfg.k {
        let last = result.chosen.last().expect("at least one chosen").band;
        remaining.retain(|&f| {
            if corr.get(f, last).abs() > cfg.corr_max {
                result.pruned.push(PrunedBand {
                    band: f,
                    reason: PruneReason::HighCorrelation,
                    against: Some(last),
                });
                false
            } else {
                true
            }
        });
        if remaining.is_empty() {
            result.exhausted = true;
            break;
        }
        let fresh: Vec<(usize, f64)> = remaining
            .par_iter()
            .map(|&f| Ok((f, joint_mutual_information(&joint[&f], &joint[&last], &class_col)?)))
            .collect::<Result<_>>()?;
        for &(f, v) in &fresh {
            let w = worst.get_mut(&f).expect("tracked candidate");
            *w = w.min(v);
        }
        let scored: Vec<(usize, f64)> = remaining.iter().map(|&f| (f, worst[&f])).collect();
        let (band, value) = argmax(&scored).expect("non-empty pool");
        result.chosen.push(ChosenBand {
            band,
            cwl_nm: wavelengths[band],
            criterion_bits: value,
        });
        remaining.retain(|&b| b != band);
    }
    Ok(result)
}

/// Labelled pixel rows drawn from a set of cube/mask pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelledSamples {
    pub pixels: PixelMatrix,
    pub labels: Vec<u8>,
    pub wavelengths: Vec<f64>,
}

/// Incremental form of [`crate::cube_io::sample_pixels`] that also records
/// mask labels, so cubes can be dropped after they are sampled. Produces the
/// same draws as `sample_pixels` for the same cube sequence.
pub struct LabelledSampler {
    stream: Stream,
    n_per_cube: usize,
    cubes_seen: usize,
    values: Vec<f64>,
    provenance: Vec<(usize, usize, usize)>,
    labels: Vec<u8>,
    wavelengths: Option<Vec<f64>>,
}

impl LabelledSampler {
    pub fn new(n_per_cube: usize, seed: u64) -> Result<Self> {
        if n_per_cube == 0 {
            return Err(Error::InvalidConfig("samples per cube must be >= 1".into()));
        }
        Ok(Self {
            stream: Stream::new(seed),
            n_per_cube,
            cubes_seen: 0,
            values: Vec::new(),
            provenance: Vec::new(),
            labels: Vec::new(),
            wavelengths: None,
        })
    }

    pub fn add(&mut self, cube: &Hypercube, mask: &LabelMask) -> Result<()> {
        mask.matches_cube(cube)?;
        match &self.wavelengths {
            Some(wl) if wl.len() != cube.bands() => {
                return Err(Error::BandMismatch {
                    expected: wl.len(),
                    actual: cube.bands(),
                })
            }
            Some(_) => {}
            None => self.wavelengths = Some(cube.wavelengths().to_vec()),
        }
        let population = cube.width() * cube.height();
        let picks: Vec<usize> = if population >= self.n_per_cube {
            self.stream.sample_distinct(population, self.n_per_cube)
        } else {
            (0..self.n_per_cube)
                .map(|_| self.stream.below(population as u64) as usize)
                .collect()
        };
        for p in picks {
            self.values.extend(cube.pixel_at(p).iter().map(|&v| v as f64));
            self.provenance
                .push((self.cubes_seen, p % cube.width(), p / cube.width()));
            self.labels.push(mask.labels[p]);
        }
        self.cubes_seen += 1;
        Ok(())
    }

    /// Finish, dropping rows whose label is the ignore value.
    pub fn finish(self) -> Result<LabelledSamples> {
        let wavelengths = self.wavelengths.ok_or(Error::EmptyCubeList)?;
        let all = PixelMatrix {
            rows: self.provenance.len(),
            cols: wavelengths.len(),
            values: self.values,
            provenance: self.provenance,
        };
        let keep: Vec<bool> = self.labels.iter().map(|&l| l != IGNORE_LABEL).collect();
        let labels = self.labels.into_iter().filter(|&l| l != IGNORE_LABEL).collect();
        Ok(LabelledSamples {
            pixels: all.filter_rows(&keep),
            labels,
            wavelengths,
        })
    }
}

/// Score table of the prepared samples with the selection's histogram
/// settings.
pub fn score_samples(samples: &LabelledSamples, cfg: &SelectionConfig) -> Result<BandScoreTable> {
    band_score_table(
        &samples.pixels,
        &samples.labels,
        &samples.wavelengths,
        cfg.bins_marginal,
        cfg.clip,
        cfg.target_classes.as_deref(),
    )
}

/// Full pipeline on already-sampled rows.
pub fn select_from_samples(
    samples: &LabelledSamples,
    cfg: &SelectionConfig,
    seed: u64,
) -> Result<(SelectionResult, BandScoreTable)> {
    cfg.validate()?;
    if samples.pixels.rows < 2 {
        return Err(Error::TooFewRows {
            needed: 2,
            actual: samples.pixels.rows,
        });
    }
    let scores = score_samples(samples, cfg)?;
    let bands = samples.pixels.cols;
    let pool = csnr_prefilter(&scores, cfg.prefilter_top.min(bands))?;
    let corr = band_correlation(&samples.pixels)?;
    let mut result = jmim_select(
        &pool,
        &samples.pixels,
        &samples.labels,
        &samples.wavelengths,
        cfg,
        &corr,
    )?;
    let mut in_pool = vec![false; bands];
    for &b in &pool {
        in_pool[b] = true;
    }
    let low: Vec<PrunedBand> = (0..bands)
        .filter(|&b| !in_pool[b])
        .map(|band| PrunedBand {
            band,
            reason: PruneReason::LowCsnr,
            against: None,
        })
        .collect();
    result.pruned.splice(0..0, low);
    result.seed = seed;
    Ok((result, scores))
}

/// Select bands from in-memory cube/mask pairs.
pub fn select_bands_in_memory(
    scenes: &[(&Hypercube, &LabelMask)],
    cfg: &SelectionConfig,
    seed: u64,
) -> Result<SelectionResult> {
    cfg.validate()?;
    let mut sampler = LabelledSampler::new(cfg.samples_per_cube, seed)?;
    for (cube, mask) in scenes {
        sampler.add(cube, mask)?;
    }
    let samples = sampler.finish()?;
    Ok(select_from_samples(&samples, cfg, seed)?.0)
}

/// Sample the train split of a manifest, one cube in memory at a time.
pub fn sample_manifest(manifest: &DatasetManifest, samples_per_cube: usize, seed: u64) -> Result<LabelledSamples> {
    let mut sampler = LabelledSampler::new(samples_per_cube, seed)?;
    let mut any = false;
    for (i, _) in manifest.split(Split::Train) {
        let (cube, mask) = manifest.load_entry(i)?;
        sampler.add(&cube, &mask)?;
        any = true;
    }
    if !any {
        return Err(Error::EmptyCubeList);
    }
    sampler.finish()
}

/// Select bands from the train split of a manifest, seeded by the manifest.
pub fn select_bands(manifest: &DatasetManifest, cfg: &SelectionConfig) -> Result<SelectionResult> {
    cfg.validate()?;
    let samples = sample_manifest(manifest, cfg.samples_per_cube, manifest.seed)?;
    Ok(select_from_samples(&samples, cfg, manifest.seed)?.0)
}
