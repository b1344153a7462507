//! Per-class band statistics, contrast signal-to-noise ratio, inter-band
//! correlation and histogram (plug-in) mutual information.
//!
//! All variances are population variances. Mutual information is in bits.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::cube_io::{Hypercube, LabelMask, PixelMatrix, IGNORE_LABEL};
use crate::error::{Error, Result};

/// CSNR reported when both class variances are zero but the means differ.
pub const CSNR_CAP: f64 = 1e6;

/// Running count, mean and sum of squared deviations for one class over all
/// bands (Welford, merged with Chan et al.).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassAccumulator {
    pub count: u64,
    pub mean: Vec<f64>,
    pub m2: Vec<f64>,
}

impl ClassAccumulator {
    fn new(bands: usize) -> Self {
        Self {
            count: 0,
            mean: vec![0.0; bands],
            m2: vec![0.0; bands],
        }
    }

    fn push<I: IntoIterator<Item = f64>>(&mut self, spectrum: I) {
        self.count += 1;
        let n = self.count as f64;
        for ((mean, m2), x) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(spectrum) {
            let delta = x - *mean;
            *mean += delta / n;
            *m2 += delta * (x - *mean);
        }
    }

    fn merge(&mut self, other: &ClassAccumulator) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = other.clone();
            return;
        }
        let na = self.count as f64;
        let nb = other.count as f64;
        let n = na + nb;
        for b in 0..self.mean.len() {
            let delta = other.mean[b] - self.mean[b];
            self.mean[b] = (na * self.mean[b] + nb * other.mean[b]) / n;
            self.m2[b] += other.m2[b] + delta * delta * na * nb / n;
        }
        self.count += other.count;
    }

    pub fn variance(&self, band: usize) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.m2[band] / self.count as f64
        }
    }
}

/// Per-(class, band) moments. Ignore-labelled pixels never enter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassStats {
    bands: usize,
    classes: BTreeMap<u8, ClassAccumulator>,
}

impl ClassStats {
    pub fn new(bands: usize) -> Self {
        Self {
            bands,
            classes: BTreeMap::new(),
        }
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    /// Class IDs with at least one pixel, ascending.
    pub fn classes(&self) -> impl Iterator<Item = u8> + '_ {
        self.classes.keys().copied()
    }

    pub fn class(&self, class: u8) -> Option<&ClassAccumulator> {
        self.classes.get(&class)
    }

    pub fn push<I: IntoIterator<Item = f64>>(&mut self, class: u8, spectrum: I) {
        if class == IGNORE_LABEL {
            return;
        }
        let bands = self.bands;
        self.classes
            .entry(class)
            .or_insert_with(|| ClassAccumulator::new(bands))
            .push(spectrum);
    }

    pub fn merge(&mut self, other: &ClassStats) -> Result<()> {
        if other.bands != self.bands {
            return Err(Error::BandMismatch {
                expected: self.bands,
                actual: other.bands,
            });
        }
        for (&class, acc) in &other.classes {
            self.classes
                .entry(class)
                .or_insert_with(|| ClassAccumulator::new(other.bands))
                .merge(acc);
        }
        Ok(())
    }

    /// Accumulate one cube/mask pair.
    pub fn add_cube(&mut self, cube: &Hypercube, mask: &LabelMask) -> Result<()> {
        mask.matches_cube(cube)?;
        if cube.bands() != self.bands {
            return Err(Error::BandMismatch {
                expected: self.bands,
                actual: cube.bands(),
            });
        }
        for (spectrum, &label) in cube.pixels().zip(&mask.labels) {
            self.push(label, spectrum.iter().map(|&v| v as f64));
        }
        Ok(())
    }

    /// Moments of labelled pixel rows.
    pub fn from_pixels(pixels: &PixelMatrix, labels: &[u8]) -> Result<Self> {
        if labels.len() != pixels.rows {
            return Err(Error::LengthMismatch(pixels.rows, labels.len()));
        }
        let mut stats = Self::new(pixels.cols);
        for (i, &label) in labels.iter().enumerate() {
            stats.push(label, pixels.row(i).iter().copied());
        }
        Ok(stats)
    }
}

/// Single streaming pass over a cube and its mask.
pub fn class_band_stats(cube: &Hypercube, mask: &LabelMask) -> Result<ClassStats> {
    let mut stats = ClassStats::new(cube.bands());
    stats.add_cube(cube, mask)?;
    Ok(stats)
}

/// `|mu_a - mu_b| / sqrt((var_a + var_b) / 2)`, capped at [`CSNR_CAP`] when
/// the pooled variance vanishes.
pub fn csnr_from_moments(mean_a: f64, var_a: f64, mean_b: f64, var_b: f64) -> f64 {
    let contrast = (mean_a - mean_b).abs();
    let pooled = (var_a + var_b) / 2.0;
    if contrast == 0.0 {
        0.0
    } else if pooled <= 0.0 {
        CSNR_CAP
    } else {
        (contrast / pooled.sqrt()).min(CSNR_CAP)
    }
}

pub fn csnr(stats: &ClassStats, class_a: u8, class_b: u8, band: usize) -> Result<f64> {
    if band >= stats.bands {
        return Err(Error::IndexOutOfRange {
            index: band,
            bands: stats.bands,
        });
    }
    let fetch = |class: u8| -> Result<&ClassAccumulator> {
        match stats.class(class) {
            Some(acc) if acc.count >= 2 => Ok(acc),
            other => Err(Error::InsufficientSamples {
                class,
                band,
                count: other.map_or(0, |a| a.count),
            }),
        }
    };
    let a = fetch(class_a)?;
    let b = fetch(class_b)?;
    Ok(csnr_from_moments(
        a.mean[band],
        a.variance(band),
        b.mean[band],
        b.variance(band),
    ))
}

/// Maximum CSNR at `band` over class pairs. With `targets`, only pairs that
/// contain at least one target class count. Classes with fewer than two
/// pixels are skipped; no eligible pair gives 0.
pub fn aggregate_csnr(stats: &ClassStats, band: usize, targets: Option<&[u8]>) -> f64 {
    let eligible: Vec<u8> = stats
        .classes
        .iter()
        .filter(|(_, acc)| acc.count >= 2)
        .map(|(&c, _)| c)
        .collect();
    let is_target = |c: u8| targets.is_none_or(|t| t.contains(&c));
    let mut best = 0.0f64;
    for (i, &a) in eligible.iter().enumerate() {
        for &b in &eligible[i + 1..] {
            if !(is_target(a) || is_target(b)) {
                continue;
            }
            if let Ok(v) = csnr(stats, a, b, band) {
                best = best.max(v);
            }
        }
    }
    best
}

/// Symmetric matrix of Pearson coefficients between bands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub bands: usize,
    /// Row-major `bands x bands`.
    pub values: Vec<f64>,
}

impl CorrelationMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.bands + j]
    }
}

/// Pearson correlation over the rows of `pixels`. Bands with zero variance
/// correlate 0 with every other band; the diagonal is always 1.
pub fn band_correlation(pixels: &PixelMatrix) -> Result<CorrelationMatrix> {
    if pixels.rows < 2 {
        return Err(Error::TooFewRows {
            needed: 2,
            actual: pixels.rows,
        });
    }
    let (n, b) = (pixels.rows, pixels.cols);
    let mut mean = vec![0.0; b];
    for i in 0..n {
        for (m, v) in mean.iter_mut().zip(pixels.row(i)) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut cov = vec![0.0; b * b];
    let mut centered = vec![0.0; b];
    for i in 0..n {
        for (c, (v, m)) in centered.iter_mut().zip(pixels.row(i).iter().zip(&mean)) {
            *c = v - m;
        }
        for j in 0..b {
            let cj = centered[j];
            for k in j..b {
                cov[j * b + k] += cj * centered[k];
            }
        }
    }
    let mut values = vec![0.0; b * b];
    for j in 0..b {
        values[j * b + j] = 1.0;
        for k in j + 1..b {
            let denom = (cov[j * b + j] * cov[k * b + k]).sqrt();
            let r = if denom > 0.0 {
                (cov[j * b + k] / denom).clamp(-1.0, 1.0)
            } else {
                0.0
            };
            values[j * b + k] = r;
            values[k * b + j] = r;
        }
    }
    Ok(CorrelationMatrix { bands: b, values })
}

/// Integer codes of a discretized column.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteColumn {
    pub codes: Vec<u32>,
    pub bins: usize,
    /// `bins + 1` boundaries; empty for identity-coded labels.
    pub edges: Vec<f64>,
    /// Set when the value range collapsed and every code is 0.
    pub degenerate: bool,
}

impl DiscreteColumn {
    /// One bin per distinct label, in ascending label order.
    pub fn from_labels(labels: &[u8]) -> Self {
        let mut present = [false; 256];
        for &l in labels {
            present[l as usize] = true;
        }
        let mut code_of = [0u32; 256];
        let mut bins = 0u32;
        for (l, &p) in present.iter().enumerate() {
            if p {
                code_of[l] = bins;
                bins += 1;
            }
        }
        Self {
            codes: labels.iter().map(|&l| code_of[l as usize]).collect(),
            bins: bins.max(1) as usize,
            edges: Vec::new(),
            degenerate: bins <= 1,
        }
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }
}

/// Percentile with linear interpolation between closest ranks.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        n => {
            let pos = (p / 100.0).clamp(0.0, 1.0) * (n - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = (lo + 1).min(n - 1);
            let frac = pos - lo as f64;
            sorted[lo] + (sorted[hi] - sorted[lo]) * frac
        }
    }
}

/// Uniform-width bins between the `clip` percentiles of `values`; values
/// outside fall into the edge bins. If the clipped range collapses the full
/// min..max range is used instead, and if that collapses too every code is 0
/// and the column is flagged degenerate.
pub fn discretize(values: &[f64], bins: usize, clip: (f64, f64)) -> Result<DiscreteColumn> {
    if bins < 2 {
        return Err(Error::InvalidConfig(format!("bins must be >= 2, got {bins}")));
    }
    let (low, high) = clip;
    if !(0.0..100.0).contains(&low) || high <= low || high > 100.0 {
        return Err(Error::InvalidConfig(format!(
            "clip percentiles must satisfy 0 <= low < high <= 100, got ({low}, {high})"
        )));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let (mut lo, mut hi) = (percentile(&sorted, low), percentile(&sorted, high));
    if hi <= lo || !(hi - lo).is_finite() {
        lo = sorted.first().copied().unwrap_or(0.0);
        hi = sorted.last().copied().unwrap_or(0.0);
    }
    if hi <= lo || !(hi - lo).is_finite() {
        return Ok(DiscreteColumn {
            codes: vec![0; values.len()],
            bins,
            edges: vec![lo; bins + 1],
            degenerate: true,
        });
    }
    let span = hi - lo;
    let top = (bins - 1) as f64;
    let codes = values
        .iter()
        .map(|&v| ((v - lo) / span * bins as f64).floor().clamp(0.0, top) as u32)
        .collect();
    let edges = (0..=bins).map(|i| lo + span * i as f64 / bins as f64).collect();
    Ok(DiscreteColumn {
        codes,
        bins,
        edges,
        degenerate: false,
    })
}

/// Plug-in mutual information of two code sequences, in bits. Terms are
/// summed in sorted order so the result does not depend on argument order.
fn plugin_mi(x: &[u32], x_bins: usize, y: &[u32], y_bins: usize) -> f64 {
    let n = x.len();
    if n == 0 {
        return 0.0;
    }
    let mut joint = vec![0u64; x_bins * y_bins];
    let mut cx = vec![0u64; x_bins];
    let mut cy = vec![0u64; y_bins];
    for (&a, &b) in x.iter().zip(y) {
        joint[a as usize * y_bins + b as usize] += 1;
        cx[a as usize] += 1;
        cy[b as usize] += 1;
    }
    let total = n as f64;
    let mut terms: Vec<f64> = Vec::new();
    for (i, &ci) in cx.iter().enumerate() {
        if ci == 0 {
            continue;
        }
        for (j, &cj) in cy.iter().enumerate() {
            let c = joint[i * y_bins + j];
            if c == 0 {
                continue;
            }
            let c = c as f64;
            terms.push(c / total * (c * total / (ci as f64 * cj as f64)).log2());
        }
    }
    terms.sort_by(f64::total_cmp);
    terms.iter().sum::<f64>().max(0.0)
}

fn check_lengths(a: &DiscreteColumn, b: &DiscreteColumn) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(a.len(), b.len()));
    }
    Ok(())
}

/// `I(X;Y)` in bits.
pub fn mutual_information(x: &DiscreteColumn, y: &DiscreteColumn) -> Result<f64> {
    check_lengths(x, y)?;
    Ok(plugin_mi(&x.codes, x.bins, &y.codes, y.bins))
}

/// Plug-in entropy `H(X)` in bits.
pub fn entropy(x: &DiscreteColumn) -> f64 {
    let mut counts = vec![0u64; x.bins];
    for &c in &x.codes {
        counts[c as usize] += 1;
    }
    let n = x.len() as f64;
    let mut terms: Vec<f64> = counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .collect();
    terms.sort_by(f64::total_cmp);
    terms.iter().sum()
}

/// Product variable `(F, S)` coded as `f * S.bins + s`.
pub fn pair_column(f: &DiscreteColumn, s: &DiscreteColumn) -> Result<DiscreteColumn> {
    check_lengths(f, s)?;
    Ok(DiscreteColumn {
        codes: f
            .codes
            .iter()
            .zip(&s.codes)
            .map(|(&a, &b)| a * s.bins as u32 + b)
            .collect(),
        bins: f.bins * s.bins,
        edges: Vec::new(),
        degenerate: f.degenerate && s.degenerate,
    })
}

/// `I((F, S); C)` in bits.
pub fn joint_mutual_information(f: &DiscreteColumn, s: &DiscreteColumn, c: &DiscreteColumn) -> Result<f64> {
    let pair = pair_column(f, s)?;
    mutual_information(&pair, c)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandScore {
    pub band_index: usize,
    pub cwl_nm: f64,
    pub csnr: f64,
    pub marginal_mi_bits: f64,
}

/// One row per band: aggregate CSNR and marginal MI with the class labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandScoreTable {
    pub rows: Vec<BandScore>,
}

impl BandScoreTable {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["band_index", "cwl_nm", "csnr", "marginal_mi_bits"])?;
        for r in &self.rows {
            w.write_record([
                r.band_index.to_string(),
                format!("{}", r.cwl_nm),
                format!("{:.9}", r.csnr),
                format!("{:.9}", r.marginal_mi_bits),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }
}

/// Score every band of labelled pixel rows. Rows labelled with the ignore
/// value must already be removed.
pub fn band_score_table(
    pixels: &PixelMatrix,
    labels: &[u8],
    wavelengths: &[f64],
    bins: usize,
    clip: (f64, f64),
    targets: Option<&[u8]>,
) -> Result<BandScoreTable> {
    if wavelengths.len() != pixels.cols {
        return Err(Error::BandMismatch {
            expected: pixels.cols,
            actual: wavelengths.len(),
        });
    }
    let stats = ClassStats::from_pixels(pixels, labels)?;
    let class_col = DiscreteColumn::from_labels(labels);
    let rows = (0..pixels.cols)
        .map(|band| {
            let col = discretize(&pixels.column(band), bins, clip)?;
            Ok(BandScore {
                band_index: band,
                cwl_nm: wavelengths[band],
                csnr: aggregate_csnr(&stats, band, targets),
                marginal_mi_bits: mutual_information(&col, &class_col)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BandScoreTable { rows })
}
