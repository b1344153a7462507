//! ENVI-style cube headers and raw rasters, PGM label masks, dataset
//! manifests and seeded pixel sampling.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Stream;

/// Number of semantic classes in the label space.
pub const NUM_CLASSES: usize = 19;
/// Reserved "don't care" label.
pub const IGNORE_LABEL: u8 = 255;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Interleave {
    Bsq,
    Bil,
    Bip,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataType {
    U8,
    U16,
    F32,
}

impl DataType {
    pub fn size(self) -> usize {
        match self {
            DataType::U8 => 1,
            DataType::U16 => 2,
            DataType::F32 => 4,
        }
    }

    fn envi_code(self) -> u32 {
        match self {
            DataType::U8 => 1,
            DataType::U16 => 12,
            DataType::F32 => 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ByteOrder {
    Little,
    Big,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CubeHeader {
    /// Width in pixels.
    pub samples: usize,
    /// Height in pixels.
    pub lines: usize,
    pub bands: usize,
    pub interleave: Interleave,
    pub data_type: DataType,
    pub byte_order: ByteOrder,
    /// Band center wavelengths in nm, strictly increasing.
    pub wavelengths: Vec<f64>,
}

impl CubeHeader {
    /// Little-endian f32 BSQ header for the given geometry.
    pub fn new(lines: usize, samples: usize, wavelengths: Vec<f64>) -> Result<Self> {
        let header = Self {
            samples,
            lines,
            bands: wavelengths.len(),
            interleave: Interleave::Bsq,
            data_type: DataType::F32,
            byte_order: ByteOrder::Little,
            wavelengths,
        };
        header.validate()?;
        Ok(header)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("samples", self.samples), ("lines", self.lines), ("bands", self.bands)] {
            if v == 0 {
                return Err(Error::InvalidField {
                    field: name.into(),
                    value: "0".into(),
                });
            }
        }
        if self.wavelengths.len() != self.bands {
            return Err(Error::WavelengthCountMismatch {
                bands: self.bands,
                wavelengths: self.wavelengths.len(),
            });
        }
        if let Some(i) = self.wavelengths.iter().position(|w| !w.is_finite()) {
            return Err(Error::NonMonotonicWavelengths { index: i });
        }
        if let Some(i) = self.wavelengths.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::NonMonotonicWavelengths { index: i + 1 });
        }
        Ok(())
    }

    pub fn pixel_count(&self) -> usize {
        self.samples * self.lines
    }

    pub fn raw_len(&self) -> usize {
        self.pixel_count() * self.bands * self.data_type.size()
    }

    /// Serialize as an ENVI text header.
    pub fn to_envi_string(&self) -> String {
        let mut out = String::from("ENVI\n");
        let _ = writeln!(out, "samples = {}", self.samples);
        let _ = writeln!(out, "lines = {}", self.lines);
        let _ = writeln!(out, "bands = {}", self.bands);
        let _ = writeln!(out, "header offset = 0");
        let _ = writeln!(out, "file type = ENVI Standard");
        let _ = writeln!(out, "data type = {}", self.data_type.envi_code());
        let interleave = match self.interleave {
            Interleave::Bsq => "bsq",
            Interleave::Bil => "bil",
            Interleave::Bip => "bip",
        };
        let _ = writeln!(out, "interleave = {interleave}");
        let order = match self.byte_order {
            ByteOrder::Little => 0,
            ByteOrder::Big => 1,
        };
        let _ = writeln!(out, "byte order = {order}");
        let _ = writeln!(out, "wavelength units = Nanometers");
        let list: Vec<String> = self.wavelengths.iter().map(|w| format!("{w}")).collect();
        let _ = writeln!(out, "wavelength = {{{}}}", list.join(", "));
        out
    }
}

fn parse_usize(field: &str, value: &str) -> Result<usize> {
    value.trim().parse().map_err(|_| Error::InvalidField {
        field: field.into(),
        value: value.into(),
    })
}

/// Parse an ENVI `.hdr` text. Unknown keys are ignored; interleave defaults
/// to BSQ, byte order to little-endian and data type to f32.
pub fn parse_envi_header(text: &str) -> Result<CubeHeader> {
    let mut samples = None;
    let mut lines = None;
    let mut bands = None;
    let mut wavelengths: Option<Vec<f64>> = None;
    let mut interleave = Interleave::Bsq;
    let mut data_type = DataType::F32;
    let mut byte_order = ByteOrder::Little;

    let mut rest = text;
    while !rest.is_empty() {
        let (line, tail) = rest.split_once('\n').unwrap_or((rest, ""));
        rest = tail;
        let Some((key, value)) = line.split_once('=') else {
            continue;
        };
        let key = key.trim().to_ascii_lowercase();
        let mut value = value.trim().to_string();
        if value.starts_with('{') {
            // Brace values may continue over several lines.
            while !value.contains('}') && !rest.is_empty() {
                let (next, tail) = rest.split_once('\n').unwrap_or((rest, ""));
                rest = tail;
                value.push(' ');
                value.push_str(next.trim());
            }
            let inner = value.trim_start_matches('{');
            value = inner.split('}').next().unwrap_or("").to_string();
        }
        match key.as_str() {
            "samples" => samples = Some(parse_usize("samples", &value)?),
            "lines" => lines = Some(parse_usize("lines", &value)?),
            "bands" => bands = Some(parse_usize("bands", &value)?),
            "interleave" => {
                interleave = match value.trim().to_ascii_lowercase().as_str() {
                    "bsq" => Interleave::Bsq,
                    "bil" => Interleave::Bil,
                    "bip" => Interleave::Bip,
                    other => {
                        return Err(Error::InvalidField {
                            field: key,
                            value: other.into(),
                        })
                    }
                }
            }
            "data type" => {
                data_type = match value.trim() {
                    "1" => DataType::U8,
                    "12" => DataType::U16,
                    "4" => DataType::F32,
                    other => {
                        return Err(Error::InvalidField {
                            field: key,
                            value: other.into(),
                        })
                    }
                }
            }
            "byte order" => {
                byte_order = match value.trim() {
                    "0" => ByteOrder::Little,
                    "1" => ByteOrder::Big,
                    other => {
                        return Err(Error::InvalidField {
                            field: key,
                            value: other.into(),
                        })
                    }
                }
            }
            "wavelength" => {
                let parsed: std::result::Result<Vec<f64>, _> = value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(str::parse::<f64>)
                    .collect();
                wavelengths = Some(parsed.map_err(|_| Error::InvalidField {
                    field: key,
                    value: value.clone(),
                })?);
            }
            _ => {}
        }
    }

    let header = CubeHeader {
        samples: samples.ok_or(Error::MissingField("samples"))?,
        lines: lines.ok_or(Error::MissingField("lines"))?,
        bands: bands.ok_or(Error::MissingField("bands"))?,
        interleave,
        data_type,
        byte_order,
        wavelengths: wavelengths.ok_or(Error::MissingField("wavelength"))?,
    };
    header.validate()?;
    Ok(header)
}

/// A hyperspectral cube in canonical `(y, x, band)` order.
#[derive(Debug, Clone, PartialEq)]
pub struct Hypercube {
    header: CubeHeader,
    data: Vec<f32>,
}

impl Hypercube {
    /// Build a cube from canonical-order values. The header's storage fields
    /// (interleave, data type, byte order) only matter when writing.
    pub fn from_parts(header: CubeHeader, data: Vec<f32>) -> Result<Self> {
        header.validate()?;
        let expected = header.pixel_count() * header.bands;
        if data.len() != expected {
            return Err(Error::SizeMismatch {
                expected,
                actual: data.len(),
            });
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NanInInput { index });
        }
        Ok(Self { header, data })
    }

    pub fn header(&self) -> &CubeHeader {
        &self.header
    }

    /// Change the on-disk layout used by [`write_cube`].
    pub fn set_storage(&mut self, interleave: Interleave, data_type: DataType, order: ByteOrder) {
        self.header.interleave = interleave;
        self.header.data_type = data_type;
        self.header.byte_order = order;
    }

    pub fn width(&self) -> usize {
        self.header.samples
    }

    pub fn height(&self) -> usize {
        self.header.lines
    }

    pub fn bands(&self) -> usize {
        self.header.bands
    }

    pub fn wavelengths(&self) -> &[f64] {
        &self.header.wavelengths
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn get(&self, y: usize, x: usize, band: usize) -> f32 {
        self.data[(y * self.header.samples + x) * self.header.bands + band]
    }

    /// Spectrum of the pixel at `(y, x)`.
    pub fn pixel(&self, y: usize, x: usize) -> &[f32] {
        let b = self.header.bands;
        let start = (y * self.header.samples + x) * b;
        &self.data[start..start + b]
    }

    /// Spectrum of the pixel with flat index `y * width + x`.
    pub fn pixel_at(&self, index: usize) -> &[f32] {
        let b = self.header.bands;
        &self.data[index * b..(index + 1) * b]
    }

    pub fn pixels(&self) -> std::slice::ChunksExact<'_, f32> {
        self.data.chunks_exact(self.header.bands)
    }
}

/// Position of canonical element `(y, x, b)` in the raw stream.
fn raw_position(h: &CubeHeader, y: usize, x: usize, b: usize) -> usize {
    let (w, l, n) = (h.samples, h.lines, h.bands);
    match h.interleave {
        Interleave::Bsq => (b * l + y) * w + x,
        Interleave::Bil => (y * n + b) * w + x,
        Interleave::Bip => (y * w + x) * n + b,
    }
}

/// Decode a raw raster. Integer samples are divided by the type maximum.
pub fn read_cube(header: &CubeHeader, raw: &[u8]) -> Result<Hypercube> {
    header.validate()?;
    let expected = header.raw_len();
    if raw.len() != expected {
        return Err(Error::SizeMismatch {
            expected,
            actual: raw.len(),
        });
    }
    let size = header.data_type.size();
    let big = header.byte_order == ByteOrder::Big;
    let mut data = vec![0f32; header.pixel_count() * header.bands];
    for y in 0..header.lines {
        for x in 0..header.samples {
            for b in 0..header.bands {
                let pos = raw_position(header, y, x, b) * size;
                let bytes = &raw[pos..pos + size];
                let value = match header.data_type {
                    DataType::U8 => bytes[0] as f32 / u8::MAX as f32,
                    DataType::U16 => {
                        let arr = [bytes[0], bytes[1]];
                        let v = if big {
                            u16::from_be_bytes(arr)
                        } else {
                            u16::from_le_bytes(arr)
                        };
                        v as f32 / u16::MAX as f32
                    }
                    DataType::F32 => {
                        let arr = [bytes[0], bytes[1], bytes[2], bytes[3]];
                        let v = if big {
                            f32::from_be_bytes(arr)
                        } else {
                            f32::from_le_bytes(arr)
                        };
                        if !v.is_finite() {
                            return Err(Error::NanInInput { index: pos / size });
                        }
                        v
                    }
                };
                data[(y * header.samples + x) * header.bands + b] = value;
            }
        }
    }
    Ok(Hypercube {
        header: header.clone(),
        data,
    })
}

/// Encode a cube with the storage layout recorded in its header.
pub fn write_cube(cube: &Hypercube) -> Vec<u8> {
    let h = &cube.header;
    let size = h.data_type.size();
    let big = h.byte_order == ByteOrder::Big;
    let mut raw = vec![0u8; h.raw_len()];
    for y in 0..h.lines {
        for x in 0..h.samples {
            for b in 0..h.bands {
                let v = cube.get(y, x, b);
                let pos = raw_position(h, y, x, b) * size;
                let out = &mut raw[pos..pos + size];
                match h.data_type {
                    DataType::U8 => {
                        out[0] = (v * u8::MAX as f32).round().clamp(0.0, 255.0) as u8;
                    }
                    DataType::U16 => {
                        let q = (v * u16::MAX as f32).round().clamp(0.0, 65535.0) as u16;
                        out.copy_from_slice(&if big { q.to_be_bytes() } else { q.to_le_bytes() });
                    }
                    DataType::F32 => {
                        out.copy_from_slice(&if big { v.to_be_bytes() } else { v.to_le_bytes() });
                    }
                }
            }
        }
    }
    raw
}

/// Path of the raw raster that accompanies a `.hdr` file.
pub fn raw_path_for(header_path: &Path) -> PathBuf {
    header_path.with_extension("raw")
}

pub fn load_cube(header_path: &Path) -> Result<Hypercube> {
    let text = std::fs::read_to_string(header_path).map_err(|e| Error::io(header_path, e))?;
    let header = parse_envi_header(&text)?;
    let raw_path = raw_path_for(header_path);
    let raw = std::fs::read(&raw_path).map_err(|e| Error::io(&raw_path, e))?;
    read_cube(&header, &raw)
}

pub fn save_cube(cube: &Hypercube, header_path: &Path) -> Result<()> {
    std::fs::write(header_path, cube.header.to_envi_string()).map_err(|e| Error::io(header_path, e))?;
    let raw_path = raw_path_for(header_path);
    std::fs::write(&raw_path, write_cube(cube)).map_err(|e| Error::io(&raw_path, e))
}

/// Per-pixel class IDs, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMask {
    pub width: usize,
    pub height: usize,
    pub labels: Vec<u8>,
}

impl LabelMask {
    pub fn new(width: usize, height: usize, labels: Vec<u8>) -> Result<Self> {
        if width.checked_mul(height) != Some(labels.len()) {
            return Err(Error::DimensionOverflow { width, height });
        }
        Ok(Self { width, height, labels })
    }

    pub fn get(&self, y: usize, x: usize) -> u8 {
        self.labels[y * self.width + x]
    }

    /// Reject labels outside `0..num_classes` other than the ignore value.
    pub fn check_range(&self, num_classes: usize) -> Result<()> {
        match self
            .labels
            .iter()
            .position(|&l| l != IGNORE_LABEL && l as usize >= num_classes)
        {
            Some(index) => Err(Error::LabelOutOfRange {
                value: self.labels[index],
                classes: num_classes,
                index,
            }),
            None => Ok(()),
        }
    }

    pub fn matches_cube(&self, cube: &Hypercube) -> Result<()> {
        if self.width != cube.width() || self.height != cube.height() {
            return Err(Error::DimensionMismatch(format!(
                "mask {}x{} vs cube {}x{}",
                self.width,
                self.height,
                cube.width(),
                cube.height()
            )));
        }
        Ok(())
    }
}

/// Parsed binary PNM header: width, height and payload offset.
pub(crate) fn parse_pnm_header(bytes: &[u8], magic: &[u8; 2]) -> Result<(usize, usize, usize)> {
    if bytes.len() < 2 || &bytes[..2] != magic {
        return Err(Error::BadMagic(format!("expected {}", String::from_utf8_lossy(magic))));
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        loop {
            match bytes.get(pos) {
                Some(b'#') => {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                }
                Some(c) if c.is_ascii_whitespace() => pos += 1,
                Some(_) => break,
                None => return Err(Error::BadMagic("truncated header".into())),
            }
        }
        let start = pos;
        while pos < bytes.len() && bytes[pos].is_ascii_digit() {
            pos += 1;
        }
        let text = std::str::from_utf8(&bytes[start..pos]).unwrap_or("");
        *field = text
            .parse()
            .map_err(|_| Error::BadMagic(format!("bad header number `{text}`")))?;
    }
    // Exactly one whitespace byte separates the header from the payload.
    match bytes.get(pos) {
        Some(c) if c.is_ascii_whitespace() => pos += 1,
        _ => return Err(Error::BadMagic("missing header terminator".into())),
    }
    let [width, height, maxval] = fields;
    if maxval != 255 {
        return Err(Error::BadMagic(format!("maxval {maxval}, only 255 supported")));
    }
    Ok((width, height, pos))
}

/// Decode an 8-bit binary PGM (P5) mask. With `strict`, labels 19..=254 are
/// rejected.
pub fn read_mask(bytes: &[u8], strict: bool) -> Result<LabelMask> {
    let (width, height, offset) = parse_pnm_header(bytes, b"P5")?;
    let count = width
        .checked_mul(height)
        .ok_or(Error::DimensionOverflow { width, height })?;
    if bytes.len() - offset < count {
        return Err(Error::DimensionOverflow { width, height });
    }
    let mask = LabelMask::new(width, height, bytes[offset..offset + count].to_vec())?;
    if strict {
        mask.check_range(NUM_CLASSES)?;
    }
    Ok(mask)
}

pub fn write_mask(mask: &LabelMask) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", mask.width, mask.height).into_bytes();
    out.extend_from_slice(&mask.labels);
    out
}

pub fn load_mask(path: &Path, strict: bool) -> Result<LabelMask> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    read_mask(&bytes, strict)
}

pub fn save_mask(mask: &LabelMask, path: &Path) -> Result<()> {
    std::fs::write(path, write_mask(mask)).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Cube `.hdr` path; the raw raster sits next to it with a `.raw` extension.
    pub cube: PathBuf,
    pub mask: PathBuf,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
    pub seed: u64,
    /// Directory that relative entry paths resolve against.
    pub root: PathBuf,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ManifestFile {
    Entries(Vec<ManifestEntry>),
    WithSeed {
        entries: Vec<ManifestEntry>,
        #[serde(default)]
        seed: u64,
    },
}

impl DatasetManifest {
    pub fn new(entries: Vec<ManifestEntry>, seed: u64, root: PathBuf) -> Result<Self> {
        let mut seen = HashSet::new();
        for e in &entries {
            for p in [&e.cube, &e.mask] {
                if !seen.insert(p.clone()) {
                    return Err(Error::DuplicatePath(p.clone()));
                }
            }
        }
        Ok(Self { entries, seed, root })
    }

    /// Parse a manifest: either a JSON array of `{cube, mask, split}` or an
    /// object `{entries: [...], seed}`.
    pub fn from_json(text: &str, root: PathBuf) -> Result<Self> {
        let (entries, seed) = match serde_json::from_str::<ManifestFile>(text)? {
            ManifestFile::Entries(e) => (e, 0),
            ManifestFile::WithSeed { entries, seed } => (entries, seed),
        };
        Self::new(entries, seed, root)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_json(&text, root)
    }

    /// Entries as a JSON array, paths as stored.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.entries).expect("manifest serializes")
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.root.join(p)
        }
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = (usize, &ManifestEntry)> {
        self.entries.iter().enumerate().filter(move |(_, e)| e.split == split)
    }

    /// Load the cube and mask of entry `index`, checking that they pair up.
    pub fn load_entry(&self, index: usize) -> Result<(Hypercube, LabelMask)> {
        let entry = &self.entries[index];
        let cube = load_cube(&self.resolve(&entry.cube))?;
        let mask = load_mask(&self.resolve(&entry.mask), false)?;
        mask.matches_cube(&cube)?;
        Ok((cube, mask))
    }
}

/// Sampled spectra, one row per pixel, with the origin of every row.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelMatrix {
    pub rows: usize,
    pub cols: usize,
    /// Row-major `rows x cols`.
    pub values: Vec<f64>,
    /// `(cube index, x, y)` per row.
    pub provenance: Vec<(usize, usize, usize)>,
}

impl PixelMatrix {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut values = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(Error::BandMismatch {
                    expected: cols,
                    actual: r.len(),
                });
            }
            if let Some(j) = r.iter().position(|v| !v.is_finite()) {
                return Err(Error::NanInInput { index: i * cols + j });
            }
            values.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            values,
            provenance: (0..rows.len()).map(|i| (0, i, 0)).collect(),
        })
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, band: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.values[i * self.cols + band]).collect()
    }

    /// Keep only the rows for which `keep` is true.
    pub fn filter_rows(&self, keep: &[bool]) -> PixelMatrix {
        let mut values = Vec::new();
        let mut provenance = Vec::new();
        for (i, _) in keep.iter().enumerate().filter(|(_, &k)| k) {
            values.extend_from_slice(self.row(i));
            provenance.push(self.provenance[i]);
        }
        PixelMatrix {
            rows: provenance.len(),
            cols: self.cols,
            values,
            provenance,
        }
    }
}

/// Draw `n_per_cube` pixels from every cube, without replacement when the
/// cube is large enough and with replacement otherwise. One SplitMix64
/// stream seeded with `seed` is consumed cube by cube, in order.
pub fn sample_pixels(cubes: &[&Hypercube], n_per_cube: usize, seed: u64) -> Result<PixelMatrix> {
    let first = cubes.first().ok_or(Error::EmptyCubeList)?;
    if n_per_cube == 0 {
        return Err(Error::InvalidConfig("samples per cube must be >= 1".into()));
    }
    let cols = first.bands();
    let mut stream = Stream::new(seed);
    let mut values = Vec::with_capacity(cubes.len() * n_per_cube * cols);
    let mut provenance = Vec::with_capacity(cubes.len() * n_per_cube);
    for (ci, cube) in cubes.iter().enumerate() {
        if cube.bands() != cols {
            return Err(Error::BandMismatch {
                expected: cols,
                actual: cube.bands(),
            });
        }
        let population = cube.width() * cube.height();
        let picks: Vec<usize> = if population >= n_per_cube {
            stream.sample_distinct(population, n_per_cube)
        } else {
            (0..n_per_cube)
                .map(|_| stream.below(population as u64) as usize)
                .collect()
        };
        for p in picks {
            values.extend(cube.pixel_at(p).iter().map(|&v| v as f64));
            provenance.push((ci, p % cube.width(), p / cube.width()));
        }
    }
    Ok(PixelMatrix {
        rows: provenance.len(),
        cols,
        values,
        provenance,
    })
}
