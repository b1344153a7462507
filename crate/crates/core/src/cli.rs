//! Command-line front end. [`run`] parses arguments, runs one subcommand and
//! returns the process exit code: 0 on success, 2 on usage or validation
//! errors, 1 on runtime errors.
//!
//! Every subcommand writes its artifact plus a run log (`<out>.run.json`)
//! holding the command, the effective configuration, the seed and the tool
//! version. Run logs carry no timestamps, so repeated runs are byte-identical.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::bandstats::BandScoreTable;
use crate::cube_io::{
    load_cube, load_mask, save_cube, save_mask, CubeHeader, DatasetManifest, Hypercube, ManifestEntry, Split,
    NUM_CLASSES,
};
use crate::metrics::{
    compare_reports, read_reports_csv, reports_by_model, ClassTable, ConfusionMatrix, Inclusion, MetricsReport,
};
use crate::pca::{fit_pca, project, PcaModel};
use crate::pseudorgb::{render_pseudo_rgb, Normalization, RenderConfig, RenderSource};
use crate::selection::{sample_manifest, score_samples, select_from_samples, SelectionConfig, SelectionResult};
use crate::synthcube::{metameric_scene, planted_scene, render_scene, xor_scene, SceneSpec};

/// Environment variable read when `--workers` is not given.
pub const WORKERS_ENV: &str = "HSISEL_WORKERS";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PcaOptions {
    #[serde(default = "default_pca_k")]
    pub k: usize,
    #[serde(default)]
    pub standardize: bool,
    #[serde(default = "default_pca_samples")]
    pub samples_per_cube: usize,
}

fn default_pca_k() -> usize {
    3
}
fn default_pca_samples() -> usize {
    500
}

impl Default for PcaOptions {
    fn default() -> Self {
        Self {
            k: default_pca_k(),
            standardize: false,
            samples_per_cube: default_pca_samples(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsOptions {
    #[serde(default)]
    pub inclusion: Inclusion,
}

/// Options shared by all subcommands, loadable from `--config`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub selection: SelectionConfig,
    #[serde(default)]
    pub pca: PcaOptions,
    #[serde(default)]
    pub pseudorgb: RenderConfig,
    #[serde(default)]
    pub metrics: MetricsOptions,
    /// Overrides the manifest seed when set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> crate::Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| crate::Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> crate::Result<()> {
        let bad = |m: &str| Err(crate::Error::InvalidConfig(m.into()));
        self.selection.validate()?;
        if self.pca.k == 0 {
            return bad("pca.k must be >= 1");
        }
        if self.pca.samples_per_cube == 0 {
            return bad("pca.samples_per_cube must be >= 1");
        }
        if !(self.pseudorgb.half_width >= 0.0 && self.pseudorgb.half_width.is_finite()) {
            return bad("pseudorgb.half_width must be finite and >= 0");
        }
        if let Normalization::Percentile { low, high } = self.pseudorgb.normalization {
            if !(0.0 <= low && low < high && high <= 100.0) {
                return bad("pseudorgb percentiles must satisfy 0 <= low < high <= 100");
            }
        }
        Ok(())
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "hsisel",
    version,
    about = "Hyperspectral band selection and pseudo-RGB toolkit"
)]
struct Cli {
    /// JSON run configuration; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true, env = WORKERS_ENV)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Per-band CSNR and marginal MI table (CSV).
    Stats(StatsArgs),
    /// CSNR-prefiltered JMIM band selection (JSON).
    Select(SelectArgs),
    /// Fit principal components on sampled pixels (JSON).
    PcaFit(PcaFitArgs),
    /// Project a cube onto a fitted model, writing a k-band cube.
    PcaApply(PcaApplyArgs),
    /// Render a pseudo-RGB PPM from a selection or a PCA model.
    Pseudorgb(PseudoRgbArgs),
    /// Score predicted masks against ground truth.
    Eval(EvalArgs),
    /// Per-class deltas between two sets of metric reports.
    Compare(CompareArgs),
    /// Generate a synthetic scene with its mask and manifest.
    Synth(SynthArgs),
}

#[derive(Args, Debug)]
struct SeedArg {
    /// Sampling seed; defaults to the config, then the manifest.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct StatsArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    seed: SeedArg,
}

#[derive(Args, Debug)]
struct SelectArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    prefilter_top: Option<usize>,
    #[arg(long)]
    corr_max: Option<f64>,
    /// Comma-separated class names or IDs the CSNR contrast must involve.
    #[arg(long, value_delimiter = ',')]
    target_classes: Option<Vec<String>>,
    /// Also write the band score table here.
    #[arg(long)]
    scores: Option<PathBuf>,
    #[command(flatten)]
    seed: SeedArg,
}

#[derive(Args, Debug)]
struct PcaFitArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    standardize: bool,
    #[command(flatten)]
    seed: SeedArg,
}

#[derive(Args, Debug)]
struct PcaApplyArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    cube: PathBuf,
    /// Output `.hdr`; the raster goes next to it as `.raw`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum NormArg {
    Percentile,
    Minmax,
}

#[derive(Args, Debug)]
struct PseudoRgbArgs {
    #[arg(long)]
    cube: PathBuf,
    #[arg(long, conflicts_with = "pca", required_unless_present = "pca")]
    selection: Option<PathBuf>,
    #[arg(long)]
    pca: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Sidecar path; defaults to the output path with `.json` appended.
    #[arg(long)]
    sidecar: Option<PathBuf>,
    #[arg(long)]
    half_width: Option<f64>,
    #[arg(long, value_enum)]
    normalization: Option<NormArg>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SplitArg {
    Train,
    Test,
    All,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum InclusionArg {
    All,
    Present,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Ground-truth manifest; predictions are looked up by mask file name.
    #[arg(long, requires = "pred_dir", conflicts_with_all = ["pred", "gt"])]
    manifest: Option<PathBuf>,
    #[arg(long)]
    pred_dir: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "all")]
    split: SplitArg,
    /// Single predicted mask (with --gt).
    #[arg(long, requires = "gt")]
    pred: Option<PathBuf>,
    #[arg(long, requires = "pred")]
    gt: Option<PathBuf>,
    /// Report JSON.
    #[arg(long)]
    out: PathBuf,
    /// Also write the report in the wide CSV layout.
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    modality: Option<String>,
    #[arg(long, value_enum)]
    inclusion: Option<InclusionArg>,
    /// Override the class-name table (`id,name` CSV).
    #[arg(long)]
    classes_table: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CompareArgs {
    /// Directory of report JSON files, or a wide-layout CSV.
    #[arg(long)]
    a: PathBuf,
    #[arg(long)]
    b: PathBuf,
    /// Modality to pick from `--a` when it is a CSV.
    #[arg(long)]
    modality_a: Option<String>,
    #[arg(long)]
    modality_b: Option<String>,
    /// Comma-separated class names or IDs.
    #[arg(long, value_delimiter = ',', required = true)]
    classes: Vec<String>,
    #[arg(long)]
    out: PathBuf,
    /// Also write a Markdown table.
    #[arg(long)]
    markdown: Option<PathBuf>,
    #[arg(long)]
    classes_table: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Preset {
    Planted,
    Metameric,
    Xor,
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Scene spec JSON.
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    spec: Option<PathBuf>,
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    #[arg(long, default_value_t = 64)]
    width: usize,
    #[arg(long, default_value_t = 64)]
    height: usize,
    #[arg(long, default_value_t = 0.02)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of scenes; scene `i` uses seed `seed + i`.
    #[arg(long, default_value_t = 1)]
    count: usize,
    /// Output directory for cubes, masks and `manifest.json`.
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value = "scene")]
    name: String,
}

/// A usage problem detected after argument parsing.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

/// Run the CLI on `argv` (including the program name).
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            if is_validation(&e) {
                2
            } else {
                1
            }
        }
    }
}

fn is_validation(e: &anyhow::Error) -> bool {
    e.chain().any(|c| {
        c.downcast_ref::<Usage>().is_some()
            || c.downcast_ref::<crate::Error>()
                .is_some_and(crate::Error::is_validation)
    })
}

fn dispatch(cli: Cli) -> anyhow::Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            RunConfig::from_json(&text).with_context(|| format!("config {}", p.display()))?
        }
        None => RunConfig::default(),
    };
    if let Some(n) = cli.workers {
        if n == 0 {
            return Err(usage("--workers must be >= 1"));
        }
        // Fails only if a pool already exists, e.g. when run twice in-process.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match cli.command {
        Command::Stats(a) => stats(&mut cfg, a),
        Command::Select(a) => select(&mut cfg, a),
        Command::PcaFit(a) => pca_fit(&mut cfg, a),
        Command::PcaApply(a) => pca_apply(&cfg, a),
        Command::Pseudorgb(a) => pseudorgb(&mut cfg, a),
        Command::Eval(a) => eval(&mut cfg, a),
        Command::Compare(a) => compare(&cfg, a),
        Command::Synth(a) => synth(&cfg, a),
    }
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// Write `<out>.run.json`.
fn run_log(
    out: &Path,
    command: &str,
    cfg: &RunConfig,
    seed: Option<u64>,
    extra: serde_json::Value,
) -> anyhow::Result<()> {
    let log = json!({
        "command": command,
        "config": cfg,
        "seed": seed,
        "version": { "hsisel": env!("CARGO_PKG_VERSION") },
        "details": extra,
    });
    write(
        &with_suffix(out, ".run.json"),
        serde_json::to_string_pretty(&log)? + "\n",
    )
}

fn load_manifest(path: &Path, cfg: &RunConfig, seed: &SeedArg) -> anyhow::Result<(DatasetManifest, u64)> {
    let manifest = DatasetManifest::load(path).with_context(|| format!("manifest {}", path.display()))?;
    let seed = seed.seed.or(cfg.seed).unwrap_or(manifest.seed);
    Ok((manifest, seed))
}

fn class_ids(names: &[String], table: &ClassTable) -> anyhow::Result<Vec<u8>> {
    names
        .iter()
        .map(|n| table.id(n).ok_or_else(|| usage(format!("unknown class `{n}`"))))
        .collect()
}

fn class_table(path: Option<&Path>) -> anyhow::Result<ClassTable> {
    Ok(match path {
        Some(p) => ClassTable::load(p)?,
        None => ClassTable::default(),
    })
}

fn stats(cfg: &mut RunConfig, a: StatsArgs) -> anyhow::Result<()> {
    cfg.validate()?;
    let (manifest, seed) = load_manifest(&a.manifest, cfg, &a.seed)?;
    cfg.seed = Some(seed);
    let samples = sample_manifest(&manifest, cfg.selection.samples_per_cube, seed)?;
    let table = score_samples(&samples, &cfg.selection)?;
    write(&a.out, table.to_csv_string())?;
    run_log(
        &a.out,
        "stats",
        cfg,
        Some(seed),
        json!({ "manifest": a.manifest, "rows": samples.labels.len() }),
    )
}

fn select(cfg: &mut RunConfig, a: SelectArgs) -> anyhow::Result<()> {
    if let Some(k) = a.k {
        cfg.selection.k = k;
    }
    if let Some(p) = a.prefilter_top {
        cfg.selection.prefilter_top = p;
    }
    if let Some(c) = a.corr_max {
        cfg.selection.corr_max = c;
    }
    if let Some(t) = &a.target_classes {
        cfg.selection.target_classes = Some(class_ids(t, &ClassTable::default())?);
    }
    cfg.validate()?;
    let (manifest, seed) = load_manifest(&a.manifest, cfg, &a.seed)?;
    cfg.seed = Some(seed);
    let samples = sample_manifest(&manifest, cfg.selection.samples_per_cube, seed)?;
    let (result, table): (SelectionResult, BandScoreTable) = select_from_samples(&samples, &cfg.selection, seed)?;
    if let Some(p) = &a.scores {
        write(p, table.to_csv_string())?;
    }
    write(&a.out, result.to_json() + "\n")?;
    run_log(
        &a.out,
        "select",
        cfg,
        Some(seed),
        json!({ "manifest": a.manifest, "chosen": result.bands(), "exhausted": result.exhausted }),
    )
}

fn pca_fit(cfg: &mut RunConfig, a: PcaFitArgs) -> anyhow::Result<()> {
    if let Some(k) = a.k {
        cfg.pca.k = k;
    }
    if a.standardize {
        cfg.pca.standardize = true;
    }
    cfg.validate()?;
    let (manifest, seed) = load_manifest(&a.manifest, cfg, &a.seed)?;
    cfg.seed = Some(seed);
    let samples = sample_manifest(&manifest, cfg.pca.samples_per_cube, seed)?;
    let mut model = fit_pca(&samples.pixels, cfg.pca.k, cfg.pca.standardize)?;
    model.seed = Some(seed);
    model.samples_per_cube = Some(cfg.pca.samples_per_cube);
    write(&a.out, model.to_json() + "\n")?;
    run_log(
        &a.out,
        "pca-fit",
        cfg,
        Some(seed),
        json!({ "manifest": a.manifest, "rank_deficient": model.rank_deficient }),
    )
}

fn pca_apply(cfg: &RunConfig, a: PcaApplyArgs) -> anyhow::Result<()> {
    let model: PcaModel = read_json(&a.model)?;
    let cube = load_cube(&a.cube)?;
    let img = project(&cube, &model)?;
    // Component index stands in for wavelength in the output header.
    let grid: Vec<f64> = (1..=img.channels).map(|i| i as f64).collect();
    let header = CubeHeader::new(img.height, img.width, grid)?;
    let out = Hypercube::from_parts(header, img.data.iter().map(|&v| v as f32).collect())?;
    save_cube(&out, &a.out)?;
    run_log(
        &a.out,
        "pca-apply",
        cfg,
        model.seed,
        json!({ "model": a.model, "cube": a.cube }),
    )
}

fn pseudorgb(cfg: &mut RunConfig, a: PseudoRgbArgs) -> anyhow::Result<()> {
    if let Some(h) = a.half_width {
        cfg.pseudorgb.half_width = h;
    }
    match a.normalization {
        Some(NormArg::Minmax) => cfg.pseudorgb.normalization = Normalization::GlobalMinmax,
        Some(NormArg::Percentile) if !matches!(cfg.pseudorgb.normalization, Normalization::Percentile { .. }) => {
            cfg.pseudorgb.normalization = Normalization::default();
        }
        _ => {}
    }
    cfg.validate()?;
    let cube = load_cube(&a.cube)?;
    let (img, seed) = match (&a.selection, &a.pca) {
        (Some(p), None) => {
            let sel: SelectionResult = read_json(p)?;
            (
                render_pseudo_rgb(&cube, RenderSource::Selection(&sel), &cfg.pseudorgb)?,
                Some(sel.seed),
            )
        }
        (None, Some(p)) => {
            let model: PcaModel = read_json(p)?;
            (
                render_pseudo_rgb(&cube, RenderSource::Pca(&model), &cfg.pseudorgb)?,
                model.seed,
            )
        }
        _ => return Err(usage("give exactly one of --selection or --pca")),
    };
    let sidecar = a.sidecar.clone().unwrap_or_else(|| with_suffix(&a.out, ".json"));
    let inputs = [Some(&a.cube), a.selection.as_ref(), a.pca.as_ref()];
    if inputs.iter().flatten().any(|p| **p == sidecar || **p == a.out) || sidecar == a.out {
        return Err(usage(
            "output and sidecar paths must differ from the inputs and each other",
        ));
    }
    write(&a.out, img.to_ppm())?;
    write(
        &sidecar,
        serde_json::to_string_pretty(&img.sidecar(&cfg.pseudorgb))? + "\n",
    )?;
    run_log(
        &a.out,
        "pseudorgb",
        cfg,
        seed,
        json!({ "cube": a.cube, "selection": a.selection, "pca": a.pca, "sidecar": sidecar }),
    )
}

fn eval(cfg: &mut RunConfig, a: EvalArgs) -> anyhow::Result<()> {
    match a.inclusion {
        Some(InclusionArg::All) => cfg.metrics.inclusion = Inclusion::AllClasses,
        Some(InclusionArg::Present) => cfg.metrics.inclusion = Inclusion::PresentOnly,
        None => {}
    }
    let names = class_table(a.classes_table.as_deref())?;
    let pairs: Vec<(PathBuf, PathBuf)> = match (&a.manifest, &a.pred, &a.gt) {
        (Some(m), None, None) => {
            let manifest = DatasetManifest::load(m)?;
            let pred_dir = a.pred_dir.as_ref().expect("clap enforces --pred-dir");
            let keep = |s: Split| match a.split {
                SplitArg::All => true,
                SplitArg::Train => s == Split::Train,
                SplitArg::Test => s == Split::Test,
            };
            manifest
                .entries
                .iter()
                .filter(|e| keep(e.split))
                .map(|e: &ManifestEntry| {
                    let file = e
                        .mask
                        .file_name()
                        .ok_or_else(|| usage(format!("bad mask path {}", e.mask.display())))?;
                    Ok((pred_dir.join(file), manifest.resolve(&e.mask)))
                })
                .collect::<anyhow::Result<_>>()?
        }
        (None, Some(p), Some(g)) => vec![(p.clone(), g.clone())],
        _ => return Err(usage("give --manifest with --pred-dir, or --pred with --gt")),
    };
    if pairs.is_empty() {
        return Err(usage("no masks selected for evaluation"));
    }
    let partial: Vec<ConfusionMatrix> = pairs
        .par_iter()
        .map(|(p, g)| {
            let pred = load_mask(p, false)?;
            let gt = load_mask(g, false)?;
            let mut cm = ConfusionMatrix::new(NUM_CLASSES);
            cm.accumulate(&pred, &gt)
                .with_context(|| format!("{} vs {}", p.display(), g.display()))?;
            Ok(cm)
        })
        .collect::<anyhow::Result<_>>()?;
    let mut cm = ConfusionMatrix::new(NUM_CLASSES);
    for part in &partial {
        cm.merge(part)?;
    }
    let mut report = MetricsReport::from_confusion(&cm, cfg.metrics.inclusion, Some(&names))?;
    report.model = a.model.clone();
    report.modality = a.modality.clone();
    write(&a.out, report.to_json() + "\n")?;
    if let Some(p) = &a.csv {
        write(p, report.to_csv())?;
    }
    run_log(
        &a.out,
        "eval",
        cfg,
        None,
        json!({ "pairs": pairs.len(), "pixels": report.pixels, "manifest": a.manifest }),
    )
}

fn load_reports(
    path: &Path,
    modality: Option<&str>,
    names: &ClassTable,
) -> anyhow::Result<BTreeMap<String, MetricsReport>> {
    if path.is_dir() {
        if modality.is_some() {
            return Err(usage(format!(
                "{} is a directory; modality flags apply to CSV input",
                path.display()
            )));
        }
        let mut files: Vec<PathBuf> = std::fs::read_dir(path)
            .with_context(|| format!("listing {}", path.display()))?
            .map(|e| e.map(|e| e.path()))
            .collect::<std::io::Result<_>>()?;
        files.retain(|p| p.extension().is_some_and(|x| x == "json") && !p.to_string_lossy().ends_with(".run.json"));
        files.sort();
        let mut out = BTreeMap::new();
        for f in files {
            let report: MetricsReport = read_json(&f)?;
            let key = report
                .model
                .clone()
                .unwrap_or_else(|| f.file_stem().unwrap_or_default().to_string_lossy().into_owned());
            if out.insert(key.clone(), report).is_some() {
                return Err(usage(format!("duplicate model `{key}` in {}", path.display())));
            }
        }
        Ok(out)
    } else {
        let modality = modality.ok_or_else(|| usage(format!("{} is a CSV; give its modality", path.display())))?;
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let all = read_reports_csv(&text, names)?;
        let picked = reports_by_model(&all, modality);
        if picked.is_empty() {
            return Err(usage(format!(
                "no rows with modality `{modality}` in {}",
                path.display()
            )));
        }
        Ok(picked)
    }
}

fn compare(cfg: &RunConfig, a: CompareArgs) -> anyhow::Result<()> {
    let names = class_table(a.classes_table.as_deref())?;
    let classes = class_ids(&a.classes, &names)?;
    let ra = load_reports(&a.a, a.modality_a.as_deref(), &names)?;
    let rb = load_reports(&a.b, a.modality_b.as_deref(), &names)?;
    let cmp = compare_reports(&ra, &rb, &classes)?;
    write(&a.out, cmp.to_json() + "\n")?;
    if let Some(p) = &a.markdown {
        write(p, cmp.to_markdown())?;
    }
    run_log(
        &a.out,
        "compare",
        cfg,
        None,
        json!({ "a": a.a, "b": a.b, "classes": classes, "combined": cmp.combined }),
    )
}

fn synth(cfg: &RunConfig, a: SynthArgs) -> anyhow::Result<()> {
    if a.count == 0 {
        return Err(usage("--count must be >= 1"));
    }
    let base = match (&a.spec, a.preset) {
        (Some(p), None) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            SceneSpec::from_json(&text)?
        }
        (None, Some(preset)) => match preset {
            Preset::Planted => planted_scene(&[5, 60, 120], a.width, a.height, a.noise, a.seed),
            Preset::Metameric => metameric_scene(850.0, a.width, a.height, a.noise, a.seed),
            Preset::Xor => xor_scene(30, 90, a.width, a.height, a.noise, a.seed),
        },
        _ => return Err(usage("give exactly one of --spec or --preset")),
    };
    base.validate()?;
    if a.name.is_empty() || a.name.contains(['/', '\\']) {
        return Err(usage("--name must be a plain file stem"));
    }
    let mut entries = Vec::new();
    for i in 0..a.count {
        let mut spec = base.clone();
        spec.seed = base.seed.wrapping_add(i as u64);
        let (cube, mask) = render_scene(&spec)?;
        let stem = if a.count == 1 {
            a.name.clone()
        } else {
            format!("{}_{i:03}", a.name)
        };
        std::fs::create_dir_all(&a.out_dir).with_context(|| format!("creating {}", a.out_dir.display()))?;
        save_cube(&cube, &a.out_dir.join(format!("{stem}.hdr")))?;
        save_mask(&mask, &a.out_dir.join(format!("{stem}.pgm")))?;
        write(&a.out_dir.join(format!("{stem}.scene.json")), spec.to_json() + "\n")?;
        entries.push(ManifestEntry {
            cube: format!("{stem}.hdr").into(),
            mask: format!("{stem}.pgm").into(),
            split: Split::Train,
        });
    }
    let manifest_path = a.out_dir.join("manifest.json");
    let manifest = json!({ "entries": entries, "seed": base.seed });
    write(&manifest_path, serde_json::to_string_pretty(&manifest)? + "\n")?;
    run_log(
        &manifest_path,
        "synth",
        cfg,
        Some(base.seed),
        json!({ "scenes": a.count, "preset": a.preset.map(|p| format!("{p:?}").to_lowercase()) }),
    )
}
