use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use curbramp_core::cloud::load_labeled_cloud;
use curbramp_core::compliance::{evaluate, margin_compare, read_manual_csv, MarginAnalysis, Standards};
use curbramp_core::pipeline::{process_batch, read_measurements_csv, write_outputs, PipelineConfig, PipelineError};
use curbramp_core::qc::QcVerdict;
use curbramp_core::raster::{adaptive_dilate, tile_kernels, tile_patches, RasterError};
use curbramp_core::synth::{corpus, generate_named, write_ramp, RampSpec, SpecRanges, SynthError};

use crate::{BatchArgs, CompareArgs, RasterArgs, SynthArgs};

#[derive(Debug)]
pub enum CliError {
    /// Bad configuration or arguments; exit code 2.
    Config(String),
    /// Reading or writing files failed; exit code 1.
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Io(_) => 1,
            CliError::Config(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) | CliError::Io(m) => f.write_str(m),
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Config(_) => CliError::Config(e.to_string()),
            PipelineError::Io { .. } => CliError::Io(e.to_string()),
        }
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::InvalidSpec(_) => CliError::Config(e.to_string()),
            _ => CliError::Io(e.to_string()),
        }
    }
}

impl From<RasterError> for CliError {
    fn from(e: RasterError) -> Self {
        match e {
            RasterError::Io(_) => CliError::Io(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| CliError::Io(format!("{}: {e}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    fs::write(path, serde_json::to_string_pretty(value).expect("serializable")).map_err(io(path))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(io(path))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn batch_config(a: &BatchArgs) -> Result<PipelineConfig, CliError> {
    let mut config = match &a.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(v) = a.scale {
        config.scale = v;
    }
    if let Some(v) = a.seed {
        config.seed = v;
    }
    if let Some(v) = &a.out {
        config.out = v.clone();
    }
    if let Some(v) = a.workers {
        config.workers = v;
    }
    if let Some(v) = &a.standards {
        config.standards = Some(v.clone());
    }
    config.debug_dump |= a.debug_dump;
    config.validate()?;
    Ok(config)
}

pub fn process(a: &BatchArgs, measure: bool) -> Result<(), CliError> {
    let config = batch_config(a)?;
    let standards = config.load_standards()?;
    let inputs = a
        .inputs
        .iter()
        .map(|p| {
            let id = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| p.display().to_string());
            (id, load_labeled_cloud(p, config.scale).map_err(|e| format!("{}: {e}", p.display())))
        })
        .collect();
    let out = process_batch(inputs, &config, &standards, measure)?;
    write_outputs(&config.out, &out)?;
    let c = &out.summary.counts;
    println!(
        "{} ramps: {} processed, {} disqualified, {} errored",
        c.inputs, c.processed, c.disqualified, c.errored
    );
    if measure {
        println!(
            "compliance: {} compliant, {} non-compliant, {} need field verification",
            c.compliant, c.non_compliant, c.needs_field_verification
        );
    }
    for e in out.summary.ramps.iter().filter(|e| !e.reasons.is_empty() || e.error.is_some()) {
        let why = e.error.clone().unwrap_or_else(|| e.reasons.join("; "));
        println!("  {}: {why}", e.id);
    }
    for w in &out.summary.warnings {
        eprintln!("warning: {w}");
    }
    println!("reports written to {}", config.out.display());
    Ok(())
}

pub fn synth(a: &SynthArgs) -> Result<(), CliError> {
    match a.n {
        None => {
            let mut spec: RampSpec = match &a.spec {
                Some(p) => read_json(p)?,
                None => RampSpec { seed: a.seed, ..RampSpec::default() },
            };
            if a.noise_free {
                spec = spec.noise_free();
            }
            let (cloud, truth) = generate_named(&spec, "ramp")?;
            write_ramp(&a.out, &cloud, &truth)?;
            println!("wrote 1 ramp to {}", a.out.display());
        }
        Some(n) => {
            let mut ranges: SpecRanges = match &a.spec {
                Some(p) => read_json(p)?,
                None => SpecRanges::default(),
            };
            if a.noise_free {
                ranges.base = ranges.base.noise_free();
            }
            let ramps = corpus(a.seed, n, &ranges)?;
            for (cloud, truth) in &ramps {
                write_ramp(&a.out, cloud, truth)?;
            }
            println!("wrote {} ramps to {}", ramps.len(), a.out.display());
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct PatchSidecar {
    #[serde(flatten)]
    meta: curbramp_core::raster::PatchMeta,
    dilated: bool,
    tile_px: usize,
    kappa_max: usize,
    /// Kernel side chosen for each density tile, row-major.
    kernels: Vec<usize>,
    raw_nonzero: usize,
    nonzero: usize,
}

pub fn raster(a: &RasterArgs) -> Result<(), CliError> {
    let cloud = load_labeled_cloud(&a.input, a.scale).map_err(|e| CliError::Io(format!("{}: {e}", a.input.display())))?;
    let grid = tile_patches(&cloud, a.patch_ft, a.overlap, a.canvas)?;
    fs::create_dir_all(&a.out).map_err(io(&a.out))?;
    for (k, patch) in grid.patches.iter().enumerate() {
        let raw = &patch.image;
        let (img, kernels) = if a.no_dilate {
            (raw.clone(), Vec::new())
        } else {
            (adaptive_dilate(raw, a.tile_px, a.kappa_max)?, tile_kernels(raw, a.tile_px, a.kappa_max))
        };
        let stem = format!("{}_patch_{k:03}", cloud.id);
        let pgm = a.out.join(format!("{stem}.pgm"));
        let mut file = std::io::BufWriter::new(fs::File::create(&pgm).map_err(io(&pgm))?);
        img.write_pgm(&mut file).map_err(io(&pgm))?;
        let sidecar = PatchSidecar {
            meta: grid.meta(k).expect("patch exists"),
            dilated: !a.no_dilate,
            tile_px: a.tile_px,
            kappa_max: a.kappa_max,
            kernels,
            raw_nonzero: raw.nonzero(),
            nonzero: img.nonzero(),
        };
        write_json(&a.out.join(format!("{stem}.json")), &sidecar)?;
    }
    println!("wrote {} patches to {}", grid.patches.len(), a.out.display());
    Ok(())
}

#[derive(Serialize)]
struct CompareReport {
    schema_version: u32,
    margins: Vec<u32>,
    ramps: BTreeMap<String, MarginAnalysis>,
    /// Feature-level classification counts over all ramps.
    features: BTreeMap<String, usize>,
    /// Sub-measurement-level classification counts over all ramps.
    sub_measurements: BTreeMap<String, usize>,
    feature_agreement_pct: f64,
    skipped: BTreeMap<String, String>,
}

pub fn compare(a: &CompareArgs) -> Result<(), CliError> {
    let standards = match &a.standards {
        Some(p) => Standards::from_json(&fs::read_to_string(p).map_err(io(p))?)
            .map_err(|e| CliError::Config(e.to_string()))?,
        None => Standards::default(),
    };
    let csv_path: PathBuf = if a.auto.is_dir() { a.auto.join("measurements.csv") } else { a.auto.clone() };
    let auto = read_measurements_csv(&csv_path)?;
    let manual_file = fs::File::open(&a.manual).map_err(io(&a.manual))?;
    let manual = read_manual_csv(manual_file).map_err(|e| CliError::Config(e.to_string()))?;

    let shared: Vec<&String> = auto.keys().filter(|id| manual.contains_key(*id)).collect();
    if shared.is_empty() {
        return Err(CliError::Config("no ramp id appears in both the automated and manual measurements".into()));
    }
    let mut report = CompareReport {
        schema_version: curbramp_core::pipeline::SCHEMA_VERSION,
        margins: {
            let mut m = a.margin.clone();
            m.sort_unstable();
            m.dedup();
            m
        },
        ramps: BTreeMap::new(),
        features: BTreeMap::new(),
        sub_measurements: BTreeMap::new(),
        feature_agreement_pct: 0.0,
        skipped: BTreeMap::new(),
    };
    for id in shared {
        let verdicts = evaluate(&auto[id], &QcVerdict::passed(), &standards);
        match margin_compare(&verdicts, &manual[id], &a.margin, &standards) {
            Ok(m) => {
                for e in &m.features {
                    *report.features.entry(e.classification.to_string()).or_insert(0) += 1;
                }
                for e in &m.sub_measurements {
                    *report.sub_measurements.entry(e.classification.to_string()).or_insert(0) += 1;
                }
                report.ramps.insert(id.clone(), m);
            }
            Err(e) => {
                report.skipped.insert(id.clone(), e.to_string());
            }
        }
    }
    let total: usize = report.features.values().sum();
    let agree = report.features.get("agree").copied().unwrap_or(0);
    report.feature_agreement_pct = if total > 0 { 100.0 * agree as f64 / total as f64 } else { 0.0 };

    println!("{} ramps compared, {} feature comparisons", report.ramps.len(), total);
    println!("agreement: {:.1}%", report.feature_agreement_pct);
    for (class, n) in &report.features {
        println!("  {class}: {n}");
    }
    for (id, why) in &report.skipped {
        println!("  skipped {id}: {why}");
    }
    if let Some(out) = &a.out {
        write_json(out, &report)?;
    }
    Ok(())
}
