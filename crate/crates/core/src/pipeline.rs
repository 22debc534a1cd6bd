//! Batch orchestration: refine, extract references, run QC with a batch-wide
//! angle barrier, measure and judge compliance, then emit reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cloud::LabeledCloud;
use crate::compliance::{evaluate, ComplianceReport, Standards, Verdict};
use crate::measure::{measure_ramp, MeasureParams, MeasureReport, MeasurementRecord};
use crate::qc::{batch_angle_flags, run_qc, QcError, QcMeasures, QcParams, QcReason, QcVerdict};
use crate::reference::{extract_reference, RampGeometry, ReferenceExport};
use crate::refine::{dump_stages, refine_components, RefineParams, RefinedComponents};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub refine: RefineParams,
    pub qc: QcParams,
    pub measure: MeasureParams,
    /// JSON standards table overriding the built-in thresholds.
    pub standards: Option<PathBuf>,
    /// Multiplier taking input coordinates to feet.
    pub scale: f64,
    pub seed: u64,
    pub out: PathBuf,
    pub debug_dump: bool,
    pub workers: usize,
    pub margins: Vec<u32>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            refine: RefineParams::default(),
            qc: QcParams::default(),
            measure: MeasureParams::default(),
            standards: None,
            scale: 1.0,
            seed: 0,
            out: PathBuf::from("out"),
            debug_dump: false,
            workers: 1,
            margins: vec![5, 10],
        }
    }
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self, PipelineError> {
        serde_json::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        Self::from_json(&std::fs::read_to_string(path).map_err(io_err(path))?)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let cfg = |m: String| Err(PipelineError::Config(m));
        if let Err(m) = self.refine.validate() {
            return cfg(format!("refine: {m}"));
        }
        if let Err(m) = self.qc.validate() {
            return cfg(format!("qc: {m}"));
        }
        if let Err(e) = self.measure.validate() {
            return cfg(format!("measure: {e}"));
        }
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return cfg("scale must be positive".into());
        }
        if self.workers == 0 {
            return cfg("workers must be at least 1".into());
        }
        Ok(())
    }

    pub fn load_standards(&self) -> Result<Standards, PipelineError> {
        match &self.standards {
            None => Ok(Standards::default()),
            Some(p) => Standards::from_json(&std::fs::read_to_string(p).map_err(io_err(p))?)
                .map_err(|e| PipelineError::Config(e.to_string())),
        }
    }
}

/// Seed for one ramp, derived from the batch seed and the ramp id so results
/// do not depend on input order or scheduling.
pub fn ramp_seed(base: u64, id: &str) -> u64 {
    let mut h: u64 = 0xCBF2_9CE4_8422_2325;
    for b in id.bytes() {
        h = (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01B3);
    }
    let mut z = h ^ base.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RampStatus {
    Processed,
    Disqualified,
    Errored,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QcSummaryRow {
    pub density: Option<f64>,
    pub angles: Option<[f64; 4]>,
    pub edge_angle: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RampReport {
    pub schema_version: u32,
    pub id: String,
    pub status: RampStatus,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub qc_measures: Option<QcSummaryRow>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub qc: Option<QcVerdict>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference: Option<ReferenceExport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub measurements: Option<MeasureReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub compliance: Option<ComplianceReport>,
}

impl RampReport {
    pub fn verdict(&self) -> Option<Verdict> {
        match self.status {
            RampStatus::Disqualified => Some(Verdict::Disqualified),
            _ => self.compliance.as_ref().map(|c| c.verdict),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct BatchCounts {
    pub inputs: usize,
    pub processed: usize,
    pub disqualified: usize,
    pub errored: usize,
    pub compliant: usize,
    pub non_compliant: usize,
    pub needs_field_verification: usize,
    /// Disqualification reasons by kind.
    pub reasons: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryEntry {
    pub id: String,
    pub status: RampStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verdict: Option<Verdict>,
    pub reasons: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BatchSummary {
    pub schema_version: u32,
    /// Seconds since the Unix epoch; the only field that changes between identical runs.
    pub generated_at: u64,
    pub seed: u64,
    pub counts: BatchCounts,
    pub warnings: Vec<String>,
    pub ramps: Vec<SummaryEntry>,
}

#[derive(Debug, Clone)]
pub struct BatchOutput {
    pub ramps: Vec<RampReport>,
    pub summary: BatchSummary,
}

/// One batch member: its id and either the loaded cloud or the load error.
pub type BatchInput = (String, Result<LabeledCloud, String>);

struct Stage1 {
    cloud: LabeledCloud,
    refined: RefinedComponents,
    geometry: RampGeometry,
    measures: QcMeasures,
}

fn reason_kind(r: &QcReason) -> &'static str {
    match r {
        QcReason::DensityTooLow { .. } => "DensityTooLow",
        QcReason::AngleOutlier { .. } => "AngleOutlier",
        QcReason::EdgesNotParallel { .. } => "EdgesNotParallel",
        QcReason::CheckFailed { .. } => "CheckFailed",
    }
}

fn stage1(cloud: LabeledCloud, config: &PipelineConfig, seed: u64) -> Result<Stage1, String> {
    let params = RefineParams { seed, ..config.refine.clone() };
    let refined = refine_components(&cloud, &params).map_err(|e| format!("refine: {e}"))?;
    let (c, l, r) = (refined.points(&cloud, 0), refined.points(&cloud, 1), refined.points(&cloud, 2));
    let geometry = extract_reference(&c, &l, &r, &refined.bottom_line, params.candidate_cap, seed)
        .map_err(|e| format!("reference: {e}"))?;
    let measures = QcMeasures::compute(&cloud, &refined, &geometry.refs);
    if config.debug_dump {
        let dir = config.out.join("debug").join(&cloud.id);
        dump_stages(&dir, &cloud, &refined).map_err(|e| format!("debug dump: {e}"))?;
        let text = serde_json::to_string_pretty(&geometry.export()).expect("reference serializes");
        std::fs::write(dir.join("reference.json"), text).map_err(|e| format!("debug dump: {e}"))?;
    }
    Ok(Stage1 { cloud, refined, geometry, measures })
}

fn summary_row(m: &QcMeasures) -> QcSummaryRow {
    QcSummaryRow { density: m.density.clone().ok(), angles: m.angles.clone().ok(), edge_angle: m.edge_angle.clone().ok() }
}

/// Runs the whole pipeline over a batch. With `measure` false the ramps stop after QC.
/// Ramps are reported in id order; every input appears exactly once.
pub fn process_batch(
    inputs: Vec<BatchInput>,
    config: &PipelineConfig,
    standards: &Standards,
    measure: bool,
) -> Result<BatchOutput, PipelineError> {
    config.validate()?;
    if inputs.is_empty() {
        return Err(PipelineError::Config("no inputs".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| PipelineError::Config(e.to_string()))?;

    let mut inputs = inputs;
    inputs.sort_by(|a, b| a.0.cmp(&b.0));
    let mut warnings = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    let inputs: Vec<(String, Result<LabeledCloud, String>)> = inputs
        .into_iter()
        .map(|(id, c)| {
            if seen.insert(id.clone()) {
                (id, c)
            } else {
                let e = Err(format!("duplicate ramp id {id}"));
                (id, e)
            }
        })
        .collect();

    let first: Vec<(String, u64, Result<Stage1, String>)> = pool.install(|| {
        inputs
            .into_par_iter()
            .map(|(id, cloud)| {
                let seed = ramp_seed(config.seed, &id);
                let s = cloud.and_then(|c| stage1(c, config, seed));
                (id, seed, s)
            })
            .collect()
    });

    // Barrier: angle statistics need every ramp's corners.
    let ok: Vec<&QcMeasures> = first.iter().filter_map(|(_, _, s)| s.as_ref().ok().map(|s| &s.measures)).collect();
    let flags = match batch_angle_flags(&ok, &config.qc) {
        Ok(f) => f,
        Err(e @ QcError::InsufficientPopulation { .. }) => {
            warnings.push(format!("corner-angle filter skipped: {e}"));
            vec![Vec::new(); ok.len()]
        }
        Err(e) => {
            let reason = QcReason::CheckFailed { check: "angle statistics".into(), message: e.to_string() };
            vec![vec![reason]; ok.len()]
        }
    };
    let mut flags = flags.into_iter();

    let staged: Vec<(String, u64, Result<(Stage1, QcVerdict), String>)> = first
        .into_iter()
        .map(|(id, seed, s)| {
            let s = s.map(|s| {
                let f = flags.next().expect("one flag set per ramp");
                let verdict = run_qc(&s.measures, Ok(&f), &config.qc);
                (s, verdict)
            });
            (id, seed, s)
        })
        .collect();

    let ramps: Vec<RampReport> = pool.install(|| {
        staged
            .into_par_iter()
            .map(|(id, seed, s)| finish(id, seed, s, config, standards, measure))
            .collect()
    });
    let summary = summarize(&ramps, config.seed, warnings);
    Ok(BatchOutput { ramps, summary })
}

fn finish(
    id: String,
    seed: u64,
    staged: Result<(Stage1, QcVerdict), String>,
    config: &PipelineConfig,
    standards: &Standards,
    measure: bool,
) -> RampReport {
    let mut report = RampReport {
        schema_version: SCHEMA_VERSION,
        id,
        status: RampStatus::Errored,
        seed,
        error: None,
        qc_measures: None,
        qc: None,
        reference: None,
        measurements: None,
        compliance: None,
    };
    let (s, verdict) = match staged {
        Ok(v) => v,
        Err(e) => {
            report.error = Some(e);
            return report;
        }
    };
    report.qc_measures = Some(summary_row(&s.measures));
    report.reference = Some(s.geometry.export());
    report.qc = Some(verdict.clone());
    if !verdict.pass {
        report.status = RampStatus::Disqualified;
        return report;
    }
    report.status = RampStatus::Processed;
    if measure {
        match measure_ramp(&s.cloud, &s.refined, &s.geometry, &verdict, &config.measure) {
            Ok(m) => {
                report.compliance = Some(evaluate(&m.record, &verdict, standards));
                report.measurements = Some(m);
            }
            Err(e) => {
                report.status = RampStatus::Errored;
                report.error = Some(format!("measure: {e}"));
            }
        }
    }
    report
}

fn summarize(ramps: &[RampReport], seed: u64, warnings: Vec<String>) -> BatchSummary {
    let mut counts = BatchCounts { inputs: ramps.len(), ..Default::default() };
    let mut entries = Vec::with_capacity(ramps.len());
    for r in ramps {
        match r.status {
            RampStatus::Processed => counts.processed += 1,
            RampStatus::Disqualified => counts.disqualified += 1,
            RampStatus::Errored => counts.errored += 1,
        }
        match r.compliance.as_ref().map(|c| c.verdict) {
            Some(Verdict::Compliant) => counts.compliant += 1,
            Some(Verdict::NonCompliant) => counts.non_compliant += 1,
            Some(Verdict::NeedsFieldVerification) => counts.needs_field_verification += 1,
            _ => {}
        }
        let reasons: Vec<&QcReason> = r.qc.iter().flat_map(|q| q.reasons.iter()).collect();
        if r.status == RampStatus::Disqualified {
            for q in &reasons {
                *counts.reasons.entry(reason_kind(q).to_string()).or_insert(0) += 1;
            }
        }
        entries.push(SummaryEntry {
            id: r.id.clone(),
            status: r.status,
            verdict: r.verdict(),
            reasons: reasons.iter().map(|q| q.to_string()).collect(),
            error: r.error.clone(),
        });
    }
    let generated_at =
        std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    BatchSummary { schema_version: SCHEMA_VERSION, generated_at, seed, counts, warnings, ramps: entries }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|v| format!("{v}")).unwrap_or_default()
}

/// `id,status,verdict,A1,...,L3`; invalid values are empty cells.
pub fn measurements_csv(ramps: &[RampReport]) -> String {
    let mut s = String::from("id,status,verdict");
    for name in MeasurementRecord::column_names() {
        s.push(',');
        s.push_str(&name);
    }
    s.push('\n');
    for r in ramps {
        let verdict = r.verdict().map(|v| v.to_string()).unwrap_or_default();
        let status = serde_json::to_value(r.status).unwrap();
        write!(s, "{},{},{}", r.id, status.as_str().unwrap(), verdict).unwrap();
        let record = r.measurements.as_ref().map(|m| m.record.clone()).unwrap_or_default();
        for (_, v) in record.entries() {
            s.push(',');
            s.push_str(&fmt_opt(v));
        }
        s.push('\n');
    }
    s
}

/// Per-ramp QC measures and verdicts.
pub fn qc_summary_csv(ramps: &[RampReport]) -> String {
    let mut s = String::from("id,density,angle_p1,angle_p2,angle_p4,angle_p3,edge_angle,verdict,reasons\n");
    for r in ramps {
        let m = r.qc_measures.as_ref();
        let angles = m.and_then(|m| m.angles);
        let verdict = match (&r.qc, r.status) {
            (_, RampStatus::Errored) if r.qc.is_none() => "error",
            (Some(q), _) if q.pass => "pass",
            (Some(_), _) => "fail",
            (None, _) => "error",
        };
        let reasons: Vec<String> = r.qc.iter().flat_map(|q| q.reasons.iter().map(|x| x.to_string())).collect();
        write!(s, "{},{}", r.id, fmt_opt(m.and_then(|m| m.density))).unwrap();
        for k in 0..4 {
            write!(s, ",{}", fmt_opt(angles.map(|a| a[k]))).unwrap();
        }
        let reasons = reasons.join("; ").replace('"', "'");
        writeln!(s, ",{},{},\"{}\"", fmt_opt(m.and_then(|m| m.edge_angle)), verdict, reasons).unwrap();
    }
    s
}

/// Writes `summary.json`, `ramps/<id>.json`, `measurements.csv` and `qc_summary.csv` under `dir`.
pub fn write_outputs(dir: &Path, out: &BatchOutput) -> Result<(), PipelineError> {
    let ramps_dir = dir.join("ramps");
    std::fs::create_dir_all(&ramps_dir).map_err(io_err(&ramps_dir))?;
    for r in &out.ramps {
        let p = ramps_dir.join(format!("{}.json", r.id));
        std::fs::write(&p, serde_json::to_string_pretty(r).expect("report serializes")).map_err(io_err(&p))?;
    }
    let files = [
        ("summary.json", serde_json::to_string_pretty(&out.summary).expect("summary serializes")),
        ("measurements.csv", measurements_csv(&out.ramps)),
        ("qc_summary.csv", qc_summary_csv(&out.ramps)),
    ];
    for (name, text) in files {
        let p = dir.join(name);
        std::fs::write(&p, text).map_err(io_err(&p))?;
    }
    Ok(())
}

/// Reads the `measurements.csv` written by [`write_outputs`], keeping only measured ramps.
pub fn read_measurements_csv(path: &Path) -> Result<BTreeMap<String, MeasurementRecord>, PipelineError> {
    let bad = |m: String| PipelineError::Config(format!("{}: {m}", path.display()));
    let mut rdr = csv::Reader::from_path(path).map_err(|e| bad(e.to_string()))?;
    let headers = rdr.headers().map_err(|e| bad(e.to_string()))?.clone();
    let names = MeasurementRecord::column_names();
    let mut out = BTreeMap::new();
    for row in rdr.records() {
        let row = row.map_err(|e| bad(e.to_string()))?;
        let mut map = BTreeMap::new();
        for (h, cell) in headers.iter().zip(row.iter()) {
            if names.iter().any(|n| n == h) {
                let v = if cell.is_empty() {
                    None
                } else {
                    Some(cell.parse::<f64>().map_err(|_| bad(format!("{h}: {cell:?} is not a number")))?)
                };
                map.insert(h.to_string(), v);
            }
        }
        if row.get(1) != Some("processed") {
            continue;
        }
        let record: MeasurementRecord =
            serde_json::from_value(serde_json::to_value(map).unwrap()).map_err(|e| bad(e.to_string()))?;
        out.insert(row.get(0).unwrap_or_default().to_string(), record);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds_depend_on_id_and_base_only() {
        assert_eq!(ramp_seed(3, "ramp-001"), ramp_seed(3, "ramp-001"));
        assert_ne!(ramp_seed(3, "ramp-001"), ramp_seed(3, "ramp-002"));
        assert_ne!(ramp_seed(3, "ramp-001"), ramp_seed(4, "ramp-001"));
    }

    #[test]
    fn config_defaults_validate_and_reject_zero_workers() {
        assert!(PipelineConfig::default().validate().is_ok());
        let c = PipelineConfig { workers: 0, ..Default::default() };
        assert!(matches!(c.validate(), Err(PipelineError::Config(_))));
        let c = PipelineConfig::from_json(r#"{"seed": 9, "measure": {"step_ft": 0.5}}"#).unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.measure.step_ft, 0.5);
        assert_eq!(c.measure.neighbors, 300);
        assert!(PipelineConfig::from_json(r#"{"sed": 9}"#).is_err());
    }

    #[test]
    fn empty_batch_is_a_config_error() {
        let r = process_batch(Vec::new(), &PipelineConfig::default(), &Standards::default(), true);
        assert!(matches!(r, Err(PipelineError::Config(_))));
    }

    #[test]
    fn load_failures_are_recorded_not_fatal() {
        let inputs = vec![("b".to_string(), Err("unreadable".to_string())), ("a".to_string(), Err("gone".to_string()))];
        let out = process_batch(inputs, &PipelineConfig::default(), &Standards::default(), true).unwrap();
        assert_eq!(out.ramps.iter().map(|r| r.id.as_str()).collect::<Vec<_>>(), ["a", "b"]);
        assert_eq!(out.summary.counts.errored, 2);
        assert!(measurements_csv(&out.ramps).lines().nth(1).unwrap().starts_with("a,errored,,"));
        assert!(qc_summary_csv(&out.ramps).contains("b,,,,,,,error,"));
    }
}
