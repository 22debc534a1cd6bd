//! Compliance verdicts against the feature standards table and comparison
//! with manual field measurements.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Read;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::measure::{Feature, MeasurementRecord};
use crate::qc::QcVerdict;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ComplianceError {
    #[error("every sub-measurement of feature {0} is invalid")]
    AllInvalid(Feature),
    #[error("manual measurements share no feature with the automated report")]
    NoSharedFeatures,
    #[error("standards table: {0}")]
    BadStandards(String),
    #[error("manual measurements: {0}")]
    BadManual(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    /// The value must not exceed the threshold.
    UpperBound,
    /// The value must be at least the threshold.
    LowerBound,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplianceStandard {
    pub feature: Feature,
    pub direction: Direction,
    pub threshold: f64,
}

impl ComplianceStandard {
    /// Thresholds are inclusive.
    pub fn passes(&self, value: f64) -> bool {
        match self.direction {
            Direction::UpperBound => value <= self.threshold,
            Direction::LowerBound => value >= self.threshold,
        }
    }
}

/// One standard per feature, in feature order.
#[derive(Debug, Clone, PartialEq)]
pub struct Standards {
    rows: Vec<ComplianceStandard>,
}

impl Default for Standards {
    fn default() -> Self {
        use Direction::*;
        let row = |feature, direction, threshold| ComplianceStandard { feature, direction, threshold };
        Self {
            rows: vec![
                row(Feature::A, UpperBound, 7.7),
                row(Feature::B, UpperBound, 1.7),
                row(Feature::C, LowerBound, 49.75),
                row(Feature::D, UpperBound, 9.2),
                row(Feature::E, UpperBound, 9.2),
                row(Feature::F, UpperBound, 1.7),
                row(Feature::G, UpperBound, 5.2),
                row(Feature::H, UpperBound, 5.2),
                row(Feature::I, UpperBound, 1.7),
                row(Feature::J, UpperBound, 1.7),
                row(Feature::K, LowerBound, 49.75),
                row(Feature::L, LowerBound, 49.75),
            ],
        }
    }
}

impl Standards {
    /// Builds a table from rows overriding the defaults. Each feature may appear at most once.
    pub fn with_overrides(rows: Vec<ComplianceStandard>) -> Result<Self, ComplianceError> {
        let mut table = Self::default();
        let mut seen = Vec::new();
        for row in rows {
            if seen.contains(&row.feature) {
                return Err(ComplianceError::BadStandards(format!("feature {} listed twice", row.feature)));
            }
            if !row.threshold.is_finite() {
                return Err(ComplianceError::BadStandards(format!("feature {} threshold is not finite", row.feature)));
            }
            seen.push(row.feature);
            *table.rows.iter_mut().find(|r| r.feature == row.feature).unwrap() = row;
        }
        Ok(table)
    }

    pub fn from_json(text: &str) -> Result<Self, ComplianceError> {
        let rows: Vec<ComplianceStandard> =
            serde_json::from_str(text).map_err(|e| ComplianceError::BadStandards(e.to_string()))?;
        Self::with_overrides(rows)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.rows).expect("standards serialize")
    }

    pub fn get(&self, feature: Feature) -> &ComplianceStandard {
        self.rows.iter().find(|r| r.feature == feature).expect("table covers every feature")
    }

    pub fn rows(&self) -> &[ComplianceStandard] {
        &self.rows
    }
}

/// Worst case over the valid sub-measurements: the maximum for upper bounds,
/// the minimum for lower bounds.
pub fn aggregate_feature(values: &[Option<f64>], standard: &ComplianceStandard) -> Result<f64, ComplianceError> {
    let valid = values.iter().flatten().copied();
    let v = match standard.direction {
        Direction::UpperBound => valid.fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.max(v)))),
        Direction::LowerBound => valid.fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.min(v)))),
    };
    v.ok_or(ComplianceError::AllInvalid(standard.feature))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeatureVerdict {
    pub feature: Feature,
    pub direction: Direction,
    pub threshold: f64,
    /// Aggregated value, absent when every sub-measurement is invalid.
    pub value: Option<f64>,
    pub pass: Option<bool>,
    pub subs: Vec<Option<f64>>,
    pub sub_pass: Vec<Option<bool>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Compliant,
    NonCompliant,
    /// Every measured feature passes but some feature could not be measured.
    NeedsFieldVerification,
    /// Quality control rejected the ramp; nothing was judged.
    Disqualified,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Compliant => "compliant",
            Verdict::NonCompliant => "non-compliant",
            Verdict::NeedsFieldVerification => "needs-field-verification",
            Verdict::Disqualified => "disqualified",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComplianceReport {
    pub features: Vec<FeatureVerdict>,
    pub qc: QcVerdict,
    pub verdict: Verdict,
    pub overall_pass: bool,
}

impl ComplianceReport {
    pub fn feature(&self, feature: Feature) -> &FeatureVerdict {
        self.features.iter().find(|f| f.feature == feature).expect("report covers every feature")
    }

    /// Features with no valid sub-measurement, for targeted field follow-up.
    pub fn unmeasured(&self) -> Vec<Feature> {
        self.features.iter().filter(|f| f.value.is_none()).map(|f| f.feature).collect()
    }
}

pub fn evaluate(record: &MeasurementRecord, qc: &QcVerdict, standards: &Standards) -> ComplianceReport {
    let features: Vec<FeatureVerdict> = standards
        .rows()
        .iter()
        .map(|std| {
            let subs = record.feature_values(std.feature);
            let value = aggregate_feature(&subs, std).ok();
            FeatureVerdict {
                feature: std.feature,
                direction: std.direction,
                threshold: std.threshold,
                value,
                pass: value.map(|v| std.passes(v)),
                sub_pass: subs.iter().map(|v| v.map(|v| std.passes(v))).collect(),
                subs,
            }
        })
        .collect();
    let verdict = if !qc.pass {
        Verdict::Disqualified
    } else if features.iter().any(|f| f.pass == Some(false)) {
        Verdict::NonCompliant
    } else if features.iter().any(|f| f.pass.is_none()) {
        Verdict::NeedsFieldVerification
    } else {
        Verdict::Compliant
    };
    ComplianceReport { features, qc: qc.clone(), verdict, overall_pass: verdict == Verdict::Compliant }
}

/// Manual field measurements of one ramp. Values may be given per feature
/// (already aggregated) or per sub-measurement.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ManualRecord {
    pub features: BTreeMap<Feature, f64>,
    pub subs: BTreeMap<(Feature, usize), f64>,
}

impl ManualRecord {
    /// Feature value: the explicit column if present, else the aggregate of its sub columns.
    pub fn feature_value(&self, standard: &ComplianceStandard) -> Option<f64> {
        if let Some(&v) = self.features.get(&standard.feature) {
            return Some(v);
        }
        let subs: Vec<Option<f64>> = (0..standard.feature.sub_count())
            .map(|k| self.subs.get(&(standard.feature, k)).copied())
            .collect();
        aggregate_feature(&subs, standard).ok()
    }
}

/// Reads a CSV whose first column is the ramp id and whose other columns are
/// named by feature (`A`) or sub-measurement (`A2`). Empty cells are missing.
pub fn read_manual_csv<R: Read>(reader: R) -> Result<BTreeMap<String, ManualRecord>, ComplianceError> {
    let bad = |m: String| ComplianceError::BadManual(m);
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| bad(e.to_string()))?.clone();
    let mut columns = Vec::new();
    for name in headers.iter().skip(1) {
        let mut chars = name.chars();
        let feature = chars
            .next()
            .and_then(Feature::from_letter)
            .ok_or_else(|| bad(format!("unknown column {name:?}")))?;
        let rest = chars.as_str();
        let sub = if rest.is_empty() {
            None
        } else {
            match rest.parse::<usize>() {
                Ok(k) if k >= 1 && k <= feature.sub_count() => Some(k - 1),
                _ => return Err(bad(format!("unknown column {name:?}"))),
            }
        };
        columns.push((feature, sub));
    }
    let mut out = BTreeMap::new();
    for (line, row) in rdr.records().enumerate() {
        let row = row.map_err(|e| bad(e.to_string()))?;
        let id = row.get(0).unwrap_or_default().to_string();
        let mut rec = ManualRecord::default();
        for (cell, &(feature, sub)) in row.iter().skip(1).zip(&columns) {
            if cell.is_empty() {
                continue;
            }
            let v: f64 = cell.parse().map_err(|_| bad(format!("row {}: {cell:?} is not a number", line + 2)))?;
            match sub {
                Some(k) => rec.subs.insert((feature, k), v),
                None => rec.features.insert(feature, v),
            };
        }
        out.insert(id, rec);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum MarginClass {
    Agree,
    /// Verdicts differ but both values lie within the given margin percent of the threshold.
    WithinMargin(u32),
    /// Verdicts differ beyond the widest margin examined.
    Beyond(u32),
}

impl fmt::Display for MarginClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MarginClass::Agree => f.write_str("agree"),
            MarginClass::WithinMargin(p) => write!(f, "conflict-within-{p}"),
            MarginClass::Beyond(p) => write!(f, "conflict-beyond-{p}"),
        }
    }
}

impl Serialize for MarginClass {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// Half-width of the tolerance band around `threshold` at margin `p` percent.
pub fn tolerance(threshold: f64, p: f64) -> f64 {
    (threshold * p / 100.0).abs()
}

fn within(threshold: f64, p: f64, v: f64) -> bool {
    let d = tolerance(threshold, p);
    threshold - d <= v && v <= threshold + d
}

/// Classifies one automated/manual pair. `margins` are examined smallest first.
pub fn classify(standard: &ComplianceStandard, automated: f64, manual: f64, margins: &[u32]) -> MarginClass {
    if standard.passes(automated) == standard.passes(manual) {
        return MarginClass::Agree;
    }
    let mut sorted = margins.to_vec();
    sorted.sort_unstable();
    for &p in &sorted {
        let t = standard.threshold;
        if within(t, p as f64, automated) && within(t, p as f64, manual) {
            return MarginClass::WithinMargin(p);
        }
    }
    MarginClass::Beyond(sorted.last().copied().unwrap_or(0))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MarginEntry {
    /// Feature letter, or sub-measurement name such as `"A2"`.
    pub name: String,
    pub threshold: f64,
    pub automated: f64,
    pub manual: f64,
    /// `(p, δ)` for each margin examined.
    pub tolerances: Vec<(u32, f64)>,
    pub classification: MarginClass,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MarginAnalysis {
    pub margins: Vec<u32>,
    pub features: Vec<MarginEntry>,
    pub sub_measurements: Vec<MarginEntry>,
}

impl MarginAnalysis {
    /// Count of feature-level entries per classification.
    pub fn tally(&self) -> BTreeMap<String, usize> {
        let mut t = BTreeMap::new();
        for e in &self.features {
            *t.entry(e.classification.to_string()).or_insert(0) += 1;
        }
        t
    }
}

/// Compares automated and manual verdicts at feature and sub-measurement level.
pub fn margin_compare(
    auto: &ComplianceReport,
    manual: &ManualRecord,
    margins: &[u32],
    standards: &Standards,
) -> Result<MarginAnalysis, ComplianceError> {
    let mut margins = margins.to_vec();
    margins.sort_unstable();
    margins.dedup();
    let entry = |name: String, std: &ComplianceStandard, a: f64, m: f64| MarginEntry {
        name,
        threshold: std.threshold,
        automated: a,
        manual: m,
        tolerances: margins.iter().map(|&p| (p, tolerance(std.threshold, p as f64))).collect(),
        classification: classify(std, a, m, &margins),
    };
    let mut features = Vec::new();
    let mut subs = Vec::new();
    for fv in &auto.features {
        let std = standards.get(fv.feature);
        if let (Some(a), Some(m)) = (fv.value, manual.feature_value(std)) {
            features.push(entry(fv.feature.to_string(), std, a, m));
        }
        for (k, a) in fv.subs.iter().enumerate() {
            if let (Some(a), Some(&m)) = (a, manual.subs.get(&(fv.feature, k))) {
                subs.push(entry(format!("{}{}", fv.feature, k + 1), std, *a, m));
            }
        }
    }
    if features.is_empty() {
        return Err(ComplianceError::NoSharedFeatures);
    }
    Ok(MarginAnalysis { margins, features, sub_measurements: subs })
}
