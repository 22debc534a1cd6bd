use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// The twelve regulated features of a curb ramp.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Feature {
    A,
    B,
    C,
    D,
    E,
    F,
    G,
    H,
    I,
    J,
    K,
    L,
}

impl Feature {
    pub const ALL: [Feature; 12] = [
        Feature::A,
        Feature::B,
        Feature::C,
        Feature::D,
        Feature::E,
        Feature::F,
        Feature::G,
        Feature::H,
        Feature::I,
        Feature::J,
        Feature::K,
        Feature::L,
    ];

    /// Number of sub-measurements recorded for the feature.
    pub fn sub_count(self) -> usize {
        match self {
            Feature::D | Feature::E => 1,
            Feature::F => 2,
            _ => 3,
        }
    }

    /// Offset of the feature's first slot in the flat 31-value layout.
    fn offset(self) -> usize {
        Feature::ALL.iter().take_while(|&&f| f != self).map(|f| f.sub_count()).sum()
    }

    pub fn letter(self) -> char {
        (b'A' + Feature::ALL.iter().position(|&f| f == self).unwrap() as u8) as char
    }

    pub fn from_letter(c: char) -> Option<Feature> {
        let k = (c.to_ascii_uppercase() as u8).checked_sub(b'A')? as usize;
        Feature::ALL.get(k).copied()
    }

    pub fn description(self) -> &'static str {
        match self {
            Feature::A => "ramp slope (%)",
            Feature::B => "ramp cross slope (%)",
            Feature::C => "ramp width (in)",
            Feature::D => "left flare slope (%)",
            Feature::E => "right flare slope (%)",
            Feature::F => "gutter slope (%)",
            Feature::G => "gutter cross slope (%)",
            Feature::H => "road cross slope (%)",
            Feature::I => "landing cross slope (%)",
            Feature::J => "landing slope (%)",
            Feature::K => "landing width (in)",
            Feature::L => "landing depth (in)",
        }
    }

    /// Widths and depths are reported in inches; everything else in percent grade.
    pub fn is_length(self) -> bool {
        matches!(self, Feature::C | Feature::K | Feature::L)
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

pub const MEASUREMENT_COUNT: usize = 31;

/// All 31 sub-measurements of one ramp. `None` marks an invalid value.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MeasurementRecord {
    values: [Option<f64>; MEASUREMENT_COUNT],
}

impl MeasurementRecord {
    pub fn new() -> Self {
        Self::default()
    }

    /// Every sub-measurement of each feature set to the same value.
    pub fn uniform(value: impl Fn(Feature) -> f64) -> Self {
        let mut r = Self::new();
        for f in Feature::ALL {
            for k in 0..f.sub_count() {
                r.set(f, k, Some(value(f)));
            }
        }
        r
    }

    pub fn get(&self, feature: Feature, sub: usize) -> Option<f64> {
        assert!(sub < feature.sub_count(), "{feature}{} out of range", sub + 1);
        self.values[feature.offset() + sub]
    }

    pub fn set(&mut self, feature: Feature, sub: usize, value: Option<f64>) {
        assert!(sub < feature.sub_count(), "{feature}{} out of range", sub + 1);
        self.values[feature.offset() + sub] = value.filter(|v| v.is_finite());
    }

    pub fn feature_values(&self, feature: Feature) -> Vec<Option<f64>> {
        (0..feature.sub_count()).map(|k| self.get(feature, k)).collect()
    }

    /// `(name, value)` pairs in column order, e.g. `("A1", Some(7.1))`.
    pub fn entries(&self) -> Vec<(String, Option<f64>)> {
        Feature::ALL
            .iter()
            .flat_map(|&f| (0..f.sub_count()).map(move |k| (f, k)))
            .map(|(f, k)| (format!("{}{}", f, k + 1), self.get(f, k)))
            .collect()
    }

    pub fn valid_count(&self) -> usize {
        self.values.iter().filter(|v| v.is_some()).count()
    }

    pub fn column_names() -> Vec<String> {
        Self::new().entries().into_iter().map(|(n, _)| n).collect()
    }

    fn parse_name(name: &str) -> Option<(Feature, usize)> {
        let mut chars = name.chars();
        let f = Feature::from_letter(chars.next()?)?;
        let k: usize = chars.as_str().parse().ok()?;
        (k >= 1 && k <= f.sub_count()).then_some((f, k - 1))
    }
}

impl Serialize for MeasurementRecord {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let map: BTreeMap<String, Option<f64>> = self.entries().into_iter().collect();
        map.serialize(s)
    }
}

impl<'de> Deserialize<'de> for MeasurementRecord {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let map = BTreeMap::<String, Option<f64>>::deserialize(d)?;
        let mut r = MeasurementRecord::new();
        for (name, v) in map {
            let (f, k) = Self::parse_name(&name)
                .ok_or_else(|| serde::de::Error::custom(format!("unknown measurement {name}")))?;
            r.set(f, k, v);
        }
        Ok(r)
    }
}
