//! Field comparators and agreement patterns.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::record::{CanonicalRecord, LinkField};

/// Discrete agreement level; 0 is full disagreement.
pub type Level = u8;

pub const DEFAULT_CUTOFFS: [f64; 2] = [0.92, 0.88];
pub const WINKLER_PREFIX_WEIGHT: f64 = 0.1;
pub const WINKLER_MAX_PREFIX: usize = 4;

/// Jaro similarity over Unicode scalar values.
///
/// Window is `max(|s1|, |s2|) / 2 - 1`; transpositions are half the matched
/// characters that appear out of order.
pub fn jaro(s1: &str, s2: &str) -> f64 {
    let a: Vec<char> = s1.chars().collect();
    let b: Vec<char> = s2.chars().collect();
    jaro_chars(&a, &b)
}

fn jaro_chars(a: &[char], b: &[char]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    if a == b {
        return 1.0;
    }
    let window = (a.len().max(b.len()) / 2).saturating_sub(1);
    let mut a_hit = vec![false; a.len()];
    let mut b_hit = vec![false; b.len()];
    let mut matches = 0usize;
    for (i, &ca) in a.iter().enumerate() {
        let lo = i.saturating_sub(window);
        let hi = (i + window + 1).min(b.len());
        for j in lo..hi {
            if !b_hit[j] && b[j] == ca {
                a_hit[i] = true;
                b_hit[j] = true;
                matches += 1;
                break;
            }
        }
    }
    if matches == 0 {
        return 0.0;
    }
    let mut out_of_order = 0usize;
    let mut bj = 0usize;
    for (i, &ca) in a.iter().enumerate() {
        if !a_hit[i] {
            continue;
        }
        while !b_hit[bj] {
            bj += 1;
        }
        if b[bj] != ca {
            out_of_order += 1;
        }
        bj += 1;
    }
    let m = matches as f64;
    let t = out_of_order as f64 / 2.0;
    (m / a.len() as f64 + m / b.len() as f64 + (m - t) / m) / 3.0
}

/// Jaro-Winkler with the standard prefix boost `l * p * (1 - jaro)`.
pub fn jaro_winkler(s1: &str, s2: &str) -> f64 {
    jaro_winkler_with(s1, s2, WINKLER_PREFIX_WEIGHT, WINKLER_MAX_PREFIX)
}

pub fn jaro_winkler_with(s1: &str, s2: &str, prefix_weight: f64, max_prefix: usize) -> f64 {
    let a: Vec<char> = s1.chars().collect();
    let b: Vec<char> = s2.chars().collect();
    let j = jaro_chars(&a, &b);
    let prefix = a
        .iter()
        .zip(&b)
        .take(max_prefix)
        .take_while(|(x, y)| x == y)
        .count();
    (j + prefix as f64 * prefix_weight * (1.0 - j)).min(1.0)
}

/// Maps a similarity onto `cutoffs.len() + 1` levels. Cutoffs are descending.
pub fn discretize_string(sim: f64, cutoffs: &[f64]) -> Level {
    let top = cutoffs.len();
    match cutoffs.iter().position(|&c| sim >= c) {
        Some(i) => (top - i) as Level,
        None => 0,
    }
}

/// 1 when `|a - b| <= tolerance`, else 0.
pub fn compare_numeric(a: i64, b: i64, tolerance: f64) -> Level {
    Level::from((a.abs_diff(b) as f64) <= tolerance)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Comparator {
    JaroWinkler { cutoffs: Vec<f64> },
    Numeric { tolerance: f64 },
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("field {0}: cutoffs must be non-empty, strictly descending and inside (0, 1)")]
    BadCutoffs(LinkField),
    #[error("field {0}: tolerance must be a finite non-negative number")]
    BadTolerance(LinkField),
    #[error("field {field}: comparator {comparator} does not apply to this field")]
    WrongKind {
        field: LinkField,
        comparator: &'static str,
    },
    #[error("field {0} configured twice")]
    Duplicate(LinkField),
    #[error("no linkage fields configured")]
    Empty,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldConfig {
    pub field: LinkField,
    pub comparator: Comparator,
}

impl FieldConfig {
    pub fn jaro_winkler(field: LinkField) -> Self {
        FieldConfig {
            field,
            comparator: Comparator::JaroWinkler {
                cutoffs: DEFAULT_CUTOFFS.to_vec(),
            },
        }
    }

    pub fn numeric(field: LinkField, tolerance: f64) -> Self {
        FieldConfig {
            field,
            comparator: Comparator::Numeric { tolerance },
        }
    }

    /// The shipped configuration: Jaro-Winkler city, date within one day,
    /// exact victim count, exact zip.
    pub fn default_set() -> Vec<FieldConfig> {
        vec![
            FieldConfig::jaro_winkler(LinkField::City),
            FieldConfig::numeric(LinkField::DaysSinceStart, 1.0),
            FieldConfig::numeric(LinkField::NumKilled, 0.0),
            FieldConfig::numeric(LinkField::Zip, 0.0),
        ]
    }

    pub fn levels(&self) -> usize {
        match &self.comparator {
            Comparator::JaroWinkler { cutoffs } => cutoffs.len() + 1,
            Comparator::Numeric { .. } => 2,
        }
    }

    pub fn top_level(&self) -> Level {
        (self.levels() - 1) as Level
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        match &self.comparator {
            Comparator::JaroWinkler { cutoffs } => {
                if !self.field.is_textual() {
                    return Err(ConfigError::WrongKind {
                        field: self.field,
                        comparator: "jaro_winkler",
                    });
                }
                let in_range = cutoffs.iter().all(|&c| c > 0.0 && c < 1.0);
                let descending = cutoffs.windows(2).all(|w| w[0] > w[1]);
                if cutoffs.is_empty() || !in_range || !descending {
                    return Err(ConfigError::BadCutoffs(self.field));
                }
            }
            Comparator::Numeric { tolerance } => {
                if !self.field.is_numeric() {
                    return Err(ConfigError::WrongKind {
                        field: self.field,
                        comparator: "numeric",
                    });
                }
                if !(tolerance.is_finite() && *tolerance >= 0.0) {
                    return Err(ConfigError::BadTolerance(self.field));
                }
            }
        }
        Ok(())
    }

    pub fn validate_set(fields: &[FieldConfig]) -> Result<(), ConfigError> {
        if fields.is_empty() {
            return Err(ConfigError::Empty);
        }
        for (i, f) in fields.iter().enumerate() {
            f.validate()?;
            if fields[..i].iter().any(|g| g.field == f.field) {
                return Err(ConfigError::Duplicate(f.field));
            }
        }
        Ok(())
    }

    /// Level for one pair of records, `None` when either side is missing.
    pub fn compare(&self, ra: &CanonicalRecord, rb: &CanonicalRecord) -> Option<Level> {
        match &self.comparator {
            Comparator::JaroWinkler { cutoffs } => {
                let a = ra.text(self.field).filter(|s| !s.is_empty())?;
                let b = rb.text(self.field).filter(|s| !s.is_empty())?;
                Some(discretize_string(jaro_winkler(a, b), cutoffs))
            }
            Comparator::Numeric { tolerance } => {
                let a = ra.number(self.field)?;
                let b = rb.number(self.field)?;
                Some(compare_numeric(a, b, *tolerance))
            }
        }
    }
}

/// Per-field agreement levels for one candidate pair; `None` marks MISSING.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AgreementPattern(pub Vec<Option<Level>>);

impl AgreementPattern {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn levels(&self) -> &[Option<Level>] {
        &self.0
    }
}

impl fmt::Display for AgreementPattern {
    /// `2.1.NA.1` style.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, l) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(".")?;
            }
            match l {
                Some(l) => write!(f, "{l}")?,
                None => f.write_str("NA")?,
            }
        }
        Ok(())
    }
}

impl From<Vec<Option<Level>>> for AgreementPattern {
    fn from(v: Vec<Option<Level>>) -> Self {
        AgreementPattern(v)
    }
}

pub fn build_agreement_vector(
    ra: &CanonicalRecord,
    rb: &CanonicalRecord,
    config: &[FieldConfig],
) -> AgreementPattern {
    AgreementPattern(config.iter().map(|f| f.compare(ra, rb)).collect())
}

/// Mixed-radix encoding of patterns into dense indices; MISSING encodes as 0.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatternCodec {
    levels: Vec<usize>,
    strides: Vec<u32>,
    size: usize,
}

impl PatternCodec {
    pub fn new(fields: &[FieldConfig]) -> Self {
        Self::from_levels(fields.iter().map(FieldConfig::levels).collect())
    }

    pub fn from_levels(levels: Vec<usize>) -> Self {
        let mut strides = Vec::with_capacity(levels.len());
        let mut size = 1usize;
        for &l in &levels {
            strides.push(size as u32);
            size *= l + 1;
        }
        PatternCodec {
            levels,
            strides,
            size,
        }
    }

    /// Number of distinct codes, `prod(levels_k + 1)`.
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn levels(&self) -> &[usize] {
        &self.levels
    }

    pub fn stride(&self, k: usize) -> u32 {
        self.strides[k]
    }

    pub fn encode(&self, p: &AgreementPattern) -> u32 {
        p.0.iter()
            .zip(&self.strides)
            .map(|(l, s)| l.map_or(0, |l| u32::from(l) + 1) * s)
            .sum()
    }

    pub fn decode(&self, mut code: u32) -> AgreementPattern {
        let mut out = Vec::with_capacity(self.levels.len());
        for &l in &self.levels {
            let radix = (l + 1) as u32;
            let digit = code % radix;
            code /= radix;
            out.push(digit.checked_sub(1).map(|d| d as Level));
        }
        AgreementPattern(out)
    }
}
