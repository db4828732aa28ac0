//! Declarative run configuration (TOML).
//!
//! Relative paths are resolved against the directory of the config file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use fslink_core::compare::{Comparator, FieldConfig, DEFAULT_CUTOFFS};
use fslink_core::engine::{LinkOptions, DEFAULT_MIN_BLOCK_SIZE, DEFAULT_THRESHOLD};
use fslink_core::filter::FilterRuleSet;
use fslink_core::model::EmOptions;
use fslink_core::synth::{Corruption, SyntheticSpec};
use fslink_core::{LinkField, DEFAULT_EPOCH};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot parse config {path}: {source}")]
    Parse {
        path: PathBuf,
        source: toml::de::Error,
    },
    #[error("{0}")]
    Invalid(String),
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

/// Canonical targets a source column can map onto.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CanonicalField {
    Id,
    State,
    City,
    Zip,
    EventDate,
    NumKilled,
}

impl CanonicalField {
    pub fn name(self) -> &'static str {
        match self {
            CanonicalField::Id => "id",
            CanonicalField::State => "state",
            CanonicalField::City => "city",
            CanonicalField::Zip => "zip",
            CanonicalField::EventDate => "event_date",
            CanonicalField::NumKilled => "num_killed",
        }
    }

    /// The mapped column a linkage field is derived from.
    pub fn for_link_field(f: LinkField) -> CanonicalField {
        match f {
            LinkField::City => CanonicalField::City,
            LinkField::DaysSinceStart => CanonicalField::EventDate,
            LinkField::NumKilled => CanonicalField::NumKilled,
            LinkField::Zip => CanonicalField::Zip,
        }
    }
}

/// Columns read by the scope filter. Any may be left out.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScopeColumns {
    pub category: Option<String>,
    pub weapon: Option<String>,
    pub cause: Option<String>,
}

impl ScopeColumns {
    pub fn is_empty(&self) -> bool {
        self.category.is_none() && self.weapon.is_none() && self.cause.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemaMapping {
    pub name: String,
    pub path: PathBuf,
    /// Source column -> canonical field.
    pub columns: BTreeMap<String, CanonicalField>,
    #[serde(default = "default_date_format")]
    pub date_format: String,
    /// Canonical fields whose absence rejects a row. `id` and `state` are
    /// always required.
    #[serde(default)]
    pub required: Vec<CanonicalField>,
    /// Linkage fields this source does not have at all.
    #[serde(default)]
    pub absent: Vec<LinkField>,
    /// Carry unmapped columns into the payload.
    #[serde(default = "yes")]
    pub passthrough: bool,
    #[serde(default)]
    pub scope: ScopeColumns,
    #[serde(default = "yes")]
    pub apply_eligibility: bool,
    /// Free-text column shown to reviewers.
    #[serde(default)]
    pub narrative: Option<String>,
}

fn default_date_format() -> String {
    "%Y-%m-%d".into()
}

fn yes() -> bool {
    true
}

impl SchemaMapping {
    pub fn column_for(&self, field: CanonicalField) -> Option<&str> {
        self.columns
            .iter()
            .find(|(_, f)| **f == field)
            .map(|(c, _)| c.as_str())
    }

    pub fn is_required(&self, field: CanonicalField) -> bool {
        matches!(field, CanonicalField::Id | CanonicalField::State) || self.required.contains(&field)
    }

    pub fn validate(&self, link_fields: &[FieldConfig]) -> Result<(), ConfigError> {
        let mut seen = BTreeMap::new();
        for (col, field) in &self.columns {
            if let Some(prev) = seen.insert(*field, col) {
                return Err(invalid(format!(
                    "source {}: columns {prev:?} and {col:?} both map to {}",
                    self.name,
                    field.name()
                )));
            }
        }
        for f in [CanonicalField::Id, CanonicalField::State] {
            if !seen.contains_key(&f) {
                return Err(invalid(format!("source {}: no column maps to {}", self.name, f.name())));
            }
        }
        for f in &self.required {
            if !seen.contains_key(f) {
                return Err(invalid(format!(
                    "source {}: required field {} is not mapped",
                    self.name,
                    f.name()
                )));
            }
        }
        for fc in link_fields {
            let produced = seen.contains_key(&CanonicalField::for_link_field(fc.field));
            let absent = self.absent.contains(&fc.field);
            if produced && absent {
                return Err(invalid(format!(
                    "source {}: linkage field {} is both mapped and declared absent",
                    self.name, fc.field
                )));
            }
            if !produced && !absent {
                return Err(invalid(format!(
                    "source {}: linkage field {} is neither mapped nor declared absent",
                    self.name, fc.field
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "comparator", rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldSpec {
    JaroWinkler {
        field: LinkField,
        #[serde(default = "default_cutoffs")]
        cutoffs: Vec<f64>,
    },
    Numeric {
        field: LinkField,
        #[serde(default)]
        tolerance: f64,
    },
}

fn default_cutoffs() -> Vec<f64> {
    DEFAULT_CUTOFFS.to_vec()
}

impl FieldSpec {
    pub fn to_field_config(&self) -> FieldConfig {
        match self {
            FieldSpec::JaroWinkler { field, cutoffs } => FieldConfig {
                field: *field,
                comparator: Comparator::JaroWinkler {
                    cutoffs: cutoffs.clone(),
                },
            },
            FieldSpec::Numeric { field, tolerance } => FieldConfig::numeric(*field, *tolerance),
        }
    }
}

fn default_fields() -> Vec<FieldSpec> {
    vec![
        FieldSpec::JaroWinkler {
            field: LinkField::City,
            cutoffs: default_cutoffs(),
        },
        FieldSpec::Numeric {
            field: LinkField::DaysSinceStart,
            tolerance: 1.0,
        },
        FieldSpec::Numeric {
            field: LinkField::NumKilled,
            tolerance: 0.0,
        },
        FieldSpec::Numeric {
            field: LinkField::Zip,
            tolerance: 0.0,
        },
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkageSection {
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default = "default_min_block")]
    pub min_block_size: usize,
    #[serde(default = "default_tol")]
    pub em_tolerance: f64,
    #[serde(default = "default_max_iter")]
    pub em_max_iter: usize,
    #[serde(default = "default_fields")]
    pub fields: Vec<FieldSpec>,
    /// Fields for the exact-match baseline written by `evaluate`.
    #[serde(default = "default_baseline")]
    pub baseline_fields: Vec<LinkField>,
}

fn default_threshold() -> f64 {
    DEFAULT_THRESHOLD
}
fn default_min_block() -> usize {
    DEFAULT_MIN_BLOCK_SIZE
}
fn default_tol() -> f64 {
    EmOptions::default().tolerance
}
fn default_max_iter() -> usize {
    EmOptions::default().max_iter
}
fn default_baseline() -> Vec<LinkField> {
    LinkField::ALL.to_vec()
}

impl Default for LinkageSection {
    fn default() -> Self {
        LinkageSection {
            threshold: default_threshold(),
            min_block_size: default_min_block(),
            em_tolerance: default_tol(),
            em_max_iter: default_max_iter(),
            fields: default_fields(),
            baseline_fields: default_baseline(),
        }
    }
}

impl LinkageSection {
    pub fn field_configs(&self) -> Vec<FieldConfig> {
        self.fields.iter().map(FieldSpec::to_field_config).collect()
    }

    pub fn options(&self) -> LinkOptions {
        LinkOptions {
            threshold: self.threshold,
            min_block_size: self.min_block_size,
            em: EmOptions {
                tolerance: self.em_tolerance,
                max_iter: self.em_max_iter,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterSection {
    #[serde(default = "default_excluded")]
    pub excluded_categories: Vec<String>,
    #[serde(default = "default_weapons")]
    pub firearm_weapons: Vec<String>,
    #[serde(default = "default_keywords")]
    pub cause_keywords: Vec<String>,
    /// Replaces the bundled state-year table.
    pub eligibility_file: Option<PathBuf>,
}

fn default_excluded() -> Vec<String> {
    vec!["single suicide".into(), "multiple suicide".into()]
}
fn default_weapons() -> Vec<String> {
    vec!["firearm".into(), "nonpowder gun".into()]
}
fn default_keywords() -> Vec<String> {
    ["gun", "firearm", "gunshot", "rifle"].map(String::from).to_vec()
}

impl Default for FilterSection {
    fn default() -> Self {
        FilterSection {
            excluded_categories: default_excluded(),
            firearm_weapons: default_weapons(),
            cause_keywords: default_keywords(),
            eligibility_file: None,
        }
    }
}

impl FilterSection {
    pub fn rules(&self) -> Result<FilterRuleSet, ConfigError> {
        let table = match &self.eligibility_file {
            None => FilterRuleSet::bundled_eligibility(),
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| {
                    invalid(format!("cannot read eligibility file {}: {e}", path.display()))
                })?;
                FilterRuleSet::parse_eligibility(&text)
                    .map_err(|e| invalid(format!("{}: {e}", path.display())))?
            }
        };
        FilterRuleSet::new(
            self.excluded_categories.iter().map(String::as_str),
            self.firearm_weapons.iter().map(String::as_str),
            self.cause_keywords.iter().map(String::as_str),
            table,
        )
        .map_err(|e| invalid(format!("filter: {e}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSection {
    pub n_a: usize,
    pub n_b: usize,
    pub n_overlap: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_typo")]
    pub typo_rate: f64,
    #[serde(default = "default_jitter")]
    pub jitter_days: u32,
    #[serde(default = "default_missing")]
    pub missing_rate: f64,
    #[serde(default = "default_killed")]
    pub killed_rate: f64,
    #[serde(default = "default_cities")]
    pub cities_per_state: usize,
    /// Optional explicit state weights; defaults to population times years.
    #[serde(default)]
    pub states: BTreeMap<String, f64>,
    /// Where `synth` writes `a.csv`, `b.csv` and `truth.csv`.
    pub dir: PathBuf,
}

fn default_typo() -> f64 {
    Corruption::default().typo_rate
}
fn default_jitter() -> u32 {
    Corruption::default().jitter_days
}
fn default_missing() -> f64 {
    Corruption::default().missing_rate
}
fn default_killed() -> f64 {
    Corruption::default().killed_rate
}
fn default_cities() -> usize {
    60
}

impl SynthSection {
    pub fn spec(&self, epoch: NaiveDate, rules: &FilterRuleSet) -> Result<SyntheticSpec, ConfigError> {
        let mut spec = SyntheticSpec::new(self.n_a, self.n_b, self.n_overlap, self.seed);
        spec.epoch = epoch;
        spec.eligibility = rules.eligibility().to_vec();
        spec.states = fslink_core::synth::default_state_weights(&spec.eligibility);
        if !self.states.is_empty() {
            spec.states = self
                .states
                .iter()
                .map(|(s, w)| {
                    fslink_core::StateCode::parse(s)
                        .map(|c| (c, *w))
                        .ok_or_else(|| invalid(format!("synth: bad state code {s:?}")))
                })
                .collect::<Result<_, _>>()?;
        }
        spec.cities_per_state = self.cities_per_state;
        spec.corruption = Corruption {
            typo_rate: self.typo_rate,
            jitter_days: self.jitter_days,
            missing_rate: self.missing_rate,
            killed_rate: self.killed_rate,
        };
        spec.validate().map_err(|e| invalid(e.to_string()))?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum QueueOrder {
    #[default]
    Xi,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReviewSection {
    #[serde(default = "default_bind")]
    pub bind: String,
    /// Decision log; defaults to `<out>/decisions.ndjson`.
    pub log: Option<PathBuf>,
    #[serde(default)]
    pub order: QueueOrder,
    #[serde(default)]
    pub seed: u64,
    /// Only enqueue pairs from this state.
    pub state: Option<String>,
    /// Static UI bundle served at `/`.
    pub ui_dir: Option<PathBuf>,
}

fn default_bind() -> String {
    "127.0.0.1:8080".into()
}

impl Default for ReviewSection {
    fn default() -> Self {
        ReviewSection {
            bind: default_bind(),
            log: None,
            order: QueueOrder::Xi,
            seed: 0,
            state: None,
            ui_dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default = "default_epoch")]
    pub epoch: NaiveDate,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    /// Planted pairs used by `evaluate` (CSV with `id_a,id_b`).
    pub truth: Option<PathBuf>,
    pub a: SchemaMapping,
    pub b: SchemaMapping,
    #[serde(default)]
    pub linkage: LinkageSection,
    #[serde(default)]
    pub filter: FilterSection,
    pub synth: Option<SynthSection>,
    #[serde(default)]
    pub review: ReviewSection,
}

fn default_epoch() -> NaiveDate {
    DEFAULT_EPOCH
}
fn default_out() -> PathBuf {
    PathBuf::from("out")
}

impl Config {
    pub fn load(path: &Path) -> Result<Config, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg: Config = toml::from_str(&text).map_err(|source| ConfigError::Parse {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml(text: &str, base: &Path) -> Result<Config, ConfigError> {
        let mut cfg: Config = toml::from_str(text).map_err(|source| ConfigError::Parse {
            path: base.to_path_buf(),
            source,
        })?;
        cfg.resolve_paths(base);
        cfg.validate()?;
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.out);
        fix(&mut self.a.path);
        fix(&mut self.b.path);
        if let Some(p) = &mut self.truth {
            fix(p);
        }
        if let Some(p) = &mut self.filter.eligibility_file {
            fix(p);
        }
        if let Some(s) = &mut self.synth {
            fix(&mut s.dir);
        }
        if let Some(p) = &mut self.review.log {
            fix(p);
        }
        if let Some(p) = &mut self.review.ui_dir {
            fix(p);
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let fields = self.linkage.field_configs();
        FieldConfig::validate_set(&fields).map_err(|e| invalid(format!("linkage.fields: {e}")))?;
        self.linkage
            .options()
            .validate()
            .map_err(|e| invalid(format!("linkage: {e}")))?;
        if self.linkage.em_tolerance.is_nan() || self.linkage.em_tolerance <= 0.0 || self.linkage.em_max_iter == 0 {
            return Err(invalid("linkage: em_tolerance and em_max_iter must be positive"));
        }
        self.a.validate(&fields)?;
        self.b.validate(&fields)?;
        if let Some(s) = &self.review.state {
            if fslink_core::StateCode::parse(s).is_none() {
                return Err(invalid(format!("review.state: bad state code {s:?}")));
            }
        }
        Ok(())
    }

    pub fn mapping(&self, side: fslink_core::Source) -> &SchemaMapping {
        match side {
            fslink_core::Source::A => &self.a,
            fslink_core::Source::B => &self.b,
        }
    }

    pub fn review_log(&self) -> PathBuf {
        self.review
            .log
            .clone()
            .unwrap_or_else(|| self.out.join("decisions.ndjson"))
    }
}
