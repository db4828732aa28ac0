//! CSV loading under a [`SchemaMapping`], then scope and eligibility filters.

use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};

use chrono::{Datelike, NaiveDate};
use fslink_core::filter::{DropReason, FilterDecision, FilterRuleSet, ScopeFields};
use fslink_core::normalize::{normalize_city, normalize_state, normalize_zip};
use fslink_core::{CanonicalRecord, Dataset, Source};

use crate::config::{CanonicalField, SchemaMapping};

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{path}: header has no column {column:?} (mapped for source {name})")]
    MissingColumn {
        path: PathBuf,
        name: String,
        column: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RejectReason {
    MissingRequiredField,
    BadDate,
    BadNumber,
    BadState,
    DuplicateId,
    MalformedRow,
}

impl RejectReason {
    pub fn code(self) -> &'static str {
        match self {
            RejectReason::MissingRequiredField => "missing-required-field",
            RejectReason::BadDate => "bad-date",
            RejectReason::BadNumber => "bad-number",
            RejectReason::BadState => "bad-state",
            RejectReason::DuplicateId => "duplicate-id",
            RejectReason::MalformedRow => "malformed-row",
        }
    }
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reject {
    /// 1-based data row number (the header is not counted).
    pub row: usize,
    pub reason: RejectReason,
    /// Canonical field that triggered the reject, when there is one.
    pub field: Option<CanonicalField>,
    pub raw: Vec<String>,
}

/// Raw scope-filter values for one loaded record.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScopeValues {
    pub category: Option<String>,
    pub weapon: Option<String>,
    pub cause: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Loaded {
    pub header: Vec<String>,
    pub rows_read: usize,
    pub dataset: Dataset,
    /// Aligned with `dataset.records`.
    pub scope: Vec<ScopeValues>,
    pub rejects: Vec<Reject>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Filtered {
    pub id: String,
    pub state: String,
    pub reason: DropReason,
}

struct Columns {
    id: usize,
    state: usize,
    city: Option<usize>,
    zip: Option<usize>,
    date: Option<usize>,
    killed: Option<usize>,
    category: Option<usize>,
    weapon: Option<usize>,
    cause: Option<usize>,
    payload: Vec<usize>,
}

fn locate(header: &[String], mapping: &SchemaMapping, path: &Path) -> Result<Columns, IngestError> {
    let find = |col: &str| -> Result<usize, IngestError> {
        header
            .iter()
            .position(|h| h == col)
            .ok_or_else(|| IngestError::MissingColumn {
                path: path.to_path_buf(),
                name: mapping.name.clone(),
                column: col.to_string(),
            })
    };
    let field = |f: CanonicalField| mapping.column_for(f).map(find).transpose();
    let scope = |c: &Option<String>| c.as_deref().map(find).transpose();
    let mut mapped = Vec::new();
    for col in mapping.columns.keys() {
        mapped.push(find(col)?);
    }
    let payload = if mapping.passthrough {
        (0..header.len()).collect()
    } else {
        mapped.sort_unstable();
        mapped
    };
    Ok(Columns {
        id: field(CanonicalField::Id)?.expect("validated mapping"),
        state: field(CanonicalField::State)?.expect("validated mapping"),
        city: field(CanonicalField::City)?,
        zip: field(CanonicalField::Zip)?,
        date: field(CanonicalField::EventDate)?,
        killed: field(CanonicalField::NumKilled)?,
        category: scope(&mapping.scope.category)?,
        weapon: scope(&mapping.scope.weapon)?,
        cause: scope(&mapping.scope.cause)?,
        payload,
    })
}

fn cell(row: &[String], idx: Option<usize>) -> Option<&str> {
    idx.map(|i| row[i].trim()).filter(|v| !v.is_empty())
}

fn parse_row(
    row: &[String],
    cols: &Columns,
    mapping: &SchemaMapping,
    source: Source,
    epoch: NaiveDate,
) -> Result<CanonicalRecord, (RejectReason, CanonicalField)> {
    use CanonicalField as F;
    use RejectReason as R;
    let required = |f: F| mapping.is_required(f);

    let id = cell(row, Some(cols.id)).ok_or((R::MissingRequiredField, F::Id))?;
    let state_raw = cell(row, Some(cols.state)).ok_or((R::MissingRequiredField, F::State))?;
    let state = normalize_state(state_raw).ok_or((R::BadState, F::State))?;
    let mut rec = CanonicalRecord::new(id, source, state);

    match cell(row, cols.date) {
        None if required(F::EventDate) => return Err((R::BadDate, F::EventDate)),
        None => {}
        Some(raw) => {
            let d = NaiveDate::parse_from_str(raw, &mapping.date_format)
                .map_err(|_| (R::BadDate, F::EventDate))?;
            rec.set_event_date(d, epoch).map_err(|_| (R::BadDate, F::EventDate))?;
        }
    }
    rec.num_killed = match cell(row, cols.killed) {
        None => None,
        Some(raw) => Some(raw.parse::<u32>().map_err(|_| (R::BadNumber, F::NumKilled))?),
    };
    rec.zip = match cell(row, cols.zip) {
        None => None,
        Some(raw) => normalize_zip(raw).map_err(|_| (R::BadNumber, F::Zip))?,
    };
    rec.city = cell(row, cols.city).and_then(normalize_city);

    let present = [
        (F::City, rec.city.is_some()),
        (F::Zip, rec.zip.is_some()),
        (F::NumKilled, rec.num_killed.is_some()),
    ];
    for (f, ok) in present {
        if !ok && required(f) {
            return Err((R::MissingRequiredField, f));
        }
    }
    rec.payload = cols.payload.iter().map(|&i| row[i].clone()).collect();
    Ok(rec)
}

/// Reads one CSV. Every data row ends up in exactly one of
/// `dataset.records` or `rejects`.
pub fn load_csv(
    path: &Path,
    mapping: &SchemaMapping,
    source: Source,
    epoch: NaiveDate,
) -> Result<Loaded, IngestError> {
    let file = std::fs::File::open(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    load_reader(file, path, mapping, source, epoch)
}

pub fn load_reader<R: std::io::Read>(
    reader: R,
    path: &Path,
    mapping: &SchemaMapping,
    source: Source,
    epoch: NaiveDate,
) -> Result<Loaded, IngestError> {
    let csv_err = |source| IngestError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let header: Vec<String> = rdr.headers().map_err(csv_err)?.iter().map(String::from).collect();
    let cols = locate(&header, mapping, path)?;

    let mut dataset = Dataset::new(cols.payload.iter().map(|&i| header[i].clone()).collect());
    let mut scope = Vec::new();
    let mut rejects = Vec::new();
    let mut seen = HashSet::new();
    let mut rows_read = 0;
    for (idx, rec) in rdr.records().enumerate() {
        let row_no = idx + 1;
        rows_read += 1;
        let raw: Vec<String> = match rec {
            Ok(r) => r.iter().map(String::from).collect(),
            Err(e) if matches!(e.kind(), csv::ErrorKind::Utf8 { .. }) => {
                rejects.push(Reject {
                    row: row_no,
                    reason: RejectReason::MalformedRow,
                    field: None,
                    raw: Vec::new(),
                });
                continue;
            }
            Err(e) => return Err(csv_err(e)),
        };
        if raw.len() != header.len() {
            rejects.push(Reject {
                row: row_no,
                reason: RejectReason::MalformedRow,
                field: None,
                raw,
            });
            continue;
        }
        match parse_row(&raw, &cols, mapping, source, epoch) {
            Ok(r) => {
                if !seen.insert(r.id.clone()) {
                    rejects.push(Reject {
                        row: row_no,
                        reason: RejectReason::DuplicateId,
                        field: Some(CanonicalField::Id),
                        raw,
                    });
                    continue;
                }
                scope.push(ScopeValues {
                    category: cell(&raw, cols.category).map(String::from),
                    weapon: cell(&raw, cols.weapon).map(String::from),
                    cause: cell(&raw, cols.cause).map(String::from),
                });
                dataset.records.push(r);
            }
            Err((reason, field)) => rejects.push(Reject {
                row: row_no,
                reason,
                field: Some(field),
                raw,
            }),
        }
    }
    Ok(Loaded {
        header,
        rows_read,
        dataset,
        scope,
        rejects,
    })
}

/// Applies the scope filter (when the mapping names scope columns) and the
/// state-year eligibility filter (when enabled). A record without a date
/// passes eligibility iff its state is listed at all.
pub fn apply_filters(loaded: &Loaded, mapping: &SchemaMapping, rules: &FilterRuleSet) -> (Dataset, Vec<Filtered>) {
    let mut kept = Dataset::new(loaded.dataset.columns.clone());
    let mut dropped = Vec::new();
    for (rec, sv) in loaded.dataset.records.iter().zip(&loaded.scope) {
        let mut decision = FilterDecision::Keep;
        if !mapping.scope.is_empty() {
            decision = rules.filter_scope(&ScopeFields {
                category: sv.category.as_deref(),
                weapon: sv.weapon.as_deref(),
                cause: sv.cause.as_deref(),
            });
        }
        if decision.is_keep() && mapping.apply_eligibility {
            decision = match rec.event_date() {
                Some(d) => rules.filter_eligibility(rec.state, d.year()),
                None if rules.state_listed(rec.state) => FilterDecision::Keep,
                None => FilterDecision::Drop(DropReason::Ineligible),
            };
        }
        match decision {
            FilterDecision::Keep => kept.records.push(rec.clone()),
            FilterDecision::Drop(reason) => dropped.push(Filtered {
                id: rec.id.to_string(),
                state: rec.state.to_string(),
                reason,
            }),
        }
    }
    (kept, dropped)
}
