use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use chrono::NaiveDate;

use crate::date::{days_since_start, DateError};

/// Which side of the linkage a record came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Source {
    A,
    B,
}

impl Source {
    pub fn prefix(self) -> &'static str {
        match self {
            Source::A => "a_",
            Source::B => "b_",
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Source::A => "A",
            Source::B => "B",
        })
    }
}

/// Opaque record token, unique within its dataset.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RecordId(pub String);

impl RecordId {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl From<&str> for RecordId {
    fn from(s: &str) -> Self {
        RecordId(String::from(s))
    }
}

impl From<String> for RecordId {
    fn from(s: String) -> Self {
        RecordId(s)
    }
}

impl fmt::Display for RecordId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Two-letter uppercase postal code. The blocking key.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StateCode([u8; 2]);

impl StateCode {
    /// Accepts exactly two ASCII letters, any case.
    pub fn parse(s: &str) -> Option<StateCode> {
        let bytes = s.trim().as_bytes();
        if bytes.len() != 2 || !bytes.iter().all(u8::is_ascii_alphabetic) {
            return None;
        }
        Some(StateCode([
            bytes[0].to_ascii_uppercase(),
            bytes[1].to_ascii_uppercase(),
        ]))
    }

    pub fn as_str(&self) -> &str {
        // Only ASCII letters are ever stored.
        core::str::from_utf8(&self.0).unwrap_or("??")
    }
}

impl fmt::Debug for StateCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "StateCode({})", self.as_str())
    }
}

impl fmt::Display for StateCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// The canonical fields that can take part in pair comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum LinkField {
    City,
    DaysSinceStart,
    NumKilled,
    Zip,
}

impl LinkField {
    pub const ALL: [LinkField; 4] = [
        LinkField::City,
        LinkField::DaysSinceStart,
        LinkField::NumKilled,
        LinkField::Zip,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LinkField::City => "city",
            LinkField::DaysSinceStart => "days_since_start",
            LinkField::NumKilled => "num_killed",
            LinkField::Zip => "zip",
        }
    }

    pub fn parse(s: &str) -> Option<LinkField> {
        LinkField::ALL.into_iter().find(|f| f.name() == s)
    }

    pub fn is_textual(self) -> bool {
        matches!(self, LinkField::City | LinkField::Zip)
    }

    pub fn is_numeric(self) -> bool {
        !matches!(self, LinkField::City)
    }
}

impl fmt::Display for LinkField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One normalized incident row.
///
/// `payload` holds the raw cell values in the column order of the owning
/// [`Dataset`]; it is carried through untouched into merged output.
#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalRecord {
    pub id: RecordId,
    pub source: Source,
    pub state: StateCode,
    pub city: Option<String>,
    pub zip: Option<String>,
    event_date: Option<NaiveDate>,
    days_since_start: Option<u32>,
    pub num_killed: Option<u32>,
    pub payload: Vec<String>,
}

impl CanonicalRecord {
    pub fn new(id: impl Into<RecordId>, source: Source, state: StateCode) -> Self {
        CanonicalRecord {
            id: id.into(),
            source,
            state,
            city: None,
            zip: None,
            event_date: None,
            days_since_start: None,
            num_killed: None,
            payload: Vec::new(),
        }
    }

    /// Sets the event date together with its day offset from `epoch`.
    pub fn set_event_date(&mut self, date: NaiveDate, epoch: NaiveDate) -> Result<(), DateError> {
        let days = days_since_start(date, epoch)?;
        self.event_date = Some(date);
        self.days_since_start = Some(days);
        Ok(())
    }

    pub fn clear_event_date(&mut self) {
        self.event_date = None;
        self.days_since_start = None;
    }

    pub fn event_date(&self) -> Option<NaiveDate> {
        self.event_date
    }

    pub fn days_since_start(&self) -> Option<u32> {
        self.days_since_start
    }

    /// String view of a field, used by string comparators.
    pub fn text(&self, field: LinkField) -> Option<&str> {
        match field {
            LinkField::City => self.city.as_deref(),
            LinkField::Zip => self.zip.as_deref(),
            _ => None,
        }
    }

    /// Integer view of a field, used by numeric comparators.
    pub fn number(&self, field: LinkField) -> Option<i64> {
        match field {
            LinkField::City => None,
            LinkField::DaysSinceStart => self.days_since_start.map(i64::from),
            LinkField::NumKilled => self.num_killed.map(i64::from),
            LinkField::Zip => self.zip.as_deref().and_then(|z| z.parse().ok()),
        }
    }

    pub fn has(&self, field: LinkField) -> bool {
        match field {
            LinkField::City | LinkField::Zip => self.text(field).is_some(),
            _ => self.number(field).is_some(),
        }
    }
}

/// All records of one side plus the raw header their payloads follow.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub columns: Vec<String>,
    pub records: Vec<CanonicalRecord>,
}

impl Dataset {
    pub fn new(columns: Vec<String>) -> Self {
        Dataset {
            columns,
            records: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Raw `(column, value)` pairs of a record's payload.
    pub fn payload_pairs<'a>(
        &'a self,
        record: &'a CanonicalRecord,
    ) -> impl Iterator<Item = (&'a str, &'a str)> + 'a {
        self.columns
            .iter()
            .map(String::as_str)
            .zip(record.payload.iter().map(String::as_str))
    }
}
