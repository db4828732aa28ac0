//! Scope and eligibility filters applied after loading.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::record::StateCode;

const BUNDLED_ELIGIBILITY: &str = include_str!("../data/state_eligibility.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EligibilityEntry {
    pub state: StateCode,
    pub first_year: i32,
    pub last_year: i32,
}

impl EligibilityEntry {
    pub fn covers(&self, state: StateCode, year: i32) -> bool {
        self.state == state && (self.first_year..=self.last_year).contains(&year)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FilterError {
    #[error("eligibility line {line}: expected `STATE FIRST_YEAR LAST_YEAR`")]
    MalformedEntry { line: usize },
    #[error("eligibility entry for {state}: first year {first} after last year {last}")]
    InvertedYears { state: StateCode, first: i32, last: i32 },
}

/// Why a row left the analysis set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DropReason {
    ExcludedCategory,
    NonFirearm,
    Ineligible,
}

impl DropReason {
    pub fn code(self) -> &'static str {
        match self {
            DropReason::ExcludedCategory => "excluded-category",
            DropReason::NonFirearm => "non-firearm",
            DropReason::Ineligible => "ineligible-state-year",
        }
    }
}

impl fmt::Display for DropReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterDecision {
    Keep,
    Drop(DropReason),
}

impl FilterDecision {
    pub fn is_keep(self) -> bool {
        self == FilterDecision::Keep
    }
}

/// Raw category/weapon/cause cells of one row. Any may be absent.
#[derive(Debug, Clone, Copy, Default)]
pub struct ScopeFields<'a> {
    pub category: Option<&'a str>,
    pub weapon: Option<&'a str>,
    pub cause: Option<&'a str>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterRuleSet {
    excluded_categories: BTreeSet<String>,
    firearm_weapon_values: BTreeSet<String>,
    firearm_cause_keywords: BTreeSet<String>,
    eligibility: Vec<EligibilityEntry>,
}

impl Default for FilterRuleSet {
    fn default() -> Self {
        FilterRuleSet::new(
            ["single suicide", "multiple suicide"],
            ["firearm", "nonpowder gun"],
            ["gun", "firearm", "gunshot", "rifle"],
            Self::bundled_eligibility(),
        )
        .expect("bundled rules are valid")
    }
}

fn fold(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for word in s.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.extend(word.chars().flat_map(char::to_lowercase));
    }
    out
}

impl FilterRuleSet {
    pub fn new<'a>(
        excluded_categories: impl IntoIterator<Item = &'a str>,
        firearm_weapon_values: impl IntoIterator<Item = &'a str>,
        firearm_cause_keywords: impl IntoIterator<Item = &'a str>,
        eligibility: Vec<EligibilityEntry>,
    ) -> Result<Self, FilterError> {
        for e in &eligibility {
            if e.first_year > e.last_year {
                return Err(FilterError::InvertedYears {
                    state: e.state,
                    first: e.first_year,
                    last: e.last_year,
                });
            }
        }
        Ok(FilterRuleSet {
            excluded_categories: excluded_categories.into_iter().map(fold).collect(),
            firearm_weapon_values: firearm_weapon_values.into_iter().map(fold).collect(),
            firearm_cause_keywords: firearm_cause_keywords.into_iter().map(fold).collect(),
            eligibility,
        })
    }

    /// The shipped 2014-2018 jurisdiction table (40 states plus DC).
    pub fn bundled_eligibility() -> Vec<EligibilityEntry> {
        Self::parse_eligibility(BUNDLED_ELIGIBILITY).expect("bundled table parses")
    }

    /// Parses `STATE FIRST LAST` lines; `#` starts a comment.
    pub fn parse_eligibility(text: &str) -> Result<Vec<EligibilityEntry>, FilterError> {
        let mut out = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad = FilterError::MalformedEntry { line: idx + 1 };
            let mut parts = line.split(|c: char| c.is_whitespace() || c == ',');
            let mut next = || parts.by_ref().find(|p| !p.is_empty());
            let state = next().and_then(StateCode::parse).ok_or(bad.clone())?;
            let first = next().and_then(|s| s.parse().ok()).ok_or(bad.clone())?;
            let last = next().and_then(|s| s.parse().ok()).ok_or(bad.clone())?;
            if next().is_some() {
                return Err(bad);
            }
            if first > last {
                return Err(FilterError::InvertedYears { state, first, last });
            }
            out.push(EligibilityEntry {
                state,
                first_year: first,
                last_year: last,
            });
        }
        Ok(out)
    }

    pub fn eligibility(&self) -> &[EligibilityEntry] {
        &self.eligibility
    }

    pub fn with_eligibility(mut self, eligibility: Vec<EligibilityEntry>) -> Result<Self, FilterError> {
        for e in &eligibility {
            if e.first_year > e.last_year {
                return Err(FilterError::InvertedYears {
                    state: e.state,
                    first: e.first_year,
                    last: e.last_year,
                });
            }
        }
        self.eligibility = eligibility;
        Ok(self)
    }

    /// Excluded categories first; then keep firearm weapons or causes that
    /// mention a firearm keyword as a whole token.
    pub fn filter_scope(&self, row: &ScopeFields<'_>) -> FilterDecision {
        if let Some(cat) = row.category {
            if self.excluded_categories.contains(&fold(cat)) {
                return FilterDecision::Drop(DropReason::ExcludedCategory);
            }
        }
        let weapon_ok = row
            .weapon
            .is_some_and(|w| self.firearm_weapon_values.contains(&fold(w)));
        let cause_ok = row.cause.is_some_and(|c| {
            c.split(|ch: char| !ch.is_alphanumeric())
                .filter(|t| !t.is_empty())
                .any(|t| self.firearm_cause_keywords.contains(&fold(t)))
        });
        if weapon_ok || cause_ok {
            FilterDecision::Keep
        } else {
            FilterDecision::Drop(DropReason::NonFirearm)
        }
    }

    pub fn filter_eligibility(&self, state: StateCode, year: i32) -> FilterDecision {
        if self.eligibility.iter().any(|e| e.covers(state, year)) {
            FilterDecision::Keep
        } else {
            FilterDecision::Drop(DropReason::Ineligible)
        }
    }

    /// Whether the state appears in any eligibility entry, regardless of year.
    pub fn state_listed(&self, state: StateCode) -> bool {
        self.eligibility.iter().any(|e| e.state == state)
    }

    /// Year range for a state, when listed. Multiple entries are merged
    /// into their enclosing span.
    pub fn eligible_years(&self, state: StateCode) -> Option<(i32, i32)> {
        self.eligibility
            .iter()
            .filter(|e| e.state == state)
            .fold(None, |acc, e| match acc {
                None => Some((e.first_year, e.last_year)),
                Some((lo, hi)) => Some((lo.min(e.first_year), hi.max(e.last_year))),
            })
    }
}
