//! Accuracy against planted truth, clerical-review arithmetic and the
//! exact-match baseline.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use chrono::{DateTime, Utc};

use crate::record::{Dataset, LinkField, RecordId};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EvalError {
    #[error("truth set is not one-to-one: {0} appears twice")]
    NotOneToOne(RecordId),
    #[error("pair {0} was adjudicated more than once")]
    DuplicatePair(String),
}

/// Planted matches, one-to-one by construction.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TruthSet {
    pairs: BTreeSet<(RecordId, RecordId)>,
}

impl TruthSet {
    pub fn new<I>(pairs: I) -> Result<Self, EvalError>
    where
        I: IntoIterator<Item = (RecordId, RecordId)>,
    {
        let mut seen_a = BTreeSet::new();
        let mut seen_b = BTreeSet::new();
        let mut out = BTreeSet::new();
        for (a, b) in pairs {
            if !seen_a.insert(a.clone()) {
                return Err(EvalError::NotOneToOne(a));
            }
            if !seen_b.insert(b.clone()) {
                return Err(EvalError::NotOneToOne(b));
            }
            out.insert((a, b));
        }
        Ok(TruthSet { pairs: out })
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn contains(&self, a: &RecordId, b: &RecordId) -> bool {
        // BTreeSet<(A, B)> cannot be queried by reference pair without cloning.
        self.pairs.contains(&(a.clone(), b.clone()))
    }

    pub fn iter(&self) -> impl Iterator<Item = &(RecordId, RecordId)> {
        self.pairs.iter()
    }
}

/// Precision/recall/F1; `None` where the denominator is empty.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub true_positives: usize,
    pub declared: usize,
    pub truth: usize,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
}

pub fn score_against_truth<'a, I>(declared: I, truth: &TruthSet) -> Metrics
where
    I: IntoIterator<Item = (&'a RecordId, &'a RecordId)>,
{
    let declared: BTreeSet<(&RecordId, &RecordId)> = declared.into_iter().collect();
    let tp = declared
        .iter()
        .filter(|(a, b)| truth.contains(a, b))
        .count();
    let precision = (!declared.is_empty()).then(|| tp as f64 / declared.len() as f64);
    let recall = (!truth.is_empty()).then(|| tp as f64 / truth.len() as f64);
    let f1 = match (precision, recall) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
        (Some(_), Some(_)) => Some(0.0),
        _ => None,
    };
    Metrics {
        true_positives: tp,
        declared: declared.len(),
        truth: truth.len(),
        precision,
        recall,
        f1,
    }
}

/// A reviewer's call on a declared pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Decision {
    Match,
    NonMatch,
    Undetermined,
}

impl Decision {
    pub const ALL: [Decision; 3] = [Decision::Match, Decision::NonMatch, Decision::Undetermined];

    pub fn as_str(self) -> &'static str {
        match self {
            Decision::Match => "match",
            Decision::NonMatch => "nonmatch",
            Decision::Undetermined => "undetermined",
        }
    }
}

impl fmt::Display for Decision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnknownDecision(pub String);

impl fmt::Display for UnknownDecision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "unknown decision {:?} (expected match, nonmatch or undetermined)",
            self.0
        )
    }
}

impl core::error::Error for UnknownDecision {}

impl FromStr for Decision {
    type Err = UnknownDecision;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Decision::ALL
            .into_iter()
            .find(|d| d.as_str() == s)
            .ok_or_else(|| UnknownDecision(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Adjudication {
    pub pair_id: String,
    pub decision: Decision,
    pub reviewer: String,
    pub timestamp: DateTime<Utc>,
}

fn round4(x: f64) -> f64 {
    libm::round(x * 1e4) / 1e4
}

/// Counts and proportions of reviewed pairs.
///
/// `review_precision` is matches over everything reviewed (undetermined
/// included in the denominator); `decided_precision` leaves undetermined
/// pairs out. Rates are rounded to four decimals.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AdjudicationSummary {
    pub n_match: usize,
    pub n_nonmatch: usize,
    pub n_undetermined: usize,
    pub total: usize,
    pub match_rate: f64,
    pub nonmatch_rate: f64,
    pub undetermined_rate: f64,
    pub empty: bool,
    pub review_precision: Option<f64>,
    pub decided_precision: Option<f64>,
}

impl AdjudicationSummary {
    pub fn from_counts(n_match: usize, n_nonmatch: usize, n_undetermined: usize) -> Self {
        let total = n_match + n_nonmatch + n_undetermined;
        if total == 0 {
            return AdjudicationSummary {
                empty: true,
                ..Default::default()
            };
        }
        let t = total as f64;
        let decided = n_match + n_nonmatch;
        AdjudicationSummary {
            n_match,
            n_nonmatch,
            n_undetermined,
            total,
            match_rate: round4(n_match as f64 / t),
            nonmatch_rate: round4(n_nonmatch as f64 / t),
            undetermined_rate: round4(n_undetermined as f64 / t),
            empty: false,
            review_precision: Some(n_match as f64 / t),
            decided_precision: (decided > 0).then(|| n_match as f64 / decided as f64),
        }
    }

    /// Class proportions as percentages rounded to one decimal, computed
    /// from the exact counts: `[match, nonmatch, undetermined]`.
    pub fn percents_1dp(&self) -> [f64; 3] {
        if self.total == 0 {
            return [0.0; 3];
        }
        let t = self.total as f64;
        [self.n_match, self.n_nonmatch, self.n_undetermined]
            .map(|n| libm::round(n as f64 / t * 1000.0) / 10.0)
    }

    /// Review precision as a percentage truncated (not rounded) to two
    /// decimals, e.g. 849 of 942 gives 90.12.
    pub fn review_precision_percent(&self) -> Option<f64> {
        self.review_precision
            .map(|p| libm::floor(p * 10_000.0 + 1e-9) / 100.0)
    }
}

pub fn sensitivity_report(adjudications: &[Adjudication]) -> Result<AdjudicationSummary, EvalError> {
    let mut seen = BTreeSet::new();
    let mut counts = [0usize; 3];
    for a in adjudications {
        if !seen.insert(a.pair_id.as_str()) {
            return Err(EvalError::DuplicatePair(a.pair_id.clone()));
        }
        counts[a.decision as usize] += 1;
    }
    Ok(AdjudicationSummary::from_counts(counts[0], counts[1], counts[2]))
}

fn rule_key(r: &crate::record::CanonicalRecord, fields: &[LinkField]) -> Option<Vec<String>> {
    fields
        .iter()
        .map(|&f| {
            if f == LinkField::City {
                r.text(f).filter(|s| !s.is_empty()).map(String::from)
            } else {
                r.number(f).map(|n| n.to_string())
            }
        })
        .collect()
}

/// Rule-based matching: same state and exact equality on every rule field.
/// A missing value on either side never matches. Output is sorted.
pub fn deterministic_baseline(a: &Dataset, b: &Dataset, fields: &[LinkField]) -> Vec<(RecordId, RecordId)> {
    let mut index: BTreeMap<(crate::record::StateCode, Vec<String>), Vec<&RecordId>> = BTreeMap::new();
    for r in &b.records {
        if let Some(k) = rule_key(r, fields) {
            index.entry((r.state, k)).or_default().push(&r.id);
        }
    }
    let mut out = Vec::new();
    for r in &a.records {
        let Some(k) = rule_key(r, fields) else {
            continue;
        };
        if let Some(hits) = index.get(&(r.state, k)) {
            out.extend(hits.iter().map(|&id_b| (r.id.clone(), id_b.clone())));
        }
    }
    out.sort();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::record::{CanonicalRecord, Source, StateCode};
    use alloc::format;
    use alloc::vec;
    use proptest::prelude::*;

    fn ids(pairs: &[(&str, &str)]) -> Vec<(RecordId, RecordId)> {
        pairs.iter().map(|&(a, b)| (a.into(), b.into())).collect()
    }

    fn adj(id: &str, d: Decision) -> Adjudication {
        Adjudication {
            pair_id: id.into(),
            decision: d,
            reviewer: "r".into(),
            timestamp: DateTime::<Utc>::from_timestamp(0, 0).unwrap(),
        }
    }

    #[test]
    fn metric_examples() {
        let truth_pairs: Vec<_> = (0..10).map(|i| (format!("a{i}"), format!("b{i}"))).collect();
        let truth = TruthSet::new(truth_pairs.iter().map(|(a, b)| (a.as_str().into(), b.as_str().into()))).unwrap();
        let all: Vec<(RecordId, RecordId)> = truth.iter().cloned().collect();
        let m = score_against_truth(all.iter().map(|(a, b)| (a, b)), &truth);
        assert_eq!((m.precision, m.recall, m.f1), (Some(1.0), Some(1.0), Some(1.0)));

        let m = score_against_truth(core::iter::empty(), &truth);
        assert_eq!((m.precision, m.recall, m.f1), (None, Some(0.0), None));

        let mut nine: Vec<(RecordId, RecordId)> = all[..9].to_vec();
        nine.push(("a9".into(), "b0".into()));
        let m = score_against_truth(nine.iter().map(|(a, b)| (a, b)), &truth);
        assert_eq!(m.true_positives, 9);
        assert!((m.precision.unwrap() - 0.9).abs() < 1e-12);
        assert!((m.recall.unwrap() - 0.9).abs() < 1e-12);
        assert!((m.f1.unwrap() - 0.9).abs() < 1e-12);

        let empty = TruthSet::default();
        let m = score_against_truth(nine.iter().map(|(a, b)| (a, b)), &empty);
        assert_eq!((m.precision, m.recall, m.f1), (Some(0.0), None, None));
    }

    #[test]
    fn truth_must_be_one_to_one() {
        assert!(TruthSet::new(ids(&[("a1", "b1"), ("a1", "b2")])).is_err());
        assert!(TruthSet::new(ids(&[("a1", "b1"), ("a2", "b1")])).is_err());
    }

    #[test]
    fn published_review_counts() {
        let s = AdjudicationSummary::from_counts(849, 72, 21);
        assert_eq!(s.total, 942);
        assert_eq!((s.match_rate, s.nonmatch_rate, s.undetermined_rate), (0.9013, 0.0764, 0.0223));
        assert_eq!(s.percents_1dp(), [90.1, 7.6, 2.2]);
        assert_eq!(s.review_precision_percent(), Some(90.12));
        assert!((s.decided_precision.unwrap() - 849.0 / 921.0).abs() < 1e-15);
    }

    #[test]
    fn sensitivity_examples() {
        let all: Vec<_> = (0..10).map(|i| adj(&format!("p{i}"), Decision::Match)).collect();
        let s = sensitivity_report(&all).unwrap();
        assert_eq!((s.match_rate, s.nonmatch_rate, s.undetermined_rate), (1.0, 0.0, 0.0));

        let s = sensitivity_report(&[]).unwrap();
        assert!(s.empty);
        assert_eq!((s.total, s.match_rate), (0, 0.0));
        assert_eq!(s.review_precision, None);

        let dup = [adj("p1", Decision::Match), adj("p1", Decision::NonMatch)];
        assert_eq!(
            sensitivity_report(&dup).unwrap_err(),
            EvalError::DuplicatePair("p1".into())
        );
    }

    #[test]
    fn decision_parsing() {
        for d in Decision::ALL {
            assert_eq!(d.as_str().parse::<Decision>(), Ok(d));
        }
        assert!("maybe".parse::<Decision>().is_err());
    }

    fn rec(id: &str, state: &str, city: Option<&str>, killed: Option<u32>) -> CanonicalRecord {
        let mut r = CanonicalRecord::new(id, Source::A, StateCode::parse(state).unwrap());
        r.city = city.map(String::from);
        r.num_killed = killed;
        r
    }

    #[test]
    fn baseline_examples() {
        let a = Dataset {
            columns: vec![],
            records: vec![
                rec("a1", "NJ", Some("NEWARK"), Some(1)),
                rec("a2", "NJ", Some("TRENTON"), Some(1)),
                rec("a3", "PA", Some("NEWARK"), Some(1)),
            ],
        };
        let b = Dataset {
            columns: vec![],
            records: vec![
                rec("b1", "NJ", Some("NEWARK"), Some(1)),
                rec("b2", "NJ", Some("TRENTN"), Some(1)),
                rec("b3", "NJ", None, Some(1)),
            ],
        };
        let out = deterministic_baseline(&a, &b, &[LinkField::City, LinkField::NumKilled]);
        assert_eq!(out, ids(&[("a1", "b1")]));
        let none = deterministic_baseline(&a, &b, &[LinkField::Zip]);
        assert!(none.is_empty());
    }

    proptest! {
        #[test]
        fn metrics_stay_in_unit_interval(
            truth_n in 0usize..15,
            hits in proptest::collection::vec((0usize..15, 0usize..15), 0..20),
        ) {
            let truth = TruthSet::new(
                (0..truth_n).map(|i| (RecordId(format!("a{i}")), RecordId(format!("b{i}"))))
            ).unwrap();
            let declared: Vec<(RecordId, RecordId)> = hits
                .iter()
                .map(|&(a, b)| (RecordId(format!("a{a}")), RecordId(format!("b{b}"))))
                .collect();
            let m = score_against_truth(declared.iter().map(|(a, b)| (a, b)), &truth);
            for v in [m.precision, m.recall, m.f1].into_iter().flatten() {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }

        #[test]
        fn summary_counts_add_up(m in 0usize..500, n in 0usize..500, u in 0usize..500) {
            let s = AdjudicationSummary::from_counts(m, n, u);
            prop_assert_eq!(s.n_match + s.n_nonmatch + s.n_undetermined, s.total);
            if s.total > 0 {
                let sum = s.match_rate + s.nonmatch_rate + s.undetermined_rate;
                prop_assert!((sum - 1.0).abs() <= 1.5e-4);
            }
        }
    }
}
