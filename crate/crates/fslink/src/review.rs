//! Clerical review queue over the merged output, backed by an append-only
//! decision log.
//!
//! Log format: one JSON object per line with keys in the order `seq`,
//! `pair_id`, `decision`, `reviewer`, `timestamp` (RFC 3339, UTC). The file
//! is the only persistent state; restarting replays it. A torn final line
//! (no trailing newline) is discarded on open.

use std::collections::{BTreeMap, HashMap};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, SecondsFormat, Utc};
use fslink_core::eval::{sensitivity_report, Adjudication, AdjudicationSummary, Decision};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{CanonicalField, Config, QueueOrder};

#[derive(Debug, thiserror::Error)]
pub enum ReviewError {
    #[error("unknown pair {0}")]
    UnknownPair(String),
    #[error("{0}")]
    BadRequest(String),
    #[error("decision log {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("decision log {path}, line {line}: {msg}")]
    CorruptLog { path: PathBuf, line: usize, msg: String },
    #[error("merged file {path}: {msg}")]
    Merged { path: PathBuf, msg: String },
}

/// Stable token for a pair: first 16 hex digits of SHA-256 over
/// `id_a NUL id_b`.
pub fn pair_id(id_a: &str, id_b: &str) -> String {
    let mut h = Sha256::new();
    h.update(id_a.as_bytes());
    h.update([0u8]);
    h.update(id_b.as_bytes());
    let digest = h.finalize();
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldValue {
    pub column: String,
    /// `None` for an empty cell.
    pub value: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pending,
    Decided,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewItem {
    pub pair_id: String,
    pub state: String,
    pub id_a: String,
    pub id_b: String,
    pub xi: f64,
    pub a: Vec<FieldValue>,
    pub b: Vec<FieldValue>,
    pub narrative_a: Option<String>,
    pub narrative_b: Option<String>,
    pub status: Status,
    pub decision: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub seq: u64,
    pub pair_id: String,
    pub decision: String,
    pub reviewer: String,
    pub timestamp: String,
}

impl LogEntry {
    fn adjudication(&self) -> Option<Adjudication> {
        Some(Adjudication {
            pair_id: self.pair_id.clone(),
            decision: self.decision.parse().ok()?,
            reviewer: self.reviewer.clone(),
            timestamp: DateTime::parse_from_rfc3339(&self.timestamp).ok()?.with_timezone(&Utc),
        })
    }
}

/// Which merged columns hold ids, state and narratives.
#[derive(Debug, Clone, PartialEq)]
pub struct QueueColumns {
    pub id_a: String,
    pub id_b: String,
    pub state: String,
    pub narrative_a: Option<String>,
    pub narrative_b: Option<String>,
}

impl QueueColumns {
    pub fn from_config(cfg: &Config) -> QueueColumns {
        let col = |side: &crate::config::SchemaMapping, f| side.column_for(f).unwrap_or_default().to_string();
        QueueColumns {
            id_a: format!("a_{}", col(&cfg.a, CanonicalField::Id)),
            id_b: format!("b_{}", col(&cfg.b, CanonicalField::Id)),
            state: format!("a_{}", col(&cfg.a, CanonicalField::State)),
            narrative_a: cfg.a.narrative.as_ref().map(|c| format!("a_{c}")),
            narrative_b: cfg.b.narrative.as_ref().map(|c| format!("b_{c}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueueOptions {
    pub order: QueueOrder,
    pub seed: u64,
    pub state: Option<String>,
}

/// Builds the review queue from a merged CSV.
pub fn load_queue(path: &Path, cols: &QueueColumns, opts: &QueueOptions) -> Result<Vec<ReviewItem>, ReviewError> {
    let bad = |msg: String| ReviewError::Merged {
        path: path.to_path_buf(),
        msg,
    };
    let mut r = csv::Reader::from_path(path).map_err(|e| bad(e.to_string()))?;
    let header: Vec<String> = r
        .headers()
        .map_err(|e| bad(e.to_string()))?
        .iter()
        .map(String::from)
        .collect();
    let find = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| bad(format!("no column {name:?}")))
    };
    let i_a = find(&cols.id_a)?;
    let i_b = find(&cols.id_b)?;
    let i_state = find(&cols.state)?;
    let i_xi = find("xi")?;
    let i_na = cols.narrative_a.as_deref().map(find).transpose()?;
    let i_nb = cols.narrative_b.as_deref().map(find).transpose()?;
    let want_state = opts.state.as_deref().map(str::to_ascii_uppercase);

    let mut items = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let state = rec[i_state].trim().to_ascii_uppercase();
        if want_state.as_deref().is_some_and(|s| s != state) {
            continue;
        }
        let xi: f64 = rec[i_xi].parse().map_err(|_| bad(format!("bad xi {:?}", &rec[i_xi])))?;
        let mut a = Vec::new();
        let mut b = Vec::new();
        for (name, value) in header.iter().zip(rec.iter()) {
            let fv = |column: &str| FieldValue {
                column: column.to_string(),
                value: Some(value.to_string()).filter(|v| !v.is_empty()),
            };
            if let Some(c) = name.strip_prefix("a_") {
                a.push(fv(c));
            } else if let Some(c) = name.strip_prefix("b_") {
                b.push(fv(c));
            }
        }
        let text = |i: Option<usize>| i.map(|i| rec[i].to_string()).filter(|v| !v.is_empty());
        items.push(ReviewItem {
            pair_id: pair_id(&rec[i_a], &rec[i_b]),
            state,
            id_a: rec[i_a].to_string(),
            id_b: rec[i_b].to_string(),
            xi,
            a,
            b,
            narrative_a: text(i_na),
            narrative_b: text(i_nb),
            status: Status::Pending,
            decision: None,
        });
    }
    order_queue(&mut items, opts);
    Ok(items)
}

/// Descending xi (ties by pair id), or a seeded shuffle.
pub fn order_queue(items: &mut [ReviewItem], opts: &QueueOptions) {
    items.sort_by(|x, y| x.pair_id.cmp(&y.pair_id));
    match opts.order {
        QueueOrder::Xi => items.sort_by(|x, y| y.xi.total_cmp(&x.xi).then_with(|| x.pair_id.cmp(&y.pair_id))),
        QueueOrder::Random => items.shuffle(&mut ChaCha8Rng::seed_from_u64(opts.seed)),
    }
}

/// Reads every complete entry. A final line without a newline is ignored.
pub fn read_log(path: &Path) -> Result<Vec<LogEntry>, ReviewError> {
    let io = |source| ReviewError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(io(e)),
    };
    let mut reader = BufReader::new(file);
    let mut out = Vec::new();
    let mut buf = String::new();
    let mut line = 0;
    loop {
        buf.clear();
        let n = reader.read_line(&mut buf).map_err(io)?;
        if n == 0 || !buf.ends_with('\n') {
            break;
        }
        line += 1;
        let text = buf.trim();
        if text.is_empty() {
            continue;
        }
        let entry: LogEntry = serde_json::from_str(text).map_err(|e| ReviewError::CorruptLog {
            path: path.to_path_buf(),
            line,
            msg: e.to_string(),
        })?;
        if entry.adjudication().is_none() {
            return Err(ReviewError::CorruptLog {
                path: path.to_path_buf(),
                line,
                msg: "bad decision or timestamp".into(),
            });
        }
        out.push(entry);
    }
    Ok(out)
}

/// Summary plus progress, as served by `/api/summary`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryView {
    pub n_match: usize,
    pub n_nonmatch: usize,
    pub n_undetermined: usize,
    pub decided: usize,
    pub total: usize,
    pub match_rate: f64,
    pub nonmatch_rate: f64,
    pub undetermined_rate: f64,
    /// Rates as percentages rounded to one decimal.
    pub percents: [f64; 3],
    pub empty: bool,
    /// match / all decided.
    pub review_precision: Option<f64>,
    /// `review_precision` as a percentage truncated to two decimals.
    pub review_precision_percent: Option<f64>,
    /// match / (match + nonmatch).
    pub decided_precision: Option<f64>,
    pub history: usize,
}

impl SummaryView {
    pub fn new(s: &AdjudicationSummary, total: usize, history: usize) -> Self {
        SummaryView {
            n_match: s.n_match,
            n_nonmatch: s.n_nonmatch,
            n_undetermined: s.n_undetermined,
            decided: s.total,
            total,
            match_rate: s.match_rate,
            nonmatch_rate: s.nonmatch_rate,
            undetermined_rate: s.undetermined_rate,
            percents: s.percents_1dp(),
            empty: s.empty,
            review_precision: s.review_precision,
            review_precision_percent: s.review_precision_percent(),
            decided_precision: s.decided_precision,
            history,
        }
    }
}

/// Latest decision per pair, restricted to `known` when given.
fn latest<'a>(entries: &'a [LogEntry], known: Option<&HashMap<String, usize>>) -> BTreeMap<&'a str, &'a LogEntry> {
    let mut out = BTreeMap::new();
    for e in entries {
        if known.is_none_or(|k| k.contains_key(&e.pair_id)) {
            out.insert(e.pair_id.as_str(), e);
        }
    }
    out
}

fn summarize(entries: &[LogEntry], known: Option<&HashMap<String, usize>>, total: Option<usize>) -> SummaryView {
    let last = latest(entries, known);
    let adjudications: Vec<Adjudication> = last.values().filter_map(|e| e.adjudication()).collect();
    let s = sensitivity_report(&adjudications).expect("one entry per pair");
    let history = entries
        .iter()
        .filter(|e| known.is_none_or(|k| k.contains_key(&e.pair_id)))
        .count();
    SummaryView::new(&s, total.unwrap_or(s.total), history)
}

/// Summary of a whole log, independent of any queue.
pub fn summarize_log(entries: &[LogEntry], total: Option<usize>) -> SummaryView {
    summarize(entries, None, total)
}

struct LogWriter {
    path: PathBuf,
    file: File,
}

impl LogWriter {
    /// Opens for append, dropping a torn trailing line first.
    fn open(path: &Path) -> Result<LogWriter, ReviewError> {
        let io = |source| ReviewError::Io {
            path: path.to_path_buf(),
            source,
        };
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(io)?;
        }
        if let Ok(bytes) = std::fs::read(path) {
            let keep = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
            if keep != bytes.len() {
                let f = OpenOptions::new().write(true).open(path).map_err(io)?;
                f.set_len(keep as u64).map_err(io)?;
                f.sync_all().map_err(io)?;
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(path).map_err(io)?;
        Ok(LogWriter {
            path: path.to_path_buf(),
            file,
        })
    }

    fn append(&mut self, e: &LogEntry) -> Result<(), ReviewError> {
        let mut line = serde_json::to_vec(e).expect("log entries serialize");
        line.push(b'\n');
        let io = |source| ReviewError::Io {
            path: self.path.clone(),
            source,
        };
        self.file.write_all(&line).map_err(io)?;
        self.file.sync_data().map_err(io)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRequest {
    pub decision: String,
    pub reviewer: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionAck {
    pub seq: u64,
    pub pair_id: String,
    pub decision: String,
    pub status: Status,
    pub history: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairDetail {
    #[serde(flatten)]
    pub item: ReviewItem,
    pub history: Vec<LogEntry>,
}

/// Queue plus replayed log. All mutation goes through [`record_decision`].
///
/// [`record_decision`]: ReviewState::record_decision
pub struct ReviewState {
    items: Vec<ReviewItem>,
    index: HashMap<String, usize>,
    entries: Vec<LogEntry>,
    writer: LogWriter,
}

impl ReviewState {
    pub fn open(items: Vec<ReviewItem>, log: &Path) -> Result<ReviewState, ReviewError> {
        let writer = LogWriter::open(log)?;
        let entries = read_log(log)?;
        let index = items
            .iter()
            .enumerate()
            .map(|(i, it)| (it.pair_id.clone(), i))
            .collect();
        let mut s = ReviewState {
            items,
            index,
            entries,
            writer,
        };
        let replay: Vec<(String, String)> = latest(&s.entries, Some(&s.index))
            .into_iter()
            .map(|(p, e)| (p.to_string(), e.decision.clone()))
            .collect();
        for (p, d) in replay {
            s.mark(&p, d);
        }
        Ok(s)
    }

    fn mark(&mut self, pair: &str, decision: String) {
        if let Some(&i) = self.index.get(pair) {
            self.items[i].status = Status::Decided;
            self.items[i].decision = Some(decision);
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn items(&self) -> &[ReviewItem] {
        &self.items
    }

    /// Highest-priority pending item. No locking: two reviewers may get
    /// the same pair, and the later decision wins.
    pub fn next_pending(&self) -> Option<&ReviewItem> {
        self.items.iter().find(|i| i.status == Status::Pending)
    }

    pub fn get(&self, pair: &str) -> Result<PairDetail, ReviewError> {
        let i = *self.index.get(pair).ok_or_else(|| ReviewError::UnknownPair(pair.to_string()))?;
        Ok(PairDetail {
            item: self.items[i].clone(),
            history: self.entries.iter().filter(|e| e.pair_id == pair).cloned().collect(),
        })
    }

    pub fn record_decision(&mut self, pair: &str, req: &DecisionRequest, now: DateTime<Utc>) -> Result<DecisionAck, ReviewError> {
        if !self.index.contains_key(pair) {
            return Err(ReviewError::UnknownPair(pair.to_string()));
        }
        let decision: Decision = req
            .decision
            .trim()
            .parse()
            .map_err(|e: fslink_core::eval::UnknownDecision| ReviewError::BadRequest(e.to_string()))?;
        let reviewer = req.reviewer.trim();
        if reviewer.is_empty() {
            return Err(ReviewError::BadRequest("reviewer must not be empty".into()));
        }
        let entry = LogEntry {
            seq: self.entries.last().map_or(1, |e| e.seq + 1),
            pair_id: pair.to_string(),
            decision: decision.as_str().to_string(),
            reviewer: reviewer.to_string(),
            timestamp: now.to_rfc3339_opts(SecondsFormat::Millis, true),
        };
        self.writer.append(&entry)?;
        self.mark(pair, entry.decision.clone());
        let ack = DecisionAck {
            seq: entry.seq,
            pair_id: entry.pair_id.clone(),
            decision: entry.decision.clone(),
            status: Status::Decided,
            history: self.entries.iter().filter(|e| e.pair_id == pair).count() + 1,
        };
        self.entries.push(entry);
        Ok(ack)
    }

    pub fn summary(&self) -> SummaryView {
        summarize(&self.entries, Some(&self.index), Some(self.items.len()))
    }

    pub fn history(&self) -> &[LogEntry] {
        &self.entries
    }

    /// Adjudication history (or latest per pair) as CSV.
    pub fn export_csv(&self, latest_only: bool) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["seq", "pair_id", "id_a", "id_b", "state", "xi", "decision", "reviewer", "timestamp"])
            .expect("in-memory write");
        let rows: Vec<&LogEntry> = if latest_only {
            let mut v: Vec<&LogEntry> = latest(&self.entries, Some(&self.index)).into_values().collect();
            v.sort_by_key(|e| e.seq);
            v
        } else {
            self.entries
                .iter()
                .filter(|e| self.index.contains_key(&e.pair_id))
                .collect()
        };
        for e in rows {
            let it = &self.items[self.index[&e.pair_id]];
            w.write_record([
                e.seq.to_string(),
                e.pair_id.clone(),
                it.id_a.clone(),
                it.id_b.clone(),
                it.state.clone(),
                it.xi.to_string(),
                e.decision.clone(),
                e.reviewer.clone(),
                e.timestamp.clone(),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
    }
}
