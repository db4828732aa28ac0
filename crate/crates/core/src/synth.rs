//! Seeded synthetic incident datasets with planted true pairs.
//!
//! Side A looks like an incident archive (one row per incident, ISO dates,
//! uppercase places). Side B looks like a death-reporting system (title-case
//! places, US-style dates, intent/weapon/cause columns and a narrative).
//! Planted pairs are copied from A into B with independent per-field
//! corruption; everything else is drawn fresh on each side.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use chrono::{Datelike, Days, NaiveDate};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::date::DEFAULT_EPOCH;
use crate::eval::TruthSet;
use crate::filter::{EligibilityEntry, FilterRuleSet};
use crate::normalize::normalize_city;
use crate::record::{CanonicalRecord, Dataset, RecordId, Source, StateCode};

pub const A_COLUMNS: [&str; 9] = [
    "incident_id",
    "date",
    "state",
    "city_or_county",
    "zip",
    "n_killed",
    "n_injured",
    "latitude",
    "longitude",
];

pub const B_COLUMNS: [&str; 10] = [
    "case_id",
    "InjuryState",
    "InjuryCity",
    "InjuryZip",
    "IncidentDate",
    "NumKilled",
    "IncidentCategory",
    "WeaponType",
    "CauseOfDeath",
    "Narrative",
];

/// Approximate 2018 populations (millions) of the bundled jurisdictions.
const POPULATION: &[(&str, f64)] = &[
    ("AK", 0.74),
    ("AL", 4.89),
    ("AZ", 7.17),
    ("CA", 39.56),
    ("CO", 5.70),
    ("CT", 3.57),
    ("DC", 0.70),
    ("DE", 0.97),
    ("GA", 10.52),
    ("HI", 1.42),
    ("IA", 3.16),
    ("IL", 12.74),
    ("IN", 6.69),
    ("KS", 2.91),
    ("KY", 4.47),
    ("LA", 4.66),
    ("MA", 6.90),
    ("MD", 6.04),
    ("ME", 1.34),
    ("MI", 9.99),
    ("MN", 5.61),
    ("MO", 6.13),
    ("NC", 10.38),
    ("NE", 1.93),
    ("NH", 1.36),
    ("NJ", 8.91),
    ("NM", 2.10),
    ("NV", 3.03),
    ("NY", 19.54),
    ("OH", 11.69),
    ("OK", 3.94),
    ("OR", 4.19),
    ("PA", 12.81),
    ("RI", 1.06),
    ("SC", 5.08),
    ("UT", 3.16),
    ("VA", 8.52),
    ("VT", 0.63),
    ("WA", 7.54),
    ("WI", 5.81),
    ("WV", 1.81),
];

const SYLLABLES: &[&str] = &[
    "AL", "BER", "CAM", "DEN", "EL", "FAR", "GLEN", "HAR", "IR", "JEF", "KEN", "LIN", "MAR",
    "NOR", "OAK", "PORT", "QUIN", "RICH", "SAL", "TREN", "UL", "VAN", "WEST", "YOR", "BRI",
    "CHES", "DOV", "ESS", "FRANK", "GRAN", "HOL", "LAN", "MID", "NEW", "OX", "PLEAS", "ROCK",
    "SPRING", "TON", "WOOD",
];

const SUFFIXES: &[&str] = &["", "", "", "VILLE", "TON", " CITY", " HEIGHTS", "BURG", " FALLS", "FORD"];

const ZIPS_TOP_CITY: f64 = 40.0;

const CAUSES: &[&str] = &[
    "Gunshot wound of head",
    "Gunshot wound of chest",
    "Multiple gunshot wounds",
    "Gunshot wound of abdomen",
];

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SynthError {
    #[error("invalid synthetic spec: {0}")]
    Invalid(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Corruption {
    /// Probability of one random edit to the city name.
    pub typo_rate: f64,
    /// Dates move by a uniform offset in `[-jitter_days, jitter_days]`.
    pub jitter_days: u32,
    /// Per-field probability that a linkage value is blanked.
    pub missing_rate: f64,
    /// Probability the victim count is off by one.
    pub killed_rate: f64,
}

impl Default for Corruption {
    fn default() -> Self {
        Corruption {
            typo_rate: 0.1,
            jitter_days: 1,
            missing_rate: 0.05,
            killed_rate: 0.02,
        }
    }
}

impl Corruption {
    pub fn none() -> Self {
        Corruption {
            typo_rate: 0.0,
            jitter_days: 0,
            missing_rate: 0.0,
            killed_rate: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub n_a: usize,
    pub n_b: usize,
    pub n_overlap: usize,
    pub corruption: Corruption,
    pub states: Vec<(StateCode, f64)>,
    pub seed: u64,
    pub epoch: NaiveDate,
    /// Dates are drawn inside each state's eligible years when listed here.
    pub eligibility: Vec<EligibilityEntry>,
    pub cities_per_state: usize,
}

impl SyntheticSpec {
    pub fn new(n_a: usize, n_b: usize, n_overlap: usize, seed: u64) -> Self {
        let eligibility = FilterRuleSet::bundled_eligibility();
        SyntheticSpec {
            n_a,
            n_b,
            n_overlap,
            corruption: Corruption::default(),
            states: default_state_weights(&eligibility),
            seed,
            epoch: DEFAULT_EPOCH,
            eligibility,
            cities_per_state: 60,
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        if self.n_overlap > self.n_a.min(self.n_b) {
            return Err(SynthError::Invalid("n_overlap exceeds a dataset size"));
        }
        let c = &self.corruption;
        let rates = [c.typo_rate, c.missing_rate, c.killed_rate];
        if rates.iter().any(|r| !(0.0..=1.0).contains(r)) {
            return Err(SynthError::Invalid("corruption rates must lie in [0, 1]"));
        }
        if self.states.is_empty() {
            return Err(SynthError::Invalid("no states"));
        }
        if self.states.iter().any(|(_, w)| !(w.is_finite() && *w >= 0.0))
            || self.states.iter().all(|(_, w)| *w == 0.0)
        {
            return Err(SynthError::Invalid("state weights must be non-negative with a positive sum"));
        }
        if self.cities_per_state == 0 {
            return Err(SynthError::Invalid("cities_per_state must be positive"));
        }
        Ok(())
    }
}

/// Population times eligible years for every listed jurisdiction.
pub fn default_state_weights(eligibility: &[EligibilityEntry]) -> Vec<(StateCode, f64)> {
    let mut out = Vec::new();
    for &(code, pop) in POPULATION {
        let state = StateCode::parse(code).expect("static code");
        let years: i32 = eligibility
            .iter()
            .filter(|e| e.state == state)
            .map(|e| e.last_year - e.first_year + 1)
            .sum();
        if years > 0 {
            out.push((state, pop * f64::from(years)));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub a: Dataset,
    pub b: Dataset,
    pub truth: TruthSet,
}

struct City {
    name: String,
    zips: Vec<String>,
}

struct StatePool {
    state: StateCode,
    cities: Vec<City>,
    popularity: WeightedIndex<f64>,
    first_day: u64,
    span_days: u64,
}

#[derive(Clone)]
struct Incident {
    pool: usize,
    city: Option<String>,
    zip: Option<String>,
    date: Option<NaiveDate>,
    killed: Option<u32>,
    injured: u32,
    lat: f64,
    lon: f64,
    category: &'static str,
    weapon: Option<&'static str>,
    cause: &'static str,
}

fn city_name(rng: &mut ChaCha8Rng) -> String {
    let parts = rng.random_range(1..=2);
    let mut name = String::new();
    for _ in 0..parts {
        name.push_str(SYLLABLES[rng.random_range(0..SYLLABLES.len())]);
    }
    name.push_str(SUFFIXES[rng.random_range(0..SUFFIXES.len())]);
    name
}

fn build_pools(spec: &SyntheticSpec, rng: &mut ChaCha8Rng) -> Vec<StatePool> {
    let mut pools = Vec::with_capacity(spec.states.len());
    for (idx, &(state, _)) in spec.states.iter().enumerate() {
        let mut names = BTreeSet::new();
        let mut cities = Vec::with_capacity(spec.cities_per_state);
        let mut zip_counter = 0u32;
        let zip_prefix = 10 + (idx as u32 % 90);
        let mut attempts = 0;
        while cities.len() < spec.cities_per_state && attempts < spec.cities_per_state * 50 {
            attempts += 1;
            let name = city_name(rng);
            if !names.insert(name.clone()) {
                continue;
            }
            // Popular cities cover more zip codes, as large cities do.
            let rank = cities.len() as f64 + 1.0;
            let n_zips = (libm::round(ZIPS_TOP_CITY / libm::pow(rank, 0.8)) as usize).max(1);
            let zips = (0..n_zips)
                .map(|_| {
                    zip_counter += 1;
                    format!("{:02}{:03}", zip_prefix, zip_counter % 1000)
                })
                .collect();
            cities.push(City { name, zips });
        }
        let weights: Vec<f64> = (0..cities.len()).map(|r| 1.0 / (r as f64 + 1.0)).collect();
        let popularity = WeightedIndex::new(&weights).expect("positive weights");

        let (first_year, last_year) = spec
            .eligibility
            .iter()
            .filter(|e| e.state == state)
            .fold(None, |acc: Option<(i32, i32)>, e| match acc {
                None => Some((e.first_year, e.last_year)),
                Some((lo, hi)) => Some((lo.min(e.first_year), hi.max(e.last_year))),
            })
            .unwrap_or((spec.epoch.year(), spec.epoch.year() + 4));
        let start = NaiveDate::from_ymd_opt(first_year, 1, 1)
            .unwrap_or(spec.epoch)
            .max(spec.epoch);
        let end = NaiveDate::from_ymd_opt(last_year, 12, 31).unwrap_or(start).max(start);
        pools.push(StatePool {
            state,
            cities,
            popularity,
            first_day: start.signed_duration_since(spec.epoch).num_days() as u64,
            span_days: end.signed_duration_since(start).num_days() as u64 + 1,
        });
    }
    pools
}

fn draw_killed(rng: &mut ChaCha8Rng) -> u32 {
    match rng.random_range(0..100) {
        0..=79 => 1,
        80..=91 => 2,
        92..=96 => 3,
        _ => rng.random_range(4..=8),
    }
}

fn draw_incident(
    pools: &[StatePool],
    states: &WeightedIndex<f64>,
    epoch: NaiveDate,
    rng: &mut ChaCha8Rng,
) -> Incident {
    let p = states.sample(rng);
    let pool = &pools[p];
    let city = &pool.cities[pool.popularity.sample(rng)];
    let zip = city.zips[rng.random_range(0..city.zips.len())].clone();
    let day = pool.first_day + rng.random_range(0..pool.span_days);
    let category = if rng.random_bool(0.9) {
        "homicide"
    } else {
        "undetermined"
    };
    Incident {
        pool: p,
        city: Some(city.name.clone()),
        zip: Some(zip),
        date: Some(epoch + Days::new(day)),
        killed: Some(draw_killed(rng)),
        injured: rng.random_range(0..4),
        lat: 25.0 + rng.random::<f64>() * 23.0,
        lon: -124.0 + rng.random::<f64>() * 57.0,
        category,
        weapon: if rng.random_bool(0.85) {
            Some("Firearm")
        } else {
            None
        },
        cause: CAUSES[rng.random_range(0..CAUSES.len())],
    }
}

fn typo(s: &str, rng: &mut ChaCha8Rng) -> String {
    let mut chars: Vec<char> = s.chars().collect();
    if chars.is_empty() {
        return String::new();
    }
    let random_letter = |rng: &mut ChaCha8Rng, not: char| loop {
        let c = (b'A' + rng.random_range(0..26u8)) as char;
        if c != not {
            break c;
        }
    };
    let op = rng.random_range(0..3);
    let pos = rng.random_range(0..chars.len());
    match op {
        1 if chars.len() >= 2 => {
            let p = pos.min(chars.len() - 2);
            chars.swap(p, p + 1);
            if chars[p] == chars[p + 1] {
                chars[p] = random_letter(rng, chars[p]);
            }
        }
        2 if chars.len() >= 2 => {
            chars.remove(pos);
        }
        _ => chars[pos] = random_letter(rng, chars[pos]),
    }
    chars.into_iter().collect()
}

fn corrupt(src: &Incident, c: &Corruption, epoch: NaiveDate, rng: &mut ChaCha8Rng) -> Incident {
    let mut out = src.clone();
    if let Some(city) = &out.city {
        if rng.random_bool(c.typo_rate) {
            out.city = Some(typo(city, rng));
        }
    }
    if let Some(d) = out.date {
        let j = i64::from(c.jitter_days);
        let shift = if j > 0 { rng.random_range(-j..=j) } else { 0 };
        let shifted = if shift >= 0 {
            d + Days::new(shift as u64)
        } else {
            d - Days::new(shift.unsigned_abs())
        };
        out.date = Some(shifted.max(epoch));
    }
    if let Some(k) = out.killed {
        if rng.random_bool(c.killed_rate) {
            out.killed = Some(if k <= 1 || rng.random_bool(0.5) { k + 1 } else { k - 1 });
        }
    }
    if rng.random_bool(c.missing_rate) {
        out.city = None;
    }
    if rng.random_bool(c.missing_rate) {
        out.zip = None;
    }
    if rng.random_bool(c.missing_rate) {
        out.date = None;
    }
    if rng.random_bool(c.missing_rate) {
        out.killed = None;
    }
    out
}

fn title_case(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut start = true;
    for c in s.chars() {
        if start {
            out.extend(c.to_uppercase());
        } else {
            out.extend(c.to_lowercase());
        }
        start = c == ' ';
    }
    out
}

fn opt_string<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map(ToString::to_string).unwrap_or_default()
}

fn canonical(id: String, source: Source, state: StateCode, inc: &Incident, epoch: NaiveDate, raw_city: &str) -> CanonicalRecord {
    let mut r = CanonicalRecord::new(id, source, state);
    r.city = normalize_city(raw_city);
    r.zip = inc.zip.clone();
    r.num_killed = inc.killed;
    if let Some(d) = inc.date {
        r.set_event_date(d, epoch).expect("dates are drawn on or after the epoch");
    }
    r
}

fn a_row(id: &str, state: StateCode, inc: &Incident, epoch: NaiveDate) -> CanonicalRecord {
    let raw_city = opt_string(&inc.city);
    let mut r = canonical(id.to_string(), Source::A, state, inc, epoch, &raw_city);
    r.payload = alloc::vec![
        id.to_string(),
        inc.date
            .map(|d| format!("{:04}-{:02}-{:02}", d.year(), d.month(), d.day()))
            .unwrap_or_default(),
        state.to_string(),
        raw_city,
        opt_string(&inc.zip),
        opt_string(&inc.killed),
        inc.injured.to_string(),
        format!("{:.4}", inc.lat),
        format!("{:.4}", inc.lon),
    ];
    r
}

fn b_row(id: &str, state: StateCode, inc: &Incident, epoch: NaiveDate) -> CanonicalRecord {
    let raw_city = inc.city.as_deref().map(title_case).unwrap_or_default();
    let mut r = canonical(id.to_string(), Source::B, state, inc, epoch, &raw_city);
    let date = inc
        .date
        .map(|d| format!("{:02}/{:02}/{:04}", d.month(), d.day(), d.year()))
        .unwrap_or_default();
    let narrative = format!(
        "Victim sustained a fatal {} in {}{}.",
        inc.cause.to_lowercase(),
        if raw_city.is_empty() { "an unreported city" } else { &raw_city },
        if date.is_empty() { String::new() } else { format!(" on {date}") },
    );
    r.payload = alloc::vec![
        id.to_string(),
        state.to_string(),
        raw_city,
        opt_string(&inc.zip),
        date,
        opt_string(&inc.killed),
        inc.category.to_string(),
        inc.weapon.unwrap_or("").to_string(),
        inc.cause.to_string(),
        narrative,
    ];
    r
}

/// Builds both datasets and the planted truth. Deterministic in `spec.seed`.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticData, SynthError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let pools = build_pools(spec, &mut rng);
    let weights: Vec<f64> = spec.states.iter().map(|&(_, w)| w).collect();
    let states = WeightedIndex::new(&weights).map_err(|_| SynthError::Invalid("bad state weights"))?;

    let a_incidents: Vec<Incident> = (0..spec.n_a)
        .map(|_| draw_incident(&pools, &states, spec.epoch, &mut rng))
        .collect();

    let mut overlap = rand::seq::index::sample(&mut rng, spec.n_a, spec.n_overlap).into_vec();
    overlap.sort_unstable();

    // (incident, index of the A source when planted)
    let mut b_incidents: Vec<(Incident, Option<usize>)> = Vec::with_capacity(spec.n_b);
    for &i in &overlap {
        b_incidents.push((corrupt(&a_incidents[i], &spec.corruption, spec.epoch, &mut rng), Some(i)));
    }
    for _ in spec.n_overlap..spec.n_b {
        b_incidents.push((draw_incident(&pools, &states, spec.epoch, &mut rng), None));
    }
    b_incidents.shuffle(&mut rng);

    let a_ids: Vec<String> = (0..spec.n_a).map(|i| format!("G{:06}", i + 1)).collect();
    let mut a = Dataset::new(A_COLUMNS.iter().map(|c| c.to_string()).collect());
    for (id, inc) in a_ids.iter().zip(&a_incidents) {
        a.records.push(a_row(id, pools[inc.pool].state, inc, spec.epoch));
    }

    let mut b = Dataset::new(B_COLUMNS.iter().map(|c| c.to_string()).collect());
    let mut truth = Vec::with_capacity(spec.n_overlap);
    for (j, (inc, src)) in b_incidents.iter().enumerate() {
        let id = format!("N{:06}", j + 1);
        if let Some(i) = src {
            truth.push((RecordId(a_ids[*i].clone()), RecordId(id.clone())));
        }
        b.records.push(b_row(&id, pools[inc.pool].state, inc, spec.epoch));
    }

    let truth = TruthSet::new(truth).expect("planted pairs are one-to-one");
    Ok(SyntheticData { a, b, truth })
}
