use chrono::NaiveDate;

/// Default day-zero for `days_since_start`: January 1, 2014.
pub const DEFAULT_EPOCH: NaiveDate = match NaiveDate::from_ymd_opt(2014, 1, 1) {
    Some(d) => d,
    None => panic!("invalid epoch"),
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum DateError {
    #[error("date {date} precedes epoch {epoch}")]
    BeforeEpoch { date: NaiveDate, epoch: NaiveDate },
}

/// Whole calendar days from `epoch` to `date`.
pub fn days_since_start(date: NaiveDate, epoch: NaiveDate) -> Result<u32, DateError> {
    let days = date.signed_duration_since(epoch).num_days();
    u32::try_from(days).map_err(|_| DateError::BeforeEpoch { date, epoch })
}
