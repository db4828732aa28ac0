//! Label standardization applied to both sources before comparison.

use alloc::string::String;

use crate::record::StateCode;

/// Uppercase, strip punctuation, collapse internal whitespace, trim.
/// Returns `None` when nothing is left.
pub fn normalize_city(raw: &str) -> Option<String> {
    let mut out = String::with_capacity(raw.len());
    let mut pending_space = false;
    for c in raw.chars() {
        if c.is_whitespace() {
            pending_space = !out.is_empty();
        } else {
            for u in c.to_uppercase().filter(|u| u.is_alphanumeric()) {
                if pending_space {
                    out.push(' ');
                    pending_space = false;
                }
                out.push(u);
            }
        }
    }
    (!out.is_empty()).then_some(out)
}

/// Five-digit zip with leading zeros. ZIP+4 is truncated; short all-digit
/// values (leading zeros lost in a numeric export) are left-padded.
/// `Err(())` for anything that is not a zip.
#[allow(clippy::result_unit_err)]
pub fn normalize_zip(raw: &str) -> Result<Option<String>, ()> {
    let trimmed = raw.trim();
    if trimmed.is_empty() {
        return Ok(None);
    }
    let head = trimmed.split('-').next().unwrap_or("");
    if head.is_empty() || !head.bytes().all(|b| b.is_ascii_digit()) {
        return Err(());
    }
    let zip = match head.len() {
        1..=4 => {
            let mut z = String::with_capacity(5);
            for _ in head.len()..5 {
                z.push('0');
            }
            z.push_str(head);
            z
        }
        _ => String::from(&head[..5]),
    };
    Ok(Some(zip))
}

const STATE_NAMES: &[(&str, &str)] = &[
    ("ALABAMA", "AL"),
    ("ALASKA", "AK"),
    ("ARIZONA", "AZ"),
    ("ARKANSAS", "AR"),
    ("CALIFORNIA", "CA"),
    ("COLORADO", "CO"),
    ("CONNECTICUT", "CT"),
    ("DELAWARE", "DE"),
    ("DISTRICT OF COLUMBIA", "DC"),
    ("FLORIDA", "FL"),
    ("GEORGIA", "GA"),
    ("HAWAII", "HI"),
    ("IDAHO", "ID"),
    ("ILLINOIS", "IL"),
    ("INDIANA", "IN"),
    ("IOWA", "IA"),
    ("KANSAS", "KS"),
    ("KENTUCKY", "KY"),
    ("LOUISIANA", "LA"),
    ("MAINE", "ME"),
    ("MARYLAND", "MD"),
    ("MASSACHUSETTS", "MA"),
    ("MICHIGAN", "MI"),
    ("MINNESOTA", "MN"),
    ("MISSISSIPPI", "MS"),
    ("MISSOURI", "MO"),
    ("MONTANA", "MT"),
    ("NEBRASKA", "NE"),
    ("NEVADA", "NV"),
    ("NEW HAMPSHIRE", "NH"),
    ("NEW JERSEY", "NJ"),
    ("NEW MEXICO", "NM"),
    ("NEW YORK", "NY"),
    ("NORTH CAROLINA", "NC"),
    ("NORTH DAKOTA", "ND"),
    ("OHIO", "OH"),
    ("OKLAHOMA", "OK"),
    ("OREGON", "OR"),
    ("PENNSYLVANIA", "PA"),
    ("PUERTO RICO", "PR"),
    ("RHODE ISLAND", "RI"),
    ("SOUTH CAROLINA", "SC"),
    ("SOUTH DAKOTA", "SD"),
    ("TENNESSEE", "TN"),
    ("TEXAS", "TX"),
    ("UTAH", "UT"),
    ("VERMONT", "VT"),
    ("VIRGINIA", "VA"),
    ("WASHINGTON", "WA"),
    ("WASHINGTON STATE", "WA"),
    ("WEST VIRGINIA", "WV"),
    ("WISCONSIN", "WI"),
    ("WYOMING", "WY"),
];

/// Two-letter code or full state name (any case/punctuation) to a code.
pub fn normalize_state(raw: &str) -> Option<StateCode> {
    if let Some(code) = StateCode::parse(raw) {
        return Some(code);
    }
    let name = normalize_city(raw)?;
    STATE_NAMES
        .iter()
        .find(|(n, _)| *n == name)
        .and_then(|(_, code)| StateCode::parse(code))
}
