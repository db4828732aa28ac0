#![allow(dead_code)]

pub mod em_oracle;
pub mod fixtures;
pub mod oracle;
pub mod review_checks;
