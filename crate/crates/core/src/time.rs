//! Timestamps are integer seconds. Text input may be an integer or an ISO-8601
//! date-time, which is converted to seconds since the Unix epoch.

use chrono::{DateTime, NaiveDateTime};
use serde::{Deserialize, Deserializer};

pub type Timestamp = i64;

pub fn parse_timestamp(text: &str) -> Option<Timestamp> {
    let text = text.trim();
    if let Ok(secs) = text.parse::<i64>() {
        return Some(secs);
    }
    if let Ok(t) = DateTime::parse_from_rfc3339(text) {
        return Some(t.timestamp());
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M"] {
        if let Ok(t) = NaiveDateTime::parse_from_str(text, fmt) {
            return Some(t.and_utc().timestamp());
        }
    }
    None
}

/// Serde helper accepting either an integer or an ISO-8601 string.
pub(crate) fn deserialize_timestamp<'de, D>(de: D) -> Result<Timestamp, D::Error>
where
    D: Deserializer<'de>,
{
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Int(i64),
        Text(String),
    }
    match Raw::deserialize(de)? {
        Raw::Int(v) => Ok(v),
        Raw::Text(s) => parse_timestamp(&s)
            .ok_or_else(|| serde::de::Error::custom(format!("invalid timestamp `{s}`"))),
    }
}

pub(crate) fn deserialize_opt_timestamp<'de, D>(de: D) -> Result<Option<Timestamp>, D::Error>
where
    D: Deserializer<'de>,
{
    deserialize_timestamp(de).map(Some)
}
