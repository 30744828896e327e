// SPDX-License-Identifier: Apache-2.0
// SPDX-FileCopyrightText: Copyright The Lakeflow Authors

//! UTC timestamps stored as epoch milliseconds.
//!
//! The wire form is `YYYY-MM-DDThh:mm:ss.sssZ`. Parsing also accepts zero to
//! three fractional digits; rendering always emits exactly three.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

const MS_PER_DAY: i64 = 86_400_000;

/// Milliseconds since 1970-01-01T00:00:00Z.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Timestamp(i64);

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid timestamp {text:?}: {reason}")]
pub struct TimestampError {
    text: String,
    reason: &'static str,
}

impl Timestamp {
    /// Smallest value; strictly below every parseable timestamp.
    pub const MIN: Timestamp = Timestamp(i64::MIN);

    /// Earliest renderable instant (year 0000).
    pub const MIN_RENDERABLE: Timestamp = Timestamp(-62_167_219_200_000);
    /// Latest renderable instant (year 9999).
    pub const MAX_RENDERABLE: Timestamp = Timestamp(253_402_300_799_999);

    pub const fn from_millis(ms: i64) -> Self {
        Timestamp(ms)
    }

    pub const fn as_millis(self) -> i64 {
        self.0
    }

    pub fn now() -> Self {
        let since = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .unwrap_or_default();
        Timestamp(since.as_millis() as i64)
    }

    pub fn parse(text: &str) -> Result<Self, TimestampError> {
        let err = |reason| TimestampError {
            text: text.to_string(),
            reason,
        };
        let b = text.as_bytes();
        if b.len() < 20 || b[b.len() - 1] != b'Z' {
            return Err(err("expected YYYY-MM-DDThh:mm:ss[.sss]Z"));
        }
        if b[4] != b'-' || b[7] != b'-' || b[10] != b'T' || b[13] != b':' || b[16] != b':' {
            return Err(err("expected YYYY-MM-DDThh:mm:ss[.sss]Z"));
        }
        let year = digits(&b[0..4]).ok_or_else(|| err("bad year"))?;
        let month = digits(&b[5..7]).ok_or_else(|| err("bad month"))?;
        let day = digits(&b[8..10]).ok_or_else(|| err("bad day"))?;
        let hour = digits(&b[11..13]).ok_or_else(|| err("bad hour"))?;
        let minute = digits(&b[14..16]).ok_or_else(|| err("bad minute"))?;
        let second = digits(&b[17..19]).ok_or_else(|| err("bad second"))?;
        let millis = match &b[19..b.len() - 1] {
            [] => 0,
            [b'.', frac @ ..] if !frac.is_empty() && frac.len() <= 3 => {
                let v = digits(frac).ok_or_else(|| err("bad fraction"))?;
                v * 10i64.pow(3 - frac.len() as u32)
            }
            _ => return Err(err("fraction must have 1 to 3 digits")),
        };
        if !(1..=12).contains(&month) {
            return Err(err("month out of range"));
        }
        if day < 1 || day > days_in_month(year, month) {
            return Err(err("day out of range"));
        }
        if hour > 23 || minute > 59 || second > 59 {
            return Err(err("time of day out of range"));
        }
        let days = days_from_civil(year, month, day);
        Ok(Timestamp(
            days * MS_PER_DAY + ((hour * 60 + minute) * 60 + second) * 1000 + millis,
        ))
    }

    /// Appends the canonical rendering to `out`.
    ///
    /// Panics if the value lies outside years 0000..=9999.
    pub fn render_into(self, out: &mut String) {
        assert!(
            (Self::MIN_RENDERABLE..=Self::MAX_RENDERABLE).contains(&self),
            "timestamp {} ms outside renderable range",
            self.0
        );
        let days = self.0.div_euclid(MS_PER_DAY);
        let mut rem = self.0.rem_euclid(MS_PER_DAY);
        let (y, m, d) = civil_from_days(days);
        let ms = rem % 1000;
        rem /= 1000;
        let s = rem % 60;
        rem /= 60;
        let min = rem % 60;
        let h = rem / 60;
        let mut buf = *b"0000-00-00T00:00:00.000Z";
        put(&mut buf[0..4], y);
        put(&mut buf[5..7], m);
        put(&mut buf[8..10], d);
        put(&mut buf[11..13], h);
        put(&mut buf[14..16], min);
        put(&mut buf[17..19], s);
        put(&mut buf[20..23], ms);
        // Only ASCII digits and separators were written.
        out.push_str(std::str::from_utf8(&buf).expect("ascii"));
    }

    pub fn render(self) -> String {
        let mut s = String::with_capacity(24);
        self.render_into(&mut s);
        s
    }
}

fn digits(b: &[u8]) -> Option<i64> {
    let mut v = 0i64;
    for &c in b {
        if !c.is_ascii_digit() {
            return None;
        }
        v = v * 10 + i64::from(c - b'0');
    }
    Some(v)
}

fn put(dst: &mut [u8], mut v: i64) {
    for slot in dst.iter_mut().rev() {
        *slot = b'0' + (v % 10) as u8;
        v /= 10;
    }
}

fn is_leap(y: i64) -> bool {
    (y % 4 == 0 && y % 100 != 0) || y % 400 == 0
}

fn days_in_month(y: i64, m: i64) -> i64 {
    match m {
        1 | 3 | 5 | 7 | 8 | 10 | 12 => 31,
        4 | 6 | 9 | 11 => 30,
        _ if is_leap(y) => 29,
        _ => 28,
    }
}

// Proleptic Gregorian conversions (H. Hinnant's civil algorithms).
fn days_from_civil(y: i64, m: i64, d: i64) -> i64 {
    let y = if m <= 2 { y - 1 } else { y };
    let era = y.div_euclid(400);
    let yoe = y - era * 400;
    let mp = (m + 9) % 12;
    let doy = (153 * mp + 2) / 5 + d - 1;
    let doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    era * 146_097 + doe - 719_468
}

fn civil_from_days(z: i64) -> (i64, i64, i64) {
    let z = z + 719_468;
    let era = z.div_euclid(146_097);
    let doe = z - era * 146_097;
    let yoe = (doe - doe / 1460 + doe / 36_524 - doe / 146_096) / 365;
    let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    let mp = (5 * doy + 2) / 153;
    let d = doy - (153 * mp + 2) / 5 + 1;
    let m = if mp < 10 { mp + 3 } else { mp - 9 };
    let y = yoe + era * 400 + i64::from(m <= 2);
    (y, m, d)
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

impl FromStr for Timestamp {
    type Err = TimestampError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Timestamp::parse(s)
    }
}

impl Serialize for Timestamp {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.render())
    }
}

impl<'de> Deserialize<'de> for Timestamp {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Timestamp::parse(&s).map_err(serde::de::Error::custom)
    }
}
