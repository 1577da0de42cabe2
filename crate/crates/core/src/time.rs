//! Second-resolution time arithmetic over multi-day horizons.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::ModelError;

pub const SECONDS_PER_DAY: i64 = 86_400;

/// Seconds relative to midnight of the service day a trip runs on.
/// May exceed one day for trips that cross midnight.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RelTime(i64);

impl RelTime {
    /// Sentinel for "no departure": the last stop of a trip cannot be boarded.
    pub const INFINITE: RelTime = RelTime(i64::MAX);

    pub fn new(seconds: i64) -> Result<Self, ModelError> {
        if seconds < 0 {
            return Err(ModelError::NegativeTime(seconds));
        }
        Ok(RelTime(seconds))
    }

    pub const fn from_seconds_unchecked(seconds: i64) -> Self {
        RelTime(seconds)
    }

    pub fn seconds(self) -> i64 {
        self.0
    }

    pub fn is_infinite(self) -> bool {
        self.0 == i64::MAX
    }

    pub fn plus(self, seconds: i64) -> RelTime {
        if self.is_infinite() {
            self
        } else {
            RelTime(self.0 + seconds)
        }
    }
}

impl fmt::Debug for RelTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_infinite() {
            write!(f, "RelTime(inf)")
        } else {
            write!(f, "RelTime({})", format_hms(self.0))
        }
    }
}

/// Seconds since midnight of day 0 of the timetable horizon.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AbsTime(i64);

impl AbsTime {
    pub const INFINITE: AbsTime = AbsTime(i64::MAX);

    pub const fn from_seconds(seconds: i64) -> Self {
        AbsTime(seconds)
    }

    pub fn seconds(self) -> i64 {
        self.0
    }

    pub fn is_infinite(self) -> bool {
        self.0 == i64::MAX
    }

    /// Horizon day this instant falls on (floor division; never negative inputs in practice).
    pub fn day(self) -> i64 {
        self.0.div_euclid(SECONDS_PER_DAY)
    }

    pub fn time_of_day(self) -> i64 {
        self.0.rem_euclid(SECONDS_PER_DAY)
    }

    pub fn plus(self, seconds: i64) -> AbsTime {
        if self.is_infinite() {
            self
        } else {
            AbsTime(self.0 + seconds)
        }
    }
}

impl fmt::Debug for AbsTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_infinite() {
            write!(f, "AbsTime(inf)")
        } else {
            write!(f, "AbsTime(d{}+{})", self.day(), format_hms(self.time_of_day()))
        }
    }
}

/// `day_index * 86400 + t`, the absolute instant of a relative time on a given service day.
pub fn abs_time(day_index: i64, t: RelTime) -> AbsTime {
    if t.is_infinite() {
        AbsTime::INFINITE
    } else {
        AbsTime(day_index * SECONDS_PER_DAY + t.seconds())
    }
}

/// Renders seconds as `H:MM:SS`; hours may exceed 23.
pub fn format_hms(seconds: i64) -> String {
    let h = seconds / 3600;
    let m = (seconds % 3600) / 60;
    let s = seconds % 60;
    format!("{:02}:{:02}:{:02}", h, m, s)
}

/// Parses GTFS-style `H:MM:SS` / `HH:MM:SS`; hours may exceed 23 for
/// trips running past midnight.
pub fn parse_hms(text: &str) -> Result<RelTime, ModelError> {
    let bad = || ModelError::BadTimeLiteral(text.to_string());
    let mut parts = text.trim().split(':');
    let h: i64 = parts.next().ok_or_else(bad)?.trim().parse().map_err(|_| bad())?;
    let m: i64 = parts.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
    let s: i64 = parts.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
    if parts.next().is_some() || h < 0 || !(0..60).contains(&m) || !(0..60).contains(&s) {
        return Err(bad());
    }
    RelTime::new(h * 3600 + m * 60 + s)
}
