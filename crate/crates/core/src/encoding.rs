//! Scalar and date-time encoders.
//!
//! A KPI sample is encoded as the concatenation of a scalar field (value)
//! and a date-time field (time of day + day of week). Nearby values and
//! nearby times share active bits, so the downstream pooler sees semantic
//! similarity as bit overlap.

use chrono::{DateTime, Datelike, TimeZone, Timelike, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::Real;
use crate::sdr::Sdr;

/// Scalar encoder: buckets the value range and activates a contiguous
/// window of `w` bits starting at the bucket index.
///
/// Bit width is `buckets + w - 1`, so every bucket gets a full window.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "F: Real")]
pub struct ScalarEncoder<F: Real> {
    min: F,
    max: F,
    buckets: u32,
    w: u32,
}

impl<F: Real> ScalarEncoder<F> {
    /// Default bucket count; gives 150 output bits with the default `w`.
    pub const DEFAULT_BUCKETS: u32 = 130;
    /// Default active-bit window.
    pub const DEFAULT_W: u32 = 21;

    pub fn new(min: F, max: F, buckets: u32, w: u32) -> Result<Self> {
        if !min.is_finite() || !max.is_finite() || min >= max {
            return Err(Error::config(format!(
                "scalar encoder needs finite min < max, got [{min}, {max}]"
            )));
        }
        if buckets < 1 {
            return Err(Error::config("scalar encoder needs at least one bucket"));
        }
        if w < 1 || w % 2 == 0 {
            return Err(Error::config(format!(
                "scalar encoder needs odd w >= 1, got {w}"
            )));
        }
        Ok(ScalarEncoder { min, max, buckets, w })
    }

    pub fn with_defaults(min: F, max: F) -> Result<Self> {
        Self::new(min, max, Self::DEFAULT_BUCKETS, Self::DEFAULT_W)
    }

    /// Output width in bits.
    pub fn size(&self) -> u32 {
        self.buckets + self.w - 1
    }

    /// Active bits per encoding.
    pub fn w(&self) -> u32 {
        self.w
    }

    pub fn min(&self) -> F {
        self.min
    }

    pub fn max(&self) -> F {
        self.max
    }

    /// Bucket index for a value; out-of-range values clamp to the bounds
    /// so a live stream can never halt the encoder.
    pub fn bucket(&self, value: F) -> u32 {
        let v = if value < self.min {
            self.min
        } else if value > self.max {
            self.max
        } else {
            value
        };
        let unit = (v - self.min) / (self.max - self.min);
        let b = (unit * F::of_usize(self.buckets as usize - 1)).floor();
        // Guard against rounding at the top of the range.
        (b.as_f64() as u32).min(self.buckets - 1)
    }

    pub fn encode(&self, value: F) -> Sdr {
        let b = self.bucket(value);
        Sdr::from_sorted(self.size(), (b..b + self.w).collect())
    }
}

/// Date-time encoder: circular time-of-day ring concatenated with a
/// circular day-of-week ring.
///
/// Each ring has one bit per bucket and activates `w` consecutive bits
/// (wrapping), so buckets adjacent in time share `w - 1` bits; in
/// particular encodings just before and just after midnight stay close.
/// Only time of day and day of week are encoded: the same weekday and
/// clock time in different weeks produce identical SDRs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatetimeEncoder {
    tod_bucket_minutes: u32,
    tod_w: u32,
    dow_w: u32,
}

const MINUTES_PER_DAY: u32 = 1440;
const DAYS_PER_WEEK: u32 = 7;

impl DatetimeEncoder {
    pub const DEFAULT_TOD_BUCKET_MINUTES: u32 = 30;
    pub const DEFAULT_TOD_W: u32 = 11;
    pub const DEFAULT_DOW_W: u32 = 3;

    pub fn new(tod_bucket_minutes: u32, tod_w: u32, dow_w: u32) -> Result<Self> {
        if tod_bucket_minutes == 0 || MINUTES_PER_DAY % tod_bucket_minutes != 0 {
            return Err(Error::config(format!(
                "time-of-day bucket length must divide {MINUTES_PER_DAY} minutes, got {tod_bucket_minutes}"
            )));
        }
        let tod_buckets = MINUTES_PER_DAY / tod_bucket_minutes;
        if tod_w < 1 || tod_w > tod_buckets {
            return Err(Error::config(format!(
                "time-of-day w must be in [1, {tod_buckets}], got {tod_w}"
            )));
        }
        if !(1..=DAYS_PER_WEEK).contains(&dow_w) {
            return Err(Error::config(format!(
                "day-of-week w must be in [1, {DAYS_PER_WEEK}], got {dow_w}"
            )));
        }
        Ok(DatetimeEncoder { tod_bucket_minutes, tod_w, dow_w })
    }

    pub fn with_defaults() -> Self {
        DatetimeEncoder {
            tod_bucket_minutes: Self::DEFAULT_TOD_BUCKET_MINUTES,
            tod_w: Self::DEFAULT_TOD_W,
            dow_w: Self::DEFAULT_DOW_W,
        }
    }

    pub fn tod_buckets(&self) -> u32 {
        MINUTES_PER_DAY / self.tod_bucket_minutes
    }

    /// Output width in bits: one per time-of-day bucket plus one per weekday.
    pub fn size(&self) -> u32 {
        self.tod_buckets() + DAYS_PER_WEEK
    }

    /// Active bits per encoding.
    pub fn w(&self) -> u32 {
        self.tod_w + self.dow_w
    }

    /// Encodes a UTC timestamp given as seconds since the Unix epoch.
    pub fn encode(&self, timestamp: i64) -> Sdr {
        let dt: DateTime<Utc> = Utc.timestamp_opt(timestamp, 0).single().unwrap_or_else(|| {
            // Out-of-range timestamps cannot occur for i32-era data; fall
            // back to the epoch rather than aborting a live stream.
            Utc.timestamp_opt(0, 0).single().unwrap()
        });
        let minute_of_day = dt.hour() * 60 + dt.minute();
        let tod_bucket = minute_of_day / self.tod_bucket_minutes;
        let dow = dt.weekday().num_days_from_monday();

        let tod_buckets = self.tod_buckets();
        let mut active: Vec<u32> =
            (0..self.tod_w).map(|i| (tod_bucket + i) % tod_buckets).collect();
        active.extend((0..self.dow_w).map(|i| tod_buckets + (dow + i) % DAYS_PER_WEEK));
        Sdr::new(self.size(), active).expect("datetime bits in range by construction")
    }
}

/// Combined per-KPI encoder: scalar field followed by date-time field.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "F: Real")]
pub struct KpiEncoder<F: Real> {
    scalar: ScalarEncoder<F>,
    datetime: DatetimeEncoder,
}

impl<F: Real> KpiEncoder<F> {
    pub fn new(scalar: ScalarEncoder<F>, datetime: DatetimeEncoder) -> Self {
        KpiEncoder { scalar, datetime }
    }

    pub fn with_defaults(min: F, max: F) -> Result<Self> {
        Ok(KpiEncoder {
            scalar: ScalarEncoder::with_defaults(min, max)?,
            datetime: DatetimeEncoder::with_defaults(),
        })
    }

    pub fn size(&self) -> u32 {
        self.scalar.size() + self.datetime.size()
    }

    pub fn w(&self) -> u32 {
        self.scalar.w() + self.datetime.w()
    }

    pub fn encode(&self, value: F, timestamp: i64) -> Sdr {
        let s = self.scalar.encode(value);
        let d = self.datetime.encode(timestamp);
        Sdr::concat(&[&s, &d]).expect("two-part concat")
    }
}
