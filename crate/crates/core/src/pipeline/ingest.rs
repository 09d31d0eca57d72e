//! Tick CSV ingestion.
//!
//! Two layouts are accepted, selected by the header row:
//!
//! * `timestamp,price` with ISO datetimes (`2018-01-02T09:30:01` or with a
//!   space separator, optional fractional seconds);
//! * `day,seconds,price` with `seconds` counted from the session open.
//!
//! Each session is mapped onto `[i-1, i]`. When no tick falls exactly on the
//! open or close, the first or last observed price is carried to the
//! boundary, so overnight moves never enter a day.

use std::io::Read;
use std::path::Path;

use chrono::{NaiveDateTime, NaiveTime, Timelike};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simulate::{DayRecord, PanelMeta, TickPanel};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionCalendar {
    /// Session open, `HH:MM[:SS]`.
    pub open: String,
    /// Session close, `HH:MM[:SS]`.
    pub close: String,
    /// Days with fewer ticks are skipped.
    pub min_ticks: usize,
    /// A day is flagged when it has fewer than `(1 - gap_tolerance)` of the
    /// expected tick count.
    pub gap_tolerance: f64,
    /// Expected ticks per day; defaults to the largest count observed.
    pub expected_ticks: Option<usize>,
}

impl Default for SessionCalendar {
    fn default() -> Self {
        Self {
            open: "09:30:00".into(),
            close: "16:00:00".into(),
            min_ticks: 100,
            gap_tolerance: 0.05,
            expected_ticks: None,
        }
    }
}

fn parse_clock(s: &str) -> Option<f64> {
    NaiveTime::parse_from_str(s, "%H:%M:%S%.f")
        .or_else(|_| NaiveTime::parse_from_str(s, "%H:%M"))
        .ok()
        .map(seconds_of_day)
}

fn seconds_of_day(t: NaiveTime) -> f64 {
    t.num_seconds_from_midnight() as f64 + t.nanosecond() as f64 * 1e-9
}

impl SessionCalendar {
    pub fn validate(&self) -> Result<()> {
        self.bounds().map(|_| ())
    }

    /// `(open, length)` in seconds.
    fn bounds(&self) -> Result<(f64, f64)> {
        let open = parse_clock(&self.open).ok_or_else(|| Error::config(format!("bad session open '{}'", self.open)))?;
        let close = parse_clock(&self.close).ok_or_else(|| Error::config(format!("bad session close '{}'", self.close)))?;
        if close <= open {
            return Err(Error::config("session close must be after open"));
        }
        if !(0.0..1.0).contains(&self.gap_tolerance) {
            return Err(Error::config("gap_tolerance must lie in [0, 1)"));
        }
        if self.min_ticks < 2 {
            return Err(Error::config("min_ticks must be >= 2"));
        }
        Ok((open, close - open))
    }
}

enum Layout {
    Timestamp,
    DaySeconds,
}

fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f"]
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
}

struct RawDay {
    label: String,
    /// (seconds since open, price)
    ticks: Vec<(f64, f64)>,
}

fn parse_error(line: u64, msg: impl Into<String>) -> Error {
    Error::Parse {
        line: line as usize,
        msg: msg.into(),
    }
}

/// Reads ticks from any CSV source.
pub fn ingest_ticks<R: Read>(reader: R, cal: &SessionCalendar) -> Result<TickPanel> {
    let (open, length) = cal.bounds()?;
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(reader);
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| parse_error(1, e.to_string()))?
        .iter()
        .map(|h| h.to_ascii_lowercase())
        .collect();
    let layout = match headers.iter().map(String::as_str).collect::<Vec<_>>().as_slice() {
        ["timestamp", "price"] => Layout::Timestamp,
        ["day", "seconds", "price"] => Layout::DaySeconds,
        _ => {
            return Err(parse_error(
                1,
                format!("expected header 'timestamp,price' or 'day,seconds,price', got '{}'", headers.join(",")),
            ))
        }
    };

    let mut days: Vec<RawDay> = Vec::new();
    let mut outside = 0usize;
    let mut record = csv::StringRecord::new();
    loop {
        let more = rdr.read_record(&mut record).map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_error(line, e.to_string())
        })?;
        if !more {
            break;
        }
        let line = record.position().map_or(0, |p| p.line());
        let (label, secs, price_field) = match layout {
            Layout::Timestamp => {
                let ts = parse_timestamp(&record[0])
                    .ok_or_else(|| parse_error(line, format!("bad timestamp '{}'", &record[0])))?;
                (ts.date().to_string(), seconds_of_day(ts.time()) - open, &record[1])
            }
            Layout::DaySeconds => {
                let secs: f64 = record[1]
                    .parse()
                    .map_err(|_| parse_error(line, format!("bad seconds '{}'", &record[1])))?;
                if !secs.is_finite() {
                    return Err(parse_error(line, "seconds must be finite"));
                }
                if record[0].is_empty() {
                    return Err(parse_error(line, "empty day label"));
                }
                (record[0].to_string(), secs, &record[2])
            }
        };
        let price: f64 = price_field
            .parse()
            .map_err(|_| parse_error(line, format!("bad price '{price_field}'")))?;
        if !(price.is_finite() && price > 0.0) {
            return Err(parse_error(line, format!("price must be positive, got {price}")));
        }

        if days.last().is_none_or(|d| d.label != label) {
            if days.iter().any(|d| d.label == label) {
                return Err(parse_error(line, format!("day '{label}' is not contiguous")));
            }
            days.push(RawDay {
                label: label.clone(),
                ticks: Vec::new(),
            });
        }
        if !(0.0..=length).contains(&secs) {
            outside += 1;
            continue;
        }
        let day = days.last_mut().expect("pushed above");
        match day.ticks.last_mut() {
            Some(last) if secs < last.0 => {
                return Err(parse_error(line, format!("timestamps decrease within day '{label}'")));
            }
            Some(last) if secs == last.0 => last.1 = price,
            _ => day.ticks.push((secs, price)),
        }
    }

    let mut meta = PanelMeta {
        source: "ticks".into(),
        ..Default::default()
    };
    if outside > 0 {
        meta.warnings.push(format!("{outside} ticks outside the session were dropped"));
    }
    let kept: Vec<RawDay> = days
        .into_iter()
        .filter(|d| {
            if d.ticks.len() < cal.min_ticks {
                let msg = if d.ticks.is_empty() {
                    format!("day '{}' is empty and was skipped", d.label)
                } else {
                    format!("day '{}' has {} ticks (< {}) and was skipped", d.label, d.ticks.len(), cal.min_ticks)
                };
                log::warn!("{msg}");
                meta.warnings.push(msg);
                false
            } else {
                true
            }
        })
        .collect();
    if kept.is_empty() {
        return Err(Error::domain("no day has enough ticks"));
    }

    let expected = cal
        .expected_ticks
        .unwrap_or_else(|| kept.iter().map(|d| d.ticks.len()).max().unwrap_or(0));
    let mut out = Vec::with_capacity(kept.len());
    for (pos, raw) in kept.into_iter().enumerate() {
        let index = pos + 1;
        let start = pos as f64;
        if (raw.ticks.len() as f64) < (1.0 - cal.gap_tolerance) * expected as f64 {
            meta.flagged_days.push(index);
            meta.warnings.push(format!(
                "day '{}' has {} of {expected} expected ticks",
                raw.label,
                raw.ticks.len()
            ));
        }
        let mut times = Vec::with_capacity(raw.ticks.len() + 2);
        let mut prices = Vec::with_capacity(raw.ticks.len() + 2);
        let first = raw.ticks[0];
        let last = raw.ticks[raw.ticks.len() - 1];
        if first.0 > 0.0 {
            times.push(start);
            prices.push(first.1.ln());
        }
        for &(s, p) in &raw.ticks {
            times.push(if s == length { start + 1.0 } else { start + s / length });
            prices.push(p.ln());
        }
        if last.0 < length {
            times.push(start + 1.0);
            prices.push(last.1.ln());
        }
        meta.day_labels.push(raw.label);
        out.push(DayRecord {
            index,
            times,
            clean: None,
            noisy: prices,
            truth: None,
        });
    }
    let panel = TickPanel { days: out, meta };
    panel.validate()?;
    Ok(panel)
}

pub fn ingest_file(path: &Path, cal: &SessionCalendar) -> Result<TickPanel> {
    let file = std::fs::File::open(path)?;
    ingest_ticks(std::io::BufReader::new(file), cal)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rv::rv_naive;

    fn day_seconds_csv(days: usize, ticks: usize, price: impl Fn(usize, usize) -> f64) -> String {
        let mut s = String::from("day,seconds,price\n");
        let step = 23400.0 / ticks as f64;
        for d in 0..days {
            for k in 0..ticks {
                s.push_str(&format!("d{d},{},{}\n", k as f64 * step, price(d, k)));
            }
        }
        s
    }

    #[test]
    fn two_full_days() {
        let csv = day_seconds_csv(2, 23400, |d, k| 100.0 + d as f64 + k as f64 * 1e-4);
        let panel = ingest_ticks(csv.as_bytes(), &SessionCalendar::default()).unwrap();
        assert_eq!(panel.n_days(), 2);
        assert_eq!(panel.mean_ticks(), 23400.0);
        for (i, d) in panel.days.iter().enumerate() {
            assert_eq!(d.times[0], i as f64);
            assert_eq!(*d.times.last().unwrap(), i as f64 + 1.0);
            for (k, t) in d.times.iter().enumerate() {
                assert!((t - (i as f64 + k as f64 / 23400.0)).abs() < 1e-12);
            }
        }
        assert!(panel.meta.flagged_days.is_empty());
        assert_eq!(panel.meta.day_labels, vec!["d0", "d1"]);
    }

    #[test]
    fn constant_price_has_zero_rv() {
        let csv = day_seconds_csv(1, 500, |_, _| 42.0);
        let panel = ingest_ticks(csv.as_bytes(), &SessionCalendar::default()).unwrap();
        assert_eq!(rv_naive(&panel.days[0].noisy).unwrap(), 0.0);
    }

    #[test]
    fn malformed_row_reports_line() {
        let mut lines: Vec<String> = day_seconds_csv(1, 200, |_, _| 10.0).lines().map(String::from).collect();
        lines[36] = "d0,abc,10".into();
        let csv = lines.join("\n");
        match ingest_ticks(csv.as_bytes(), &SessionCalendar::default()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 37),
            other => panic!("{other:?}"),
        }
        lines[36] = "d0,1,2,3".into();
        match ingest_ticks(lines.join("\n").as_bytes(), &SessionCalendar::default()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 37),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn iso_timestamps_and_duplicates() {
        let mut s = String::from("timestamp,price\n");
        for k in 0..150 {
            let sec = 9 * 3600 + 30 * 60 + k * 10;
            s.push_str(&format!("2018-01-02T{:02}:{:02}:{:02},{}\n", sec / 3600, (sec / 60) % 60, sec % 60, 100 + k));
        }
        s.push_str("2018-01-02T09:54:50,7\n");
        let panel = ingest_ticks(s.as_bytes(), &SessionCalendar::default()).unwrap();
        let d = &panel.days[0];
        // 150 distinct ticks with open on the boundary, plus a carried close
        assert_eq!(d.n_ticks(), 151);
        assert_eq!(d.noisy[149], 7f64.ln());
        assert_eq!(d.close_price(), 7f64.ln());
        assert!((d.times[1] - 10.0 / 23400.0).abs() < 1e-15);
    }

    #[test]
    fn short_days_skipped_and_gaps_flagged() {
        let mut csv = day_seconds_csv(1, 1000, |_, _| 10.0);
        csv.push_str(&day_seconds_csv(1, 50, |_, _| 10.0).replace("d0", "short").replacen("day,seconds,price\n", "", 1));
        csv.push_str(&day_seconds_csv(1, 900, |_, _| 10.0).replace("d0", "gappy").replacen("day,seconds,price\n", "", 1));
        let panel = ingest_ticks(csv.as_bytes(), &SessionCalendar::default()).unwrap();
        assert_eq!(panel.n_days(), 2);
        assert_eq!(panel.meta.flagged_days, vec![2]);
        assert!(panel.meta.warnings.iter().any(|w| w.contains("short")));
    }

    #[test]
    fn rejects_bad_input() {
        let cal = SessionCalendar::default();
        assert!(matches!(ingest_ticks("a,b\n1,2\n".as_bytes(), &cal), Err(Error::Parse { line: 1, .. })));
        assert!(ingest_ticks("day,seconds,price\nd,1,-3\n".as_bytes(), &cal).is_err());
        assert!(ingest_ticks("day,seconds,price\nd,5,3\nd,4,3\n".as_bytes(), &cal).is_err());
        assert!(ingest_ticks("day,seconds,price\n".as_bytes(), &cal).is_err());
    }
}
