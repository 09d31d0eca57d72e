//! CSV and JSON artifacts.
//!
//! Floats are written in Rust's shortest round-trip form, so reading a file
//! back reproduces every value bit for bit.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::estimation::FitResult;
use crate::forecast::EvalReport;
use crate::rv::{RvConfig, RvEntry, RvFlag, RvSeries};
use crate::simulate::{DayRecord, PanelMeta, TickPanel, MAX_HORIZON};

fn parse_err(e: &csv::Error) -> Error {
    Error::Parse {
        line: e.position().map_or(0, |p| p.line() as usize),
        msg: e.to_string(),
    }
}

fn expect_header(rdr: &mut csv::Reader<impl Read>, expected: &[&str]) -> Result<()> {
    let got = rdr.headers().map_err(|e| parse_err(&e))?;
    if got.iter().ne(expected.iter().copied()) {
        return Err(Error::Parse {
            line: 1,
            msg: format!("expected header '{}'", expected.join(",")),
        });
    }
    Ok(())
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, k: usize, name: &str) -> Result<T> {
    rec[k].parse().map_err(|_| Error::Parse {
        line: rec.position().map_or(0, |p| p.line() as usize),
        msg: format!("bad {name} '{}'", &rec[k]),
    })
}

const PANEL_HEADER: [&str; 4] = ["day_index", "tick_time", "clean_logprice", "noisy_logprice"];

pub fn write_panel<W: Write>(panel: &TickPanel, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(PANEL_HEADER)?;
    for day in &panel.days {
        for k in 0..day.n_ticks() {
            let clean = day.clean.as_ref().map_or(String::new(), |c| c[k].to_string());
            w.write_record([
                day.index.to_string(),
                day.times[k].to_string(),
                clean,
                day.noisy[k].to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a panel written by [`write_panel`]. Ground truth is not stored in
/// this file and comes back as `None`.
pub fn read_panel<R: Read>(input: R) -> Result<TickPanel> {
    let mut rdr = csv::ReaderBuilder::new().from_reader(input);
    expect_header(&mut rdr, &PANEL_HEADER)?;
    let mut days: Vec<DayRecord> = Vec::new();
    let mut rec = csv::StringRecord::new();
    while rdr.read_record(&mut rec).map_err(|e| parse_err(&e))? {
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let index: usize = field(&rec, 0, "day_index")?;
        let t: f64 = field(&rec, 1, "tick_time")?;
        let clean: Option<f64> = if rec[2].is_empty() { None } else { Some(field(&rec, 2, "clean_logprice")?) };
        let noisy: f64 = field(&rec, 3, "noisy_logprice")?;
        if days.last().is_none_or(|d| d.index != index) {
            if index == 0 || days.last().is_some_and(|d| d.index >= index) {
                return Err(Error::Parse { line, msg: format!("day_index {index} out of order") });
            }
            days.push(DayRecord {
                index,
                times: Vec::new(),
                clean: clean.map(|_| Vec::new()),
                noisy: Vec::new(),
                truth: None,
            });
        }
        let day = days.last_mut().expect("pushed above");
        match (&mut day.clean, clean) {
            (Some(c), Some(v)) => c.push(v),
            (None, None) => {}
            _ => return Err(Error::Parse { line, msg: "clean_logprice must be all present or all empty within a day".into() }),
        }
        day.times.push(t);
        day.noisy.push(noisy);
    }
    let panel = TickPanel {
        days,
        meta: PanelMeta {
            source: "panel-csv".into(),
            ..Default::default()
        },
    };
    panel.validate()?;
    Ok(panel)
}

pub fn write_truth<W: Write>(panel: &TickPanel, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["day_index", "j", "window_index", "true_iv"])?;
    for day in &panel.days {
        let Some(truth) = &day.truth else { continue };
        for j in 1..=MAX_HORIZON {
            for wdx in 0..j as usize {
                if let Some(iv) = truth.window_iv(j, wdx) {
                    w.write_record([day.index.to_string(), j.to_string(), (wdx + 1).to_string(), iv.to_string()])?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

const RV_HEADER: [&str; 5] = ["day_index", "j", "window_index", "rv", "flag"];

pub fn write_rv<W: Write>(rv: &RvSeries, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RV_HEADER)?;
    for e in &rv.entries {
        w.write_record([
            e.day.to_string(),
            e.j.to_string(),
            e.window.to_string(),
            e.rv.map_or(String::new(), |v| v.to_string()),
            e.flag.as_str().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads an RV file; the estimator settings are not stored and are taken
/// from `config`.
pub fn read_rv<R: Read>(input: R, config: RvConfig) -> Result<RvSeries> {
    let mut rdr = csv::ReaderBuilder::new().from_reader(input);
    expect_header(&mut rdr, &RV_HEADER)?;
    let mut entries = Vec::new();
    let mut rec = csv::StringRecord::new();
    while rdr.read_record(&mut rec).map_err(|e| parse_err(&e))? {
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let bad = |msg: &str| Error::Parse { line, msg: msg.to_string() };
        let day: usize = field(&rec, 0, "day_index")?;
        let j: u32 = field(&rec, 1, "j")?;
        let window: usize = field(&rec, 2, "window_index")?;
        if day == 0 || !(1..=MAX_HORIZON).contains(&j) || window == 0 || window > j as usize {
            return Err(bad("day, horizon or window out of range"));
        }
        let rv: Option<f64> = if rec[3].is_empty() { None } else { Some(field(&rec, 3, "rv")?) };
        if rv.is_some_and(|v| !(v.is_finite() && v > 0.0)) {
            return Err(bad("rv must be positive and finite"));
        }
        let flag: RvFlag = rec[4].parse().map_err(|_| bad("unknown flag"))?;
        if rv.is_none() != (flag == RvFlag::Short) {
            return Err(bad("empty rv must carry the 'short' flag"));
        }
        entries.push(RvEntry { day, j, window, rv, flag });
    }
    Ok(RvSeries { entries, config })
}

pub fn write_eval<W: Write>(reports: &[EvalReport], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["horizon", "day_index", "window_index", "forecast", "rv"])?;
    for r in reports {
        for p in &r.pairs {
            w.write_record([
                r.horizon_j.to_string(),
                p.day.to_string(),
                p.window.to_string(),
                p.forecast.to_string(),
                p.rv.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// One row per horizon with the four error metrics.
pub fn write_summary<W: Write>(reports: &[EvalReport], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["horizon", "n_windows", "mae", "mse", "amape", "ll"])?;
    for r in reports {
        let m = &r.metrics;
        w.write_record([
            r.horizon_j.to_string(),
            m.n.to_string(),
            m.mae.to_string(),
            m.mse.to_string(),
            m.amape.to_string(),
            m.ll.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_fit<R: Read>(mut input: R) -> Result<FitResult> {
    let mut s = String::new();
    input.read_to_string(&mut s)?;
    FitResult::from_json(&s)
}

/// Renders an artifact into memory.
pub(crate) fn render(f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}
