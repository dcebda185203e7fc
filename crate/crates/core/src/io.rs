//! Reading and writing rainfall records, posterior draws and ensembles.
//!
//! Every table written here starts with a `# inputs=<sha256>` line naming the
//! manifest hash of the inputs that produced it.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use chrono::{Duration, NaiveDateTime};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::calendar::HourlyTimeline;
use crate::error::{Error, Result};
use crate::generator::EnsembleMember;
use crate::inference::{Chain, ChainSet};
use crate::model::{ModelStructure, RainfallSeries, GRID_MM};

/// Values within this distance of a grid point are snapped onto it.
pub const SNAP_TOLERANCE_MM: f64 = 1e-6;

/// At most this many problems are itemized in a rejection report.
const MAX_LISTED: usize = 100;

pub const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M:%S";

const ACCEPTED_FORMATS: [&str; 4] = [
    "%Y-%m-%dT%H:%M:%S",
    "%Y-%m-%d %H:%M:%S",
    "%Y-%m-%dT%H:%M",
    "%Y-%m-%d %H:%M",
];

/// What to do with hours absent from the input file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MissingHours {
    /// Reject the file, listing every gap.
    #[default]
    Reject,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    let s = s.trim().trim_end_matches('Z');
    ACCEPTED_FORMATS
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
}

/// Exact decimal text of a grid value, e.g. `3` ticks -> `"0.6"`.
pub fn format_mm(ticks: u32) -> String {
    format!("{}.{}", ticks / 5, (ticks % 5) * 2)
}

/// Grid ticks of `mm`, or a description of why it is not acceptable.
pub fn snap_to_grid(mm: f64) -> std::result::Result<u32, String> {
    if !mm.is_finite() {
        return Err(format!("non-finite value {mm}"));
    }
    if mm < 0.0 {
        return Err(format!("negative value {mm}"));
    }
    let k = (mm / GRID_MM).round();
    if (mm - k * GRID_MM).abs() > SNAP_TOLERANCE_MM || k > u32::MAX as f64 {
        return Err(format!("value {mm} is not on the {GRID_MM} mm grid"));
    }
    Ok(k as u32)
}

struct Row {
    line: u64,
    at: NaiveDateTime,
    ticks: Option<u32>,
}

fn rejection(mut problems: Vec<String>) -> Error {
    if problems.len() > MAX_LISTED {
        let extra = problems.len() - MAX_LISTED;
        problems.truncate(MAX_LISTED);
        problems.push(format!("... and {extra} more"));
    }
    Error::Ingest(problems)
}

/// Reads a two-column (timestamp, mm) table into a validated hourly series.
///
/// A header row is allowed. Gaps, duplicates, out-of-order timestamps,
/// unparsable fields, negative values and values off the 0.2 mm grid are all
/// collected and reported together.
pub fn ingest_reader<R: Read>(reader: R, missing: MissingHours) -> Result<RainfallSeries> {
    let MissingHours::Reject = missing;
    let mut csv = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(reader);
    let mut problems = Vec::new();
    let mut rows: Vec<Row> = Vec::new();
    for (i, record) in csv.records().enumerate() {
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                problems.push(format!("unreadable row: {e}"));
                continue;
            }
        };
        let line = record.position().map_or(i as u64 + 1, |p| p.line());
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        if record.len() != 2 {
            problems.push(format!(
                "line {line}: expected 2 fields, found {}",
                record.len()
            ));
            continue;
        }
        let at = parse_timestamp(&record[0]);
        let mm = record[1].parse::<f64>();
        if i == 0 && at.is_none() && mm.is_err() {
            continue; // header
        }
        let ticks = match mm {
            Ok(v) => snap_to_grid(v)
                .map_err(|e| problems.push(format!("line {line}: {e}")))
                .ok(),
            Err(_) => {
                problems.push(format!(
                    "line {line}: cannot parse rainfall '{}'",
                    &record[1]
                ));
                None
            }
        };
        match at {
            Some(at) => rows.push(Row { line, at, ticks }),
            None => problems.push(format!(
                "line {line}: cannot parse timestamp '{}'",
                &record[0]
            )),
        }
    }
    if rows.is_empty() && problems.is_empty() {
        return Err(Error::Ingest(vec![
            "no observations: the file contains no data rows".into(),
        ]));
    }
    let hour = Duration::hours(1);
    for pair in rows.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        let step = b.at - a.at;
        if step == hour {
            continue;
        }
        problems.push(if step.is_zero() {
            format!(
                "duplicate timestamp {} (lines {} and {})",
                b.at, a.line, b.line
            )
        } else if step < Duration::zero() {
            format!(
                "line {}: timestamp {} precedes {} on line {}",
                b.line, b.at, a.at, a.line
            )
        } else if step.num_seconds() % 3600 == 0 {
            let n = step.num_hours() - 1;
            format!(
                "gap: {n} missing hour(s) between {} (line {}) and {} (line {})",
                a.at, a.line, b.at, b.line
            )
        } else {
            format!(
                "line {}: {} is not a whole number of hours after {}",
                b.line, b.at, a.at
            )
        });
    }
    if !problems.is_empty() {
        return Err(rejection(problems));
    }
    let ticks = rows
        .iter()
        .map(|r| r.ticks.expect("checked above"))
        .collect();
    RainfallSeries::from_ticks(HourlyTimeline::new(rows[0].at, rows.len()), ticks)
}

pub fn ingest(path: &Path, missing: MissingHours) -> Result<RainfallSeries> {
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    ingest_reader(std::fs::File::open(path)?, missing)
}

/// Writes the series in the ingest format; reading it back gives an identical series.
pub fn write_series<W: Write>(series: &RainfallSeries, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["timestamp", "rain_mm"])?;
    for (ts, &k) in series.timeline().iter().zip(series.ticks()) {
        w.write_record([ts.format(TIMESTAMP_FORMAT).to_string(), format_mm(k)])?;
    }
    w.flush()?;
    Ok(())
}

fn write_hash_line<W: Write>(out: &mut W, inputs: &str) -> Result<()> {
    writeln!(out, "# inputs={inputs}")?;
    Ok(())
}

/// Reads the leading `# inputs=` line and returns the hash and the remaining reader.
fn read_hash_line<R: Read>(reader: R, what: &str) -> Result<(String, BufReader<R>)> {
    let mut buf = BufReader::new(reader);
    let mut first = String::new();
    buf.read_line(&mut first)?;
    match first.trim_end().strip_prefix("# inputs=") {
        Some(h) => Ok((h.to_string(), buf)),
        None => Err(Error::ArtifactMismatch(format!(
            "{what} does not start with an inputs hash line"
        ))),
    }
}

/// Long-format posterior table: one row per retained draw.
pub fn write_posterior<W: Write>(set: &ChainSet, inputs: &str, mut out: W) -> Result<()> {
    write_hash_line(&mut out, inputs)?;
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["chain".to_string(), "iteration".into(), "loglik".into()];
    header.extend(set.names.iter().cloned());
    w.write_record(&header)?;
    for chain in &set.chains {
        for ((it, draw), ll) in chain.iterations.iter().zip(&chain.draws).zip(&chain.loglik) {
            let mut row = vec![chain.index.to_string(), it.to_string(), ll.to_string()];
            row.extend(draw.iter().map(|v| v.to_string()));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn parse_field<T: std::str::FromStr>(s: &str, line: u64, what: &str) -> Result<T> {
    s.parse().map_err(|_| {
        Error::InvalidArgument(format!("posterior line {line}: cannot parse {what} '{s}'"))
    })
}

/// Reads a posterior table written by [`write_posterior`].
///
/// Returns the inputs hash and one chain per index in `0..n_chains`;
/// acceptance rates are left empty.
pub fn read_posterior<R: Read>(
    reader: R,
    structure: &ModelStructure,
    n_chains: usize,
) -> Result<(String, Vec<Chain>)> {
    let (hash, rest) = read_hash_line(reader, "posterior table")?;
    let mut csv = csv::Reader::from_reader(rest);
    let names = crate::model::parameter_names(structure);
    let header: Vec<String> = csv.headers()?.iter().map(str::to_string).collect();
    if header.len() != names.len() + 3 || header[3..] != names[..] {
        return Err(Error::ArtifactMismatch(
            "posterior columns do not match the model structure".into(),
        ));
    }
    let mut chains: Vec<Chain> = (0..n_chains)
        .map(|index| Chain {
            index,
            iterations: Vec::new(),
            draws: Vec::new(),
            loglik: Vec::new(),
            acceptance: Vec::new(),
        })
        .collect();
    for record in csv.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line()) + 1;
        let c: usize = parse_field(&record[0], line, "chain")?;
        let chain = chains.get_mut(c).ok_or_else(|| {
            Error::ArtifactMismatch(format!("posterior line {line}: chain {c} out of range"))
        })?;
        chain
            .iterations
            .push(parse_field(&record[1], line, "iteration")?);
        chain.loglik.push(parse_field(&record[2], line, "loglik")?);
        let draw = (3..record.len())
            .map(|j| parse_field(&record[j], line, &header[j]))
            .collect::<Result<Vec<f64>>>()?;
        chain.draws.push(draw);
    }
    Ok((hash, chains))
}

/// Wide ensemble table: a timestamp column and one column per member.
pub fn write_ensemble<W: Write>(
    members: &[EnsembleMember],
    inputs: &str,
    mut out: W,
) -> Result<()> {
    let Some(first) = members.first() else {
        return Err(Error::InvalidArgument("empty ensemble".into()));
    };
    write_hash_line(&mut out, inputs)?;
    let timeline = first.simulated.series.timeline();
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["timestamp".to_string()];
    header.extend((0..members.len()).map(|i| format!("member_{i}")));
    w.write_record(&header)?;
    let mut row = Vec::with_capacity(members.len() + 1);
    for (t, ts) in timeline.iter().enumerate() {
        row.clear();
        row.push(ts.format(TIMESTAMP_FORMAT).to_string());
        row.extend(
            members
                .iter()
                .map(|m| format_mm(m.simulated.series.ticks()[t])),
        );
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads an ensemble table written by [`write_ensemble`].
pub fn read_ensemble<R: Read>(reader: R) -> Result<(String, Vec<RainfallSeries>)> {
    let (hash, rest) = read_hash_line(reader, "ensemble table")?;
    let mut csv = csv::Reader::from_reader(rest);
    let n = csv.headers()?.len().saturating_sub(1);
    if n == 0 {
        return Err(Error::ArtifactMismatch(
            "ensemble table has no members".into(),
        ));
    }
    let mut timestamps = Vec::new();
    let mut ticks: Vec<Vec<u32>> = vec![Vec::new(); n];
    for record in csv.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line()) + 1;
        let bad = |m: String| Error::InvalidArgument(format!("ensemble line {line}: {m}"));
        timestamps.push(
            parse_timestamp(&record[0])
                .ok_or_else(|| bad(format!("bad timestamp '{}'", &record[0])))?,
        );
        for (m, col) in ticks.iter_mut().enumerate() {
            let v: f64 = record[m + 1]
                .parse()
                .map_err(|_| bad(format!("bad value '{}'", &record[m + 1])))?;
            col.push(snap_to_grid(v).map_err(bad)?);
        }
    }
    let timeline = HourlyTimeline::from_timestamps(&timestamps)?;
    let series = ticks
        .into_iter()
        .map(|t| RainfallSeries::from_ticks(timeline, t))
        .collect::<Result<Vec<_>>>()?;
    Ok((hash, series))
}

/// Writes `body` to `path` after an inputs hash line.
pub fn write_tagged<F>(path: &Path, inputs: &str, body: F) -> Result<()>
where
    F: FnOnce(&mut Vec<u8>) -> Result<()>,
{
    let mut buf = Vec::new();
    write_hash_line(&mut buf, inputs)?;
    body(&mut buf)?;
    std::fs::write(path, buf)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ingest_str(s: &str) -> Result<RainfallSeries> {
        ingest_reader(s.as_bytes(), MissingHours::Reject)
    }

    fn problems(s: &str) -> Vec<String> {
        match ingest_str(s) {
            Err(Error::Ingest(p)) => p,
            other => panic!("expected rejection, got {other:?}"),
        }
    }

    #[test]
    fn well_formed_file_with_header() {
        let s = ingest_str("timestamp,mm\n2001-01-01T00:00:00,0\n2001-01-01T01:00:00,0.2\n2001-01-01 02:00,1.4000000004\n")
            .unwrap();
        assert_eq!(s.ticks(), &[0, 1, 7]);
        assert_eq!(s.timeline().start().to_string(), "2001-01-01 00:00:00");
    }

    #[test]
    fn empty_file_is_a_structured_error() {
        for text in ["", "timestamp,mm\n", "\n\n"] {
            let p = problems(text);
            assert_eq!(p.len(), 1);
            assert!(p[0].starts_with("no observations"));
        }
    }

    #[test]
    fn duplicate_timestamp_is_named() {
        let p = problems("2001-01-01T00:00:00,0\n2001-01-01T01:00:00,0\n2001-01-01T01:00:00,0.2\n2001-01-01T02:00:00,0\n");
        assert_eq!(
            p,
            vec!["duplicate timestamp 2001-01-01 01:00:00 (lines 2 and 3)"]
        );
    }

    #[test]
    fn every_problem_is_itemized() {
        let p = problems(
            "2001-01-01T00:00:00,0\n2001-01-01T01:00:00,-0.2\n2001-01-01T04:00:00,0.3\nnot a date,0\n2001-01-01T05:00:00,x\n",
        );
        assert_eq!(p.len(), 5, "{p:?}");
        assert!(p[0].contains("line 2: negative value"));
        assert!(p[1].contains("line 3: value 0.3 is not on the 0.2 mm grid"));
        assert!(p[2].contains("line 4: cannot parse timestamp"));
        assert!(p[3].contains("line 5: cannot parse rainfall"));
        assert!(p[4].starts_with("gap: 2 missing hour(s)"));
    }

    #[test]
    fn snapping_tolerance() {
        assert_eq!(snap_to_grid(0.6 + 9e-7), Ok(3));
        assert!(snap_to_grid(0.6 + 2e-6).is_err());
        assert!(snap_to_grid(f64::NAN).is_err());
    }

    #[test]
    fn series_round_trip_is_exact() {
        let start = parse_timestamp("1999-12-31T22:00:00").unwrap();
        let ticks: Vec<u32> = (0..500).map(|i| (i * 7919 % 97) as u32 % 41).collect();
        let series = RainfallSeries::from_ticks(HourlyTimeline::new(start, 500), ticks).unwrap();
        let mut buf = Vec::new();
        write_series(&series, &mut buf).unwrap();
        let back = ingest_str(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(back, series);
        let mut again = Vec::new();
        write_series(&back, &mut again).unwrap();
        assert_eq!(buf, again);
    }

    #[test]
    fn decimal_formatting() {
        assert_eq!(format_mm(0), "0.0");
        assert_eq!(format_mm(1), "0.2");
        assert_eq!(format_mm(26), "5.2");
        assert_eq!(format_mm(26).parse::<f64>().unwrap(), 26.0 / 5.0);
    }

    #[test]
    fn known_digest() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
