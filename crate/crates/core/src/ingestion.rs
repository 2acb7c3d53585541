//! Readers and writers for the on-disk formats.
//!
//! All CSV schemas are comma separated, UTF-8, with a mandatory header line:
//!
//! | table        | header                          |
//! |--------------|---------------------------------|
//! | trials       | `user,item,trial,rating`        |
//! | predictions  | `system,user,item,prediction`   |
//! | leaderboard  | `rank,name,score`               |
//! | ground truth | `user,item,mean,variance`       |
//! | scores       | `system,mean,variance`          |
//!
//! Fields are never quoted; a field containing a comma or a double quote is a
//! parse error. CRLF and LF line endings are both accepted. Errors carry the
//! 1-based line number.
//!
//! The Netflix Prize training files are blocks of a `<movie_id>:` header line
//! followed by `<user_id>,<rating>,<YYYY-MM-DD>` lines; [`NetflixRecords`]
//! streams them one record at a time.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::leaderboard::{rank_order_warnings, LeaderboardEntry};
use crate::stats::Gaussian;
use crate::uncertainty::{Scale, TrialRow, TrialTable, UncertainRating};

pub const TRIALS_HEADER: &str = "user,item,trial,rating";
pub const PREDICTIONS_HEADER: &str = "system,user,item,prediction";
pub const LEADERBOARD_HEADER: &str = "rank,name,score";
pub const GROUND_TRUTH_HEADER: &str = "user,item,mean,variance";
pub const SCORES_HEADER: &str = "system,mean,variance";

struct Line<'a> {
    number: usize,
    offset: u64,
    text: &'a str,
    terminated: bool,
}

/// Line reader that tracks 1-based line numbers and byte offsets.
struct Lines<R> {
    inner: R,
    buf: String,
    number: usize,
    offset: u64,
}

impl<R: BufRead> Lines<R> {
    fn new(inner: R) -> Self {
        Lines {
            inner,
            buf: String::new(),
            number: 0,
            offset: 0,
        }
    }

    fn next_line(&mut self) -> Result<Option<Line<'_>>> {
        self.buf.clear();
        let read = self.inner.read_line(&mut self.buf).map_err(|e| {
            if e.kind() == std::io::ErrorKind::InvalidData {
                Error::parse(self.number + 1, "input is not valid UTF-8")
            } else {
                Error::Io(e)
            }
        })?;
        if read == 0 {
            return Ok(None);
        }
        self.number += 1;
        let offset = self.offset;
        self.offset += read as u64;
        let terminated = self.buf.ends_with('\n');
        let text = self.buf.trim_end_matches('\n').trim_end_matches('\r');
        Ok(Some(Line {
            number: self.number,
            offset,
            text,
            terminated,
        }))
    }
}

fn split_fields<'a>(line: &Line<'a>, expected: usize) -> Result<Vec<&'a str>> {
    if line.text.contains('"') {
        return Err(Error::parse(line.number, "quoted fields are not supported"));
    }
    let fields: Vec<&str> = line.text.split(',').map(str::trim).collect();
    if fields.len() != expected {
        return Err(Error::parse(
            line.number,
            format!("expected {expected} fields, found {}", fields.len()),
        ));
    }
    Ok(fields)
}

fn read_header<R: BufRead>(lines: &mut Lines<R>, header: &str) -> Result<()> {
    match lines.next_line()? {
        None => Err(Error::parse(1, format!("missing header {header:?}"))),
        Some(line) if line.text.trim() == header => Ok(()),
        Some(line) => Err(Error::parse(
            line.number,
            format!("expected header {header:?}, found {:?}", line.text),
        )),
    }
}

/// Calls `row` for every non-blank data line after the header.
fn for_each_row<R, F>(source: R, header: &str, columns: usize, mut row: F) -> Result<()>
where
    R: BufRead,
    F: FnMut(usize, &[&str]) -> Result<()>,
{
    let mut lines = Lines::new(source);
    read_header(&mut lines, header)?;
    while let Some(line) = lines.next_line()? {
        if line.text.trim().is_empty() {
            continue;
        }
        let fields = split_fields(&line, columns)?;
        row(line.number, &fields)?;
    }
    Ok(())
}

fn non_empty<'a>(line: usize, name: &str, field: &'a str) -> Result<&'a str> {
    if field.is_empty() {
        Err(Error::parse(line, format!("{name} is empty")))
    } else {
        Ok(field)
    }
}

fn real(line: usize, name: &str, field: &str) -> Result<f64> {
    let v: f64 = field
        .parse()
        .map_err(|_| Error::parse(line, format!("{name} {field:?} is not a number")))?;
    if !v.is_finite() {
        return Err(Error::parse(line, format!("{name} {field:?} is not finite")));
    }
    Ok(v)
}

fn integer<T: std::str::FromStr>(line: usize, name: &str, field: &str) -> Result<T> {
    field
        .parse()
        .map_err(|_| Error::parse(line, format!("{name} {field:?} is not a valid integer")))
}

/// Reads a repeated-trial table. With `scale`, ratings outside it are errors.
pub fn parse_trials<R: BufRead>(source: R, scale: Option<Scale>) -> Result<TrialTable> {
    let mut rows = Vec::new();
    let mut seen: HashSet<(String, String, u32)> = HashSet::new();
    for_each_row(source, TRIALS_HEADER, 4, |line, f| {
        let user = non_empty(line, "user", f[0])?;
        let item = non_empty(line, "item", f[1])?;
        let trial: u32 = integer(line, "trial", f[2])?;
        if trial == 0 {
            return Err(Error::parse(line, "trial numbers start at 1"));
        }
        let rating = real(line, "rating", f[3])?;
        if let Some(s) = scale {
            if !s.contains(rating) {
                return Err(Error::parse(
                    line,
                    format!("rating {rating} outside scale [{}, {}]", s.min(), s.max()),
                ));
            }
        }
        if !seen.insert((user.to_owned(), item.to_owned(), trial)) {
            return Err(Error::Duplicate {
                line,
                key: format!("{user},{item},{trial}"),
            });
        }
        rows.push(TrialRow {
            user: user.to_owned(),
            item: item.to_owned(),
            trial,
            rating,
        });
        Ok(())
    })?;
    TrialTable::new(rows, scale)
}

pub fn write_trials<W: Write>(mut out: W, table: &TrialTable) -> Result<()> {
    writeln!(out, "{TRIALS_HEADER}")?;
    for r in table.rows() {
        writeln!(out, "{},{},{},{}", r.user, r.item, r.trial, r.rating)?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub system: String,
    pub user: String,
    pub item: String,
    pub prediction: f64,
}

/// Predictions keyed by (system, user, item).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PredictionTable {
    rows: Vec<PredictionRow>,
    index: HashMap<(String, String, String), usize>,
}

impl PredictionTable {
    pub fn new(rows: Vec<PredictionRow>) -> Result<Self> {
        let mut index = HashMap::with_capacity(rows.len());
        for (i, r) in rows.iter().enumerate() {
            if !r.prediction.is_finite() {
                return Err(Error::invalid(format!("row {}: prediction is not finite", i + 1)));
            }
            let key = (r.system.clone(), r.user.clone(), r.item.clone());
            if index.insert(key, i).is_some() {
                return Err(Error::Duplicate {
                    line: i + 1,
                    key: format!("{},{},{}", r.system, r.user, r.item),
                });
            }
        }
        Ok(PredictionTable { rows, index })
    }

    pub fn rows(&self) -> &[PredictionRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn get(&self, system: &str, user: &str, item: &str) -> Option<f64> {
        self.index
            .get(&(system.to_owned(), user.to_owned(), item.to_owned()))
            .map(|&i| self.rows[i].prediction)
    }

    /// System names, sorted.
    pub fn systems(&self) -> Vec<String> {
        self.rows
            .iter()
            .map(|r| r.system.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }
}

pub fn parse_predictions<R: BufRead>(source: R) -> Result<PredictionTable> {
    let mut rows = Vec::new();
    let mut seen: HashSet<(String, String, String)> = HashSet::new();
    for_each_row(source, PREDICTIONS_HEADER, 4, |line, f| {
        let system = non_empty(line, "system", f[0])?;
        let user = non_empty(line, "user", f[1])?;
        let item = non_empty(line, "item", f[2])?;
        let prediction = real(line, "prediction", f[3])?;
        if !seen.insert((system.to_owned(), user.to_owned(), item.to_owned())) {
            return Err(Error::Duplicate {
                line,
                key: format!("{system},{user},{item}"),
            });
        }
        rows.push(PredictionRow {
            system: system.to_owned(),
            user: user.to_owned(),
            item: item.to_owned(),
            prediction,
        });
        Ok(())
    })?;
    PredictionTable::new(rows)
}

pub fn write_predictions<W: Write>(mut out: W, table: &PredictionTable) -> Result<()> {
    writeln!(out, "{PREDICTIONS_HEADER}")?;
    for r in table.rows() {
        writeln!(out, "{},{},{},{}", r.system, r.user, r.item, r.prediction)?;
    }
    Ok(())
}

/// A parsed leaderboard plus any rank-order warnings.
#[derive(Debug, Clone, PartialEq)]
pub struct Leaderboard {
    pub entries: Vec<LeaderboardEntry>,
    pub warnings: Vec<String>,
}

pub fn parse_leaderboard<R: BufRead>(source: R) -> Result<Leaderboard> {
    let mut entries = Vec::new();
    let mut ranks = HashSet::new();
    for_each_row(source, LEADERBOARD_HEADER, 3, |line, f| {
        let rank: u32 = integer(line, "rank", f[0])?;
        if rank == 0 {
            return Err(Error::parse(line, "ranks start at 1"));
        }
        let name = non_empty(line, "name", f[1])?;
        let score = real(line, "score", f[2])?;
        if !ranks.insert(rank) {
            return Err(Error::Duplicate {
                line,
                key: format!("rank {rank}"),
            });
        }
        entries.push(LeaderboardEntry::new(rank, name, score));
        Ok(())
    })?;
    let warnings = rank_order_warnings(&entries);
    Ok(Leaderboard { entries, warnings })
}

pub fn write_leaderboard<W: Write>(mut out: W, entries: &[LeaderboardEntry]) -> Result<()> {
    writeln!(out, "{LEADERBOARD_HEADER}")?;
    for e in entries {
        writeln!(out, "{},{},{}", e.rank, e.name, e.score)?;
    }
    Ok(())
}

/// Reads `user,item,mean,variance` rows as ratings without predictions.
pub fn parse_ground_truth<R: BufRead>(source: R) -> Result<Vec<UncertainRating>> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for_each_row(source, GROUND_TRUTH_HEADER, 4, |line, f| {
        let user = non_empty(line, "user", f[0])?;
        let item = non_empty(line, "item", f[1])?;
        let mean = real(line, "mean", f[2])?;
        let variance = real(line, "variance", f[3])?;
        let density = Gaussian::new(mean, variance).map_err(|e| Error::parse(line, e.to_string()))?;
        if !seen.insert((user.to_owned(), item.to_owned())) {
            return Err(Error::Duplicate {
                line,
                key: format!("{user},{item}"),
            });
        }
        out.push(UncertainRating::new(user, item, density));
        Ok(())
    })?;
    Ok(out)
}

pub fn write_ground_truth<W: Write>(mut out: W, ratings: &[UncertainRating]) -> Result<()> {
    writeln!(out, "{GROUND_TRUTH_HEADER}")?;
    for r in ratings {
        writeln!(
            out,
            "{},{},{},{}",
            r.user,
            r.item,
            r.density.mean(),
            r.density.variance()
        )?;
    }
    Ok(())
}

/// Reads per-system score densities, `system,mean,variance`.
pub fn parse_scores<R: BufRead>(source: R) -> Result<Vec<(String, Gaussian)>> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for_each_row(source, SCORES_HEADER, 3, |line, f| {
        let system = non_empty(line, "system", f[0])?;
        let mean = real(line, "mean", f[1])?;
        let variance = real(line, "variance", f[2])?;
        let g = Gaussian::new(mean, variance).map_err(|e| Error::parse(line, e.to_string()))?;
        if !seen.insert(system.to_owned()) {
            return Err(Error::Duplicate {
                line,
                key: system.to_owned(),
            });
        }
        out.push((system.to_owned(), g));
        Ok(())
    })?;
    Ok(out)
}

/// Calendar date as written in the Netflix files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Date {
    pub year: u16,
    pub month: u8,
    pub day: u8,
}

impl Date {
    pub fn new(year: u16, month: u8, day: u8) -> Option<Self> {
        let leap = (year % 4 == 0 && year % 100 != 0) || year % 400 == 0;
        let days = match month {
            1 | 3 | 5 | 7 | 8 | 10 | 12 => 31,
            4 | 6 | 9 | 11 => 30,
            2 if leap => 29,
            2 => 28,
            _ => return None,
        };
        (day >= 1 && day <= days).then_some(Date { year, month, day })
    }
}

impl std::str::FromStr for Date {
    type Err = ();

    fn from_str(s: &str) -> std::result::Result<Self, ()> {
        let b = s.as_bytes();
        if b.len() != 10 || b[4] != b'-' || b[7] != b'-' {
            return Err(());
        }
        let digits = |r: std::ops::Range<usize>| -> std::result::Result<u16, ()> {
            let part = &s[r];
            if part.bytes().all(|c| c.is_ascii_digit()) {
                part.parse().map_err(|_| ())
            } else {
                Err(())
            }
        };
        let (y, m, d) = (digits(0..4)?, digits(5..7)?, digits(8..10)?);
        Date::new(y, m as u8, d as u8).ok_or(())
    }
}

impl fmt::Display for Date {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}-{:02}", self.year, self.month, self.day)
    }
}

/// One rating from a Netflix Prize training file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetflixRecord {
    pub movie: u32,
    pub user: u32,
    pub rating: u8,
    pub date: Date,
}

/// Streaming parser over the Netflix training layout; holds one line at a time.
pub struct NetflixRecords<R> {
    lines: Lines<R>,
    movie: Option<u32>,
    done: bool,
}

/// Streams the records of a Netflix training file.
pub fn parse_netflix_training<R: BufRead>(source: R) -> NetflixRecords<R> {
    NetflixRecords {
        lines: Lines::new(source),
        movie: None,
        done: false,
    }
}

impl<R: BufRead> NetflixRecords<R> {
    /// Capacity of the internal line buffer; stays bounded by the longest line.
    pub fn line_buffer_capacity(&self) -> usize {
        self.lines.buf.capacity()
    }

    /// The movie whose block is currently being read.
    pub fn current_movie(&self) -> Option<u32> {
        self.movie
    }

    fn advance(&mut self) -> Result<Option<NetflixRecord>> {
        loop {
            let movie = self.movie;
            let Some(line) = self.lines.next_line()? else {
                return Ok(None);
            };
            let text = line.text.trim();
            if text.is_empty() {
                continue;
            }
            let fail = |message: String| -> Error {
                if line.terminated {
                    Error::parse(line.number, message)
                } else {
                    Error::Truncated {
                        offset: line.offset,
                        message: format!("line {}: {message}", line.number),
                    }
                }
            };
            if let Some(id) = text.strip_suffix(':') {
                let id: u32 = id
                    .parse()
                    .ok()
                    .filter(|&m| m > 0)
                    .ok_or_else(|| fail(format!("invalid movie header {text:?}")))?;
                self.movie = Some(id);
                continue;
            }
            let Some(movie) = movie else {
                return Err(Error::parse(line.number, "rating line before any movie header"));
            };
            let fields: Vec<&str> = text.split(',').collect();
            if fields.len() != 3 {
                return Err(fail(format!("expected user,rating,date, found {text:?}")));
            }
            let user: u32 = fields[0]
                .parse()
                .map_err(|_| fail(format!("invalid user id {:?}", fields[0])))?;
            let rating: u8 = fields[1]
                .parse()
                .ok()
                .filter(|r| (1..=5).contains(r))
                .ok_or_else(|| fail(format!("rating {:?} is not in 1..5", fields[1])))?;
            let date: Date = fields[2]
                .parse()
                .map_err(|_| fail(format!("invalid date {:?}", fields[2])))?;
            return Ok(Some(NetflixRecord {
                movie,
                user,
                rating,
                date,
            }));
        }
    }
}

impl<R: BufRead> Iterator for NetflixRecords<R> {
    type Item = Result<NetflixRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        match self.advance() {
            Ok(Some(r)) => Some(Ok(r)),
            Ok(None) => {
                self.done = true;
                None
            }
            Err(e) => {
                self.done = true;
                Some(Err(e))
            }
        }
    }
}

/// Writes records in the training layout, emitting a header whenever the
/// movie changes.
pub fn write_netflix<W: Write, I: IntoIterator<Item = NetflixRecord>>(mut out: W, records: I) -> Result<()> {
    let mut current = None;
    for r in records {
        if current != Some(r.movie) {
            writeln!(out, "{}:", r.movie)?;
            current = Some(r.movie);
        }
        writeln!(out, "{},{},{}", r.user, r.rating, r.date)?;
    }
    Ok(())
}
