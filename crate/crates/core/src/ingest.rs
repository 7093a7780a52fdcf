//! Rating file loaders.
//!
//! User and item ids are remapped to contiguous indices in order of first
//! appearance; [`IdMaps`] keeps the originals for reporting.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::ratings::{Entry, RatingsMatrix};

pub const ML100K_ENTRIES: usize = 100_000;
pub const ML1M_ENTRIES: usize = 1_000_209;
pub const MOVIELENS_RANGE: (f64, f64) = (1.0, 5.0);

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IdMaps {
    pub user_ids: Vec<String>,
    pub item_ids: Vec<String>,
    user_index: HashMap<String, usize>,
    item_index: HashMap<String, usize>,
}

impl IdMaps {
    pub fn user_index(&self, id: &str) -> Option<usize> {
        self.user_index.get(id).copied()
    }

    pub fn item_index(&self, id: &str) -> Option<usize> {
        self.item_index.get(id).copied()
    }

    fn intern(ids: &mut Vec<String>, index: &mut HashMap<String, usize>, id: &str) -> usize {
        if let Some(&i) = index.get(id) {
            return i;
        }
        let i = ids.len();
        ids.push(id.to_owned());
        index.insert(id.to_owned(), i);
        i
    }

    /// Maps for rows/columns that already have contiguous indices.
    pub fn identity(n_rows: usize, n_cols: usize) -> Self {
        let mut maps = IdMaps::default();
        for i in 0..n_rows {
            Self::intern(&mut maps.user_ids, &mut maps.user_index, &i.to_string());
        }
        for j in 0..n_cols {
            Self::intern(&mut maps.item_ids, &mut maps.item_index, &j.to_string());
        }
        maps
    }

    /// Maps restricted to a subset of rows and columns, in the order given.
    pub fn select(&self, rows: &[usize], cols: &[usize]) -> Self {
        let mut maps = IdMaps::default();
        for &i in rows {
            Self::intern(&mut maps.user_ids, &mut maps.user_index, &self.user_ids[i]);
        }
        for &j in cols {
            Self::intern(&mut maps.item_ids, &mut maps.item_index, &self.item_ids[j]);
        }
        maps
    }
}

#[derive(Default)]
struct Assembler {
    ids: IdMaps,
    entries: Vec<Entry>,
    seen: HashMap<(usize, usize), usize>,
}

impl Assembler {
    fn push(&mut self, line: usize, user: &str, item: &str, rating: f64) -> Result<()> {
        let row = IdMaps::intern(&mut self.ids.user_ids, &mut self.ids.user_index, user);
        let col = IdMaps::intern(&mut self.ids.item_ids, &mut self.ids.item_index, item);
        if self.seen.insert((row, col), line).is_some() {
            return Err(Error::DuplicateLine {
                line,
                user: user.to_owned(),
                item: item.to_owned(),
            });
        }
        self.entries.push(Entry::new(row, col, rating));
        Ok(())
    }

    fn finish(self, range: Option<(f64, f64)>) -> Result<(RatingsMatrix, IdMaps)> {
        let mut m = RatingsMatrix::build(
            self.ids.user_ids.len(),
            self.ids.item_ids.len(),
            self.entries,
        )?;
        if let Some((lo, hi)) = range {
            m = m.with_rating_range(lo, hi)?;
        }
        Ok((m, self.ids))
    }
}

fn parse_rating(line: usize, field: &str, range: Option<(f64, f64)>) -> Result<f64> {
    let value: f64 = field.trim().parse().map_err(|_| Error::Parse {
        line,
        reason: format!("rating `{field}` is not a number"),
    })?;
    if !value.is_finite() {
        return Err(Error::Parse {
            line,
            reason: format!("rating `{field}` is not finite"),
        });
    }
    if let Some((lo, hi)) = range {
        if value < lo || value > hi {
            return Err(Error::Parse {
                line,
                reason: format!("rating {value} outside [{lo}, {hi}]"),
            });
        }
    }
    Ok(value)
}

fn parse_delimited<R: BufRead>(reader: R, sep: &str) -> Result<(RatingsMatrix, IdMaps)> {
    let mut asm = Assembler::default();
    for (n, line) in reader.lines().enumerate() {
        let line_no = n + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(sep).collect();
        if fields.len() != 4 {
            return Err(Error::Parse {
                line: line_no,
                reason: format!("expected 4 `{}`-separated fields, found {}", sep.escape_default(), fields.len()),
            });
        }
        let rating = parse_rating(line_no, fields[2], Some(MOVIELENS_RANGE))?;
        asm.push(line_no, fields[0].trim(), fields[1].trim(), rating)?;
    }
    asm.finish(Some(MOVIELENS_RANGE))
}

fn warn_on_count(m: &RatingsMatrix, expected: usize, name: &str) {
    if m.nnz() != expected {
        log::warn!("{name}: loaded {} ratings, the full dataset has {expected}", m.nnz());
    }
}

/// `user<TAB>item<TAB>rating<TAB>timestamp` lines (the `u.data` layout).
pub fn parse_movielens_100k<R: BufRead>(reader: R) -> Result<(RatingsMatrix, IdMaps)> {
    parse_delimited(reader, "\t")
}

pub fn load_movielens_100k(path: impl AsRef<Path>) -> Result<(RatingsMatrix, IdMaps)> {
    let out = parse_movielens_100k(BufReader::new(File::open(path)?))?;
    warn_on_count(&out.0, ML100K_ENTRIES, "MovieLens 100k");
    Ok(out)
}

/// `UserID::MovieID::Rating::Timestamp` lines (the `ratings.dat` layout).
pub fn parse_movielens_1m<R: BufRead>(reader: R) -> Result<(RatingsMatrix, IdMaps)> {
    parse_delimited(reader, "::")
}

pub fn load_movielens_1m(path: impl AsRef<Path>) -> Result<(RatingsMatrix, IdMaps)> {
    let out = parse_movielens_1m(BufReader::new(File::open(path)?))?;
    warn_on_count(&out.0, ML1M_ENTRIES, "MovieLens 1M");
    Ok(out)
}

/// Comma-separated `user,item,rating` records with arbitrary string ids.
pub fn parse_csv<R: Read>(reader: R, has_header: bool) -> Result<(RatingsMatrix, IdMaps)> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let mut asm = Assembler::default();
    for record in rdr.records() {
        let record = record.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            reason: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        if record.len() != 3 {
            return Err(Error::Parse {
                line,
                reason: format!("expected 3 fields (user,item,rating), found {}", record.len()),
            });
        }
        let rating = parse_rating(line, &record[2], None)?;
        asm.push(line, &record[0], &record[1], rating)?;
    }
    asm.finish(None)
}

pub fn load_csv(path: impl AsRef<Path>, has_header: bool) -> Result<(RatingsMatrix, IdMaps)> {
    parse_csv(BufReader::new(File::open(path)?), has_header)
}

/// Writes `user,item,rating` with a header row, using original ids.
pub fn export_csv<W: Write>(m: &RatingsMatrix, ids: &IdMaps, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let to_io = |e: csv::Error| Error::Io(e.into());
    w.write_record(["user", "item", "rating"]).map_err(to_io)?;
    for e in m.entries() {
        w.write_record([
            ids.user_ids[e.row].as_str(),
            ids.item_ids[e.col].as_str(),
            &e.value.to_string(),
        ])
        .map_err(to_io)?;
    }
    w.flush()?;
    Ok(())
}
