use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use consistent_core::ingest::{self, IdMaps, MOVIELENS_RANGE};
use consistent_core::RatingsMatrix;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Dataset {
    Ml100k,
    Ml1m,
    Csv,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Input format. Defaults to csv when --input is given.
    #[arg(long, value_enum)]
    pub dataset: Option<Dataset>,

    /// Rating file. MovieLens files default to $RS_DATA_DIR/ml-100k/u.data
    /// and $RS_DATA_DIR/ml-1m/ratings.dat.
    #[arg(long)]
    pub input: Option<PathBuf>,

    /// Skip the first line of a CSV file.
    #[arg(long)]
    pub has_header: bool,

    /// Valid rating range for CSV input, as MIN:MAX.
    #[arg(long, value_parser = parse_range)]
    pub rating_range: Option<(f64, f64)>,
}

pub struct Loaded {
    pub matrix: RatingsMatrix,
    pub ids: IdMaps,
    pub fingerprint: Fingerprint,
}

/// Identifies the exact ratings a run saw.
#[derive(Debug, Clone, Serialize)]
pub struct Fingerprint {
    pub source: Dataset,
    pub path: String,
    pub n_users: usize,
    pub n_items: usize,
    pub entries: usize,
    /// SHA-256 over (row, col, value bits) of every entry, little endian.
    pub checksum: String,
}

pub fn data_root() -> PathBuf {
    std::env::var_os("RS_DATA_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("data"))
}

pub fn parse_range(s: &str) -> Result<(f64, f64), String> {
    let (lo, hi) = s
        .split_once(':')
        .or_else(|| s.split_once(','))
        .ok_or_else(|| format!("expected MIN:MAX, got `{s}`"))?;
    let lo: f64 = lo.trim().parse().map_err(|_| format!("bad number `{lo}`"))?;
    let hi: f64 = hi.trim().parse().map_err(|_| format!("bad number `{hi}`"))?;
    if !(lo < hi) {
        return Err(format!("empty range {lo}:{hi}"));
    }
    Ok((lo, hi))
}

impl DataArgs {
    pub fn load(&self) -> Result<Loaded, CliError> {
        let dataset = match (self.dataset, &self.input) {
            (Some(d), _) => d,
            (None, Some(_)) => Dataset::Csv,
            (None, None) => return Err(CliError::Invalid("pass --dataset or --input".into())),
        };
        let path = match (&self.input, dataset) {
            (Some(p), _) => p.clone(),
            (None, Dataset::Ml100k) => data_root().join("ml-100k/u.data"),
            (None, Dataset::Ml1m) => data_root().join("ml-1m/ratings.dat"),
            (None, Dataset::Csv) => return Err(CliError::Invalid("--dataset csv needs --input".into())),
        };
        if !path.is_file() {
            return Err(CliError::Invalid(format!("input file {} not found", path.display())));
        }
        let (matrix, ids) = match dataset {
            Dataset::Ml100k => ingest::load_movielens_100k(&path)?,
            Dataset::Ml1m => ingest::load_movielens_1m(&path)?,
            Dataset::Csv => {
                let (m, ids) = ingest::load_csv(&path, self.has_header)?;
                match self.rating_range {
                    Some((lo, hi)) => (m.with_rating_range(lo, hi)?, ids),
                    None => (m, ids),
                }
            }
        };
        let fingerprint = fingerprint(&matrix, dataset, &path);
        Ok(Loaded {
            matrix,
            ids,
            fingerprint,
        })
    }
}

/// The rating range a dataset declares, if any.
pub fn declared_range(loaded: &Loaded) -> Option<(f64, f64)> {
    match loaded.fingerprint.source {
        Dataset::Ml100k | Dataset::Ml1m => Some(MOVIELENS_RANGE),
        Dataset::Csv => loaded.matrix.rating_range(),
    }
}

fn fingerprint(m: &RatingsMatrix, source: Dataset, path: &Path) -> Fingerprint {
    let mut hash = Sha256::new();
    for e in m.entries() {
        hash.update((e.row as u64).to_le_bytes());
        hash.update((e.col as u64).to_le_bytes());
        hash.update(e.value.to_bits().to_le_bytes());
    }
    let checksum = hash.finalize().iter().map(|b| format!("{b:02x}")).collect();
    Fingerprint {
        source,
        path: path.display().to_string(),
        n_users: m.n_rows(),
        n_items: m.n_cols(),
        entries: m.nnz(),
        checksum,
    }
}
