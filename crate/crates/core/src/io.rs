//! CSV and JSON loading of market data.

use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use crate::geo::{GeoError, PostcodeIndex};
use crate::model::{
    validate_offer, validate_order, Offer, Order, RawOffer, RawOrder, ValidationError, Weights, WeightsError,
};

/// One bad data row. Row numbers count the header as row 1.
#[derive(Debug, Clone, PartialEq)]
pub struct RowError {
    pub row: usize,
    pub error: ValidationError,
}

impl fmt::Display for RowError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "row {}: {}", self.row, self.error)
    }
}

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: {} invalid row(s)\n{}", .errors.len(), list(.errors))]
    Invalid { path: PathBuf, errors: Vec<RowError> },
    #[error("{path}: duplicate id `{id}` on row {row}")]
    DuplicateId { path: PathBuf, id: String, row: usize },
    #[error("{path}: {source}")]
    Geo {
        path: PathBuf,
        #[source]
        source: GeoError,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: {source}")]
    Weights {
        path: PathBuf,
        #[source]
        source: WeightsError,
    },
}

fn list(errors: &[RowError]) -> String {
    errors.iter().map(|e| format!("  {e}")).collect::<Vec<_>>().join("\n")
}

fn open(path: &Path) -> Result<File, IoError> {
    File::open(path).map_err(|source| IoError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn create(path: &Path) -> Result<File, IoError> {
    File::create(path).map_err(|source| IoError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn read_rows<R, Raw, T>(
    reader: R,
    path: &Path,
    validate: impl Fn(&Raw) -> Result<T, ValidationError>,
    id: impl Fn(&T) -> &str,
) -> Result<Vec<T>, IoError>
where
    R: Read,
    Raw: for<'de> Deserialize<'de>,
{
    let csv_err = |source| IoError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut items = Vec::new();
    let mut errors = Vec::new();
    let mut seen = HashSet::new();
    for (i, rec) in rdr.deserialize::<Raw>().enumerate() {
        let row = i + 2;
        let raw = rec.map_err(csv_err)?;
        match validate(&raw) {
            Ok(item) => {
                if !seen.insert(id(&item).to_string()) {
                    return Err(IoError::DuplicateId {
                        path: path.to_path_buf(),
                        id: id(&item).to_string(),
                        row,
                    });
                }
                items.push(item);
            }
            Err(error) => errors.push(RowError { row, error }),
        }
    }
    if errors.is_empty() {
        Ok(items)
    } else {
        Err(IoError::Invalid {
            path: path.to_path_buf(),
            errors,
        })
    }
}

/// Parses and validates offers; every invalid row is reported, not just the first.
pub fn read_offers_from<R: Read>(reader: R, path: &Path) -> Result<Vec<Offer>, IoError> {
    read_rows::<_, RawOffer, _>(reader, path, validate_offer, |o: &Offer| &o.id)
}

pub fn read_orders_from<R: Read>(reader: R, path: &Path) -> Result<Vec<Order>, IoError> {
    read_rows::<_, RawOrder, _>(reader, path, validate_order, |o: &Order| &o.id)
}

pub fn read_offers(path: &Path) -> Result<Vec<Offer>, IoError> {
    read_offers_from(open(path)?, path)
}

pub fn read_orders(path: &Path) -> Result<Vec<Order>, IoError> {
    read_orders_from(open(path)?, path)
}

pub fn read_postcodes(path: &Path) -> Result<PostcodeIndex, IoError> {
    PostcodeIndex::from_csv(open(path)?).map_err(|source| IoError::Geo {
        path: path.to_path_buf(),
        source,
    })
}

fn write_rows<W: Write, T: serde::Serialize>(writer: W, path: &Path, rows: &[T]) -> Result<(), IoError> {
    let csv_err = |source| IoError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut wtr = csv::Writer::from_writer(writer);
    for r in rows {
        wtr.serialize(r).map_err(csv_err)?;
    }
    wtr.flush().map_err(|source| IoError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_offers(path: &Path, offers: &[Offer]) -> Result<(), IoError> {
    write_rows(create(path)?, path, offers)
}

pub fn write_orders(path: &Path, orders: &[Order]) -> Result<(), IoError> {
    write_rows(create(path)?, path, orders)
}

pub fn write_postcodes(path: &Path, index: &PostcodeIndex) -> Result<(), IoError> {
    index.write_csv(create(path)?).map_err(|source| IoError::Geo {
        path: path.to_path_buf(),
        source,
    })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct WeightsFile {
    price: f64,
    quantity: f64,
    expiry: f64,
    distance: f64,
}

/// Reads `{"price":..,"quantity":..,"expiry":..,"distance":..}`. Weights that
/// do not sum to 1 are normalised.
pub fn read_weights(path: &Path) -> Result<Weights, IoError> {
    let mut text = String::new();
    open(path)?.read_to_string(&mut text).map_err(|source| IoError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_weights(&text).map_err(|e| match e {
        WeightsParseError::Json(source) => IoError::Json {
            path: path.to_path_buf(),
            source,
        },
        WeightsParseError::Weights(source) => IoError::Weights {
            path: path.to_path_buf(),
            source,
        },
    })
}

enum WeightsParseError {
    Json(serde_json::Error),
    Weights(WeightsError),
}

fn parse_weights(text: &str) -> Result<Weights, WeightsParseError> {
    let w: WeightsFile = serde_json::from_str(text).map_err(WeightsParseError::Json)?;
    Weights::normalized(w.price, w.quantity, w.expiry, w.distance).map_err(WeightsParseError::Weights)
}
