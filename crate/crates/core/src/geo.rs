//! Postcode lookup and great-circle shipping distances.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Offer, Order};

/// Mean Earth radius in kilometres.
pub const EARTH_RADIUS_KM: f64 = 6371.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    lat: f64,
    lon: f64,
}

#[derive(Debug, Error)]
pub enum GeoError {
    #[error("UNKNOWN_POSTCODE: `{0}` is not in the postcode index")]
    UnknownPostcode(String),
    #[error("coordinate out of range: lat={lat}, lon={lon}")]
    OutOfRange { lat: f64, lon: f64 },
    #[error("postcode file row {row}: {message}")]
    BadRow { row: usize, message: String },
    #[error("postcode file: {0}")]
    Csv(#[from] csv::Error),
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Result<Self, GeoError> {
        if !(-90.0..=90.0).contains(&lat) || !(-180.0..=180.0).contains(&lon) {
            return Err(GeoError::OutOfRange { lat, lon });
        }
        Ok(GeoPoint { lat, lon })
    }

    pub fn lat(&self) -> f64 {
        self.lat
    }

    pub fn lon(&self) -> f64 {
        self.lon
    }
}

/// Great-circle distance in km.
pub fn haversine_km(a: GeoPoint, b: GeoPoint) -> f64 {
    let phi1 = a.lat.to_radians();
    let phi2 = b.lat.to_radians();
    let dphi = (b.lat - a.lat).to_radians();
    let dlambda = (b.lon - a.lon).to_radians();
    let h = (dphi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (dlambda / 2.0).sin().powi(2);
    // h can drift a hair above 1 for antipodes
    2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin()
}

/// Uppercase with all whitespace removed.
pub fn normalize_postcode(code: &str) -> String {
    code.chars()
        .filter(|c| !c.is_whitespace())
        .flat_map(char::to_uppercase)
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PostcodeIndex {
    points: BTreeMap<String, GeoPoint>,
}

#[derive(Debug, Serialize, Deserialize)]
struct PostcodeRow {
    code: String,
    lat: f64,
    lon: f64,
}

impl PostcodeIndex {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, code: &str, point: GeoPoint) {
        self.points.insert(normalize_postcode(code), point);
    }

    pub fn get(&self, code: &str) -> Option<GeoPoint> {
        self.points.get(&normalize_postcode(code)).copied()
    }

    pub fn resolve(&self, code: &str) -> Result<GeoPoint, GeoError> {
        self.get(code)
            .ok_or_else(|| GeoError::UnknownPostcode(code.to_string()))
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, GeoPoint)> {
        self.points.iter().map(|(k, v)| (k.as_str(), *v))
    }

    /// Reads a `code,lat,lon` CSV with a header row.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self, GeoError> {
        let mut rdr = csv::Reader::from_reader(reader);
        let mut index = PostcodeIndex::new();
        for (i, row) in rdr.deserialize::<PostcodeRow>().enumerate() {
            // header is line 1
            let row_no = i + 2;
            let row = row.map_err(|e| GeoError::BadRow {
                row: row_no,
                message: e.to_string(),
            })?;
            let point = GeoPoint::new(row.lat, row.lon).map_err(|e| GeoError::BadRow {
                row: row_no,
                message: e.to_string(),
            })?;
            index.insert(&row.code, point);
        }
        Ok(index)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), GeoError> {
        let mut wtr = csv::Writer::from_writer(writer);
        for (code, p) in &self.points {
            wtr.serialize(PostcodeRow {
                code: code.clone(),
                lat: p.lat,
                lon: p.lon,
            })?;
        }
        wtr.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

/// Distance from the offer's collection point to the order's delivery point.
pub fn arc_distance(offer: &Offer, order: &Order, index: &PostcodeIndex) -> Result<f64, GeoError> {
    let from = index.resolve(&offer.collection_postcode)?;
    let to = index.resolve(&order.delivery_postcode)?;
    Ok(haversine_km(from, to))
}
