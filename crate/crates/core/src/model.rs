//! Market entities (offers, orders, weights, flows) and residual bookkeeping.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Absolute tolerance for comparing quantities and prices.
pub const QTY_TOL: f64 = 1e-9;

/// Seller-side supply record. Quantities are tonnes, prices GBP per tonne.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Offer {
    pub id: String,
    pub seller_id: String,
    pub product_id: String,
    pub quantity: f64,
    pub min_quantity: f64,
    pub price_per_unit: f64,
    pub min_price_per_unit: f64,
    pub production_date: NaiveDate,
    pub expiry_date: NaiveDate,
    pub valid_from: NaiveDate,
    pub valid_until: NaiveDate,
    pub collection_only: bool,
    pub collection_postcode: String,
    pub single_order: bool,
}

/// Buyer-side demand record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Order {
    pub id: String,
    pub buyer_id: String,
    pub product_id: String,
    pub quantity: f64,
    pub min_quantity: f64,
    pub price_per_unit: f64,
    pub max_price_per_unit: f64,
    pub expiry_date: NaiveDate,
    pub fulfill_date: NaiveDate,
    pub delivery_only: bool,
    pub delivery_postcode: String,
    pub single_offer: bool,
}

/// An offer row as read from CSV, before any field is parsed.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RawOffer {
    pub id: Option<String>,
    pub seller_id: Option<String>,
    pub product_id: Option<String>,
    pub quantity: Option<String>,
    pub min_quantity: Option<String>,
    pub price_per_unit: Option<String>,
    pub min_price_per_unit: Option<String>,
    pub production_date: Option<String>,
    pub expiry_date: Option<String>,
    pub valid_from: Option<String>,
    pub valid_until: Option<String>,
    pub collection_only: Option<String>,
    pub collection_postcode: Option<String>,
    pub single_order: Option<String>,
}

/// An order row as read from CSV, before any field is parsed.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RawOrder {
    pub id: Option<String>,
    pub buyer_id: Option<String>,
    pub product_id: Option<String>,
    pub quantity: Option<String>,
    pub min_quantity: Option<String>,
    pub price_per_unit: Option<String>,
    pub max_price_per_unit: Option<String>,
    pub expiry_date: Option<String>,
    pub fulfill_date: Option<String>,
    pub delivery_only: Option<String>,
    pub delivery_postcode: Option<String>,
    pub single_offer: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ValidationErrorKind {
    MissingField,
    /// Present but not parseable as the field's type.
    BadValue,
    NegativeQuantity,
    NegativePrice,
    MinExceedsMax,
    BadDateOrder,
}

impl fmt::Display for ValidationErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::MissingField => "MISSING_FIELD",
            Self::BadValue => "BAD_VALUE",
            Self::NegativeQuantity => "NEGATIVE_QUANTITY",
            Self::NegativePrice => "NEGATIVE_PRICE",
            Self::MinExceedsMax => "MIN_EXCEEDS_MAX",
            Self::BadDateOrder => "BAD_DATE_ORDER",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{kind} on field `{field}`: {detail}")]
pub struct ValidationError {
    pub kind: ValidationErrorKind,
    pub field: &'static str,
    pub detail: String,
}

impl ValidationError {
    fn new(kind: ValidationErrorKind, field: &'static str, detail: impl Into<String>) -> Self {
        Self {
            kind,
            field,
            detail: detail.into(),
        }
    }
}

fn required<'a>(value: &'a Option<String>, field: &'static str) -> Result<&'a str, ValidationError> {
    match value.as_deref().map(str::trim) {
        Some(s) if !s.is_empty() => Ok(s),
        _ => Err(ValidationError::new(
            ValidationErrorKind::MissingField,
            field,
            "value is empty or absent",
        )),
    }
}

fn parse<T: FromStr>(value: &Option<String>, field: &'static str) -> Result<T, ValidationError> {
    let s = required(value, field)?;
    s.parse()
        .map_err(|_| ValidationError::new(ValidationErrorKind::BadValue, field, format!("cannot parse {s:?}")))
}

fn parse_bool(value: &Option<String>, field: &'static str) -> Result<bool, ValidationError> {
    let s = required(value, field)?;
    match s.to_ascii_lowercase().as_str() {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(ValidationError::new(
            ValidationErrorKind::BadValue,
            field,
            format!("expected true/false, got {s:?}"),
        )),
    }
}

fn non_negative_qty(v: f64, field: &'static str) -> Result<f64, ValidationError> {
    if !v.is_finite() || v < 0.0 {
        return Err(ValidationError::new(
            ValidationErrorKind::NegativeQuantity,
            field,
            format!("{v} is not a non-negative quantity"),
        ));
    }
    Ok(v)
}

fn non_negative_price(v: f64, field: &'static str) -> Result<f64, ValidationError> {
    if !v.is_finite() || v < 0.0 {
        return Err(ValidationError::new(
            ValidationErrorKind::NegativePrice,
            field,
            format!("{v} is not a non-negative price"),
        ));
    }
    Ok(v)
}

fn check_le(lo: f64, hi: f64, field: &'static str, what: &str) -> Result<(), ValidationError> {
    if lo > hi + QTY_TOL {
        return Err(ValidationError::new(
            ValidationErrorKind::MinExceedsMax,
            field,
            format!("{what}: {lo} > {hi}"),
        ));
    }
    Ok(())
}

fn check_dates(lo: NaiveDate, hi: NaiveDate, field: &'static str, what: &str) -> Result<(), ValidationError> {
    if lo > hi {
        return Err(ValidationError::new(
            ValidationErrorKind::BadDateOrder,
            field,
            format!("{what}: {lo} is after {hi}"),
        ));
    }
    Ok(())
}

pub fn validate_offer(raw: &RawOffer) -> Result<Offer, ValidationError> {
    let offer = Offer {
        id: required(&raw.id, "id")?.to_string(),
        seller_id: required(&raw.seller_id, "seller_id")?.to_string(),
        product_id: required(&raw.product_id, "product_id")?.to_string(),
        quantity: non_negative_qty(parse(&raw.quantity, "quantity")?, "quantity")?,
        min_quantity: non_negative_qty(parse(&raw.min_quantity, "min_quantity")?, "min_quantity")?,
        price_per_unit: non_negative_price(parse(&raw.price_per_unit, "price_per_unit")?, "price_per_unit")?,
        min_price_per_unit: non_negative_price(
            parse(&raw.min_price_per_unit, "min_price_per_unit")?,
            "min_price_per_unit",
        )?,
        production_date: parse(&raw.production_date, "production_date")?,
        expiry_date: parse(&raw.expiry_date, "expiry_date")?,
        valid_from: parse(&raw.valid_from, "valid_from")?,
        valid_until: parse(&raw.valid_until, "valid_until")?,
        collection_only: parse_bool(&raw.collection_only, "collection_only")?,
        collection_postcode: required(&raw.collection_postcode, "collection_postcode")?.to_string(),
        single_order: parse_bool(&raw.single_order, "single_order")?,
    };
    check_le(
        offer.min_quantity,
        offer.quantity,
        "min_quantity",
        "min_quantity exceeds quantity",
    )?;
    check_le(
        offer.min_price_per_unit,
        offer.price_per_unit,
        "min_price_per_unit",
        "min_price_per_unit exceeds price_per_unit",
    )?;
    check_dates(offer.valid_from, offer.valid_until, "valid_until", "validity window")?;
    check_dates(
        offer.production_date,
        offer.expiry_date,
        "expiry_date",
        "production/expiry",
    )?;
    Ok(offer)
}

pub fn validate_order(raw: &RawOrder) -> Result<Order, ValidationError> {
    let order = Order {
        id: required(&raw.id, "id")?.to_string(),
        buyer_id: required(&raw.buyer_id, "buyer_id")?.to_string(),
        product_id: required(&raw.product_id, "product_id")?.to_string(),
        quantity: non_negative_qty(parse(&raw.quantity, "quantity")?, "quantity")?,
        min_quantity: non_negative_qty(parse(&raw.min_quantity, "min_quantity")?, "min_quantity")?,
        price_per_unit: non_negative_price(parse(&raw.price_per_unit, "price_per_unit")?, "price_per_unit")?,
        max_price_per_unit: non_negative_price(
            parse(&raw.max_price_per_unit, "max_price_per_unit")?,
            "max_price_per_unit",
        )?,
        expiry_date: parse(&raw.expiry_date, "expiry_date")?,
        fulfill_date: parse(&raw.fulfill_date, "fulfill_date")?,
        delivery_only: parse_bool(&raw.delivery_only, "delivery_only")?,
        delivery_postcode: required(&raw.delivery_postcode, "delivery_postcode")?.to_string(),
        single_offer: parse_bool(&raw.single_offer, "single_offer")?,
    };
    check_le(
        order.min_quantity,
        order.quantity,
        "min_quantity",
        "min_quantity exceeds quantity",
    )?;
    check_le(
        order.price_per_unit,
        order.max_price_per_unit,
        "price_per_unit",
        "price_per_unit exceeds max_price_per_unit",
    )?;
    check_dates(
        order.fulfill_date,
        order.expiry_date,
        "fulfill_date",
        "fulfilment/expiry",
    )?;
    Ok(order)
}

impl From<&Offer> for RawOffer {
    fn from(o: &Offer) -> Self {
        RawOffer {
            id: Some(o.id.clone()),
            seller_id: Some(o.seller_id.clone()),
            product_id: Some(o.product_id.clone()),
            quantity: Some(o.quantity.to_string()),
            min_quantity: Some(o.min_quantity.to_string()),
            price_per_unit: Some(o.price_per_unit.to_string()),
            min_price_per_unit: Some(o.min_price_per_unit.to_string()),
            production_date: Some(o.production_date.to_string()),
            expiry_date: Some(o.expiry_date.to_string()),
            valid_from: Some(o.valid_from.to_string()),
            valid_until: Some(o.valid_until.to_string()),
            collection_only: Some(o.collection_only.to_string()),
            collection_postcode: Some(o.collection_postcode.clone()),
            single_order: Some(o.single_order.to_string()),
        }
    }
}

impl From<&Order> for RawOrder {
    fn from(o: &Order) -> Self {
        RawOrder {
            id: Some(o.id.clone()),
            buyer_id: Some(o.buyer_id.clone()),
            product_id: Some(o.product_id.clone()),
            quantity: Some(o.quantity.to_string()),
            min_quantity: Some(o.min_quantity.to_string()),
            price_per_unit: Some(o.price_per_unit.to_string()),
            max_price_per_unit: Some(o.max_price_per_unit.to_string()),
            expiry_date: Some(o.expiry_date.to_string()),
            fulfill_date: Some(o.fulfill_date.to_string()),
            delivery_only: Some(o.delivery_only.to_string()),
            delivery_postcode: Some(o.delivery_postcode.clone()),
            single_offer: Some(o.single_offer.to_string()),
        }
    }
}

/// Priority vector over the four matching criteria.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    pub price: f64,
    pub quantity: f64,
    pub expiry: f64,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WeightsError {
    #[error("weight `{0}` is negative or not finite")]
    Negative(&'static str),
    #[error("weights sum to zero")]
    ZeroSum,
    #[error("weights sum to {0}, expected 1")]
    NotNormalized(f64),
}

impl Weights {
    pub const EQUAL: Weights = Weights {
        price: 0.25,
        quantity: 0.25,
        expiry: 0.25,
        distance: 0.25,
    };

    /// Builds a weight vector whose components must already sum to 1.
    pub fn new(price: f64, quantity: f64, expiry: f64, distance: f64) -> Result<Self, WeightsError> {
        let w = Weights {
            price,
            quantity,
            expiry,
            distance,
        };
        w.check_components()?;
        let sum = w.sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(WeightsError::NotNormalized(sum));
        }
        Ok(w)
    }

    /// Rescales arbitrary non-negative components so they sum to 1.
    pub fn normalized(price: f64, quantity: f64, expiry: f64, distance: f64) -> Result<Self, WeightsError> {
        let w = Weights {
            price,
            quantity,
            expiry,
            distance,
        };
        w.check_components()?;
        let sum = w.sum();
        if sum <= 0.0 {
            return Err(WeightsError::ZeroSum);
        }
        Ok(Weights {
            price: price / sum,
            quantity: quantity / sum,
            expiry: expiry / sum,
            distance: distance / sum,
        })
    }

    fn check_components(&self) -> Result<(), WeightsError> {
        for (name, v) in [
            ("price", self.price),
            ("quantity", self.quantity),
            ("expiry", self.expiry),
            ("distance", self.distance),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(WeightsError::Negative(name));
            }
        }
        Ok(())
    }

    pub fn sum(&self) -> f64 {
        self.price + self.quantity + self.expiry + self.distance
    }

    pub fn is_normalized(&self) -> bool {
        self.check_components().is_ok() && (self.sum() - 1.0).abs() <= 1e-9
    }

    /// Multiplies every component by `c`. The result is generally not normalized.
    pub fn scaled(&self, c: f64) -> Weights {
        Weights {
            price: self.price * c,
            quantity: self.quantity * c,
            expiry: self.expiry * c,
            distance: self.distance * c,
        }
    }
}

/// Per-criterion scores of an arc plus their weighted aggregate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriterionScores {
    pub price: f64,
    pub quantity: f64,
    pub freshness: f64,
    pub distance: f64,
    pub aggregate: f64,
}

/// Quantity moved along one arc in one iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Flow {
    pub iteration: u32,
    pub offer_id: String,
    pub order_id: String,
    pub quantity: f64,
    pub transaction_price: f64,
    pub distance_km: f64,
    pub scores: CriterionScores,
}

/// Why an offer/order pair (or an offer) was excluded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ReasonCode {
    ProductMismatch,
    TimeWindow,
    Expiry,
    Logistics,
    Quantity,
    Price,
    Pruned,
    Screened,
    ExpiredSupply,
}

impl ReasonCode {
    pub const ALL: [ReasonCode; 9] = [
        ReasonCode::ProductMismatch,
        ReasonCode::TimeWindow,
        ReasonCode::Expiry,
        ReasonCode::Logistics,
        ReasonCode::Quantity,
        ReasonCode::Price,
        ReasonCode::Pruned,
        ReasonCode::Screened,
        ReasonCode::ExpiredSupply,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ReasonCode::ProductMismatch => "PRODUCT_MISMATCH",
            ReasonCode::TimeWindow => "TIME_WINDOW",
            ReasonCode::Expiry => "EXPIRY",
            ReasonCode::Logistics => "LOGISTICS",
            ReasonCode::Quantity => "QUANTITY",
            ReasonCode::Price => "PRICE",
            ReasonCode::Pruned => "PRUNED",
            ReasonCode::Screened => "SCREENED",
            ReasonCode::ExpiredSupply => "EXPIRED_SUPPLY",
        }
    }
}

impl fmt::Display for ReasonCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("flow references unknown {side} `{id}`")]
    UnknownEntity { side: &'static str, id: String },
    #[error("OVERDRAW: flows of {allocated} t exceed remaining {remaining} t on {side} `{id}`")]
    Overdraw {
        side: &'static str,
        id: String,
        allocated: f64,
        remaining: f64,
    },
}

fn residual(side: &'static str, id: &str, quantity: f64, allocated: f64) -> Result<f64, ModelError> {
    let left = quantity - allocated;
    if left < -QTY_TOL {
        return Err(ModelError::Overdraw {
            side,
            id: id.to_string(),
            allocated,
            remaining: quantity,
        });
    }
    Ok(left.max(0.0))
}

/// Subtracts allocated flows from the entities they reference.
///
/// Entities left with no tradable quantity are dropped, and each survivor's
/// `min_quantity` is clamped to its new remaining quantity so residuals stay
/// tradable. Input order is preserved.
pub fn subtract_flows(
    offers: &[Offer],
    orders: &[Order],
    flows: &[Flow],
) -> Result<(Vec<Offer>, Vec<Order>), ModelError> {
    let mut by_offer: HashMap<&str, f64> = HashMap::new();
    let mut by_order: HashMap<&str, f64> = HashMap::new();
    for f in flows {
        *by_offer.entry(f.offer_id.as_str()).or_default() += f.quantity;
        *by_order.entry(f.order_id.as_str()).or_default() += f.quantity;
    }
    for id in by_offer.keys() {
        if !offers.iter().any(|o| o.id == *id) {
            return Err(ModelError::UnknownEntity {
                side: "offer",
                id: id.to_string(),
            });
        }
    }
    for id in by_order.keys() {
        if !orders.iter().any(|o| o.id == *id) {
            return Err(ModelError::UnknownEntity {
                side: "order",
                id: id.to_string(),
            });
        }
    }

    let mut out_offers = Vec::with_capacity(offers.len());
    for offer in offers {
        let Some(&allocated) = by_offer.get(offer.id.as_str()) else {
            out_offers.push(offer.clone());
            continue;
        };
        let left = residual("offer", &offer.id, offer.quantity, allocated)?;
        if left > QTY_TOL {
            let mut o = offer.clone();
            o.quantity = left;
            o.min_quantity = o.min_quantity.min(left);
            out_offers.push(o);
        }
    }

    let mut out_orders = Vec::with_capacity(orders.len());
    for order in orders {
        let Some(&allocated) = by_order.get(order.id.as_str()) else {
            out_orders.push(order.clone());
            continue;
        };
        let left = residual("order", &order.id, order.quantity, allocated)?;
        if left > QTY_TOL {
            let mut o = order.clone();
            o.quantity = left;
            o.min_quantity = o.min_quantity.min(left);
            out_orders.push(o);
        }
    }
    Ok((out_offers, out_orders))
}
