//! Machine-readable reports: metrics.json, comparison.csv, allocations.csv
//! and diagnostics.jsonl, plus a plain-text summary.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{AllocationResult, DominantReason, IterationRecord};
use crate::metrics::{MetricSuite, SideMetrics, Strategy, StrategyRun, Summary};
use crate::model::{CriterionScores, Flow, ReasonCode, Weights};
use crate::solver::SolveStatus;

pub const METRICS_FILE: &str = "metrics.json";
pub const COMPARISON_FILE: &str = "comparison.csv";
pub const ALLOCATIONS_FILE: &str = "allocations.csv";
pub const DIAGNOSTICS_FILE: &str = "diagnostics.jsonl";

/// Conventions a reader needs to interpret metrics.json.
pub const METRIC_NOTES: [&str; 4] = [
    "counterparts and allocation_ratio include participants without flows (as 0)",
    "unit_price, distance_km and expiry_gap_days cover only participants with at least one flow",
    "distance_km is the per-participant sum of flow distances, not a weighted mean",
    "transaction price is the midpoint of the two list prices clamped to [offer min, order max]",
];

#[derive(Debug, Error)]
pub enum ReportError {
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
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> ReportError + '_ {
    move |source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, ReportError> {
    File::create(path).map(BufWriter::new).map_err(io_err(path))
}

/// Per-iteration solver outcome, without the flows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationSummary {
    pub index: u32,
    pub status: SolveStatus,
    pub allocated_tonnes: f64,
    pub objective: f64,
    pub node_count: usize,
    pub lp_iterations: usize,
    pub gap: f64,
    pub feasible_arcs: usize,
    pub pruned_arcs: usize,
    pub screened_arcs: usize,
    pub residual_offers: usize,
    pub residual_orders: usize,
    pub expired_offers: usize,
    pub rejections_by_reason: std::collections::BTreeMap<ReasonCode, usize>,
}

impl From<&IterationRecord> for IterationSummary {
    fn from(r: &IterationRecord) -> Self {
        IterationSummary {
            index: r.index,
            status: r.status,
            allocated_tonnes: r.allocated_tonnes,
            objective: r.objective,
            node_count: r.node_count,
            lp_iterations: r.lp_iterations,
            gap: r.gap,
            feasible_arcs: r.feasible_arcs,
            pruned_arcs: r.pruned_arcs,
            screened_arcs: r.screened_arcs,
            residual_offers: r.residual_offers,
            residual_orders: r.residual_orders,
            expired_offers: r.expired_offers,
            rejections_by_reason: r.rejections_by_reason.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyReport {
    pub label: String,
    pub strategy: Option<Strategy>,
    pub weights: Weights,
    pub metrics: MetricSuite,
    pub iterations: Vec<IterationSummary>,
}

/// Contents of metrics.json.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub notes: Vec<String>,
    pub strategies: Vec<StrategyReport>,
}

impl MetricsReport {
    pub fn new(runs: &[StrategyRun]) -> Self {
        MetricsReport {
            notes: METRIC_NOTES.iter().map(|s| s.to_string()).collect(),
            strategies: runs
                .iter()
                .map(|r| StrategyReport {
                    label: r.label.clone(),
                    strategy: r.strategy,
                    weights: r.weights,
                    metrics: r.metrics.clone(),
                    iterations: r.result.iterations.iter().map(IterationSummary::from).collect(),
                })
                .collect(),
        }
    }
}

pub fn write_metrics_json(path: &Path, report: &MetricsReport) -> Result<(), ReportError> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, report).map_err(|source| ReportError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    w.write_all(b"\n").and_then(|_| w.flush()).map_err(io_err(path))
}

pub fn read_metrics_json(path: &Path) -> Result<MetricsReport, ReportError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|source| ReportError::Json {
        path: path.to_path_buf(),
        source,
    })
}

type Getter = fn(&MetricSuite) -> Option<f64>;
type StatGetter = fn(&Summary) -> Option<f64>;
type Cell = Box<dyn Fn(&StrategyRun) -> String>;

fn aggregate_rows() -> Vec<(&'static str, Getter)> {
    vec![
        ("orders", |m| Some(m.aggregate.orders as f64)),
        ("fully_met_orders", |m| Some(m.aggregate.fully_met_orders as f64)),
        ("partially_met_orders", |m| {
            Some(m.aggregate.partially_met_orders as f64)
        }),
        ("unmet_orders", |m| Some(m.aggregate.unmet_orders as f64)),
        ("offers", |m| Some(m.aggregate.offers as f64)),
        ("fully_met_offers", |m| Some(m.aggregate.fully_met_offers as f64)),
        ("partially_met_offers", |m| {
            Some(m.aggregate.partially_met_offers as f64)
        }),
        ("unmet_offers", |m| Some(m.aggregate.unmet_offers as f64)),
        ("total_demand_t", |m| Some(m.aggregate.total_demand)),
        ("total_supply_t", |m| Some(m.aggregate.total_supply)),
        ("allocation_first_iteration_t", |m| {
            Some(m.aggregate.allocation_first_iteration)
        }),
        ("utilisation_first_iteration_pct", |m| {
            Some(m.aggregate.utilisation_first_iteration_pct)
        }),
        ("allocation_at_termination_t", |m| {
            Some(m.aggregate.allocation_at_termination)
        }),
        ("utilisation_pct", |m| Some(m.aggregate.utilisation_pct)),
        ("circulated_pct", |m| Some(m.aggregate.circulated_pct)),
        ("leftover_pct", |m| Some(m.aggregate.leftover_pct)),
        ("expired_t", |m| Some(m.aggregate.expired_tonnes)),
        ("iterations", |m| Some(m.aggregate.iterations as f64)),
    ]
}

const SIDE_FIELDS: [&str; 5] = [
    "counterparts",
    "allocation_ratio",
    "unit_price",
    "distance_km",
    "expiry_gap_days",
];

fn side_values(side: &SideMetrics) -> [Option<Summary>; 5] {
    [
        side.counterparts,
        side.allocation_ratio,
        side.unit_price,
        side.distance_km,
        side.expiry_gap_days,
    ]
}

/// One row per metric: (name, value per suite).
pub fn comparison_rows(suites: &[&MetricSuite]) -> Vec<(String, Vec<Option<f64>>)> {
    let mut rows: Vec<(String, Vec<Option<f64>>)> = aggregate_rows()
        .into_iter()
        .map(|(name, get)| (name.to_string(), suites.iter().map(|m| get(m)).collect()))
        .collect();
    let stats: [(&str, StatGetter); 3] = [
        ("mean", |s| Some(s.mean)),
        ("sd", |s| s.sd),
        ("skewness", |s| s.skewness),
    ];
    for side in ["orders", "offers"] {
        let values: Vec<[Option<Summary>; 5]> = suites
            .iter()
            .map(|m| side_values(if side == "orders" { &m.orders } else { &m.offers }))
            .collect();
        for (i, field) in SIDE_FIELDS.iter().enumerate() {
            for (stat, get) in stats {
                let row = values.iter().map(|v| v[i].as_ref().and_then(get)).collect();
                rows.push((format!("{side}.{field}.{stat}"), row));
            }
        }
    }
    rows
}

/// Strategies as columns, metrics as rows; absent values are empty cells.
pub fn write_comparison_csv(path: &Path, runs: &[StrategyRun]) -> Result<(), ReportError> {
    let csv_err = |source| ReportError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_writer(create(path)?);
    let mut header = vec!["metric".to_string()];
    header.extend(runs.iter().map(|r| r.label.clone()));
    w.write_record(&header).map_err(csv_err)?;
    let suites: Vec<&MetricSuite> = runs.iter().map(|r| &r.metrics).collect();
    for (name, values) in comparison_rows(&suites) {
        let mut rec = vec![name];
        rec.extend(values.into_iter().map(|v| v.map(|x| x.to_string()).unwrap_or_default()));
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush().map_err(io_err(path))
}

#[derive(Serialize)]
struct AllocationRow<'a> {
    iteration: u32,
    offer_id: &'a str,
    order_id: &'a str,
    quantity_t: f64,
    transaction_price_gbp: f64,
    distance_km: f64,
    s_price: f64,
    s_quantity: f64,
    s_freshness: f64,
    s_distance: f64,
    aggregate: f64,
}

pub fn write_allocations_csv(path: &Path, flows: &[Flow]) -> Result<(), ReportError> {
    let csv_err = |source| ReportError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_writer(create(path)?);
    for f in flows {
        let CriterionScores {
            price,
            quantity,
            freshness,
            distance,
            aggregate,
        } = f.scores;
        w.serialize(AllocationRow {
            iteration: f.iteration,
            offer_id: &f.offer_id,
            order_id: &f.order_id,
            quantity_t: f.quantity,
            transaction_price_gbp: f.transaction_price,
            distance_km: f.distance_km,
            s_price: price,
            s_quantity: quantity,
            s_freshness: freshness,
            s_distance: distance,
            aggregate,
        })
        .map_err(csv_err)?;
    }
    // an empty run still gets a header
    if flows.is_empty() {
        w.write_record([
            "iteration",
            "offer_id",
            "order_id",
            "quantity_t",
            "transaction_price_gbp",
            "distance_km",
            "s_price",
            "s_quantity",
            "s_freshness",
            "s_distance",
            "aggregate",
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(io_err(path))
}

/// One line of diagnostics.jsonl.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DiagnosticLine {
    Rejection {
        offer_id: String,
        order_id: String,
        reason: ReasonCode,
        detail: String,
    },
    Iteration(IterationSummary),
    Expired {
        offer_id: String,
        quantity: f64,
        expiry_date: chrono::NaiveDate,
        iteration: u32,
        reason: ReasonCode,
        label: String,
    },
    Leftover {
        offer_id: String,
        remaining: f64,
        mean_scores: Option<CriterionScores>,
        dominant_reason: DominantReason,
    },
}

pub fn diagnostic_lines(result: &AllocationResult) -> impl Iterator<Item = DiagnosticLine> + '_ {
    let rejections = result.rejections.iter().map(|r| DiagnosticLine::Rejection {
        offer_id: r.offer_id.clone(),
        order_id: r.order_id.clone(),
        reason: r.reason,
        detail: r.detail.clone(),
    });
    let iterations = result
        .iterations
        .iter()
        .map(|r| DiagnosticLine::Iteration(IterationSummary::from(r)));
    let expired = result.expired.iter().map(|e| DiagnosticLine::Expired {
        offer_id: e.offer_id.clone(),
        quantity: e.quantity,
        expiry_date: e.expiry_date,
        iteration: e.iteration,
        reason: e.reason,
        label: e.label.clone(),
    });
    let leftovers = result.leftover_diagnostics.iter().map(|d| DiagnosticLine::Leftover {
        offer_id: d.offer_id.clone(),
        remaining: d.remaining,
        mean_scores: d.mean_scores,
        dominant_reason: d.dominant_reason,
    });
    rejections.chain(iterations).chain(expired).chain(leftovers)
}

pub fn write_diagnostics_jsonl(path: &Path, result: &AllocationResult) -> Result<(), ReportError> {
    let mut w = create(path)?;
    for line in diagnostic_lines(result) {
        serde_json::to_writer(&mut w, &line).map_err(|source| ReportError::Json {
            path: path.to_path_buf(),
            source,
        })?;
        w.write_all(b"\n").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// Writes metrics.json and comparison.csv for `runs` into `dir`, which must exist.
pub fn emit_reports(runs: &[StrategyRun], dir: &Path) -> Result<(), ReportError> {
    write_metrics_json(&dir.join(METRICS_FILE), &MetricsReport::new(runs))?;
    write_comparison_csv(&dir.join(COMPARISON_FILE), runs)
}

/// Writes allocations.csv and diagnostics.jsonl for one run into `dir`.
pub fn emit_run_artifacts(result: &AllocationResult, dir: &Path) -> Result<(), ReportError> {
    write_allocations_csv(&dir.join(ALLOCATIONS_FILE), &result.flows)?;
    write_diagnostics_jsonl(&dir.join(DIAGNOSTICS_FILE), result)
}

fn opt(x: Option<f64>, decimals: usize) -> String {
    x.map_or_else(|| "-".to_string(), |v| format!("{v:.decimals$}"))
}

fn mean(s: Option<Summary>) -> Option<f64> {
    s.map(|s| s.mean)
}

/// Fixed-width table of headline metrics, one column per strategy.
pub fn summary_table(runs: &[StrategyRun]) -> String {
    let rows: Vec<(&str, Cell)> = vec![
        ("iterations", Box::new(|r| r.metrics.aggregate.iterations.to_string())),
        (
            "utilisation %",
            Box::new(|r| format!("{:.2}", r.metrics.aggregate.utilisation_pct)),
        ),
        (
            "circulated %",
            Box::new(|r| format!("{:.3}", r.metrics.aggregate.circulated_pct)),
        ),
        (
            "leftover %",
            Box::new(|r| format!("{:.2}", r.metrics.aggregate.leftover_pct)),
        ),
        (
            "expired t",
            Box::new(|r| format!("{:.1}", r.metrics.aggregate.expired_tonnes)),
        ),
        (
            "orders fully met",
            Box::new(|r| r.metrics.aggregate.fully_met_orders.to_string()),
        ),
        (
            "orders partial",
            Box::new(|r| r.metrics.aggregate.partially_met_orders.to_string()),
        ),
        (
            "orders unmet",
            Box::new(|r| r.metrics.aggregate.unmet_orders.to_string()),
        ),
        (
            "offers fully met",
            Box::new(|r| r.metrics.aggregate.fully_met_offers.to_string()),
        ),
        (
            "offers unmet",
            Box::new(|r| r.metrics.aggregate.unmet_offers.to_string()),
        ),
        (
            "order counterparts",
            Box::new(|r| opt(mean(r.metrics.orders.counterparts), 2)),
        ),
        (
            "order price GBP/t",
            Box::new(|r| opt(mean(r.metrics.orders.unit_price), 2)),
        ),
        (
            "offer price GBP/t",
            Box::new(|r| opt(mean(r.metrics.offers.unit_price), 2)),
        ),
        (
            "order distance km",
            Box::new(|r| opt(mean(r.metrics.orders.distance_km), 1)),
        ),
        (
            "offer distance km",
            Box::new(|r| opt(mean(r.metrics.offers.distance_km), 1)),
        ),
        (
            "order expiry gap d",
            Box::new(|r| opt(mean(r.metrics.orders.expiry_gap_days), 2)),
        ),
        (
            "status",
            Box::new(|r| if r.result.all_optimal() { "ok" } else { "NOT OPTIMAL" }.to_string()),
        ),
    ];
    let mut out = String::new();
    let _ = write!(out, "{:<20}", "");
    for r in runs {
        let _ = write!(out, "{:>12}", r.label);
    }
    out.push('\n');
    for (name, get) in &rows {
        let _ = write!(out, "{name:<20}");
        for r in runs {
            let _ = write!(out, "{:>12}", get(r));
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::EngineConfig;
    use crate::geo::{GeoPoint, PostcodeIndex};
    use crate::model::fixtures;

    fn small_run(strategy: Strategy) -> StrategyRun {
        let offers = vec![fixtures::offer("F1"), fixtures::offer("F2")];
        let orders = vec![fixtures::order("O1")];
        let mut index = PostcodeIndex::new();
        index.insert("BS1", GeoPoint::new(51.45, -2.59).unwrap());
        StrategyRun::of_strategy(strategy, &offers, &orders, &index, &EngineConfig::default()).unwrap()
    }

    #[test]
    fn metrics_json_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let runs = vec![small_run(Strategy::EqualWeights)];
        emit_reports(&runs, dir.path()).unwrap();
        let back = read_metrics_json(&dir.path().join(METRICS_FILE)).unwrap();
        assert_eq!(back, MetricsReport::new(&runs));
        assert!(back.notes.iter().any(|n| n.contains("without flows")));
    }

    #[test]
    fn comparison_has_one_column_per_strategy() {
        let dir = tempfile::tempdir().unwrap();
        let runs: Vec<_> = Strategy::ALL.into_iter().map(small_run).collect();
        emit_reports(&runs, dir.path()).unwrap();
        let mut rdr = csv::Reader::from_path(dir.path().join(COMPARISON_FILE)).unwrap();
        let header = rdr.headers().unwrap().clone();
        assert_eq!(header.len(), 8);
        assert_eq!(&header[1], "Eq");
        assert_eq!(&header[7], "DistX");
        let records: Vec<_> = rdr.records().map(Result::unwrap).collect();
        assert!(records.iter().all(|r| r.len() == 8));
        assert!(records.iter().any(|r| &r[0] == "utilisation_pct"));
        assert!(records.iter().any(|r| &r[0] == "offers.unit_price.skewness"));
    }

    #[test]
    fn missing_directory_names_path() {
        let runs = vec![small_run(Strategy::EqualWeights)];
        let err = emit_reports(&runs, Path::new("/nonexistent/out")).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/out/metrics.json"), "{err}");
    }

    #[test]
    fn allocations_and_diagnostics() {
        let dir = tempfile::tempdir().unwrap();
        let run = small_run(Strategy::EqualWeights);
        emit_run_artifacts(&run.result, dir.path()).unwrap();
        let text = std::fs::read_to_string(dir.path().join(ALLOCATIONS_FILE)).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "iteration,offer_id,order_id,quantity_t,transaction_price_gbp,distance_km,s_price,s_quantity,s_freshness,s_distance,aggregate"
        );
        assert_eq!(lines.count(), run.result.flows.len());

        let diag = std::fs::read_to_string(dir.path().join(DIAGNOSTICS_FILE)).unwrap();
        let parsed: Vec<DiagnosticLine> = diag.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
        let iterations = parsed
            .iter()
            .filter(|l| matches!(l, DiagnosticLine::Iteration(_)))
            .count();
        assert_eq!(iterations, run.result.iterations.len());
    }

    #[test]
    fn empty_allocations_keep_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(ALLOCATIONS_FILE);
        write_allocations_csv(&path, &[]).unwrap();
        assert!(std::fs::read_to_string(path).unwrap().starts_with("iteration,offer_id"));
    }

    #[test]
    fn summary_lists_every_strategy() {
        let runs: Vec<_> = [Strategy::EqualWeights, Strategy::DistanceExtreme]
            .into_iter()
            .map(small_run)
            .collect();
        let table = summary_table(&runs);
        assert!(table.lines().next().unwrap().contains("DistX"));
        assert!(table.contains("utilisation %"));
    }
}
