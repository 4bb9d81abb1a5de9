//! End-to-end checks on the seeded default market.

use std::collections::HashSet;

use circalloc::datagen::{generate, write_dataset, GenConfig};
use circalloc::engine::EngineConfig;
use circalloc::io::{read_offers, read_orders, read_postcodes};
use circalloc::metrics::{Strategy, StrategyRun};

#[test]
fn written_market_reads_back_and_allocates() {
    let data = generate(&GenConfig::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_dataset(dir.path(), &data).unwrap();
    let offers = read_offers(&dir.path().join("offers.csv")).unwrap();
    let orders = read_orders(&dir.path().join("orders.csv")).unwrap();
    let postcodes = read_postcodes(&dir.path().join("postcodes.csv")).unwrap();
    assert_eq!(offers, data.offers);
    assert_eq!(orders, data.orders);
    assert_eq!(postcodes, data.postcodes);

    let config = EngineConfig::default();
    let run = StrategyRun::of_strategy(Strategy::EqualWeights, &offers, &orders, &postcodes, &config).unwrap();
    assert!(run.result.all_optimal());

    // order counterparts track the matched offer/order ratio when offers mostly trade once
    let matched_offers: HashSet<&str> = run.result.flows.iter().map(|f| f.offer_id.as_str()).collect();
    let matched_orders: HashSet<&str> = run.result.flows.iter().map(|f| f.order_id.as_str()).collect();
    let ratio = matched_offers.len() as f64 / matched_orders.len() as f64;
    let counterparts = run.metrics.orders.counterparts.unwrap().mean;
    assert!((counterparts - ratio).abs() / ratio < 0.1, "{counterparts} vs {ratio}");

    let a = &run.metrics.aggregate;
    assert_eq!(a.orders, 118);
    assert_eq!(a.offers, 932);
    assert!((a.total_supply - 192_768.0).abs() < 1e-6);
    assert!((a.total_demand - 505_198.0).abs() < 1e-6);
}
