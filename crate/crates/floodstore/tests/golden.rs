//! Frozen-fixture regression tests.
//!
//! The fixtures under `tests/fixtures/` were produced once by the ignored
//! `regenerate_fixtures` test (run it with `-- --ignored` after an intended
//! behavior change) and verified against independent checks before freezing.

use std::path::PathBuf;

use floodstore::harness::{
    csv_string, eta_grid, run_experiment, summary, ExperimentConfig, QueryMode,
};
use floodstore::protocol::{AlgorithmVariant, RelayMode};
use floodstore::topology::{default_radius, generate_topology, GeometricGraph};

const TOPOLOGY_SEED: u64 = 100_2024;
const GOLDEN_TOPOLOGY: &str = include_str!("fixtures/topology_n100.txt");
const GOLDEN_CSV: &str = include_str!("fixtures/experiment_n30_dsa1.csv");
const GOLDEN_SUMMARY: &str = include_str!("fixtures/summary_n40_dsa2.txt");

fn fixtures_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

/// The topology example: n=100 on [0,2]^2 at the default radius.
fn golden_topology_params() -> (usize, f64, f64) {
    (100, 2.0, default_radius(100, 2.0))
}

fn csv_fixture_config() -> ExperimentConfig {
    ExperimentConfig {
        n: 30,
        side: 2.0,
        radius: Some(0.75),
        slots: None,
        symbol_bytes: 8,
        variant: AlgorithmVariant::DsaI { n_known: 30 },
        relay: RelayMode::Single,
        query: QueryMode::Uniform,
        eta_grid: eta_grid(0.25, 1.0, 0.25).unwrap(),
        trials: 20,
        seed: 2024,
        fixed_topology: false,
    }
}

fn summary_fixture_config() -> ExperimentConfig {
    ExperimentConfig {
        n: 40,
        side: 2.0,
        radius: Some(0.7),
        slots: None,
        symbol_bytes: 8,
        variant: AlgorithmVariant::DsaII { c_u: 2.0 },
        relay: RelayMode::Single,
        query: QueryMode::Uniform,
        eta_grid: eta_grid(0.25, 1.0, 0.25).unwrap(),
        trials: 20,
        seed: 9,
        fixed_topology: false,
    }
}

#[test]
fn golden_topology_regenerates_bit_exactly() {
    let loaded = GeometricGraph::load(GOLDEN_TOPOLOGY).unwrap();
    let (n, side, radius) = golden_topology_params();
    assert_eq!(loaded.node_count(), n);
    assert_eq!(loaded.side(), side);
    // The stored radius is the auto default, frozen at generation time.
    assert!((loaded.radius() - radius).abs() < 1e-12);
    assert_eq!(loaded.seed(), TOPOLOGY_SEED);
    assert!(loaded.is_connected());

    let regenerated = generate_topology(n, side, loaded.radius(), TOPOLOGY_SEED).unwrap();
    assert_eq!(regenerated.dump(), GOLDEN_TOPOLOGY);
}

#[test]
fn golden_topology_adjacency_matches_independent_distance_check() {
    // Second opinion on the edge rule: hypot-based distances instead of the
    // squared comparison used during construction.
    let g = GeometricGraph::load(GOLDEN_TOPOLOGY).unwrap();
    let n = g.node_count() as u32;
    for u in 0..n {
        let pu = g.position(u).unwrap();
        let brute: Vec<u32> = (0..n)
            .filter(|&v| {
                if v == u {
                    return false;
                }
                let pv = g.position(v).unwrap();
                let dist = (pu.x - pv.x).hypot(pu.y - pv.y);
                dist > 0.0 && dist <= g.radius()
            })
            .collect();
        assert_eq!(g.neighbors(u), brute.as_slice(), "node {u}");
    }
}

#[test]
fn golden_csv_is_stable() {
    let table = run_experiment(&csv_fixture_config()).unwrap();
    assert_eq!(csv_string(&table), GOLDEN_CSV);
}

#[test]
fn golden_dsa2_summary_is_stable() {
    let config = summary_fixture_config();
    let table = run_experiment(&config).unwrap();
    assert_eq!(summary(&config, &table), GOLDEN_SUMMARY);
}

/// Rebuild every fixture in place. Run explicitly after intended changes:
/// `cargo test --test golden -- --ignored regenerate_fixtures`
#[test]
#[ignore]
fn regenerate_fixtures() {
    let dir = fixtures_dir();
    std::fs::create_dir_all(&dir).unwrap();

    let (n, side, radius) = golden_topology_params();
    let graph = generate_topology(n, side, radius, TOPOLOGY_SEED).unwrap();
    graph.verify_radius_rule().unwrap();
    assert!(graph.is_connected(), "pick a different fixture seed");
    std::fs::write(dir.join("topology_n100.txt"), graph.dump()).unwrap();

    let table = run_experiment(&csv_fixture_config()).unwrap();
    std::fs::write(dir.join("experiment_n30_dsa1.csv"), csv_string(&table)).unwrap();

    let config = summary_fixture_config();
    let table = run_experiment(&config).unwrap();
    std::fs::write(dir.join("summary_n40_dsa2.txt"), summary(&config, &table)).unwrap();
}
