//! Experiment orchestration: eta sweeps, trial aggregation, CSV output, and
//! the command-line entry point.
//!
//! Every trial is sub-seeded from `(master seed, purpose, n, eta index,
//! trial index)` — see [`crate::seeds::derive_seed`] — so trials are
//! reproducible in isolation and independent of execution order, and the
//! whole sweep parallelizes freely.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::Parser;
use rayon::prelude::*;
use thiserror::Error;

use crate::coding::Symbol;
use crate::decoder::{self, DecodeError};
use crate::protocol::{
    variant_by_name, variant_names, AlgorithmVariant, EngineState, ProtocolError, RelayMode,
    VariantParams,
};
use crate::seeds::{derive_seed, payload_bytes, SeedPurpose, SimRng};
use crate::topology::{default_radius, generate_connected, GeometricGraph, TopologyError};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error("writing {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

/// How decode trials pick the nodes to query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum QueryMode {
    /// Uniform without replacement over all nodes.
    Uniform,
    /// Nodes within `radius` of `(x, y)`; reports partial recovery.
    Region { x: f64, y: f64, radius: f64 },
}

/// Full description of one experiment sweep.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub n: usize,
    /// Field side length L.
    pub side: f64,
    /// Connectivity radius; `None` selects the auto default.
    pub radius: Option<f64>,
    /// Buffer slots per node; `None` selects 10% of n (at least 1).
    pub slots: Option<usize>,
    /// Slot size c in bytes.
    pub symbol_bytes: usize,
    pub variant: AlgorithmVariant,
    pub relay: RelayMode,
    pub query: QueryMode,
    pub eta_grid: Vec<f64>,
    /// Trials per eta value.
    pub trials: usize,
    pub seed: u64,
    /// Reuse one topology for every trial instead of resampling.
    pub fixed_topology: bool,
}

impl ExperimentConfig {
    /// Defaults matching the CLI: auto radius, 10% buffers, 8-byte symbols,
    /// DSA-I, single relay, uniform queries, the 0.1..1.0 eta grid.
    pub fn new(n: usize, side: f64, trials: usize, seed: u64) -> Self {
        ExperimentConfig {
            n,
            side,
            radius: None,
            slots: None,
            symbol_bytes: 8,
            variant: AlgorithmVariant::DsaI { n_known: n },
            relay: RelayMode::Single,
            query: QueryMode::Uniform,
            eta_grid: eta_grid(0.1, 1.0, 0.1).expect("default grid is valid"),
            trials,
            seed,
            fixed_topology: false,
        }
    }

    pub fn effective_radius(&self) -> f64 {
        self.radius
            .unwrap_or_else(|| default_radius(self.n, self.side))
    }

    pub fn effective_slots(&self) -> usize {
        self.slots.unwrap_or((self.n / 10).max(1))
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.n < 2 {
            return Err(HarnessError::Config(format!(
                "n must be at least 2, got {}",
                self.n
            )));
        }
        if self.side.is_nan() || self.side <= 0.0 {
            return Err(HarnessError::Config(format!(
                "area side must be positive, got {}",
                self.side
            )));
        }
        let r = self.effective_radius();
        if r.is_nan() || r <= 0.0 || r > self.side * std::f64::consts::SQRT_2 {
            return Err(HarnessError::Config(format!(
                "radius {r} outside (0, L*sqrt(2)]"
            )));
        }
        if self.effective_slots() == 0 {
            return Err(HarnessError::Config("slots must be at least 1".into()));
        }
        if self.symbol_bytes == 0 {
            return Err(HarnessError::Config(
                "symbol bytes must be at least 1".into(),
            ));
        }
        if self.trials == 0 {
            return Err(HarnessError::Config("trials must be at least 1".into()));
        }
        if self.eta_grid.iter().any(|&e| !(e > 0.0 && e <= 1.0)) {
            return Err(HarnessError::Config("every eta must lie in (0, 1]".into()));
        }
        Ok(())
    }
}

/// Build an eta grid from `min` to `max` in `step` increments, with values
/// rounded to nine decimals so float drift never leaks into output.
pub fn eta_grid(min: f64, max: f64, step: f64) -> Result<Vec<f64>, HarnessError> {
    if step.is_nan() || step <= 0.0 {
        return Err(HarnessError::Config(format!(
            "eta step must be positive, got {step}"
        )));
    }
    if min > max {
        return Err(HarnessError::Config(format!(
            "eta range is empty: {min} > {max}"
        )));
    }
    let mut grid = Vec::new();
    let mut i = 0u32;
    loop {
        let eta = ((min + f64::from(i) * step) * 1e9).round() / 1e9;
        if eta > max + 1e-9 {
            break;
        }
        grid.push(eta);
        i += 1;
    }
    Ok(grid)
}

/// Outcome of one (eta, trial) cell, reproducible from the config alone.
#[derive(Debug, Clone)]
pub struct TrialRecord {
    pub eta: f64,
    pub trial_index: usize,
    pub success: bool,
    pub rank: usize,
    /// Symbols recovered (equals n on success; interesting for region mode).
    pub recovered: usize,
    pub transmissions: u64,
    pub rounds: u64,
    /// Protocol stream seed this trial ran under.
    pub seed_used: u64,
    pub cap_hit: bool,
    pub mean_degree: f64,
    pub chain_mean: f64,
}

/// One aggregated row of the rho-versus-eta curve.
#[derive(Debug, Clone)]
pub struct EtaRow {
    pub eta: f64,
    pub rho: f64,
    /// Normal-approximation 95% half width.
    pub ci95: f64,
    pub mean_transmissions: f64,
    pub mean_rounds: f64,
}

impl EtaRow {
    /// 95% interval around rho, clipped to the probability range.
    pub fn ci_bounds(&self) -> (f64, f64) {
        (
            (self.rho - self.ci95).max(0.0),
            (self.rho + self.ci95).min(1.0),
        )
    }
}

/// Everything run_experiment produces.
#[derive(Debug, Clone)]
pub struct ExperimentTable {
    pub rows: Vec<EtaRow>,
    pub records: Vec<TrialRecord>,
    pub n: usize,
    pub variant_name: &'static str,
    pub seed: u64,
}

/// Run one (eta index, trial index) cell of the sweep.
///
/// A fresh topology and protocol stream are derived for the cell (or the
/// shared topology when `fixed_topology` is set), all sources flood, the
/// engine runs to quiescence, conservation is audited, and one decode is
/// attempted at this cell's eta.
pub fn run_trial(
    config: &ExperimentConfig,
    eta_index: usize,
    trial_index: usize,
) -> Result<TrialRecord, HarnessError> {
    let eta = config.eta_grid[eta_index];
    let n = config.n;
    let (topo_eta, topo_trial) = if config.fixed_topology {
        (0, 0)
    } else {
        (eta_index as u64, trial_index as u64)
    };
    let topo_seed = derive_seed(
        config.seed,
        SeedPurpose::Topology,
        n as u64,
        topo_eta,
        topo_trial,
    );
    let graph = generate_connected(n, config.side, config.effective_radius(), topo_seed)?;
    let mean_degree = graph.mean_degree();

    let symbols: Vec<Symbol> = (0..n)
        .map(|u| {
            Symbol::new(payload_bytes(
                config.seed,
                n as u64,
                u as u64,
                config.symbol_bytes,
            ))
        })
        .collect();
    let proto_seed = derive_seed(
        config.seed,
        SeedPurpose::Protocol,
        n as u64,
        eta_index as u64,
        trial_index as u64,
    );
    let mut engine = EngineState::new(
        graph,
        config.variant,
        config.relay,
        config.effective_slots(),
        symbols,
        proto_seed,
    )?;
    for u in 0..n {
        engine.initial_flood(u as u32)?;
    }
    let stats = engine.run_dissemination()?;
    engine.audit_conservation()?;

    let query_seed = derive_seed(
        config.seed,
        SeedPurpose::Query,
        n as u64,
        eta_index as u64,
        trial_index as u64,
    );
    let mut query_rng = SimRng::new(query_seed);
    let outcome = match config.query {
        QueryMode::Uniform => decoder::decode_trial(&engine, eta, &mut query_rng)?,
        QueryMode::Region { x, y, radius } => {
            let h = ((eta * n as f64).ceil() as usize).clamp(1, n);
            let equations = decoder::query_region(&engine, (x, y), radius, h, &mut query_rng)?;
            decoder::gf2_solve(&equations, n)?
        }
    };

    Ok(TrialRecord {
        eta,
        trial_index,
        success: outcome.success,
        rank: outcome.rank,
        recovered: outcome.recovered.len(),
        transmissions: stats.transmissions,
        rounds: stats.rounds,
        seed_used: proto_seed,
        cap_hit: stats.cap_hit,
        mean_degree,
        chain_mean: stats.chain_mean(),
    })
}

/// Sweep the full eta grid, `trials` independent trials per value.
///
/// Trials run in parallel on the current rayon pool; records are keyed by
/// (eta index, trial index), so scheduling cannot affect any result.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentTable, HarnessError> {
    config.validate()?;
    let cells: Vec<(usize, usize)> = (0..config.eta_grid.len())
        .flat_map(|e| (0..config.trials).map(move |t| (e, t)))
        .collect();
    let records: Vec<TrialRecord> = cells
        .par_iter()
        .map(|&(e, t)| run_trial(config, e, t))
        .collect::<Result<_, _>>()?;

    let mut rows = Vec::with_capacity(config.eta_grid.len());
    for (e, &eta) in config.eta_grid.iter().enumerate() {
        let slice = &records[e * config.trials..(e + 1) * config.trials];
        let successes = slice.iter().filter(|r| r.success).count();
        let rho = successes as f64 / config.trials as f64;
        let ci95 = 1.96 * (rho * (1.0 - rho) / config.trials as f64).sqrt();
        let mean_transmissions =
            slice.iter().map(|r| r.transmissions as f64).sum::<f64>() / config.trials as f64;
        let mean_rounds = slice.iter().map(|r| r.rounds as f64).sum::<f64>() / config.trials as f64;
        rows.push(EtaRow {
            eta,
            rho,
            ci95,
            mean_transmissions,
            mean_rounds,
        });
    }
    Ok(ExperimentTable {
        rows,
        records,
        n: config.n,
        variant_name: config.variant.name(),
        seed: config.seed,
    })
}

/// Render the table as CSV. Fixed decimal places throughout, so equal
/// configs produce byte-identical files.
pub fn csv_string(table: &ExperimentTable) -> String {
    let mut out = String::from("eta,rho,ci95,mean_transmissions,mean_rounds,n,variant,seed\n");
    for row in &table.rows {
        let _ = writeln!(
            out,
            "{:.4},{:.4},{:.4},{:.2},{:.2},{},{},{}",
            row.eta,
            row.rho,
            row.ci95,
            row.mean_transmissions,
            row.mean_rounds,
            table.n,
            table.variant_name,
            table.seed
        );
    }
    out
}

pub fn emit_csv(table: &ExperimentTable, path: &Path) -> Result<(), HarnessError> {
    fs::write(path, csv_string(table)).map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// First eta on the grid whose measured rho reaches 0.99.
pub fn smallest_reliable_eta(rows: &[EtaRow]) -> Option<f64> {
    rows.iter().find(|r| r.rho >= 0.99).map(|r| r.eta)
}

/// Check that rho never drops by more than three combined standard errors
/// between consecutive grid points. Returns the first violation.
pub fn monotone_violation(rows: &[EtaRow], trials: usize) -> Option<String> {
    for pair in rows.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        let se = |rho: f64| (rho * (1.0 - rho) / trials as f64).sqrt();
        let tolerance = 3.0 * (se(a.rho).powi(2) + se(b.rho).powi(2)).sqrt();
        if b.rho < a.rho - tolerance {
            return Some(format!(
                "rho({:.4}) = {:.4} -> rho({:.4}) = {:.4} drops more than {tolerance:.4}",
                a.eta, a.rho, b.eta, b.rho
            ));
        }
    }
    None
}

/// Transmission totals across network sizes at fixed node density.
#[derive(Debug, Clone)]
pub struct ScalingPoint {
    pub n: usize,
    pub seed_index: usize,
    pub transmissions: u64,
}

/// Measure dissemination cost at each `n`, holding node density fixed
/// (`L = sqrt(n / density)`), over `seeds` independent topologies. With
/// `single_source` only node 0 floods; otherwise every node does.
pub fn transmission_scaling(
    ns: &[usize],
    seeds: usize,
    density: f64,
    single_source: bool,
    master: u64,
) -> Result<Vec<ScalingPoint>, HarnessError> {
    let cells: Vec<(usize, usize)> = ns
        .iter()
        .flat_map(|&n| (0..seeds).map(move |s| (n, s)))
        .collect();
    cells
        .par_iter()
        .map(|&(n, seed_index)| {
            let side = (n as f64 / density).sqrt();
            let topo_seed = derive_seed(
                master,
                SeedPurpose::Topology,
                n as u64,
                0,
                seed_index as u64,
            );
            let graph = generate_connected(n, side, default_radius(n, side), topo_seed)?;
            let symbols: Vec<Symbol> = (0..n)
                .map(|u| Symbol::new(payload_bytes(master, n as u64, u as u64, 8)))
                .collect();
            let proto_seed = derive_seed(
                master,
                SeedPurpose::Protocol,
                n as u64,
                0,
                seed_index as u64,
            );
            let mut engine = EngineState::new(
                graph,
                AlgorithmVariant::DsaI { n_known: n },
                RelayMode::Single,
                (n / 10).max(1),
                symbols,
                proto_seed,
            )?;
            if single_source {
                engine.initial_flood(0)?;
            } else {
                for u in 0..n {
                    engine.initial_flood(u as u32)?;
                }
            }
            let stats = engine.run_dissemination()?;
            engine.audit_conservation()?;
            Ok(ScalingPoint {
                n,
                seed_index,
                transmissions: stats.transmissions,
            })
        })
        .collect()
}

/// Least-squares slope of `ln(transmissions)` against `ln(n)`.
pub fn fit_power_law(points: &[ScalingPoint]) -> f64 {
    let xs: Vec<f64> = points.iter().map(|p| (p.n as f64).ln()).collect();
    let ys: Vec<f64> = points
        .iter()
        .map(|p| (p.transmissions.max(1) as f64).ln())
        .collect();
    let mx = xs.iter().sum::<f64>() / xs.len() as f64;
    let my = ys.iter().sum::<f64>() / ys.len() as f64;
    let cov: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let var: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    cov / var
}

/// Human-readable report: config echo, the rho curve, the measured reliable
/// eta, and per-run cost diagnostics normalized against the expected growth
/// rates (transmissions per source against n, relay chain against n/mu).
pub fn summary(config: &ExperimentConfig, table: &ExperimentTable) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "floodstore experiment summary");
    let variant_desc = match config.variant {
        AlgorithmVariant::DsaI { .. } => "dsa1".to_string(),
        AlgorithmVariant::DsaII { c_u } => format!("dsa2 (c_u = {c_u})"),
    };
    let _ = writeln!(out, "  variant: {variant_desc}");
    let _ = writeln!(
        out,
        "  n = {}, field = [0,{}]^2, radius = {:.6}{}",
        config.n,
        config.side,
        config.effective_radius(),
        if config.radius.is_none() {
            " (auto)"
        } else {
            ""
        }
    );
    let _ = writeln!(
        out,
        "  slots m = {}, symbol bytes = {}, relay = {}, topology = {}",
        config.effective_slots(),
        config.symbol_bytes,
        config.relay.name(),
        if config.fixed_topology {
            "fixed"
        } else {
            "fresh per trial"
        }
    );
    match config.query {
        QueryMode::Uniform => {
            let _ = writeln!(out, "  query = uniform");
        }
        QueryMode::Region { x, y, radius } => {
            let _ = writeln!(out, "  query = region({x}, {y}, r={radius})");
        }
    }
    let _ = writeln!(
        out,
        "  trials per eta = {}, master seed = {}",
        config.trials, config.seed
    );
    let _ = writeln!(out);
    let _ = writeln!(out, "  eta     rho     ci95    mean_tx      mean_rounds");
    for row in &table.rows {
        let _ = writeln!(
            out,
            "  {:<7.4} {:<7.4} {:<7.4} {:<12.2} {:.2}",
            row.eta, row.rho, row.ci95, row.mean_transmissions, row.mean_rounds
        );
    }
    let _ = writeln!(out);
    match smallest_reliable_eta(&table.rows) {
        Some(eta) => {
            let _ = writeln!(out, "  smallest eta with rho >= 0.99: {eta:.4}");
        }
        None => {
            let _ = writeln!(out, "  smallest eta with rho >= 0.99: none within grid");
        }
    }
    if let QueryMode::Region { .. } = config.query {
        let mean_recovered = table
            .records
            .iter()
            .map(|r| r.recovered as f64)
            .sum::<f64>()
            / table.records.len() as f64;
        let _ = writeln!(
            out,
            "  mean symbols recovered per regional query: {mean_recovered:.2} of {}",
            table.n
        );
    }
    if !table.records.is_empty() {
        let count = table.records.len() as f64;
        let mu = table.records.iter().map(|r| r.mean_degree).sum::<f64>() / count;
        let mean_tx = table
            .records
            .iter()
            .map(|r| r.transmissions as f64)
            .sum::<f64>()
            / count;
        let chain = table.records.iter().map(|r| r.chain_mean).sum::<f64>() / count;
        let n = table.n as f64;
        let _ = writeln!(out, "  diagnostics:");
        let _ = writeln!(out, "    mean degree mu = {mu:.2}");
        let _ = writeln!(
            out,
            "    total transmissions = {mean_tx:.2} ({:.2} per source; per-source/n = {:.3})",
            mean_tx / n,
            mean_tx / (n * n)
        );
        let _ = writeln!(
            out,
            "    mean relay chain = {chain:.2} hops (n/mu = {:.2}, ratio {:.3})",
            n / mu,
            chain / (n / mu)
        );
        if table.records.iter().any(|r| r.cap_hit) {
            let _ = writeln!(out, "    WARNING: some runs hit the round cap");
        }
    }
    out
}

#[derive(Parser, Debug)]
#[command(
    name = "floodstore",
    about = "Flooding-based distributed storage simulator for sensor networks",
    disable_version_flag = true
)]
struct Cli {
    /// Number of sensor nodes.
    #[arg(long)]
    n: usize,
    /// Field side length L; nodes land uniformly on [0, L]^2.
    #[arg(long, default_value_t = 2.0)]
    area: f64,
    /// Connectivity radius, or "auto" for L*sqrt(2 ln n / n).
    #[arg(long, default_value = "auto")]
    radius: String,
    /// Buffer slots per node; defaults to 10% of n (at least 1).
    #[arg(long)]
    slots: Option<usize>,
    /// Slot/symbol size in bytes.
    #[arg(long, default_value_t = 8)]
    symbol_bytes: usize,
    /// Dissemination variant: dsa1 or dsa2.
    #[arg(long, default_value = "dsa1")]
    variant: String,
    /// DSA-II counter scale c_u.
    #[arg(long, default_value_t = 2.0)]
    cu: f64,
    /// Relay strategy: single or all-unseen.
    #[arg(long, default_value = "single")]
    relay: String,
    /// Smallest decoding ratio on the sweep grid.
    #[arg(long, default_value_t = 0.1)]
    eta_min: f64,
    /// Largest decoding ratio on the sweep grid.
    #[arg(long, default_value_t = 1.0)]
    eta_max: f64,
    /// Grid increment between eta values.
    #[arg(long, default_value_t = 0.1)]
    eta_step: f64,
    /// Independent trials per eta.
    #[arg(long, default_value_t = 100)]
    trials: usize,
    /// Master seed.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// CSV output path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Dump the first trial's topology to this path.
    #[arg(long)]
    topology_dump: Option<PathBuf>,
    /// Reuse one topology across all trials.
    #[arg(long)]
    fixed_topology: bool,
    /// Node selection: "uniform" or "region:X,Y,R".
    #[arg(long, default_value = "uniform")]
    query: String,
}

fn config_from_cli(cli: &Cli) -> Result<ExperimentConfig, String> {
    if cli.n < 2 {
        return Err(format!("--n must be at least 2 (got {})", cli.n));
    }
    if cli.area.is_nan() || cli.area <= 0.0 {
        return Err(format!("--area must be positive (got {})", cli.area));
    }
    let radius = match cli.radius.as_str() {
        "auto" => None,
        raw => Some(
            raw.parse::<f64>()
                .map_err(|_| format!("--radius must be a number or \"auto\" (got {raw})"))?,
        ),
    };
    if let Some(r) = radius {
        if !(r > 0.0 && r <= cli.area * std::f64::consts::SQRT_2) {
            return Err(format!("--radius must lie in (0, area*sqrt(2)] (got {r})"));
        }
    }
    if cli.symbol_bytes == 0 {
        return Err("--symbol-bytes must be at least 1".into());
    }
    if cli.slots == Some(0) {
        return Err("--slots must be at least 1".into());
    }
    if cli.trials == 0 {
        return Err("--trials must be at least 1".into());
    }
    let params = VariantParams {
        n: cli.n,
        c_u: cli.cu,
    };
    let variant = variant_by_name(&cli.variant, &params).ok_or_else(|| {
        format!(
            "--variant must be one of {:?} (got {})",
            variant_names(),
            cli.variant
        )
    })?;
    if let AlgorithmVariant::DsaII { c_u } = variant {
        if c_u.is_nan() || c_u <= 0.0 {
            return Err(format!("--cu must be positive (got {c_u})"));
        }
    }
    let relay = match cli.relay.as_str() {
        "single" => RelayMode::Single,
        "all-unseen" => RelayMode::AllUnseen,
        other => {
            return Err(format!(
                "--relay must be single or all-unseen (got {other})"
            ))
        }
    };
    let query = parse_query_mode(&cli.query).map_err(|e| format!("--query {e}"))?;
    let grid = eta_grid(cli.eta_min, cli.eta_max, cli.eta_step).map_err(|e| match e {
        HarnessError::Config(msg) => format!("--eta-min/--eta-max/--eta-step: {msg}"),
        other => other.to_string(),
    })?;
    if grid.iter().any(|&e| !(e > 0.0 && e <= 1.0)) {
        return Err("--eta-min/--eta-max: every eta must lie in (0, 1]".into());
    }

    Ok(ExperimentConfig {
        n: cli.n,
        side: cli.area,
        radius,
        slots: cli.slots,
        symbol_bytes: cli.symbol_bytes,
        variant,
        relay,
        query,
        eta_grid: grid,
        trials: cli.trials,
        seed: cli.seed,
        fixed_topology: cli.fixed_topology,
    })
}

fn parse_query_mode(raw: &str) -> Result<QueryMode, String> {
    if raw == "uniform" {
        return Ok(QueryMode::Uniform);
    }
    if let Some(coords) = raw.strip_prefix("region:") {
        let parts: Vec<&str> = coords.split(',').collect();
        if parts.len() != 3 {
            return Err(format!("region wants X,Y,R (got {coords})"));
        }
        let nums: Result<Vec<f64>, _> = parts.iter().map(|p| p.trim().parse::<f64>()).collect();
        let nums =
            nums.map_err(|_| format!("region coordinates must be numbers (got {coords})"))?;
        if nums[2].is_nan() || nums[2] <= 0.0 {
            return Err(format!("region radius must be positive (got {})", nums[2]));
        }
        return Ok(QueryMode::Region {
            x: nums[0],
            y: nums[1],
            radius: nums[2],
        });
    }
    Err(format!("must be uniform or region:X,Y,R (got {raw})"))
}

/// Honor the FLOODSTORE_THREADS cap, if set and parseable.
fn configure_threads() {
    if let Ok(raw) = std::env::var("FLOODSTORE_THREADS") {
        if let Ok(threads) = raw.parse::<usize>() {
            if threads >= 1 {
                // Ignore the error when a global pool already exists.
                let _ = rayon::ThreadPoolBuilder::new()
                    .num_threads(threads)
                    .build_global();
            }
        }
    }
}

/// Entry point behind `main`: parse, run, write, report.
///
/// Exit codes: 0 success, 2 config/usage errors, 1 runtime failures.
pub fn cli_main<I>(args: I) -> i32
where
    I: IntoIterator,
    I::Item: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(err) => {
            let code = if err.use_stderr() { 2 } else { 0 };
            let _ = err.print();
            return code;
        }
    };
    let config = match config_from_cli(&cli) {
        Ok(config) => config,
        Err(msg) => {
            eprintln!("error: {msg}");
            return 2;
        }
    };
    configure_threads();

    if let Some(path) = &cli.topology_dump {
        match first_topology(&config) {
            Ok(graph) => {
                if let Err(err) = graph.dump_to_file(path) {
                    eprintln!("error: dumping topology to {}: {err}", path.display());
                    return 1;
                }
            }
            Err(err) => {
                eprintln!("error: {err}");
                return 1;
            }
        }
    }

    let table = match run_experiment(&config) {
        Ok(table) => table,
        Err(err) => {
            eprintln!("error: {err}");
            return 1;
        }
    };
    if let Some(path) = &cli.out {
        if let Err(err) = emit_csv(&table, path) {
            eprintln!("error: {err}");
            return 1;
        }
    }
    print!("{}", summary(&config, &table));
    0
}

/// The topology trial (0, 0) runs on — the shared one under fixed topology.
pub fn first_topology(config: &ExperimentConfig) -> Result<GeometricGraph, HarnessError> {
    let topo_seed = derive_seed(config.seed, SeedPurpose::Topology, config.n as u64, 0, 0);
    Ok(generate_connected(
        config.n,
        config.side,
        config.effective_radius(),
        topo_seed,
    )?)
}
