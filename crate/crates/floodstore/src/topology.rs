//! Random geometric topology of the sensor field.
//!
//! Nodes are dropped uniformly at random on the square `[0, L]^2` and two
//! nodes are linked exactly when their Euclidean distance is positive and at
//! most the connectivity radius `r`. Adjacency is decided on squared
//! distances so no square root ever enters the edge rule.

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::seeds::{next_attempt_seed, SimRng};

/// Dense node identifier in `0..n`.
pub type NodeId = u32;

/// Attempts made before giving up on finding a connected topology.
pub const CONNECT_ATTEMPTS: u32 = 100;

#[derive(Debug, Error)]
pub enum TopologyError {
    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("node id {id} out of range for graph with {n} nodes")]
    NodeOutOfRange { id: NodeId, n: usize },
    #[error("no connected topology within {attempts} attempts (last sub-seed {last_seed})")]
    ConnectivityExhausted { attempts: u32, last_seed: u64 },
    #[error("topology dump line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("topology dump edge set does not match positions: {reason}")]
    Inconsistent { reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A point of the deployment field, in the same units as `L`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn dist_sq(&self, other: &Point) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }
}

/// Immutable random geometric graph.
///
/// Invariants held after construction: adjacency lists are sorted, duplicate
/// free and symmetric, there are no self loops, and `(u, v)` is an edge
/// exactly when `0 < d(u, v) <= r`.
#[derive(Debug, Clone)]
pub struct GeometricGraph {
    n: usize,
    side: f64,
    radius: f64,
    seed: u64,
    positions: Vec<Point>,
    adjacency: Vec<Vec<NodeId>>,
}

/// Connectivity radius used when the caller asks for `auto`:
/// `L * sqrt(2 ln n / n)`, the usual threshold scaling that keeps uniform
/// deployments connected with high probability.
pub fn default_radius(n: usize, side: f64) -> f64 {
    side * (2.0 * (n as f64).ln() / n as f64).sqrt()
}

fn validate_params(n: usize, side: f64, radius: f64) -> Result<(), TopologyError> {
    if n < 2 {
        return Err(TopologyError::InvalidParameter {
            name: "n",
            reason: format!("need at least 2 nodes, got {n}"),
        });
    }
    if side.is_nan() || side <= 0.0 {
        return Err(TopologyError::InvalidParameter {
            name: "L",
            reason: format!("field side must be positive, got {side}"),
        });
    }
    if radius.is_nan() || radius <= 0.0 || radius > side * std::f64::consts::SQRT_2 {
        return Err(TopologyError::InvalidParameter {
            name: "r",
            reason: format!("radius must satisfy 0 < r <= L*sqrt(2), got {radius}"),
        });
    }
    Ok(())
}

/// Generate one random geometric graph. Deterministic for a fixed seed; the
/// graph may or may not be connected.
pub fn generate_topology(
    n: usize,
    side: f64,
    radius: f64,
    seed: u64,
) -> Result<GeometricGraph, TopologyError> {
    validate_params(n, side, radius)?;
    let mut rng = SimRng::new(seed);
    let positions: Vec<Point> = (0..n)
        .map(|_| {
            let x = rng.unit() * side;
            let y = rng.unit() * side;
            Point { x, y }
        })
        .collect();
    Ok(GeometricGraph::from_positions_unchecked(
        side, radius, seed, positions,
    ))
}

/// Generate a *connected* random geometric graph.
///
/// A disconnected sample makes full recovery impossible, so it is discarded
/// and the next SplitMix64 successor seed is tried, up to
/// [`CONNECT_ATTEMPTS`] times.
pub fn generate_connected(
    n: usize,
    side: f64,
    radius: f64,
    seed: u64,
) -> Result<GeometricGraph, TopologyError> {
    let mut attempt_seed = seed;
    for _ in 0..CONNECT_ATTEMPTS {
        let graph = generate_topology(n, side, radius, attempt_seed)?;
        if graph.is_connected() {
            return Ok(graph);
        }
        attempt_seed = next_attempt_seed(attempt_seed);
    }
    Err(TopologyError::ConnectivityExhausted {
        attempts: CONNECT_ATTEMPTS,
        last_seed: attempt_seed,
    })
}

impl GeometricGraph {
    /// Build a graph from explicit positions, applying the distance rule.
    /// Useful for constructing exact scenarios in tests and tools.
    pub fn from_positions(
        side: f64,
        radius: f64,
        positions: Vec<Point>,
    ) -> Result<Self, TopologyError> {
        validate_params(positions.len(), side, radius)?;
        for (i, p) in positions.iter().enumerate() {
            if !(0.0..=side).contains(&p.x) || !(0.0..=side).contains(&p.y) {
                return Err(TopologyError::InvalidParameter {
                    name: "positions",
                    reason: format!("node {i} at ({}, {}) outside [0, {side}]^2", p.x, p.y),
                });
            }
        }
        Ok(Self::from_positions_unchecked(side, radius, 0, positions))
    }

    fn from_positions_unchecked(side: f64, radius: f64, seed: u64, positions: Vec<Point>) -> Self {
        let n = positions.len();
        let r_sq = radius * radius;
        let mut adjacency = vec![Vec::new(); n];
        for u in 0..n {
            for v in (u + 1)..n {
                let d_sq = positions[u].dist_sq(&positions[v]);
                if d_sq > 0.0 && d_sq <= r_sq {
                    adjacency[u].push(v as NodeId);
                    adjacency[v].push(u as NodeId);
                }
            }
        }
        // Lists are built in ascending v order for the upper triangle but the
        // lower-triangle pushes arrive out of order.
        for list in &mut adjacency {
            list.sort_unstable();
        }
        GeometricGraph {
            n,
            side,
            radius,
            seed,
            positions,
            adjacency,
        }
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn side(&self) -> f64 {
        self.side
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// Seed the positions were drawn from (0 for hand-built graphs).
    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn position(&self, u: NodeId) -> Result<Point, TopologyError> {
        self.check(u)?;
        Ok(self.positions[u as usize])
    }

    pub fn neighbors(&self, u: NodeId) -> &[NodeId] {
        &self.adjacency[u as usize]
    }

    /// Node degree `d(u)`.
    pub fn degree(&self, u: NodeId) -> Result<usize, TopologyError> {
        self.check(u)?;
        Ok(self.adjacency[u as usize].len())
    }

    /// Mean degree: `(1/n) * sum_u d(u)`.
    pub fn mean_degree(&self) -> f64 {
        let total: usize = self.adjacency.iter().map(Vec::len).sum();
        total as f64 / self.n as f64
    }

    /// Breadth-first reachability of every node from node 0.
    pub fn is_connected(&self) -> bool {
        let mut visited = vec![false; self.n];
        let mut queue = VecDeque::new();
        visited[0] = true;
        queue.push_back(0u32);
        let mut reached = 1;
        while let Some(u) = queue.pop_front() {
            for &v in self.neighbors(u) {
                if !visited[v as usize] {
                    visited[v as usize] = true;
                    reached += 1;
                    queue.push_back(v);
                }
            }
        }
        reached == self.n
    }

    pub fn has_edge(&self, u: NodeId, v: NodeId) -> bool {
        self.adjacency[u as usize].binary_search(&v).is_ok()
    }

    fn check(&self, u: NodeId) -> Result<(), TopologyError> {
        if (u as usize) < self.n {
            Ok(())
        } else {
            Err(TopologyError::NodeOutOfRange { id: u, n: self.n })
        }
    }

    /// Line-oriented text dump: `n L r seed` header, one `id x y` line per
    /// node, then one `u v` line per edge with `u < v`. Floats are printed as
    /// shortest round-trip decimals, so a load reproduces the exact bits.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{} {} {} {}",
            self.n, self.side, self.radius, self.seed
        );
        for (id, p) in self.positions.iter().enumerate() {
            let _ = writeln!(out, "{} {} {}", id, p.x, p.y);
        }
        for u in 0..self.n {
            for &v in &self.adjacency[u] {
                if (u as NodeId) < v {
                    let _ = writeln!(out, "{} {}", u, v);
                }
            }
        }
        out
    }

    pub fn dump_to_file(&self, path: &Path) -> Result<(), TopologyError> {
        fs::write(path, self.dump())?;
        Ok(())
    }

    /// Parse a dump produced by [`GeometricGraph::dump`] and verify that the
    /// edge list matches the distance rule for the stored positions.
    pub fn load(text: &str) -> Result<Self, TopologyError> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or(TopologyError::Parse {
            line: 1,
            reason: "missing header".into(),
        })?;
        let mut fields = header.split_whitespace();
        let n: usize = parse_field(&mut fields, 1, "n")?;
        let side: f64 = parse_field(&mut fields, 1, "L")?;
        let radius: f64 = parse_field(&mut fields, 1, "r")?;
        let seed: u64 = parse_field(&mut fields, 1, "seed")?;

        let mut positions = Vec::with_capacity(n);
        for expect in 0..n {
            let (idx, line) = lines.next().ok_or(TopologyError::Parse {
                line: expect + 2,
                reason: "missing node line".into(),
            })?;
            let mut fields = line.split_whitespace();
            let id: usize = parse_field(&mut fields, idx + 1, "id")?;
            if id != expect {
                return Err(TopologyError::Parse {
                    line: idx + 1,
                    reason: format!("expected node {expect}, got {id}"),
                });
            }
            let x: f64 = parse_field(&mut fields, idx + 1, "x")?;
            let y: f64 = parse_field(&mut fields, idx + 1, "y")?;
            positions.push(Point { x, y });
        }

        let mut adjacency = vec![Vec::new(); n];
        for (idx, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split_whitespace();
            let u: usize = parse_field(&mut fields, idx + 1, "u")?;
            let v: usize = parse_field(&mut fields, idx + 1, "v")?;
            if u >= v || v >= n {
                return Err(TopologyError::Parse {
                    line: idx + 1,
                    reason: format!("bad edge {u} {v}"),
                });
            }
            adjacency[u].push(v as NodeId);
            adjacency[v].push(u as NodeId);
        }
        for list in &mut adjacency {
            list.sort_unstable();
            let before = list.len();
            list.dedup();
            if list.len() != before {
                return Err(TopologyError::Inconsistent {
                    reason: "duplicate edge".into(),
                });
            }
        }

        let graph = GeometricGraph {
            n,
            side,
            radius,
            seed,
            positions,
            adjacency,
        };
        graph.verify_radius_rule()?;
        Ok(graph)
    }

    pub fn load_from_file(path: &Path) -> Result<Self, TopologyError> {
        let text = fs::read_to_string(path)?;
        Self::load(&text)
    }

    /// Exhaustive O(n^2) check that the edge set equals the distance rule.
    pub fn verify_radius_rule(&self) -> Result<(), TopologyError> {
        let r_sq = self.radius * self.radius;
        for u in 0..self.n {
            for v in (u + 1)..self.n {
                let d_sq = self.positions[u].dist_sq(&self.positions[v]);
                let should = d_sq > 0.0 && d_sq <= r_sq;
                let has = self.has_edge(u as NodeId, v as NodeId);
                if should != has {
                    return Err(TopologyError::Inconsistent {
                        reason: format!(
                            "pair ({u}, {v}) at squared distance {d_sq} vs r^2 {r_sq}: edge={has}"
                        ),
                    });
                }
            }
        }
        Ok(())
    }
}

fn parse_field<'a, T: std::str::FromStr>(
    fields: &mut impl Iterator<Item = &'a str>,
    line: usize,
    name: &str,
) -> Result<T, TopologyError> {
    let raw = fields.next().ok_or_else(|| TopologyError::Parse {
        line,
        reason: format!("missing field {name}"),
    })?;
    raw.parse().map_err(|_| TopologyError::Parse {
        line,
        reason: format!("unparseable {name}: {raw}"),
    })
}
