//! Dissemination variants behind a common trait.
//!
//! A [`CounterPolicy`] decides two things for one variant of the protocol:
//! the hop budget a source writes into its packets, and the distribution size
//! `k` from which each node draws its acceptance degree. Variants register by
//! name in [`VARIANTS`] and are selected at runtime from config or the CLI.

use crate::topology::{GeometricGraph, NodeId};

use super::ProtocolError;

/// Runtime-selectable dissemination variant.
pub trait CounterPolicy: Send + Sync {
    fn name(&self) -> &'static str;

    /// Relay budget written into a fresh packet from `source`.
    fn initial_counter(&self, graph: &GeometricGraph, source: NodeId)
        -> Result<u64, ProtocolError>;

    /// Size of the Ideal Soliton distribution a node draws its acceptance
    /// degree from.
    fn acceptance_k(&self, graph: &GeometricGraph, node: NodeId) -> Result<usize, ProtocolError>;
}

/// Variant configuration as it appears in experiment configs and CSV rows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AlgorithmVariant {
    /// Every node knows the network size; budgets are `floor(n / d(u))`.
    DsaI { n_known: usize },
    /// No global knowledge; budgets are inferred from two-hop degrees and
    /// scaled by `c_u`.
    DsaII { c_u: f64 },
}

impl AlgorithmVariant {
    pub fn name(&self) -> &'static str {
        match self {
            AlgorithmVariant::DsaI { .. } => "dsa1",
            AlgorithmVariant::DsaII { .. } => "dsa2",
        }
    }

    /// Instantiate the policy, validating the variant's parameters against
    /// the graph it will run on.
    pub fn build_policy(
        &self,
        graph: &GeometricGraph,
    ) -> Result<Box<dyn CounterPolicy>, ProtocolError> {
        match *self {
            AlgorithmVariant::DsaI { n_known } => {
                if n_known != graph.node_count() {
                    return Err(ProtocolError::VariantMismatch {
                        n_known,
                        n: graph.node_count(),
                    });
                }
                Ok(Box::new(GlobalCountPolicy { n_known }))
            }
            AlgorithmVariant::DsaII { c_u } => {
                if c_u.is_nan() || c_u <= 0.0 {
                    return Err(ProtocolError::InvalidScale(c_u));
                }
                Ok(Box::new(InferredCountPolicy { c_u }))
            }
        }
    }
}

/// Parameters a registry entry may draw on when building a variant.
#[derive(Debug, Clone, Copy)]
pub struct VariantParams {
    /// Actual node count of the graph the variant will run on.
    pub n: usize,
    /// DSA-II counter scale.
    pub c_u: f64,
}

pub struct VariantEntry {
    pub name: &'static str,
    pub summary: &'static str,
    build: fn(&VariantParams) -> AlgorithmVariant,
}

/// All registered variants, in CLI presentation order.
pub static VARIANTS: &[VariantEntry] = &[
    VariantEntry {
        name: "dsa1",
        summary: "network size known everywhere, counter floor(n/d)",
        build: |p| AlgorithmVariant::DsaI { n_known: p.n },
    },
    VariantEntry {
        name: "dsa2",
        summary: "counter inferred from two-hop degrees, scaled by c_u",
        build: |p| AlgorithmVariant::DsaII { c_u: p.c_u },
    },
];

pub fn variant_names() -> Vec<&'static str> {
    VARIANTS.iter().map(|e| e.name).collect()
}

pub fn variant_by_name(name: &str, params: &VariantParams) -> Option<AlgorithmVariant> {
    VARIANTS
        .iter()
        .find(|e| e.name == name)
        .map(|e| (e.build)(params))
}

/// DSA-I counter: `floor(n / d)`.
pub fn init_counter_dsa1(n: usize, degree: usize) -> Result<u64, ProtocolError> {
    if degree == 0 {
        return Err(ProtocolError::ZeroDegree);
    }
    Ok((n / degree) as u64)
}

/// `b_v`: how many of `v`'s neighbors lie outside `N(u) ∪ {u}`.
pub fn external_degree(graph: &GeometricGraph, u: NodeId, v: NodeId) -> usize {
    graph
        .neighbors(v)
        .iter()
        .filter(|&&w| w != u && !graph.has_edge(u, w))
        .count()
}

/// Total two-hop reach seen from `u`: the sum of `b_v` over `u`'s neighbors.
pub fn two_hop_sum(graph: &GeometricGraph, u: NodeId) -> Result<u64, ProtocolError> {
    if graph.degree(u)? == 0 {
        return Err(ProtocolError::IsolatedNode(u));
    }
    Ok(graph
        .neighbors(u)
        .iter()
        .map(|&v| external_degree(graph, u, v) as u64)
        .sum())
}

/// DSA-II inference-phase counter:
/// `floor(c_u * floor(sum_{v in N(u)} b_v / d(u)))`.
pub fn infer_counter_dsa2(
    graph: &GeometricGraph,
    u: NodeId,
    c_u: f64,
) -> Result<u64, ProtocolError> {
    if c_u.is_nan() || c_u <= 0.0 {
        return Err(ProtocolError::InvalidScale(c_u));
    }
    let degree = graph.degree(u)?;
    if degree == 0 {
        return Err(ProtocolError::IsolatedNode(u));
    }
    let mean_floor = two_hop_sum(graph, u)? / degree as u64;
    Ok((c_u * mean_floor as f64).floor() as u64)
}

struct GlobalCountPolicy {
    n_known: usize,
}

impl CounterPolicy for GlobalCountPolicy {
    fn name(&self) -> &'static str {
        "dsa1"
    }

    fn initial_counter(
        &self,
        graph: &GeometricGraph,
        source: NodeId,
    ) -> Result<u64, ProtocolError> {
        init_counter_dsa1(self.n_known, graph.degree(source)?)
    }

    fn acceptance_k(&self, _graph: &GeometricGraph, _node: NodeId) -> Result<usize, ProtocolError> {
        Ok(self.n_known)
    }
}

struct InferredCountPolicy {
    c_u: f64,
}

impl CounterPolicy for InferredCountPolicy {
    fn name(&self) -> &'static str {
        "dsa2"
    }

    fn initial_counter(
        &self,
        graph: &GeometricGraph,
        source: NodeId,
    ) -> Result<u64, ProtocolError> {
        infer_counter_dsa2(graph, source, self.c_u)
    }

    /// Without `n`, the widest locally observable population is the measured
    /// two-hop count; the +1 keeps the distribution nonempty on leaf nodes.
    fn acceptance_k(&self, graph: &GeometricGraph, node: NodeId) -> Result<usize, ProtocolError> {
        Ok(1 + two_hop_sum(graph, node)? as usize)
    }
}
