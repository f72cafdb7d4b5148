//! The dissemination engine: per-node protocol state, the synchronous round
//! loop, and the data-update wave.
//!
//! A run proceeds in three phases. Every source first floods its packet to
//! all direct neighbors, which store it unconditionally. Relaying then runs
//! in synchronous rounds: each node holding packets forwards one per round to
//! a uniformly random neighbor, and the receiver — seeing the origin for the
//! first time — accepts it with probability `1/d_c` into a random
//! non-reserved buffer slot. A packet copy's hop counter is decremented on
//! every enqueue and the copy is dropped once the budget is spent. Updates
//! re-flood an XOR delta along the same counter rules and patch exactly the
//! slots whose origin list contains the sender.
//!
//! Determinism: one explicit random stream drives every decision, consumed in
//! a fixed order (nodes ascending, neighbors in adjacency order), so a seed
//! reproduces the entire run bit for bit.

pub mod policy;

use std::collections::VecDeque;

use thiserror::Error;

pub use policy::{
    external_degree, infer_counter_dsa2, init_counter_dsa1, two_hop_sum, variant_by_name,
    variant_names, AlgorithmVariant, CounterPolicy, VariantParams, VARIANTS,
};

use crate::coding::{
    make_packet, make_update_packet, sample_ideal_soliton, CodingError, NodeBuffer, Packet,
    PacketFlag, Symbol,
};
use crate::seeds::SimRng;
use crate::topology::{GeometricGraph, NodeId, TopologyError};

/// Rounds allowed per run before the engine declares the run stuck. Counters
/// guarantee termination well before this; hitting the cap flags a bug.
pub const ROUND_CAP_FACTOR: u64 = 50;

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("DSA-I configured with n_known={n_known} but the graph has {n} nodes")]
    VariantMismatch { n_known: usize, n: usize },
    #[error("counter scale c_u must be positive, got {0}")]
    InvalidScale(f64),
    #[error("node has degree zero")]
    ZeroDegree,
    #[error("node {0} is isolated")]
    IsolatedNode(NodeId),
    #[error("unknown source {0}")]
    UnknownSource(NodeId),
    #[error("source {0} already flooded")]
    AlreadyFlooded(NodeId),
    #[error("source {0} has not flooded yet")]
    NotFlooded(NodeId),
    #[error("engine must be quiescent before this operation")]
    NotQuiescent,
    #[error("expected {expected} source symbols, got {got}")]
    SymbolCount { expected: usize, got: usize },
    #[error("conservation violated at node {node} slot {slot}")]
    ConservationViolation { node: NodeId, slot: usize },
    #[error("origin {origin} stored in more than one slot of node {node}")]
    DuplicateOriginAcrossSlots { node: NodeId, origin: NodeId },
    #[error(transparent)]
    Coding(#[from] CodingError),
    #[error(transparent)]
    Topology(#[from] TopologyError),
}

/// How a relaying node picks targets for an initial-data packet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RelayMode {
    /// One uniformly random neighbor per queue pop.
    #[default]
    Single,
    /// Unicast to every neighbor that has not received the packet yet.
    AllUnseen,
}

impl RelayMode {
    pub fn name(self) -> &'static str {
        match self {
            RelayMode::Single => "single",
            RelayMode::AllUnseen => "all-unseen",
        }
    }
}

/// A packet copy waiting in a forward queue, with its relay depth so far.
#[derive(Debug, Clone)]
struct QueuedCopy {
    packet: Packet,
    relay_hops: u64,
}

/// Protocol state of one node.
#[derive(Debug)]
pub struct NodeState {
    id: NodeId,
    /// Acceptance degree drawn from the Ideal Soliton distribution; the node
    /// accepts a first-seen foreign packet with probability `1/d_c`.
    d_c: usize,
    buffer: NodeBuffer,
    seen: Vec<bool>,
    forward_queue: VecDeque<QueuedCopy>,
}

impl NodeState {
    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn acceptance_degree(&self) -> usize {
        self.d_c
    }

    pub fn buffer(&self) -> &NodeBuffer {
        &self.buffer
    }

    pub fn has_seen(&self, origin: NodeId) -> bool {
        self.seen[origin as usize]
    }

    pub fn queue_len(&self) -> usize {
        self.forward_queue.len()
    }
}

/// Counters and summaries of one engine's activity so far.
#[derive(Debug, Clone)]
pub struct DisseminationStats {
    pub rounds: u64,
    pub transmissions: u64,
    /// True when a run stopped at the round cap instead of quiescence.
    pub cap_hit: bool,
    /// Foreign buffers that absorbed each origin's initial packet.
    pub per_source_absorbs: Vec<u64>,
    /// Queue insertions per origin (flood plus relays).
    pub per_source_enqueues: Vec<u64>,
    /// Relay-chain lengths over all dead packet copies.
    pub chain_count: u64,
    pub chain_hops_total: u64,
    pub chain_hops_max: u64,
}

impl DisseminationStats {
    /// Mean relay hops per packet copy.
    pub fn chain_mean(&self) -> f64 {
        if self.chain_count == 0 {
            0.0
        } else {
            self.chain_hops_total as f64 / self.chain_count as f64
        }
    }
}

/// The whole simulation state for one trial.
pub struct EngineState {
    graph: GeometricGraph,
    nodes: Vec<NodeState>,
    round: u64,
    transmissions: u64,
    variant: AlgorithmVariant,
    policy: Box<dyn CounterPolicy>,
    relay: RelayMode,
    rng: SimRng,
    /// Ground-truth current reading of every source; updated by
    /// [`EngineState::apply_update`]. The audit checks buffers against this.
    current: Vec<Symbol>,
    flooded: Vec<bool>,
    queued: usize,
    cap_hit: bool,
    /// Per-node marker for the in-flight update wave.
    wave_received: Vec<bool>,
    absorbs: Vec<u64>,
    enqueues: Vec<u64>,
    chain_count: u64,
    chain_hops_total: u64,
    chain_hops_max: u64,
}

impl EngineState {
    /// Build an engine over `graph` with one symbol per node.
    ///
    /// Draws every node's acceptance degree up front (nodes in ascending id
    /// order) from the Ideal Soliton distribution sized by the variant.
    pub fn new(
        graph: GeometricGraph,
        variant: AlgorithmVariant,
        relay: RelayMode,
        slots: usize,
        symbols: Vec<Symbol>,
        seed: u64,
    ) -> Result<Self, ProtocolError> {
        let n = graph.node_count();
        if symbols.len() != n {
            return Err(ProtocolError::SymbolCount {
                expected: n,
                got: symbols.len(),
            });
        }
        let symbol_len = symbols[0].len();
        for s in &symbols {
            if s.len() != symbol_len {
                return Err(ProtocolError::Coding(CodingError::LengthMismatch(
                    symbol_len,
                    s.len(),
                )));
            }
        }
        let policy = variant.build_policy(&graph)?;
        let mut rng = SimRng::new(seed);
        let mut nodes = Vec::with_capacity(n);
        for id in 0..n {
            let k = policy.acceptance_k(&graph, id as NodeId)?;
            // The draw is clamped to n: no node can demand a rarer event
            // than one in the whole population.
            let d_c = sample_ideal_soliton(k, rng.unit())?.min(n);
            let buffer = NodeBuffer::new(id as NodeId, symbols[id].clone(), slots)?;
            let mut seen = vec![false; n];
            seen[id] = true;
            nodes.push(NodeState {
                id: id as NodeId,
                d_c,
                buffer,
                seen,
                forward_queue: VecDeque::new(),
            });
        }
        Ok(EngineState {
            graph,
            nodes,
            round: 0,
            transmissions: 0,
            variant,
            policy,
            relay,
            rng,
            current: symbols,
            flooded: vec![false; n],
            queued: 0,
            cap_hit: false,
            wave_received: vec![false; n],
            absorbs: vec![0; n],
            enqueues: vec![0; n],
            chain_count: 0,
            chain_hops_total: 0,
            chain_hops_max: 0,
        })
    }

    pub fn graph(&self) -> &GeometricGraph {
        &self.graph
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn node(&self, id: NodeId) -> &NodeState {
        &self.nodes[id as usize]
    }

    pub fn variant(&self) -> AlgorithmVariant {
        self.variant
    }

    pub fn round(&self) -> u64 {
        self.round
    }

    pub fn transmissions(&self) -> u64 {
        self.transmissions
    }

    /// Current ground-truth reading of `source`.
    pub fn current_symbol(&self, source: NodeId) -> &Symbol {
        &self.current[source as usize]
    }

    /// No forward queue holds a packet.
    pub fn is_quiescent(&self) -> bool {
        self.queued == 0
    }

    pub fn stats(&self) -> DisseminationStats {
        DisseminationStats {
            rounds: self.round,
            transmissions: self.transmissions,
            cap_hit: self.cap_hit,
            per_source_absorbs: self.absorbs.clone(),
            per_source_enqueues: self.enqueues.clone(),
            chain_count: self.chain_count,
            chain_hops_total: self.chain_hops_total,
            chain_hops_max: self.chain_hops_max,
        }
    }

    /// Flood `source`'s packet to all direct neighbors.
    ///
    /// Every neighbor stores the payload unconditionally (probability-1
    /// acceptance at distance one) and enqueues a relay copy if the budget
    /// allows; one transmission is counted per neighbor.
    pub fn initial_flood(&mut self, source: NodeId) -> Result<(), ProtocolError> {
        let n = self.nodes.len();
        if source as usize >= n {
            return Err(ProtocolError::UnknownSource(source));
        }
        if self.flooded[source as usize] {
            return Err(ProtocolError::AlreadyFlooded(source));
        }
        if self.graph.degree(source)? == 0 {
            return Err(ProtocolError::IsolatedNode(source));
        }
        let counter = self.policy.initial_counter(&self.graph, source)?;
        let packet = make_packet(source, self.current[source as usize].clone(), counter);
        let neighbors: Vec<NodeId> = self.graph.neighbors(source).to_vec();
        for &v in &neighbors {
            self.transmissions += 1;
            let node = &mut self.nodes[v as usize];
            node.seen[source as usize] = true;
            if node.buffer.has_foreign_capacity() {
                let slot = 1 + self.rng.below(node.buffer.slot_len() - 1);
                node.buffer.absorb(&packet, slot)?;
                self.absorbs[source as usize] += 1;
            }
            if packet.counter >= 1 {
                let mut copy = packet.clone();
                copy.counter -= 1;
                self.enqueue(
                    v,
                    QueuedCopy {
                        packet: copy,
                        relay_hops: 0,
                    },
                );
            } else {
                self.record_chain(0);
            }
        }
        self.flooded[source as usize] = true;
        Ok(())
    }

    /// Run one synchronous round.
    ///
    /// Every node whose queue was nonempty at the start of the round forwards
    /// exactly one packet. Deliveries land immediately, but only the
    /// start-of-round holders forward, which keeps the schedule deterministic.
    pub fn round_step(&mut self) -> Result<(), ProtocolError> {
        let holders: Vec<NodeId> = self
            .nodes
            .iter()
            .filter(|node| !node.forward_queue.is_empty())
            .map(|node| node.id)
            .collect();
        for u in holders {
            let copy = self.nodes[u as usize]
                .forward_queue
                .pop_front()
                .expect("holder queue emptied mid-round");
            self.queued -= 1;
            self.forward(u, copy)?;
        }
        self.round += 1;
        Ok(())
    }

    /// Iterate rounds until quiescence or the safety cap.
    pub fn run_dissemination(&mut self) -> Result<DisseminationStats, ProtocolError> {
        let cap = ROUND_CAP_FACTOR * self.nodes.len() as u64;
        let mut done = 0;
        while !self.is_quiescent() && done < cap {
            self.round_step()?;
            done += 1;
        }
        if !self.is_quiescent() {
            self.cap_hit = true;
        }
        // In test builds, no run escapes the conservation audit.
        #[cfg(debug_assertions)]
        if self.is_quiescent() {
            self.audit_conservation()
                .expect("conservation audit failed at quiescence");
        }
        Ok(self.stats())
    }

    /// Disseminate a fresh reading for `source` after its initial data is out.
    ///
    /// The wave carries `old XOR new` with a freshly computed counter and is
    /// flooded to every not-yet-reached node (a receiving node forwards to all
    /// neighbors the wave has not touched, budget permitting). Each node
    /// applies the delta at most once, and only into the slot whose origin
    /// list contains `source`; holders of the old value all sit within the
    /// wave's hop budget, so none is left stale.
    pub fn apply_update(
        &mut self,
        source: NodeId,
        new_data: Symbol,
    ) -> Result<DisseminationStats, ProtocolError> {
        let n = self.nodes.len();
        if source as usize >= n {
            return Err(ProtocolError::UnknownSource(source));
        }
        if !self.flooded[source as usize] {
            return Err(ProtocolError::NotFlooded(source));
        }
        if !self.is_quiescent() {
            return Err(ProtocolError::NotQuiescent);
        }
        let old = self.current[source as usize].clone();
        let counter = self.policy.initial_counter(&self.graph, source)?;
        let packet = make_update_packet(source, &old, &new_data, counter)?;
        self.current[source as usize] = new_data.clone();
        self.nodes[source as usize].buffer.rewrite_own(new_data)?;

        self.wave_received.fill(false);
        self.wave_received[source as usize] = true;
        let neighbors: Vec<NodeId> = self.graph.neighbors(source).to_vec();
        for &v in &neighbors {
            self.transmissions += 1;
            self.receive_update(v, &packet)?;
            if packet.counter >= 1 {
                let mut copy = packet.clone();
                copy.counter -= 1;
                self.enqueue(
                    v,
                    QueuedCopy {
                        packet: copy,
                        relay_hops: 0,
                    },
                );
            } else {
                self.record_chain(0);
            }
        }
        self.run_dissemination()
    }

    /// Verify that every buffer slot equals the XOR of the current
    /// ground-truth readings of its origin set, that no origin occupies two
    /// slots of one buffer, and that slot 0 holds exactly the node's own
    /// current reading.
    pub fn audit_conservation(&self) -> Result<(), ProtocolError> {
        let symbol_len = self.current[0].len();
        for node in &self.nodes {
            let mut seen_origins = vec![false; self.nodes.len()];
            for (slot_index, slot) in node.buffer.slots().iter().enumerate() {
                for &origin in slot.origins() {
                    if seen_origins[origin as usize] {
                        return Err(ProtocolError::DuplicateOriginAcrossSlots {
                            node: node.id,
                            origin,
                        });
                    }
                    seen_origins[origin as usize] = true;
                }
                let mut expect = Symbol::zero(symbol_len);
                for &origin in slot.origins() {
                    expect.xor_in_place(&self.current[origin as usize])?;
                }
                if &expect != slot.accumulator() {
                    return Err(ProtocolError::ConservationViolation {
                        node: node.id,
                        slot: slot_index,
                    });
                }
            }
            let own = node.buffer.slot(0).expect("buffers have a slot 0");
            let own_ok = own.origins().len() == 1
                && own.origins().contains(&node.id)
                && own.accumulator() == &self.current[node.id as usize];
            if !own_ok {
                return Err(ProtocolError::ConservationViolation {
                    node: node.id,
                    slot: 0,
                });
            }
        }
        Ok(())
    }

    fn enqueue(&mut self, at: NodeId, copy: QueuedCopy) {
        self.enqueues[copy.packet.origin as usize] += 1;
        self.nodes[at as usize].forward_queue.push_back(copy);
        self.queued += 1;
    }

    fn record_chain(&mut self, hops: u64) {
        self.chain_count += 1;
        self.chain_hops_total += hops;
        self.chain_hops_max = self.chain_hops_max.max(hops);
    }

    /// Forward one dequeued copy from `u` according to the relay mode.
    fn forward(&mut self, u: NodeId, copy: QueuedCopy) -> Result<(), ProtocolError> {
        // Update waves always fan out to every untouched neighbor: the delta
        // must reach every holder of the old value, and the counter budget
        // covers exactly the ball the initial wave could have reached.
        let flood_all = match copy.packet.flag {
            PacketFlag::Update => true,
            PacketFlag::Initial => self.relay == RelayMode::AllUnseen,
        };
        if flood_all {
            let origin = copy.packet.origin as usize;
            let targets: Vec<NodeId> = self
                .graph
                .neighbors(u)
                .iter()
                .copied()
                .filter(|&v| match copy.packet.flag {
                    PacketFlag::Initial => !self.nodes[v as usize].seen[origin],
                    PacketFlag::Update => !self.wave_received[v as usize],
                })
                .collect();
            if targets.is_empty() {
                self.record_chain(copy.relay_hops);
                return Ok(());
            }
            for v in targets {
                self.transmissions += 1;
                self.deliver(v, copy.clone())?;
            }
        } else {
            let neighbors = self.graph.neighbors(u);
            debug_assert!(!neighbors.is_empty(), "holder with no neighbors");
            let v = neighbors[self.rng.below(neighbors.len())];
            self.transmissions += 1;
            self.deliver(v, copy)?;
        }
        Ok(())
    }

    /// Process one copy arriving at `v`.
    fn deliver(&mut self, v: NodeId, mut copy: QueuedCopy) -> Result<(), ProtocolError> {
        copy.relay_hops += 1;
        match copy.packet.flag {
            PacketFlag::Initial => {
                let origin = copy.packet.origin as usize;
                let first_sight = !self.nodes[v as usize].seen[origin];
                if first_sight {
                    self.nodes[v as usize].seen[origin] = true;
                    let coin = self.rng.unit();
                    if coin <= 1.0 / self.nodes[v as usize].d_c as f64 {
                        let node = &mut self.nodes[v as usize];
                        if node.buffer.has_foreign_capacity() {
                            let slot = 1 + self.rng.below(node.buffer.slot_len() - 1);
                            node.buffer.absorb(&copy.packet, slot)?;
                            self.absorbs[origin] += 1;
                        }
                    }
                }
            }
            PacketFlag::Update => self.receive_update(v, &copy.packet)?,
        }
        if copy.packet.counter >= 1 {
            copy.packet.counter -= 1;
            self.enqueue(v, copy);
        } else {
            self.record_chain(copy.relay_hops);
        }
        Ok(())
    }

    /// Apply an update packet at `v` on first contact with the wave.
    fn receive_update(&mut self, v: NodeId, packet: &Packet) -> Result<(), ProtocolError> {
        if self.wave_received[v as usize] {
            return Ok(());
        }
        self.wave_received[v as usize] = true;
        let node = &mut self.nodes[v as usize];
        node.seen[packet.origin as usize] = true;
        // Only nodes whose id list names the origin patch a slot; everyone
        // else just relays.
        if let Some(slot) = node.buffer.slot_holding(packet.origin) {
            node.buffer.absorb(packet, slot)?;
        }
        Ok(())
    }
}

/// Recount how many foreign buffers hold each origin, straight from buffers.
pub fn recount_absorbs(engine: &EngineState) -> Vec<u64> {
    let n = engine.node_count();
    let mut counts = vec![0u64; n];
    for id in 0..n {
        let node = engine.node(id as NodeId);
        for (slot_index, slot) in node.buffer().slots().iter().enumerate() {
            if slot_index == 0 {
                continue;
            }
            for &origin in slot.origins() {
                counts[origin as usize] += 1;
            }
        }
    }
    counts
}
