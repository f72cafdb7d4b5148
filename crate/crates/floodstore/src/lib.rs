//! Flooding-based distributed storage for large-scale sensor networks.
//!
//! Every node of a random geometric network both senses a value and stores
//! XOR combinations of other nodes' values in a small slotted buffer. Sources
//! flood their readings with degree-dependent hop budgets; receivers accept
//! first-seen packets with Soliton-distributed probability. Afterwards,
//! querying a modest fraction of nodes yields a sparse GF(2) system whose
//! solution recovers every reading — including after in-place data updates.
//!
//! The crate is organized around the pipeline:
//!
//! - [`topology`]: random geometric graphs and their text dump format.
//! - [`coding`]: symbols, packets, Soliton sampling, XOR buffer slots.
//! - [`protocol`]: the dissemination engine and the runtime-selected
//!   counter-policy variants (`dsa1`, `dsa2`).
//! - [`decoder`]: query selection and GF(2) Gaussian elimination.
//! - [`harness`]: seeded experiment sweeps, CSV output, and the CLI.
//! - [`seeds`]: the deterministic stream and sub-seed derivation.

pub mod coding;
pub mod decoder;
pub mod harness;
pub mod protocol;
pub mod seeds;
pub mod topology;

pub use coding::{
    make_packet, make_update_packet, sample_ideal_soliton, xor, NodeBuffer, Packet, PacketFlag,
    Symbol,
};
pub use decoder::{decode_trial, gf2_solve, query_nodes, query_region, DecodeOutcome, Equation};
pub use harness::{
    cli_main, emit_csv, run_experiment, run_trial, ExperimentConfig, ExperimentTable, QueryMode,
    TrialRecord,
};
pub use protocol::{
    infer_counter_dsa2, init_counter_dsa1, AlgorithmVariant, CounterPolicy, DisseminationStats,
    EngineState, RelayMode,
};
pub use topology::{generate_connected, generate_topology, GeometricGraph, NodeId, Point};
