//! Recovery of source symbols from queried buffers.
//!
//! Each occupied buffer slot of a queried node yields one GF(2) equation:
//! the XOR of the source symbols named in the slot's origin list equals the
//! slot's accumulator. Gaussian elimination over the support-indicator matrix
//! (symbols XORed alongside the row ops) recovers every uniquely determined
//! variable; decoding succeeds when all `n` are pinned down.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::coding::{CodingError, Symbol};
use crate::protocol::EngineState;
use crate::seeds::SimRng;
use crate::topology::NodeId;

#[derive(Debug, Error)]
pub enum DecodeError {
    #[error("query size {h} out of range 1..={n}")]
    QueryOutOfRange { h: usize, n: usize },
    #[error("decoding ratio {0} outside (0, 1]")]
    InvalidEta(f64),
    #[error("equation names source {0} outside 0..{1}")]
    SupportOutOfRange(NodeId, usize),
    #[error("inconsistent system: contradictory equation over {support:?} — buffers are corrupt")]
    Inconsistent { support: Vec<NodeId> },
    #[error(transparent)]
    Coding(#[from] CodingError),
}

/// One linear constraint over the source symbols.
#[derive(Debug, Clone, PartialEq)]
pub struct Equation {
    pub support: BTreeSet<NodeId>,
    pub value: Symbol,
}

/// Result of one decoding attempt.
#[derive(Debug, Clone)]
pub struct DecodeOutcome {
    /// Every uniquely determined source symbol.
    pub recovered: BTreeMap<NodeId, Symbol>,
    /// All `n` symbols recovered.
    pub success: bool,
    /// GF(2) rank of the queried system.
    pub rank: usize,
    /// How many nodes were queried.
    pub queried: usize,
}

/// Pull equations out of `h` distinct uniformly chosen nodes.
pub fn query_nodes(
    engine: &EngineState,
    h: usize,
    rng: &mut SimRng,
) -> Result<Vec<Equation>, DecodeError> {
    let n = engine.node_count();
    if h == 0 || h > n {
        return Err(DecodeError::QueryOutOfRange { h, n });
    }
    let chosen = rng.sample_distinct(n, h);
    Ok(equations_of(engine, chosen.into_iter()))
}

/// Query every node whose position lies within `radius` of `(x, y)`, up to
/// `max_nodes` of them (chosen uniformly when more are in range). Supports
/// the regional-recovery mode, where partial recovery is the interesting
/// output.
pub fn query_region(
    engine: &EngineState,
    center: (f64, f64),
    radius: f64,
    max_nodes: usize,
    rng: &mut SimRng,
) -> Result<Vec<Equation>, DecodeError> {
    let n = engine.node_count();
    let r_sq = radius * radius;
    let in_range: Vec<usize> = (0..n)
        .filter(|&u| {
            let p = engine
                .graph()
                .position(u as NodeId)
                .expect("node ids are dense");
            let dx = p.x - center.0;
            let dy = p.y - center.1;
            dx * dx + dy * dy <= r_sq
        })
        .collect();
    let take = max_nodes.min(in_range.len());
    let picks = rng.sample_distinct(in_range.len(), take);
    Ok(equations_of(engine, picks.into_iter().map(|i| in_range[i])))
}

fn equations_of(engine: &EngineState, nodes: impl Iterator<Item = usize>) -> Vec<Equation> {
    let mut equations = Vec::new();
    for u in nodes {
        for slot in engine.node(u as NodeId).buffer().slots() {
            if slot.is_occupied() {
                equations.push(Equation {
                    support: slot.origins().clone(),
                    value: slot.accumulator().clone(),
                });
            }
        }
    }
    equations
}

/// Gaussian elimination over GF(2).
///
/// Columns are visited in NodeId order with first-available row pivoting;
/// the recoverable set is rank-determined and thus order-independent. A row
/// that eliminates to empty support but a nonzero value means the equations
/// contradict each other, which no correct engine run can produce.
pub fn gf2_solve(equations: &[Equation], n: usize) -> Result<DecodeOutcome, DecodeError> {
    let words = n.div_ceil(64);
    let mut rows: Vec<(Vec<u64>, Symbol)> = Vec::with_capacity(equations.len());
    for eq in equations {
        let mut bits = vec![0u64; words];
        for &node in &eq.support {
            if node as usize >= n {
                return Err(DecodeError::SupportOutOfRange(node, n));
            }
            bits[node as usize / 64] |= 1u64 << (node as usize % 64);
        }
        rows.push((bits, eq.value.clone()));
    }

    let mut pivot_of_col: Vec<Option<usize>> = vec![None; n];
    let mut pivot_rows = 0usize;
    for (col, pivot_slot) in pivot_of_col.iter_mut().enumerate() {
        let word = col / 64;
        let mask = 1u64 << (col % 64);
        let Some(found) = (pivot_rows..rows.len()).find(|&r| rows[r].0[word] & mask != 0) else {
            continue;
        };
        rows.swap(pivot_rows, found);
        let (pivot_bits, pivot_value) = rows[pivot_rows].clone();
        for (r, (bits, value)) in rows.iter_mut().enumerate() {
            if r != pivot_rows && bits[word] & mask != 0 {
                for (b, p) in bits.iter_mut().zip(&pivot_bits) {
                    *b ^= p;
                }
                value.xor_in_place(&pivot_value)?;
            }
        }
        *pivot_slot = Some(pivot_rows);
        pivot_rows += 1;
    }

    // Empty support with a nonzero value is a contradiction.
    for (bits, value) in rows.iter().skip(pivot_rows) {
        debug_assert!(bits.iter().all(|&w| w == 0));
        if !value.is_zero() {
            return Err(DecodeError::Inconsistent { support: vec![] });
        }
    }

    let mut recovered = BTreeMap::new();
    for (col, pivot_slot) in pivot_of_col.iter().enumerate() {
        if let Some(r) = *pivot_slot {
            let ones: u32 = rows[r].0.iter().map(|w| w.count_ones()).sum();
            if ones == 1 {
                recovered.insert(col as NodeId, rows[r].1.clone());
            }
        }
    }

    let outcome = DecodeOutcome {
        success: pivot_rows == n,
        rank: pivot_rows,
        queried: 0,
        recovered,
    };
    debug_assert!(outcome.rank <= equations.len().min(n));
    verify_recovered(equations, &outcome)?;
    Ok(outcome)
}

/// Soundness check run after every solve: any equation made entirely of
/// recovered variables must XOR back to its stored value.
fn verify_recovered(equations: &[Equation], outcome: &DecodeOutcome) -> Result<(), DecodeError> {
    for eq in equations {
        if !eq.support.iter().all(|s| outcome.recovered.contains_key(s)) {
            continue;
        }
        let mut acc = Symbol::zero(eq.value.len());
        for s in &eq.support {
            acc.xor_in_place(&outcome.recovered[s])?;
        }
        if acc != eq.value {
            return Err(DecodeError::Inconsistent {
                support: eq.support.iter().copied().collect(),
            });
        }
    }
    Ok(())
}

/// Query a `ceil(eta * n)`-node sample and solve it.
pub fn decode_trial(
    engine: &EngineState,
    eta: f64,
    rng: &mut SimRng,
) -> Result<DecodeOutcome, DecodeError> {
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(DecodeError::InvalidEta(eta));
    }
    let n = engine.node_count();
    let h = ((eta * n as f64).ceil() as usize).clamp(1, n);
    let equations = query_nodes(engine, h, rng)?;
    let mut outcome = gf2_solve(&equations, n)?;
    outcome.queried = h;
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coding::Symbol;
    use crate::protocol::{AlgorithmVariant, EngineState, RelayMode};
    use crate::seeds::payload_bytes;
    use crate::topology::generate_connected;

    fn eq(support: &[u32], value: Vec<u8>) -> Equation {
        Equation {
            support: support.iter().copied().collect(),
            value: Symbol::new(value),
        }
    }

    fn test_engine(n: usize, slots: usize, seed: u64) -> EngineState {
        let graph = generate_connected(n, 2.0, 0.9, seed).unwrap();
        let symbols = (0..n)
            .map(|u| Symbol::new(payload_bytes(seed, n as u64, u as u64, 4)))
            .collect();
        EngineState::new(
            graph,
            AlgorithmVariant::DsaI { n_known: n },
            RelayMode::Single,
            slots,
            symbols,
            seed,
        )
        .unwrap()
    }

    #[test]
    fn two_equation_chain_solves_by_substitution() {
        let a = vec![0b1010];
        let b = vec![0b0110];
        let system = [eq(&[0, 1], a.clone()), eq(&[1], b.clone())];
        let outcome = gf2_solve(&system, 2).unwrap();
        assert!(outcome.success);
        assert_eq!(outcome.rank, 2);
        assert_eq!(outcome.recovered[&1], Symbol::new(b.clone()));
        let x0: Vec<u8> = a.iter().zip(&b).map(|(p, q)| p ^ q).collect();
        assert_eq!(outcome.recovered[&0], Symbol::new(x0));
    }

    #[test]
    fn duplicate_equations_add_no_rank() {
        let system = [eq(&[0, 1], vec![7]), eq(&[0, 1], vec![7])];
        let outcome = gf2_solve(&system, 2).unwrap();
        assert_eq!(outcome.rank, 1);
        assert!(!outcome.success);
        assert!(outcome.recovered.is_empty());
    }

    #[test]
    fn contradictory_equations_are_reported_corrupt() {
        let system = [eq(&[0], vec![1]), eq(&[0], vec![2])];
        assert!(matches!(
            gf2_solve(&system, 1),
            Err(DecodeError::Inconsistent { .. })
        ));
    }

    #[test]
    fn underdetermined_variables_stay_unrecovered() {
        // x0 ^ x1 known, x2 known: only x2 is pinned down.
        let system = [eq(&[0, 1], vec![3]), eq(&[2], vec![9])];
        let outcome = gf2_solve(&system, 3).unwrap();
        assert_eq!(outcome.rank, 2);
        assert!(!outcome.success);
        assert_eq!(
            outcome.recovered.keys().copied().collect::<Vec<_>>(),
            vec![2]
        );
    }

    #[test]
    fn support_outside_population_is_rejected() {
        let system = [eq(&[5], vec![1])];
        assert!(matches!(
            gf2_solve(&system, 3),
            Err(DecodeError::SupportOutOfRange(5, 3))
        ));
    }

    #[test]
    fn querying_everyone_always_succeeds() {
        let engine = test_engine(25, 3, 77);
        let mut rng = SimRng::new(1);
        let outcome = decode_trial(&engine, 1.0, &mut rng).unwrap();
        assert!(outcome.success);
        assert_eq!(outcome.queried, 25);
        for u in 0..25u32 {
            assert_eq!(&outcome.recovered[&u], engine.current_symbol(u));
        }
    }

    #[test]
    fn single_node_single_slot_recovers_only_itself() {
        let engine = test_engine(10, 1, 5);
        let mut rng = SimRng::new(2);
        let equations = query_nodes(&engine, 1, &mut rng).unwrap();
        assert_eq!(equations.len(), 1);
        let outcome = gf2_solve(&equations, 10).unwrap();
        assert!(!outcome.success);
        assert_eq!(outcome.recovered.len(), 1);
    }

    #[test]
    fn equation_count_matches_occupied_slot_recount() {
        let mut engine = test_engine(30, 4, 11);
        for u in 0..30u32 {
            engine.initial_flood(u).unwrap();
        }
        engine.run_dissemination().unwrap();
        let mut rng = SimRng::new(3);
        let equations = query_nodes(&engine, 30, &mut rng).unwrap();
        let expected: usize = (0..30u32)
            .map(|u| {
                engine
                    .node(u)
                    .buffer()
                    .slots()
                    .iter()
                    .filter(|s| s.is_occupied())
                    .count()
            })
            .sum();
        assert_eq!(equations.len(), expected);
    }

    #[test]
    fn query_bounds_are_checked() {
        let engine = test_engine(10, 2, 9);
        let mut rng = SimRng::new(0);
        assert!(matches!(
            query_nodes(&engine, 0, &mut rng),
            Err(DecodeError::QueryOutOfRange { .. })
        ));
        assert!(matches!(
            query_nodes(&engine, 11, &mut rng),
            Err(DecodeError::QueryOutOfRange { .. })
        ));
        assert!(matches!(
            decode_trial(&engine, 0.0, &mut rng),
            Err(DecodeError::InvalidEta(_))
        ));
        assert!(matches!(
            decode_trial(&engine, 1.1, &mut rng),
            Err(DecodeError::InvalidEta(_))
        ));
    }

    #[test]
    fn no_dissemination_and_low_eta_fails() {
        // Flood never ran: only singleton equations exist, and eta just above
        // 1/m queries far fewer than n nodes.
        let engine = test_engine(100, 10, 13);
        let mut rng = SimRng::new(4);
        let outcome = decode_trial(&engine, 0.11, &mut rng).unwrap();
        assert!(!outcome.success);
        assert_eq!(outcome.rank, outcome.queried);
    }

    #[test]
    fn region_query_reports_partial_recovery() {
        let mut engine = test_engine(40, 4, 17);
        for u in 0..40u32 {
            engine.initial_flood(u).unwrap();
        }
        engine.run_dissemination().unwrap();
        let mut rng = SimRng::new(5);
        let equations = query_region(&engine, (1.0, 1.0), 0.7, 10, &mut rng).unwrap();
        assert!(!equations.is_empty());
        let outcome = gf2_solve(&equations, 40).unwrap();
        // Some symbols come back, typically not all.
        assert!(!outcome.recovered.is_empty());
        for (u, symbol) in &outcome.recovered {
            assert_eq!(symbol, engine.current_symbol(*u));
        }
    }

    #[test]
    fn region_with_no_nodes_yields_no_equations() {
        let engine = test_engine(10, 2, 23);
        let mut rng = SimRng::new(6);
        let equations = query_region(&engine, (-50.0, -50.0), 0.1, 5, &mut rng).unwrap();
        assert!(equations.is_empty());
        let outcome = gf2_solve(&equations, 10).unwrap();
        assert_eq!(outcome.rank, 0);
        assert!(!outcome.success);
    }

    /// Brute-force oracle: a variable is determined iff it takes one value
    /// across all assignments (bit by bit) consistent with the equations.
    fn brute_force(equations: &[Equation], n: usize) -> Option<BTreeMap<NodeId, Symbol>> {
        assert!(n <= 16);
        let bytes = equations.first().map_or(1, |e| e.value.len());
        let masks: Vec<u32> = equations
            .iter()
            .map(|e| e.support.iter().fold(0u32, |m, &s| m | (1 << s)))
            .collect();
        let mut determined: BTreeMap<NodeId, Vec<u8>> = BTreeMap::new();
        let mut fully_determined: BTreeSet<NodeId> = (0..n as NodeId).collect();
        for byte in 0..bytes {
            for bit in 0..8 {
                let targets: Vec<u32> = equations
                    .iter()
                    .map(|e| ((e.value.as_bytes()[byte] >> bit) & 1) as u32)
                    .collect();
                let consistent: Vec<u32> = (0u32..1 << n)
                    .filter(|assign| {
                        masks
                            .iter()
                            .zip(&targets)
                            .all(|(m, t)| (assign & m).count_ones() % 2 == *t)
                    })
                    .collect();
                if consistent.is_empty() {
                    return None;
                }
                for v in 0..n as NodeId {
                    let vals: BTreeSet<u32> = consistent.iter().map(|a| (a >> v) & 1).collect();
                    if vals.len() == 1 {
                        let bit_value = *vals.iter().next().unwrap() as u8;
                        let entry = determined.entry(v).or_insert_with(|| vec![0; bytes]);
                        entry[byte] |= bit_value << bit;
                    } else {
                        fully_determined.remove(&v);
                    }
                }
            }
        }
        Some(
            determined
                .into_iter()
                .filter(|(v, _)| fully_determined.contains(v))
                .map(|(v, bytes)| (v, Symbol::new(bytes)))
                .collect(),
        )
    }

    #[test]
    fn solver_matches_brute_force_on_random_8_variable_systems() {
        let mut rng = SimRng::new(2718);
        for round in 0..200 {
            let n = 8;
            let eq_count = 1 + rng.below(12);
            let equations: Vec<Equation> = (0..eq_count)
                .map(|_| {
                    let size = 1 + rng.below(4);
                    let support: BTreeSet<NodeId> =
                        (0..size).map(|_| rng.below(n) as NodeId).collect();
                    Equation {
                        support,
                        value: Symbol::new(vec![rng.next_u64() as u8]),
                    }
                })
                .collect();
            let oracle = brute_force(&equations, n);
            match gf2_solve(&equations, n) {
                Ok(outcome) => {
                    let expect = oracle.expect("solver accepted an inconsistent system");
                    assert_eq!(outcome.recovered, expect, "round {round}");
                }
                Err(DecodeError::Inconsistent { .. }) => {
                    assert!(
                        oracle.is_none(),
                        "round {round}: solver flagged a solvable system"
                    );
                }
                Err(other) => panic!("round {round}: {other}"),
            }
        }
    }
}
