//! Degree sampling, packets, and XOR-accumulating buffer slots.
//!
//! Storage is a random linear code over GF(2): each buffer slot keeps the
//! bytewise XOR of every payload absorbed into it together with the set of
//! origin ids those payloads came from. Acceptance degrees are drawn from the
//! Ideal Soliton distribution.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::topology::NodeId;

#[derive(Debug, Error, PartialEq)]
pub enum CodingError {
    #[error("symbol length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("soliton distribution needs k >= 1")]
    EmptyDistribution,
    #[error("buffer needs at least one slot")]
    NoSlots,
    #[error("slot {slot} out of range for buffer with {slots} slots")]
    SlotOutOfRange { slot: usize, slots: usize },
    #[error("slot 0 is reserved for the node's own reading")]
    ReservedSlot,
    #[error("origin {0} already stored in this buffer")]
    DuplicateOrigin(NodeId),
    #[error("update for origin {origin} but slot {slot} does not hold it")]
    UpdateForUnknownOrigin { origin: NodeId, slot: usize },
}

/// Fixed-length sensed reading (or XOR of readings).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Symbol(Vec<u8>);

impl Symbol {
    pub fn new(bytes: Vec<u8>) -> Self {
        Symbol(bytes)
    }

    pub fn zero(len: usize) -> Self {
        Symbol(vec![0; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&b| b == 0)
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn xor_in_place(&mut self, other: &Symbol) -> Result<(), CodingError> {
        if self.0.len() != other.0.len() {
            return Err(CodingError::LengthMismatch(self.0.len(), other.0.len()));
        }
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a ^= b;
        }
        Ok(())
    }
}

/// Bytewise XOR of two equal-length symbols.
pub fn xor(a: &Symbol, b: &Symbol) -> Result<Symbol, CodingError> {
    let mut out = a.clone();
    out.xor_in_place(b)?;
    Ok(out)
}

/// Whether a packet carries a first reading or a correction to one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PacketFlag {
    Initial,
    Update,
}

/// The unit of dissemination. `counter` is the remaining relay budget of this
/// particular copy; it only ever decreases.
#[derive(Debug, Clone, PartialEq)]
pub struct Packet {
    pub origin: NodeId,
    pub data: Symbol,
    pub counter: u64,
    pub flag: PacketFlag,
}

/// Fresh packet carrying a node's reading verbatim.
pub fn make_packet(origin: NodeId, data: Symbol, counter: u64) -> Packet {
    Packet {
        origin,
        data,
        counter,
        flag: PacketFlag::Initial,
    }
}

/// Update packet: the payload is `old XOR new`, so absorbing it into a slot
/// that already holds `old` telescopes the accumulator to `new`.
pub fn make_update_packet(
    origin: NodeId,
    old: &Symbol,
    new: &Symbol,
    counter: u64,
) -> Result<Packet, CodingError> {
    Ok(Packet {
        origin,
        data: xor(old, new)?,
        counter,
        flag: PacketFlag::Update,
    })
}

/// One XOR accumulator plus the origin ids absorbed into it.
#[derive(Debug, Clone, PartialEq)]
pub struct BufferSlot {
    accumulator: Symbol,
    origins: BTreeSet<NodeId>,
}

impl BufferSlot {
    fn empty(symbol_len: usize) -> Self {
        BufferSlot {
            accumulator: Symbol::zero(symbol_len),
            origins: BTreeSet::new(),
        }
    }

    pub fn accumulator(&self) -> &Symbol {
        &self.accumulator
    }

    pub fn origins(&self) -> &BTreeSet<NodeId> {
        &self.origins
    }

    pub fn is_occupied(&self) -> bool {
        !self.origins.is_empty()
    }
}

/// Per-node storage: `m` slots, slot 0 reserved for the node's own reading.
#[derive(Debug, Clone)]
pub struct NodeBuffer {
    owner: NodeId,
    slots: Vec<BufferSlot>,
}

/// Slot count from a total buffer of `total_bytes` split into `slot_bytes`
/// pieces: `m = floor(M / c)`.
pub fn slot_count(total_bytes: usize, slot_bytes: usize) -> usize {
    total_bytes.checked_div(slot_bytes).unwrap_or(0)
}

impl NodeBuffer {
    pub fn new(owner: NodeId, own_data: Symbol, slots: usize) -> Result<Self, CodingError> {
        if slots == 0 {
            return Err(CodingError::NoSlots);
        }
        let len = own_data.len();
        let mut all = vec![BufferSlot::empty(len); slots];
        all[0].accumulator = own_data;
        all[0].origins.insert(owner);
        Ok(NodeBuffer { owner, slots: all })
    }

    pub fn owner(&self) -> NodeId {
        self.owner
    }

    pub fn slot_len(&self) -> usize {
        self.slots.len()
    }

    pub fn slot(&self, index: usize) -> Option<&BufferSlot> {
        self.slots.get(index)
    }

    pub fn slots(&self) -> &[BufferSlot] {
        &self.slots
    }

    /// True when any slot other than 0 exists to hold foreign data.
    pub fn has_foreign_capacity(&self) -> bool {
        self.slots.len() > 1
    }

    /// Which slot currently holds `origin`, if any.
    pub fn slot_holding(&self, origin: NodeId) -> Option<usize> {
        self.slots.iter().position(|s| s.origins.contains(&origin))
    }

    /// XOR a packet into the given slot.
    ///
    /// Initial packets claim the slot for their origin (which must not be
    /// stored anywhere in this buffer yet); update packets must land in the
    /// slot already holding their origin and leave the origin set unchanged.
    pub fn absorb(&mut self, packet: &Packet, slot: usize) -> Result<(), CodingError> {
        if slot >= self.slots.len() {
            return Err(CodingError::SlotOutOfRange {
                slot,
                slots: self.slots.len(),
            });
        }
        match packet.flag {
            PacketFlag::Initial => {
                if slot == 0 {
                    return Err(CodingError::ReservedSlot);
                }
                if self.slot_holding(packet.origin).is_some() {
                    return Err(CodingError::DuplicateOrigin(packet.origin));
                }
                self.slots[slot].accumulator.xor_in_place(&packet.data)?;
                self.slots[slot].origins.insert(packet.origin);
            }
            PacketFlag::Update => {
                if !self.slots[slot].origins.contains(&packet.origin) {
                    return Err(CodingError::UpdateForUnknownOrigin {
                        origin: packet.origin,
                        slot,
                    });
                }
                self.slots[slot].accumulator.xor_in_place(&packet.data)?;
            }
        }
        Ok(())
    }

    /// Replace the reserved slot's reading (the node re-sensed its value).
    pub fn rewrite_own(&mut self, new_data: Symbol) -> Result<(), CodingError> {
        if new_data.len() != self.slots[0].accumulator.len() {
            return Err(CodingError::LengthMismatch(
                new_data.len(),
                self.slots[0].accumulator.len(),
            ));
        }
        self.slots[0].accumulator = new_data;
        Ok(())
    }
}

/// Inverse-CDF sample of the Ideal Soliton distribution for `k` blocks.
///
/// Mass 1/k at degree 1 and 1/(i(i-1)) at degrees 2..=k; the CDF telescopes
/// to `1/k + 1 - 1/i`, so the preimage of a uniform `u` is found in closed
/// form rather than by scanning.
pub fn sample_ideal_soliton(k: usize, u: f64) -> Result<usize, CodingError> {
    if k == 0 {
        return Err(CodingError::EmptyDistribution);
    }
    debug_assert!((0.0..1.0).contains(&u));
    if k == 1 {
        return Ok(1);
    }
    let inv_k = 1.0 / k as f64;
    if u < inv_k {
        return Ok(1);
    }
    // Smallest i >= 2 with u < 1/k + 1 - 1/i, i.e. i > 1 / (1 + 1/k - u).
    let t = 1.0 + inv_k - u;
    let i = (1.0 / t).floor() as usize + 1;
    Ok(i.clamp(2, k))
}

/// Exact probability mass of the Ideal Soliton distribution at `degree`.
pub fn ideal_soliton_pmf(k: usize, degree: usize) -> f64 {
    if degree == 0 || degree > k {
        0.0
    } else if degree == 1 {
        1.0 / k as f64
    } else {
        1.0 / (degree as f64 * (degree as f64 - 1.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeds::SimRng;
    use proptest::prelude::*;

    #[test]
    fn soliton_k1_always_returns_one() {
        for u in [0.0, 0.3, 0.9999] {
            assert_eq!(sample_ideal_soliton(1, u).unwrap(), 1);
        }
    }

    #[test]
    fn soliton_k0_is_an_error() {
        assert_eq!(
            sample_ideal_soliton(0, 0.5),
            Err(CodingError::EmptyDistribution)
        );
    }

    #[test]
    fn soliton_k4_masses_match_closed_form() {
        // P(1)=1/4, P(2)=1/2, P(3)=1/6, P(4)=1/12.
        assert_eq!(ideal_soliton_pmf(4, 1), 0.25);
        assert_eq!(ideal_soliton_pmf(4, 2), 0.5);
        assert!((ideal_soliton_pmf(4, 3) - 1.0 / 6.0).abs() < 1e-15);
        assert!((ideal_soliton_pmf(4, 4) - 1.0 / 12.0).abs() < 1e-15);

        let mut rng = SimRng::new(404);
        let mut counts = [0u64; 5];
        let draws = 1_000_000;
        for _ in 0..draws {
            counts[sample_ideal_soliton(4, rng.unit()).unwrap()] += 1;
        }
        for (degree, &count) in counts.iter().enumerate().skip(1) {
            let observed = count as f64 / draws as f64;
            let expected = ideal_soliton_pmf(4, degree);
            assert!(
                (observed - expected).abs() < 0.005,
                "degree {degree}: observed {observed}, expected {expected}"
            );
        }
    }

    #[test]
    fn soliton_sampler_hits_every_degree_boundary() {
        // Exact CDF boundaries: u just below CDF(i) maps to i.
        let k = 10;
        for i in 2..=k {
            let cdf = 1.0 / k as f64 + 1.0 - 1.0 / i as f64;
            assert_eq!(sample_ideal_soliton(k, cdf - 1e-12).unwrap(), i);
        }
        assert_eq!(sample_ideal_soliton(k, 1.0 - 1e-12).unwrap(), k);
        assert_eq!(sample_ideal_soliton(k, 0.0).unwrap(), 1);
    }

    /// Tiny exact rational for the normalization check.
    #[derive(Clone, Copy)]
    struct Ratio {
        num: u128,
        den: u128,
    }

    impl Ratio {
        fn new(num: u128, den: u128) -> Self {
            let g = gcd(num.max(1), den);
            Ratio {
                num: num / g,
                den: den / g,
            }
        }
        fn add(self, other: Ratio) -> Ratio {
            Ratio::new(
                self.num * other.den + other.num * self.den,
                self.den * other.den,
            )
        }
    }

    fn gcd(a: u128, b: u128) -> u128 {
        if b == 0 {
            a
        } else {
            gcd(b, a % b)
        }
    }

    #[test]
    fn soliton_masses_sum_to_exactly_one() {
        for k in [1usize, 2, 3, 17, 100, 10_000] {
            let mut sum = Ratio::new(1, k as u128);
            for i in 2..=(k as u128) {
                sum = sum.add(Ratio::new(1, i * (i - 1)));
            }
            assert_eq!((sum.num, sum.den), (1, 1), "k = {k}");
        }
    }

    #[test]
    fn sampler_is_deterministic_per_stream() {
        let seq = |seed| {
            let mut rng = SimRng::new(seed);
            (0..100)
                .map(|_| sample_ideal_soliton(50, rng.unit()).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(seq(8), seq(8));
        assert_ne!(seq(8), seq(9));
    }

    #[test]
    fn xor_basics() {
        let a = Symbol::new(vec![0xAB, 0x00, 0xFF]);
        let zero = Symbol::zero(3);
        assert_eq!(xor(&a, &a).unwrap(), zero);
        assert_eq!(xor(&a, &zero).unwrap(), a);
        assert!(matches!(
            xor(&a, &Symbol::zero(2)),
            Err(CodingError::LengthMismatch(3, 2))
        ));
    }

    #[test]
    fn absorb_initial_then_update_telescopes() {
        let x_b = Symbol::new(vec![1, 2, 3, 4]);
        let x_b_new = Symbol::new(vec![9, 9, 9, 9]);
        let mut buf = NodeBuffer::new(0, Symbol::zero(4), 3).unwrap();

        buf.absorb(&make_packet(5, x_b.clone(), 3), 1).unwrap();
        assert_eq!(buf.slot(1).unwrap().accumulator(), &x_b);
        assert_eq!(
            buf.slot(1)
                .unwrap()
                .origins()
                .iter()
                .copied()
                .collect::<Vec<_>>(),
            vec![5]
        );

        let update = make_update_packet(5, &x_b, &x_b_new, 3).unwrap();
        buf.absorb(&update, 1).unwrap();
        assert_eq!(buf.slot(1).unwrap().accumulator(), &x_b_new);
        assert_eq!(buf.slot(1).unwrap().origins().len(), 1);
    }

    #[test]
    fn absorb_errors() {
        let mut buf = NodeBuffer::new(0, Symbol::zero(2), 3).unwrap();
        let p = make_packet(7, Symbol::new(vec![1, 1]), 0);
        assert_eq!(buf.absorb(&p, 0), Err(CodingError::ReservedSlot));
        assert!(matches!(
            buf.absorb(&p, 3),
            Err(CodingError::SlotOutOfRange { .. })
        ));
        buf.absorb(&p, 1).unwrap();
        assert_eq!(buf.absorb(&p, 2), Err(CodingError::DuplicateOrigin(7)));
        let upd = make_update_packet(9, &Symbol::zero(2), &Symbol::new(vec![1, 0]), 0).unwrap();
        assert!(matches!(
            buf.absorb(&upd, 1),
            Err(CodingError::UpdateForUnknownOrigin { origin: 9, slot: 1 })
        ));
    }

    #[test]
    fn absorbing_many_initials_accumulates_their_xor() {
        let mut rng = SimRng::new(77);
        let mut buf = NodeBuffer::new(0, Symbol::zero(8), 2).unwrap();
        let mut expect = Symbol::zero(8);
        for origin in 1..=20u32 {
            let payload = Symbol::new((0..8).map(|_| rng.next_u64() as u8).collect());
            expect.xor_in_place(&payload).unwrap();
            buf.absorb(&make_packet(origin, payload, 1), 1).unwrap();
        }
        assert_eq!(buf.slot(1).unwrap().accumulator(), &expect);
        assert_eq!(buf.slot(1).unwrap().origins().len(), 20);
    }

    #[test]
    fn update_with_unchanged_data_is_a_zero_payload() {
        let x = Symbol::new(vec![3, 1, 4]);
        let p = make_update_packet(2, &x, &x, 5).unwrap();
        assert!(p.data.is_zero());
        assert_eq!(p.flag, PacketFlag::Update);
    }

    #[test]
    fn counter_floor_formula_example() {
        // floor(100 / 4) = 25, as used when a source prepares its packet.
        let p = make_packet(0, Symbol::zero(1), (100 / 4) as u64);
        assert_eq!(p.counter, 25);
    }

    #[test]
    fn slot_count_is_floor_of_ratio() {
        assert_eq!(slot_count(64, 8), 8);
        assert_eq!(slot_count(65, 8), 8);
        assert_eq!(slot_count(7, 8), 0);
        assert_eq!(slot_count(7, 0), 0);
    }

    #[test]
    fn own_slot_is_reserved_and_populated() {
        let own = Symbol::new(vec![42; 4]);
        let buf = NodeBuffer::new(9, own.clone(), 1).unwrap();
        assert_eq!(buf.slot(0).unwrap().accumulator(), &own);
        assert!(buf.slot(0).unwrap().origins().contains(&9));
        assert!(!buf.has_foreign_capacity());
        assert!(NodeBuffer::new(9, own, 0).is_err());
    }

    proptest! {
        #[test]
        fn xor_is_an_involution(a in proptest::collection::vec(any::<u8>(), 8),
                                b in proptest::collection::vec(any::<u8>(), 8)) {
            let sa = Symbol::new(a);
            let sb = Symbol::new(b);
            let back = xor(&xor(&sa, &sb).unwrap(), &sb).unwrap();
            prop_assert_eq!(back, sa);
        }

        #[test]
        fn initial_plus_update_equals_fresh_initial(
            old in proptest::collection::vec(any::<u8>(), 6),
            new in proptest::collection::vec(any::<u8>(), 6),
        ) {
            let old = Symbol::new(old);
            let new = Symbol::new(new);

            let mut via_update = NodeBuffer::new(0, Symbol::zero(6), 2).unwrap();
            via_update.absorb(&make_packet(3, old.clone(), 1), 1).unwrap();
            via_update
                .absorb(&make_update_packet(3, &old, &new, 1).unwrap(), 1)
                .unwrap();

            let mut direct = NodeBuffer::new(0, Symbol::zero(6), 2).unwrap();
            direct.absorb(&make_packet(3, new, 1), 1).unwrap();

            prop_assert_eq!(via_update.slot(1), direct.slot(1));
        }

        #[test]
        fn soliton_sample_is_always_in_range(k in 1usize..200, u in 0.0f64..1.0) {
            let d = sample_ideal_soliton(k, u).unwrap();
            prop_assert!((1..=k).contains(&d));
        }
    }
}
