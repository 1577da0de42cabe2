//! Fixed-width bit sets over the horizon's days.

use std::fmt;

use crate::error::ModelError;

const BLOCK_BITS: usize = 64;

/// One bit per day of the timetable horizon. Bit `i` set means the owning
/// entity (trip activity, transfer validity) holds on day `i`.
///
/// The `Ord` impl is an arbitrary but stable total order (length, then
/// blocks); route partitioning uses it as a deterministic tie-breaker.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DayBitset {
    len: usize,
    blocks: Vec<u64>,
}

impl DayBitset {
    pub fn new(len: usize) -> Self {
        DayBitset {
            len,
            blocks: vec![0; len.div_ceil(BLOCK_BITS)],
        }
    }

    pub fn full(len: usize) -> Self {
        let mut b = DayBitset::new(len);
        for block in &mut b.blocks {
            *block = u64::MAX;
        }
        b.mask_tail();
        b
    }

    pub fn from_days<I: IntoIterator<Item = usize>>(len: usize, days: I) -> Result<Self, ModelError> {
        let mut b = DayBitset::new(len);
        for d in days {
            b.set(d)?;
        }
        Ok(b)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn set(&mut self, index: usize) -> Result<(), ModelError> {
        if index >= self.len {
            return Err(ModelError::BitIndexOutOfRange { index, len: self.len });
        }
        self.blocks[index / BLOCK_BITS] |= 1u64 << (index % BLOCK_BITS);
        Ok(())
    }

    pub fn clear(&mut self, index: usize) -> Result<(), ModelError> {
        if index >= self.len {
            return Err(ModelError::BitIndexOutOfRange { index, len: self.len });
        }
        self.blocks[index / BLOCK_BITS] &= !(1u64 << (index % BLOCK_BITS));
        Ok(())
    }

    pub fn get(&self, index: usize) -> bool {
        index < self.len && (self.blocks[index / BLOCK_BITS] >> (index % BLOCK_BITS)) & 1 == 1
    }

    pub fn any(&self) -> bool {
        self.blocks.iter().any(|&b| b != 0)
    }

    pub fn count_ones(&self) -> usize {
        self.blocks.iter().map(|b| b.count_ones() as usize).sum()
    }

    pub fn and(&self, other: &DayBitset) -> DayBitset {
        debug_assert_eq!(self.len, other.len);
        DayBitset {
            len: self.len,
            blocks: self.blocks.iter().zip(&other.blocks).map(|(a, b)| a & b).collect(),
        }
    }

    pub fn or(&self, other: &DayBitset) -> DayBitset {
        debug_assert_eq!(self.len, other.len);
        DayBitset {
            len: self.len,
            blocks: self.blocks.iter().zip(&other.blocks).map(|(a, b)| a | b).collect(),
        }
    }

    pub fn and_not(&self, other: &DayBitset) -> DayBitset {
        debug_assert_eq!(self.len, other.len);
        DayBitset {
            len: self.len,
            blocks: self.blocks.iter().zip(&other.blocks).map(|(a, b)| a & !b).collect(),
        }
    }

    pub fn or_with(&mut self, other: &DayBitset) {
        debug_assert_eq!(self.len, other.len);
        for (a, b) in self.blocks.iter_mut().zip(&other.blocks) {
            *a |= b;
        }
    }

    pub fn is_subset_of(&self, other: &DayBitset) -> bool {
        debug_assert_eq!(self.len, other.len);
        self.blocks.iter().zip(&other.blocks).all(|(a, b)| a & !b == 0)
    }

    /// Result bit `d` = input bit `d + shift`. Used to pull a target trip's
    /// activity back onto source-day indexing for a transfer with day shift.
    pub fn shifted_down(&self, shift: usize) -> DayBitset {
        let mut out = DayBitset::new(self.len);
        if shift >= self.len {
            return out;
        }
        let block_shift = shift / BLOCK_BITS;
        let bit_shift = shift % BLOCK_BITS;
        let n = self.blocks.len();
        for i in 0..n {
            let src = i + block_shift;
            if src >= n {
                break;
            }
            let mut v = self.blocks[src] >> bit_shift;
            if bit_shift > 0 && src + 1 < n {
                v |= self.blocks[src + 1] << (BLOCK_BITS - bit_shift);
            }
            out.blocks[i] = v;
        }
        out.mask_tail();
        out
    }

    /// Result bit `d` = input bit `d - shift`.
    pub fn shifted_up(&self, shift: usize) -> DayBitset {
        let mut out = DayBitset::new(self.len);
        if shift >= self.len {
            return out;
        }
        let block_shift = shift / BLOCK_BITS;
        let bit_shift = shift % BLOCK_BITS;
        let n = self.blocks.len();
        for i in (0..n).rev() {
            if i < block_shift {
                break;
            }
            let src = i - block_shift;
            let mut v = self.blocks[src] << bit_shift;
            if bit_shift > 0 && src > 0 {
                v |= self.blocks[src - 1] >> (BLOCK_BITS - bit_shift);
            }
            out.blocks[i] = v;
        }
        out.mask_tail();
        out
    }

    pub fn iter_ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.blocks.iter().enumerate().flat_map(|(bi, &block)| {
            let mut b = block;
            std::iter::from_fn(move || {
                if b == 0 {
                    None
                } else {
                    let t = b.trailing_zeros() as usize;
                    b &= b - 1;
                    Some(bi * BLOCK_BITS + t)
                }
            })
        })
    }

    pub fn first_one(&self) -> Option<usize> {
        self.iter_ones().next()
    }

    /// `'0'`/`'1'` string, bit 0 first; the canonical feed encoding.
    pub fn to_bit_string(&self) -> String {
        (0..self.len).map(|i| if self.get(i) { '1' } else { '0' }).collect()
    }

    pub fn from_bit_string(text: &str, expected_len: usize) -> Result<Self, ModelError> {
        if text.len() != expected_len {
            return Err(ModelError::BitsetLengthMismatch {
                got: text.len(),
                want: expected_len,
            });
        }
        let mut b = DayBitset::new(expected_len);
        for (i, ch) in text.chars().enumerate() {
            match ch {
                '1' => b.set(i)?,
                '0' => {}
                _ => {
                    return Err(ModelError::BitsetLengthMismatch {
                        got: text.len(),
                        want: expected_len,
                    })
                }
            }
        }
        Ok(b)
    }

    pub fn blocks(&self) -> &[u64] {
        &self.blocks
    }

    pub fn from_blocks(len: usize, blocks: Vec<u64>) -> Result<Self, ModelError> {
        if blocks.len() != len.div_ceil(BLOCK_BITS) {
            return Err(ModelError::BitsetLengthMismatch {
                got: blocks.len() * BLOCK_BITS,
                want: len,
            });
        }
        let mut b = DayBitset { len, blocks };
        b.mask_tail();
        Ok(b)
    }

    fn mask_tail(&mut self) {
        let tail = self.len % BLOCK_BITS;
        if tail != 0 {
            if let Some(last) = self.blocks.last_mut() {
                *last &= (1u64 << tail) - 1;
            }
        }
    }
}

impl fmt::Debug for DayBitset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "DayBitset({})", self.to_bit_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Naive boolean-array model the packed implementation is checked against.
    #[derive(Clone, Debug, PartialEq)]
    struct NaiveBits(Vec<bool>);

    impl NaiveBits {
        fn from_bitset(b: &DayBitset) -> Self {
            NaiveBits((0..b.len()).map(|i| b.get(i)).collect())
        }
        fn and(&self, o: &Self) -> Self {
            NaiveBits(self.0.iter().zip(&o.0).map(|(a, b)| *a && *b).collect())
        }
        fn or(&self, o: &Self) -> Self {
            NaiveBits(self.0.iter().zip(&o.0).map(|(a, b)| *a || *b).collect())
        }
        fn shifted_down(&self, k: usize) -> Self {
            NaiveBits((0..self.0.len()).map(|i| i + k < self.0.len() && self.0[i + k]).collect())
        }
        fn shifted_up(&self, k: usize) -> Self {
            NaiveBits((0..self.0.len()).map(|i| i >= k && self.0[i - k]).collect())
        }
    }

    fn arb_bitset(max_len: usize) -> impl Strategy<Value = DayBitset> {
        (1..=max_len).prop_flat_map(|len| {
            proptest::collection::vec(any::<bool>(), len).prop_map(move |bits| {
                let mut b = DayBitset::new(len);
                for (i, v) in bits.iter().enumerate() {
                    if *v {
                        b.set(i).unwrap();
                    }
                }
                b
            })
        })
    }

    proptest! {
        #[test]
        fn ops_agree_with_naive(a in arb_bitset(200), shift in 0usize..210) {
            let mut rng_b = a.clone();
            // derive a second set deterministically from the first
            for i in (0..a.len()).step_by(3) { rng_b.set(i).unwrap(); }
            let na = NaiveBits::from_bitset(&a);
            let nb = NaiveBits::from_bitset(&rng_b);

            prop_assert_eq!(NaiveBits::from_bitset(&a.and(&rng_b)), na.and(&nb));
            prop_assert_eq!(NaiveBits::from_bitset(&a.or(&rng_b)), na.or(&nb));
            prop_assert_eq!(NaiveBits::from_bitset(&a.shifted_down(shift)), na.shifted_down(shift));
            prop_assert_eq!(NaiveBits::from_bitset(&a.shifted_up(shift)), na.shifted_up(shift));
        }

        #[test]
        fn bit_string_round_trip(a in arb_bitset(130)) {
            let s = a.to_bit_string();
            let back = DayBitset::from_bit_string(&s, a.len()).unwrap();
            prop_assert_eq!(back, a);
        }
    }

    #[test]
    fn set_get_clear() {
        let mut b = DayBitset::new(70);
        assert!(!b.any());
        b.set(0).unwrap();
        b.set(69).unwrap();
        assert!(b.get(0) && b.get(69) && !b.get(1));
        assert_eq!(b.count_ones(), 2);
        assert_eq!(b.iter_ones().collect::<Vec<_>>(), vec![0, 69]);
        b.clear(0).unwrap();
        assert_eq!(b.first_one(), Some(69));
        assert!(b.set(70).is_err());
    }

    #[test]
    fn full_masks_tail() {
        let b = DayBitset::full(67);
        assert_eq!(b.count_ones(), 67);
        assert!(!b.get(67));
    }

    #[test]
    fn subset() {
        let a = DayBitset::from_days(10, [1, 3]).unwrap();
        let b = DayBitset::from_days(10, [1, 3, 5]).unwrap();
        assert!(a.is_subset_of(&b));
        assert!(!b.is_subset_of(&a));
    }
}
