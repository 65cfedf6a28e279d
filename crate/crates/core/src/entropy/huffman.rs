//! Deterministic canonical Huffman codes from integer weights.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use super::bits::{BitReader, BitWriter};
use crate::{Error, Result};

/// Canonical prefix code over symbol indices `0..len`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HuffmanCode {
    lengths: Vec<u8>,
    codes: Vec<u64>,
    /// Symbols sorted by (length, index): the canonical order.
    sorted: Vec<u32>,
    /// For each length `l`: first canonical code, count, offset into `sorted`.
    first: Vec<u64>,
    count: Vec<u32>,
    offset: Vec<u32>,
}

impl HuffmanCode {
    /// Builds code lengths by repeatedly merging the two lightest subtrees;
    /// equal weights are ordered by the smallest symbol index they contain.
    /// A single symbol gets a one-bit code.
    pub fn from_weights(weights: &[u64]) -> HuffmanCode {
        assert!(!weights.is_empty(), "empty alphabet");
        let n = weights.len();
        let mut lengths = vec![0u8; n];
        if n == 1 {
            lengths[0] = 1;
            return Self::from_lengths(lengths);
        }
        // Nodes: leaves 0..n, internal n.. with children.
        let mut children: Vec<(usize, usize)> = Vec::with_capacity(n - 1);
        let mut heap: BinaryHeap<Reverse<(u64, u32, usize)>> = weights
            .iter()
            .enumerate()
            .map(|(i, &w)| Reverse((w, i as u32, i)))
            .collect();
        while heap.len() > 1 {
            let Reverse((wa, ka, a)) = heap.pop().unwrap();
            let Reverse((wb, kb, b)) = heap.pop().unwrap();
            children.push((a, b));
            heap.push(Reverse((wa + wb, ka.min(kb), n + children.len() - 1)));
        }
        let root = heap.pop().unwrap().0 .2;
        let mut stack = vec![(root, 0u8)];
        while let Some((node, depth)) = stack.pop() {
            if node < n {
                lengths[node] = depth;
            } else {
                let (a, b) = children[node - n];
                stack.push((a, depth + 1));
                stack.push((b, depth + 1));
            }
        }
        Self::from_lengths(lengths)
    }

    /// Assigns canonical codes: shorter codes first, equal lengths by index.
    pub fn from_lengths(lengths: Vec<u8>) -> HuffmanCode {
        let max_len = *lengths.iter().max().unwrap_or(&0) as usize;
        assert!(max_len <= 63, "code length {max_len} exceeds 63 bits");
        let mut sorted: Vec<u32> = (0..lengths.len() as u32).collect();
        sorted.sort_by_key(|&s| (lengths[s as usize], s));
        let mut codes = vec![0u64; lengths.len()];
        let mut first = vec![0u64; max_len + 1];
        let mut count = vec![0u32; max_len + 1];
        let mut offset = vec![0u32; max_len + 1];
        let mut code = 0u64;
        let mut prev_len = 0u8;
        let mut seen = vec![false; max_len + 1];
        for (k, &s) in sorted.iter().enumerate() {
            let l = lengths[s as usize];
            code <<= l - prev_len;
            prev_len = l;
            if !seen[l as usize] {
                seen[l as usize] = true;
                first[l as usize] = code;
                offset[l as usize] = k as u32;
            }
            count[l as usize] += 1;
            codes[s as usize] = code;
            code += 1;
        }
        HuffmanCode {
            lengths,
            codes,
            sorted,
            first,
            count,
            offset,
        }
    }

    pub fn len(&self) -> usize {
        self.lengths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lengths.is_empty()
    }

    pub fn lengths(&self) -> &[u8] {
        &self.lengths
    }

    /// `(code, length)` of a symbol index.
    pub fn code(&self, symbol: usize) -> (u64, u8) {
        (self.codes[symbol], self.lengths[symbol])
    }

    pub fn write(&self, symbol: usize, w: &mut BitWriter) {
        let (c, l) = self.code(symbol);
        w.write(c, l as u32);
    }

    pub fn read(&self, r: &mut BitReader<'_>) -> Result<usize> {
        let mut code = 0u64;
        for l in 1..self.first.len() {
            code = (code << 1) | r.read_bit()?;
            let c = self.count[l] as u64;
            if c > 0 && code >= self.first[l] && code - self.first[l] < c {
                return Ok(self.sorted[(self.offset[l] as u64 + code - self.first[l]) as usize] as usize);
            }
        }
        Err(Error::CorruptBlock("invalid Huffman code".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_symbols_get_one_bit_each() {
        let h = HuffmanCode::from_weights(&[5, 1]);
        assert_eq!(h.lengths(), &[1, 1]);
        assert_eq!(h.code(0), (0, 1));
        assert_eq!(h.code(1), (1, 1));
    }

    #[test]
    fn textbook_lengths() {
        // weights 45,13,12,16,9,5 → lengths 1,3,3,3,4,4
        let h = HuffmanCode::from_weights(&[45, 13, 12, 16, 9, 5]);
        assert_eq!(h.lengths(), &[1, 3, 3, 3, 4, 4]);
        assert_eq!(h.code(0), (0b0, 1));
        assert_eq!(h.code(1), (0b100, 3));
        assert_eq!(h.code(2), (0b101, 3));
        assert_eq!(h.code(3), (0b110, 3));
        assert_eq!(h.code(4), (0b1110, 4));
        assert_eq!(h.code(5), (0b1111, 4));
    }

    #[test]
    fn equal_weights_tie_break_by_index() {
        let a = HuffmanCode::from_weights(&[1, 1, 1]);
        assert_eq!(a.lengths(), &[2, 2, 1]);
        assert_eq!(a, HuffmanCode::from_weights(&[1, 1, 1]));
    }

    #[test]
    fn single_symbol() {
        let h = HuffmanCode::from_weights(&[7]);
        assert_eq!(h.code(0), (0, 1));
    }
}
