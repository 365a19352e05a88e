#![allow(dead_code)]

use spreadcode::{BitVector, NodeId};

/// B=4, alpha=2 under x^4+x+1, nodes N_1..N_5.
pub const B4_BASES: [[&str; 2]; 5] = [
    ["1000", "0110"],
    ["0100", "0011"],
    ["0010", "1101"],
    ["0001", "1010"],
    ["1100", "0101"],
];

/// B=6, alpha=2 under x^6+x+1, nodes N_1..N_21.
pub const B6_BASES: [[&str; 2]; 21] = [
    ["100000", "110111"],
    ["010000", "101011"],
    ["001000", "100101"],
    ["000100", "100010"],
    ["000010", "010001"],
    ["000001", "111000"],
    ["110000", "011100"],
    ["011000", "001110"],
    ["001100", "000111"],
    ["000110", "110011"],
    ["000011", "101001"],
    ["110001", "100100"],
    ["101000", "010010"],
    ["010100", "001001"],
    ["001010", "110100"],
    ["000101", "011010"],
    ["110010", "001101"],
    ["011001", "110110"],
    ["111100", "011011"],
    ["011110", "111101"],
    ["001111", "101110"],
];

pub fn bv(s: &str) -> BitVector {
    s.parse().unwrap()
}

pub fn n(id: u32) -> NodeId {
    NodeId::new(id).unwrap()
}

/// Rank over GF(2) by brute force: the largest subset size whose
/// nonempty sub-XORs are all nonzero.
pub fn rank_by_subsets(rows: &[u32]) -> usize {
    let m = rows.len();
    let mut best = 0;
    for mask in 0u32..(1 << m) {
        let chosen: Vec<u32> = (0..m).filter(|&i| mask >> i & 1 == 1).map(|i| rows[i]).collect();
        let independent = (1u32..(1 << chosen.len())).all(|sub| {
            (0..chosen.len()).filter(|&i| sub >> i & 1 == 1).fold(0, |acc, i| acc ^ chosen[i]) != 0
        });
        if independent {
            best = best.max(chosen.len());
        }
    }
    best
}

/// Smallest index subset of `pool` XOR-ing to `target`, by enumeration.
pub fn min_xor_subset(target: u32, pool: &[u32]) -> Option<usize> {
    (0u32..(1 << pool.len()))
        .filter(|&mask| (0..pool.len()).filter(|&i| mask >> i & 1 == 1).fold(0, |acc, i| acc ^ pool[i]) == target)
        .map(|mask| mask.count_ones() as usize)
        .min()
}
