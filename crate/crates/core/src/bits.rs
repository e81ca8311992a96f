//! Bit-vector indexing. Index `v` of an `n`-bit vector space stores
//! component `i` (0-based) in bit `n - 1 - i`, so component 0 is the most
//! significant bit and the integer order is the lexicographic order of the
//! bitstrings. Index 0 is the all-zeros vector.

#[inline]
pub fn bit(v: u64, i: usize, n: usize) -> bool {
    (v >> (n - 1 - i)) & 1 == 1
}

#[inline]
pub fn weight(v: u64) -> u32 {
    v.count_ones()
}

/// Inner product over the integers of two 0/1 vectors.
#[inline]
pub fn inner(x: u64, y: u64) -> u32 {
    (x & y).count_ones()
}

pub fn to_bits(v: u64, n: usize) -> Vec<bool> {
    (0..n).map(|i| bit(v, i, n)).collect()
}

pub fn from_bits(bits: &[bool]) -> u64 {
    bits.iter().fold(0u64, |acc, &b| (acc << 1) | b as u64)
}

/// Mask selecting the given components of an `n`-bit index.
pub fn mask(components: impl IntoIterator<Item = usize>, n: usize) -> u64 {
    components.into_iter().fold(0u64, |acc, i| acc | 1 << (n - 1 - i))
}

/// Binomial coefficient as `u128`; exact for every argument used at desk
/// scale (n <= 64).
pub fn binomial(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}
