//! Small deterministic mixing helpers shared by the seeded generators.

/// SplitMix64 finalizer. Bijective on u64 with good avalanche behavior,
/// identical on every platform.
pub(crate) fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Combine a running hash with one more word.
pub(crate) fn fold(h: u64, w: u64) -> u64 {
    mix64(h ^ w)
}

/// Map a uniform 64-bit word to `0..n` (widening-multiply method).
pub(crate) fn bounded(r: u64, n: u32) -> u32 {
    ((u128::from(r) * u128::from(n)) >> 64) as u32
}
