//! Deterministic seed derivation so independent sub-streams (per trial, per
//! context, per grid cell) never share RNG state.

/// SplitMix64 step; the standard finalizer with full avalanche.
fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A child seed for (`master`, `salt`); distinct salts give decorrelated
/// streams, and the same inputs always give the same output.
pub fn derive(master: u64, salt: u64) -> u64 {
    splitmix64(splitmix64(master) ^ salt.wrapping_mul(0x9e37_79b9_7f4a_7c15))
}
