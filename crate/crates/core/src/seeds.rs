//! Deterministic seed derivation.
//!
//! Every random draw in the pipeline is keyed by a root seed plus a path of
//! integer tags (stage, split, example, band, window, ...). The derivation is
//! an iterated splitmix64 finalizer, so nearby tags land on unrelated streams
//! and the same path always reproduces the same stream.

/// The splitmix64 finalizer: a cheap, well-mixed 64-bit permutation.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a stream seed from a root seed and a tag path by folding each tag
/// through the finalizer.
pub fn derive_seed(root: u64, tags: &[u64]) -> u64 {
    let mut state = splitmix64(root);
    for &t in tags {
        state = splitmix64(state ^ t);
    }
    state
}
