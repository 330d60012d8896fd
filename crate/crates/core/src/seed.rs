//! Seed derivation tree.
//!
//! Every random choice in a run flows from one root seed through labeled
//! children, so identical configs reproduce byte-identical outputs:
//!
//! ```text
//! root ─┬─ "problem"  generator-level seed (stored in problem files)
//!       │    └─ "goe"       GOE perturbation entries, keyed further by (i, j)
//!       ├─ "init"     random U0
//!       ├─ "noise"    PGD perturbation balls, keyed further by episode index
//!       └─ "lanczos"  Lanczos start vectors, keyed further by attempt index
//! ```

/// SplitMix64 finalizer; full-period bijective mixer.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed for a labeled branch of the derivation tree.
pub fn child_seed(root: u64, label: &str) -> u64 {
    let mut h = splitmix64(root ^ 0xA076_1D64_78BD_642F);
    for &byte in label.as_bytes() {
        h = splitmix64(h ^ u64::from(byte));
    }
    h
}

/// Child seed keyed by an index (trial number, episode number, matrix entry).
pub fn indexed_seed(root: u64, index: u64) -> u64 {
    splitmix64(splitmix64(root) ^ index.wrapping_mul(0xD6E8_FEB8_6659_FD93))
}

/// Counter-based seed for matrix entry (i, j): order-independent of sampling
/// sequence, so any sub-block of a GOE draw is reproducible in isolation.
pub fn entry_seed(root: u64, i: usize, j: usize) -> u64 {
    indexed_seed(indexed_seed(root, i as u64), j as u64)
}
