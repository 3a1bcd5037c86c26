//! Deterministic seed derivation.
//!
//! Every random draw in the crate comes from a ChaCha stream seeded through
//! the same 64-bit FNV-1a scheme, so identical run seeds reproduce identical
//! artifacts byte for byte. Sub-seeds are derived by hashing the parent seed
//! together with either a label or an index, both encoded little-endian.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// 64-bit FNV-1a over a byte slice.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash = FNV_OFFSET;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(FNV_PRIME);
    }
    hash
}

/// Per-component execution seed: FNV-1a over the little-endian concatenation
/// of (run seed, component id, instance counter).
pub fn component_seed(run_seed: u64, component: u64, instance: u64) -> u64 {
    let mut bytes = [0u8; 24];
    bytes[0..8].copy_from_slice(&run_seed.to_le_bytes());
    bytes[8..16].copy_from_slice(&component.to_le_bytes());
    bytes[16..24].copy_from_slice(&instance.to_le_bytes());
    fnv1a64(&bytes)
}

/// Named sub-seed: FNV-1a over the little-endian parent seed followed by the
/// label's UTF-8 bytes.
pub fn named_seed(parent: u64, label: &str) -> u64 {
    let mut bytes = Vec::with_capacity(8 + label.len());
    bytes.extend_from_slice(&parent.to_le_bytes());
    bytes.extend_from_slice(label.as_bytes());
    fnv1a64(&bytes)
}

/// Indexed sub-seed: FNV-1a over the little-endian concatenation of the
/// parent seed and the index.
pub fn indexed_seed(parent: u64, index: u64) -> u64 {
    let mut bytes = [0u8; 16];
    bytes[0..8].copy_from_slice(&parent.to_le_bytes());
    bytes[8..16].copy_from_slice(&index.to_le_bytes());
    fnv1a64(&bytes)
}

/// Deterministic RNG for a derived seed.
pub fn rng_for(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Expands one root seed into the named sub-seeds used by a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct SeedLedger {
    pub root: u64,
    pub offline: u64,
    pub net_init: u64,
    pub loop_seed: u64,
    pub validation: u64,
    pub bench: u64,
}

impl SeedLedger {
    pub fn new(root: u64) -> Self {
        SeedLedger {
            root,
            offline: named_seed(root, "offline"),
            net_init: named_seed(root, "net_init"),
            loop_seed: named_seed(root, "loop"),
            validation: named_seed(root, "validation"),
            bench: named_seed(root, "bench"),
        }
    }
}
