use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Derive an independent, reproducible RNG from a run seed and a label.
///
/// Labels isolate the random streams of unrelated components (noise vs.
/// phases vs. shuffles), so adding a consumer never perturbs the others.
/// FNV-1a over the label keeps the derivation platform-independent.
pub fn stream_rng(seed: u64, label: &str) -> ChaCha8Rng {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&h.to_le_bytes());
    key[16..24].copy_from_slice(&seed.rotate_left(17).to_le_bytes());
    key[24..32].copy_from_slice(&h.rotate_left(31).to_le_bytes());
    ChaCha8Rng::from_seed(key)
}
