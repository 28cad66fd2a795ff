//! Deterministic seed derivation.
//!
//! Every random stream in the crate draws from a `ChaCha8Rng` seeded through
//! this module, so a (base seed, purpose tag, counter) triple fully determines
//! the stream and adding new streams never perturbs existing ones.

/// splitmix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

fn fnv1a(s: &str) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in s.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Derives an independent stream seed from a base seed, a purpose tag, and a
/// counter.
pub fn derive(base: u64, tag: &str, k: u64) -> u64 {
    mix(mix(base ^ fnv1a(tag)) ^ k)
}
