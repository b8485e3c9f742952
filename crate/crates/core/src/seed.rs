use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Mixes a base seed with stream identifiers (fold, tree, restart, ...).
/// SplitMix64 finaliser applied per component so nearby inputs diverge.
pub(crate) fn derive(base: u64, parts: &[u64]) -> u64 {
    let mut h = base ^ 0x9E37_79B9_7F4A_7C15;
    for &p in parts {
        h = splitmix(h ^ splitmix(p.wrapping_add(0x632B_E59B_D9B4_E019)));
    }
    h
}

pub(crate) fn derive_str(base: u64, parts: &[u64], tag: &str) -> u64 {
    let tag_hash = tag
        .bytes()
        .fold(0xCBF2_9CE4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x100_0000_01B3));
    let mut all = parts.to_vec();
    all.push(tag_hash);
    derive(base, &all)
}

pub(crate) fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
