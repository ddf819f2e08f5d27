use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Every random stream in the crate comes from here so that results depend
/// only on the user seed and a stream label.
pub(crate) fn stream(seed: u64, label: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(seed, label))
}

/// SplitMix64 finalizer over the pair.
pub(crate) fn mix(seed: u64, label: u64) -> u64 {
    let mut z = seed ^ label.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub(crate) const SPLIT: u64 = 1;
pub(crate) const SYNTH: u64 = 2;
pub(crate) const MLP_INIT: u64 = 3;
pub(crate) const MLP_SHUFFLE: u64 = 4;
pub(crate) const GBR_SUBSAMPLE: u64 = 5;
pub(crate) const FOLDS: u64 = 6;
