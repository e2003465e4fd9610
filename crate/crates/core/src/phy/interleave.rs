//! Seeded bit interleaver.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The permutation applied by [`interleave`]: output `i` takes input `perm[i]`.
pub fn permutation(len: usize, seed: u64) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..len).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    perm
}

pub fn interleave<T: Copy>(bits: &[T], seed: u64) -> Vec<T> {
    permutation(bits.len(), seed)
        .into_iter()
        .map(|i| bits[i])
        .collect()
}

pub fn deinterleave<T: Copy + Default>(bits: &[T], seed: u64) -> Vec<T> {
    let mut out = vec![T::default(); bits.len()];
    for (i, p) in permutation(bits.len(), seed).into_iter().enumerate() {
        out[p] = bits[i];
    }
    out
}
