//! Independent bit-flip noise and exhaustive error enumeration.

use itertools::Itertools;
use rand::distributions::{Bernoulli, Distribution};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::lattice::{ErrorChain, ToricLattice};

/// Each qubit suffers an X error independently with probability `p`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    p: f64,
}

impl NoiseModel {
    pub fn new(p: f64) -> Result<Self> {
        if !(0.0..=0.5).contains(&p) {
            return Err(Error::InvalidErrorRate(p));
        }
        Ok(NoiseModel { p })
    }

    pub fn p(&self) -> f64 {
        self.p
    }
}

/// Identifies one independent random substream.
///
/// Every `(master_seed, stream_index)` pair maps to its own ChaCha8 stream,
/// so a trial's randomness does not depend on which worker runs it or in
/// what order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RandomStream {
    pub master_seed: u64,
    pub stream_index: u64,
}

impl RandomStream {
    pub fn new(master_seed: u64, stream_index: u64) -> Self {
        RandomStream {
            master_seed,
            stream_index,
        }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(self.stream_index);
        rng
    }
}

/// Mixes a seed with an index into a fresh seed (SplitMix64 finalizer).
///
/// Used to give each sweep cell its own master seed.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn sample_error(lattice: &ToricLattice, model: &NoiseModel, stream: RandomStream) -> ErrorChain {
    let mut chain = ErrorChain::empty(lattice);
    if model.p == 0.0 {
        return chain;
    }
    let flip = Bernoulli::new(model.p).expect("p validated on construction");
    let mut rng = stream.rng();
    for e in 0..lattice.num_edges() {
        if flip.sample(&mut rng) {
            chain.insert(e);
        }
    }
    chain
}

/// Every chain of exactly `weight` edges, in lexicographic order of the
/// sorted edge lists.
pub fn enumerate_chains(
    lattice: &ToricLattice,
    weight: usize,
) -> Result<impl Iterator<Item = ErrorChain> + '_> {
    let n = lattice.num_edges();
    if weight > n {
        return Err(Error::WeightOutOfRange { weight, max: n });
    }
    Ok((0..n)
        .combinations(weight)
        .map(move |edges| ErrorChain::from_edges(lattice, edges)))
}

/// The shard of [`enumerate_chains`] whose lowest edge is `first`.
///
/// Concatenating the shards for `first = 0..2L²` reproduces the full
/// enumeration in order; for `weight = 0` only shard 0 is non-empty.
pub fn enumerate_chains_from(
    lattice: &ToricLattice,
    weight: usize,
    first: usize,
) -> Result<Box<dyn Iterator<Item = ErrorChain> + '_>> {
    let n = lattice.num_edges();
    if weight > n {
        return Err(Error::WeightOutOfRange { weight, max: n });
    }
    if weight == 0 {
        let it: Box<dyn Iterator<Item = ErrorChain>> = if first == 0 {
            Box::new(std::iter::once(ErrorChain::empty(lattice)))
        } else {
            Box::new(std::iter::empty())
        };
        return Ok(it);
    }
    if first >= n {
        return Ok(Box::new(std::iter::empty()));
    }
    Ok(Box::new(((first + 1)..n).combinations(weight - 1).map(
        move |rest| ErrorChain::from_edges(lattice, std::iter::once(first).chain(rest)),
    )))
}
