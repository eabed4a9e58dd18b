//! Toric-code error correction under independent bit-flip noise.
//!
//! The crate covers the whole pipeline from a single decoding trial to
//! qubit-overhead planning:
//!
//! - [`lattice`]: edge and plaquette geometry, syndromes, homology classes;
//! - [`noise`]: seeded i.i.d. error sampling and exhaustive enumeration;
//! - [`decoder`]: degeneracy-weighted exact minimum-weight perfect matching;
//! - [`montecarlo`]: failure-rate estimation and the exact small-lattice oracle;
//! - [`scaling`]: threshold, universal-scaling and low-p laws and their fits;
//! - [`overhead`]: inversion of both laws into physical-qubit counts;
//! - [`io`]: the CSV result schema and the fit-report format.

pub mod decoder;
pub mod error;
pub mod io;
pub mod lattice;
pub mod montecarlo;
pub mod noise;
pub mod overhead;
pub mod scaling;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/intro.md")]
    mod intro {}
    #[doc = include_str!("../../../book/src/lattice.md")]
    mod lattice {}
    #[doc = include_str!("../../../book/src/decoder.md")]
    mod decoder {}
    #[doc = include_str!("../../../book/src/montecarlo.md")]
    mod montecarlo {}
    #[doc = include_str!("../../../book/src/scaling.md")]
    mod scaling {}
    #[doc = include_str!("../../../book/src/overhead.md")]
    mod overhead {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
