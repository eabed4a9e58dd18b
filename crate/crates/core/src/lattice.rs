//! Geometry of the L×L periodic lattice.
//!
//! Qubits sit on edges. Edge `(orientation, x, y)` has index
//! `orientation * L² + y * L + x`, with horizontal edges first. A horizontal
//! edge `h(x, y)` joins vertices `(x, y)` and `(x + 1, y)`; a vertical edge
//! `v(x, y)` joins `(x, y)` and `(x, y + 1)`. Plaquette `(x, y)` is the face
//! with lower-left corner at vertex `(x, y)`, so its boundary is
//! `{h(x, y), h(x, y + 1), v(x, y), v(x + 1, y)}` (coordinates mod L).
//!
//! Only X errors are simulated. They are detected by the plaquette
//! stabilizers, so defects live on plaquettes (vertices of the dual lattice)
//! and an error edge is a dual edge between its two neighbouring plaquettes.

use std::fmt;

use crate::error::{Error, Result};

/// Edge orientation on the primal lattice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Orientation {
    Horizontal,
    Vertical,
}

/// Coordinates of an edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EdgeCoord {
    pub orientation: Orientation,
    pub x: usize,
    pub y: usize,
}

/// A plaquette, i.e. a site of the dual lattice where defects appear.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Plaquette {
    pub x: usize,
    pub y: usize,
}

impl Plaquette {
    pub fn new(x: usize, y: usize) -> Self {
        Plaquette { x, y }
    }
}

/// An L×L toric lattice with odd `L >= 3`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ToricLattice {
    size: usize,
}

impl ToricLattice {
    /// Even sizes are rejected: they admit two inequivalent shortest
    /// wraparound displacements along an axis.
    pub fn new(size: usize) -> Result<Self> {
        if size < 3 || size.is_multiple_of(2) {
            return Err(Error::InvalidLatticeSize(size));
        }
        Ok(ToricLattice { size })
    }

    /// Linear size L, which is also the code distance.
    pub fn size(&self) -> usize {
        self.size
    }

    /// Number of qubits, `2L²`.
    pub fn num_edges(&self) -> usize {
        2 * self.size * self.size
    }

    pub fn num_plaquettes(&self) -> usize {
        self.size * self.size
    }

    pub fn edge_index(&self, coord: EdgeCoord) -> usize {
        let l = self.size;
        debug_assert!(coord.x < l && coord.y < l);
        let offset = match coord.orientation {
            Orientation::Horizontal => 0,
            Orientation::Vertical => l * l,
        };
        offset + coord.y * l + coord.x
    }

    pub fn edge_coord(&self, index: usize) -> EdgeCoord {
        let l = self.size;
        debug_assert!(index < self.num_edges());
        let orientation = if index < l * l {
            Orientation::Horizontal
        } else {
            Orientation::Vertical
        };
        let rem = index % (l * l);
        EdgeCoord {
            orientation,
            x: rem % l,
            y: rem / l,
        }
    }

    pub fn plaquette_index(&self, p: Plaquette) -> usize {
        p.y * self.size + p.x
    }

    pub fn plaquette(&self, index: usize) -> Plaquette {
        Plaquette::new(index % self.size, index / self.size)
    }

    /// The two plaquettes sharing edge `index`.
    pub fn edge_plaquettes(&self, index: usize) -> [Plaquette; 2] {
        let l = self.size;
        let c = self.edge_coord(index);
        match c.orientation {
            Orientation::Horizontal => [
                Plaquette::new(c.x, c.y),
                Plaquette::new(c.x, (c.y + l - 1) % l),
            ],
            Orientation::Vertical => [
                Plaquette::new(c.x, c.y),
                Plaquette::new((c.x + l - 1) % l, c.y),
            ],
        }
    }

    /// Edge crossed when stepping from plaquette `(x, y)` to `(x + 1, y)`.
    pub fn step_right(&self, from: Plaquette) -> usize {
        let x = (from.x + 1) % self.size;
        self.edge_index(EdgeCoord {
            orientation: Orientation::Vertical,
            x,
            y: from.y,
        })
    }

    /// Edge crossed when stepping from plaquette `(x, y)` to `(x, y + 1)`.
    pub fn step_up(&self, from: Plaquette) -> usize {
        let y = (from.y + 1) % self.size;
        self.edge_index(EdgeCoord {
            orientation: Orientation::Horizontal,
            x: from.x,
            y,
        })
    }

    /// Edges meeting at vertex `(x, y)`: the support of one X-type vertex
    /// stabilizer, which on the dual lattice is the boundary of a single
    /// face. It is the elementary homologically trivial cycle.
    pub fn vertex_star(&self, x: usize, y: usize) -> ErrorChain {
        let l = self.size;
        let edges = [
            self.edge_index(EdgeCoord { orientation: Orientation::Horizontal, x, y }),
            self.edge_index(EdgeCoord { orientation: Orientation::Horizontal, x: (x + l - 1) % l, y }),
            self.edge_index(EdgeCoord { orientation: Orientation::Vertical, x, y }),
            self.edge_index(EdgeCoord { orientation: Orientation::Vertical, x, y: (y + l - 1) % l }),
        ];
        ErrorChain::from_edges(self, edges)
    }

    /// Straight dual loop running horizontally through plaquette row `y`:
    /// the vertical edges `v(0..L, y)`.
    pub fn row_loop(&self, y: usize) -> ErrorChain {
        let l = self.size;
        ErrorChain::from_edges(
            self,
            (0..l).map(|x| self.edge_index(EdgeCoord { orientation: Orientation::Vertical, x, y })),
        )
    }

    /// Straight dual loop running vertically through plaquette column `x`:
    /// the horizontal edges `h(x, 0..L)`.
    pub fn column_loop(&self, x: usize) -> ErrorChain {
        let l = self.size;
        ErrorChain::from_edges(
            self,
            (0..l).map(|y| self.edge_index(EdgeCoord { orientation: Orientation::Horizontal, x, y })),
        )
    }

    /// All `2L` minimum-weight non-trivial cycles: `L` rows then `L` columns.
    pub fn minimal_loops(&self) -> Vec<ErrorChain> {
        (0..self.size)
            .map(|y| self.row_loop(y))
            .chain((0..self.size).map(|x| self.column_loop(x)))
            .collect()
    }

    /// The two fixed minimum-weight X-type logical operators: the row loop
    /// at `y = 0` and the column loop at `x = 0`.
    pub fn logical_supports(&self) -> (ErrorChain, ErrorChain) {
        (self.row_loop(0), self.column_loop(0))
    }

    /// Primal reference loops used for the homology parity check.
    ///
    /// The first is the column of vertical edges `v(0, 0..L)`, which every
    /// row loop crosses once; the second is the row of horizontal edges
    /// `h(0..L, 0)`, which every column loop crosses once. Neither is a
    /// cycle of the X sector.
    pub fn reference_crossings(&self) -> (ErrorChain, ErrorChain) {
        let l = self.size;
        let column = ErrorChain::from_edges(
            self,
            (0..l).map(|y| self.edge_index(EdgeCoord { orientation: Orientation::Vertical, x: 0, y })),
        );
        let row = ErrorChain::from_edges(
            self,
            (0..l).map(|x| self.edge_index(EdgeCoord { orientation: Orientation::Horizontal, x, y: 0 })),
        );
        (column, row)
    }

    fn check(&self, chain: &ErrorChain) -> Result<()> {
        if chain.len() != self.num_edges() {
            return Err(Error::LatticeMismatch {
                expected: self.num_edges(),
                found: chain.len(),
            });
        }
        Ok(())
    }

    /// Plaquettes adjacent to an odd number of edges of `chain`.
    pub fn syndrome(&self, chain: &ErrorChain) -> Syndrome {
        assert_eq!(chain.len(), self.num_edges(), "chain does not belong to this lattice");
        let mut flags = vec![false; self.num_plaquettes()];
        for e in chain.iter() {
            for p in self.edge_plaquettes(e) {
                let i = self.plaquette_index(p);
                flags[i] = !flags[i];
            }
        }
        let defects = flags
            .iter()
            .enumerate()
            .filter(|(_, &f)| f)
            .map(|(i, _)| self.plaquette(i))
            .collect();
        Syndrome { defects }
    }

    pub fn is_cycle(&self, chain: &ErrorChain) -> bool {
        self.syndrome(chain).is_empty()
    }

    /// Homology class of a cycle, by parity against the reference crossings.
    pub fn homology_class(&self, cycle: &ErrorChain) -> Result<HomologyClass> {
        self.check(cycle)?;
        let syndrome = self.syndrome(cycle);
        if !syndrome.is_empty() {
            return Err(Error::NotACycle(syndrome.len()));
        }
        Ok(self.crossing_parity(cycle))
    }

    /// Crossing parities without the cycle check, for callers that already
    /// know `chain` is a cycle.
    pub(crate) fn crossing_parity(&self, chain: &ErrorChain) -> HomologyClass {
        let l = self.size;
        let mut h1 = false;
        let mut h2 = false;
        for y in 0..l {
            h1 ^= chain.contains(self.edge_index(EdgeCoord { orientation: Orientation::Vertical, x: 0, y }));
        }
        for x in 0..l {
            h2 ^= chain.contains(self.edge_index(EdgeCoord { orientation: Orientation::Horizontal, x, y: 0 }));
        }
        HomologyClass { h1, h2 }
    }
}

/// A set of edges carrying an X error, stored as a bit set.
///
/// Addition of chains is symmetric difference.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct ErrorChain {
    len: usize,
    words: Vec<u64>,
}

impl ErrorChain {
    pub fn empty(lattice: &ToricLattice) -> Self {
        Self::with_len(lattice.num_edges())
    }

    pub(crate) fn with_len(len: usize) -> Self {
        ErrorChain {
            len,
            words: vec![0; len.div_ceil(64)],
        }
    }

    /// Builds a chain from edge indices; repeated indices cancel mod 2.
    pub fn from_edges<I: IntoIterator<Item = usize>>(lattice: &ToricLattice, edges: I) -> Self {
        let mut chain = Self::empty(lattice);
        for e in edges {
            chain.flip(e);
        }
        chain
    }

    /// Number of edges of the underlying lattice.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    /// Number of edges in the support, `|E|`.
    pub fn weight(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn contains(&self, edge: usize) -> bool {
        debug_assert!(edge < self.len);
        self.words[edge / 64] >> (edge % 64) & 1 == 1
    }

    pub fn flip(&mut self, edge: usize) {
        assert!(edge < self.len, "edge {edge} out of range");
        self.words[edge / 64] ^= 1 << (edge % 64);
    }

    pub fn insert(&mut self, edge: usize) {
        assert!(edge < self.len, "edge {edge} out of range");
        self.words[edge / 64] |= 1 << (edge % 64);
    }

    /// Symmetric difference `self + other`.
    pub fn sum(&self, other: &ErrorChain) -> ErrorChain {
        let mut out = self.clone();
        out.add_assign(other);
        out
    }

    pub fn add_assign(&mut self, other: &ErrorChain) {
        assert_eq!(self.len, other.len, "chains from different lattices");
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a ^= *b;
        }
    }

    /// Size of the intersection with `other`.
    pub fn overlap(&self, other: &ErrorChain) -> usize {
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a & b).count_ones() as usize)
            .sum()
    }

    /// Edge indices of the support in increasing order.
    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &w)| {
            let mut bits = w;
            std::iter::from_fn(move || {
                if bits == 0 {
                    return None;
                }
                let tz = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                Some(wi * 64 + tz)
            })
        })
    }
}

impl fmt::Debug for ErrorChain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

/// Plaquettes with a `-1` stabilizer outcome, in plaquette-index order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct Syndrome {
    defects: Vec<Plaquette>,
}

impl Syndrome {
    /// Builds a syndrome from arbitrary plaquettes; duplicates cancel.
    pub fn from_defects<I: IntoIterator<Item = Plaquette>>(lattice: &ToricLattice, defects: I) -> Self {
        let mut flags = vec![false; lattice.num_plaquettes()];
        for p in defects {
            let i = lattice.plaquette_index(p);
            flags[i] = !flags[i];
        }
        Syndrome {
            defects: flags
                .iter()
                .enumerate()
                .filter(|(_, &f)| f)
                .map(|(i, _)| lattice.plaquette(i))
                .collect(),
        }
    }

    pub fn defects(&self) -> &[Plaquette] {
        &self.defects
    }

    pub fn len(&self) -> usize {
        self.defects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.defects.is_empty()
    }

    /// Symmetric difference of two syndromes.
    pub fn sum(&self, other: &Syndrome) -> Syndrome {
        let mut out: Vec<Plaquette> = Vec::with_capacity(self.len() + other.len());
        let (mut i, mut j) = (0, 0);
        let key = |p: &Plaquette| (p.y, p.x);
        while i < self.defects.len() || j < other.defects.len() {
            match (self.defects.get(i), other.defects.get(j)) {
                (Some(a), Some(b)) if key(a) == key(b) => {
                    i += 1;
                    j += 1;
                }
                (Some(a), Some(b)) if key(a) < key(b) => {
                    out.push(*a);
                    i += 1;
                }
                (Some(_), Some(b)) => {
                    out.push(*b);
                    j += 1;
                }
                (Some(a), None) => {
                    out.push(*a);
                    i += 1;
                }
                (None, Some(b)) => {
                    out.push(*b);
                    j += 1;
                }
                (None, None) => unreachable!(),
            }
        }
        Syndrome { defects: out }
    }
}

/// Homology class of a cycle as two wrap parities.
///
/// `h1` is set by cycles winding along the rows (they cross the reference
/// column once), `h2` by cycles winding along the columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct HomologyClass {
    pub h1: bool,
    pub h2: bool,
}

impl HomologyClass {
    pub const TRIVIAL: HomologyClass = HomologyClass { h1: false, h2: false };

    pub fn is_trivial(&self) -> bool {
        !self.h1 && !self.h2
    }
}
