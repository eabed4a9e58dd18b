//! Degeneracy-weighted minimum-weight perfect matching decoder.
//!
//! Defects are paired on the complete graph with edge weights
//! `d_ab - τ ln D_ab`, where `d_ab` is the torus Manhattan distance between
//! the two plaquettes and `D_ab = C(dx + dy, dx)` counts the shortest lattice
//! paths joining them. Each pair is then joined by one canonical shortest
//! path to form the correction chain.

pub mod blossom;

use crate::error::{Error, Result};
use crate::lattice::{ErrorChain, Plaquette, Syndrome, ToricLattice};

/// Fixed-point scale applied to real edge weights before matching.
///
/// Sums of up to a few hundred weights stay far below `i64::MAX / 4`.
const WEIGHT_SCALE: f64 = 1e9;

/// Default degeneracy weighting.
pub const DEFAULT_TAU: f64 = 0.02;

/// Shortest displacement between two plaquettes on the torus.
///
/// `dx`, `dy` are the path lengths along each axis; `step_x`, `step_y` are
/// the directions (+1 or -1) realising them. For odd `L` the shortest
/// direction per axis is unique whenever the offset is non-zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Displacement {
    pub dx: usize,
    pub dy: usize,
    pub step_x: i8,
    pub step_y: i8,
}

impl Displacement {
    pub fn distance(&self) -> usize {
        self.dx + self.dy
    }
}

fn axis_offset(from: usize, to: usize, size: usize) -> (usize, i8) {
    let forward = (to + size - from) % size;
    if forward <= size / 2 {
        (forward, 1)
    } else {
        (size - forward, -1)
    }
}

pub fn displacement(a: Plaquette, b: Plaquette, size: usize) -> Displacement {
    let (dx, step_x) = axis_offset(a.x, b.x, size);
    let (dy, step_y) = axis_offset(a.y, b.y, size);
    Displacement { dx, dy, step_x, step_y }
}

/// `(dx, dy)` with `dx = min(|Δx|, L - |Δx|)` and likewise for `dy`.
pub fn torus_displacement(a: Plaquette, b: Plaquette, size: usize) -> (usize, usize) {
    let d = displacement(a, b, size);
    (d.dx, d.dy)
}

/// Number of monotone shortest lattice paths, `C(dx + dy, dx)`.
pub fn path_degeneracy(dx: usize, dy: usize) -> u128 {
    let k = dx.min(dy) as u128;
    let n = (dx + dy) as u128;
    let mut c: u128 = 1;
    for i in 0..k {
        // Exact at each step: c * (n - i) is divisible by (i + 1).
        c = c * (n - i) / (i + 1);
    }
    c
}

/// Largest path degeneracy on an L×L torus, `C(2⌊L/2⌋, ⌊L/2⌋)`.
pub fn max_degeneracy(size: usize) -> u128 {
    path_degeneracy(size / 2, size / 2)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecoderConfig {
    tau: f64,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        DecoderConfig { tau: DEFAULT_TAU }
    }
}

impl DecoderConfig {
    pub fn new(tau: f64) -> Result<Self> {
        if !(tau.is_finite() && tau >= 0.0) {
            return Err(Error::InvalidParameter(format!("tau must be finite and >= 0, got {tau}")));
        }
        Ok(DecoderConfig { tau })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// Checks `τ ln D_max(L) < 1`, so that degeneracy can only reorder
    /// matchings whose integer distances tie.
    pub fn validate_for(&self, lattice: &ToricLattice) -> Result<()> {
        let bound = self.tau * (max_degeneracy(lattice.size()) as f64).ln();
        if bound >= 1.0 {
            return Err(Error::InvalidParameter(format!(
                "tau = {} too large for L = {}: tau * ln D_max = {bound:.4} >= 1",
                self.tau,
                lattice.size()
            )));
        }
        Ok(())
    }
}

/// Complete graph on the defects with degeneracy-modified weights.
#[derive(Debug, Clone, PartialEq)]
pub struct DefectGraph {
    defects: Vec<Plaquette>,
    weights: Vec<f64>,
}

impl DefectGraph {
    pub fn defects(&self) -> &[Plaquette] {
        &self.defects
    }

    pub fn len(&self) -> usize {
        self.defects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.defects.is_empty()
    }

    /// `w_ab`; panics on the diagonal.
    pub fn weight(&self, a: usize, b: usize) -> f64 {
        assert!(a != b, "no self-edges in the defect graph");
        self.weights[a * self.defects.len() + b]
    }

    /// Builds a graph from an explicit symmetric weight function, for
    /// matching problems not derived from a syndrome.
    pub fn from_weights<F: Fn(usize, usize) -> f64>(n: usize, weight: F) -> Self {
        let mut weights = vec![0.0; n * n];
        for a in 0..n {
            for b in (a + 1)..n {
                let w = weight(a, b);
                weights[a * n + b] = w;
                weights[b * n + a] = w;
            }
        }
        DefectGraph {
            defects: vec![Plaquette::new(0, 0); n],
            weights,
        }
    }
}

pub fn build_defect_graph(syndrome: &Syndrome, lattice: &ToricLattice, config: &DecoderConfig) -> DefectGraph {
    let defects = syndrome.defects().to_vec();
    let n = defects.len();
    assert!(n.is_multiple_of(2), "odd number of defects ({n}) cannot come from a chain");
    let size = lattice.size();
    let mut weights = vec![0.0; n * n];
    for a in 0..n {
        for b in (a + 1)..n {
            let (dx, dy) = torus_displacement(defects[a], defects[b], size);
            let mut w = (dx + dy) as f64;
            if config.tau > 0.0 && dx > 0 && dy > 0 {
                w -= config.tau * (path_degeneracy(dx, dy) as f64).ln();
            }
            weights[a * n + b] = w;
            weights[b * n + a] = w;
        }
    }
    DefectGraph { defects, weights }
}

/// A perfect matching as sorted `(a, b)` pairs with `a < b`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Matching {
    pairs: Vec<(usize, usize)>,
}

impl Matching {
    pub fn from_pairs(mut pairs: Vec<(usize, usize)>) -> Self {
        for p in &mut pairs {
            if p.0 > p.1 {
                *p = (p.1, p.0);
            }
        }
        pairs.sort_unstable();
        Matching { pairs }
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn total_weight(&self, graph: &DefectGraph) -> f64 {
        self.pairs.iter().map(|&(a, b)| graph.weight(a, b)).sum()
    }
}

/// Exact minimum-weight perfect matching of the defect graph.
///
/// Weights are rounded to a 10⁻⁹ grid and solved exactly with the blossom
/// algorithm. Among equal-weight optima the solver's choice is a pure
/// function of the input, so repeated calls agree.
pub fn min_weight_perfect_matching(graph: &DefectGraph) -> Matching {
    let n = graph.len();
    let mate = blossom::min_weight_perfect_matching(n, |a, b| {
        (graph.weights[a * n + b] * WEIGHT_SCALE).round() as i64
    });
    Matching::from_pairs(
        mate.iter()
            .enumerate()
            .filter(|&(a, &b)| a < b)
            .map(|(a, &b)| (a, b))
            .collect(),
    )
}

/// Order in which a correction path walks the two axes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PathOrder {
    #[default]
    XThenY,
    YThenX,
}

/// Joins each matched pair with one shortest path and sums them mod 2.
pub fn correction_chain(matching: &Matching, defects: &[Plaquette], lattice: &ToricLattice) -> ErrorChain {
    correction_chain_with(matching, defects, lattice, PathOrder::XThenY)
}

pub fn correction_chain_with(
    matching: &Matching,
    defects: &[Plaquette],
    lattice: &ToricLattice,
    order: PathOrder,
) -> ErrorChain {
    let mut chain = ErrorChain::empty(lattice);
    for &(a, b) in matching.pairs() {
        add_path(&mut chain, defects[a], defects[b], lattice, order);
    }
    chain
}

fn add_path(chain: &mut ErrorChain, from: Plaquette, to: Plaquette, lattice: &ToricLattice, order: PathOrder) {
    let size = lattice.size();
    let d = displacement(from, to, size);
    let mut at = from;
    let walk_x = |chain: &mut ErrorChain, at: &mut Plaquette| {
        for _ in 0..d.dx {
            if d.step_x > 0 {
                chain.flip(lattice.step_right(*at));
                at.x = (at.x + 1) % size;
            } else {
                at.x = (at.x + size - 1) % size;
                chain.flip(lattice.step_right(*at));
            }
        }
    };
    let walk_y = |chain: &mut ErrorChain, at: &mut Plaquette| {
        for _ in 0..d.dy {
            if d.step_y > 0 {
                chain.flip(lattice.step_up(*at));
                at.y = (at.y + 1) % size;
            } else {
                at.y = (at.y + size - 1) % size;
                chain.flip(lattice.step_up(*at));
            }
        }
    };
    match order {
        PathOrder::XThenY => {
            walk_x(chain, &mut at);
            walk_y(chain, &mut at);
        }
        PathOrder::YThenX => {
            walk_y(chain, &mut at);
            walk_x(chain, &mut at);
        }
    }
    debug_assert_eq!(at, to);
}

/// Syndrome → defect graph → matching → correction chain.
pub fn decode(syndrome: &Syndrome, lattice: &ToricLattice, config: &DecoderConfig) -> ErrorChain {
    if syndrome.is_empty() {
        return ErrorChain::empty(lattice);
    }
    let graph = build_defect_graph(syndrome, lattice, config);
    let matching = min_weight_perfect_matching(&graph);
    correction_chain(&matching, graph.defects(), lattice)
}
