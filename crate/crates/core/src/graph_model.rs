//! Edge indexing over vertex pairs, sparsity patterns, and the synthetic
//! graph models used to build ground-truth precision matrices.
//!
//! Vertex pairs `(i, j)` with `i < j` are laid out lexicographically:
//! `(0,1), (0,2), …, (0,p-1), (1,2), …`. Vertices are 0-based in code and
//! 1-based in every exported file.

use std::fmt;

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::scalar::Scalar;

/// Number of vertex pairs, p(p-1)/2.
pub fn num_slots(p: usize) -> usize {
    p * p.saturating_sub(1) / 2
}

/// Linear slot of the pair `(i, j)`, 0-based vertices, `i < j < p`.
pub fn edge_index(i: usize, j: usize, p: usize) -> Result<usize> {
    if i >= j || j >= p {
        return Err(Error::InvalidEdge { i, j, p });
    }
    Ok(slot_unchecked(i, j, p))
}

#[inline]
fn slot_unchecked(i: usize, j: usize, p: usize) -> usize {
    i * p - i * (i + 1) / 2 + (j - i - 1)
}

/// Inverse of [`edge_index`].
pub fn edge_pair(k: usize, p: usize) -> Result<(usize, usize)> {
    if k >= num_slots(p) {
        return Err(Error::InvalidEdge { i: k, j: k, p });
    }
    let mut row_start = 0;
    for i in 0..p {
        let row_len = p - i - 1;
        if k < row_start + row_len {
            return Ok((i, i + 1 + (k - row_start)));
        }
        row_start += row_len;
    }
    unreachable!("slot {k} in range but not located")
}

/// A vertex pair together with its slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EdgeIndex {
    pub i: usize,
    pub j: usize,
    pub k: usize,
}

impl EdgeIndex {
    pub fn new(i: usize, j: usize, p: usize) -> Result<Self> {
        Ok(Self { i, j, k: edge_index(i, j, p)? })
    }

    pub fn from_slot(k: usize, p: usize) -> Result<Self> {
        let (i, j) = edge_pair(k, p)?;
        Ok(Self { i, j, k })
    }
}

/// Precomputed slot → pair table for hot loops.
#[derive(Debug, Clone)]
pub struct EdgeList {
    p: usize,
    pairs: Vec<(usize, usize)>,
}

impl EdgeList {
    pub fn new(p: usize) -> Self {
        let mut pairs = Vec::with_capacity(num_slots(p));
        for i in 0..p {
            for j in (i + 1)..p {
                pairs.push((i, j));
            }
        }
        Self { p, pairs }
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    #[inline]
    pub fn pair(&self, k: usize) -> (usize, usize) {
        self.pairs[k]
    }
}

/// Binary vector over the p(p-1)/2 vertex-pair slots.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SparsityPattern {
    p: usize,
    words: Vec<u64>,
}

impl SparsityPattern {
    pub fn empty(p: usize) -> Self {
        Self { p, words: vec![0; num_slots(p).div_ceil(64)] }
    }

    pub fn full(p: usize) -> Self {
        let mut m = Self::empty(p);
        for k in 0..num_slots(p) {
            m.set(k, true);
        }
        m
    }

    pub fn from_slots<I: IntoIterator<Item = usize>>(p: usize, slots: I) -> Result<Self> {
        let n = num_slots(p);
        let mut m = Self::empty(p);
        for k in slots {
            if k >= n {
                return Err(Error::InvalidEdge { i: k, j: k, p });
            }
            m.set(k, true);
        }
        Ok(m)
    }

    /// Parses a bit string such as `"101"`, slot 0 first.
    pub fn from_bit_str(p: usize, bits: &str) -> Result<Self> {
        if bits.len() != num_slots(p) {
            return Err(Error::InvalidInput(format!(
                "expected {} bits for p = {p}, got {}",
                num_slots(p),
                bits.len()
            )));
        }
        let mut m = Self::empty(p);
        for (k, c) in bits.chars().enumerate() {
            match c {
                '0' => {}
                '1' => m.set(k, true),
                _ => return Err(Error::InvalidInput(format!("bad bit character {c:?}"))),
            }
        }
        Ok(m)
    }

    /// Off-diagonal support of a symmetric matrix: `|a_ij| > zero_tol`.
    pub fn from_support<T: Scalar>(a: &Matrix<T>, zero_tol: T) -> Self {
        let p = a.nrows();
        let mut m = Self::empty(p);
        let mut k = 0;
        for i in 0..p {
            for j in (i + 1)..p {
                if a[(i, j)].abs() > zero_tol || a[(j, i)].abs() > zero_tol {
                    m.set(k, true);
                }
                k += 1;
            }
        }
        m
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn num_slots(&self) -> usize {
        num_slots(self.p)
    }

    #[inline]
    pub fn get(&self, k: usize) -> bool {
        self.words[k / 64] >> (k % 64) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, k: usize, on: bool) {
        let mask = 1u64 << (k % 64);
        if on {
            self.words[k / 64] |= mask;
        } else {
            self.words[k / 64] &= !mask;
        }
    }

    #[inline]
    pub fn flip(&mut self, k: usize) {
        self.words[k / 64] ^= 1u64 << (k % 64);
    }

    pub fn flipped(&self, k: usize) -> Self {
        let mut m = self.clone();
        m.flip(k);
        m
    }

    /// |m|₁
    pub fn count(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn is_subset_of(&self, other: &Self) -> bool {
        self.p == other.p && self.words.iter().zip(&other.words).all(|(a, b)| a & !b == 0)
    }

    pub fn hamming(&self, other: &Self) -> usize {
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a ^ b).count_ones() as usize)
            .sum()
    }

    pub fn intersection_count(&self, other: &Self) -> usize {
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a & b).count_ones() as usize)
            .sum()
    }

    /// Set slots in increasing order.
    pub fn slots(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(w, &word)| {
            let mut bits = word;
            std::iter::from_fn(move || {
                if bits == 0 {
                    return None;
                }
                let b = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                Some(w * 64 + b)
            })
        })
    }

    /// Set slots as 0-based vertex pairs.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let list = EdgeList::new(self.p);
        self.slots().map(|k| list.pair(k)).collect()
    }

    /// All patterns at Hamming distance one.
    pub fn neighbors(&self) -> Vec<Self> {
        (0..self.num_slots()).map(|k| self.flipped(k)).collect()
    }

    /// Symmetric 0/1 matrix with zero diagonal.
    pub fn to_adjacency<T: Scalar>(&self) -> Matrix<T> {
        let mut a = DMatrix::zeros(self.p, self.p);
        for (i, j) in self.edges() {
            a[(i, j)] = T::one();
            a[(j, i)] = T::one();
        }
        a
    }
}

impl fmt::Debug for SparsityPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SparsityPattern(p={}, {})", self.p, self)
    }
}

impl fmt::Display for SparsityPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for k in 0..self.num_slots() {
            f.write_str(if self.get(k) { "1" } else { "0" })?;
        }
        Ok(())
    }
}

/// Neighbors of `m` on the full hypercube.
pub fn pattern_neighbors(m: &SparsityPattern) -> Vec<SparsityPattern> {
    m.neighbors()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GraphModel {
    /// Chain: i ~ j iff |i - j| = 1.
    Ar,
    /// p/10 groups of ten consecutive vertices, each a star around its first vertex.
    Hub,
    /// Independent edges with probability `prob`.
    Random { prob: f64 },
}

impl GraphModel {
    /// Edge probability giving an expected p edges.
    pub fn default_random_prob(p: usize) -> f64 {
        if p < 2 {
            0.0
        } else {
            (2.0 / (p as f64 - 1.0)).min(1.0)
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            GraphModel::Ar => "AR",
            GraphModel::Hub => "Hub",
            GraphModel::Random { .. } => "Random",
        }
    }
}

pub fn generate_graph<R: Rng + ?Sized>(
    model: GraphModel,
    p: usize,
    rng: &mut R,
) -> Result<SparsityPattern> {
    let mut m = SparsityPattern::empty(p);
    match model {
        GraphModel::Ar => {
            for i in 1..p {
                m.set(slot_unchecked(i - 1, i, p), true);
            }
        }
        GraphModel::Hub => {
            if p == 0 || p % 10 != 0 {
                return Err(Error::Config(format!(
                    "hub model needs p divisible by 10, got {p}"
                )));
            }
            for group in 0..p / 10 {
                let center = group * 10;
                for j in (center + 1)..(center + 10) {
                    m.set(slot_unchecked(center, j, p), true);
                }
            }
        }
        GraphModel::Random { prob } => {
            if !(0.0..=1.0).contains(&prob) {
                return Err(Error::Config(format!("edge probability {prob} outside [0, 1]")));
            }
            for k in 0..num_slots(p) {
                if rng.random::<f64>() < prob {
                    m.set(k, true);
                }
            }
        }
    }
    Ok(m)
}

/// Ground truth: graph, precision matrix, and its inverse.
#[derive(Debug, Clone)]
pub struct TrueModel<T: Scalar> {
    pub adjacency: SparsityPattern,
    pub precision: Matrix<T>,
    pub covariance: Matrix<T>,
}

impl<T: Scalar> TrueModel<T> {
    pub fn p(&self) -> usize {
        self.adjacency.p()
    }

    /// Pattern read back from the nonzero off-diagonal entries of the precision.
    pub fn pattern(&self) -> SparsityPattern {
        SparsityPattern::from_support(&self.precision, T::zero())
    }

    pub fn num_edges(&self) -> usize {
        self.adjacency.count()
    }
}

pub const DEFAULT_EDGE_VALUE: f64 = 0.3;
pub const DEFAULT_DIAG_VALUE: f64 = 1.0;

/// Builds a precision matrix with `edge_value` on the graph's edges and
/// `diag_value` on the diagonal. A non-PD result gets one diagonal boost
/// to `|λ_min| + 0.1 + diag_value`.
pub fn synthesize_precision<T: Scalar>(
    adjacency: &SparsityPattern,
    edge_value: T,
    diag_value: T,
) -> Result<TrueModel<T>> {
    if edge_value == T::zero() {
        return Err(Error::Config("edge value must be nonzero".into()));
    }
    let p = adjacency.p();
    let build = |diag: T| {
        let mut theta = DMatrix::from_diagonal_element(p, p, diag);
        for (i, j) in adjacency.edges() {
            theta[(i, j)] = edge_value;
            theta[(j, i)] = edge_value;
        }
        theta
    };

    let mut precision = build(diag_value);
    if !linalg::is_positive_definite(&precision) {
        let lambda_min = linalg::min_eigenvalue(&precision);
        let boosted = lambda_min.abs() + T::lit(0.1) + diag_value;
        log::debug!("precision not PD (λ_min = {lambda_min}); diagonal raised to {boosted}");
        precision = build(boosted);
        if !linalg::is_positive_definite(&precision) {
            return Err(Error::Synthesis {
                min_eigenvalue: linalg::min_eigenvalue(&precision).as_f64(),
            });
        }
    }
    let covariance = linalg::inverse_pd(&precision)?;
    Ok(TrueModel { adjacency: adjacency.clone(), precision, covariance })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    // 1-based helper matching the documented examples.
    fn idx1(i: usize, j: usize, p: usize) -> usize {
        edge_index(i - 1, j - 1, p).unwrap()
    }

    #[test]
    fn lexicographic_slots() {
        assert_eq!(idx1(1, 2, 3), 0);
        assert_eq!(idx1(2, 3, 3), 2);
        assert_eq!(idx1(1, 4, 4), 2);
    }

    #[test]
    fn edge_index_rejects_bad_pairs() {
        assert!(edge_index(1, 1, 3).is_err());
        assert!(edge_index(2, 1, 3).is_err());
        assert!(edge_index(0, 3, 3).is_err());
        assert!(edge_pair(3, 3).is_err());
    }

    #[test]
    fn edge_index_round_trips_exhaustively() {
        for p in 0..=50 {
            let list = EdgeList::new(p);
            let mut k_expected = 0;
            for i in 0..p {
                for j in (i + 1)..p {
                    let k = edge_index(i, j, p).unwrap();
                    assert_eq!(k, k_expected);
                    assert_eq!(edge_pair(k, p).unwrap(), (i, j));
                    assert_eq!(list.pair(k), (i, j));
                    k_expected += 1;
                }
            }
            assert_eq!(k_expected, num_slots(p));
        }
    }

    #[test]
    fn neighbors_of_empty_and_full() {
        let empty = SparsityPattern::empty(3);
        let got: Vec<String> = pattern_neighbors(&empty).iter().map(|m| m.to_string()).collect();
        assert_eq!(got, vec!["100", "010", "001"]);

        let full = SparsityPattern::full(3);
        let got: Vec<String> = pattern_neighbors(&full).iter().map(|m| m.to_string()).collect();
        assert_eq!(got, vec!["011", "101", "110"]);

        let m = SparsityPattern::from_slots(4, [1, 4]).unwrap();
        let nb = pattern_neighbors(&m);
        assert_eq!(nb.len(), 6);
        for n in &nb {
            assert_eq!(n.hamming(&m), 1);
        }
        let mut dedup = nb.clone();
        dedup.sort();
        dedup.dedup();
        assert_eq!(dedup.len(), 6);
    }

    #[test]
    fn slots_iterate_across_word_boundaries() {
        let p = 20; // 190 slots, three words
        let want = vec![0, 63, 64, 127, 128, 189];
        let m = SparsityPattern::from_slots(p, want.clone()).unwrap();
        assert_eq!(m.slots().collect::<Vec<_>>(), want);
        assert_eq!(m.count(), 6);
    }

    #[test]
    fn ar_graph_is_a_chain() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = generate_graph(GraphModel::Ar, 4, &mut rng).unwrap();
        assert_eq!(g.edges(), vec![(0, 1), (1, 2), (2, 3)]);
    }

    #[test]
    fn hub_graph_is_a_star_per_group() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = generate_graph(GraphModel::Hub, 10, &mut rng).unwrap();
        assert_eq!(g.count(), 9);
        assert!(g.edges().iter().all(|&(i, _)| i == 0));

        let g = generate_graph(GraphModel::Hub, 30, &mut rng).unwrap();
        assert_eq!(g.count(), 27);
        assert!(generate_graph(GraphModel::Hub, 15, &mut rng).is_err());
    }

    #[test]
    fn random_graph_edge_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        assert!(generate_graph(GraphModel::Random { prob: 0.0 }, 12, &mut rng).unwrap().is_empty());
        assert_eq!(
            generate_graph(GraphModel::Random { prob: 1.0 }, 12, &mut rng).unwrap().count(),
            num_slots(12)
        );
        assert!(generate_graph(GraphModel::Random { prob: 1.5 }, 12, &mut rng).is_err());

        let a = generate_graph(GraphModel::Random { prob: 0.2 }, 30, &mut ChaCha8Rng::seed_from_u64(4));
        let b = generate_graph(GraphModel::Random { prob: 0.2 }, 30, &mut ChaCha8Rng::seed_from_u64(4));
        assert_eq!(a.unwrap(), b.unwrap());
    }

    #[test]
    fn structured_graphs_ignore_the_seed() {
        for model in [GraphModel::Ar, GraphModel::Hub] {
            let a = generate_graph(model, 20, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
            let b = generate_graph(model, 20, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn empty_graph_gives_identity() {
        let t = synthesize_precision::<f64>(&SparsityPattern::empty(4), 0.3, 1.0).unwrap();
        assert_eq!(t.precision, DMatrix::identity(4, 4));
        assert!(linalg::max_abs_diff(&t.covariance, &DMatrix::identity(4, 4)) < 1e-15);
    }

    #[test]
    fn ar3_precision_and_covariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let g = generate_graph(GraphModel::Ar, 3, &mut rng).unwrap();
        let t = synthesize_precision(&g, 0.4, 1.0).unwrap();
        let expected = DMatrix::from_row_slice(3, 3, &[1.0, 0.4, 0.0, 0.4, 1.0, 0.4, 0.0, 0.4, 1.0]);
        assert_eq!(t.precision, expected);
        // eigenvalues of the tridiagonal: 1, 1 ± 0.4·√2
        let lmin = linalg::min_eigenvalue(&t.precision);
        assert!((lmin - (1.0 - 0.4 * 2f64.sqrt())).abs() < 1e-12);
        let prod = &t.precision * &t.covariance;
        assert!(linalg::max_abs_diff(&prod, &DMatrix::identity(3, 3)) < 1e-10);
    }

    #[test]
    fn non_pd_input_gets_diagonal_boost() {
        // K5 with -0.5 off-diagonal: eigenvalues 1 - 0.5·4 = -1 (once) and 1.5.
        let g = SparsityPattern::full(5);
        let t = synthesize_precision::<f64>(&g, -0.5, 1.0).unwrap();
        assert!((t.precision[(0, 0)] - (1.0 + 0.1 + 1.0)).abs() < 1e-12);
        assert!(linalg::is_positive_definite(&t.precision));
    }

    #[test]
    fn true_pattern_round_trips() {
        for (model, p) in [(GraphModel::Ar, 12), (GraphModel::Hub, 20), (GraphModel::Random { prob: 0.3 }, 15)] {
            let g = generate_graph(model, p, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
            let t = synthesize_precision::<f64>(&g, 0.3, 1.0).unwrap();
            assert_eq!(t.pattern(), g);
            assert!(linalg::cholesky(&t.precision).is_some());
            let prod = &t.precision * &t.covariance;
            assert!(linalg::max_abs_diff(&prod, &DMatrix::identity(p, p)) < 1e-8);
        }
    }

    #[test]
    fn works_in_single_precision() {
        let g = generate_graph(GraphModel::Ar, 5, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let t = synthesize_precision::<f32>(&g, 0.3, 1.0).unwrap();
        let prod = &t.precision * &t.covariance;
        assert!(linalg::max_abs_diff(&prod, &DMatrix::identity(5, 5)) < 1e-5);
    }
}
