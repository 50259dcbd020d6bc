//! Atom matrices of small induced subgraphs: the vertices of the cut
//! polytope, of the stable-set matrix polytope and of the coloring polytope.
//!
//! Enumeration order is fixed so that convex-combination indices are
//! reproducible: cuts by a binary counter on `c_2..c_k`, stable sets by
//! ascending subset bitmask, colorings by restricted growth strings in
//! lexicographic order.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::graph::{canonical_form, CanonicalKey, WeightedGraph, MAX_CANONICAL_ORDER};
use crate::problem::Problem;

/// Largest subgraph order for which atoms are enumerated.
pub const MAX_ATOM_ORDER: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct AtomSet {
    problem: Problem,
    order: usize,
    atoms: Vec<DMatrix<f64>>,
}

impl AtomSet {
    pub fn problem(&self) -> Problem {
        self.problem
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn atoms(&self) -> &[DMatrix<f64>] {
        &self.atoms
    }

    /// `t_I`, the number of atoms.
    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }
}

fn check_order(k: usize, min: usize) -> Result<()> {
    if k < min || k > MAX_ATOM_ORDER {
        return Err(Error::OrderOutOfRange {
            got: k,
            min,
            max: MAX_ATOM_ORDER,
        });
    }
    Ok(())
}

/// All `2^(k-1)` cut matrices `cc^T` with `c_1 = +1`.
pub fn cut_matrices(k: usize) -> Result<AtomSet> {
    check_order(k, 2)?;
    let atoms = (0..1usize << (k - 1))
        .map(|counter| {
            let c: Vec<f64> = (0..k)
                .map(|i| {
                    if i > 0 && counter >> (i - 1) & 1 == 1 {
                        -1.0
                    } else {
                        1.0
                    }
                })
                .collect();
            DMatrix::from_fn(k, k, |i, j| c[i] * c[j])
        })
        .collect();
    Ok(AtomSet {
        problem: Problem::MaxCut,
        order: k,
        atoms,
    })
}

/// One matrix `ss^T` per stable set of `g`, the empty set included.
pub fn stable_set_matrices(g: &WeightedGraph) -> Result<AtomSet> {
    let k = g.order();
    check_order(k, 1)?;
    let atoms = (0..1usize << k)
        .filter(|&mask| {
            g.edges()
                .iter()
                .all(|e| mask >> e.u & 1 == 0 || mask >> e.v & 1 == 0)
        })
        .map(|mask| DMatrix::from_fn(k, k, |i, j| (mask >> i & mask >> j & 1) as f64))
        .collect();
    Ok(AtomSet {
        problem: Problem::StableSet,
        order: k,
        atoms,
    })
}

/// One matrix `SS^T` per partition of the vertices into stable sets.
pub fn coloring_matrices(g: &WeightedGraph) -> Result<AtomSet> {
    let k = g.order();
    check_order(k, 1)?;
    let mut atoms = Vec::new();
    let mut labels = vec![0usize; k];
    extend_partition(g, &mut labels, 1, 0, &mut atoms);
    Ok(AtomSet {
        problem: Problem::Coloring,
        order: k,
        atoms,
    })
}

// Restricted growth strings: vertex i gets a colour in 0..=max_used+1, and
// only colours not used by earlier neighbours, which keeps the output in
// lexicographic order while skipping improper partitions early.
fn extend_partition(
    g: &WeightedGraph,
    labels: &mut [usize],
    next: usize,
    max_used: usize,
    out: &mut Vec<DMatrix<f64>>,
) {
    let k = labels.len();
    if next == k {
        out.push(DMatrix::from_fn(k, k, |i, j| {
            (labels[i] == labels[j]) as u8 as f64
        }));
        return;
    }
    for colour in 0..=max_used + 1 {
        if (0..next).any(|u| labels[u] == colour && g.has_edge(u, next)) {
            continue;
        }
        labels[next] = colour;
        extend_partition(g, labels, next + 1, max_used.max(colour), out);
    }
}

/// Direct enumeration without caching.
pub fn enumerate(problem: Problem, g: &WeightedGraph) -> Result<AtomSet> {
    match problem {
        Problem::MaxCut => cut_matrices(g.order()),
        Problem::StableSet => stable_set_matrices(g),
        Problem::Coloring => coloring_matrices(g),
    }
}

/// Key for the position of an atom in the direct enumeration order.
fn enumeration_key(problem: Problem, atom: &DMatrix<f64>) -> Vec<usize> {
    let k = atom.nrows();
    match problem {
        Problem::MaxCut => unreachable!("cut atoms are never relabelled"),
        Problem::StableSet => {
            let mask = (0..k)
                .filter(|&i| atom[(i, i)] > 0.5)
                .fold(0usize, |m, i| m | 1 << i);
            vec![mask]
        }
        Problem::Coloring => {
            let mut labels = vec![0usize; k];
            let mut used = 0;
            for i in 0..k {
                match (0..i).find(|&j| atom[(i, j)] > 0.5) {
                    Some(j) => labels[i] = labels[j],
                    None => {
                        labels[i] = used;
                        used += 1;
                    }
                }
            }
            labels
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum CacheKey {
    Order(usize),
    Labelled(Problem, usize, u64),
    Canonical(Problem, CanonicalKey),
}

/// Thread-safe memo of atom sets.
///
/// Max-Cut atoms depend only on the order. Stable-set and coloring atoms are
/// enumerated once per isomorphism class (orders up to 8) and relabelled;
/// the relabelled set is returned in the same order direct enumeration
/// would produce.
#[derive(Debug, Default)]
pub struct AtomCache {
    sets: Mutex<HashMap<CacheKey, Arc<AtomSet>>>,
}

impl AtomCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.sets.lock().expect("atom cache poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn atoms_for(&self, problem: Problem, g: &WeightedGraph) -> Result<Arc<AtomSet>> {
        let k = g.order();
        if problem == Problem::MaxCut {
            return self.get_or_insert(CacheKey::Order(k), || cut_matrices(k));
        }
        check_order(k, 1)?;
        let labelled = CacheKey::Labelled(problem, k, g.pair_mask());
        if let Some(hit) = self.lookup(&labelled) {
            return Ok(hit);
        }
        let set = if k <= MAX_CANONICAL_ORDER {
            let (key, perm) = canonical_form(g)?;
            let canonical = self.get_or_insert(CacheKey::Canonical(problem, key), || {
                let relabelled = WeightedGraph::unweighted(
                    k,
                    (0..k)
                        .flat_map(|a| (a + 1..k).map(move |b| (a, b)))
                        .filter(|&(a, b)| g.has_edge(perm[a], perm[b])),
                )?;
                enumerate(problem, &relabelled)
            })?;
            relabel(&canonical, &perm)
        } else {
            enumerate(problem, g)?
        };
        self.get_or_insert(labelled, || Ok(set))
    }

    fn lookup(&self, key: &CacheKey) -> Option<Arc<AtomSet>> {
        self.sets.lock().expect("atom cache poisoned").get(key).cloned()
    }

    fn get_or_insert(
        &self,
        key: CacheKey,
        build: impl FnOnce() -> Result<AtomSet>,
    ) -> Result<Arc<AtomSet>> {
        if let Some(hit) = self.lookup(&key) {
            return Ok(hit);
        }
        let built = Arc::new(build()?);
        let mut sets = self.sets.lock().expect("atom cache poisoned");
        Ok(sets.entry(key).or_insert(built).clone())
    }
}

// Canonical vertex a is input vertex perm[a].
fn relabel(canonical: &AtomSet, perm: &[usize]) -> AtomSet {
    let k = canonical.order;
    let mut atoms: Vec<DMatrix<f64>> = canonical
        .atoms
        .iter()
        .map(|a| {
            let mut out = DMatrix::zeros(k, k);
            for i in 0..k {
                for j in 0..k {
                    out[(perm[i], perm[j])] = a[(i, j)];
                }
            }
            out
        })
        .collect();
    atoms.sort_by_cached_key(|a| enumeration_key(canonical.problem, a));
    AtomSet {
        problem: canonical.problem,
        order: k,
        atoms,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mat(k: usize, rows: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(k, k, rows)
    }

    #[test]
    fn cuts_of_order_two() {
        let set = cut_matrices(2).unwrap();
        assert_eq!(
            set.atoms(),
            &[mat(2, &[1., 1., 1., 1.]), mat(2, &[1., -1., -1., 1.])]
        );
    }

    #[test]
    fn cut_counts_and_range() {
        assert_eq!(cut_matrices(5).unwrap().len(), 16);
        assert!(cut_matrices(1).is_err());
        assert!(cut_matrices(MAX_ATOM_ORDER + 1).is_err());
    }

    #[test]
    fn order_three_cuts_are_singular_with_trace_three() {
        for atom in cut_matrices(3).unwrap().atoms() {
            assert_eq!(atom.trace(), 3.0);
            assert!(atom.clone().determinant().abs() < 1e-12);
        }
    }

    #[test]
    fn stable_sets_small() {
        let k2 = stable_set_matrices(&WeightedGraph::complete(2)).unwrap();
        assert_eq!(
            k2.atoms(),
            &[
                DMatrix::zeros(2, 2),
                mat(2, &[1., 0., 0., 0.]),
                mat(2, &[0., 0., 0., 1.])
            ]
        );
        let e2 = stable_set_matrices(&WeightedGraph::empty(2)).unwrap();
        assert_eq!(e2.len(), 4);
        assert_eq!(e2.atoms()[3], mat(2, &[1., 1., 1., 1.]));
        assert_eq!(stable_set_matrices(&WeightedGraph::path(3)).unwrap().len(), 5);
    }

    #[test]
    fn colorings_small() {
        let k2 = coloring_matrices(&WeightedGraph::complete(2)).unwrap();
        assert_eq!(k2.atoms(), &[DMatrix::identity(2, 2)]);
        let e2 = coloring_matrices(&WeightedGraph::empty(2)).unwrap();
        assert_eq!(
            e2.atoms(),
            &[mat(2, &[1., 1., 1., 1.]), DMatrix::identity(2, 2)]
        );
        let k3 = coloring_matrices(&WeightedGraph::complete(3)).unwrap();
        assert_eq!(k3.atoms(), &[DMatrix::identity(3, 3)]);
        // 5 three-class, 5 four-class and 1 five-class partitions.
        assert_eq!(coloring_matrices(&WeightedGraph::cycle(5)).unwrap().len(), 11);
    }

    #[test]
    fn maxcut_cache_shares_by_order() {
        let cache = AtomCache::new();
        let a = cache.atoms_for(Problem::MaxCut, &WeightedGraph::path(4)).unwrap();
        let b = cache.atoms_for(Problem::MaxCut, &WeightedGraph::complete(4)).unwrap();
        assert!(Arc::ptr_eq(&a, &b));
    }

    #[test]
    fn cached_sets_match_direct_enumeration() {
        let cache = AtomCache::new();
        let p3 = WeightedGraph::path(3);
        let p3_other = WeightedGraph::unweighted(3, [(0, 1), (0, 2)]).unwrap();
        for problem in [Problem::StableSet, Problem::Coloring] {
            for g in [&p3, &p3_other] {
                let cached = cache.atoms_for(problem, g).unwrap();
                assert_eq!(*cached, enumerate(problem, g).unwrap());
            }
        }
    }

    #[test]
    fn orders_above_canonical_limit_bypass_isomorphism_cache() {
        let cache = AtomCache::new();
        let g = WeightedGraph::cycle(9);
        let set = cache.atoms_for(Problem::StableSet, &g).unwrap();
        assert_eq!(*set, stable_set_matrices(&g).unwrap());
    }
}
