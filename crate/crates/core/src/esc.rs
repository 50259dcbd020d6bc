//! Exact subgraph constraints and the linear maps between the SDP matrix,
//! the multiplier vectors and the atom coefficients.
//!
//! For a block on vertex set `I` the constraint reads
//! `extract(sum_i lambda_i C_i - X_I) = 0`, `lambda` in the simplex, where
//! `extract` reads the `b_I` entries that are not already fixed by the
//! basic relaxation. `embed` is its adjoint: off-diagonal positions receive
//! half the multiplier on each side so that `<embed(y), S> = <y, extract(S)>`.

use std::collections::HashSet;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::atlas::{AtomCache, AtomSet};
use crate::error::{Error, Result};
use crate::graph::{VertexSubset, WeightedGraph};
use crate::problem::Problem;

/// Entry positions `(p, q)`, `p <= q`, constrained by an ESC on `g_i`, in
/// lexicographic order.
pub fn positions_for(problem: Problem, g_i: &WeightedGraph) -> Vec<(usize, usize)> {
    let k = g_i.order();
    let mut positions = Vec::new();
    for p in 0..k {
        for q in p..k {
            let keep = match problem {
                Problem::MaxCut => p != q,
                Problem::StableSet => p == q || !g_i.has_edge(p, q),
                Problem::Coloring => p != q && !g_i.has_edge(p, q),
            };
            if keep {
                positions.push((p, q));
            }
        }
    }
    positions
}

/// Closed-form `b_I` for a subgraph with `k` vertices and `m` edges.
pub fn constraint_count(problem: Problem, k: usize, m: usize) -> usize {
    let pairs = k * (k - 1) / 2;
    match problem {
        Problem::MaxCut => pairs,
        Problem::StableSet => pairs + k - m,
        Problem::Coloring => pairs - m,
    }
}

/// One exact subgraph constraint.
#[derive(Debug, Clone)]
pub struct EscBlock {
    subset: VertexSubset,
    problem: Problem,
    atoms: Arc<AtomSet>,
    positions: Vec<(usize, usize)>,
    /// Row `i` is `extract(C_i)`, so `D_I(y) = atom_rows * y`.
    atom_rows: DMatrix<f64>,
}

impl EscBlock {
    pub fn new(
        problem: Problem,
        graph: &WeightedGraph,
        subset: VertexSubset,
        cache: &AtomCache,
    ) -> Result<Self> {
        if subset.vertices().last().is_some_and(|&v| v >= graph.order()) {
            return Err(Error::InvalidSubset(format!(
                "{subset} exceeds graph order {}",
                graph.order()
            )));
        }
        let g_i = graph.induced_subgraph(&subset);
        let atoms = cache.atoms_for(problem, &g_i)?;
        let positions = positions_for(problem, &g_i);
        let atom_rows = DMatrix::from_fn(atoms.len(), positions.len(), |i, e| {
            let (p, q) = positions[e];
            atoms.atoms()[i][(p, q)]
        });
        Ok(Self {
            subset,
            problem,
            atoms,
            positions,
            atom_rows,
        })
    }

    pub fn subset(&self) -> &VertexSubset {
        &self.subset
    }

    pub fn problem(&self) -> Problem {
        self.problem
    }

    pub fn atoms(&self) -> &AtomSet {
        &self.atoms
    }

    pub fn positions(&self) -> &[(usize, usize)] {
        &self.positions
    }

    pub fn order(&self) -> usize {
        self.subset.len()
    }

    /// `b_I`.
    pub fn constraint_count(&self) -> usize {
        self.positions.len()
    }

    /// `t_I`.
    pub fn atom_count(&self) -> usize {
        self.atoms.len()
    }

    pub fn atom_rows(&self) -> &DMatrix<f64> {
        &self.atom_rows
    }

    /// `M_I^T`: reads the constrained entries of a `k x k` matrix.
    pub fn extract(&self, s: &DMatrix<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.positions.len(),
            self.positions.iter().map(|&(p, q)| s[(p, q)]),
        )
    }

    /// `M_I^T P_I`: reads the constrained entries of `X_I` directly from the
    /// full SDP matrix, whose vertex block starts at `offset`.
    pub fn extract_from_full(&self, x: &DMatrix<f64>, offset: usize) -> DVector<f64> {
        let vs = self.subset.vertices();
        DVector::from_iterator(
            self.positions.len(),
            self.positions
                .iter()
                .map(|&(p, q)| x[(offset + vs[p], offset + vs[q])]),
        )
    }

    /// `M_I`: the adjoint of [`extract`](Self::extract).
    pub fn embed(&self, y: &[f64]) -> DMatrix<f64> {
        assert_eq!(y.len(), self.positions.len(), "multiplier length");
        let k = self.order();
        let mut m = DMatrix::zeros(k, k);
        for (&(p, q), &v) in self.positions.iter().zip(y) {
            if p == q {
                m[(p, p)] = v;
            } else {
                m[(p, q)] = 0.5 * v;
                m[(q, p)] = 0.5 * v;
            }
        }
        m
    }

    /// `D_I(y) = A_I M_I(y)`, the inner products `<embed(y), C_i>`.
    pub fn apply_d(&self, y: &[f64]) -> DVector<f64> {
        assert_eq!(y.len(), self.positions.len(), "multiplier length");
        &self.atom_rows * DVector::from_column_slice(y)
    }

    /// `max_i [D_I(y)]_i` and the lowest index attaining it.
    pub fn max_term(&self, y: &[f64]) -> (f64, usize) {
        let d = self.apply_d(y);
        let mut best = (d[0], 0);
        for (i, &v) in d.iter().enumerate().skip(1) {
            if v > best.0 {
                best = (v, i);
            }
        }
        best
    }
}

/// Registry of ESC blocks with their offsets in the stacked multiplier vector.
#[derive(Debug, Clone)]
pub struct EscSet {
    problem: Problem,
    blocks: Vec<EscBlock>,
    offsets: Vec<usize>,
    members: HashSet<VertexSubset>,
}

impl EscSet {
    pub fn new(problem: Problem) -> Self {
        Self {
            problem,
            blocks: Vec::new(),
            offsets: vec![0],
            members: HashSet::new(),
        }
    }

    pub fn problem(&self) -> Problem {
        self.problem
    }

    /// Registers a block; a vertex set may only be registered once.
    pub fn push(&mut self, block: EscBlock) -> Result<()> {
        if block.problem() != self.problem {
            return Err(Error::Dimension(format!(
                "{} block added to {} registry",
                block.problem(),
                self.problem
            )));
        }
        if !self.members.insert(block.subset().clone()) {
            return Err(Error::DuplicateBlock(block.subset().one_based()));
        }
        let end = self.total_constraints() + block.constraint_count();
        self.offsets.push(end);
        self.blocks.push(block);
        Ok(())
    }

    pub fn contains(&self, subset: &VertexSubset) -> bool {
        self.members.contains(subset)
    }

    pub fn blocks(&self) -> &[EscBlock] {
        &self.blocks
    }

    /// `q = |J|`.
    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// `b = sum_I b_I`.
    pub fn total_constraints(&self) -> usize {
        *self.offsets.last().expect("offsets start with 0")
    }

    pub fn total_atoms(&self) -> usize {
        self.blocks.iter().map(EscBlock::atom_count).sum()
    }

    pub fn range(&self, block: usize) -> std::ops::Range<usize> {
        self.offsets[block]..self.offsets[block + 1]
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    /// `sum_I max_i [D_I(y_I)]_i`.
    pub fn max_terms(&self, y: &DualPoint) -> f64 {
        self.blocks
            .iter()
            .enumerate()
            .map(|(i, b)| b.max_term(y.segment(i)).0)
            .sum()
    }
}

/// Stacked multipliers `y = (y_I)_{I in J}`.
#[derive(Debug, Clone, PartialEq)]
pub struct DualPoint {
    values: DVector<f64>,
    offsets: Vec<usize>,
}

impl DualPoint {
    pub fn zeros(blocks: &EscSet) -> Self {
        Self {
            values: DVector::zeros(blocks.total_constraints()),
            offsets: blocks.offsets().to_vec(),
        }
    }

    pub fn from_values(blocks: &EscSet, values: DVector<f64>) -> Result<Self> {
        if values.len() != blocks.total_constraints() {
            return Err(Error::Dimension(format!(
                "dual point of length {} for {} constraints",
                values.len(),
                blocks.total_constraints()
            )));
        }
        Ok(Self {
            values,
            offsets: blocks.offsets().to_vec(),
        })
    }

    /// Keeps the existing coordinates and appends zeros for blocks that were
    /// registered after this point was created.
    pub fn extended_to(&self, blocks: &EscSet) -> Result<Self> {
        let b = blocks.total_constraints();
        if b < self.values.len() || blocks.offsets()[..self.offsets.len()] != self.offsets[..] {
            return Err(Error::Dimension(
                "block registry does not extend this dual point".into(),
            ));
        }
        let mut values = DVector::zeros(b);
        values.rows_mut(0, self.values.len()).copy_from(&self.values);
        Ok(Self {
            values,
            offsets: blocks.offsets().to_vec(),
        })
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn block_count(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn segment(&self, block: usize) -> &[f64] {
        &self.values.as_slice()[self.offsets[block]..self.offsets[block + 1]]
    }
}

/// `C - sum_I P_I^T M_I(y_I)` where the vertex block of `cost` starts at
/// `offset`. Overlapping blocks accumulate.
pub fn shifted_cost(
    cost: &DMatrix<f64>,
    y: &DualPoint,
    blocks: &EscSet,
    offset: usize,
) -> DMatrix<f64> {
    assert_eq!(y.block_count(), blocks.len(), "dual point / registry mismatch");
    let mut shifted = cost.clone();
    for (index, block) in blocks.blocks().iter().enumerate() {
        let vs = block.subset().vertices();
        for (&(p, q), &v) in block.positions().iter().zip(y.segment(index)) {
            let (r, c) = (offset + vs[p], offset + vs[q]);
            if p == q {
                shifted[(r, r)] -= v;
            } else {
                shifted[(r, c)] -= 0.5 * v;
                shifted[(c, r)] -= 0.5 * v;
            }
        }
    }
    shifted
}

#[cfg(test)]
mod tests {
    use super::*;

    fn block(problem: Problem, g: &WeightedGraph, vs: Vec<usize>) -> EscBlock {
        let subset = VertexSubset::new(vs, g.order()).unwrap();
        EscBlock::new(problem, g, subset, &AtomCache::new()).unwrap()
    }

    #[test]
    fn positions_examples() {
        assert_eq!(
            positions_for(Problem::MaxCut, &WeightedGraph::empty(3)),
            vec![(0, 1), (0, 2), (1, 2)]
        );
        assert_eq!(
            positions_for(Problem::StableSet, &WeightedGraph::complete(2)),
            vec![(0, 0), (1, 1)]
        );
        assert_eq!(
            positions_for(Problem::Coloring, &WeightedGraph::empty(3)),
            vec![(0, 1), (0, 2), (1, 2)]
        );
    }

    #[test]
    fn position_counts_follow_closed_form() {
        let g = WeightedGraph::unweighted(5, [(0, 1), (1, 2), (3, 4), (0, 4)]).unwrap();
        for problem in Problem::ALL {
            assert_eq!(
                positions_for(problem, &g).len(),
                constraint_count(problem, 5, g.edge_count())
            );
        }
    }

    #[test]
    fn extract_embed_examples() {
        let k2 = WeightedGraph::complete(2);
        let mc = block(Problem::MaxCut, &k2, vec![0, 1]);
        let s = DMatrix::from_row_slice(2, 2, &[1., -1., -1., 1.]);
        assert_eq!(mc.extract(&s).as_slice(), &[-1.0]);
        assert_eq!(
            mc.embed(&[4.0]),
            DMatrix::from_row_slice(2, 2, &[0., 2., 2., 0.])
        );

        let ss = block(Problem::StableSet, &k2, vec![0, 1]);
        assert_eq!(ss.extract(&DMatrix::identity(2, 2)).as_slice(), &[1.0, 1.0]);
        assert_eq!(
            ss.embed(&[3.0, 5.0]),
            DMatrix::from_row_slice(2, 2, &[3., 0., 0., 5.])
        );
        assert_eq!(ss.extract(&ss.embed(&[3.0, 5.0])).as_slice(), &[3.0, 5.0]);
    }

    #[test]
    fn apply_d_examples() {
        let k2 = WeightedGraph::complete(2);
        let mc = block(Problem::MaxCut, &k2, vec![0, 1]);
        assert_eq!(mc.apply_d(&[0.0]).as_slice(), &[0.0, 0.0]);
        assert_eq!(mc.apply_d(&[2.0]).as_slice(), &[2.0, -2.0]);
        assert_eq!(mc.max_term(&[2.0]), (2.0, 0));
        assert_eq!(mc.max_term(&[-2.0]), (2.0, 1));
        // Tie broken by the lowest atom index.
        assert_eq!(mc.max_term(&[0.0]), (0.0, 0));
    }

    #[test]
    fn registry_rejects_duplicates_and_tracks_offsets() {
        let g = WeightedGraph::cycle(5);
        let cache = AtomCache::new();
        let mut set = EscSet::new(Problem::StableSet);
        for vs in [vec![0, 1, 2], vec![1, 3]] {
            let subset = VertexSubset::new(vs, 5).unwrap();
            set.push(EscBlock::new(Problem::StableSet, &g, subset, &cache).unwrap())
                .unwrap();
        }
        // {1,2,3} on C5 is a path: 3 diagonal + 1 non-edge pair; {2,4} is a non-edge.
        assert_eq!(set.offsets(), &[0, 4, 7]);
        let dup = VertexSubset::new(vec![2, 0, 1], 5).unwrap();
        let err = set
            .push(EscBlock::new(Problem::StableSet, &g, dup, &cache).unwrap())
            .unwrap_err();
        assert!(matches!(err, Error::DuplicateBlock(_)));
    }

    #[test]
    fn shifted_cost_examples() {
        let g = WeightedGraph::complete(3);
        let cache = AtomCache::new();
        let cost = g.laplacian();
        let mut set = EscSet::new(Problem::MaxCut);
        assert_eq!(shifted_cost(&cost, &DualPoint::zeros(&set), &set, 0), cost);

        let full = EscBlock::new(Problem::MaxCut, &g, VertexSubset::full(3), &cache).unwrap();
        set.push(full.clone()).unwrap();
        let y = DualPoint::from_values(&set, DVector::from_vec(vec![1.0, -2.0, 0.5])).unwrap();
        assert_eq!(
            shifted_cost(&cost, &y, &set, 0),
            &cost - full.embed(y.segment(0))
        );
    }

    #[test]
    fn extended_dual_point_keeps_coordinates() {
        let g = WeightedGraph::cycle(5);
        let cache = AtomCache::new();
        let mut set = EscSet::new(Problem::MaxCut);
        set.push(EscBlock::new(Problem::MaxCut, &g, VertexSubset::new(vec![0, 1, 2], 5).unwrap(), &cache).unwrap())
            .unwrap();
        let y = DualPoint::from_values(&set, DVector::from_vec(vec![1.0, 2.0, 3.0])).unwrap();
        set.push(EscBlock::new(Problem::MaxCut, &g, VertexSubset::new(vec![2, 3, 4], 5).unwrap(), &cache).unwrap())
            .unwrap();
        let z = y.extended_to(&set).unwrap();
        assert_eq!(z.segment(0), &[1.0, 2.0, 3.0]);
        assert_eq!(z.segment(1), &[0.0, 0.0, 0.0]);
        assert!((set.max_terms(&z) - set.max_terms(&DualPoint::zeros(&set)) - 6.0).abs() < 1e-12);
    }
}
