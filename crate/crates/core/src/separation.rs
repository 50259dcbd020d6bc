//! Separation of violated exact subgraph constraints.
//!
//! A subgraph `I` is violated when the principal submatrix `X_I` lies
//! outside the convex hull of the atoms of `G_I`; the Frobenius distance to
//! that hull ranks the candidates.

use itertools::Itertools;
use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::atlas::AtomCache;
use crate::error::Result;
use crate::esc::{EscBlock, EscSet};
use crate::graph::{VertexSubset, WeightedGraph};
use crate::problem::Problem;

#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub distance: f64,
    /// Hull coefficients, a point of the unit simplex.
    pub lambda: DVector<f64>,
    /// Frank-Wolfe gap at termination.
    pub gap: f64,
    pub iterations: usize,
}

// Upper triangle with off-diagonal entries scaled by sqrt(2), so that the
// Euclidean norm equals the Frobenius norm of the symmetric matrix.
fn svec(m: &DMatrix<f64>) -> DVector<f64> {
    let k = m.nrows();
    let mut out = Vec::with_capacity(k * (k + 1) / 2);
    for j in 0..k {
        out.push(m[(j, j)]);
        for i in 0..j {
            out.push(std::f64::consts::SQRT_2 * 0.5 * (m[(i, j)] + m[(j, i)]));
        }
    }
    DVector::from_vec(out)
}

/// Euclidean projection of `x` onto `conv(atoms)` by away-step Frank-Wolfe
/// with exact line search, followed by an affine least-squares polish on the
/// final active set.
pub fn project_to_hull(x: &DMatrix<f64>, atoms: &[DMatrix<f64>], tol: f64) -> Projection {
    assert!(!atoms.is_empty(), "projection needs at least one atom");
    let t = atoms.len();
    let xv = svec(x);
    let v = DMatrix::from_columns(&atoms.iter().map(svec).collect::<Vec<_>>());
    let gram = v.tr_mul(&v);
    let vx = v.tr_mul(&xv);

    let start = (0..t)
        .min_by(|&a, &b| {
            (gram[(a, a)] - 2.0 * vx[a]).total_cmp(&(gram[(b, b)] - 2.0 * vx[b]))
        })
        .expect("nonempty");
    let mut lambda = DVector::zeros(t);
    lambda[start] = 1.0;
    let mut gl: DVector<f64> = gram.column(start).into();
    let mut gap = f64::INFINITY;
    let mut iterations = 0;
    while iterations < 50_000 {
        // grad_i = <v_i, V lambda - x>
        let grad = &gl - &vx;
        let lg = lambda.dot(&grad);
        let s = grad.imin();
        gap = lg - grad[s];
        if gap <= tol {
            break;
        }
        let a = (0..t)
            .filter(|&i| lambda[i] > 0.0)
            .max_by(|&i, &j| grad[i].total_cmp(&grad[j]))
            .expect("active set is nonempty");
        let q = lambda.dot(&gl);
        iterations += 1;
        if gap >= grad[a] - lg || lambda[a] >= 1.0 {
            let curvature = gram[(s, s)] - 2.0 * gl[s] + q;
            let step = if curvature > 0.0 { (gap / curvature).min(1.0) } else { 1.0 };
            lambda *= 1.0 - step;
            lambda[s] += step;
            gl = &gl * (1.0 - step) + gram.column(s) * step;
        } else {
            let max_step = lambda[a] / (1.0 - lambda[a]);
            let slope = grad[a] - lg;
            let curvature = q - 2.0 * gl[a] + gram[(a, a)];
            let step = if curvature > 0.0 {
                (slope / curvature).min(max_step)
            } else {
                max_step
            };
            lambda *= 1.0 + step;
            lambda[a] -= step;
            if step == max_step {
                lambda[a] = 0.0;
            }
            gl = &gl * (1.0 + step) - gram.column(a) * step;
        }
    }

    let residual = |l: &DVector<f64>| (&v * l - &xv).norm();
    let mut distance = residual(&lambda);
    if let Some(polished) = polish(&gram, &vx, &lambda) {
        let d = residual(&polished);
        if d <= distance {
            distance = d;
            lambda = polished;
        }
    }
    Projection {
        distance,
        lambda,
        gap,
        iterations,
    }
}

// Minimizes the residual over the affine hull of the active atoms; accepted
// only when the minimizer stays in the simplex.
fn polish(gram: &DMatrix<f64>, vx: &DVector<f64>, lambda: &DVector<f64>) -> Option<DVector<f64>> {
    let active: Vec<usize> = (0..lambda.len()).filter(|&i| lambda[i] > 1e-12).collect();
    let n = active.len();
    let mut kkt = DMatrix::zeros(n + 1, n + 1);
    let mut rhs = DVector::zeros(n + 1);
    for (a, &i) in active.iter().enumerate() {
        for (b, &j) in active.iter().enumerate() {
            kkt[(a, b)] = gram[(i, j)];
        }
        kkt[(a, n)] = 1.0;
        kkt[(n, a)] = 1.0;
        rhs[a] = vx[i];
    }
    rhs[n] = 1.0;
    let sol = kkt.svd(true, true).solve(&rhs, 1e-12).ok()?;
    if sol.rows(0, n).iter().any(|&c| c < -1e-12) {
        return None;
    }
    let mut out = DVector::zeros(lambda.len());
    for (a, &i) in active.iter().enumerate() {
        out[i] = sol[a].max(0.0);
    }
    let total = out.sum();
    (total > 0.0).then(|| out / total)
}

fn principal_submatrix(x: &DMatrix<f64>, offset: usize, vertices: &[usize]) -> DMatrix<f64> {
    let k = vertices.len();
    DMatrix::from_fn(k, k, |a, b| x[(offset + vertices[a], offset + vertices[b])])
}

/// Template matrix of order `k` for the hill-climb: a random cut (or
/// partition) sign pattern `cc^T`, or `ss^T - 3 Diag(s)` for stable sets,
/// whose inner product with `X_I` is `2 (x(E(S)) - x(S))`.
fn template(problem: Problem, k: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    match problem {
        Problem::MaxCut | Problem::Coloring => {
            let c: Vec<f64> = (0..k)
                .map(|_| if rng.random_bool(0.5) { 1.0 } else { -1.0 })
                .collect();
            DMatrix::from_fn(k, k, |a, b| c[a] * c[b])
        }
        Problem::StableSet => {
            let mut s: Vec<f64> = (0..k).map(|_| f64::from(u8::from(rng.random_bool(0.5)))).collect();
            if s.iter().all(|&v| v == 0.0) {
                s[rng.random_range(0..k)] = 1.0;
            }
            DMatrix::from_fn(k, k, |a, b| {
                s[a] * s[b] - if a == b { 3.0 * s[a] } else { 0.0 }
            })
        }
    }
}

/// Candidate subsets of order `k` from `n_candidates` template hill-climbs.
/// `x` is the vertex block of the SDP matrix. Each climb starts from a
/// random ordered `k`-subset and repeatedly makes the single-vertex swap that
/// most decreases `<B, X_I>`, for at most `max_swaps` swaps. The result is
/// deduplicated and deterministic for a fixed seed.
pub fn local_search_candidates(
    x: &DMatrix<f64>,
    problem: Problem,
    k: usize,
    n_candidates: usize,
    max_swaps: usize,
    seed: u64,
) -> Vec<VertexSubset> {
    let n = x.nrows();
    if k > n || k < 2 {
        return Vec::new();
    }
    if k == n {
        return vec![VertexSubset::full(n)];
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for _ in 0..n_candidates {
        let b = template(problem, k, &mut rng);
        let mut order: Vec<usize> = index::sample(&mut rng, n, k).into_vec();
        for _ in 0..max_swaps {
            let mut in_set = vec![false; n];
            order.iter().for_each(|&v| in_set[v] = true);
            // Change of <B, X_I> when position a takes vertex u.
            let mut best = (0.0, usize::MAX, usize::MAX);
            for a in 0..k {
                let contribution = |u: usize| {
                    let mut c = b[(a, a)] * x[(u, u)];
                    for (bb, &w) in order.iter().enumerate() {
                        if bb != a {
                            c += 2.0 * b[(a, bb)] * x[(u, w)];
                        }
                    }
                    c
                };
                let current = contribution(order[a]);
                for u in (0..n).filter(|&u| !in_set[u]) {
                    let delta = contribution(u) - current;
                    if delta < best.0 - 1e-12 {
                        best = (delta, a, u);
                    }
                }
            }
            if best.1 == usize::MAX {
                break;
            }
            order[best.1] = best.2;
        }
        let mut vs = order;
        vs.sort_unstable();
        if seen.insert(vs.clone()) {
            out.push(VertexSubset::new(vs, n).expect("valid subset"));
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeparationSettings {
    /// Distances at or below this count as satisfied.
    pub threshold: f64,
    /// Hill-climbs per requested constraint.
    pub candidate_factor: usize,
    /// Enumerate all `k`-subsets when the estimated projection work
    /// (subsets times atoms squared times matrix size) is below this.
    pub exhaustive_work: f64,
    pub max_swaps: usize,
    pub projection_tol: f64,
}

impl Default for SeparationSettings {
    fn default() -> Self {
        Self {
            threshold: 1e-4,
            candidate_factor: 20,
            exhaustive_work: 3e9,
            max_swaps: 50,
            projection_tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Violation {
    pub block: EscBlock,
    pub distance: f64,
    pub lambda: DVector<f64>,
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Upper bound on the number of atoms of an order-`k` subgraph.
fn max_atoms(problem: Problem, k: usize) -> f64 {
    match problem {
        Problem::MaxCut => 2f64.powi(k as i32 - 1),
        Problem::StableSet => 2f64.powi(k as i32),
        // Bell numbers
        Problem::Coloring => {
            let mut row = vec![1.0];
            for _ in 0..k {
                let mut next = vec![*row.last().expect("nonempty")];
                for v in &row {
                    let last = *next.last().expect("nonempty");
                    next.push(last + v);
                }
                row = next;
            }
            row[0]
        }
    }
}

/// Whether `select_escs` would enumerate every `k`-subset of an `n`-vertex graph.
pub fn is_exhaustive(problem: Problem, n: usize, k: usize, settings: &SeparationSettings) -> bool {
    let atoms = max_atoms(problem, k);
    binomial(n, k) * atoms * atoms * (k * k) as f64 <= settings.exhaustive_work
}

/// The `max_new` most violated order-`k` subgraphs not already in `existing`,
/// in descending order of distance. `x` is the full SDP matrix.
#[allow(clippy::too_many_arguments)]
pub fn select_escs(
    x: &DMatrix<f64>,
    g: &WeightedGraph,
    k: usize,
    max_new: usize,
    existing: &EscSet,
    seed: u64,
    cache: &AtomCache,
    settings: &SeparationSettings,
) -> Result<Vec<Violation>> {
    let problem = existing.problem();
    let n = g.order();
    if max_new == 0 || k < 2 || k > n {
        return Ok(Vec::new());
    }
    let offset = problem.vertex_offset();
    let candidates: Vec<VertexSubset> = if is_exhaustive(problem, n, k, settings) {
        (0..n)
            .combinations(k)
            .map(|vs| VertexSubset::new(vs, n))
            .collect::<Result<_>>()?
    } else {
        let vertex_block = x.view((offset, offset), (n, n)).into_owned();
        local_search_candidates(
            &vertex_block,
            problem,
            k,
            settings.candidate_factor * max_new,
            settings.max_swaps,
            seed,
        )
    };

    let mut scored = Vec::new();
    for subset in candidates {
        if existing.contains(&subset) {
            continue;
        }
        let g_i = g.induced_subgraph(&subset);
        let atoms = cache.atoms_for(problem, &g_i)?;
        let x_i = principal_submatrix(x, offset, subset.vertices());
        let p = project_to_hull(&x_i, atoms.atoms(), settings.projection_tol);
        if p.distance > settings.threshold {
            scored.push((subset, p));
        }
    }
    scored.sort_by(|a, b| {
        b.1.distance
            .total_cmp(&a.1.distance)
            .then_with(|| a.0.vertices().cmp(b.0.vertices()))
    });
    scored.truncate(max_new);
    scored
        .into_iter()
        .map(|(subset, p)| {
            Ok(Violation {
                block: EscBlock::new(problem, g, subset, cache)?,
                distance: p.distance,
                lambda: p.lambda,
            })
        })
        .collect()
}

/// Largest distance over the blocks already registered.
pub fn max_distance(x: &DMatrix<f64>, blocks: &EscSet, tol: f64) -> f64 {
    let offset = blocks.problem().vertex_offset();
    blocks
        .blocks()
        .iter()
        .map(|b| {
            let x_i = principal_submatrix(x, offset, b.subset().vertices());
            project_to_hull(&x_i, b.atoms().atoms(), tol).distance
        })
        .fold(0.0, f64::max)
}
