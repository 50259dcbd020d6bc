use escbundle::atlas::{enumerate, AtomCache};
use escbundle::bundle::{
    dual_value, evaluate_dual, solve_trial_qp, BundleElement, BundleSettings, BundleState, Plane,
    QpSettings, TrialQp,
};
use escbundle::driver::verify::{brute_force_alpha, brute_force_maxcut, gnp};
use escbundle::esc::{shifted_cost, DualPoint, EscBlock, EscSet};
use escbundle::graph::{canonical_key, Duplicates, VertexSubset, WeightedGraph};
use escbundle::sdp::{self, CERTIFY_TOL};
use escbundle::separation::project_to_hull;
use escbundle::Problem;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn problem() -> impl Strategy<Value = Problem> {
    prop_oneof![
        Just(Problem::MaxCut),
        Just(Problem::StableSet),
        Just(Problem::Coloring)
    ]
}

fn relabel(g: &WeightedGraph, perm: &[usize]) -> WeightedGraph {
    let edges = g.edges().iter().map(|e| (perm[e.u], perm[e.v], e.weight));
    WeightedGraph::new(g.order(), edges, Duplicates::Collapse).unwrap()
}

fn permutation(n: usize) -> impl Strategy<Value = Vec<usize>> {
    Just((0..n).collect::<Vec<_>>()).prop_shuffle()
}

/// Up to three distinct blocks chosen from `picks`.
fn blocks_from(problem: Problem, g: &WeightedGraph, picks: &[Vec<usize>]) -> EscSet {
    let cache = AtomCache::new();
    let mut set = EscSet::new(problem);
    for vs in picks {
        let mut vs: Vec<usize> = vs.iter().map(|v| v % g.order()).collect();
        vs.sort_unstable();
        vs.dedup();
        if vs.len() < 2 {
            continue;
        }
        let subset = VertexSubset::new(vs, g.order()).unwrap();
        if !set.contains(&subset) {
            set.push(EscBlock::new(problem, g, subset, &cache).unwrap()).unwrap();
        }
    }
    set
}

fn picks() -> impl Strategy<Value = Vec<Vec<usize>>> {
    prop::collection::vec(prop::collection::vec(0usize..10, 2..5), 1..4)
}

fn point(blocks: &EscSet, raw: &[f64]) -> DualPoint {
    let b = blocks.total_constraints();
    DualPoint::from_values(blocks, DVector::from_fn(b, |i, _| raw[i % raw.len()])).unwrap()
}

fn coords() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, 1..40)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn extract_is_adjoint_to_embed(
        problem in problem(),
        n in 3usize..8,
        seed in any::<u64>(),
        picks in picks(),
        raw in coords(),
        entries in prop::collection::vec(-2.0f64..2.0, 64),
    ) {
        let g = gnp(n, 0.5, seed);
        let blocks = blocks_from(problem, &g, &picks);
        prop_assume!(!blocks.is_empty());
        let y = point(&blocks, &raw);
        let block = &blocks.blocks()[0];
        let k = block.order();
        let a = DMatrix::from_fn(k, k, |i, j| entries[i * 8 + j]);
        let s = (&a + a.transpose()) * 0.5;
        let lhs = block.embed(y.segment(0)).dot(&s);
        let rhs = DVector::from_column_slice(y.segment(0)).dot(&block.extract(&s));
        prop_assert!((lhs - rhs).abs() <= 1e-12);
    }

    #[test]
    fn shifted_cost_pairs_with_the_stacked_extraction(
        problem in problem(),
        n in 3usize..8,
        seed in any::<u64>(),
        picks in picks(),
        raw in coords(),
        entries in prop::collection::vec(-2.0f64..2.0, 81),
    ) {
        let g = gnp(n, 0.5, seed);
        let blocks = blocks_from(problem, &g, &picks);
        prop_assume!(!blocks.is_empty());
        let y = point(&blocks, &raw);
        let base = sdp::build_basic(problem, &g);
        let d = base.dim();
        let a = DMatrix::from_fn(d, d, |i, j| entries[i * 9 + j]);
        let x = (&a + a.transpose()) * 0.5;
        let offset = base.vertex_offset();
        let shift = shifted_cost(base.cost(), &y, &blocks, offset) - base.cost();
        let mut stacked = 0.0;
        for (i, block) in blocks.blocks().iter().enumerate() {
            stacked += DVector::from_column_slice(y.segment(i)).dot(&block.extract_from_full(&x, offset));
        }
        prop_assert!((shift.dot(&x) + stacked).abs() <= 1e-11);
    }

    #[test]
    fn atom_count_ignores_vertex_labels(
        problem in problem(),
        (k, perm) in (2usize..7).prop_flat_map(|k| (Just(k), permutation(k))),
        seed in any::<u64>(),
    ) {
        let g = gnp(k, 0.5, seed);
        let h = relabel(&g, &perm);
        prop_assert_eq!(enumerate(problem, &g).unwrap().len(), enumerate(problem, &h).unwrap().len());
        prop_assert_eq!(canonical_key(&g).unwrap(), canonical_key(&h).unwrap());
    }

    #[test]
    fn hull_points_project_onto_themselves(
        problem in problem(),
        k in 2usize..6,
        seed in any::<u64>(),
        weights in prop::collection::vec(0.0f64..1.0, 52),
    ) {
        let g = gnp(k, 0.5, seed);
        let set = enumerate(problem, &g).unwrap();
        let atoms = set.atoms();
        let total: f64 = weights.iter().take(atoms.len()).sum::<f64>() + 1e-9;
        let x = atoms
            .iter()
            .zip(&weights)
            .fold(DMatrix::zeros(k, k), |acc, (a, &w)| acc + a * (w / total));
        let x = x + &atoms[0] * (1.0 - weights.iter().take(atoms.len()).sum::<f64>() / total);
        let p = project_to_hull(&x, atoms, 1e-12);
        let rebuilt = atoms
            .iter()
            .zip(p.lambda.iter())
            .fold(DMatrix::zeros(k, k), |acc, (a, &l)| acc + a * l);
        prop_assert!(p.distance <= 1e-7);
        prop_assert!(((rebuilt - &x).norm() - p.distance).abs() <= 1e-7);
        prop_assert!((p.lambda.sum() - 1.0).abs() <= 1e-9);
        prop_assert!(p.lambda.iter().all(|&l| l >= -1e-12));
    }

    #[test]
    fn projection_ignores_atom_order(
        problem in problem(),
        (k, seed) in (3usize..6, any::<u64>()),
        entries in prop::collection::vec(-1.0f64..1.0, 25),
        rotate in 0usize..50,
    ) {
        let g = gnp(k, 0.5, seed);
        let set = enumerate(problem, &g).unwrap();
        let mut atoms = set.atoms().to_vec();
        let a = DMatrix::from_fn(k, k, |i, j| entries[i * 5 + j]);
        let x = (&a + a.transpose()) * 0.5;
        let d1 = project_to_hull(&x, &atoms, 1e-12).distance;
        let shift = rotate % atoms.len();
        atoms.rotate_left(shift);
        atoms.reverse();
        let d2 = project_to_hull(&x, &atoms, 1e-12).distance;
        prop_assert!((d1 - d2).abs() <= 1e-6 * (1.0 + d1), "{} vs {}", d1, d2);
        let nearest = atoms.iter().map(|c| (c - &x).norm()).fold(f64::INFINITY, f64::min);
        prop_assert!(d1 <= nearest + 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn h_is_convex_with_valid_subgradients(
        problem in problem(),
        seed in any::<u64>(),
        picks in picks(),
        a in coords(),
        b in coords(),
    ) {
        let g = gnp(7, 0.5, seed);
        let blocks = blocks_from(problem, &g, &picks);
        prop_assume!(!blocks.is_empty());
        let base = sdp::build_basic(problem, &g);
        let (y1, y2) = (point(&blocks, &a), point(&blocks, &b));
        let mid = DualPoint::from_values(&blocks, (y1.values() + y2.values()) * 0.5).unwrap();
        let h = |y: &DualPoint| sdp::evaluate_h(y, &blocks, &base, CERTIFY_TOL).unwrap();
        let (r1, r2, rm) = (h(&y1), h(&y2), h(&mid));
        prop_assert!(rm.value <= 0.5 * (r1.value + r2.value) + 1e-6);
        let linear = r1.value + r1.subgradient.dot(&(y2.values() - y1.values()));
        prop_assert!(r2.value >= linear - 1e-6);
        prop_assert!(r1.primal_value <= r1.value + 1e-6);
    }

    #[test]
    fn every_dual_point_bounds_the_optimum(
        maxcut in any::<bool>(),
        n in 4usize..8,
        seed in any::<u64>(),
        picks in picks(),
        raw in prop::collection::vec(-3.0f64..3.0, 1..40),
    ) {
        let problem = if maxcut { Problem::MaxCut } else { Problem::StableSet };
        let g = gnp(n, 0.5, seed);
        let blocks = blocks_from(problem, &g, &picks);
        let base = sdp::build_basic(problem, &g);
        let exact = if maxcut { brute_force_maxcut(&g) } else { brute_force_alpha(&g) as f64 };
        let y = if blocks.is_empty() { DualPoint::zeros(&blocks) } else { point(&blocks, &raw) };
        let f = dual_value(&y, &blocks, &base, CERTIFY_TOL).unwrap();
        prop_assert!(f >= exact - 1e-6, "F = {} below {}", f, exact);
    }

    #[test]
    fn zero_multipliers_for_new_blocks_keep_the_dual_value(
        problem in problem(),
        seed in any::<u64>(),
        picks in picks(),
        extra in prop::collection::vec(0usize..10, 2..5),
        raw in coords(),
    ) {
        let g = gnp(7, 0.5, seed);
        let blocks = blocks_from(problem, &g, &picks);
        prop_assume!(!blocks.is_empty());
        let mut more = blocks.clone();
        let grown = blocks_from(problem, &g, &[extra]);
        prop_assume!(!grown.is_empty() && !blocks.contains(grown.blocks()[0].subset()));
        more.push(grown.blocks()[0].clone()).unwrap();
        let base = sdp::build_basic(problem, &g);
        let y = point(&blocks, &raw);
        let before = evaluate_dual(&y, &blocks, &base, CERTIFY_TOL).unwrap().value;
        let after = evaluate_dual(&y.extended_to(&more).unwrap(), &more, &base, CERTIFY_TOL).unwrap().value;
        prop_assert!((before - after).abs() <= 1e-6 * (1.0 + before.abs()));
        prop_assert_eq!(more.total_constraints(), blocks.total_constraints() + grown.total_constraints());
    }

    #[test]
    fn cutting_plane_model_stays_below_h(
        problem in problem(),
        seed in any::<u64>(),
        picks in picks(),
        samples in prop::collection::vec(coords(), 2..5),
        probe in coords(),
    ) {
        let g = gnp(6, 0.5, seed);
        let blocks = blocks_from(problem, &g, &picks);
        prop_assume!(!blocks.is_empty());
        let base = sdp::build_basic(problem, &g);
        let mut state: Option<BundleState> = None;
        for raw in &samples {
            let y = point(&blocks, raw);
            let r = sdp::evaluate_h(&y, &blocks, &base, CERTIFY_TOL).unwrap();
            let e = BundleElement::from_oracle(y.values(), &r);
            match &mut state {
                None => state = Some(BundleState::new(e, r.value, r.value, 1.0)),
                Some(s) => s.elements.push(e),
            }
        }
        let state = state.unwrap();
        let y = point(&blocks, &probe);
        let h = sdp::evaluate_h(&y, &blocks, &base, CERTIFY_TOL).unwrap().value;
        prop_assert!(state.model_h(y.values()) <= h + 1e-6);
        prop_assert!(state.linearization_errors().iter().all(|&e| e >= -1e-6));
    }

    #[test]
    fn trial_point_beats_random_steps(
        problem in problem(),
        seed in any::<u64>(),
        picks in picks(),
        grads in prop::collection::vec(coords(), 1..6),
        offsets in prop::collection::vec(-1.0f64..1.0, 6),
        center in coords(),
        log_mu in -2.0f64..1.0,
        probes in prop::collection::vec(coords(), 8),
    ) {
        let g = gnp(6, 0.5, seed);
        let blocks = blocks_from(problem, &g, &picks);
        prop_assume!(!blocks.is_empty());
        let b = blocks.total_constraints();
        let expand = |raw: &[f64]| DVector::from_fn(b, |i, _| raw[i % raw.len()]);
        let gs: Vec<DVector<f64>> = grads.iter().map(|r| expand(r) * 2.0).collect();
        let planes: Vec<Plane<'_>> = gs
            .iter()
            .zip(&offsets)
            .map(|(g, &o)| Plane { offset: o, gradient: g })
            .collect();
        let center = expand(&center);
        let mu = 10f64.powf(log_mu);
        let qp = TrialQp { mu, center: &center, planes: &planes, blocks: &blocks };
        let sol = solve_trial_qp(&qp, &QpSettings::default()).unwrap();
        prop_assert!(sol.kkt_residual <= 1e-6);
        let objective = |d: &DVector<f64>| {
            let y = DualPoint::from_values(&blocks, &center + d).unwrap();
            let plane = planes
                .iter()
                .map(|p| p.offset + p.gradient.dot(d))
                .fold(f64::NEG_INFINITY, f64::max);
            plane + blocks.max_terms(&y) + 0.5 * mu * d.norm_squared()
        };
        let d_star = &sol.y - &center;
        prop_assert!((objective(&d_star) - sol.objective).abs() <= 1e-6 * (1.0 + sol.objective.abs()));
        for raw in &probes {
            let d = expand(raw);
            prop_assert!(sol.objective <= objective(&d) + 1e-6 * (1.0 + sol.objective.abs()));
            let near = &d_star + &d * 1e-3;
            prop_assert!(sol.objective <= objective(&near) + 1e-7 * (1.0 + sol.objective.abs()));
        }
    }
}

#[test]
fn default_bundle_settings_validate() {
    let config = escbundle::driver::RunConfig::new(Problem::StableSet);
    assert!(config.validate().is_ok());
    assert_eq!(config.bundle, BundleSettings::default());
}
