//! Cross-cutting invariants: transform identities, score equivalence,
//! posterior/metric consistency, graph-utility properties, and cache
//! exactness.

use covnet_core::{
    bgecm_family_direct, build_bgecm_transform, build_residual_transform, dag_log_score,
    dag_to_dot, edge_accuracy, family_log_marginal, markov_equivalent, moralize, posterior_b,
    posterior_gamma, posterior_psi, skeleton, transform_dataset, undirected_to_dot,
    CovariateMatrix, Dag, Dataset, GraphPrior, Hyperparams, MetricSpec, ScoreCache, Scorer,
    UndirectedGraph,
};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::RngCore;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn ln_gamma(x: f64) -> f64 {
    statrs::function::gamma::ln_gamma(x)
}

/// Box–Muller standard normals from a seeded stream, independent of the
/// crate's samplers.
struct NormalStream(ChaCha8Rng);

impl NormalStream {
    fn new(seed: u64) -> Self {
        Self(ChaCha8Rng::seed_from_u64(seed))
    }

    fn next(&mut self) -> f64 {
        let u1 = (self.0.next_u64() as f64 + 1.0) / (u64::MAX as f64 + 2.0);
        let u2 = (self.0.next_u64() as f64 + 1.0) / (u64::MAX as f64 + 2.0);
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    fn matrix(&mut self, rows: usize, cols: usize) -> DMatrix<f64> {
        DMatrix::from_fn(rows, cols, |_, _| self.next())
    }

    fn vector(&mut self, len: usize) -> DVector<f64> {
        DVector::from_fn(len, |_, _| self.next())
    }
}

fn random_covariates(stream: &mut NormalStream, n: usize, m: usize) -> CovariateMatrix {
    loop {
        if let Ok(q) = CovariateMatrix::new(stream.matrix(n, m)) {
            return q;
        }
    }
}

#[test]
fn cross_path_identity_holds_on_random_instances() {
    let mut stream = NormalStream::new(42);
    for trial in 0..10 {
        let n = 6 + trial % 10;
        let k = trial % 3;
        let m = 1 + trial % 3;
        let upsilon = [0.1, 1.0, 10.0][trial % 3];
        let hp = Hyperparams::new(1.0, 2.0, upsilon).unwrap();
        let q = random_covariates(&mut stream, n, m);
        let x = stream.matrix(n, k);
        let y = stream.vector(n);

        let direct = bgecm_family_direct(&y, &x, &q, &hp).unwrap();
        let t = build_bgecm_transform(&q, hp.upsilon).unwrap();
        let transformed =
            family_log_marginal(&(t.l.transpose() * &y), &(t.l.transpose() * &x), hp.tau, hp.delta)
                .unwrap();
        let rel = (direct - transformed).abs() / transformed.abs().max(1.0);
        assert!(rel < 1e-8, "trial {trial}: {direct} vs {transformed}");
    }
}

#[test]
fn bgecm_transform_eigenvalues_lie_in_unit_interval() {
    let mut stream = NormalStream::new(7);
    let q = random_covariates(&mut stream, 10, 3);
    let t = build_bgecm_transform(&q, 1.0).unwrap();
    assert!((&t.j - t.j.transpose()).abs().max() < 1e-12);
    let eigen = t.j.clone().symmetric_eigenvalues();
    for lambda in eigen.iter() {
        assert!(*lambda > 0.0 && *lambda <= 1.0 + 1e-12, "eigenvalue {lambda}");
    }
    // Lower bound υ/(υ + s²) from the largest covariate singular value.
    let s_max = q
        .values()
        .clone()
        .singular_values()
        .iter()
        .cloned()
        .fold(0.0_f64, f64::max);
    let floor = 1.0 / (1.0 + s_max * s_max);
    for lambda in eigen.iter() {
        assert!(*lambda > floor - 1e-12);
    }
}

/// Reversing a covered edge (pa(v) = pa(u) ∪ {u}) preserves the Markov
/// equivalence class; scores must agree for all three metrics.
#[test]
fn score_equivalence_under_covered_edge_reversal() {
    let mut stream = NormalStream::new(11);
    let hp = Hyperparams::default();
    let mut tested = 0;
    for trial in 0..40 {
        let p = 4;
        let n = 12;
        let dag = random_dag(&mut stream, p, 0.5);
        let Some((u, v)) = covered_edge(&dag) else {
            continue;
        };
        let mut edges: Vec<(usize, usize)> = dag.edges().collect();
        edges.retain(|&e| e != (u, v));
        edges.push((v, u));
        let reversed = Dag::new(p, edges).unwrap();
        assert!(markov_equivalent(&dag, &reversed).unwrap());

        let data = Dataset::with_default_names(stream.matrix(n, p)).unwrap();
        let q = random_covariates(&mut stream, n, 2);
        for metric in [
            MetricSpec::bge(),
            MetricSpec::bgecm(q.clone()),
            MetricSpec::residual(q.clone()),
        ] {
            let a = dag_log_score(&dag, &data, &metric, &hp, GraphPrior::Uniform).unwrap();
            let b = dag_log_score(&reversed, &data, &metric, &hp, GraphPrior::Uniform).unwrap();
            assert!(
                (a.total_log_score - b.total_log_score).abs() < 1e-9,
                "trial {trial}: {} vs {}",
                a.total_log_score,
                b.total_log_score
            );
        }
        tested += 1;
        if tested >= 10 {
            break;
        }
    }
    assert!(tested >= 5, "too few covered edges found: {tested}");
}

fn random_dag(stream: &mut NormalStream, p: usize, prob: f64) -> Dag {
    let mut edges = Vec::new();
    for u in 0..p {
        for v in (u + 1)..p {
            let coin = (stream.next().abs() * 0.7977) % 1.0;
            if coin < prob {
                edges.push((u, v));
            }
        }
    }
    Dag::new(p, edges).unwrap()
}

fn covered_edge(dag: &Dag) -> Option<(usize, usize)> {
    let parent_sets = dag.parent_sets();
    dag.edges().find(|&(u, v)| {
        let mut expect = parent_sets[u].clone();
        expect.push(u);
        expect.sort_unstable();
        expect == parent_sets[v]
    })
}

#[test]
fn bge_is_the_large_upsilon_limit_of_the_adjusted_metric() {
    let mut stream = NormalStream::new(23);
    let hp = Hyperparams::new(1.0, 2.0, 1e10).unwrap();
    for trial in 0..5 {
        let n = 8 + trial;
        let p = 3;
        let data = Dataset::with_default_names(stream.matrix(n, p)).unwrap();
        let q = random_covariates(&mut stream, n, 2);
        let dag = Dag::new(3, [(0, 1), (1, 2)]).unwrap();
        let adjusted =
            dag_log_score(&dag, &data, &MetricSpec::bgecm(q), &hp, GraphPrior::Uniform).unwrap();
        let plain = dag_log_score(
            &dag,
            &data,
            &MetricSpec::bge_uncentered(),
            &hp,
            GraphPrior::Uniform,
        )
        .unwrap();
        for (a, b) in adjusted.family_scores.iter().zip(&plain.family_scores) {
            assert!(
                (a.log_ml - b.log_ml).abs() < 1e-4,
                "family {} differs: {} vs {}",
                a.node,
                a.log_ml,
                b.log_ml
            );
        }
    }
}

#[test]
fn residual_scores_are_invariant_to_the_projection_choice() {
    let mut stream = NormalStream::new(31);
    for trial in 0..5 {
        let n = 9 + trial;
        let m = 2;
        let p = 4;
        let data = Dataset::with_default_names(stream.matrix(n, p)).unwrap();
        let q = random_covariates(&mut stream, n, m);
        let dag = Dag::new(4, [(0, 1), (2, 3)]).unwrap();
        let hp = Hyperparams::default();

        let t1 = build_residual_transform(&q).unwrap();
        // Second construction: right-multiply by a random rotation.
        let rot = random_rotation(&mut stream, n - m);
        let p2 = t1.matrix() * rot;
        let t2 = covnet_core::ResidualTransform::new(p2, &q).unwrap();

        let d1 = transform_dataset(&data, &t1.matrix().transpose()).unwrap();
        let d2 = transform_dataset(&data, &t2.matrix().transpose()).unwrap();
        let s1 = dag_log_score(&dag, &d1, &MetricSpec::bge_uncentered(), &hp, GraphPrior::Uniform)
            .unwrap();
        let s2 = dag_log_score(&dag, &d2, &MetricSpec::bge_uncentered(), &hp, GraphPrior::Uniform)
            .unwrap();
        assert!(
            (s1.total_log_score - s2.total_log_score).abs() < 1e-8,
            "trial {trial}: {} vs {}",
            s1.total_log_score,
            s2.total_log_score
        );

        // The built-in residual path agrees with the explicit projection.
        let s3 = dag_log_score(
            &dag,
            &data,
            &MetricSpec::residual(q.clone()),
            &hp,
            GraphPrior::Uniform,
        )
        .unwrap();
        assert!((s1.total_log_score - s3.total_log_score).abs() < 1e-9);
    }
}

fn random_rotation(stream: &mut NormalStream, size: usize) -> DMatrix<f64> {
    let raw = stream.matrix(size, size);
    let qr = raw.qr();
    qr.q()
}

#[test]
fn changing_one_parent_set_changes_exactly_one_family() {
    let mut stream = NormalStream::new(57);
    let data = Dataset::with_default_names(stream.matrix(14, 5)).unwrap();
    let hp = Hyperparams::default();
    let scorer = Scorer::new(&data, &MetricSpec::bge(), &hp, GraphPrior::Uniform).unwrap();

    let base = Dag::new(5, [(0, 1), (2, 1), (3, 4)]).unwrap();
    let changed = Dag::new(5, [(0, 1), (2, 1), (3, 4), (0, 4)]).unwrap();
    let a = scorer.score_dag(&base).unwrap();
    let b = scorer.score_dag(&changed).unwrap();

    let mut differing = Vec::new();
    for node in 0..5 {
        if a.family_scores[node].log_ml != b.family_scores[node].log_ml {
            differing.push(node);
        }
    }
    assert_eq!(differing, vec![4]);
    let family_delta = b.family_scores[4].log_ml - a.family_scores[4].log_ml;
    let total_delta = b.total_log_score - a.total_log_score;
    assert!((total_delta - family_delta).abs() < 1e-12);
}

#[test]
fn posterior_normalizers_reassemble_the_family_marginal() {
    // Two assemblies of prior/posterior normalizing constants must equal the
    // family marginal: one in whitened units from the γ scale, one in raw
    // units from the b scale and the jacobian of the whitening transform.
    let mut stream = NormalStream::new(99);
    for trial in 0..20 {
        let n = 6 + trial % 8;
        let k = trial % 3;
        let m = 1 + trial % 2;
        let hp = Hyperparams::new(1.0, 2.0, [0.5, 1.0, 3.0][trial % 3]).unwrap();
        let q = random_covariates(&mut stream, n, m);
        let x = stream.matrix(n, k);
        let y = stream.vector(n);

        let t = build_bgecm_transform(&q, hp.upsilon).unwrap();
        let family = family_log_marginal(
            &(t.l.transpose() * &y),
            &(t.l.transpose() * &x),
            hp.tau,
            hp.delta,
        )
        .unwrap();

        let (nf, kf, mf) = (n as f64, k as f64, m as f64);
        let a0 = (hp.delta + kf) / 2.0;
        let (shape, rate) = posterior_psi(&y, &x, &t.j, hp.tau, hp.delta).unwrap();
        let two_pi = 2.0 * std::f64::consts::PI;
        let shared = a0 * (hp.tau / 2.0).ln() - ln_gamma(a0) + ln_gamma(shape) - shape * rate.ln();

        // Whitened-units assembly via the γ posterior scale.
        let (_, gamma_scale) = posterior_gamma(&y, &x, &t.j, hp.tau).unwrap();
        let log_det_gamma_scale = if k == 0 {
            0.0
        } else {
            gamma_scale.determinant().ln()
        };
        let assembled_whitened = -(nf / 2.0) * two_pi.ln()
            + 0.5 * log_det_gamma_scale
            + (kf / 2.0) * hp.tau.ln()
            + shared;
        assert!(
            (assembled_whitened - family).abs() < 1e-8,
            "trial {trial} whitened: {assembled_whitened} vs {family}"
        );

        // Raw-units assembly via the b posterior scale plus the jacobian.
        let (_, b_scale) = posterior_b(&y, &x, &q, hp.tau, hp.upsilon).unwrap();
        let mut xtx = x.transpose() * &x;
        for i in 0..k {
            xtx[(i, i)] += hp.tau;
        }
        let log_det_xtx = if k == 0 { 0.0 } else { xtx.determinant().ln() };
        let log_det_k = log_det_xtx - b_scale.determinant().ln() - kf * hp.tau.ln()
            - mf * hp.upsilon.ln();
        let log_det_j = t.j.determinant().ln();
        let assembled_raw =
            -(nf / 2.0) * two_pi.ln() - 0.5 * log_det_k + shared + 0.5 * log_det_j;
        assert!(
            (assembled_raw - family).abs() < 1e-8,
            "trial {trial} raw: {assembled_raw} vs {family}"
        );
    }
}

#[test]
fn cache_lookups_are_bit_exact() {
    let mut stream = NormalStream::new(3);
    let data = Dataset::with_default_names(stream.matrix(10, 4)).unwrap();
    let hp = Hyperparams::default();
    let scorer = Scorer::new(&data, &MetricSpec::bge(), &hp, GraphPrior::Uniform).unwrap();
    let mut cache = ScoreCache::new();
    for parents in [vec![], vec![0], vec![0, 2], vec![2, 3]] {
        let cached = cache.get_or_compute(&scorer, 1, &parents).unwrap();
        let again = cache.get_or_compute(&scorer, 1, &parents).unwrap();
        let fresh = scorer.family(1, &parents).unwrap();
        assert_eq!(cached.to_bits(), fresh.to_bits());
        assert_eq!(again.to_bits(), fresh.to_bits());
    }
}

#[test]
fn markov_equivalence_is_an_equivalence_relation_on_random_triples() {
    let mut stream = NormalStream::new(13);
    for _ in 0..30 {
        let a = random_dag(&mut stream, 4, 0.4);
        let b = random_dag(&mut stream, 4, 0.4);
        let c = random_dag(&mut stream, 4, 0.4);
        assert!(markov_equivalent(&a, &a).unwrap());
        assert_eq!(
            markov_equivalent(&a, &b).unwrap(),
            markov_equivalent(&b, &a).unwrap()
        );
        if markov_equivalent(&a, &b).unwrap() && markov_equivalent(&b, &c).unwrap() {
            assert!(markov_equivalent(&a, &c).unwrap());
        }
    }
}

#[test]
fn dot_output_round_trips_through_a_minimal_parser() {
    let names: Vec<String> = vec!["a".into(), "b 2".into(), "graph".into(), "x4".into()];
    let dag = Dag::new(4, [(0, 1), (2, 3), (0, 3)]).unwrap();
    let text = dag_to_dot(&dag, &names).unwrap();
    let (nodes, edges) = parse_dot(&text, "->");
    assert_eq!(nodes, names);
    let expect: Vec<(String, String)> = dag
        .edges()
        .map(|(u, v)| (names[u].clone(), names[v].clone()))
        .collect();
    assert_eq!(edges, expect);

    let moral = moralize(&dag);
    let text = undirected_to_dot(&moral, &names).unwrap();
    let (nodes, edges) = parse_dot(&text, "--");
    assert_eq!(nodes, names);
    assert_eq!(edges.len(), moral.edge_count());
}

fn unquote(token: &str) -> String {
    let t = token.trim();
    if t.starts_with('"') && t.ends_with('"') && t.len() >= 2 {
        t[1..t.len() - 1].replace("\\\"", "\"").replace("\\\\", "\\")
    } else {
        t.to_string()
    }
}

fn parse_dot(text: &str, connector: &str) -> (Vec<String>, Vec<(String, String)>) {
    let mut nodes = Vec::new();
    let mut edges = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.ends_with('{') || line == "}" || line.is_empty() {
            continue;
        }
        let stmt = line.strip_suffix(';').expect("statement ends with ;");
        if let Some((lhs, rhs)) = stmt.split_once(connector) {
            edges.push((unquote(lhs), unquote(rhs)));
        } else {
            nodes.push(unquote(stmt));
        }
    }
    (nodes, edges)
}

proptest! {
    #[test]
    fn psi_rate_never_falls_below_half_tau(
        seed in 0u64..500,
        tau in 0.1f64..5.0,
        delta in 0.2f64..4.0,
    ) {
        let mut stream = NormalStream::new(seed);
        let n = 6;
        let q = random_covariates(&mut stream, n, 2);
        let t = build_bgecm_transform(&q, 1.0).unwrap();
        let x = stream.matrix(n, 1);
        let y = stream.vector(n) * 3.0;
        let (_, rate) = posterior_psi(&y, &x, &t.j, tau, delta).unwrap();
        prop_assert!(rate >= tau / 2.0 - 1e-12);
    }

    #[test]
    fn skeleton_is_contained_in_moral_graph(seed in 0u64..500) {
        let mut stream = NormalStream::new(seed);
        let dag = random_dag(&mut stream, 5, 0.45);
        let skel = skeleton(&dag);
        let moral = moralize(&dag);
        for (a, b) in skel.edges() {
            prop_assert!(moral.has_edge(a, b));
        }
    }

    #[test]
    fn self_accuracy_counts_own_skeleton(seed in 0u64..200) {
        let mut stream = NormalStream::new(seed);
        let dag = random_dag(&mut stream, 5, 0.4);
        let acc = edge_accuracy(&dag, &dag).unwrap();
        prop_assert_eq!(acc.correct, skeleton(&dag).edge_count());
        prop_assert_eq!(acc.spurious, 0);
        prop_assert_eq!(acc.missing, 0);
    }

    #[test]
    fn posterior_scales_are_symmetric_positive_definite(seed in 0u64..200) {
        let mut stream = NormalStream::new(seed);
        let n = 8;
        let q = random_covariates(&mut stream, n, 2);
        let t = build_bgecm_transform(&q, 1.0).unwrap();
        let x = stream.matrix(n, 2);
        let y = stream.vector(n);
        let (_, gamma_scale) = posterior_gamma(&y, &x, &t.j, 1.0).unwrap();
        let (_, b_scale) = posterior_b(&y, &x, &q, 1.0, 1.0).unwrap();
        for scale in [gamma_scale, b_scale] {
            prop_assert!((&scale - scale.transpose()).abs().max() < 1e-12);
            let eigen = scale.clone().symmetric_eigenvalues();
            for lambda in eigen.iter() {
                prop_assert!(*lambda > 0.0);
            }
        }
    }
}

#[test]
fn undirected_graph_rejects_bad_edges() {
    assert!(UndirectedGraph::new(3, [(0, 0)]).is_err());
    assert!(UndirectedGraph::new(3, [(0, 4)]).is_err());
    let g = UndirectedGraph::new(3, [(2, 0), (0, 2)]).unwrap();
    assert_eq!(g.edge_count(), 1);
}
