//! Score-based structure search: a greedy hill-climber with add/delete/
//! reverse operators and restarts, plus an exhaustive enumerator for small
//! node counts used as a test oracle.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::metrics::{FamilyKey, ScoredNetwork, Scorer};
use crate::model::{is_acyclic, Dag, Dataset, GraphPrior, Hyperparams, MetricSpec};

/// Starting graph for each climb.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitStrategy {
    Empty,
    Random,
}

/// Search settings. `restarts` counts additional randomly initialized runs
/// beyond the first; run r derives its sub-seed as seed + r, so results are
/// reproducible and independent of scheduling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SearchConfig {
    pub max_parents: usize,
    pub restarts: usize,
    pub seed: u64,
    pub max_iterations: usize,
    pub init: InitStrategy,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            max_parents: 4,
            restarts: 10,
            seed: 0,
            max_iterations: 500,
            init: InitStrategy::Empty,
        }
    }
}

/// Memo of family evaluations keyed by (node, sorted parent set). A cached
/// value always equals the freshly computed one: both go through the same
/// scorer code path with operands in the same order.
#[derive(Debug, Default, Clone)]
pub struct ScoreCache {
    entries: HashMap<FamilyKey, f64>,
}

impl ScoreCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get_or_compute(
        &mut self,
        scorer: &Scorer,
        node: usize,
        parents: &[usize],
    ) -> Result<f64> {
        if let Some(&v) = self.entries.get(&(node, parents.to_vec())) {
            return Ok(v);
        }
        let v = scorer.family(node, parents)?;
        self.entries.insert((node, parents.to_vec()), v);
        Ok(v)
    }

    pub(crate) fn inner_mut(&mut self) -> &mut HashMap<FamilyKey, f64> {
        &mut self.entries
    }

    fn merge(&mut self, other: ScoreCache) {
        self.entries.extend(other.entries);
    }
}

/// A single edge move. Operation order add < delete < reverse, then
/// (source, target), defines the deterministic tie-break.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeOp {
    Add(usize, usize),
    Delete(usize, usize),
    Reverse(usize, usize),
}

/// All DAGs on p labeled nodes, each exactly once, in a fixed order.
/// Limited to p ≤ 5 (29281 DAGs); larger p is an error.
pub fn enumerate_dags(p: usize) -> Result<Vec<Dag>> {
    if p > 5 {
        return Err(Error::InvalidParam(format!(
            "exhaustive enumeration supports at most 5 nodes, got {p}"
        )));
    }
    if p == 0 {
        return Ok(vec![Dag::empty(0)]);
    }
    let mut pairs = Vec::new();
    for u in 0..p {
        for v in 0..p {
            if u != v {
                pairs.push((u, v));
            }
        }
    }
    let bits = pairs.len();
    let mut out = Vec::new();
    for mask in 0u64..(1u64 << bits) {
        let edges: Vec<(usize, usize)> = pairs
            .iter()
            .enumerate()
            .filter(|(i, _)| mask & (1 << i) != 0)
            .map(|(_, &e)| e)
            .collect();
        if is_acyclic(&edges, p) {
            out.push(Dag::new(p, edges).expect("filtered acyclic"));
        }
    }
    Ok(out)
}

fn insert_sorted(parents: &[usize], u: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(parents.len() + 1);
    let pos = parents.partition_point(|&x| x < u);
    out.extend_from_slice(&parents[..pos]);
    out.push(u);
    out.extend_from_slice(&parents[pos..]);
    out
}

fn remove_sorted(parents: &[usize], u: usize) -> Vec<usize> {
    parents.iter().copied().filter(|&x| x != u).collect()
}

/// Score change of applying `op` to `current`, touching only the affected
/// families (one for add/delete, two for reverse) plus the graph-prior
/// delta. The operation must be legal: the result acyclic and every parent
/// set within the effective-sample bound.
pub fn score_delta(
    scorer: &Scorer,
    cache: &mut ScoreCache,
    current: &ScoredNetwork,
    op: EdgeOp,
) -> Result<f64> {
    let dag = &current.dag;
    let p = dag.p();
    let check_node = |x: usize| -> Result<()> {
        if x >= p {
            return Err(Error::NodeOutOfRange { index: x, p });
        }
        Ok(())
    };
    let family_delta = |cache: &mut ScoreCache, node: usize, parents: &[usize]| -> Result<f64> {
        let new = cache.get_or_compute(scorer, node, parents)?;
        Ok(new - current.family_scores[node].log_ml)
    };
    match op {
        EdgeOp::Add(u, v) => {
            check_node(u)?;
            check_node(v)?;
            if u == v || dag.has_edge(u, v) {
                return Err(Error::InvalidParam("edge addition is not applicable".into()));
            }
            let mut edges: Vec<_> = dag.edges().collect();
            edges.push((u, v));
            if !is_acyclic(&edges, p) {
                return Err(Error::Cyclic);
            }
            let parents = insert_sorted(&current.family_scores[v].parent_set, u);
            let prior = scorer.log_prior(dag.edge_count() + 1) - scorer.log_prior(dag.edge_count());
            Ok(family_delta(cache, v, &parents)? + prior)
        }
        EdgeOp::Delete(u, v) => {
            check_node(u)?;
            check_node(v)?;
            if !dag.has_edge(u, v) {
                return Err(Error::InvalidParam("edge deletion is not applicable".into()));
            }
            let parents = remove_sorted(&current.family_scores[v].parent_set, u);
            let prior = scorer.log_prior(dag.edge_count() - 1) - scorer.log_prior(dag.edge_count());
            Ok(family_delta(cache, v, &parents)? + prior)
        }
        EdgeOp::Reverse(u, v) => {
            check_node(u)?;
            check_node(v)?;
            if !dag.has_edge(u, v) {
                return Err(Error::InvalidParam("edge reversal is not applicable".into()));
            }
            let mut edges: Vec<_> = dag.edges().filter(|&e| e != (u, v)).collect();
            edges.push((v, u));
            if !is_acyclic(&edges, p) {
                return Err(Error::Cyclic);
            }
            let v_parents = remove_sorted(&current.family_scores[v].parent_set, u);
            let u_parents = insert_sorted(&current.family_scores[u].parent_set, v);
            // Edge count is unchanged, so the prior delta is zero.
            Ok(family_delta(cache, v, &v_parents)? + family_delta(cache, u, &u_parents)?)
        }
    }
}

/// Working state of one climb: parent/child adjacency plus cached family
/// scores per node.
struct ClimbState {
    p: usize,
    parents: Vec<Vec<usize>>,
    children: Vec<Vec<usize>>,
    fam: Vec<f64>,
    edge_count: usize,
}

impl ClimbState {
    fn from_parent_sets(
        scorer: &Scorer,
        cache: &mut ScoreCache,
        parent_sets: Vec<Vec<usize>>,
    ) -> Result<Self> {
        let p = parent_sets.len();
        let mut children = vec![Vec::new(); p];
        let mut edge_count = 0;
        for (v, parents) in parent_sets.iter().enumerate() {
            for &u in parents {
                children[u].push(v);
                edge_count += 1;
            }
        }
        for c in &mut children {
            c.sort_unstable();
        }
        let mut fam = Vec::with_capacity(p);
        for (v, parents) in parent_sets.iter().enumerate() {
            fam.push(cache.get_or_compute(scorer, v, parents)?);
        }
        Ok(Self {
            p,
            parents: parent_sets,
            children,
            fam,
            edge_count,
        })
    }

    fn total(&self, scorer: &Scorer) -> f64 {
        scorer.log_prior(self.edge_count) + self.fam.iter().sum::<f64>()
    }

    /// Bitset of nodes reachable from each node via directed paths.
    fn descendants(&self) -> Vec<Vec<u64>> {
        let words = self.p.div_ceil(64);
        let mut reach = vec![vec![0u64; words]; self.p];
        // Process in reverse topological order so child sets are final.
        let order = self.topological_order();
        for &u in order.iter().rev() {
            for &c in &self.children[u] {
                let (cw, cb) = (c / 64, c % 64);
                // reach[u] |= reach[c] | {c}
                let (head, tail) = reach.split_at_mut(u.max(c));
                let (src, dst) = if u < c {
                    (&tail[0], &mut head[u])
                } else {
                    (&head[c], &mut tail[0])
                };
                for w in 0..words {
                    dst[w] |= src[w];
                }
                dst[cw] |= 1 << cb;
            }
        }
        reach
    }

    fn topological_order(&self) -> Vec<usize> {
        let mut indegree: Vec<usize> = self.parents.iter().map(Vec::len).collect();
        let mut ready: Vec<usize> = (0..self.p).filter(|&v| indegree[v] == 0).collect();
        let mut order = Vec::with_capacity(self.p);
        while let Some(u) = ready.pop() {
            order.push(u);
            for &v in &self.children[u] {
                indegree[v] -= 1;
                if indegree[v] == 0 {
                    ready.push(v);
                }
            }
        }
        debug_assert_eq!(order.len(), self.p);
        order
    }

    /// Is there a directed path u ⇝ v that does not use the edge u→v?
    fn path_avoiding_edge(&self, u: usize, v: usize) -> bool {
        let mut seen = vec![false; self.p];
        let mut stack = Vec::new();
        for &c in &self.children[u] {
            if c != v {
                stack.push(c);
            }
        }
        while let Some(w) = stack.pop() {
            if w == v {
                return true;
            }
            if std::mem::replace(&mut seen[w], true) {
                continue;
            }
            stack.extend_from_slice(&self.children[w]);
        }
        false
    }

    fn apply(&mut self, op: EdgeOp, new_scores: &[(usize, f64)]) {
        match op {
            EdgeOp::Add(u, v) => {
                let pos = self.parents[v].partition_point(|&x| x < u);
                self.parents[v].insert(pos, u);
                let pos = self.children[u].partition_point(|&x| x < v);
                self.children[u].insert(pos, v);
                self.edge_count += 1;
            }
            EdgeOp::Delete(u, v) => {
                self.parents[v].retain(|&x| x != u);
                self.children[u].retain(|&x| x != v);
                self.edge_count -= 1;
            }
            EdgeOp::Reverse(u, v) => {
                self.parents[v].retain(|&x| x != u);
                self.children[u].retain(|&x| x != v);
                let pos = self.parents[u].partition_point(|&x| x < v);
                self.parents[u].insert(pos, v);
                let pos = self.children[v].partition_point(|&x| x < u);
                self.children[v].insert(pos, u);
            }
        }
        for &(node, score) in new_scores {
            self.fam[node] = score;
        }
    }

    fn to_dag(&self) -> Dag {
        let mut edges = Vec::with_capacity(self.edge_count);
        for (v, parents) in self.parents.iter().enumerate() {
            for &u in parents {
                edges.push((u, v));
            }
        }
        Dag::new(self.p, edges).expect("climb state stays acyclic")
    }
}

/// Random starting graph: each potential edge drawn with probability
/// min(0.5, 2/p), then back-edges against a random topological order are
/// dropped and parent sets trimmed to the bound.
fn random_initial_parents(p: usize, max_parents: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..p).collect();
    order.shuffle(rng);
    let mut position = vec![0usize; p];
    for (idx, &v) in order.iter().enumerate() {
        position[v] = idx;
    }
    let prob = (2.0 / p as f64).min(0.5);
    let mut parents = vec![Vec::new(); p];
    for u in 0..p {
        for v in 0..p {
            if u == v {
                continue;
            }
            if rng.random::<f64>() < prob && position[u] < position[v] && parents[v].len() < max_parents
            {
                parents[v].push(u);
            }
        }
    }
    for set in &mut parents {
        set.sort_unstable();
    }
    parents
}

struct ClimbOutcome {
    network: ScoredNetwork,
    #[cfg_attr(not(test), allow(dead_code))]
    accepted_totals: Vec<f64>,
    cache: ScoreCache,
}

/// One best-improvement climb from the given start.
fn climb(
    scorer: &Scorer,
    cfg: &SearchConfig,
    start: Vec<Vec<usize>>,
    mut cache: ScoreCache,
) -> Result<ClimbOutcome> {
    let mut state = ClimbState::from_parent_sets(scorer, &mut cache, start)?;
    let mut accepted_totals = vec![state.total(scorer)];

    for _ in 0..cfg.max_iterations {
        let reach = state.descendants();
        let has_path = |from: usize, to: usize| reach[from][to / 64] & (1 << (to % 64)) != 0;

        let mut best: Option<(f64, EdgeOp, Vec<(usize, f64)>)> = None;
        let consider =
            |best: &mut Option<(f64, EdgeOp, Vec<(usize, f64)>)>,
             delta: f64,
             op: EdgeOp,
             scores: Vec<(usize, f64)>| {
                if delta > 0.0 && best.as_ref().is_none_or(|(d, _, _)| delta > *d) {
                    *best = Some((delta, op, scores));
                }
            };

        let prior_add =
            scorer.log_prior(state.edge_count + 1) - scorer.log_prior(state.edge_count);
        let prior_del = if state.edge_count > 0 {
            scorer.log_prior(state.edge_count - 1) - scorer.log_prior(state.edge_count)
        } else {
            0.0
        };

        // Additions, in (source, target) order.
        for u in 0..state.p {
            for v in 0..state.p {
                if u == v
                    || state.parents[v].binary_search(&u).is_ok()
                    || state.parents[v].len() >= cfg.max_parents
                    || has_path(v, u)
                {
                    continue;
                }
                let parents = insert_sorted(&state.parents[v], u);
                let score = cache.get_or_compute(scorer, v, &parents)?;
                let delta = score - state.fam[v] + prior_add;
                consider(&mut best, delta, EdgeOp::Add(u, v), vec![(v, score)]);
            }
        }

        // Deletions, edges in (source, target) order.
        for u in 0..state.p {
            for &v in &state.children[u] {
                let parents = remove_sorted(&state.parents[v], u);
                let score = cache.get_or_compute(scorer, v, &parents)?;
                let delta = score - state.fam[v] + prior_del;
                consider(&mut best, delta, EdgeOp::Delete(u, v), vec![(v, score)]);
            }
        }

        // Reversals, edges in (source, target) order.
        for u in 0..state.p {
            for &v in &state.children[u] {
                if state.parents[u].len() >= cfg.max_parents || state.path_avoiding_edge(u, v) {
                    continue;
                }
                let v_parents = remove_sorted(&state.parents[v], u);
                let u_parents = insert_sorted(&state.parents[u], v);
                let v_score = cache.get_or_compute(scorer, v, &v_parents)?;
                let u_score = cache.get_or_compute(scorer, u, &u_parents)?;
                let delta = (v_score - state.fam[v]) + (u_score - state.fam[u]);
                consider(
                    &mut best,
                    delta,
                    EdgeOp::Reverse(u, v),
                    vec![(v, v_score), (u, u_score)],
                );
            }
        }

        match best {
            Some((_, op, scores)) => {
                state.apply(op, &scores);
                accepted_totals.push(state.total(scorer));
            }
            None => break,
        }
    }

    let network = scorer.score_dag_cached(&state.to_dag(), cache.inner_mut())?;
    Ok(ClimbOutcome {
        network,
        accepted_totals,
        cache,
    })
}

#[cfg(test)]
fn climb_from_empty_traced(
    scorer: &Scorer,
    cfg: &SearchConfig,
) -> Result<(ScoredNetwork, Vec<f64>)> {
    let start = vec![Vec::new(); scorer.p()];
    let outcome = climb(scorer, cfg, start, ScoreCache::new())?;
    Ok((outcome.network, outcome.accepted_totals))
}

fn validate_config(cfg: &SearchConfig, scorer: &Scorer) -> Result<()> {
    if cfg.max_parents == 0 {
        return Err(Error::InvalidParam("max_parents must be at least 1".into()));
    }
    if cfg.max_iterations == 0 {
        return Err(Error::InvalidParam(
            "max_iterations must be at least 1".into(),
        ));
    }
    if cfg.max_parents >= scorer.effective_n() {
        return Err(Error::InvalidParam(format!(
            "max_parents = {} must be below the effective sample count {}",
            cfg.max_parents,
            scorer.effective_n()
        )));
    }
    Ok(())
}

/// Best-improvement greedy search over edge additions, deletions, and
/// reversals, restarted from random graphs. Returns the best network over
/// all runs; deterministic given the seed.
pub fn hill_climb(
    data: &Dataset,
    metric: &MetricSpec,
    hp: &Hyperparams,
    prior: GraphPrior,
    cfg: &SearchConfig,
) -> Result<ScoredNetwork> {
    let scorer = Scorer::new(data, metric, hp, prior)?;
    hill_climb_prepared(&scorer, cfg).map(|(network, _)| network)
}

/// As `hill_climb`, but on an already-prepared scorer; also returns the
/// merged family-score cache for callers scoring further graphs.
pub fn hill_climb_prepared(
    scorer: &Scorer,
    cfg: &SearchConfig,
) -> Result<(ScoredNetwork, ScoreCache)> {
    validate_config(cfg, scorer)?;
    let runs = cfg.restarts + 1;

    // Runs are independent; per-run caches merge afterwards. Cached values
    // equal freshly computed ones, so scheduling cannot change any result.
    let outcomes: Vec<Result<ClimbOutcome>> = (0..runs)
        .into_par_iter()
        .map(|r| {
            let start = if r == 0 && cfg.init == InitStrategy::Empty {
                vec![Vec::new(); scorer.p()]
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(r as u64));
                random_initial_parents(scorer.p(), cfg.max_parents, &mut rng)
            };
            climb(scorer, cfg, start, ScoreCache::new())
        })
        .collect();

    let mut best: Option<ScoredNetwork> = None;
    let mut merged = ScoreCache::new();
    for outcome in outcomes {
        let outcome = outcome?;
        merged.merge(outcome.cache);
        let replace = match &best {
            None => true,
            Some(b) => outcome.network.total_log_score > b.total_log_score,
        };
        if replace {
            best = Some(outcome.network);
        }
    }
    Ok((best.expect("at least one run"), merged))
}
