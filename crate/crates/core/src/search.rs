//! Beam search and best-first search for MAP assignments over the
//! single-variable-change neighbourhood.

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::graph::FactorGraph;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub cache_size: usize,
    pub max_steps: usize,
    pub max_seconds: f64,
    pub seed: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            cache_size: 10,
            max_steps: 100_000,
            max_seconds: 3600.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub assignment: Vec<usize>,
    pub log_score: f64,
    pub steps: usize,
    /// Best cached state and score after initialisation and after each step.
    pub trajectory: Vec<(Vec<usize>, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
struct Scored {
    score: f64,
    state: Vec<usize>,
}

/// Higher score first, then lexicographically smaller assignment.
fn rank(a: &Scored, b: &Scored) -> std::cmp::Ordering {
    b.score.total_cmp(&a.score).then_with(|| a.state.cmp(&b.state))
}

pub fn random_state(g: &FactorGraph, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    g.cardinalities().iter().map(|&c| rng.random_range(0..c)).collect()
}

struct Scorer<'g> {
    g: &'g FactorGraph,
    var_factors: Vec<Vec<usize>>,
    strides: Vec<Vec<usize>>,
}

impl<'g> Scorer<'g> {
    fn new(g: &'g FactorGraph) -> Self {
        let mut var_factors = vec![Vec::new(); g.num_vars()];
        for (a, f) in g.factors().iter().enumerate() {
            for &v in &f.scope {
                var_factors[v].push(a);
            }
        }
        let strides = g.factors().iter().map(|f| f.log_potential.strides()).collect();
        Self {
            g,
            var_factors,
            strides,
        }
    }

    fn factor_value(&self, a: usize, x: &[usize]) -> f64 {
        let f = &self.g.factors()[a];
        let off: usize = f.scope.iter().zip(&self.strides[a]).map(|(&v, s)| x[v] * s).sum();
        f.log_potential.data()[off]
    }

    /// Score of `x` with variable `v` set to `s`, given `score(x)`.
    fn neighbour(&self, x: &mut [usize], score: f64, v: usize, s: usize) -> f64 {
        let old = x[v];
        let before: f64 = self.var_factors[v].iter().map(|&a| self.factor_value(a, x)).sum();
        x[v] = s;
        let after: f64 = self.var_factors[v].iter().map(|&a| self.factor_value(a, x)).sum();
        x[v] = old;
        if score.is_finite() && before.is_finite() {
            score - before + after
        } else {
            let mut y = x.to_vec();
            y[v] = s;
            self.g.log_score_unchecked(&y)
        }
    }
}

pub fn beam_search(g: &FactorGraph, cfg: &SearchConfig) -> SearchResult {
    let k = cfg.cache_size.max(1);
    let scorer = Scorer::new(g);
    let start = Instant::now();
    let budget = Duration::from_secs_f64(cfg.max_seconds.max(0.0));
    let init = random_state(g, cfg.seed);
    let mut cache = vec![Scored {
        score: g.log_score_unchecked(&init),
        state: init,
    }];
    let mut trajectory = vec![(cache[0].state.clone(), cache[0].score)];
    let mut steps = 0;
    while steps < cfg.max_steps && start.elapsed() < budget {
        let mut seen: BTreeSet<Vec<usize>> = cache.iter().map(|c| c.state.clone()).collect();
        let mut pool = cache.clone();
        for c in &cache {
            let mut x = c.state.clone();
            for v in 0..g.num_vars() {
                for s in 0..g.cardinality(v) {
                    if s == x[v] {
                        continue;
                    }
                    let score = scorer.neighbour(&mut x, c.score, v, s);
                    let mut y = x.clone();
                    y[v] = s;
                    if seen.insert(y.clone()) {
                        pool.push(Scored { score, state: y });
                    }
                }
            }
        }
        pool.sort_by(rank);
        pool.truncate(k);
        steps += 1;
        let unchanged = {
            let old: BTreeSet<&Vec<usize>> = cache.iter().map(|c| &c.state).collect();
            let new: BTreeSet<&Vec<usize>> = pool.iter().map(|c| &c.state).collect();
            old == new
        };
        cache = pool;
        trajectory.push((cache[0].state.clone(), cache[0].score));
        if unchanged {
            break;
        }
    }
    let best = cache.into_iter().next().expect("cache never empty");
    SearchResult {
        assignment: best.state,
        log_score: best.score,
        steps,
        trajectory,
    }
}

/// Beam search with a single-state cache.
pub fn best_first_search(g: &FactorGraph, cfg: &SearchConfig) -> SearchResult {
    beam_search(
        g,
        &SearchConfig {
            cache_size: 1,
            ..*cfg
        },
    )
}
