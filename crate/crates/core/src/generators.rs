//! Seeded synthetic factor graphs.
//!
//! Every instance draws from its own ChaCha8 stream: the dataset seed selects
//! the key and the instance index selects the stream, so instance `k` is the
//! same whether it is generated alone, sequentially or in parallel.
//!
//! Grid variables are numbered row-major (`r * cols + c`). Factors are the
//! unary factors in variable order followed by the pairwise factors:
//! horizontal edges row-major, then vertical edges row-major. Spin `+1` is
//! state 0 and spin `-1` is state 1.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{FgError, Result};
use crate::exact::{enumerate, ExactResult, DEFAULT_STATE_CAP};
use crate::graph::{Factor, FactorGraph};
use crate::tensor::DenseTensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Ising,
    #[serde(rename = "asym")]
    AsymBmrf,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Ising => "ising",
            Family::AsymBmrf => "asym",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub family: Family,
    /// Grid side length.
    pub n: usize,
    pub count: usize,
    pub seed: u64,
    pub sigma_b: f64,
    pub sigma_j: f64,
}

impl DatasetSpec {
    pub fn new(family: Family, n: usize, count: usize, seed: u64) -> Self {
        Self {
            family,
            n,
            count,
            seed,
            sigma_b: 0.25,
            sigma_j: 1.0,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n < 2 || self.count == 0 {
            return Err(FgError::InvalidGraph(format!(
                "dataset needs n >= 2 and count >= 1 (got n={}, count={})",
                self.n, self.count
            )));
        }
        if !(self.sigma_b >= 0.0 && self.sigma_j >= 0.0) {
            return Err(FgError::InvalidGraph("standard deviations must be >= 0".into()));
        }
        Ok(())
    }
}

/// The stream instance `index` of a dataset draws from.
pub fn instance_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Grid edges `(i, j)` with `i < j`: horizontal row-major, then vertical.
pub fn grid_edges(rows: usize, cols: usize) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    for r in 0..rows {
        for c in 0..cols.saturating_sub(1) {
            edges.push((r * cols + c, r * cols + c + 1));
        }
    }
    for r in 0..rows.saturating_sub(1) {
        for c in 0..cols {
            edges.push((r * cols + c, (r + 1) * cols + c));
        }
    }
    edges
}

fn spin(state: usize) -> f64 {
    if state == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Log-potential of an Ising coupling `J x_i x_j`.
pub fn ising_pair(j: f64) -> [f64; 4] {
    let mut out = [0.0; 4];
    for a in 0..2 {
        for b in 0..2 {
            out[a * 2 + b] = j * spin(a) * spin(b);
        }
    }
    out
}

/// Log-potential of the asymmetric coupling with linear-space table
/// `[[e^{Jij+Jji}, e^{-2Jij}], [e^{-2Jji}, e^{Jij+Jji}]]`.
pub fn asym_pair(j_ij: f64, j_ji: f64) -> [f64; 4] {
    [j_ij + j_ji, -2.0 * j_ij, -2.0 * j_ji, j_ij + j_ji]
}

/// Binary grid with unary log-potentials `[b, -b]` and the given pairwise
/// log-potential tables (one per [`grid_edges`] entry).
pub fn grid_graph(rows: usize, cols: usize, biases: &[f64], pairs: &[[f64; 4]]) -> Result<FactorGraph> {
    let n = rows * cols;
    let edges = grid_edges(rows, cols);
    if biases.len() != n || pairs.len() != edges.len() {
        return Err(FgError::InvalidGraph(format!(
            "{rows}x{cols} grid needs {n} biases and {} couplings",
            edges.len()
        )));
    }
    let mut factors = Vec::with_capacity(n + edges.len());
    for (v, &b) in biases.iter().enumerate() {
        factors.push(Factor {
            scope: vec![v],
            log_potential: DenseTensor::vector(vec![b, -b])?,
        });
    }
    for (&(i, j), table) in edges.iter().zip(pairs) {
        factors.push(Factor {
            scope: vec![i, j],
            log_potential: DenseTensor::new(vec![2, 2], table.to_vec())?,
        });
    }
    FactorGraph::new(vec![2; n], factors)
}

/// Unlabelled instance `index` of a dataset.
pub fn generate_graph(spec: &DatasetSpec, index: usize) -> Result<FactorGraph> {
    spec.validate()?;
    let mut rng = instance_rng(spec.seed, index as u64);
    let nb = Normal::new(0.0, spec.sigma_b).map_err(|e| FgError::InvalidGraph(e.to_string()))?;
    let nj = Normal::new(0.0, spec.sigma_j).map_err(|e| FgError::InvalidGraph(e.to_string()))?;
    let n = spec.n;
    let biases: Vec<f64> = (0..n * n).map(|_| nb.sample(&mut rng)).collect();
    let pairs: Vec<[f64; 4]> = grid_edges(n, n)
        .iter()
        .map(|_| match spec.family {
            Family::Ising => ising_pair(nj.sample(&mut rng)),
            Family::AsymBmrf => {
                let j_ij = nj.sample(&mut rng);
                let j_ji = nj.sample(&mut rng);
                asym_pair(j_ij, j_ji)
            }
        })
        .collect();
    grid_graph(n, n, &biases, &pairs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub index: usize,
    pub graph: FactorGraph,
    /// Absent when the state space exceeds the oracle cap.
    pub oracle: Option<ExactResult>,
}

/// Generates and labels a whole dataset. Instances above `cap` joint states
/// are left unlabelled.
pub fn generate(spec: &DatasetSpec, cap: u64) -> Result<Vec<Instance>> {
    spec.validate()?;
    (0..spec.count)
        .into_par_iter()
        .map(|index| {
            let graph = generate_graph(spec, index)?;
            let oracle = match enumerate(&graph, cap) {
                Ok(r) => Some(r),
                Err(FgError::StateSpaceTooLarge { .. }) => None,
                Err(e) => return Err(e),
            };
            Ok(Instance { index, graph, oracle })
        })
        .collect()
}

fn labelled(spec: &DatasetSpec) -> Result<Vec<(FactorGraph, ExactResult)>> {
    generate(spec, DEFAULT_STATE_CAP)?
        .into_iter()
        .map(|inst| {
            let label = inst.oracle.ok_or(FgError::StateSpaceTooLarge {
                size: 2f64.powi((spec.n * spec.n) as i32),
                cap: DEFAULT_STATE_CAP,
            })?;
            Ok((inst.graph, label))
        })
        .collect()
}

pub fn gen_ising(spec: &DatasetSpec) -> Result<Vec<(FactorGraph, ExactResult)>> {
    labelled(&DatasetSpec {
        family: Family::Ising,
        ..*spec
    })
}

pub fn gen_asym_bmrf(spec: &DatasetSpec) -> Result<Vec<(FactorGraph, ExactResult)>> {
    labelled(&DatasetSpec {
        family: Family::AsymBmrf,
        ..*spec
    })
}

/// Shape of random graphs for tests and audits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomGraphSpec {
    pub min_vars: usize,
    pub max_vars: usize,
    pub min_card: usize,
    pub max_card: usize,
    pub max_arity: usize,
    /// Extra non-unary factors beyond the unaries, as a multiple of `N`.
    pub factor_density: f64,
    /// Standard deviation of log-potential entries.
    pub scale: f64,
}

impl Default for RandomGraphSpec {
    fn default() -> Self {
        Self {
            min_vars: 2,
            max_vars: 6,
            min_card: 2,
            max_card: 3,
            max_arity: 3,
            factor_density: 1.0,
            scale: 1.0,
        }
    }
}

impl RandomGraphSpec {
    pub fn binary(max_vars: usize) -> Self {
        Self {
            max_vars,
            min_card: 2,
            max_card: 2,
            ..Self::default()
        }
    }
}

fn random_factor<R: Rng + ?Sized>(cards: &[usize], scope: Vec<usize>, scale: f64, rng: &mut R) -> Factor {
    let normal = Normal::new(0.0, scale).expect("scale >= 0");
    let shape: Vec<usize> = scope.iter().map(|&v| cards[v]).collect();
    let len = shape.iter().product();
    let data = (0..len).map(|_| normal.sample(rng)).collect();
    Factor {
        scope,
        log_potential: DenseTensor::new(shape, data).expect("shape from cardinalities"),
    }
}

/// Random graph, usually loopy: a unary on each variable with probability
/// one half plus `factor_density * N` factors of random arity and scope order.
pub fn random_graph<R: Rng + ?Sized>(spec: &RandomGraphSpec, rng: &mut R) -> FactorGraph {
    let n = rng.random_range(spec.min_vars..=spec.max_vars);
    let cards: Vec<usize> = (0..n)
        .map(|_| rng.random_range(spec.min_card..=spec.max_card))
        .collect();
    let mut factors = Vec::new();
    for v in 0..n {
        if rng.random_bool(0.5) {
            factors.push(random_factor(&cards, vec![v], spec.scale, rng));
        }
    }
    let extra = ((spec.factor_density * n as f64).round() as usize).max(1);
    for _ in 0..extra {
        let arity = rng.random_range(1..=spec.max_arity.min(n));
        let scope = rand::seq::index::sample(rng, n, arity).into_vec();
        factors.push(random_factor(&cards, scope, spec.scale, rng));
    }
    FactorGraph::new(cards, factors).expect("generated graph is valid")
}

/// Random tree-structured factor graph: each factor attaches one existing
/// variable to fresh ones, plus optional unaries.
pub fn random_tree<R: Rng + ?Sized>(spec: &RandomGraphSpec, rng: &mut R) -> FactorGraph {
    let n = rng.random_range(spec.min_vars.max(1)..=spec.max_vars);
    let cards: Vec<usize> = (0..n)
        .map(|_| rng.random_range(spec.min_card..=spec.max_card))
        .collect();
    let mut factors = Vec::new();
    let mut placed = 1;
    while placed < n {
        let max_new = (spec.max_arity.max(2) - 1).min(n - placed);
        let fresh = rng.random_range(1..=max_new);
        let anchor = rng.random_range(0..placed);
        let mut scope: Vec<usize> = std::iter::once(anchor).chain(placed..placed + fresh).collect();
        use rand::seq::SliceRandom;
        scope.shuffle(rng);
        factors.push(random_factor(&cards, scope, spec.scale, rng));
        placed += fresh;
    }
    for v in 0..n {
        if rng.random_bool(0.5) {
            factors.push(random_factor(&cards, vec![v], spec.scale, rng));
        }
    }
    FactorGraph::new(cards, factors).expect("generated tree is valid")
}
