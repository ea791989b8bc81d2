//! Synchronous log-space loopy belief propagation.
//!
//! Messages live on the edges of [`FactorGraph::edges`]; both directions are
//! stored per edge index. Every message vector is kept at log-sum-exp zero.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::graph::{DirectedEdge, EdgeKind, FactorGraph};
use crate::tensor::{log_normalize, log_sum_exp, reduce_except, tensor_sum, DenseTensor, ReduceMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BpMode {
    /// Sum-product: marginals.
    Sum,
    /// Max-product: MAP.
    Max,
}

impl BpMode {
    pub fn reduce_mode(self) -> ReduceMode {
        match self {
            BpMode::Sum => ReduceMode::LogSumExp,
            BpMode::Max => ReduceMode::Max,
        }
    }
}

/// Which message directions the damping ratio applies to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DampingScope {
    Both,
    FactorToVariable,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BpConfig {
    pub mode: BpMode,
    /// Weight of the previous message: `m ← m̃ + α (m_prev − m̃)`.
    pub damping: f64,
    pub max_iters: usize,
    /// L∞ bound on the change of any message entry between iterations.
    pub convergence_tol: f64,
    pub damping_scope: DampingScope,
}

impl Default for BpConfig {
    fn default() -> Self {
        Self {
            mode: BpMode::Sum,
            damping: 0.0,
            max_iters: 200,
            convergence_tol: 1e-8,
            damping_scope: DampingScope::Both,
        }
    }
}

impl BpConfig {
    pub fn damped(damping: f64) -> Self {
        Self {
            damping: damping.clamp(0.0, 1.0),
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MessageSet {
    pub var_to_fac: Vec<Vec<f64>>,
    pub fac_to_var: Vec<Vec<f64>>,
}

impl MessageSet {
    /// Uniform messages (constant log value, LSE zero).
    pub fn uniform(g: &FactorGraph) -> Self {
        let init: Vec<Vec<f64>> = g
            .edges()
            .iter()
            .map(|e| {
                let c = g.cardinality(e.variable);
                vec![-(c as f64).ln(); c]
            })
            .collect();
        Self {
            var_to_fac: init.clone(),
            fac_to_var: init,
        }
    }

    pub fn get(&self, g: &FactorGraph, edge: DirectedEdge) -> Option<&[f64]> {
        let e = edge_index(g, edge.factor, edge.variable)?;
        Some(match edge.kind {
            EdgeKind::VarToFac => &self.var_to_fac[e],
            EdgeKind::FacToVar => &self.fac_to_var[e],
        })
    }

    fn max_abs_diff(&self, other: &MessageSet) -> f64 {
        let diff = |a: &[Vec<f64>], b: &[Vec<f64>]| {
            a.iter()
                .zip(b)
                .flat_map(|(x, y)| x.iter().zip(y).map(|(p, q)| (p - q).abs()))
                .fold(0.0, f64::max)
        };
        diff(&self.var_to_fac, &other.var_to_fac).max(diff(&self.fac_to_var, &other.fac_to_var))
    }
}

/// Index of the (factor, variable) incidence in [`FactorGraph::edges`].
pub fn edge_index(g: &FactorGraph, factor: usize, variable: usize) -> Option<usize> {
    let before: usize = g.factors()[..factor.min(g.num_factors())]
        .iter()
        .map(|f| f.scope.len())
        .sum();
    g.factors()
        .get(factor)?
        .scope
        .iter()
        .position(|&v| v == variable)
        .map(|k| before + k)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeliefSet {
    pub variable_beliefs: Vec<Vec<f64>>,
    pub factor_beliefs: Vec<DenseTensor>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BpResult {
    pub messages: MessageSet,
    pub beliefs: BeliefSet,
    pub converged: bool,
    pub iterations: usize,
}

/// `Ψ_a + ⊕_j m_{j→a}` with variable `skip`'s axis left at zero.
pub fn factor_potential_plus(
    psi: &DenseTensor,
    incoming: &[&[f64]],
    skip: Option<usize>,
) -> Result<DenseTensor> {
    let zeros: Vec<Vec<f64>> = psi.shape().iter().map(|&c| vec![0.0; c]).collect();
    let ops: Vec<&[f64]> = incoming
        .iter()
        .enumerate()
        .map(|(k, m)| if Some(k) == skip { zeros[k].as_slice() } else { *m })
        .collect();
    psi.add(&tensor_sum(&ops)?)
}

/// Unnormalised factor-to-variable message towards scope position `pos`.
pub fn factor_message(
    psi: &DenseTensor,
    incoming: &[&[f64]],
    pos: usize,
    mode: ReduceMode,
) -> Result<Vec<f64>> {
    reduce_except(&factor_potential_plus(psi, incoming, Some(pos))?, pos, mode)
}

fn damp(new: &mut [f64], prev: &[f64], alpha: f64) {
    if alpha == 0.0 {
        return;
    }
    for (m, &p) in new.iter_mut().zip(prev) {
        *m += alpha * (p - *m);
    }
    log_normalize(new);
}

/// Variable-to-factor update: sum of the other incoming factor messages.
pub fn variable_messages(g: &FactorGraph, fac_to_var: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let var_edges = g.variable_edges();
    g.edges()
        .iter()
        .enumerate()
        .map(|(e, edge)| {
            let mut out: Vec<f64> = var_edges[edge.variable]
                .iter()
                .filter(|&&c| c != e)
                .fold(vec![0.0; g.cardinality(edge.variable)], |mut acc, &c| {
                    for (a, m) in acc.iter_mut().zip(&fac_to_var[c]) {
                        *a += m;
                    }
                    acc
                });
            log_normalize(&mut out);
            out
        })
        .collect()
}

/// Factor-to-variable update `m̃` for every edge, normalised.
pub fn factor_messages(g: &FactorGraph, var_to_fac: &[Vec<f64>], mode: BpMode) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(var_to_fac.len());
    let mut base = 0;
    for f in g.factors() {
        let k = f.scope.len();
        let incoming: Vec<&[f64]> = var_to_fac[base..base + k].iter().map(|m| m.as_slice()).collect();
        for pos in 0..k {
            let mut m = factor_message(&f.log_potential, &incoming, pos, mode.reduce_mode())
                .expect("graph invariants guarantee shape agreement");
            log_normalize(&mut m);
            out.push(m);
        }
        base += k;
    }
    out
}

/// Variable and factor beliefs from a message set.
pub fn beliefs(g: &FactorGraph, messages: &MessageSet) -> BeliefSet {
    let var_edges = g.variable_edges();
    let variable_beliefs = var_edges
        .iter()
        .enumerate()
        .map(|(v, es)| {
            let mut logits = vec![0.0; g.cardinality(v)];
            for &e in es {
                for (l, m) in logits.iter_mut().zip(&messages.fac_to_var[e]) {
                    *l += m;
                }
            }
            softmax(&logits)
        })
        .collect();
    let mut base = 0;
    let factor_beliefs = g
        .factors()
        .iter()
        .map(|f| {
            let k = f.scope.len();
            let incoming: Vec<&[f64]> = messages.var_to_fac[base..base + k]
                .iter()
                .map(|m| m.as_slice())
                .collect();
            base += k;
            let t = factor_potential_plus(&f.log_potential, &incoming, None)
                .expect("graph invariants guarantee shape agreement");
            let z = log_sum_exp(t.data());
            t.map(|x| (x - z).exp())
        })
        .collect();
    BeliefSet {
        variable_beliefs,
        factor_beliefs,
    }
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let z = log_sum_exp(logits);
    logits.iter().map(|x| (x - z).exp()).collect()
}

pub fn run_bp(g: &FactorGraph, cfg: &BpConfig) -> BpResult {
    let alpha = cfg.damping;
    let damp_vars = cfg.damping_scope == DampingScope::Both;
    let mut msgs = MessageSet::uniform(g);
    let mut converged = false;
    let mut iterations = 0;
    while iterations < cfg.max_iters {
        iterations += 1;
        let mut v2f = variable_messages(g, &msgs.fac_to_var);
        if damp_vars {
            for (m, p) in v2f.iter_mut().zip(&msgs.var_to_fac) {
                damp(m, p, alpha);
            }
        }
        let mut f2v = factor_messages(g, &v2f, cfg.mode);
        for (m, p) in f2v.iter_mut().zip(&msgs.fac_to_var) {
            damp(m, p, alpha);
        }
        let next = MessageSet {
            var_to_fac: v2f,
            fac_to_var: f2v,
        };
        let delta = next.max_abs_diff(&msgs);
        msgs = next;
        if delta < cfg.convergence_tol {
            converged = true;
            break;
        }
    }
    BpResult {
        beliefs: beliefs(g, &msgs),
        messages: msgs,
        converged,
        iterations,
    }
}

/// Per-variable argmax, lowest state index on ties.
pub fn decode_map(b: &BeliefSet) -> Vec<usize> {
    b.variable_beliefs.iter().map(|row| argmax(row)).collect()
}

pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in row.iter().enumerate() {
        if x > row[best] {
            best = i;
        }
    }
    best
}

pub fn log_score(g: &FactorGraph, x: &[usize]) -> Result<f64> {
    g.log_score(x)
}

/// Probability bounds on the MAP assignment from any set of messages.
///
/// The upper bound splits `Σ_a Ψ_a(x*)` into factor terms with their outgoing
/// messages subtracted plus per-variable sums of incoming messages, then
/// maximises each term separately. The lower bound is the exact probability
/// of the decoded assignment.
pub fn map_bounds(g: &FactorGraph, r: &BpResult, log_z: f64) -> (f64, f64) {
    let f2v = &r.messages.fac_to_var;
    let mut upper = -log_z;
    let mut base = 0;
    for f in g.factors() {
        let k = f.scope.len();
        let outgoing: Vec<Vec<f64>> = f2v[base..base + k].iter().map(|m| m.iter().map(|x| -x).collect()).collect();
        let refs: Vec<&[f64]> = outgoing.iter().map(|m| m.as_slice()).collect();
        let t = factor_potential_plus(&f.log_potential, &refs, None)
            .expect("graph invariants guarantee shape agreement");
        upper += t.data().iter().copied().fold(f64::NEG_INFINITY, f64::max);
        base += k;
    }
    for (v, es) in g.variable_edges().iter().enumerate() {
        let mut sums = vec![0.0; g.cardinality(v)];
        for &e in es {
            for (s, m) in sums.iter_mut().zip(&f2v[e]) {
                *s += m;
            }
        }
        upper += sums.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    }
    let x_hat = decode_map(&r.beliefs);
    let lower = (g.log_score_unchecked(&x_hat) - log_z).exp();
    (lower, upper.exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::ZeroClamp;

    fn unary() -> FactorGraph {
        FactorGraph::from_linear(vec![2], vec![(vec![0], vec![1.0, 3.0])], ZeroClamp::default()).unwrap()
    }

    #[test]
    fn single_unary_converges_fast() {
        let r = run_bp(&unary(), &BpConfig::default());
        assert!(r.converged);
        assert!(r.iterations <= 2);
        let b = &r.beliefs.variable_beliefs[0];
        assert!((b[0] - 0.25).abs() < 1e-15 && (b[1] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn uniform_pairwise_is_uniform() {
        let g = FactorGraph::from_linear(vec![2, 2], vec![(vec![0, 1], vec![1.0; 4])], ZeroClamp::default())
            .unwrap();
        let r = run_bp(&g, &BpConfig::default());
        for b in &r.beliefs.variable_beliefs {
            assert_eq!(b, &vec![0.5, 0.5]);
        }
        assert!((r.beliefs.factor_beliefs[0].data().iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn decode_rules() {
        let b = BeliefSet {
            variable_beliefs: vec![vec![0.25, 0.75], vec![0.9, 0.1], vec![0.5, 0.5]],
            factor_beliefs: vec![],
        };
        assert_eq!(decode_map(&b), vec![1, 0, 0]);
    }

    #[test]
    fn single_unary_bounds_are_tight() {
        let g = unary();
        let r = run_bp(&g, &BpConfig::default());
        let (lo, hi) = map_bounds(&g, &r, 4f64.ln());
        assert!((lo - 0.75).abs() < 1e-14);
        assert!((hi - 0.75).abs() < 1e-14);
    }

    #[test]
    fn edge_lookup() {
        let g = FactorGraph::from_linear(
            vec![2, 2, 2],
            vec![(vec![2], vec![1.0, 1.0]), (vec![1, 0], vec![1.0; 4])],
            ZeroClamp::default(),
        )
        .unwrap();
        assert_eq!(edge_index(&g, 0, 2), Some(0));
        assert_eq!(edge_index(&g, 1, 1), Some(1));
        assert_eq!(edge_index(&g, 1, 0), Some(2));
        assert_eq!(edge_index(&g, 1, 2), None);
        assert_eq!(edge_index(&g, 5, 0), None);
        let r = run_bp(&g, &BpConfig::default());
        let m = r
            .messages
            .get(&g, DirectedEdge { kind: EdgeKind::FacToVar, factor: 1, variable: 0 })
            .unwrap();
        assert_eq!(m, r.messages.fac_to_var[2].as_slice());
    }

    #[test]
    fn isolated_variable_gets_uniform_belief() {
        let g = FactorGraph::from_linear(vec![3, 2], vec![(vec![1], vec![1.0, 2.0])], ZeroClamp::default())
            .unwrap();
        let r = run_bp(&g, &BpConfig::default());
        for p in &r.beliefs.variable_beliefs[0] {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
    }
}
