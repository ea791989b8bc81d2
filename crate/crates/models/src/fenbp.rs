//! Belief propagation with a learned, per-entry damping ratio.
//!
//! Each iteration computes undamped variable-to-factor messages, candidate
//! factor-to-variable messages `m̃`, and then damps every entry with
//! `α = sigmoid(φ(m_prev, m̃, log b_i, LSE-except log b_a, max-except log b_a))`.
//! The network `φ` acts on one scalar entry at a time, so the model accepts
//! any variable cardinalities and commutes with every relabelling of
//! factors, variables, axes and states.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use fg_core::bp::{beliefs, BeliefSet, BpMode, BpResult, MessageSet};
use fg_core::tensor::DenseTensor;
use fg_core::FactorGraph;
use fg_nn::{init_mlp, mlp, Activation, Bound, MlpSpec, ParamStore, Tape, Var};

use crate::error::{ModelError, Result};
use crate::train::{cross_entropy, fit, Example, TrainConfig, TrainHistory};

pub const PREFIX: &str = "fenbp";
const PHI: &str = "fenbp/phi";
pub const NUM_FEATURES: usize = 5;
/// Graphs whose optimal log-score is this close to zero are not used for the
/// relative MAP loss.
pub const SCORE_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeNbpConfig {
    pub iterations: usize,
    pub mode: BpMode,
    pub hidden: usize,
    pub graph_norm: bool,
    /// Damping ratio produced by a freshly initialised model.
    pub init_damping: f64,
}

impl Default for FeNbpConfig {
    fn default() -> Self {
        Self {
            iterations: 10,
            mode: BpMode::Sum,
            hidden: 64,
            graph_norm: false,
            init_damping: 0.5,
        }
    }
}

impl FeNbpConfig {
    pub fn mlp_spec(&self) -> MlpSpec {
        MlpSpec::new(vec![NUM_FEATURES, self.hidden, self.hidden, 1], Activation::LeakyRelu)
            .with_graph_norm(self.graph_norm)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeNbpModel {
    pub config: FeNbpConfig,
    pub params: ParamStore,
}

/// Tape handles for the final state of an unrolled run.
#[derive(Debug, Clone)]
pub struct Unrolled {
    pub var_to_fac: Vec<Var>,
    pub fac_to_var: Vec<Var>,
    /// Damping ratios of every iteration, flattened over (edge, state).
    pub alphas: Vec<Var>,
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

impl FeNbpModel {
    /// Random hidden layers, zero output weights and an output bias giving
    /// `init_damping` everywhere.
    pub fn new(config: FeNbpConfig, seed: u64) -> Result<Self> {
        if !(config.init_damping > 0.0 && config.init_damping < 1.0) {
            return Err(ModelError::Config(format!("init_damping {} outside (0,1)", config.init_damping)));
        }
        let mut params = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        init_mlp(&mut params, PHI, &config.mlp_spec(), &mut rng, true)?;
        params.get_mut(&format!("{PHI}/l2/b")).expect("output bias").values = vec![logit(config.init_damping)];
        Ok(Self { config, params })
    }

    /// Every parameter zero: `α = 0.5` on every entry.
    pub fn zeroed(config: FeNbpConfig) -> Result<Self> {
        let mut m = Self::new(FeNbpConfig { init_damping: 0.5, ..config }, 0)?;
        m.params.fill(0.0);
        m.config = config;
        Ok(m)
    }

    /// All parameters drawn at random (including the output layer), for
    /// property tests.
    pub fn random(config: FeNbpConfig, seed: u64) -> Result<Self> {
        let mut params = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        init_mlp(&mut params, PHI, &config.mlp_spec(), &mut rng, false)?;
        Ok(Self { config, params })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(self.params.to_json()?)
    }

    pub fn load_json(&mut self, text: &str) -> Result<()> {
        Ok(self.params.load_json(text)?)
    }

    /// Unrolls `config.iterations` synchronous iterations on `tape`.
    pub fn unroll(&self, tape: &mut Tape, bound: &Bound, g: &FactorGraph) -> Result<Unrolled> {
        let spec = self.config.mlp_spec();
        let edges = g.edges();
        let var_edges = g.variable_edges();
        let zero_of = |tape: &mut Tape, c: usize| tape.vector(vec![0.0; c]);
        let psi: Vec<Var> = g.factors().iter().map(|f| tape.leaf(f.log_potential.clone())).collect();
        let init = MessageSet::uniform(g);
        let mut f2v: Vec<Var> = init.fac_to_var.iter().map(|m| tape.vector(m.clone())).collect();
        let mut v2f: Vec<Var> = init.var_to_fac.iter().map(|m| tape.vector(m.clone())).collect();
        let mut alphas = Vec::with_capacity(self.config.iterations);
        if edges.is_empty() {
            return Ok(Unrolled {
                var_to_fac: v2f,
                fac_to_var: f2v,
                alphas,
            });
        }
        for _ in 0..self.config.iterations {
            // variable-to-factor, undamped
            let mut next_v2f = Vec::with_capacity(edges.len());
            for (e, edge) in edges.iter().enumerate() {
                let mut acc: Option<Var> = None;
                for &c in var_edges[edge.variable].iter().filter(|&&c| c != e) {
                    acc = Some(match acc {
                        None => f2v[c],
                        Some(a) => tape.add(a, f2v[c]),
                    });
                }
                let sum = match acc {
                    Some(a) => a,
                    None => zero_of(tape, g.cardinality(edge.variable)),
                };
                next_v2f.push(tape.log_normalize(sum));
            }
            v2f = next_v2f;

            // variable beliefs from the previous factor-to-variable messages
            let log_bi: Vec<Var> = var_edges
                .iter()
                .enumerate()
                .map(|(v, es)| {
                    let mut acc: Option<Var> = None;
                    for &c in es {
                        acc = Some(match acc {
                            None => f2v[c],
                            Some(a) => tape.add(a, f2v[c]),
                        });
                    }
                    let sum = acc.unwrap_or_else(|| zero_of(tape, g.cardinality(v)));
                    tape.log_normalize(sum)
                })
                .collect();

            // candidate messages and factor-belief features
            let mut cand = Vec::with_capacity(edges.len());
            let mut feat_lse = Vec::with_capacity(edges.len());
            let mut feat_max = Vec::with_capacity(edges.len());
            let mut base = 0;
            for (a, f) in g.factors().iter().enumerate() {
                let k = f.scope.len();
                let incoming = &v2f[base..base + k];
                let full = tape.tensor_sum(incoming);
                let joint = tape.add(psi[a], full);
                let log_ba = tape.log_normalize(joint);
                for pos in 0..k {
                    let ops: Vec<Var> = (0..k)
                        .map(|j| if j == pos { zero_of(tape, g.cardinality(f.scope[j])) } else { incoming[j] })
                        .collect();
                    let ts = tape.tensor_sum(&ops);
                    let t = tape.add(psi[a], ts);
                    let m = match self.config.mode {
                        BpMode::Sum => tape.logsumexp_except(t, pos),
                        BpMode::Max => tape.max_except(t, pos),
                    };
                    cand.push(tape.log_normalize(m));
                    feat_lse.push(tape.logsumexp_except(log_ba, pos));
                    feat_max.push(tape.max_except(log_ba, pos));
                }
                base += k;
            }

            let bi_per_edge: Vec<Var> = edges.iter().map(|e| log_bi[e.variable]).collect();
            let columns = [
                tape.concat(&f2v),
                tape.concat(&cand),
                tape.concat(&bi_per_edge),
                tape.concat(&feat_lse),
                tape.concat(&feat_max),
            ];
            let x = tape.stack_columns(&columns);
            let n = tape.shape(x)[0];
            let out = mlp(tape, bound, PHI, &spec, x)?;
            let flat = tape.reshape(out, vec![n]);
            let alpha = tape.sigmoid(flat);
            alphas.push(alpha);

            let mut next_f2v = Vec::with_capacity(edges.len());
            let mut off = 0;
            for (e, edge) in edges.iter().enumerate() {
                let c = g.cardinality(edge.variable);
                let a_e = tape.slice(alpha, off, c);
                off += c;
                let d = tape.sub(f2v[e], cand[e]);
                let ad = tape.mul(a_e, d);
                let m = tape.add(cand[e], ad);
                next_f2v.push(tape.log_normalize(m));
            }
            f2v = next_f2v;
        }
        Ok(Unrolled {
            var_to_fac: v2f,
            fac_to_var: f2v,
            alphas,
        })
    }

    /// Log variable beliefs from factor-to-variable messages.
    pub fn log_beliefs(tape: &mut Tape, g: &FactorGraph, fac_to_var: &[Var]) -> Vec<Var> {
        g.variable_edges()
            .iter()
            .enumerate()
            .map(|(v, es)| {
                let mut acc: Option<Var> = None;
                for &c in es {
                    acc = Some(match acc {
                        None => fac_to_var[c],
                        Some(a) => tape.add(a, fac_to_var[c]),
                    });
                }
                let sum = acc.unwrap_or_else(|| tape.vector(vec![0.0; g.cardinality(v)]));
                tape.log_normalize(sum)
            })
            .collect()
    }

    /// Runs the model and returns messages and beliefs like `run_bp`.
    pub fn forward(&self, g: &FactorGraph) -> Result<BpResult> {
        let mut tape = Tape::new();
        let bound = self.params.bind(&mut tape);
        let u = self.unroll(&mut tape, &bound, g)?;
        let messages = MessageSet {
            var_to_fac: u.var_to_fac.iter().map(|&v| tape.data(v).to_vec()).collect(),
            fac_to_var: u.fac_to_var.iter().map(|&v| tape.data(v).to_vec()).collect(),
        };
        let beliefs: BeliefSet = beliefs(g, &messages);
        Ok(BpResult {
            messages,
            beliefs,
            converged: false,
            iterations: self.config.iterations,
        })
    }

    /// Damping ratios of each iteration, flattened over (edge, state).
    pub fn damping_ratios(&self, g: &FactorGraph) -> Result<Vec<Vec<f64>>> {
        let mut tape = Tape::new();
        let bound = self.params.bind(&mut tape);
        let u = self.unroll(&mut tape, &bound, g)?;
        Ok(u.alphas.iter().map(|&a| tape.data(a).to_vec()).collect())
    }

    /// Cross-entropy between oracle marginals and final beliefs.
    pub fn marginal_loss(&self, tape: &mut Tape, bound: &Bound, g: &FactorGraph, target: &[Vec<f64>]) -> Result<Var> {
        let u = self.unroll(tape, bound, g)?;
        let lb = Self::log_beliefs(tape, g, &u.fac_to_var);
        cross_entropy(tape, &lb, target)
    }

    /// `|(s* − E_b[log score]) / s*|` with assignments drawn independently
    /// from the final variable beliefs.
    pub fn map_loss(&self, tape: &mut Tape, bound: &Bound, g: &FactorGraph, optimum: f64) -> Result<Var> {
        if optimum.abs() <= SCORE_EPS {
            return Err(ModelError::Config(format!("optimal log-score {optimum} too close to zero")));
        }
        let u = self.unroll(tape, bound, g)?;
        let lb = Self::log_beliefs(tape, g, &u.fac_to_var);
        let e = expected_log_score(tape, g, &lb);
        let ratio = tape.affine(e, -1.0 / optimum, 1.0);
        Ok(tape.abs(ratio))
    }

    pub fn train_marginals(&mut self, train: &[Example], val: &[Example], cfg: &TrainConfig) -> Result<TrainHistory> {
        for ex in train.iter().chain(val) {
            ex.marginals()?;
        }
        let model = self.clone();
        fit(&mut self.params, train, val, cfg, |tape, bound, ex: &Example| {
            model.marginal_loss(tape, bound, &ex.graph, ex.marginals()?)
        })
    }

    /// Trains on the expected-score loss. Examples whose optimal log-score is
    /// within [`SCORE_EPS`] of zero are dropped with a warning.
    pub fn train_map(&mut self, train: &[Example], val: &[Example], cfg: &TrainConfig) -> Result<TrainHistory> {
        if self.config.mode != BpMode::Max {
            return Err(ModelError::Config("MAP training needs max mode".into()));
        }
        let keep = |set: &[Example], what: &str| -> Result<Vec<Example>> {
            let mut out = Vec::with_capacity(set.len());
            for (i, ex) in set.iter().enumerate() {
                let s = ex.map_log_score()?;
                if s.abs() <= SCORE_EPS || !s.is_finite() {
                    log::warn!("{what} graph {i}: optimal log-score {s} unusable for the relative loss, skipped");
                } else {
                    out.push(ex.clone());
                }
            }
            Ok(out)
        };
        let train = keep(train, "training")?;
        let val = keep(val, "validation")?;
        let model = self.clone();
        fit(&mut self.params, &train, &val, cfg, |tape, bound, ex: &Example| {
            model.map_loss(tape, bound, &ex.graph, ex.map_log_score()?)
        })
    }
}

/// `Σ_a Σ_{x_a} Π_j b_j(x_j) Ψ_a(x_a)` on the tape.
pub fn expected_log_score(tape: &mut Tape, g: &FactorGraph, log_beliefs: &[Var]) -> Var {
    let mut total: Option<Var> = None;
    for f in g.factors() {
        let ops: Vec<Var> = f.scope.iter().map(|&v| log_beliefs[v]).collect();
        let lp = tape.tensor_sum(&ops);
        let p = tape.exp(lp);
        let psi = tape.leaf(f.log_potential.clone());
        let w = tape.mul(p, psi);
        let s = tape.sum_all(w);
        total = Some(match total {
            None => s,
            Some(t) => tape.add(t, s),
        });
    }
    total.unwrap_or_else(|| tape.constant_scalar(0.0))
}

/// Expected log-score of independent draws from `beliefs`, computed directly.
pub fn expected_log_score_value(g: &FactorGraph, beliefs: &[Vec<f64>]) -> f64 {
    let mut tape = Tape::new();
    let lb: Vec<Var> = beliefs
        .iter()
        .map(|b| {
            let t = DenseTensor::vector(b.iter().map(|p| p.ln()).collect()).expect("non-empty belief");
            tape.leaf(t)
        })
        .collect();
    let e = expected_log_score(&mut tape, g, &lb);
    tape.scalar(e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use fg_core::bp::{run_bp, BpConfig, DampingScope};
    use fg_core::graph::ZeroClamp;

    fn unary() -> FactorGraph {
        FactorGraph::from_linear(vec![2], vec![(vec![0], vec![1.0, 3.0])], ZeroClamp::default()).unwrap()
    }

    #[test]
    fn zero_params_match_factor_damped_bp() {
        let g = FactorGraph::from_linear(
            vec![2, 3, 2],
            vec![
                (vec![0, 1], vec![1.0, 2.0, 0.5, 3.0, 1.0, 0.2]),
                (vec![1, 2], vec![0.3, 1.0, 2.0, 1.0, 1.5, 0.7]),
                (vec![2, 0], vec![2.0, 1.0, 1.0, 4.0]),
                (vec![1], vec![1.0, 2.0, 3.0]),
            ],
            ZeroClamp::default(),
        )
        .unwrap();
        let cfg = FeNbpConfig::default();
        let m = FeNbpModel::zeroed(cfg).unwrap();
        let out = m.forward(&g).unwrap();
        let bp = run_bp(
            &g,
            &BpConfig {
                damping: 0.5,
                max_iters: cfg.iterations,
                convergence_tol: 0.0,
                damping_scope: DampingScope::FactorToVariable,
                ..BpConfig::default()
            },
        );
        for (a, b) in out.beliefs.variable_beliefs.iter().flatten().zip(bp.beliefs.variable_beliefs.iter().flatten()) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn single_unary_converges_to_potential() {
        let m = FeNbpModel::random(FeNbpConfig { iterations: 200, ..Default::default() }, 4).unwrap();
        let b = &m.forward(&unary()).unwrap().beliefs.variable_beliefs[0];
        assert!((b[0] - 0.25).abs() < 1e-9 && (b[1] - 0.75).abs() < 1e-9, "{b:?}");
    }

    #[test]
    fn init_damping_is_honoured() {
        let m = FeNbpModel::new(FeNbpConfig { init_damping: 0.8, ..Default::default() }, 1).unwrap();
        for row in m.damping_ratios(&unary()).unwrap() {
            for a in row {
                assert!((a - 0.8).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn uniform_belief_map_loss_is_half() {
        let g = unary();
        let mut tape = Tape::new();
        let lb = vec![tape.vector(vec![0.5f64.ln(); 2])];
        let e = expected_log_score(&mut tape, &g, &lb);
        assert!((tape.scalar(e) - 0.5 * 3f64.ln()).abs() < 1e-15);
        let s = 3f64.ln();
        let r = tape.affine(e, -1.0 / s, 1.0);
        let l = tape.abs(r);
        assert!((tape.scalar(l) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn point_mass_map_loss_is_zero() {
        let g = unary();
        let v = expected_log_score_value(&g, &[vec![0.0, 1.0]]);
        assert!((v - 3f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn rejects_near_zero_optimum() {
        let m = FeNbpModel::zeroed(FeNbpConfig { mode: BpMode::Max, ..Default::default() }).unwrap();
        let mut tape = Tape::new();
        let b = m.params.bind(&mut tape);
        assert!(m.map_loss(&mut tape, &b, &unary(), 0.0).is_err());
    }
}
