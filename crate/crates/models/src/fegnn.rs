//! Learned message passing over directed-edge hidden states.
//!
//! Every directed edge carries a hidden vector of size `H`. A layer first
//! updates variable-to-factor states with a GRU fed by the sum of `MLP_1` over
//! the other incoming factor states, then updates factor-to-variable states
//! with a GRU fed by a BP-style aggregation: `MLP_2` maps each incoming state
//! to a `C`-vector, these are outer-summed with `Ψ_a`, reduced by log-sum-exp
//! onto the target axis, normalised and projected back to `H`. Marginals are
//! read out as `softmax(MLP_3(Σ_a h_{a→i}))`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use fg_core::tensor::DenseTensor;
use fg_core::FactorGraph;
use fg_nn::layers::init_mlp;
use fg_nn::{gru, init_gru, mlp, Activation, Bound, GruSpec, MlpSpec, ParamStore, Tape, Var};

use crate::error::{ModelError, Result};
use crate::train::{cross_entropy, fit, Example, TrainConfig, TrainHistory};

pub const PREFIX: &str = "fegnn";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeGnnConfig {
    pub hidden: usize,
    pub cardinality: usize,
    pub layers: usize,
    pub mlp_hidden: usize,
    /// Also feed the max-reduced aggregation into the factor-to-variable GRU.
    pub max_features: bool,
}

impl Default for FeGnnConfig {
    fn default() -> Self {
        Self {
            hidden: 5,
            cardinality: 2,
            layers: 10,
            mlp_hidden: 64,
            max_features: false,
        }
    }
}

impl FeGnnConfig {
    fn mlp(&self, out: usize) -> MlpSpec {
        MlpSpec::new(vec![self.hidden, self.mlp_hidden, self.mlp_hidden, out], Activation::Relu)
    }

    pub fn mlp1(&self) -> MlpSpec {
        self.mlp(self.hidden)
    }

    pub fn mlp2(&self) -> MlpSpec {
        self.mlp(self.cardinality)
    }

    pub fn mlp3(&self) -> MlpSpec {
        self.mlp(self.cardinality)
    }

    pub fn gru1(&self) -> GruSpec {
        GruSpec {
            input: self.hidden,
            hidden: self.hidden,
        }
    }

    pub fn gru2(&self) -> GruSpec {
        GruSpec {
            input: self.hidden,
            hidden: self.hidden,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.cardinality == 0 || self.mlp_hidden == 0 {
            return Err(ModelError::Config("hidden, cardinality and MLP width must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeGnnModel {
    pub config: FeGnnConfig,
    pub params: ParamStore,
}

fn name(part: &str) -> String {
    format!("{PREFIX}/{part}")
}

fn uniform(rng: &mut ChaCha8Rng, n: usize, bound: f64) -> Vec<f64> {
    use rand::Rng;
    (0..n).map(|_| rng.random_range(-bound..=bound)).collect()
}

impl FeGnnModel {
    pub fn new(config: FeGnnConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut p = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        init_mlp(&mut p, &name("mlp1"), &config.mlp1(), &mut rng, false)?;
        init_mlp(&mut p, &name("mlp2"), &config.mlp2(), &mut rng, false)?;
        init_mlp(&mut p, &name("mlp3"), &config.mlp3(), &mut rng, false)?;
        init_gru(&mut p, &name("gru1"), config.gru1(), &mut rng)?;
        init_gru(&mut p, &name("gru2"), config.gru2(), &mut rng)?;
        let (c, h) = (config.cardinality, config.hidden);
        let bound = (6.0 / (c + h) as f64).sqrt();
        p.insert(&name("proj/w"), vec![c, h], uniform(&mut rng, c * h, bound))?;
        p.insert(&name("proj/b"), vec![h], vec![0.0; h])?;
        if config.max_features {
            p.insert(&name("proj_max/w"), vec![c, h], uniform(&mut rng, c * h, bound))?;
        }
        Ok(Self { config, params: p })
    }

    pub fn zeroed(config: FeGnnConfig) -> Result<Self> {
        let mut m = Self::new(config, 0)?;
        m.params.fill(0.0);
        Ok(m)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(self.params.to_json()?)
    }

    pub fn load_json(&mut self, text: &str) -> Result<()> {
        Ok(self.params.load_json(text)?)
    }

    pub fn check_graph(&self, g: &FactorGraph) -> Result<()> {
        let c = self.config.cardinality;
        match g.cardinalities().iter().position(|&k| k != c) {
            Some(var) => Err(ModelError::CardinalityMismatch {
                var,
                expected: c,
                actual: g.cardinality(var),
            }),
            None => Ok(()),
        }
    }

    /// Log marginals `[V×C]` on the tape.
    pub fn log_marginals(&self, tape: &mut Tape, bound: &Bound, g: &FactorGraph) -> Result<Var> {
        self.check_graph(g)?;
        let cfg = &self.config;
        let (h_dim, c) = (cfg.hidden, cfg.cardinality);
        let edges = g.edges();
        let n_vars = g.num_vars();
        let edge_var: Vec<usize> = edges.iter().map(|e| e.variable).collect();
        let zeros = |tape: &mut Tape, rows: usize, cols: usize| {
            tape.leaf(DenseTensor::zeros(vec![rows, cols]).expect("non-empty"))
        };
        let agg = if edges.is_empty() {
            zeros(tape, n_vars, h_dim)
        } else {
            let n_edges = edges.len();
            let psi: Vec<Var> = g.factors().iter().map(|f| tape.leaf(f.log_potential.clone())).collect();
            let zero_c = tape.vector(vec![0.0; c]);
            let mut h_v2f = zeros(tape, n_edges, h_dim);
            let mut h_f2v = zeros(tape, n_edges, h_dim);
            let proj_w = bound.get(&name("proj/w"))?;
            let proj_b = bound.get(&name("proj/b"))?;
            let proj_max = if cfg.max_features { Some(bound.get(&name("proj_max/w"))?) } else { None };
            for _ in 0..cfg.layers {
                let u = mlp(tape, bound, &name("mlp1"), &cfg.mlp1(), h_f2v)?;
                let per_var = tape.segment_sum_rows(u, &edge_var, n_vars);
                let gathered = tape.gather_rows(per_var, &edge_var);
                let input = tape.sub(gathered, u);
                h_v2f = gru(tape, bound, &name("gru1"), cfg.gru1(), h_v2f, input)?;

                let p = mlp(tape, bound, &name("mlp2"), &cfg.mlp2(), h_v2f)?;
                let rows: Vec<Var> = (0..n_edges).map(|e| tape.row(p, e)).collect();
                let mut lse_msgs = Vec::with_capacity(n_edges);
                let mut max_msgs = Vec::new();
                let mut base = 0;
                for (a, f) in g.factors().iter().enumerate() {
                    let k = f.scope.len();
                    for pos in 0..k {
                        let ops: Vec<Var> = (0..k).map(|j| if j == pos { zero_c } else { rows[base + j] }).collect();
                        let ts = tape.tensor_sum(&ops);
                        let t = tape.add(psi[a], ts);
                        let m = tape.logsumexp_except(t, pos);
                        lse_msgs.push(tape.log_normalize(m));
                        if cfg.max_features {
                            let mx = tape.max_except(t, pos);
                            max_msgs.push(tape.log_normalize(mx));
                        }
                    }
                    base += k;
                }
                let m = tape.stack_rows(&lse_msgs);
                let x = tape.matmul(m, proj_w);
                let mut x = tape.add_row(x, proj_b);
                if let Some(w) = proj_max {
                    let mm = tape.stack_rows(&max_msgs);
                    let xm = tape.matmul(mm, w);
                    x = tape.add(x, xm);
                }
                h_f2v = gru(tape, bound, &name("gru2"), cfg.gru2(), h_f2v, x)?;
            }
            tape.segment_sum_rows(h_f2v, &edge_var, n_vars)
        };
        let logits = mlp(tape, bound, &name("mlp3"), &cfg.mlp3(), agg)?;
        Ok(tape.log_softmax(logits))
    }

    /// Estimated marginals, one row per variable.
    pub fn forward(&self, g: &FactorGraph) -> Result<Vec<Vec<f64>>> {
        let mut tape = Tape::new();
        let bound = self.params.bind(&mut tape);
        let lm = self.log_marginals(&mut tape, &bound, g)?;
        let probs = tape.exp(lm);
        // renormalise so each row sums to one to rounding
        let c = self.config.cardinality;
        Ok(tape
            .data(probs)
            .chunks(c)
            .map(|r| {
                let s: f64 = r.iter().sum();
                r.iter().map(|x| x / s).collect()
            })
            .collect())
    }

    pub fn marginal_loss(&self, tape: &mut Tape, bound: &Bound, g: &FactorGraph, target: &[Vec<f64>]) -> Result<Var> {
        let lm = self.log_marginals(tape, bound, g)?;
        let rows: Vec<Var> = (0..g.num_vars()).map(|i| tape.row(lm, i)).collect();
        cross_entropy(tape, &rows, target)
    }

    pub fn train(&mut self, train: &[Example], val: &[Example], cfg: &TrainConfig) -> Result<TrainHistory> {
        for ex in train.iter().chain(val) {
            ex.marginals()?;
            self.check_graph(&ex.graph)?;
        }
        let model = self.clone();
        fit(&mut self.params, train, val, cfg, |tape, bound, ex: &Example| {
            model.marginal_loss(tape, bound, &ex.graph, ex.marginals()?)
        })
    }
}
