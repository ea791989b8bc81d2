//! MLP and GRU building blocks on top of the tape.

use rand::Rng;
use serde::{Deserialize, Serialize};

use fg_core::tensor::DenseTensor;

use crate::error::{NnError, Result};
use crate::params::{Bound, ParamStore};
use crate::tape::{Tape, Var};

pub const GRAPH_NORM_EPS: f64 = 1e-5;
pub const LEAKY_SLOPE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    LeakyRelu,
    Tanh,
    Identity,
}

/// Layer widths from input to output; hidden layers get
/// affine → optional graph norm → activation, the last layer is linear.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub sizes: Vec<usize>,
    pub activation: Activation,
    pub graph_norm: bool,
}

impl MlpSpec {
    pub fn new(sizes: Vec<usize>, activation: Activation) -> Self {
        Self {
            sizes,
            activation,
            graph_norm: false,
        }
    }

    pub fn with_graph_norm(mut self, on: bool) -> Self {
        self.graph_norm = on;
        self
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().expect("at least one size")
    }

    pub fn num_layers(&self) -> usize {
        self.sizes.len() - 1
    }
}

fn weight_name(prefix: &str, layer: usize) -> String {
    format!("{prefix}/l{layer}/w")
}

fn bias_name(prefix: &str, layer: usize) -> String {
    format!("{prefix}/l{layer}/b")
}

fn uniform(rng: &mut impl Rng, n: usize, bound: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-bound..=bound)).collect()
}

/// Glorot-uniform weights and zero biases. With `zero_output` the final layer
/// starts at zero so the network initially outputs zeros.
pub fn init_mlp(store: &mut ParamStore, prefix: &str, spec: &MlpSpec, rng: &mut impl Rng, zero_output: bool) -> Result<()> {
    if spec.sizes.len() < 2 || spec.sizes.contains(&0) {
        return Err(NnError::Empty(format!("mlp {prefix} layer sizes {:?}", spec.sizes)));
    }
    for l in 0..spec.num_layers() {
        let (i, o) = (spec.sizes[l], spec.sizes[l + 1]);
        let w = if zero_output && l + 1 == spec.num_layers() {
            vec![0.0; i * o]
        } else {
            uniform(rng, i * o, (6.0 / (i + o) as f64).sqrt())
        };
        store.insert(&weight_name(prefix, l), vec![i, o], w)?;
        store.insert(&bias_name(prefix, l), vec![o], vec![0.0; o])?;
    }
    Ok(())
}

fn check_shape(tape: &Tape, v: Var, name: &str, expected: &[usize]) -> Result<()> {
    if tape.shape(v) != expected {
        return Err(NnError::ShapeMismatch {
            name: name.to_string(),
            expected: expected.to_vec(),
            actual: tape.shape(v).to_vec(),
        });
    }
    Ok(())
}

pub fn activate(tape: &mut Tape, x: Var, act: Activation) -> Var {
    match act {
        Activation::Relu => tape.relu(x),
        Activation::LeakyRelu => tape.leaky_relu(x, LEAKY_SLOPE),
        Activation::Tanh => tape.tanh(x),
        Activation::Identity => x,
    }
}

/// Applies the MLP row-wise to `x: [n×in]`. Graph-norm statistics are taken
/// over the `n` rows, so `x` should hold the features of one graph.
pub fn mlp(tape: &mut Tape, bound: &Bound, prefix: &str, spec: &MlpSpec, x: Var) -> Result<Var> {
    match tape.shape(x) {
        [_, d] if *d == spec.input_dim() => {}
        s => {
            return Err(NnError::ShapeMismatch {
                name: format!("{prefix} input"),
                expected: vec![0, spec.input_dim()],
                actual: s.to_vec(),
            })
        }
    }
    let mut h = x;
    for l in 0..spec.num_layers() {
        let (i, o) = (spec.sizes[l], spec.sizes[l + 1]);
        let (wn, bn) = (weight_name(prefix, l), bias_name(prefix, l));
        let w = bound.get(&wn)?;
        let b = bound.get(&bn)?;
        check_shape(tape, w, &wn, &[i, o])?;
        check_shape(tape, b, &bn, &[o])?;
        let z = tape.matmul(h, w);
        h = tape.add_row(z, b);
        if l + 1 < spec.num_layers() {
            if spec.graph_norm {
                h = tape.graph_norm(h, GRAPH_NORM_EPS);
            }
            h = activate(tape, h, spec.activation);
        }
    }
    Ok(h)
}

/// Single-vector convenience wrapper around [`mlp`].
pub fn mlp_forward(store: &ParamStore, prefix: &str, spec: &MlpSpec, input: &[f64]) -> Result<Vec<f64>> {
    let mut tape = Tape::new();
    let bound = store.bind(&mut tape);
    let x = tape.leaf(row_matrix(input));
    let y = mlp(&mut tape, &bound, prefix, spec, x)?;
    Ok(tape.data(y).to_vec())
}

fn row_matrix(v: &[f64]) -> DenseTensor {
    DenseTensor::new(vec![1, v.len()], v.to_vec()).expect("non-empty vector")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GruSpec {
    pub input: usize,
    pub hidden: usize,
}

const GRU_INPUT: [&str; 3] = ["wz", "wr", "wn"];
const GRU_HIDDEN: [&str; 3] = ["uz", "ur", "un"];
const GRU_BIAS: [&str; 4] = ["bz", "br", "bin", "bhn"];

/// Glorot-uniform weights, zero biases.
pub fn init_gru(store: &mut ParamStore, prefix: &str, spec: GruSpec, rng: &mut impl Rng) -> Result<()> {
    if spec.hidden == 0 || spec.input == 0 {
        return Err(NnError::Empty(format!("gru {prefix} dimensions")));
    }
    let (i, h) = (spec.input, spec.hidden);
    for n in GRU_INPUT {
        store.insert(&format!("{prefix}/{n}"), vec![i, h], uniform(rng, i * h, (6.0 / (i + h) as f64).sqrt()))?;
    }
    for n in GRU_HIDDEN {
        store.insert(&format!("{prefix}/{n}"), vec![h, h], uniform(rng, h * h, (3.0 / h as f64).sqrt()))?;
    }
    for n in GRU_BIAS {
        store.insert(&format!("{prefix}/{n}"), vec![h], vec![0.0; h])?;
    }
    Ok(())
}

/// Row-wise GRU update of `h: [n×H]` with inputs `x: [n×in]`:
///
/// z = σ(x Wz + h Uz + bz), r = σ(x Wr + h Ur + br),
/// ñ = tanh(x Wn + bin + r ⊙ (h Un + bhn)), h' = ñ + z ⊙ (h − ñ).
pub fn gru(tape: &mut Tape, bound: &Bound, prefix: &str, spec: GruSpec, h: Var, x: Var) -> Result<Var> {
    let n = match tape.shape(h) {
        [n, d] if *d == spec.hidden => *n,
        s => {
            return Err(NnError::ShapeMismatch {
                name: format!("{prefix} hidden"),
                expected: vec![0, spec.hidden],
                actual: s.to_vec(),
            })
        }
    };
    check_shape(tape, x, &format!("{prefix} input"), &[n, spec.input])?;
    let p = |name: &str| -> Result<Var> { bound.get(&format!("{prefix}/{name}")) };
    for name in GRU_INPUT {
        check_shape(tape, p(name)?, name, &[spec.input, spec.hidden])?;
    }
    for name in GRU_HIDDEN {
        check_shape(tape, p(name)?, name, &[spec.hidden, spec.hidden])?;
    }
    for name in GRU_BIAS {
        check_shape(tape, p(name)?, name, &[spec.hidden])?;
    }
    let gate = |tape: &mut Tape, w: Var, u: Var, b: Var| {
        let a = tape.matmul(x, w);
        let c = tape.matmul(h, u);
        let s = tape.add(a, c);
        let s = tape.add_row(s, b);
        tape.sigmoid(s)
    };
    let z = gate(tape, p("wz")?, p("uz")?, p("bz")?);
    let r = gate(tape, p("wr")?, p("ur")?, p("br")?);
    let xn = tape.matmul(x, p("wn")?);
    let xn = tape.add_row(xn, p("bin")?);
    let hn = tape.matmul(h, p("un")?);
    let hn = tape.add_row(hn, p("bhn")?);
    let rh = tape.mul(r, hn);
    let pre = tape.add(xn, rh);
    let cand = tape.tanh(pre);
    let diff = tape.sub(h, cand);
    let zd = tape.mul(z, diff);
    Ok(tape.add(cand, zd))
}

/// Single-vector convenience wrapper around [`gru`].
pub fn gru_cell(store: &ParamStore, prefix: &str, spec: GruSpec, hidden: &[f64], input: &[f64]) -> Result<Vec<f64>> {
    let mut tape = Tape::new();
    let bound = store.bind(&mut tape);
    let h = tape.leaf(row_matrix(hidden));
    let x = tape.leaf(row_matrix(input));
    let y = gru(&mut tape, &bound, prefix, spec, h, x)?;
    Ok(tape.data(y).to_vec())
}

/// Per-channel standardisation of a set of equal-length feature vectors.
pub fn graph_norm(features: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let first = features.first().ok_or_else(|| NnError::Empty("graph_norm features".into()))?;
    let d = first.len();
    if let Some(bad) = features.iter().find(|f| f.len() != d) {
        return Err(NnError::ShapeMismatch {
            name: "graph_norm feature".into(),
            expected: vec![d],
            actual: vec![bad.len()],
        });
    }
    let mut tape = Tape::new();
    let flat: Vec<f64> = features.concat();
    let x = tape.leaf(DenseTensor::new(vec![features.len(), d], flat).map_err(|_| NnError::Empty("graph_norm channels".into()))?);
    let y = tape.graph_norm(x, GRAPH_NORM_EPS);
    Ok(tape.data(y).chunks(d).map(|c| c.to_vec()).collect())
}
