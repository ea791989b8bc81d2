use fg_core::DenseTensor;
use fg_nn::{gradcheck, gru, init_gru, init_mlp, mlp, Activation, Bound, GradcheckConfig, GruSpec, MlpSpec, ParamStore, Tape, Var};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEEDS: [u64; 3] = [1, 2, 3];
const TOL: f64 = 1e-4;

fn random_store(seed: u64, shapes: &[(&str, Vec<usize>)], lo: f64, hi: f64) -> ParamStore {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = ParamStore::new();
    for (name, shape) in shapes {
        let n = shape.iter().product::<usize>().max(1);
        s.insert(name, shape.clone(), (0..n).map(|_| rng.random_range(lo..hi)).collect()).unwrap();
    }
    s
}

/// Σ c ⊙ x with fixed pseudo-random weights, so that no op is checked
/// through a constant.
fn weighted(t: &mut Tape, x: Var) -> Var {
    let shape = t.shape(x).to_vec();
    let n = t.data(x).len();
    let c: Vec<f64> = (0..n).map(|i| ((i * 7 + 3) as f64).sin() + 0.3).collect();
    let c = t.leaf(DenseTensor::new(shape, c).unwrap());
    let p = t.mul(x, c);
    t.sum_all(p)
}

fn check<F>(shapes: &[(&str, Vec<usize>)], lo: f64, hi: f64, f: F)
where
    F: Fn(&mut Tape, &Bound) -> Var,
{
    for seed in SEEDS {
        let store = random_store(seed, shapes, lo, hi);
        let r = gradcheck(&store, &f, &GradcheckConfig { seed, ..GradcheckConfig::default() });
        assert!(r.checked > 0, "seed {seed}: nothing checked");
        assert!(r.max_rel_error < TOL, "seed {seed}: rel error {}", r.max_rel_error);
    }
}

fn p(b: &Bound, name: &str) -> Var {
    b.get(name).unwrap()
}

#[test]
fn elementwise_binary_ops() {
    let shapes = [("a", vec![3, 4]), ("b", vec![3, 4])];
    check(&shapes, -2.0, 2.0, |t, b| {
        let s = t.add(p(b, "a"), p(b, "b"));
        weighted(t, s)
    });
    check(&shapes, -2.0, 2.0, |t, b| {
        let s = t.sub(p(b, "a"), p(b, "b"));
        weighted(t, s)
    });
    check(&shapes, -2.0, 2.0, |t, b| {
        let s = t.mul(p(b, "a"), p(b, "b"));
        weighted(t, s)
    });
}

#[test]
fn affine_and_row_bias() {
    check(&[("x", vec![4, 3]), ("b", vec![3])], -2.0, 2.0, |t, b| {
        let y = t.affine(p(b, "x"), -1.5, 0.25);
        let z = t.add_row(y, p(b, "b"));
        weighted(t, z)
    });
}

#[test]
fn matrix_products() {
    check(&[("x", vec![4, 3]), ("w", vec![3, 5])], -1.0, 1.0, |t, b| {
        let y = t.matmul(p(b, "x"), p(b, "w"));
        weighted(t, y)
    });
    check(&[("w", vec![5, 3]), ("x", vec![3])], -1.0, 1.0, |t, b| {
        let y = t.matvec(p(b, "w"), p(b, "x"));
        weighted(t, y)
    });
}

#[test]
fn structural_ops() {
    check(&[("a", vec![3]), ("b", vec![3]), ("c", vec![4])], -1.0, 1.0, |t, b| {
        let cat = t.concat(&[p(b, "a"), p(b, "c"), p(b, "a")]);
        let cols = t.stack_columns(&[p(b, "a"), p(b, "b")]);
        let rows = t.stack_rows(&[p(b, "b"), p(b, "a")]);
        let r = t.row(rows, 1);
        let sl = t.slice(cat, 2, 5);
        let re = t.reshape(cols, vec![6]);
        let parts = [weighted(t, sl), weighted(t, re), weighted(t, r)];
        let all = t.concat(&parts);
        t.sum_all(all)
    });
}

#[test]
fn gather_and_segment_sum() {
    check(&[("x", vec![4, 3])], -1.0, 1.0, |t, b| {
        let g = t.gather_rows(p(b, "x"), &[3, 0, 0, 2, 1, 3]);
        let s = t.segment_sum_rows(g, &[1, 0, 1, 2, 2, 0], 3);
        weighted(t, s)
    });
}

#[test]
fn smooth_activations() {
    let shapes = [("x", vec![2, 5])];
    check(&shapes, -3.0, 3.0, |t, b| {
        let y = t.sigmoid(p(b, "x"));
        weighted(t, y)
    });
    check(&shapes, -3.0, 3.0, |t, b| {
        let y = t.tanh(p(b, "x"));
        weighted(t, y)
    });
    check(&shapes, -3.0, 3.0, |t, b| {
        let y = t.exp(p(b, "x"));
        weighted(t, y)
    });
    check(&shapes, 0.1, 3.0, |t, b| {
        let y = t.log(p(b, "x"));
        weighted(t, y)
    });
}

#[test]
fn piecewise_activations() {
    let shapes = [("x", vec![3, 4])];
    check(&shapes, -2.0, 2.0, |t, b| {
        let y = t.relu(p(b, "x"));
        weighted(t, y)
    });
    check(&shapes, -2.0, 2.0, |t, b| {
        let y = t.leaky_relu(p(b, "x"), 0.01);
        weighted(t, y)
    });
    check(&shapes, -2.0, 2.0, |t, b| {
        let y = t.abs(p(b, "x"));
        weighted(t, y)
    });
}

#[test]
fn tensor_reductions() {
    let shapes = [("a", vec![2]), ("b", vec![3]), ("c", vec![2])];
    for axis in 0..3 {
        check(&shapes, -2.0, 2.0, move |t, b| {
            let s = t.tensor_sum(&[p(b, "a"), p(b, "b"), p(b, "c")]);
            let l = t.logsumexp_except(s, axis);
            weighted(t, l)
        });
        check(&shapes, -2.0, 2.0, move |t, b| {
            let s = t.tensor_sum(&[p(b, "a"), p(b, "b"), p(b, "c")]);
            let m = t.max_except(s, axis);
            weighted(t, m)
        });
    }
}

#[test]
fn normalisations() {
    let shapes = [("x", vec![4, 3])];
    check(&shapes, -2.0, 2.0, |t, b| {
        let y = t.softmax(p(b, "x"));
        weighted(t, y)
    });
    check(&shapes, -2.0, 2.0, |t, b| {
        let y = t.log_softmax(p(b, "x"));
        weighted(t, y)
    });
    check(&shapes, -2.0, 2.0, |t, b| {
        let y = t.log_normalize(p(b, "x"));
        weighted(t, y)
    });
    check(&shapes, -2.0, 2.0, |t, b| {
        let y = t.graph_norm(p(b, "x"), 1e-5);
        weighted(t, y)
    });
}

#[test]
fn mlp_and_gru_layers() {
    for seed in SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = random_store(seed, &[("x", vec![4, 3]), ("h", vec![4, 5])], -1.0, 1.0);
        let spec = MlpSpec::new(vec![3, 8, 8, 5], Activation::LeakyRelu).with_graph_norm(true);
        init_mlp(&mut store, "m", &spec, &mut rng, false).unwrap();
        let gspec = GruSpec { input: 5, hidden: 5 };
        init_gru(&mut store, "g", gspec, &mut rng).unwrap();
        let r = gradcheck(
            &store,
            |t, b| {
                let y = mlp(t, b, "m", &spec, p(b, "x")).unwrap();
                let h = gru(t, b, "g", gspec, p(b, "h"), y).unwrap();
                weighted(t, h)
            },
            &GradcheckConfig { seed, ..GradcheckConfig::default() },
        );
        assert!(r.checked >= 40, "seed {seed}: only {} checked", r.checked);
        assert!(r.max_rel_error < TOL, "seed {seed}: rel error {}", r.max_rel_error);
    }
}

proptest! {
    #[test]
    fn normalised_outputs_are_distributions(v in prop::collection::vec(-30.0f64..30.0, 1..8)) {
        let mut t = Tape::new();
        let x = t.vector(v.clone());
        let ln = t.log_normalize(x);
        let sm = t.softmax(x);
        let total: f64 = t.data(ln).iter().map(|z| z.exp()).sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        prop_assert!((t.data(sm).iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn graph_norm_standardises_columns(rows in 2usize..7, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data: Vec<f64> = (0..rows * 3).map(|_| rng.random_range(-10.0..10.0)).collect();
        let mut t = Tape::new();
        let x = t.leaf(DenseTensor::new(vec![rows, 3], data).unwrap());
        let y = t.graph_norm(x, 0.0);
        let out = t.data(y);
        for c in 0..3 {
            let col: Vec<f64> = (0..rows).map(|r| out[r * 3 + c]).collect();
            let mean = col.iter().sum::<f64>() / rows as f64;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / rows as f64;
            prop_assert!(mean.abs() < 1e-9);
            prop_assert!((var - 1.0).abs() < 1e-6);
        }
    }
}
