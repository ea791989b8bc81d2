//! Central-difference gradient checking for tape programs.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::params::{Bound, ParamStore};
use crate::tape::{Tape, Var};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradcheckConfig {
    pub coords: usize,
    pub step: f64,
    pub seed: u64,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        Self {
            coords: 50,
            step: 1e-5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradcheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
    /// Coordinates whose perturbation changed a relu/abs/max branch.
    pub skipped: usize,
}

/// `|a − n| / max(|a|, |n|, 1e-6)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Compares reverse-mode gradients of the scalar program `f` against central
/// differences on randomly chosen parameter coordinates (all of them when
/// there are fewer than `cfg.coords`).
pub fn gradcheck<F>(store: &ParamStore, f: F, cfg: &GradcheckConfig) -> GradcheckReport
where
    F: Fn(&mut Tape, &Bound) -> Var,
{
    let eval = |s: &ParamStore| {
        let mut tape = Tape::new();
        let bound = s.bind(&mut tape);
        let out = f(&mut tape, &bound);
        (tape.scalar(out), tape.branch_signature())
    };
    let mut tape = Tape::new();
    let bound = store.bind(&mut tape);
    let out = f(&mut tape, &bound);
    let base_sig = tape.branch_signature();
    let grads = tape.backward(out);
    let analytic: Vec<f64> = store.extract_grads(&bound, &grads).concat();

    let n = analytic.len();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let coords: Vec<usize> = if n <= cfg.coords {
        (0..n).collect()
    } else {
        sample(&mut rng, n, cfg.coords).into_vec()
    };
    let mut report = GradcheckReport {
        max_rel_error: 0.0,
        checked: 0,
        skipped: 0,
    };
    let mut probe = store.clone();
    for k in coords {
        let x0 = *probe.flat_value_mut(k);
        *probe.flat_value_mut(k) = x0 + cfg.step;
        let (fp, sp) = eval(&probe);
        *probe.flat_value_mut(k) = x0 - cfg.step;
        let (fm, sm) = eval(&probe);
        *probe.flat_value_mut(k) = x0;
        if sp != base_sig || sm != base_sig {
            report.skipped += 1;
            continue;
        }
        let numeric = (fp - fm) / (2.0 * cfg.step);
        report.max_rel_error = report.max_rel_error.max(relative_error(analytic[k], numeric));
        report.checked += 1;
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_program_is_exact() {
        let mut s = ParamStore::new();
        s.insert("x", vec![60], (0..60).map(|i| (i as f64 * 0.1 - 3.0) * 0.01).collect()).unwrap();
        let coef: Vec<f64> = (0..60).map(|i| (i as f64).sin() + 2.0).collect();
        let r = gradcheck(
            &s,
            |t, b| {
                let c = t.vector(coef.clone());
                let p = t.mul(b.get("x").unwrap(), c);
                t.sum_all(p)
            },
            &GradcheckConfig::default(),
        );
        assert_eq!(r.checked, 50);
        assert!(r.max_rel_error < 1e-10, "{r:?}");
    }

    #[test]
    fn kink_crossings_are_skipped() {
        let mut s = ParamStore::new();
        s.insert("x", vec![2], vec![1e-7, 1.0]).unwrap();
        let r = gradcheck(
            &s,
            |t, b| {
                let y = t.relu(b.get("x").unwrap());
                t.sum_all(y)
            },
            &GradcheckConfig::default(),
        );
        assert_eq!((r.checked, r.skipped), (1, 1));
        assert!(r.max_rel_error < 1e-10);
    }
}
