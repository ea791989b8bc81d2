//! Marginal and MAP quality metrics against oracle labels.

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use fg_core::bp::argmax;
use fg_core::exact::ExactResult;
use fg_core::FactorGraph;

use crate::error::{CliError, Result};

pub const KL_FLOOR: f64 = 1e-12;

/// What an algorithm produced for one instance.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Estimate {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub marginals: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub map: Option<Vec<usize>>,
}

impl Estimate {
    /// The explicit MAP guess, or the per-variable argmax of the marginals.
    pub fn assignment(&self) -> Option<Vec<usize>> {
        self.map
            .clone()
            .or_else(|| self.marginals.as_ref().map(|m| m.iter().map(|r| argmax(r)).collect()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InstanceMetrics {
    pub name: String,
    pub kl: Option<f64>,
    pub rmse: Option<f64>,
    pub uai_score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub kl: Option<f64>,
    pub rmse: Option<f64>,
    pub uai_score: Option<f64>,
    pub per_instance: Vec<InstanceMetrics>,
}

/// `Σ_l p(l) ln(p(l)/q(l))` with `0·ln 0 = 0` and `q` floored at [`KL_FLOOR`].
/// Roundoff below zero is clipped.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> f64 {
    let k: f64 = p
        .iter()
        .zip(q)
        .filter(|(&pl, _)| pl > 0.0)
        .map(|(&pl, &ql)| pl * (pl / ql.max(KL_FLOOR)).ln())
        .sum();
    k.max(0.0)
}

/// `|(s* − ŝ) / s*|`; infinite when the estimate has probability zero. A zero
/// optimum gives 0 for a matching estimate and infinity otherwise.
pub fn uai_ratio(optimum: f64, estimate: f64) -> f64 {
    if estimate == f64::NEG_INFINITY {
        return f64::INFINITY;
    }
    if optimum == 0.0 {
        return if estimate == 0.0 { 0.0 } else { f64::INFINITY };
    }
    ((optimum - estimate) / optimum).abs()
}

fn check_marginals(name: &str, truth: &[Vec<f64>], est: &[Vec<f64>]) -> Result<()> {
    if truth.len() != est.len() || truth.iter().zip(est).any(|(a, b)| a.len() != b.len()) {
        return Err(CliError::BadInput(format!("{name}: estimate shape does not match the oracle")));
    }
    Ok(())
}

/// Dataset metrics. KL is averaged over every (instance, variable), RMSE is
/// taken over every marginal entry, the UAI score is averaged over instances.
/// A metric is `None` when no instance provides what it needs.
pub fn compute_metrics(
    names: &[String],
    graphs: &[FactorGraph],
    oracle: &[ExactResult],
    estimates: &[Estimate],
) -> Result<Metrics> {
    if graphs.len() != oracle.len() || graphs.len() != estimates.len() || graphs.len() != names.len() {
        return Err(CliError::BadInput(format!(
            "misaligned lists: {} graphs, {} labels, {} estimates",
            graphs.len(),
            oracle.len(),
            estimates.len()
        )));
    }
    let mut kl_sum = 0.0;
    let mut kl_n = 0usize;
    let mut sq_sum = 0.0;
    let mut sq_n = 0usize;
    let mut uai_sum = 0.0;
    let mut uai_n = 0usize;
    let mut per_instance = Vec::with_capacity(graphs.len());
    for (((name, g), truth), est) in names.iter().zip(graphs).zip(oracle).zip(estimates) {
        let mut row = InstanceMetrics {
            name: name.clone(),
            kl: None,
            rmse: None,
            uai_score: None,
        };
        if let Some(m) = &est.marginals {
            check_marginals(name, &truth.marginals, m)?;
            let kls: Vec<f64> = truth.marginals.iter().zip(m).map(|(p, q)| kl_divergence(p, q)).collect();
            let sq: Vec<f64> = truth
                .marginals
                .iter()
                .zip(m)
                .flat_map(|(p, q)| p.iter().zip(q).map(|(a, b)| (a - b) * (a - b)))
                .collect();
            kl_sum += kls.iter().sum::<f64>();
            kl_n += kls.len();
            sq_sum += sq.iter().sum::<f64>();
            sq_n += sq.len();
            row.kl = Some(kls.iter().sum::<f64>() / kls.len().max(1) as f64);
            row.rmse = Some((sq.iter().sum::<f64>() / sq.len().max(1) as f64).sqrt());
        }
        if let Some(x) = est.assignment() {
            let s = g.log_score(&x).map_err(|e| CliError::BadInput(format!("{name}: {e}")))?;
            let r = uai_ratio(truth.map_log_score, s);
            uai_sum += r;
            uai_n += 1;
            row.uai_score = Some(r);
        }
        per_instance.push(row);
    }
    Ok(Metrics {
        kl: (kl_n > 0).then(|| kl_sum / kl_n as f64),
        rmse: (sq_n > 0).then(|| (sq_sum / sq_n as f64).sqrt()),
        uai_score: (uai_n > 0).then(|| uai_sum / uai_n as f64),
        per_instance,
    })
}

/// JSON number, or the strings `"inf"`, `"-inf"`, `"nan"`.
pub fn number(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else if x.is_nan() {
        json!("nan")
    } else if x > 0.0 {
        json!("inf")
    } else {
        json!("-inf")
    }
}

fn opt(x: Option<f64>) -> Value {
    x.map(number).unwrap_or(Value::Null)
}

impl Metrics {
    /// The metric report document. Keys are emitted in a fixed order and no
    /// timestamp is included, so identical runs give identical bytes.
    pub fn report(&self, algo: &str, dataset: &str, seed: u64, config: Value) -> Value {
        let per: Vec<Value> = self
            .per_instance
            .iter()
            .map(|r| json!({"name": r.name, "kl": opt(r.kl), "rmse": opt(r.rmse), "uai_score": opt(r.uai_score)}))
            .collect();
        json!({
            "algo": algo,
            "dataset": dataset,
            "kl": opt(self.kl),
            "rmse": opt(self.rmse),
            "uai_score": opt(self.uai_score),
            "per_instance": per,
            "seed": seed,
            "config": config,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use fg_core::exact::{enumerate, DEFAULT_STATE_CAP};
    use fg_core::graph::ZeroClamp;

    #[test]
    fn kl_hand_value() {
        let k = kl_divergence(&[0.5, 0.5], &[0.25, 0.75]);
        let expect = 0.5 * 2f64.ln() + 0.5 * (2.0f64 / 3.0).ln();
        assert!((k - expect).abs() < 1e-15);
        assert!((k - 0.14384).abs() < 1e-5);
        assert_eq!(kl_divergence(&[1.0, 0.0], &[1.0, 0.0]), 0.0);
    }

    #[test]
    fn truth_scores_zero() {
        let g = FactorGraph::from_linear(vec![2, 3], vec![(vec![0, 1], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0])], ZeroClamp::default())
            .unwrap();
        let o = enumerate(&g, DEFAULT_STATE_CAP).unwrap();
        let est = Estimate {
            marginals: Some(o.marginals.clone()),
            map: Some(o.map_assignment.clone()),
        };
        let m = compute_metrics(&["a".into()], &[g], &[o], &[est]).unwrap();
        assert_eq!((m.kl, m.rmse, m.uai_score), (Some(0.0), Some(0.0), Some(0.0)));
    }

    #[test]
    fn zero_probability_map_is_infinite() {
        let g = FactorGraph::from_linear(vec![2], vec![(vec![0], vec![0.0, 2.0])], ZeroClamp { floor: Some(0.0) }).unwrap();
        let o = enumerate(&g, DEFAULT_STATE_CAP).unwrap();
        let est = Estimate { marginals: None, map: Some(vec![0]) };
        let m = compute_metrics(&["a".into()], &[g], &[o], &[est]).unwrap();
        assert_eq!(m.uai_score, Some(f64::INFINITY));
        assert_eq!(m.kl, None);
        let r = m.report("x", "d", 0, json!({}));
        assert_eq!(r["uai_score"], json!("inf"));
    }

    #[test]
    fn misaligned_lists_rejected() {
        let g = FactorGraph::from_linear(vec![2], vec![(vec![0], vec![1.0, 2.0])], ZeroClamp::default()).unwrap();
        let o = enumerate(&g, DEFAULT_STATE_CAP).unwrap();
        assert!(compute_metrics(&["a".into()], std::slice::from_ref(&g), std::slice::from_ref(&o), &[]).is_err());
        let bad = Estimate { marginals: Some(vec![vec![0.5, 0.5], vec![1.0]]), map: None };
        assert!(compute_metrics(&["a".into()], &[g], &[o], &[bad]).is_err());
    }

    #[test]
    fn ratio_cases() {
        assert_eq!(uai_ratio(-2.0, -3.0), 0.5);
        assert_eq!(uai_ratio(0.0, 0.0), 0.0);
        assert_eq!(uai_ratio(0.0, -1.0), f64::INFINITY);
    }
}
