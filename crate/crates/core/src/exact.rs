//! Ground truth by exhaustive enumeration of the joint state space.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{FgError, Result};
use crate::graph::FactorGraph;

pub const DEFAULT_STATE_CAP: u64 = 1 << 24;

const CHUNK: u64 = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactResult {
    pub log_z: f64,
    pub marginals: Vec<Vec<f64>>,
    pub map_assignment: Vec<usize>,
    pub map_log_score: f64,
}

/// Number of joint assignments, as a float so huge graphs do not overflow.
pub fn state_space_size(g: &FactorGraph) -> f64 {
    g.cardinalities().iter().map(|&c| c as f64).product()
}

struct Partial {
    max: f64,
    sum: f64,
    marg: Vec<Vec<f64>>,
    best_score: f64,
    best_index: u64,
}

fn decode(mut t: u64, cards: &[usize], out: &mut [usize]) {
    for k in (0..cards.len()).rev() {
        let c = cards[k] as u64;
        out[k] = (t % c) as usize;
        t /= c;
    }
}

fn chunk(g: &FactorGraph, start: u64, end: u64) -> Partial {
    let cards = g.cardinalities();
    let mut x = vec![0; cards.len()];
    let mut scores = Vec::with_capacity((end - start) as usize);
    let mut best_score = f64::NEG_INFINITY;
    let mut best_index = start;
    for t in start..end {
        decode(t, cards, &mut x);
        let s = g.log_score_unchecked(&x);
        if s > best_score {
            best_score = s;
            best_index = t;
        }
        scores.push(s);
    }
    let max = best_score;
    let mut sum = 0.0;
    let mut marg: Vec<Vec<f64>> = cards.iter().map(|&c| vec![0.0; c]).collect();
    if max.is_finite() {
        for (t, &s) in (start..end).zip(&scores) {
            let w = (s - max).exp();
            if w == 0.0 {
                continue;
            }
            sum += w;
            decode(t, cards, &mut x);
            for (v, &xv) in x.iter().enumerate() {
                marg[v][xv] += w;
            }
        }
    }
    Partial {
        max,
        sum,
        marg,
        best_score,
        best_index,
    }
}

fn merge(a: Partial, b: Partial) -> Partial {
    let max = a.max.max(b.max);
    let scale = |m: f64| if m.is_finite() { (m - max).exp() } else { 0.0 };
    let (sa, sb) = (scale(a.max), scale(b.max));
    let marg = a
        .marg
        .iter()
        .zip(&b.marg)
        .map(|(ra, rb)| ra.iter().zip(rb).map(|(x, y)| x * sa + y * sb).collect())
        .collect();
    // chunks arrive in ascending order, so `a` wins ties
    let (best_score, best_index) = if b.best_score > a.best_score {
        (b.best_score, b.best_index)
    } else {
        (a.best_score, a.best_index)
    };
    Partial {
        max,
        sum: a.sum * sa + b.sum * sb,
        marg,
        best_score,
        best_index,
    }
}

/// Partition function, marginals and MAP of `g` by brute force.
///
/// Assignments are enumerated in lexicographic order (variable 0 most
/// significant); the MAP tie-break is the lexicographically smallest
/// maximiser. The state range is split into fixed-size chunks reduced in
/// index order, so results do not depend on the worker count.
pub fn enumerate(g: &FactorGraph, cap: u64) -> Result<ExactResult> {
    let size = state_space_size(g);
    if size > cap as f64 {
        return Err(FgError::StateSpaceTooLarge { size, cap });
    }
    let total = size as u64;
    let n_chunks = total.div_ceil(CHUNK);
    let partials: Vec<Partial> = (0..n_chunks)
        .into_par_iter()
        .map(|c| chunk(g, c * CHUNK, ((c + 1) * CHUNK).min(total)))
        .collect();
    let p = partials
        .into_iter()
        .reduce(merge)
        .expect("state space has at least one assignment");
    let log_z = if p.max.is_finite() {
        p.max + p.sum.ln()
    } else {
        f64::NEG_INFINITY
    };
    let marginals = p
        .marg
        .into_iter()
        .map(|row| {
            let s: f64 = row.iter().sum();
            if s > 0.0 {
                row.iter().map(|x| x / s).collect()
            } else {
                vec![1.0 / row.len() as f64; row.len()]
            }
        })
        .collect();
    let mut map_assignment = vec![0; g.num_vars()];
    decode(p.best_index, g.cardinalities(), &mut map_assignment);
    Ok(ExactResult {
        log_z,
        marginals,
        map_assignment,
        map_log_score: p.best_score,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::ZeroClamp;

    #[test]
    fn single_unary() {
        let g = FactorGraph::from_linear(vec![2], vec![(vec![0], vec![1.0, 3.0])], ZeroClamp::default())
            .unwrap();
        let r = enumerate(&g, DEFAULT_STATE_CAP).unwrap();
        assert!((r.log_z - 4f64.ln()).abs() < 1e-15);
        assert!((r.marginals[0][0] - 0.25).abs() < 1e-15);
        assert!((r.marginals[0][1] - 0.75).abs() < 1e-15);
        assert_eq!(r.map_assignment, vec![1]);
        assert!((r.map_log_score - 3f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn symmetric_pair() {
        let g = FactorGraph::from_linear(
            vec![2, 2],
            vec![(vec![0, 1], vec![2.0, 1.0, 1.0, 2.0])],
            ZeroClamp::default(),
        )
        .unwrap();
        let r = enumerate(&g, DEFAULT_STATE_CAP).unwrap();
        assert!((r.log_z - 6f64.ln()).abs() < 1e-14);
        for m in &r.marginals {
            assert!((m[0] - 0.5).abs() < 1e-15);
        }
        // (0,0) and (1,1) tie; lexicographically smallest wins
        assert_eq!(r.map_assignment, vec![0, 0]);
    }

    #[test]
    fn cap_enforced() {
        let g = FactorGraph::from_linear(vec![2; 5], vec![], ZeroClamp::default()).unwrap();
        assert!(matches!(
            enumerate(&g, 16),
            Err(FgError::StateSpaceTooLarge { cap: 16, .. })
        ));
        assert!(enumerate(&g, 32).is_ok());
    }

    #[test]
    fn spans_many_chunks() {
        // 2^14 states = four chunks; independent unaries factorise exactly
        let n = 14;
        let tables = (0..n)
            .map(|i| (vec![i], vec![1.0, 1.0 + i as f64]))
            .collect();
        let g = FactorGraph::from_linear(vec![2; n], tables, ZeroClamp::default()).unwrap();
        let r = enumerate(&g, DEFAULT_STATE_CAP).unwrap();
        let expect_log_z: f64 = (0..n).map(|i| (2.0 + i as f64).ln()).sum();
        assert!((r.log_z - expect_log_z).abs() < 1e-12);
        for (i, m) in r.marginals.iter().enumerate() {
            assert!((m[1] - (1.0 + i as f64) / (2.0 + i as f64)).abs() < 1e-13);
        }
        let mut expect_map = vec![1; n];
        expect_map[0] = 0; // variable 0 ties, smallest state wins
        assert_eq!(r.map_assignment, expect_map);
    }
}
