//! Discrete factor graphs with log-space potentials.
//!
//! A factor's tensor has one axis per scope entry, in scope order, and axis
//! `k` has length `cardinalities[scope[k]]`. State labels are the indices
//! `0..card`.

use serde::{Deserialize, Serialize};

use crate::error::{FgError, Result};
use crate::tensor::DenseTensor;

/// Linear-space floor substituted for zero (or negative-zero) entries when
/// potentials are converted to log space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZeroClamp {
    /// `None` rejects zero entries; `Some(0.0)` maps them to `-inf`.
    pub floor: Option<f64>,
}

impl Default for ZeroClamp {
    fn default() -> Self {
        Self { floor: Some(1e-30) }
    }
}

impl ZeroClamp {
    pub fn reject() -> Self {
        Self { floor: None }
    }

    /// `ln(value)` with zeros clamped.
    pub fn log(&self, value: f64) -> Result<f64> {
        if !value.is_finite() || value < 0.0 {
            return Err(FgError::InvalidGraph(format!(
                "potential entry {value} is not a finite non-negative number"
            )));
        }
        if value > 0.0 {
            return Ok(value.ln());
        }
        match self.floor {
            Some(f) if f > 0.0 => Ok(f.ln()),
            Some(_) => Ok(f64::NEG_INFINITY),
            None => Err(FgError::InvalidGraph(
                "zero potential entry with clamping disabled".into(),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Factor {
    pub scope: Vec<usize>,
    pub log_potential: DenseTensor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorGraph {
    cardinalities: Vec<usize>,
    factors: Vec<Factor>,
}

/// Variable-factor incidence, `position` being the variable's axis in the
/// factor's tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Edge {
    pub factor: usize,
    pub position: usize,
    pub variable: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EdgeKind {
    VarToFac,
    FacToVar,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DirectedEdge {
    pub kind: EdgeKind,
    pub factor: usize,
    pub variable: usize,
}

impl FactorGraph {
    pub fn new(cardinalities: Vec<usize>, factors: Vec<Factor>) -> Result<Self> {
        let g = Self {
            cardinalities,
            factors,
        };
        g.validate()?;
        Ok(g)
    }

    /// Builds a graph from linear-space tables (row-major over each scope).
    pub fn from_linear(
        cardinalities: Vec<usize>,
        tables: Vec<(Vec<usize>, Vec<f64>)>,
        clamp: ZeroClamp,
    ) -> Result<Self> {
        let mut factors = Vec::with_capacity(tables.len());
        for (scope, values) in tables {
            let shape = scope
                .iter()
                .map(|&v| {
                    cardinalities.get(v).copied().ok_or_else(|| {
                        FgError::InvalidGraph(format!("scope variable {v} out of range"))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let logs = values
                .iter()
                .map(|&x| clamp.log(x))
                .collect::<Result<Vec<_>>>()?;
            factors.push(Factor {
                scope,
                log_potential: DenseTensor::new(shape, logs)?,
            });
        }
        Self::new(cardinalities, factors)
    }

    fn validate(&self) -> Result<()> {
        if let Some(i) = self.cardinalities.iter().position(|&c| c == 0) {
            return Err(FgError::InvalidGraph(format!(
                "variable {i} has zero states"
            )));
        }
        for (a, f) in self.factors.iter().enumerate() {
            if f.scope.is_empty() {
                return Err(FgError::InvalidGraph(format!("factor {a} has empty scope")));
            }
            let mut seen = std::collections::HashSet::new();
            for &v in &f.scope {
                if v >= self.cardinalities.len() {
                    return Err(FgError::InvalidGraph(format!(
                        "factor {a} references variable {v} of {}",
                        self.cardinalities.len()
                    )));
                }
                if !seen.insert(v) {
                    return Err(FgError::InvalidGraph(format!(
                        "factor {a} repeats variable {v}"
                    )));
                }
            }
            let expected: Vec<usize> = f.scope.iter().map(|&v| self.cardinalities[v]).collect();
            if f.log_potential.shape() != expected.as_slice() {
                return Err(FgError::InvalidGraph(format!(
                    "factor {a} tensor shape {:?} does not match scope cardinalities {expected:?}",
                    f.log_potential.shape()
                )));
            }
            if f.log_potential.data().iter().any(|x| x.is_nan() || *x == f64::INFINITY) {
                return Err(FgError::InvalidGraph(format!(
                    "factor {a} has NaN or +inf log potential"
                )));
            }
        }
        Ok(())
    }

    pub fn num_vars(&self) -> usize {
        self.cardinalities.len()
    }

    pub fn num_factors(&self) -> usize {
        self.factors.len()
    }

    pub fn cardinalities(&self) -> &[usize] {
        &self.cardinalities
    }

    pub fn cardinality(&self, var: usize) -> usize {
        self.cardinalities[var]
    }

    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }

    pub fn factor(&self, a: usize) -> &Factor {
        &self.factors[a]
    }

    /// Every variable-factor incidence, factor-major then scope order.
    pub fn edges(&self) -> Vec<Edge> {
        self.factors
            .iter()
            .enumerate()
            .flat_map(|(a, f)| {
                f.scope.iter().enumerate().map(move |(k, &v)| Edge {
                    factor: a,
                    position: k,
                    variable: v,
                })
            })
            .collect()
    }

    /// For each variable, indices into [`edges`](Self::edges) touching it.
    pub fn variable_edges(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.num_vars()];
        for (e, edge) in self.edges().iter().enumerate() {
            out[edge.variable].push(e);
        }
        out
    }

    /// `Σ_a Ψ_a(x_a)`.
    pub fn log_score(&self, assignment: &[usize]) -> Result<f64> {
        self.check_assignment(assignment)?;
        Ok(self.log_score_unchecked(assignment))
    }

    pub(crate) fn log_score_unchecked(&self, assignment: &[usize]) -> f64 {
        self.factors
            .iter()
            .map(|f| {
                let strides = f.log_potential.strides();
                let off: usize = f
                    .scope
                    .iter()
                    .zip(&strides)
                    .map(|(&v, s)| assignment[v] * s)
                    .sum();
                f.log_potential.data()[off]
            })
            .sum()
    }

    pub fn check_assignment(&self, assignment: &[usize]) -> Result<()> {
        if assignment.len() != self.num_vars() {
            return Err(FgError::BadAssignment(format!(
                "expected {} entries, got {}",
                self.num_vars(),
                assignment.len()
            )));
        }
        for (i, (&x, &c)) in assignment.iter().zip(&self.cardinalities).enumerate() {
            if x >= c {
                return Err(FgError::BadAssignment(format!(
                    "variable {i} has state {x} but only {c} states"
                )));
            }
        }
        Ok(())
    }

    /// Connected components of the bipartite graph, as lists of variables.
    /// Isolated variables form their own components.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let n = self.num_vars();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for f in &self.factors {
            for w in f.scope.windows(2) {
                let (ra, rb) = (find(&mut parent, w[0]), find(&mut parent, w[1]));
                if ra != rb {
                    parent[ra.max(rb)] = ra.min(rb);
                }
            }
        }
        let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
        for v in 0..n {
            let r = find(&mut parent, v);
            groups.entry(r).or_default().push(v);
        }
        groups.into_values().collect()
    }

    pub fn is_connected(&self) -> bool {
        self.components().len() <= 1
    }

    /// True when the variable-factor incidence graph has no cycles.
    pub fn is_forest(&self) -> bool {
        let nodes = self.num_vars() + self.num_factors();
        let edges = self.edges().len();
        let comps = self.components().len();
        // Forest iff |E| = |V| - #components over the bipartite graph; factors
        // always join a component of one of their variables.
        edges + comps == nodes
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unary(values: [f64; 2]) -> FactorGraph {
        FactorGraph::from_linear(vec![2], vec![(vec![0], values.to_vec())], ZeroClamp::default())
            .unwrap()
    }

    #[test]
    fn log_space_conversion() {
        let g = unary([1.0, 3.0]);
        assert_eq!(g.factor(0).log_potential.data(), &[0.0, 3f64.ln()]);
        assert!((g.log_score(&[1]).unwrap() - 3f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn zero_clamp_modes() {
        assert_eq!(ZeroClamp::default().log(0.0).unwrap(), 1e-30f64.ln());
        assert_eq!(
            ZeroClamp { floor: Some(0.0) }.log(0.0).unwrap(),
            f64::NEG_INFINITY
        );
        assert!(ZeroClamp::reject().log(0.0).is_err());
        assert!(ZeroClamp::default().log(-1.0).is_err());
    }

    #[test]
    fn rejects_bad_scopes() {
        let t = DenseTensor::zeros(vec![2, 2]).unwrap();
        let dup = Factor {
            scope: vec![0, 0],
            log_potential: t.clone(),
        };
        assert!(FactorGraph::new(vec![2], vec![dup]).is_err());
        let oob = Factor {
            scope: vec![0, 3],
            log_potential: t.clone(),
        };
        assert!(FactorGraph::new(vec![2, 2], vec![oob]).is_err());
        let wrong_shape = Factor {
            scope: vec![0, 1],
            log_potential: t,
        };
        assert!(FactorGraph::new(vec![2, 3], vec![wrong_shape]).is_err());
    }

    #[test]
    fn assignment_range_checked() {
        let g = unary([1.0, 3.0]);
        assert!(g.log_score(&[2]).is_err());
        assert!(g.log_score(&[0, 0]).is_err());
    }

    #[test]
    fn components_and_forest() {
        let g = FactorGraph::from_linear(
            vec![2, 2, 2],
            vec![(vec![0, 1], vec![1.0; 4]), (vec![2], vec![1.0, 2.0])],
            ZeroClamp::default(),
        )
        .unwrap();
        assert_eq!(g.components(), vec![vec![0, 1], vec![2]]);
        assert!(!g.is_connected());
        assert!(g.is_forest());

        let cyc = FactorGraph::from_linear(
            vec![2, 2, 2],
            vec![
                (vec![0, 1], vec![1.0; 4]),
                (vec![1, 2], vec![1.0; 4]),
                (vec![2, 0], vec![1.0; 4]),
            ],
            ZeroClamp::default(),
        )
        .unwrap();
        assert!(!cyc.is_forest());
    }
}
