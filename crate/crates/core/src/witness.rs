//! Factor-graph isomorphism witnesses.
//!
//! A witness relabels factors and variables (global symmetry), reorders each
//! factor's axes (local variable symmetry) and reorders each variable's
//! states (variable assignment symmetry). Every component maps *old* indices
//! to *new* ones, and per-factor / per-variable components are indexed by the
//! old factor / variable.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{FgError, Result};
use crate::graph::{Factor, FactorGraph};
use crate::tensor::is_permutation;

/// Potentials compared by [`verify_witness`] must agree to this tolerance.
pub const WITNESS_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Symmetry {
    Global,
    LocalVariable,
    VariableAssignment,
}

impl Symmetry {
    pub const ALL: [Symmetry; 3] = [
        Symmetry::Global,
        Symmetry::LocalVariable,
        Symmetry::VariableAssignment,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Symmetry::Global => "global",
            Symmetry::LocalVariable => "local_variable",
            Symmetry::VariableAssignment => "variable_assignment",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PermutationWitness {
    pub factor_perm: Vec<usize>,
    pub var_perm: Vec<usize>,
    pub local_perms: Vec<Vec<usize>>,
    pub assignment_perms: Vec<Vec<usize>>,
}

fn identity(n: usize) -> Vec<usize> {
    (0..n).collect()
}

fn invert(p: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; p.len()];
    for (i, &j) in p.iter().enumerate() {
        inv[j] = i;
    }
    inv
}

impl PermutationWitness {
    pub fn identity(g: &FactorGraph) -> Self {
        Self {
            factor_perm: identity(g.num_factors()),
            var_perm: identity(g.num_vars()),
            local_perms: g.factors().iter().map(|f| identity(f.scope.len())).collect(),
            assignment_perms: g.cardinalities().iter().map(|&c| identity(c)).collect(),
        }
    }

    /// Checks every component is a bijection of the right size for `g`.
    pub fn check(&self, g: &FactorGraph) -> Result<()> {
        let bad = |what: &str| Err(FgError::WitnessMismatch(what.to_string()));
        if self.factor_perm.len() != g.num_factors() || !is_permutation(&self.factor_perm) {
            return bad("factor_perm is not a bijection on the factors");
        }
        if self.var_perm.len() != g.num_vars() || !is_permutation(&self.var_perm) {
            return bad("var_perm is not a bijection on the variables");
        }
        if self.local_perms.len() != g.num_factors() {
            return bad("local_perms length differs from factor count");
        }
        for (f, p) in g.factors().iter().zip(&self.local_perms) {
            if p.len() != f.scope.len() || !is_permutation(p) {
                return bad("local permutation does not fit its factor scope");
            }
        }
        if self.assignment_perms.len() != g.num_vars() {
            return bad("assignment_perms length differs from variable count");
        }
        for (&c, p) in g.cardinalities().iter().zip(&self.assignment_perms) {
            if p.len() != c || !is_permutation(p) {
                return bad("assignment permutation does not fit its variable");
            }
        }
        Ok(())
    }

    /// The witness undoing `self`; sized for the image graph.
    pub fn inverse(&self) -> Self {
        let m = self.factor_perm.len();
        let n = self.var_perm.len();
        let mut local_perms = vec![Vec::new(); m];
        for (a, &b) in self.factor_perm.iter().enumerate() {
            local_perms[b] = invert(&self.local_perms[a]);
        }
        let mut assignment_perms = vec![Vec::new(); n];
        for (i, &j) in self.var_perm.iter().enumerate() {
            assignment_perms[j] = invert(&self.assignment_perms[i]);
        }
        Self {
            factor_perm: invert(&self.factor_perm),
            var_perm: invert(&self.var_perm),
            local_perms,
            assignment_perms,
        }
    }

    /// Applying the result equals applying `self` and then `next`.
    pub fn then(&self, next: &PermutationWitness) -> Self {
        Self {
            factor_perm: self.factor_perm.iter().map(|&b| next.factor_perm[b]).collect(),
            var_perm: self.var_perm.iter().map(|&j| next.var_perm[j]).collect(),
            local_perms: self
                .local_perms
                .iter()
                .enumerate()
                .map(|(a, p)| {
                    let q = &next.local_perms[self.factor_perm[a]];
                    p.iter().map(|&l| q[l]).collect()
                })
                .collect(),
            assignment_perms: self
                .assignment_perms
                .iter()
                .enumerate()
                .map(|(i, p)| {
                    let q = &next.assignment_perms[self.var_perm[i]];
                    p.iter().map(|&s| q[s]).collect()
                })
                .collect(),
        }
    }

    /// Moves per-variable vectors (e.g. marginals) to their image positions.
    pub fn permute_marginals(&self, marginals: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let mut out = vec![Vec::new(); marginals.len()];
        for (i, m) in marginals.iter().enumerate() {
            let p = &self.assignment_perms[i];
            let mut v = vec![0.0; m.len()];
            for (s, &x) in m.iter().enumerate() {
                v[p[s]] = x;
            }
            out[self.var_perm[i]] = v;
        }
        out
    }

    pub fn permute_assignment(&self, x: &[usize]) -> Vec<usize> {
        let mut out = vec![0; x.len()];
        for (i, &s) in x.iter().enumerate() {
            out[self.var_perm[i]] = self.assignment_perms[i][s];
        }
        out
    }

    /// Witness exercising one symmetry only; the others are identities.
    pub fn random<R: Rng + ?Sized>(g: &FactorGraph, symmetry: Symmetry, rng: &mut R) -> Self {
        let mut w = Self::identity(g);
        match symmetry {
            Symmetry::Global => {
                w.factor_perm.shuffle(rng);
                w.var_perm.shuffle(rng);
            }
            Symmetry::LocalVariable => {
                for p in &mut w.local_perms {
                    p.shuffle(rng);
                }
            }
            Symmetry::VariableAssignment => {
                for p in &mut w.assignment_perms {
                    p.shuffle(rng);
                }
            }
        }
        w
    }

    /// Witness permuting all components at once.
    pub fn random_full<R: Rng + ?Sized>(g: &FactorGraph, rng: &mut R) -> Self {
        let mut w = Self::identity(g);
        w.factor_perm.shuffle(rng);
        w.var_perm.shuffle(rng);
        for p in &mut w.local_perms {
            p.shuffle(rng);
        }
        for p in &mut w.assignment_perms {
            p.shuffle(rng);
        }
        w
    }
}

/// Builds the isomorphic graph described by `w`.
pub fn apply_witness(g: &FactorGraph, w: &PermutationWitness) -> Result<FactorGraph> {
    w.check(g)?;
    let mut cards = vec![0; g.num_vars()];
    for (i, &c) in g.cardinalities().iter().enumerate() {
        cards[w.var_perm[i]] = c;
    }
    let mut slots: Vec<Option<Factor>> = vec![None; g.num_factors()];
    for (a, f) in g.factors().iter().enumerate() {
        let local = &w.local_perms[a];
        // new axis l holds old axis order[l]
        let order = invert(local);
        let mut tensor = f.log_potential.permute_axes(&order)?;
        let mut scope = vec![0; f.scope.len()];
        for (l, &k) in order.iter().enumerate() {
            let old_var = f.scope[k];
            scope[l] = w.var_perm[old_var];
            tensor = tensor.permute_axis_entries(l, &w.assignment_perms[old_var])?;
        }
        slots[w.factor_perm[a]] = Some(Factor {
            scope,
            log_potential: tensor,
        });
    }
    FactorGraph::new(cards, slots.into_iter().map(|f| f.expect("bijection")).collect())
}

/// True iff `apply_witness(g, w)` equals `g2` (scopes exactly, potentials to
/// [`WITNESS_TOLERANCE`]).
pub fn verify_witness(g: &FactorGraph, g2: &FactorGraph, w: &PermutationWitness) -> bool {
    let Ok(image) = apply_witness(g, w) else {
        return false;
    };
    graphs_match(&image, g2, WITNESS_TOLERANCE)
}

/// Structural equality with potentials compared entrywise to `tol`.
pub fn graphs_match(a: &FactorGraph, b: &FactorGraph, tol: f64) -> bool {
    if a.cardinalities() != b.cardinalities() || a.num_factors() != b.num_factors() {
        return false;
    }
    a.factors().iter().zip(b.factors()).all(|(fa, fb)| {
        fa.scope == fb.scope
            && fa.log_potential.shape() == fb.log_potential.shape()
            && fa
                .log_potential
                .data()
                .iter()
                .zip(fb.log_potential.data())
                .all(|(&x, &y)| x == y || (x - y).abs() <= tol)
    })
}
